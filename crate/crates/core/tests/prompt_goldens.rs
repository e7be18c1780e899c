//! Rendered prompts against golden files. Placeholder tokens are passed
//! through as literal inputs, so each golden is the exact rendering of the
//! four-role example case with a clinical note.

use medchat_core::analysis::{compute_cdr, grade, DiagnosticGrade};
use medchat_core::prompts::{build_core_prompt, build_director_prompt, build_role_prompt, count_report_blocks};
use medchat_core::vision::MaskCounts;
use medchat_core::{CorePrompt, SubReport};

fn golden(name: &str) -> String {
    let path = format!("{}/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn example_core() -> CorePrompt {
    let cdr = compute_cdr(MaskCounts { cup: 3844, disc: 6156 }).unwrap();
    assert_eq!(cdr.display, "0.62");
    build_core_prompt(grade(0.95).unwrap(), &cdr, Some("{clinical note}")).unwrap()
}

#[test]
fn core_prompt_matches_golden() {
    let core = example_core();
    assert_eq!(core.text, golden("core_prompt.txt"));
    assert_eq!(core.text.matches("Network A").count(), 1);
    assert_eq!(core.text.matches("Network B").count(), 1);
}

#[test]
fn role_prompt_matches_golden() {
    let core = CorePrompt {
        text: "{core prompt}".into(),
        grade: DiagnosticGrade::GlaucomaDetected,
        cdr_display: "0.62".into(),
        has_note: true,
    };
    let prompt = build_role_prompt(&core, "{role}").unwrap();
    assert_eq!(prompt.text, golden("role_prompt.txt"));
    assert!(prompt.text.contains("Do not mention Network A or B."));
}

#[test]
fn role_prompt_embeds_the_rendered_core_verbatim() {
    let core = example_core();
    let prompt = build_role_prompt(&core, "pharmacist").unwrap();
    let expected = golden("role_prompt.txt")
        .replace("{core prompt}", &core.text)
        .replace("{role}", "pharmacist");
    assert_eq!(prompt.text, expected);
}

#[test]
fn director_prompt_matches_golden() {
    let subs: Vec<SubReport> = (1..=4)
        .map(|i| SubReport {
            role: format!("role {i}"),
            text: format!("{{sub-report #{i}}}"),
        })
        .collect();
    let prompt = build_director_prompt(&subs, true).unwrap();
    assert_eq!(prompt.text, golden("director_prompt.txt"));
    assert_eq!(count_report_blocks(&prompt.text), 4);
    assert!(prompt
        .text
        .contains("Do not reference the sources of the information or mention any sub-reports."));
    // Role names never reach the director.
    assert!(!prompt.text.contains("role 1"));
}

#[test]
fn director_without_note_drops_only_the_note_clause() {
    let subs = vec![SubReport {
        role: "x".into(),
        text: "{sub-report #1}".into(),
    }];
    let with = build_director_prompt(&subs, true).unwrap().text;
    let without = build_director_prompt(&subs, false).unwrap().text;
    assert_eq!(without, with.replacen("CAD analysis, and a clinical note.", "CAD analysis.", 1));
}
