//! Regenerates the shipped replay fixtures and golden result for the
//! self-check case from hand-written completions.
//!
//! ```text
//! cargo run -p medchat-gateway --example seed_fixtures
//! ```
//!
//! Every request the pipeline and the two follow-up chats make is answered
//! by a scripted responder and written through the normal recording
//! backend, so the fixtures have exactly the shape a live recording has.

use std::sync::Arc;
use std::time::Duration;

use medchat_core::llm::{ChatClient, MessageRole, RecordingBackend, ScriptedBackend, ScriptedReply};
use medchat_core::session::SessionStore;
use medchat_core::{Orchestrator, Pipeline};
use medchat_gateway::selfcheck;

const ROLES: &str = "Ophthalmologist\nOptometrist\nPharmacist\nGlaucoma Specialist";

const OPHTHALMOLOGIST: &str = "Fundus findings show an enlarged optic cup with a cup-to-disc ratio of about 0.62 and an automated screen strongly suggestive of glaucoma. With intraocular pressure of 28 mmHg in the left eye against 19 mmHg in the right, the asymmetry supports glaucomatous optic neuropathy in the left eye. Recommend a dilated stereoscopic disc examination, gonioscopy to establish the angle status, and initiation of pressure-lowering therapy pending confirmation.";

const OPTOMETRIST: &str = "Automated perimetry (24-2 SITA Standard) should be performed on both eyes to document any nerve fibre bundle defects, with OCT of the retinal nerve fibre layer and ganglion cell complex as a structural baseline. Central corneal thickness should be measured to interpret the pressure readings. Refraction and best corrected acuity should be recorded before any treatment changes.";

const PHARMACIST: &str = "If treatment is started, a once-nightly prostaglandin analogue such as latanoprost 0.005% is a reasonable first-line choice. Counsel on iris and eyelash changes and on correct drop technique, including punctal occlusion. Review current medications for corticosteroids or anticholinergic agents that may raise pressure, and screen for asthma or bradycardia before any beta-blocker is considered.";

const GLAUCOMA_SPECIALIST: &str = "The combination of cup enlargement, elevated left-eye pressure, and a positive family history places this patient at high risk of progression. A target pressure at least 25 percent below baseline is appropriate for the left eye. Repeat pressure measurement at different times of day, confirm the angle is open, and reassess field and OCT findings at 3 to 4 months to stage the disease and adjust therapy.";

const FINAL_REPORT: &str = "## Diagnostic impression\n\nFindings are consistent with primary open-angle glaucoma affecting the left eye, pending angle assessment. The optic cup is enlarged with a cup-to-disc ratio of approximately 0.62, and intraocular pressure is elevated at 28 mmHg in the left eye compared with 19 mmHg in the right. A family history of glaucoma increases the risk of progression.\n\n## Key findings\n\n- Enlarged optic cup, cup-to-disc ratio approximately 0.62\n- Intraocular pressure 28 mmHg OS and 19 mmHg OD\n- Positive family history of glaucoma\n\n## Recommendations\n\n1. Gonioscopy and a dilated optic disc examination to confirm the diagnosis.\n2. Visual field testing and OCT imaging of the nerve fibre layer as a baseline.\n3. Central corneal thickness measurement.\n4. Consider starting a prostaglandin analogue with a target pressure at least 25 percent below baseline.\n5. Follow-up review in 3 to 4 months.";

const ANSWER_CDR: &str = "A cup-to-disc ratio of 0.62 means the central cup occupies a larger share of the optic disc than is typical; most healthy eyes measure below about 0.5. Together with the raised left-eye pressure, it indicates probable glaucomatous damage to the optic nerve, which is why confirmatory testing and treatment are advised.";

const ANSWER_TESTS: &str = "Schedule gonioscopy, a dilated disc examination, automated visual field testing, OCT of the nerve fibre layer, and central corneal thickness measurement. A repeat pressure check at a different time of day is also useful before finalizing a treatment target.";

fn respond(req: &medchat_core::llm::ChatRequest) -> Option<ScriptedReply> {
    let last = req.last_user()?;
    let ms = Duration::from_millis;
    if req.messages[0].role == MessageRole::System {
        let answer = if last == selfcheck::CHAT_QUESTIONS[0] {
            ANSWER_CDR
        } else if last == selfcheck::CHAT_QUESTIONS[1] {
            ANSWER_TESTS
        } else {
            return None;
        };
        return Some(ScriptedReply::new(answer).after(ms(120)));
    }
    if last.starts_with("Given the following diagnostic context") {
        return Some(ScriptedReply::new(ROLES).after(ms(180)));
    }
    if last.contains("write a final comprehensive diagnostic report") {
        return Some(ScriptedReply::new(FINAL_REPORT).after(ms(210)));
    }
    // Latencies deliberately out of role order.
    let (text, latency) = if last.contains("As a ophthalmologist,") {
        (OPHTHALMOLOGIST, 240)
    } else if last.contains("As a optometrist,") {
        (OPTOMETRIST, 90)
    } else if last.contains("As a pharmacist,") {
        (PHARMACIST, 160)
    } else if last.contains("As a glaucoma specialist,") {
        (GLAUCOMA_SPECIALIST, 60)
    } else {
        return None;
    };
    Some(ScriptedReply::new(text).after(ms(latency)))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let dir = selfcheck::fixture_dir();
    std::fs::create_dir_all(&dir)?;
    for entry in std::fs::read_dir(&dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("fixture") {
            std::fs::remove_file(path)?;
        }
    }

    let recorder = Arc::new(RecordingBackend::new(Arc::new(ScriptedBackend::new(respond)), &dir));
    let cfg = selfcheck::service_config(&dir);
    let client = ChatClient::new(recorder, cfg.llm.model_name.clone(), cfg.llm.temperature);
    let pipeline = Pipeline::new(
        cfg.vision.build()?,
        Orchestrator::new(client.clone(), cfg.llm.max_parallel_agents),
    );
    let recorded = pipeline.run(&selfcheck::case()).await?;

    let sessions = SessionStore::default();
    let session = sessions.open_session("selfcheck", &recorded.final_report, &recorded.core_prompt);
    for q in selfcheck::CHAT_QUESTIONS {
        sessions.chat(&session.session_id, q, &client).await?;
    }

    let replayed = selfcheck::run_once(&dir).await?;
    anyhow::ensure!(
        replayed.to_canonical_json() == recorded.to_canonical_json(),
        "replay does not reproduce the recording"
    );
    let golden = selfcheck::golden_path();
    std::fs::create_dir_all(golden.parent().expect("golden has a parent"))?;
    std::fs::write(&golden, replayed.to_canonical_json())?;
    let count = std::fs::read_dir(&dir)?.count();
    println!("wrote {count} fixtures to {} and {}", dir.display(), golden.display());
    Ok(())
}
