use std::sync::LazyLock;

use serde::Deserialize;

const PINNED: &str = include_str!("../../layout/pdf_layout.toml");

static LAYOUT: LazyLock<PdfLayout> =
    LazyLock::new(|| PdfLayout::parse(PINNED).expect("shipped pdf layout is valid"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Title,
    Overlay,
    Report,
    Specialists,
    Transcript,
}

impl Section {
    pub const ALL: [Section; 5] = [
        Section::Title,
        Section::Overlay,
        Section::Report,
        Section::Specialists,
        Section::Transcript,
    ];
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Page {
    pub width: f32,
    pub height: f32,
    pub margin_left: f32,
    pub margin_right: f32,
    pub margin_top: f32,
    pub margin_bottom: f32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fonts {
    pub regular: String,
    pub bold: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sizes {
    pub title: f32,
    pub heading: f32,
    pub subheading: f32,
    pub body: f32,
    pub small: f32,
    pub leading: f32,
    pub paragraph_gap: f32,
    pub section_gap: f32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overlay {
    pub max_width: f32,
    pub max_height: f32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sections {
    pub order: Vec<Section>,
    pub page_break_before: Vec<Section>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Text {
    pub document_title: String,
    pub overlay_heading: String,
    pub overlay_caption: String,
    pub report_heading: String,
    pub specialists_heading: String,
    pub transcript_heading: String,
    pub empty_transcript: String,
    pub question_label: String,
    pub answer_label: String,
    pub footer: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdfLayout {
    pub page: Page,
    pub fonts: Fonts,
    pub sizes: Sizes,
    pub overlay: Overlay,
    pub sections: Sections,
    pub text: Text,
}

impl PdfLayout {
    /// The layout shipped in `layout/pdf_layout.toml`.
    pub fn pinned() -> &'static PdfLayout {
        &LAYOUT
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let layout: PdfLayout = toml::from_str(text).map_err(|e| e.to_string())?;
        for s in Section::ALL {
            let n = layout.sections.order.iter().filter(|o| **o == s).count();
            if n != 1 {
                return Err(format!("section {s:?} appears {n} times in sections.order"));
            }
        }
        if layout.sections.order.len() != Section::ALL.len() {
            return Err("sections.order lists unknown sections".into());
        }
        if layout.content_width() <= 100.0 || layout.page.height - layout.page.margin_top - layout.page.margin_bottom <= 100.0 {
            return Err("page margins leave no room for content".into());
        }
        Ok(layout)
    }

    pub fn content_width(&self) -> f32 {
        self.page.width - self.page.margin_left - self.page.margin_right
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_layout_parses() {
        let l = PdfLayout::pinned();
        assert_eq!(l.sections.order, Section::ALL);
        assert_eq!(l.text.empty_transcript, "No follow-up questions.");
    }

    #[test]
    fn order_must_be_a_permutation() {
        let dup = PINNED.replace(
            r#"order = ["title", "overlay", "report", "specialists", "transcript"]"#,
            r#"order = ["title", "title", "report", "specialists", "transcript"]"#,
        );
        assert!(PdfLayout::parse(&dup).is_err());
    }
}
