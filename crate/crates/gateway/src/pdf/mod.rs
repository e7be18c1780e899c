//! Case report bundle rendered as a self-contained PDF: case metadata, the
//! segmentation overlay, the final report, the specialist sub-reports, and
//! the follow-up chat transcript.
//!
//! Only the PDF base-14 Helvetica faces are used, so no font is embedded.

mod layout;
pub mod markdown;
mod text;

use chrono::{DateTime, SecondsFormat, Utc};
use lopdf::content::{Content, Operation};
use lopdf::{dictionary, Document, Object, ObjectId, Stream, StringFormat};
use medchat_core::analysis::OverlayImage;
use medchat_core::session::{Author, ChatMessage};
use medchat_core::PipelineResult;
use thiserror::Error;

pub use layout::{PdfLayout, Section};
use markdown::Block;
use text::Face;

#[derive(Debug, Error)]
#[error("pdf rendering failed: {0}")]
pub struct PdfError(String);

/// Everything that goes into one downloadable report.
#[derive(Debug, Clone, Copy)]
pub struct ReportBundle<'a> {
    pub case_id: &'a str,
    pub uploaded_at: DateTime<Utc>,
    pub note: Option<&'a str>,
    pub result: &'a PipelineResult,
    pub transcript: &'a [ChatMessage],
}

impl ReportBundle<'_> {
    pub fn overlay(&self) -> &OverlayImage {
        &self.result.overlay
    }
}

const IMAGE_NAME: &str = "Im1";

pub fn render(bundle: &ReportBundle<'_>) -> Result<Vec<u8>, PdfError> {
    render_with(bundle, PdfLayout::pinned())
}

pub fn render_with(bundle: &ReportBundle<'_>, layout: &PdfLayout) -> Result<Vec<u8>, PdfError> {
    let mut w = Writer::new(layout);
    for (i, section) in layout.sections.order.iter().enumerate() {
        if i > 0 {
            if layout.sections.page_break_before.contains(section) {
                w.new_page();
            } else {
                w.gap(layout.sizes.section_gap);
            }
        }
        match section {
            Section::Title => title_section(&mut w, bundle),
            Section::Overlay => overlay_section(&mut w, bundle),
            Section::Report => {
                w.heading(&layout.text.report_heading);
                w.markdown(&bundle.result.final_report.markdown);
            }
            Section::Specialists => specialists_section(&mut w, bundle),
            Section::Transcript => transcript_section(&mut w, bundle),
        }
    }
    w.finish(bundle)
}

fn title_section(w: &mut Writer<'_>, b: &ReportBundle<'_>) {
    let l = w.layout;
    let r = b.result;
    w.paragraph(&l.text.document_title, Face::Bold, l.sizes.title, 0.0);
    w.gap(l.sizes.paragraph_gap * 2.0);
    let mut rows = vec![
        ("Case ID", b.case_id.to_string()),
        ("Uploaded", stamp(b.uploaded_at)),
        ("Report generated", stamp(r.final_report.generated_at)),
        ("Diagnostic grade", r.grade.label().to_string()),
        ("Glaucoma probability", format!("{:.2}", r.probability)),
        ("Cup-to-disc ratio", r.cdr.display.clone()),
        (
            "Segmented pixels",
            format!("cup {}, disc rim {}", r.cdr.cup_pixels, r.cdr.disc_pixels),
        ),
        ("Specialist roles", r.roles.roles().join(", ")),
    ];
    if let Some(note) = b.note {
        rows.push(("Clinician's note", note.to_string()));
    }
    for (k, v) in rows {
        w.labelled(k, &v);
    }
    w.gap(l.sizes.paragraph_gap);
    w.paragraph("Computer-aided evidence", Face::Bold, l.sizes.subheading, 0.0);
    w.paragraph(&r.core_prompt.text, Face::Regular, l.sizes.body, 0.0);
}

fn overlay_section(w: &mut Writer<'_>, b: &ReportBundle<'_>) {
    let l = w.layout;
    let img = b.overlay();
    w.heading(&l.text.overlay_heading);
    let scale = (l.overlay.max_width / img.width as f32)
        .min(l.overlay.max_height / img.height as f32)
        .min(l.content_width() / img.width as f32);
    w.image(img.width as f32 * scale, img.height as f32 * scale);
    w.gap(l.sizes.paragraph_gap);
    w.paragraph(&l.text.overlay_caption, Face::Regular, l.sizes.small, 0.0);
}

fn specialists_section(w: &mut Writer<'_>, b: &ReportBundle<'_>) {
    let l = w.layout;
    w.heading(&l.text.specialists_heading);
    for (i, sub) in b.result.sub_reports.iter().enumerate() {
        if i > 0 {
            w.gap(l.sizes.paragraph_gap);
        }
        w.paragraph(&title_case(&sub.role), Face::Bold, l.sizes.subheading, 0.0);
        w.markdown(&sub.text);
    }
}

fn transcript_section(w: &mut Writer<'_>, b: &ReportBundle<'_>) {
    let l = w.layout;
    w.heading(&l.text.transcript_heading);
    if b.transcript.is_empty() {
        w.paragraph(&l.text.empty_transcript, Face::Regular, l.sizes.body, 0.0);
        return;
    }
    let mut n = 0;
    for m in b.transcript {
        let label = match m.author {
            Author::User => {
                n += 1;
                w.gap(l.sizes.paragraph_gap);
                format!("{} {n}", l.text.question_label)
            }
            Author::Assistant => format!("{} {n}", l.text.answer_label),
            Author::System => continue,
        };
        w.paragraph(&label, Face::Bold, l.sizes.body, 0.0);
        w.markdown(&m.content);
    }
}

fn stamp(at: DateTime<Utc>) -> String {
    at.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn pdf_date(at: DateTime<Utc>) -> String {
    at.format("D:%Y%m%d%H%M%SZ").to_string()
}

fn title_case(role: &str) -> String {
    role.split(' ')
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

struct Writer<'a> {
    layout: &'a PdfLayout,
    pages: Vec<Vec<Operation>>,
    ops: Vec<Operation>,
    y: f32,
}

impl<'a> Writer<'a> {
    fn new(layout: &'a PdfLayout) -> Self {
        Self {
            layout,
            pages: Vec::new(),
            ops: Vec::new(),
            y: layout.page.height - layout.page.margin_top,
        }
    }

    fn top(&self) -> f32 {
        self.layout.page.height - self.layout.page.margin_top
    }

    fn new_page(&mut self) {
        self.pages.push(std::mem::take(&mut self.ops));
        self.y = self.top();
    }

    /// Starts a new page unless `height` still fits above the bottom margin.
    fn ensure(&mut self, height: f32) {
        if self.y - height < self.layout.page.margin_bottom && self.y < self.top() {
            self.new_page();
        }
    }

    fn gap(&mut self, g: f32) {
        if self.y < self.top() {
            self.y -= g;
        }
    }

    fn line_at(&mut self, face: Face, size: f32, x: f32, baseline: f32, bytes: Vec<u8>) {
        self.ops.extend([
            Operation::new("BT", vec![]),
            Operation::new("Tf", vec![Object::Name(face.resource().into()), size.into()]),
            Operation::new("Td", vec![x.into(), baseline.into()]),
            Operation::new("Tj", vec![Object::String(bytes, StringFormat::Literal)]),
            Operation::new("ET", vec![]),
        ]);
    }

    fn paragraph(&mut self, text: &str, face: Face, size: f32, indent: f32) {
        let leading = size * self.layout.sizes.leading;
        let x = self.layout.page.margin_left + indent;
        for line in text::wrap(text, face, size, self.layout.content_width() - indent) {
            self.ensure(leading);
            self.y -= leading;
            let y = self.y;
            self.line_at(face, size, x, y, line);
        }
    }

    fn heading(&mut self, text: &str) {
        let size = self.layout.sizes.heading;
        // Keep a heading with at least two body lines after it.
        self.ensure(size * self.layout.sizes.leading + 3.0 * self.layout.sizes.body * self.layout.sizes.leading);
        self.paragraph(text, Face::Bold, size, 0.0);
        self.gap(self.layout.sizes.paragraph_gap);
    }

    fn labelled(&mut self, label: &str, value: &str) {
        let size = self.layout.sizes.body;
        let label_bytes = text::encode(&format!("{label}: "));
        let indent = text::measure(Face::Bold, size, &label_bytes);
        let lines = text::wrap(value, Face::Regular, size, self.layout.content_width() - indent);
        let leading = size * self.layout.sizes.leading;
        let x = self.layout.page.margin_left;
        self.ensure(leading);
        self.y -= leading;
        let y = self.y;
        self.line_at(Face::Bold, size, x, y, label_bytes);
        let mut lines = lines.into_iter();
        if let Some(first) = lines.next() {
            self.line_at(Face::Regular, size, x + indent, y, first);
        }
        for line in lines {
            self.ensure(leading);
            self.y -= leading;
            let y = self.y;
            self.line_at(Face::Regular, size, x + indent, y, line);
        }
    }

    fn markdown(&mut self, md: &str) {
        let s = &self.layout.sizes;
        let (body, sub, gap) = (s.body, s.subheading, s.paragraph_gap);
        for (i, block) in markdown::blocks(md).into_iter().enumerate() {
            if i > 0 && !matches!(block, Block::Item { .. }) {
                self.gap(gap);
            }
            match block {
                Block::Heading { level, text } => {
                    let size = if level <= 2 { sub + 1.0 } else { sub };
                    self.paragraph(&text, Face::Bold, size, 0.0);
                }
                Block::Paragraph(text) => self.paragraph(&text, Face::Regular, body, 0.0),
                Block::Item { depth, marker, text } => {
                    let indent = 14.0 * depth as f32;
                    let joined = if marker.is_empty() { text } else { format!("{marker} {text}") };
                    self.paragraph(&joined, Face::Regular, body, indent);
                }
                Block::Code(lines) => {
                    for line in lines {
                        self.paragraph(&line, Face::Regular, s.small, 14.0);
                    }
                }
                Block::Rule => {
                    self.ensure(gap);
                    let (x0, x1, y) = (
                        self.layout.page.margin_left,
                        self.layout.page.width - self.layout.page.margin_right,
                        self.y - gap / 2.0,
                    );
                    self.ops.extend([
                        Operation::new("q", vec![]),
                        Operation::new("w", vec![0.5.into()]),
                        Operation::new("m", vec![x0.into(), y.into()]),
                        Operation::new("l", vec![x1.into(), y.into()]),
                        Operation::new("S", vec![]),
                        Operation::new("Q", vec![]),
                    ]);
                    self.y -= gap;
                }
            }
        }
    }

    fn image(&mut self, width: f32, height: f32) {
        self.ensure(height);
        self.y -= height;
        let x = self.layout.page.margin_left + (self.layout.content_width() - width) / 2.0;
        self.ops.extend([
            Operation::new("q", vec![]),
            Operation::new(
                "cm",
                vec![width.into(), 0.into(), 0.into(), height.into(), x.into(), self.y.into()],
            ),
            Operation::new("Do", vec![Object::Name(IMAGE_NAME.into())]),
            Operation::new("Q", vec![]),
        ]);
    }

    fn finish(mut self, bundle: &ReportBundle<'_>) -> Result<Vec<u8>, PdfError> {
        self.pages.push(std::mem::take(&mut self.ops));
        let l = self.layout;
        let total = self.pages.len();
        let footer_y = l.page.margin_bottom / 2.0;
        let small = l.sizes.small;
        for (i, page) in self.pages.iter_mut().enumerate() {
            let footer = text::encode(&l.text.footer);
            let number = text::encode(&format!("Page {} of {total}", i + 1));
            let nx = l.page.width - l.page.margin_right - text::measure(Face::Regular, small, &number);
            for (x, bytes) in [(l.page.margin_left, footer), (nx, number)] {
                page.extend([
                    Operation::new("BT", vec![]),
                    Operation::new("Tf", vec![Object::Name(Face::Regular.resource().into()), small.into()]),
                    Operation::new("Td", vec![x.into(), footer_y.into()]),
                    Operation::new("Tj", vec![Object::String(bytes, StringFormat::Literal)]),
                    Operation::new("ET", vec![]),
                ]);
            }
        }

        let mut doc = Document::with_version("1.5");
        let pages_id = doc.new_object_id();
        let font = |name: &str| {
            dictionary! {
                "Type" => "Font",
                "Subtype" => "Type1",
                "BaseFont" => Object::Name(name.as_bytes().to_vec()),
                "Encoding" => "WinAnsiEncoding",
            }
        };
        let regular = doc.add_object(font(&l.fonts.regular));
        let bold = doc.add_object(font(&l.fonts.bold));
        let overlay = bundle.overlay();
        let image = doc.add_object(Stream::new(
            dictionary! {
                "Type" => "XObject",
                "Subtype" => "Image",
                "Width" => overlay.width as i64,
                "Height" => overlay.height as i64,
                "ColorSpace" => "DeviceRGB",
                "BitsPerComponent" => 8,
            },
            overlay.rgb.clone(),
        ));
        let resources = doc.add_object(dictionary! {
            "Font" => dictionary! { Face::Regular.resource() => regular, Face::Bold.resource() => bold },
            "XObject" => dictionary! { IMAGE_NAME => image },
        });
        let mut kids: Vec<Object> = Vec::with_capacity(total);
        for ops in self.pages {
            let content = Content { operations: ops }
                .encode()
                .map_err(|e| PdfError(e.to_string()))?;
            let content_id: ObjectId = doc.add_object(Stream::new(dictionary! {}, content));
            let page = doc.add_object(dictionary! {
                "Type" => "Page",
                "Parent" => pages_id,
                "Contents" => content_id,
            });
            kids.push(page.into());
        }
        doc.objects.insert(
            pages_id,
            Object::Dictionary(dictionary! {
                "Type" => "Pages",
                "Kids" => kids,
                "Count" => total as i64,
                "Resources" => resources,
                "MediaBox" => vec![0.into(), 0.into(), l.page.width.into(), l.page.height.into()],
            }),
        );
        let catalog = doc.add_object(dictionary! { "Type" => "Catalog", "Pages" => pages_id });
        let created = pdf_date(bundle.result.final_report.generated_at);
        let info = doc.add_object(dictionary! {
            "Title" => Object::string_literal(text::encode(&format!("{} {}", l.text.document_title, bundle.case_id))),
            "Producer" => Object::string_literal("medchat"),
            "CreationDate" => Object::string_literal(created),
        });
        doc.trailer.set("Root", catalog);
        doc.trailer.set("Info", info);
        doc.compress();
        let mut out = Vec::new();
        doc.save_to(&mut out).map_err(|e| PdfError(e.to_string()))?;
        Ok(out)
    }
}
