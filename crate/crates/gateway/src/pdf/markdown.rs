//! Flattens Markdown into the handful of block kinds the PDF writer lays out.
//! Inline emphasis is dropped; the text itself is kept verbatim.

use pulldown_cmark::{Event, HeadingLevel, Parser, Tag, TagEnd};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Block {
    Heading { level: u8, text: String },
    Paragraph(String),
    /// List item (or continuation paragraph when `marker` is empty).
    Item { depth: usize, marker: String, text: String },
    Code(Vec<String>),
    Rule,
}

#[derive(Default)]
struct State {
    out: Vec<Block>,
    buf: String,
    heading: Option<u8>,
    lists: Vec<Option<u64>>,
    marker: Option<String>,
    in_item: bool,
    in_code: bool,
}

impl State {
    fn flush(&mut self) {
        let text = self.buf.split_whitespace().collect::<Vec<_>>().join(" ");
        self.buf.clear();
        if text.is_empty() {
            return;
        }
        let block = if let Some(level) = self.heading {
            Block::Heading { level, text }
        } else if self.in_item {
            Block::Item {
                depth: self.lists.len(),
                marker: self.marker.take().unwrap_or_default(),
                text,
            }
        } else {
            Block::Paragraph(text)
        };
        self.out.push(block);
    }
}

fn level_number(level: HeadingLevel) -> u8 {
    match level {
        HeadingLevel::H1 => 1,
        HeadingLevel::H2 => 2,
        HeadingLevel::H3 => 3,
        HeadingLevel::H4 => 4,
        HeadingLevel::H5 => 5,
        HeadingLevel::H6 => 6,
    }
}

pub fn blocks(markdown: &str) -> Vec<Block> {
    let mut s = State::default();
    for event in Parser::new(markdown) {
        match event {
            Event::Start(Tag::Heading { level, .. }) => {
                s.flush();
                s.heading = Some(level_number(level));
            }
            Event::End(TagEnd::Heading(_)) => {
                s.flush();
                s.heading = None;
            }
            Event::End(TagEnd::Paragraph) => s.flush(),
            Event::Start(Tag::List(start)) => {
                s.flush();
                s.lists.push(start);
            }
            Event::End(TagEnd::List(_)) => {
                s.flush();
                s.lists.pop();
                s.in_item = !s.lists.is_empty();
            }
            Event::Start(Tag::Item) => {
                s.flush();
                s.in_item = true;
                s.marker = Some(match s.lists.last_mut() {
                    Some(Some(n)) => {
                        let m = format!("{n}.");
                        *n += 1;
                        m
                    }
                    _ => "•".to_string(),
                });
            }
            Event::End(TagEnd::Item) => s.flush(),
            Event::Start(Tag::CodeBlock(_)) => {
                s.flush();
                s.in_code = true;
            }
            Event::End(TagEnd::CodeBlock) => {
                let lines = s.buf.trim_end_matches('\n').lines().map(str::to_string).collect();
                s.buf.clear();
                s.in_code = false;
                s.out.push(Block::Code(lines));
            }
            Event::Text(t) | Event::Code(t) | Event::Html(t) | Event::InlineHtml(t) => s.buf.push_str(&t),
            Event::SoftBreak | Event::HardBreak => s.buf.push(if s.in_code { '\n' } else { ' ' }),
            Event::Rule => {
                s.flush();
                s.out.push(Block::Rule);
            }
            _ => {}
        }
    }
    s.flush();
    s.out
}

/// The visible text of a Markdown document, one block per line.
pub fn plain_text(markdown: &str) -> String {
    blocks(markdown)
        .into_iter()
        .filter_map(|b| match b {
            Block::Heading { text, .. } | Block::Paragraph(text) => Some(text),
            Block::Item { marker, text, .. } if marker.is_empty() => Some(text),
            Block::Item { marker, text, .. } => Some(format!("{marker} {text}")),
            Block::Code(lines) => Some(lines.join("\n")),
            Block::Rule => None,
        })
        .collect::<Vec<_>>()
        .join("\n")
}
