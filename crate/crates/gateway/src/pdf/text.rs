//! WinAnsi text encoding and line breaking for the standard Helvetica faces.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Regular,
    Bold,
}

impl Face {
    pub fn resource(self) -> &'static str {
        match self {
            Face::Regular => "F1",
            Face::Bold => "F2",
        }
    }
}

// Advance widths (1/1000 em) for bytes 32..=126, from the Adobe core font metrics.
#[rustfmt::skip]
const HELVETICA: [u16; 95] = [
    278, 278, 355, 556, 556, 889, 667, 191, 333, 333, 389, 584, 278, 333, 278, 278,
    556, 556, 556, 556, 556, 556, 556, 556, 556, 556, 278, 278, 584, 584, 584, 556,
    1015, 667, 667, 722, 722, 667, 611, 778, 722, 278, 500, 667, 556, 833, 722, 778,
    667, 778, 722, 667, 611, 722, 667, 944, 667, 667, 611, 278, 278, 278, 469, 556,
    333, 556, 556, 500, 556, 556, 278, 556, 556, 222, 222, 500, 222, 833, 556, 556,
    556, 556, 333, 500, 278, 556, 500, 722, 500, 500, 500, 334, 260, 334, 584,
];

#[rustfmt::skip]
const HELVETICA_BOLD: [u16; 95] = [
    278, 333, 474, 556, 556, 889, 722, 238, 333, 333, 389, 584, 278, 333, 278, 278,
    556, 556, 556, 556, 556, 556, 556, 556, 556, 556, 333, 333, 584, 584, 584, 611,
    975, 722, 722, 722, 722, 667, 611, 778, 722, 278, 556, 722, 611, 833, 722, 778,
    667, 778, 722, 667, 611, 722, 667, 944, 667, 667, 611, 333, 278, 333, 584, 556,
    333, 556, 611, 556, 611, 556, 333, 611, 611, 278, 278, 556, 278, 889, 611, 611,
    611, 611, 389, 556, 333, 611, 556, 778, 556, 556, 500, 389, 280, 389, 584,
];

/// Width used for bytes outside the printable ASCII range.
const FALLBACK_WIDTH: u16 = 556;

fn glyph_width(face: Face, byte: u8) -> u16 {
    let table = match face {
        Face::Regular => &HELVETICA,
        Face::Bold => &HELVETICA_BOLD,
    };
    match byte {
        32..=126 => table[(byte - 32) as usize],
        _ => FALLBACK_WIDTH,
    }
}

/// Width in points of WinAnsi-encoded text.
pub fn measure(face: Face, size: f32, bytes: &[u8]) -> f32 {
    bytes.iter().map(|b| glyph_width(face, *b) as f32).sum::<f32>() * size / 1000.0
}

/// WinAnsi code for `c`, if the encoding has one.
fn winansi(c: char) -> Option<u8> {
    let code = c as u32;
    match code {
        0x20..=0x7E | 0xA0..=0xFF => Some(code as u8),
        _ => Some(match c {
            '€' => 0x80,
            '‚' => 0x82,
            'ƒ' => 0x83,
            '„' => 0x84,
            '…' => 0x85,
            '†' => 0x86,
            '‡' => 0x87,
            'ˆ' => 0x88,
            '‰' => 0x89,
            'Š' => 0x8A,
            '‹' => 0x8B,
            'Œ' => 0x8C,
            'Ž' => 0x8E,
            '‘' => 0x91,
            '’' => 0x92,
            '“' => 0x93,
            '”' => 0x94,
            '•' => 0x95,
            '–' => 0x96,
            '—' => 0x97,
            '˜' => 0x98,
            '™' => 0x99,
            'š' => 0x9A,
            '›' => 0x9B,
            'œ' => 0x9C,
            'ž' => 0x9E,
            'Ÿ' => 0x9F,
            _ => return None,
        }),
    }
}

/// Encodes text for a WinAnsi simple font. Tabs become spaces, a few common
/// symbols get ASCII spellings, anything else unencodable becomes `?`.
pub fn encode(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    for c in text.chars() {
        if let Some(b) = winansi(c) {
            out.push(b);
            continue;
        }
        let spelled: &str = match c {
            '\t' => " ",
            '≥' => ">=",
            '≤' => "<=",
            '≠' => "!=",
            '→' => "->",
            '←' => "<-",
            '−' => "-",
            '‐' | '‑' => "-",
            '\u{2009}' | '\u{202F}' | '\u{2007}' => " ",
            '\u{200B}' | '\u{FEFF}' => "",
            '\n' | '\r' => " ",
            _ => "?",
        };
        out.extend_from_slice(spelled.as_bytes());
    }
    out
}

/// Greedy word wrap of `text` into lines no wider than `max_width`. Words
/// longer than a line are split at glyph boundaries.
pub fn wrap(text: &str, face: Face, size: f32, max_width: f32) -> Vec<Vec<u8>> {
    let bytes = encode(text);
    let space = measure(face, size, b" ");
    let mut lines = Vec::new();
    let mut line: Vec<u8> = Vec::new();
    let mut width = 0.0;
    for word in bytes.split(|b| *b == b' ').filter(|w| !w.is_empty()) {
        let w = measure(face, size, word);
        if !line.is_empty() && width + space + w <= max_width {
            line.push(b' ');
            line.extend_from_slice(word);
            width += space + w;
            continue;
        }
        if !line.is_empty() {
            lines.push(std::mem::take(&mut line));
        }
        if w <= max_width {
            line.extend_from_slice(word);
            width = w;
            continue;
        }
        // Hard-break an overlong word.
        let mut chunk = Vec::new();
        let mut cw = 0.0;
        for b in word {
            let gw = measure(face, size, &[*b]);
            if !chunk.is_empty() && cw + gw > max_width {
                lines.push(std::mem::take(&mut chunk));
                cw = 0.0;
            }
            chunk.push(*b);
            cw += gw;
        }
        line = chunk;
        width = cw;
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}
