//! Per-pixel kernels behind the vision and analysis stages.
//!
//! Each kernel exists in a sequential form and, with the `parallel` feature,
//! a rayon form. The crate-level entry points dispatch on the feature; both
//! forms produce identical output and are exposed for benchmarking.

use crate::vision::{Label, MaskCounts};

/// Disc tint (green) and cup tint (red) for overlays.
pub const DISC_TINT: [u8; 3] = [0, 255, 0];
pub const CUP_TINT: [u8; 3] = [255, 0, 0];
pub const OVERLAY_OPACITY: f64 = 0.35;

#[inline]
fn blend(base: u8, tint: u8) -> u8 {
    ((1.0 - OVERLAY_OPACITY) * base as f64 + OVERLAY_OPACITY * tint as f64).round() as u8
}

#[inline]
fn tint_pixel(px: &mut [u8], label: Label) {
    let tint = match label {
        Label::Background => return,
        Label::Disc => DISC_TINT,
        Label::Cup => CUP_TINT,
    };
    for (c, t) in px.iter_mut().zip(tint) {
        *c = blend(*c, t);
    }
}

#[inline]
fn tally(acc: MaskCounts, label: &Label) -> MaskCounts {
    match label {
        Label::Cup => MaskCounts {
            cup: acc.cup + 1,
            ..acc
        },
        Label::Disc => MaskCounts {
            disc: acc.disc + 1,
            ..acc
        },
        Label::Background => acc,
    }
}

/// Columns of row `y` inside a circle of `radius` centered in a
/// `width`x`height` raster, as a half-open range.
///
/// Works in doubled coordinates so the image center is integral: a pixel is
/// inside when `(2x+1-w)^2 + (2y+1-h)^2 < (2r)^2`.
fn circle_span(width: u32, height: u32, y: u32, radius: f64) -> std::ops::Range<u32> {
    let dy = 2 * y as i64 + 1 - height as i64;
    let four_r2 = 4.0 * radius * radius;
    let limit = four_r2 - (dy * dy) as f64;
    if limit <= 0.0 {
        return 0..0;
    }
    let inside = |x: i64| {
        let dx = 2 * x + 1 - width as i64;
        ((dx * dx + dy * dy) as f64) < four_r2
    };
    let w = width as i64;
    let half = limit.sqrt();
    // Float estimate widened by one pixel, then trimmed with the exact test.
    let mut lo = ((((w - 1) as f64 - half) / 2.0).floor() as i64 - 1).max(0);
    let mut hi = ((((w - 1) as f64 + half) / 2.0).ceil() as i64 + 1).min(w - 1);
    while lo <= hi && !inside(lo) {
        lo += 1;
    }
    while hi >= lo && !inside(hi) {
        hi -= 1;
    }
    if lo > hi {
        return 0..0;
    }
    lo as u32..(hi + 1) as u32
}

fn paint_row(row: &mut [Label], width: u32, height: u32, y: u32, disc_radius: f64, cup_radius: f64) {
    for x in circle_span(width, height, y, disc_radius) {
        row[x as usize] = Label::Disc;
    }
    for x in circle_span(width, height, y, cup_radius) {
        row[x as usize] = Label::Cup;
    }
}

pub mod sequential {
    use super::*;

    pub fn count_labels(labels: &[Label]) -> MaskCounts {
        labels.iter().fold(MaskCounts::default(), tally)
    }

    pub fn tint(rgb: &mut [u8], labels: &[Label]) {
        for (px, &label) in rgb.chunks_exact_mut(3).zip(labels) {
            tint_pixel(px, label);
        }
    }

    pub fn paint_concentric(width: u32, height: u32, disc_radius: f64, cup_radius: f64) -> Vec<Label> {
        let mut labels = vec![Label::Background; width as usize * height as usize];
        for (y, row) in labels.chunks_exact_mut(width as usize).enumerate() {
            paint_row(row, width, height, y as u32, disc_radius, cup_radius);
        }
        labels
    }
}

#[cfg(feature = "parallel")]
pub mod parallel {
    use super::*;
    use rayon::prelude::*;

    const CHUNK: usize = 1 << 14;

    pub fn count_labels(labels: &[Label]) -> MaskCounts {
        labels
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().fold(MaskCounts::default(), tally))
            .reduce(MaskCounts::default, |a, b| MaskCounts {
                cup: a.cup + b.cup,
                disc: a.disc + b.disc,
            })
    }

    pub fn tint(rgb: &mut [u8], labels: &[Label]) {
        rgb.par_chunks_mut(CHUNK * 3)
            .zip(labels.par_chunks(CHUNK))
            .for_each(|(px, lab)| super::sequential::tint(px, lab));
    }

    pub fn paint_concentric(width: u32, height: u32, disc_radius: f64, cup_radius: f64) -> Vec<Label> {
        let mut labels = vec![Label::Background; width as usize * height as usize];
        labels
            .par_chunks_mut(width as usize)
            .enumerate()
            .for_each(|(y, row)| paint_row(row, width, height, y as u32, disc_radius, cup_radius));
        labels
    }
}

#[cfg(feature = "parallel")]
use parallel as active;
#[cfg(not(feature = "parallel"))]
use sequential as active;

pub fn count_labels(labels: &[Label]) -> MaskCounts {
    active::count_labels(labels)
}

pub fn tint(rgb: &mut [u8], labels: &[Label]) {
    active::tint(rgb, labels)
}

pub fn paint_concentric(width: u32, height: u32, disc_radius: f64, cup_radius: f64) -> Vec<Label> {
    active::paint_concentric(width, height, disc_radius, cup_radius)
}
