//! Diagnostic grade, cup-to-disc ratio, and segmentation overlays.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels;
use crate::vision::{FundusImage, MaskCounts, SegmentationMap};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("probability {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("segmentation found no optic disc or cup")]
    NoDiscDetected,
    #[error("segmentation map is {map_width}x{map_height}, image is {image_width}x{image_height}")]
    DimensionMismatch {
        image_width: u32,
        image_height: u32,
        map_width: u32,
        map_height: u32,
    },
}

/// Four-level verbal grade of the classifier probability, ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosticGrade {
    #[serde(rename = "no glaucoma")]
    NoGlaucoma,
    #[serde(rename = "possible glaucoma")]
    PossibleGlaucoma,
    #[serde(rename = "likely glaucoma")]
    LikelyGlaucoma,
    #[serde(rename = "glaucoma detected")]
    GlaucomaDetected,
}

impl DiagnosticGrade {
    pub const ALL: [Self; 4] = [
        Self::NoGlaucoma,
        Self::PossibleGlaucoma,
        Self::LikelyGlaucoma,
        Self::GlaucomaDetected,
    ];

    /// Short label, e.g. "likely glaucoma".
    pub fn label(self) -> &'static str {
        match self {
            Self::NoGlaucoma => "no glaucoma",
            Self::PossibleGlaucoma => "possible glaucoma",
            Self::LikelyGlaucoma => "likely glaucoma",
            Self::GlaucomaDetected => "glaucoma detected",
        }
    }
}

impl std::fmt::Display for DiagnosticGrade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Maps a glaucoma probability onto a grade. Intervals are lower-inclusive:
/// `[0, 0.2)`, `[0.2, 0.5)`, `[0.5, 0.9)`, `[0.9, 1]`.
pub fn grade(probability: f64) -> Result<DiagnosticGrade, AnalysisError> {
    if !(0.0..=1.0).contains(&probability) {
        return Err(AnalysisError::OutOfRange(probability));
    }
    Ok(if probability < 0.2 {
        DiagnosticGrade::NoGlaucoma
    } else if probability < 0.5 {
        DiagnosticGrade::PossibleGlaucoma
    } else if probability < 0.9 {
        DiagnosticGrade::LikelyGlaucoma
    } else {
        DiagnosticGrade::GlaucomaDetected
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdrResult {
    pub ratio: f64,
    pub cup_pixels: u64,
    pub disc_pixels: u64,
    /// `ratio` rounded half-up to two decimals, e.g. "0.62".
    pub display: String,
}

/// Area-based cup-to-disc ratio: `sqrt(cup / (cup + disc))`, where `disc`
/// counts only the rim pixels around the cup.
pub fn compute_cdr(counts: MaskCounts) -> Result<CdrResult, AnalysisError> {
    let total = counts.cup + counts.disc;
    if total == 0 {
        return Err(AnalysisError::NoDiscDetected);
    }
    let ratio = (counts.cup as f64 / total as f64).sqrt();
    Ok(CdrResult {
        ratio,
        cup_pixels: counts.cup,
        disc_pixels: counts.disc,
        display: round_two_places(ratio),
    })
}

/// Half-up rounding to two decimals. The small bias absorbs binary
/// representation error so that decimal ties such as 0.625 round up.
fn round_two_places(value: f64) -> String {
    let hundredths = (value * 100.0 + 0.5 + 1e-9).floor() as u64;
    format!("{}.{:02}", hundredths / 100, hundredths % 100)
}

/// Fundus image with disc and cup tinted for display.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl OverlayImage {
    pub fn to_png(&self) -> Vec<u8> {
        crate::vision::encode_rgb_png(self.width, self.height, &self.rgb)
    }
}

/// Alpha-blends green over disc pixels and red over cup pixels at 0.35
/// opacity; background pixels are copied unchanged.
pub fn render_overlay(
    image: &FundusImage,
    map: &SegmentationMap,
) -> Result<OverlayImage, AnalysisError> {
    if image.width() != map.width() || image.height() != map.height() {
        return Err(AnalysisError::DimensionMismatch {
            image_width: image.width(),
            image_height: image.height(),
            map_width: map.width(),
            map_height: map.height(),
        });
    }
    let mut rgb = image.rgb().to_vec();
    kernels::tint(&mut rgb, map.labels());
    Ok(OverlayImage {
        width: image.width(),
        height: image.height(),
        rgb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::Label;
    use proptest::prelude::*;

    fn counts(cup: u64, disc: u64) -> MaskCounts {
        MaskCounts { cup, disc }
    }

    #[test]
    fn grade_branches() {
        assert_eq!(grade(0.15), Ok(DiagnosticGrade::NoGlaucoma));
        assert_eq!(grade(0.2), Ok(DiagnosticGrade::PossibleGlaucoma));
        assert_eq!(grade(0.5), Ok(DiagnosticGrade::LikelyGlaucoma));
        assert_eq!(grade(0.9), Ok(DiagnosticGrade::GlaucomaDetected));
        assert_eq!(grade(0.0), Ok(DiagnosticGrade::NoGlaucoma));
        assert_eq!(grade(1.0), Ok(DiagnosticGrade::GlaucomaDetected));
        assert_eq!(grade(0.899_999), Ok(DiagnosticGrade::LikelyGlaucoma));
    }

    #[test]
    fn grade_out_of_range() {
        assert_eq!(grade(-0.01), Err(AnalysisError::OutOfRange(-0.01)));
        assert_eq!(grade(1.01), Err(AnalysisError::OutOfRange(1.01)));
        assert!(grade(f64::NAN).is_err());
    }

    #[test]
    fn grade_labels_serialize_as_phrases() {
        assert_eq!(
            serde_json::to_string(&DiagnosticGrade::GlaucomaDetected).unwrap(),
            "\"glaucoma detected\""
        );
    }

    #[test]
    fn cdr_examples() {
        let r = compute_cdr(counts(0, 1000)).unwrap();
        assert_eq!((r.ratio, r.display.as_str()), (0.0, "0.00"));
        let r = compute_cdr(counts(2500, 7500)).unwrap();
        assert_eq!((r.ratio, r.display.as_str()), (0.5, "0.50"));
        let r = compute_cdr(counts(3844, 6156)).unwrap();
        assert!((r.ratio - 0.62).abs() < 1e-12);
        assert_eq!(r.display, "0.62");
        assert_eq!(compute_cdr(counts(0, 0)), Err(AnalysisError::NoDiscDetected));
    }

    #[test]
    fn cdr_equal_counts_is_sqrt_half() {
        for k in [1, 7, 1000, 123_456_789] {
            let r = compute_cdr(counts(k, k)).unwrap();
            assert!((r.ratio - 0.5f64.sqrt()).abs() < 1e-15);
            assert_eq!(r.display, "0.71");
        }
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_two_places(0.625), "0.63");
        assert_eq!(round_two_places(0.6249), "0.62");
        assert_eq!(round_two_places(0.995), "1.00");
        assert_eq!(round_two_places(1.0), "1.00");
        assert_eq!(round_two_places(0.005), "0.01");
    }

    proptest! {
        #[test]
        fn cdr_invariants(cup in 0u64..5_000_000, disc in 0u64..5_000_000) {
            prop_assume!(cup + disc > 0);
            let r = compute_cdr(counts(cup, disc)).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.ratio));
            prop_assert_eq!(r.ratio == 0.0, cup == 0);
            let back = r.ratio * r.ratio * (cup + disc) as f64;
            prop_assert!((back - cup as f64).abs() <= 1e-9 * (cup as f64).max(1.0));
        }

        #[test]
        fn cdr_monotone(cup in 1u64..1_000_000, disc in 1u64..1_000_000) {
            let base = compute_cdr(counts(cup, disc)).unwrap().ratio;
            prop_assert!(compute_cdr(counts(cup + 1, disc)).unwrap().ratio > base);
            prop_assert!(compute_cdr(counts(cup, disc + 1)).unwrap().ratio < base);
        }
    }

    #[test]
    fn overlay_blends_disc_and_cup() {
        let image = FundusImage::from_rgb(3, 1, vec![255; 9]).unwrap();
        let map = SegmentationMap::new(3, 1, vec![Label::Background, Label::Disc, Label::Cup]).unwrap();
        let out = render_overlay(&image, &map).unwrap();
        assert_eq!(out.rgb, vec![255, 255, 255, 166, 255, 166, 255, 166, 166]);
    }

    #[test]
    fn overlay_identity_on_background_and_size_checks() {
        let rgb: Vec<u8> = (0..5 * 4 * 3).map(|i| (i * 13 % 256) as u8).collect();
        let image = FundusImage::from_rgb(5, 4, rgb.clone()).unwrap();
        let bg = SegmentationMap::filled(5, 4, Label::Background);
        let out = render_overlay(&image, &bg).unwrap();
        assert_eq!((out.width, out.height), (5, 4));
        assert_eq!(out.rgb, rgb);
        let wrong = SegmentationMap::filled(4, 5, Label::Background);
        assert!(matches!(
            render_overlay(&image, &wrong),
            Err(AnalysisError::DimensionMismatch { .. })
        ));
    }
}
