//! Vision backends: glaucoma probability and optic disc/cup segmentation.
//!
//! The pipeline only talks to the [`VisionBackend`] trait. Three adapters
//! ship with the crate:
//!
//! - [`RemoteBackend`] speaks a minimal HTTP inference protocol
//!   (`POST {endpoint}/classify`, `POST {endpoint}/segment`).
//! - [`PrecomputedBackend`] reads `<case>.prob.txt` / `<case>.seg.png` sidecars.
//! - [`StubBackend`] returns a configured probability and paints concentric
//!   circles; fully deterministic and offline.

mod fundus;
pub mod indexed_png;
mod precomputed;
mod remote;
mod stub;

use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fundus::{encode_rgb_png, FundusImage, ImageError, SourceFormat};
pub use precomputed::PrecomputedBackend;
pub use remote::RemoteBackend;
pub use stub::StubBackend;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("vision backend unreachable: {0}")]
    BackendUnreachable(String),
    #[error("no precomputed sidecar for case `{case}` at {path}")]
    MissingSidecar { case: String, path: PathBuf },
    #[error("segmentation map is {got_width}x{got_height}, image is {want_width}x{want_height}")]
    DimensionMismatch {
        want_width: u32,
        want_height: u32,
        got_width: u32,
        got_height: u32,
    },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("malformed backend output: {0}")]
    Malformed(String),
    #[error("invalid vision backend configuration: {0}")]
    Config(String),
}

/// Output of the glaucoma classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierOutput {
    pub probability: f64,
}

impl ClassifierOutput {
    pub fn new(probability: f64) -> Result<Self, VisionError> {
        if (0.0..=1.0).contains(&probability) {
            Ok(Self { probability })
        } else {
            Err(VisionError::ProbabilityOutOfRange(probability))
        }
    }
}

/// Per-pixel segmentation label. Values match the palette indices of the
/// indexed-PNG interchange format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Background = 0,
    Disc = 1,
    Cup = 2,
}

impl Label {
    pub fn from_index(index: u8) -> Option<Self> {
        match index {
            0 => Some(Self::Background),
            1 => Some(Self::Disc),
            2 => Some(Self::Cup),
            _ => None,
        }
    }
}

/// Row-major label map. Cup pixels carry only [`Label::Cup`], never `Disc`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    width: u32,
    height: u32,
    labels: Vec<Label>,
}

impl SegmentationMap {
    pub fn new(width: u32, height: u32, labels: Vec<Label>) -> Result<Self, VisionError> {
        if labels.len() != width as usize * height as usize {
            return Err(VisionError::Malformed(format!(
                "{} labels for a {width}x{height} map",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Builds a map from raw palette indices; any index outside {0, 1, 2} is rejected.
    pub fn from_indices(width: u32, height: u32, indices: &[u8]) -> Result<Self, VisionError> {
        let labels = indices
            .iter()
            .map(|&i| {
                Label::from_index(i)
                    .ok_or_else(|| VisionError::Malformed(format!("label index {i} not in {{0,1,2}}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(width, height, labels)
    }

    pub fn filled(width: u32, height: u32, label: Label) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> Label {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, label: Label) {
        self.labels[y as usize * self.width as usize + x as usize] = label;
    }

    pub fn to_indices(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l as u8).collect()
    }

    pub(crate) fn check_matches(&self, image: &FundusImage) -> Result<(), VisionError> {
        if self.width != image.width() || self.height != image.height() {
            return Err(VisionError::DimensionMismatch {
                want_width: image.width(),
                want_height: image.height(),
                got_width: self.width,
                got_height: self.height,
            });
        }
        Ok(())
    }
}

/// Pixel counts of the two optic structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MaskCounts {
    /// |M_cup|: pixels labeled cup.
    pub cup: u64,
    /// |M_disc|: pixels labeled disc, i.e. the rim surrounding the cup.
    pub disc: u64,
}

/// Counts cup and disc pixels of a segmentation map.
pub fn extract_masks(map: &SegmentationMap) -> MaskCounts {
    crate::kernels::count_labels(map.labels())
}

/// Identifies which case a vision request belongs to; precomputed sidecars
/// are looked up by `key`.
#[derive(Debug, Clone, Copy)]
pub struct VisionRequest<'a> {
    pub key: &'a str,
    pub image: &'a FundusImage,
}

#[async_trait]
pub trait VisionBackend: Send + Sync {
    async fn classify(&self, request: VisionRequest<'_>) -> Result<ClassifierOutput, VisionError>;
    async fn segment(&self, request: VisionRequest<'_>) -> Result<SegmentationMap, VisionError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisionMode {
    RemoteInference,
    PrecomputedFiles,
    Stub,
}

impl std::str::FromStr for VisionMode {
    type Err = VisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "remote_inference" | "remote" => Ok(Self::RemoteInference),
            "precomputed_files" | "precomputed" => Ok(Self::PrecomputedFiles),
            "stub" => Ok(Self::Stub),
            other => Err(VisionError::Config(format!("unknown vision mode `{other}`"))),
        }
    }
}

/// Radii, in pixels, of the two concentric circles painted by the stub.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StubGeometry {
    pub disc_radius: f64,
    pub cup_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisionBackendConfig {
    pub mode: VisionMode,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub sidecar_dir: Option<PathBuf>,
    #[serde(default)]
    pub stub_probability: Option<f64>,
    #[serde(default)]
    pub stub_geometry: Option<StubGeometry>,
}

impl VisionBackendConfig {
    pub fn stub(probability: f64, disc_radius: f64, cup_radius: f64) -> Self {
        Self {
            mode: VisionMode::Stub,
            endpoint_url: None,
            sidecar_dir: None,
            stub_probability: Some(probability),
            stub_geometry: Some(StubGeometry {
                disc_radius,
                cup_radius,
            }),
        }
    }

    pub fn validate(&self) -> Result<(), VisionError> {
        match self.mode {
            VisionMode::RemoteInference => {
                let url = self.endpoint_url.as_deref().unwrap_or("").trim();
                if url.is_empty() {
                    return Err(VisionError::Config("remote_inference requires endpoint_url".into()));
                }
            }
            VisionMode::PrecomputedFiles => {
                if self.sidecar_dir.is_none() {
                    return Err(VisionError::Config("precomputed_files requires sidecar_dir".into()));
                }
            }
            VisionMode::Stub => {
                let p = self
                    .stub_probability
                    .ok_or_else(|| VisionError::Config("stub requires stub_probability".into()))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(VisionError::Config(format!("stub_probability {p} outside [0, 1]")));
                }
                let g = self
                    .stub_geometry
                    .ok_or_else(|| VisionError::Config("stub requires stub_geometry".into()))?;
                if !(g.disc_radius >= 0.0 && g.cup_radius >= 0.0) {
                    return Err(VisionError::Config("stub radii must be non-negative".into()));
                }
                if g.cup_radius > g.disc_radius {
                    return Err(VisionError::Config(format!(
                        "cup_radius {} exceeds disc_radius {}",
                        g.cup_radius, g.disc_radius
                    )));
                }
            }
        }
        Ok(())
    }

    /// Validates the config and constructs the matching adapter.
    pub fn build(&self) -> Result<Arc<dyn VisionBackend>, VisionError> {
        self.validate()?;
        Ok(match self.mode {
            VisionMode::RemoteInference => Arc::new(RemoteBackend::new(
                self.endpoint_url.as_deref().unwrap_or_default(),
            )?),
            VisionMode::PrecomputedFiles => Arc::new(PrecomputedBackend::new(
                self.sidecar_dir.clone().unwrap_or_default(),
            )),
            VisionMode::Stub => {
                let g = self.stub_geometry.expect("validated");
                Arc::new(StubBackend::new(
                    ClassifierOutput::new(self.stub_probability.expect("validated"))?,
                    g,
                )?)
            }
        })
    }
}
