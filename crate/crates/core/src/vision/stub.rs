use async_trait::async_trait;

use super::{
    ClassifierOutput, SegmentationMap, StubGeometry, VisionBackend, VisionError, VisionRequest,
};
use crate::kernels;

/// Deterministic offline backend: a fixed probability and two concentric
/// filled circles (cup inside disc) centered in the image.
#[derive(Debug, Clone)]
pub struct StubBackend {
    output: ClassifierOutput,
    geometry: StubGeometry,
}

impl StubBackend {
    pub fn new(output: ClassifierOutput, geometry: StubGeometry) -> Result<Self, VisionError> {
        if geometry.cup_radius > geometry.disc_radius {
            return Err(VisionError::Config("cup_radius exceeds disc_radius".into()));
        }
        Ok(Self { output, geometry })
    }

    pub fn paint(&self, width: u32, height: u32) -> SegmentationMap {
        let labels = kernels::paint_concentric(
            width,
            height,
            self.geometry.disc_radius,
            self.geometry.cup_radius,
        );
        SegmentationMap::new(width, height, labels).expect("kernel sizes the raster")
    }
}

#[async_trait]
impl VisionBackend for StubBackend {
    async fn classify(&self, _request: VisionRequest<'_>) -> Result<ClassifierOutput, VisionError> {
        Ok(self.output)
    }

    async fn segment(&self, request: VisionRequest<'_>) -> Result<SegmentationMap, VisionError> {
        Ok(self.paint(request.image.width(), request.image.height()))
    }
}
