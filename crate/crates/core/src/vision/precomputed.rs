use std::path::{Path, PathBuf};

use async_trait::async_trait;

use super::{indexed_png, ClassifierOutput, SegmentationMap, VisionBackend, VisionError, VisionRequest};

/// Reads per-case sidecar files from a directory:
/// `<case>.prob.txt` holds one decimal literal, `<case>.seg.png` an indexed PNG.
#[derive(Debug, Clone)]
pub struct PrecomputedBackend {
    dir: PathBuf,
}

impl PrecomputedBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn probability_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.prob.txt"))
    }

    pub fn segmentation_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.seg.png"))
    }

    /// Writes both sidecars for `key`.
    pub fn write_sidecars(
        &self,
        key: &str,
        probability: f64,
        map: &SegmentationMap,
    ) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.dir)?;
        // `{:?}` on f64 is the shortest round-tripping literal.
        std::fs::write(self.probability_path(key), format!("{probability:?}\n"))?;
        std::fs::write(self.segmentation_path(key), indexed_png::encode(map))
    }
}

async fn read_sidecar(key: &str, path: &Path) -> Result<Vec<u8>, VisionError> {
    match tokio::fs::read(path).await {
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(VisionError::MissingSidecar {
            case: key.to_string(),
            path: path.to_path_buf(),
        }),
        Err(e) => Err(VisionError::Malformed(format!("{}: {e}", path.display()))),
    }
}

fn check_key(key: &str) -> Result<(), VisionError> {
    if key.is_empty() || key.contains(['/', '\\']) || key.starts_with('.') {
        return Err(VisionError::Malformed(format!("invalid sidecar key `{key}`")));
    }
    Ok(())
}

#[async_trait]
impl VisionBackend for PrecomputedBackend {
    async fn classify(&self, request: VisionRequest<'_>) -> Result<ClassifierOutput, VisionError> {
        check_key(request.key)?;
        let path = self.probability_path(request.key);
        let bytes = read_sidecar(request.key, &path).await?;
        let text = String::from_utf8_lossy(&bytes);
        let p: f64 = text
            .trim()
            .parse()
            .map_err(|_| VisionError::Malformed(format!("{}: not a decimal literal", path.display())))?;
        ClassifierOutput::new(p)
    }

    async fn segment(&self, request: VisionRequest<'_>) -> Result<SegmentationMap, VisionError> {
        check_key(request.key)?;
        let bytes = read_sidecar(request.key, &self.segmentation_path(request.key)).await?;
        let map = indexed_png::decode(&bytes)?;
        map.check_matches(request.image)?;
        Ok(map)
    }
}
