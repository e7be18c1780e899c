use std::borrow::Cow;
use std::io::Cursor;

use image::{ImageFormat, ImageReader, Limits};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted edge length, in pixels.
pub const MAX_EDGE: u32 = 8192;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Png,
    Jpeg,
}

impl SourceFormat {
    pub fn mime(self) -> &'static str {
        match self {
            Self::Png => "image/png",
            Self::Jpeg => "image/jpeg",
        }
    }
}

/// Decoded RGB fundus photograph. Keeps the original encoded bytes so remote
/// backends receive exactly what was uploaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundusImage {
    width: u32,
    height: u32,
    rgb: Vec<u8>,
    format: SourceFormat,
    encoded: Option<Vec<u8>>,
}

impl FundusImage {
    /// Decodes PNG or JPEG bytes. Anything else is [`ImageError::Unsupported`].
    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let format = match image::guess_format(bytes) {
            Ok(ImageFormat::Png) => SourceFormat::Png,
            Ok(ImageFormat::Jpeg) => SourceFormat::Jpeg,
            Ok(other) => return Err(ImageError::Unsupported(format!("{other:?} is not PNG or JPEG"))),
            Err(_) => return Err(ImageError::Unsupported("not a recognizable image".into())),
        };
        let mut reader = ImageReader::new(Cursor::new(bytes));
        reader.set_format(match format {
            SourceFormat::Png => ImageFormat::Png,
            SourceFormat::Jpeg => ImageFormat::Jpeg,
        });
        let mut limits = Limits::default();
        limits.max_image_width = Some(MAX_EDGE);
        limits.max_image_height = Some(MAX_EDGE);
        reader.limits(limits);
        let decoded = reader
            .decode()
            .map_err(|e| ImageError::Unsupported(e.to_string()))?
            .into_rgb8();
        let (width, height) = decoded.dimensions();
        let mut image = Self::from_rgb(width, height, decoded.into_raw())?;
        image.format = format;
        image.encoded = Some(bytes.to_vec());
        Ok(image)
    }

    pub fn from_rgb(width: u32, height: u32, rgb: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidRaster(format!("{width}x{height} has no pixels")));
        }
        if width > MAX_EDGE || height > MAX_EDGE {
            return Err(ImageError::InvalidRaster(format!("{width}x{height} exceeds {MAX_EDGE}px")));
        }
        let want = width as usize * height as usize * 3;
        if rgb.len() != want {
            return Err(ImageError::InvalidRaster(format!(
                "{} bytes for {width}x{height} RGB, expected {want}",
                rgb.len()
            )));
        }
        Ok(Self {
            width,
            height,
            rgb,
            format: SourceFormat::Png,
            encoded: None,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rgb(&self) -> &[u8] {
        &self.rgb
    }

    pub fn source_format(&self) -> SourceFormat {
        self.format
    }

    /// The bytes to ship to a remote backend: the upload itself when we have
    /// it, otherwise a fresh PNG encoding of the raster.
    pub fn encoded(&self) -> Cow<'_, [u8]> {
        match &self.encoded {
            Some(bytes) => Cow::Borrowed(bytes),
            None => Cow::Owned(encode_rgb_png(self.width, self.height, &self.rgb)),
        }
    }
}

/// Encodes an RGB8 raster as PNG.
pub fn encode_rgb_png(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, width, height);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().expect("in-memory PNG header");
    writer.write_image_data(rgb).expect("in-memory PNG body");
    writer.finish().expect("in-memory PNG finish");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_keeps_pixels_and_bytes() {
        let rgb: Vec<u8> = (0..4 * 3 * 3).map(|i| (i * 7) as u8).collect();
        let bytes = encode_rgb_png(4, 3, &rgb);
        let img = FundusImage::decode(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (4, 3));
        assert_eq!(img.rgb(), &rgb[..]);
        assert_eq!(img.source_format(), SourceFormat::Png);
        assert_eq!(&*img.encoded(), &bytes[..]);
    }

    #[test]
    fn rejects_text_and_bad_rasters() {
        assert!(matches!(
            FundusImage::decode(b"patient notes, not an image"),
            Err(ImageError::Unsupported(_))
        ));
        assert!(FundusImage::from_rgb(0, 4, vec![]).is_err());
        assert!(FundusImage::from_rgb(2, 2, vec![0; 11]).is_err());
    }
}
