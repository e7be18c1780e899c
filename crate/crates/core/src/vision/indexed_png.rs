//! Indexed-color PNG interchange for segmentation maps.
//!
//! Palette index 0 is background, 1 is optic disc, 2 is optic cup. Writers
//! emit 8-bit indexed PNGs with a three-entry palette; readers accept any
//! indexed bit depth and reject indices outside {0, 1, 2}.

use super::{SegmentationMap, VisionError};

/// Palette written alongside the indices (black, green, red).
const PALETTE: [u8; 9] = [0, 0, 0, 0, 255, 0, 255, 0, 0];

pub fn encode(map: &SegmentationMap) -> Vec<u8> {
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, map.width(), map.height());
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_palette(PALETTE.to_vec());
    let mut writer = encoder.write_header().expect("in-memory PNG header");
    writer
        .write_image_data(&map.to_indices())
        .expect("in-memory PNG body");
    writer.finish().expect("in-memory PNG finish");
    out
}

pub fn decode(bytes: &[u8]) -> Result<SegmentationMap, VisionError> {
    let malformed = |e: png::DecodingError| VisionError::Malformed(format!("segmentation PNG: {e}"));
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    // Keep raw palette indices; no palette expansion.
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(malformed)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Indexed {
        return Err(VisionError::Malformed(format!(
            "segmentation PNG must be indexed color, got {:?}",
            info.color_type
        )));
    }
    let (width, height) = (info.width, info.height);
    let depth = info.bit_depth as u8;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| {
        VisionError::Malformed("segmentation PNG too large".into())
    })?];
    let frame = reader.next_frame(&mut buf).map_err(malformed)?;
    let stride = frame.line_size;
    let per_byte = 8 / depth as usize;
    let mask = ((1u16 << depth) - 1) as u8;
    let mut indices = Vec::with_capacity(width as usize * height as usize);
    for row in buf[..stride * height as usize].chunks_exact(stride) {
        if depth == 8 {
            indices.extend_from_slice(&row[..width as usize]);
            continue;
        }
        for x in 0..width as usize {
            let byte = row[x / per_byte];
            let shift = 8 - depth as usize * (x % per_byte + 1);
            indices.push((byte >> shift) & mask);
        }
    }
    SegmentationMap::from_indices(width, height, &indices)
}
