//! PNG encoding of depth, segmentation and shaded images.

use crate::error::{Error, Result};
use crate::scene::SemanticClass;
use crate::sensors::{DepthImage, RgbImage, SegImage};

fn encode(
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    palette: Option<Vec<u8>>,
    data: &[u8],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(depth);
        if let Some(p) = palette {
            enc.set_palette(p);
        }
        let mut w = enc.write_header().map_err(|e| Error::format(e.to_string()))?;
        w.write_image_data(data).map_err(|e| Error::format(e.to_string()))?;
    }
    Ok(out)
}

struct Decoded {
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    data: Vec<u8>,
}

fn decode(bytes: &[u8]) -> Result<Decoded> {
    let mut dec = png::Decoder::new(bytes);
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| Error::format(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(e.to_string()))?;
    buf.truncate(info.buffer_size());
    Ok(Decoded {
        width: info.width,
        height: info.height,
        color: info.color_type,
        depth: info.bit_depth,
        data: buf,
    })
}

/// Depth in metres to stored units of `unit_mm` millimetres, clamped to
/// 16 bits.
pub fn depth_units(depth_m: f64, unit_mm: u32) -> u16 {
    (depth_m * 1000.0 / unit_mm as f64).round().clamp(0.0, u16::MAX as f64) as u16
}

pub fn quantize_depth(img: &DepthImage, unit_mm: u32) -> Vec<u16> {
    img.data.iter().map(|d| depth_units(*d, unit_mm)).collect()
}

/// 16-bit grayscale PNG of depth units.
pub fn encode_depth_png(width: u32, height: u32, units: &[u16]) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = units.iter().flat_map(|v| v.to_be_bytes()).collect();
    encode(width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, None, &bytes)
}

pub fn decode_depth_png(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>)> {
    let d = decode(bytes)?;
    if d.color != png::ColorType::Grayscale || d.depth != png::BitDepth::Sixteen {
        return Err(Error::format("depth image must be 16-bit grayscale"));
    }
    let v = d.data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((d.width, d.height, v))
}

/// Palette with one entry per class id.
pub fn class_palette() -> Vec<u8> {
    SemanticClass::ALL.iter().flat_map(|c| c.color()).collect()
}

/// JSON sidecar mapping palette index to class name and color.
pub fn palette_sidecar() -> String {
    let entries: Vec<serde_json::Value> = SemanticClass::ALL
        .iter()
        .map(|c| serde_json::json!({"index": c.id(), "class": c.name(), "color": c.color()}))
        .collect();
    serde_json::to_string_pretty(&entries).unwrap_or_default() + "\n"
}

/// 8-bit indexed PNG whose indices are class ids.
pub fn encode_seg_png(img: &SegImage) -> Result<Vec<u8>> {
    encode(
        img.width,
        img.height,
        png::ColorType::Indexed,
        png::BitDepth::Eight,
        Some(class_palette()),
        &img.data,
    )
}

pub fn decode_seg_png(bytes: &[u8]) -> Result<SegImage> {
    let d = decode(bytes)?;
    if d.color != png::ColorType::Indexed || d.depth != png::BitDepth::Eight {
        return Err(Error::format("segmentation image must be 8-bit indexed"));
    }
    Ok(SegImage {
        width: d.width,
        height: d.height,
        data: d.data,
    })
}

pub fn encode_rgb_png(img: &RgbImage) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = img.data.iter().flatten().copied().collect();
    encode(img.width, img.height, png::ColorType::Rgb, png::BitDepth::Eight, None, &bytes)
}

pub fn decode_rgb_png(bytes: &[u8]) -> Result<RgbImage> {
    let d = decode(bytes)?;
    if d.color != png::ColorType::Rgb || d.depth != png::BitDepth::Eight {
        return Err(Error::format("color image must be 8-bit RGB"));
    }
    Ok(RgbImage {
        width: d.width,
        height: d.height,
        data: d.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}
