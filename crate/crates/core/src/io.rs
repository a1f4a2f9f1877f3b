//! Reading and writing masks, depth maps and JSON documents.
//!
//! Depth maps are PFM (32-bit float, meters) or 16-bit PNG scaled by a
//! per-camera factor. Masks are PNG (any nonzero sample is true) or RLE JSON.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::DepthImage;
use crate::mask::{BinaryMask, RleMask};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: schema error at {field}: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
}

impl IoError {
    fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Field path of a serde_json error, e.g. `[1].score`.
///
/// serde_json reports "missing field `score`" for absent fields; the name is
/// pulled out of the message so the caller can see which field was missing.
pub fn schema_field(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    if let Some(start) = msg.find("field `") {
        let rest = &msg[start + 7..];
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    format!("line {} column {}", err.line(), err.column())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_json(path, &text)
}

pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Schema {
        path: path.to_path_buf(),
        field: schema_field(&e),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::format(path, e.to_string()))?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn load_mask_png(path: &Path) -> Result<BinaryMask, IoError> {
    let img = image::open(path)
        .map_err(|e| IoError::format(path, e.to_string()))?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| p.0[0] != 0).collect();
    Ok(BinaryMask::from_vec(w, h, data).expect("dimensions match buffer"))
}

pub fn save_mask_png(path: &Path, mask: &BinaryMask) -> Result<(), IoError> {
    let img = ImageBuffer::from_fn(mask.width, mask.height, |u, v| {
        Luma([if mask.get(u, v) { 255u8 } else { 0 }])
    });
    img.save(path).map_err(|e| IoError::format(path, e.to_string()))
}

pub fn load_mask_rle(path: &Path) -> Result<BinaryMask, IoError> {
    let rle: RleMask = read_json(path)?;
    rle.decode().map_err(|m| IoError::format(path, m))
}

/// Loads a depth map; `scale` converts PNG integer units to meters.
pub fn load_depth(path: &Path, scale: f64) -> Result<DepthImage, IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("pfm") => load_pfm(path),
        Some(ext) if ext.eq_ignore_ascii_case("png") => {
            let img = image::open(path)
                .map_err(|e| IoError::format(path, e.to_string()))?
                .into_luma16();
            let (w, h) = img.dimensions();
            let data = img.pixels().map(|p| (p.0[0] as f64 * scale) as f32).collect();
            Ok(DepthImage::new(w, h, data))
        }
        _ => Err(IoError::format(path, "depth must be .pfm or .png")),
    }
}

/// Reads a single-channel little- or big-endian PFM file.
pub fn load_pfm(path: &Path) -> Result<DepthImage, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = Vec::new();
    // three whitespace-terminated header lines: "Pf", "W H", scale
    for _ in 0..3 {
        let mut line = String::new();
        reader
            .read_line(&mut line)
            .map_err(|e| IoError::io(path, e))?;
        header.push(line.trim().to_string());
    }
    if header[0] != "Pf" {
        return Err(IoError::format(path, "not a single-channel PFM (expected 'Pf')"));
    }
    let dims: Vec<u32> = header[1]
        .split_whitespace()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| IoError::format(path, "bad PFM dimensions"))?;
    let [w, h] = dims[..] else {
        return Err(IoError::format(path, "bad PFM dimensions"));
    };
    let scale: f64 = header[2]
        .parse()
        .map_err(|_| IoError::format(path, "bad PFM scale"))?;
    let little = scale < 0.0;
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| IoError::io(path, e))?;
    let n = w as usize * h as usize;
    if bytes.len() != n * 4 {
        return Err(IoError::format(
            path,
            format!("expected {} data bytes, found {}", n * 4, bytes.len()),
        ));
    }
    let mut data = vec![0f32; n];
    // PFM rows run bottom to top
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let value = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (row, col) = (i / w as usize, i % w as usize);
        data[(h as usize - 1 - row) * w as usize + col] = value;
    }
    Ok(DepthImage::new(w, h, data))
}

pub fn save_pfm(path: &Path, depth: &DepthImage) -> Result<(), IoError> {
    let mut out = Vec::with_capacity(depth.data.len() * 4 + 32);
    write!(out, "Pf\n{} {}\n-1.0\n", depth.width, depth.height).expect("vec write");
    let w = depth.width as usize;
    for row in (0..depth.height as usize).rev() {
        for &d in &depth.data[row * w..(row + 1) * w] {
            out.extend_from_slice(&d.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| IoError::io(path, e))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, IoError> {
    Ok(image::open(path)
        .map_err(|e| IoError::format(path, e.to_string()))?
        .into_rgb8())
}

pub fn save_rgb(path: &Path, img: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> Result<(), IoError> {
    img.save(path).map_err(|e| IoError::format(path, e.to_string()))
}
