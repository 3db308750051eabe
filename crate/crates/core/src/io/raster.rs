//! PNG images and masks, and the landmark CSV format.

use std::path::Path;

use image::{GrayImage, ImageReader, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::Landmarks2D;
use crate::render::{ImagePlane, SoftMask};

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Saves as 8-bit RGB; values are clamped to [0, 1].
pub fn save_png_rgb(path: &Path, img: &ImagePlane) -> Result<()> {
    let mut out = RgbImage::new(img.width as u32, img.height as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        *px = Rgb([to_u8(img.rgb[3 * i]), to_u8(img.rgb[3 * i + 1]), to_u8(img.rgb[3 * i + 2])]);
    }
    out.save(path)?;
    Ok(())
}

pub fn load_png_rgb(path: &Path) -> Result<ImagePlane> {
    let img = ImageReader::open(path)?.with_guessed_format()?.decode()?.to_rgb8();
    let rgb = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    ImagePlane::from_rgb(img.width() as usize, img.height() as usize, rgb)
}

/// Saves as 8-bit grayscale.
pub fn save_png_mask(path: &Path, mask: &SoftMask) -> Result<()> {
    let mut out = GrayImage::new(mask.width as u32, mask.height as u32);
    for (px, v) in out.pixels_mut().zip(&mask.values) {
        *px = Luma([to_u8(*v)]);
    }
    out.save(path)?;
    Ok(())
}

/// Loads any PNG as a mask via its luminance.
pub fn load_png_mask(path: &Path) -> Result<SoftMask> {
    let img = ImageReader::open(path)?.with_guessed_format()?.decode()?.to_luma8();
    Ok(SoftMask {
        width: img.width() as usize,
        height: img.height() as usize,
        values: img.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LandmarkRow {
    index: usize,
    x: f64,
    y: f64,
    weight: f64,
    visible: u8,
}

/// CSV with header `index,x,y,weight,visible` in normalized device
/// coordinates; `visible` is 0 or 1.
pub fn landmarks_to_csv(l: &Landmarks2D) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for i in 0..l.len() {
        w.serialize(LandmarkRow {
            index: i,
            x: l.points[i][0],
            y: l.points[i][1],
            weight: l.weights[i],
            visible: l.visible[i] as u8,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn landmarks_from_csv(text: &str) -> Result<Landmarks2D> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows: Vec<LandmarkRow> = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    rows.sort_by_key(|r| r.index);
    for (k, row) in rows.iter().enumerate() {
        if row.index != k {
            return Err(Error::format(format!(
                "landmark csv: indices must be 0..{} without gaps or repeats (found {} at position {k})",
                rows.len(),
                row.index
            )));
        }
        if row.visible > 1 {
            return Err(Error::format(format!("landmark csv row {k}: visible must be 0 or 1")));
        }
    }
    let l = Landmarks2D {
        points: rows.iter().map(|r| [r.x, r.y]).collect(),
        weights: rows.iter().map(|r| r.weight).collect(),
        visible: rows.iter().map(|r| r.visible == 1).collect(),
    };
    l.validate().map_err(|e| Error::format(format!("landmark csv: {e}")))?;
    Ok(l)
}

pub fn save_landmarks(path: &Path, l: &Landmarks2D) -> Result<()> {
    std::fs::write(path, landmarks_to_csv(l)?)?;
    Ok(())
}

pub fn load_landmarks(path: &Path) -> Result<Landmarks2D> {
    landmarks_from_csv(&std::fs::read_to_string(path)?)
}
