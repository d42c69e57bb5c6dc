//! File formats: 8-bit RGB images in, PNG out, 16-bit grayscale probability
//! maps, binary masks, score and Lab CSVs.

use std::fs::File;
use std::path::Path;

use image::{ColorType, DynamicImage, GrayImage, ImageBuffer as RawImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::color::{Encoding, ImageBuffer, LabPoint};
use crate::error::{Error, Result};
use crate::metrics::{BinaryMask, ProbMap, ScoreList};

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

fn is_8bit(c: ColorType) -> bool {
    matches!(c, ColorType::L8 | ColorType::La8 | ColorType::Rgb8 | ColorType::Rgba8)
}

/// Loads an 8-bit gray or RGB(A) image as encoded sRGB, `s / 255`.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let img = open(path)?;
    if !is_8bit(img.color()) {
        return Err(Error::UnsupportedBitDepth(format!(
            "{}: {:?} (only 8-bit images are supported)",
            path.display(),
            img.color()
        )));
    }
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    ImageBuffer::new(w as usize, h as usize, data, Encoding::EncodedSRGB)
}

pub fn to_rgb8(img: &ImageBuffer) -> RgbImage {
    let raw = img.data().iter().map(|&s| (s * 255.0).round() as u8).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer sized to image")
}

pub fn save_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Any 8-bit image; a pixel is positive when its luma is at least 128.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let img = open(path)?;
    if !is_8bit(img.color()) && !matches!(img.color(), ColorType::L16) {
        return Err(Error::UnsupportedBitDepth(format!("{}: {:?}", path.display(), img.color())));
    }
    let luma = img.to_luma8();
    let (w, h) = luma.dimensions();
    BinaryMask::new(w as usize, h as usize, luma.into_raw().into_iter().map(|v| v >= 128).collect())
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let raw = mask.data().iter().map(|&v| if v { 255 } else { 0 }).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw)
        .expect("buffer sized to mask")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// 16-bit grayscale as `v / 65535`; 8-bit grayscale as `v / 255`.
pub fn load_prob_map(path: &Path) -> Result<ProbMap> {
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img.color() {
        ColorType::L16 => img.to_luma16().into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        ColorType::L8 => img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        other => {
            return Err(Error::UnsupportedBitDepth(format!(
                "{}: {other:?} (probability maps are single-channel)",
                path.display()
            )))
        }
    };
    ProbMap::new(w, h, data)
}

pub fn save_prob_map(map: &ProbMap, path: &Path) -> Result<()> {
    let raw: Vec<u16> = map.data.iter().map(|&v| (v * 65535.0).round() as u16).collect();
    RawImage::<Luma<u16>, Vec<u16>>::from_raw(map.width as u32, map.height as u32, raw)
        .expect("buffer sized to map")
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

#[derive(Debug, Deserialize)]
struct ScoreRow {
    #[allow(dead_code)]
    id: String,
    score: f64,
    label: u8,
}

/// `id,score,label` with `label` in {0, 1}.
pub fn read_scores_csv(path: &Path) -> Result<ScoreList> {
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "score", "label"] {
        return Err(Error::Format(format!(
            "{}: expected header id,score,label, found {}",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut pairs = Vec::new();
    for (i, row) in reader.deserialize::<ScoreRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Format(format!("{}:{line}: {e}", path.display())))?;
        let label = match row.label {
            0 => false,
            1 => true,
            other => {
                return Err(Error::Format(format!("{}:{line}: label {other} not in {{0, 1}}", path.display())))
            }
        };
        pairs.push((row.score, label));
    }
    ScoreList::from_pairs(pairs)
}

#[derive(Serialize)]
struct LabRow<'a> {
    id: &'a str,
    #[serde(rename = "L")]
    l: f64,
    a: f64,
    b: f64,
}

/// `id,L,a,b`, one row per bank entry.
pub fn write_lab_csv(points: &[(String, LabPoint)], path: &Path) -> Result<()> {
    let io_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    for (id, p) in points {
        writer.serialize(LabRow { id, l: p.l, a: p.a, b: p.b }).map_err(io_err)?;
    }
    writer.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
