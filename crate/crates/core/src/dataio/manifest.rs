//! CSV dataset manifests and color-coded mask decoding.

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geography {
    TrainDomain,
    TestDomain,
}

impl std::str::FromStr for Geography {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train-domain" => Ok(Geography::TrainDomain),
            "test-domain" => Ok(Geography::TestDomain),
            other => Err(Error::InvalidInput(format!("unknown geography {other:?}"))),
        }
    }
}

impl std::fmt::Display for Geography {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Geography::TrainDomain => write!(f, "train-domain"),
            Geography::TestDomain => write!(f, "test-domain"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManifestRow {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub geography: Geography,
    pub split: Split,
}

/// Rows of (image, mask, geography, split); paths are relative to a data root.
#[derive(Debug, Clone, Default)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

const HEADER: [&str; 4] = ["image_path", "mask_path", "geography", "split"];

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let headers = reader.headers().map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::Data {
                path: path.to_path_buf(),
                msg: format!("expected header {HEADER:?}, got {headers:?}"),
            });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Data {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
            if record.len() != 4 {
                return Err(Error::Data {
                    path: path.to_path_buf(),
                    msg: format!("row with {} fields: {record:?}", record.len()),
                });
            }
            rows.push(ManifestRow {
                image_path: PathBuf::from(&record[0]),
                mask_path: PathBuf::from(&record[1]),
                geography: record[2].parse()?,
                split: record[3].parse()?,
            });
        }
        Ok(Self { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        writer.write_record(HEADER).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        for row in &self.rows {
            writer
                .write_record([
                    row.image_path.to_string_lossy().as_ref(),
                    row.mask_path.to_string_lossy().as_ref(),
                    &row.geography.to_string(),
                    &row.split.to_string(),
                ])
                .map_err(|e| Error::Data {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })?;
        }
        writer.flush().map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(())
    }

    /// Checks that every referenced file exists under `root`.
    pub fn validate_files(&self, root: &Path) -> Result<()> {
        let mut missing = Vec::new();
        for row in &self.rows {
            for p in [&row.image_path, &row.mask_path] {
                if !root.join(p).is_file() {
                    missing.push(p.display().to_string());
                }
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Data {
                path: root.to_path_buf(),
                msg: format!("missing files: {}", missing.join(", ")),
            })
        }
    }
}

/// Color -> source-label table for color-coded mask rasters. Stored as a CSV
/// with header `r,g,b,label` so dataset conventions stay in configuration.
#[derive(Debug, Clone, Default)]
pub struct ColorTable {
    pub entries: Vec<([u8; 3], u8)>,
}

impl ColorTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Data {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
            let parse = |i: usize| -> Result<u8> {
                record[i].trim().parse::<u8>().map_err(|e| Error::Data {
                    path: path.to_path_buf(),
                    msg: format!("bad value {:?}: {e}", &record[i]),
                })
            };
            entries.push(([parse(0)?, parse(1)?, parse(2)?], parse(3)?));
        }
        Ok(Self { entries })
    }

    /// Decodes a color-coded RGB mask into source labels.
    pub fn decode(&self, mask: &image::RgbImage) -> Result<Array2<u8>> {
        let (h, w) = (mask.height() as usize, mask.width() as usize);
        let mut out = Array2::<u8>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let px = mask.get_pixel(x as u32, y as u32);
                let rgb = [px[0], px[1], px[2]];
                let label = self
                    .entries
                    .iter()
                    .find(|(color, _)| *color == rgb)
                    .map(|(_, label)| *label)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "mask color {rgb:?} at ({x}, {y}) not in color table"
                        ))
                    })?;
                out[[y, x]] = label;
            }
        }
        Ok(out)
    }
}

/// Loads a mask file: single-channel PNGs are taken as label indices,
/// RGB PNGs are decoded through the color table.
pub fn load_mask(path: &Path, color_table: Option<&ColorTable>) -> Result<Array2<u8>> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })?;
    match img {
        image::DynamicImage::ImageLuma8(gray) => {
            let (h, w) = (gray.height() as usize, gray.width() as usize);
            let mut out = Array2::<u8>::zeros((h, w));
            for y in 0..h {
                for x in 0..w {
                    out[[y, x]] = gray.get_pixel(x as u32, y as u32)[0];
                }
            }
            Ok(out)
        }
        other => {
            let table = color_table.ok_or_else(|| Error::Data {
                path: path.to_path_buf(),
                msg: "color mask requires a color table".to_string(),
            })?;
            table.decode(&other.to_rgb8())
        }
    }
}

/// Writes a label mask as an 8-bit single-channel PNG.
pub fn save_mask(mask: &Array2<u8>, path: &Path) -> Result<()> {
    let (h, w) = mask.dim();
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            img.put_pixel(x as u32, y as u32, image::Luma([mask[[y, x]]]));
        }
    }
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}
