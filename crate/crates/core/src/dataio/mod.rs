//! Dataset ingestion: tiling rasters, remapping label schemes onto episode
//! class spaces, augmentation, and C-way K-shot episode sampling.

mod manifest;
mod sampler;

pub use manifest::{
    load_mask, save_mask, ColorTable, DatasetManifest, Geography, ManifestRow, Split,
};
pub use sampler::{qualifying_counts, sample_episode, tile_qualifies};

use crate::error::{Error, Result};
use image::RgbImage;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fraction of tile pixels a class needs for the tile to qualify for it.
pub const MIN_FG_FRACTION: f64 = 0.01;

/// An image tile plus its integer class mask; the unit of all sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTile {
    pub pixels: RgbImage,
    pub mask: Array2<u8>,
    pub source_id: String,
    pub geography: Geography,
}

impl LabeledTile {
    pub fn new(
        pixels: RgbImage,
        mask: Array2<u8>,
        source_id: String,
        geography: Geography,
    ) -> Result<Self> {
        if (pixels.height() as usize, pixels.width() as usize) != mask.dim() {
            return Err(Error::InvalidInput(format!(
                "pixels {}x{} and mask {:?} disagree for {source_id}",
                pixels.height(),
                pixels.width(),
                mask.dim()
            )));
        }
        Ok(Self {
            pixels,
            mask,
            source_id,
            geography,
        })
    }

    pub fn height(&self) -> usize {
        self.mask.dim().0
    }

    pub fn width(&self) -> usize {
        self.mask.dim().1
    }

    /// Fraction of mask pixels equal to `class`.
    pub fn class_fraction(&self, class: u8) -> f64 {
        let total = self.mask.len();
        if total == 0 {
            return 0.0;
        }
        let hits = self.mask.iter().filter(|v| **v == class).count();
        hits as f64 / total as f64
    }

    /// Binary mask (1 where the tile's class equals `class`).
    pub fn binary_mask(&self, class: u8) -> Array2<u8> {
        self.mask.mapv(|v| u8::from(v == class))
    }
}

/// Maps a source label scheme onto the episode class space. Index 0 is
/// reserved for Background; a C-way task has exactly C non-background classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMapping {
    pub name: String,
    /// (source label, episode class index) pairs; total over the source set.
    pub entries: Vec<(u8, u8)>,
    /// Ordered episode class names, index 0 = Background.
    pub class_names: Vec<String>,
}

impl ClassMapping {
    pub fn new(name: &str, entries: Vec<(u8, u8)>, class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Config("class mapping needs at least Background".into()));
        }
        for (src, dst) in &entries {
            if *dst as usize >= class_names.len() {
                return Err(Error::Config(format!(
                    "mapping {name}: source {src} maps to undeclared class {dst}"
                )));
            }
        }
        Ok(Self {
            name: name.to_string(),
            entries,
            class_names,
        })
    }

    /// Identity mapping over an already-remapped space with `way` foreground
    /// classes.
    pub fn identity(way: usize) -> Self {
        let mut class_names = vec!["Background".to_string()];
        for c in 1..=way {
            class_names.push(format!("class{c}"));
        }
        let entries = (0..=way as u8).map(|c| (c, c)).collect();
        Self {
            name: "identity".to_string(),
            entries,
            class_names,
        }
    }

    pub fn lookup(&self, source: u8) -> Option<u8> {
        self.entries
            .iter()
            .find(|(src, _)| *src == source)
            .map(|(_, dst)| *dst)
    }

    /// Number of foreground classes (C in a C-way task).
    pub fn way(&self) -> usize {
        self.class_names.len() - 1
    }

    /// Episode foreground class indices, in declared order.
    pub fn foreground_classes(&self) -> Vec<u8> {
        (1..self.class_names.len() as u8).collect()
    }
}

/// K support pairs and one query for a C-way task.
#[derive(Debug, Clone)]
pub struct Episode {
    pub supports: Vec<LabeledTile>,
    pub query: LabeledTile,
    pub way: usize,
    pub shot: usize,
    pub class_list: Vec<u8>,
}

/// Cuts the top-left-aligned grid of non-overlapping `tile_size` squares.
/// Remainder rows/columns that do not fill a tile are dropped.
pub fn tile_image(
    image: &RgbImage,
    mask: &Array2<u8>,
    tile_size: usize,
    source_id: &str,
    geography: Geography,
) -> Result<Vec<LabeledTile>> {
    let (h, w) = (image.height() as usize, image.width() as usize);
    if mask.dim() != (h, w) {
        return Err(Error::InvalidInput(format!(
            "image {h}x{w} and mask {:?} differ",
            mask.dim()
        )));
    }
    if tile_size == 0 {
        return Err(Error::InvalidInput("tile_size must be positive".into()));
    }
    if tile_size > h || tile_size > w {
        return Err(Error::InvalidInput(format!(
            "tile_size {tile_size} exceeds image {h}x{w}"
        )));
    }
    let rows = h / tile_size;
    let cols = w / tile_size;
    let mut tiles = Vec::with_capacity(rows * cols);
    for ty in 0..rows {
        for tx in 0..cols {
            let y0 = ty * tile_size;
            let x0 = tx * tile_size;
            let mut pixels = RgbImage::new(tile_size as u32, tile_size as u32);
            for y in 0..tile_size {
                for x in 0..tile_size {
                    pixels.put_pixel(
                        x as u32,
                        y as u32,
                        *image.get_pixel((x0 + x) as u32, (y0 + y) as u32),
                    );
                }
            }
            let tile_mask = mask
                .slice(ndarray::s![y0..y0 + tile_size, x0..x0 + tile_size])
                .to_owned();
            tiles.push(LabeledTile {
                pixels,
                mask: tile_mask,
                source_id: format!("{source_id}+{x0}+{y0}"),
                geography,
            });
        }
    }
    Ok(tiles)
}

/// Elementwise label substitution into the episode class space.
pub fn remap_labels(mask: &Array2<u8>, mapping: &ClassMapping) -> Result<Array2<u8>> {
    let mut table = [None::<u8>; 256];
    for (src, dst) in &mapping.entries {
        table[*src as usize] = Some(*dst);
    }
    let mut out = Array2::<u8>::zeros(mask.dim());
    let mut unmapped: Option<(u8, usize)> = None;
    for (slot, v) in out.iter_mut().zip(mask.iter()) {
        match table[*v as usize] {
            Some(dst) => *slot = dst,
            None => match &mut unmapped {
                Some((label, count)) if *label == *v => *count += 1,
                Some(_) => {}
                None => unmapped = Some((*v, 1)),
            },
        }
    }
    if let Some((label, _)) = unmapped {
        // Recount in full so the error reports the true pixel count.
        let pixel_count = mask.iter().filter(|v| **v == label).count();
        return Err(Error::UnmappedLabel { label, pixel_count });
    }
    Ok(out)
}

/// With probability 0.5, mirrors pixels and mask jointly about the vertical
/// axis; otherwise returns the tile unchanged.
pub fn augment(tile: &LabeledTile, rng: &mut ChaCha8Rng) -> LabeledTile {
    if rng.random_bool(0.5) {
        flip_horizontal(tile)
    } else {
        tile.clone()
    }
}

/// Unconditional horizontal mirror of pixels and mask.
pub fn flip_horizontal(tile: &LabeledTile) -> LabeledTile {
    let pixels = image::imageops::flip_horizontal(&tile.pixels);
    let (h, w) = tile.mask.dim();
    let mut mask = Array2::<u8>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            mask[[y, x]] = tile.mask[[y, w - 1 - x]];
        }
    }
    LabeledTile {
        pixels,
        mask,
        source_id: tile.source_id.clone(),
        geography: tile.geography,
    }
}

/// Resamples a tile to `side x side`: bilinear for pixels, nearest-neighbor
/// for the class mask so no fractional class indices appear.
pub fn resize_tile(tile: &LabeledTile, side: usize) -> Result<LabeledTile> {
    if side == 0 {
        return Err(Error::InvalidInput("resize side must be positive".into()));
    }
    if side == tile.height() && side == tile.width() {
        return Ok(tile.clone());
    }
    let pixels = image::imageops::resize(
        &tile.pixels,
        side as u32,
        side as u32,
        image::imageops::FilterType::Triangle,
    );
    let (h, w) = tile.mask.dim();
    let mut mask = Array2::<u8>::zeros((side, side));
    for y in 0..side {
        let sy = ((y as f64 + 0.5) * h as f64 / side as f64).floor() as usize;
        let sy = sy.min(h - 1);
        for x in 0..side {
            let sx = ((x as f64 + 0.5) * w as f64 / side as f64).floor() as usize;
            let sx = sx.min(w - 1);
            mask[[y, x]] = tile.mask[[sy, sx]];
        }
    }
    Ok(LabeledTile {
        pixels,
        mask,
        source_id: tile.source_id.clone(),
        geography: tile.geography,
    })
}

/// RGB tile as a `3 x H x W` float tensor scaled to `[0, 1]`.
pub fn tile_to_tensor(tile: &LabeledTile) -> ndarray::ArrayD<f64> {
    let (h, w) = tile.mask.dim();
    let mut out = ndarray::ArrayD::<f64>::zeros(ndarray::IxDyn(&[3, h, w]));
    for y in 0..h {
        for x in 0..w {
            let px = tile.pixels.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                out[[c, y, x]] = px[c] as f64 / 255.0;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
