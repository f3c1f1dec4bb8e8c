//! Procedural imagery for desk-scale runs: disk-on-background rasters for
//! mask-refinement checks and a two-domain textured dataset where the
//! foreground carries a high-frequency oriented texture and the background
//! smooth noise. Train and test domains use disjoint orientation sets, so a
//! model must transfer texture (not memorized appearance) across domains.

use crate::dataio::{Geography, LabeledTile};
use image::RgbImage;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A gray disk image on a contrasting background plus its clean mask.
pub fn disk_image(
    size: usize,
    center: (f64, f64),
    radius: f64,
    rng: &mut ChaCha8Rng,
) -> (RgbImage, Array2<u8>) {
    let mut img = RgbImage::new(size as u32, size as u32);
    let mut mask = Array2::<u8>::zeros((size, size));
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - center.0;
            let dy = y as f64 - center.1;
            let inside = (dx * dx + dy * dy).sqrt() <= radius;
            let mut noise = || -> f64 { rng.random_range(-8.0..8.0) };
            let px = if inside {
                mask[[y, x]] = 1;
                [
                    (40.0 + noise()).clamp(0.0, 255.0) as u8,
                    (170.0 + noise()).clamp(0.0, 255.0) as u8,
                    (60.0 + noise()).clamp(0.0, 255.0) as u8,
                ]
            } else {
                [
                    (128.0 + noise()).clamp(0.0, 255.0) as u8,
                    (128.0 + noise()).clamp(0.0, 255.0) as u8,
                    (128.0 + noise()).clamp(0.0, 255.0) as u8,
                ]
            };
            img.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    (img, mask)
}

/// Flips labels of roughly `fraction` of the pixels within `band` of the
/// mask boundary, simulating annotation noise.
pub fn add_boundary_noise(
    mask: &Array2<u8>,
    fraction: f64,
    band: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<u8> {
    let (h, w) = mask.dim();
    let mut out = mask.clone();
    let band = band as isize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            let v = mask[[y as usize, x as usize]];
            let mut near_boundary = false;
            'scan: for dy in -band..=band {
                for dx in -band..=band {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    if mask[[ny as usize, nx as usize]] != v {
                        near_boundary = true;
                        break 'scan;
                    }
                }
            }
            if near_boundary && rng.random_bool(fraction) {
                out[[y as usize, x as usize]] = 1 - v;
            }
        }
    }
    out
}

/// Orientation sets (degrees) for the two domains; deliberately disjoint.
pub const TRAIN_ORIENTATIONS: [f64; 2] = [15.0, 60.0];
pub const TEST_ORIENTATIONS: [f64; 2] = [105.0, 150.0];

#[derive(Debug, Clone)]
pub struct TextureDomainSpec {
    pub tile_size: usize,
    pub orientations_deg: Vec<f64>,
    /// Wavelength range of the foreground texture in pixels.
    pub wavelength: (f64, f64),
    pub geography: Geography,
}

impl TextureDomainSpec {
    pub fn train(tile_size: usize) -> Self {
        Self {
            tile_size,
            orientations_deg: TRAIN_ORIENTATIONS.to_vec(),
            wavelength: (2.5, 4.0),
            geography: Geography::TrainDomain,
        }
    }

    pub fn test(tile_size: usize) -> Self {
        Self {
            tile_size,
            orientations_deg: TEST_ORIENTATIONS.to_vec(),
            wavelength: (2.5, 4.0),
            geography: Geography::TestDomain,
        }
    }
}

/// Smooth low-frequency field: coarse seeded noise bilinearly interpolated
/// up to the tile size.
fn smooth_noise(size: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let coarse = 4usize;
    let mut grid = Array2::<f64>::zeros((coarse, coarse));
    for v in grid.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut out = Array2::<f64>::zeros((size, size));
    let scale = (coarse - 1) as f64 / (size - 1) as f64;
    for y in 0..size {
        let sy = y as f64 * scale;
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(coarse - 1);
        let wy = sy - y0 as f64;
        for x in 0..size {
            let sx = x as f64 * scale;
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(coarse - 1);
            let wx = sx - x0 as f64;
            out[[y, x]] = grid[[y0, x0]] * (1.0 - wy) * (1.0 - wx)
                + grid[[y0, x1]] * (1.0 - wy) * wx
                + grid[[y1, x0]] * wy * (1.0 - wx)
                + grid[[y1, x1]] * wy * wx;
        }
    }
    out
}

/// One tile: a rectangular foreground patch of oriented sinusoidal texture
/// over a smooth-noise background. Both regions share the same mean color, so
/// texture is the only reliable cue.
pub fn generate_tile(spec: &TextureDomainSpec, index: usize, rng: &mut ChaCha8Rng) -> LabeledTile {
    let size = spec.tile_size;
    let mut mask = Array2::<u8>::zeros((size, size));

    // Foreground rectangle between ~25% and ~60% of the tile area.
    let min_side = size / 3;
    let max_side = 3 * size / 4;
    let rw = rng.random_range(min_side..=max_side);
    let rh = rng.random_range(min_side..=max_side);
    let rx = rng.random_range(0..=size - rw);
    let ry = rng.random_range(0..=size - rh);
    for y in ry..ry + rh {
        for x in rx..rx + rw {
            mask[[y, x]] = 1;
        }
    }

    let orientation = spec.orientations_deg[rng.random_range(0..spec.orientations_deg.len())]
        .to_radians();
    let wavelength = rng.random_range(spec.wavelength.0..spec.wavelength.1);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let (so, co) = orientation.sin_cos();

    let background = smooth_noise(size, rng);
    let base = [0.45, 0.52, 0.45];
    let mut pixels = RgbImage::new(size as u32, size as u32);
    for y in 0..size {
        for x in 0..size {
            let signal = if mask[[y, x]] == 1 {
                let t = (x as f64 * co + y as f64 * so) * std::f64::consts::TAU / wavelength;
                0.35 * (t + phase).sin()
            } else {
                0.35 * background[[y, x]]
            };
            let jitter = rng.random_range(-0.02..0.02);
            let mut px = [0u8; 3];
            for c in 0..3 {
                let v = (base[c] + signal + jitter).clamp(0.0, 1.0);
                px[c] = (v * 255.0).round() as u8;
            }
            pixels.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    LabeledTile {
        pixels,
        mask,
        source_id: format!("{}-{index}", spec.geography),
        geography: spec.geography,
    }
}

/// A pool of `n` tiles from one domain.
pub fn generate_pool(spec: &TextureDomainSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<LabeledTile> {
    (0..n).map(|i| generate_tile(spec, i, rng)).collect()
}
