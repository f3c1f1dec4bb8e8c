//! GrabCut foreground refinement: iterative GMM color modelling plus min-cut
//! segmentation, seeded from a ground-truth class mask used as the trimap.
//! Border matting is deliberately absent; downstream pooling needs a hard
//! binary mask.

mod gmm;
mod graph;

pub use gmm::{fit_gmm, GmmComponent, GmmModel, COV_FLOOR};
pub use graph::{brute_force_min_cut, FlowNetwork, MaxFlowResult};

use crate::error::{Error, Result};
use image::RgbImage;
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-pixel prior derived from the ground-truth class mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimapLabel {
    DefiniteBackground,
    ProbableForeground,
}

#[derive(Debug, Clone)]
pub struct Trimap {
    pub labels: Array2<TrimapLabel>,
}

impl Trimap {
    /// Ground-truth class pixels become probable foreground; everything else
    /// definite background (the interaction rectangle is the whole image).
    pub fn from_mask(mask: &Array2<u8>) -> Self {
        Self {
            labels: mask.mapv(|v| {
                if v != 0 {
                    TrimapLabel::ProbableForeground
                } else {
                    TrimapLabel::DefiniteBackground
                }
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GrabCutConfig {
    /// Mixture components per color model.
    pub components: usize,
    /// Smoothness weight on neighborhood links.
    pub gamma: f64,
    /// Refinement rounds (GMM refit + min-cut).
    pub iterations: usize,
    /// Minimum foreground fraction required of the input mask.
    pub min_fg_fraction: f64,
}

impl Default for GrabCutConfig {
    fn default() -> Self {
        Self {
            components: 5,
            gamma: 50.0,
            iterations: 5,
            min_fg_fraction: 0.01,
        }
    }
}

fn pixel_colors(image: &RgbImage) -> Vec<[f64; 3]> {
    image
        .pixels()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect()
}

/// The 8-neighborhood directions enumerated once per pixel: left, up-left,
/// up, up-right.
const NEIGHBORS: [(isize, isize); 4] = [(-1, 0), (-1, -1), (0, -1), (1, -1)];

fn neighbor_dist(dx: isize, dy: isize) -> f64 {
    if dx != 0 && dy != 0 {
        std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

/// Contrast scale `beta = 1 / (2 <||z_m - z_n||^2>)` averaged over all
/// 8-neighborhood pairs. A uniform image has no contrast; beta falls back
/// to 0 so every n-link carries the full smoothness weight.
pub fn contrast_beta(image: &RgbImage) -> f64 {
    let (w, h) = (image.width() as isize, image.height() as isize);
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            let z = image.get_pixel(x as u32, y as u32);
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let zn = image.get_pixel(nx as u32, ny as u32);
                let mut d2 = 0.0;
                for c in 0..3 {
                    let d = z[c] as f64 - zn[c] as f64;
                    d2 += d * d;
                }
                total += d2;
                count += 1;
            }
        }
    }
    if count == 0 || total <= f64::EPSILON {
        return 0.0;
    }
    1.0 / (2.0 * total / count as f64)
}

/// Builds the pixel flow network: t-links carry negative log-likelihoods
/// under the opposite color model (definite-background pixels are clamped by
/// a dominating background t-link), n-links carry
/// `gamma * exp(-beta ||z_m - z_n||^2) / dist(m, n)`.
pub fn build_graph(
    image: &RgbImage,
    trimap: &Trimap,
    fg_gmm: &GmmModel,
    bg_gmm: &GmmModel,
    gamma: f64,
) -> FlowNetwork {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let beta = contrast_beta(image);
    // Large enough to dominate any pixel's total n-link weight
    // (at most ~6.83 * gamma over the 8-neighborhood), so clamped pixels can
    // never flip to the foreground side of a minimum cut.
    let hard = 9.0 * gamma;
    let mut net = FlowNetwork::new(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let z = image.get_pixel(x as u32, y as u32);
            let color = [z[0] as f64, z[1] as f64, z[2] as f64];
            match trimap.labels[[y, x]] {
                TrimapLabel::DefiniteBackground => net.set_terminal_caps(p, 0.0, hard),
                TrimapLabel::ProbableForeground => {
                    // Peaked mixtures (covariance near the floor) can give a
                    // negative log-likelihood below zero. Shifting both
                    // t-links of a pixel by a common offset leaves the
                    // min-cut partition unchanged, since every cut pays
                    // exactly one of the two.
                    let a = bg_gmm.nll(color);
                    let b = fg_gmm.nll(color);
                    let shift = a.min(b).min(0.0);
                    net.set_terminal_caps(p, a - shift, b - shift);
                }
            }
            for (dx, dy) in NEIGHBORS {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let zn = image.get_pixel(nx as u32, ny as u32);
                let mut d2 = 0.0;
                for c in 0..3 {
                    let d = z[c] as f64 - zn[c] as f64;
                    d2 += d * d;
                }
                let cap = gamma * (-beta * d2).exp() / neighbor_dist(dx, dy);
                net.add_n_link(p, ny as usize * w + nx as usize, cap);
            }
        }
    }
    net
}

/// Refines a binary ground-truth mask into a clean foreground mask G by
/// alternating GMM refits and min-cut solves until the assignment is stable
/// or `iterations` rounds have run. Definite-background pixels never flip to
/// foreground.
pub fn refine_mask(
    image: &RgbImage,
    gt_class_mask: &Array2<u8>,
    config: &GrabCutConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<u8>> {
    let (h, w) = gt_class_mask.dim();
    if (image.height() as usize, image.width() as usize) != (h, w) {
        return Err(Error::InvalidInput(format!(
            "image {}x{} and mask {h}x{w} disagree",
            image.height(),
            image.width()
        )));
    }
    if gt_class_mask.iter().any(|v| *v > 1) {
        return Err(Error::InvalidInput(
            "refine_mask expects a binary {0,1} mask".into(),
        ));
    }
    let fg_count = gt_class_mask.iter().filter(|v| **v == 1).count();
    let total = gt_class_mask.len();
    if fg_count == 0 {
        return Err(Error::DegenerateEpisode(
            "mask has no foreground pixels; skip this class for the tile".into(),
        ));
    }
    if (fg_count as f64) < config.min_fg_fraction * total as f64 {
        return Err(Error::DegenerateEpisode(format!(
            "foreground fraction {:.4} below minimum {:.4}",
            fg_count as f64 / total as f64,
            config.min_fg_fraction
        )));
    }
    if fg_count == total {
        return Err(Error::DegenerateEpisode(
            "mask has no background pixels".into(),
        ));
    }

    let trimap = Trimap::from_mask(gt_class_mask);
    let mut assignment = gt_class_mask.clone();
    if config.iterations == 0 {
        return Ok(assignment);
    }

    let colors = pixel_colors(image);
    for _ in 0..config.iterations {
        let fg_pixels: Vec<[f64; 3]> = colors
            .iter()
            .zip(assignment.iter())
            .filter(|(_, a)| **a == 1)
            .map(|(c, _)| *c)
            .collect();
        let bg_pixels: Vec<[f64; 3]> = colors
            .iter()
            .zip(assignment.iter())
            .filter(|(_, a)| **a == 0)
            .map(|(c, _)| *c)
            .collect();
        if fg_pixels.is_empty() || bg_pixels.is_empty() {
            break;
        }
        let fg_gmm = fit_gmm(&fg_pixels, config.components.min(fg_pixels.len()), rng)?;
        let bg_gmm = fit_gmm(&bg_pixels, config.components.min(bg_pixels.len()), rng)?;
        let net = build_graph(image, &trimap, &fg_gmm, &bg_gmm, config.gamma);
        let result = net.max_flow();
        let mut next = Array2::<u8>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                next[[y, x]] = u8::from(result.source_side[y * w + x]);
            }
        }
        if next == assignment {
            break;
        }
        assignment = next;
    }

    debug_assert!(assignment
        .iter()
        .zip(trimap.labels.iter())
        .all(|(a, t)| *a == 0 || *t == TrimapLabel::ProbableForeground));
    Ok(assignment)
}

#[cfg(test)]
mod tests;
