//! Gaussian mixture color models fitted by seeded k-means plus
//! reassignment refinement.

use crate::error::{Error, Result};
use rand::seq::index::sample as index_sample;
use rand_chacha::ChaCha8Rng;

/// Added to every empirical covariance so the matrix stays positive-definite.
pub const COV_FLOOR: f64 = 1e-4;

const KMEANS_ITERS: usize = 10;
const REASSIGN_ROUNDS: usize = 2;
/// Densities are floored here so negative log-likelihoods stay finite.
const MIN_DENSITY: f64 = 1e-280;

#[derive(Debug, Clone)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: [f64; 3],
    pub cov: [[f64; 3]; 3],
    inv_cov: [[f64; 3]; 3],
    /// log((2 pi)^(3/2) sqrt(det)) of the floored covariance.
    log_norm: f64,
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inv3(m: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let d = 1.0 / det;
    [
        [
            (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * d,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * d,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * d,
        ],
        [
            (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * d,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * d,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * d,
        ],
        [
            (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * d,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * d,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * d,
        ],
    ]
}

impl GmmComponent {
    /// Builds a component from explicit moments; the covariance is used as
    /// given (callers must ensure it is positive-definite).
    pub fn new(weight: f64, mean: [f64; 3], cov: [[f64; 3]; 3]) -> Self {
        let det = det3(&cov);
        assert!(det > 0.0, "covariance must be positive-definite");
        let inv_cov = inv3(&cov, det);
        let log_norm = 1.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * det.ln();
        Self {
            weight,
            mean,
            cov,
            inv_cov,
            log_norm,
        }
    }

    fn from_cluster(pixels: &[[f64; 3]], members: &[usize], weight: f64) -> Self {
        let n = members.len() as f64;
        let mut mean = [0.0; 3];
        for &i in members {
            for c in 0..3 {
                mean[c] += pixels[i][c];
            }
        }
        for c in mean.iter_mut() {
            *c /= n;
        }
        let mut cov = [[0.0; 3]; 3];
        for &i in members {
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += (pixels[i][a] - mean[a]) * (pixels[i][b] - mean[b]);
                }
            }
        }
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        for c in 0..3 {
            cov[c][c] += COV_FLOOR;
        }
        let det = det3(&cov);
        let inv_cov = inv3(&cov, det);
        let log_norm = 1.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * det.ln();
        Self {
            weight,
            mean,
            cov,
            inv_cov,
            log_norm,
        }
    }

    /// Gaussian density at `color`.
    pub fn density(&self, color: [f64; 3]) -> f64 {
        let d = [
            color[0] - self.mean[0],
            color[1] - self.mean[1],
            color[2] - self.mean[2],
        ];
        let mut quad = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                quad += d[a] * self.inv_cov[a][b] * d[b];
            }
        }
        (-0.5 * quad - self.log_norm).exp()
    }
}

impl GmmModel {
    /// Mixture density at `color`.
    pub fn density(&self, color: [f64; 3]) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.density(color))
            .sum()
    }

    /// Negative log-likelihood, floored so it stays finite.
    pub fn nll(&self, color: [f64; 3]) -> f64 {
        -self.density(color).max(MIN_DENSITY).ln()
    }

    /// Index of the most likely component for `color` (ties to lowest index).
    pub fn most_likely_component(&self, color: [f64; 3]) -> usize {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (i, c) in self.components.iter().enumerate() {
            let p = c.weight * c.density(color);
            if p > best_p {
                best_p = p;
                best = i;
            }
        }
        best
    }
}

fn sq_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn components_from_assignment(pixels: &[[f64; 3]], assignment: &[usize], k: usize) -> GmmModel {
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        clusters[a].push(i);
    }
    let total = pixels.len() as f64;
    let components = clusters
        .iter()
        .filter(|members| !members.is_empty())
        .map(|members| {
            GmmComponent::from_cluster(pixels, members, members.len() as f64 / total)
        })
        .collect();
    GmmModel { components }
}

/// Fits a k-component mixture: seeded k-means initialization followed by
/// hard reassignment to the most likely component and refitting.
pub fn fit_gmm(pixels: &[[f64; 3]], k: usize, rng: &mut ChaCha8Rng) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::InvalidInput("gmm needs at least one component".into()));
    }
    if pixels.len() < k {
        return Err(Error::InvalidInput(format!(
            "{} pixels cannot support {k} mixture components; use a smaller k",
            pixels.len()
        )));
    }

    // k-means with random distinct seeds.
    let mut centers: Vec<[f64; 3]> = index_sample(rng, pixels.len(), k)
        .iter()
        .map(|i| pixels[i])
        .collect();
    let mut assignment = vec![0usize; pixels.len()];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (i, px) in pixels.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (ci, center) in centers.iter().enumerate() {
                let d = sq_dist(*px, *center);
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (i, px) in pixels.iter().enumerate() {
            let a = assignment[i];
            counts[a] += 1;
            for c in 0..3 {
                sums[a][c] += px[c];
            }
        }
        for ci in 0..k {
            if counts[ci] > 0 {
                for c in 0..3 {
                    centers[ci][c] = sums[ci][c] / counts[ci] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut model = components_from_assignment(pixels, &assignment, k);
    for _ in 0..REASSIGN_ROUNDS {
        let reassigned: Vec<usize> = pixels
            .iter()
            .map(|px| model.most_likely_component(*px))
            .collect();
        model = components_from_assignment(pixels, &reassigned, model.components.len());
    }
    Ok(model)
}
