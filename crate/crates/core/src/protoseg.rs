//! Prototype construction from supports and cosine-metric query prediction.
//!
//! The foreground prototype weights each support pixel's feature vector by
//! the texture attention restricted to the refined mask, then normalizes by
//! the unweighted mask sum; the background prototype is plain masked average
//! pooling over the mask complement. Prediction softmaxes `-alpha * dist`
//! per pixel, with cosine distance `1 - cos`.
//!
//! Everything here exists in two registers: plain array functions (used at
//! evaluation time and pinned by the loop oracles in the tests) and tape
//! compositions of the same arithmetic for the training pass.

use crate::error::{Error, Result};
use crate::tensor::{Diagnostics, Tape, Var};
use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayView3};

/// A class-labeled embedding vector.
#[derive(Debug, Clone)]
pub struct Prototype {
    pub class_index: u8,
    pub vector: Array1<f64>,
}

/// Per-class, per-pixel cosine distances in `[0, 2]`.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub class_indices: Vec<u8>,
    pub values: Array3<f64>,
}

/// Softmax probabilities and their argmax labels. Ties break toward the
/// lowest class index.
#[derive(Debug, Clone)]
pub struct PredictedMask {
    pub labels: Array2<u8>,
    pub probabilities: Array3<f64>,
    pub class_indices: Vec<u8>,
}

/// Eq.-style texture weighting: `T_hat = T(x, y) * G(x, y)`.
pub fn apply_texture_attention(t: &ArrayView2<f64>, g: &ArrayView2<u8>) -> Result<Array2<f64>> {
    if t.dim() != g.dim() {
        return Err(Error::InvalidInput(format!(
            "attention {:?} and mask {:?} resolutions differ",
            t.dim(),
            g.dim()
        )));
    }
    let mut out = t.to_owned();
    out.zip_mut_with(g, |tv, gv| *tv *= f64::from(*gv));
    Ok(out)
}

/// Texture-weighted foreground prototype over K supports:
/// `(1/K) sum_k [ sum_xy T_hat_k F_k / sum_xy G_k ]`.
/// When `normalize_by_attention` is set, the denominator becomes
/// `sum_xy T_hat_k` instead of the mask sum.
pub fn foreground_prototype(
    supports: &[(ArrayView3<f64>, Array2<f64>, Array2<u8>)],
    normalize_by_attention: bool,
) -> Result<Array1<f64>> {
    assert!(!supports.is_empty());
    let d = supports[0].0.dim().0;
    let mut acc = Array1::<f64>::zeros(d);
    for (f, t_hat, g) in supports {
        let (fd, fh, fw) = f.dim();
        assert_eq!(fd, d, "feature widths differ across supports");
        assert_eq!((fh, fw), g.dim(), "feature/mask resolution mismatch");
        let mask_sum: f64 = g.iter().map(|v| f64::from(*v)).sum();
        if mask_sum == 0.0 {
            return Err(Error::DegenerateEpisode(
                "support has an empty foreground mask; resample the episode".into(),
            ));
        }
        let denom = if normalize_by_attention {
            let s: f64 = t_hat.sum();
            if s <= 0.0 {
                return Err(Error::DegenerateEpisode(
                    "attention-normalized prototype has zero attention mass".into(),
                ));
            }
            s
        } else {
            mask_sum
        };
        for (di, slot) in acc.iter_mut().enumerate() {
            let mut num = 0.0;
            for y in 0..fh {
                for x in 0..fw {
                    num += t_hat[[y, x]] * f[[di, y, x]];
                }
            }
            *slot += num / denom;
        }
    }
    Ok(acc / supports.len() as f64)
}

/// Background prototype: plain masked average pooling over the complement
/// `G' = !G` of the (union) foreground mask.
pub fn background_prototype(supports: &[(ArrayView3<f64>, Array2<u8>)]) -> Result<Array1<f64>> {
    assert!(!supports.is_empty());
    let d = supports[0].0.dim().0;
    let mut acc = Array1::<f64>::zeros(d);
    for (f, g) in supports {
        let (fd, fh, fw) = f.dim();
        assert_eq!(fd, d);
        assert_eq!((fh, fw), g.dim());
        let complement_sum: f64 = g.iter().map(|v| f64::from(1 - *v.min(&1))).sum();
        if complement_sum == 0.0 {
            return Err(Error::DegenerateEpisode(
                "support tile is fully foreground; resample the episode".into(),
            ));
        }
        for di in 0..d {
            let mut num = 0.0;
            for y in 0..fh {
                for x in 0..fw {
                    if g[[y, x]] == 0 {
                        num += f[[di, y, x]];
                    }
                }
            }
            acc[di] += num / complement_sum;
        }
    }
    Ok(acc / supports.len() as f64)
}

/// Cosine distance field against a sorted prototype list.
pub fn distance_field(
    f_q: &ArrayView3<f64>,
    prototypes: &[Prototype],
    diagnostics: &mut Diagnostics,
) -> DistanceField {
    let (d, h, w) = f_q.dim();
    let j = prototypes.len();
    let mut values = Array3::<f64>::zeros((j, h, w));
    for y in 0..h {
        for x in 0..w {
            let mut fnorm2 = 0.0;
            for di in 0..d {
                fnorm2 += f_q[[di, y, x]] * f_q[[di, y, x]];
            }
            let fnorm = fnorm2.sqrt();
            for (ji, proto) in prototypes.iter().enumerate() {
                let pnorm = proto.vector.dot(&proto.vector).sqrt();
                if fnorm < 1e-12 || pnorm < 1e-12 {
                    values[[ji, y, x]] = 2.0;
                    diagnostics.zero_norm_distances += 1;
                    continue;
                }
                let mut dot = 0.0;
                for di in 0..d {
                    dot += proto.vector[di] * f_q[[di, y, x]];
                }
                values[[ji, y, x]] = 1.0 - dot / (pnorm * fnorm);
            }
        }
    }
    DistanceField {
        class_indices: prototypes.iter().map(|p| p.class_index).collect(),
        values,
    }
}

/// Softmax of `-alpha * dist` per pixel plus argmax labels.
pub fn predict_mask(
    f_q: &ArrayView3<f64>,
    prototypes: &[Prototype],
    alpha: f64,
    diagnostics: &mut Diagnostics,
) -> Result<PredictedMask> {
    if alpha <= 0.0 {
        return Err(Error::InvalidInput("alpha must be positive".into()));
    }
    if prototypes.len() < 2 {
        return Err(Error::InvalidInput(
            "prediction needs at least two prototypes".into(),
        ));
    }
    if prototypes.windows(2).any(|w| w[0].class_index >= w[1].class_index) {
        return Err(Error::InvalidInput(
            "prototypes must be sorted by class index".into(),
        ));
    }
    let field = distance_field(f_q, prototypes, diagnostics);
    let (j, h, w) = field.values.dim();
    let mut probabilities = Array3::<f64>::zeros((j, h, w));
    let mut labels = Array2::<u8>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut max_logit = f64::NEG_INFINITY;
            for ji in 0..j {
                max_logit = max_logit.max(-alpha * field.values[[ji, y, x]]);
            }
            let mut denom = 0.0;
            for ji in 0..j {
                denom += (-alpha * field.values[[ji, y, x]] - max_logit).exp();
            }
            let mut best = 0usize;
            let mut best_p = f64::NEG_INFINITY;
            for ji in 0..j {
                let p = (-alpha * field.values[[ji, y, x]] - max_logit).exp() / denom;
                probabilities[[ji, y, x]] = p;
                if p > best_p {
                    best_p = p;
                    best = ji;
                }
            }
            labels[[y, x]] = field.class_indices[best];
        }
    }
    Ok(PredictedMask {
        labels,
        probabilities,
        class_indices: field.class_indices,
    })
}

/// Mean per-pixel cross-entropy of predicted probabilities against the
/// ground-truth episode class mask.
pub fn segmentation_loss(pred: &PredictedMask, gt: &ArrayView2<u8>) -> Result<f64> {
    let (j, h, w) = pred.probabilities.dim();
    if gt.dim() != (h, w) {
        return Err(Error::InvalidInput(format!(
            "prediction {h}x{w} and ground truth {:?} disagree",
            gt.dim()
        )));
    }
    let mut row_of_class = [None::<usize>; 256];
    for (ji, c) in pred.class_indices.iter().enumerate() {
        row_of_class[*c as usize] = Some(ji);
    }
    let mut loss = 0.0;
    for y in 0..h {
        for x in 0..w {
            let class = gt[[y, x]];
            let Some(row) = row_of_class[class as usize] else {
                return Err(Error::InvalidInput(format!(
                    "ground truth class {class} has no prototype"
                )));
            };
            debug_assert!(row < j);
            loss -= pred.probabilities[[row, y, x]].max(f64::MIN_POSITIVE).ln();
        }
    }
    Ok(loss / (h * w) as f64)
}

/// Tape-side masked weighted pooling: `sum_xy(weight * F) / denom`.
/// `weight` is an `H x W` variable; `denom` is a constant.
pub fn pooled_prototype_var(tape: &mut Tape, features: Var, weight: Var, denom: f64) -> Var {
    let weighted = tape.mul_spatial(features, weight);
    let summed = tape.sum_spatial(weighted);
    tape.scale(summed, 1.0 / denom)
}

/// Mean of same-shaped variables (per-support prototypes or losses).
pub fn mean_vars(tape: &mut Tape, vars: &[Var]) -> Var {
    assert!(!vars.is_empty());
    let mut acc = vars[0];
    for v in &vars[1..] {
        acc = tape.add(acc, *v);
    }
    tape.scale(acc, 1.0 / vars.len() as f64)
}

/// Binary mask as an `H x W` leaf of 0.0/1.0 weights.
pub fn mask_leaf(tape: &mut Tape, mask: &ArrayView2<u8>) -> Var {
    let arr = mask.mapv(|v| f64::from(v.min(1)));
    tape.leaf(arr.into_dyn())
}

/// Complement mask leaf (`!G`).
pub fn complement_leaf(tape: &mut Tape, mask: &ArrayView2<u8>) -> Var {
    let arr = mask.mapv(|v| f64::from(1 - v.min(1)));
    tape.leaf(arr.into_dyn())
}
