//! Loss assembly: segmentation cross-entropy plus the prototype alignment
//! regularizer, which runs the episode in reverse (query-to-support) from
//! the hard predicted query labels.

use crate::error::{Error, Result};
use crate::protoseg::{mean_vars, mask_leaf, pooled_prototype_var};
use crate::tensor::{Tape, Var};
use ndarray::Array2;
use serde::Serialize;

/// Components of one training step's loss.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossBreakdown {
    pub l_seg: f64,
    pub l_par: f64,
    pub lambda_par: f64,
    pub total: f64,
}

/// `total = l_seg + lambda_par * l_par`.
pub fn total_loss(l_seg: f64, l_par: f64, lambda_par: f64) -> Result<LossBreakdown> {
    if lambda_par < 0.0 {
        return Err(Error::InvalidInput("lambda_par must be >= 0".into()));
    }
    if !l_seg.is_finite() || !l_par.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss components: l_seg={l_seg}, l_par={l_par}"
        )));
    }
    Ok(LossBreakdown {
        l_seg,
        l_par,
        lambda_par,
        total: l_seg + lambda_par * l_par,
    })
}

/// Prototype alignment regularization: builds prototypes from the query
/// features under its hard predicted labels (plain masked average pooling,
/// optionally texture-weighted for the texture class when the reverse
/// direction carries attention), segments every support against them, and
/// returns the mean cross-entropy against the raw support ground truth.
///
/// Classes absent from the predicted query mask have no prototype; they are
/// skipped for this episode (their ground-truth pixels drop out of the mean)
/// and counted in the tape diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn par_loss(
    tape: &mut Tape,
    query_features: Var,
    predicted_labels: &Array2<u8>,
    supports: &[(Var, Array2<u8>)],
    class_list: &[u8],
    alpha: f64,
    query_attention: Option<Var>,
    texture_class: u8,
) -> Var {
    assert!(!supports.is_empty());

    let mut all_classes: Vec<u8> = vec![0];
    all_classes.extend_from_slice(class_list);
    all_classes.sort_unstable();
    all_classes.dedup();

    let mut rows: Vec<Var> = Vec::new();
    let mut row_classes: Vec<u8> = Vec::new();
    for &class in &all_classes {
        let class_mask = predicted_labels.mapv(|v| u8::from(v == class));
        let count: f64 = class_mask.iter().map(|v| f64::from(*v)).sum();
        if count == 0.0 {
            tape.diagnostics.par_skipped_classes += 1;
            continue;
        }
        let mask_var = mask_leaf(tape, &class_mask.view());
        let weight = match query_attention {
            Some(att) if class == texture_class => tape.mul(att, mask_var),
            _ => mask_var,
        };
        rows.push(pooled_prototype_var(tape, query_features, weight, count));
        row_classes.push(class);
    }
    debug_assert!(!rows.is_empty(), "prediction always contains some label");
    let protos = tape.stack_rows(&rows);

    let mut row_of_class = [None::<usize>; 256];
    for (ji, c) in row_classes.iter().enumerate() {
        row_of_class[*c as usize] = Some(ji);
    }

    let mut per_support: Vec<Var> = Vec::new();
    for (f_k, gt) in supports {
        let dist = tape.cosine_distance(*f_k, protos);
        let logits = tape.scale(dist, -alpha);
        let mut target = Vec::with_capacity(gt.len());
        let mut valid = Vec::with_capacity(gt.len());
        for v in gt.iter() {
            match row_of_class[*v as usize] {
                Some(row) => {
                    target.push(row);
                    valid.push(true);
                }
                None => {
                    target.push(0);
                    valid.push(false);
                }
            }
        }
        per_support.push(tape.softmax_cross_entropy(logits, target, valid));
    }
    mean_vars(tape, &per_support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn total_loss_arithmetic() {
        let lb = total_loss(0.5, 0.3, 1.0).unwrap();
        assert_abs_diff_eq!(lb.total, 0.8, epsilon = 1e-15);

        let lb = total_loss(1.0, 0.25, 2.0).unwrap();
        assert_abs_diff_eq!(lb.total, 1.5, epsilon = 1e-15);

        // PAR disabled reduces to the segmentation loss alone.
        let lb = total_loss(0.7, 123.0, 0.0).unwrap();
        assert_abs_diff_eq!(lb.total, 0.7, epsilon = 1e-15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(total_loss(0.5, 0.5, -1.0).is_err());
        assert!(total_loss(f64::NAN, 0.0, 1.0).is_err());
        assert!(total_loss(0.0, f64::INFINITY, 1.0).is_err());
    }

    use ndarray::{array, ArrayD, IxDyn};

    fn feature_leaf(tape: &mut Tape, values: [[f64; 2]; 4]) -> Var {
        // D=2, 2x2 map: values[d*2+y][x].
        let mut arr = ArrayD::<f64>::zeros(IxDyn(&[2, 2, 2]));
        for d in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    arr[[d, y, x]] = values[d * 2 + y][x];
                }
            }
        }
        tape.leaf(arr)
    }

    /// End-to-end scalar hand computation of the reverse pass on a tiny
    /// episode: D=2, one support, 2x2 maps.
    #[test]
    fn par_loss_matches_hand_computed_reverse_pass() {
        let mut tape = Tape::new();
        // Query features: channel 0 = [[2,0],[0,0]], channel 1 = [[0,3],[3,3]].
        let f_q = feature_leaf(&mut tape, [[2.0, 0.0], [0.0, 0.0], [0.0, 3.0], [3.0, 3.0]]);
        // Predicted query labels: pixel (0,0) forest, rest background.
        let predicted = array![[1u8, 0], [0, 0]];
        // Support features identical to the query; support GT equals the
        // predicted query mask.
        let f_s = feature_leaf(&mut tape, [[2.0, 0.0], [0.0, 0.0], [0.0, 3.0], [3.0, 3.0]]);
        let gt = predicted.clone();

        let alpha = 2.0;
        let loss = par_loss(
            &mut tape,
            f_q,
            &predicted,
            &[(f_s, gt)],
            &[1],
            alpha,
            None,
            1,
        );

        // Hand computation:
        // forest prototype = F_q(0,0) = (2, 0); bg prototype = mean of the
        // three bg pixels = ((0+0+0)/3, (3+3+3)/3) = (0, 3).
        // Support pixel (0,0) = (2,0): cos to forest = 1, to bg = 0.
        //   logits: -alpha*0 = 0 (forest), -alpha*1 = -2 (bg).
        //   p_forest = e^0 / (e^0 + e^-2).
        // Other pixels (0,3): cos to forest = 0, to bg = 1.
        //   p_bg = e^0 / (e^0 + e^-2).
        let p_correct = 1.0 / (1.0 + (-2.0f64).exp());
        let expected = -(p_correct.ln()) * 4.0 / 4.0;
        assert_abs_diff_eq!(tape.scalar(loss), expected, epsilon = 1e-12);
    }

    /// All-background prediction: the forest prototype is undefined, the
    /// class is skipped, and the loss runs over background alone (softmax
    /// over one row is a point mass, so the loss is exactly zero).
    #[test]
    fn par_loss_skips_missing_classes() {
        let mut tape = Tape::new();
        let f_q = feature_leaf(&mut tape, [[2.0, 1.0], [1.0, 1.0], [0.0, 3.0], [3.0, 3.0]]);
        let predicted = array![[0u8, 0], [0, 0]];
        let f_s = feature_leaf(&mut tape, [[2.0, 1.0], [1.0, 1.0], [0.0, 3.0], [3.0, 3.0]]);
        let gt = array![[1u8, 0], [0, 0]];

        let loss = par_loss(&mut tape, f_q, &predicted, &[(f_s, gt)], &[1], 20.0, None, 1);
        assert_eq!(tape.diagnostics.par_skipped_classes, 1);
        assert_abs_diff_eq!(tape.scalar(loss), 0.0, epsilon = 1e-12);
    }

    /// L_PAR is invariant to support order.
    #[test]
    fn par_loss_support_order_invariant() {
        let build = |order: [usize; 2]| {
            let mut tape = Tape::new();
            let f_q = feature_leaf(&mut tape, [[2.0, 0.5], [0.1, 0.4], [0.3, 3.0], [2.5, 3.1]]);
            let predicted = array![[1u8, 0], [0, 1]];
            let s0 = (
                feature_leaf(&mut tape, [[1.9, 0.2], [0.3, 0.1], [0.2, 2.8], [2.2, 3.0]]),
                array![[1u8, 0], [0, 0]],
            );
            let s1 = (
                feature_leaf(&mut tape, [[0.2, 2.1], [2.4, 0.3], [3.1, 0.2], [0.1, 2.9]]),
                array![[0u8, 1], [1, 0]],
            );
            let pair = [s0, s1];
            let supports = [pair[order[0]].clone(), pair[order[1]].clone()];
            let loss = par_loss(&mut tape, f_q, &predicted, &supports, &[1], 20.0, None, 1);
            tape.scalar(loss)
        };
        assert_abs_diff_eq!(build([0, 1]), build([1, 0]), epsilon = 1e-12);
    }
}
