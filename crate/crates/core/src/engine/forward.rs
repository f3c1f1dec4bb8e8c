//! Assembly of one episode's forward pass on the tape: backbone features,
//! optional texture attention, prototype pooling, query prediction, and the
//! optional reverse-direction alignment loss.

use crate::backbone;
use crate::config::{AblationConfig, RunConfig};
use crate::dataio::{tile_to_tensor, Episode};
use crate::error::{Error, Result};
use crate::losses::par_loss;
use crate::params::Binding;
use crate::protoseg::{complement_leaf, mask_leaf, mean_vars, pooled_prototype_var};
use crate::tensor::{Tape, Var};
use crate::texture;
use ndarray::Array2;

/// The per-class binary masks of one support tile, post refinement policy:
/// `masks[c]` corresponds to `class_list[c]`.
#[derive(Debug, Clone)]
pub struct SupportMasks {
    pub per_class: Vec<Array2<u8>>,
}

impl SupportMasks {
    /// Union of all foreground class masks; its complement feeds the
    /// background prototype.
    pub fn union(&self) -> Array2<u8> {
        let mut out = self.per_class[0].clone();
        for m in &self.per_class[1..] {
            out.zip_mut_with(m, |o, v| *o = (*o).max(*v));
        }
        out
    }
}

pub struct ForwardOutput {
    pub l_seg: Var,
    pub l_par: Option<Var>,
    pub total: Var,
    /// Sorted episode class index per prototype row (background first).
    pub row_classes: Vec<u8>,
    /// Cosine distances of the query against the prototypes.
    pub query_distances: Var,
    /// Hard predicted query labels (argmin distance, ties to lowest class).
    pub predicted_labels: Array2<u8>,
}

/// Hard labels from a distance field value: per-pixel argmin with ties
/// broken toward the lowest class index.
pub fn labels_from_distances(values: &ndarray::ArrayD<f64>, row_classes: &[u8]) -> Array2<u8> {
    let shape = values.shape();
    let (j, h, w) = (shape[0], shape[1], shape[2]);
    let mut labels = Array2::<u8>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for ji in 0..j {
                let d = values[[ji, y, x]];
                if d < best_d {
                    best_d = d;
                    best = ji;
                }
            }
            labels[[y, x]] = row_classes[best];
        }
    }
    labels
}

/// Builds the full training loss for one episode. Support masks arrive
/// already refined (or raw, per the ablation flags); the query ground truth
/// is the episode's mask in episode class space.
pub fn episode_forward(
    tape: &mut Tape,
    binding: &Binding,
    config: &RunConfig,
    ablation: &AblationConfig,
    episode: &Episode,
    support_masks: &[SupportMasks],
) -> Result<ForwardOutput> {
    let k = episode.supports.len();
    assert_eq!(support_masks.len(), k);
    let class_list = &episode.class_list;
    let texture_class = config.data.texture_class;

    // Per-support features (shared by the forward and reverse passes).
    let mut support_features = Vec::with_capacity(k);
    for tile in &episode.supports {
        let img = tape.leaf(tile_to_tensor(tile));
        support_features.push(backbone::extract_features(
            tape,
            binding,
            &config.backbone,
            img,
        )?);
    }

    // Background prototype over the complement of the foreground union.
    let mut bg_rows = Vec::with_capacity(k);
    for (f_k, masks) in support_features.iter().zip(support_masks) {
        let union = masks.union();
        let complement_count: f64 = union.iter().map(|v| f64::from(1 - *v.min(&1))).sum();
        if complement_count == 0.0 {
            return Err(Error::DegenerateEpisode(
                "support tile fully foreground; resample".into(),
            ));
        }
        let comp = complement_leaf(tape, &union.view());
        bg_rows.push(pooled_prototype_var(tape, *f_k, comp, complement_count));
    }
    let mut rows = vec![mean_vars(tape, &bg_rows)];
    let mut row_classes = vec![0u8];

    // One foreground prototype per class; texture attention weights only the
    // texture class, and only when the forward direction carries attention.
    for (ci, &class) in class_list.iter().enumerate() {
        let mut class_rows = Vec::with_capacity(k);
        for ((tile, f_k), masks) in episode
            .supports
            .iter()
            .zip(&support_features)
            .zip(support_masks)
        {
            let g = &masks.per_class[ci];
            let mask_count: f64 = g.iter().map(|v| f64::from(*v.min(&1))).sum();
            if mask_count == 0.0 {
                return Err(Error::DegenerateEpisode(format!(
                    "support lost class {class} entirely; resample"
                )));
            }
            let g_leaf = mask_leaf(tape, &g.view());
            let row = if ablation.ta_in_s2q && class == texture_class {
                let gray = tape.leaf(texture::to_grayscale(&tile_to_tensor(tile)));
                let t = texture::texture_attention(
                    tape,
                    binding,
                    &config.texture,
                    gray,
                    tile.height(),
                    tile.width(),
                );
                let t_hat = tape.mul(t, g_leaf);
                if config.data.normalize_by_attention {
                    let denom = tape.sum_all(t_hat);
                    if tape.scalar(denom) <= 0.0 {
                        return Err(Error::DegenerateEpisode(
                            "attention mass is zero under the mask; resample".into(),
                        ));
                    }
                    let weighted = tape.mul_spatial(*f_k, t_hat);
                    let summed = tape.sum_spatial(weighted);
                    tape.div_scalar(summed, denom)
                } else {
                    pooled_prototype_var(tape, *f_k, t_hat, mask_count)
                }
            } else {
                pooled_prototype_var(tape, *f_k, g_leaf, mask_count)
            };
            class_rows.push(row);
        }
        rows.push(mean_vars(tape, &class_rows));
        row_classes.push(class);
    }
    let protos = tape.stack_rows(&rows);

    // Query prediction and segmentation loss.
    let query_img = tape.leaf(tile_to_tensor(&episode.query));
    let f_q = backbone::extract_features(tape, binding, &config.backbone, query_img)?;
    let dist = tape.cosine_distance(f_q, protos);
    let logits = tape.scale(dist, -config.train.alpha);

    let mut row_of_class = [None::<usize>; 256];
    for (ji, c) in row_classes.iter().enumerate() {
        row_of_class[*c as usize] = Some(ji);
    }
    let gt = &episode.query.mask;
    let mut target = Vec::with_capacity(gt.len());
    for v in gt.iter() {
        let Some(row) = row_of_class[*v as usize] else {
            return Err(Error::InvalidInput(format!(
                "query ground truth contains class {v} with no prototype"
            )));
        };
        target.push(row);
    }
    let valid = vec![true; target.len()];
    let l_seg = tape.softmax_cross_entropy(logits, target, valid);

    let predicted_labels = labels_from_distances(tape.value(dist), &row_classes);

    // Reverse direction: alignment regularization against raw support masks.
    let (l_par, total) = if ablation.use_q2s && config.train.lambda_par > 0.0 {
        let query_attention = if ablation.ta_in_q2s {
            let gray = tape.leaf(texture::to_grayscale(&tile_to_tensor(&episode.query)));
            Some(texture::texture_attention(
                tape,
                binding,
                &config.texture,
                gray,
                episode.query.height(),
                episode.query.width(),
            ))
        } else {
            None
        };
        let supports: Vec<(Var, Array2<u8>)> = support_features
            .iter()
            .zip(&episode.supports)
            .map(|(f, tile)| (*f, tile.mask.clone()))
            .collect();
        let l_par = par_loss(
            tape,
            f_q,
            &predicted_labels,
            &supports,
            class_list,
            config.train.alpha,
            query_attention,
            texture_class,
        );
        let total = tape.add_scaled(l_seg, l_par, config.train.lambda_par);
        (Some(l_par), total)
    } else {
        (None, l_seg)
    };

    Ok(ForwardOutput {
        l_seg,
        l_par,
        total,
        row_classes,
        query_distances: dist,
        predicted_labels,
    })
}
