//! Confusion-count aggregation and IoU/mIoU reporting.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use std::path::Path;

/// Pixel confusion counts over an evaluation run; rows index ground truth,
/// columns predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            counts: Array2::zeros((n_classes, n_classes)),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.dim().0
    }

    pub fn record(&mut self, gt: &ArrayView2<u8>, pred: &ArrayView2<u8>) {
        assert_eq!(gt.dim(), pred.dim());
        let n = self.n_classes();
        for (g, p) in gt.iter().zip(pred.iter()) {
            let (g, p) = (*g as usize, *p as usize);
            assert!(g < n && p < n, "class out of range for confusion matrix");
            self.counts[[g, p]] += 1;
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.counts += &other.counts;
    }

    /// Per-class IoU: `TP / (TP + FP + FN)`. A class absent from both ground
    /// truth and prediction has an undefined ratio; it is reported as 0.
    pub fn iou_per_class(&self) -> Vec<f64> {
        let n = self.n_classes();
        (0..n)
            .map(|c| {
                let tp = self.counts[[c, c]];
                let fn_: u64 = (0..n).filter(|p| *p != c).map(|p| self.counts[[c, p]]).sum();
                let fp: u64 = (0..n).filter(|g| *g != c).map(|g| self.counts[[g, c]]).sum();
                let denom = tp + fp + fn_;
                if denom == 0 {
                    0.0
                } else {
                    tp as f64 / denom as f64
                }
            })
            .collect()
    }

    pub fn miou(&self) -> f64 {
        let iou = self.iou_per_class();
        iou.iter().sum::<f64>() / iou.len() as f64
    }
}

/// Aggregated evaluation result.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub iou_per_class: Vec<f64>,
    pub miou: f64,
    pub episodes: usize,
    pub seed: u64,
    pub way: usize,
    pub shot: usize,
    /// Config echo (TOML) recorded alongside the numbers.
    pub config_echo: String,
}

impl MetricsReport {
    pub fn from_confusion(
        confusion: ConfusionMatrix,
        episodes: usize,
        seed: u64,
        way: usize,
        shot: usize,
        config_echo: String,
    ) -> Self {
        let iou_per_class = confusion.iou_per_class();
        let miou = confusion.miou();
        Self {
            confusion,
            iou_per_class,
            miou,
            episodes,
            seed,
            way,
            shot,
            config_echo,
        }
    }

    /// Machine-readable key=value text with the confusion matrix as
    /// comma-separated rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("episodes = {}\n", self.episodes));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("way = {}\n", self.way));
        out.push_str(&format!("shot = {}\n", self.shot));
        out.push_str(&format!("miou = {:.6}\n", self.miou));
        for (c, iou) in self.iou_per_class.iter().enumerate() {
            out.push_str(&format!("iou.{c} = {iou:.6}\n"));
        }
        let n = self.confusion.n_classes();
        for g in 0..n {
            let row: Vec<String> = (0..n)
                .map(|p| self.confusion.counts[[g, p]].to_string())
                .collect();
            out.push_str(&format!("confusion.{g} = {}\n", row.join(",")));
        }
        for line in self.config_echo.lines() {
            out.push_str(&format!("config. {line}\n"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn perfect_prediction_gives_unit_iou() {
        let gt = array![[0u8, 1], [1, 0]];
        let mut cm = ConfusionMatrix::new(2);
        cm.record(&gt.view(), &gt.view());
        assert_eq!(cm.iou_per_class(), vec![1.0, 1.0]);
        assert_eq!(cm.miou(), 1.0);
    }

    #[test]
    fn complement_prediction_gives_zero_iou() {
        let gt = array![[0u8, 1], [1, 0]];
        let pred = gt.mapv(|v| 1 - v);
        let mut cm = ConfusionMatrix::new(2);
        cm.record(&gt.view(), &pred.view());
        assert_eq!(cm.iou_per_class(), vec![0.0, 0.0]);
    }

    #[test]
    fn four_pixel_hand_example() {
        // pred = [1,1,0,0], gt = [1,0,1,0]: both classes have TP=1, FP=1,
        // FN=1, so IoU = 1/3 each and mIoU = 1/3.
        let gt = array![[1u8, 0, 1, 0]];
        let pred = array![[1u8, 1, 0, 0]];
        let mut cm = ConfusionMatrix::new(2);
        cm.record(&gt.view(), &pred.view());
        let iou = cm.iou_per_class();
        assert_abs_diff_eq!(iou[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(iou[1], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cm.miou(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn row_and_column_sums_match_counts() {
        let gt = array![[0u8, 1, 2], [2, 1, 0]];
        let pred = array![[0u8, 2, 2], [1, 1, 0]];
        let mut cm = ConfusionMatrix::new(3);
        cm.record(&gt.view(), &pred.view());
        for c in 0..3u8 {
            let gt_count = gt.iter().filter(|v| **v == c).count() as u64;
            let row: u64 = (0..3).map(|p| cm.counts[[c as usize, p]]).sum();
            assert_eq!(row, gt_count);
            let pred_count = pred.iter().filter(|v| **v == c).count() as u64;
            let col: u64 = (0..3).map(|g| cm.counts[[g, c as usize]]).sum();
            assert_eq!(col, pred_count);
        }
    }

    #[test]
    fn merge_equals_joint_recording() {
        let gt1 = array![[0u8, 1]];
        let pred1 = array![[1u8, 1]];
        let gt2 = array![[1u8, 0]];
        let pred2 = array![[1u8, 0]];

        let mut joint = ConfusionMatrix::new(2);
        joint.record(&gt1.view(), &pred1.view());
        joint.record(&gt2.view(), &pred2.view());

        let mut a = ConfusionMatrix::new(2);
        a.record(&gt1.view(), &pred1.view());
        let mut b = ConfusionMatrix::new(2);
        b.record(&gt2.view(), &pred2.view());
        a.merge(&b);
        assert_eq!(a, joint);
    }

    #[test]
    fn report_text_roundtrip_fields() {
        let mut cm = ConfusionMatrix::new(2);
        let gt = array![[0u8, 1]];
        cm.record(&gt.view(), &gt.view());
        let report = MetricsReport::from_confusion(cm, 1, 9, 1, 1, "train.seed = 9".into());
        let text = report.to_text();
        assert!(text.contains("miou = 1.000000"));
        assert!(text.contains("iou.1 = 1.000000"));
        assert!(text.contains("confusion.0 = 1,0"));
        assert!(text.contains("config. train.seed = 9"));
    }
}
