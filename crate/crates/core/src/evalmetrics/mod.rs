//! Image-level and point-level evaluation of probability maps.
//!
//! - Classification: each image is scored by the maximum of its map, and
//!   the scores are summarized by AUROC.
//! - Localization: the map is binarized at a sweep of thresholds, every
//!   8-connected component becomes a box, an annotation point counts as
//!   recalled when some box contains it, and a box is a false positive when
//!   fewer than 10% of its cells fall on the ground-truth disk mask.

mod components;
mod froc;
mod plot;
mod roc;

pub use components::{boxes_from_map, connected_components, Component, DetectionBox};
pub use froc::{
    default_thresholds, eval_images, froc, EvalImage, FrocCurve, FrocPoint, FP_INTERSECTION_FRACTION,
    FROC_FP_RATES, MAX_SWEEP_VALUES,
};
pub use plot::{froc_plot, froc_svg, roc_plot, roc_svg};
pub use roc::{auroc, roc_curve, RocCurve, RocPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Heatmap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallAt {
    pub fp_per_image: f64,
    pub recall: f64,
}

/// Headline numbers of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub auroc: f64,
    pub froc_score: f64,
    pub recall_at_01: f64,
    /// Recall at each of [`FROC_FP_RATES`].
    pub recall_at_rates: Vec<RecallAt>,
    pub images: usize,
    pub positives: usize,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub roc: RocCurve,
    pub froc: FrocCurve,
}

impl Evaluation {
    pub fn summary(&self, positives: usize) -> EvalSummary {
        EvalSummary {
            auroc: self.roc.auroc,
            froc_score: self.froc.froc_score,
            recall_at_01: self.froc.recall_at_01,
            recall_at_rates: FROC_FP_RATES
                .iter()
                .zip(self.froc.recall_at_rates)
                .map(|(&fp_per_image, recall)| RecallAt { fp_per_image, recall })
                .collect(),
            images: self.froc.total_images,
            positives,
            points: self.froc.total_points,
        }
    }
}

/// ROC over image scores and FROC over the default threshold sweep.
pub fn evaluate(images: &[EvalImage], disk_radius: f64) -> Result<Evaluation> {
    let scores = images.iter().map(|i| image_score(&i.map)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<bool> = images.iter().map(|i| !i.points.is_empty()).collect();
    let roc = roc_curve(&scores, &labels)?;
    let thresholds = default_thresholds(images.iter().map(|i| &i.map));
    let froc = froc(images, disk_radius, &thresholds)?;
    Ok(Evaluation { roc, froc })
}

/// Image-level score: the maximum response of the map.
pub fn image_score(map: &Heatmap) -> Result<f64> {
    map.max()
        .ok_or_else(|| Error::Contract("cannot score an empty map".into()))
}
