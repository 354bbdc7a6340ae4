use std::collections::BTreeSet;

use super::components::boxes_from_map;
use crate::annotations::{Dataset, Point, Split};
use crate::error::{Error, Result};
use crate::grid::Heatmap;
use crate::supervision::{cell_of, disk_mask};

/// False-positive rates (per image) averaged into the FROC score.
pub const FROC_FP_RATES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

/// A box is a false positive when less than this fraction of it lies on the
/// disk mask.
pub const FP_INTERSECTION_FRACTION: f64 = 0.10;

/// Cap on the number of map values used as sweep thresholds.
pub const MAX_SWEEP_VALUES: usize = 512;

/// A heatmap paired with its annotation points in model-input space.
/// `scale` is the number of input pixels per map cell.
#[derive(Debug, Clone)]
pub struct EvalImage {
    pub map: Heatmap,
    pub points: Vec<Point>,
    pub scale: f64,
}

/// Pairs maps with the records of `split`, in manifest order.
pub fn eval_images(dataset: &Dataset, split: Split, maps: Vec<Heatmap>) -> Result<Vec<EvalImage>> {
    let records: Vec<_> = dataset.split(split).collect();
    if records.len() != maps.len() {
        return Err(Error::Contract(format!(
            "{} maps for {} {split} records",
            maps.len(),
            records.len()
        )));
    }
    Ok(records
        .into_iter()
        .zip(maps)
        .map(|(rec, map)| {
            let scale = dataset.input_size as f64 / map.cols() as f64;
            EvalImage {
                points: rec.input_points(dataset.input_size),
                map,
                scale,
            }
        })
        .collect())
}

/// Sweep thresholds in descending order: the distinct map values (evenly
/// subsampled to at most [`MAX_SWEEP_VALUES`]) merged with the grid
/// `0, 0.05, …, 1`.
pub fn default_thresholds<'a>(maps: impl IntoIterator<Item = &'a Heatmap>) -> Vec<f64> {
    let mut distinct: Vec<f64> = maps
        .into_iter()
        .flat_map(|m| m.values().iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    let picked: Vec<f64> = if distinct.len() > MAX_SWEEP_VALUES {
        let last = distinct.len() - 1;
        (0..MAX_SWEEP_VALUES)
            .map(|k| distinct[k * last / (MAX_SWEEP_VALUES - 1)])
            .collect()
    } else {
        distinct
    };
    let mut set: BTreeSet<u64> = picked.iter().map(|v| v.to_bits()).collect();
    for k in 0..=20 {
        set.insert((k as f64 / 20.0).to_bits());
    }
    // non-negative floats order like their bit patterns
    let mut out: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    if out.iter().any(|v| *v < 0.0) {
        out.sort_by(|a, b| b.total_cmp(a));
    } else {
        out.reverse();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrocPoint {
    pub threshold: f64,
    /// Running maximum of the raw rate over this and all higher thresholds.
    pub fp_per_image: f64,
    /// False-positive boxes per image at exactly this threshold.
    pub raw_fp_per_image: f64,
    pub recall: f64,
    pub false_positives: usize,
    pub recalled_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrocCurve {
    /// One point per threshold, thresholds descending.
    pub points: Vec<FrocPoint>,
    /// Recall at each rate of [`FROC_FP_RATES`].
    pub recall_at_rates: [f64; 5],
    pub froc_score: f64,
    pub recall_at_01: f64,
    pub total_points: usize,
    pub total_images: usize,
}

impl FrocCurve {
    /// Recall of the last operating point (in descending-threshold order)
    /// whose false-positive rate does not exceed `rate`; zero if even the
    /// first point exceeds it.
    pub fn recall_at(&self, rate: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.fp_per_image <= rate)
            .last()
            .map_or(0.0, |p| p.recall)
    }
}

struct Prepared {
    // (rows + 1) x (cols + 1) inclusive prefix sums of the disk mask
    mask_prefix: Vec<u32>,
    point_cells: Vec<(usize, usize)>,
}

impl Prepared {
    fn new(img: &EvalImage, disk_radius: f64) -> Self {
        let (rows, cols) = img.map.shape();
        let mask = disk_mask(&img.points, rows, cols, img.scale, disk_radius);
        let w = cols + 1;
        let mut prefix = vec![0u32; (rows + 1) * w];
        for r in 0..rows {
            for c in 0..cols {
                prefix[(r + 1) * w + c + 1] = prefix[r * w + c + 1] + prefix[(r + 1) * w + c]
                    - prefix[r * w + c]
                    + u32::from(mask.get(r, c) != 0.0);
            }
        }
        let point_cells = img
            .points
            .iter()
            .map(|&p| cell_of(p, img.scale, rows, cols))
            .collect();
        Self {
            mask_prefix: prefix,
            point_cells,
        }
    }

    fn mask_count(&self, cols: usize, y0: usize, x0: usize, y1: usize, x1: usize) -> u32 {
        let w = cols + 1;
        let p = &self.mask_prefix;
        p[y1 * w + x1] + p[y0 * w + x0] - p[y0 * w + x1] - p[y1 * w + x0]
    }
}

/// Free-response ROC over a threshold sweep.
///
/// `thresholds` must be in descending order. Every image, negatives
/// included, counts toward the per-image false-positive rate.
pub fn froc(images: &[EvalImage], disk_radius: f64, thresholds: &[f64]) -> Result<FrocCurve> {
    if thresholds.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Contract("FROC thresholds must be sorted descending".into()));
    }
    if !(disk_radius > 0.0) {
        return Err(Error::Contract(format!("disk radius must be positive, got {disk_radius}")));
    }
    let total_points: usize = images.iter().map(|i| i.points.len()).sum();
    if total_points == 0 {
        return Err(Error::NoAnnotations);
    }
    let total_images = images.len();
    let prepared: Vec<Prepared> = images.iter().map(|i| Prepared::new(i, disk_radius)).collect();

    let mut points = Vec::with_capacity(thresholds.len());
    let mut envelope = 0.0f64;
    for &t in thresholds {
        let mut fps = 0usize;
        let mut recalled = 0usize;
        for (img, prep) in images.iter().zip(&prepared) {
            let boxes = boxes_from_map(&img.map, t);
            let cols = img.map.cols();
            for b in &boxes {
                let inter = prep.mask_count(cols, b.y0, b.x0, b.y1, b.x1) as f64;
                if inter < FP_INTERSECTION_FRACTION * b.area() as f64 {
                    fps += 1;
                }
            }
            recalled += prep
                .point_cells
                .iter()
                .filter(|&&(r, c)| boxes.iter().any(|b| b.contains(r, c)))
                .count();
        }
        let raw = fps as f64 / total_images as f64;
        envelope = envelope.max(raw);
        points.push(FrocPoint {
            threshold: t,
            fp_per_image: envelope,
            raw_fp_per_image: raw,
            recall: recalled as f64 / total_points as f64,
            false_positives: fps,
            recalled_points: recalled,
        });
    }

    let mut curve = FrocCurve {
        points,
        recall_at_rates: [0.0; 5],
        froc_score: 0.0,
        recall_at_01: 0.0,
        total_points,
        total_images,
    };
    for (slot, &rate) in curve.recall_at_rates.iter_mut().zip(&FROC_FP_RATES) {
        *slot = curve.points.iter().take_while(|p| p.fp_per_image <= rate).last().map_or(0.0, |p| p.recall);
    }
    curve.froc_score = curve.recall_at_rates.iter().sum::<f64>() / FROC_FP_RATES.len() as f64;
    curve.recall_at_01 = curve.recall_at_rates[0];
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(map: Heatmap, points: Vec<Point>) -> EvalImage {
        EvalImage { map, points, scale: 1.0 }
    }

    #[test]
    fn single_hit() {
        let mut map = Heatmap::zeros(20, 20);
        for r in 8..12 {
            for c in 8..12 {
                map.set(r, c, 0.8);
            }
        }
        let curve = froc(&[image(map, vec![Point::new(10.0, 10.0)])], 3.0, &[0.5]).unwrap();
        assert_eq!(curve.points[0].fp_per_image, 0.0);
        assert_eq!(curve.points[0].recall, 1.0);
    }

    #[test]
    fn ten_percent_rule() {
        let mut map = Heatmap::zeros(30, 30);
        for r in 10..20 {
            for c in 10..20 {
                map.set(r, c, 1.0);
            }
        }
        // radius 1.5 around a lattice point is a 3x3 block: 9 of 100 cells
        let img = image(map.clone(), vec![Point::new(11.0, 11.0)]);
        assert_eq!(Prepared::new(&img, 1.5).mask_count(30, 10, 10, 20, 20), 9);
        let c = froc(&[img], 1.5, &[0.5]).unwrap();
        assert_eq!(c.points[0].false_positives, 1);
        assert_eq!(c.points[0].recall, 1.0);

        // radius 2.3 covers 21 cells, comfortably above 10%
        let c = froc(&[image(map, vec![Point::new(12.0, 12.0)])], 2.3, &[0.5]).unwrap();
        assert_eq!(c.points[0].false_positives, 0);
    }

    #[test]
    fn negatives_contribute_fps() {
        let mut hot = Heatmap::zeros(10, 10);
        hot.set(5, 5, 0.9);
        let pos = image(hot.clone(), vec![Point::new(5.0, 5.0)]);
        let neg = image(hot, vec![]);
        let c = froc(&[pos, neg], 2.0, &[0.5]).unwrap();
        assert_eq!(c.points[0].false_positives, 1);
        assert_eq!(c.points[0].fp_per_image, 0.5);
        assert_eq!(c.total_images, 2);
    }

    #[test]
    fn no_points_is_error() {
        let c = froc(&[image(Heatmap::zeros(4, 4), vec![])], 2.0, &[0.5]);
        assert!(matches!(c, Err(Error::NoAnnotations)));
    }

    #[test]
    fn unsorted_thresholds_rejected() {
        let img = image(Heatmap::zeros(4, 4), vec![Point::new(1.0, 1.0)]);
        assert!(froc(&[img], 2.0, &[0.2, 0.5]).is_err());
    }

    #[test]
    fn step_interpolation_is_conservative() {
        let pts = |fp: f64, recall: f64| FrocPoint {
            threshold: 0.0,
            fp_per_image: fp,
            raw_fp_per_image: fp,
            recall,
            false_positives: 0,
            recalled_points: 0,
        };
        let curve = FrocCurve {
            points: vec![pts(0.0, 0.2), pts(0.05, 0.5), pts(0.15, 0.7), pts(0.6, 0.9)],
            recall_at_rates: [0.0; 5],
            froc_score: 0.0,
            recall_at_01: 0.0,
            total_points: 1,
            total_images: 1,
        };
        assert_eq!(curve.recall_at(0.1), 0.5);
        assert_eq!(curve.recall_at(0.5), 0.7);
        assert_eq!(curve.recall_at(0.6), 0.9);
        let empty = FrocCurve { points: vec![pts(0.3, 0.9)], ..curve };
        assert_eq!(empty.recall_at(0.1), 0.0);
    }

    #[test]
    fn thresholds_descending_with_grid() {
        let m = Heatmap::new(1, 3, vec![0.33, 0.77, 0.33]).unwrap();
        let t = default_thresholds([&m]);
        assert!(t.windows(2).all(|w| w[0] > w[1]));
        assert!(t.contains(&0.33) && t.contains(&0.77) && t.contains(&1.0) && t.contains(&0.0));
        assert_eq!(t.len(), 23);
    }

    #[test]
    fn thresholds_subsampled() {
        let m = Heatmap::from_fn(40, 40, |r, c| (r * 40 + c) as f64 / 1600.0 + 1e-4);
        let t = default_thresholds([&m]);
        assert!(t.len() <= MAX_SWEEP_VALUES + 21);
        assert!(t.contains(&m.max().unwrap()) && t.contains(&m.min().unwrap()));
    }
}
