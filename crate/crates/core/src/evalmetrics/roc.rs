use crate::error::{Error, Result};

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Mann–Whitney AUROC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from midranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of midranks (1-based) over positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive. The first point uses
    /// `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

impl RocCurve {
    /// Trapezoidal area under the sampled curve.
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
            .sum()
    }
}

/// ROC operating points at every distinct score, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let auc = auroc(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(RocCurve { points, auroc: auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let scores = pos.iter().chain(neg).copied().collect();
        let labels = pos.iter().map(|_| true).chain(neg.iter().map(|_| false)).collect();
        (scores, labels)
    }

    fn pairwise(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                if p > n {
                    wins += 1.0;
                } else if p == n {
                    wins += 0.5;
                }
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn examples() {
        let (s, l) = split(&[0.9, 0.8], &[0.7, 0.1]);
        assert_eq!(auroc(&s, &l).unwrap(), 1.0);
        let (s, l) = split(&[0.9, 0.4], &[0.7, 0.1]);
        assert_eq!(auroc(&s, &l).unwrap(), 0.75);
        assert_eq!(pairwise(&[0.9, 0.4], &[0.7, 0.1]), 0.75);
        let (s, l) = split(&[0.5, 0.5, 0.5], &[0.5, 0.5]);
        assert_eq!(auroc(&s, &l).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(
            auroc(&[0.1, 0.2], &[true, true]),
            Err(Error::SingleClass { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn curve_endpoints() {
        let (s, l) = split(&[0.9, 0.4, 0.4], &[0.7, 0.4, 0.1]);
        let roc = roc_curve(&s, &l).unwrap();
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!((roc.trapezoid_area() - roc.auroc).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_pairwise_and_trapezoid(
            pos in prop::collection::vec(0u8..10, 1..20),
            neg in prop::collection::vec(0u8..10, 1..20),
        ) {
            let pos: Vec<f64> = pos.into_iter().map(|v| v as f64 / 10.0).collect();
            let neg: Vec<f64> = neg.into_iter().map(|v| v as f64 / 10.0).collect();
            let (s, l) = split(&pos, &neg);
            let a = auroc(&s, &l).unwrap();
            prop_assert_eq!(a, pairwise(&pos, &neg));
            let roc = roc_curve(&s, &l).unwrap();
            prop_assert!((roc.trapezoid_area() - a).abs() < 1e-12);
            for w in roc.points.windows(2) {
                prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
            }
        }
    }
}
