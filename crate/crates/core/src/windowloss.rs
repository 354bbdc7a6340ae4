//! The Window Loss.
//!
//! A prediction `p` is compared against a per-pixel window `[lo, hi]`:
//!
//! ```text
//!             ⎧ D(p, lo)   p ≤ lo
//! WL(p) =     ⎨ 0          lo < p ≤ hi
//!             ⎩ D(p, hi)   p > hi
//! ```
//!
//! with `D` either the squared error or the Bernoulli KL divergence
//! `y·ln(y/x) + (1−y)·ln((1−y)/(1−x))`. Gradients are taken with respect to
//! the probability `p`; the network owns the chain rule through its sigmoid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Heatmap;
use crate::supervision::BoundPair;

/// KLD predictions are clamped to `[KLD_EPS, 1 − KLD_EPS]`.
pub const KLD_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    #[default]
    Mse,
    Kld,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Divergence::Mse => "mse",
            Divergence::Kld => "kld",
        })
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(Divergence::Mse),
            "kld" => Ok(Divergence::Kld),
            _ => Err(Error::Validation(format!("unknown divergence {s:?} (mse|kld)"))),
        }
    }
}

#[inline]
fn xlogy_ratio(y: f64, x: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else {
        y * (y / x).ln()
    }
}

impl Divergence {
    /// `D(x, y)`; for KLD, `x` is clamped first.
    #[inline]
    pub fn value(self, x: f64, y: f64) -> f64 {
        match self {
            Divergence::Mse => (x - y) * (x - y),
            Divergence::Kld => {
                let x = x.clamp(KLD_EPS, 1.0 - KLD_EPS);
                // non-negative in exact arithmetic; rounding can dip below
                (xlogy_ratio(y, x) + xlogy_ratio(1.0 - y, 1.0 - x)).max(0.0)
            }
        }
    }

    /// `∂D(x, y)/∂x`, evaluated at the clamped `x` for KLD.
    #[inline]
    pub fn grad(self, x: f64, y: f64) -> f64 {
        match self {
            Divergence::Mse => 2.0 * (x - y),
            Divergence::Kld => {
                let x = x.clamp(KLD_EPS, 1.0 - KLD_EPS);
                (x - y) / (x * (1.0 - x))
            }
        }
    }
}

fn check_pixel(p: f64, lo: f64, hi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Contract(format!("prediction {p} outside [0, 1]")));
    }
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::Contract(format!(
            "bounds must satisfy 0 <= lo <= hi <= 1 (lo = {lo}, hi = {hi})"
        )));
    }
    Ok(())
}

#[inline]
fn loss_unchecked(p: f64, lo: f64, hi: f64, kind: Divergence) -> f64 {
    if p <= lo {
        kind.value(p, lo)
    } else if p <= hi {
        0.0
    } else {
        kind.value(p, hi)
    }
}

#[inline]
fn grad_unchecked(p: f64, lo: f64, hi: f64, kind: Divergence) -> f64 {
    if p <= lo {
        kind.grad(p, lo)
    } else if p <= hi {
        0.0
    } else {
        kind.grad(p, hi)
    }
}

/// Window Loss of a single prediction.
pub fn window_loss(p: f64, lo: f64, hi: f64, kind: Divergence) -> Result<f64> {
    check_pixel(p, lo, hi)?;
    Ok(loss_unchecked(p, lo, hi, kind))
}

/// Derivative of [`window_loss`] with respect to `p`.
pub fn window_loss_grad(p: f64, lo: f64, hi: f64, kind: Divergence) -> Result<f64> {
    check_pixel(p, lo, hi)?;
    Ok(grad_unchecked(p, lo, hi, kind))
}

/// Mean loss over one map and its per-pixel gradient of that mean.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad: Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLoss {
    pub levels: Vec<LossResult>,
    pub total: f64,
}

/// Mean Window Loss of one map against one bound pair.
pub fn level_loss(pred: &Heatmap, bounds: &BoundPair, kind: Divergence) -> Result<LossResult> {
    pred.check_same_shape(&bounds.lower, "prediction vs lower bound")?;
    pred.check_same_shape(&bounds.upper, "prediction vs upper bound")?;
    let n = pred.len();
    if n == 0 {
        return Err(Error::Contract("empty prediction map".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(n);
    for ((&p, &lo), &hi) in pred
        .values()
        .iter()
        .zip(bounds.lower.values())
        .zip(bounds.upper.values())
    {
        check_pixel(p, lo, hi)?;
        sum += loss_unchecked(p, lo, hi, kind);
        grad.push(grad_unchecked(p, lo, hi, kind) * inv_n);
    }
    Ok(LossResult {
        value: sum * inv_n,
        grad: Heatmap::new(pred.rows(), pred.cols(), grad)?,
    })
}

/// Sum over pyramid levels of the per-level mean Window Loss.
pub fn pyramid_loss(preds: &[Heatmap], bounds: &[BoundPair], kind: Divergence) -> Result<PyramidLoss> {
    if preds.len() != bounds.len() {
        return Err(Error::Contract(format!(
            "{} prediction levels but {} bound levels",
            preds.len(),
            bounds.len()
        )));
    }
    let levels = preds
        .iter()
        .zip(bounds)
        .map(|(p, b)| level_loss(p, b, kind))
        .collect::<Result<Vec<_>>>()?;
    let total = levels.iter().map(|l| l.value).sum();
    Ok(PyramidLoss { levels, total })
}
