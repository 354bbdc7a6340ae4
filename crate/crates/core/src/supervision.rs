//! Pixel-level supervision from annotation points.
//!
//! Every grid cell is scored by its Euclidean distance to the nearest
//! annotation point, measured in model-input pixels. Two sigmoid ramps of that
//! distance give the lower and upper confidence bounds:
//!
//! ```text
//! lower = σ((r_lower − d) / τ)        upper = σ((r_upper − d) / τ)
//! ```
//!
//! Taking the maximum over points of σ((r − d_k)/τ) is the same as applying σ
//! to the minimum distance because σ is increasing, so only the min-distance
//! field is ever computed.
//!
//! Grids at coarser resolutions are evaluated analytically. Cell `(i, j)` of a
//! grid with `scale` input pixels per cell is centered on input pixel
//! `(j·scale, i·scale)`, the position a stride-`scale` convolution samples.

use serde::{Deserialize, Serialize};

use crate::annotations::Point;
use crate::error::{Error, Result};
use crate::grid::Heatmap;

/// Sigmoid arguments are clamped to this magnitude before exponentiation.
pub const SIGMOID_CLAMP: f64 = 40.0;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-z).exp())
}

/// Bound-generation radii and softness, in model-input pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub r_lower: f64,
    pub r_upper: f64,
    pub tau: f64,
    /// Radius of the ground-truth disks used by the false-positive rule.
    pub disk_radius: f64,
}

impl Default for BoundParams {
    /// Settings for a 128-pixel input: the 1024-pixel values scaled by 1/8.
    fn default() -> Self {
        Self::full_scale().scaled(128.0 / 1024.0)
    }
}

impl BoundParams {
    /// Settings for 1024-pixel inputs: `r_lower = 50`, `r_upper = 200`,
    /// `tau = 2`, disk radius 50.
    pub const fn full_scale() -> Self {
        Self {
            r_lower: 50.0,
            r_upper: 200.0,
            tau: 2.0,
            disk_radius: 50.0,
        }
    }

    /// All lengths multiplied by `factor`.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            r_lower: self.r_lower * factor,
            r_upper: self.r_upper * factor,
            tau: self.tau * factor,
            disk_radius: self.disk_radius * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.r_lower.is_finite()
            && self.r_upper.is_finite()
            && self.r_lower <= self.r_upper
            && self.tau > 0.0
            && self.tau.is_finite()
            && self.disk_radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "bound params need r_lower <= r_upper, tau > 0, disk_radius > 0 (got {self:?})"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundPair {
    pub lower: Heatmap,
    pub upper: Heatmap,
    pub params: BoundParams,
}

/// Grid coordinates of the input-space position under a grid's `scale`.
#[inline]
pub fn cell_center(row: usize, col: usize, scale: f64) -> Point {
    Point::new(col as f64 * scale, row as f64 * scale)
}

/// The cell whose center is nearest to `p`.
pub fn cell_of(p: Point, scale: f64, rows: usize, cols: usize) -> (usize, usize) {
    let r = (p.y / scale).round().clamp(0.0, (rows - 1) as f64) as usize;
    let c = (p.x / scale).round().clamp(0.0, (cols - 1) as f64) as usize;
    (r, c)
}

/// Distance from every cell center to the nearest point, in input pixels.
pub fn min_distance_field(points: &[Point], rows: usize, cols: usize, scale: f64) -> Result<Heatmap> {
    if points.is_empty() {
        return Err(Error::EmptyPoints);
    }
    if !(scale > 0.0) {
        return Err(Error::Contract(format!("grid scale must be positive, got {scale}")));
    }
    Ok(Heatmap::from_fn(rows, cols, |r, c| {
        let center = cell_center(r, c, scale);
        points
            .iter()
            .map(|p| center.distance(p))
            .fold(f64::INFINITY, f64::min)
    }))
}

/// Lower and upper bound heatmaps on a `rows × cols` grid. With no points
/// both bounds are zero everywhere.
pub fn make_bounds(
    points: &[Point],
    rows: usize,
    cols: usize,
    scale: f64,
    params: &BoundParams,
) -> Result<BoundPair> {
    params.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::Contract("bound grid must be non-empty".into()));
    }
    if points.is_empty() {
        return Ok(BoundPair {
            lower: Heatmap::zeros(rows, cols),
            upper: Heatmap::zeros(rows, cols),
            params: *params,
        });
    }
    let dist = min_distance_field(points, rows, cols, scale)?;
    let ramp = |r: f64| dist.map(|d| sigmoid((r - d) / params.tau));
    Ok(BoundPair {
        lower: ramp(params.r_lower),
        upper: ramp(params.r_upper),
        params: *params,
    })
}

/// Binary mask of cells within `radius` of any point (inclusive).
pub fn disk_mask(points: &[Point], rows: usize, cols: usize, scale: f64, radius: f64) -> Heatmap {
    if points.is_empty() {
        return Heatmap::zeros(rows, cols);
    }
    Heatmap::from_fn(rows, cols, |r, c| {
        let center = cell_center(r, c, scale);
        let hit = points.iter().any(|p| center.distance(p) <= radius);
        if hit {
            1.0
        } else {
            0.0
        }
    })
}

/// Bounds for every pyramid level of an `input_size` square input. Level `k`
/// has `input_size / strides[k]` cells per side.
pub fn pyramid_bounds(
    points: &[Point],
    input_size: usize,
    strides: &[usize],
    params: &BoundParams,
) -> Result<Vec<BoundPair>> {
    strides
        .iter()
        .map(|&s| {
            let n = input_size / s;
            make_bounds(points, n, n, s as f64, params)
        })
        .collect()
}
