use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::annotations::Point;
use crate::error::{Error, Result};
use crate::grid::Heatmap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub flip_prob: f64,
    pub max_rotation_deg: f64,
    /// Additive intensity offset drawn from `[-s, s]`.
    pub intensity_shift: f64,
    /// Multiplicative contrast factor range, applied around the image mean.
    pub contrast: [f64; 2],
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            flip_prob: 0.5,
            max_rotation_deg: 10.0,
            intensity_shift: 0.1,
            contrast: [0.9, 1.1],
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.flip_prob)
            && self.max_rotation_deg >= 0.0
            && self.intensity_shift >= 0.0
            && self.contrast[0] > 0.0
            && self.contrast[0] <= self.contrast[1];
        if ok && [self.max_rotation_deg, self.intensity_shift, self.contrast[1]].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid augmentation settings {self:?}")))
        }
    }
}

/// Mirrors columns: `x → n − 1 − x`.
pub fn hflip(image: &Heatmap, points: &[Point]) -> (Heatmap, Vec<Point>) {
    let cols = image.cols();
    let out = Heatmap::from_fn(image.rows(), cols, |r, c| image.get(r, cols - 1 - c));
    let pts = points
        .iter()
        .map(|p| Point::new((cols - 1) as f64 - p.x, p.y))
        .collect();
    (out, pts)
}

/// Rotates about the image centre by `degrees` (counter-clockwise in image
/// coordinates), nearest-neighbour sampling with edge replication. Returns
/// `None` if any point would leave the frame.
pub fn rotate(image: &Heatmap, points: &[Point], degrees: f64) -> Option<(Heatmap, Vec<Point>)> {
    let (rows, cols) = image.shape();
    let cy = (rows as f64 - 1.0) / 2.0;
    let cx = (cols as f64 - 1.0) / 2.0;
    let (s, c) = degrees.to_radians().sin_cos();
    let mut pts = Vec::with_capacity(points.len());
    for p in points {
        let dx = p.x - cx;
        let dy = p.y - cy;
        let q = Point::new(cx + c * dx + s * dy, cy - s * dx + c * dy);
        if q.x < 0.0 || q.y < 0.0 || q.x > (cols - 1) as f64 || q.y > (rows - 1) as f64 {
            return None;
        }
        pts.push(q);
    }
    let out = Heatmap::from_fn(rows, cols, |r, col| {
        // inverse map
        let dx = col as f64 - cx;
        let dy = r as f64 - cy;
        let sx = cx + c * dx - s * dy;
        let sy = cy + s * dx + c * dy;
        let sr = sy.round().clamp(0.0, (rows - 1) as f64) as usize;
        let sc = sx.round().clamp(0.0, (cols - 1) as f64) as usize;
        image.get(sr, sc)
    });
    Some((out, pts))
}

/// Contrast about the mean, then an additive shift, clamped to `[0, 1]`.
pub fn adjust_intensity(image: &Heatmap, contrast: f64, shift: f64) -> Heatmap {
    let mean = image.mean();
    image.map(|v| ((v - mean) * contrast + mean + shift).clamp(0.0, 1.0))
}

/// Random flip, rotation and intensity jitter. A rotation that would push
/// a point outside the frame is skipped.
pub fn augment<R: Rng + ?Sized>(
    rng: &mut R,
    image: &Heatmap,
    points: &[Point],
    cfg: &AugmentConfig,
) -> (Heatmap, Vec<Point>) {
    if !cfg.enabled {
        return (image.clone(), points.to_vec());
    }
    let (mut img, mut pts) = if rng.random_bool(cfg.flip_prob) {
        hflip(image, points)
    } else {
        (image.clone(), points.to_vec())
    };
    if cfg.max_rotation_deg > 0.0 {
        let deg = rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg);
        if let Some((i, p)) = rotate(&img, &pts, deg) {
            img = i;
            pts = p;
        }
    }
    let contrast = rng.random_range(cfg.contrast[0]..=cfg.contrast[1]);
    let shift = if cfg.intensity_shift > 0.0 {
        rng.random_range(-cfg.intensity_shift..=cfg.intensity_shift)
    } else {
        0.0
    };
    (adjust_intensity(&img, contrast, shift), pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(n: usize) -> Heatmap {
        Heatmap::from_fn(n, n, |r, c| (r * n + c) as f64 / (n * n) as f64)
    }

    #[test]
    fn flip_example() {
        let img = ramp(128);
        let (f, pts) = hflip(&img, &[Point::new(10.0, 20.0)]);
        assert_eq!(pts, vec![Point::new(117.0, 20.0)]);
        assert_eq!(f.get(20, 117), img.get(20, 10));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let img = ramp(16);
        let p = [Point::new(3.0, 4.5)];
        let (r, q) = rotate(&img, &p, 0.0).unwrap();
        assert_eq!(r, img);
        assert!((q[0].x - 3.0).abs() < 1e-12 && (q[0].y - 4.5).abs() < 1e-12);
    }

    #[test]
    fn rotation_moves_point_with_content() {
        let mut img = Heatmap::zeros(65, 65);
        img.set(10, 40, 1.0);
        let (r, q) = rotate(&img, &[Point::new(40.0, 10.0)], 10.0).unwrap();
        let (x, y) = (q[0].x.round() as usize, q[0].y.round() as usize);
        assert_eq!(r.get(y, x), 1.0);
    }

    #[test]
    fn rotation_rejects_points_leaving_frame() {
        let img = ramp(32);
        assert!(rotate(&img, &[Point::new(0.0, 0.0)], 10.0).is_none());
        assert!(rotate(&img, &[], 10.0).is_some());
    }

    #[test]
    fn disabled_is_identity() {
        let img = ramp(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (i, p) = augment(&mut rng, &img, &[Point::new(1.0, 2.0)], &AugmentConfig::disabled());
        assert_eq!(i, img);
        assert_eq!(p, vec![Point::new(1.0, 2.0)]);
    }

    proptest! {
        #[test]
        fn double_flip_identity(n in 2usize..20, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let img = ramp(n);
            let p = [Point::new(x * (n - 1) as f64, y * (n - 1) as f64)];
            let (a, pa) = hflip(&img, &p);
            let (b, pb) = hflip(&a, &pa);
            prop_assert_eq!(b, img);
            prop_assert!((pb[0].x - p[0].x).abs() < 1e-9);
        }

        #[test]
        fn augmented_values_stay_in_range(seed in any::<u64>()) {
            let img = ramp(24);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (i, p) = augment(&mut rng, &img, &[Point::new(12.0, 12.0)], &AugmentConfig::default());
            prop_assert!(i.values().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(p.len(), 1);
        }
    }
}
