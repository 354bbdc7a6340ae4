//! Seeded synthetic "fracture" images.
//!
//! Backgrounds are smooth oriented bands plus Gaussian noise. A crack is a
//! thin dark polyline of 2–4 segments whose trace wanders perpendicular to
//! the segments, annotated by one point at its arc-length midpoint. Every
//! image, positive or negative, also carries smooth wide dark strokes that
//! share the cracks' contrast range, so darkness alone does not separate
//! the classes.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotations::{Dataset, ImageRecord, Point, Split};
use crate::error::{Error, Result};
use crate::grid::Heatmap;
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundParams {
    pub bands: u32,
    pub amplitude: f64,
    pub noise_sigma: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self {
            bands: 3,
            amplitude: 0.12,
            noise_sigma: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub image_size: u32,
    pub n_positive: u32,
    pub n_negative: u32,
    /// Inclusive range of cracks drawn on a positive image.
    pub cracks_per_image: [u32; 2],
    /// Crack arc length range, pixels.
    pub crack_length: [f64; 2],
    /// Darkening applied along a crack.
    pub crack_contrast: [f64; 2],
    /// Inclusive range of smooth distractor strokes per image.
    pub distractors_per_image: [u32; 2],
    pub distractor_contrast: [f64; 2],
    pub background: BackgroundParams,
    /// Annotate long cracks with two jittered points instead of one.
    pub multi_point: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            n_positive: 100,
            n_negative: 100,
            cracks_per_image: [1, 3],
            crack_length: [18.0, 36.0],
            crack_contrast: [0.25, 0.45],
            distractors_per_image: [1, 2],
            distractor_contrast: [0.2, 0.5],
            background: BackgroundParams::default(),
            multi_point: false,
            seed: 7,
        }
    }
}

/// Std-dev of the placement jitter used in multi-point mode, pixels.
pub const MULTI_POINT_JITTER: f64 = 3.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        let mut problems = Vec::new();
        if self.image_size < 16 {
            problems.push(format!("image_size {} is below 16", self.image_size));
        }
        if self.cracks_per_image[0] > self.cracks_per_image[1] {
            problems.push("cracks_per_image range is reversed".into());
        }
        if self.distractors_per_image[0] > self.distractors_per_image[1] {
            problems.push("distractors_per_image range is reversed".into());
        }
        if !ordered(self.crack_length) || self.crack_length[0] <= 0.0 {
            problems.push("crack_length must be a positive ordered range".into());
        }
        if !ordered(self.crack_contrast) || !ordered(self.distractor_contrast) {
            problems.push("contrast ranges must be ordered".into());
        }
        if self.background.noise_sigma < 0.0 {
            problems.push("noise_sigma must be non-negative".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub image: Heatmap,
    pub points: Vec<Point>,
    /// Rendered crack traces, one sample every half pixel.
    pub cracks: Vec<Vec<Point>>,
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

fn count(rng: &mut impl Rng, range: [u32; 2]) -> u32 {
    rng.random_range(range[0]..=range[1])
}

fn background(rng: &mut impl Rng, size: usize, p: &BackgroundParams) -> Heatmap {
    let bands: Vec<(f64, f64, f64, f64)> = (0..p.bands)
        .map(|_| {
            let theta = rng.random_range(0.0..PI);
            let cycles = rng.random_range(0.8..2.5);
            let phase = rng.random_range(0.0..2.0 * PI);
            let weight = rng.random_range(0.5..1.0);
            (theta, cycles, phase, weight)
        })
        .collect();
    let norm = bands.iter().map(|b| b.3).sum::<f64>().max(1.0);
    let noise = Normal::new(0.0, p.noise_sigma.max(0.0)).expect("finite sigma");
    let n = size as f64;
    Heatmap::from_fn(size, size, |r, c| {
        let mut v = 0.55;
        for &(theta, cycles, phase, weight) in &bands {
            let t = (c as f64 * theta.cos() + r as f64 * theta.sin()) / n;
            v += p.amplitude * weight / norm * (2.0 * PI * cycles * t + phase).sin();
        }
        v + noise.sample(rng)
    })
}

/// Darkening is the per-pixel maximum over strokes, applied once at the end.
fn stamp_max(dark: &mut Heatmap, r: usize, c: usize, value: f64) {
    if value > dark.get(r, c) {
        dark.set(r, c, value);
    }
}

fn crack_trace(rng: &mut impl Rng, size: f64, cfg: &SynthConfig) -> (Vec<Point>, f64) {
    let margin = 6.0;
    let length = uniform(rng, cfg.crack_length);
    let n_seg = rng.random_range(2..=4);
    let turn = Normal::new(0.0, 0.6).unwrap();

    // vertices of the base polyline; retry until it stays inside the margin
    let mut vertices = Vec::new();
    for attempt in 0..50 {
        vertices.clear();
        let mut p = Point::new(
            rng.random_range(margin..size - margin),
            rng.random_range(margin..size - margin),
        );
        let mut dir = rng.random_range(0.0..2.0 * PI);
        vertices.push(p);
        for _ in 0..n_seg {
            let seg = length / n_seg as f64;
            p = Point::new(p.x + seg * dir.cos(), p.y + seg * dir.sin());
            vertices.push(p);
            dir += turn.sample(rng);
        }
        let inside = vertices
            .iter()
            .all(|v| v.x >= margin && v.y >= margin && v.x <= size - margin && v.y <= size - margin);
        if inside || attempt == 49 {
            break;
        }
    }
    for v in vertices.iter_mut() {
        v.x = v.x.clamp(margin, size - margin);
        v.y = v.y.clamp(margin, size - margin);
    }

    // walk the polyline in half-pixel steps with a mean-reverting sideways wobble
    let wobble = Normal::new(0.0, 0.35).unwrap();
    let mut offset = 0.0f64;
    let mut trace = Vec::new();
    for w in vertices.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = a.distance(&b);
        if len < 1e-9 {
            continue;
        }
        let (ux, uy) = ((b.x - a.x) / len, (b.y - a.y) / len);
        let steps = (len / 0.5).ceil() as usize;
        for s in 0..steps {
            let t = s as f64 * len / steps as f64;
            offset = (0.8 * offset + wobble.sample(rng)).clamp(-1.5, 1.5);
            trace.push(Point::new(a.x + t * ux - offset * uy, a.y + t * uy + offset * ux));
        }
    }
    (trace, length)
}

fn render_crack(dark: &mut Heatmap, trace: &[Point], contrast: f64) {
    const HALF_WIDTH: f64 = 0.9;
    let size = dark.rows() as i64;
    for p in trace {
        let (cx, cy) = (p.x.round() as i64, p.y.round() as i64);
        for r in cy - 1..=cy + 1 {
            for c in cx - 1..=cx + 1 {
                if r < 0 || c < 0 || r >= size || c >= size {
                    continue;
                }
                let d = p.distance(&Point::new(c as f64, r as f64));
                let v = contrast * (1.0 - d / HALF_WIDTH).max(0.0);
                stamp_max(dark, r as usize, c as usize, v);
            }
        }
    }
}

fn render_distractor(rng: &mut impl Rng, dark: &mut Heatmap, cfg: &SynthConfig) {
    let size = dark.rows() as f64;
    let contrast = uniform(rng, cfg.distractor_contrast);
    let length: f64 = rng.random_range(20.0..50.0);
    let sigma: f64 = rng.random_range(2.5..4.0);
    let a = Point::new(rng.random_range(0.0..size), rng.random_range(0.0..size));
    let dir = rng.random_range(0.0..2.0 * PI);
    let b = Point::new(a.x + length * dir.cos(), a.y + length * dir.sin());
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let reach = (3.0 * sigma).ceil() as i64;
    let (r0, r1) = (a.y.min(b.y) as i64 - reach, a.y.max(b.y) as i64 + reach);
    let (c0, c1) = (a.x.min(b.x) as i64 - reach, a.x.max(b.x) as i64 + reach);
    let n = dark.rows() as i64;
    for r in r0.max(0)..=r1.min(n - 1) {
        for c in c0.max(0)..=c1.min(n - 1) {
            let (px, py) = (c as f64 - a.x, r as f64 - a.y);
            let t = ((px * dx + py * dy) / (length * length)).clamp(0.0, 1.0);
            let d2 = (px - t * dx).powi(2) + (py - t * dy).powi(2);
            let v = contrast * (-d2 / (2.0 * sigma * sigma)).exp();
            stamp_max(dark, r as usize, c as usize, v);
        }
    }
}

/// Draws one image. The number of cracks comes from `cfg.cracks_per_image`;
/// zero cracks gives a negative image with no points.
pub fn generate_image(rng: &mut impl Rng, cfg: &SynthConfig) -> SynthImage {
    let size = cfg.image_size as usize;
    let mut image = background(rng, size, &cfg.background);
    let mut dark = Heatmap::zeros(size, size);

    for _ in 0..count(rng, cfg.distractors_per_image) {
        render_distractor(rng, &mut dark, cfg);
    }

    let n_cracks = count(rng, cfg.cracks_per_image);
    let jitter = Normal::new(0.0, MULTI_POINT_JITTER).unwrap();
    let long_crack = 0.5 * (cfg.crack_length[0] + cfg.crack_length[1]);
    let mut points = Vec::new();
    let mut cracks = Vec::new();
    for _ in 0..n_cracks {
        let (trace, length) = crack_trace(rng, size as f64, cfg);
        let contrast = uniform(rng, cfg.crack_contrast);
        render_crack(&mut dark, &trace, contrast);
        if cfg.multi_point && length >= long_crack {
            for frac in [0.25, 0.75] {
                let p = trace[(frac * (trace.len() - 1) as f64).round() as usize];
                let hi = size as f64 - 1.0;
                points.push(Point::new(
                    (p.x + jitter.sample(rng)).clamp(0.0, hi),
                    (p.y + jitter.sample(rng)).clamp(0.0, hi),
                ));
            }
        } else {
            points.push(trace[trace.len() / 2]);
        }
        cracks.push(trace);
    }

    for (v, d) in image.values_mut().iter_mut().zip(dark.values()) {
        *v = (*v - d).clamp(0.0, 1.0);
    }
    SynthImage {
        image,
        points,
        cracks,
    }
}

/// SplitMix64 finalizer, used to derive per-image seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for image `index` of a corpus seeded with `corpus_seed`.
pub fn image_seed(corpus_seed: u64, index: u64) -> u64 {
    mix(mix(corpus_seed) ^ index)
}

/// Stratified 70/10/20 split: each class is shuffled and cut separately.
fn assign_splits(rng: &mut impl Rng, indices: &[usize], splits: &mut [Split]) {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    let k = order.len() as f64;
    let n_train = (0.7 * k).round() as usize;
    let n_val = ((0.1 * k).round() as usize).min(order.len() - n_train);
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
}

/// An in-memory corpus: the manifest plus decoded images in record order.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub dataset: Dataset,
    pub images: Vec<Heatmap>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl SynthCorpus {
    /// Generates `n_positive` positives followed by `n_negative` negatives.
    pub fn generate(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let n_pos = cfg.n_positive as usize;
        let total = n_pos + cfg.n_negative as usize;
        let mut negative_cfg = cfg.clone();
        negative_cfg.cracks_per_image = [0, 0];

        let mut records = Vec::with_capacity(total);
        let mut images = Vec::with_capacity(total);
        for i in 0..total {
            let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, i as u64));
            let img_cfg = if i < n_pos { cfg } else { &negative_cfg };
            let mut synth = generate_image(&mut rng, img_cfg);
            if i < n_pos && synth.points.is_empty() {
                // a positive with cracks_per_image = [0, _] drew zero; force one
                let mut one = cfg.clone();
                one.cracks_per_image = [1, 1];
                synth = generate_image(&mut rng, &one);
            }
            records.push(ImageRecord {
                image_path: format!("images/img_{i:04}.pgm"),
                width: cfg.image_size,
                height: cfg.image_size,
                split: Split::Train,
                points: synth.points,
            });
            images.push(synth.image);
        }

        let mut splits = vec![Split::Train; total];
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed ^ 0x5151_5151));
        let pos: Vec<usize> = (0..n_pos).collect();
        let neg: Vec<usize> = (n_pos..total).collect();
        assign_splits(&mut rng, &pos, &mut splits);
        assign_splits(&mut rng, &neg, &mut splits);
        for (rec, split) in records.iter_mut().zip(splits) {
            rec.split = split;
        }

        let dataset = Dataset {
            input_size: cfg.image_size,
            records,
        };
        dataset.validate().into_result()?;
        Ok(Self { dataset, images })
    }

    /// Writes `manifest.json` and `images/*.pgm` (16-bit) under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let img_dir = dir.join("images");
        std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
        for (rec, img) in self.dataset.records.iter().zip(&self.images) {
            io::write_pgm16(&dir.join(&rec.image_path), img)?;
        }
        self.dataset.save(&dir.join(MANIFEST_NAME))
    }

    /// Images of one split with their records, in manifest order.
    pub fn split(&self, split: Split) -> impl Iterator<Item = (&ImageRecord, &Heatmap)> {
        self.dataset
            .records
            .iter()
            .zip(&self.images)
            .filter(move |(r, _)| r.split == split)
    }
}

/// Generates a corpus and writes it under `dir`.
pub fn generate_corpus(cfg: &SynthConfig, dir: &Path) -> Result<Dataset> {
    let corpus = SynthCorpus::generate(cfg)?;
    corpus.write(dir)?;
    Ok(corpus.dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            image_size: 64,
            n_positive: 7,
            n_negative: 3,
            ..SynthConfig::default()
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn forced_crack_counts() {
        let mut cfg = small();
        cfg.cracks_per_image = [0, 0];
        let img = generate_image(&mut rng(1), &cfg);
        assert!(img.points.is_empty());
        cfg.cracks_per_image = [2, 2];
        for s in 0..10 {
            assert_eq!(generate_image(&mut rng(s), &cfg).points.len(), 2);
        }
    }

    #[test]
    fn deterministic_images() {
        let a = generate_image(&mut rng(5), &small());
        let b = generate_image(&mut rng(5), &small());
        assert_eq!(a.image, b.image);
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn points_lie_on_cracks() {
        let cfg = SynthConfig::default();
        for s in 0..20 {
            let img = generate_image(&mut rng(s), &cfg);
            for (p, trace) in img.points.iter().zip(&img.cracks) {
                let d = trace.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
                assert!(d < 1.0);
            }
        }
    }

    #[test]
    fn values_in_unit_range() {
        let img = generate_image(&mut rng(3), &SynthConfig::default());
        assert!(img.image.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn multi_point_splits_long_cracks() {
        let cfg = SynthConfig {
            multi_point: true,
            crack_length: [40.0, 40.0],
            cracks_per_image: [1, 1],
            ..SynthConfig::default()
        };
        let img = generate_image(&mut rng(9), &cfg);
        assert_eq!(img.points.len(), 2);
    }

    #[test]
    fn split_arithmetic() {
        let cfg = SynthConfig {
            image_size: 32,
            n_positive: 70,
            n_negative: 30,
            ..SynthConfig::default()
        };
        let c = SynthCorpus::generate(&cfg).unwrap();
        let n = |s| c.dataset.split(s).count();
        assert_eq!((n(Split::Train), n(Split::Val), n(Split::Test)), (70, 10, 20));
        let pos = c.dataset.records.iter().filter(|r| r.is_positive()).count();
        assert_eq!(pos, 70);
    }

    #[test]
    fn all_negative_corpus() {
        let cfg = SynthConfig {
            image_size: 32,
            n_positive: 0,
            n_negative: 10,
            ..SynthConfig::default()
        };
        let c = SynthCorpus::generate(&cfg).unwrap();
        assert!(c.dataset.records.iter().all(|r| r.points.is_empty()));
    }

    #[test]
    fn reversed_range_rejected() {
        let cfg = SynthConfig {
            crack_length: [30.0, 10.0],
            ..SynthConfig::default()
        };
        assert!(SynthCorpus::generate(&cfg).is_err());
    }

    #[test]
    fn written_corpus_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_corpus(&small(), a.path()).unwrap();
        generate_corpus(&small(), b.path()).unwrap();
        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(a.path(), MANIFEST_NAME), read(b.path(), MANIFEST_NAME));
        for i in 0..10 {
            let f = format!("images/img_{i:04}.pgm");
            assert_eq!(read(a.path(), &f), read(b.path(), &f));
        }
        let back = Dataset::load(&a.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back.records.len(), 10);
    }

    #[test]
    fn class_backgrounds_match() {
        let c = SynthCorpus::generate(&SynthConfig::default()).unwrap();
        let mean = |pos: bool| {
            let v: Vec<f64> = c
                .dataset
                .records
                .iter()
                .zip(&c.images)
                .filter(|(r, _)| r.is_positive() == pos)
                .map(|(_, i)| i.mean())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean(true) - mean(false)).abs() < 0.05);
    }
}
