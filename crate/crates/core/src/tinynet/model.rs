use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tape::{Grads, Param, ParamStore, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::grid::Heatmap;

pub const LEAKY_SLOPE: f32 = 0.1;

/// Default head bias at initialization; σ(−4.6) ≈ 0.01.
pub const HEAD_BIAS_INIT: f32 = -4.6;

/// Head weights start small so initial maps sit near σ(head_bias).
pub const HEAD_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub base_channels: usize,
    /// Downsampling factor of each pyramid level relative to the input,
    /// finest first.
    pub strides: Vec<usize>,
    /// Initial bias of every head; sets the initial probability everywhere.
    pub head_bias: f32,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_size: 128,
            base_channels: 8,
            strides: vec![2, 4, 8, 16],
            head_bias: HEAD_BIAS_INIT,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(format!("model config: {m}")));
        if self.strides.is_empty() {
            return fail("at least one stride is required".into());
        }
        if self.base_channels == 0 {
            return fail("base_channels must be positive".into());
        }
        if !self.head_bias.is_finite() {
            return fail("head_bias must be finite".into());
        }
        if self.strides[0] == 0 {
            return fail("strides must be positive".into());
        }
        for w in self.strides.windows(2) {
            if w[1] <= w[0] || w[1] % w[0] != 0 {
                return fail(format!(
                    "strides must be strictly increasing multiples of each other ({} then {})",
                    w[0], w[1]
                ));
            }
        }
        let coarsest = *self.strides.last().unwrap();
        if self.input_size == 0 || self.input_size % coarsest != 0 {
            return fail(format!(
                "input_size {} is not divisible by the coarsest stride {coarsest}",
                self.input_size
            ));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.strides.len()
    }

    /// Encoder width of stage `k`.
    pub fn stage_channels(&self, k: usize) -> usize {
        self.base_channels << k.min(2)
    }

    /// Width of the top-down path.
    pub fn pyramid_channels(&self) -> usize {
        2 * self.base_channels
    }

    /// Downsampling applied by stage `k` relative to stage `k − 1`.
    pub fn stage_stride(&self, k: usize) -> usize {
        if k == 0 {
            self.strides[0]
        } else {
            self.strides[k] / self.strides[k - 1]
        }
    }

    /// Side length of level `k`'s map.
    pub fn level_size(&self, k: usize) -> usize {
        self.input_size / self.strides[k]
    }
}

/// Per-level probability maps, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidOutput {
    pub maps: Vec<Heatmap>,
}

/// A forward pass together with the tape needed to differentiate it.
#[derive(Debug, Clone)]
pub struct Forward {
    pub output: PyramidOutput,
    tape: Tape,
    heads: Vec<Var>,
}

impl Forward {
    /// See [`Tape::branch_pattern`].
    pub fn branch_pattern(&self) -> Vec<usize> {
        self.tape.branch_pattern()
    }
}

/// Encoder of 3×3 convolutions, leaky ReLU and max pooling, a top-down path of
/// 1×1 laterals plus nearest-neighbour upsampling, and a 1×1 sigmoid head
/// per level.
///
/// Parameters are ordered stages, then laterals, then heads; each as a
/// weight/bias pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn conv_param(name: String, dims: Vec<usize>, std: f64, rng: &mut ChaCha8Rng) -> Param {
    let n: usize = dims.iter().product();
    let dist = Normal::new(0.0, std).expect("finite std");
    Param {
        name,
        dims,
        data: (0..n).map(|_| dist.sample(rng) as f32).collect(),
    }
}

fn bias_param(name: String, len: usize, value: f32) -> Param {
    Param {
        name,
        dims: vec![len],
        data: vec![value; len],
    }
}

impl TinyNet {
    /// Seeded initialization: He fan-in scaling for encoder convolutions,
    /// `1/√fan_in` for the linear laterals, [`HEAD_WEIGHT_STD`] for the
    /// heads and `config.head_bias` for the head biases.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let levels = config.levels();
        let mut params = Vec::with_capacity(6 * levels);
        let mut c_in = 1;
        for k in 0..levels {
            let c_out = config.stage_channels(k);
            let fan_in = (c_in * 9) as f64;
            params.push(conv_param(format!("stage{k}.weight"), vec![c_out, c_in, 3, 3], (2.0 / fan_in).sqrt(), &mut rng));
            params.push(bias_param(format!("stage{k}.bias"), c_out, 0.0));
            c_in = c_out;
        }
        let width = config.pyramid_channels();
        for k in 0..levels {
            let c = config.stage_channels(k);
            params.push(conv_param(format!("lateral{k}.weight"), vec![width, c, 1, 1], (1.0 / c as f64).sqrt(), &mut rng));
            params.push(bias_param(format!("lateral{k}.bias"), width, 0.0));
        }
        for k in 0..levels {
            params.push(conv_param(format!("head{k}.weight"), vec![1, width, 1, 1], HEAD_WEIGHT_STD, &mut rng));
            params.push(bias_param(format!("head{k}.bias"), 1, config.head_bias));
        }
        Ok(Self {
            config,
            params: ParamStore::new(params),
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes
    /// against a fresh initialization.
    pub fn from_params(config: ModelConfig, params: Vec<Param>) -> Result<Self> {
        let template = Self::new(config)?;
        if template.params.len() != params.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (t, p) in template.params.params.iter().zip(&params) {
            if t.name != p.name || t.dims != p.dims {
                return Err(Error::Validation(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    p.name, p.dims, t.name, t.dims
                )));
            }
        }
        Ok(Self {
            config: template.config,
            params: ParamStore::new(params),
        })
    }

    fn stage(k: usize) -> (usize, usize) {
        (2 * k, 2 * k + 1)
    }

    fn lateral(&self, k: usize) -> (usize, usize) {
        let base = 2 * self.config.levels();
        (base + 2 * k, base + 2 * k + 1)
    }

    fn head(&self, k: usize) -> (usize, usize) {
        let base = 4 * self.config.levels();
        (base + 2 * k, base + 2 * k + 1)
    }

    /// Index range of the head parameters inside the store.
    pub fn head_params(&self) -> std::ops::Range<usize> {
        4 * self.config.levels()..6 * self.config.levels()
    }

    /// Runs the network on an `input_size²` image with values in `[0, 1]`.
    pub fn forward(&self, image: &Heatmap) -> Result<Forward> {
        let n = self.config.input_size;
        if image.shape() != (n, n) {
            return Err(Error::Contract(format!(
                "model expects a {n}x{n} image, got {:?}",
                image.shape()
            )));
        }
        let p = &self.params;
        let levels = self.config.levels();
        let mut tape = Tape::new(p);
        let x = Tensor::from_data(1, n, n, standardize(image));
        let mut h = tape.input(x);

        let mut features = Vec::with_capacity(levels);
        for k in 0..levels {
            let (w, b) = Self::stage(k);
            let c = tape.conv(p, h, w, b, 1)?;
            let a = tape.leaky_relu(c, LEAKY_SLOPE);
            h = tape.max_pool(a, self.config.stage_stride(k));
            features.push(h);
        }

        let mut merged = vec![h; levels];
        let (w, b) = self.lateral(levels - 1);
        merged[levels - 1] = tape.conv(p, features[levels - 1], w, b, 1)?;
        for k in (0..levels - 1).rev() {
            let up = tape.upsample(merged[k + 1], self.config.stage_stride(k + 1));
            let (w, b) = self.lateral(k);
            let lat = tape.conv(p, features[k], w, b, 1)?;
            merged[k] = tape.add(lat, up)?;
        }

        let mut heads = Vec::with_capacity(levels);
        let mut maps = Vec::with_capacity(levels);
        for (k, &m) in merged.iter().enumerate() {
            let (w, b) = self.head(k);
            let logit = tape.conv(p, m, w, b, 1)?;
            let prob = tape.sigmoid(logit);
            let t = tape.value(prob);
            maps.push(Heatmap::new(t.rows, t.cols, t.data.iter().map(|&v| v as f64).collect())?);
            heads.push(prob);
        }
        Ok(Forward {
            output: PyramidOutput { maps },
            tape,
            heads,
        })
    }

    /// Gradients of the objective given its gradient with respect to every
    /// level's probability map.
    pub fn backward(&self, forward: &Forward, level_grads: &[Heatmap]) -> Result<Grads> {
        if level_grads.len() != forward.heads.len() {
            return Err(Error::Contract(format!(
                "{} level gradients for {} levels",
                level_grads.len(),
                forward.heads.len()
            )));
        }
        let seeds = forward
            .heads
            .iter()
            .zip(level_grads)
            .map(|(&v, g)| {
                let t = Tensor::from_data(1, g.rows(), g.cols(), g.values().iter().map(|&x| x as f32).collect());
                (v, t)
            })
            .collect::<Vec<_>>();
        forward.tape.backward(&self.params, &seeds)
    }

    /// Merged probability map at the finest level's resolution.
    pub fn predict(&self, image: &Heatmap) -> Result<Heatmap> {
        Ok(merge_pyramid(&self.forward(image)?.output))
    }
}

/// Per-image zero mean, unit variance. Flat images are only centered.
pub fn standardize(image: &Heatmap) -> Vec<f32> {
    let mean = image.mean();
    let var = image.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / image.len() as f64;
    let inv = if var > 1e-12 { var.sqrt().recip() } else { 1.0 };
    image.values().iter().map(|&v| ((v - mean) * inv) as f32).collect()
}

/// Upsamples every level bilinearly to the finest level's grid and averages.
///
/// Level cell `j` sits at input position `j · stride`, so a fine cell `j`
/// maps to coarse coordinate `j · cols_coarse / cols_fine`.
pub fn merge_pyramid(out: &PyramidOutput) -> Heatmap {
    let finest = &out.maps[0];
    let (rows, cols) = finest.shape();
    let mut acc = vec![0.0f64; rows * cols];
    for map in &out.maps {
        let fr = map.rows() as f64 / rows as f64;
        let fc = map.cols() as f64 / cols as f64;
        for r in 0..rows {
            for c in 0..cols {
                acc[r * cols + c] += map.sample_bilinear(r as f64 * fr, c as f64 * fc);
            }
        }
    }
    let k = out.maps.len() as f64;
    Heatmap::new(rows, cols, acc.into_iter().map(|v| v / k).collect()).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            input_size: 32,
            base_channels: 4,
            strides: vec![2, 4, 8, 16],
            seed: 3,
            ..ModelConfig::default()
        }
    }

    fn image(n: usize) -> Heatmap {
        Heatmap::from_fn(n, n, |r, c| ((r * 7 + c * 3) % 11) as f64 / 10.0)
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig { input_size: 120, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { strides: vec![2, 2, 8], ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { strides: vec![4, 6], input_size: 12, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn level_shapes_and_range() {
        let net = TinyNet::new(small()).unwrap();
        let f = net.forward(&image(32)).unwrap();
        let sizes: Vec<_> = f.output.maps.iter().map(|m| m.shape()).collect();
        assert_eq!(sizes, vec![(16, 16), (8, 8), (4, 4), (2, 2)]);
        for m in &f.output.maps {
            assert!(m.values().iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(net.forward(&image(16)).is_err());
    }

    #[test]
    fn zero_heads_give_constant_maps() {
        let mut net = TinyNet::new(small()).unwrap();
        for idx in net.head_params().step_by(2) {
            net.params.params[idx].data.iter_mut().for_each(|w| *w = 0.0);
        }
        let f = net.forward(&image(32)).unwrap();
        let expected = 1.0 / (1.0 + (-(HEAD_BIAS_INIT as f64)).exp());
        for m in &f.output.maps {
            for &v in m.values() {
                assert!((v - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let a = TinyNet::new(small()).unwrap();
        let b = TinyNet::new(small()).unwrap();
        assert_eq!(a, b);
        let img = image(32);
        assert_eq!(a.forward(&img).unwrap().output, b.forward(&img).unwrap().output);
    }

    #[test]
    fn zero_and_scaled_seeds() {
        let net = TinyNet::new(small()).unwrap();
        let f = net.forward(&image(32)).unwrap();
        let zeros: Vec<Heatmap> = f.output.maps.iter().map(|m| Heatmap::zeros(m.rows(), m.cols())).collect();
        let g = net.backward(&f, &zeros).unwrap();
        assert_eq!(g.max_abs(), 0.0);

        let seeds: Vec<Heatmap> = f
            .output
            .maps
            .iter()
            .map(|m| Heatmap::from_fn(m.rows(), m.cols(), |r, c| ((r + 2 * c) % 5) as f64 * 0.01 - 0.02))
            .collect();
        let g1 = net.backward(&f, &seeds).unwrap();
        let tripled: Vec<Heatmap> = seeds.iter().map(|s| s.map(|v| 3.0 * v)).collect();
        let g3 = net.backward(&f, &tripled).unwrap();
        for (a, b) in g1.tensors.iter().flatten().zip(g3.tensors.iter().flatten()) {
            assert!((3.0 * a - b).abs() <= 1e-5 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn merge_examples() {
        let consts = |vals: &[f64]| PyramidOutput {
            maps: vals.iter().enumerate().map(|(k, &v)| Heatmap::filled(16 >> k, 16 >> k, v)).collect(),
        };
        let m = merge_pyramid(&consts(&[0.3, 0.3, 0.3]));
        assert!(m.values().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let m = merge_pyramid(&consts(&[0.2, 0.4, 0.6, 0.8]));
        assert_eq!(m.shape(), (16, 16));
        assert!(m.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let single = PyramidOutput { maps: vec![image(8)] };
        assert_eq!(merge_pyramid(&single), image(8));
    }

    #[test]
    fn merged_prediction_in_open_unit_interval() {
        let net = TinyNet::new(small()).unwrap();
        let m = net.predict(&image(32)).unwrap();
        assert!(m.values().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
