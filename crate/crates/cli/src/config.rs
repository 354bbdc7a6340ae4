//! Run configuration as flat dotted keys.
//!
//! A config file is a JSON object such as `{"bounds.r_lower": 12.5}`.
//! Values are layered: built-in defaults, then the file, then every
//! `--set key=value`, then dedicated command flags. The fully resolved
//! result is written next to each command's artifacts.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use wlk::synthgen::SynthConfig;
use wlk::tinynet::adam::AdamConfig;
use wlk::tinynet::{AugmentConfig, ModelConfig, TrainConfig};
use wlk::{BoundParams, Divergence, Split};

use crate::error::{CliError, CliResult};

pub const RESOLVED_NAME: &str = "config.resolved.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub divergence: Divergence,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub augment: AugmentConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            divergence: t.divergence,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: t.seed,
            optimizer: t.optimizer,
            augment: t.augment,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: Split,
    pub svg: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            split: Split::Test,
            svg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub bounds: BoundParams,
    pub train: TrainSection,
    pub eval: EvalSection,
}

/// One-line description of every key.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("synth.image_size", "side of the square synthetic images, pixels"),
    ("synth.n_positive", "images with at least one crack"),
    ("synth.n_negative", "images without cracks"),
    ("synth.cracks_per_image", "inclusive range of cracks on a positive image"),
    ("synth.crack_length", "crack arc length range, pixels"),
    ("synth.crack_contrast", "darkening along a crack"),
    ("synth.distractors_per_image", "inclusive range of smooth distractor strokes"),
    ("synth.distractor_contrast", "darkening along a distractor"),
    ("synth.background.bands", "number of smooth background bands"),
    ("synth.background.amplitude", "background band amplitude"),
    ("synth.background.noise_sigma", "per-pixel Gaussian noise"),
    ("synth.multi_point", "annotate long cracks with two points"),
    ("synth.seed", "corpus seed"),
    ("model.input_size", "network input side; must match the manifest"),
    ("model.base_channels", "channels of the first encoder stage"),
    ("model.strides", "output stride of every pyramid level"),
    ("model.head_bias", "initial head bias (logit of the starting probability)"),
    ("model.seed", "weight initialization seed"),
    ("bounds.r_lower", "lower-bound radius, input pixels"),
    ("bounds.r_upper", "upper-bound radius, input pixels"),
    ("bounds.tau", "bound softness, input pixels"),
    ("bounds.disk_radius", "ground-truth disk radius for the false-positive rule"),
    ("train.divergence", "mse or kld"),
    ("train.epochs", "training epochs, at least 1"),
    ("train.batch_size", "images per optimizer step"),
    ("train.seed", "shuffling and augmentation seed"),
    ("train.optimizer.lr", "Adam learning rate"),
    ("train.optimizer.beta1", "Adam first-moment decay"),
    ("train.optimizer.beta2", "Adam second-moment decay"),
    ("train.optimizer.eps", "Adam denominator epsilon"),
    ("train.optimizer.weight_decay", "decoupled weight decay, applied as lr*wd*w"),
    ("train.optimizer.warmup_steps", "linear learning-rate warmup steps"),
    ("train.augment.enabled", "apply augmentation during training"),
    ("train.augment.flip_prob", "horizontal flip probability"),
    ("train.augment.max_rotation_deg", "rotation drawn uniformly in +-this, degrees (convention)"),
    ("train.augment.intensity_shift", "intensity shift drawn uniformly in +-this (convention)"),
    ("train.augment.contrast", "contrast scale range (convention)"),
    ("eval.split", "split evaluated by infer, eval and ablate"),
    ("eval.svg", "also write roc.svg and froc.svg"),
];

fn flatten_into(prefix: &str, value: &Value, out: &mut Map<String, Value>) {
    match value {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf.clone());
        }
    }
}

/// Dotted keys mapped to leaf values; arrays are leaves.
pub fn flatten(value: &Value) -> Map<String, Value> {
    let mut out = Map::new();
    flatten_into("", value, &mut out);
    out
}

fn unflatten(flat: &Map<String, Value>) -> Value {
    let mut root = Map::new();
    for (key, v) in flat {
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for part in &parts[..parts.len() - 1] {
            node = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .expect("keys never collide with leaves");
        }
        node.insert(parts[parts.len() - 1].to_string(), v.clone());
    }
    Value::Object(root)
}

impl RunConfig {
    pub fn to_flat(&self) -> Map<String, Value> {
        flatten(&serde_json::to_value(self).expect("config serializes"))
    }

    fn from_flat(flat: &Map<String, Value>) -> CliResult<Self> {
        serde_json::from_value(unflatten(flat)).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    /// Defaults overlaid with `file` (if any) and then `sets`.
    pub fn resolve(file: Option<&Path>, sets: &[String]) -> CliResult<Self> {
        let mut flat = Self::default().to_flat();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("malformed config {}: {e}", path.display())))?;
            if !value.is_object() {
                return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
            }
            for (k, v) in flatten(&value) {
                set_key(&mut flat, &k, v)?;
            }
        }
        for s in sets {
            let (k, raw) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {s:?}")))?;
            set_key(&mut flat, k.trim(), parse_value(raw.trim()))?;
        }
        Self::from_flat(&flat)
    }

    /// Applies one override to an already resolved config.
    pub fn with(&self, key: &str, value: Value) -> CliResult<Self> {
        let mut flat = self.to_flat();
        set_key(&mut flat, key, value)?;
        Self::from_flat(&flat)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model.clone(),
            bounds: self.bounds,
            divergence: self.train.divergence,
            optimizer: self.train.optimizer,
            augment: self.train.augment,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.train.seed,
        }
    }

    /// Every section's own validation, reported as a usage error.
    pub fn validate(&self) -> CliResult<()> {
        let usage = |e: wlk::Error| CliError::Usage(format!("invalid configuration: {e}"));
        self.synth.validate().map_err(usage)?;
        self.bounds.validate().map_err(usage)?;
        self.train_config().validate().map_err(usage)?;
        Ok(())
    }

    /// Pretty JSON with sorted dotted keys and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Value::Object(self.to_flat())).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn write_resolved(&self, dir: &Path) -> CliResult<()> {
        crate::write_file(&dir.join(RESOLVED_NAME), self.to_json().as_bytes())
    }
}

fn set_key(flat: &mut Map<String, Value>, key: &str, value: Value) -> CliResult<()> {
    match flat.get_mut(key) {
        Some(slot) => {
            *slot = value;
            Ok(())
        }
        None => Err(CliError::Usage(format!(
            "unknown config key {key:?}; run with --help for the list of keys"
        ))),
    }
}

/// JSON if it parses, otherwise a bare string (`kld`, `test`).
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// The key table shown by `--help`: every key, its default and meaning.
pub fn help_text() -> String {
    let flat = RunConfig::default().to_flat();
    let width = flat.keys().map(String::len).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (set with --config FILE or --set key=value):\n");
    for (key, value) in &flat {
        let doc = KEY_DOCS.iter().find(|(k, _)| k == key).map_or("", |(_, d)| *d);
        let _ = writeln!(s, "  {key:<width$}  {value}  {doc}");
    }
    s
}
