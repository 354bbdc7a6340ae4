use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::augment::{augment, AugmentConfig};
use super::model::{ModelConfig, TinyNet};
use super::tape::Grads;
use crate::annotations::{Dataset, ImageRecord, Point, Split};
use crate::error::{Error, Result};
use crate::evalmetrics::{auroc, image_score};
use crate::grid::Heatmap;
use crate::io;
use crate::supervision::{pyramid_bounds, BoundParams};
use crate::windowloss::{pyramid_loss, Divergence};

/// An image already mapped into the square input space.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Heatmap,
    pub points: Vec<Point>,
}

impl Sample {
    pub fn is_positive(&self) -> bool {
        !self.points.is_empty()
    }

    /// Warps a decoded image and its points into the input space.
    pub fn from_record(record: &ImageRecord, image: &Heatmap, input_size: u32) -> Result<Self> {
        if image.shape() != (record.height as usize, record.width as usize) {
            return Err(Error::Validation(format!(
                "{}: manifest says {}x{}, file is {}x{}",
                record.image_path,
                record.width,
                record.height,
                image.cols(),
                image.rows()
            )));
        }
        let t = record.transform(input_size);
        Ok(Self {
            image: t.warp_image(image, input_size),
            points: record.input_points(input_size),
        })
    }
}

/// Loads every record of `split`, resolving image paths against `dir`.
pub fn load_split(dataset: &Dataset, dir: &Path, split: Split) -> Result<Vec<Sample>> {
    dataset
        .split(split)
        .map(|rec| {
            let img = io::read_image(&Dataset::image_path(dir, rec))?;
            Sample::from_record(rec, &img, dataset.input_size)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub bounds: BoundParams,
    pub divergence: Divergence,
    pub optimizer: AdamConfig,
    pub augment: AugmentConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds shuffling and augmentation; initialization uses `model.seed`.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            bounds: BoundParams::default(),
            divergence: Divergence::Mse,
            optimizer: AdamConfig::default(),
            augment: AugmentConfig::default(),
            epochs: 6,
            batch_size: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.bounds.validate()?;
        self.augment.validate()?;
        if self.epochs == 0 {
            return Err(Error::Validation("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        let o = &self.optimizer;
        let ok = o.lr >= 0.0
            && o.weight_decay >= 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2)
            && o.eps > 0.0
            && [o.lr, o.weight_decay].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::Validation(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

/// One row of the training log. Epoch 0 is the untrained model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_auroc: f64,
}

pub const LOG_HEADER: &str = "epoch,train_loss,val_auroc";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let loss = self.train_loss.map(|l| format!("{l:.8}")).unwrap_or_default();
        format!("{},{},{:.8}", self.epoch, loss, self.val_auroc)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the best validation AUROC (later epoch on
    /// ties).
    pub model: TinyNet,
    pub best_epoch: usize,
    pub best_val_auroc: f64,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        for row in &self.log {
            s.push_str(&row.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Image-level AUROC of `model` on `samples`, scoring each image by the max
/// of its merged map.
pub fn evaluate_auroc(model: &TinyNet, samples: &[Sample]) -> Result<f64> {
    let mut scores = Vec::with_capacity(samples.len());
    for s in samples {
        scores.push(image_score(&model.predict(&s.image)?)?);
    }
    let labels: Vec<bool> = samples.iter().map(Sample::is_positive).collect();
    auroc(&scores, &labels)
}

/// Loss and parameter gradients for one sample.
pub fn sample_gradients(
    model: &TinyNet,
    image: &Heatmap,
    points: &[Point],
    bounds: &BoundParams,
    divergence: Divergence,
) -> Result<(f64, Grads)> {
    let fwd = model.forward(image)?;
    let targets = pyramid_bounds(points, model.config.input_size, &model.config.strides, bounds)?;
    let loss = pyramid_loss(&fwd.output.maps, &targets, divergence)?;
    let seeds: Vec<Heatmap> = loss.levels.into_iter().map(|l| l.grad).collect();
    let grads = model.backward(&fwd, &seeds)?;
    Ok((loss.total, grads))
}

/// One optimizer step on the mean loss of `batch`. Returns the mean loss.
pub fn train_step(
    model: &mut TinyNet,
    opt: &mut Adam,
    batch: &[(Heatmap, Vec<Point>)],
    bounds: &BoundParams,
    divergence: Divergence,
) -> Result<f64> {
    let mut total = 0.0;
    let mut acc = Grads::zeros_like(&model.params);
    for (img, pts) in batch {
        let (loss, g) = sample_gradients(model, img, pts, bounds, divergence)?;
        total += loss;
        acc.add_assign(&g);
    }
    let n = batch.len() as f64;
    acc.scale(1.0 / n);
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite training loss {total}")));
    }
    opt.step(&mut model.params, &acc)?;
    Ok(total / n)
}

/// Trains from scratch, calling `on_epoch` after every validation pass
/// (including the initial one at epoch 0).
pub fn train_with(
    cfg: &TrainConfig,
    train: &[Sample],
    val: &[Sample],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Validation("validation split is empty".into()));
    }
    let n = cfg.model.input_size;
    for s in train.iter().chain(val) {
        if s.image.shape() != (n, n) {
            return Err(Error::Contract(format!(
                "sample is {:?}, model input is {n}x{n}",
                s.image.shape()
            )));
        }
    }

    let mut model = TinyNet::new(cfg.model.clone())?;
    let mut opt = Adam::new(cfg.optimizer, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let first = EpochLog {
        epoch: 0,
        train_loss: None,
        val_auroc: evaluate_auroc(&model, val)?,
    };
    on_epoch(&first);
    let mut log = vec![first];
    let mut best: Option<(usize, f64, TinyNet)> = None;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(Heatmap, Vec<Point>)> = chunk
                .iter()
                .map(|&i| augment(&mut rng, &train[i].image, &train[i].points, &cfg.augment))
                .collect();
            let l = train_step(&mut model, &mut opt, &batch, &cfg.bounds, cfg.divergence)?;
            loss_sum += l * chunk.len() as f64;
        }
        let row = EpochLog {
            epoch,
            train_loss: Some(loss_sum / train.len() as f64),
            val_auroc: evaluate_auroc(&model, val)?,
        };
        on_epoch(&row);
        log.push(row);
        if best.as_ref().is_none_or(|b| row.val_auroc >= b.1) {
            best = Some((epoch, row.val_auroc, model.clone()));
        }
    }

    let (best_epoch, best_val_auroc, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_val_auroc,
        log,
    })
}

pub fn train(cfg: &TrainConfig, train: &[Sample], val: &[Sample]) -> Result<TrainOutcome> {
    train_with(cfg, train, val, |_| {})
}
