use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::Value;
use wlk::evalmetrics::{eval_images, evaluate, froc_plot, froc_svg, roc_plot, roc_svg, EvalSummary, Evaluation};
use wlk::supervision::pyramid_bounds;
use wlk::synthgen::{generate_corpus, MANIFEST_NAME};
use wlk::tinynet::{checkpoint, load_split, train_with, TinyNet};
use wlk::{io, Dataset, Heatmap, Split};

use crate::ablate;
use crate::config::{parse_value, RunConfig};
use crate::error::{CliError, CliResult};
use crate::{create_dir, require_dir, write_file, Command, ConfigArgs, Invocation};

pub const CHECKPOINT_NAME: &str = "model.wlkw";
pub const TRAIN_LOG_NAME: &str = "train_log.csv";
pub const SUMMARY_NAME: &str = "summary.json";

/// Resolves the config layers plus command-flag overrides and validates.
pub fn resolve(args: &ConfigArgs, flags: &[(&str, Value)]) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::resolve(args.config.as_deref(), &args.sets)?;
    for (k, v) in flags {
        cfg = cfg.with(k, v.clone())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn dispatch(inv: Invocation) -> CliResult<()> {
    let args = &inv.config;
    match inv.command {
        Command::Synth { out, seed } => {
            let flags: Vec<_> = seed.map(|s| ("synth.seed", Value::from(s))).into_iter().collect();
            synth(&resolve(args, &flags)?, &out)
        }
        Command::Bounds { data, out, split } => {
            let split = split
                .map(|s| s.parse::<Split>().map_err(|e| CliError::Usage(e.to_string())))
                .transpose()?;
            bounds(&resolve(args, &[])?, &data, &out, split)
        }
        Command::Train {
            data,
            out,
            epochs,
            divergence,
        } => {
            let mut flags = Vec::new();
            if let Some(e) = epochs {
                flags.push(("train.epochs", Value::from(e)));
            }
            if let Some(d) = divergence {
                flags.push(("train.divergence", parse_value(&d)));
            }
            train(&resolve(args, &flags)?, &data, &out)
        }
        Command::Infer { data, checkpoint, out } => infer(&resolve(args, &[])?, &data, &checkpoint, &out),
        Command::Eval {
            data,
            predictions,
            out,
            svg,
        } => {
            let flags: Vec<_> = svg.then(|| ("eval.svg", Value::Bool(true))).into_iter().collect();
            eval(&resolve(args, &flags)?, &data, &predictions, &out)
        }
        Command::Curves { eval_dir, out } => {
            let out = out.unwrap_or_else(|| eval_dir.clone());
            curves(&eval_dir, &out)
        }
        Command::Ablate {
            data,
            out,
            grid,
            divergences,
            seeds,
            jobs,
        } => {
            let cfg = resolve(args, &[])?;
            let cells = match grid {
                Some(path) => ablate::load_grid(&path)?,
                None => ablate::standard_grid(&ablate::parse_divergences(&divergences)?),
            };
            if seeds.is_empty() {
                return Err(CliError::Usage("--seeds must name at least one seed".into()));
            }
            if jobs == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            ablate::run(&cfg, &data, &out, &cells, &seeds, jobs)
        }
        Command::AblateRun { data, out } => {
            let cfg = resolve(args, &[])?;
            ablate::run_single(&cfg, &data, &out).map(|_| ())
        }
    }
}

/// Loads and validates `dir/manifest.json`.
pub fn load_dataset(dir: &Path) -> CliResult<Dataset> {
    require_dir(dir, "data")?;
    let ds = Dataset::load(&dir.join(MANIFEST_NAME))?;
    ds.validate().into_result()?;
    Ok(ds)
}

fn check_model_fits(cfg: &RunConfig, ds: &Dataset) -> CliResult<()> {
    if cfg.model.input_size != ds.input_size as usize {
        return Err(CliError::Data(format!(
            "manifest input_size {} differs from model.input_size {}",
            ds.input_size, cfg.model.input_size
        )));
    }
    let coarsest = *cfg.model.strides.last().expect("validated strides") as u32;
    ds.check_stride(coarsest)?;
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    create_dir(out)?;
    let ds = generate_corpus(&cfg.synth, out)?;
    cfg.write_resolved(out)?;
    let count = |s| ds.split(s).count();
    eprintln!(
        "wrote {} images ({} train, {} val, {} test) to {}",
        ds.records.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        out.display()
    );
    Ok(())
}

pub fn bounds(cfg: &RunConfig, data: &Path, out: &Path, split: Option<Split>) -> CliResult<()> {
    let ds = load_dataset(data)?;
    check_model_fits(cfg, &ds)?;
    create_dir(out)?;
    let mut files = 0;
    for rec in ds.records.iter().filter(|r| split.is_none_or(|s| r.split == s)) {
        let points = rec.input_points(ds.input_size);
        let levels = pyramid_bounds(&points, cfg.model.input_size, &cfg.model.strides, &cfg.bounds)?;
        let stem = rec.stem();
        for (k, pair) in levels.iter().enumerate() {
            io::write_wlk(&out.join(format!("{stem}.lower.l{k}.wlk")), &pair.lower)?;
            io::write_wlk(&out.join(format!("{stem}.upper.l{k}.wlk")), &pair.upper)?;
            files += 2;
        }
    }
    cfg.write_resolved(out)?;
    eprintln!("wrote {files} bound grids to {}", out.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<()> {
    let ds = load_dataset(data)?;
    check_model_fits(cfg, &ds)?;
    let tr = load_split(&ds, data, Split::Train)?;
    let va = load_split(&ds, data, Split::Val)?;
    create_dir(out)?;
    let outcome = train_with(&cfg.train_config(), &tr, &va, |row| {
        let loss = row.train_loss.map_or_else(|| "-".to_string(), |l| format!("{l:.6}"));
        eprintln!("epoch {:>3}  loss {loss}  val_auroc {:.4}", row.epoch, row.val_auroc);
    })?;
    checkpoint::save(&out.join(CHECKPOINT_NAME), &outcome.model)?;
    write_file(&out.join(TRAIN_LOG_NAME), outcome.log_csv().as_bytes())?;
    cfg.write_resolved(out)?;
    eprintln!(
        "best epoch {} (val AUROC {:.4}); checkpoint {}",
        outcome.best_epoch,
        outcome.best_val_auroc,
        out.join(CHECKPOINT_NAME).display()
    );
    Ok(())
}

/// Merged heatmaps for `split`, in manifest order, rounded to the stored
/// float32 precision so in-memory and on-disk evaluation agree.
pub fn predict_split(model: &TinyNet, ds: &Dataset, data: &Path, split: Split) -> CliResult<Vec<Heatmap>> {
    let samples = load_split(ds, data, split)?;
    samples
        .iter()
        .map(|s| {
            let map = model.predict(&s.image)?;
            Ok(map.map(|v| v as f32 as f64))
        })
        .collect()
}

pub fn infer(cfg: &RunConfig, data: &Path, ckpt: &Path, out: &Path) -> CliResult<()> {
    let ds = load_dataset(data)?;
    let model = checkpoint::load(ckpt)?;
    if model.config.input_size != ds.input_size as usize {
        return Err(CliError::Data(format!(
            "checkpoint expects {}-pixel inputs, manifest has {}",
            model.config.input_size, ds.input_size
        )));
    }
    let split = cfg.eval.split;
    let maps = predict_split(&model, &ds, data, split)?;
    create_dir(out)?;
    for (rec, map) in ds.split(split).zip(&maps) {
        io::write_wlk(&out.join(format!("{}.wlk", rec.stem())), map)?;
    }
    cfg.write_resolved(out)?;
    eprintln!("wrote {} {split} heatmaps to {}", maps.len(), out.display());
    Ok(())
}

/// Scores `maps` (one per record of `split`, manifest order).
pub fn score(ds: &Dataset, split: Split, maps: Vec<Heatmap>, disk_radius: f64) -> CliResult<(Evaluation, EvalSummary)> {
    let positives = ds.split(split).filter(|r| r.is_positive()).count();
    let images = eval_images(ds, split, maps)?;
    let ev = evaluate(&images, disk_radius)?;
    let summary = ev.summary(positives);
    Ok((ev, summary))
}

pub fn roc_csv(ev: &Evaluation) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &ev.roc.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

pub fn froc_csv(ev: &Evaluation) -> String {
    let mut s = String::from("threshold,fp_per_image,recall\n");
    for p in &ev.froc.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fp_per_image, p.recall);
    }
    s
}

pub fn summary_json(summary: &EvalSummary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

pub fn write_evaluation(out: &Path, ev: &Evaluation, summary: &EvalSummary, svg: bool) -> CliResult<()> {
    write_file(&out.join("roc.csv"), roc_csv(ev).as_bytes())?;
    write_file(&out.join("froc.csv"), froc_csv(ev).as_bytes())?;
    write_file(&out.join(SUMMARY_NAME), summary_json(summary).as_bytes())?;
    if svg {
        write_file(&out.join("roc.svg"), roc_svg(&ev.roc).as_bytes())?;
        write_file(&out.join("froc.svg"), froc_svg(&ev.froc).as_bytes())?;
    }
    Ok(())
}

fn read_predictions(ds: &Dataset, split: Split, dir: &Path) -> CliResult<Vec<Heatmap>> {
    require_dir(dir, "predictions")?;
    ds.split(split)
        .map(|rec| {
            let path: PathBuf = dir.join(format!("{}.wlk", rec.stem()));
            if !path.is_file() {
                return Err(CliError::Data(format!("missing prediction {}", path.display())));
            }
            Ok(io::read_wlk(&path)?)
        })
        .collect()
}

pub fn eval(cfg: &RunConfig, data: &Path, predictions: &Path, out: &Path) -> CliResult<()> {
    let ds = load_dataset(data)?;
    let split = cfg.eval.split;
    let maps = read_predictions(&ds, split, predictions)?;
    let (ev, summary) = score(&ds, split, maps, cfg.bounds.disk_radius)?;
    create_dir(out)?;
    write_evaluation(out, &ev, &summary, cfg.eval.svg)?;
    cfg.write_resolved(out)?;
    println!(
        "auroc {:.4}  froc_score {:.4}  recall@0.1 {:.4}",
        summary.auroc, summary.froc_score, summary.recall_at_01
    );
    Ok(())
}

fn read_pairs(path: &Path, columns: [&str; 2]) -> CliResult<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CliError::Data(format!("{} has no column {name}", path.display())))
    };
    let (a, b) = (find(columns[0])?, find(columns[1])?);
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').collect();
            let num = |j: usize| {
                fields
                    .get(j)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| CliError::Data(format!("{} line {}: bad number", path.display(), i + 2)))
            };
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

pub fn curves(eval_dir: &Path, out: &Path) -> CliResult<()> {
    require_dir(eval_dir, "eval")?;
    let summary_path = eval_dir.join(SUMMARY_NAME);
    let text = std::fs::read_to_string(&summary_path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", summary_path.display())))?;
    let summary: EvalSummary = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("malformed {}: {e}", summary_path.display())))?;
    let roc = read_pairs(&eval_dir.join("roc.csv"), ["fpr", "tpr"])?;
    let froc = read_pairs(&eval_dir.join("froc.csv"), ["fp_per_image", "recall"])?;
    create_dir(out)?;
    write_file(&out.join("roc.svg"), roc_plot(&roc, summary.auroc).as_bytes())?;
    write_file(&out.join("froc.svg"), froc_plot(&froc, summary.froc_score).as_bytes())?;
    eprintln!("wrote roc.svg and froc.svg to {}", out.display());
    Ok(())
}
