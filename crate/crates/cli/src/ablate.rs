//! Grid runs over bound settings and divergences.
//!
//! Every (cell, seed) pair trains from scratch on the same corpus, then
//! scores the evaluated split. `ablation.csv` holds one row per cell with
//! metrics averaged over seeds; per-run artifacts live under
//! `cells/cell_NN/seed_S/`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Child, Command};

use serde::{Deserialize, Serialize};
use wlk::evalmetrics::EvalSummary;
use wlk::tinynet::{load_split, train};
use wlk::{Divergence, Split};

use crate::commands::{load_dataset, predict_split, score, summary_json, SUMMARY_NAME, TRAIN_LOG_NAME};
use crate::config::{RunConfig, RESOLVED_NAME};
use crate::error::{CliError, CliResult};
use crate::{create_dir, write_file};

pub const TABLE_NAME: &str = "ablation.csv";
pub const TABLE_HEADER: &str = "tau,r_lower,r_upper,divergence,auroc,recall_at_01,froc_score";

/// Stand-in for a zero softness, which the bound formula cannot take.
pub const HARD_TAU: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub tau: f64,
    pub r_lower: f64,
    pub r_upper: f64,
    pub divergence: Divergence,
}

/// Rows of the standard grid as `(tau, r_lower, r_upper)` for 1024-pixel
/// inputs: a hard disk mask, a soft mask, the default window, wider lower
/// radii and a range of softness values.
pub const STANDARD_ROWS: [(f64, f64, f64); 8] = [
    (0.0, 50.0, 50.0),
    (2.0, 50.0, 50.0),
    (2.0, 50.0, 200.0),
    (2.0, 100.0, 200.0),
    (2.0, 150.0, 200.0),
    (0.4, 50.0, 200.0),
    (5.0, 50.0, 200.0),
    (10.0, 50.0, 200.0),
];

/// The standard grid scaled to `input_size`, for each divergence.
pub fn standard_grid_for(input_size: usize, divergences: &[Divergence]) -> Vec<Cell> {
    let f = input_size as f64 / 1024.0;
    divergences
        .iter()
        .flat_map(|&divergence| {
            STANDARD_ROWS.iter().map(move |&(tau, r_lower, r_upper)| Cell {
                tau: if tau == 0.0 { HARD_TAU } else { tau * f },
                r_lower: r_lower * f,
                r_upper: r_upper * f,
                divergence,
            })
        })
        .collect()
}

/// The standard grid at the default 128-pixel input.
pub fn standard_grid(divergences: &[Divergence]) -> Vec<Cell> {
    standard_grid_for(128, divergences)
}

pub fn parse_divergences(names: &[String]) -> CliResult<Vec<Divergence>> {
    names
        .iter()
        .map(|n| n.parse::<Divergence>().map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

pub fn load_grid(path: &Path) -> CliResult<Vec<Cell>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read grid {}: {e}", path.display())))?;
    let cells: Vec<Cell> =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed grid {}: {e}", path.display())))?;
    if cells.is_empty() {
        return Err(CliError::Usage(format!("grid {} has no cells", path.display())));
    }
    Ok(cells)
}

/// The base config specialized to one cell and seed. The seed drives both
/// initialization and shuffling.
pub fn cell_config(base: &RunConfig, cell: &Cell, seed: u64) -> CliResult<RunConfig> {
    let mut cfg = base.clone();
    cfg.bounds.tau = cell.tau;
    cfg.bounds.r_lower = cell.r_lower;
    cfg.bounds.r_upper = cell.r_upper;
    cfg.train.divergence = cell.divergence;
    cfg.train.seed = seed;
    cfg.model.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Trains, predicts and scores one configuration, writing its log,
/// summary and resolved config under `out`.
pub fn run_single(cfg: &RunConfig, data: &Path, out: &Path) -> CliResult<EvalSummary> {
    let ds = load_dataset(data)?;
    let tr = load_split(&ds, data, Split::Train)?;
    let va = load_split(&ds, data, Split::Val)?;
    create_dir(out)?;
    cfg.write_resolved(out)?;
    let outcome = train(&cfg.train_config(), &tr, &va)?;
    write_file(&out.join(TRAIN_LOG_NAME), outcome.log_csv().as_bytes())?;
    let split = cfg.eval.split;
    let maps = predict_split(&outcome.model, &ds, data, split)?;
    let (_, summary) = score(&ds, split, maps, cfg.bounds.disk_radius)?;
    write_file(&out.join(SUMMARY_NAME), summary_json(&summary).as_bytes())?;
    Ok(summary)
}

fn read_summary(dir: &Path) -> CliResult<EvalSummary> {
    let path = dir.join(SUMMARY_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("malformed {}: {e}", path.display())))
}

struct Job {
    cell: usize,
    dir: PathBuf,
    cfg: RunConfig,
}

/// Seed-mean metrics of one cell, or `None` if any run failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub metrics: Option<(f64, f64, f64)>,
}

pub fn table_csv(results: &[CellResult]) -> String {
    let mut s = format!("{TABLE_HEADER}\n");
    for r in results {
        let c = &r.cell;
        let _ = write!(s, "{},{},{},{}", c.tau, c.r_lower, c.r_upper, c.divergence);
        match r.metrics {
            Some((auroc, r01, froc)) => {
                let _ = writeln!(s, ",{auroc:.6},{r01:.6},{froc:.6}");
            }
            None => s.push_str(",error,error,error\n"),
        }
    }
    s
}

fn spawn(job: &Job, data: &Path) -> std::io::Result<Child> {
    let exe = std::env::current_exe()?;
    Command::new(exe)
        .arg("ablate-run")
        .arg("--data")
        .arg(data)
        .arg("--out")
        .arg(&job.dir)
        .arg("--config")
        .arg(job.dir.join(RESOLVED_NAME))
        .spawn()
}

pub fn run(base: &RunConfig, data: &Path, out: &Path, cells: &[Cell], seeds: &[u64], jobs: usize) -> CliResult<()> {
    // fail fast on unreadable data rather than once per cell
    load_dataset(data)?;
    create_dir(out)?;
    base.write_resolved(out)?;

    let mut queue = Vec::new();
    let mut failed_cells = vec![false; cells.len()];
    for (i, cell) in cells.iter().enumerate() {
        for &seed in seeds {
            let dir = out.join("cells").join(format!("cell_{i:02}")).join(format!("seed_{seed}"));
            match cell_config(base, cell, seed) {
                Ok(cfg) => queue.push(Job { cell: i, dir, cfg }),
                Err(e) => {
                    eprintln!("cell {i}: {e}");
                    failed_cells[i] = true;
                }
            }
        }
    }

    let mut outcomes: Vec<Option<EvalSummary>> = Vec::with_capacity(queue.len());
    if jobs <= 1 {
        for job in &queue {
            eprintln!("cell {} ({})", job.cell, job.dir.display());
            match run_single(&job.cfg, data, &job.dir) {
                Ok(s) => outcomes.push(Some(s)),
                Err(e) => {
                    eprintln!("cell {}: {e}", job.cell);
                    outcomes.push(None);
                }
            }
        }
    } else {
        for chunk in queue.chunks(jobs) {
            let mut running = Vec::new();
            for job in chunk {
                create_dir(&job.dir)?;
                job.cfg.write_resolved(&job.dir)?;
                running.push(spawn(job, data));
            }
            for (job, child) in chunk.iter().zip(running) {
                let ok = match child {
                    Ok(mut c) => c.wait().map(|s| s.success()).unwrap_or(false),
                    Err(e) => {
                        eprintln!("cell {}: cannot start worker: {e}", job.cell);
                        false
                    }
                };
                outcomes.push(if ok { read_summary(&job.dir).ok() } else { None });
            }
        }
    }

    let mut sums = vec![(0.0, 0.0, 0.0, 0usize); cells.len()];
    for (job, outcome) in queue.iter().zip(&outcomes) {
        match outcome {
            Some(s) => {
                let acc = &mut sums[job.cell];
                acc.0 += s.auroc;
                acc.1 += s.recall_at_01;
                acc.2 += s.froc_score;
                acc.3 += 1;
            }
            None => failed_cells[job.cell] = true,
        }
    }
    let results: Vec<CellResult> = cells
        .iter()
        .zip(&sums)
        .zip(&failed_cells)
        .map(|((cell, &(a, r, f, n)), &failed)| CellResult {
            cell: *cell,
            metrics: (!failed && n > 0).then(|| (a / n as f64, r / n as f64, f / n as f64)),
        })
        .collect();
    let table = table_csv(&results);
    write_file(&out.join(TABLE_NAME), table.as_bytes())?;
    print!("{table}");
    let failures = results.iter().filter(|r| r.metrics.is_none()).count();
    if failures > 0 {
        eprintln!("{failures} of {} cells failed; see the log above", results.len());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_scales_lengths() {
        let g = standard_grid(&[Divergence::Mse]);
        assert_eq!(g.len(), STANDARD_ROWS.len());
        assert_eq!(g[0].tau, HARD_TAU);
        assert_eq!((g[2].tau, g[2].r_lower, g[2].r_upper), (0.25, 6.25, 25.0));
        assert_eq!(g[4].r_lower, 18.75);
        assert_eq!(g[7].tau, 1.25);
        assert_eq!(standard_grid(&[Divergence::Mse, Divergence::Kld]).len(), 16);
    }

    #[test]
    fn table_marks_failures() {
        let cell = Cell {
            tau: 0.25,
            r_lower: 6.25,
            r_upper: 25.0,
            divergence: Divergence::Kld,
        };
        let csv = table_csv(&[
            CellResult {
                cell,
                metrics: Some((0.5, 0.25, 0.125)),
            },
            CellResult { cell, metrics: None },
        ]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER);
        assert_eq!(lines[1], "0.25,6.25,25,kld,0.500000,0.250000,0.125000");
        assert_eq!(lines[2], "0.25,6.25,25,kld,error,error,error");
    }

    #[test]
    fn grid_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        std::fs::write(&p, r#"[{"tau": 0.25, "r_lower": 6.25, "r_upper": 25, "divergence": "mse"}]"#).unwrap();
        assert_eq!(load_grid(&p).unwrap().len(), 1);
        std::fs::write(&p, "[]").unwrap();
        assert!(matches!(load_grid(&p), Err(CliError::Usage(_))));
    }

    #[test]
    fn invalid_cell_is_rejected() {
        let cell = Cell {
            tau: 0.25,
            r_lower: 30.0,
            r_upper: 25.0,
            divergence: Divergence::Mse,
        };
        assert!(cell_config(&RunConfig::default(), &cell, 0).is_err());
    }
}
