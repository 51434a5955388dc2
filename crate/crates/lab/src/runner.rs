use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use horizon_core::diagnostics::{
    reliability_summary, window_mean, DiagnosticsRecord, ReliabilitySummary, SeedCurve, RELIABILITY_WINDOW,
};
use horizon_core::ppo::Trainer;
use horizon_core::routing::ActorMode;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::csvlog::{read_diagnostics, write_file, DiagnosticsWriter};
use crate::error::{io_err, LabError, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const META_FILE: &str = "meta.json";
pub const RELIABILITY_FILE: &str = "reliability.json";

/// Written last; its presence marks a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: ActorMode,
    pub seed: u64,
    pub updates: usize,
    pub env_steps: usize,
    pub diverged: bool,
    /// Mean return over the trailing window (last return if diverged).
    pub final_return: f64,
    pub final_record: Option<DiagnosticsRecord>,
}

/// Wall-clock facts, kept apart from the reproducible artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub started_unix: u64,
    pub wall_seconds: f64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub summary: RunSummary,
    /// True when an existing finished run was reused.
    pub resumed: bool,
}

/// One seed's diagnostics, as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<DiagnosticsRecord>,
}

impl SeedRun {
    pub fn curve(&self) -> SeedCurve {
        SeedCurve {
            returns: self.records.iter().map(|r| r.mean_return).collect(),
            diverged: self.records.last().is_some_and(|r| r.diverged),
        }
    }
}

pub fn run_dir(root: &Path, mode: ActorMode, seed: u64) -> PathBuf {
    root.join(mode.as_str()).join(format!("seed_{seed}"))
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes to JSON");
    s.push('\n');
    s
}

fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join(SUMMARY_FILE);
    let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| LabError::Report(format!("{}: {e}", path.display())))
}

/// A finished run whose snapshot matches `resolved`, if there is one.
fn existing_run(dir: &Path, resolved: &TrainConfig) -> Result<Option<RunSummary>> {
    if !dir.join(SUMMARY_FILE).is_file() {
        return Ok(None);
    }
    let snapshot = TrainConfig::load(&dir.join(CONFIG_FILE));
    match snapshot {
        Ok(cfg) if &cfg == resolved => read_summary(dir).map(Some),
        _ => Err(LabError::ConfigMismatch(dir.to_path_buf())),
    }
}

/// Trains one `(mode, seed)` pair under `root`, or reuses a finished run with
/// an identical config snapshot. `observe` sees every record as it is logged.
pub fn run_seed(
    cfg: &TrainConfig,
    mode: ActorMode,
    seed: u64,
    root: &Path,
    observe: &mut dyn FnMut(ActorMode, u64, &DiagnosticsRecord),
) -> Result<RunArtifact> {
    let dir = run_dir(root, mode, seed);
    let resolved = cfg.resolved(mode, seed);
    if let Some(summary) = existing_run(&dir, &resolved)? {
        return Ok(RunArtifact {
            dir,
            summary,
            resumed: true,
        });
    }
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_file(&dir.join(CONFIG_FILE), &resolved.to_toml())?;

    let started = Instant::now();
    let started_unix = unix_now();
    let mut trainer = Trainer::new(cfg.trainer_config(mode), seed)?;
    let mut log = DiagnosticsWriter::create(&dir.join(DIAGNOSTICS_FILE), cfg.gammas.len())?;
    let mut records = Vec::with_capacity(cfg.ppo.total_updates);
    for _ in 0..cfg.ppo.total_updates {
        let rec = trainer.step()?;
        log.write(&rec)?;
        observe(mode, seed, &rec);
        let stop = rec.diverged;
        records.push(rec);
        if stop {
            break;
        }
    }
    drop(log);

    let run = SeedRun { seed, records };
    let curve = run.curve();
    let final_return = if curve.returns.is_empty() {
        f64::NAN
    } else if curve.diverged {
        *curve.returns.last().expect("non-empty")
    } else {
        window_mean(&curve.returns, RELIABILITY_WINDOW)?
    };
    let summary = RunSummary {
        mode,
        seed,
        updates: run.records.len(),
        env_steps: run.records.len() * cfg.ppo.rollout_length,
        diverged: curve.diverged,
        final_return,
        final_record: run.records.last().cloned(),
    };
    let meta = RunMeta {
        started_unix,
        wall_seconds: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write_file(&dir.join(META_FILE), &to_json(&meta))?;
    write_file(&dir.join(SUMMARY_FILE), &to_json(&summary))?;
    Ok(RunArtifact {
        dir,
        summary,
        resumed: false,
    })
}

/// Runs every `(mode, seed)` pair in order. A diverged seed is recorded and
/// the sweep moves on.
pub fn run_experiment(
    cfg: &TrainConfig,
    modes: &[ActorMode],
    seeds: &[u64],
    observe: &mut dyn FnMut(ActorMode, u64, &DiagnosticsRecord),
) -> Result<Vec<RunArtifact>> {
    let root = cfg.output_root();
    std::fs::create_dir_all(&root).map_err(io_err(&root))?;
    let probe = root.join(".write_probe");
    std::fs::write(&probe, b"").map_err(io_err(&root))?;
    let _ = std::fs::remove_file(&probe);

    let mut out = Vec::with_capacity(modes.len() * seeds.len());
    for &mode in modes {
        for &seed in seeds {
            out.push(run_seed(cfg, mode, seed, &root, observe)?);
        }
    }
    Ok(out)
}

/// All configured seeds across all sweep modes, plus a per-mode
/// `reliability.json`.
pub fn sweep(
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(ActorMode, u64, &DiagnosticsRecord),
) -> Result<Vec<RunArtifact>> {
    let modes = cfg.sweep_modes();
    let artifacts = run_experiment(cfg, &modes, &cfg.seeds, observe)?;
    if cfg.seeds.is_empty() {
        return Ok(artifacts);
    }
    let root = cfg.output_root();
    for &mode in &modes {
        let runs = load_runs(&root.join(mode.as_str()), Some(&cfg.seeds))?;
        let curves: Vec<SeedCurve> = runs.iter().map(SeedRun::curve).filter(|c| !c.returns.is_empty()).collect();
        if curves.is_empty() {
            continue;
        }
        let summary = reliability_summary(&curves, RELIABILITY_WINDOW)?;
        write_file(&root.join(mode.as_str()).join(RELIABILITY_FILE), &to_json(&summary))?;
    }
    Ok(artifacts)
}

/// Reads `seed_<n>/diagnostics.csv` under a mode directory, ordered by seed.
/// With `seeds` given only those are read, and each must exist.
pub fn load_runs(mode_dir: &Path, seeds: Option<&[u64]>) -> Result<Vec<SeedRun>> {
    let mut found: Vec<u64> = match seeds {
        Some(s) => s.to_vec(),
        None => {
            let entries = std::fs::read_dir(mode_dir).map_err(io_err(mode_dir))?;
            let mut seeds = Vec::new();
            for entry in entries {
                let entry = entry.map_err(io_err(mode_dir))?;
                let name = entry.file_name();
                if let Some(seed) = name.to_str().and_then(|n| n.strip_prefix("seed_")).and_then(|s| s.parse().ok()) {
                    if entry.path().join(DIAGNOSTICS_FILE).is_file() {
                        seeds.push(seed);
                    }
                }
            }
            seeds
        }
    };
    found.sort_unstable();
    found
        .into_iter()
        .map(|seed| {
            let path = mode_dir.join(format!("seed_{seed}")).join(DIAGNOSTICS_FILE);
            Ok(SeedRun {
                seed,
                records: read_diagnostics(&path)?,
            })
        })
        .collect()
}

/// Reliability statistics for one mode directory.
pub fn mode_reliability(mode_dir: &Path) -> Result<ReliabilitySummary> {
    let runs = load_runs(mode_dir, None)?;
    let curves: Vec<SeedCurve> = runs.iter().map(SeedRun::curve).collect();
    Ok(reliability_summary(&curves, RELIABILITY_WINDOW)?)
}
