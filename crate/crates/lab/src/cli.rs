use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use horizon_core::envs::{optimal_return_oracle, EnvConfig};
use horizon_core::routing::ActorMode;

use crate::config::TrainConfig;
use crate::error::{LabError, Result};
use crate::figures;
use crate::runner::{self, load_runs, RunArtifact, CONFIG_FILE};

#[derive(Debug, Parser)]
#[command(name = "horizon", version, about = "Multi-timescale PPO routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train `actor_mode` for one seed (or every configured seed).
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train every configured seed for every listed mode, resuming finished runs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render a figure from a sweep directory.
    Report {
        #[arg(long)]
        runs: PathBuf,
        #[arg(long, value_enum)]
        figure: Figure,
        /// Defaults to `<runs>/<figure>.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Conditions for the reliability and variance figures.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<ActorMode>,
    },
    /// Solve a DistractorChain exactly at one discount factor.
    Oracle {
        #[arg(long, value_enum)]
        env: EnvName,
        #[arg(long)]
        gamma: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Figure {
    Triad,
    Error,
    Reliability,
    Variance,
}

impl Figure {
    fn file_name(self) -> &'static str {
        match self {
            Figure::Triad => "triad.svg",
            Figure::Error => "error_routing.svg",
            Figure::Reliability => "reliability.svg",
            Figure::Variance => "variance.svg",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum EnvName {
    DistractorChain,
    MiniLander,
}

/// Runs the CLI and returns the process exit code: 0 on success, 2 for usage
/// problems (bad flags, missing or invalid config), 1 for anything else.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                LabError::MissingConfig(_) | LabError::Config { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn progress(err: &mut dyn Write) -> impl FnMut(ActorMode, u64, &horizon_core::diagnostics::DiagnosticsRecord) + '_ {
    move |mode, seed, rec| {
        if rec.update % 25 == 0 || rec.diverged {
            let _ = writeln!(
                err,
                "{mode} seed {seed} update {}: return {:.4}{}",
                rec.update,
                rec.mean_return,
                if rec.diverged { " (diverged)" } else { "" }
            );
        }
    }
}

fn report_runs(out: &mut dyn Write, artifacts: &[RunArtifact]) {
    for a in artifacts {
        let s = &a.summary;
        let _ = writeln!(
            out,
            "{} seed {}: {} updates, final return {:.4}{}{} -> {}",
            s.mode,
            s.seed,
            s.updates,
            s.final_return,
            if s.diverged { ", diverged" } else { "" },
            if a.resumed { ", reused" } else { "" },
            a.dir.display()
        );
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train { config, seed } => {
            let cfg = TrainConfig::load(&config)?;
            let seeds = seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
            let artifacts = runner::run_experiment(&cfg, &[cfg.actor_mode], &seeds, &mut progress(err))?;
            report_runs(out, &artifacts);
        }
        Command::Sweep { config } => {
            let cfg = TrainConfig::load(&config)?;
            let artifacts = runner::sweep(&cfg, &mut progress(err))?;
            report_runs(out, &artifacts);
        }
        Command::Report {
            runs,
            figure,
            out: target,
            modes,
        } => {
            let svg = render(&runs, figure, &modes)?;
            let target = target.unwrap_or_else(|| runs.join(figure.file_name()));
            std::fs::write(&target, svg).map_err(crate::error::io_err(&target))?;
            let _ = writeln!(out, "wrote {}", target.display());
        }
        Command::Oracle { env, gamma } => {
            let env = match env {
                EnvName::DistractorChain => EnvConfig::distractor_chain(),
                EnvName::MiniLander => EnvConfig::mini_lander(),
            };
            let sol = optimal_return_oracle(&env, gamma)?;
            let collects = sol.actions.iter().filter(|&&a| a == horizon_core::envs::COLLECT).count();
            let _ = writeln!(out, "gamma: {}", sol.gamma);
            let _ = writeln!(out, "policy: {}", sol.label);
            let _ = writeln!(out, "discounted_value: {}", sol.value);
            let _ = writeln!(out, "undiscounted_return: {}", sol.undiscounted_return);
            let _ = writeln!(out, "collect_steps: {collects}");
            let _ = writeln!(out, "episode_length: {}", sol.actions.len());
        }
    }
    Ok(())
}

fn mode_runs(root: &Path, mode: ActorMode) -> Result<Vec<runner::SeedRun>> {
    let dir = root.join(mode.as_str());
    if !dir.is_dir() {
        return Err(LabError::Report(format!("no {mode} runs under {}", root.display())));
    }
    load_runs(&dir, None)
}

fn present_modes(root: &Path, requested: &[ActorMode], fallback: &[ActorMode]) -> Vec<ActorMode> {
    if !requested.is_empty() {
        return requested.to_vec();
    }
    fallback.iter().copied().filter(|m| root.join(m.as_str()).is_dir()).collect()
}

fn gammas_of(root: &Path, mode: ActorMode, runs: &[runner::SeedRun]) -> Option<Vec<f64>> {
    let seed = runs.first()?.seed;
    let path = runner::run_dir(root, mode, seed).join(CONFIG_FILE);
    TrainConfig::load(&path).ok().map(|c| c.gammas.as_slice().to_vec())
}

/// Renders one figure from a sweep directory laid out as `<mode>/seed_<n>/`.
pub fn render_figure(root: &Path, figure: &str, modes: &[ActorMode]) -> Result<String> {
    let figure = Figure::from_str(figure, true).map_err(LabError::Report)?;
    render(root, figure, modes)
}

fn render(root: &Path, figure: Figure, modes: &[ActorMode]) -> Result<String> {
    match figure {
        Figure::Triad => figures::triad_figure(&mode_runs(root, ActorMode::Attention)?),
        Figure::Error => {
            let runs = mode_runs(root, ActorMode::Error)?;
            let gammas = gammas_of(root, ActorMode::Error, &runs);
            figures::error_routing_figure(&runs, gammas.as_deref())
        }
        Figure::Reliability | Figure::Variance => {
            let fallback: &[ActorMode] = match figure {
                Figure::Variance => &[ActorMode::Decoupled, ActorMode::LongOnly],
                _ => &[ActorMode::LongOnly, ActorMode::Decoupled, ActorMode::Attention, ActorMode::Error],
            };
            let conditions = present_modes(root, modes, fallback)
                .into_iter()
                .map(|m| Ok((m.to_string(), mode_runs(root, m)?)))
                .collect::<Result<Vec<_>>>()?;
            if matches!(figure, Figure::Variance) {
                figures::variance_figure(&conditions)
            } else {
                figures::reliability_figure(&conditions)
            }
        }
    }
}
