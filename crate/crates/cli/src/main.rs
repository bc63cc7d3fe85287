//! Command-line front end for the experiment harness.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use curioflock::harness::{
    emit_report, run_random_baseline, run_test, run_training, ExperimentConfig, ExperimentId, TestOptions,
};

#[derive(Parser)]
#[command(
    name = "curioflock",
    about = "Curiosity-driven multi-agent reinforcement learning workbench",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train agents for an experiment config (exp4 runs the sweep)
    Train {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
        /// Run directory (default: runs/<experiment>-seed<seed>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config scale factor
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Run the frozen-parameter test phase of a finished run
    Test {
        /// Run directory produced by `train` or `imprint`
        #[arg(long)]
        run: PathBuf,
        /// Single lighting condition, e.g. "angle=15,intensity=0.5"
        #[arg(long)]
        lighting: Option<String>,
        /// Override the number of test episodes (or imprint trials)
        #[arg(long)]
        episodes: Option<usize>,
        /// Override the test episode length in ticks
        #[arg(long)]
        episode_len: Option<usize>,
        /// Dump the first N frames of agent 0 as PPM images
        #[arg(long, default_value_t = 0)]
        dump_frames: usize,
    },
    /// Random-action control group under the test protocol
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Imprinting: train with the object, then run the choice trials
    Imprint {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Build report tables and charts from a run directory
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Baseline run directory for trained-vs-random comparisons
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>, scale: Option<f64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(scale) = scale {
        cfg.scale = scale;
    }
    Ok(cfg)
}

fn default_out(cfg: &ExperimentConfig, suffix: &str) -> PathBuf {
    PathBuf::from("runs").join(format!("{}{}-seed{}", cfg.experiment.as_str(), suffix, cfg.seed))
}

fn parse_lighting(text: &str) -> Result<(f64, f64)> {
    let mut angle = None;
    let mut intensity = None;
    for part in text.split(',') {
        let (key, value) = part
            .split_once('=')
            .with_context(|| format!("expected key=value in lighting spec, got {part:?}"))?;
        match key.trim() {
            "angle" => angle = Some(value.trim().parse::<f64>()?),
            "intensity" => intensity = Some(value.trim().parse::<f64>()?),
            other => bail!("unknown lighting key {other:?} (expected angle/intensity)"),
        }
    }
    Ok((angle.unwrap_or(0.0), intensity.unwrap_or(1.0)))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, out, seed, scale } => {
            let cfg = load_config(&config, seed, scale)?;
            let out = out.unwrap_or_else(|| default_out(&cfg, ""));
            eprintln!(
                "training {} | world {:?} | {} agents | {} episodes x {} steps (scale {})",
                cfg.experiment.as_str(),
                cfg.world,
                cfg.n_agents,
                cfg.clone().scaled().train_episodes,
                cfg.train_episode_len,
                cfg.scale
            );
            let record = run_training(&cfg, &out)?;
            eprintln!(
                "done in {:.1}s | run {} | content hash {}",
                record.wall_clock_secs,
                out.display(),
                record.content_hash()
            );
        }
        Command::Test { run, lighting, episodes, episode_len, dump_frames } => {
            let lighting = lighting.as_deref().map(parse_lighting).transpose()?;
            let opts = TestOptions { episodes, episode_len, lighting, dump_frames };
            let record = run_test(&run, &opts)?;
            eprintln!(
                "test phase complete | {} log(s) | parameters frozen: {}",
                record.logs.len(),
                record.params_hash_before == record.params_hash_after
            );
            for log in record.logs {
                eprintln!("  {}", run.join(log).display());
            }
        }
        Command::Baseline { config, out, seed, scale } => {
            let cfg = load_config(&config, seed, scale)?;
            let out = out.unwrap_or_else(|| default_out(&cfg, "-baseline"));
            let record = run_random_baseline(&cfg, &out)?;
            eprintln!("baseline done in {:.1}s | {}", record.wall_clock_secs, out.display());
        }
        Command::Imprint { config, out, seed, scale } => {
            let cfg = load_config(&config, seed, scale)?;
            if cfg.experiment != ExperimentId::Exp5 || cfg.imprint.is_none() {
                bail!("imprint expects an exp5 config with an [imprint] section");
            }
            let out = out.unwrap_or_else(|| default_out(&cfg, ""));
            eprintln!("imprint training into {}", out.display());
            let record = run_training(&cfg, &out)?;
            eprintln!("training done in {:.1}s; running choice trials", record.wall_clock_secs);
            let test = run_test(&out, &TestOptions::default())?;
            eprintln!(
                "trials complete | parameters frozen: {}",
                test.params_hash_before == test.params_hash_after
            );
            eprintln!("  {}", out.join("logs/preferences.csv").display());
        }
        Command::Report { run, baseline } => {
            let files = emit_report(&run, baseline.as_deref())?;
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    Ok(())
}
