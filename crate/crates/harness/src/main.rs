use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use drm_core::envs::{env_spec, ENV_IDS};
use drm_harness::aggregate::{aggregate, run_stats, summary_table};
use drm_harness::config::{ExperimentConfig, RunSpec};
use drm_harness::curves::emit_curves;
use drm_harness::matrix::{config_hash, execute_run, output_root, run_dir, run_matrix, RunStatus};

/// Dormant-ratio-guided actor-critic experiments on toy control tasks.
#[derive(Parser, Debug)]
#[command(name = "drm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct ConfigArgs {
    /// Experiment config (TOML). Without it every setting takes its default.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set agent.hidden_dim=64`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output root; defaults to $DRM_OUTPUT_ROOT, then ./drm-output.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(path) => ExperimentConfig::load(path, &self.overrides),
            None => ExperimentConfig::from_toml("", &self.overrides),
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a single run.
    Train {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long)]
        env: String,
        #[arg(long, default_value = "drm")]
        variant: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every env × variant × seed cell of a config, skipping completed runs.
    Matrix {
        #[command(flatten)]
        args: ConfigArgs,
        /// Concurrent runs.
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write per-run and aggregate CSV curves for every metrics file under a directory.
    Curves {
        metrics_dir: PathBuf,
        /// Where the CSV files go; defaults to <metrics_dir>/curves.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Summarise every metrics file under a directory.
    Summarize {
        metrics_dir: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
    },
    /// List the available environments.
    ListEnvs,
    /// Check a config (and overrides) without running anything.
    ValidateConfig {
        #[command(flatten)]
        args: ConfigArgs,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            args,
            env,
            variant,
            seed,
        } => {
            let cfg = args.load()?;
            let train = cfg.train_config(&env, &variant, seed)?;
            train.validate()?;
            let spec = RunSpec {
                env,
                variant,
                seed,
                train,
            };
            let dir = run_dir(
                &output_root(args.out.as_deref()),
                &spec,
                &config_hash(&spec.train),
            );
            let (manifest, ran) = execute_run(&dir, &spec)?;
            if !ran {
                println!("already completed: {}", dir.display());
            }
            match manifest.status {
                RunStatus::Completed => {
                    let s = manifest.summary.expect("completed runs carry a summary");
                    println!(
                        "{} frames, {} updates, final success {:?}, final return {:?}, beta_ema {:?}",
                        s.frames, s.updates, s.final_success_rate, s.final_return, s.final_beta_ema
                    );
                    println!("metrics: {}", dir.join(&manifest.metrics_path).display());
                }
                RunStatus::Failed => bail!("run failed: {}", manifest.error.unwrap_or_default()),
            }
        }
        Command::Matrix { args, jobs } => {
            let cfg = args.load()?;
            let root = output_root(args.out.as_deref());
            let report = run_matrix(&cfg, &root, jobs, |spec, m, ran| {
                let what = if ran { "finished" } else { "skipped" };
                eprintln!(
                    "{what} {}/{}/seed-{} ({:?}, {:.0}s)",
                    spec.env, spec.variant, spec.seed, m.status, m.wall_clock_secs
                );
            })?;
            print!("{}", std::fs::read_to_string(&report.summary_txt)?);
            println!(
                "{} runs ({} executed, {} failed); summary in {}",
                report.manifests.len(),
                report.executed,
                report.failed(),
                report.summary_csv.display()
            );
            if report.failed() > 0 {
                std::process::exit(1);
            }
        }
        Command::Curves { metrics_dir, out } => {
            let out = out.unwrap_or_else(|| metrics_dir.join("curves"));
            let written = emit_curves(&metrics_dir, &out)?;
            println!("wrote {} files to {}", written.len(), out.display());
        }
        Command::Summarize {
            metrics_dir,
            threshold,
        } => {
            let files = drm_harness::curves::find_metrics(&metrics_dir)?;
            if files.is_empty() {
                bail!("no metrics files under {}", metrics_dir.display());
            }
            let stats = files
                .iter()
                .map(|f| run_stats(f, threshold))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", summary_table(&aggregate(&stats)));
        }
        Command::ListEnvs => {
            for id in ENV_IDS {
                let spec = env_spec(id)?;
                println!(
                    "{id:<18} obs {}  act {}  horizon {:>3}  {:?}",
                    spec.obs_dim, spec.action_dim, spec.horizon, spec.reward_kind
                );
            }
        }
        Command::ValidateConfig { args } => {
            let cfg = args.load()?;
            let runs = cfg.runs()?;
            println!("ok: {} runs", runs.len());
        }
    }
    Ok(())
}
