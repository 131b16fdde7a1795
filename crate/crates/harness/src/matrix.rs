//! Runs the experiment matrix as independent jobs and aggregates results.
//!
//! Layout under the output root:
//!
//! ```text
//! runs/<env>/<variant>/seed-<n>-<hash>/manifest.json
//! runs/<env>/<variant>/seed-<n>-<hash>/metrics.jsonl
//! summary.csv
//! summary.txt
//! ```
//!
//! `<hash>` is the first 12 hex digits of the SHA-256 of the run's full
//! training config and the library version, so changing any setting produces
//! a new run directory and an unchanged completed run is never repeated.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use drm_core::train::{train, RunSummary, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregate::{aggregate, run_stats, summary_csv, summary_table, AggregateSummary};
use crate::config::{ExperimentConfig, RunSpec};

pub const OUTPUT_ROOT_ENV: &str = "DRM_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "drm-output";

/// `explicit`, else `$DRM_OUTPUT_ROOT`, else `./drm-output`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

pub fn config_hash(cfg: &TrainConfig) -> String {
    let canonical = serde_json::to_vec(&(drm_core::VERSION, cfg)).expect("config serializes");
    Sha256::digest(&canonical)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub env: String,
    pub variant: String,
    pub seed: u64,
    /// Relative to the manifest's directory.
    pub metrics_path: PathBuf,
    pub status: RunStatus,
    pub error: Option<String>,
    pub wall_clock_secs: f64,
    pub summary: Option<RunSummary>,
}

pub fn run_dir(root: &Path, spec: &RunSpec, hash: &str) -> PathBuf {
    root.join("runs")
        .join(&spec.env)
        .join(&spec.variant)
        .join(format!("seed-{}-{}", spec.seed, &hash[..12]))
}

pub fn read_manifest(dir: &Path) -> Option<RunManifest> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let tmp = dir.join("manifest.json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(manifest)?)?;
    std::fs::rename(&tmp, dir.join("manifest.json"))?;
    Ok(())
}

/// Trains one run into `dir` unless a completed manifest with the same
/// hash is already there. Returns the manifest and whether it ran.
pub fn execute_run(dir: &Path, spec: &RunSpec) -> Result<(RunManifest, bool)> {
    let hash = config_hash(&spec.train);
    if let Some(m) = read_manifest(dir) {
        if m.status == RunStatus::Completed && m.config_hash == hash {
            return Ok((m, false));
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let start = Instant::now();
    let outcome = train(&spec.train, dir.join("metrics.jsonl"));
    let (status, error, summary) = match outcome {
        Ok(s) => (RunStatus::Completed, None, Some(s)),
        Err(e) => (RunStatus::Failed, Some(e.to_string()), None),
    };
    let manifest = RunManifest {
        config_hash: hash,
        env: spec.env.clone(),
        variant: spec.variant.clone(),
        seed: spec.seed,
        metrics_path: PathBuf::from("metrics.jsonl"),
        status,
        error,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        summary,
    };
    write_manifest(dir, &manifest)?;
    Ok((manifest, true))
}

pub struct MatrixReport {
    pub manifests: Vec<(PathBuf, RunManifest)>,
    pub executed: usize,
    pub summary: Vec<AggregateSummary>,
    pub summary_csv: PathBuf,
    pub summary_txt: PathBuf,
}

impl MatrixReport {
    pub fn failed(&self) -> usize {
        self.manifests
            .iter()
            .filter(|(_, m)| m.status == RunStatus::Failed)
            .count()
    }
}

/// Runs every cell with up to `jobs` concurrent runs, then aggregates the
/// completed ones. A failing run is recorded in its manifest and the rest
/// of the matrix carries on.
pub fn run_matrix(
    cfg: &ExperimentConfig,
    root: &Path,
    jobs: usize,
    progress: impl Fn(&RunSpec, &RunManifest, bool) + Sync,
) -> Result<MatrixReport> {
    let specs = cfg.runs()?;
    let dirs: Vec<PathBuf> = specs
        .iter()
        .map(|s| run_dir(root, s, &config_hash(&s.train)))
        .collect();
    let next = AtomicUsize::new(0);
    type Slot = Option<Result<(RunManifest, bool)>>;
    let results: Mutex<Vec<Slot>> = Mutex::new((0..specs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(specs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = specs.get(i) else { break };
                let outcome = execute_run(&dirs[i], spec);
                if let Ok((m, ran)) = &outcome {
                    progress(spec, m, *ran);
                }
                results.lock().expect("no worker panicked")[i] = Some(outcome);
            });
        }
    });

    let mut manifests = Vec::new();
    let mut executed = 0;
    for (dir, outcome) in dirs
        .into_iter()
        .zip(results.into_inner().expect("no worker panicked"))
    {
        let (m, ran) = outcome.expect("every job ran")?;
        executed += usize::from(ran);
        manifests.push((dir, m));
    }

    let stats = manifests
        .iter()
        .filter(|(_, m)| m.status == RunStatus::Completed)
        .map(|(dir, m)| run_stats(&dir.join(&m.metrics_path), cfg.summary.success_threshold))
        .collect::<Result<Vec<_>>>()?;
    let summary = aggregate(&stats);
    std::fs::create_dir_all(root)?;
    let summary_csv_path = root.join("summary.csv");
    let summary_txt_path = root.join("summary.txt");
    std::fs::write(&summary_csv_path, summary_csv(&summary))?;
    std::fs::write(&summary_txt_path, summary_table(&summary))?;
    Ok(MatrixReport {
        manifests,
        executed,
        summary,
        summary_csv: summary_csv_path,
        summary_txt: summary_txt_path,
    })
}
