//! CSV learning curves.
//!
//! Per run (`<env>__<variant>__seed-<n>.csv`), one row per evaluation:
//!
//! ```text
//! step,return,success,beta_ema,sigma,lambda
//! ```
//!
//! `beta_ema` is empty before the first update. Per (env, variant)
//! (`band__<env>__<variant>.csv`), one row per evaluation step, with the
//! mean and population standard deviation across the runs evaluated at
//! that step:
//!
//! ```text
//! step,runs,return_mean,return_std,success_mean,success_std,beta_ema_mean,beta_ema_std
//! ```
//!
//! A plotting recipe: load a band file with pandas and call
//! `plt.fill_between(df.step, df.success_mean - df.success_std, df.success_mean + df.success_std)`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use drm_core::train::{read_metrics, EvalRecord, Record};

use crate::aggregate::{mean, std_dev, variant_label};

pub const RUN_HEADER: &str = "step,return,success,beta_ema,sigma,lambda";
pub const BAND_HEADER: &str =
    "step,runs,return_mean,return_std,success_mean,success_std,beta_ema_mean,beta_ema_std";

/// Every `*.jsonl` file under `dir`, sorted by path.
pub fn find_metrics(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).with_context(|| format!("listing {}", d.display()))? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "jsonl") {
                found.push(path);
            }
        }
    }
    found.sort();
    Ok(found)
}

pub struct RunCurve {
    pub env: String,
    pub variant: String,
    pub seed: u64,
    pub evals: Vec<EvalRecord>,
}

pub fn load_curve(path: &Path) -> Result<RunCurve> {
    let records = read_metrics(path).with_context(|| format!("reading {}", path.display()))?;
    let Some(Record::Header {
        env, seed, config, ..
    }) = records.first()
    else {
        bail!("{} does not start with a header record", path.display());
    };
    Ok(RunCurve {
        env: env.clone(),
        variant: variant_label(&config.agent.variant),
        seed: *seed,
        evals: records
            .iter()
            .filter_map(|r| match r {
                Record::Eval(e) => Some(e.clone()),
                _ => None,
            })
            .collect(),
    })
}

pub fn run_csv(curve: &RunCurve) -> String {
    let mut out = format!("{RUN_HEADER}\n");
    for e in &curve.evals {
        let beta = e.beta_ema.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.frame, e.mean_return, e.success_rate, beta, e.sigma, e.lambda
        );
    }
    out
}

pub fn band_csv(curves: &[&RunCurve]) -> String {
    let mut by_step: BTreeMap<u64, Vec<&EvalRecord>> = BTreeMap::new();
    for c in curves {
        for e in &c.evals {
            by_step.entry(e.frame).or_default().push(e);
        }
    }
    let mut out = format!("{BAND_HEADER}\n");
    for (step, evals) in by_step {
        let returns: Vec<f64> = evals.iter().map(|e| e.mean_return).collect();
        let success: Vec<f64> = evals.iter().map(|e| e.success_rate).collect();
        let betas: Vec<f64> = evals.iter().filter_map(|e| e.beta_ema).collect();
        let (bm, bs) = if betas.is_empty() {
            (String::new(), String::new())
        } else {
            (mean(&betas).to_string(), std_dev(&betas).to_string())
        };
        let _ = writeln!(
            out,
            "{step},{},{},{},{},{},{bm},{bs}",
            evals.len(),
            mean(&returns),
            std_dev(&returns),
            mean(&success),
            std_dev(&success),
        );
    }
    out
}

/// Writes per-run and band CSVs for every metrics file under `metrics_dir`
/// into `out_dir`. Returns the files written.
pub fn emit_curves(metrics_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let files = find_metrics(metrics_dir)?;
    if files.is_empty() {
        bail!("no metrics files (*.jsonl) under {}", metrics_dir.display());
    }
    let curves = files
        .iter()
        .map(|f| load_curve(f))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut groups: Vec<(String, String)> = Vec::new();
    for c in &curves {
        let path = out_dir.join(format!("{}__{}__seed-{}.csv", c.env, c.variant, c.seed));
        std::fs::write(&path, run_csv(c))?;
        written.push(path);
        let key = (c.env.clone(), c.variant.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (env, variant) in groups {
        let members: Vec<&RunCurve> = curves
            .iter()
            .filter(|c| c.env == env && c.variant == variant)
            .collect();
        let path = out_dir.join(format!("band__{env}__{variant}.csv"));
        std::fs::write(&path, band_csv(&members))?;
        written.push(path);
    }
    Ok(written)
}
