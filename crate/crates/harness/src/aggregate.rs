//! Per-(env, variant) statistics computed from raw metrics files only.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use drm_core::train::{read_metrics, Record};
use serde::{Deserialize, Serialize};

/// What one metrics file says about its run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub env: String,
    pub variant: String,
    pub seed: u64,
    pub final_success: f64,
    pub final_return: f64,
    /// First evaluation frame whose success rate reached the threshold.
    pub frames_to_threshold: Option<u64>,
    /// `(frame, β_ema)` from every logged update.
    pub beta_trace: Vec<(u64, f64)>,
    pub aborted: bool,
}

/// Label for a variant as recorded in a metrics header.
pub fn variant_label(flags: &drm_core::config::VariantFlags) -> String {
    flags.name().unwrap_or("custom").to_string()
}

pub fn run_stats(metrics: &Path, threshold: f64) -> Result<RunStats> {
    let records =
        read_metrics(metrics).with_context(|| format!("reading {}", metrics.display()))?;
    let Some(Record::Header {
        env, seed, config, ..
    }) = records.first()
    else {
        bail!("{} does not start with a header record", metrics.display());
    };
    let mut stats = RunStats {
        env: env.clone(),
        variant: variant_label(&config.agent.variant),
        seed: *seed,
        final_success: 0.0,
        final_return: 0.0,
        frames_to_threshold: None,
        beta_trace: Vec::new(),
        aborted: false,
    };
    for r in &records {
        match r {
            Record::Eval(e) => {
                stats.final_success = e.success_rate;
                stats.final_return = e.mean_return;
                if stats.frames_to_threshold.is_none() && e.success_rate >= threshold {
                    stats.frames_to_threshold = Some(e.frame);
                }
            }
            Record::Update(u) => stats.beta_trace.push((u.frame, u.beta_ema)),
            Record::Abort { .. } => stats.aborted = true,
            _ => {}
        }
    }
    Ok(stats)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Linear-interpolation percentile, `q` in `[0, 100]`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    percentile(xs, 50.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub env: String,
    pub variant: String,
    pub runs: usize,
    pub success_median: f64,
    pub success_mean: f64,
    pub success_std: f64,
    pub return_median: f64,
    pub return_mean: f64,
    pub return_std: f64,
    /// Runs that reached the success threshold at some evaluation.
    pub reached_threshold: usize,
    /// Median over the runs that reached it.
    pub frames_to_threshold_median: Option<f64>,
    /// Percentiles of β_ema pooled over every logged update of every run.
    pub beta_p10: Option<f64>,
    pub beta_p50: Option<f64>,
    pub beta_p90: Option<f64>,
}

/// Groups runs by (env, variant) in first-seen order.
pub fn aggregate(stats: &[RunStats]) -> Vec<AggregateSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for s in stats {
        let key = (s.env.clone(), s.variant.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(env, variant)| {
            let group: Vec<&RunStats> = stats
                .iter()
                .filter(|s| s.env == env && s.variant == variant)
                .collect();
            let success: Vec<f64> = group.iter().map(|s| s.final_success).collect();
            let returns: Vec<f64> = group.iter().map(|s| s.final_return).collect();
            let reached: Vec<f64> = group
                .iter()
                .filter_map(|s| s.frames_to_threshold.map(|f| f as f64))
                .collect();
            let betas: Vec<f64> = group
                .iter()
                .flat_map(|s| s.beta_trace.iter().map(|b| b.1))
                .collect();
            let pct = |q| (!betas.is_empty()).then(|| percentile(&betas, q));
            AggregateSummary {
                runs: group.len(),
                success_median: median(&success),
                success_mean: mean(&success),
                success_std: std_dev(&success),
                return_median: median(&returns),
                return_mean: mean(&returns),
                return_std: std_dev(&returns),
                reached_threshold: reached.len(),
                frames_to_threshold_median: (!reached.is_empty()).then(|| median(&reached)),
                beta_p10: pct(10.0),
                beta_p50: pct(50.0),
                beta_p90: pct(90.0),
                env,
                variant,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub const SUMMARY_HEADER: &str = "env,variant,runs,success_median,success_mean,success_std,\
return_median,return_mean,return_std,reached_threshold,frames_to_threshold_median,\
beta_p10,beta_p50,beta_p90";

pub fn summary_csv(rows: &[AggregateSummary]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.env,
            r.variant,
            r.runs,
            r.success_median,
            r.success_mean,
            r.success_std,
            r.return_median,
            r.return_mean,
            r.return_std,
            r.reached_threshold,
            opt(r.frames_to_threshold_median),
            opt(r.beta_p10),
            opt(r.beta_p50),
            opt(r.beta_p90),
        );
    }
    out
}

/// Fixed-width table for terminals.
pub fn summary_table(rows: &[AggregateSummary]) -> String {
    let fmt2 = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<18} {:<16} {:>4} {:>15} {:>17} {:>13} {:>20}\n",
        "env",
        "variant",
        "runs",
        "success med/mu",
        "return med/mu",
        "solved@frame",
        "beta p10/p50/p90"
    );
    for r in rows {
        let solved = match r.frames_to_threshold_median {
            Some(f) => format!("{f:.0} ({}/{})", r.reached_threshold, r.runs),
            None => format!("- (0/{})", r.runs),
        };
        let _ = writeln!(
            out,
            "{:<18} {:<16} {:>4} {:>15} {:>17} {:>13} {:>20}",
            r.env,
            r.variant,
            r.runs,
            format!("{:.2}/{:.2}", r.success_median, r.success_mean),
            format!("{:.1}/{:.1}", r.return_median, r.return_mean),
            solved,
            format!(
                "{}/{}/{}",
                fmt2(r.beta_p10),
                fmt2(r.beta_p50),
                fmt2(r.beta_p90)
            ),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 100.0), 4.0);
        assert!((percentile(&xs, 10.0) - 1.3).abs() < 1e-12);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn population_std() {
        assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
        assert_eq!(std_dev(&[2.0]), 0.0);
    }
}
