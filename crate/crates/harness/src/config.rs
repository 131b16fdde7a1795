//! Experiment configuration: one TOML file describes a whole matrix.
//!
//! ```toml
//! [matrix]
//! envs = ["maze-sparse"]
//! variants = ["drm", "baseline"]
//! seeds = [0, 1, 2]
//! profile = "toy"
//!
//! [run]
//! total_frames = 150000
//! eval_interval_frames = 10000
//!
//! [agent]          # any AgentConfig field, applied on top of the profile
//! hidden_dim = 64
//! ```
//!
//! `--set section.key=value` overrides patch the document before it is
//! interpreted; values are parsed as TOML and fall back to plain strings.

use std::path::Path;

use anyhow::{bail, Context, Result};
use drm_core::config::{AgentConfig, VariantFlags, VARIANT_NAMES};
use drm_core::envs::ENV_IDS;
use drm_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixSection {
    pub envs: Vec<String>,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub profile: String,
}

impl Default for MatrixSection {
    fn default() -> Self {
        Self {
            envs: vec!["pointmass-sparse".into()],
            variants: vec!["drm".into()],
            seeds: vec![0],
            profile: "toy".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub total_frames: u64,
    pub eval_interval_frames: u64,
    pub eval_episodes: u32,
    pub update_log_interval: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            total_frames: d.total_frames,
            eval_interval_frames: d.eval_interval_frames,
            eval_episodes: d.eval_episodes,
            update_log_interval: d.update_log_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarySection {
    /// Success rate that counts as "solved" for the frames-to-threshold statistic.
    pub success_threshold: f64,
}

impl Default for SummarySection {
    fn default() -> Self {
        Self {
            success_threshold: 0.8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub matrix: MatrixSection,
    pub run: RunSection,
    /// Partial [`AgentConfig`] applied over the profile.
    pub agent: toml::Table,
    pub summary: SummarySection,
}

/// One cell of the matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub env: String,
    pub variant: String,
    pub seed: u64,
    pub train: TrainConfig,
}

fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .with_context(|| format!("override `{raw}` is not key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        bail!("override key `{key}` has an empty segment");
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

/// Recursively overlays `patch` on `base`; nested tables merge key by key.
fn merge(base: &mut toml::Table, patch: &toml::Table) {
    for (k, v) in patch {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Applies `section.key=value` overrides to a TOML document in place.
pub fn apply_overrides(doc: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for raw in overrides {
        let (path, value) = parse_override(raw)?;
        let (last, parents) = path.split_last().expect("non-empty path");
        let mut table = &mut *doc;
        for seg in parents {
            let entry = table
                .entry(seg.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry
                .as_table_mut()
                .with_context(|| format!("override `{raw}`: `{seg}` is not a section"))?;
        }
        table.insert(last.clone(), value);
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).context("config is not valid TOML")?;
        apply_overrides(&mut doc, overrides)?;
        let cfg: Self = toml::Value::Table(doc)
            .try_into()
            .context("config does not match the expected layout")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    /// The profile with the `[agent]` table merged over it.
    pub fn base_agent(&self) -> Result<AgentConfig> {
        let base = AgentConfig::profile(&self.matrix.profile)?;
        let mut table = match toml::Value::try_from(&base)? {
            toml::Value::Table(t) => t,
            _ => unreachable!("AgentConfig serializes to a table"),
        };
        merge(&mut table, &self.agent);
        toml::Value::Table(table)
            .try_into()
            .context("invalid [agent] settings")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.matrix;
        if m.envs.is_empty() || m.variants.is_empty() || m.seeds.is_empty() {
            bail!("matrix needs at least one env, variant and seed");
        }
        for env in &m.envs {
            if !ENV_IDS.contains(&env.as_str()) {
                bail!("unknown env `{env}` (known: {})", ENV_IDS.join(", "));
            }
        }
        for v in &m.variants {
            if !VARIANT_NAMES.contains(&v.as_str()) {
                bail!(
                    "unknown variant `{v}` (known: {})",
                    VARIANT_NAMES.join(", ")
                );
            }
        }
        if !(0.0..=1.0).contains(&self.summary.success_threshold) {
            bail!("success threshold must lie in [0, 1]");
        }
        for spec in self.runs()? {
            spec.train.validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self, env: &str, variant: &str, seed: u64) -> Result<TrainConfig> {
        let mut agent = self.base_agent()?;
        agent.variant = VariantFlags::named(variant)?;
        Ok(TrainConfig {
            env: env.to_string(),
            seed,
            total_frames: self.run.total_frames,
            eval_interval_frames: self.run.eval_interval_frames,
            eval_episodes: self.run.eval_episodes,
            update_log_interval: self.run.update_log_interval,
            checkpoint: None,
            checkpoint_buffer: false,
            agent,
        })
    }

    /// Every cell in env-major, then variant, then seed order.
    pub fn runs(&self) -> Result<Vec<RunSpec>> {
        let mut out = Vec::new();
        for env in &self.matrix.envs {
            for variant in &self.matrix.variants {
                for &seed in &self.matrix.seeds {
                    out.push(RunSpec {
                        env: env.clone(),
                        variant: variant.clone(),
                        seed,
                        train: self.train_config(env, variant, seed)?,
                    });
                }
            }
        }
        Ok(out)
    }
}
