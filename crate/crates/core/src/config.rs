//! Agent hyperparameters and ablation switches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perturb::PerturbConfig;
use crate::schedule::{ExplorationMode, LinearSchedule, SchedulerState};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    On,
    Off,
    FixedAlpha(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploitMode {
    On,
    Off,
    FixedLambda(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantFlags {
    pub drg_perturbation: PerturbMode,
    pub awaken_exploration: ExplorationMode,
    pub drg_exploitation: ExploitMode,
}

/// Perturb factor used by the `fixed-params` variant: the value the
/// dormant-guided rule gives at the awaken threshold (β = 0.2).
pub const FIXED_ALPHA: f64 = 0.6;
/// Exploitation coefficient used by the `fixed-params` variant: λ̄/2, the
/// dormant-guided value at the awaken threshold.
pub const FIXED_LAMBDA: f64 = 0.3;

pub const VARIANT_NAMES: [&str; 7] = [
    "drm",
    "baseline",
    "no-perturb",
    "no-awaken",
    "no-exploit",
    "fixed-params",
    "max-then-linear",
];

impl VariantFlags {
    pub const DRM: Self = Self {
        drg_perturbation: PerturbMode::On,
        awaken_exploration: ExplorationMode::Awaken,
        drg_exploitation: ExploitMode::On,
    };

    pub const BASELINE: Self = Self {
        drg_perturbation: PerturbMode::Off,
        awaken_exploration: ExplorationMode::Linear,
        drg_exploitation: ExploitMode::Off,
    };

    /// Flags for one of [`VARIANT_NAMES`].
    pub fn named(name: &str) -> Result<Self> {
        let drm = Self::DRM;
        Ok(match name {
            "drm" => drm,
            "baseline" => Self::BASELINE,
            "no-perturb" => Self {
                drg_perturbation: PerturbMode::Off,
                ..drm
            },
            "no-awaken" => Self {
                awaken_exploration: ExplorationMode::Linear,
                ..drm
            },
            "no-exploit" => Self {
                drg_exploitation: ExploitMode::Off,
                ..drm
            },
            "fixed-params" => Self {
                drg_perturbation: PerturbMode::FixedAlpha(FIXED_ALPHA),
                awaken_exploration: ExplorationMode::Linear,
                drg_exploitation: ExploitMode::FixedLambda(FIXED_LAMBDA),
            },
            "max-then-linear" => Self {
                awaken_exploration: ExplorationMode::MaxThenLinear,
                ..drm
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown variant `{other}` (expected one of {})",
                    VARIANT_NAMES.join(", ")
                )))
            }
        })
    }

    /// The name these flags are registered under, if any.
    pub fn name(&self) -> Option<&'static str> {
        VARIANT_NAMES
            .into_iter()
            .find(|n| Self::named(n).is_ok_and(|f| f == *self))
    }

    pub fn validate(&self) -> Result<()> {
        if let PerturbMode::FixedAlpha(a) = self.drg_perturbation {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!(
                    "fixed perturb factor {a} outside [0, 1]"
                )));
            }
        }
        if let ExploitMode::FixedLambda(l) = self.drg_exploitation {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!(
                    "fixed exploitation coefficient {l} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Every agent hyperparameter. Defaults are the large-scale settings; see
/// [`AgentConfig::toy`] for the small-scale profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub replay_capacity: usize,
    pub action_repeat: u32,
    pub seed_frames: u64,
    /// Agent steps of uniform random acting at the start of training.
    pub exploration_steps: u64,
    pub nstep: usize,
    pub batch_size: usize,
    pub discount: f64,
    pub lr: f64,
    /// Agent steps between updates.
    pub update_every_steps: u64,
    pub soft_update_rate: f64,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    /// τ: a neuron is dormant when its score is at or below this.
    pub dormant_tau: f64,
    pub dormant_ema_decay: f64,
    /// β̂.
    pub beta_threshold: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// k.
    pub perturb_rate: f64,
    pub perturb_interval_frames: u64,
    pub linear_schedule: LinearSchedule,
    pub noise_clip: f64,
    /// T.
    pub explore_temperature: f64,
    /// λ̄.
    pub lambda_max: f64,
    /// T′.
    pub exploit_temperature: f64,
    pub expectile: f64,
    pub variant: VariantFlags,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            replay_capacity: 1_000_000,
            action_repeat: 2,
            seed_frames: 4000,
            exploration_steps: 2000,
            nstep: 3,
            batch_size: 256,
            discount: 0.99,
            lr: 1e-4,
            update_every_steps: 2,
            soft_update_rate: 0.01,
            feature_dim: 50,
            hidden_dim: 1024,
            dormant_tau: 0.025,
            dormant_ema_decay: 0.99,
            beta_threshold: 0.2,
            alpha_min: 0.2,
            alpha_max: 0.9,
            perturb_rate: 2.0,
            perturb_interval_frames: 200_000,
            linear_schedule: LinearSchedule {
                start: 1.0,
                end: 0.1,
                duration_frames: 300_000,
            },
            noise_clip: 0.3,
            explore_temperature: 0.1,
            lambda_max: 0.6,
            exploit_temperature: 0.02,
            expectile: 0.9,
            variant: VariantFlags::DRM,
        }
    }
}

impl AgentConfig {
    /// Small-network, short-horizon profile for the toy environments.
    pub fn toy() -> Self {
        Self {
            perturb_interval_frames: 5000,
            linear_schedule: LinearSchedule {
                start: 1.0,
                end: 0.1,
                duration_frames: 50_000,
            },
            hidden_dim: 128,
            ..Self::default()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "table" | "default" => Ok(Self::default()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!(
                "unknown profile `{other}` (expected table or toy)"
            ))),
        }
    }

    pub fn perturb_config(&self) -> PerturbConfig {
        PerturbConfig {
            alpha_min: self.alpha_min,
            alpha_max: self.alpha_max,
            perturb_rate: self.perturb_rate,
            perturb_interval_frames: self.perturb_interval_frames,
            tau: self.dormant_tau,
        }
    }

    pub fn scheduler(&self) -> SchedulerState {
        SchedulerState {
            awaken_step: None,
            beta_threshold: self.beta_threshold,
            explore_temperature: self.explore_temperature,
            exploit_temperature: self.exploit_temperature,
            lambda_max: self.lambda_max,
            linear_schedule: self.linear_schedule,
            noise_clip: self.noise_clip,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.replay_capacity == 0 || self.batch_size == 0 || self.nstep == 0 {
            return fail("replay capacity, batch size and n-step must be positive".into());
        }
        if self.action_repeat == 0 || self.update_every_steps == 0 {
            return fail("action repeat and update frequency must be positive".into());
        }
        if self.hidden_dim == 0 || self.feature_dim == 0 {
            return fail("network widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.discount) {
            return fail(format!("discount {} outside [0, 1)", self.discount));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..=1.0).contains(&self.soft_update_rate) {
            return fail(format!(
                "soft update rate {} outside [0, 1]",
                self.soft_update_rate
            ));
        }
        if !(0.0..1.0).contains(&self.dormant_ema_decay) {
            return fail(format!(
                "dormant EMA decay {} outside [0, 1)",
                self.dormant_ema_decay
            ));
        }
        if !(self.expectile > 0.0 && self.expectile < 1.0) {
            return fail(format!("expectile {} outside (0, 1)", self.expectile));
        }
        if !(0.0..=1.0).contains(&self.beta_threshold) {
            return fail(format!(
                "dormant threshold {} outside [0, 1]",
                self.beta_threshold
            ));
        }
        self.perturb_config().validate()?;
        self.scheduler().validate()?;
        self.variant.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_variant_resolves() {
        for name in VARIANT_NAMES {
            VariantFlags::named(name).unwrap().validate().unwrap();
        }
        assert!(VariantFlags::named("drq").is_err());
        assert_eq!(VariantFlags::named("drm").unwrap(), VariantFlags::DRM);
        for name in VARIANT_NAMES {
            assert_eq!(VariantFlags::named(name).unwrap().name(), Some(name));
        }
        let custom = VariantFlags {
            drg_perturbation: PerturbMode::FixedAlpha(0.1),
            ..VariantFlags::DRM
        };
        assert_eq!(custom.name(), None);
    }

    #[test]
    fn profiles_validate() {
        AgentConfig::default().validate().unwrap();
        let toy = AgentConfig::toy();
        toy.validate().unwrap();
        assert_eq!(toy.perturb_interval_frames, 5000);
        assert_eq!(toy.hidden_dim, 128);
        let bad = AgentConfig {
            expectile: 1.0,
            ..AgentConfig::toy()
        };
        assert!(bad.validate().is_err());
    }
}
