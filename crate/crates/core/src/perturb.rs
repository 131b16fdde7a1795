//! Dormant-ratio-guided soft reset of network parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetworkParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Perturb rate `k`.
    pub perturb_rate: f64,
    pub perturb_interval_frames: u64,
    pub tau: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            alpha_min: 0.2,
            alpha_max: 0.9,
            perturb_rate: 2.0,
            perturb_interval_frames: 200_000,
            tau: 0.025,
        }
    }
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.alpha_min && self.alpha_min <= self.alpha_max && self.alpha_max <= 1.0) {
            return Err(Error::Config(format!(
                "perturb factor bounds must satisfy 0 <= min <= max <= 1, got [{}, {}]",
                self.alpha_min, self.alpha_max
            )));
        }
        if !(self.perturb_rate > 0.0) {
            return Err(Error::Config("perturb rate must be positive".into()));
        }
        if self.perturb_interval_frames == 0 {
            return Err(Error::Config("perturb interval must be positive".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config("tau must be non-negative".into()));
        }
        Ok(())
    }
}

/// `clip(1 − k·β, α_min, α_max)`.
pub fn perturb_factor(beta: f64, cfg: &PerturbConfig) -> f64 {
    (1.0 - cfg.perturb_rate * beta).clamp(cfg.alpha_min, cfg.alpha_max)
}

/// Interpolates every layer toward a fresh draw of the same architecture:
/// `α·θ + (1−α)·φ` with `φ` initialized from `seed`. The optimizer state is
/// always reset.
pub fn perturb_network(net: &NetworkParams, alpha: f64, seed: u64) -> Result<NetworkParams> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::usage(format!(
            "perturb factor {alpha} outside [0, 1]"
        )));
    }
    let mut fresh = net.architecture().init(seed);
    if alpha == 1.0 {
        let mut out = net.clone();
        out.reset_optimizer();
        return Ok(out);
    }
    if alpha > 0.0 {
        for (f, old) in fresh.layers.iter_mut().zip(&net.layers) {
            let mix = |f: &mut f64, o: f64| *f = alpha * o + (1.0 - alpha) * *f;
            f.weights
                .data_mut()
                .iter_mut()
                .zip(old.weights.data())
                .for_each(|(f, &o)| mix(f, o));
            f.bias
                .iter_mut()
                .zip(&old.bias)
                .for_each(|(f, &o)| mix(f, o));
        }
    }
    Ok(fresh)
}

/// True once `perturb_interval_frames` have elapsed since the last perturbation.
pub fn should_perturb(frame: u64, last_perturb_frame: u64, cfg: &PerturbConfig) -> bool {
    frame.saturating_sub(last_perturb_frame) >= cfg.perturb_interval_frames
}
