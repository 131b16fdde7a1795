//! Losses and targets for the twin critics and the expectile value network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Architecture, NetworkParams};

fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::shape(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

/// Online and target copies of the two Q networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticPair {
    pub q1: NetworkParams,
    pub q2: NetworkParams,
    pub q1_target: NetworkParams,
    pub q2_target: NetworkParams,
}

impl CriticPair {
    /// Targets start as copies of their online networks.
    pub fn new(arch: &Architecture, seed1: u64, seed2: u64) -> Self {
        let q1 = arch.init(seed1);
        let q2 = arch.init(seed2);
        let mut q1_target = q1.clone();
        let mut q2_target = q2.clone();
        q1_target.reset_optimizer();
        q2_target.reset_optimizer();
        Self {
            q1,
            q2,
            q1_target,
            q2_target,
        }
    }

    pub fn sync_targets(&mut self) -> Result<()> {
        self.q1_target.hard_update_from(&self.q1)?;
        self.q2_target.hard_update_from(&self.q2)
    }

    pub fn soft_update_targets(&mut self, rate: f64) -> Result<()> {
        self.q1_target.soft_update_from(&self.q1, rate)?;
        self.q2_target.soft_update_from(&self.q2, rate)
    }
}

/// State-value network regressed onto an upper expectile of `min(Q1, Q2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    pub v: NetworkParams,
    pub expectile: f64,
}

impl ValueNet {
    pub fn new(arch: &Architecture, expectile: f64, seed: u64) -> Result<Self> {
        if !(expectile > 0.0 && expectile < 1.0) {
            return Err(Error::Config(format!(
                "expectile {expectile} outside (0, 1)"
            )));
        }
        if arch.output_width() != 1 || arch.activations.last() != Some(&Activation::Identity) {
            return Err(Error::Config(
                "value network must end in a single linear unit".into(),
            ));
        }
        Ok(Self {
            v: arch.init(seed),
            expectile,
        })
    }
}

/// Asymmetric squared loss of `V − Q`: residuals with `V ≤ Q` weigh
/// `expectile`, the rest `1 − expectile`. Returns the mean loss and its
/// gradient with respect to each `V`.
pub fn expectile_value_loss(
    v_out: &[f64],
    q_min: &[f64],
    expectile: f64,
) -> Result<(f64, Vec<f64>)> {
    check_len("expectile loss", v_out.len(), q_min.len())?;
    if !(expectile > 0.0 && expectile < 1.0) {
        return Err(Error::usage(format!(
            "expectile {expectile} outside (0, 1)"
        )));
    }
    let n = v_out.len();
    if n == 0 {
        return Err(Error::usage("expectile loss over an empty batch"));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&v, &q) in v_out.iter().zip(q_min) {
        let error = v - q;
        let weight = if error > 0.0 {
            1.0 - expectile
        } else {
            expectile
        };
        loss += weight * error * error;
        grad.push(2.0 * weight * error / n as f64);
    }
    Ok((loss / n as f64, grad))
}

/// `r + d·(λ·V(s′) + (1−λ)·min Q(s′, a′))` where `d` already carries `γⁿ`
/// and termination masking.
pub fn mixed_td_target(
    reward_nstep: &[f64],
    discount_nstep: &[f64],
    v_next: &[f64],
    q_next_min: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = reward_nstep.len();
    check_len("discounts", n, discount_nstep.len())?;
    check_len("next values", n, v_next.len())?;
    check_len("next Q values", n, q_next_min.len())?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::usage(format!(
            "exploitation coefficient {lambda} outside [0, 1]"
        )));
    }
    Ok((0..n)
        .map(|i| {
            reward_nstep[i]
                + discount_nstep[i] * (lambda * v_next[i] + (1.0 - lambda) * q_next_min[i])
        })
        .collect())
}

/// Sum of the two critics' mean squared errors against a constant target.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticLoss {
    pub loss: f64,
    pub grad_q1: Vec<f64>,
    pub grad_q2: Vec<f64>,
}

pub fn critic_loss(q1_out: &[f64], q2_out: &[f64], target: &[f64]) -> Result<CriticLoss> {
    let n = target.len();
    check_len("q1", n, q1_out.len())?;
    check_len("q2", n, q2_out.len())?;
    if n == 0 {
        return Err(Error::usage("critic loss over an empty batch"));
    }
    let nf = n as f64;
    let mut loss = 0.0;
    let mut grad_q1 = Vec::with_capacity(n);
    let mut grad_q2 = Vec::with_capacity(n);
    for i in 0..n {
        let e1 = q1_out[i] - target[i];
        let e2 = q2_out[i] - target[i];
        loss += (e1 * e1 + e2 * e2) / nf;
        grad_q1.push(2.0 * e1 / nf);
        grad_q2.push(2.0 * e2 / nf);
    }
    Ok(CriticLoss {
        loss,
        grad_q1,
        grad_q2,
    })
}

/// Smoothed bootstrap action: actor mean plus Gaussian noise clipped to
/// `±clip`, clamped into `bounds`.
pub fn target_action(
    actor_out: &[f64],
    noise_seed: u64,
    sigma: f64,
    clip: f64,
    bounds: (f64, f64),
) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::usage(format!(
            "noise stddev {sigma} must be non-negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    Ok(actor_out
        .iter()
        .map(|&mu| {
            let z: f64 = StandardNormal.sample(&mut rng);
            smoothed(mu, sigma * z, clip, bounds)
        })
        .collect())
}

/// Clips `noise` to `±clip`, adds it to `mu` and clamps to `bounds`.
pub fn smoothed(mu: f64, noise: f64, clip: f64, bounds: (f64, f64)) -> f64 {
    (mu + noise.clamp(-clip, clip)).clamp(bounds.0, bounds.1)
}
