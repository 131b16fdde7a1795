//! Deterministic, seedable continuous-control toy environments.
//!
//! Observations are raw state vectors scaled to O(1) ranges and every action
//! dimension is bounded to `[-1, 1]`. Action repeat is the training loop's
//! job, not the environment's.

mod oracle;
mod pendulum;
mod pointmass;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use oracle::{scripted_action, ScriptedController};
pub use pendulum::{Pendulum, PendulumParams};
pub use pointmass::{PointMass, PointMassParams, Wall};

pub const ENV_IDS: [&str; 5] = [
    "pointmass-dense",
    "pointmass-sparse",
    "swingup-dense",
    "swingup-sparse",
    "maze-sparse",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Dense,
    Sparse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dynamics {
    PointMass(PointMassParams),
    Pendulum(PendulumParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: String,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_bounds: (f64, f64),
    /// Episode length in environment steps.
    pub horizon: u32,
    pub reward_kind: RewardKind,
    pub dynamics: Dynamics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
    pub success: bool,
    /// The requested action left the bounds and was clamped.
    pub clamped: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode and returns its first observation.
    fn reset(&mut self) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

/// Validates and clamps an action. Returns whether clamping happened.
pub(crate) fn clamp_action(spec: &EnvSpec, action: &[f64]) -> Result<(Vec<f64>, bool)> {
    if action.len() != spec.action_dim {
        return Err(Error::shape(format!(
            "{} expects {} action dims, got {}",
            spec.id,
            spec.action_dim,
            action.len()
        )));
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(Error::usage(format!("NaN action passed to {}", spec.id)));
    }
    let (lo, hi) = spec.action_bounds;
    let clamped: Vec<f64> = action.iter().map(|a| a.clamp(lo, hi)).collect();
    let changed = clamped.iter().zip(action).any(|(c, a)| c != a);
    Ok((clamped, changed))
}

pub fn env_spec(id: &str) -> Result<EnvSpec> {
    Ok(match id {
        "pointmass-dense" => PointMass::spec_for(id, PointMassParams::open(), RewardKind::Dense),
        "pointmass-sparse" => PointMass::spec_for(id, PointMassParams::open(), RewardKind::Sparse),
        "maze-sparse" => PointMass::spec_for(id, PointMassParams::maze(), RewardKind::Sparse),
        "swingup-dense" => Pendulum::spec_for(id, PendulumParams::default(), RewardKind::Dense),
        "swingup-sparse" => Pendulum::spec_for(id, PendulumParams::default(), RewardKind::Sparse),
        other => return Err(Error::UnknownEnv(other.to_string())),
    })
}

/// Builds an environment from the registry.
pub fn make_env(id: &str, seed: u64) -> Result<Box<dyn Environment>> {
    make_env_from_spec(env_spec(id)?, seed)
}

pub fn make_env_from_spec(spec: EnvSpec, seed: u64) -> Result<Box<dyn Environment>> {
    Ok(match spec.dynamics.clone() {
        Dynamics::PointMass(p) => Box::new(PointMass::new(spec, p, seed)),
        Dynamics::Pendulum(p) => Box::new(Pendulum::new(spec, p, seed)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rollout(env: &mut dyn Environment, actions: &[Vec<f64>]) -> Vec<StepResult> {
        env.reset();
        actions.iter().map(|a| env.step(a).unwrap()).collect()
    }

    #[test]
    fn registry_knows_every_id() {
        for id in ENV_IDS {
            let env = make_env(id, 0).unwrap();
            assert_eq!(env.spec().id, id);
            assert_eq!(env.spec().action_bounds, (-1.0, 1.0));
        }
        assert!(matches!(make_env("cartpole", 0), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        for id in ENV_IDS {
            let mut a = make_env(id, 42).unwrap();
            let mut b = make_env(id, 42).unwrap();
            let dim = a.spec().action_dim;
            let actions: Vec<Vec<f64>> = (0..60)
                .map(|k| {
                    (0..dim)
                        .map(|d| ((k * 7 + d * 3) as f64 * 0.37).sin())
                        .collect()
                })
                .collect();
            assert_eq!(rollout(a.as_mut(), &actions), rollout(b.as_mut(), &actions));
        }
    }

    #[test]
    fn out_of_bounds_action_acts_as_bound() {
        for id in ENV_IDS {
            let mut a = make_env(id, 3).unwrap();
            let mut b = make_env(id, 3).unwrap();
            let dim = a.spec().action_dim;
            a.reset();
            b.reset();
            for _ in 0..20 {
                let ra = a.step(&vec![5.0; dim]).unwrap();
                let rb = b.step(&vec![1.0; dim]).unwrap();
                assert!(ra.clamped && !rb.clamped);
                assert_eq!(ra.obs, rb.obs);
                assert_eq!(ra.reward, rb.reward);
            }
        }
    }

    #[test]
    fn nan_action_is_rejected() {
        let mut env = make_env("pointmass-dense", 0).unwrap();
        env.reset();
        assert!(matches!(env.step(&[f64::NAN, 0.0]), Err(Error::Usage(_))));
        assert!(matches!(env.step(&[0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn episodes_truncate_at_horizon() {
        for id in ENV_IDS {
            let mut env = make_env(id, 1).unwrap();
            env.reset();
            let horizon = env.spec().horizon;
            let dim = env.spec().action_dim;
            for t in 1..=horizon {
                let r = env.step(&vec![0.0; dim]).unwrap();
                assert_eq!(r.truncated, t == horizon);
                assert!(!r.terminal);
            }
        }
    }

    #[test]
    fn dense_and_sparse_share_dynamics() {
        for (dense, sparse) in [
            ("pointmass-dense", "pointmass-sparse"),
            ("swingup-dense", "swingup-sparse"),
        ] {
            let mut a = make_env(dense, 9).unwrap();
            let mut b = make_env(sparse, 9).unwrap();
            assert_eq!(a.reset(), b.reset());
            let dim = a.spec().action_dim;
            for k in 0..100 {
                let act: Vec<f64> = (0..dim).map(|d| ((k + d) as f64).cos()).collect();
                let ra = a.step(&act).unwrap();
                let rb = b.step(&act).unwrap();
                assert_eq!(ra.obs, rb.obs);
                assert_eq!(ra.success, rb.success);
                assert_eq!(rb.reward, if rb.success { 1.0 } else { 0.0 });
            }
        }
    }
}
