use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_action, Dynamics, EnvSpec, Environment, RewardKind, StepResult};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    /// Duration of one environment step.
    pub dt: f64,
    /// Integration substeps per environment step.
    pub substeps: u32,
    /// g / l, in 1/s².
    pub gravity: f64,
    /// Angular acceleration per unit action; below `gravity`, so the
    /// pendulum must be pumped up rather than lifted directly.
    pub max_torque: f64,
    pub damping: f64,
    /// Upright tolerance for success, in radians.
    pub upright_tolerance: f64,
    /// Initial angle is `π ± start_jitter` (hanging).
    pub start_jitter: f64,
    pub horizon: u32,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            dt: 0.05,
            substeps: 10,
            gravity: 10.0,
            max_torque: 4.0,
            damping: 0.1,
            upright_tolerance: 30f64.to_radians(),
            start_jitter: 0.1,
            horizon: 200,
        }
    }
}

const SPEED_SCALE: f64 = 10.0;

/// Torque-limited pendulum; angle measured from upright.
pub struct Pendulum {
    spec: EnvSpec,
    params: PendulumParams,
    rng: ChaCha8Rng,
    theta: f64,
    omega: f64,
    t: u32,
}

impl Pendulum {
    pub fn spec_for(id: &str, params: PendulumParams, reward_kind: RewardKind) -> EnvSpec {
        EnvSpec {
            id: id.to_string(),
            obs_dim: 3,
            action_dim: 1,
            action_bounds: (-1.0, 1.0),
            horizon: params.horizon,
            reward_kind,
            dynamics: Dynamics::Pendulum(params),
        }
    }

    pub fn new(spec: EnvSpec, params: PendulumParams, seed: u64) -> Self {
        Self {
            spec,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            theta: PI,
            omega: 0.0,
            t: 0,
        }
    }

    pub fn set_state(&mut self, theta: f64, omega: f64) {
        self.theta = theta;
        self.omega = omega;
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.omega)
    }

    /// Mechanical energy per unit inertia, zero when hanging at rest.
    pub fn energy(&self) -> f64 {
        0.5 * self.omega * self.omega + self.params.gravity * (1.0 + self.theta.cos())
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.omega / SPEED_SCALE]
    }

    pub fn is_upright(&self) -> bool {
        self.theta.cos() >= self.params.upright_tolerance.cos()
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        let j = self.params.start_jitter;
        let offset = if j > 0.0 {
            self.rng.gen_range(-j..=j)
        } else {
            0.0
        };
        self.theta = PI + offset;
        self.omega = 0.0;
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let (action, clamped) = clamp_action(&self.spec, action)?;
        let p = &self.params;
        let h = p.dt / f64::from(p.substeps);
        for _ in 0..p.substeps {
            let accel =
                p.gravity * self.theta.sin() - p.damping * self.omega + p.max_torque * action[0];
            self.omega += accel * h;
            self.theta += self.omega * h;
        }
        self.theta = self.theta.rem_euclid(2.0 * PI);
        self.t += 1;
        let success = self.is_upright();
        let reward = match self.spec.reward_kind {
            RewardKind::Dense => 0.5 * (1.0 + self.theta.cos()),
            RewardKind::Sparse => f64::from(u8::from(success)),
        };
        Ok(StepResult {
            obs: self.observe(),
            reward,
            terminal: false,
            truncated: self.t >= self.spec.horizon,
            success,
            clamped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_env;

    #[test]
    fn hanging_pendulum_earns_nothing() {
        let mut env = make_env("swingup-sparse", 4).unwrap();
        env.reset();
        for _ in 0..env.spec().horizon {
            assert_eq!(env.step(&[0.0]).unwrap().reward, 0.0);
        }
    }

    #[test]
    fn undamped_energy_is_conserved() {
        let params = PendulumParams {
            damping: 0.0,
            ..PendulumParams::default()
        };
        let spec = Pendulum::spec_for("swingup-dense", params.clone(), RewardKind::Dense);
        let mut env = Pendulum::new(spec, params.clone(), 0);
        env.reset();
        env.set_state(PI / 2.0, 0.0);
        let e0 = env.energy();
        let mut worst: f64 = 0.0;
        for _ in 0..params.horizon {
            env.step(&[0.0]).unwrap();
            worst = worst.max((env.energy() - e0).abs() / e0);
        }
        assert!(worst < 0.01, "energy drift {worst}");
    }

    #[test]
    fn constant_torque_cannot_lift_it() {
        let mut env = make_env("swingup-sparse", 4).unwrap();
        env.reset();
        for _ in 0..env.spec().horizon {
            assert!(!env.step(&[1.0]).unwrap().success);
        }
    }
}
