use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp_action, Dynamics, EnvSpec, Environment, RewardKind, StepResult};
use crate::error::Result;

/// Vertical wall segment from the arena floor up to `top`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub x: f64,
    pub half_thickness: f64,
    pub top: f64,
}

impl Wall {
    fn left(&self) -> f64 {
        self.x - self.half_thickness
    }

    fn right(&self) -> f64 {
        self.x + self.half_thickness
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x > self.left() && x < self.right() && y < self.top
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassParams {
    pub dt: f64,
    /// Acceleration per unit action.
    pub accel: f64,
    /// Linear velocity damping rate (1/s).
    pub damping: f64,
    /// Per-axis speed limit.
    pub max_speed: f64,
    /// The arena is `[-arena, arena]²`.
    pub arena: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub start: [f64; 2],
    /// Start positions are jittered uniformly by up to this much per axis.
    pub start_jitter: f64,
    pub wall: Option<Wall>,
    pub horizon: u32,
}

impl PointMassParams {
    pub fn open() -> Self {
        Self {
            dt: 0.05,
            accel: 2.0,
            damping: 1.0,
            max_speed: 1.5,
            arena: 1.0,
            goal: [0.5, 0.0],
            goal_radius: 0.1,
            start: [-0.5, 0.0],
            start_jitter: 0.1,
            wall: None,
            horizon: 100,
        }
    }

    pub fn maze() -> Self {
        Self {
            goal: [0.6, -0.6],
            goal_radius: 0.15,
            start: [-0.6, -0.6],
            start_jitter: 0.1,
            wall: Some(Wall {
                x: 0.0,
                half_thickness: 0.05,
                top: 0.0,
            }),
            horizon: 200,
            ..Self::open()
        }
    }
}

/// Planar double integrator integrated with semi-implicit Euler.
///
/// Walls and arena edges stop motion inelastically: the velocity component
/// along the contact normal is zeroed.
pub struct PointMass {
    spec: EnvSpec,
    params: PointMassParams,
    rng: ChaCha8Rng,
    pos: [f64; 2],
    vel: [f64; 2],
    t: u32,
}

impl PointMass {
    pub fn spec_for(id: &str, params: PointMassParams, reward_kind: RewardKind) -> EnvSpec {
        EnvSpec {
            id: id.to_string(),
            obs_dim: 4,
            action_dim: 2,
            action_bounds: (-1.0, 1.0),
            horizon: params.horizon,
            reward_kind,
            dynamics: Dynamics::PointMass(params),
        }
    }

    pub fn new(spec: EnvSpec, params: PointMassParams, seed: u64) -> Self {
        Self {
            spec,
            pos: params.start,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            vel: [0.0; 2],
            t: 0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn velocity(&self) -> [f64; 2] {
        self.vel
    }

    /// Places the mass at rest at `pos` without starting a new episode.
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) {
        self.pos = pos;
        self.vel = vel;
    }

    fn observe(&self) -> Vec<f64> {
        vec![
            self.pos[0],
            self.pos[1],
            self.vel[0] / self.params.max_speed,
            self.vel[1] / self.params.max_speed,
        ]
    }

    pub fn goal_distance(&self) -> f64 {
        let dx = self.pos[0] - self.params.goal[0];
        let dy = self.pos[1] - self.params.goal[1];
        (dx * dx + dy * dy).sqrt()
    }

    fn integrate(&mut self, action: &[f64]) {
        let p = &self.params;
        let keep = 1.0 - p.damping * p.dt;
        for d in 0..2 {
            let v = keep * self.vel[d] + p.accel * action[d] * p.dt;
            self.vel[d] = v.clamp(-p.max_speed, p.max_speed);
        }

        // x first, then y, so wall contacts resolve one axis at a time.
        let mut nx = self.pos[0] + self.vel[0] * p.dt;
        if let Some(w) = p.wall {
            if self.pos[1] < w.top {
                if self.pos[0] <= w.left() && nx > w.left() {
                    nx = w.left();
                    self.vel[0] = 0.0;
                } else if self.pos[0] >= w.right() && nx < w.right() {
                    nx = w.right();
                    self.vel[0] = 0.0;
                }
            }
        }
        if nx.abs() > p.arena {
            nx = nx.clamp(-p.arena, p.arena);
            self.vel[0] = 0.0;
        }
        self.pos[0] = nx;

        let mut ny = self.pos[1] + self.vel[1] * p.dt;
        if let Some(w) = p.wall {
            let over_wall = self.pos[0] > w.left() && self.pos[0] < w.right();
            if over_wall && self.pos[1] >= w.top && ny < w.top {
                ny = w.top;
                self.vel[1] = 0.0;
            }
        }
        if ny.abs() > p.arena {
            ny = ny.clamp(-p.arena, p.arena);
            self.vel[1] = 0.0;
        }
        self.pos[1] = ny;
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        let j = self.params.start_jitter;
        for d in 0..2 {
            let offset = if j > 0.0 {
                self.rng.gen_range(-j..=j)
            } else {
                0.0
            };
            self.pos[d] = self.params.start[d] + offset;
        }
        self.vel = [0.0; 2];
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let (action, clamped) = clamp_action(&self.spec, action)?;
        self.integrate(&action);
        self.t += 1;
        let distance = self.goal_distance();
        let success = distance <= self.params.goal_radius;
        let reward = match self.spec.reward_kind {
            RewardKind::Dense => -distance,
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
