//! Hand-written controllers that certify each task is solvable.

use super::{Dynamics, EnvSpec, PendulumParams, PointMassParams};

pub enum ScriptedController {
    /// Saturating velocity-tracking controller through a list of waypoints.
    Waypoints {
        params: PointMassParams,
        waypoints: Vec<[f64; 2]>,
        next: usize,
    },
    /// Energy pumping with a PD catch near upright.
    SwingUp { params: PendulumParams },
}

impl ScriptedController {
    pub fn for_spec(spec: &EnvSpec) -> Self {
        match &spec.dynamics {
            Dynamics::PointMass(p) => {
                let mut waypoints = Vec::new();
                if let Some(w) = p.wall {
                    let above = (w.top + p.arena) / 2.0;
                    waypoints.push([w.x - 3.0 * w.half_thickness - 0.15, above]);
                    waypoints.push([w.x + 3.0 * w.half_thickness + 0.15, above]);
                }
                waypoints.push(p.goal);
                ScriptedController::Waypoints {
                    params: p.clone(),
                    waypoints,
                    next: 0,
                }
            }
            Dynamics::Pendulum(p) => ScriptedController::SwingUp { params: p.clone() },
        }
    }

    /// Call at the start of each episode.
    pub fn reset(&mut self) {
        if let ScriptedController::Waypoints { next, .. } = self {
            *next = 0;
        }
    }

    pub fn act(&mut self, obs: &[f64]) -> Vec<f64> {
        match self {
            ScriptedController::Waypoints {
                params,
                waypoints,
                next,
            } => {
                let pos = [obs[0], obs[1]];
                let vel = [obs[2] * params.max_speed, obs[3] * params.max_speed];
                let last = waypoints.len() - 1;
                let dist = |w: [f64; 2]| ((w[0] - pos[0]).powi(2) + (w[1] - pos[1]).powi(2)).sqrt();
                while *next < last && dist(waypoints[*next]) < 0.1 {
                    *next += 1;
                }
                let target = waypoints[*next];
                // Bang-bang on velocity error toward a distance-limited cruise speed.
                (0..2)
                    .map(|d| {
                        let err = target[d] - pos[d];
                        let cruise = (3.0 * err).clamp(-1.0, 1.0);
                        (10.0 * (cruise - vel[d])).clamp(-1.0, 1.0)
                    })
                    .collect()
            }
            ScriptedController::SwingUp { params } => {
                let (cos, sin, omega) = (obs[0], obs[1], obs[2] * 10.0);
                if cos > 0.85 {
                    // θ measured from upright; sin θ ≈ θ near the top.
                    let u =
                        -(params.gravity * sin + 2.0 * sin * 6.0 + 2.5 * omega) / params.max_torque;
                    vec![u.clamp(-1.0, 1.0)]
                } else {
                    let energy = 0.5 * omega * omega + params.gravity * (1.0 + cos);
                    let wanted = 2.0 * params.gravity;
                    let push = if omega.abs() < 1e-3 {
                        1.0
                    } else {
                        omega.signum()
                    };
                    vec![if energy < wanted { push } else { -0.3 * push }]
                }
            }
        }
    }
}

/// Convenience for one-shot queries without episode state.
pub fn scripted_action(spec: &EnvSpec, obs: &[f64]) -> Vec<f64> {
    ScriptedController::for_spec(spec).act(obs)
}
