//! Exploration noise and exploitation coefficient schedules driven by the
//! dormant ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear interpolation from `start` to `end` over `duration_frames`, then
/// held at `end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub start: f64,
    pub end: f64,
    pub duration_frames: u64,
}

impl LinearSchedule {
    pub fn value(&self, elapsed_frames: u64) -> f64 {
        if self.duration_frames == 0 || elapsed_frames >= self.duration_frames {
            return self.end;
        }
        let mix = elapsed_frames as f64 / self.duration_frames as f64;
        (1.0 - mix) * self.start + mix * self.end
    }
}

/// How the exploration standard deviation is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationMode {
    /// Dormant sigmoid, switching to `max(sigmoid, linear)` after awakening.
    Awaken,
    /// Plain linear decay from frame 0.
    Linear,
    /// Maximal noise (1.0) until awakened, then the linear schedule from the
    /// awaken frame.
    MaxThenLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub awaken_step: Option<u64>,
    /// Dormant ratio threshold below which the agent counts as awakened.
    pub beta_threshold: f64,
    pub explore_temperature: f64,
    pub exploit_temperature: f64,
    pub lambda_max: f64,
    pub linear_schedule: LinearSchedule,
    pub noise_clip: f64,
}

impl Default for SchedulerState {
    fn default() -> Self {
        Self {
            awaken_step: None,
            beta_threshold: 0.2,
            explore_temperature: 0.1,
            exploit_temperature: 0.02,
            lambda_max: 0.6,
            linear_schedule: LinearSchedule {
                start: 1.0,
                end: 0.1,
                duration_frames: 2_000_000,
            },
            noise_clip: 0.3,
        }
    }
}

impl SchedulerState {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max > 0.0 && self.lambda_max <= 1.0) {
            return Err(Error::Config(format!(
                "maximum exploitation coefficient {} outside (0, 1]",
                self.lambda_max
            )));
        }
        if !(self.explore_temperature > 0.0 && self.exploit_temperature > 0.0) {
            return Err(Error::Config(
                "scheduler temperatures must be positive".into(),
            ));
        }
        if !(self.linear_schedule.start >= self.linear_schedule.end) {
            return Err(Error::Config("linear schedule must not increase".into()));
        }
        if !(self.noise_clip >= 0.0) {
            return Err(Error::Config("noise clip must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_awake(&self) -> bool {
        self.awaken_step.is_some()
    }

    /// Logistic in `β`: `1 / (1 + exp(−(β − β̂)/T))`.
    pub fn sigmoid_stddev(&self, beta: f64) -> f64 {
        1.0 / (1.0 + (-(beta - self.beta_threshold) / self.explore_temperature).exp())
    }

    /// Latches the awaken step the first time `beta_ema` drops strictly
    /// below the threshold.
    pub fn update_awaken(&mut self, step: u64, beta_ema: f64) {
        if self.awaken_step.is_none() && beta_ema < self.beta_threshold {
            self.awaken_step = Some(step);
        }
    }

    pub fn exploration_stddev(&self, step: u64, beta_ema: f64) -> f64 {
        let dormant = self.sigmoid_stddev(beta_ema);
        match self.awaken_step {
            None => dormant,
            Some(t0) => dormant.max(self.linear_schedule.value(step.saturating_sub(t0))),
        }
    }

    pub fn stddev_for(&self, mode: ExplorationMode, step: u64, beta_ema: f64) -> f64 {
        match mode {
            ExplorationMode::Awaken => self.exploration_stddev(step, beta_ema),
            ExplorationMode::Linear => self.linear_schedule.value(step),
            ExplorationMode::MaxThenLinear => match self.awaken_step {
                None => 1.0,
                Some(t0) => self.linear_schedule.value(step.saturating_sub(t0)),
            },
        }
    }

    /// `λ̄ / (1 + exp((β − β̂)/T′))`.
    pub fn exploitation_lambda(&self, beta: f64) -> f64 {
        self.lambda_max / (1.0 + ((beta - self.beta_threshold) / self.exploit_temperature).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SchedulerState {
        SchedulerState {
            linear_schedule: LinearSchedule {
                start: 1.0,
                end: 0.1,
                duration_frames: 50_000,
            },
            ..SchedulerState::default()
        }
    }

    #[test]
    fn sigmoid_points() {
        let s = SchedulerState::default();
        assert_eq!(s.sigmoid_stddev(0.2), 0.5);
        let b = 0.2 + 0.1 * 3f64.ln();
        assert!((s.sigmoid_stddev(b) - 0.75).abs() < 1e-12);
        assert!(s.sigmoid_stddev(1.0) > 0.999);
    }

    #[test]
    fn awaken_latch() {
        let mut s = SchedulerState::default();
        s.update_awaken(500, 0.2);
        assert_eq!(s.awaken_step, None);
        s.update_awaken(1000, 0.19);
        assert_eq!(s.awaken_step, Some(1000));
        s.update_awaken(2000, 0.9);
        s.update_awaken(3000, 0.01);
        assert_eq!(s.awaken_step, Some(1000));
    }

    #[test]
    fn stddev_branches() {
        let mut s = toy();
        assert_eq!(s.exploration_stddev(12345, 0.4), s.sigmoid_stddev(0.4));
        s.update_awaken(10_000, 0.1);
        assert_eq!(s.exploration_stddev(10_000, 0.1), 1.0);
        // With β̂ = 0.2 and T = 0.1 the sigmoid never drops below 1/(1+e²) ≈ 0.119
        // for β ≥ 0, so it stays above the 0.1 linear floor once the decay ends.
        let late = s.exploration_stddev(10_000 + 50_000, 0.0);
        assert!((late - 1.0 / (1.0 + 2f64.exp())).abs() < 1e-15);
        let mid = s.exploration_stddev(10_000 + 25_000, 0.0);
        assert!((mid - 0.55).abs() < 1e-12);
        assert!(s.exploration_stddev(10_000 + 60_000, 0.0) >= 0.1);
    }

    #[test]
    fn linear_schedule_interpolates_then_holds() {
        let l = toy().linear_schedule;
        assert_eq!(l.value(0), 1.0);
        assert!((l.value(25_000) - 0.55).abs() < 1e-12);
        assert_eq!(l.value(50_000), 0.1);
        assert_eq!(l.value(80_000), 0.1);
    }

    #[test]
    fn alternative_modes() {
        let mut s = toy();
        assert_eq!(s.stddev_for(ExplorationMode::Linear, 0, 0.9), 1.0);
        assert_eq!(s.stddev_for(ExplorationMode::MaxThenLinear, 100, 0.9), 1.0);
        s.update_awaken(1000, 0.0);
        assert!((s.stddev_for(ExplorationMode::MaxThenLinear, 26_000, 0.0) - 0.55).abs() < 1e-12);
        assert!((s.stddev_for(ExplorationMode::Linear, 25_000, 0.0) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn lambda_points() {
        let s = SchedulerState::default();
        assert!((s.exploitation_lambda(0.2) - 0.3).abs() < 1e-15);
        assert!(s.exploitation_lambda(1.0) < 1e-10 * 0.6);
        assert!((s.exploitation_lambda(0.0) - 0.6).abs() < 1e-4);
    }

    #[test]
    fn validation() {
        assert!(SchedulerState::default().validate().is_ok());
        let bad = SchedulerState {
            lambda_max: 0.0,
            ..SchedulerState::default()
        };
        assert!(bad.validate().is_err());
    }
}
