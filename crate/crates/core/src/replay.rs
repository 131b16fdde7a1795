//! FIFO transition storage with n-step return sampling.
//!
//! Transitions are stored in push order. An n-step window starting at a
//! transition extends forward until it holds `n` transitions or reaches an
//! episode end, so it never crosses into the next episode. Starts whose
//! window is still waiting on future transitions are not sampled.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Episode ended in an absorbing state; no bootstrap.
    pub terminal: bool,
    /// Episode cut by a time limit; bootstraps from `next_obs`.
    pub truncated: bool,
}

impl Transition {
    pub fn ends_episode(&self) -> bool {
        self.terminal || self.truncated
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NStepBatch {
    pub obs: Tensor2,
    pub action: Tensor2,
    pub reward_nstep: Vec<f64>,
    pub discount_nstep: Vec<f64>,
    pub next_obs: Tensor2,
}

impl NStepBatch {
    pub fn len(&self) -> usize {
        self.reward_nstep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward_nstep.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    items: VecDeque<Transition>,
    /// Transitions ever pushed; the oldest stored one has absolute index
    /// `pushed - items.len()`.
    pushed: u64,
    /// Absolute index of the most recent episode-ending transition.
    last_episode_end: Option<u64>,
}

pub const BUFFER_SNAPSHOT_FORMAT: &str = "drm-replay";
pub const BUFFER_SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BufferSnapshot {
    format: String,
    version: u32,
    buffer: ReplayBuffer,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            action_dim,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            pushed: 0,
            last_episode_end: None,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn push(&mut self, transition: Transition) -> Result<()> {
        if transition.obs.len() != self.obs_dim || transition.next_obs.len() != self.obs_dim {
            return Err(Error::shape(format!(
                "observation width {} / {}, buffer expects {}",
                transition.obs.len(),
                transition.next_obs.len(),
                self.obs_dim
            )));
        }
        if transition.action.len() != self.action_dim {
            return Err(Error::shape(format!(
                "action width {}, buffer expects {}",
                transition.action.len(),
                self.action_dim
            )));
        }
        let finite = transition
            .obs
            .iter()
            .chain(&transition.action)
            .chain(&transition.next_obs)
            .all(|v| v.is_finite())
            && transition.reward.is_finite();
        if !finite {
            return Err(Error::non_finite("transition", None));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        if transition.ends_episode() {
            self.last_episode_end = Some(self.pushed);
        }
        self.items.push_back(transition);
        self.pushed += 1;
        Ok(())
    }

    /// Number of sampleable starts for windows of length `n`. Valid starts
    /// always form a prefix of the stored transitions.
    pub fn valid_starts(&self, n: usize) -> usize {
        let len = self.items.len();
        let oldest = self.pushed - len as u64;
        let full_windows = len.saturating_sub(n.saturating_sub(1));
        let closed = match self.last_episode_end {
            Some(end) if end >= oldest => (end - oldest + 1) as usize,
            _ => 0,
        };
        full_windows.max(closed)
    }

    /// n-step return, discount and bootstrap observation for the window at `start`.
    pub fn nstep_at(&self, start: usize, n: usize, gamma: f64) -> (f64, f64, &[f64]) {
        let mut reward = 0.0;
        let mut discount = 1.0;
        let mut last = &self.items[start];
        for k in 0..n {
            let t = &self.items[start + k];
            reward += discount * t.reward;
            discount *= gamma;
            last = t;
            if t.ends_episode() {
                break;
            }
        }
        if last.terminal {
            discount = 0.0;
        }
        (reward, discount, &last.next_obs)
    }

    /// Uniformly samples `batch_size` window starts (with replacement).
    pub fn sample_nstep(
        &self,
        batch_size: usize,
        n: usize,
        gamma: f64,
        seed: u64,
    ) -> Result<NStepBatch> {
        if n == 0 {
            return Err(Error::usage("n-step horizon must be at least 1"));
        }
        let valid = self.valid_starts(n);
        if batch_size == 0 || valid < batch_size {
            return Err(Error::usage(format!(
                "need {batch_size} sampleable transitions, buffer has {valid}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs = Vec::with_capacity(batch_size * self.obs_dim);
        let mut action = Vec::with_capacity(batch_size * self.action_dim);
        let mut next_obs = Vec::with_capacity(batch_size * self.obs_dim);
        let mut reward_nstep = Vec::with_capacity(batch_size);
        let mut discount_nstep = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let start = rng.gen_range(0..valid);
            let t = &self.items[start];
            let (r, d, next) = self.nstep_at(start, n, gamma);
            obs.extend_from_slice(&t.obs);
            action.extend_from_slice(&t.action);
            next_obs.extend_from_slice(next);
            reward_nstep.push(r);
            discount_nstep.push(d);
        }
        Ok(NStepBatch {
            obs: Tensor2::from_vec(batch_size, self.obs_dim, obs)?,
            action: Tensor2::from_vec(batch_size, self.action_dim, action)?,
            reward_nstep,
            discount_nstep,
            next_obs: Tensor2::from_vec(batch_size, self.obs_dim, next_obs)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let snap = BufferSnapshot {
            format: BUFFER_SNAPSHOT_FORMAT.into(),
            version: BUFFER_SNAPSHOT_VERSION,
            buffer: self.clone(),
        };
        std::fs::write(path, serde_json::to_string(&snap)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let snap: BufferSnapshot = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if snap.format != BUFFER_SNAPSHOT_FORMAT || snap.version != BUFFER_SNAPSHOT_VERSION {
            return Err(Error::Checkpoint(format!(
                "replay snapshot {} v{} not supported",
                snap.format, snap.version
            )));
        }
        Ok(snap.buffer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(x: f64, reward: f64, terminal: bool, truncated: bool) -> Transition {
        Transition {
            obs: vec![x],
            action: vec![0.0],
            reward,
            next_obs: vec![x + 1.0],
            terminal,
            truncated,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3, 1, 1).unwrap();
        for i in 0..4 {
            b.push(tr(i as f64, 0.0, false, false)).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.get(0).unwrap().obs, vec![1.0]);
    }

    #[test]
    fn single_sample_returns_the_transition() {
        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        b.push(tr(4.0, 2.5, false, false)).unwrap();
        let batch = b.sample_nstep(1, 1, 0.99, 0).unwrap();
        assert_eq!(batch.obs.data(), &[4.0]);
        assert_eq!(batch.reward_nstep, vec![2.5]);
        assert_eq!(batch.discount_nstep, vec![0.99]);
        assert_eq!(batch.next_obs.data(), &[5.0]);
    }

    #[test]
    fn two_step_episode_truncates_window() {
        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        b.push(tr(0.0, 1.0, false, false)).unwrap();
        b.push(tr(1.0, 1.0, false, true)).unwrap();
        let (r, d, next) = b.nstep_at(0, 3, 0.99);
        assert!((r - 1.99).abs() < 1e-15);
        assert!((d - 0.99 * 0.99).abs() < 1e-15);
        assert_eq!(next, &[2.0]);

        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        b.push(tr(0.0, 1.0, false, false)).unwrap();
        b.push(tr(1.0, 1.0, true, false)).unwrap();
        let (_, d, _) = b.nstep_at(0, 3, 0.99);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn geometric_three_step_return() {
        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        for i in 0..3 {
            b.push(tr(i as f64, 1.0, false, false)).unwrap();
        }
        let (r, d, next) = b.nstep_at(0, 3, 0.99);
        assert!((r - 2.9701).abs() < 1e-12);
        assert!((d - 0.970299).abs() < 1e-15);
        assert_eq!(next, &[3.0]);
    }

    #[test]
    fn terminal_after_first_step() {
        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        b.push(tr(0.0, 0.5, true, false)).unwrap();
        b.push(tr(10.0, 9.0, false, false)).unwrap();
        let (r, d, next) = b.nstep_at(0, 3, 0.99);
        assert_eq!((r, d), (0.5, 0.0));
        assert_eq!(next, &[1.0]);
    }

    #[test]
    fn zero_discount_keeps_immediate_reward() {
        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        for i in 0..3 {
            b.push(tr(i as f64, i as f64 + 1.0, false, false)).unwrap();
        }
        let (r, d, _) = b.nstep_at(0, 3, 0.0);
        assert_eq!((r, d), (1.0, 0.0));
    }

    #[test]
    fn valid_starts_track_open_episode() {
        let mut b = ReplayBuffer::new(100, 1, 1).unwrap();
        assert_eq!(b.valid_starts(3), 0);
        b.push(tr(0.0, 0.0, false, false)).unwrap();
        b.push(tr(1.0, 0.0, false, false)).unwrap();
        assert_eq!(b.valid_starts(3), 0);
        assert_eq!(b.valid_starts(1), 2);
        b.push(tr(2.0, 0.0, false, true)).unwrap();
        assert_eq!(b.valid_starts(3), 3);
        b.push(tr(3.0, 0.0, false, false)).unwrap();
        assert_eq!(b.valid_starts(3), 3);
        b.push(tr(4.0, 0.0, false, false)).unwrap();
        b.push(tr(5.0, 0.0, false, false)).unwrap();
        assert_eq!(b.valid_starts(3), 4);
    }

    #[test]
    fn insufficient_data_is_a_usage_error() {
        let mut b = ReplayBuffer::new(10, 1, 1).unwrap();
        b.push(tr(0.0, 0.0, false, false)).unwrap();
        assert!(matches!(
            b.sample_nstep(2, 1, 0.99, 0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn dimension_checks() {
        let mut b = ReplayBuffer::new(10, 2, 1).unwrap();
        assert!(matches!(
            b.push(tr(0.0, 0.0, false, false)),
            Err(Error::Shape(_))
        ));
        assert!(ReplayBuffer::new(0, 1, 1).is_err());
    }
}
