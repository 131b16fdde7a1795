//! The actor-critic agent with dormant-ratio-guided perturbation,
//! exploration and exploitation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{AgentConfig, ExploitMode, PerturbMode};
use crate::dormant::{compute_dormant_report, update_dormant_ema, DormantReport};
use crate::error::{Error, Result};
use crate::nn::{Activation, Architecture, ForwardTrace, NetworkParams, Tensor2};
use crate::perturb::{perturb_factor, perturb_network, should_perturb};
use crate::replay::{NStepBatch, ReplayBuffer};
use crate::schedule::SchedulerState;
use crate::seed::{derive_seed, Stream};
use crate::value::{
    critic_loss, expectile_value_loss, mixed_td_target, target_action, CriticPair, ValueNet,
};

pub const ACTION_BOUNDS: (f64, f64) = (-1.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Train,
    Eval,
}

pub fn actor_architecture(
    obs_dim: usize,
    action_dim: usize,
    cfg: &AgentConfig,
) -> Result<Architecture> {
    Architecture::new(
        vec![
            obs_dim,
            cfg.feature_dim,
            cfg.hidden_dim,
            cfg.hidden_dim,
            action_dim,
        ],
        vec![
            Activation::Tanh,
            Activation::Relu,
            Activation::Relu,
            Activation::Tanh,
        ],
    )
}

pub fn critic_architecture(
    obs_dim: usize,
    action_dim: usize,
    cfg: &AgentConfig,
) -> Result<Architecture> {
    Architecture::new(
        vec![obs_dim + action_dim, cfg.hidden_dim, cfg.hidden_dim, 1],
        vec![Activation::Relu, Activation::Relu, Activation::Identity],
    )
}

pub fn value_architecture(obs_dim: usize, cfg: &AgentConfig) -> Result<Architecture> {
    Architecture::new(
        vec![obs_dim, cfg.hidden_dim, cfg.hidden_dim, 1],
        vec![Activation::Relu, Activation::Relu, Activation::Identity],
    )
}

/// Dormant counting covers the actor's hidden layers; the action head is excluded.
pub fn actor_dormant_mask(actor: &NetworkParams) -> Vec<bool> {
    let n = actor.layers.len();
    (0..n).map(|i| i + 1 < n).collect()
}

/// One perturbation event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbEvent {
    pub frame: u64,
    pub beta: f64,
    pub alpha: f64,
    /// Euclidean parameter distance moved by actor, q1, q2 and value network.
    pub distance_actor: f64,
    pub distance_q1: f64,
    pub distance_q2: f64,
    pub distance_value: f64,
}

/// Everything one update measured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub frame: u64,
    pub update: u64,
    pub beta_raw: f64,
    pub beta_ema: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub awaken_step: Option<u64>,
    pub critic_loss: f64,
    pub value_loss: Option<f64>,
    pub actor_loss: f64,
    pub mean_target: f64,
    pub dormant: DormantReport,
    pub perturb: Option<PerturbEvent>,
}

fn column(values: &[f64]) -> Tensor2 {
    Tensor2::column_vector(values)
}

fn ensure_finite(what: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::non_finite(what, None))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    cfg: AgentConfig,
    seed: u64,
    obs_dim: usize,
    action_dim: usize,
    actor: NetworkParams,
    critics: CriticPair,
    value: ValueNet,
    scheduler: SchedulerState,
    beta_ema: Option<f64>,
    update_count: u64,
    last_perturb_frame: u64,
    perturb_count: u64,
    act_rng: ChaCha8Rng,
}

pub const AGENT_CHECKPOINT_FORMAT: &str = "drm-agent";
pub const AGENT_CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct AgentCheckpoint {
    format: String,
    version: u32,
    agent: Agent,
    buffer: Option<ReplayBuffer>,
}

impl Agent {
    pub fn new(obs_dim: usize, action_dim: usize, cfg: AgentConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let actor = actor_architecture(obs_dim, action_dim, &cfg)?.init(derive_seed(
            seed,
            Stream::ActorInit,
            0,
        ));
        let critics = CriticPair::new(
            &critic_architecture(obs_dim, action_dim, &cfg)?,
            derive_seed(seed, Stream::Critic1Init, 0),
            derive_seed(seed, Stream::Critic2Init, 0),
        );
        let value = ValueNet::new(
            &value_architecture(obs_dim, &cfg)?,
            cfg.expectile,
            derive_seed(seed, Stream::ValueInit, 0),
        )?;
        Ok(Self {
            scheduler: cfg.scheduler(),
            cfg,
            seed,
            obs_dim,
            action_dim,
            actor,
            critics,
            value,
            beta_ema: None,
            update_count: 0,
            last_perturb_frame: 0,
            perturb_count: 0,
            act_rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Acting, 0)),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn actor(&self) -> &NetworkParams {
        &self.actor
    }

    pub fn critics(&self) -> &CriticPair {
        &self.critics
    }

    pub fn value(&self) -> &ValueNet {
        &self.value
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.scheduler
    }

    pub fn beta_ema(&self) -> Option<f64> {
        self.beta_ema
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn perturb_count(&self) -> u64 {
        self.perturb_count
    }

    /// Exploration noise for acting at `frame`. Before the first update
    /// there is no dormant measurement and the network is treated as fully
    /// dormant.
    pub fn current_stddev(&self, frame: u64) -> f64 {
        let beta = self.beta_ema.unwrap_or(1.0);
        self.scheduler
            .stddev_for(self.cfg.variant.awaken_exploration, frame, beta)
    }

    pub fn current_lambda(&self) -> f64 {
        let beta = self.beta_ema.unwrap_or(1.0);
        match self.cfg.variant.drg_exploitation {
            ExploitMode::On => self.scheduler.exploitation_lambda(beta),
            ExploitMode::Off => 0.0,
            ExploitMode::FixedLambda(l) => l,
        }
    }

    /// Deterministic policy output.
    pub fn policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim {
            return Err(Error::shape(format!(
                "observation has {} values, agent expects {}",
                obs.len(),
                self.obs_dim
            )));
        }
        Ok(self.actor.predict(&Tensor2::row_vector(obs))?.into_vec())
    }

    /// Chooses an action. Training acts uniformly at random during the
    /// initial exploration steps, then adds Gaussian noise to the policy.
    pub fn act(&mut self, obs: &[f64], frame: u64, mode: ActMode) -> Result<Vec<f64>> {
        let mu = self.policy(obs)?;
        if mode == ActMode::Eval {
            return Ok(mu);
        }
        let (lo, hi) = ACTION_BOUNDS;
        let agent_step = frame / u64::from(self.cfg.action_repeat);
        if agent_step < self.cfg.exploration_steps {
            return Ok((0..self.action_dim)
                .map(|_| self.act_rng.gen_range(lo..hi))
                .collect());
        }
        let sigma = self.current_stddev(frame);
        Ok(mu
            .into_iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut self.act_rng);
                (m + sigma * z).clamp(lo, hi)
            })
            .collect())
    }

    fn sa(obs: &Tensor2, action: &Tensor2) -> Result<Tensor2> {
        obs.hcat(action)
    }

    /// One gradient update. The dormant ratio is measured on the actor
    /// before any parameter in this update changes.
    pub fn update(&mut self, buffer: &ReplayBuffer, frame: u64) -> Result<UpdateMetrics> {
        let idx = self.update_count;
        let cfg = self.cfg.clone();
        let batch = buffer.sample_nstep(
            cfg.batch_size,
            cfg.nstep,
            cfg.discount,
            derive_seed(self.seed, Stream::BatchSample, idx),
        )?;
        if batch.obs.cols() != self.obs_dim || batch.action.cols() != self.action_dim {
            return Err(Error::shape("replay batch does not match agent dimensions"));
        }

        // Nothing touches the actor before its own step, so this trace serves
        // both the dormant measurement and the policy gradient.
        let (mu, actor_trace) = self.actor.forward(&batch.obs)?;
        let dormant = compute_dormant_report(
            &actor_trace,
            &actor_dormant_mask(&self.actor),
            cfg.dormant_tau,
        )?;
        let beta_ema = update_dormant_ema(self.beta_ema, dormant.ratio, cfg.dormant_ema_decay)?;
        self.beta_ema = Some(beta_ema);
        self.scheduler.update_awaken(frame, beta_ema);

        // Likewise the critics are unchanged until their own step.
        let sa = Self::sa(&batch.obs, &batch.action)?;
        let q1 = self.critics.q1.forward(&sa)?;
        let q2 = self.critics.q2.forward(&sa)?;

        let exploit = cfg.variant.drg_exploitation;
        let value_loss = if exploit == ExploitMode::Off {
            None
        } else {
            Some(self.update_value(&batch, q1.0.data(), q2.0.data())?)
        };

        let lambda = self.current_lambda();
        let sigma = self
            .scheduler
            .stddev_for(cfg.variant.awaken_exploration, frame, beta_ema);
        let (critic_loss, mean_target) =
            self.update_critics(&batch, (q1, q2), sigma, lambda, idx)?;
        let actor_loss = self.update_actor(&batch, mu, &actor_trace)?;
        self.critics.soft_update_targets(cfg.soft_update_rate)?;

        let perturb = self.maybe_perturb(frame, beta_ema)?;
        self.update_count += 1;

        Ok(UpdateMetrics {
            frame,
            update: idx,
            beta_raw: dormant.ratio,
            beta_ema,
            sigma,
            lambda,
            awaken_step: self.scheduler.awaken_step,
            critic_loss,
            value_loss,
            actor_loss,
            mean_target,
            dormant: dormant.without_scores(),
            perturb,
        })
    }

    /// Expectile regression of V(s) onto min(Q1, Q2)(s, a) from the batch.
    fn update_value(&mut self, batch: &NStepBatch, q1: &[f64], q2: &[f64]) -> Result<f64> {
        let q_min: Vec<f64> = q1.iter().zip(q2).map(|(a, b)| a.min(*b)).collect();
        let (v_out, trace) = self.value.v.forward(&batch.obs)?;
        let (loss, grad) = expectile_value_loss(v_out.data(), &q_min, self.value.expectile)?;
        ensure_finite("value loss", loss)?;
        let grads = self.value.v.backward(&trace, &column(&grad))?;
        self.value.v.adam_step(&grads, self.cfg.lr)?;
        Ok(loss)
    }

    fn update_critics(
        &mut self,
        batch: &NStepBatch,
        ((q1, tr1), (q2, tr2)): ((Tensor2, ForwardTrace), (Tensor2, ForwardTrace)),
        sigma: f64,
        lambda: f64,
        idx: u64,
    ) -> Result<(f64, f64)> {
        let n = batch.len();
        let mu_next = self.actor.predict(&batch.next_obs)?;
        let next_action = target_action(
            mu_next.data(),
            derive_seed(self.seed, Stream::TargetNoise, idx),
            sigma,
            self.cfg.noise_clip,
            ACTION_BOUNDS,
        )?;
        let next_action = Tensor2::from_vec(n, self.action_dim, next_action)?;
        let sa_next = Self::sa(&batch.next_obs, &next_action)?;
        let tq1 = self.critics.q1_target.predict(&sa_next)?;
        let tq2 = self.critics.q2_target.predict(&sa_next)?;
        let q_next_min: Vec<f64> = tq1
            .data()
            .iter()
            .zip(tq2.data())
            .map(|(a, b)| a.min(*b))
            .collect();
        let v_next = if self.cfg.variant.drg_exploitation == ExploitMode::Off {
            vec![0.0; n]
        } else {
            self.value.v.predict(&batch.next_obs)?.into_vec()
        };
        let target = mixed_td_target(
            &batch.reward_nstep,
            &batch.discount_nstep,
            &v_next,
            &q_next_min,
            lambda,
        )?;

        let loss = critic_loss(q1.data(), q2.data(), &target)?;
        ensure_finite("critic loss", loss.loss)?;
        let g1 = self.critics.q1.backward(&tr1, &column(&loss.grad_q1))?;
        let g2 = self.critics.q2.backward(&tr2, &column(&loss.grad_q2))?;
        self.critics.q1.adam_step(&g1, self.cfg.lr)?;
        self.critics.q2.adam_step(&g2, self.cfg.lr)?;
        let mean_target = target.iter().sum::<f64>() / n as f64;
        Ok((loss.loss, mean_target))
    }

    /// Deterministic policy gradient through min(Q1, Q2).
    fn update_actor(
        &mut self,
        batch: &NStepBatch,
        mu: Tensor2,
        actor_trace: &ForwardTrace,
    ) -> Result<f64> {
        let n = batch.len();
        let sa = Self::sa(&batch.obs, &mu)?;
        let (q1, tr1) = self.critics.q1.forward(&sa)?;
        let (q2, tr2) = self.critics.q2.forward(&sa)?;
        let mut g1 = vec![0.0; n];
        let mut g2 = vec![0.0; n];
        let mut loss = 0.0;
        for i in 0..n {
            let (a, b) = (q1.data()[i], q2.data()[i]);
            if a <= b {
                g1[i] = -1.0 / n as f64;
                loss -= a;
            } else {
                g2[i] = -1.0 / n as f64;
                loss -= b;
            }
        }
        let loss = loss / n as f64;
        ensure_finite("actor loss", loss)?;
        let d1 = self.critics.q1.input_gradient(&tr1, &column(&g1))?;
        let d2 = self.critics.q2.input_gradient(&tr2, &column(&g2))?;
        let mut d_action = Tensor2::zeros(n, self.action_dim);
        for r in 0..n {
            for c in 0..self.action_dim {
                let col = self.obs_dim + c;
                d_action.set(r, c, d1.get(r, col) + d2.get(r, col));
            }
        }
        let grads = self.actor.backward(actor_trace, &d_action)?;
        self.actor.adam_step(&grads, self.cfg.lr)?;
        Ok(loss)
    }

    fn maybe_perturb(&mut self, frame: u64, beta_ema: f64) -> Result<Option<PerturbEvent>> {
        let pcfg = self.cfg.perturb_config();
        let alpha = match self.cfg.variant.drg_perturbation {
            PerturbMode::Off => return Ok(None),
            PerturbMode::On => perturb_factor(beta_ema, &pcfg),
            PerturbMode::FixedAlpha(a) => a,
        };
        if !should_perturb(frame, self.last_perturb_frame, &pcfg) {
            return Ok(None);
        }
        let generation = self.perturb_count + 1;
        let draw = |stream| derive_seed(self.seed, stream, generation);

        let actor = perturb_network(&self.actor, alpha, draw(Stream::ActorInit))?;
        let q1 = perturb_network(&self.critics.q1, alpha, draw(Stream::Critic1Init))?;
        let q2 = perturb_network(&self.critics.q2, alpha, draw(Stream::Critic2Init))?;
        let v = perturb_network(&self.value.v, alpha, draw(Stream::ValueInit))?;
        let event = PerturbEvent {
            frame,
            beta: beta_ema,
            alpha,
            distance_actor: actor.distance(&self.actor),
            distance_q1: q1.distance(&self.critics.q1),
            distance_q2: q2.distance(&self.critics.q2),
            distance_value: v.distance(&self.value.v),
        };
        self.actor = actor;
        self.critics.q1 = q1;
        self.critics.q2 = q2;
        self.value.v = v;
        self.critics.sync_targets()?;
        self.last_perturb_frame = frame;
        self.perturb_count = generation;
        Ok(Some(event))
    }

    /// Writes the full agent state (networks, optimizers, scheduler, RNG)
    /// and optionally the replay buffer.
    pub fn save_checkpoint(
        &self,
        path: impl AsRef<Path>,
        buffer: Option<&ReplayBuffer>,
    ) -> Result<()> {
        let ckpt = AgentCheckpoint {
            format: AGENT_CHECKPOINT_FORMAT.into(),
            version: AGENT_CHECKPOINT_VERSION,
            agent: self.clone(),
            buffer: buffer.cloned(),
        };
        std::fs::write(path, serde_json::to_string(&ckpt)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Self, Option<ReplayBuffer>)> {
        let ckpt: AgentCheckpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ckpt.format != AGENT_CHECKPOINT_FORMAT || ckpt.version != AGENT_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "agent checkpoint {} v{} not supported",
                ckpt.format, ckpt.version
            )));
        }
        Ok((ckpt.agent, ckpt.buffer))
    }
}
