//! The training loop and its JSON-lines metrics stream.
//!
//! Every record carries a `kind` field: `header`, `update`, `perturb`,
//! `eval`, `abort` or `summary`. Update records report the dormant ratio
//! measured on the sampled minibatch with the actor as it was before that
//! update's gradient steps. Nothing time-dependent is written, so a rerun
//! with the same config reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{ActMode, Agent, PerturbEvent, UpdateMetrics};
use crate::config::AgentConfig;
use crate::envs::{env_spec, make_env, Environment};
use crate::error::{Error, Result};
use crate::replay::{ReplayBuffer, Transition};
use crate::seed::{derive_seed, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: String,
    pub seed: u64,
    pub total_frames: u64,
    pub eval_interval_frames: u64,
    pub eval_episodes: u32,
    /// Write every n-th update record; perturbation events are always written.
    pub update_log_interval: u64,
    /// Where to leave the final agent checkpoint, if anywhere.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_buffer: bool,
    pub agent: AgentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: "pointmass-sparse".into(),
            seed: 0,
            total_frames: 150_000,
            eval_interval_frames: 10_000,
            eval_episodes: 10,
            update_log_interval: 10,
            checkpoint: None,
            checkpoint_buffer: false,
            agent: AgentConfig::toy(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        env_spec(&self.env)?;
        if self.eval_interval_frames == 0 || self.eval_episodes == 0 {
            return Err(Error::Config(
                "evaluation interval and episode count must be positive".into(),
            ));
        }
        if self.update_log_interval == 0 {
            return Err(Error::Config("update log interval must be positive".into()));
        }
        self.agent.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub frame: u64,
    pub episodes: u32,
    pub mean_return: f64,
    /// Fraction of episodes that reached success at least once.
    pub success_rate: f64,
    pub beta_ema: Option<f64>,
    pub sigma: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: u64,
    pub updates: u64,
    pub episodes: u64,
    pub perturbations: u64,
    pub awaken_step: Option<u64>,
    pub final_beta_ema: Option<f64>,
    pub final_success_rate: Option<f64>,
    pub final_return: Option<f64>,
    pub aborted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header {
        env: String,
        seed: u64,
        obs_dim: usize,
        action_dim: usize,
        config: TrainConfig,
    },
    Update(UpdateMetrics),
    Perturb(PerturbEvent),
    Eval(EvalRecord),
    Abort {
        frame: u64,
        update: u64,
        reason: String,
    },
    Summary(RunSummary),
}

/// Reads a metrics file back into records.
pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    fn write(&mut self, record: &Record) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

/// Runs `episodes` deterministic evaluation episodes.
pub fn evaluate(
    agent: &Agent,
    env: &mut dyn Environment,
    episodes: u32,
    action_repeat: u32,
) -> Result<(f64, f64)> {
    let mut total_return = 0.0;
    let mut successes = 0u32;
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut hit = false;
        'episode: loop {
            let action = agent.policy(&obs)?;
            for _ in 0..action_repeat {
                let step = env.step(&action)?;
                total_return += step.reward;
                hit |= step.success;
                obs = step.obs;
                if step.terminal || step.truncated {
                    break 'episode;
                }
            }
        }
        successes += u32::from(hit);
    }
    let n = f64::from(episodes);
    Ok((total_return / n, f64::from(successes) / n))
}

/// Trains one agent and writes its metrics stream to `metrics_path`.
pub fn train(cfg: &TrainConfig, metrics_path: impl AsRef<Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let mut env = make_env(&cfg.env, derive_seed(cfg.seed, Stream::TrainEnv, 0))?;
    let mut eval_env = make_env(&cfg.env, derive_seed(cfg.seed, Stream::EvalEnv, 0))?;
    let spec = env.spec().clone();
    let acfg = &cfg.agent;
    let mut agent = Agent::new(spec.obs_dim, spec.action_dim, acfg.clone(), cfg.seed)?;
    let mut buffer = ReplayBuffer::new(acfg.replay_capacity, spec.obs_dim, spec.action_dim)?;
    let mut log = MetricsWriter {
        out: BufWriter::new(File::create(metrics_path)?),
    };
    log.write(&Record::Header {
        env: cfg.env.clone(),
        seed: cfg.seed,
        obs_dim: spec.obs_dim,
        action_dim: spec.action_dim,
        config: cfg.clone(),
    })?;

    let mut summary = RunSummary {
        frames: 0,
        updates: 0,
        episodes: 0,
        perturbations: 0,
        awaken_step: None,
        final_beta_ema: None,
        final_success_rate: None,
        final_return: None,
        aborted: false,
    };
    let mut frame = 0u64;
    let mut agent_step = 0u64;
    let mut next_eval = cfg.eval_interval_frames;
    let mut last_eval_frame = None;
    let mut obs = env.reset();

    let mut run_eval = |agent: &Agent,
                        frame: u64,
                        log: &mut MetricsWriter,
                        summary: &mut RunSummary|
     -> Result<()> {
        let (ret, success) = evaluate(
            agent,
            eval_env.as_mut(),
            cfg.eval_episodes,
            acfg.action_repeat,
        )?;
        summary.final_return = Some(ret);
        summary.final_success_rate = Some(success);
        log.write(&Record::Eval(EvalRecord {
            frame,
            episodes: cfg.eval_episodes,
            mean_return: ret,
            success_rate: success,
            beta_ema: agent.beta_ema(),
            sigma: agent.current_stddev(frame),
            lambda: agent.current_lambda(),
        }))
    };

    while frame < cfg.total_frames {
        let action = agent.act(&obs, frame, ActMode::Train)?;
        let mut reward = 0.0;
        let mut next = obs.clone();
        let (mut terminal, mut truncated) = (false, false);
        for _ in 0..acfg.action_repeat {
            let step = env.step(&action)?;
            frame += 1;
            reward += step.reward;
            next = step.obs;
            terminal = step.terminal;
            truncated = step.truncated;
            if terminal || truncated {
                break;
            }
        }
        buffer.push(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward,
            next_obs: next.clone(),
            terminal,
            truncated,
        })?;
        agent_step += 1;
        obs = if terminal || truncated {
            summary.episodes += 1;
            env.reset()
        } else {
            next
        };

        if frame >= acfg.seed_frames && agent_step.is_multiple_of(acfg.update_every_steps) {
            let metrics = match agent.update(&buffer, frame) {
                Ok(m) => m,
                Err(e) => {
                    log.write(&Record::Abort {
                        frame,
                        update: agent.update_count(),
                        reason: e.to_string(),
                    })?;
                    summary.aborted = true;
                    summary.frames = frame;
                    summary.updates = agent.update_count();
                    log.write(&Record::Summary(summary))?;
                    log.out.flush()?;
                    return Err(e);
                }
            };
            if let Some(event) = &metrics.perturb {
                log.write(&Record::Perturb(event.clone()))?;
            }
            if metrics.update % cfg.update_log_interval == 0 {
                log.write(&Record::Update(metrics))?;
            }
        }

        if frame >= next_eval {
            run_eval(&agent, frame, &mut log, &mut summary)?;
            last_eval_frame = Some(frame);
            while next_eval <= frame {
                next_eval += cfg.eval_interval_frames;
            }
        }
    }
    if cfg.total_frames > 0 && last_eval_frame != Some(frame) {
        run_eval(&agent, frame, &mut log, &mut summary)?;
    }

    summary.frames = frame;
    summary.updates = agent.update_count();
    summary.perturbations = agent.perturb_count();
    summary.awaken_step = agent.scheduler().awaken_step;
    summary.final_beta_ema = agent.beta_ema();
    log.write(&Record::Summary(summary.clone()))?;
    log.out.flush()?;

    if let Some(path) = &cfg.checkpoint {
        agent.save_checkpoint(path, cfg.checkpoint_buffer.then_some(&buffer))?;
    }
    Ok(summary)
}
