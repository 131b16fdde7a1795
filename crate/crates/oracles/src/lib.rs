//! Reference implementations kept separate from `drm-core`:
//! plain-loop network evaluation, brute-force dormant scores, finite
//! differences, and a standalone double-Q actor-critic update.

use drm_core::config::AgentConfig;
use drm_core::nn::{Activation, Architecture, NetworkParams, Tensor2};
use drm_core::replay::ReplayBuffer;
use drm_core::seed::{derive_seed, Stream};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Relu => {
            if z > 0.0 {
                z
            } else {
                0.0
            }
        }
        Activation::Tanh => z.tanh(),
        Activation::Identity => z,
    }
}

/// Layer outputs as `[layer][sample][unit]`, evaluated one dot product at a time.
pub fn naive_forward(net: &NetworkParams, batch: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    let mut layers = Vec::new();
    let mut current: Vec<Vec<f64>> = batch.to_vec();
    for layer in &net.layers {
        let rows = layer.weights.rows();
        let next: Vec<Vec<f64>> = current
            .iter()
            .map(|x| {
                (0..rows)
                    .map(|o| {
                        let mut z = layer.bias[o];
                        for (i, xi) in x.iter().enumerate() {
                            z += layer.weights.get(o, i) * xi;
                        }
                        activate(layer.activation, z)
                    })
                    .collect()
            })
            .collect();
        layers.push(next.clone());
        current = next;
    }
    layers
}

/// Dormant scores and ratio straight from the definition:
/// `s_i = E|h_i| / ((1/H) Σ_k E|h_k|)`, dormant when `s_i ≤ τ`; a layer whose
/// mean activity is zero has every unit dormant. Returns the scores of each
/// counted layer (`None` for an all-silent layer) and the pooled ratio.
pub fn brute_force_dormant(
    net: &NetworkParams,
    batch: &[Vec<f64>],
    counted: &[bool],
    tau: f64,
) -> (Vec<Option<Vec<f64>>>, f64) {
    let outputs = naive_forward(net, batch);
    let mut all_scores = Vec::new();
    let (mut dormant, mut total) = (0usize, 0usize);
    for (layer, &count) in outputs.iter().zip(counted) {
        if !count {
            continue;
        }
        let width = layer[0].len();
        let expect: Vec<f64> = (0..width)
            .map(|u| layer.iter().map(|h| h[u].abs()).sum::<f64>() / layer.len() as f64)
            .collect();
        let layer_mean = expect.iter().sum::<f64>() / width as f64;
        total += width;
        if layer_mean == 0.0 {
            dormant += width;
            all_scores.push(None);
            continue;
        }
        let scores: Vec<f64> = expect.iter().map(|e| e / layer_mean).collect();
        dormant += scores.iter().filter(|&&s| s <= tau).count();
        all_scores.push(Some(scores));
    }
    (all_scores, dormant as f64 / total as f64)
}

/// Central-difference gradient of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `Σ outputs ⊙ weights` as a function of the flat parameter vector.
pub fn weighted_output(
    net: &NetworkParams,
    batch: &Tensor2,
    weights: &Tensor2,
    params: &[f64],
) -> f64 {
    let mut probe = net.clone();
    probe.set_flat_params(params).expect("parameter count");
    let out = probe.predict(batch).expect("forward");
    out.data()
        .iter()
        .zip(weights.data())
        .map(|(o, w)| o * w)
        .sum()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Per-update outputs of [`BaselineOracle`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineStep {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_target: f64,
    pub sigma: f64,
}

/// Standalone double-Q deterministic actor-critic: clipped double-Q
/// targets with smoothed target actions, linear exploration schedule, no
/// value network, no dormant machinery. Shares only the network primitives
/// and the replay sampler with `drm-core`.
pub struct BaselineOracle {
    pub actor: NetworkParams,
    pub q1: NetworkParams,
    pub q2: NetworkParams,
    pub q1_target: NetworkParams,
    pub q2_target: NetworkParams,
    cfg: AgentConfig,
    seed: u64,
    obs_dim: usize,
    action_dim: usize,
    updates: u64,
}

impl BaselineOracle {
    pub fn new(obs_dim: usize, action_dim: usize, cfg: AgentConfig, seed: u64) -> Self {
        let h = cfg.hidden_dim;
        let actor = Architecture::new(
            vec![obs_dim, cfg.feature_dim, h, h, action_dim],
            vec![
                Activation::Tanh,
                Activation::Relu,
                Activation::Relu,
                Activation::Tanh,
            ],
        )
        .unwrap()
        .init(derive_seed(seed, Stream::ActorInit, 0));
        let critic = Architecture::new(
            vec![obs_dim + action_dim, h, h, 1],
            vec![Activation::Relu, Activation::Relu, Activation::Identity],
        )
        .unwrap();
        let q1 = critic.init(derive_seed(seed, Stream::Critic1Init, 0));
        let q2 = critic.init(derive_seed(seed, Stream::Critic2Init, 0));
        Self {
            actor,
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            cfg,
            seed,
            obs_dim,
            action_dim,
            updates: 0,
        }
    }

    fn linear_sigma(&self, frame: u64) -> f64 {
        let s = self.cfg.linear_schedule;
        if frame >= s.duration_frames {
            s.end
        } else {
            let f = frame as f64 / s.duration_frames as f64;
            (1.0 - f) * s.start + f * s.end
        }
    }

    fn joined(obs: &Tensor2, act: &Tensor2) -> Tensor2 {
        let rows: Vec<Vec<f64>> = (0..obs.rows())
            .map(|r| obs.row(r).iter().chain(act.row(r)).copied().collect())
            .collect();
        Tensor2::from_rows(&rows).unwrap()
    }

    pub fn update(&mut self, buffer: &ReplayBuffer, frame: u64) -> BaselineStep {
        let cfg = &self.cfg;
        let k = self.updates;
        let batch = buffer
            .sample_nstep(
                cfg.batch_size,
                cfg.nstep,
                cfg.discount,
                derive_seed(self.seed, Stream::BatchSample, k),
            )
            .unwrap();
        let n = batch.obs.rows();
        let nf = n as f64;
        let sigma = self.linear_sigma(frame);

        // Critic step.
        let mu_next = self.actor.predict(&batch.next_obs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, Stream::TargetNoise, k));
        let mut a_next = mu_next.clone();
        for v in a_next.data_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let eps = (sigma * z).clamp(-cfg.noise_clip, cfg.noise_clip);
            *v = (*v + eps).clamp(-1.0, 1.0);
        }
        let sa_next = Self::joined(&batch.next_obs, &a_next);
        let t1 = self.q1_target.predict(&sa_next).unwrap();
        let t2 = self.q2_target.predict(&sa_next).unwrap();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                batch.reward_nstep[i] + batch.discount_nstep[i] * t1.data()[i].min(t2.data()[i])
            })
            .collect();

        let sa = Self::joined(&batch.obs, &batch.action);
        let (q1, tr1) = self.q1.forward(&sa).unwrap();
        let (q2, tr2) = self.q2.forward(&sa).unwrap();
        let mut critic_loss = 0.0;
        let mut g1 = Tensor2::zeros(n, 1);
        let mut g2 = Tensor2::zeros(n, 1);
        for i in 0..n {
            let e1 = q1.data()[i] - y[i];
            let e2 = q2.data()[i] - y[i];
            critic_loss += (e1 * e1 + e2 * e2) / nf;
            g1.set(i, 0, 2.0 * e1 / nf);
            g2.set(i, 0, 2.0 * e2 / nf);
        }
        let grads1 = self.q1.backward(&tr1, &g1).unwrap();
        let grads2 = self.q2.backward(&tr2, &g2).unwrap();
        self.q1.adam_step(&grads1, cfg.lr).unwrap();
        self.q2.adam_step(&grads2, cfg.lr).unwrap();

        // Actor step: maximise min(Q1, Q2)(s, μ(s)).
        let (mu, actor_trace) = self.actor.forward(&batch.obs).unwrap();
        let sa_pi = Self::joined(&batch.obs, &mu);
        let (p1, pt1) = self.q1.forward(&sa_pi).unwrap();
        let (p2, pt2) = self.q2.forward(&sa_pi).unwrap();
        let mut w1 = Tensor2::zeros(n, 1);
        let mut w2 = Tensor2::zeros(n, 1);
        let mut actor_loss = 0.0;
        for i in 0..n {
            if p1.data()[i] <= p2.data()[i] {
                actor_loss -= p1.data()[i];
                w1.set(i, 0, -1.0 / nf);
            } else {
                actor_loss -= p2.data()[i];
                w2.set(i, 0, -1.0 / nf);
            }
        }
        actor_loss /= nf;
        let d1 = self.q1.backward(&pt1, &w1).unwrap().input;
        let d2 = self.q2.backward(&pt2, &w2).unwrap().input;
        let mut da = Tensor2::zeros(n, self.action_dim);
        for r in 0..n {
            for c in 0..self.action_dim {
                da.set(
                    r,
                    c,
                    d1.get(r, self.obs_dim + c) + d2.get(r, self.obs_dim + c),
                );
            }
        }
        let ga = self.actor.backward(&actor_trace, &da).unwrap();
        self.actor.adam_step(&ga, cfg.lr).unwrap();

        let tau = cfg.soft_update_rate;
        for (target, online) in [
            (&mut self.q1_target, &self.q1),
            (&mut self.q2_target, &self.q2),
        ] {
            let mixed: Vec<f64> = target
                .flat_params()
                .iter()
                .zip(online.flat_params())
                .map(|(t, o)| (1.0 - tau) * t + tau * o)
                .collect();
            target.set_flat_params(&mixed).unwrap();
        }

        self.updates += 1;
        BaselineStep {
            critic_loss,
            actor_loss,
            mean_target: y.iter().sum::<f64>() / nf,
            sigma,
        }
    }
}
