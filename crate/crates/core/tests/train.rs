use drm_core::agent::Agent;
use drm_core::config::{AgentConfig, VariantFlags};
use drm_core::schedule::ExplorationMode;
use drm_core::train::{read_metrics, train, Record, TrainConfig};

fn quick(env: &str, frames: u64) -> TrainConfig {
    TrainConfig {
        env: env.into(),
        seed: 3,
        total_frames: frames,
        eval_interval_frames: 2000,
        eval_episodes: 2,
        update_log_interval: 1,
        agent: AgentConfig {
            hidden_dim: 32,
            feature_dim: 8,
            batch_size: 32,
            seed_frames: 1000,
            exploration_steps: 500,
            perturb_interval_frames: 2000,
            ..AgentConfig::toy()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn zero_frames_writes_header_and_summary_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    train(&quick("pointmass-dense", 0), &path).unwrap();
    let records = read_metrics(&path).unwrap();
    assert_eq!(records.len(), 2);
    assert!(matches!(records[0], Record::Header { .. }));
    assert!(matches!(records[1], Record::Summary(_)));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    let cfg = quick("swingup-sparse", 5000);
    train(&cfg, &a).unwrap();
    train(&cfg, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let other = TrainConfig { seed: 4, ..cfg };
    train(&other, &b).unwrap();
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn logged_schedules_follow_their_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let cfg = quick("pointmass-sparse", 6000);
    let summary = train(&cfg, &path).unwrap();
    let sched = cfg.agent.scheduler();
    let (mut updates, mut evals, mut perturbs) = (0, 0, Vec::new());
    for record in read_metrics(&path).unwrap() {
        match record {
            Record::Update(m) => {
                updates += 1;
                let b = m.beta_ema;
                let sigmoid = 1.0 / (1.0 + (-(b - 0.2) / 0.1).exp());
                let expected_sigma = match m.awaken_step {
                    None => sigmoid,
                    Some(t0) => sigmoid.max(sched.linear_schedule.value(m.frame - t0)),
                };
                assert!((m.sigma - expected_sigma).abs() < 1e-12);
                assert!((m.lambda - 0.6 / (1.0 + ((b - 0.2) / 0.02).exp())).abs() < 1e-12);
            }
            Record::Eval(e) => {
                evals += 1;
                assert!((0.0..=1.0).contains(&e.success_rate));
            }
            Record::Perturb(p) => perturbs.push(p.frame),
            _ => {}
        }
    }
    assert_eq!(updates, summary.updates);
    assert_eq!(evals, 3);
    assert_eq!(perturbs, vec![2000, 4000, 6000]);
    assert_eq!(summary.frames, 6000);
}

#[test]
fn final_checkpoint_restores() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("agent.json");
    let cfg = TrainConfig {
        checkpoint: Some(ckpt.clone()),
        checkpoint_buffer: true,
        agent: AgentConfig {
            variant: VariantFlags {
                awaken_exploration: ExplorationMode::MaxThenLinear,
                ..VariantFlags::DRM
            },
            ..quick("maze-sparse", 0).agent
        },
        ..quick("maze-sparse", 2000)
    };
    let summary = train(&cfg, dir.path().join("m.jsonl")).unwrap();
    let (agent, buffer) = Agent::load_checkpoint(&ckpt).unwrap();
    assert_eq!(agent.update_count(), summary.updates);
    assert_eq!(buffer.unwrap().len(), 1000);
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let bad_env = TrainConfig {
        env: "cartpole".into(),
        ..quick("pointmass-dense", 10)
    };
    assert!(train(&bad_env, &path).is_err());
    let mut bad = quick("pointmass-dense", 10);
    bad.agent.discount = 1.5;
    assert!(train(&bad, &path).is_err());
}
