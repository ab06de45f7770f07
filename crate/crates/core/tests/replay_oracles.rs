use age_core::nn::{NetworkSpec, SparseFeatureVector};
use age_core::policy::{Agent, BanditPolicy, Choice, ModelConfig, PolicyConfig, PolicyKind};
use age_core::replay::{
    log_loss, replay_events, replay_step, run_replay, warm_start, LoggedEvent, WarmConfig,
};
use age_core::synth::{generate_log, World, WorldSpec};
use age_core::Result;

/// Replays the logged display decisions in order.
struct AlwaysMatch {
    shown: Vec<u32>,
    next: usize,
}

impl BanditPolicy for AlwaysMatch {
    fn select(&mut self, _user: &[u32], _pool: &[u32], _seed: u64) -> Result<Choice> {
        let arm = self.shown[self.next];
        self.next += 1;
        Ok(Choice {
            arm,
            predicted_ctr: 0.5,
        })
    }

    fn update(&mut self, _: &[u32], _: u32, _: u8, _: u64) -> Result<()> {
        Ok(())
    }

    fn state_digest(&self) -> String {
        self.next.to_string()
    }
}

/// Picks the arm with the highest teacher CTR.
struct Oracle<'a> {
    world: &'a World,
}

impl BanditPolicy for Oracle<'_> {
    fn select(&mut self, user: &[u32], pool: &[u32], _seed: u64) -> Result<Choice> {
        let mut best = pool[0];
        for &a in pool {
            if self.world.ctr(user, a) > self.world.ctr(user, best) {
                best = a;
            }
        }
        Ok(Choice {
            arm: best,
            predicted_ctr: self.world.ctr(user, best),
        })
    }

    fn update(&mut self, _: &[u32], _: u32, _: u8, _: u64) -> Result<()> {
        Ok(())
    }

    fn state_digest(&self) -> String {
        String::new()
    }
}

fn world(num_arms: usize, seed: u64) -> World {
    World::new(&WorldSpec {
        num_arms,
        field_sizes: vec![6, 5],
        seed,
        ..WorldSpec::default()
    })
    .unwrap()
}

fn model_cfg(w: &World) -> ModelConfig {
    ModelConfig {
        network: NetworkSpec {
            layout: w.layout().clone(),
            embed_dim: 4,
            hidden: vec![16, 8],
            output_bias: -2.0,
            ..NetworkSpec::default()
        },
        ..ModelConfig::default()
    }
}

fn three_sigma(hits: u64, n: u64, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (hits as f64 - mean).abs() <= 3.0 * sd
}

#[test]
fn always_match_reproduces_logged_clicks() {
    let w = world(20, 1);
    let log = generate_log(&w, 5000, 5, 2).unwrap();
    let logged: u64 = log.iter().map(|e| u64::from(e.click)).sum();
    let mut p = AlwaysMatch {
        shown: log.iter().map(|e| e.shown).collect(),
        next: 0,
    };
    let (counts, _) = replay_events(&mut p, &log, 20, 0, &[]).unwrap();
    assert_eq!(counts.matched, 5000);
    assert_eq!(counts.clicks, logged);
}

#[test]
fn random_policy_matches_one_in_pool_size() {
    let w = world(50, 3);
    let log = generate_log(&w, 100_000, 38, 4).unwrap();
    let cfg = PolicyConfig::of(PolicyKind::Random);
    let mc = model_cfg(&w);
    let model = mc.init_model(cfg.age.dgu_hidden, 0).unwrap();
    let mut agent = Agent::new(&cfg, &mc, &[model], &[], 5).unwrap();
    let (counts, _) = replay_events(&mut agent, &log, 50, 5, &[]).unwrap();
    assert!(
        three_sigma(counts.matched, 100_000, 1.0 / 38.0),
        "matched {}",
        counts.matched
    );
}

#[test]
fn unmatched_events_leave_state_untouched() {
    let w = world(12, 5);
    let log = generate_log(&w, 400, 6, 6).unwrap();
    let mc = model_cfg(&w);
    for kind in [PolicyKind::Vanilla, PolicyKind::AgeTs, PolicyKind::EnsembleUcb] {
        let cfg = PolicyConfig::of(kind);
        let models: Vec<_> = (0..cfg.model_count() as u64)
            .map(|k| mc.init_model(cfg.age.dgu_hidden, k).unwrap())
            .collect();
        let calib: Vec<SparseFeatureVector> = log[..32].iter().map(LoggedEvent::shown_features).collect();
        let mut agent = Agent::new(&cfg, &mc, &models, &calib, 7).unwrap();
        let (mut matched, mut unmatched) = (0, 0);
        for (i, ev) in log.iter().enumerate() {
            let before = agent.state_digest();
            let out = replay_step(&mut agent, ev, i as u64).unwrap();
            let after = agent.state_digest();
            if out.matched {
                matched += 1;
                assert_ne!(before, after);
            } else {
                unmatched += 1;
                assert_eq!(before, after, "{kind:?} event {i}");
            }
        }
        assert!(matched > 0 && unmatched > 0);
        let total: u64 = agent.impressions().iter().sum();
        assert_eq!(total, matched);
    }
}

#[test]
fn warm_start_lowers_held_out_log_loss() {
    let w = world(20, 8);
    let log = generate_log(&w, 10_000, 5, 9).unwrap();
    let (train, held_out) = log.split_at(8000);
    let mc = model_cfg(&w);
    let warm = WarmConfig {
        events: train.len(),
        epochs: 1,
        learning_rate: Some(3e-3),
    };
    let untrained = mc.init_model(16, 11).unwrap();
    let trained = warm_start(train, &warm, &mc, 16, 11).unwrap();
    let before = log_loss(&untrained, held_out).unwrap();
    let after = log_loss(&trained, held_out).unwrap();
    assert!(after < before, "{after} vs {before}");

    let again = warm_start(train, &warm, &mc, 16, 11).unwrap();
    assert_eq!(again, trained);
}

#[test]
fn oracle_collects_at_least_vanilla_clicks() {
    let w = world(30, 12);
    let log = generate_log(&w, 60_000, 6, 13).unwrap();
    let mc = model_cfg(&w);
    let warm = WarmConfig {
        events: 5000,
        epochs: 1,
        learning_rate: Some(3e-3),
    };
    let vanilla = run_replay(&PolicyConfig::of(PolicyKind::Vanilla), &mc, &log, &warm, &[0])
        .unwrap()
        .remove(0);
    let mut oracle = Oracle { world: &w };
    let (counts, _) = replay_events(&mut oracle, &log[5000..], 30, 0, &[]).unwrap();
    assert!(
        counts.clicks >= vanilla.cumulative_clicks,
        "{} vs {}",
        counts.clicks,
        vanilla.cumulative_clicks
    );
}

#[test]
fn empty_post_warm_log_gives_empty_report() {
    let w = world(10, 14);
    let log = generate_log(&w, 300, 4, 15).unwrap();
    let warm = WarmConfig {
        events: 300,
        ..WarmConfig::default()
    };
    let r = run_replay(&PolicyConfig::of(PolicyKind::Vanilla), &model_cfg(&w), &log, &warm, &[0, 1])
        .unwrap();
    assert_eq!(r.len(), 2);
    for rep in r {
        assert_eq!(rep.events_seen, 0);
        assert_eq!(rep.cumulative_clicks, 0);
        assert_eq!(rep.matched_ctr, None);
    }
}

#[test]
fn replay_is_deterministic_per_seed() {
    let w = world(15, 16);
    let log = generate_log(&w, 4000, 5, 17).unwrap();
    let warm = WarmConfig {
        events: 1000,
        ..WarmConfig::default()
    };
    let cfg = PolicyConfig::of(PolicyKind::AgeTs);
    let mc = model_cfg(&w);
    let a = run_replay(&cfg, &mc, &log, &warm, &[3]).unwrap();
    let b = run_replay(&cfg, &mc, &log, &warm, &[3]).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
