//! Synthetic contextual bandit with known click probabilities.
//!
//! A frozen random logistic teacher maps (user, arm) to a CTR in
//! `(ctr_floor, ctr_ceiling)`. Users activate one feature per field,
//! uniformly. Candidate pools are drawn without replacement with Zipf
//! popularity weights over a random ranking of the arms, so some arms are
//! rarely offered. The same samplers drive logged streams and live runs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::age::{event_seed, AgeModel};
use crate::error::{domain, Result};
use crate::nn::{sigmoid, FieldLayout};
use crate::policy::{Agent, BanditPolicy, ModelConfig, PolicyConfig};
use crate::replay::{
    calibration_sample, ArmCurve, CurveTracker, LoggedEvent, PcocAccumulator, CALIBRATION_EVENTS,
};
use crate::rng::{rng_for, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldPreset {
    Standard,
    /// `low_ctr_fraction` of the arms get biases that keep their CTR
    /// under 0.02.
    LowCtrHeavy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub num_arms: usize,
    /// Size of each user feature field; one feature per field is active.
    pub field_sizes: Vec<usize>,
    /// Width of the teacher's latent user and arm vectors.
    pub teacher_dim: usize,
    /// Scale of the user-arm interaction term in the teacher logit.
    pub interaction_scale: f64,
    pub arm_bias_mean: f64,
    pub arm_bias_std: f64,
    pub preset: WorldPreset,
    pub low_ctr_fraction: f64,
    /// Zipf exponent of arm popularity; 0 gives uniform pools.
    pub popularity_exponent: f64,
    pub ctr_floor: f64,
    pub ctr_ceiling: f64,
    /// Replaces the teacher with one CTR for every pair.
    pub constant_ctr: Option<f64>,
    /// Number of arms on offer at once. Unset keeps every arm live; when
    /// set, arms enter and retire one at a time in a seeded order.
    pub live_arms: Option<usize>,
    /// Events between consecutive arm arrivals.
    pub churn_interval: u64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            num_arms: 200,
            field_sizes: vec![10, 10, 10],
            teacher_dim: 8,
            interaction_scale: 1.0,
            arm_bias_mean: -3.5,
            arm_bias_std: 1.0,
            preset: WorldPreset::Standard,
            low_ctr_fraction: 0.8,
            popularity_exponent: 1.0,
            ctr_floor: 0.001,
            ctr_ceiling: 0.5,
            constant_ctr: None,
            live_arms: None,
            churn_interval: 1000,
            seed: 0,
        }
    }
}

/// Logit of the biases given to low-CTR arms in the low-CTR-heavy preset.
const LOW_ARM_BIAS: f64 = -5.5;
const LOW_ARM_BIAS_STD: f64 = 0.3;
/// Interaction scale applied to low-CTR arms so context cannot lift them.
const LOW_ARM_INTERACTION: f64 = 0.25;

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_arms == 0 {
            return domain("num_arms must be positive");
        }
        if self.field_sizes.is_empty() || self.field_sizes.contains(&0) {
            return domain("field_sizes must be non-empty and positive");
        }
        if self.teacher_dim == 0 {
            return domain("teacher_dim must be positive");
        }
        for (name, v) in [
            ("interaction_scale", self.interaction_scale),
            ("arm_bias_mean", self.arm_bias_mean),
            ("arm_bias_std", self.arm_bias_std),
            ("popularity_exponent", self.popularity_exponent),
        ] {
            if !v.is_finite() {
                return domain(format!("{name} must be finite"));
            }
        }
        if self.arm_bias_std < 0.0 || self.popularity_exponent < 0.0 {
            return domain("arm_bias_std and popularity_exponent must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.low_ctr_fraction) {
            return domain("low_ctr_fraction must lie in [0,1]");
        }
        if !(0.0 < self.ctr_floor && self.ctr_floor < self.ctr_ceiling && self.ctr_ceiling < 1.0) {
            return domain("need 0 < ctr_floor < ctr_ceiling < 1");
        }
        if let Some(c) = self.constant_ctr {
            if !(c > 0.0 && c < 1.0) {
                return domain(format!("constant_ctr must lie in (0,1), got {c}"));
            }
        }
        if let Some(live) = self.live_arms {
            if live == 0 || live > self.num_arms {
                return domain(format!("live_arms must lie in 1..={}", self.num_arms));
            }
            if self.churn_interval == 0 {
                return domain("churn_interval must be positive");
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<FieldLayout> {
        FieldLayout::new(self.field_sizes.clone(), self.num_arms)
    }
}

/// A materialised world: teacher parameters and popularity weights.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    spec: WorldSpec,
    layout: FieldLayout,
    feature_vecs: Vec<f64>,
    arm_vecs: Vec<f64>,
    arm_bias: Vec<f64>,
    arm_scale: Vec<f64>,
    popularity: Vec<f64>,
    low_arms: Vec<bool>,
    arrival: Vec<u32>,
}

impl World {
    pub fn new(spec: &WorldSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout()?;
        let mut rng = rng_for(spec.seed, &[tag::WORLD]);
        let k = spec.teacher_dim;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let fields = spec.field_sizes.len() as f64;
        // user vectors are sums over fields; scale so the sum has unit variance
        let per_field = 1.0 / fields.sqrt();
        let feature_vecs: Vec<f64> = (0..layout.feature_space_size() * k)
            .map(|_| unit.sample(&mut rng) * per_field)
            .collect();
        let arm_vecs: Vec<f64> = (0..spec.num_arms * k)
            .map(|_| unit.sample(&mut rng) / (k as f64).sqrt())
            .collect();
        let mut low_arms = vec![false; spec.num_arms];
        if spec.preset == WorldPreset::LowCtrHeavy {
            let n_low = (spec.low_ctr_fraction * spec.num_arms as f64).round() as usize;
            let mut order: Vec<usize> = (0..spec.num_arms).collect();
            order.shuffle(&mut rng);
            for &a in &order[..n_low] {
                low_arms[a] = true;
            }
        }
        let bias_dist = Normal::new(spec.arm_bias_mean, spec.arm_bias_std).expect("checked std");
        let low_dist = Normal::new(LOW_ARM_BIAS, LOW_ARM_BIAS_STD).expect("constant std");
        let mut arm_bias = Vec::with_capacity(spec.num_arms);
        let mut arm_scale = Vec::with_capacity(spec.num_arms);
        for &low in &low_arms {
            if low {
                arm_bias.push(low_dist.sample(&mut rng));
                arm_scale.push(LOW_ARM_INTERACTION);
            } else {
                arm_bias.push(bias_dist.sample(&mut rng));
                arm_scale.push(spec.interaction_scale);
            }
        }
        let mut ranks: Vec<usize> = (1..=spec.num_arms).collect();
        ranks.shuffle(&mut rng);
        let popularity = ranks
            .iter()
            .map(|&r| (r as f64).powf(-spec.popularity_exponent))
            .collect();
        // own stream so enabling churn leaves the teacher unchanged
        let mut arrival: Vec<u32> = (0..spec.num_arms as u32).collect();
        arrival.shuffle(&mut rng_for(spec.seed, &[tag::WORLD, 1]));
        Ok(Self {
            spec: spec.clone(),
            layout,
            feature_vecs,
            arm_vecs,
            arm_bias,
            arm_scale,
            popularity,
            low_arms,
            arrival,
        })
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn layout(&self) -> &FieldLayout {
        &self.layout
    }

    pub fn num_arms(&self) -> usize {
        self.spec.num_arms
    }

    /// Relative popularity weight of each arm.
    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    /// Arms forced low by the low-CTR-heavy preset.
    pub fn low_arms(&self) -> &[bool] {
        &self.low_arms
    }

    /// True click probability of `arm` for a user.
    pub fn ctr(&self, user: &[u32], arm: u32) -> f64 {
        if let Some(c) = self.spec.constant_ctr {
            return c;
        }
        let k = self.spec.teacher_dim;
        let a = arm as usize;
        let v = &self.arm_vecs[a * k..(a + 1) * k];
        let mut inter = 0.0;
        for &i in user {
            let u = &self.feature_vecs[i as usize * k..(i as usize + 1) * k];
            inter += u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        }
        let z = (self.arm_bias[a] + self.arm_scale[a] * inter).clamp(-30.0, 30.0);
        let (lo, hi) = (self.spec.ctr_floor, self.spec.ctr_ceiling);
        lo + (hi - lo) * sigmoid(z)
    }

    /// One active feature per field, uniformly.
    pub fn sample_user(&self, rng: &mut impl Rng) -> Vec<u32> {
        let mut offset = 0;
        self.spec
            .field_sizes
            .iter()
            .map(|&size| {
                let idx = offset + rng.random_range(0..size);
                offset += size;
                idx as u32
            })
            .collect()
    }

    /// Arms on offer at event `t`, in arrival order.
    pub fn live_arms_at(&self, t: u64) -> Vec<u32> {
        let n = self.spec.num_arms;
        match self.spec.live_arms {
            None => (0..n as u32).collect(),
            Some(live) => {
                let k = (t / self.spec.churn_interval) as usize;
                (0..live).map(|i| self.arrival[(k + i) % n]).collect()
            }
        }
    }

    /// `size` distinct arms drawn with popularity weights, in ascending id
    /// order.
    pub fn sample_pool(&self, size: usize, rng: &mut impl Rng) -> Result<Vec<u32>> {
        self.sample_pool_at(size, 0, rng)
    }

    /// Like [`World::sample_pool`], restricted to the arms live at `t`.
    pub fn sample_pool_at(&self, size: usize, t: u64, rng: &mut impl Rng) -> Result<Vec<u32>> {
        let live = self.spec.live_arms.unwrap_or(self.spec.num_arms);
        if size == 0 || size > live {
            return domain(format!("pool size {size} must lie in 1..={live}"));
        }
        // weighted sampling without replacement via exponential keys
        let mut keys: Vec<(f64, u32)> = self
            .live_arms_at(t)
            .into_iter()
            .map(|a| {
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (-u.ln() / self.popularity[a as usize], a)
            })
            .collect();
        keys.select_nth_unstable_by(size - 1, |x, y| x.0.total_cmp(&y.0));
        let mut pool: Vec<u32> = keys[..size].iter().map(|&(_, a)| a).collect();
        pool.sort_unstable();
        Ok(pool)
    }

    /// Monte Carlo mean CTR of `arm` over the user distribution.
    pub fn mean_arm_ctr(&self, arm: u32, samples: usize, seed: u64) -> f64 {
        let mut rng = rng_for(seed, &[u64::from(arm)]);
        let total: f64 = (0..samples)
            .map(|_| self.ctr(&self.sample_user(&mut rng), arm))
            .sum();
        total / samples.max(1) as f64
    }
}

/// Logged stream under a uniform-random display policy.
pub fn generate_log(
    world: &World,
    n_events: usize,
    pool_size: usize,
    seed: u64,
) -> Result<Vec<LoggedEvent>> {
    let live = world.spec().live_arms.unwrap_or(world.num_arms());
    if pool_size == 0 || pool_size > live {
        return domain(format!("pool size {pool_size} must lie in 1..={live}"));
    }
    let mut rng: ChaCha8Rng = rng_for(seed, &[tag::LOG]);
    let mut out = Vec::with_capacity(n_events);
    for ts in 0..n_events as u64 {
        let user = world.sample_user(&mut rng);
        let pool = world.sample_pool_at(pool_size, ts, &mut rng)?;
        let shown = pool[rng.random_range(0..pool.len())];
        let p = world.ctr(&user, shown);
        let click = u8::from(rng.random::<f64>() < p);
        out.push(LoggedEvent {
            ts,
            shown,
            click,
            user,
            pool,
        });
    }
    Ok(out)
}

/// Options of a live run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiveConfig {
    pub steps: usize,
    pub pool_size: usize,
    /// Calibration is also reported over impressions of arms that had
    /// fewer than this many impressions at the time.
    pub low_impression_threshold: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            steps: 100_000,
            pool_size: 10,
            low_impression_threshold: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveReport {
    pub policy: String,
    pub seed: u64,
    pub steps: u64,
    pub cumulative_clicks: u64,
    pub cumulative_regret: f64,
    /// Expected clicks of the chosen arms (sum of their true CTRs).
    pub expected_clicks: f64,
    pub pcoc: Option<f64>,
    /// Predictions over true CTRs.
    pub pcoc_true: Option<f64>,
    /// Both ratios restricted to arms below the impression threshold.
    pub low_impression_pcoc: Option<f64>,
    pub low_impression_pcoc_true: Option<f64>,
    pub per_arm_curves: Vec<ArmCurve>,
    pub state_digest: String,
}

/// Runs a policy against the world for `cfg.steps` steps: sample a user
/// and pool, select, draw the click from the teacher, update.
pub fn live_simulate(
    world: &World,
    policy: &mut dyn BanditPolicy,
    cfg: &LiveConfig,
    label: &str,
    seed: u64,
) -> Result<LiveReport> {
    let mut rng: ChaCha8Rng = rng_for(seed, &[tag::LIVE]);
    let mut curves = CurveTracker::new(world.num_arms());
    let mut all = PcocAccumulator::default();
    let mut low = PcocAccumulator::default();
    let mut regret = 0.0;
    let mut expected = 0.0;
    let mut clicks = 0u64;
    for step in 0..cfg.steps as u64 {
        let user = world.sample_user(&mut rng);
        let pool = world.sample_pool_at(cfg.pool_size, step, &mut rng)?;
        let coin: f64 = rng.random();
        let s = event_seed(seed, step);
        let choice = policy.select(&user, &pool, s)?;
        if !pool.contains(&choice.arm) {
            return domain(format!("policy chose arm {} outside the pool", choice.arm));
        }
        let best = pool
            .iter()
            .map(|&a| world.ctr(&user, a))
            .fold(f64::MIN, f64::max);
        let p = world.ctr(&user, choice.arm);
        regret += best - p;
        expected += p;
        let click = u8::from(coin < p);
        clicks += u64::from(click);
        all.push(choice.predicted_ctr, click, Some(p));
        if curves.impressions(choice.arm) < cfg.low_impression_threshold {
            low.push(choice.predicted_ctr, click, Some(p));
        }
        curves.record(choice.arm, click, choice.predicted_ctr, Some(p));
        policy.update(&user, choice.arm, click, s)?;
    }
    Ok(LiveReport {
        policy: label.to_string(),
        seed,
        steps: cfg.steps as u64,
        cumulative_clicks: clicks,
        cumulative_regret: regret,
        expected_clicks: expected,
        pcoc: all.pcoc(),
        pcoc_true: all.pcoc_true(),
        low_impression_pcoc: low.pcoc(),
        low_impression_pcoc_true: low.pcoc_true(),
        per_arm_curves: curves.finish(),
        state_digest: policy.state_digest(),
    })
}

/// Live run of a configured policy starting from warm-started models.
pub fn live_policy(
    world: &World,
    cfg: &PolicyConfig,
    model_cfg: &ModelConfig,
    warm: &[AgeModel],
    warm_log: &[LoggedEvent],
    live: &LiveConfig,
    seed: u64,
) -> Result<LiveReport> {
    let calib = calibration_sample(warm_log, CALIBRATION_EVENTS);
    let mut agent = Agent::new(cfg, model_cfg, warm, &calib, seed)?;
    live_simulate(world, &mut agent, live, &cfg.label(), seed)
}


/// Averages `|PCOC - 1|` across the selected arms at each sampled
/// impression count. Uses true CTRs when the curve has them, empirical
/// CTRs otherwise; points with a zero denominator are skipped.
pub fn convergence_curve(curves: &[ArmCurve], arms: &[u32]) -> Result<Vec<(u64, f64)>> {
    if arms.is_empty() {
        return domain("arm filter is empty");
    }
    let mut acc: std::collections::BTreeMap<u64, (f64, usize)> = Default::default();
    for c in curves.iter().filter(|c| arms.contains(&c.arm)) {
        for p in &c.points {
            let denom = p.mean_true_ctr.unwrap_or(p.empirical_ctr);
            if denom > 0.0 {
                let e = acc.entry(p.impressions).or_insert((0.0, 0));
                e.0 += (p.mean_predicted_ctr / denom - 1.0).abs();
                e.1 += 1;
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(n, (sum, count))| (n, sum / count as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Choice;

    fn small() -> WorldSpec {
        WorldSpec {
            num_arms: 20,
            field_sizes: vec![5, 5],
            seed: 3,
            ..WorldSpec::default()
        }
    }

    #[test]
    fn ctrs_stay_in_range() {
        for preset in [WorldPreset::Standard, WorldPreset::LowCtrHeavy] {
            let spec = WorldSpec {
                preset,
                interaction_scale: 4.0,
                arm_bias_std: 3.0,
                ..small()
            };
            let w = World::new(&spec).unwrap();
            let mut rng = rng_for(1, &[]);
            for _ in 0..2000 {
                let u = w.sample_user(&mut rng);
                for a in 0..20 {
                    let p = w.ctr(&u, a);
                    assert!(p > 0.001 && p < 0.5, "{p}");
                }
            }
        }
    }

    #[test]
    fn low_ctr_preset_has_mostly_low_arms() {
        let spec = WorldSpec {
            num_arms: 200,
            preset: WorldPreset::LowCtrHeavy,
            ..WorldSpec::default()
        };
        let w = World::new(&spec).unwrap();
        let low = (0..200u32)
            .filter(|&a| w.mean_arm_ctr(a, 500, 9) < 0.02)
            .count();
        assert!(low >= 160, "{low}");
        assert_eq!(w.low_arms().iter().filter(|&&l| l).count(), 160);
    }

    #[test]
    fn users_have_one_feature_per_field() {
        let w = World::new(&small()).unwrap();
        let mut rng = rng_for(2, &[]);
        for _ in 0..100 {
            let u = w.sample_user(&mut rng);
            assert_eq!(u.len(), 2);
            assert!(u[0] < 5 && (5..10).contains(&u[1]));
        }
    }

    #[test]
    fn pools_are_distinct_and_popularity_skewed() {
        let w = World::new(&small()).unwrap();
        let mut rng = rng_for(4, &[]);
        let mut counts = [0usize; 20];
        for _ in 0..20_000 {
            let p = w.sample_pool(5, &mut rng).unwrap();
            assert!(p.windows(2).all(|x| x[0] < x[1]));
            for a in p {
                counts[a as usize] += 1;
            }
        }
        let top = w
            .popularity()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let bottom = w
            .popularity()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(counts[top] > 3 * counts[bottom]);
        assert!(w.sample_pool(0, &mut rng).is_err());
        assert!(w.sample_pool(21, &mut rng).is_err());
        assert_eq!(w.sample_pool(20, &mut rng).unwrap().len(), 20);
    }

    #[test]
    fn churn_slides_the_live_window() {
        let spec = WorldSpec {
            live_arms: Some(6),
            churn_interval: 10,
            ..small()
        };
        let w = World::new(&spec).unwrap();
        assert_eq!(w.ctr(&[0, 5], 3), World::new(&small()).unwrap().ctr(&[0, 5], 3));
        let first = w.live_arms_at(0);
        assert_eq!(first, w.live_arms_at(9));
        let next = w.live_arms_at(10);
        assert_eq!(first[1..], next[..5]);
        assert!(!first.contains(&next[5]));
        // the window wraps once every arm has arrived
        assert_eq!(w.live_arms_at(200), first);
        let mut rng = rng_for(5, &[]);
        for t in [0, 15, 123] {
            let live = w.live_arms_at(t);
            let p = w.sample_pool_at(4, t, &mut rng).unwrap();
            assert!(p.iter().all(|a| live.contains(a)));
        }
        assert!(w.sample_pool_at(7, 0, &mut rng).is_err());
        let bad = WorldSpec {
            live_arms: Some(21),
            ..small()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn constant_teacher_click_rate() {
        let spec = WorldSpec {
            constant_ctr: Some(0.1),
            ..small()
        };
        let w = World::new(&spec).unwrap();
        let n = 100_000;
        let log = generate_log(&w, n, 4, 11).unwrap();
        let clicks = log.iter().filter(|e| e.click == 1).count() as f64;
        let sd = (n as f64 * 0.1 * 0.9).sqrt();
        assert!((clicks - 0.1 * n as f64).abs() <= 3.0 * sd);
    }

    #[test]
    fn logs_are_reproducible_and_valid() {
        let w = World::new(&small()).unwrap();
        let a = generate_log(&w, 500, 6, 1).unwrap();
        assert_eq!(a, generate_log(&w, 500, 6, 1).unwrap());
        assert_ne!(a, generate_log(&w, 500, 6, 2).unwrap());
        for e in &a {
            e.validate().unwrap();
            assert_eq!(e.pool.len(), 6);
        }
    }

    struct Optimal<'a>(&'a World);

    impl BanditPolicy for Optimal<'_> {
        fn select(&mut self, user: &[u32], pool: &[u32], _seed: u64) -> Result<Choice> {
            let arm = *pool
                .iter()
                .max_by(|&&a, &&b| self.0.ctr(user, a).total_cmp(&self.0.ctr(user, b)))
                .unwrap();
            Ok(Choice {
                arm,
                predicted_ctr: self.0.ctr(user, arm),
            })
        }
        fn update(&mut self, _: &[u32], _: u32, _: u8, _: u64) -> Result<()> {
            Ok(())
        }
        fn state_digest(&self) -> String {
            String::new()
        }
    }

    #[test]
    fn optimal_policy_has_no_regret_and_perfect_calibration() {
        let w = World::new(&small()).unwrap();
        let cfg = LiveConfig {
            steps: 2000,
            pool_size: 5,
            ..LiveConfig::default()
        };
        let r = live_simulate(&w, &mut Optimal(&w), &cfg, "optimal", 1).unwrap();
        assert_eq!(r.cumulative_regret, 0.0);
        assert!((r.pcoc_true.unwrap() - 1.0).abs() < 1e-12);
        let arms: Vec<u32> = r.per_arm_curves.iter().map(|c| c.arm).collect();
        let curve = convergence_curve(&r.per_arm_curves, &arms).unwrap();
        assert!(curve.iter().all(|&(_, e)| e < 1e-12));
        assert!(convergence_curve(&r.per_arm_curves, &[]).is_err());
    }

    #[test]
    fn single_arm_filter_returns_that_arm() {
        let curves = vec![
            ArmCurve {
                arm: 1,
                points: vec![crate::replay::CurvePoint {
                    impressions: 1,
                    empirical_ctr: 0.5,
                    mean_predicted_ctr: 0.25,
                    mean_true_ctr: None,
                }],
            },
            ArmCurve {
                arm: 2,
                points: vec![crate::replay::CurvePoint {
                    impressions: 1,
                    empirical_ctr: 0.5,
                    mean_predicted_ctr: 0.5,
                    mean_true_ctr: None,
                }],
            },
        ];
        assert_eq!(convergence_curve(&curves, &[1]).unwrap(), vec![(1, 0.5)]);
        assert_eq!(convergence_curve(&curves, &[2]).unwrap(), vec![(1, 0.0)]);
    }
}
