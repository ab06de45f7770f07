//! Comparison policies: greedy, uniform random, epsilon-greedy, ensemble
//! sampling and gradient-norm bonuses. All of them pick one arm from a pool
//! of candidates sharing the same user features.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::age::argmax_by_score;
use crate::error::{domain, Result};
use crate::nn::{Network, SparseFeatureVector, Trace};
use crate::rng::rng_for;
use crate::uncertainty::{grad_norm_dense, sample_std};

/// Sub-streams of a per-event seed.
pub(crate) mod stream {
    pub const COIN: u64 = 0xC0;
    pub const PICK: u64 = 0xC1;
    pub const MEMBER: u64 = 0xC2;
    pub const NORMAL: u64 = 0xC3;
}

/// Exploration flavour shared by the ensemble and gradient baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMode {
    Ucb,
    Ts,
}

/// Reusable buffers for scoring a pool with one network.
pub(crate) struct PoolWork {
    pub h: Vec<f64>,
    pub trace: Trace,
    pub scores: Vec<f64>,
}

impl PoolWork {
    pub fn new(net: &Network) -> Self {
        Self {
            h: vec![0.0; net.input_width()],
            trace: net.new_trace(),
            scores: Vec::new(),
        }
    }
}

/// Pool given as explicit feature vectors: checks them and splits off the
/// arm ids. Candidates in one pool may carry different user features.
fn check_pool(net: &Network, pool: &[SparseFeatureVector]) -> Result<Vec<u32>> {
    if pool.is_empty() {
        return domain("candidate pool is empty");
    }
    for x in pool {
        x.validate(&net.layout)?;
    }
    Ok(pool.iter().map(|x| x.arm_id).collect())
}

/// Plain predictions for every candidate into `work.scores`.
pub(crate) fn predict_pool(
    net: &Network,
    user: &[u32],
    arms: &[u32],
    work: &mut PoolWork,
) -> Result<()> {
    work.scores.clear();
    for &arm in arms {
        net.embed_parts_unchecked(user, arm, &mut work.h);
        let p = net.predict_traced(&work.h, None, &mut work.trace)?;
        work.scores.push(p);
    }
    Ok(())
}

fn predict_feature_pool(net: &Network, pool: &[SparseFeatureVector]) -> Result<Vec<f64>> {
    let mut work = PoolWork::new(net);
    pool.iter()
        .map(|x| {
            net.embed_unchecked(x, &mut work.h);
            net.predict_traced(&work.h, None, &mut work.trace)
        })
        .collect()
}

pub(crate) fn vanilla_parts(
    net: &Network,
    user: &[u32],
    arms: &[u32],
    work: &mut PoolWork,
) -> Result<usize> {
    if arms.is_empty() {
        return domain("candidate pool is empty");
    }
    predict_pool(net, user, arms, work)?;
    Ok(argmax_by_score(arms, &work.scores).expect("non-empty pool"))
}

pub(crate) fn random_index(len: usize, seed: u64) -> Result<usize> {
    if len == 0 {
        return domain("candidate pool is empty");
    }
    Ok(rng_for(seed, &[stream::PICK]).random_range(0..len))
}

/// True with probability `epsilon`, keyed by the event seed.
pub(crate) fn explore_coin(epsilon: f64, seed: u64) -> bool {
    rng_for(seed, &[stream::COIN]).random::<f64>() < epsilon
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return domain(format!("epsilon must lie in [0,1], got {epsilon}"));
    }
    Ok(())
}

/// Greedy choice on the plain prediction; ties go to the lowest arm id.
pub fn vanilla_select(net: &Network, pool: &[SparseFeatureVector]) -> Result<u32> {
    let arms = check_pool(net, pool)?;
    let scores = predict_feature_pool(net, pool)?;
    Ok(arms[argmax_by_score(&arms, &scores).expect("non-empty pool")])
}

/// Uniform choice, reproducible from `seed`.
pub fn random_select(pool: &[SparseFeatureVector], seed: u64) -> Result<u32> {
    Ok(pool[random_index(pool.len(), seed)?].arm_id)
}

/// Random arm with probability `epsilon`, greedy arm otherwise.
pub fn eps_greedy_select(
    net: &Network,
    pool: &[SparseFeatureVector],
    epsilon: f64,
    seed: u64,
) -> Result<u32> {
    check_epsilon(epsilon)?;
    check_pool(net, pool)?;
    if explore_coin(epsilon, seed) {
        random_select(pool, seed)
    } else {
        vanilla_select(net, pool)
    }
}

/// Index of the ensemble member used for one Thompson draw.
pub(crate) fn ensemble_member(size: usize, seed: u64) -> usize {
    rng_for(seed, &[stream::MEMBER]).random_range(0..size)
}

/// Mean plus sample standard deviation of member predictions.
pub(crate) fn ensemble_ucb_scores(member_preds: &[Vec<f64>], out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    let n = member_preds[0].len();
    let mut column = vec![0.0; member_preds.len()];
    for i in 0..n {
        for (c, m) in column.iter_mut().zip(member_preds) {
            *c = m[i];
        }
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        out.push(mean + sample_std(&column)?);
    }
    Ok(())
}

/// TS: greedy under one uniformly drawn member. UCB: greedy on ensemble
/// mean plus sample standard deviation.
pub fn ensemble_select(
    models: &[Network],
    pool: &[SparseFeatureVector],
    mode: BonusMode,
    seed: u64,
) -> Result<u32> {
    if models.len() < 2 {
        return domain(format!("ensemble needs at least 2 models, got {}", models.len()));
    }
    let mut arms = Vec::new();
    for m in models {
        arms = check_pool(m, pool)?;
    }
    match mode {
        BonusMode::Ts => {
            let k = ensemble_member(models.len(), seed);
            let scores = predict_feature_pool(&models[k], pool)?;
            Ok(arms[argmax_by_score(&arms, &scores).expect("non-empty pool")])
        }
        BonusMode::Ucb => {
            let preds = models
                .iter()
                .map(|m| predict_feature_pool(m, pool))
                .collect::<Result<Vec<_>>>()?;
            let mut scores = Vec::new();
            ensemble_ucb_scores(&preds, &mut scores)?;
            Ok(arms[argmax_by_score(&arms, &scores).expect("non-empty pool")])
        }
    }
}

/// Per-candidate standard normal draw for gradient TS.
pub(crate) fn candidate_normal(seed: u64, arm: u32) -> f64 {
    StandardNormal.sample(&mut rng_for(seed, &[stream::NORMAL, u64::from(arm)]))
}

/// Gradient-bonus scores: `y + delta` (UCB) or `y + z * delta` (TS).
pub(crate) fn gradient_scores(
    net: &Network,
    user: &[u32],
    arms: &[u32],
    mode: BonusMode,
    gamma: f64,
    seed: u64,
    work: &mut PoolWork,
) -> Result<()> {
    work.scores.clear();
    for &arm in arms {
        net.embed_parts_unchecked(user, arm, &mut work.h);
        let (p, delta) = grad_norm_dense(net, &work.h, gamma, &mut work.trace)?;
        let score = match mode {
            BonusMode::Ucb => p + delta,
            BonusMode::Ts => p + candidate_normal(seed, arm) * delta,
        };
        work.scores.push(score);
    }
    Ok(())
}

/// Greedy on the prediction plus a gradient-norm bonus scaled by `gamma`.
pub fn gradient_select(
    net: &Network,
    pool: &[SparseFeatureVector],
    mode: BonusMode,
    gamma: f64,
    seed: u64,
) -> Result<u32> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return domain(format!("grad scale must be finite and >= 0, got {gamma}"));
    }
    let arms = check_pool(net, pool)?;
    let mut work = PoolWork::new(net);
    let mut scores = Vec::with_capacity(pool.len());
    for x in pool {
        net.embed_unchecked(x, &mut work.h);
        let (p, delta) = grad_norm_dense(net, &work.h, gamma, &mut work.trace)?;
        scores.push(match mode {
            BonusMode::Ucb => p + delta,
            BonusMode::Ts => p + candidate_normal(seed, x.arm_id) * delta,
        });
    }
    Ok(arms[argmax_by_score(&arms, &scores).expect("non-empty pool")])
}
