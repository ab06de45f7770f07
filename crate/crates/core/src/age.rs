//! Adversarial-gradient exploration scorer.
//!
//! For a candidate with input embedding `h` the exploration score is
//!
//! ```text
//! y_e = f(h + eligible * sigma * lambda * delta_y * g_hat)
//! ```
//!
//! where `delta_y` is the uncertainty estimate, `g_hat` the normalised
//! adversarial direction, `sigma` the dynamic gating unit and `eligible`
//! the impression-cap filter. The gate compares the main prediction with a
//! shallow item-only network that reads the shared arm embedding but never
//! trains it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::adversarial::{direction_dense, AdvConfig, Direction, DirectionWork};
use crate::error::{domain, AgeError, Result};
use crate::nn::{
    dot, norm2, AdamConfig, AdamState, DropoutMask, Mlp, Network, SparseFeatureVector, Trace,
};
use crate::rng::{derive_seed, rng_for, tag};
use crate::uncertainty::{
    grad_norm_dense, mc_ts_dense, mc_ucb_dense, UncertaintyConfig, UncertaintyMethod,
};

// ── Shallow gating network ──────────────────────────────────────────────

/// Two-layer perceptron over the arm embedding, predicting the item-level CTR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowNet {
    pub mlp: Mlp,
}

impl ShallowNet {
    pub fn new(embed_dim: usize, hidden: usize, output_bias: f64, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[tag::INIT, 0x5a11]);
        let mut mlp = Mlp::random(embed_dim, &[hidden], &mut rng);
        mlp.output_layer_mut().bias[0] = output_bias;
        Self { mlp }
    }

    pub fn for_network(net: &Network, hidden: usize, output_bias: f64, seed: u64) -> Self {
        Self::new(net.embed_dim(), hidden, output_bias, seed)
    }

    pub fn check(&self, net: &Network) -> Result<()> {
        if self.mlp.input_width() != net.embed_dim() {
            return Err(AgeError::Contract(format!(
                "shallow net expects width {}, arm embeddings have width {}",
                self.mlp.input_width(),
                net.embed_dim()
            )));
        }
        Ok(())
    }

    /// Item-level CTR estimate for `arm`.
    pub fn predict(&self, net: &Network, arm: u32) -> Result<f64> {
        self.check(net)?;
        if arm as usize >= net.layout.num_arms {
            return domain(format!("arm id {arm} outside arm space"));
        }
        let mut trace = Trace::new(&self.mlp);
        self.mlp.predict(net.arm_embedding(arm), &mut trace)
    }
}

/// Zero-one gate: explore only when the personalised prediction reaches the
/// item-level baseline.
#[inline]
pub fn gate_from(main_pred: f64, item_baseline: f64) -> u8 {
    u8::from(main_pred >= item_baseline)
}

pub fn dgu_gate(main_pred: f64, shallow: &ShallowNet, net: &Network, arm: u32) -> Result<u8> {
    Ok(gate_from(main_pred, shallow.predict(net, arm)?))
}

// ── Configuration ───────────────────────────────────────────────────────

/// Where `delta_y` comes from. `Gaussian` is the ablation that swaps the
/// estimate for zero-mean noise; with `std` unset, a policy agent matches
/// it to the median MC-dropout UCB estimate on its calibration sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UncertaintySource {
    Estimated,
    Gaussian { std: Option<f64> },
}

/// Where `g_hat` comes from. `RandomUnit` is the ablation that swaps the
/// adversarial direction for a uniformly random unit vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSource {
    Adversarial,
    RandomUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgeConfig {
    pub lambda: f64,
    pub uncertainty: UncertaintyConfig,
    pub adv: AdvConfig,
    /// Arms with at least this many impressions are not explored.
    /// `None` disables the cap.
    pub impression_cap: Option<u64>,
    pub dgu_enabled: bool,
    /// Replaces the shallow network with a constant item baseline.
    pub dgu_threshold: Option<f64>,
    pub uncertainty_source: UncertaintySource,
    pub direction_source: DirectionSource,
    /// Hidden width of the shallow gating network.
    pub dgu_hidden: usize,
}

impl Default for AgeConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            uncertainty: UncertaintyConfig::default(),
            adv: AdvConfig::default(),
            impression_cap: None,
            dgu_enabled: true,
            dgu_threshold: None,
            uncertainty_source: UncertaintySource::Estimated,
            direction_source: DirectionSource::Adversarial,
            dgu_hidden: 16,
        }
    }
}

impl AgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return domain(format!("lambda must be positive, got {}", self.lambda));
        }
        self.uncertainty.validate()?;
        self.adv.validate()?;
        match self.uncertainty.method {
            UncertaintyMethod::McUcb | UncertaintyMethod::McTs | UncertaintyMethod::GradNorm => {}
            m => {
                return domain(format!(
                    "AGE scoring needs a single-model uncertainty method, got {m:?}"
                ))
            }
        }
        if let UncertaintySource::Gaussian { std: Some(std) } = self.uncertainty_source {
            if !(std >= 0.0 && std.is_finite()) {
                return domain("gaussian uncertainty std must be finite and >= 0");
            }
        }
        if let Some(t) = self.dgu_threshold {
            if !(0.0..=1.0).contains(&t) {
                return domain(format!("dgu_threshold must lie in [0,1], got {t}"));
            }
        }
        if self.dgu_hidden == 0 {
            return domain("dgu_hidden must be positive");
        }
        Ok(())
    }

    fn is_ucb(&self) -> bool {
        !matches!(self.uncertainty.method, UncertaintyMethod::McTs)
    }
}

// ── Scoring ─────────────────────────────────────────────────────────────

/// Every intermediate of one candidate's exploration score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub arm_id: u32,
    pub base_pred: f64,
    pub uncertainty: f64,
    pub direction: Vec<f64>,
    pub degenerate: bool,
    pub gate: u8,
    pub eligible: bool,
    pub final_score: f64,
}

/// Per-thread scratch for scoring a pool.
pub(crate) struct ScoreWork {
    h: Vec<f64>,
    perturbed: Vec<f64>,
    trace: Trace,
    shallow_trace: Trace,
    dir: DirectionWork,
}

impl ScoreWork {
    pub fn new(net: &Network, shallow: &ShallowNet) -> Self {
        Self {
            h: vec![0.0; net.input_width()],
            perturbed: vec![0.0; net.input_width()],
            trace: net.new_trace(),
            shallow_trace: Trace::new(&shallow.mlp),
            dir: DirectionWork::new(net),
        }
    }
}

fn random_unit(width: usize, rng: &mut impl Rng) -> Direction {
    loop {
        let v: Vec<f64> = (0..width).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm2(&v);
        if n > 1e-12 {
            return Direction {
                vector: v.into_iter().map(|x| x / n).collect(),
                degenerate: false,
            };
        }
    }
}

/// Scores one candidate. When `lean` is set, the uncertainty and direction
/// are skipped wherever the gate or cap already zeroes the perturbation;
/// the final score is identical either way because every random draw is
/// keyed by `(seed, arm)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn score_candidate(
    net: &Network,
    shallow: &ShallowNet,
    user: &[u32],
    arm_id: u32,
    cfg: &AgeConfig,
    impressions: u64,
    seed: u64,
    lean: bool,
    work: &mut ScoreWork,
) -> Result<ScoreBreakdown> {
    net.embed_parts_unchecked(user, arm_id, &mut work.h);
    let h = &work.h;
    let base = net.predict_traced(h, None, &mut work.trace)?;

    let gate = if !cfg.dgu_enabled {
        1
    } else {
        let baseline = match cfg.dgu_threshold {
            Some(t) => t,
            None => shallow
                .mlp
                .predict(net.arm_embedding(arm_id), &mut work.shallow_trace)?,
        };
        gate_from(base, baseline)
    };
    let eligible = cfg.impression_cap.is_none_or(|cap| impressions < cap);
    let open = gate == 1 && eligible;

    let skip = |computed: bool| -> bool { lean && !computed };
    let width = h.len();
    let arm = u64::from(arm_id);

    let uncertainty = if skip(open) {
        0.0
    } else {
        let mut rng: ChaCha8Rng = rng_for(seed, &[arm, 0]);
        match cfg.uncertainty_source {
            UncertaintySource::Gaussian { std } => {
                let Some(std) = std else {
                    return domain("gaussian uncertainty std is unresolved");
                };
                let z: f64 = Normal::new(0.0, std).expect("validated std").sample(&mut rng);
                if cfg.is_ucb() {
                    z.abs()
                } else {
                    z
                }
            }
            UncertaintySource::Estimated => match cfg.uncertainty.method {
                UncertaintyMethod::McUcb => {
                    mc_ucb_dense(net, h, base, &cfg.uncertainty, &mut rng, &mut work.trace)?
                }
                UncertaintyMethod::McTs => {
                    mc_ts_dense(net, h, base, &cfg.uncertainty, &mut rng, &mut work.trace)?
                }
                UncertaintyMethod::GradNorm => {
                    let gamma = cfg.uncertainty.grad_scale.unwrap_or(1.0);
                    grad_norm_dense(net, h, gamma, &mut work.trace)?.1
                }
                m => return domain(format!("AGE scoring cannot use {m:?}")),
            },
        }
    };

    let coef = if open { cfg.lambda * uncertainty } else { 0.0 };
    let direction = if skip(coef != 0.0) {
        Direction {
            vector: Vec::new(),
            degenerate: false,
        }
    } else {
        match cfg.direction_source {
            DirectionSource::Adversarial => direction_dense(net, h, &cfg.adv, &mut work.dir)?,
            DirectionSource::RandomUnit => {
                let mut rng: ChaCha8Rng = rng_for(seed, &[arm, 1]);
                random_unit(width, &mut rng)
            }
        }
    };

    let final_score = if coef == 0.0 || direction.degenerate {
        base
    } else {
        for ((p, &hv), &g) in work.perturbed.iter_mut().zip(h).zip(&direction.vector) {
            *p = hv + coef * g;
        }
        net.predict_traced(&work.perturbed, None, &mut work.trace)?
    };

    Ok(ScoreBreakdown {
        arm_id,
        base_pred: base,
        uncertainty,
        direction: direction.vector,
        degenerate: direction.degenerate,
        gate,
        eligible,
        final_score,
    })
}

/// Full exploration score for one candidate, all intermediates populated.
pub fn age_score(
    net: &Network,
    shallow: &ShallowNet,
    x: &SparseFeatureVector,
    cfg: &AgeConfig,
    arm_impressions: u64,
    seed: u64,
) -> Result<ScoreBreakdown> {
    cfg.validate()?;
    shallow.check(net)?;
    x.validate(&net.layout)?;
    let mut work = ScoreWork::new(net, shallow);
    score_candidate(
        net,
        shallow,
        &x.active_indices,
        x.arm_id,
        cfg,
        arm_impressions,
        seed,
        false,
        &mut work,
    )
}

/// Index of the highest score, ties going to the lowest arm id.
pub fn argmax_by_score(arms: &[u32], scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&arm, &s)) in arms.iter().zip(scores).enumerate() {
        best = match best {
            None => Some(i),
            Some(b) if s > scores[b] || (s == scores[b] && arm < arms[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn select_parts(
    net: &Network,
    shallow: &ShallowNet,
    user: &[u32],
    arms: &[u32],
    cfg: &AgeConfig,
    impression_counts: &[u64],
    seed: u64,
    lean: bool,
    work: &mut ScoreWork,
) -> Result<(usize, Vec<ScoreBreakdown>)> {
    if arms.is_empty() {
        return domain("candidate pool is empty");
    }
    let mut out = Vec::with_capacity(arms.len());
    for &arm in arms {
        let count = impression_counts.get(arm as usize).copied().unwrap_or(0);
        out.push(score_candidate(net, shallow, user, arm, cfg, count, seed, lean, work)?);
    }
    let scores: Vec<f64> = out.iter().map(|b| b.final_score).collect();
    let best = argmax_by_score(arms, &scores).expect("non-empty pool");
    Ok((best, out))
}

/// Scores every candidate and returns the arm with the highest exploration
/// score (lowest arm id on ties) plus each candidate's breakdown.
/// `impression_counts` is indexed by arm id; missing entries count as 0.
pub fn select_arm(
    net: &Network,
    shallow: &ShallowNet,
    pool: &[SparseFeatureVector],
    cfg: &AgeConfig,
    impression_counts: &[u64],
    seed: u64,
) -> Result<(u32, Vec<ScoreBreakdown>)> {
    cfg.validate()?;
    shallow.check(net)?;
    if pool.is_empty() {
        return domain("candidate pool is empty");
    }
    let mut work = ScoreWork::new(net, shallow);
    let mut out = Vec::with_capacity(pool.len());
    for x in pool {
        x.validate(&net.layout)?;
        let count = impression_counts.get(x.arm_id as usize).copied().unwrap_or(0);
        out.push(score_candidate(
            net,
            shallow,
            &x.active_indices,
            x.arm_id,
            cfg,
            count,
            seed,
            false,
            &mut work,
        )?);
    }
    let arms: Vec<u32> = out.iter().map(|b| b.arm_id).collect();
    let scores: Vec<f64> = out.iter().map(|b| b.final_score).collect();
    let best = argmax_by_score(&arms, &scores).expect("non-empty pool");
    Ok((arms[best], out))
}

// ── Training ────────────────────────────────────────────────────────────

/// Main and shallow networks with their optimiser states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeModel {
    pub net: Network,
    pub shallow: ShallowNet,
    pub main_adam: AdamState,
    pub shallow_adam: AdamState,
}

impl AgeModel {
    pub fn new(net: Network, shallow: ShallowNet, adam: AdamConfig) -> Self {
        let main_adam = AdamState::for_network(&net, adam);
        let shallow_adam = AdamState::for_mlp(&shallow.mlp, adam);
        Self {
            net,
            shallow,
            main_adam,
            shallow_adam,
        }
    }
}

/// Losses reported by one joint training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub main: f64,
    pub shallow: f64,
}

/// One joint update: the main network (MLP and embeddings) learns from the
/// dropout prediction, the shallow network learns the item-level CTR from
/// the current arm embedding. No gradient from the shallow loss reaches the
/// embeddings.
pub fn train_step(
    model: &mut AgeModel,
    x: &SparseFeatureVector,
    label: u8,
    dropout_rate: f64,
    seed: u64,
) -> Result<StepLosses> {
    x.validate(&model.net.layout)?;
    train_batch(model, &[(&x.active_indices, x.arm_id, label)], dropout_rate, seed)
}

/// Joint update on the mean gradient of a mini-batch of
/// `(user features, arm, click)` triples. Losses are batch means.
pub fn train_batch(
    model: &mut AgeModel,
    batch: &[(&[u32], u32, u8)],
    dropout_rate: f64,
    seed: u64,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return domain("training batch is empty");
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return domain(format!("dropout rate must lie in [0,1), got {dropout_rate}"));
    }
    model.shallow.check(&model.net)?;
    let widths = model.net.hidden_widths();
    let mut main_sum: Option<crate::nn::Gradients> = None;
    let mut shallow_sum: Option<Vec<crate::nn::Dense>> = None;
    let mut losses = StepLosses {
        main: 0.0,
        shallow: 0.0,
    };
    for (i, &(user, arm, label)) in batch.iter().enumerate() {
        if label > 1 {
            return domain(format!("label must be 0 or 1, got {label}"));
        }
        let mask = if dropout_rate > 0.0 {
            let mut rng = rng_for(seed, &[tag::TRAIN, i as u64]);
            Some(DropoutMask::sample(dropout_rate, &widths, &mut rng)?)
        } else {
            None
        };
        let (main_loss, grads) = model
            .net
            .loss_and_grads_parts(user, arm, label, mask.as_ref())?;
        let (shallow_loss, sgrads) =
            model
                .shallow
                .mlp
                .loss_and_grads(model.net.arm_embedding(arm), label, None, None)?;
        losses.main += main_loss;
        losses.shallow += shallow_loss;
        match &mut main_sum {
            None => main_sum = Some(grads),
            Some(acc) => {
                add_layers(&mut acc.layers, &grads.layers);
                add_into(&mut acc.embedding, &grads.embedding);
            }
        }
        match &mut shallow_sum {
            None => shallow_sum = Some(sgrads),
            Some(acc) => add_layers(acc, &sgrads),
        }
    }
    let mut main = main_sum.expect("non-empty batch");
    let mut shallow = shallow_sum.expect("non-empty batch");
    let n = batch.len() as f64;
    if batch.len() > 1 {
        let inv = 1.0 / n;
        scale_layers(&mut main.layers, inv);
        main.embedding.iter_mut().for_each(|g| *g *= inv);
        scale_layers(&mut shallow, inv);
    }
    model.net.apply_adam(&main, &mut model.main_adam)?;
    model.shallow.mlp.apply_adam(&shallow, &mut model.shallow_adam)?;
    Ok(StepLosses {
        main: losses.main / n,
        shallow: losses.shallow / n,
    })
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn add_layers(acc: &mut [crate::nn::Dense], g: &[crate::nn::Dense]) {
    for (a, b) in acc.iter_mut().zip(g) {
        add_into(&mut a.weights, &b.weights);
        add_into(&mut a.bias, &b.bias);
    }
}

fn scale_layers(acc: &mut [crate::nn::Dense], k: f64) {
    for l in acc {
        l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= k);
    }
}

// ── Pseudo-exploration identities ───────────────────────────────────────

/// Outcome of comparing the expected one-step training displacement of `h`
/// with the adversarial direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collinearity {
    /// `None` when either vector vanishes.
    pub cosine: Option<f64>,
    pub displacement_norm: f64,
    pub prediction: f64,
}

/// Expected plain gradient-descent displacement of the input embedding when
/// the label is drawn from `Bernoulli(true_ctr)`, compared by cosine with
/// the FGM direction.
pub fn expected_update_collinearity(
    net: &Network,
    x: &SparseFeatureVector,
    true_ctr: f64,
    sgd_lr: f64,
) -> Result<Collinearity> {
    if !(0.0..=1.0).contains(&true_ctr) {
        return domain(format!("true ctr must lie in [0,1], got {true_ctr}"));
    }
    if !(sgd_lr > 0.0 && sgd_lr <= 1e-4) {
        return domain(format!("sgd step must lie in (0, 1e-4], got {sgd_lr}"));
    }
    let h = net.embed(x)?;
    let prediction = net.forward_dense(&h, None)?;
    let width = h.len();
    let mut grad_pos = vec![0.0; width];
    let mut grad_neg = vec![0.0; width];
    net.mlp.loss_and_grads(&h, 1, None, Some(&mut grad_pos))?;
    net.mlp.loss_and_grads(&h, 0, None, Some(&mut grad_neg))?;
    let expected: Vec<f64> = grad_pos
        .iter()
        .zip(&grad_neg)
        .map(|(gp, gn)| true_ctr * (-sgd_lr * gp) + (1.0 - true_ctr) * (-sgd_lr * gn))
        .collect();
    let displacement_norm = norm2(&expected);
    let dir = direction_dense(
        net,
        &h,
        &AdvConfig::fgm(),
        &mut DirectionWork::new(net),
    )?;
    let cosine = if dir.degenerate || displacement_norm <= 1e-12 {
        None
    } else {
        Some(dot(&expected, &dir.vector) / displacement_norm)
    };
    Ok(Collinearity {
        cosine,
        displacement_norm,
        prediction,
    })
}

/// Fraction of `n_dirs` random unit directions `u` for which
/// `f(h + radius * g_hat) >= f(h + radius * u)`.
pub fn direction_dominance(
    net: &Network,
    x: &SparseFeatureVector,
    radius: f64,
    n_dirs: usize,
    seed: u64,
) -> Result<Option<f64>> {
    let h = net.embed(x)?;
    let dir = direction_dense(net, &h, &AdvConfig::fgm(), &mut DirectionWork::new(net))?;
    if dir.degenerate || n_dirs == 0 {
        return Ok(None);
    }
    let mut trace = net.new_trace();
    let mut point = vec![0.0; h.len()];
    for ((p, &hv), &g) in point.iter_mut().zip(&h).zip(&dir.vector) {
        *p = hv + radius * g;
    }
    let best = net.predict_traced(&point, None, &mut trace)?;
    let mut rng = rng_for(seed, &[0xd0d0]);
    let mut wins = 0usize;
    for _ in 0..n_dirs {
        let u = random_unit(h.len(), &mut rng);
        for ((p, &hv), &g) in point.iter_mut().zip(&h).zip(&u.vector) {
            *p = hv + radius * g;
        }
        if best >= net.predict_traced(&point, None, &mut trace)? {
            wins += 1;
        }
    }
    Ok(Some(wins as f64 / n_dirs as f64))
}

/// Derives the per-event scoring seed used by the runtime policies.
pub fn event_seed(run_seed: u64, event_index: u64) -> u64 {
    derive_seed(run_seed, &[tag::SELECT, event_index])
}
