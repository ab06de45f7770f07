//! Policy configuration and the stateful agent that runs any policy kind
//! through the same select/update cycle.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::age::{select_parts, train_batch, AgeConfig, AgeModel, ScoreWork, UncertaintySource};
use crate::baselines::{
    ensemble_member, ensemble_ucb_scores, explore_coin, gradient_scores, predict_pool,
    random_index, vanilla_parts, BonusMode, PoolWork,
};
use crate::error::{domain, AgeError, Result};
use crate::nn::{AdamConfig, Mlp, Network, NetworkSpec, SparseFeatureVector};
use crate::rng::{derive_seed, rng_for, tag};
use crate::uncertainty::{calibrate_grad_scale, median_mc_ucb, UncertaintyMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Vanilla,
    Random,
    EpsGreedy,
    EnsembleTs,
    EnsembleUcb,
    GradientTs,
    GradientUcb,
    AgeTs,
    AgeUcb,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Vanilla => "vanilla",
            Self::Random => "random",
            Self::EpsGreedy => "eps_greedy",
            Self::EnsembleTs => "ensemble_ts",
            Self::EnsembleUcb => "ensemble_ucb",
            Self::GradientTs => "gradient_ts",
            Self::GradientUcb => "gradient_ucb",
            Self::AgeTs => "age_ts",
            Self::AgeUcb => "age_ucb",
        }
    }

    pub fn is_ensemble(self) -> bool {
        matches!(self, Self::EnsembleTs | Self::EnsembleUcb)
    }

    pub fn is_age(self) -> bool {
        matches!(self, Self::AgeTs | Self::AgeUcb)
    }
}

/// One policy under test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Label used in reports; defaults to the kind name.
    pub name: Option<String>,
    pub kind: PolicyKind,
    pub epsilon: f64,
    pub ensemble_size: usize,
    /// AGE settings. Its `uncertainty` block also carries the gradient
    /// scale used by the gradient baselines. For `age_ts` the estimator is
    /// always MC-dropout TS; for `age_ucb` it is MC-dropout UCB unless
    /// `grad_norm` is requested.
    pub age: AgeConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            name: None,
            kind: PolicyKind::AgeTs,
            epsilon: 0.1,
            ensemble_size: 5,
            age: AgeConfig::default(),
        }
    }
}

impl PolicyConfig {
    pub fn of(kind: PolicyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.kind.as_str().to_string())
    }

    /// AGE settings with the estimator forced to match the kind.
    pub fn resolved_age(&self) -> AgeConfig {
        let mut age = self.age;
        match self.kind {
            PolicyKind::AgeTs => age.uncertainty.method = UncertaintyMethod::McTs,
            PolicyKind::AgeUcb => {
                if age.uncertainty.method != UncertaintyMethod::GradNorm {
                    age.uncertainty.method = UncertaintyMethod::McUcb;
                }
            }
            _ => {}
        }
        age
    }

    /// Number of independently trained networks the policy keeps.
    pub fn model_count(&self) -> usize {
        if self.kind.is_ensemble() {
            self.ensemble_size
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return domain(format!("epsilon must lie in [0,1], got {}", self.epsilon));
        }
        if self.kind.is_ensemble() && self.ensemble_size < 2 {
            return domain(format!(
                "ensemble_size must be at least 2, got {}",
                self.ensemble_size
            ));
        }
        self.resolved_age().validate()
    }
}

/// Network shape and training settings shared by every policy in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub network: NetworkSpec,
    pub adam: AdamConfig,
    /// Dropout applied to hidden units in the training forward pass.
    pub dropout_rate: f64,
    /// Matched events per optimiser step.
    pub batch_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            network: NetworkSpec::default(),
            adam: AdamConfig::default(),
            dropout_rate: 0.01,
            batch_size: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return domain(format!(
                "dropout_rate must lie in [0,1), got {}",
                self.dropout_rate
            ));
        }
        if self.batch_size == 0 {
            return domain("batch_size must be positive");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return domain(format!("learning_rate must be positive, got {}", a.learning_rate));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return domain("adam betas must lie in [0,1)");
        }
        if !(a.epsilon > 0.0) {
            return domain("adam epsilon must be positive");
        }
        Ok(())
    }

    /// Fresh, untrained model; `seed` picks the initialisation.
    pub fn init_model(&self, shallow_hidden: usize, seed: u64) -> Result<AgeModel> {
        let net = Network::new(&self.network, derive_seed(seed, &[tag::INIT]))?;
        let shallow = crate::age::ShallowNet::for_network(
            &net,
            shallow_hidden,
            self.network.output_bias,
            derive_seed(seed, &[tag::INIT, 1]),
        );
        Ok(AgeModel::new(net, shallow, self.adam))
    }
}

/// Arm chosen for one event plus the model's plain CTR estimate for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub arm: u32,
    pub predicted_ctr: f64,
}

/// Anything that can pick an arm from a pool and learn from the outcome.
pub trait BanditPolicy {
    /// Picks one arm of `pool` for a user. `seed` keys every random draw.
    fn select(&mut self, user: &[u32], pool: &[u32], seed: u64) -> Result<Choice>;

    /// Learns from a displayed arm and its click.
    fn update(&mut self, user: &[u32], arm: u32, click: u8, seed: u64) -> Result<()>;

    /// Hex digest of all mutable state.
    fn state_digest(&self) -> String;
}

/// Runs one [`PolicyConfig`] with its own networks, optimiser states and
/// impression counters.
pub struct Agent {
    cfg: PolicyConfig,
    age: AgeConfig,
    dropout_rate: f64,
    batch_size: usize,
    grad_scale: f64,
    models: Vec<AgeModel>,
    impressions: Vec<u64>,
    pending: Vec<(Vec<u32>, u32, u8)>,
    updates: u64,
    pool_work: PoolWork,
    score_work: ScoreWork,
    member_preds: Vec<Vec<f64>>,
}

impl Agent {
    /// Builds an agent from warm-started models. Ensemble kinds take the
    /// first `ensemble_size` entries of `warm`; others take the first.
    /// `calibration` feeds the gradient-scale calibration when no scale is
    /// configured.
    pub fn new(
        cfg: &PolicyConfig,
        model_cfg: &ModelConfig,
        warm: &[AgeModel],
        calibration: &[SparseFeatureVector],
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        model_cfg.validate()?;
        let need = cfg.model_count();
        if warm.len() < need {
            return Err(AgeError::Contract(format!(
                "policy {} needs {need} models, got {}",
                cfg.label(),
                warm.len()
            )));
        }
        let models: Vec<AgeModel> = warm[..need].to_vec();
        for m in &models {
            m.shallow.check(&m.net)?;
        }
        let mut age = cfg.resolved_age();
        let uses_grad = matches!(cfg.kind, PolicyKind::GradientTs | PolicyKind::GradientUcb)
            || (cfg.kind.is_age() && age.uncertainty.method == UncertaintyMethod::GradNorm);
        let grad_scale = match age.uncertainty.grad_scale {
            Some(g) => g,
            None if uses_grad => {
                let mut rng = rng_for(seed, &[tag::CALIBRATE]);
                calibrate_grad_scale(&models[0].net, calibration, &age.uncertainty, &mut rng)?
            }
            None => 1.0,
        };
        age.uncertainty.grad_scale = Some(grad_scale);
        if let UncertaintySource::Gaussian { std: None } = age.uncertainty_source {
            let mut rng = rng_for(seed, &[tag::CALIBRATE, 1]);
            let std = median_mc_ucb(&models[0].net, calibration, &age.uncertainty, &mut rng)?;
            age.uncertainty_source = UncertaintySource::Gaussian { std: Some(std) };
        }
        let net = &models[0].net;
        Ok(Self {
            pool_work: PoolWork::new(net),
            score_work: ScoreWork::new(net, &models[0].shallow),
            impressions: vec![0; net.layout.num_arms],
            cfg: cfg.clone(),
            age,
            dropout_rate: model_cfg.dropout_rate,
            batch_size: model_cfg.batch_size,
            grad_scale,
            models,
            pending: Vec::new(),
            updates: 0,
            member_preds: vec![Vec::new(); need],
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn grad_scale(&self) -> f64 {
        self.grad_scale
    }

    /// AGE settings after calibration.
    pub fn resolved_age(&self) -> &AgeConfig {
        &self.age
    }

    pub fn models(&self) -> &[AgeModel] {
        &self.models
    }

    pub fn network(&self) -> &Network {
        &self.models[0].net
    }

    pub fn impressions(&self) -> &[u64] {
        &self.impressions
    }

    /// Optimiser steps taken so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Plain prediction for one user/arm pair; ensembles report the member
    /// mean.
    pub fn predict(&mut self, user: &[u32], arm: u32) -> Result<f64> {
        let mut sum = 0.0;
        for m in &self.models {
            predict_pool(&m.net, user, &[arm], &mut self.pool_work)?;
            sum += self.pool_work.scores[0];
        }
        Ok(sum / self.models.len() as f64)
    }

    fn flush(&mut self, seed: u64) -> Result<()> {
        let batch: Vec<(&[u32], u32, u8)> = self
            .pending
            .iter()
            .map(|(u, a, c)| (u.as_slice(), *a, *c))
            .collect();
        for (k, m) in self.models.iter_mut().enumerate() {
            train_batch(m, &batch, self.dropout_rate, derive_seed(seed, &[k as u64]))?;
        }
        self.pending.clear();
        self.updates += 1;
        Ok(())
    }
}

impl BanditPolicy for Agent {
    fn select(&mut self, user: &[u32], pool: &[u32], seed: u64) -> Result<Choice> {
        if pool.is_empty() {
            return domain("candidate pool is empty");
        }
        self.models[0].net.validate_parts(user, pool)?;
        let net = &self.models[0].net;
        let idx = match self.cfg.kind {
            PolicyKind::Vanilla => vanilla_parts(net, user, pool, &mut self.pool_work)?,
            PolicyKind::Random => random_index(pool.len(), seed)?,
            PolicyKind::EpsGreedy => {
                if explore_coin(self.cfg.epsilon, seed) {
                    random_index(pool.len(), seed)?
                } else {
                    vanilla_parts(net, user, pool, &mut self.pool_work)?
                }
            }
            PolicyKind::EnsembleTs => {
                let k = ensemble_member(self.models.len(), seed);
                vanilla_parts(&self.models[k].net, user, pool, &mut self.pool_work)?
            }
            PolicyKind::EnsembleUcb => {
                for (m, preds) in self.models.iter().zip(&mut self.member_preds) {
                    predict_pool(&m.net, user, pool, &mut self.pool_work)?;
                    preds.clone_from(&self.pool_work.scores);
                }
                ensemble_ucb_scores(&self.member_preds, &mut self.pool_work.scores)?;
                crate::age::argmax_by_score(pool, &self.pool_work.scores).expect("non-empty pool")
            }
            PolicyKind::GradientTs | PolicyKind::GradientUcb => {
                let mode = if self.cfg.kind == PolicyKind::GradientTs {
                    BonusMode::Ts
                } else {
                    BonusMode::Ucb
                };
                gradient_scores(net, user, pool, mode, self.grad_scale, seed, &mut self.pool_work)?;
                crate::age::argmax_by_score(pool, &self.pool_work.scores).expect("non-empty pool")
            }
            PolicyKind::AgeTs | PolicyKind::AgeUcb => {
                let m = &self.models[0];
                let (best, scored) = select_parts(
                    &m.net,
                    &m.shallow,
                    user,
                    pool,
                    &self.age,
                    &self.impressions,
                    seed,
                    true,
                    &mut self.score_work,
                )?;
                return Ok(Choice {
                    arm: pool[best],
                    predicted_ctr: scored[best].base_pred,
                });
            }
        };
        let arm = pool[idx];
        Ok(Choice {
            arm,
            predicted_ctr: self.predict(user, arm)?,
        })
    }

    fn update(&mut self, user: &[u32], arm: u32, click: u8, seed: u64) -> Result<()> {
        if click > 1 {
            return domain(format!("click must be 0 or 1, got {click}"));
        }
        self.models[0].net.validate_parts(user, &[arm])?;
        self.impressions[arm as usize] += 1;
        self.pending.push((user.to_vec(), arm, click));
        if self.pending.len() >= self.batch_size {
            self.flush(seed)?;
        }
        Ok(())
    }

    fn state_digest(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.models {
            hash_model(&mut h, m);
        }
        for &c in &self.impressions {
            h.update(c.to_le_bytes());
        }
        for (u, a, c) in &self.pending {
            for &i in u {
                h.update(i.to_le_bytes());
            }
            h.update(a.to_le_bytes());
            h.update([*c]);
        }
        h.update(self.updates.to_le_bytes());
        hex(&h.finalize())
    }
}

fn hash_f64s(h: &mut Sha256, values: &[f64]) {
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
}

fn hash_mlp(h: &mut Sha256, mlp: &Mlp) {
    for l in &mlp.layers {
        hash_f64s(h, &l.weights);
        hash_f64s(h, &l.bias);
    }
}

fn hash_model(h: &mut Sha256, m: &AgeModel) {
    hash_f64s(h, &m.net.embedding.data);
    hash_mlp(h, &m.net.mlp);
    hash_mlp(h, &m.shallow.mlp);
    for st in [&m.main_adam, &m.shallow_adam] {
        for v in st.m.iter().chain(&st.v) {
            hash_f64s(h, v);
        }
        h.update(st.step.to_le_bytes());
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
