//! Offline replay over logs collected with a uniform-random display policy.
//!
//! A policy sees every logged event, but only events where it picks the arm
//! that was actually shown count: they earn the logged click and trigger one
//! training update. Everything else leaves the policy untouched.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::age::{event_seed, train_batch, AgeModel};
use crate::error::{domain, AgeError, Result};
use crate::nn::{SparseFeatureVector, Trace};
use crate::policy::{Agent, BanditPolicy, ModelConfig, PolicyConfig};
use crate::rng::derive_seed;

// ── Log format ──────────────────────────────────────────────────────────

/// One logged impression: the pool offered, the arm shown and its click.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoggedEvent {
    pub ts: u64,
    pub shown: u32,
    pub click: u8,
    /// Active user feature indices, strictly increasing.
    pub user: Vec<u32>,
    pub pool: Vec<u32>,
}

impl LoggedEvent {
    pub fn validate(&self) -> Result<()> {
        if self.click > 1 {
            return domain(format!("click must be 0 or 1, got {}", self.click));
        }
        if self.pool.is_empty() {
            return domain("pool is empty");
        }
        if !self.pool.contains(&self.shown) {
            return domain(format!("shown arm {} is not in the pool", self.shown));
        }
        if self.user.windows(2).any(|w| w[0] >= w[1]) {
            return domain("user indices must be strictly increasing");
        }
        Ok(())
    }

    /// Feature vector of the displayed arm.
    pub fn shown_features(&self) -> SparseFeatureVector {
        SparseFeatureVector::new(self.user.clone(), self.shown)
    }
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    drop(file);
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(GzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Parses JSON-lines events. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_log(reader: impl BufRead) -> Result<Vec<LoggedEvent>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: LoggedEvent = serde_json::from_str(&line).map_err(|e| AgeError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        ev.validate().map_err(|e| AgeError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(ev);
    }
    Ok(out)
}

/// Reads a JSON-lines log, gzip-compressed or plain.
pub fn read_log(path: &Path) -> Result<Vec<LoggedEvent>> {
    parse_log(open_maybe_gz(path)?)
}

pub fn write_events(w: &mut impl Write, events: &[LoggedEvent]) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut *w, ev).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_log(path: &Path, events: &[LoggedEvent]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_events(&mut w, events)?;
    w.flush()?;
    Ok(())
}

/// Arm names seen by the R6B importer, indexed by dense arm id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmIndex {
    pub names: Vec<String>,
    #[serde(skip)]
    lookup: HashMap<String, u32>,
}

impl ArmIndex {
    pub fn id(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }
}

/// Number of user features in the R6B layout (one sum-pooled field).
pub const R6B_USER_FEATURES: usize = 136;

/// Converts the space-delimited Yahoo! R6B layout
/// (`ts shown click |user f1 f2 ... |id-a |id-b ...`) into events. Article
/// names get dense ids in order of first appearance and user features
/// (1-based in the source) become 0-based indices.
pub fn import_r6b(reader: impl BufRead) -> Result<(Vec<LoggedEvent>, ArmIndex)> {
    let mut arms = ArmIndex::default();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| AgeError::Parse {
            line: i + 1,
            message,
        };
        let mut sections = line.split('|');
        let head: Vec<&str> = sections
            .next()
            .unwrap_or_default()
            .split_whitespace()
            .collect();
        if head.len() != 3 {
            return Err(err(format!("expected `ts shown click`, got {head:?}")));
        }
        let ts = head[0]
            .parse::<u64>()
            .map_err(|e| err(format!("bad timestamp: {e}")))?;
        let click = match head[2] {
            "0" => 0,
            "1" => 1,
            other => return Err(err(format!("bad click {other:?}"))),
        };
        let shown_name = head[1].to_string();
        let mut user = Vec::new();
        let mut pool = Vec::new();
        for sec in sections {
            let mut toks = sec.split_whitespace();
            let Some(first) = toks.next() else { continue };
            if first == "user" {
                for t in toks {
                    let f: usize = t.parse().map_err(|e| err(format!("bad user feature {t:?}: {e}")))?;
                    if f == 0 || f > R6B_USER_FEATURES {
                        return Err(err(format!("user feature {f} outside 1..={R6B_USER_FEATURES}")));
                    }
                    user.push((f - 1) as u32);
                }
            } else {
                pool.push(arms.id(first));
            }
        }
        user.sort_unstable();
        user.dedup();
        let ev = LoggedEvent {
            ts,
            shown: arms.id(&shown_name),
            click,
            user,
            pool,
        };
        ev.validate().map_err(|e| err(e.to_string()))?;
        out.push(ev);
    }
    Ok((out, arms))
}

// ── Metrics ─────────────────────────────────────────────────────────────

/// Mean prediction over mean click.
pub fn compute_pcoc(predictions: &[f64], clicks: &[u8]) -> Result<f64> {
    if predictions.len() != clicks.len() {
        return Err(AgeError::Contract(format!(
            "{} predictions for {} clicks",
            predictions.len(),
            clicks.len()
        )));
    }
    let total: u64 = clicks.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        return domain("pcoc is undefined without clicks");
    }
    Ok(predictions.iter().sum::<f64>() / total as f64)
}

/// Running predicted/observed totals whose ratio is the PCOC.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PcocAccumulator {
    pub predicted: f64,
    pub clicks: u64,
    /// Sum of true CTRs when the environment knows them.
    pub true_ctr: f64,
    pub count: u64,
}

impl PcocAccumulator {
    pub fn push(&mut self, predicted: f64, click: u8, true_ctr: Option<f64>) {
        self.predicted += predicted;
        self.clicks += u64::from(click);
        self.true_ctr += true_ctr.unwrap_or(0.0);
        self.count += 1;
    }

    /// Against observed clicks; `None` without clicks.
    pub fn pcoc(&self) -> Option<f64> {
        (self.clicks > 0).then(|| self.predicted / self.clicks as f64)
    }

    /// Against summed true CTRs; `None` when none were recorded.
    pub fn pcoc_true(&self) -> Option<f64> {
        (self.true_ctr > 0.0).then(|| self.predicted / self.true_ctr)
    }
}

/// Cumulative statistics of one arm after `impressions` displays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub impressions: u64,
    pub empirical_ctr: f64,
    pub mean_predicted_ctr: f64,
    /// Present in simulations, where the true CTR is known.
    pub mean_true_ctr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCurve {
    pub arm: u32,
    pub points: Vec<CurvePoint>,
}

/// Tracks per-arm curves sampled at every power-of-two impression count.
#[derive(Debug, Clone, Default)]
pub struct CurveTracker {
    stats: Vec<PcocAccumulator>,
    curves: Vec<Vec<CurvePoint>>,
}

impl CurveTracker {
    pub fn new(num_arms: usize) -> Self {
        Self {
            stats: vec![PcocAccumulator::default(); num_arms],
            curves: vec![Vec::new(); num_arms],
        }
    }

    /// Impressions recorded so far for `arm`.
    pub fn impressions(&self, arm: u32) -> u64 {
        self.stats[arm as usize].count
    }

    pub fn record(&mut self, arm: u32, click: u8, predicted: f64, true_ctr: Option<f64>) {
        let a = arm as usize;
        let s = &mut self.stats[a];
        s.push(predicted, click, true_ctr);
        if s.count.is_power_of_two() {
            let n = s.count as f64;
            self.curves[a].push(CurvePoint {
                impressions: s.count,
                empirical_ctr: s.clicks as f64 / n,
                mean_predicted_ctr: s.predicted / n,
                mean_true_ctr: true_ctr.map(|_| s.true_ctr / n),
            });
        }
    }

    /// Curves of every arm with at least one impression.
    pub fn finish(self) -> Vec<ArmCurve> {
        self.curves
            .into_iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(arm, points)| ArmCurve {
                arm: arm as u32,
                points,
            })
            .collect()
    }
}

// ── Replay ──────────────────────────────────────────────────────────────

/// What happened to one event during replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub matched: bool,
    pub click: Option<u8>,
    pub predicted_ctr: Option<f64>,
}

/// Offers `event` to the policy; trains it only if it picked the shown arm.
pub fn replay_step(
    policy: &mut dyn BanditPolicy,
    event: &LoggedEvent,
    seed: u64,
) -> Result<MatchOutcome> {
    let choice = policy.select(&event.user, &event.pool, seed)?;
    if choice.arm != event.shown {
        return Ok(MatchOutcome {
            matched: false,
            click: None,
            predicted_ctr: None,
        });
    }
    policy.update(&event.user, event.shown, event.click, seed)?;
    Ok(MatchOutcome {
        matched: true,
        click: Some(event.click),
        predicted_ctr: Some(choice.predicted_ctr),
    })
}

/// Cumulative counts after a prefix of the replay stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Milestone {
    pub events_seen: u64,
    pub events_matched: u64,
    pub cumulative_clicks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub policy: String,
    pub seed: u64,
    pub events_seen: u64,
    pub events_matched: u64,
    pub cumulative_clicks: u64,
    /// `None` when nothing matched.
    pub matched_ctr: Option<f64>,
    /// `None` when no matched event was clicked.
    pub pcoc: Option<f64>,
    pub milestones: Vec<Milestone>,
    pub per_arm_curves: Vec<ArmCurve>,
    pub state_digest: String,
}

/// Replays `events` through `policy`. `milestones` lists prefix lengths at
/// which cumulative counts are snapshotted.
pub fn replay_events(
    policy: &mut dyn BanditPolicy,
    events: &[LoggedEvent],
    num_arms: usize,
    seed: u64,
    milestones: &[u64],
) -> Result<(ReplayCounts, Vec<ArmCurve>)> {
    let mut counts = ReplayCounts::default();
    let mut curves = CurveTracker::new(num_arms);
    let mut pcoc = PcocAccumulator::default();
    for (i, ev) in events.iter().enumerate() {
        let out = replay_step(policy, ev, event_seed(seed, i as u64))?;
        counts.seen += 1;
        if out.matched {
            let click = ev.click;
            let pred = out.predicted_ctr.expect("matched events carry a prediction");
            counts.matched += 1;
            counts.clicks += u64::from(click);
            pcoc.push(pred, click, None);
            if (ev.shown as usize) < num_arms {
                curves.record(ev.shown, click, pred, None);
            }
        }
        if milestones.contains(&counts.seen) {
            counts.milestones.push(counts.milestone());
        }
    }
    counts.pcoc = pcoc.pcoc();
    Ok((counts, curves.finish()))
}

/// Running totals of a replay pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayCounts {
    pub seen: u64,
    pub matched: u64,
    pub clicks: u64,
    pub pcoc: Option<f64>,
    pub milestones: Vec<Milestone>,
}

impl ReplayCounts {
    fn milestone(&self) -> Milestone {
        Milestone {
            events_seen: self.seen,
            events_matched: self.matched,
            cumulative_clicks: self.clicks,
        }
    }
}

/// Warm-start schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmConfig {
    /// Leading events used for supervised pre-training.
    pub events: usize,
    pub epochs: usize,
    /// Learning rate during warm start; the model's own rate when `None`.
    pub learning_rate: Option<f64>,
}

impl Default for WarmConfig {
    fn default() -> Self {
        Self {
            events: 80_000,
            epochs: 1,
            learning_rate: None,
        }
    }
}

impl WarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 && self.events > 0 {
            return domain("warm epochs must be positive");
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return domain(format!("warm learning_rate must be positive, got {lr}"));
            }
        }
        Ok(())
    }
}

/// Pre-trains a fresh model on the shown arms and clicks of the first
/// `warm.events` events, in log order. `init_seed` picks the
/// initialisation; `shallow_hidden` sizes the gating network, which trains
/// alongside.
pub fn warm_start(
    events: &[LoggedEvent],
    warm: &WarmConfig,
    model_cfg: &ModelConfig,
    shallow_hidden: usize,
    init_seed: u64,
) -> Result<AgeModel> {
    warm.validate()?;
    model_cfg.validate()?;
    if events.len() < warm.events {
        return domain(format!(
            "warm start needs {} events, log has {}",
            warm.events,
            events.len()
        ));
    }
    let mut model = model_cfg.init_model(shallow_hidden, init_seed)?;
    let slice = &events[..warm.events];
    for ev in slice {
        model.net.validate_parts(&ev.user, &[ev.shown])?;
    }
    let base_lr = model_cfg.adam.learning_rate;
    if let Some(lr) = warm.learning_rate {
        model.main_adam.learning_rate = lr;
        model.shallow_adam.learning_rate = lr;
    }
    let bs = model_cfg.batch_size;
    let mut step = 0u64;
    for _ in 0..warm.epochs {
        for chunk in slice.chunks(bs) {
            let batch: Vec<(&[u32], u32, u8)> = chunk
                .iter()
                .map(|e| (e.user.as_slice(), e.shown, e.click))
                .collect();
            train_batch(
                &mut model,
                &batch,
                model_cfg.dropout_rate,
                derive_seed(init_seed, &[crate::rng::tag::WARM, step]),
            )?;
            step += 1;
        }
    }
    model.main_adam.learning_rate = base_lr;
    model.shallow_adam.learning_rate = base_lr;
    Ok(model)
}

/// Mean log-loss of the plain prediction on the shown arms of `events`.
pub fn log_loss(model: &AgeModel, events: &[LoggedEvent]) -> Result<f64> {
    if events.is_empty() {
        return domain("log loss over zero events");
    }
    let net = &model.net;
    let mut h = vec![0.0; net.input_width()];
    let mut trace = Trace::new(&net.mlp);
    let mut total = 0.0;
    for ev in events {
        net.validate_parts(&ev.user, &[ev.shown])?;
        net.embed_parts_unchecked(&ev.user, ev.shown, &mut h);
        let p = net.predict_traced(&h, None, &mut trace)?;
        total -= if ev.click == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / events.len() as f64)
}

/// Warm-started models for one seed: `count` independent initialisations
/// trained on the same prefix. Entry 0 is shared by every single-model
/// policy under that seed.
pub fn warm_models(
    events: &[LoggedEvent],
    warm: &WarmConfig,
    model_cfg: &ModelConfig,
    shallow_hidden: usize,
    seed: u64,
    count: usize,
) -> Result<Vec<AgeModel>> {
    (0..count as u64)
        .map(|k| warm_start(events, warm, model_cfg, shallow_hidden, derive_seed(seed, &[k])))
        .collect()
}

/// Feature vectors from the warm-up prefix used to calibrate gradient
/// scales; at most `limit` entries.
pub fn calibration_sample(events: &[LoggedEvent], limit: usize) -> Vec<SparseFeatureVector> {
    events.iter().take(limit).map(LoggedEvent::shown_features).collect()
}

/// Number of warm-up events reused for gradient-scale calibration.
pub const CALIBRATION_EVENTS: usize = 256;

/// Replays one policy for one seed over the post-warm-up part of the log,
/// given already warm-started models.
pub fn replay_policy(
    cfg: &PolicyConfig,
    model_cfg: &ModelConfig,
    warm: &[AgeModel],
    events: &[LoggedEvent],
    warm_events: usize,
    seed: u64,
    milestones: &[u64],
) -> Result<ReplayReport> {
    let calib = calibration_sample(&events[..warm_events.min(events.len())], CALIBRATION_EVENTS);
    let mut agent = Agent::new(cfg, model_cfg, warm, &calib, seed)?;
    let rest = &events[warm_events.min(events.len())..];
    let num_arms = model_cfg.network.layout.num_arms;
    let (counts, curves) = replay_events(&mut agent, rest, num_arms, seed, milestones)?;
    Ok(ReplayReport {
        policy: cfg.label(),
        seed,
        events_seen: counts.seen,
        events_matched: counts.matched,
        cumulative_clicks: counts.clicks,
        matched_ctr: (counts.matched > 0).then(|| counts.clicks as f64 / counts.matched as f64),
        pcoc: counts.pcoc,
        milestones: counts.milestones,
        per_arm_curves: curves,
        state_digest: agent.state_digest(),
    })
}

/// Fresh warm start plus a full replay pass for each seed.
pub fn run_replay(
    cfg: &PolicyConfig,
    model_cfg: &ModelConfig,
    events: &[LoggedEvent],
    warm: &WarmConfig,
    seeds: &[u64],
) -> Result<Vec<ReplayReport>> {
    seeds
        .iter()
        .map(|&seed| {
            let models = warm_models(
                events,
                warm,
                model_cfg,
                cfg.age.dgu_hidden,
                seed,
                cfg.model_count(),
            )?;
            replay_policy(cfg, model_cfg, &models, events, warm.events, seed, &[])
        })
        .collect()
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for a single
/// value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
