//! Experiment configuration, validation with field paths, and the runner
//! behind the command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::age::{direction_dominance, expected_update_collinearity, AgeModel, UncertaintySource};
use crate::adversarial::AdvMethod;
use crate::error::{AgeError, Result};
use crate::nn::{FieldLayout, Network, NetworkSpec, SparseFeatureVector};
use crate::policy::{hex, ModelConfig, PolicyConfig, PolicyKind};
use crate::replay::{
    mean_std, read_log, replay_policy, warm_models, LoggedEvent, ReplayReport, WarmConfig,
};
use crate::rng::{derive_seed, rng_for};
use crate::synth::{generate_log, live_policy, LiveConfig, LiveReport, World, WorldSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Gen,
    Replay,
    Live,
    Ablate,
    #[serde(rename = "theorem-check", alias = "theorem_check")]
    TheoremCheck,
}

/// Settings of the numerical identity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub networks: usize,
    pub sgd_lr: f64,
    pub min_abs_cosine: f64,
    pub dominance_networks: usize,
    pub directions: usize,
    pub radius: f64,
    pub min_dominance: f64,
    pub network: NetworkSpec,
}

impl Default for TheoremConfig {
    fn default() -> Self {
        Self {
            networks: 50,
            sgd_lr: 1e-5,
            min_abs_cosine: 0.999,
            dominance_networks: 20,
            directions: 10_000,
            radius: 1e-3,
            min_dominance: 0.999,
            network: NetworkSpec {
                layout: FieldLayout {
                    field_sizes: vec![8, 8],
                    num_arms: 8,
                },
                embed_dim: 4,
                hidden: vec![32, 16],
                embedding_init_std: 0.5,
                output_bias: -1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Synthetic world; also supplies the feature layout.
    pub world: Option<WorldSpec>,
    /// Materialise a different world for each seed (seed mixed into the
    /// world seed) instead of one shared world.
    pub world_per_seed: bool,
    /// Logged stream to replay. Without it, replay modes generate a log
    /// from `world` for each seed.
    pub log: Option<PathBuf>,
    /// Events per generated log, warm-up included.
    pub log_events: usize,
    pub pool_size: usize,
    pub policies: Vec<PolicyConfig>,
    pub model: ModelConfig,
    pub warm: WarmConfig,
    pub live: LiveConfig,
    pub seeds: Vec<u64>,
    /// Post-warm-up prefix lengths at which replay counts are snapshotted.
    pub milestones: Vec<u64>,
    pub theorem: TheoremConfig,
    /// Output directory (or file, for `gen`).
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Replay,
            world: None,
            world_per_seed: false,
            log: None,
            log_events: 100_000,
            pool_size: 10,
            policies: Vec::new(),
            model: ModelConfig::default(),
            warm: WarmConfig::default(),
            live: LiveConfig::default(),
            seeds: vec![0],
            milestones: Vec::new(),
            theorem: TheoremConfig::default(),
            out: None,
        }
    }
}

// ── Validation ──────────────────────────────────────────────────────────

/// One validation problem, tagged with the path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Diags(Vec<Diagnostic>);

impl Diags {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic {
            path: path.into(),
            message: message.into(),
        });
    }

    fn check(&mut self, ok: bool, path: impl Into<String>, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }

    fn from_result(&mut self, path: &str, r: Result<()>) {
        if let Err(e) = r {
            self.push(path, e.to_string());
        }
    }
}

fn unit_interval(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn policy_diagnostics(d: &mut Diags, p: &PolicyConfig, at: &str) {
    let before = d.0.len();
    d.check(
        unit_interval(p.epsilon),
        format!("{at}.epsilon"),
        format!("must lie in [0,1], got {}", p.epsilon),
    );
    if p.kind.is_ensemble() {
        d.check(
            p.ensemble_size >= 2,
            format!("{at}.ensemble_size"),
            format!("must be at least 2, got {}", p.ensemble_size),
        );
    }
    let a = &p.age;
    d.check(
        a.lambda > 0.0 && a.lambda.is_finite(),
        format!("{at}.age.lambda"),
        format!("must be positive, got {}", a.lambda),
    );
    d.check(
        a.adv.steps >= 1,
        format!("{at}.age.adv.steps"),
        format!("pgd steps must be >= 1, got {}", a.adv.steps),
    );
    d.check(
        (0.0..1.0).contains(&a.uncertainty.dropout_rate),
        format!("{at}.age.uncertainty.dropout_rate"),
        format!("must lie in [0,1), got {}", a.uncertainty.dropout_rate),
    );
    if let Some(t) = a.dgu_threshold {
        d.check(
            unit_interval(t),
            format!("{at}.age.dgu_threshold"),
            format!("must lie in [0,1], got {t}"),
        );
    }
    d.check(
        a.dgu_hidden > 0,
        format!("{at}.age.dgu_hidden"),
        "must be positive",
    );
    if let UncertaintySource::Gaussian { std: Some(s) } = a.uncertainty_source {
        d.check(
            s >= 0.0 && s.is_finite(),
            format!("{at}.age.uncertainty_source.std"),
            format!("must be finite and >= 0, got {s}"),
        );
    }
    if d.0.len() == before {
        d.from_result(at, p.validate());
    }
}

fn model_diagnostics(d: &mut Diags, m: &ModelConfig) {
    let before = d.0.len();
    d.check(
        m.adam.learning_rate > 0.0 && m.adam.learning_rate.is_finite(),
        "model.adam.learning_rate",
        format!("must be positive, got {}", m.adam.learning_rate),
    );
    d.check(
        (0.0..1.0).contains(&m.dropout_rate),
        "model.dropout_rate",
        format!("must lie in [0,1), got {}", m.dropout_rate),
    );
    d.check(m.batch_size > 0, "model.batch_size", "must be positive");
    d.check(
        m.network.embed_dim > 0,
        "model.network.embed_dim",
        "must be positive",
    );
    d.check(
        !m.network.hidden.contains(&0),
        "model.network.hidden",
        "widths must be positive",
    );
    if d.0.len() == before {
        d.from_result("model", m.validate());
    }
}

/// Schema-independent checks on a parsed config. Empty means valid.
pub fn diagnostics(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut d = Diags(Vec::new());
    let needs_policies = matches!(cfg.mode, Mode::Replay | Mode::Live);
    if needs_policies {
        d.check(
            !cfg.policies.is_empty(),
            "policies",
            "at least one policy is required in replay and live modes",
        );
    }
    for (i, p) in cfg.policies.iter().enumerate() {
        policy_diagnostics(&mut d, p, &format!("policies[{i}]"));
    }
    let labels: Vec<String> = cfg.policies.iter().map(PolicyConfig::label).collect();
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            d.push(format!("policies[{i}].name"), format!("duplicate policy label {l:?}"));
        }
    }
    model_diagnostics(&mut d, &cfg.model);
    d.from_result("warm", cfg.warm.validate());
    if let Some(w) = &cfg.world {
        d.from_result("world", w.validate());
        let live = w.live_arms.unwrap_or(w.num_arms);
        if cfg.pool_size == 0 || cfg.pool_size > live {
            d.push(
                "pool_size",
                format!("must lie in 1..={live}, got {}", cfg.pool_size),
            );
        }
    }
    if matches!(cfg.mode, Mode::Gen | Mode::Live) && cfg.world.is_none() {
        d.push("world", "a world spec is required in this mode");
    }
    if matches!(cfg.mode, Mode::Replay | Mode::Ablate) && cfg.world.is_none() && cfg.log.is_none() {
        d.push("log", "replay needs a log file or a world to generate one");
    }
    if matches!(cfg.mode, Mode::Replay | Mode::Ablate | Mode::Live) && cfg.seeds.is_empty() {
        d.push("seeds", "at least one seed is required");
    }
    if cfg.log.is_none() && cfg.world.is_some() && matches!(cfg.mode, Mode::Replay | Mode::Ablate) {
        d.check(
            cfg.log_events >= cfg.warm.events,
            "log_events",
            format!(
                "must cover the {} warm-up events, got {}",
                cfg.warm.events, cfg.log_events
            ),
        );
    }
    if matches!(cfg.mode, Mode::Live) {
        d.check(cfg.live.pool_size > 0, "live.pool_size", "must be positive");
        if let Some(w) = &cfg.world {
            let live = w.live_arms.unwrap_or(w.num_arms);
            d.check(
                cfg.live.pool_size <= live,
                "live.pool_size",
                format!("must not exceed {live} live arms"),
            );
        }
    }
    let t = &cfg.theorem;
    d.check(
        t.sgd_lr > 0.0 && t.sgd_lr <= 1e-4,
        "theorem.sgd_lr",
        format!("must lie in (0, 1e-4], got {}", t.sgd_lr),
    );
    d.check(t.radius > 0.0, "theorem.radius", "must be positive");
    d.0
}

/// Parses a config, reporting the JSON path of any schema error.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, Diagnostic> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Diagnostic {
            path: if path.is_empty() { ".".into() } else { path },
            message: e.into_inner().to_string(),
        }
    })
}

/// Reads and checks a config file. Errors are I/O only; the list holds
/// schema or cross-field problems.
pub fn validate_file(path: &Path) -> Result<Vec<Diagnostic>> {
    let text = fs::read_to_string(path)?;
    Ok(match parse_config(&text) {
        Ok(cfg) => diagnostics(&cfg),
        Err(d) => vec![d],
    })
}

// ── Ablations ───────────────────────────────────────────────────────────

/// Component ablations around a base AGE configuration: the full TS and
/// UCB variants, uncertainty and direction replaced by noise, FGM instead
/// of PGD, the gate removed, and fixed-threshold gates.
pub fn ablation_suite(base: &PolicyConfig) -> Vec<PolicyConfig> {
    let named = |name: &str, kind: PolicyKind, f: &dyn Fn(&mut PolicyConfig)| {
        let mut p = PolicyConfig {
            name: Some(name.to_string()),
            kind,
            ..base.clone()
        };
        f(&mut p);
        p
    };
    let mut out = vec![
        named("age_ts", PolicyKind::AgeTs, &|_| {}),
        named("age_ts_random_delta", PolicyKind::AgeTs, &|p| {
            p.age.uncertainty_source = UncertaintySource::Gaussian { std: None }
        }),
        named("age_ts_random_direction", PolicyKind::AgeTs, &|p| {
            p.age.direction_source = crate::age::DirectionSource::RandomUnit
        }),
        named("age_ts_fgm", PolicyKind::AgeTs, &|p| p.age.adv.method = AdvMethod::Fgm),
        named("age_ucb", PolicyKind::AgeUcb, &|_| {}),
        named("age_ucb_no_dgu", PolicyKind::AgeUcb, &|p| p.age.dgu_enabled = false),
    ];
    for t in [0.02, 0.01, 0.005] {
        out.push(named(&format!("age_ucb_threshold_{t}"), PolicyKind::AgeUcb, &|p| {
            p.age.dgu_threshold = Some(t)
        }));
    }
    out
}

// ── Running ─────────────────────────────────────────────────────────────

/// Canonical JSON of the config and its SHA-256.
pub fn config_hash(cfg: &ExperimentConfig) -> (String, String) {
    let json = serde_json::to_string(cfg).expect("config serialises");
    let digest = hex(&Sha256::digest(json.as_bytes()));
    (json, digest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub mode: Mode,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    /// SHA-256 of the replayed log file, when one was given.
    pub log_sha256: Option<String>,
    pub files: Vec<String>,
}

/// World for one seed.
pub fn world_for(cfg: &ExperimentConfig, seed: u64) -> Result<Option<World>> {
    let Some(spec) = &cfg.world else {
        return Ok(None);
    };
    let mut spec = spec.clone();
    if cfg.world_per_seed {
        spec.seed = derive_seed(spec.seed, &[seed]);
    }
    World::new(&spec).map(Some)
}

/// Model config with the layout taken from the world when there is one.
pub fn resolved_model(cfg: &ExperimentConfig) -> Result<ModelConfig> {
    let mut m = cfg.model.clone();
    if let Some(w) = &cfg.world {
        m.network.layout = w.layout()?;
    }
    Ok(m)
}

/// Everything a seed's replay jobs share: the log and warm-started models.
pub struct SeedContext {
    pub seed: u64,
    pub events: std::sync::Arc<Vec<LoggedEvent>>,
    pub warm: Vec<AgeModel>,
}

fn log_for_seed(
    cfg: &ExperimentConfig,
    shared: Option<&std::sync::Arc<Vec<LoggedEvent>>>,
    seed: u64,
) -> Result<std::sync::Arc<Vec<LoggedEvent>>> {
    if let Some(events) = shared {
        return Ok(events.clone());
    }
    let world = world_for(cfg, seed)?.ok_or_else(|| AgeError::Config("no world to generate a log".into()))?;
    Ok(std::sync::Arc::new(generate_log(&world, cfg.log_events, cfg.pool_size, seed)?))
}

/// Warm-starts every seed, then replays every (seed, policy) pair. Results
/// are ordered by seed, then policy.
pub fn run_replay_grid(
    cfg: &ExperimentConfig,
    policies: &[PolicyConfig],
    shared_log: Option<Vec<LoggedEvent>>,
) -> Result<Vec<ReplayReport>> {
    let model = resolved_model(cfg)?;
    let shared = shared_log.map(std::sync::Arc::new);
    let max_models = policies.iter().map(PolicyConfig::model_count).max().unwrap_or(1);
    let shallow_hidden = policies.first().map(|p| p.age.dgu_hidden).unwrap_or(16);
    if policies.iter().any(|p| p.age.dgu_hidden != shallow_hidden) {
        return Err(AgeError::Config(
            "all policies in one run must share age.dgu_hidden".into(),
        ));
    }
    let contexts: Vec<SeedContext> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let events = log_for_seed(cfg, shared.as_ref(), seed)?;
            let warm = warm_models(&events, &cfg.warm, &model, shallow_hidden, seed, max_models)?;
            log::info!("seed {seed}: warm start on {} events done", cfg.warm.events);
            Ok(SeedContext { seed, events, warm })
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(&SeedContext, &PolicyConfig)> = contexts
        .iter()
        .flat_map(|c| policies.iter().map(move |p| (c, p)))
        .collect();
    jobs.par_iter()
        .map(|(ctx, p)| {
            let r = replay_policy(
                p,
                &model,
                &ctx.warm,
                &ctx.events,
                cfg.warm.events,
                ctx.seed,
                &cfg.milestones,
            )?;
            log::info!(
                "seed {} {}: {} clicks over {} matched events",
                ctx.seed,
                r.policy,
                r.cumulative_clicks,
                r.events_matched
            );
            Ok(r)
        })
        .collect()
}

/// Warm-starts from a generated log, then runs every policy live.
pub fn run_live_grid(cfg: &ExperimentConfig, policies: &[PolicyConfig]) -> Result<Vec<LiveReport>> {
    let model = resolved_model(cfg)?;
    let max_models = policies.iter().map(PolicyConfig::model_count).max().unwrap_or(1);
    let shallow_hidden = policies.first().map(|p| p.age.dgu_hidden).unwrap_or(16);
    let contexts: Vec<(u64, World, Vec<LoggedEvent>, Vec<AgeModel>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let world = world_for(cfg, seed)?
                .ok_or_else(|| AgeError::Config("live mode needs a world".into()))?;
            let log = generate_log(&world, cfg.warm.events, cfg.live.pool_size, seed)?;
            let warm = warm_models(&log, &cfg.warm, &model, shallow_hidden, seed, max_models)?;
            Ok((seed, world, log, warm))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<_> = contexts
        .iter()
        .flat_map(|c| policies.iter().map(move |p| (c, p)))
        .collect();
    jobs.par_iter()
        .map(|((seed, world, log, warm), p)| {
            live_policy(world, p, &model, warm, log, &cfg.live, *seed)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub networks: usize,
    /// Networks whose cosine had the expected sign and magnitude, for
    /// true CTRs above and below the prediction.
    pub collinear_above: usize,
    pub collinear_below: usize,
    pub min_abs_cosine: f64,
    pub degenerate: usize,
    pub dominance_networks: usize,
    pub dominance_min: f64,
    pub dominance_mean: f64,
    pub passed: bool,
}

/// Collinearity of the expected training step with the adversarial
/// direction, and dominance of that direction over random ones, on random
/// networks.
pub fn theorem_check(t: &TheoremConfig, seed: u64) -> Result<TheoremReport> {
    use rand::Rng;
    let mut above = 0;
    let mut below = 0;
    let mut degenerate = 0;
    let mut min_abs = f64::INFINITY;
    let layout = &t.network.layout;
    let random_input = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut user = Vec::new();
        let mut off = 0u32;
        for &s in &layout.field_sizes {
            user.push(off + rng.random_range(0..s as u32));
            off += s as u32;
        }
        SparseFeatureVector::new(user, rng.random_range(0..layout.num_arms as u32))
    };
    for i in 0..t.networks as u64 {
        let net = Network::new(&t.network, derive_seed(seed, &[0x7e, i]))?;
        let mut rng = rng_for(seed, &[0x7f, i]);
        let x = random_input(&mut rng);
        let f = net.forward(&x, None)?;
        for (target, up) in [((f + 1.0) / 2.0, true), (f / 2.0, false)] {
            let c = expected_update_collinearity(&net, &x, target, t.sgd_lr)?;
            match c.cosine {
                None => degenerate += 1,
                Some(cos) => {
                    min_abs = min_abs.min(cos.abs());
                    let ok = cos.abs() >= t.min_abs_cosine && (cos > 0.0) == up;
                    if ok && up {
                        above += 1;
                    } else if ok {
                        below += 1;
                    }
                }
            }
        }
    }
    let mut dmin = f64::INFINITY;
    let mut dsum = 0.0;
    for i in 0..t.dominance_networks as u64 {
        let net = Network::new(&t.network, derive_seed(seed, &[0x80, i]))?;
        let mut rng = rng_for(seed, &[0x81, i]);
        let x = random_input(&mut rng);
        let frac = direction_dominance(&net, &x, t.radius, t.directions, derive_seed(seed, &[0x82, i]))?
            .unwrap_or(0.0);
        dmin = dmin.min(frac);
        dsum += frac;
    }
    let dominance_mean = if t.dominance_networks > 0 {
        dsum / t.dominance_networks as f64
    } else {
        f64::NAN
    };
    let passed = above == t.networks
        && below == t.networks
        && (t.dominance_networks == 0 || dmin >= t.min_dominance);
    Ok(TheoremReport {
        networks: t.networks,
        collinear_above: above,
        collinear_below: below,
        min_abs_cosine: min_abs,
        degenerate,
        dominance_networks: t.dominance_networks,
        dominance_min: dmin,
        dominance_mean,
        passed,
    })
}

// ── Output ──────────────────────────────────────────────────────────────

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub policy: String,
    /// Seed number, or `mean` / `std` for the summary rows.
    pub seed: String,
    pub clicks: f64,
    pub matched: f64,
    pub ctr: Option<f64>,
    pub pcoc: Option<f64>,
}

/// Per-seed rows followed by mean and sample-std rows for each policy, in
/// first-appearance order of the policies.
pub fn aggregate_rows(reports: &[ReplayReport]) -> Vec<AggregateRow> {
    let mut order: Vec<String> = Vec::new();
    for r in reports {
        if !order.contains(&r.policy) {
            order.push(r.policy.clone());
        }
    }
    let mut rows = Vec::new();
    for name in &order {
        let mine: Vec<&ReplayReport> = reports.iter().filter(|r| &r.policy == name).collect();
        for r in &mine {
            rows.push(AggregateRow {
                policy: name.clone(),
                seed: r.seed.to_string(),
                clicks: r.cumulative_clicks as f64,
                matched: r.events_matched as f64,
                ctr: r.matched_ctr,
                pcoc: r.pcoc,
            });
        }
        rows.extend(summary_rows(
            name,
            &mine.iter().map(|r| r.cumulative_clicks as f64).collect::<Vec<_>>(),
            &mine.iter().map(|r| r.events_matched as f64).collect::<Vec<_>>(),
            &mine.iter().filter_map(|r| r.matched_ctr).collect::<Vec<_>>(),
            &mine.iter().filter_map(|r| r.pcoc).collect::<Vec<_>>(),
        ));
    }
    rows
}

fn summary_rows(name: &str, clicks: &[f64], matched: &[f64], ctr: &[f64], pcoc: &[f64]) -> Vec<AggregateRow> {
    let opt = |v: &[f64]| if v.is_empty() { None } else { Some(mean_std(v)) };
    let (c, m) = (mean_std(clicks), mean_std(matched));
    let (r, p) = (opt(ctr), opt(pcoc));
    vec![
        AggregateRow {
            policy: name.to_string(),
            seed: "mean".into(),
            clicks: c.0,
            matched: m.0,
            ctr: r.map(|x| x.0),
            pcoc: p.map(|x| x.0),
        },
        AggregateRow {
            policy: name.to_string(),
            seed: "std".into(),
            clicks: c.1,
            matched: m.1,
            ctr: r.map(|x| x.1),
            pcoc: p.map(|x| x.1),
        },
    ]
}

/// Live-run rows: `matched` holds the step count.
pub fn live_aggregate_rows(reports: &[LiveReport]) -> Vec<AggregateRow> {
    let as_replay: Vec<ReplayReport> = reports
        .iter()
        .map(|r| ReplayReport {
            policy: r.policy.clone(),
            seed: r.seed,
            events_seen: r.steps,
            events_matched: r.steps,
            cumulative_clicks: r.cumulative_clicks,
            matched_ctr: (r.steps > 0).then(|| r.cumulative_clicks as f64 / r.steps as f64),
            pcoc: r.pcoc,
            milestones: Vec::new(),
            per_arm_curves: Vec::new(),
            state_digest: String::new(),
        })
        .collect();
    aggregate_rows(&as_replay)
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["policy", "seed", "clicks", "matched", "ctr", "pcoc"])
        .map_err(csv_err)?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.policy.clone(),
            r.seed.clone(),
            r.clicks.to_string(),
            r.matched.to_string(),
            num(r.ctr),
            num(r.pcoc),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> AgeError {
    AgeError::Io(std::io::Error::other(e.to_string()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(std::io::Error::from)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

/// File-name-safe version of a policy label.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Executes `cfg` and writes its artifacts. Returns the paths written,
/// relative to the output location.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let problems = diagnostics(cfg);
    if !problems.is_empty() {
        let text: Vec<String> = problems.iter().map(ToString::to_string).collect();
        return Err(AgeError::Config(text.join("; ")));
    }
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| AgeError::Config("out: an output location is required".into()))?;
    match cfg.mode {
        Mode::Gen => {
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let world = world_for(cfg, seed)?.expect("validated");
            let events = generate_log(&world, cfg.log_events, cfg.pool_size, seed)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            crate::replay::write_log(&out, &events)?;
            Ok(vec![out.display().to_string()])
        }
        Mode::TheoremCheck => {
            fs::create_dir_all(&out)?;
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let report = theorem_check(&cfg.theorem, seed)?;
            write_json(&out.join("theorem.json"), &report)?;
            let files = vec!["theorem.json".to_string()];
            write_manifest(cfg, &out, None, files.clone())?;
            if !report.passed {
                return Err(AgeError::Numeric(format!(
                    "theorem check failed: {}/{} above, {}/{} below, dominance min {}",
                    report.collinear_above,
                    report.networks,
                    report.collinear_below,
                    report.networks,
                    report.dominance_min
                )));
            }
            Ok(files)
        }
        Mode::Replay | Mode::Ablate => {
            fs::create_dir_all(out.join("reports"))?;
            let policies = if cfg.mode == Mode::Ablate && cfg.policies.is_empty() {
                ablation_suite(&PolicyConfig::default())
            } else if cfg.mode == Mode::Ablate && cfg.policies.len() == 1 {
                ablation_suite(&cfg.policies[0])
            } else {
                cfg.policies.clone()
            };
            let (log, log_sha) = match &cfg.log {
                Some(p) => (Some(read_log(p)?), Some(file_sha256(p)?)),
                None => (None, None),
            };
            let reports = run_replay_grid(cfg, &policies, log)?;
            let mut files = Vec::new();
            for r in &reports {
                let name = format!("reports/{}_seed{}.json", slug(&r.policy), r.seed);
                write_json(&out.join(&name), r)?;
                files.push(name);
            }
            write_aggregate_csv(&out.join("aggregate.csv"), &aggregate_rows(&reports))?;
            files.push("aggregate.csv".into());
            write_manifest(cfg, &out, log_sha, files.clone())?;
            Ok(files)
        }
        Mode::Live => {
            fs::create_dir_all(out.join("reports"))?;
            let reports = run_live_grid(cfg, &cfg.policies)?;
            let mut files = Vec::new();
            for r in &reports {
                let name = format!("reports/{}_seed{}.json", slug(&r.policy), r.seed);
                write_json(&out.join(&name), r)?;
                files.push(name);
            }
            write_aggregate_csv(&out.join("aggregate.csv"), &live_aggregate_rows(&reports))?;
            files.push("aggregate.csv".into());
            write_manifest(cfg, &out, None, files.clone())?;
            Ok(files)
        }
    }
}

fn write_manifest(
    cfg: &ExperimentConfig,
    out: &Path,
    log_sha256: Option<String>,
    mut files: Vec<String>,
) -> Result<()> {
    let (_, digest) = config_hash(cfg);
    files.push("manifest.json".into());
    let m = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: cfg.mode,
        config: cfg.clone(),
        config_sha256: digest,
        seeds: cfg.seeds.clone(),
        log_sha256,
        files,
    };
    write_json(&out.join("manifest.json"), &m)
}
