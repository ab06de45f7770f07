use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use age_core::experiment::{
    execute, parse_config, validate_file, ExperimentConfig, Mode,
};
use age_core::policy::PolicyConfig;
use age_core::replay::{import_r6b, write_log};
use age_core::synth::WorldSpec;
use age_core::AgeError;

#[derive(Parser)]
#[command(name = "age", version, about = "Adversarial-gradient exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (JSON). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds (0..N) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (or file for `gen`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a logged stream from a synthetic world.
    Gen {
        #[command(flatten)]
        common: Common,
        /// World spec (JSON).
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        events: Option<usize>,
        #[arg(long)]
        pool_size: Option<usize>,
    },
    /// Replay policies over a logged stream.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: Option<PathBuf>,
        /// JSON array of policy configs.
        #[arg(long)]
        policies: Option<PathBuf>,
        /// World spec; supplies the feature layout or generates the log.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Warm-up events taken from the head of the log.
        #[arg(long)]
        warm_n: Option<usize>,
    },
    /// Run policies live against a synthetic world.
    Live {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policies: Option<PathBuf>,
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Replay the component ablations of an AGE policy.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Check the training-step collinearity and direction dominance on
    /// random networks.
    TheoremCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Validate a config without running it.
    Validate {
        config: PathBuf,
    },
    /// Run whatever mode a config names.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Convert a Yahoo! R6B text file into the JSON-lines log format.
    ImportR6b {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure split by exit code: 1 for configuration, 2 for runtime.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<AgeError> for Failure {
    fn from(e: AgeError) -> Self {
        match e {
            AgeError::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        Failure::Config(format!("{}: {}: {}", path.display(), e.path(), e.inner()))
    })
}

fn load_config(common: &Common, mode: Option<Mode>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            parse_config(&text).map_err(|d| Failure::Config(d.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = &common.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, Failure> {
    let bad = |_| Failure::Config(format!("seeds: cannot parse {s:?}"));
    if s.contains(',') {
        s.split(',').map(|t| t.trim().parse::<u64>().map_err(bad)).collect()
    } else {
        let n = s.trim().parse::<u64>().map_err(bad)?;
        Ok((0..n).collect())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, cfg) = match cli.command {
        Command::Validate { config } => {
            let diags = validate_file(&config).map_err(|e| Failure::Config(e.to_string()))?;
            if diags.is_empty() {
                println!("ok");
                return Ok(());
            }
            for d in &diags {
                println!("{d}");
            }
            return Err(Failure::Config(format!("{} problem(s)", diags.len())));
        }
        Command::ImportR6b { input, out } => {
            let file = std::fs::File::open(&input)
                .map_err(|e| Failure::Runtime(format!("{}: {e}", input.display())))?;
            let (events, arms) = import_r6b(std::io::BufReader::new(file))?;
            write_log(&out, &events)?;
            let names = out.with_extension("arms.json");
            std::fs::write(&names, serde_json::to_string_pretty(&arms.names).expect("strings"))
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            eprintln!("{} events, {} arms", events.len(), arms.names.len());
            return Ok(());
        }
        Command::Gen {
            common,
            world,
            events,
            pool_size,
        } => {
            let mut cfg = load_config(&common, Some(Mode::Gen))?;
            if let Some(w) = world {
                cfg.world = Some(read_json::<WorldSpec>(&w)?);
            }
            if let Some(n) = events {
                cfg.log_events = n;
            }
            if let Some(p) = pool_size {
                cfg.pool_size = p;
            }
            (common, cfg)
        }
        Command::Replay {
            common,
            log,
            policies,
            world,
            warm_n,
        } => {
            let mut cfg = load_config(&common, Some(Mode::Replay))?;
            if let Some(l) = log {
                cfg.log = Some(l);
            }
            if let Some(p) = policies {
                cfg.policies = read_json::<Vec<PolicyConfig>>(&p)?;
            }
            if let Some(w) = world {
                cfg.world = Some(read_json::<WorldSpec>(&w)?);
            }
            if let Some(n) = warm_n {
                cfg.warm.events = n;
            }
            (common, cfg)
        }
        Command::Live {
            common,
            policies,
            world,
            steps,
        } => {
            let mut cfg = load_config(&common, Some(Mode::Live))?;
            if let Some(p) = policies {
                cfg.policies = read_json::<Vec<PolicyConfig>>(&p)?;
            }
            if let Some(w) = world {
                cfg.world = Some(read_json::<WorldSpec>(&w)?);
            }
            if let Some(s) = steps {
                cfg.live.steps = s;
            }
            (common, cfg)
        }
        Command::Ablate { common, log, world } => {
            let mut cfg = load_config(&common, Some(Mode::Ablate))?;
            if let Some(l) = log {
                cfg.log = Some(l);
            }
            if let Some(w) = world {
                cfg.world = Some(read_json::<WorldSpec>(&w)?);
            }
            (common, cfg)
        }
        Command::TheoremCheck { common } => {
            let cfg = load_config(&common, Some(Mode::TheoremCheck))?;
            (common, cfg)
        }
        Command::Run { common } => {
            if common.config.is_none() {
                return Err(Failure::Config("run needs --config".into()));
            }
            let cfg = load_config(&common, None)?;
            (common, cfg)
        }
    };
    if cfg.out.is_none() {
        return Err(Failure::Config("out: pass --out or set it in the config".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let files = pool.install(|| execute(&cfg))?;
    for f in files {
        println!("{f}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AGE_LOG_LEVEL", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
