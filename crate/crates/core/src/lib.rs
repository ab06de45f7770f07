//! Adversarial-gradient driven exploration (AGE) for neural click-through
//! rate bandits.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: embedding + MLP CTR network with analytic gradients and Adam.
//! - [`uncertainty`]: MC-dropout, ensemble and gradient-norm uncertainty.
//! - [`adversarial`]: normalised input-gradient directions (FGM / PGD).
//! - [`age`]: the exploration-adjusted scorer, gating unit and joint training.
//! - [`baselines`]: vanilla, random, epsilon-greedy, ensemble and gradient policies.
//! - [`policy`]: a uniform runtime wrapper over every policy kind.
//! - [`replay`]: logged-event format and the exact-match replay evaluator.
//! - [`synth`]: a synthetic contextual bandit world with known CTRs.
//! - [`experiment`]: config-driven runner behind the `age` binary.

pub mod adversarial;
pub mod age;
pub mod baselines;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod synth;
pub mod uncertainty;

pub use error::{AgeError, Result};
