//! Normalised adversarial direction on the input embedding.
//!
//! FGM takes one normalised gradient. PGD iterates
//! `g_t = normalize(g_{t-1} + grad f(h + g_{t-1}))` from `g_0 = 0` and
//! returns `g_T`. Gradients are always taken without dropout.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::nn::{norm2, Network, SparseFeatureVector, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvMethod {
    Fgm,
    Pgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvConfig {
    pub method: AdvMethod,
    /// PGD iterations.
    pub steps: usize,
    /// Gradient norms at or below this are treated as zero.
    pub zero_grad_epsilon: f64,
    /// Restrict the direction to the arm-embedding coordinates of `h`.
    pub item_only: bool,
}

impl Default for AdvConfig {
    fn default() -> Self {
        Self {
            method: AdvMethod::Pgd,
            steps: 4,
            zero_grad_epsilon: 1e-12,
            item_only: false,
        }
    }
}

impl AdvConfig {
    pub fn fgm() -> Self {
        Self {
            method: AdvMethod::Fgm,
            ..Self::default()
        }
    }

    pub fn pgd(steps: usize) -> Self {
        Self {
            method: AdvMethod::Pgd,
            steps,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return domain(format!("pgd steps must be >= 1, got {}", self.steps));
        }
        if !(self.zero_grad_epsilon >= 0.0 && self.zero_grad_epsilon.is_finite()) {
            return domain("zero_grad_epsilon must be finite and >= 0");
        }
        Ok(())
    }
}

/// Unit direction, or the zero vector with `degenerate` set when the
/// gradient vanished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub vector: Vec<f64>,
    pub degenerate: bool,
}

impl Direction {
    fn zero(width: usize) -> Self {
        Self {
            vector: vec![0.0; width],
            degenerate: true,
        }
    }
}

/// Scratch buffers reused across candidates.
pub(crate) struct DirectionWork {
    pub trace: Trace,
    grad: Vec<f64>,
    point: Vec<f64>,
}

impl DirectionWork {
    pub fn new(net: &Network) -> Self {
        Self {
            trace: net.new_trace(),
            grad: vec![0.0; net.input_width()],
            point: vec![0.0; net.input_width()],
        }
    }
}

fn restrict(net: &Network, cfg: &AdvConfig, grad: &mut [f64]) {
    if cfg.item_only {
        let item = net.item_range();
        for (i, g) in grad.iter_mut().enumerate() {
            if !item.contains(&i) {
                *g = 0.0;
            }
        }
    }
}

pub(crate) fn direction_dense(
    net: &Network,
    h: &[f64],
    cfg: &AdvConfig,
    work: &mut DirectionWork,
) -> Result<Direction> {
    let steps = match cfg.method {
        AdvMethod::Fgm => 1,
        AdvMethod::Pgd => {
            if cfg.steps < 1 {
                return domain(format!("pgd steps must be >= 1, got {}", cfg.steps));
            }
            cfg.steps
        }
    };
    let width = h.len();
    let mut g = vec![0.0; width];
    for _ in 0..steps {
        for ((p, &hv), &gv) in work.point.iter_mut().zip(h).zip(&g) {
            *p = hv + gv;
        }
        net.value_and_input_grad(&work.point, None, &mut work.trace, &mut work.grad)?;
        restrict(net, cfg, &mut work.grad);
        for (a, &d) in g.iter_mut().zip(&work.grad) {
            *a += d;
        }
        let n = norm2(&g);
        if n <= cfg.zero_grad_epsilon {
            return Ok(Direction::zero(width));
        }
        for a in &mut g {
            *a /= n;
        }
    }
    Ok(Direction {
        vector: g,
        degenerate: false,
    })
}

/// Single-step normalised gradient direction.
pub fn fgm_direction(net: &Network, x: &SparseFeatureVector, cfg: &AdvConfig) -> Result<Direction> {
    let h = net.embed(x)?;
    let cfg = AdvConfig {
        method: AdvMethod::Fgm,
        ..*cfg
    };
    direction_dense(net, &h, &cfg, &mut DirectionWork::new(net))
}

/// Iterated normalised gradient direction over `cfg.steps` steps.
pub fn pgd_direction(net: &Network, x: &SparseFeatureVector, cfg: &AdvConfig) -> Result<Direction> {
    let h = net.embed(x)?;
    let cfg = AdvConfig {
        method: AdvMethod::Pgd,
        ..*cfg
    };
    direction_dense(net, &h, &cfg, &mut DirectionWork::new(net))
}

/// Dispatches on `cfg.method`.
pub fn adversarial_direction(
    net: &Network,
    x: &SparseFeatureVector,
    cfg: &AdvConfig,
) -> Result<Direction> {
    let h = net.embed(x)?;
    direction_dense(net, &h, cfg, &mut DirectionWork::new(net))
}
