//! Prediction-uncertainty estimators.
//!
//! MC-dropout UCB is the root-mean-square deviation of `N` dropout
//! predictions from the plain prediction (with an `N - 1` denominator);
//! MC-dropout TS is the signed difference for one sampled mask. Ensemble and
//! gradient-norm estimators exist for the baseline policies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::nn::{norm2, sigmoid, DropoutMask, Network, SparseFeatureVector, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyMethod {
    McUcb,
    McTs,
    EnsembleUcb,
    EnsembleTs,
    GradNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub method: UncertaintyMethod,
    /// Number of dropout passes for the UCB estimator.
    pub n_samples: usize,
    /// Dropout probability per hidden unit; 0 means keep-all masks.
    pub dropout_rate: f64,
    /// Scale applied to gradient norms. `None` calibrates it after warm-up
    /// so that median gradient-norm uncertainty equals median MC-UCB
    /// uncertainty.
    pub grad_scale: Option<f64>,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            method: UncertaintyMethod::McTs,
            n_samples: 20,
            dropout_rate: 0.01,
            grad_scale: None,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return domain(format!(
                "dropout_rate must lie in [0,1), got {}",
                self.dropout_rate
            ));
        }
        if matches!(self.method, UncertaintyMethod::McUcb) && self.n_samples < 2 {
            return domain(format!(
                "n_samples must be at least 2 for variance estimates, got {}",
                self.n_samples
            ));
        }
        if let Some(g) = self.grad_scale {
            if !(g >= 0.0 && g.is_finite()) {
                return domain(format!("grad_scale must be finite and >= 0, got {g}"));
            }
        }
        Ok(())
    }
}

/// UCB uncertainty from explicit dropout predictions and the plain prediction.
pub fn ucb_from_predictions(dropout_preds: &[f64], base: f64) -> Result<f64> {
    let n = dropout_preds.len();
    if n < 2 {
        return domain(format!("need at least 2 dropout predictions, got {n}"));
    }
    let denom = (n - 1) as f64;
    let sum: f64 = dropout_preds
        .iter()
        .map(|&p| (p - base) * (p - base) / denom)
        .sum();
    Ok(sum.sqrt())
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_std(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return domain(format!("need at least 2 values, got {n}"));
    }
    let mean = shifted_mean(values);
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Mean taken about the first value, so equal inputs give that value back
/// exactly.
fn shifted_mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

pub(crate) fn mc_ucb_dense(
    net: &Network,
    h: &[f64],
    base: f64,
    cfg: &UncertaintyConfig,
    rng: &mut impl Rng,
    trace: &mut Trace,
) -> Result<f64> {
    if cfg.n_samples < 2 {
        return domain(format!(
            "n_samples must be at least 2, got {}",
            cfg.n_samples
        ));
    }
    if cfg.dropout_rate == 0.0 {
        return Ok(0.0);
    }
    let widths = net.hidden_widths();
    let mut preds = Vec::with_capacity(cfg.n_samples);
    // at small rates most masks drop nothing; they are all the same mask
    let mut none_dropped = None;
    for _ in 0..cfg.n_samples {
        let mask = DropoutMask::sample(cfg.dropout_rate, &widths, rng)?;
        let p = match (mask.dropped(), none_dropped) {
            (0, Some(p)) => p,
            (0, None) => {
                let p = net.predict_traced(h, Some(&mask), trace)?;
                none_dropped = Some(p);
                p
            }
            _ => net.predict_traced(h, Some(&mask), trace)?,
        };
        preds.push(p);
    }
    ucb_from_predictions(&preds, base)
}

pub(crate) fn mc_ts_dense(
    net: &Network,
    h: &[f64],
    base: f64,
    cfg: &UncertaintyConfig,
    rng: &mut impl Rng,
    trace: &mut Trace,
) -> Result<f64> {
    if cfg.dropout_rate == 0.0 {
        return Ok(0.0);
    }
    let mask = DropoutMask::sample(cfg.dropout_rate, &net.hidden_widths(), rng)?;
    Ok(net.predict_traced(h, Some(&mask), trace)? - base)
}

/// MC-dropout UCB uncertainty, always non-negative.
pub fn mc_ucb_uncertainty(
    net: &Network,
    x: &SparseFeatureVector,
    cfg: &UncertaintyConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let h = net.embed(x)?;
    let mut trace = net.new_trace();
    let base = net.predict_traced(&h, None, &mut trace)?;
    mc_ucb_dense(net, &h, base, cfg, rng, &mut trace)
}

/// MC-dropout TS uncertainty: one dropout prediction minus the plain one.
pub fn mc_ts_uncertainty(
    net: &Network,
    x: &SparseFeatureVector,
    cfg: &UncertaintyConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    let h = net.embed(x)?;
    let mut trace = net.new_trace();
    let base = net.predict_traced(&h, None, &mut trace)?;
    mc_ts_dense(net, &h, base, cfg, rng, &mut trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Ucb,
    Ts,
}

/// Uncertainty from a set of independently initialised models. UCB gives
/// the sample standard deviation of member predictions; TS gives one
/// uniformly chosen member's prediction minus the ensemble mean.
pub fn ensemble_uncertainty(
    models: &[Network],
    x: &SparseFeatureVector,
    mode: EnsembleMode,
    rng: &mut impl Rng,
) -> Result<f64> {
    if models.len() < 2 {
        return domain(format!(
            "ensemble needs at least 2 models, got {}",
            models.len()
        ));
    }
    let preds = models
        .iter()
        .map(|m| m.forward(x, None))
        .collect::<Result<Vec<_>>>()?;
    ensemble_from_predictions(&preds, mode, rng)
}

pub fn ensemble_from_predictions(
    preds: &[f64],
    mode: EnsembleMode,
    rng: &mut impl Rng,
) -> Result<f64> {
    match mode {
        EnsembleMode::Ucb => sample_std(preds),
        EnsembleMode::Ts => {
            if preds.len() < 2 {
                return domain("ensemble needs at least 2 models");
            }
            let mean = shifted_mean(preds);
            let pick = rng.random_range(0..preds.len());
            Ok(preds[pick] - mean)
        }
    }
}

pub(crate) fn grad_norm_dense(net: &Network, h: &[f64], gamma: f64, trace: &mut Trace) -> Result<(f64, f64)> {
    let p = net.predict_traced(h, None, trace)?;
    let logit_p = {
        // recover the unclamped sigmoid derivative from the logit path
        let out = net.mlp.output_layer();
        let a = trace.last_hidden(h);
        sigmoid(out.bias[0] + crate::nn::dot(&out.weights, a))
    };
    let slope = logit_p * (1.0 - logit_p);
    Ok((p, gamma * slope * norm2(trace.last_hidden(h))))
}

/// `gamma * || d f / d W_out ||_2`, the gradient taken with respect to the
/// output-layer weights only.
pub fn grad_norm_uncertainty(net: &Network, x: &SparseFeatureVector, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return domain(format!("grad scale must be finite and >= 0, got {gamma}"));
    }
    let h = net.embed(x)?;
    let mut trace = net.new_trace();
    Ok(grad_norm_dense(net, &h, gamma, &mut trace)?.1)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn ucb_probe(cfg: &UncertaintyConfig) -> UncertaintyConfig {
    UncertaintyConfig {
        method: UncertaintyMethod::McUcb,
        n_samples: cfg.n_samples.max(2),
        dropout_rate: if cfg.dropout_rate > 0.0 { cfg.dropout_rate } else { 0.01 },
        grad_scale: None,
    }
}

/// Median MC-dropout UCB estimate over `samples`; 0 for an empty sample.
pub fn median_mc_ucb(
    net: &Network,
    samples: &[SparseFeatureVector],
    cfg: &UncertaintyConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let probe = ucb_probe(cfg);
    let mut ucb = samples
        .iter()
        .map(|x| mc_ucb_uncertainty(net, x, &probe, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(median(&mut ucb))
}

/// Picks the gradient-norm scale so that the median gradient-norm
/// uncertainty over `samples` matches the median MC-UCB uncertainty.
/// Falls back to 1 when either median is zero.
pub fn calibrate_grad_scale(
    net: &Network,
    samples: &[SparseFeatureVector],
    cfg: &UncertaintyConfig,
    rng: &mut impl Rng,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(1.0);
    }
    let mu = median_mc_ucb(net, samples, cfg, rng)?;
    let mut raw = samples
        .iter()
        .map(|x| grad_norm_uncertainty(net, x, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let mr = median(&mut raw);
    if mu > 0.0 && mr > 0.0 {
        Ok(mu / mr)
    } else {
        Ok(1.0)
    }
}
