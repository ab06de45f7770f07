//! Minimal differentiable CTR network.
//!
//! The input embedding `h` is the concatenation of one pooled embedding per
//! user feature field followed by the embedding of the candidate arm:
//!
//! ```text
//! h = [ sum(E[i] for i in field_0) | ... | sum(E[i] for i in field_{F-1}) | E[arm] ]
//! ```
//!
//! The MLP applies rectifier hidden layers and a scalar sigmoid output.
//! Dropout masks act on hidden activations only. Everything is `f64`.

use std::io::{Read, Write};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, AgeError, Result};

/// Output probabilities are kept this far away from 0 and 1 so that the
/// forward pass never returns a boundary value, even for saturated logits.
pub const PROB_FLOOR: f64 = 1e-12;

/// Clamp applied to predictions before taking logs in the loss.
pub const LOSS_CLAMP: f64 = 1e-7;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

// ── Feature layout ──────────────────────────────────────────────────────

/// Partition of the user feature space into contiguous fields, plus the
/// number of arms. Feature index `i` belongs to the field whose range
/// contains it; arm ids index a separate block of embedding rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldLayout {
    pub field_sizes: Vec<usize>,
    pub num_arms: usize,
}

impl FieldLayout {
    pub fn new(field_sizes: Vec<usize>, num_arms: usize) -> Result<Self> {
        if num_arms == 0 {
            return domain("layout needs at least one arm");
        }
        if field_sizes.iter().any(|&s| s == 0) {
            return domain("field sizes must be positive");
        }
        Ok(Self {
            field_sizes,
            num_arms,
        })
    }

    pub fn num_fields(&self) -> usize {
        self.field_sizes.len()
    }

    pub fn feature_space_size(&self) -> usize {
        self.field_sizes.iter().sum()
    }

    /// Width of the concatenated input embedding for embedding width `dim`.
    pub fn input_width(&self, dim: usize) -> usize {
        (self.num_fields() + 1) * dim
    }

    /// Field that owns feature index `index`.
    pub fn field_of(&self, index: usize) -> Option<usize> {
        let mut start = 0;
        for (f, &size) in self.field_sizes.iter().enumerate() {
            if index < start + size {
                return Some(f);
            }
            start += size;
        }
        None
    }
}

/// One multi-hot user feature vector paired with a candidate arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseFeatureVector {
    pub active_indices: Vec<u32>,
    pub arm_id: u32,
}

impl SparseFeatureVector {
    pub fn new(active_indices: Vec<u32>, arm_id: u32) -> Self {
        Self {
            active_indices,
            arm_id,
        }
    }

    pub fn validate(&self, layout: &FieldLayout) -> Result<()> {
        let space = layout.feature_space_size();
        for pair in self.active_indices.windows(2) {
            if pair[0] >= pair[1] {
                return domain(format!(
                    "feature indices must be strictly increasing, saw {} then {}",
                    pair[0], pair[1]
                ));
            }
        }
        if let Some(&last) = self.active_indices.last() {
            if last as usize >= space {
                return domain(format!(
                    "feature index {last} outside feature space of size {space}"
                ));
            }
        }
        if self.arm_id as usize >= layout.num_arms {
            return domain(format!(
                "arm id {} outside arm space of size {}",
                self.arm_id, layout.num_arms
            ));
        }
        Ok(())
    }
}

// ── Parameters ──────────────────────────────────────────────────────────

/// One row per feature index followed by one row per arm id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            rows,
            data: vec![0.0; rows * dim],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }
}

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn random(inputs: usize, outputs: usize, std: f64, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let weights = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.bias[o] + dot(row, input);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Rectifier MLP ending in a single logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// He-initialised hidden layers, Xavier-scaled output layer, zero biases.
    pub fn random(input: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = input;
        for &width in hidden {
            layers.push(Dense::random(fan_in, width, (2.0 / fan_in as f64).sqrt(), rng));
            fan_in = width;
        }
        layers.push(Dense::random(fan_in, 1, (1.0 / fan_in as f64).sqrt(), rng));
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .collect()
    }

    pub fn output_layer(&self) -> &Dense {
        self.layers.last().expect("mlp has an output layer")
    }

    pub fn output_layer_mut(&mut self) -> &mut Dense {
        self.layers.last_mut().expect("mlp has an output layer")
    }

    fn check_shapes(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(AgeError::Contract("mlp has no layers".into()));
        };
        if last.outputs != 1 {
            return Err(AgeError::Contract("mlp must end in one output".into()));
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(AgeError::Contract("dense layer buffer size mismatch".into()));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(AgeError::Contract(format!(
                    "layer shapes do not chain: {} -> {}",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        Ok(())
    }

    fn check_mask(&self, mask: Option<&DropoutMask>) -> Result<()> {
        if let Some(m) = mask {
            let widths = self.hidden_widths();
            if m.layers.len() != widths.len()
                || m.layers.iter().zip(&widths).any(|(l, &w)| l.len() != w)
            {
                return Err(AgeError::Contract(format!(
                    "dropout mask shape does not match hidden widths {widths:?}"
                )));
            }
        }
        Ok(())
    }

    /// Runs the network, recording pre-activations and (masked) activations
    /// in `trace`. Returns the logit.
    pub fn forward_traced(
        &self,
        input: &[f64],
        mask: Option<&DropoutMask>,
        trace: &mut Trace,
    ) -> f64 {
        let hidden = self.layers.len() - 1;
        for l in 0..hidden {
            let (done, rest) = trace.acts.split_at_mut(l);
            let prev: &[f64] = if l == 0 { input } else { &done[l - 1] };
            let pre = &mut trace.pre[l];
            self.layers[l].apply(prev, pre);
            let act = &mut rest[0];
            match mask {
                Some(m) => {
                    for ((a, &z), &k) in act.iter_mut().zip(pre.iter()).zip(&m.layers[l]) {
                        *a = if z > 0.0 { z * k } else { 0.0 };
                    }
                }
                None => {
                    for (a, &z) in act.iter_mut().zip(pre.iter()) {
                        *a = z.max(0.0);
                    }
                }
            }
        }
        let last_in: &[f64] = if hidden == 0 { input } else { &trace.acts[hidden - 1] };
        let out = &self.layers[hidden];
        out.bias[0] + dot(&out.weights, last_in)
    }

    /// Reverse pass from `dlogit`. Parameter gradients are accumulated into
    /// `param_grads` when given; the input gradient is written to
    /// `input_grad` when given.
    pub fn backward(
        &self,
        input: &[f64],
        trace: &mut Trace,
        mask: Option<&DropoutMask>,
        dlogit: f64,
        mut param_grads: Option<&mut [Dense]>,
        input_grad: Option<&mut [f64]>,
    ) {
        let n = self.layers.len();
        // delta buffers are reused from the trace
        trace.delta[n - 1].clear();
        trace.delta[n - 1].push(dlogit);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let prev_act: &[f64] = if l == 0 { input } else { &trace.acts[l - 1] };
            if let Some(grads) = param_grads.as_deref_mut() {
                let g = &mut grads[l];
                for o in 0..layer.outputs {
                    let d = trace.delta[l][o];
                    g.bias[o] += d;
                    if d != 0.0 {
                        let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (w, &a) in row.iter_mut().zip(prev_act) {
                            *w += d * a;
                        }
                    }
                }
            }
            if l == 0 && input_grad.is_none() {
                break;
            }
            let (lower, upper) = trace.delta.split_at_mut(l);
            let delta = &upper[0];
            let target: &mut Vec<f64> = if l == 0 {
                &mut trace.scratch
            } else {
                &mut lower[l - 1]
            };
            target.clear();
            target.resize(layer.inputs, 0.0);
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (t, &w) in target.iter_mut().zip(row) {
                    *t += d * w;
                }
            }
            if l > 0 {
                let pre = &trace.pre[l - 1];
                match mask {
                    Some(m) => {
                        for ((t, &z), &k) in target.iter_mut().zip(pre).zip(&m.layers[l - 1]) {
                            *t = if z > 0.0 { *t * k } else { 0.0 };
                        }
                    }
                    None => {
                        for (t, &z) in target.iter_mut().zip(pre) {
                            if z <= 0.0 {
                                *t = 0.0;
                            }
                        }
                    }
                }
            }
        }
        if let Some(out) = input_grad {
            out.copy_from_slice(&trace.scratch);
        }
    }

    pub fn zero_grads(&self) -> Vec<Dense> {
        self.layers
            .iter()
            .map(|l| Dense::zeros(l.inputs, l.outputs))
            .collect()
    }

    /// Plain (mask-free) probability for an explicit input.
    pub fn predict(&self, input: &[f64], trace: &mut Trace) -> Result<f64> {
        let logit = self.forward_traced(input, None, trace);
        if !logit.is_finite() {
            return Err(AgeError::Numeric(format!("non-finite logit {logit}")));
        }
        Ok(clamp_prob(sigmoid(logit)))
    }

    /// Clamped cross-entropy and parameter gradients for one example. The
    /// gradient with respect to `input` is written to `input_grad` if given.
    pub fn loss_and_grads(
        &self,
        input: &[f64],
        label: u8,
        mask: Option<&DropoutMask>,
        input_grad: Option<&mut [f64]>,
    ) -> Result<(f64, Vec<Dense>)> {
        if label > 1 {
            return domain(format!("label must be 0 or 1, got {label}"));
        }
        self.check_mask(mask)?;
        let mut trace = Trace::new(self);
        let logit = self.forward_traced(input, mask, &mut trace);
        let (loss, dlogit) = bce(logit, label)?;
        let mut grads = self.zero_grads();
        self.backward(input, &mut trace, mask, dlogit, Some(&mut grads), input_grad);
        Ok((loss, grads))
    }

    pub fn apply_adam(&mut self, grads: &[Dense], state: &mut AdamState) -> Result<()> {
        let g: Vec<&[f64]> = grads
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect();
        let mut p: Vec<&mut [f64]> = self
            .layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect();
        adam_step(&mut p, &g, state)
    }
}

/// Clamped binary cross-entropy of `sigmoid(logit)` and its derivative with
/// respect to the logit (zero where the clamp binds).
pub(crate) fn bce(logit: f64, label: u8) -> Result<(f64, f64)> {
    if !logit.is_finite() {
        return Err(AgeError::Numeric(format!("non-finite logit {logit}")));
    }
    let p = sigmoid(logit);
    let y = f64::from(label);
    let pc = p.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
    let loss = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let dlogit = if p > LOSS_CLAMP && p < 1.0 - LOSS_CLAMP {
        p - y
    } else {
        0.0
    };
    Ok((loss, dlogit))
}

/// Reusable activation buffers for one MLP.
#[derive(Debug, Clone)]
pub struct Trace {
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    scratch: Vec<f64>,
}

impl Trace {
    pub fn new(mlp: &Mlp) -> Self {
        let widths = mlp.hidden_widths();
        Self {
            pre: widths.iter().map(|&w| vec![0.0; w]).collect(),
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            delta: mlp.layers.iter().map(|l| Vec::with_capacity(l.outputs)).collect(),
            scratch: Vec::with_capacity(mlp.input_width()),
        }
    }

    /// Activations feeding the output layer, i.e. the last hidden layer
    /// (or the raw input when the MLP has no hidden layer).
    pub fn last_hidden<'a>(&'a self, input: &'a [f64]) -> &'a [f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(input)
    }
}

// ── Dropout ─────────────────────────────────────────────────────────────

/// Inverted-dropout mask over hidden activations. Entries are either 0 or
/// `1 / keep_rate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutMask {
    pub keep_rate: f64,
    pub layers: Vec<Vec<f64>>,
}

impl DropoutMask {
    pub fn keep_all(widths: &[usize]) -> Self {
        Self {
            keep_rate: 1.0,
            layers: widths.iter().map(|&w| vec![1.0; w]).collect(),
        }
    }

    /// Drops each hidden unit independently with probability `rate`.
    pub fn sample(rate: f64, widths: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return domain(format!("dropout rate must lie in (0,1), got {rate}"));
        }
        let keep_rate = 1.0 - rate;
        let scale = 1.0 / keep_rate;
        let layers = widths
            .iter()
            .map(|&w| {
                (0..w)
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
                    .collect()
            })
            .collect();
        Ok(Self { keep_rate, layers })
    }

    pub fn dropped(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.iter())
            .filter(|&&v| v == 0.0)
            .count()
    }
}

/// Seeded convenience wrapper around [`DropoutMask::sample`].
pub fn sample_mask(rate: f64, widths: &[usize], seed: u64) -> Result<DropoutMask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DropoutMask::sample(rate, widths, &mut rng)
}

// ── Network ─────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    pub layout: FieldLayout,
    pub embed_dim: usize,
    pub hidden: Vec<usize>,
    pub embedding_init_std: f64,
    /// Initial output bias; a negative value starts predictions near a
    /// realistic CTR instead of 0.5.
    pub output_bias: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            layout: FieldLayout {
                field_sizes: vec![136],
                num_arms: 1,
            },
            embed_dim: 8,
            hidden: vec![256, 64],
            embedding_init_std: 0.1,
            output_bias: 0.0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return domain("embed_dim must be positive");
        }
        if self.hidden.iter().any(|&w| w == 0) {
            return domain("hidden widths must be positive");
        }
        if self.layout.num_arms == 0 {
            return domain("layout needs at least one arm");
        }
        if !(self.embedding_init_std >= 0.0 && self.embedding_init_std.is_finite()) {
            return domain("embedding_init_std must be finite and non-negative");
        }
        Ok(())
    }
}

/// Embedding table plus main MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layout: FieldLayout,
    pub embedding: EmbeddingTable,
    pub mlp: Mlp,
}

/// Gradients shaped like a [`Network`]; the embedding part is dense.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub embedding: Vec<f64>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2 + 1);
        for l in &self.layers {
            out.push(l.weights.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.embedding.as_slice());
        out
    }
}

impl Network {
    pub fn new(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = spec.layout.feature_space_size() + spec.layout.num_arms;
        let mut embedding = EmbeddingTable::zeros(rows, spec.embed_dim);
        if spec.embedding_init_std > 0.0 {
            let normal = Normal::new(0.0, spec.embedding_init_std).expect("checked std");
            for v in &mut embedding.data {
                *v = normal.sample(&mut rng);
            }
        }
        let mut mlp = Mlp::random(spec.layout.input_width(spec.embed_dim), &spec.hidden, &mut rng);
        mlp.output_layer_mut().bias[0] = spec.output_bias;
        Ok(Self {
            layout: spec.layout.clone(),
            embedding,
            mlp,
        })
    }

    /// Assembles a network from explicit parts, checking every shape.
    pub fn from_parts(layout: FieldLayout, embedding: EmbeddingTable, mlp: Mlp) -> Result<Self> {
        let rows = layout.feature_space_size() + layout.num_arms;
        if embedding.rows != rows || embedding.data.len() != rows * embedding.dim {
            return Err(AgeError::Contract(format!(
                "embedding table has {} rows, layout needs {rows}",
                embedding.rows
            )));
        }
        mlp.check_shapes()?;
        if mlp.input_width() != layout.input_width(embedding.dim) {
            return Err(AgeError::Contract(format!(
                "mlp input width {} does not match embedding width {}",
                mlp.input_width(),
                layout.input_width(embedding.dim)
            )));
        }
        Ok(Self {
            layout,
            embedding,
            mlp,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.dim
    }

    pub fn input_width(&self) -> usize {
        self.layout.input_width(self.embedding.dim)
    }

    /// Coordinates of `h` that hold the arm embedding.
    pub fn item_range(&self) -> Range<usize> {
        let d = self.embedding.dim;
        let start = self.layout.num_fields() * d;
        start..start + d
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.mlp.hidden_widths()
    }

    pub fn arm_row(&self, arm: u32) -> usize {
        self.layout.feature_space_size() + arm as usize
    }

    pub fn arm_embedding(&self, arm: u32) -> &[f64] {
        self.embedding.row(self.arm_row(arm))
    }

    pub fn new_trace(&self) -> Trace {
        Trace::new(&self.mlp)
    }

    /// Builds the concatenated input embedding for `x`.
    pub fn embed(&self, x: &SparseFeatureVector) -> Result<Vec<f64>> {
        let mut h = vec![0.0; self.input_width()];
        self.embed_into(x, &mut h)?;
        Ok(h)
    }

    pub fn embed_into(&self, x: &SparseFeatureVector, out: &mut [f64]) -> Result<()> {
        x.validate(&self.layout)?;
        self.embed_unchecked(x, out);
        Ok(())
    }

    pub(crate) fn embed_unchecked(&self, x: &SparseFeatureVector, out: &mut [f64]) {
        self.embed_parts_unchecked(&x.active_indices, x.arm_id, out);
    }

    /// Embeds a user/arm pair whose indices were already validated.
    pub(crate) fn embed_parts_unchecked(&self, user: &[u32], arm: u32, out: &mut [f64]) {
        let d = self.embedding.dim;
        out.fill(0.0);
        let mut field = 0;
        let mut field_end = self.layout.field_sizes.first().copied().unwrap_or(0);
        for &idx in user {
            let idx = idx as usize;
            while idx >= field_end {
                field += 1;
                field_end += self.layout.field_sizes[field];
            }
            let dst = &mut out[field * d..(field + 1) * d];
            for (o, &e) in dst.iter_mut().zip(self.embedding.row(idx)) {
                *o += e;
            }
        }
        let arm_start = self.layout.num_fields() * d;
        out[arm_start..arm_start + d].copy_from_slice(self.arm_embedding(arm));
    }

    /// Checks a user feature list and a set of arm ids against the layout.
    pub fn validate_parts(&self, user: &[u32], arms: &[u32]) -> Result<()> {
        let probe = SparseFeatureVector {
            active_indices: user.to_vec(),
            arm_id: 0,
        };
        probe.validate(&self.layout)?;
        for &a in arms {
            if a as usize >= self.layout.num_arms {
                return domain(format!(
                    "arm id {a} outside arm space of size {}",
                    self.layout.num_arms
                ));
            }
        }
        Ok(())
    }

    fn check_dense(&self, h: &[f64], mask: Option<&DropoutMask>) -> Result<()> {
        if h.len() != self.input_width() {
            return Err(AgeError::Contract(format!(
                "input embedding has width {}, expected {}",
                h.len(),
                self.input_width()
            )));
        }
        self.mlp.check_mask(mask)
    }

    /// Click probability for `x`. Without a mask this is the plain
    /// (non-dropout) prediction.
    pub fn forward(&self, x: &SparseFeatureVector, mask: Option<&DropoutMask>) -> Result<f64> {
        let h = self.embed(x)?;
        self.forward_dense(&h, mask)
    }

    /// Click probability for an explicit input embedding.
    pub fn forward_dense(&self, h: &[f64], mask: Option<&DropoutMask>) -> Result<f64> {
        self.check_dense(h, mask)?;
        let mut trace = self.new_trace();
        self.predict_traced(h, mask, &mut trace)
    }

    pub(crate) fn predict_traced(
        &self,
        h: &[f64],
        mask: Option<&DropoutMask>,
        trace: &mut Trace,
    ) -> Result<f64> {
        let logit = self.mlp.forward_traced(h, mask, trace);
        if !logit.is_finite() {
            return Err(AgeError::Numeric(format!("non-finite logit {logit}")));
        }
        Ok(clamp_prob(sigmoid(logit)))
    }

    /// Prediction together with its gradient with respect to `h`.
    pub(crate) fn value_and_input_grad(
        &self,
        h: &[f64],
        mask: Option<&DropoutMask>,
        trace: &mut Trace,
        grad: &mut [f64],
    ) -> Result<f64> {
        let logit = self.mlp.forward_traced(h, mask, trace);
        if !logit.is_finite() {
            return Err(AgeError::Numeric(format!("non-finite logit {logit}")));
        }
        let p = sigmoid(logit);
        let dlogit = p * (1.0 - p);
        self.mlp.backward(h, trace, mask, dlogit, None, Some(grad));
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(AgeError::Numeric("non-finite input gradient".into()));
        }
        Ok(clamp_prob(p))
    }

    /// Gradient of the predicted probability with respect to the
    /// concatenated input embedding of `x`.
    pub fn grad_wrt_embedding(
        &self,
        x: &SparseFeatureVector,
        mask: Option<&DropoutMask>,
    ) -> Result<Vec<f64>> {
        let h = self.embed(x)?;
        self.grad_wrt_input(&h, mask)
    }

    pub fn grad_wrt_input(&self, h: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<f64>> {
        self.check_dense(h, mask)?;
        let mut trace = self.new_trace();
        let mut grad = vec![0.0; h.len()];
        self.value_and_input_grad(h, mask, &mut trace, &mut grad)?;
        Ok(grad)
    }

    /// Clamped binary cross-entropy of the (optionally masked) prediction
    /// and its gradient with respect to every trainable parameter.
    pub fn loss_and_grads(
        &self,
        x: &SparseFeatureVector,
        label: u8,
        mask: Option<&DropoutMask>,
    ) -> Result<(f64, Gradients)> {
        if label > 1 {
            return domain(format!("label must be 0 or 1, got {label}"));
        }
        x.validate(&self.layout)?;
        self.loss_and_grads_parts(&x.active_indices, x.arm_id, label, mask)
    }

    /// [`Network::loss_and_grads`] for an already validated user/arm pair.
    pub(crate) fn loss_and_grads_parts(
        &self,
        user: &[u32],
        arm: u32,
        label: u8,
        mask: Option<&DropoutMask>,
    ) -> Result<(f64, Gradients)> {
        let mut h = vec![0.0; self.input_width()];
        self.embed_parts_unchecked(user, arm, &mut h);
        let mut dh = vec![0.0; h.len()];
        let (loss, layers) = self.mlp.loss_and_grads(&h, label, mask, Some(&mut dh))?;
        let mut embedding = vec![0.0; self.embedding.data.len()];
        self.scatter_input_grad(user, arm, &dh, &mut embedding);
        Ok((loss, Gradients { layers, embedding }))
    }

    /// Routes a gradient on `h` back to the embedding rows that built it.
    fn scatter_input_grad(&self, user: &[u32], arm: u32, dh: &[f64], out: &mut [f64]) {
        let d = self.embedding.dim;
        let mut field = 0;
        let mut field_end = self.layout.field_sizes.first().copied().unwrap_or(0);
        for &idx in user {
            let idx = idx as usize;
            while idx >= field_end {
                field += 1;
                field_end += self.layout.field_sizes[field];
            }
            for (o, &g) in out[idx * d..(idx + 1) * d]
                .iter_mut()
                .zip(&dh[field * d..(field + 1) * d])
            {
                *o += g;
            }
        }
        let row = self.arm_row(arm);
        let arm_start = self.layout.num_fields() * d;
        for (o, &g) in out[row * d..(row + 1) * d]
            .iter_mut()
            .zip(&dh[arm_start..arm_start + d])
        {
            *o += g;
        }
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            layers: self.mlp.zero_grads(),
            embedding: vec![0.0; self.embedding.data.len()],
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.mlp.layers.len() * 2 + 1);
        for l in &mut self.mlp.layers {
            out.push(l.weights.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.embedding.data.as_mut_slice());
        out
    }

    pub fn param_shapes(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.mlp.layers.len() * 2 + 1);
        for l in &self.mlp.layers {
            out.push(l.weights.len());
            out.push(l.bias.len());
        }
        out.push(self.embedding.data.len());
        out
    }

    pub fn apply_adam(&mut self, grads: &Gradients, state: &mut AdamState) -> Result<()> {
        let g = grads.slices();
        adam_step(&mut self.param_slices_mut(), &g, state)
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.embedding.data.iter().all(|v| v.is_finite())
            && self
                .mlp
                .layers
                .iter()
                .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

// ── Adam ────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(shapes: &[usize], cfg: AdamConfig) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    pub fn for_network(net: &Network, cfg: AdamConfig) -> Self {
        Self::new(&net.param_shapes(), cfg)
    }

    pub fn for_mlp(mlp: &Mlp, cfg: AdamConfig) -> Self {
        let shapes: Vec<usize> = mlp
            .layers
            .iter()
            .flat_map(|l| [l.weights.len(), l.bias.len()])
            .collect();
        Self::new(&shapes, cfg)
    }
}

/// One bias-corrected Adam update over a list of parameter buffers.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AgeError::Contract(format!(
            "adam: {} parameter buffers, {} gradient buffers, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(AgeError::Contract(format!(
                "adam: buffer {i} has {} params, {} grads, {} moments",
                p.len(),
                g.len(),
                state.m[i].len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for j in 0..p.len() {
            let gj = g[j];
            if gj == 0.0 && m[j] == 0.0 && v[j] == 0.0 {
                continue;
            }
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

// ── Checkpoints ─────────────────────────────────────────────────────────

const CHECKPOINT_MAGIC: &[u8; 8] = b"AGENET\0\0";
const CHECKPOINT_VERSION: u32 = 1;

fn put_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s(w: &mut impl Write, vals: &[f64]) -> Result<()> {
    put_u64(w, vals.len() as u64)?;
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64s(r: &mut impl Read, expected: usize) -> Result<Vec<f64>> {
    let n = get_u64(r)? as usize;
    if n != expected {
        return Err(AgeError::Contract(format!(
            "checkpoint buffer holds {n} values, expected {expected}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub(crate) fn write_mlp(w: &mut impl Write, mlp: &Mlp) -> Result<()> {
    put_u64(w, mlp.layers.len() as u64)?;
    for l in &mlp.layers {
        put_u64(w, l.inputs as u64)?;
        put_u64(w, l.outputs as u64)?;
        put_f64s(w, &l.weights)?;
        put_f64s(w, &l.bias)?;
    }
    Ok(())
}

pub(crate) fn read_mlp(r: &mut impl Read) -> Result<Mlp> {
    let n = get_u64(r)? as usize;
    if n == 0 || n > 64 {
        return Err(AgeError::Contract(format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let inputs = get_u64(r)? as usize;
        let outputs = get_u64(r)? as usize;
        let weights = get_f64s(r, inputs * outputs)?;
        let bias = get_f64s(r, outputs)?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            bias,
        });
    }
    let mlp = Mlp { layers };
    mlp.check_shapes()?;
    Ok(mlp)
}

impl Network {
    /// Writes a versioned little-endian dump of shapes and row-major values.
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        put_u64(w, self.layout.field_sizes.len() as u64)?;
        for &s in &self.layout.field_sizes {
            put_u64(w, s as u64)?;
        }
        put_u64(w, self.layout.num_arms as u64)?;
        put_u64(w, self.embedding.dim as u64)?;
        put_u64(w, self.embedding.rows as u64)?;
        put_f64s(w, &self.embedding.data)?;
        write_mlp(w, &self.mlp)
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(AgeError::Contract("not a network checkpoint".into()));
        }
        let mut vb = [0u8; 4];
        r.read_exact(&mut vb)?;
        let version = u32::from_le_bytes(vb);
        if version != CHECKPOINT_VERSION {
            return Err(AgeError::Contract(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let nf = get_u64(r)? as usize;
        if nf > 1 << 16 {
            return Err(AgeError::Contract(format!("implausible field count {nf}")));
        }
        let field_sizes = (0..nf)
            .map(|_| get_u64(r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let num_arms = get_u64(r)? as usize;
        let layout = FieldLayout::new(field_sizes, num_arms)?;
        let dim = get_u64(r)? as usize;
        let rows = get_u64(r)? as usize;
        let data = get_f64s(r, rows * dim)?;
        let embedding = EmbeddingTable { dim, rows, data };
        let mlp = read_mlp(r)?;
        Network::from_parts(layout, embedding, mlp)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_checkpoint(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_layout(dim_fields: usize) -> FieldLayout {
        FieldLayout::new(vec![1; dim_fields], 2).unwrap()
    }

    /// Single hidden unit: embedding [1.0], W1 = [2.0], W2 = [1.0], b2 = -1.
    fn one_unit_network() -> Network {
        let layout = FieldLayout::new(vec![], 1).unwrap();
        let embedding = EmbeddingTable {
            dim: 1,
            rows: 1,
            data: vec![1.0],
        };
        let mlp = Mlp {
            layers: vec![
                Dense {
                    inputs: 1,
                    outputs: 1,
                    weights: vec![2.0],
                    bias: vec![0.0],
                },
                Dense {
                    inputs: 1,
                    outputs: 1,
                    weights: vec![1.0],
                    bias: vec![-1.0],
                },
            ],
        };
        Network::from_parts(layout, embedding, mlp).unwrap()
    }

    fn random_net(seed: u64) -> Network {
        let spec = NetworkSpec {
            layout: FieldLayout::new(vec![4, 3], 5).unwrap(),
            embed_dim: 3,
            hidden: vec![16, 8],
            embedding_init_std: 0.5,
            output_bias: 0.0,
        };
        Network::new(&spec, seed).unwrap()
    }

    #[test]
    fn zero_network_predicts_half() {
        let mut net = random_net(1);
        for l in &mut net.mlp.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let x = SparseFeatureVector::new(vec![1, 5], 3);
        assert_eq!(net.forward(&x, None).unwrap(), 0.5);
    }

    #[test]
    fn hand_computed_single_unit() {
        let net = one_unit_network();
        let x = SparseFeatureVector::new(vec![], 0);
        let p = net.forward(&x, None).unwrap();
        // relu(2 * 1) * 1 - 1 = 1
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-12, "{p}");
    }

    #[test]
    fn keep_all_mask_is_bit_identical() {
        let net = random_net(7);
        let x = SparseFeatureVector::new(vec![0, 6], 2);
        let mask = DropoutMask::keep_all(&net.hidden_widths());
        let a = net.forward(&x, None).unwrap();
        let b = net.forward(&x, Some(&mask)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = random_net(3);
        let unsorted = SparseFeatureVector::new(vec![2, 1], 0);
        assert!(matches!(
            net.forward(&unsorted, None),
            Err(AgeError::InputDomain(_))
        ));
        let out_of_range = SparseFeatureVector::new(vec![7], 0);
        assert!(matches!(
            net.forward(&out_of_range, None),
            Err(AgeError::InputDomain(_))
        ));
        let bad_arm = SparseFeatureVector::new(vec![1], 5);
        assert!(matches!(
            net.forward(&bad_arm, None),
            Err(AgeError::InputDomain(_))
        ));
        let wrong_mask = DropoutMask::keep_all(&[3]);
        let ok = SparseFeatureVector::new(vec![1], 0);
        assert!(matches!(
            net.forward(&ok, Some(&wrong_mask)),
            Err(AgeError::Contract(_))
        ));
    }

    #[test]
    fn dead_output_gives_zero_gradient() {
        let mut net = random_net(11);
        net.mlp.output_layer_mut().weights.fill(0.0);
        let x = SparseFeatureVector::new(vec![3, 4], 1);
        let g = net.grad_wrt_embedding(&x, None).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_bypass_gradient_closed_form() {
        // no hidden layers: f = sigmoid(w . h)
        let layout = tiny_layout(1);
        let embedding = EmbeddingTable {
            dim: 1,
            rows: 3,
            data: vec![0.3, -0.2, 0.7],
        };
        let mlp = Mlp {
            layers: vec![Dense {
                inputs: 2,
                outputs: 1,
                weights: vec![1.5, -0.5],
                bias: vec![0.0],
            }],
        };
        let net = Network::from_parts(layout, embedding, mlp).unwrap();
        let x = SparseFeatureVector::new(vec![0], 1);
        // h = [0.3, 0.7]
        let z: f64 = 1.5 * 0.3 - 0.5 * 0.7;
        let s = 1.0 / (1.0 + (-z).exp());
        let g = net.grad_wrt_embedding(&x, None).unwrap();
        assert!((g[0] - s * (1.0 - s) * 1.5).abs() < 1e-15);
        assert!((g[1] - s * (1.0 - s) * -0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_values() {
        let mut net = random_net(2);
        for l in &mut net.mlp.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let x = SparseFeatureVector::new(vec![0], 0);
        let (loss, _) = net.loss_and_grads(&x, 1, None).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);

        // output bias ln 9 gives f = 0.9
        net.mlp.output_layer_mut().bias[0] = 9f64.ln();
        let (loss, grads) = net.loss_and_grads(&x, 1, None).unwrap();
        assert!((loss - 0.105_360_515_657_826_3).abs() < 1e-12, "{loss}");
        // the output bias gradient is the logit gradient f - y
        let db = grads.layers.last().unwrap().bias[0];
        assert!((db - (0.9 - 1.0)).abs() < 1e-12);
        assert!(matches!(
            net.loss_and_grads(&x, 2, None),
            Err(AgeError::InputDomain(_))
        ));
    }

    #[test]
    fn logit_gradient_is_prediction_minus_label() {
        let net = random_net(5);
        let x = SparseFeatureVector::new(vec![2, 5], 4);
        let f = net.forward(&x, None).unwrap();
        for y in [0u8, 1] {
            let (_, g) = net.loss_and_grads(&x, y, None).unwrap();
            let db = g.layers.last().unwrap().bias[0];
            assert!((db - (f - f64::from(y))).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let net = random_net(9);
        let x = SparseFeatureVector::new(vec![1, 4], 2);
        let (_, grads) = net.loss_and_grads(&x, 1, None).unwrap();
        let step = 1e-6;
        for (li, layer) in net.mlp.layers.iter().enumerate() {
            for wi in (0..layer.weights.len()).step_by(7) {
                let mut plus = net.clone();
                plus.mlp.layers[li].weights[wi] += step;
                let mut minus = net.clone();
                minus.mlp.layers[li].weights[wi] -= step;
                let lp = plus.loss_and_grads(&x, 1, None).unwrap().0;
                let lm = minus.loss_and_grads(&x, 1, None).unwrap().0;
                let fd = (lp - lm) / (2.0 * step);
                let an = grads.layers[li].weights[wi];
                assert!((fd - an).abs() < 1e-6, "layer {li} w{wi}: {fd} vs {an}");
            }
        }
        // an active embedding row
        let d = net.embed_dim();
        for k in 0..d {
            let i = d + k; // row 1
            let mut plus = net.clone();
            plus.embedding.data[i] += step;
            let mut minus = net.clone();
            minus.embedding.data[i] -= step;
            let lp = plus.loss_and_grads(&x, 1, None).unwrap().0;
            let lm = minus.loss_and_grads(&x, 1, None).unwrap().0;
            let fd = (lp - lm) / (2.0 * step);
            assert!((fd - grads.embedding[i]).abs() < 1e-6);
        }
        // untouched row has no gradient
        assert!(grads.embedding[0..d].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adam_first_step_and_counter() {
        let mut p = vec![1.0];
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(&[1], cfg);
        adam_step(&mut [p.as_mut_slice()], &[&[1.0]], &mut state).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-8);
        adam_step(&mut [p.as_mut_slice()], &[&[1.0]], &mut state).unwrap();
        assert_eq!(state.step, 2);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = vec![0.5, -2.0];
        let mut state = AdamState::new(&[2], AdamConfig::default());
        adam_step(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], &mut state).unwrap();
        assert_eq!(p, vec![0.5, -2.0]);
        // moments decay once populated
        adam_step(&mut [p.as_mut_slice()], &[&[1.0, 1.0]], &mut state).unwrap();
        let m_before = state.m[0][0];
        adam_step(&mut [p.as_mut_slice()], &[&[0.0, 0.0]], &mut state).unwrap();
        assert!(state.m[0][0].abs() < m_before.abs());
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut p = vec![0.0; 3];
        let mut state = AdamState::new(&[2], AdamConfig::default());
        let r = adam_step(&mut [p.as_mut_slice()], &[&[0.0, 0.0, 0.0]], &mut state);
        assert!(matches!(r, Err(AgeError::Contract(_))));
    }

    #[test]
    fn mask_sampling() {
        assert!(sample_mask(0.0, &[4], 1).is_err());
        assert!(sample_mask(1.0, &[4], 1).is_err());
        let a = sample_mask(0.3, &[32, 8], 42).unwrap();
        let b = sample_mask(0.3, &[32, 8], 42).unwrap();
        assert_eq!(a, b);
        let scale = 1.0 / 0.7;
        assert!(a
            .layers
            .iter()
            .flatten()
            .all(|&v| v == 0.0 || v == scale));
    }

    #[test]
    fn drop_fraction_within_three_sigma() {
        let rate = 0.01;
        let widths = [10usize];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 100_000;
        let mut dropped = 0usize;
        for _ in 0..trials {
            dropped += DropoutMask::sample(rate, &widths, &mut rng).unwrap().dropped();
        }
        let n = (trials * widths[0]) as f64;
        let frac = dropped as f64 / n;
        let sigma = (rate * (1.0 - rate) / n).sqrt();
        assert!((frac - rate).abs() <= 3.0 * sigma, "{frac}");
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = random_net(21);
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let back = Network::read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(net, back);
        let mut again = Vec::new();
        back.write_checkpoint(&mut again).unwrap();
        assert_eq!(buf, again);
        assert!(Network::read_checkpoint(&mut &buf[..20]).is_err());
    }
}
