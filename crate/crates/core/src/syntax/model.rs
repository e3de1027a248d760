//! Stacked bidirectional LSTM over UPOS embeddings, attention pooling, logistic head.
//!
//! Per layer and direction the cell computes, with gates packed as `[i | f | g | o]`:
//!
//! ```text
//! a = W_x x_t + W_h h_{t-1} + b
//! i, f, o = sigmoid(a_i, a_f, a_o);  g = tanh(a_g)
//! c_t = f * c_{t-1} + i * g;         h_t = o * tanh(c_t)
//! ```
//!
//! The layer output at position t is `[h_fwd_t ; h_bwd_t]`. On top of the last
//! layer, `e_t = u . s_t`, `alpha = softmax(e)`, `context = sum alpha_t s_t` and
//! `p = sigmoid(w . context + b)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::upos::{DEFAULT_MAX_LEN, VOCAB_SIZE};
use super::SyntaxError;
use crate::corpus::Label;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Hidden units per direction.
    pub hidden: usize,
    pub layers: usize,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { embed_dim: 16, hidden: 32, layers: 2, max_len: DEFAULT_MAX_LEN }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), SyntaxError> {
        if self.embed_dim == 0 || self.hidden == 0 || self.layers == 0 || self.max_len == 0 {
            return Err(SyntaxError::ShapeMismatch(format!("degenerate model config {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.embed_dim
        } else {
            2 * self.hidden
        }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![F::zero(); rows * cols] }
    }

    pub fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self * x`
    fn mul_vec_add(&self, x: &[F], out: &mut [F]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            *o = *o + dot(self.row(r), x);
        }
    }

    /// `out += self^T * y`
    fn mul_t_vec_add(&self, y: &[F], out: &mut [F]) {
        for (r, &yr) in y.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o = *o + w * yr;
            }
        }
    }

    /// `self += a b^T`
    fn add_outer(&mut self, a: &[F], b: &[F]) {
        for (r, &ar) in a.iter().enumerate() {
            for (w, &bc) in self.row_mut(r).iter_mut().zip(b) {
                *w = *w + ar * bc;
            }
        }
    }
}

pub(crate) fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Weights of one LSTM direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F> {
    /// `4h x input`
    pub w_x: Matrix<F>,
    /// `4h x h`
    pub w_h: Matrix<F>,
    /// `4h`
    pub bias: Vec<F>,
}

impl<F: Real> LstmParams<F> {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams { w_x: Matrix::zeros(4 * hidden, input), w_h: Matrix::zeros(4 * hidden, hidden), bias: vec![F::zero(); 4 * hidden] }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLayer<F> {
    pub forward: LstmParams<F>,
    pub backward: LstmParams<F>,
}

/// Model parameters. The same structure doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntaxModel<F> {
    pub config: ModelConfig,
    pub seed: u64,
    /// `VOCAB_SIZE x embed_dim`
    pub embedding: Matrix<F>,
    pub layers: Vec<BiLayer<F>>,
    /// Attention score vector over the `2h` top-layer states.
    pub attention: Vec<F>,
    pub head: Vec<F>,
    pub head_bias: F,
}

/// A named view of one parameter block.
#[derive(Debug)]
pub struct ParamBlock<'a, F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [F],
}

#[derive(Debug, Clone)]
struct Step<F> {
    h_prev: Vec<F>,
    c_prev: Vec<F>,
    /// activated gates `[i | f | g | o]`
    gates: Vec<F>,
    tanh_c: Vec<F>,
    h: Vec<F>,
}

#[derive(Debug, Clone)]
struct LayerCache<F> {
    inputs: Vec<Vec<F>>,
    fwd: Vec<Step<F>>,
    bwd: Vec<Step<F>>,
    outputs: Vec<Vec<F>>,
}

/// Result of a forward pass, holding everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct Forward<F> {
    pub p_machine: F,
    pub logit: F,
    /// Attention weights, one per position; a probability vector.
    pub attention: Vec<F>,
    pub context: Vec<F>,
    tags: Vec<u8>,
    layers: Vec<LayerCache<F>>,
}

impl<F: Real> Forward<F> {
    /// `[h_fwd ; h_bwd]` per position for layer `layer`.
    pub fn layer_states(&self, layer: usize) -> &[Vec<F>] {
        &self.layers[layer].outputs
    }

    pub fn top_states(&self) -> &[Vec<F>] {
        &self.layers.last().expect("at least one layer").outputs
    }

    /// Binary cross-entropy of this prediction against `label`.
    pub fn loss(&self, label: Label) -> F {
        let y = F::from_u8(label.as_u8()).unwrap();
        self.logit.softplus() - y * self.logit
    }
}

fn run_direction<F: Real>(p: &LstmParams<F>, inputs: &[Vec<F>], reverse: bool) -> Vec<Step<F>> {
    let h = p.hidden();
    let n = inputs.len();
    let mut steps: Vec<Option<Step<F>>> = vec![None; n];
    let mut h_prev = vec![F::zero(); h];
    let mut c_prev = vec![F::zero(); h];
    for k in 0..n {
        let t = if reverse { n - 1 - k } else { k };
        let mut a = p.bias.clone();
        p.w_x.mul_vec_add(&inputs[t], &mut a);
        p.w_h.mul_vec_add(&h_prev, &mut a);
        for j in 0..h {
            a[j] = a[j].sigmoid();
            a[h + j] = a[h + j].sigmoid();
            a[2 * h + j] = a[2 * h + j].tanh();
            a[3 * h + j] = a[3 * h + j].sigmoid();
        }
        let mut c = vec![F::zero(); h];
        let mut tanh_c = vec![F::zero(); h];
        let mut h_new = vec![F::zero(); h];
        for j in 0..h {
            c[j] = a[h + j] * c_prev[j] + a[j] * a[2 * h + j];
            tanh_c[j] = c[j].tanh();
            h_new[j] = a[3 * h + j] * tanh_c[j];
        }
        let step = Step { h_prev, c_prev, gates: a, tanh_c, h: h_new.clone() };
        steps[t] = Some(step);
        h_prev = h_new;
        c_prev = c;
    }
    steps.into_iter().map(|s| s.expect("every position visited")).collect()
}

/// BPTT through one direction. `d_out[t]` is the loss gradient w.r.t. this
/// direction's `h_t`; input gradients are accumulated into `d_inputs`.
fn backprop_direction<F: Real>(
    p: &LstmParams<F>,
    g: &mut LstmParams<F>,
    inputs: &[Vec<F>],
    steps: &[Step<F>],
    d_out: &[&[F]],
    reverse: bool,
    d_inputs: &mut [Vec<F>],
) {
    let h = p.hidden();
    let n = steps.len();
    let one = F::one();
    let mut dh_next = vec![F::zero(); h];
    let mut dc_next = vec![F::zero(); h];
    let mut da = vec![F::zero(); 4 * h];
    for k in 0..n {
        // reverse of processing order
        let t = if reverse { k } else { n - 1 - k };
        let s = &steps[t];
        for j in 0..h {
            let (i, f, gg, o) = (s.gates[j], s.gates[h + j], s.gates[2 * h + j], s.gates[3 * h + j]);
            let dh = d_out[t][j] + dh_next[j];
            let d_o = dh * s.tanh_c[j];
            let dc = dh * o * (one - s.tanh_c[j] * s.tanh_c[j]) + dc_next[j];
            da[j] = dc * gg * i * (one - i);
            da[h + j] = dc * s.c_prev[j] * f * (one - f);
            da[2 * h + j] = dc * i * (one - gg * gg);
            da[3 * h + j] = d_o * o * (one - o);
            dc_next[j] = dc * f;
        }
        g.w_x.add_outer(&da, &inputs[t]);
        g.w_h.add_outer(&da, &s.h_prev);
        for (b, &d) in g.bias.iter_mut().zip(&da) {
            *b = *b + d;
        }
        p.w_x.mul_t_vec_add(&da, &mut d_inputs[t]);
        dh_next.iter_mut().for_each(|v| *v = F::zero());
        p.w_h.mul_t_vec_add(&da, &mut dh_next);
    }
}

fn uniform<F: Real>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<F> {
    (0..n).map(|_| F::lit(rng.gen::<f64>() * 2.0 * bound - bound)).collect()
}

impl<F: Real> SyntaxModel<F> {
    pub fn zeros(config: ModelConfig) -> Self {
        let h = config.hidden;
        let layers = (0..config.layers)
            .map(|l| {
                let input = config.layer_input(l);
                BiLayer { forward: LstmParams::zeros(input, h), backward: LstmParams::zeros(input, h) }
            })
            .collect();
        SyntaxModel {
            config,
            seed: 0,
            embedding: Matrix::zeros(VOCAB_SIZE, config.embed_dim),
            layers,
            attention: vec![F::zero(); 2 * h],
            head: vec![F::zero(); 2 * h],
            head_bias: F::zero(),
        }
    }

    /// Seeded init: every block uniform in `±1/sqrt(fan_in)`, LSTM biases zero
    /// except the forget gate at 1.0, head bias zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, SyntaxError> {
        config.validate()?;
        let mut model = Self::zeros(config);
        model.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        model.embedding.data = uniform(&mut rng, model.embedding.data.len(), 1.0 / (VOCAB_SIZE as f64).sqrt());
        for layer in &mut model.layers {
            for p in [&mut layer.forward, &mut layer.backward] {
                p.w_x.data = uniform(&mut rng, p.w_x.data.len(), 1.0 / (p.w_x.cols as f64).sqrt());
                p.w_h.data = uniform(&mut rng, p.w_h.data.len(), 1.0 / (h as f64).sqrt());
                for b in &mut p.bias[h..2 * h] {
                    *b = F::one();
                }
            }
        }
        let k = 1.0 / ((2 * h) as f64).sqrt();
        model.attention = uniform(&mut rng, 2 * h, k);
        model.head = uniform(&mut rng, 2 * h, k);
        Ok(model)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(self.config);
        z.seed = self.seed;
        z
    }

    pub fn blocks(&self) -> Vec<ParamBlock<'_, F>> {
        let mut out = vec![ParamBlock {
            name: "embedding".into(),
            shape: vec![self.embedding.rows, self.embedding.cols],
            data: &self.embedding.data,
        }];
        for (l, layer) in self.layers.iter().enumerate() {
            for (dir, p) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                out.push(ParamBlock { name: format!("layer{l}.{dir}.w_x"), shape: vec![p.w_x.rows, p.w_x.cols], data: &p.w_x.data });
                out.push(ParamBlock { name: format!("layer{l}.{dir}.w_h"), shape: vec![p.w_h.rows, p.w_h.cols], data: &p.w_h.data });
                out.push(ParamBlock { name: format!("layer{l}.{dir}.bias"), shape: vec![p.bias.len()], data: &p.bias });
            }
        }
        out.push(ParamBlock { name: "attention".into(), shape: vec![self.attention.len()], data: &self.attention });
        out.push(ParamBlock { name: "head".into(), shape: vec![self.head.len()], data: &self.head });
        out.push(ParamBlock { name: "head_bias".into(), shape: vec![], data: std::slice::from_ref(&self.head_bias) });
        out
    }

    /// Mutable parameter slices in the same order as [`blocks`](Self::blocks).
    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [F])> {
        let mut out: Vec<(String, &mut [F])> = vec![("embedding".into(), &mut self.embedding.data)];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (dir, p) in [("fwd", &mut layer.forward), ("bwd", &mut layer.backward)] {
                out.push((format!("layer{l}.{dir}.w_x"), &mut p.w_x.data));
                out.push((format!("layer{l}.{dir}.w_h"), &mut p.w_h.data));
                out.push((format!("layer{l}.{dir}.bias"), &mut p.bias));
            }
        }
        out.push(("attention".into(), &mut self.attention));
        out.push(("head".into(), &mut self.head));
        out.push(("head_bias".into(), std::slice::from_mut(&mut self.head_bias)));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.data.len()).sum()
    }

    /// Verify every block matches the config and every value is finite.
    pub fn check(&self) -> Result<(), SyntaxError> {
        self.config.validate()?;
        let c = &self.config;
        let h = c.hidden;
        let mismatch = |what: String| Err(SyntaxError::ShapeMismatch(what));
        if (self.embedding.rows, self.embedding.cols) != (VOCAB_SIZE, c.embed_dim)
            || self.embedding.data.len() != VOCAB_SIZE * c.embed_dim
        {
            return mismatch("embedding".into());
        }
        if self.layers.len() != c.layers {
            return mismatch(format!("{} layers, config says {}", self.layers.len(), c.layers));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for p in [&layer.forward, &layer.backward] {
                let ok = (p.w_x.rows, p.w_x.cols) == (4 * h, c.layer_input(l))
                    && p.w_x.data.len() == 4 * h * c.layer_input(l)
                    && (p.w_h.rows, p.w_h.cols) == (4 * h, h)
                    && p.w_h.data.len() == 4 * h * h
                    && p.bias.len() == 4 * h;
                if !ok {
                    return mismatch(format!("layer {l}"));
                }
            }
        }
        if self.attention.len() != 2 * h || self.head.len() != 2 * h {
            return mismatch("attention/head".into());
        }
        if self.blocks().iter().any(|b| b.data.iter().any(|v| !v.is_finite())) {
            return Err(SyntaxError::NonFinite);
        }
        Ok(())
    }

    pub fn forward(&self, tags: &[u8]) -> Result<Forward<F>, SyntaxError> {
        if tags.is_empty() {
            return Err(SyntaxError::EmptySequence(String::new()));
        }
        if let Some(&bad) = tags.iter().find(|&&t| t as usize >= VOCAB_SIZE) {
            return Err(SyntaxError::TagOutOfRange(bad));
        }
        if self.layers.is_empty() || self.attention.len() != 2 * self.config.hidden {
            return Err(SyntaxError::ShapeMismatch("model does not match its config".into()));
        }
        let mut inputs: Vec<Vec<F>> = tags.iter().map(|&t| self.embedding.row(t as usize).to_vec()).collect();
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            if inputs[0].len() != layer.forward.w_x.cols {
                return Err(SyntaxError::ShapeMismatch("layer input width".into()));
            }
            let fwd = run_direction(&layer.forward, &inputs, false);
            let bwd = run_direction(&layer.backward, &inputs, true);
            let outputs: Vec<Vec<F>> = fwd
                .iter()
                .zip(&bwd)
                .map(|(a, b)| a.h.iter().chain(&b.h).copied().collect())
                .collect();
            layers.push(LayerCache { inputs, fwd, bwd, outputs: outputs.clone() });
            inputs = outputs;
        }
        let top = &layers.last().unwrap().outputs;
        let scores: Vec<F> = top.iter().map(|s| dot(&self.attention, s)).collect();
        let attention = softmax(&scores);
        let mut context = vec![F::zero(); 2 * self.config.hidden];
        for (a, s) in attention.iter().zip(top) {
            for (c, &v) in context.iter_mut().zip(s) {
                *c = *c + *a * v;
            }
        }
        let logit = dot(&self.head, &context) + self.head_bias;
        Ok(Forward { p_machine: logit.sigmoid(), logit, attention, context, tags: tags.to_vec(), layers })
    }

    pub fn predict(&self, tags: &[u8]) -> Result<F, SyntaxError> {
        Ok(self.forward(tags)?.p_machine)
    }

    /// Gradients of the cross-entropy loss for `label`, from a forward pass of this model.
    pub fn backward(&self, fwd: &Forward<F>, label: Label) -> Result<SyntaxModel<F>, SyntaxError> {
        if fwd.layers.len() != self.layers.len() || fwd.context.len() != self.head.len() {
            return Err(SyntaxError::ShapeMismatch("forward cache does not belong to this model".into()));
        }
        let h = self.config.hidden;
        let mut g = self.zeros_like();
        let y = F::from_u8(label.as_u8()).unwrap();
        let dz = fwd.p_machine - y;

        g.head_bias = dz;
        for (gw, &c) in g.head.iter_mut().zip(&fwd.context) {
            *gw = dz * c;
        }
        let d_context: Vec<F> = self.head.iter().map(|&w| dz * w).collect();

        let top = fwd.top_states();
        let d_alpha: Vec<F> = top.iter().map(|s| dot(&d_context, s)).collect();
        let weighted = dot(&fwd.attention, &d_alpha);
        let mut d_states: Vec<Vec<F>> = Vec::with_capacity(top.len());
        for ((s, &a), &da) in top.iter().zip(&fwd.attention).zip(&d_alpha) {
            let de = a * (da - weighted);
            for (gu, &v) in g.attention.iter_mut().zip(s) {
                *gu = *gu + de * v;
            }
            d_states.push(d_context.iter().zip(&self.attention).map(|(&dc, &u)| a * dc + de * u).collect());
        }

        for l in (0..self.layers.len()).rev() {
            let params = &self.layers[l];
            let cache = &fwd.layers[l];
            let width = cache.inputs[0].len();
            let mut d_inputs = vec![vec![F::zero(); width]; cache.inputs.len()];
            let d_fwd: Vec<&[F]> = d_states.iter().map(|d| &d[..h]).collect();
            let d_bwd: Vec<&[F]> = d_states.iter().map(|d| &d[h..]).collect();
            let gl = &mut g.layers[l];
            backprop_direction(&params.forward, &mut gl.forward, &cache.inputs, &cache.fwd, &d_fwd, false, &mut d_inputs);
            backprop_direction(&params.backward, &mut gl.backward, &cache.inputs, &cache.bwd, &d_bwd, true, &mut d_inputs);
            d_states = d_inputs;
        }

        for (&tag, d) in fwd.tags.iter().zip(&d_states) {
            for (e, &v) in g.embedding.row_mut(tag as usize).iter_mut().zip(d) {
                *e = *e + v;
            }
        }
        Ok(g)
    }

    /// `self += alpha * other`, block by block.
    pub fn add_scaled(&mut self, other: &SyntaxModel<F>, alpha: F) {
        for ((_, dst), src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, &s) in dst.iter_mut().zip(src.data) {
                *d = *d + alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: F) {
        for (_, block) in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v = *v * alpha);
        }
    }

    /// Euclidean norm over all parameters.
    pub fn norm(&self) -> F {
        self.blocks()
            .iter()
            .flat_map(|b| b.data.iter())
            .fold(F::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// The model that reads sequences right-to-left: directions swapped and
    /// every `[fwd ; bwd]`-ordered weight permuted to `[bwd ; fwd]`. On a
    /// reversed sequence it produces the same prediction as `self`.
    pub fn mirrored(&self) -> SyntaxModel<F> {
        let h = self.config.hidden;
        let swap_halves = |v: &[F]| -> Vec<F> { v[h..].iter().chain(&v[..h]).copied().collect() };
        let mut m = self.clone();
        for (l, layer) in m.layers.iter_mut().enumerate() {
            std::mem::swap(&mut layer.forward, &mut layer.backward);
            if l > 0 {
                for p in [&mut layer.forward, &mut layer.backward] {
                    let cols = p.w_x.cols;
                    for r in 0..p.w_x.rows {
                        let swapped = swap_halves(p.w_x.row(r));
                        p.w_x.data[r * cols..(r + 1) * cols].copy_from_slice(&swapped);
                    }
                }
            }
        }
        m.attention = swap_halves(&self.attention);
        m.head = swap_halves(&self.head);
        m
    }
}

/// Softmax with max subtraction.
pub fn softmax<F: Real>(scores: &[F]) -> Vec<F> {
    let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total = exps.iter().copied().fold(F::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}
