//! A log-bilinear language model with hand-written gradients.
//!
//! `h(x) = sum_j W_j e(x_j)` (or the mean of the history embeddings in
//! averaging mode) and `s(x, c) = w_c . h(x) + b_c`. Gradients are sparse over
//! the embedding rows a batch touches.

use std::collections::HashMap;

use rand::Rng;

use crate::corpus::Batch;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::math::{axpy, dot};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combiner {
    /// One `d x d` matrix per history position.
    Positional,
    /// Mean of the history embeddings.
    Average,
}

impl std::str::FromStr for Combiner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positional" => Ok(Combiner::Positional),
            "average" => Ok(Combiner::Average),
            _ => Err(Error::config("combiner", format!("unknown combiner {s:?}"))),
        }
    }
}

impl Combiner {
    pub fn name(self) -> &'static str {
        match self {
            Combiner::Positional => "positional",
            Combiner::Average => "average",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    vocab_size: usize,
    dim: usize,
    order: usize,
    combiner: Combiner,
    /// `C x d`
    pub input_embeddings: Vec<f64>,
    /// `m x d x d`, row-major per position; empty in averaging mode.
    pub context_weights: Vec<f64>,
    /// `C x d`
    pub output_embeddings: Vec<f64>,
    /// `C`
    pub output_bias: Vec<f64>,
}

/// Ids scored for every pair of a batch.
#[derive(Clone, Copy, Debug)]
pub enum Candidates<'a> {
    /// The same ids for every pair.
    Shared(&'a [usize]),
    /// Row-major `B x width` ids.
    PerPair { ids: &'a [usize], width: usize },
    /// The whole vocabulary, in id order.
    All,
}

impl Candidates<'_> {
    fn width(&self, vocab_size: usize) -> usize {
        match *self {
            Candidates::Shared(ids) => ids.len(),
            Candidates::PerPair { width, .. } => width,
            Candidates::All => vocab_size,
        }
    }
}

const MODEL_MAGIC: &[u8; 8] = b"SNISMODL";
const ADAM_MAGIC: &[u8; 8] = b"SNISADAM";
const FORMAT_VERSION: u32 = 1;

impl ModelParams {
    /// Embeddings and output embeddings uniform in `[-init_scale, init_scale]`,
    /// bias zero, context weights the identity.
    pub fn init(
        vocab_size: usize,
        dim: usize,
        order: usize,
        combiner: Combiner,
        init_scale: f64,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if vocab_size < 2 || dim < 1 || order < 1 {
            return Err(Error::invalid("model", "need C >= 2, d >= 1 and m >= 1"));
        }
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| init_scale * (2.0 * rng.random::<f64>() - 1.0))
                .collect()
        };
        let input_embeddings = uniform(vocab_size * dim);
        let output_embeddings = uniform(vocab_size * dim);
        let context_weights = match combiner {
            Combiner::Positional => {
                let mut w = vec![0.0; order * dim * dim];
                for j in 0..order {
                    for a in 0..dim {
                        w[j * dim * dim + a * dim + a] = 1.0;
                    }
                }
                w
            }
            Combiner::Average => Vec::new(),
        };
        Ok(ModelParams {
            vocab_size,
            dim,
            order,
            combiner,
            input_embeddings,
            context_weights,
            output_embeddings,
            output_bias: vec![0.0; vocab_size],
        })
    }

    /// All-zero parameters (context weights included).
    pub fn zeros(vocab_size: usize, dim: usize, order: usize, combiner: Combiner) -> Self {
        ModelParams {
            vocab_size,
            dim,
            order,
            combiner,
            input_embeddings: vec![0.0; vocab_size * dim],
            context_weights: match combiner {
                Combiner::Positional => vec![0.0; order * dim * dim],
                Combiner::Average => Vec::new(),
            },
            output_embeddings: vec![0.0; vocab_size * dim],
            output_bias: vec![0.0; vocab_size],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn combiner(&self) -> Combiner {
        self.combiner
    }

    pub fn num_params(&self) -> usize {
        self.input_embeddings.len()
            + self.context_weights.len()
            + self.output_embeddings.len()
            + self.output_bias.len()
    }

    fn embedding(&self, id: usize) -> &[f64] {
        &self.input_embeddings[id * self.dim..(id + 1) * self.dim]
    }

    fn output_row(&self, id: usize) -> &[f64] {
        &self.output_embeddings[id * self.dim..(id + 1) * self.dim]
    }

    fn context_matrix(&self, j: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.context_weights[j * dd..(j + 1) * dd]
    }

    pub fn all_finite(&self) -> bool {
        self.input_embeddings
            .iter()
            .chain(&self.context_weights)
            .chain(&self.output_embeddings)
            .chain(&self.output_bias)
            .all(|v| v.is_finite())
    }

    /// Hidden state of a single history.
    pub fn hidden_one(&self, history: &[usize], out: &mut [f64]) {
        let d = self.dim;
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.combiner {
            Combiner::Positional => {
                for (j, &x) in history.iter().enumerate() {
                    let w = self.context_matrix(j);
                    let e = self.embedding(x);
                    for a in 0..d {
                        out[a] += dot(&w[a * d..(a + 1) * d], e);
                    }
                }
            }
            Combiner::Average => {
                let scale = 1.0 / history.len() as f64;
                for &x in history {
                    axpy(scale, self.embedding(x), out);
                }
            }
        }
    }

    /// `B x d` hidden states.
    pub fn forward_hidden(&self, batch: &Batch) -> Vec<f64> {
        debug_assert_eq!(batch.order, self.order);
        let d = self.dim;
        let mut hidden = vec![0.0; batch.len() * d];
        for (n, h) in hidden.chunks_exact_mut(d).enumerate() {
            self.hidden_one(batch.history(n), h);
        }
        hidden
    }

    /// Raw scores `w_c . h + b_c`, row-major `B x width`.
    pub fn score_candidates(&self, hidden: &[f64], candidates: Candidates) -> Vec<f64> {
        let d = self.dim;
        let b = hidden.len() / d;
        let width = candidates.width(self.vocab_size);
        let mut out = vec![0.0; b * width];
        match candidates {
            Candidates::Shared(ids) => {
                for (j, &c) in ids.iter().enumerate() {
                    let w = self.output_row(c);
                    let bias = self.output_bias[c];
                    for n in 0..b {
                        out[n * width + j] = dot(w, &hidden[n * d..(n + 1) * d]) + bias;
                    }
                }
            }
            Candidates::All => {
                for c in 0..self.vocab_size {
                    let w = self.output_row(c);
                    let bias = self.output_bias[c];
                    for n in 0..b {
                        out[n * width + c] = dot(w, &hidden[n * d..(n + 1) * d]) + bias;
                    }
                }
            }
            Candidates::PerPair { ids, width } => {
                for n in 0..b {
                    let h = &hidden[n * d..(n + 1) * d];
                    for j in 0..width {
                        let c = ids[n * width + j];
                        out[n * width + j] = dot(self.output_row(c), h) + self.output_bias[c];
                    }
                }
            }
        }
        out
    }

    /// Scores of every class for one hidden state.
    pub fn score_all_one(&self, hidden: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.output_row(c), hidden) + self.output_bias[c];
        }
    }

    /// Chain rule from `dF/ds` at the target and candidate positions to every
    /// touched parameter.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        batch: &Batch,
        hidden: &[f64],
        target_grads: &[f64],
        candidates: Candidates,
        candidate_grads: &[f64],
    ) -> ParamGrads {
        let d = self.dim;
        let b = batch.len();
        let width = candidates.width(self.vocab_size);
        debug_assert_eq!(candidate_grads.len(), b * width);
        let mut grads = ParamGrads::new(self);
        let mut dh = vec![0.0; b * d];

        for (n, &t) in batch.targets.iter().enumerate() {
            let g = target_grads[n];
            if g == 0.0 {
                continue;
            }
            let h = &hidden[n * d..(n + 1) * d];
            axpy(g, h, grads.output.row_mut(t));
            grads.bias.row_mut(t)[0] += g;
            axpy(g, self.output_row(t), &mut dh[n * d..(n + 1) * d]);
        }

        let shared_column = |c: usize, j: usize, grads: &mut ParamGrads, dh: &mut [f64]| {
            let w = self.output_row(c);
            let row = grads.output.row_mut(c);
            let mut db = 0.0;
            for n in 0..b {
                let g = candidate_grads[n * width + j];
                if g == 0.0 {
                    continue;
                }
                axpy(g, &hidden[n * d..(n + 1) * d], row);
                axpy(g, w, &mut dh[n * d..(n + 1) * d]);
                db += g;
            }
            grads.bias.row_mut(c)[0] += db;
        };
        match candidates {
            Candidates::Shared(ids) => {
                for (j, &c) in ids.iter().enumerate() {
                    shared_column(c, j, &mut grads, &mut dh);
                }
            }
            Candidates::All => {
                for c in 0..self.vocab_size {
                    shared_column(c, c, &mut grads, &mut dh);
                }
            }
            Candidates::PerPair { ids, width } => {
                for n in 0..b {
                    for j in 0..width {
                        let c = ids[n * width + j];
                        let g = candidate_grads[n * width + j];
                        let row = grads.output.row_mut(c);
                        if g == 0.0 {
                            continue;
                        }
                        axpy(g, &hidden[n * d..(n + 1) * d], row);
                        grads.bias.row_mut(c)[0] += g;
                        axpy(g, self.output_row(c), &mut dh[n * d..(n + 1) * d]);
                    }
                }
            }
        }

        let dd = d * d;
        for n in 0..b {
            let dhn = &dh[n * d..(n + 1) * d];
            let history = batch.history(n);
            match self.combiner {
                Combiner::Positional => {
                    for (j, &x) in history.iter().enumerate() {
                        let e = self.embedding(x);
                        let dw = &mut grads.context[j * dd..(j + 1) * dd];
                        for a in 0..d {
                            if dhn[a] != 0.0 {
                                axpy(dhn[a], e, &mut dw[a * d..(a + 1) * d]);
                            }
                        }
                        let w = self.context_matrix(j);
                        let de = grads.input.row_mut(x);
                        for a in 0..d {
                            if dhn[a] != 0.0 {
                                axpy(dhn[a], &w[a * d..(a + 1) * d], de);
                            }
                        }
                    }
                }
                Combiner::Average => {
                    let scale = 1.0 / history.len() as f64;
                    for &x in history {
                        axpy(scale, dhn, grads.input.row_mut(x));
                    }
                }
            }
        }
        grads
    }

    /// Plain gradient ascent on the criterion: `theta += lr * g`.
    pub fn sgd_step(&mut self, grads: &ParamGrads, lr: f64) {
        let d = self.dim;
        for (id, g) in grads.input.iter() {
            axpy(lr, g, &mut self.input_embeddings[id * d..(id + 1) * d]);
        }
        axpy(lr, &grads.context, &mut self.context_weights);
        for (id, g) in grads.output.iter() {
            axpy(lr, g, &mut self.output_embeddings[id * d..(id + 1) * d]);
        }
        for (id, g) in grads.bias.iter() {
            self.output_bias[id] += lr * g[0];
        }
    }

    /// One Adam ascent step. Embedding and bias rows absent from `grads`
    /// keep their parameters and moment estimates (lazy Adam); the bias
    /// correction uses the global step count.
    pub fn adam_step(&mut self, grads: &ParamGrads, state: &mut AdamState, hyper: &AdamHyper) {
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - hyper.beta1.powi(t);
        let c2 = 1.0 - hyper.beta2.powi(t);
        let step = hyper.lr * c2.sqrt() / c1;
        let eps = hyper.eps * c2.sqrt();
        let d = self.dim;

        let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..g.len() {
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
                p[i] += step * m[i] / (v[i].sqrt() + eps);
            }
        };
        for (id, g) in grads.input.iter() {
            let r = id * d..(id + 1) * d;
            update(
                &mut self.input_embeddings[r.clone()],
                &mut state.input_m[r.clone()],
                &mut state.input_v[r],
                g,
            );
        }
        update(
            &mut self.context_weights,
            &mut state.context_m,
            &mut state.context_v,
            &grads.context,
        );
        for (id, g) in grads.output.iter() {
            let r = id * d..(id + 1) * d;
            update(
                &mut self.output_embeddings[r.clone()],
                &mut state.output_m[r.clone()],
                &mut state.output_v[r],
                g,
            );
        }
        for (id, g) in grads.bias.iter() {
            update(
                &mut self.output_bias[id..id + 1],
                &mut state.bias_m[id..id + 1],
                &mut state.bias_v[id..id + 1],
                g,
            );
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.write_into(&mut w);
        w.buf
    }

    fn write_into(&self, w: &mut ByteWriter) {
        w.bytes(MODEL_MAGIC);
        w.u32(FORMAT_VERSION);
        w.u64(self.vocab_size as u64);
        w.u64(self.dim as u64);
        w.u64(self.order as u64);
        w.u32(match self.combiner {
            Combiner::Positional => 0,
            Combiner::Average => 1,
        });
        w.f64s(&self.input_embeddings);
        w.f64s(&self.context_weights);
        w.f64s(&self.output_embeddings);
        w.f64s(&self.output_bias);
    }

    fn read_from(r: &mut ByteReader) -> Result<Self> {
        r.expect_magic(MODEL_MAGIC)?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let vocab_size = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let order = r.u64()? as usize;
        let combiner = match r.u32()? {
            0 => Combiner::Positional,
            1 => Combiner::Average,
            other => {
                return Err(Error::format(
                    "checkpoint",
                    format!("unknown combiner {other}"),
                ))
            }
        };
        if vocab_size < 2 || dim < 1 || order < 1 {
            return Err(Error::format("checkpoint", "invalid dimensions"));
        }
        let ctx = match combiner {
            Combiner::Positional => order * dim * dim,
            Combiner::Average => 0,
        };
        Ok(ModelParams {
            vocab_size,
            dim,
            order,
            combiner,
            input_embeddings: r.f64s(vocab_size * dim)?,
            context_weights: r.f64s(ctx)?,
            output_embeddings: r.f64s(vocab_size * dim)?,
            output_bias: r.f64s(vocab_size)?,
        })
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let (params, state) = Self::checkpoint_from_bytes(data)?;
        if state.is_some() {
            return Err(Error::format(
                "checkpoint",
                "trailing optimizer state; use checkpoint_from_bytes",
            ));
        }
        Ok(params)
    }

    /// Parameters followed by optional Adam state under its own magic.
    pub fn checkpoint_to_bytes(&self, adam: Option<&AdamState>) -> Vec<u8> {
        let mut w = ByteWriter::new();
        self.write_into(&mut w);
        if let Some(s) = adam {
            w.bytes(ADAM_MAGIC);
            w.u32(FORMAT_VERSION);
            w.u64(s.step);
            for block in s.blocks() {
                w.f64s(block);
            }
        }
        w.buf
    }

    pub fn checkpoint_from_bytes(data: &[u8]) -> Result<(Self, Option<AdamState>)> {
        let mut r = ByteReader::new("checkpoint", data);
        let params = Self::read_from(&mut r)?;
        if r.at_end() {
            return Ok((params, None));
        }
        r.expect_magic(ADAM_MAGIC)?;
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported adam version {version}"),
            ));
        }
        let mut state = AdamState::new(&params);
        state.step = r.u64()?;
        for block in state.blocks_mut() {
            let n = block.len();
            block.copy_from_slice(&r.f64s(n)?);
        }
        r.finish()?;
        Ok((params, Some(state)))
    }
}

/// Sparse gradient rows of one parameter matrix.
#[derive(Clone, Debug, Default)]
pub struct RowGrads {
    dim: usize,
    ids: Vec<usize>,
    data: Vec<f64>,
    slots: HashMap<usize, usize>,
}

impl RowGrads {
    pub fn new(dim: usize) -> Self {
        RowGrads {
            dim,
            ..Default::default()
        }
    }

    /// The gradient row for `id`, created as zeros on first touch.
    pub fn row_mut(&mut self, id: usize) -> &mut [f64] {
        let slot = match self.slots.get(&id) {
            Some(&s) => s,
            None => {
                let s = self.ids.len();
                self.slots.insert(id, s);
                self.ids.push(id);
                self.data.resize(self.data.len() + self.dim, 0.0);
                s
            }
        };
        &mut self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn row(&self, id: usize) -> Option<&[f64]> {
        self.slots
            .get(&id)
            .map(|&s| &self.data[s * self.dim..(s + 1) * self.dim])
    }

    /// Touched rows in first-touch order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.ids
            .iter()
            .copied()
            .zip(self.data.chunks_exact(self.dim.max(1)))
    }

    pub fn touched(&self) -> &[usize] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Dense copy with `rows` rows.
    pub fn to_dense(&self, rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * self.dim];
        for (id, g) in self.iter() {
            out[id * self.dim..(id + 1) * self.dim].copy_from_slice(g);
        }
        out
    }
}

/// Gradients of the criterion with respect to [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamGrads {
    pub input: RowGrads,
    pub context: Vec<f64>,
    pub output: RowGrads,
    pub bias: RowGrads,
}

impl ParamGrads {
    pub fn new(params: &ModelParams) -> Self {
        ParamGrads {
            input: RowGrads::new(params.dim),
            context: vec![0.0; params.context_weights.len()],
            output: RowGrads::new(params.dim),
            bias: RowGrads::new(1),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.input.data.iter().all(|&v| v == 0.0)
            && self.context.iter().all(|&v| v == 0.0)
            && self.output.data.iter().all(|&v| v == 0.0)
            && self.bias.data.iter().all(|&v| v == 0.0)
    }

    /// Gradient flattened in the order input, context, output, bias.
    pub fn to_dense(&self, params: &ModelParams) -> Vec<f64> {
        let c = params.vocab_size;
        let mut out = self.input.to_dense(c);
        out.extend_from_slice(&self.context);
        out.extend(self.output.to_dense(c));
        out.extend(self.bias.to_dense(c));
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    input_m: Vec<f64>,
    input_v: Vec<f64>,
    context_m: Vec<f64>,
    context_v: Vec<f64>,
    output_m: Vec<f64>,
    output_v: Vec<f64>,
    bias_m: Vec<f64>,
    bias_v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            input_m: vec![0.0; params.input_embeddings.len()],
            input_v: vec![0.0; params.input_embeddings.len()],
            context_m: vec![0.0; params.context_weights.len()],
            context_v: vec![0.0; params.context_weights.len()],
            output_m: vec![0.0; params.output_embeddings.len()],
            output_v: vec![0.0; params.output_embeddings.len()],
            bias_m: vec![0.0; params.output_bias.len()],
            bias_v: vec![0.0; params.output_bias.len()],
        }
    }

    fn blocks(&self) -> [&Vec<f64>; 8] {
        [
            &self.input_m,
            &self.input_v,
            &self.context_m,
            &self.context_v,
            &self.output_m,
            &self.output_v,
            &self.bias_m,
            &self.bias_v,
        ]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.input_m,
            &mut self.input_v,
            &mut self.context_m,
            &mut self.context_v,
            &mut self.output_m,
            &mut self.output_v,
            &mut self.bias_m,
            &mut self.bias_v,
        ]
    }
}
