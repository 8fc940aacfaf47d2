//! Evaluation: normalized perplexity, normalization deficit and posterior
//! recovery.
//!
//! Perplexity and posterior error always renormalize over the full
//! vocabulary. The raw sum of the model outputs is measured separately by
//! [`normalization_deficit`].

use std::collections::HashMap;

use crate::corpus::{Corpus, SyntheticTask};
use crate::criteria::{Criterion, CriterionKind, Link};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, sigmoid};
use crate::model::ModelParams;

/// How raw scores are turned into per-class values before summing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Readout {
    /// `q = link(s)` as trained.
    Raw,
    /// `q / (1 - q)` for importance sampling, the raw link otherwise.
    Corrected,
}

/// The unnormalized, non-negative per-class values.
fn class_values(kind: CriterionKind, readout: Readout, scores: &mut [f64]) {
    let correct = readout == Readout::Corrected && kind.criterion() == Criterion::Is;
    match kind.link() {
        // sigmoid(s) / (1 - sigmoid(s)) = exp(s)
        Link::Sigmoid if correct => scores.iter_mut().for_each(|s| *s = s.exp()),
        Link::Sigmoid => scores.iter_mut().for_each(|s| *s = sigmoid(*s)),
        Link::Exp => scores.iter_mut().for_each(|s| *s = s.exp()),
        Link::Softmax => {
            let lse = log_sum_exp(scores.iter().copied());
            scores.iter_mut().for_each(|s| *s = (*s - lse).exp());
        }
    }
}

/// `ln` of the normalized distribution over the vocabulary. Exp-like
/// readouts are normalized in log space.
fn log_normalized(kind: CriterionKind, readout: Readout, scores: &mut [f64]) -> Result<()> {
    let exp_like = match kind.link() {
        Link::Softmax | Link::Exp => true,
        Link::Sigmoid => readout == Readout::Corrected && kind.criterion() == Criterion::Is,
    };
    if exp_like {
        let lse = log_sum_exp(scores.iter().copied());
        scores.iter_mut().for_each(|s| *s -= lse);
        return Ok(());
    }
    class_values(kind, readout, scores);
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numeric(format!(
            "cannot normalize outputs summing to {total}"
        )));
    }
    let log_total = total.ln();
    scores.iter_mut().for_each(|q| *q = q.ln() - log_total);
    Ok(())
}

/// The model's normalized distribution for one history.
pub fn predictive(
    params: &ModelParams,
    kind: CriterionKind,
    readout: Readout,
    history: &[usize],
) -> Result<Vec<f64>> {
    let mut h = vec![0.0; params.dim()];
    params.hidden_one(history, &mut h);
    let mut scores = vec![0.0; params.vocab_size()];
    params.score_all_one(&h, &mut scores);
    log_normalized(kind, readout, &mut scores)?;
    scores.iter_mut().for_each(|l| *l = l.exp());
    Ok(scores)
}

/// `exp(-mean ln p(c_n | x_n))` over every corpus position `n >= order`,
/// with `p` the model output renormalized over the vocabulary.
pub fn perplexity_with(
    params: &ModelParams,
    kind: CriterionKind,
    readout: Readout,
    corpus: &Corpus,
) -> Result<f64> {
    let m = params.order();
    let ids = corpus.ids();
    if ids.len() <= m {
        return Err(Error::EmptyInput("evaluation corpus has no pairs".into()));
    }
    let mut h = vec![0.0; params.dim()];
    let mut scores = vec![0.0; params.vocab_size()];
    let mut total = 0.0;
    for n in m..ids.len() {
        params.hidden_one(&ids[n - m..n], &mut h);
        params.score_all_one(&h, &mut scores);
        log_normalized(kind, readout, &mut scores)?;
        total -= scores[ids[n]];
    }
    Ok((total / (ids.len() - m) as f64).exp())
}

/// Perplexity under the proper readout: softmax for CE, IS outputs mapped
/// through `q / (1 - q)`, otherwise `q` renormalized.
pub fn perplexity(params: &ModelParams, kind: CriterionKind, corpus: &Corpus) -> Result<f64> {
    perplexity_with(params, kind, Readout::Corrected, corpus)
}

/// Perplexity of the true task on `corpus`.
pub fn oracle_perplexity(task: &SyntheticTask, corpus: &Corpus) -> f64 {
    task.empirical_cross_entropy(corpus).exp()
}

/// Evenly spaced positions `n >= order`, at most `max_contexts` of them.
pub fn context_positions(corpus: &Corpus, order: usize, max_contexts: usize) -> Vec<usize> {
    let pairs = corpus.num_pairs(order);
    if pairs == 0 || max_contexts == 0 {
        return Vec::new();
    }
    let take = pairs.min(max_contexts);
    (0..take).map(|i| order + i * pairs / take).collect()
}

/// Mean of `|sum_c v(x, c) - 1|` over up to `max_contexts` evenly spaced
/// histories, with `v` the raw or corrected per-class outputs.
pub fn normalization_deficit(
    params: &ModelParams,
    kind: CriterionKind,
    readout: Readout,
    corpus: &Corpus,
    max_contexts: usize,
) -> Result<f64> {
    let m = params.order();
    let positions = context_positions(corpus, m, max_contexts);
    if positions.is_empty() {
        return Err(Error::EmptyInput(
            "no contexts for the normalization deficit".into(),
        ));
    }
    let ids = corpus.ids();
    let mut h = vec![0.0; params.dim()];
    let mut scores = vec![0.0; params.vocab_size()];
    let mut total = 0.0;
    for &n in &positions {
        params.hidden_one(&ids[n - m..n], &mut h);
        params.score_all_one(&h, &mut scores);
        class_values(kind, readout, &mut scores);
        let sum: f64 = scores.iter().sum();
        total += (sum - 1.0).abs();
    }
    Ok(total / positions.len() as f64)
}

/// Total-variation distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Mean TV distance between the model's normalized output and the true
/// posterior, weighted by how often each history occurs in `corpus`.
pub fn posterior_error(
    params: &ModelParams,
    kind: CriterionKind,
    task: &SyntheticTask,
    corpus: &Corpus,
) -> Result<f64> {
    if task.vocab_size() != params.vocab_size() || task.order() != params.order() {
        return Err(Error::Mismatch("task and model dimensions differ".into()));
    }
    let m = params.order();
    let ids = corpus.ids();
    if ids.len() <= m {
        return Err(Error::EmptyInput(
            "posterior error needs at least one pair".into(),
        ));
    }
    let mut occupancy: HashMap<&[usize], usize> = HashMap::new();
    let mut order_seen: Vec<&[usize]> = Vec::new();
    for n in m..ids.len() {
        let history = &ids[n - m..n];
        let count = occupancy.entry(history).or_insert(0);
        if *count == 0 {
            order_seen.push(history);
        }
        *count += 1;
    }
    let mut total = 0.0;
    for history in order_seen {
        let q = predictive(params, kind, Readout::Corrected, history)?;
        total += occupancy[history] as f64 * total_variation(&q, task.posterior(history));
    }
    Ok(total / (ids.len() - m) as f64)
}
