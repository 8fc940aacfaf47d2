//! Training criteria: loss values and analytic gradients with respect to the
//! raw scores `s(x, c)`.
//!
//! Every criterion returns the value to **maximize** (mean over pairs) and
//! `dF/ds` at each scored position. Sampled criteria score the target and the
//! `K` sample ids of each pair; the full-vocabulary criteria (`CE`,
//! `BCE_FULL`) score all `C` classes.
//!
//! With the sigmoid link `q = sigmoid(s)` the log terms are evaluated as
//! `ln q = -softplus(-s)` and `ln(1 - q) = -softplus(s)`, which is finite for
//! every finite score.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::math::{log_sigmoid, log_sum_exp, sigmoid, softplus_sigmoid};
use crate::sampling::SampleSet;

/// Clamp applied whenever a probability itself (not a score) is fed to a log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Criterion {
    Ce,
    BceFull,
    Nce,
    Is,
    Mode1,
    Mode2,
    Mode3,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::Ce,
        Criterion::BceFull,
        Criterion::Nce,
        Criterion::Is,
        Criterion::Mode1,
        Criterion::Mode2,
        Criterion::Mode3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Criterion::Ce => "ce",
            Criterion::BceFull => "bce",
            Criterion::Nce => "nce",
            Criterion::Is => "is",
            Criterion::Mode1 => "mode1",
            Criterion::Mode2 => "mode2",
            Criterion::Mode3 => "mode3",
        }
    }

    /// Whether the criterion scores only the target and the sampled ids.
    pub fn is_sampled(self) -> bool {
        !matches!(self, Criterion::Ce | Criterion::BceFull)
    }

    pub fn default_link(self) -> Link {
        match self {
            Criterion::Ce => Link::Softmax,
            _ => Link::Sigmoid,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config("criterion", format!("unknown criterion {s:?}")))
    }
}

/// How raw scores become model outputs `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Link {
    Sigmoid,
    Exp,
    Softmax,
}

impl Link {
    pub fn name(self) -> &'static str {
        match self {
            Link::Sigmoid => "sigmoid",
            Link::Exp => "exp",
            Link::Softmax => "softmax",
        }
    }

    /// Elementwise output for the pointwise links.
    pub fn apply(self, s: f64) -> f64 {
        match self {
            Link::Sigmoid => sigmoid(s),
            Link::Exp => s.exp(),
            Link::Softmax => panic!("softmax is not a pointwise link"),
        }
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Link::Sigmoid),
            "exp" => Ok(Link::Exp),
            "softmax" => Ok(Link::Softmax),
            _ => Err(Error::config("link", format!("unknown link {s:?}"))),
        }
    }
}

/// A criterion together with its link function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CriterionKind {
    criterion: Criterion,
    link: Link,
}

impl CriterionKind {
    /// CE requires softmax, NCE takes sigmoid or exp, and every other
    /// criterion requires sigmoid (`q` in `(0, 1)`).
    pub fn new(criterion: Criterion, link: Link) -> Result<Self> {
        let ok = match criterion {
            Criterion::Ce => link == Link::Softmax,
            Criterion::Nce => matches!(link, Link::Sigmoid | Link::Exp),
            _ => link == Link::Sigmoid,
        };
        if !ok {
            return Err(Error::config(
                "link",
                format!(
                    "link {} is not valid for criterion {criterion}",
                    link.name()
                ),
            ));
        }
        Ok(CriterionKind { criterion, link })
    }

    pub fn with_default_link(criterion: Criterion) -> Self {
        CriterionKind {
            criterion,
            link: criterion.default_link(),
        }
    }

    pub fn criterion(self) -> Criterion {
        self.criterion
    }

    pub fn link(self) -> Link {
        self.link
    }
}

/// Sample ids either shared by all pairs of a batch or drawn per pair.
#[derive(Clone, Copy, Debug)]
pub enum SampleView<'a> {
    Shared(&'a SampleSet),
    PerPair(&'a [SampleSet]),
}

impl<'a> SampleView<'a> {
    pub fn set(&self, n: usize) -> &'a SampleSet {
        match *self {
            SampleView::Shared(s) => s,
            SampleView::PerPair(sets) => &sets[n],
        }
    }

    pub fn k(&self) -> usize {
        match *self {
            SampleView::Shared(s) => s.k(),
            SampleView::PerPair(sets) => sets.first().map_or(0, SampleSet::k),
        }
    }
}

/// Scores for a batch of pairs under a sampled criterion.
///
/// `sample_scores` is row-major `B x K`, positionally aligned with the
/// sample set of each pair.
#[derive(Clone, Copy, Debug)]
pub struct SampledScores<'a> {
    pub targets: &'a [usize],
    pub target_scores: &'a [f64],
    pub sample_scores: &'a [f64],
    pub samples: SampleView<'a>,
}

impl SampledScores<'_> {
    fn validate(&self) -> Result<(usize, usize)> {
        let b = self.targets.len();
        if b == 0 {
            return Err(Error::EmptyInput("batch without pairs".into()));
        }
        let k = self.samples.k();
        if self.target_scores.len() != b || self.sample_scores.len() != b * k {
            return Err(Error::invalid(
                "scores",
                "score shapes do not match the batch",
            ));
        }
        if let SampleView::PerPair(sets) = self.samples {
            if sets.len() != b || sets.iter().any(|s| s.k() != k) {
                return Err(Error::invalid(
                    "samples",
                    "per-pair sample sets must all have K ids",
                ));
            }
        }
        if self
            .target_scores
            .iter()
            .chain(self.sample_scores)
            .any(|s| !s.is_finite())
        {
            return Err(Error::Numeric("non-finite score".into()));
        }
        Ok((b, k))
    }
}

/// Criterion value (to maximize) and `dF/ds` per scored position.
#[derive(Clone, Debug, PartialEq)]
pub struct LossResult {
    pub loss: f64,
    /// `dF/ds(x_n, c_n)`; all zero for full-vocabulary criteria.
    pub target_grads: Vec<f64>,
    /// `dF/ds` at the candidate positions, row-major `B x width`.
    pub sample_grads: Vec<f64>,
    /// Candidates per pair: `K` for sampled criteria, `C` for full ones.
    pub width: usize,
}

impl LossResult {
    /// Gradient of pair `n` as a sparse map `id -> dF/ds`, summing
    /// duplicate ids. `candidates` are the ids scored for that pair.
    pub fn pair_grads(
        &self,
        n: usize,
        target: usize,
        candidates: &[usize],
    ) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        let t = self.target_grads[n];
        if t != 0.0 {
            *out.entry(target).or_insert(0.0) += t;
        }
        let row = &self.sample_grads[n * self.width..(n + 1) * self.width];
        for (&c, &g) in candidates.iter().zip(row) {
            if g != 0.0 {
                *out.entry(c).or_insert(0.0) += g;
            }
        }
        out
    }
}

fn validate_full(all_scores: &[f64], num_classes: usize, targets: &[usize]) -> Result<usize> {
    let b = targets.len();
    if b == 0 {
        return Err(Error::EmptyInput("batch without pairs".into()));
    }
    if num_classes == 0 || all_scores.len() != b * num_classes {
        return Err(Error::invalid("scores", "expected a B x C score matrix"));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= num_classes) {
        return Err(Error::invalid(
            "targets",
            format!("target {t} >= C = {num_classes}"),
        ));
    }
    if all_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    Ok(b)
}

/// Full-softmax cross entropy: `mean_n ln softmax(s_n)[c_n]`.
pub fn ce_loss(all_scores: &[f64], num_classes: usize, targets: &[usize]) -> Result<LossResult> {
    let b = validate_full(all_scores, num_classes, targets)?;
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; all_scores.len()];
    for (n, &t) in targets.iter().enumerate() {
        let row = &all_scores[n * num_classes..(n + 1) * num_classes];
        let lse = log_sum_exp(row.iter().copied());
        loss += row[t] - lse;
        let g = &mut grads[n * num_classes..(n + 1) * num_classes];
        for (gc, &s) in g.iter_mut().zip(row) {
            *gc = -(s - lse).exp() * inv_b;
        }
        g[t] += inv_b;
    }
    Ok(LossResult {
        loss: loss * inv_b,
        target_grads: vec![0.0; b],
        sample_grads: grads,
        width: num_classes,
    })
}

/// Binary cross entropy over the full vocabulary:
/// `mean_n [ln q(c_n) + sum_{c != c_n} ln(1 - q(c))]` with `q = sigmoid(s)`.
pub fn bce_full_loss(
    all_scores: &[f64],
    num_classes: usize,
    targets: &[usize],
) -> Result<LossResult> {
    let b = validate_full(all_scores, num_classes, targets)?;
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; all_scores.len()];
    for (n, &t) in targets.iter().enumerate() {
        let row = &all_scores[n * num_classes..(n + 1) * num_classes];
        let g = &mut grads[n * num_classes..(n + 1) * num_classes];
        for (c, (&s, gc)) in row.iter().zip(g.iter_mut()).enumerate() {
            if c == t {
                loss += log_sigmoid(s);
                *gc = sigmoid(-s) * inv_b;
            } else {
                loss += log_sigmoid(-s);
                *gc = -sigmoid(s) * inv_b;
            }
        }
    }
    Ok(LossResult {
        loss: loss * inv_b,
        target_grads: vec![0.0; b],
        sample_grads: grads,
        width: num_classes,
    })
}

/// Noise contrastive estimation:
/// `mean_n [ln(q_t / (q_t + E_{c_n})) + sum_k ln(1 - q_k / (q_k + E_k))]`.
///
/// `target_counts[n]` is `E_{c_n}` under the sampler that produced the
/// samples and must be positive.
pub fn nce_loss(input: &SampledScores, target_counts: &[f64], link: Link) -> Result<LossResult> {
    let (b, k) = input.validate()?;
    if target_counts.len() != b {
        return Err(Error::invalid(
            "target_counts",
            "one expected count per pair",
        ));
    }
    if let Some(e) = target_counts
        .iter()
        .find(|e| !(**e > 0.0) || !e.is_finite())
    {
        return Err(Error::invalid(
            "target_counts",
            format!("target expected count {e} is not positive; the target needs noise support"),
        ));
    }
    if link == Link::Softmax {
        return Err(Error::config("link", "NCE takes the sigmoid or exp link"));
    }
    // Both links are written through r = ln q - ln E:
    //   ln(q/(q+E))     = -softplus(-r) = ln sigmoid(r)
    //   ln(1 - q/(q+E)) = -softplus(r)  = ln sigmoid(-r)
    // and dr/ds is (1 - q) for sigmoid and 1 for exp.
    let log_q = |s: f64| match link {
        Link::Sigmoid => log_sigmoid(s),
        Link::Exp => s,
        Link::Softmax => unreachable!(),
    };
    let dlogq = |s: f64| match link {
        Link::Sigmoid => sigmoid(-s),
        Link::Exp => 1.0,
        Link::Softmax => unreachable!(),
    };

    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut target_grads = vec![0.0; b];
    let mut sample_grads = vec![0.0; b * k];
    for n in 0..b {
        let st = input.target_scores[n];
        let r = log_q(st) - target_counts[n].ln();
        loss += log_sigmoid(r);
        target_grads[n] = sigmoid(-r) * dlogq(st) * inv_b;

        let set = input.samples.set(n);
        for (j, &e) in set.expected_counts().iter().enumerate() {
            let s = input.sample_scores[n * k + j];
            // ln(1 - q/(q+E)) = -ln(1 + q/E)
            let (term, grad) = match link {
                Link::Sigmoid => {
                    let (_, q, one_minus_q) = softplus_sigmoid(s);
                    (-(q / e).ln_1p(), -q * one_minus_q / (q + e))
                }
                _ => {
                    let (sp, sg, _) = softplus_sigmoid(s - e.ln());
                    (-sp, -sg)
                }
            };
            loss += term;
            sample_grads[n * k + j] = grad * inv_b;
        }
    }
    Ok(LossResult {
        loss: loss * inv_b,
        target_grads,
        sample_grads,
        width: k,
    })
}

/// Shared body of the importance-sampling family.
///
/// `subtract_target` adds `-ln(1 - q_t)`; `skip_target_samples` zeroes the
/// sampled term whenever a sample equals the pair's target.
fn importance_family(
    input: &SampledScores,
    subtract_target: bool,
    skip_target_samples: bool,
) -> Result<LossResult> {
    let (b, k) = input.validate()?;
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut target_grads = vec![0.0; b];
    let mut sample_grads = vec![0.0; b * k];
    for n in 0..b {
        let st = input.target_scores[n];
        loss += log_sigmoid(st);
        // d ln q / ds = 1 - q;  d(-ln(1 - q))/ds = q
        target_grads[n] = if subtract_target {
            loss -= log_sigmoid(-st);
            inv_b
        } else {
            sigmoid(-st) * inv_b
        };

        let set = input.samples.set(n);
        let target = input.targets[n];
        for (j, (&c, &e)) in set.samples().iter().zip(set.expected_counts()).enumerate() {
            if skip_target_samples && c == target {
                continue;
            }
            let s = input.sample_scores[n * k + j];
            let (sp, sg, _) = softplus_sigmoid(s);
            loss -= sp / e;
            sample_grads[n * k + j] = -sg / e * inv_b;
        }
    }
    Ok(LossResult {
        loss: loss * inv_b,
        target_grads,
        sample_grads,
        width: k,
    })
}

/// Importance sampling: `mean_n [ln q_t + sum_k ln(1 - q_k) / E_k]`.
/// Its optimum is `q = p / (1 + p)`, not `p`; see [`is_correct_posterior`].
pub fn is_loss(input: &SampledScores) -> Result<LossResult> {
    importance_family(input, false, false)
}

/// Importance sampling with the target term `ln(1 - q_t)` subtracted.
/// Samples may include the target and then contribute as usual.
pub fn mode1_loss(input: &SampledScores) -> Result<LossResult> {
    importance_family(input, true, false)
}

/// The importance-sampling formula over samples drawn from a noise
/// distribution that gives the target zero mass. Every pair's sample set
/// must carry `excluded_target == Some(c_n)`.
pub fn mode2_loss(input: &SampledScores) -> Result<LossResult> {
    for (n, &t) in input.targets.iter().enumerate() {
        match input.samples.set(n).excluded_target() {
            Some(x) if x == t => {}
            Some(x) => {
                return Err(Error::Mismatch(format!(
                    "pair {n}: samples exclude {x} but the target is {t}"
                )))
            }
            None => {
                return Err(Error::Mismatch(format!(
                    "pair {n}: mode2 needs samples drawn with the target excluded"
                )))
            }
        }
    }
    importance_family(input, false, false)
}

/// Importance sampling with sampled terms dropped whenever the sample is the
/// pair's target.
pub fn mode3_loss(input: &SampledScores) -> Result<LossResult> {
    importance_family(input, false, true)
}

/// Map an IS output `q` to the posterior it estimates, `q / (1 - q)`.
pub fn is_correct_posterior(q: f64) -> Result<f64> {
    if !(q >= 0.0) || q >= 1.0 {
        return Err(Error::invalid(
            "q",
            format!("IS output {q} must lie in [0, 1)"),
        ));
    }
    Ok(q / (1.0 - q))
}

/// Evaluate any sampled criterion. `target_counts` is required for NCE.
pub fn evaluate_sampled(
    kind: CriterionKind,
    input: &SampledScores,
    target_counts: Option<&[f64]>,
) -> Result<LossResult> {
    match kind.criterion() {
        Criterion::Nce => {
            let counts = target_counts.ok_or_else(|| {
                Error::invalid("target_counts", "NCE needs the target expected counts")
            })?;
            nce_loss(input, counts, kind.link())
        }
        Criterion::Is => is_loss(input),
        Criterion::Mode1 => mode1_loss(input),
        Criterion::Mode2 => mode2_loss(input),
        Criterion::Mode3 => mode3_loss(input),
        Criterion::Ce | Criterion::BceFull => Err(Error::Mismatch(format!(
            "{} is a full-vocabulary criterion",
            kind.criterion()
        ))),
    }
}

/// Evaluate a full-vocabulary criterion on a `B x C` score matrix.
pub fn evaluate_full(
    kind: CriterionKind,
    all_scores: &[f64],
    num_classes: usize,
    targets: &[usize],
) -> Result<LossResult> {
    match kind.criterion() {
        Criterion::Ce => ce_loss(all_scores, num_classes, targets),
        Criterion::BceFull => bce_full_loss(all_scores, num_classes, targets),
        other => Err(Error::Mismatch(format!("{other} is a sampled criterion"))),
    }
}
