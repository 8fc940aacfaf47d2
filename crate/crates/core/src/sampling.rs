//! Noise distributions, samplers and expected counts.
//!
//! A [`SampleSet`] pairs the drawn ids `c_1..c_K` with the expected count
//! `E_c` of each id, i.e. the expected number of times `c` shows up in the
//! set. Criteria divide by `E_c`, so every sample set carries strictly
//! positive counts.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    LogUniform,
    Unigram,
    Custom,
}

/// A proposal distribution over class ids with an inversion table.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseDistribution {
    probs: Vec<f64>,
    cdf: Vec<f64>,
    kind: NoiseKind,
}

impl NoiseDistribution {
    /// `D(c) = (ln(c + 2) - ln(c + 1)) / ln(C + 1)` over frequency ranks.
    pub fn log_uniform(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid("C", "log-uniform needs at least 2 classes"));
        }
        let denom = ((num_classes + 1) as f64).ln();
        let probs = (0..num_classes)
            .map(|c| (((c + 2) as f64) / ((c + 1) as f64)).ln() / denom)
            .collect();
        Ok(Self::from_probs(probs, NoiseKind::LogUniform))
    }

    /// `D(c)` proportional to `count(c) + smoothing`.
    pub fn unigram(vocab: &Vocabulary, smoothing: f64) -> Result<Self> {
        Self::unigram_from_counts(vocab.counts(), smoothing)
    }

    /// Unigram noise from per-id counts, e.g. of a synthetic corpus.
    pub fn unigram_from_counts(counts: &[u64], smoothing: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyInput(
                "unigram noise over an empty vocabulary".into(),
            ));
        }
        if !(smoothing >= 0.0) || !smoothing.is_finite() {
            return Err(Error::invalid(
                "unigram_smoothing",
                "must be finite and >= 0",
            ));
        }
        let weights: Vec<f64> = counts.iter().map(|&n| n as f64 + smoothing).collect();
        if let Some(c) = weights.iter().position(|&w| w <= 0.0) {
            return Err(Error::invalid(
                "unigram_smoothing",
                format!("token id {c} has zero count and smoothing is 0"),
            ));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self::from_probs(
            weights.into_iter().map(|w| w / total).collect(),
            NoiseKind::Unigram,
        ))
    }

    /// Any strictly positive weight vector, normalized.
    pub fn custom(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid("weights", "need at least 2 classes"));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(
                "weights",
                "weights must be positive and finite",
            ));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self::from_probs(
            weights.into_iter().map(|w| w / total).collect(),
            NoiseKind::Custom,
        ))
    }

    fn from_probs(probs: Vec<f64>, kind: NoiseKind) -> Self {
        let mut cdf = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = 1.0;
        NoiseDistribution { probs, cdf, kind }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, c: usize) -> f64 {
        self.probs[c]
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Inversion sampling by binary search over the cumulative table.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf
            .partition_point(|&x| x <= u)
            .min(self.probs.len() - 1)
    }
}

/// Drawn sample ids with their expected counts.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    samples: Vec<usize>,
    expected_counts: Vec<f64>,
    replacement: bool,
    excluded_target: Option<usize>,
}

impl SampleSet {
    /// Build a sample set, checking its invariants.
    pub fn new(
        samples: Vec<usize>,
        expected_counts: Vec<f64>,
        replacement: bool,
        excluded_target: Option<usize>,
    ) -> Result<Self> {
        let s = SampleSet {
            samples,
            expected_counts,
            replacement,
            excluded_target,
        };
        s.validate()?;
        Ok(s)
    }

    /// A sample set without samples.
    pub fn empty() -> Self {
        SampleSet {
            samples: Vec::new(),
            expected_counts: Vec::new(),
            replacement: true,
            excluded_target: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.expected_counts.len() {
            return Err(Error::invalid(
                "sample_set",
                "samples and counts differ in length",
            ));
        }
        if let Some(e) = self
            .expected_counts
            .iter()
            .find(|e| !(**e > 0.0) || !e.is_finite())
        {
            return Err(Error::invalid(
                "sample_set",
                format!("expected count {e} is not positive"),
            ));
        }
        if let Some(t) = self.excluded_target {
            if self.samples.contains(&t) {
                return Err(Error::invalid(
                    "sample_set",
                    format!("excluded target {t} was sampled"),
                ));
            }
        }
        if !self.replacement {
            let mut seen = HashSet::with_capacity(self.samples.len());
            if !self.samples.iter().all(|s| seen.insert(*s)) {
                return Err(Error::invalid(
                    "sample_set",
                    "duplicate id without replacement",
                ));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn expected_counts(&self) -> &[f64] {
        &self.expected_counts
    }

    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn replacement(&self) -> bool {
        self.replacement
    }

    pub fn excluded_target(&self) -> Option<usize> {
        self.excluded_target
    }
}

/// `K` iid draws; `E_c = K D(c)`.
pub fn draw_with_replacement<R: Rng + ?Sized>(
    dist: &NoiseDistribution,
    k: usize,
    rng: &mut R,
) -> SampleSet {
    let kf = k as f64;
    let samples: Vec<usize> = (0..k).map(|_| dist.sample(rng)).collect();
    let expected_counts = samples.iter().map(|&c| kf * dist.prob(c)).collect();
    SampleSet {
        samples,
        expected_counts,
        replacement: true,
        excluded_target: None,
    }
}

/// Inclusion probabilities of the successive (draw-and-reject-duplicates)
/// sampler: `pi_c = P(c is among the K distinct ids)`.
///
/// Drawing proportionally to `D` and rejecting repeats orders the classes
/// like an exponential race with rates `D(c)`, so
/// `pi_c = int_0^inf S_c(t) d(1 - e^{-D(c) t})` where `S_c(t)` is the
/// probability that fewer than `K` other classes have arrived by time `t`.
/// The arrival count is Poisson-binomial; leave-one-out distributions come
/// from truncated prefix/suffix products, and the integral is a trapezoid
/// rule in the measure `d(1 - e^{-D(c) t})` on a grid spaced evenly in the
/// expected number of arrivals.
#[derive(Clone, Debug, PartialEq)]
pub struct InclusionTable {
    k: usize,
    probs: Vec<f64>,
}

impl InclusionTable {
    pub fn exact(dist: &NoiseDistribution, k: usize) -> Result<Self> {
        let c = dist.len();
        if k == 0 || k >= c {
            return Err(Error::invalid(
                "K",
                format!("need 1 <= K < C (K={k}, C={c})"),
            ));
        }
        let d = dist.probs();
        let step_m = 0.1 * (k as f64).sqrt();
        let mut pi = vec![0.0; c];
        let mut prev_a = vec![0.0; c];
        let mut prev_s = vec![1.0; c];
        let mut a = vec![0.0; c];
        let mut s = vec![0.0; c];
        // suffix[j * k + i] = P(i arrivals among classes j.., cumulated over i)
        let mut suffix = vec![0.0; (c + 1) * k];
        let mut poly = vec![0.0; k];
        let mut t = 0.0f64;

        for _ in 0..1_000_000 {
            let rate: f64 = d.iter().map(|&dj| dj * (-dj * t).exp()).sum();
            let arrived: f64 = prev_a.iter().sum();
            let step = step_m.min(0.25 * (c as f64 - arrived));
            t += step / rate.max(1e-300);
            for (aj, &dj) in a.iter_mut().zip(d) {
                *aj = -(-dj * t).exp_m1();
            }

            poly.iter_mut().for_each(|p| *p = 0.0);
            poly[0] = 1.0;
            cumulate_into(&poly, &mut suffix[c * k..(c + 1) * k]);
            for j in (0..c).rev() {
                bernoulli_step(&mut poly, a[j]);
                cumulate_into(&poly, &mut suffix[j * k..(j + 1) * k]);
            }
            poly.iter_mut().for_each(|p| *p = 0.0);
            poly[0] = 1.0;
            let mut max_s = 0.0f64;
            for j in 0..c {
                let suf = &suffix[(j + 1) * k..(j + 2) * k];
                let mut acc = 0.0;
                for i in 0..k {
                    acc += poly[i] * suf[k - 1 - i];
                }
                s[j] = acc.clamp(0.0, 1.0);
                max_s = max_s.max(s[j]);
                bernoulli_step(&mut poly, a[j]);
            }

            for j in 0..c {
                pi[j] += 0.5 * (prev_s[j] + s[j]) * (a[j] - prev_a[j]);
            }
            std::mem::swap(&mut prev_a, &mut a);
            std::mem::swap(&mut prev_s, &mut s);
            if max_s < 1e-14 {
                break;
            }
        }
        for j in 0..c {
            pi[j] += prev_s[j] * (1.0 - prev_a[j]);
        }
        Ok(InclusionTable { k, probs: pi })
    }

    /// The closed-form approximation `1 - (1 - D(c))^K`; exact for `K = 1`.
    pub fn approximate(dist: &NoiseDistribution, k: usize) -> Result<Self> {
        if k == 0 || k >= dist.len() {
            return Err(Error::invalid(
                "K",
                format!("need 1 <= K < C (K={k}, C={})", dist.len()),
            ));
        }
        let probs = dist
            .probs()
            .iter()
            .map(|&p| -((k as f64) * (-p).ln_1p()).exp_m1())
            .collect();
        Ok(InclusionTable { k, probs })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, c: usize) -> f64 {
        self.probs[c]
    }
}

/// Multiply a truncated polynomial by `(1 - a) + a z`.
#[inline]
fn bernoulli_step(poly: &mut [f64], a: f64) {
    let b = 1.0 - a;
    for i in (1..poly.len()).rev() {
        poly[i] = poly[i] * b + poly[i - 1] * a;
    }
    poly[0] *= b;
}

#[inline]
fn cumulate_into(poly: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    for (o, p) in out.iter_mut().zip(poly) {
        acc += p;
        *o = acc;
    }
}

/// `K` distinct ids by rejecting repeats; `E_c` is the inclusion
/// probability from `table`.
pub fn draw_without_replacement<R: Rng + ?Sized>(
    dist: &NoiseDistribution,
    table: &InclusionTable,
    rng: &mut R,
) -> SampleSet {
    let k = table.k();
    let mut seen = HashSet::with_capacity(2 * k);
    let mut samples = Vec::with_capacity(k);
    while samples.len() < k {
        let c = dist.sample(rng);
        if seen.insert(c) {
            samples.push(c);
        }
    }
    let expected_counts = samples.iter().map(|&c| table.prob(c)).collect();
    SampleSet {
        samples,
        expected_counts,
        replacement: false,
        excluded_target: None,
    }
}

/// Map an id drawn over `C - 1` labels onto `[0, C) \ {target}`.
#[inline]
pub fn remap_excluding(target: usize, reduced: usize) -> usize {
    if reduced < target {
        reduced
    } else {
        reduced + 1
    }
}

/// `K` draws with replacement from `reduced` (a distribution over `C - 1`
/// labels), remapped around `target` so the target is never drawn.
/// The per-target distribution is `D_t(c) = reduced(c')` with `c'` the
/// preimage of `c`, hence `E_c = K reduced(c')`.
pub fn draw_excluding_target<R: Rng + ?Sized>(
    reduced: &NoiseDistribution,
    k: usize,
    target: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    if target > reduced.len() {
        return Err(Error::invalid(
            "target",
            format!("target {target} outside [0, {})", reduced.len() + 1),
        ));
    }
    let kf = k as f64;
    let mut samples = Vec::with_capacity(k);
    let mut expected_counts = Vec::with_capacity(k);
    for _ in 0..k {
        let r = reduced.sample(rng);
        samples.push(remap_excluding(target, r));
        expected_counts.push(kf * reduced.prob(r));
    }
    Ok(SampleSet {
        samples,
        expected_counts,
        replacement: true,
        excluded_target: Some(target),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMode {
    WithReplacement,
    WithoutReplacement,
    ExcludeTarget,
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerMode::WithReplacement => "with_replacement",
            SamplerMode::WithoutReplacement => "without_replacement",
            SamplerMode::ExcludeTarget => "exclude_target",
        })
    }
}

/// A configured sampler: a noise distribution, a mode and `K`.
#[derive(Clone, Debug)]
pub struct Sampler {
    dist: NoiseDistribution,
    mode: SamplerMode,
    k: usize,
    inclusion: Option<InclusionTable>,
    reduced: Option<NoiseDistribution>,
}

impl Sampler {
    pub fn new(dist: NoiseDistribution, mode: SamplerMode, k: usize) -> Result<Self> {
        let mut inclusion = None;
        let mut reduced = None;
        match mode {
            SamplerMode::WithReplacement => {}
            SamplerMode::WithoutReplacement => {
                inclusion = Some(InclusionTable::exact(&dist, k)?);
            }
            SamplerMode::ExcludeTarget => {
                // Log-uniform targets use a log-uniform over C - 1 ranks;
                // other kinds are realized by rejecting the target.
                if dist.kind() == NoiseKind::LogUniform {
                    if dist.len() < 3 {
                        return Err(Error::invalid("C", "target exclusion needs C >= 3"));
                    }
                    reduced = Some(NoiseDistribution::log_uniform(dist.len() - 1)?);
                }
            }
        }
        Ok(Sampler {
            dist,
            mode,
            k,
            inclusion,
            reduced,
        })
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dist(&self) -> &NoiseDistribution {
        &self.dist
    }

    pub fn inclusion(&self) -> Option<&InclusionTable> {
        self.inclusion.as_ref()
    }

    /// One sample set to be reused by every pair of a batch.
    pub fn shared_batch_samples<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SampleSet> {
        match self.mode {
            SamplerMode::WithReplacement => Ok(draw_with_replacement(&self.dist, self.k, rng)),
            SamplerMode::WithoutReplacement => Ok(draw_without_replacement(
                &self.dist,
                self.inclusion.as_ref().unwrap(),
                rng,
            )),
            SamplerMode::ExcludeTarget => Err(Error::Mismatch(
                "target-excluding samples depend on the target and cannot be shared".into(),
            )),
        }
    }

    /// A sample set for a single pair with target `target`.
    pub fn draw_for_target<R: Rng + ?Sized>(
        &self,
        target: usize,
        rng: &mut R,
    ) -> Result<SampleSet> {
        match self.mode {
            SamplerMode::ExcludeTarget => match &self.reduced {
                Some(reduced) => draw_excluding_target(reduced, self.k, target, rng),
                None => {
                    let rest = 1.0 - self.dist.prob(target);
                    let kf = self.k as f64;
                    let mut samples = Vec::with_capacity(self.k);
                    while samples.len() < self.k {
                        let c = self.dist.sample(rng);
                        if c != target {
                            samples.push(c);
                        }
                    }
                    let expected_counts = samples
                        .iter()
                        .map(|&c| kf * self.dist.prob(c) / rest)
                        .collect();
                    SampleSet::new(samples, expected_counts, true, Some(target))
                }
            },
            _ => self.shared_batch_samples(rng),
        }
    }

    /// `E_c` under this sampler's count model (0 for an excluded target is
    /// not representable here, so the exclusion mode reports the
    /// unconditional `K D(c)`).
    pub fn expected_count(&self, c: usize) -> f64 {
        match (&self.inclusion, self.mode) {
            (Some(table), SamplerMode::WithoutReplacement) => table.prob(c),
            _ => self.k as f64 * self.dist.prob(c),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Purpose};

    #[test]
    fn log_uniform_two_classes() {
        let d = NoiseDistribution::log_uniform(2).unwrap();
        assert!((d.prob(0) - 2f64.ln() / 3f64.ln()).abs() < 1e-15);
        assert!((d.prob(1) - 1.5f64.ln() / 3f64.ln()).abs() < 1e-15);
        assert!((d.prob(1) - 0.36907).abs() < 1e-5);
        assert!(NoiseDistribution::log_uniform(1).is_err());
    }

    #[test]
    fn log_uniform_is_normalized_and_decreasing() {
        for &c in &[2usize, 3, 10, 100, 5000] {
            let d = NoiseDistribution::log_uniform(c).unwrap();
            assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.probs().windows(2).all(|w| w[0] > w[1]));
            assert!(d.cdf().windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*d.cdf().last().unwrap(), 1.0);
        }
        let d = NoiseDistribution::log_uniform(100).unwrap();
        assert!(d.prob(0) > d.prob(50) && d.prob(50) > d.prob(99));
    }

    #[test]
    fn unigram_is_proportional_to_counts() {
        let v =
            Vocabulary::from_counts(vec![("a".into(), 2), ("b".into(), 1), ("<unk>".into(), 1)])
                .unwrap();
        let d = NoiseDistribution::unigram(&v, 0.0).unwrap();
        assert_eq!(d.probs(), &[0.5, 0.25, 0.25]);
        let flat = NoiseDistribution::unigram(&v, 1e12).unwrap();
        assert!(flat.probs().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-9));
    }

    #[test]
    fn unigram_rejects_zero_counts_without_smoothing() {
        let v = Vocabulary::build(["a a b"], 1).unwrap();
        assert!(NoiseDistribution::unigram(&v, 0.0).is_err());
        assert!(NoiseDistribution::unigram(&v, 0.5).is_ok());
    }

    #[test]
    fn with_replacement_counts() {
        let d = NoiseDistribution::custom(vec![1.0; 10]).unwrap();
        let mut rng = rng::stream(1, Purpose::Noise, 0, 0);
        let s = draw_with_replacement(&d, 100, &mut rng);
        assert_eq!(s.k(), 100);
        assert!(s.replacement());
        assert!(s
            .expected_counts()
            .iter()
            .all(|&e| (e - 10.0).abs() < 1e-12));
        let one = draw_with_replacement(&d, 1, &mut rng);
        assert!((one.expected_counts()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn without_replacement_is_distinct() {
        let d = NoiseDistribution::custom(vec![1.0; 6]).unwrap();
        let table = InclusionTable::exact(&d, 5).unwrap();
        let mut rng = rng::stream(2, Purpose::Noise, 0, 0);
        for _ in 0..50 {
            let s = draw_without_replacement(&d, &table, &mut rng);
            s.validate().unwrap();
            let mut ids = s.samples().to_vec();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), 5);
        }
        assert!(InclusionTable::exact(&d, 6).is_err());
        assert!(InclusionTable::exact(&d, 0).is_err());
    }

    #[test]
    fn inclusion_reduces_to_noise_probability_for_one_sample() {
        let d = NoiseDistribution::custom(vec![0.5, 0.3, 0.2]).unwrap();
        let exact = InclusionTable::exact(&d, 1).unwrap();
        let approx = InclusionTable::approximate(&d, 1).unwrap();
        assert!((exact.prob(0) - 0.5).abs() < 1e-3, "{}", exact.prob(0));
        for c in 0..3 {
            assert!((approx.prob(c) - d.prob(c)).abs() < 1e-15);
            assert!((exact.prob(c) - d.prob(c)).abs() < 1e-3);
        }
    }

    #[test]
    fn inclusion_matches_enumeration_for_three_classes() {
        // Successive sampling of 2 out of 3: P(c excluded) = sum over the
        // first draw j != c of D_j * D_l / (1 - D_j) with l the third class.
        let p = [0.6, 0.3, 0.1];
        let d = NoiseDistribution::custom(p.to_vec()).unwrap();
        let t = InclusionTable::exact(&d, 2).unwrap();
        for c in 0..3 {
            let others: Vec<usize> = (0..3).filter(|&j| j != c).collect();
            let (j, l) = (others[0], others[1]);
            let excluded = p[j] * p[l] / (1.0 - p[j]) + p[l] * p[j] / (1.0 - p[l]);
            assert!(
                (t.prob(c) - (1.0 - excluded)).abs() < 1e-3,
                "{c}: {} vs {}",
                t.prob(c),
                1.0 - excluded
            );
        }
        assert!((t.probs().iter().sum::<f64>() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn excluding_target_remaps_around_target() {
        assert_eq!(remap_excluding(5, 3), 3);
        assert_eq!(remap_excluding(5, 5), 6);
        assert_eq!(remap_excluding(0, 0), 1);
        let reduced = NoiseDistribution::log_uniform(9).unwrap();
        let mut rng = rng::stream(3, Purpose::Noise, 0, 0);
        for target in 0..10 {
            let s = draw_excluding_target(&reduced, 50, target, &mut rng).unwrap();
            s.validate().unwrap();
            assert!(!s.samples().contains(&target));
            assert!(s.samples().iter().all(|&c| c < 10));
        }
        assert!(draw_excluding_target(&reduced, 5, 10, &mut rng).is_err());
    }

    #[test]
    fn remapping_is_a_bijection_onto_the_complement() {
        for c in 2..12 {
            for target in 0..c {
                let mut image: Vec<usize> =
                    (0..c - 1).map(|r| remap_excluding(target, r)).collect();
                image.sort_unstable();
                let expected: Vec<usize> = (0..c).filter(|&x| x != target).collect();
                assert_eq!(image, expected);
            }
        }
    }

    #[test]
    fn sample_set_invariants_are_enforced() {
        assert!(SampleSet::new(vec![1, 2], vec![1.0], true, None).is_err());
        assert!(SampleSet::new(vec![1], vec![0.0], true, None).is_err());
        assert!(SampleSet::new(vec![1, 1], vec![1.0, 1.0], false, None).is_err());
        assert!(SampleSet::new(vec![1, 1], vec![1.0, 1.0], true, None).is_ok());
        assert!(SampleSet::new(vec![3], vec![1.0], true, Some(3)).is_err());
    }

    #[test]
    fn exclusion_sampler_cannot_be_shared() {
        let d = NoiseDistribution::log_uniform(10).unwrap();
        let s = Sampler::new(d, SamplerMode::ExcludeTarget, 4).unwrap();
        let mut rng = rng::stream(0, Purpose::Noise, 0, 0);
        assert!(matches!(
            s.shared_batch_samples(&mut rng),
            Err(Error::Mismatch(_))
        ));
        let set = s.draw_for_target(7, &mut rng).unwrap();
        assert_eq!(set.excluded_target(), Some(7));
    }

    #[test]
    fn rejection_exclusion_for_non_log_uniform_noise() {
        let d = NoiseDistribution::custom(vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        let s = Sampler::new(d, SamplerMode::ExcludeTarget, 3).unwrap();
        let mut rng = rng::stream(0, Purpose::Noise, 0, 0);
        let set = s.draw_for_target(0, &mut rng).unwrap();
        assert!(!set.samples().contains(&0));
        for (&c, &e) in set.samples().iter().zip(set.expected_counts()) {
            let want = 3.0 * [0.4, 0.3, 0.2, 0.1][c] / 0.6;
            assert!((e - want).abs() < 1e-12);
        }
    }
}
