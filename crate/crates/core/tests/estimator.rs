//! Monte Carlo checks of the samplers against their count models.

use snis::rng::{self, Purpose};
use snis::sampling::{InclusionTable, Sampler, SamplerMode};
use snis::{NoiseDistribution, SampleSet};

const C: usize = 50;
const R: usize = 10_000;

fn weights() -> Vec<f64> {
    (0..C)
        .map(|c| ((c as f64 * 0.37).sin() + 1.5) / (1.0 + c as f64).sqrt())
        .collect()
}

fn sampled_sum(set: &SampleSet, f: &[f64]) -> f64 {
    set.samples()
        .iter()
        .zip(set.expected_counts())
        .map(|(&c, &e)| f[c] / e)
        .sum()
}

fn mean_and_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn estimates(sampler: &Sampler, f: &[f64], target: Option<usize>, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Purpose::Noise, sampler.k() as u64, 0);
    (0..R)
        .map(|_| {
            let set = match target {
                Some(t) => sampler.draw_for_target(t, &mut rng).unwrap(),
                None => sampler.shared_batch_samples(&mut rng).unwrap(),
            };
            sampled_sum(&set, f)
        })
        .collect()
}

#[test]
fn sampled_sum_is_unbiased_with_replacement() {
    let f = weights();
    let full: f64 = f.iter().sum();
    for k in [8, 32, 128] {
        let sampler = Sampler::new(
            NoiseDistribution::log_uniform(C).unwrap(),
            SamplerMode::WithReplacement,
            k,
        )
        .unwrap();
        let (mean, var) = mean_and_variance(&estimates(&sampler, &f, None, 3));
        let se = (var / R as f64).sqrt();
        assert!(
            (mean - full).abs() < 3.0 * se,
            "K={k}: {mean} vs {full} (se {se})"
        );
    }
}

#[test]
fn sampled_sum_is_unbiased_without_replacement() {
    let f = weights();
    let full: f64 = f.iter().sum();
    for k in [8, 32] {
        let sampler = Sampler::new(
            NoiseDistribution::log_uniform(C).unwrap(),
            SamplerMode::WithoutReplacement,
            k,
        )
        .unwrap();
        let (mean, var) = mean_and_variance(&estimates(&sampler, &f, None, 5));
        let se = (var / R as f64).sqrt();
        assert!(
            (mean - full).abs() < 3.0 * se,
            "K={k}: {mean} vs {full} (se {se})"
        );
    }
}

#[test]
fn exclusion_sum_covers_the_complement_of_the_target() {
    let f = weights();
    let target = 3;
    let rest: f64 = f
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target)
        .map(|(_, v)| v)
        .sum();
    let linear = NoiseDistribution::custom((1..=C).map(|c| c as f64).collect()).unwrap();
    for noise in [NoiseDistribution::log_uniform(C).unwrap(), linear] {
        let sampler = Sampler::new(noise, SamplerMode::ExcludeTarget, 16).unwrap();
        let (mean, var) = mean_and_variance(&estimates(&sampler, &f, Some(target), 7));
        let se = (var / R as f64).sqrt();
        assert!((mean - rest).abs() < 3.0 * se, "{mean} vs {rest} (se {se})");
    }
}

#[test]
fn variance_scales_inversely_with_k() {
    let f = weights();
    let noise = NoiseDistribution::log_uniform(C).unwrap();
    let var = |k| {
        let sampler = Sampler::new(noise.clone(), SamplerMode::WithReplacement, k).unwrap();
        mean_and_variance(&estimates(&sampler, &f, None, 11)).1
    };
    let ratio = var(8) / var(128);
    assert!((8.0..=32.0).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn without_replacement_inclusion_matches_the_exact_table() {
    let noise = NoiseDistribution::log_uniform(C).unwrap();
    let k = 16;
    let table = InclusionTable::exact(&noise, k).unwrap();
    assert!((table.probs().iter().sum::<f64>() - k as f64).abs() < 1e-4);
    let sampler = Sampler::new(noise, SamplerMode::WithoutReplacement, k).unwrap();
    let mut rng = rng::stream(13, Purpose::Noise, 0, 0);
    let mut hits = vec![0usize; C];
    for _ in 0..R {
        for &c in sampler.shared_batch_samples(&mut rng).unwrap().samples() {
            hits[c] += 1;
        }
    }
    for (c, &h) in hits.iter().enumerate() {
        let p = table.prob(c);
        let sd = (p * (1.0 - p) / R as f64).sqrt();
        let freq = h as f64 / R as f64;
        assert!(
            (freq - p).abs() <= 4.0 * sd.max(1e-4),
            "class {c}: {freq} vs {p}"
        );
    }
}

#[test]
fn with_replacement_frequencies_follow_the_noise() {
    let noise = NoiseDistribution::custom(weights()).unwrap();
    let k = 8;
    let sampler = Sampler::new(noise.clone(), SamplerMode::WithReplacement, k).unwrap();
    let mut rng = rng::stream(17, Purpose::Noise, 0, 0);
    let mut hits = vec![0usize; C];
    for _ in 0..R {
        let set = sampler.shared_batch_samples(&mut rng).unwrap();
        for (&c, &e) in set.samples().iter().zip(set.expected_counts()) {
            assert_eq!(e, k as f64 * noise.prob(c));
            hits[c] += 1;
        }
    }
    let draws = (R * k) as f64;
    for (c, &h) in hits.iter().enumerate() {
        let p = noise.prob(c);
        let sd = (p * (1.0 - p) / draws).sqrt();
        assert!((h as f64 / draws - p).abs() <= 3.5 * sd, "class {c}");
    }
}

#[test]
fn shared_and_per_pair_samples_have_the_same_marginal() {
    // With replacement, a per-pair draw has the law of a shared draw.
    let f = weights();
    let full: f64 = f.iter().sum();
    let sampler = Sampler::new(
        NoiseDistribution::log_uniform(C).unwrap(),
        SamplerMode::WithReplacement,
        32,
    )
    .unwrap();
    let shared = mean_and_variance(&estimates(&sampler, &f, None, 19));
    let per_pair = mean_and_variance(&estimates(&sampler, &f, Some(0), 23));
    for (mean, var) in [shared, per_pair] {
        assert!((mean - full).abs() < 3.0 * (var / R as f64).sqrt());
    }
    assert!((shared.1 / per_pair.1 - 1.0).abs() < 0.1);
}
