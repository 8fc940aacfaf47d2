use proptest::prelude::*;

use snis::corpus::make_batches;
use snis::criteria::{self, SampleView, SampledScores};
use snis::metrics;
use snis::rng::{self, Purpose};
use snis::sampling::{remap_excluding, Sampler, SamplerMode};
use snis::{Corpus, MetricsRow, NoiseDistribution, SampleSet, SyntheticTask, TrainConfig};

fn windows(batches: &[snis::Batch]) -> Vec<(Vec<usize>, usize)> {
    let mut out: Vec<(Vec<usize>, usize)> = batches
        .iter()
        .flat_map(|b| (0..b.len()).map(move |n| (b.history(n).to_vec(), b.targets[n])))
        .collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampler_output_respects_its_mode(
        c in 3usize..40,
        k_frac in 0.05f64..0.95,
        mode in 0usize..3,
        target_frac in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let k = ((c as f64 * k_frac) as usize).clamp(1, c - 1);
        let target = ((c as f64 * target_frac) as usize).min(c - 1);
        let mode = [SamplerMode::WithReplacement, SamplerMode::WithoutReplacement, SamplerMode::ExcludeTarget][mode];
        let sampler = Sampler::new(NoiseDistribution::log_uniform(c).unwrap(), mode, k).unwrap();
        let mut rng = rng::stream(seed, Purpose::Noise, 0, 0);
        let set = sampler.draw_for_target(target, &mut rng).unwrap();
        prop_assert_eq!(set.k(), k);
        prop_assert!(set.validate().is_ok());
        prop_assert!(set.samples().iter().all(|&s| s < c));
        prop_assert!(set.expected_counts().iter().all(|&e| e > 0.0 && e.is_finite()));
        match mode {
            SamplerMode::WithoutReplacement => {
                let mut ids = set.samples().to_vec();
                ids.sort_unstable();
                ids.dedup();
                prop_assert_eq!(ids.len(), k);
                prop_assert!(set.expected_counts().iter().all(|&e| e <= 1.0 + 1e-9));
            }
            SamplerMode::ExcludeTarget => {
                prop_assert_eq!(set.excluded_target(), Some(target));
                prop_assert!(!set.samples().contains(&target));
            }
            SamplerMode::WithReplacement => prop_assert!(set.replacement()),
        }
    }

    #[test]
    fn remapping_around_a_target_is_a_bijection(c in 2usize..300, t_frac in 0.0f64..1.0) {
        let t = ((c as f64 * t_frac) as usize).min(c - 1);
        let mapped: Vec<usize> = (0..c - 1).map(|r| remap_excluding(t, r)).collect();
        prop_assert!(mapped.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(!mapped.contains(&t));
        prop_assert!(mapped.iter().all(|&m| m < c));
    }

    #[test]
    fn shuffled_batches_partition_the_pairs(
        len in 2usize..300,
        order in 1usize..4,
        batch in 1usize..50,
        seed in any::<u64>(),
    ) {
        prop_assume!(len > order);
        let mut rng = rng::stream(seed, Purpose::Corpus, 0, 0);
        let ids: Vec<usize> = (0..len).map(|_| rand::Rng::random_range(&mut rng, 0..7)).collect();
        let corpus = Corpus::new(ids, 7).unwrap();
        let plain = make_batches(&corpus, batch, order, None).unwrap();
        let mut shuffle = rng::stream(seed, Purpose::Shuffle, 0, 0);
        let shuffled = make_batches(&corpus, batch, order, Some(&mut shuffle)).unwrap();
        let total: usize = shuffled.iter().map(|b| b.len()).sum();
        prop_assert_eq!(total, corpus.num_pairs(order));
        prop_assert!(shuffled.iter().all(|b| b.len() <= batch && !b.is_empty()));
        prop_assert_eq!(windows(&plain), windows(&shuffled));
    }

    #[test]
    fn task_rows_are_distributions(
        c in 2usize..30,
        order in 1usize..3,
        alpha in 0.01f64..5.0,
        seed in any::<u64>(),
    ) {
        let task = SyntheticTask::generate(c, order, alpha, 64, seed).unwrap();
        for s in 0..task.num_states() {
            let row = task.row(s);
            prop_assert_eq!(row.len(), c);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mode3_equals_is_when_no_sample_hits_the_target(
        scores in prop::collection::vec(-4.0f64..4.0, 9),
        counts in prop::collection::vec(0.05f64..3.0, 8),
    ) {
        let set = SampleSet::new((1..9).collect(), counts, true, None).unwrap();
        let input = SampledScores {
            targets: &[0],
            target_scores: &scores[..1],
            sample_scores: &scores[1..],
            samples: SampleView::Shared(&set),
        };
        let is = criteria::is_loss(&input).unwrap();
        let mode3 = criteria::mode3_loss(&input).unwrap();
        prop_assert_eq!(is, mode3);
    }

    #[test]
    fn mode2_equals_is_on_target_free_samples(
        scores in prop::collection::vec(-4.0f64..4.0, 7),
        counts in prop::collection::vec(0.05f64..3.0, 6),
    ) {
        let free = SampleSet::new((1..7).collect(), counts.clone(), true, None).unwrap();
        let excluded = SampleSet::new((1..7).collect(), counts, true, Some(0)).unwrap();
        let input = |set| SampledScores {
            targets: &[0],
            target_scores: &scores[..1],
            sample_scores: &scores[1..],
            samples: SampleView::Shared(set),
        };
        let is = criteria::is_loss(&input(&free)).unwrap();
        let mode2 = criteria::mode2_loss(&input(&excluded)).unwrap();
        prop_assert_eq!(is, mode2);
    }

    #[test]
    fn is_correction_inverts_the_shifted_optimum(p in 0.0f64..1.0) {
        let q = p / (1.0 + p);
        let back = criteria::is_correct_posterior(q).unwrap();
        prop_assert!((back - p).abs() <= 1e-12 * (1.0 + p));
    }

    #[test]
    fn metrics_rows_round_trip(
        epoch in 1usize..100,
        k in 0usize..1000,
        loss in -50.0f64..50.0,
        ppl in 1.0f64..1e5,
        deficit in 0.0f64..100.0,
        tv in prop::option::of(0.0f64..1.0),
        secs in prop::option::of(0.0f64..10.0),
    ) {
        let row = MetricsRow {
            epoch,
            criterion: "mode3".into(),
            k,
            train_loss: loss,
            eval_ppl: ppl,
            norm_deficit: deficit,
            posterior_tv: tv,
            sec_per_batch: secs,
        };
        prop_assert!(row.check().is_ok());
        let back = metrics::from_csv(&metrics::to_csv(std::slice::from_ref(&row))).unwrap();
        prop_assert_eq!(back, vec![row]);
    }

    #[test]
    fn resolving_a_config_is_idempotent(
        seed in any::<u64>(),
        k in 1usize..100,
        lr in 1e-4f64..1.0,
        criterion in 0usize..7,
    ) {
        let mut config = TrainConfig {
            seed,
            k,
            lr,
            criterion: snis::Criterion::ALL[criterion],
            ..TrainConfig::default()
        };
        if config.criterion == snis::Criterion::Mode2 {
            config.shared = Some(false);
        }
        let back = TrainConfig::parse(&config.resolved()).unwrap();
        prop_assert_eq!(back.resolved(), config.resolved());
        prop_assert_eq!(back.sampler_mode(), config.sampler_mode());
        prop_assert_eq!(back.criterion_kind().unwrap(), config.criterion_kind().unwrap());
    }
}
