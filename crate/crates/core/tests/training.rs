use snis::eval::{self, Readout};
use snis::train;
use snis::{Criterion, CriterionKind, TrainConfig};

fn small(criterion: Criterion) -> TrainConfig {
    TrainConfig::parse(&format!(
        "C = 10\nalpha = 0.3\ntokens = 50000\neval_tokens = 10000\nseed = 4\n\
         criterion = {}\nK = 4\ndim = 16\ncombiner = average\nlr = 0.03\nlr_decay = 0.7\n\
         epochs = 8\nbatch_size = 64\n",
        criterion.name()
    ))
    .unwrap()
}

#[test]
fn full_softmax_approaches_the_oracle_perplexity() {
    let config = small(Criterion::Ce);
    let (task, corpus, eval_corpus) = train::synthetic_data(&config).unwrap();
    let out = train::train(&config, &corpus, &eval_corpus, Some(&task)).unwrap();
    let oracle = eval::oracle_perplexity(&task, &eval_corpus);
    let ppl = out.metrics.last().unwrap().eval_ppl;
    assert!(
        ppl >= oracle * 0.98 && ppl < oracle * 1.02,
        "{ppl} vs oracle {oracle}"
    );
}

#[test]
fn posterior_error_shrinks_during_training() {
    let config = small(Criterion::Mode3);
    let (task, corpus, eval_corpus) = train::synthetic_data(&config).unwrap();
    let out = train::train(&config, &corpus, &eval_corpus, Some(&task)).unwrap();
    assert_eq!(out.metrics.len(), config.epochs);
    let tv: Vec<f64> = out
        .metrics
        .iter()
        .map(|r| r.posterior_tv.unwrap())
        .collect();
    assert!(tv.windows(2).skip(2).all(|w| w[1] <= w[0] + 1e-3), "{tv:?}");
    assert!(tv.last().unwrap() < &0.05, "{tv:?}");
}

#[test]
fn importance_sampling_needs_the_correction() {
    let config = small(Criterion::Is);
    let (task, corpus, eval_corpus) = train::synthetic_data(&config).unwrap();
    let out = train::train(&config, &corpus, &eval_corpus, Some(&task)).unwrap();
    let kind = CriterionKind::with_default_link(Criterion::Is);
    let raw =
        eval::normalization_deficit(&out.params, kind, Readout::Raw, &eval_corpus, 200).unwrap();
    let fixed =
        eval::normalization_deficit(&out.params, kind, Readout::Corrected, &eval_corpus, 200)
            .unwrap();
    assert!(raw > 4.0 * fixed, "raw {raw} corrected {fixed}");
}

#[test]
fn metrics_rows_are_well_formed() {
    for criterion in [Criterion::Nce, Criterion::Mode2, Criterion::BceFull] {
        let mut config = small(criterion);
        config.epochs = 2;
        config.tokens = 5000;
        let (task, corpus, eval_corpus) = train::synthetic_data(&config).unwrap();
        let out = train::train(&config, &corpus, &eval_corpus, Some(&task)).unwrap();
        for row in &out.metrics {
            row.check().unwrap();
            assert!(row.eval_ppl >= 1.0 && row.eval_ppl.is_finite());
            assert!(row.norm_deficit >= 0.0);
            assert!((0.0..=1.0).contains(&row.posterior_tv.unwrap()));
            assert_eq!(row.k, if criterion.is_sampled() { 4 } else { 0 });
            assert!(row.sec_per_batch.is_none());
        }
    }
}

#[test]
fn sweep_rows_cover_every_k() {
    let mut config = small(Criterion::Mode3);
    config.epochs = 1;
    config.tokens = 4000;
    config.ks = vec![2, 3, 5];
    let (task, corpus, eval_corpus) = train::synthetic_data(&config).unwrap();
    let rows = train::sweep_k(&config, &corpus, &eval_corpus, Some(&task)).unwrap();
    let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![2, 3, 5]);
}
