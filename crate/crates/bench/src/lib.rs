//! Fixtures shared by the benchmarks.

use snis::config::TrainConfig;
use snis::corpus::{make_batches, Batch, Corpus, SyntheticTask};
use snis::rng::{self, Purpose};

/// A config with `overrides` applied on top of the defaults.
pub fn config(overrides: &[(&str, &str)]) -> TrainConfig {
    let mut c = TrainConfig::default();
    for (k, v) in overrides {
        c.set(k, v).expect("valid benchmark override");
    }
    c
}

/// A synthetic corpus for `config` and its full batches.
pub fn batches(config: &TrainConfig, tokens: usize) -> (Corpus, Vec<Batch>) {
    let task = SyntheticTask::generate(
        config.vocab_size,
        config.order,
        config.alpha,
        config.state_cap,
        config.seed,
    )
    .expect("valid task");
    let corpus = Corpus::sample(
        &task,
        tokens,
        &mut rng::stream(config.seed, Purpose::Corpus, 0, 0),
    )
    .expect("corpus");
    let batches = make_batches(&corpus, config.batch_size, config.order, None)
        .expect("batches")
        .into_iter()
        .filter(|b| b.len() == config.batch_size)
        .collect();
    (corpus, batches)
}
