//! The training loop, K-sweeps and throughput measurement.
//!
//! Criteria return `F`, the value to maximize; the only negation into a
//! loss happens in [`Trainer::step`].

use std::time::Instant;

use crate::config::{NoiseChoice, Optimizer, TrainConfig};
use crate::corpus::{make_batches, Batch, Corpus, SyntheticTask};
use crate::criteria::{evaluate_full, evaluate_sampled, CriterionKind, SampleView, SampledScores};
use crate::error::{Error, Result};
use crate::eval::{self, Readout};
use crate::metrics::MetricsRow;
use crate::model::{AdamState, Candidates, ModelParams};
use crate::rng::{self, Purpose};
use crate::sampling::{NoiseDistribution, SampleSet, Sampler};

/// The noise distribution selected by `config` for a training corpus.
pub fn noise_for(config: &TrainConfig, corpus: &Corpus) -> Result<NoiseDistribution> {
    match config.noise {
        NoiseChoice::LogUniform => NoiseDistribution::log_uniform(config.vocab_size),
        NoiseChoice::Unigram => {
            let mut counts = vec![0u64; config.vocab_size];
            for &c in corpus.ids() {
                counts[c] += 1;
            }
            NoiseDistribution::unigram_from_counts(&counts, config.unigram_smoothing)
        }
    }
}

/// The synthetic task of `config` with its training and evaluation corpora,
/// each drawn from its own seeded stream.
pub fn synthetic_data(config: &TrainConfig) -> Result<(SyntheticTask, Corpus, Corpus)> {
    let task = SyntheticTask::generate(
        config.vocab_size,
        config.order,
        config.alpha,
        config.state_cap,
        config.seed,
    )?;
    let train = Corpus::sample(
        &task,
        config.tokens,
        &mut rng::stream(config.seed, Purpose::Corpus, 0, 0),
    )?;
    let eval = Corpus::sample(
        &task,
        config.eval_tokens,
        &mut rng::stream(config.seed, Purpose::EvalCorpus, 0, 0),
    )?;
    Ok((task, train, eval))
}

/// Model, optimizer state and sampler for one training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    kind: CriterionKind,
    sampler: Option<Sampler>,
    shared: bool,
    params: ModelParams,
    adam: Option<AdamState>,
}

impl Trainer {
    /// Validates the configuration and initializes the model from the
    /// configured seed.
    pub fn new(config: &TrainConfig, noise: NoiseDistribution) -> Result<Self> {
        config.validate()?;
        let mut init_rng = rng::stream(config.seed, Purpose::Init, 0, 0);
        let params = ModelParams::init(
            config.vocab_size,
            config.dim,
            config.order,
            config.combiner,
            config.init_scale,
            &mut init_rng,
        )?;
        Self::with_params(config, noise, params)
    }

    pub fn with_params(
        config: &TrainConfig,
        noise: NoiseDistribution,
        params: ModelParams,
    ) -> Result<Self> {
        config.validate()?;
        let kind = config.criterion_kind()?;
        if params.vocab_size() != config.vocab_size || params.order() != config.order {
            return Err(Error::Mismatch(
                "model dimensions differ from the configuration".into(),
            ));
        }
        if noise.len() != config.vocab_size {
            return Err(Error::Mismatch(
                "noise distribution size differs from C".into(),
            ));
        }
        let sampler = if kind.criterion().is_sampled() {
            Some(
                Sampler::new(noise, config.sampler_mode(), config.k)
                    .map_err(|e| Error::config("sampler", e.to_string()))?,
            )
        } else {
            None
        };
        let adam = (config.optimizer == Optimizer::Adam).then(|| AdamState::new(&params));
        Ok(Trainer {
            config: config.clone(),
            kind,
            sampler,
            shared: config.shared_samples(),
            params,
            adam,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn adam_state(&self) -> Option<&AdamState> {
        self.adam.as_ref()
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn sampler(&self) -> Option<&Sampler> {
        self.sampler.as_ref()
    }

    pub fn into_parts(self) -> (ModelParams, Option<AdamState>) {
        (self.params, self.adam)
    }

    /// One update on `batch`. Samples come from the stream of
    /// `(epoch, index)`, so a step is reproducible in isolation. Returns the
    /// batch loss `-F`.
    pub fn step(&mut self, batch: &Batch, epoch: usize, index: usize) -> Result<f64> {
        let params = &self.params;
        let hidden = params.forward_hidden(batch);
        let grads = match &self.sampler {
            None => {
                let scores = params.score_candidates(&hidden, Candidates::All);
                let r = evaluate_full(self.kind, &scores, params.vocab_size(), &batch.targets)?;
                let g = params.backward(
                    batch,
                    &hidden,
                    &r.target_grads,
                    Candidates::All,
                    &r.sample_grads,
                );
                (r.loss, g)
            }
            Some(sampler) => {
                let mut noise_rng =
                    rng::stream(self.config.seed, Purpose::Noise, epoch as u64, index as u64);
                let target_scores = params.score_candidates(
                    &hidden,
                    Candidates::PerPair {
                        ids: &batch.targets,
                        width: 1,
                    },
                );
                let target_counts: Vec<f64> = batch
                    .targets
                    .iter()
                    .map(|&t| sampler.expected_count(t))
                    .collect();
                if self.shared {
                    let set = sampler.shared_batch_samples(&mut noise_rng)?;
                    let candidates = Candidates::Shared(set.samples());
                    let sample_scores = params.score_candidates(&hidden, candidates);
                    let input = SampledScores {
                        targets: &batch.targets,
                        target_scores: &target_scores,
                        sample_scores: &sample_scores,
                        samples: SampleView::Shared(&set),
                    };
                    let r = evaluate_sampled(self.kind, &input, Some(&target_counts))?;
                    let g = params.backward(
                        batch,
                        &hidden,
                        &r.target_grads,
                        candidates,
                        &r.sample_grads,
                    );
                    (r.loss, g)
                } else {
                    let sets: Vec<SampleSet> = batch
                        .targets
                        .iter()
                        .map(|&t| sampler.draw_for_target(t, &mut noise_rng))
                        .collect::<Result<_>>()?;
                    let ids: Vec<usize> = sets
                        .iter()
                        .flat_map(|s| s.samples().iter().copied())
                        .collect();
                    let candidates = Candidates::PerPair {
                        ids: &ids,
                        width: sampler.k(),
                    };
                    let sample_scores = params.score_candidates(&hidden, candidates);
                    let input = SampledScores {
                        targets: &batch.targets,
                        target_scores: &target_scores,
                        sample_scores: &sample_scores,
                        samples: SampleView::PerPair(&sets),
                    };
                    let r = evaluate_sampled(self.kind, &input, Some(&target_counts))?;
                    let g = params.backward(
                        batch,
                        &hidden,
                        &r.target_grads,
                        candidates,
                        &r.sample_grads,
                    );
                    (r.loss, g)
                }
            }
        };
        let (objective, grads) = grads;
        let lr = self.config.lr_at(epoch);
        match &mut self.adam {
            Some(state) => {
                let hyper = crate::model::AdamHyper {
                    lr,
                    ..self.config.adam_hyper()
                };
                self.params.adam_step(&grads, state, &hyper);
            }
            None => self.params.sgd_step(&grads, lr),
        }
        if !objective.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective at epoch {epoch}, batch {index}"
            )));
        }
        Ok(-objective)
    }

    /// One pass over `corpus`; returns the pair-weighted mean loss and the
    /// number of batches.
    pub fn run_epoch(&mut self, corpus: &Corpus, epoch: usize) -> Result<(f64, usize)> {
        let mut shuffle_rng = rng::stream(self.config.seed, Purpose::Shuffle, epoch as u64, 0);
        let batches = make_batches(
            corpus,
            self.config.batch_size,
            self.config.order,
            self.config.shuffle.then_some(&mut shuffle_rng),
        )?;
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (index, batch) in batches.iter().enumerate() {
            total += self.step(batch, epoch, index)? * batch.len() as f64;
            pairs += batch.len();
        }
        Ok((total / pairs as f64, batches.len()))
    }
}

/// Held-out measurements of a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSummary {
    pub ppl: f64,
    /// Raw outputs.
    pub norm_deficit: f64,
    /// IS outputs mapped through `q / (1 - q)`; equal to the raw deficit for
    /// other criteria.
    pub corrected_deficit: f64,
    pub posterior_tv: Option<f64>,
}

pub fn evaluate(
    params: &ModelParams,
    kind: CriterionKind,
    eval_corpus: &Corpus,
    task: Option<&SyntheticTask>,
    contexts: usize,
) -> Result<EvalSummary> {
    Ok(EvalSummary {
        ppl: eval::perplexity(params, kind, eval_corpus)?,
        norm_deficit: eval::normalization_deficit(
            params,
            kind,
            Readout::Raw,
            eval_corpus,
            contexts,
        )?,
        corrected_deficit: eval::normalization_deficit(
            params,
            kind,
            Readout::Corrected,
            eval_corpus,
            contexts,
        )?,
        posterior_tv: task
            .map(|t| eval::posterior_error(params, kind, t, eval_corpus))
            .transpose()?,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub adam: Option<AdamState>,
    pub metrics: Vec<MetricsRow>,
}

/// Train for `config.epochs` epochs, evaluating on `eval_corpus` every
/// `eval_every` epochs and after the last one.
pub fn train(
    config: &TrainConfig,
    corpus: &Corpus,
    eval_corpus: &Corpus,
    task: Option<&SyntheticTask>,
) -> Result<TrainOutput> {
    config.validate()?;
    for (what, c) in [("training", corpus), ("evaluation", eval_corpus)] {
        if c.vocab_size() > config.vocab_size {
            return Err(Error::Mismatch(format!(
                "{what} corpus has {} classes but C = {}",
                c.vocab_size(),
                config.vocab_size
            )));
        }
    }
    let noise = noise_for(config, corpus)?;
    let mut trainer = Trainer::new(config, noise)?;
    let mut metrics = Vec::new();
    for epoch in 0..config.epochs {
        let start = Instant::now();
        let (loss, batches) = trainer.run_epoch(corpus, epoch)?;
        let elapsed = start.elapsed().as_secs_f64();
        let last = epoch + 1 == config.epochs;
        if last || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0) {
            let summary = evaluate(
                trainer.params(),
                trainer.kind(),
                eval_corpus,
                task,
                config.eval_contexts,
            )?;
            let row = MetricsRow {
                epoch: epoch + 1,
                criterion: config.criterion.name().to_string(),
                k: if config.criterion.is_sampled() {
                    config.k
                } else {
                    0
                },
                train_loss: loss,
                eval_ppl: summary.ppl,
                norm_deficit: summary.norm_deficit,
                posterior_tv: summary.posterior_tv,
                sec_per_batch: config.timing.then(|| elapsed / batches as f64),
            };
            row.check()?;
            metrics.push(row);
        }
    }
    let (params, adam) = trainer.into_parts();
    Ok(TrainOutput {
        params,
        adam,
        metrics,
    })
}

/// One full training per entry of `config.ks`, all with the same seeds.
pub fn sweep_k(
    config: &TrainConfig,
    corpus: &Corpus,
    eval_corpus: &Corpus,
    task: Option<&SyntheticTask>,
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for &k in &config.ks {
        let mut c = config.clone();
        c.k = k;
        rows.extend(train(&c, corpus, eval_corpus, task)?.metrics);
    }
    Ok(rows)
}

/// Seconds per training step: after `bench_warmup` untimed batches, the
/// mean over `bench_batches` batches is taken `bench_repeats` times and the
/// smallest mean is returned. Batches cycle through the corpus.
pub fn bench_speed(config: &TrainConfig, corpus: &Corpus) -> Result<f64> {
    if config.bench_batches == 0 {
        return Err(Error::config("bench_batches", "must be at least 1"));
    }
    if config.bench_repeats == 0 {
        return Err(Error::config("bench_repeats", "must be at least 1"));
    }
    let noise = noise_for(config, corpus)?;
    let mut trainer = Trainer::new(config, noise)?;
    let mut shuffle_rng = rng::stream(config.seed, Purpose::Bench, 0, 0);
    let batches: Vec<Batch> = make_batches(
        corpus,
        config.batch_size,
        config.order,
        Some(&mut shuffle_rng),
    )?
    .into_iter()
    .filter(|b| b.len() == config.batch_size)
    .collect();
    if batches.is_empty() {
        return Err(Error::invalid("corpus", "too short for one full batch"));
    }
    let mut index = 0;
    for _ in 0..config.bench_warmup {
        trainer.step(&batches[index % batches.len()], 0, index)?;
        index += 1;
    }
    let mut best = f64::INFINITY;
    for _ in 0..config.bench_repeats {
        let start = Instant::now();
        for _ in 0..config.bench_batches {
            trainer.step(&batches[index % batches.len()], 0, index)?;
            index += 1;
        }
        best = best.min(start.elapsed().as_secs_f64() / config.bench_batches as f64);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(criterion: &str) -> (TrainConfig, Corpus, Corpus) {
        let mut c = TrainConfig::default();
        for (k, v) in [
            ("C", "10"),
            ("criterion", criterion),
            ("K", "4"),
            ("dim", "8"),
            ("epochs", "2"),
            ("batch_size", "16"),
        ] {
            c.set(k, v).unwrap();
        }
        let task = SyntheticTask::generate(10, 1, 0.5, 64, 3).unwrap();
        let train =
            Corpus::sample(&task, 2000, &mut rng::stream(3, Purpose::Corpus, 0, 0)).unwrap();
        let eval =
            Corpus::sample(&task, 500, &mut rng::stream(3, Purpose::EvalCorpus, 0, 0)).unwrap();
        (c, train, eval)
    }

    #[test]
    fn zero_epochs_return_the_initial_model() {
        let (mut c, train_c, eval_c) = toy("mode3");
        c.epochs = 0;
        let out = train(&c, &train_c, &eval_c, None).unwrap();
        let init = Trainer::new(&c, noise_for(&c, &train_c).unwrap()).unwrap();
        assert_eq!(&out.params, init.params());
        assert!(out.metrics.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        for criterion in ["ce", "bce", "nce", "is", "mode1", "mode2", "mode3"] {
            let (c, train_c, eval_c) = toy(criterion);
            let a = train(&c, &train_c, &eval_c, None).unwrap();
            let b = train(&c, &train_c, &eval_c, None).unwrap();
            assert_eq!(a.params, b.params, "{criterion}");
            assert_eq!(a.metrics, b.metrics, "{criterion}");
            assert_eq!(a.metrics.len(), 2);
        }
    }

    #[test]
    fn training_lowers_the_loss() {
        let (mut c, train_c, eval_c) = toy("mode3");
        c.epochs = 4;
        let out = train(&c, &train_c, &eval_c, None).unwrap();
        assert!(out.metrics[3].train_loss < out.metrics[0].train_loss);
    }

    #[test]
    fn mismatches_are_refused_before_training() {
        let (mut c, train_c, eval_c) = toy("mode2");
        c.set("shared", "true").unwrap();
        let err = train(&c, &train_c, &eval_c, None).unwrap_err();
        assert!(err.is_config());
    }
}
