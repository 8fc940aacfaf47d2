//! Flat `key = value` experiment configuration.
//!
//! Unknown keys are errors. `sampler` and `shared` accept `auto`, which
//! resolves from the criterion; [`TrainConfig::resolved`] always prints the
//! resolved values, so a resolved file reproduces the run on its own.

use std::fmt::Write;
use std::str::FromStr;

use crate::criteria::{Criterion, CriterionKind, Link};
use crate::error::{Error, Result};
use crate::model::{AdamHyper, Combiner};
use crate::sampling::SamplerMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseChoice {
    LogUniform,
    Unigram,
}

impl NoiseChoice {
    pub fn name(self) -> &'static str {
        match self {
            NoiseChoice::LogUniform => "log_uniform",
            NoiseChoice::Unigram => "unigram",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    // data
    pub vocab_size: usize,
    pub order: usize,
    pub alpha: f64,
    pub state_cap: usize,
    pub tokens: usize,
    pub eval_tokens: usize,
    pub seed: u64,
    pub corpus: Option<String>,
    pub eval_corpus: Option<String>,
    pub min_count: u64,
    // criterion and sampling
    pub criterion: Criterion,
    pub link: Option<Link>,
    pub k: usize,
    pub ks: Vec<usize>,
    pub sampler: Option<SamplerMode>,
    pub shared: Option<bool>,
    pub noise: NoiseChoice,
    pub unigram_smoothing: f64,
    // optimization
    pub optimizer: Optimizer,
    pub lr: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub eval_every: usize,
    pub timing: bool,
    // model
    pub dim: usize,
    pub combiner: Combiner,
    pub init_scale: f64,
    // evaluation and benchmarking
    pub eval_contexts: usize,
    pub bench_batches: usize,
    pub bench_warmup: usize,
    pub bench_repeats: usize,
    pub grad_check_instances: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            vocab_size: 200,
            order: 1,
            alpha: 0.1,
            state_cap: crate::corpus::DEFAULT_STATE_CAP,
            tokens: 100_000,
            eval_tokens: 20_000,
            seed: 1,
            corpus: None,
            eval_corpus: None,
            min_count: 1,
            criterion: Criterion::Mode3,
            link: None,
            k: 8,
            ks: vec![2, 8, 32, 128],
            sampler: None,
            shared: None,
            noise: NoiseChoice::LogUniform,
            unigram_smoothing: 1.0,
            optimizer: Optimizer::Adam,
            lr: 0.01,
            lr_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 5,
            batch_size: 64,
            shuffle: true,
            eval_every: 1,
            timing: false,
            dim: 32,
            combiner: Combiner::Positional,
            init_scale: 0.05,
            eval_contexts: 500,
            bench_batches: 200,
            bench_warmup: 20,
            bench_repeats: 3,
            grad_check_instances: 50,
        }
    }
}

/// Every accepted key, in the order `resolved` prints them.
pub const KEYS: &[&str] = &[
    "C",
    "order",
    "alpha",
    "state_cap",
    "tokens",
    "eval_tokens",
    "seed",
    "corpus",
    "eval_corpus",
    "min_count",
    "criterion",
    "link",
    "K",
    "Ks",
    "sampler",
    "shared",
    "noise",
    "unigram_smoothing",
    "optimizer",
    "lr",
    "lr_decay",
    "beta1",
    "beta2",
    "adam_eps",
    "epochs",
    "batch_size",
    "shuffle",
    "eval_every",
    "timing",
    "dim",
    "combiner",
    "init_scale",
    "eval_contexts",
    "bench_batches",
    "bench_warmup",
    "bench_repeats",
    "grad_check_instances",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(
            key,
            format!("expected true or false, got {value:?}"),
        )),
    }
}

fn optional_path(value: &str) -> Option<String> {
    (!value.is_empty() && value != "none").then(|| value.to_string())
}

impl TrainConfig {
    /// Defaults overlaid with the lines of a config file.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected key = value, got {line:?}"),
                )
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must be key=value"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "C" => self.vocab_size = parse_num(key, value)?,
            "order" => self.order = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "state_cap" => self.state_cap = parse_num(key, value)?,
            "tokens" => self.tokens = parse_num(key, value)?,
            "eval_tokens" => self.eval_tokens = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "corpus" => self.corpus = optional_path(value),
            "eval_corpus" => self.eval_corpus = optional_path(value),
            "min_count" => self.min_count = parse_num(key, value)?,
            "criterion" => {
                self.criterion = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("unknown criterion {value:?}")))?
            }
            "link" => {
                self.link = match value {
                    "auto" => None,
                    _ => Some(
                        value
                            .parse()
                            .map_err(|_| Error::config(key, format!("unknown link {value:?}")))?,
                    ),
                }
            }
            "K" => self.k = parse_num(key, value)?,
            "Ks" => {
                self.ks = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "sampler" => {
                self.sampler = match value {
                    "auto" => None,
                    "with_replacement" => Some(SamplerMode::WithReplacement),
                    "without_replacement" => Some(SamplerMode::WithoutReplacement),
                    "exclude_target" => Some(SamplerMode::ExcludeTarget),
                    _ => return Err(Error::config(key, format!("unknown sampler {value:?}"))),
                }
            }
            "shared" => {
                self.shared = match value {
                    "auto" => None,
                    _ => Some(parse_bool(key, value)?),
                }
            }
            "noise" => {
                self.noise = match value {
                    "log_uniform" => NoiseChoice::LogUniform,
                    "unigram" => NoiseChoice::Unigram,
                    _ => return Err(Error::config(key, format!("unknown noise {value:?}"))),
                }
            }
            "unigram_smoothing" => self.unigram_smoothing = parse_num(key, value)?,
            "optimizer" => {
                self.optimizer = match value {
                    "sgd" => Optimizer::Sgd,
                    "adam" => Optimizer::Adam,
                    _ => return Err(Error::config(key, format!("unknown optimizer {value:?}"))),
                }
            }
            "lr" => self.lr = parse_num(key, value)?,
            "lr_decay" => self.lr_decay = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "adam_eps" => self.adam_eps = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "shuffle" => self.shuffle = parse_bool(key, value)?,
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "dim" => self.dim = parse_num(key, value)?,
            "combiner" => self.combiner = value.parse()?,
            "init_scale" => self.init_scale = parse_num(key, value)?,
            "eval_contexts" => self.eval_contexts = parse_num(key, value)?,
            "bench_batches" => self.bench_batches = parse_num(key, value)?,
            "bench_warmup" => self.bench_warmup = parse_num(key, value)?,
            "bench_repeats" => self.bench_repeats = parse_num(key, value)?,
            "grad_check_instances" => self.grad_check_instances = parse_num(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn criterion_kind(&self) -> Result<CriterionKind> {
        match self.link {
            Some(link) => CriterionKind::new(self.criterion, link)
                .map_err(|e| Error::config("link", e.to_string())),
            None => Ok(CriterionKind::with_default_link(self.criterion)),
        }
    }

    /// `exclude_target` for Mode2, `without_replacement` for Mode3 and
    /// `with_replacement` otherwise, unless set explicitly.
    pub fn sampler_mode(&self) -> SamplerMode {
        self.sampler.unwrap_or(match self.criterion {
            Criterion::Mode2 => SamplerMode::ExcludeTarget,
            Criterion::Mode3 => SamplerMode::WithoutReplacement,
            _ => SamplerMode::WithReplacement,
        })
    }

    /// Per-batch shared samples for every sampled criterion except Mode2.
    pub fn shared_samples(&self) -> bool {
        self.shared
            .unwrap_or(self.sampler_mode() != SamplerMode::ExcludeTarget)
    }

    pub fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }

    /// Check cross-key invariants. Violations are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let kind = self.criterion_kind()?;
        if self.vocab_size < 2 {
            return Err(Error::config("C", "must be at least 2"));
        }
        if self.order < 1 {
            return Err(Error::config("order", "must be at least 1"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("alpha", "must be positive"));
        }
        if self.state_cap < 1 {
            return Err(Error::config("state_cap", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.dim < 1 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr", "must be a non-negative number"));
        }
        if !(self.lr_decay > 0.0) {
            return Err(Error::config("lr_decay", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1", "Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("adam_eps", "must be positive"));
        }
        if !(self.unigram_smoothing >= 0.0) {
            return Err(Error::config("unigram_smoothing", "must be non-negative"));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::config("init_scale", "must be non-negative"));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::config("Ks", "needs at least one positive K"));
        }
        if kind.criterion().is_sampled() {
            if self.k < 1 {
                return Err(Error::config("K", "sampled criteria need K >= 1"));
            }
            let mode = self.sampler_mode();
            let shared = self.shared_samples();
            match kind.criterion() {
                Criterion::Mode2 => {
                    if mode != SamplerMode::ExcludeTarget {
                        return Err(Error::config(
                            "sampler",
                            "mode2 requires the exclude_target sampler",
                        ));
                    }
                    if shared {
                        return Err(Error::config(
                            "shared",
                            "mode2 samples depend on the target and cannot be shared",
                        ));
                    }
                }
                _ if mode == SamplerMode::ExcludeTarget => {
                    return Err(Error::config(
                        "sampler",
                        format!(
                            "exclude_target is only valid for mode2, not {}",
                            kind.criterion()
                        ),
                    ));
                }
                _ => {}
            }
            if mode == SamplerMode::WithoutReplacement && self.k >= self.vocab_size {
                return Err(Error::config(
                    "K",
                    format!("without replacement needs K < C = {}", self.vocab_size),
                ));
            }
            if mode == SamplerMode::ExcludeTarget && self.vocab_size < 3 {
                return Err(Error::config("C", "target exclusion needs C >= 3"));
            }
        }
        Ok(())
    }

    /// Every key with its resolved value, one `key = value` line each.
    pub fn resolved(&self) -> String {
        let kind = self
            .criterion_kind()
            .unwrap_or_else(|_| CriterionKind::with_default_link(self.criterion));
        let path = |p: &Option<String>| p.clone().unwrap_or_else(|| "none".into());
        let ks: Vec<String> = self.ks.iter().map(|k| k.to_string()).collect();
        let values: Vec<String> = vec![
            self.vocab_size.to_string(),
            self.order.to_string(),
            self.alpha.to_string(),
            self.state_cap.to_string(),
            self.tokens.to_string(),
            self.eval_tokens.to_string(),
            self.seed.to_string(),
            path(&self.corpus),
            path(&self.eval_corpus),
            self.min_count.to_string(),
            self.criterion.name().into(),
            kind.link().name().into(),
            self.k.to_string(),
            ks.join(","),
            self.sampler_mode().to_string(),
            self.shared_samples().to_string(),
            self.noise.name().into(),
            self.unigram_smoothing.to_string(),
            self.optimizer.name().into(),
            self.lr.to_string(),
            self.lr_decay.to_string(),
            self.beta1.to_string(),
            self.beta2.to_string(),
            self.adam_eps.to_string(),
            self.epochs.to_string(),
            self.batch_size.to_string(),
            self.shuffle.to_string(),
            self.eval_every.to_string(),
            self.timing.to_string(),
            self.dim.to_string(),
            self.combiner.name().into(),
            self.init_scale.to_string(),
            self.eval_contexts.to_string(),
            self.bench_batches.to_string(),
            self.bench_warmup.to_string(),
            self.bench_repeats.to_string(),
            self.grad_check_instances.to_string(),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut out = String::new();
        for (key, value) in KEYS.iter().zip(values) {
            writeln!(out, "{key} = {value}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut c =
            TrainConfig::parse("# toy\nC = 50  # vocabulary\n\ncriterion = nce\nKs = 2, 8,32\n")
                .unwrap();
        assert_eq!(c.vocab_size, 50);
        assert_eq!(c.criterion, Criterion::Nce);
        assert_eq!(c.ks, vec![2, 8, 32]);
        c.apply_override("K=16").unwrap();
        assert_eq!(c.k, 16);
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = TrainConfig::parse("colour = blue").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("colour"));
        let err = TrainConfig::parse("K = many").unwrap_err();
        assert!(err.to_string().contains("`K`"));
    }

    #[test]
    fn auto_sampler_follows_the_criterion() {
        let mut c = TrainConfig::default();
        c.set("criterion", "mode2").unwrap();
        assert_eq!(c.sampler_mode(), SamplerMode::ExcludeTarget);
        assert!(!c.shared_samples());
        c.set("criterion", "mode3").unwrap();
        assert_eq!(c.sampler_mode(), SamplerMode::WithoutReplacement);
        assert!(c.shared_samples());
        c.set("criterion", "is").unwrap();
        assert_eq!(c.sampler_mode(), SamplerMode::WithReplacement);
    }

    #[test]
    fn mode2_invariants_are_enforced() {
        let mut c = TrainConfig::default();
        c.set("criterion", "mode2").unwrap();
        c.validate().unwrap();
        c.set("shared", "true").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("shared"));
        c.set("shared", "auto").unwrap();
        c.set("sampler", "with_replacement").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("sampler"));
        let mut c = TrainConfig::default();
        c.set("criterion", "is").unwrap();
        c.set("sampler", "exclude_target").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn invalid_link_is_a_config_error() {
        let mut c = TrainConfig::default();
        c.set("criterion", "ce").unwrap();
        c.set("link", "sigmoid").unwrap();
        assert!(c.validate().unwrap_err().is_config());
    }

    #[test]
    fn resolved_round_trips() {
        let mut c = TrainConfig::default();
        c.set("criterion", "mode2").unwrap();
        c.set("corpus", "data/train.txt").unwrap();
        c.set("lr", "0.003").unwrap();
        let text = c.resolved();
        let back = TrainConfig::parse(&text).unwrap();
        assert_eq!(back.resolved(), text);
        assert_eq!(back.sampler_mode(), SamplerMode::ExcludeTarget);
        assert_eq!(text.lines().count(), KEYS.len());
    }
}
