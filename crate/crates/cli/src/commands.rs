use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use snis::config::TrainConfig;
use snis::corpus::{Corpus, SyntheticTask, Vocabulary};
use snis::criteria::CriterionKind;
use snis::gradcheck::{self, ModelShape};
use snis::io::{read_file, write_atomic};
use snis::metrics;
use snis::model::ModelParams;
use snis::rng::{self, Purpose};
use snis::train;

use crate::Common;

/// The largest relative gradient error `grad-check` accepts.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-5;

const TOKENS_PER_LINE: usize = 20;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<snis::Error> for CliError {
    fn from(e: snis::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

pub type CliResult = Result<(), CliError>;

/// Defaults, then the config file, then `--set` overrides, then `--seed`.
fn load_config(common: &Common) -> Result<TrainConfig, CliError> {
    let mut config = TrainConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        config
            .apply_text(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    for assignment in &common.overrides {
        config
            .apply_override(assignment)
            .map_err(|e| CliError::Config(format!("--set {assignment}: {e}")))?;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn prepare_outdir(common: &Common) -> Result<&Path, CliError> {
    fs::create_dir_all(&common.outdir).map_err(|e| {
        CliError::Runtime(format!("cannot create {}: {e}", common.outdir.display()))
    })?;
    Ok(&common.outdir)
}

fn write(outdir: &Path, name: &str, bytes: &[u8]) -> CliResult {
    write_atomic(&outdir.join(name), bytes)?;
    Ok(())
}

/// Training and evaluation corpora, with the task when they are synthetic.
struct Data {
    train: Corpus,
    eval: Corpus,
    task: Option<SyntheticTask>,
}

fn read_lines(path: &str) -> Result<Vec<String>, CliError> {
    let bytes = read_file(Path::new(path))?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Runtime(format!("{path} is not valid UTF-8")))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Text corpora fix `C` to the size of the vocabulary built from the
/// training file, and `config.vocab_size` is updated to match.
fn load_data(config: &mut TrainConfig) -> Result<Data, CliError> {
    match config.corpus.clone() {
        None => {
            config.validate()?;
            let (task, train, eval) = train::synthetic_data(config)?;
            Ok(Data {
                train,
                eval,
                task: Some(task),
            })
        }
        Some(path) => {
            let lines = read_lines(&path)?;
            let vocab = Vocabulary::build(lines.iter(), config.min_count)
                .map_err(|e| CliError::Config(format!("corpus {path}: {e}")))?;
            config.vocab_size = vocab.len();
            config.validate()?;
            let train = Corpus::from_text(lines.iter(), &vocab);
            let eval = match config.eval_corpus.clone() {
                Some(eval_path) => Corpus::from_text(read_lines(&eval_path)?.iter(), &vocab),
                None => train.clone(),
            };
            Ok(Data {
                train,
                eval,
                task: None,
            })
        }
    }
}

pub fn gen_data(common: &Common) -> CliResult {
    let config = load_config(common)?;
    if config.corpus.is_some() {
        return Err(CliError::Config(
            "key `corpus`: gen-data only writes synthetic data".into(),
        ));
    }
    config.validate()?;
    let outdir = prepare_outdir(common)?;
    let (task, train_corpus, eval_corpus) = train::synthetic_data(&config)?;
    write(outdir, "config.resolved", config.resolved().as_bytes())?;
    write(outdir, "task.bin", &task.to_bytes())?;
    write(
        outdir,
        "train.txt",
        train_corpus.to_synthetic_text(TOKENS_PER_LINE).as_bytes(),
    )?;
    write(
        outdir,
        "eval.txt",
        eval_corpus.to_synthetic_text(TOKENS_PER_LINE).as_bytes(),
    )?;
    println!(
        "wrote task ({} states) and corpora of {} and {} tokens to {}",
        task.num_states(),
        train_corpus.len(),
        eval_corpus.len(),
        outdir.display()
    );
    Ok(())
}

pub fn train(common: &Common) -> CliResult {
    let mut config = load_config(common)?;
    let data = load_data(&mut config)?;
    let outdir = prepare_outdir(common)?;
    write(outdir, "config.resolved", config.resolved().as_bytes())?;
    let out = train::train(&config, &data.train, &data.eval, data.task.as_ref())?;
    write(
        outdir,
        "model.ckpt",
        &out.params.checkpoint_to_bytes(out.adam.as_ref()),
    )?;
    write(
        outdir,
        "metrics.csv",
        metrics::to_csv(&out.metrics).as_bytes(),
    )?;
    if let Some(last) = out.metrics.last() {
        println!(
            "epoch {}: train_loss {:.6} eval_ppl {:.4} norm_deficit {:.4}",
            last.epoch, last.train_loss, last.eval_ppl, last.norm_deficit
        );
    }
    Ok(())
}

const EVAL_HEADER: &str = "criterion,K,eval_ppl,norm_deficit,corrected_deficit,posterior_tv";

pub fn eval(common: &Common, checkpoint: Option<PathBuf>) -> CliResult {
    let mut config = load_config(common)?;
    let data = load_data(&mut config)?;
    let outdir = prepare_outdir(common)?;
    let path = checkpoint.unwrap_or_else(|| outdir.join("model.ckpt"));
    let (params, _) = ModelParams::checkpoint_from_bytes(&read_file(&path)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if params.vocab_size() != config.vocab_size || params.order() != config.order {
        return Err(CliError::Config(format!(
            "checkpoint {} has C = {}, order = {} but the config says C = {}, order = {}",
            path.display(),
            params.vocab_size(),
            params.order(),
            config.vocab_size,
            config.order
        )));
    }
    let kind = config.criterion_kind()?;
    let s = train::evaluate(
        &params,
        kind,
        &data.eval,
        data.task.as_ref(),
        config.eval_contexts,
    )?;
    let tv = s.posterior_tv.map(|v| v.to_string()).unwrap_or_default();
    let csv = format!(
        "{EVAL_HEADER}\n{},{},{},{},{},{}\n",
        config.criterion.name(),
        config.k,
        s.ppl,
        s.norm_deficit,
        s.corrected_deficit,
        tv
    );
    write(outdir, "config.resolved", config.resolved().as_bytes())?;
    write(outdir, "eval.csv", csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}

pub fn sweep_k(common: &Common) -> CliResult {
    let mut config = load_config(common)?;
    let data = load_data(&mut config)?;
    let outdir = prepare_outdir(common)?;
    write(outdir, "config.resolved", config.resolved().as_bytes())?;
    let rows = train::sweep_k(&config, &data.train, &data.eval, data.task.as_ref())?;
    write(outdir, "sweep.csv", metrics::to_csv(&rows).as_bytes())?;
    println!("{} rows for K in {:?}", rows.len(), config.ks);
    Ok(())
}

const GRAD_HEADER: &str = "criterion,link,instances,score_max_rel_err,model_max_rel_err";

pub fn grad_check(common: &Common) -> CliResult {
    let config = load_config(common)?;
    let kind: CriterionKind = config.criterion_kind()?;
    if config.grad_check_instances == 0 {
        return Err(CliError::Config(
            "key `grad_check_instances`: must be at least 1".into(),
        ));
    }
    let outdir = prepare_outdir(common)?;
    let mut rng = rng::stream(config.seed, Purpose::GradCheck, 0, 0);
    let score = gradcheck::score_gradient_error(kind, config.grad_check_instances, &mut rng)?;
    let model_instances = config.grad_check_instances.div_ceil(10);
    let model =
        gradcheck::model_gradient_error(kind, ModelShape::default(), model_instances, &mut rng)?;
    let csv = format!(
        "{GRAD_HEADER}\n{},{},{},{score},{model}\n",
        kind.criterion().name(),
        kind.link().name(),
        config.grad_check_instances
    );
    write(outdir, "config.resolved", config.resolved().as_bytes())?;
    write(outdir, "grad_check.csv", csv.as_bytes())?;
    let worst = score.max(model);
    println!(
        "{}: max relative error {worst:e} (scores {score:e}, parameters {model:e})",
        kind.criterion()
    );
    if worst > GRAD_CHECK_TOLERANCE {
        return Err(CliError::Runtime(format!(
            "gradient check failed for {}: {worst:e} > {GRAD_CHECK_TOLERANCE:e}",
            kind.criterion()
        )));
    }
    Ok(())
}

const BENCH_HEADER: &str = "criterion,K,batch_size,C,dim,sec_per_batch";

pub fn bench(common: &Common) -> CliResult {
    let mut config = load_config(common)?;
    let data = load_data(&mut config)?;
    let outdir = prepare_outdir(common)?;
    let seconds = train::bench_speed(&config, &data.train)?;
    let csv = format!(
        "{BENCH_HEADER}\n{},{},{},{},{},{seconds}\n",
        config.criterion.name(),
        if config.criterion.is_sampled() {
            config.k
        } else {
            0
        },
        config.batch_size,
        config.vocab_size,
        config.dim
    );
    write(outdir, "config.resolved", config.resolved().as_bytes())?;
    write(outdir, "bench.csv", csv.as_bytes())?;
    println!("{}: {seconds:.6} s/batch", config.criterion);
    Ok(())
}
