//! Vocabularies, synthetic ground-truth tasks, corpora and batches.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::rng::{self, Purpose, StreamRng};

pub const UNK: &str = "<unk>";

/// Token/id bijection ordered by descending frequency.
///
/// Id 0 is the most frequent token; ties are broken lexicographically on the
/// surface form. `<unk>` is an ordinary entry whose count is the total count
/// of all tokens filtered out by `min_count`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl Vocabulary {
    /// Build a vocabulary from whitespace-tokenized lines.
    pub fn build<I, S>(lines: I, min_count: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total = 0u64;
        for line in lines {
            for tok in line.as_ref().split_whitespace() {
                *counts.entry(tok.to_owned()).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(Error::EmptyInput("no tokens in vocabulary input".into()));
        }

        let mut unk_count = counts.remove(UNK).unwrap_or(0);
        let mut kept = Vec::with_capacity(counts.len());
        for (tok, n) in counts {
            if n >= min_count {
                kept.push((tok, n));
            } else {
                unk_count += n;
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyInput(format!(
                "no token reaches min_count={min_count}"
            )));
        }
        kept.push((UNK.to_owned(), unk_count));
        Self::from_counts(kept)
    }

    /// Build a vocabulary from explicit `(token, count)` pairs. `<unk>` is
    /// added with count 0 if it is not among them.
    pub fn from_counts(mut entries: Vec<(String, u64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyInput("no vocabulary entries".into()));
        }
        if !entries.iter().any(|(t, _)| t == UNK) {
            entries.push((UNK.to_owned(), 0));
        }
        entries.sort_by(|(ta, na), (tb, nb)| nb.cmp(na).then_with(|| ta.cmp(tb)));

        let mut index = HashMap::with_capacity(entries.len());
        for (i, (t, _)) in entries.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid("entries", format!("duplicate token {t:?}")));
            }
        }
        let unk = index[UNK];
        let (tokens, counts) = entries.into_iter().unzip();
        Ok(Vocabulary {
            tokens,
            counts,
            index,
            unk,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn unk_id(&self) -> usize {
        self.unk
    }

    /// Id of `token`, or the `<unk>` id.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unk)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, line: &str) -> Vec<usize> {
        line.split_whitespace().map(|t| self.id(t)).collect()
    }
}

/// A tabulated conditional distribution `p(c | state(x))` over `C` classes.
///
/// Histories are `order`-tuples of ids. When `C^order` fits under the state
/// cap every history gets its own state (mixed-radix index); otherwise
/// histories are hashed onto `state_cap` states.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    vocab_size: usize,
    order: usize,
    state_cap: usize,
    num_states: usize,
    table: Vec<f64>,
    seed: Option<u64>,
}

pub const DEFAULT_STATE_CAP: usize = 512;
const TASK_MAGIC: &[u8; 8] = b"SNISTASK";
const TASK_VERSION: u32 = 1;

fn num_states(vocab_size: usize, order: usize, state_cap: usize) -> usize {
    let mut n = 1usize;
    for _ in 0..order {
        n = match n.checked_mul(vocab_size) {
            Some(v) if v <= state_cap => v,
            _ => return state_cap,
        };
    }
    n
}

impl SyntheticTask {
    /// Draw a task with Dirichlet(`concentration`) rows.
    ///
    /// After drawing, class ids are permuted so the average row mass is
    /// non-increasing in id.
    pub fn generate(
        vocab_size: usize,
        order: usize,
        concentration: f64,
        state_cap: usize,
        seed: u64,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::invalid("C", "vocabulary size must be at least 2"));
        }
        if order < 1 {
            return Err(Error::invalid("order", "context length must be at least 1"));
        }
        if !(concentration > 0.0) || !concentration.is_finite() {
            return Err(Error::invalid(
                "alpha",
                "concentration must be positive and finite",
            ));
        }
        if state_cap < 1 {
            return Err(Error::invalid("state_cap", "state cap must be at least 1"));
        }

        let states = num_states(vocab_size, order, state_cap);
        let mut rng = rng::stream(seed, Purpose::Task, 0, 0);
        // Gamma(a) = Gamma(a + 1) * U^(1/a); sampling in log space keeps
        // tiny concentrations from underflowing a whole row to zero.
        let gamma = Gamma::new(concentration + 1.0, 1.0)
            .map_err(|e| Error::invalid("alpha", e.to_string()))?;
        let mut table = vec![0.0; states * vocab_size];
        let mut logs = vec![0.0; vocab_size];
        for row in table.chunks_exact_mut(vocab_size) {
            for l in logs.iter_mut() {
                let g: f64 = gamma.sample(&mut rng);
                let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                *l = g.ln() + u.ln() / concentration;
            }
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (p, &l) in row.iter_mut().zip(&logs) {
                *p = (l - max).exp();
            }
            normalize(row);
        }

        let mut mass = vec![0.0; vocab_size];
        for row in table.chunks_exact(vocab_size) {
            for (m, p) in mass.iter_mut().zip(row) {
                *m += p;
            }
        }
        let mut perm: Vec<usize> = (0..vocab_size).collect();
        perm.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
        let mut relabeled = vec![0.0; table.len()];
        for (src, dst) in table
            .chunks_exact(vocab_size)
            .zip(relabeled.chunks_exact_mut(vocab_size))
        {
            for (new_id, &old_id) in perm.iter().enumerate() {
                dst[new_id] = src[old_id];
            }
        }

        Ok(SyntheticTask {
            vocab_size,
            order,
            state_cap,
            num_states: states,
            table: relabeled,
            seed: Some(seed),
        })
    }

    /// Build a task from explicit rows (one per state). Rows are normalized.
    pub fn from_rows(
        vocab_size: usize,
        order: usize,
        state_cap: usize,
        rows: Vec<f64>,
    ) -> Result<Self> {
        if vocab_size < 2 || order < 1 || state_cap < 1 {
            return Err(Error::invalid(
                "rows",
                "need C >= 2, order >= 1, state_cap >= 1",
            ));
        }
        let states = num_states(vocab_size, order, state_cap);
        if rows.len() != states * vocab_size {
            return Err(Error::invalid(
                "rows",
                format!(
                    "expected {} entries, got {}",
                    states * vocab_size,
                    rows.len()
                ),
            ));
        }
        let mut table = rows;
        for row in table.chunks_exact_mut(vocab_size) {
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || row.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::invalid(
                    "rows",
                    "rows must be non-negative with positive mass",
                ));
            }
            normalize(row);
        }
        Ok(SyntheticTask {
            vocab_size,
            order,
            state_cap,
            num_states: states,
            table,
            seed: None,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn state_cap(&self) -> usize {
        self.state_cap
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn is_hashed(&self) -> bool {
        num_states(self.vocab_size, self.order, usize::MAX) != self.num_states
    }

    /// Map an `order`-tuple history onto its state.
    pub fn state_of(&self, history: &[usize]) -> usize {
        debug_assert_eq!(history.len(), self.order);
        if !self.is_hashed() {
            history.iter().fold(0, |acc, &x| acc * self.vocab_size + x)
        } else {
            // FNV-1a over the little-endian ids.
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for &x in history {
                for b in (x as u64).to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
            (h % self.num_states as u64) as usize
        }
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.table[state * self.vocab_size..(state + 1) * self.vocab_size]
    }

    pub fn posterior(&self, history: &[usize]) -> &[f64] {
        self.row(self.state_of(history))
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(TASK_MAGIC);
        w.u32(TASK_VERSION);
        w.u64(self.vocab_size as u64);
        w.u64(self.order as u64);
        w.u64(self.state_cap as u64);
        w.f64s(&self.table);
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new("task", data);
        r.expect_magic(TASK_MAGIC)?;
        let version = r.u32()?;
        if version != TASK_VERSION {
            return Err(Error::format(
                "task",
                format!("unsupported version {version}"),
            ));
        }
        let vocab_size = r.u64()? as usize;
        let order = r.u64()? as usize;
        let state_cap = r.u64()? as usize;
        if vocab_size < 2 || order < 1 || state_cap < 1 {
            return Err(Error::format("task", "invalid dimensions"));
        }
        let states = num_states(vocab_size, order, state_cap);
        let table = r.f64s(states * vocab_size)?;
        r.finish()?;
        Ok(SyntheticTask {
            vocab_size,
            order,
            state_cap,
            num_states: states,
            table,
            seed: None,
        })
    }

    /// Conditional entropy (nats) of the task under the empirical history
    /// distribution of `corpus` positions `n >= order`.
    pub fn empirical_cross_entropy(&self, corpus: &Corpus) -> f64 {
        let m = self.order;
        let ids = corpus.ids();
        let mut total = 0.0;
        for n in m..ids.len() {
            let p = self.posterior(&ids[n - m..n])[ids[n]];
            total -= p.max(f64::MIN_POSITIVE).ln();
        }
        total / (ids.len() - m) as f64
    }
}

fn normalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= s;
    }
}

/// A sequence of token ids over a vocabulary of size `vocab_size`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    ids: Vec<usize>,
    vocab_size: usize,
}

impl Corpus {
    pub fn new(ids: Vec<usize>, vocab_size: usize) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::invalid(
                "ids",
                format!("id {bad} >= vocabulary size {vocab_size}"),
            ));
        }
        Ok(Corpus { ids, vocab_size })
    }

    /// Draw `num_tokens` tokens sequentially from `task`. The first history
    /// is all zeros and is not emitted.
    pub fn sample(task: &SyntheticTask, num_tokens: usize, rng: &mut StreamRng) -> Result<Self> {
        let m = task.order();
        if num_tokens <= m {
            return Err(Error::invalid(
                "tokens",
                format!("need more than {m} tokens, got {num_tokens}"),
            ));
        }
        let c = task.vocab_size();
        let cdf: Vec<f64> = task
            .table()
            .chunks_exact(c)
            .flat_map(|row| {
                row.iter().scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
            })
            .collect();

        let mut history = vec![0usize; m];
        let mut ids = Vec::with_capacity(num_tokens);
        for _ in 0..num_tokens {
            let state = task.state_of(&history);
            let row = &cdf[state * c..(state + 1) * c];
            let u: f64 = rng.random::<f64>() * row[c - 1];
            // The first index with cdf > u never has zero probability.
            let next = row.partition_point(|&x| x <= u).min(c - 1);
            ids.push(next);
            history.rotate_left(1);
            history[m - 1] = next;
        }
        Ok(Corpus { ids, vocab_size: c })
    }

    /// Encode whitespace-tokenized text through `vocab`.
    pub fn from_text<I, S>(lines: I, vocab: &Vocabulary) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let ids = lines
            .into_iter()
            .flat_map(|l| vocab.encode(l.as_ref()))
            .collect();
        Corpus {
            ids,
            vocab_size: vocab.len(),
        }
    }

    /// Parse text written by [`Corpus::to_synthetic_text`], where token
    /// `w<id>` stands for id `<id>`.
    pub fn from_synthetic_text(text: &str, vocab_size: usize) -> Result<Self> {
        let mut ids = Vec::new();
        for tok in text.split_whitespace() {
            let id = tok
                .strip_prefix('w')
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::format("corpus", format!("bad synthetic token {tok:?}")))?;
            ids.push(id);
        }
        Corpus::new(ids, vocab_size).map_err(|e| Error::format("corpus", e.to_string()))
    }

    /// One line per `tokens_per_line` tokens, LF line endings.
    pub fn to_synthetic_text(&self, tokens_per_line: usize) -> String {
        let mut out = String::with_capacity(self.ids.len() * 5);
        for line in self.ids.chunks(tokens_per_line.max(1)) {
            for (i, id) in line.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write!(out, "w{id}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of `(history, target)` pairs for context length `order`.
    pub fn num_pairs(&self, order: usize) -> usize {
        self.ids.len().saturating_sub(order)
    }
}

/// `B` training pairs: histories are stored row-major as `B x order`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub histories: Vec<usize>,
    pub targets: Vec<usize>,
    pub order: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn history(&self, n: usize) -> &[usize] {
        &self.histories[n * self.order..(n + 1) * self.order]
    }
}

/// Split every corpus position `n >= order` into batches of `batch_size`
/// pairs; the last batch may be shorter. With `shuffle_rng` the positions
/// are permuted first.
pub fn make_batches(
    corpus: &Corpus,
    batch_size: usize,
    order: usize,
    shuffle_rng: Option<&mut StreamRng>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be at least 1"));
    }
    if corpus.len() <= order {
        return Err(Error::invalid(
            "corpus",
            format!(
                "corpus of length {} is too short for order {order}",
                corpus.len()
            ),
        ));
    }
    let mut positions: Vec<usize> = (order..corpus.len()).collect();
    if let Some(rng) = shuffle_rng {
        positions.shuffle(rng);
    }
    let ids = corpus.ids();
    Ok(positions
        .chunks(batch_size)
        .map(|chunk| {
            let mut histories = Vec::with_capacity(chunk.len() * order);
            let mut targets = Vec::with_capacity(chunk.len());
            for &n in chunk {
                histories.extend_from_slice(&ids[n - order..n]);
                targets.push(ids[n]);
            }
            Batch {
                histories,
                targets,
                order,
            }
        })
        .collect())
}
