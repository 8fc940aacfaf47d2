//! Per-evaluation metric rows and their CSV form.

use std::fmt::Write;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "epoch,criterion,K,train_loss,eval_ppl,norm_deficit,posterior_tv,sec_per_batch";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub criterion: String,
    pub k: usize,
    /// `-F` averaged over the epoch's batches.
    pub train_loss: f64,
    pub eval_ppl: f64,
    pub norm_deficit: f64,
    /// Only for synthetic tasks.
    pub posterior_tv: Option<f64>,
    /// Only when timing is enabled.
    pub sec_per_batch: Option<f64>,
}

impl MetricsRow {
    /// Range invariants of every field.
    pub fn check(&self) -> Result<()> {
        if !(self.eval_ppl >= 1.0 - 1e-9) {
            return Err(Error::Numeric(format!(
                "perplexity {} below 1",
                self.eval_ppl
            )));
        }
        if !(self.norm_deficit >= 0.0) {
            return Err(Error::Numeric(format!(
                "negative deficit {}",
                self.norm_deficit
            )));
        }
        if let Some(tv) = self.posterior_tv {
            if !(-1e-12..=1.0 + 1e-12).contains(&tv) {
                return Err(Error::Numeric(format!("posterior TV {tv} outside [0, 1]")));
            }
        }
        if let Some(t) = self.sec_per_batch {
            if !(t >= 0.0) {
                return Err(Error::Numeric(format!("negative timing {t}")));
            }
        }
        if !self.train_loss.is_finite() {
            return Err(Error::Numeric("non-finite training loss".into()));
        }
        Ok(())
    }

    fn csv_line(&self, out: &mut String) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.criterion,
            self.k,
            self.train_loss,
            self.eval_ppl,
            self.norm_deficit,
            opt(self.posterior_tv),
            opt(self.sec_per_batch)
        )
        .unwrap();
    }
}

/// Header plus one LF-terminated line per row.
pub fn to_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        row.csv_line(&mut out);
    }
    out
}

/// Parse a metrics CSV. An empty input or a bare header gives no rows.
pub fn from_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        None => return Ok(Vec::new()),
        Some(h) if h.trim() == CSV_HEADER => {}
        Some(h) => {
            return Err(Error::format(
                "metrics csv",
                format!("unexpected header {h:?}"),
            ))
        }
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad =
                |what: &str| Error::format("metrics csv", format!("line {}: bad {what}", i + 2));
            let fields: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            if fields.len() != 8 {
                return Err(bad("field count"));
            }
            let float = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
            let optional = |s: &str, what: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    float(s, what).map(Some)
                }
            };
            Ok(MetricsRow {
                epoch: fields[0].parse().map_err(|_| bad("epoch"))?,
                criterion: fields[1].to_string(),
                k: fields[2].parse().map_err(|_| bad("K"))?,
                train_loss: float(fields[3], "train_loss")?,
                eval_ppl: float(fields[4], "eval_ppl")?,
                norm_deficit: float(fields[5], "norm_deficit")?,
                posterior_tv: optional(fields[6], "posterior_tv")?,
                sec_per_batch: optional(fields[7], "sec_per_batch")?,
            })
        })
        .collect()
}
