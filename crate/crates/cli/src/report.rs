use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use snis::io::read_file;
use snis::metrics::{self, MetricsRow};

use crate::commands::{CliError, CliResult};

/// The last-epoch row of every `(criterion, K)` group, sorted by criterion
/// name and then K. Empty input gives `None`.
pub fn render(rows: &[MetricsRow]) -> Option<String> {
    let mut last: BTreeMap<(&str, usize), &MetricsRow> = BTreeMap::new();
    for row in rows {
        let slot = last.entry((row.criterion.as_str(), row.k)).or_insert(row);
        if row.epoch >= slot.epoch {
            *slot = row;
        }
    }
    if last.is_empty() {
        return None;
    }
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:>6} {:>12} {:>12} {:>12}",
        "criterion", "K", "PPL", "deficit", "sec/batch"
    )
    .unwrap();
    for ((criterion, k), row) in last {
        let timing = row
            .sec_per_batch
            .map(|t| format!("{t:.6}"))
            .unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{criterion:<10} {k:>6} {:>12.4} {:>12.4} {timing:>12}",
            row.eval_ppl, row.norm_deficit
        )
        .unwrap();
    }
    Some(out)
}

pub fn run(csv: &Path) -> CliResult {
    let bytes = read_file(csv)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Runtime(format!("{} is not valid UTF-8", csv.display())))?;
    let rows = metrics::from_csv(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", csv.display())))?;
    match render(&rows) {
        Some(table) => print!("{table}"),
        None => println!("no rows"),
    }
    Ok(())
}
