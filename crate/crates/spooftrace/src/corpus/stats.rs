//! Per-class count tables, optionally broken down by protocol partition.

use crate::protocol::{Partition, ProtocolSpec};
use crate::{Error, Result};

use super::types::{CorpusManifest, Task};

/// Count table: one row per class, one column per partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsTable {
    pub task: Task,
    pub partitions: Vec<String>,
    /// Bonafide first, remaining classes sorted.
    pub classes: Vec<String>,
    /// `counts[class][partition]`.
    pub counts: Vec<Vec<usize>>,
}

impl StatsTable {
    pub fn class_total(&self, class_idx: usize) -> usize {
        self.counts[class_idx].iter().sum()
    }

    pub fn grand_total(&self) -> usize {
        (0..self.classes.len()).map(|i| self.class_total(i)).sum()
    }
}

/// Tally class counts for `task`, split by `protocol` partitions when one
/// is provided (every manifest id must then appear in it).
pub fn corpus_stats(
    manifest: &CorpusManifest,
    task: Task,
    protocol: Option<&ProtocolSpec>,
) -> Result<StatsTable> {
    let partitions: Vec<String> = match protocol {
        Some(_) => Partition::ALL.iter().map(|p| p.as_str().to_string()).collect(),
        None => vec!["all".to_string()],
    };
    let classes = manifest.classes(task);
    let mut counts = vec![vec![0usize; partitions.len()]; classes.len()];
    for (utt, labels) in manifest.entries() {
        let part_idx = match protocol {
            Some(spec) => {
                let part = spec.partition.get(&utt.id).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "utterance `{}` is missing from the protocol",
                        utt.id
                    ))
                })?;
                Partition::ALL.iter().position(|p| p == part).expect("ALL covers")
            }
            None => 0,
        };
        let label = task.label_of(utt, labels);
        let class_idx = classes.iter().position(|c| *c == label).expect("classes cover");
        counts[class_idx][part_idx] += 1;
    }
    Ok(StatsTable {
        task,
        partitions,
        classes,
        counts,
    })
}

/// Render a stats table as TSV with per-class and grand totals.
pub fn render_stats(table: &StatsTable) -> String {
    let mut out = String::from("class");
    for p in &table.partitions {
        out.push('\t');
        out.push_str(p);
    }
    out.push_str("\ttotal\n");
    for (i, class) in table.classes.iter().enumerate() {
        out.push_str(class);
        for &c in &table.counts[i] {
            out.push_str(&format!("\t{c}"));
        }
        out.push_str(&format!("\t{}\n", table.class_total(i)));
    }
    out.push_str("total");
    for j in 0..table.partitions.len() {
        let col: usize = (0..table.classes.len()).map(|i| table.counts[i][j]).sum();
        out.push_str(&format!("\t{col}"));
    }
    out.push_str(&format!("\t{}\n", table.grand_total()));
    out
}
