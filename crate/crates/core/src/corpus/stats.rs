//! Dataset histograms: query length and edits per issue.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::units::CodeUnit;

const QUERY_BIN_WIDTH: usize = 100;
const QUERY_BINS: usize = 10;
const EDIT_CAP: usize = 10;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetStats {
    pub query_lengths: Vec<usize>,
    /// (files, modules, functions) modified per issue.
    pub edits: Vec<(usize, usize, usize)>,
}

impl DatasetStats {
    pub fn record(&mut self, issue_text: &str, modified: &[CodeUnit]) {
        self.query_lengths.push(crate::text::whitespace_count(issue_text));
        let files: BTreeSet<&str> = modified.iter().map(|u| u.file_path.as_str()).collect();
        let modules: BTreeSet<String> = modified.iter().map(CodeUnit::module_key).collect();
        self.edits.push((files.len(), modules.len(), modified.len()));
    }

    pub fn mean_query_length(&self) -> f64 {
        if self.query_lengths.is_empty() {
            return 0.0;
        }
        self.query_lengths.iter().sum::<usize>() as f64 / self.query_lengths.len() as f64
    }

    /// Rows of `histogram,bucket,count`.
    pub fn to_csv(&self, header_comment: &str) -> String {
        let mut out = String::new();
        for line in header_comment.lines() {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("histogram,bucket,count\n");

        let mut q: BTreeMap<usize, usize> = (0..=QUERY_BINS).map(|b| (b, 0)).collect();
        for &len in &self.query_lengths {
            *q.entry((len / QUERY_BIN_WIDTH).min(QUERY_BINS)).or_default() += 1;
        }
        for (b, count) in q {
            let label = if b == QUERY_BINS {
                format!("{}+", b * QUERY_BIN_WIDTH)
            } else {
                format!("{}-{}", b * QUERY_BIN_WIDTH, (b + 1) * QUERY_BIN_WIDTH - 1)
            };
            let _ = writeln!(out, "query_length,{label},{count}");
        }

        for (name, pick) in [
            ("files_per_issue", 0usize),
            ("modules_per_issue", 1),
            ("functions_per_issue", 2),
        ] {
            let mut h: BTreeMap<usize, usize> = (1..=EDIT_CAP).map(|b| (b, 0)).collect();
            for e in &self.edits {
                let v = [e.0, e.1, e.2][pick].clamp(1, EDIT_CAP);
                *h.entry(v).or_default() += 1;
            }
            for (b, count) in h {
                let label = if b == EDIT_CAP { format!("{b}+") } else { b.to_string() };
                let _ = writeln!(out, "{name},{label},{count}");
            }
        }
        out
    }
}
