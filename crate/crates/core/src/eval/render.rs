//! Report rendering: aligned text tables and plot-ready CSV.

use std::fmt::Write;

use super::{AccTable, CostReport, EvalReport, Stratum};

fn columns(table: &AccTable) -> Vec<(String, f64)> {
    table
        .iter()
        .flat_map(|(g, row)| row.iter().map(move |(k, v)| (format!("{g} Acc@{k}"), *v)))
        .collect()
}

fn aligned(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(headers, &mut out);
    line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>(), &mut out);
    for r in rows {
        line(r, &mut out);
    }
    out
}

/// Rows of `(label, instance count, table)` as aligned text.
pub fn acc_text(first_column: &str, rows: &[(String, usize, &AccTable)]) -> String {
    let Some((_, _, first)) = rows.first() else {
        return String::new();
    };
    let mut headers = vec![first_column.to_string(), "n".to_string()];
    headers.extend(columns(first).into_iter().map(|c| c.0));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, n, t)| {
            let mut r = vec![label.clone(), n.to_string()];
            r.extend(columns(t).into_iter().map(|c| format!("{:.2}", c.1)));
            r
        })
        .collect();
    aligned(&headers, &body)
}

pub fn report_text(name: &str, report: &EvalReport) -> String {
    acc_text("run", &[(name.to_string(), report.instance_count, &report.table)])
}

/// Long-format `run,<kind>,granularity,k,count,acc` rows for one breakdown.
pub fn strata_csv(kind: &str, runs: &[(String, Vec<Stratum>)]) -> String {
    let mut out = format!("run,{kind},granularity,k,count,acc\n");
    for (name, strata) in runs {
        for s in strata {
            for (g, row) in &s.table {
                for (k, v) in row {
                    let _ = writeln!(out, "{},{},{g},{k},{},{v:.2}", csv_field(name), csv_field(&s.label), s.count);
                }
            }
        }
    }
    out
}

/// `run,granularity,k,acc` rows, one per cutoff.
pub fn k_sweep_csv(runs: &[(String, &EvalReport)]) -> String {
    let mut out = String::from("run,granularity,k,acc\n");
    for (name, r) in runs {
        for (g, row) in &r.table {
            for (k, v) in row {
                let _ = writeln!(out, "{},{g},{k},{v:.2}", csv_field(name));
            }
        }
    }
    out
}

pub fn cost_text(name: &str, c: &CostReport) -> String {
    let headers: Vec<String> = ["run", "instances", "calls", "mean prompt", "mean output", "mean cost", "acc@10 per $"]
        .map(String::from)
        .to_vec();
    let row = vec![
        name.to_string(),
        c.per_instance.len().to_string(),
        c.total_calls.to_string(),
        format!("{:.1}", c.mean_prompt_tokens),
        format!("{:.1}", c.mean_output_tokens),
        format!("{:.6}", c.mean_cost),
        c.acc10_per_dollar.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
    ];
    aligned(&headers, &[row])
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
