//! Metric report TSV files and the accumulated table built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use glycocc::bench::{anp, EvalReport, PerformanceTensor};

use crate::error::CliError;

pub const HEADER: &str = "model\tdataset\tpartition\tsubset\tmetric\tvalue";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub dataset: String,
    pub partition: String,
    /// `full` or `ood`.
    pub subset: String,
    pub metric: String,
    pub value: f64,
}

pub fn rows_of(model: &str, dataset: &str, report: &EvalReport) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    let subsets = [("full", Some(&report.full)), ("ood", report.ood.as_ref())];
    for (subset, rec) in subsets {
        let Some(rec) = rec else { continue };
        rows.push(MetricRow {
            model: model.into(),
            dataset: dataset.into(),
            partition: report.partition.to_string(),
            subset: subset.into(),
            metric: "n".into(),
            value: rec.n as f64,
        });
        for (metric, value) in rec.entries() {
            rows.push(MetricRow {
                model: model.into(),
                dataset: dataset.into(),
                partition: report.partition.to_string(),
                subset: subset.into(),
                metric: metric.into(),
                value,
            });
        }
    }
    rows
}

pub fn write_rows(rows: &[MetricRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}\t{}", r.model, r.dataset, r.partition, r.subset, r.metric, r.value);
    }
    out
}

pub fn read_rows(text: &str, source: &str) -> Result<Vec<MetricRow>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (i == 0 && line.starts_with("model\t")) {
            continue;
        }
        let c: Vec<&str> = line.split('\t').collect();
        let value = (c.len() == 6).then(|| c[5].parse::<f64>().ok()).flatten();
        let Some(value) = value else {
            return Err(CliError::user(format!("{source}:{}: expected `{HEADER}`", i + 1)));
        };
        rows.push(MetricRow {
            model: c[0].into(),
            dataset: c[1].into(),
            partition: c[2].into(),
            subset: c[3].into(),
            metric: c[4].into(),
            value,
        });
    }
    Ok(rows)
}

/// Error metrics enter the table negated so that larger is better
/// everywhere.
fn oriented(metric: &str, value: f64) -> f64 {
    match metric {
        "mae" | "mse" => -value,
        _ => value,
    }
}

/// Per-model accumulated normalized performance over every
/// `(metric, dataset)` pair found in the selected rows.
pub fn anp_table(rows: &[MetricRow], partition: &str, subset: &str) -> Result<Vec<(String, f64)>, CliError> {
    let mut cells: BTreeMap<(String, String, String), f64> = BTreeMap::new();
    let mut models = Vec::new();
    let mut datasets = Vec::new();
    let mut metrics = Vec::new();
    let push = |v: &mut Vec<String>, s: &str| {
        if !v.iter().any(|x| x == s) {
            v.push(s.to_string());
        }
    };
    for r in rows.iter().filter(|r| r.partition == partition && r.subset == subset && r.metric != "n") {
        push(&mut models, &r.model);
        push(&mut datasets, &r.dataset);
        push(&mut metrics, &r.metric);
        let key = (r.metric.clone(), r.dataset.clone(), r.model.clone());
        if cells.insert(key, oriented(&r.metric, r.value)).is_some() {
            return Err(CliError::user(format!(
                "duplicate entry for model `{}`, dataset `{}`, metric `{}`",
                r.model, r.dataset, r.metric
            )));
        }
    }
    let mut values = Vec::with_capacity(metrics.len() * datasets.len() * models.len());
    for m in &metrics {
        for d in &datasets {
            for k in &models {
                let v = cells.get(&(m.clone(), d.clone(), k.clone())).ok_or_else(|| {
                    CliError::user(format!("no `{m}` value for model `{k}` on dataset `{d}` ({partition}/{subset})"))
                })?;
                values.push(*v);
            }
        }
    }
    let tensor = PerformanceTensor::new(metrics, datasets, models.clone(), values)?;
    Ok(models.into_iter().zip(anp(&tensor)?).collect())
}

/// Aligned text table, one line per row.
pub fn human_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    for r in rows {
        line(r.iter().map(|s| s.as_str()).collect(), &mut out);
    }
    out
}
