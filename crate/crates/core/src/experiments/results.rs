//! Result files: learning_curves.csv, cross_matrix.csv, summary.json.
//!
//! Emission is order-fixed and numerically canonical (6-decimal MAE columns,
//! full-precision JSON), so identical grids produce identical bytes.

use super::{CrossMatrix, GridOutcome, MissingCell, ResultRow, Variant};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const LEARNING_CURVES_FILE: &str = "learning_curves.csv";
pub const CROSS_MATRIX_FILE: &str = "cross_matrix.csv";
pub const SUMMARY_FILE: &str = "summary.json";

const CURVES_HEADER: &str = "variant,system,checkpoint,seed,mae";

pub fn format_learning_curves(rows: &[ResultRow]) -> String {
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for r in rows {
        let cp = r
            .checkpoint_weeks
            .map(|c| c.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{:.6}\n",
            r.variant.as_str(),
            r.system,
            cp,
            r.seed,
            r.mae
        ));
    }
    out
}

pub fn parse_learning_curves(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == CURVES_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "learning curves header mismatch: got {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "learning curves line {}: expected 5 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let variant = Variant::from_str(fields[0]).ok_or_else(|| {
            Error::Format(format!(
                "learning curves line {}: unknown variant {:?}",
                i + 2,
                fields[0]
            ))
        })?;
        if fields[1].is_empty() {
            return Err(Error::Format(format!(
                "learning curves line {}: empty system id",
                i + 2
            )));
        }
        let checkpoint_weeks = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse::<usize>().map_err(|e| {
                Error::Format(format!("learning curves line {}: checkpoint: {e}", i + 2))
            })?)
        };
        let seed = fields[3]
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("learning curves line {}: seed: {e}", i + 2)))?;
        let mae = fields[4]
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("learning curves line {}: mae: {e}", i + 2)))?;
        if !mae.is_finite() || mae < 0.0 {
            return Err(Error::Format(format!(
                "learning curves line {}: mae must be finite and >= 0, got {mae}",
                i + 2
            )));
        }
        rows.push(ResultRow {
            variant,
            system: fields[1].to_string(),
            checkpoint_weeks,
            seed,
            mae,
        });
    }
    Ok(rows)
}

pub fn format_cross_matrix(matrix: &CrossMatrix) -> String {
    let mut out = String::from("system");
    for id in &matrix.ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for (i, id) in matrix.ids.iter().enumerate() {
        out.push_str(id);
        for j in 0..matrix.n() {
            out.push_str(&format!(",{:.6}", matrix.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn parse_cross_matrix(text: &str) -> Result<CrossMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty cross matrix file".into()))?
        .trim_end_matches('\r');
    let mut cols = header.split(',');
    if cols.next() != Some("system") {
        return Err(Error::Format(
            "cross matrix header must start with 'system'".into(),
        ));
    }
    let ids: Vec<String> = cols.map(str::to_string).collect();
    if ids.is_empty() || ids.iter().any(|id| id.is_empty()) {
        return Err(Error::Format("cross matrix header needs system ids".into()));
    }
    let n = ids.len();
    let mut mae = Vec::with_capacity(n * n);
    let mut n_rows = 0usize;
    for (i, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 1 {
            return Err(Error::Format(format!(
                "cross matrix row {}: expected {} fields, got {}",
                i + 2,
                n + 1,
                fields.len()
            )));
        }
        if i >= n {
            return Err(Error::Format(format!(
                "cross matrix has more than {n} data rows"
            )));
        }
        if fields[0] != ids[i] {
            return Err(Error::Format(format!(
                "cross matrix row {}: label {:?} does not match header id {:?}",
                i + 2,
                fields[0],
                ids[i]
            )));
        }
        for f in &fields[1..] {
            let v = f
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("cross matrix row {}: {e}", i + 2)))?;
            mae.push(v);
        }
        n_rows += 1;
    }
    if n_rows != n {
        return Err(Error::Format(format!(
            "cross matrix has {n_rows} data rows for {n} ids"
        )));
    }
    let matrix = CrossMatrix { ids, mae };
    matrix.validate()?;
    Ok(matrix)
}

/// Mean/spread of one (variant, checkpoint) cell of Fig. 2. The paper does
/// not say whether its bands are across systems or across seeds, so both
/// spreads are reported (population sd of per-system means and of per-seed
/// means).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryCell {
    pub checkpoint_weeks: usize,
    pub n_rows: usize,
    pub mean_mae: Option<f64>,
    pub sd_across_systems: Option<f64>,
    pub sd_across_seeds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSummary {
    pub variant: String,
    pub by_checkpoint: Vec<SummaryCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub checkpoints: Vec<usize>,
    pub n_seeds: usize,
    pub variants: Vec<VariantSummary>,
    pub missing: Vec<MissingCell>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

fn group_means<K: Ord, F: Fn(&ResultRow) -> K>(rows: &[&ResultRow], key: F) -> Vec<f64> {
    let mut groups: std::collections::BTreeMap<K, Vec<f64>> = std::collections::BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(r.mae);
    }
    groups.values().map(|v| mean(v)).collect()
}

fn summarize_cell(rows: &[&ResultRow], checkpoint_weeks: usize) -> SummaryCell {
    if rows.is_empty() {
        return SummaryCell {
            checkpoint_weeks,
            n_rows: 0,
            mean_mae: None,
            sd_across_systems: None,
            sd_across_seeds: None,
        };
    }
    let all: Vec<f64> = rows.iter().map(|r| r.mae).collect();
    let by_system = group_means(rows, |r| r.system.clone());
    let by_seed = group_means(rows, |r| r.seed);
    SummaryCell {
        checkpoint_weeks,
        n_rows: rows.len(),
        mean_mae: Some(mean(&all)),
        sd_across_systems: Some(population_sd(&by_system)),
        sd_across_seeds: Some(population_sd(&by_seed)),
    }
}

/// 5 variants x checkpoints; non-fine-tuned PTM rows are checkpoint-
/// independent and replicated into every checkpoint cell for plotting.
pub fn compute_summary(
    outcome: &GridOutcome,
    checkpoints: &[usize],
    n_seeds: usize,
) -> Summary {
    let variants = Variant::ALL
        .into_iter()
        .map(|variant| VariantSummary {
            variant: variant.as_str().into(),
            by_checkpoint: checkpoints
                .iter()
                .map(|&cp| {
                    let wanted = if variant.has_checkpoint() {
                        Some(cp)
                    } else {
                        None
                    };
                    let rows: Vec<&ResultRow> = outcome
                        .rows
                        .iter()
                        .filter(|r| r.variant == variant && r.checkpoint_weeks == wanted)
                        .collect();
                    summarize_cell(&rows, cp)
                })
                .collect(),
        })
        .collect();
    Summary {
        checkpoints: checkpoints.to_vec(),
        n_seeds,
        variants,
        missing: outcome.missing.clone(),
    }
}

pub fn format_summary(summary: &Summary) -> String {
    let mut out = serde_json::to_string_pretty(summary).expect("summary serializes");
    out.push('\n');
    out
}

pub fn parse_summary(text: &str) -> Result<Summary> {
    let summary: Summary =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("summary.json: {e}")))?;
    if summary.variants.len() != Variant::ALL.len() {
        return Err(Error::Format(format!(
            "summary has {} variants, expected {}",
            summary.variants.len(),
            Variant::ALL.len()
        )));
    }
    for vs in &summary.variants {
        if Variant::from_str(&vs.variant).is_none() {
            return Err(Error::Format(format!("unknown variant {:?}", vs.variant)));
        }
        if vs.by_checkpoint.len() != summary.checkpoints.len() {
            return Err(Error::Format(format!(
                "variant {:?} has {} checkpoint cells, expected {}",
                vs.variant,
                vs.by_checkpoint.len(),
                summary.checkpoints.len()
            )));
        }
    }
    Ok(summary)
}

/// Write the three result files into `out_dir` (created if absent).
pub fn emit_results(
    outcome: &GridOutcome,
    matrix: &CrossMatrix,
    checkpoints: &[usize],
    n_seeds: usize,
    out_dir: &Path,
) -> Result<Summary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let curves_path = out_dir.join(LEARNING_CURVES_FILE);
    fs::write(&curves_path, format_learning_curves(&outcome.rows))
        .map_err(|e| Error::io(&curves_path, e))?;
    let matrix_path = out_dir.join(CROSS_MATRIX_FILE);
    fs::write(&matrix_path, format_cross_matrix(matrix))
        .map_err(|e| Error::io(&matrix_path, e))?;
    let summary = compute_summary(outcome, checkpoints, n_seeds);
    let summary_path = out_dir.join(SUMMARY_FILE);
    fs::write(&summary_path, format_summary(&summary))
        .map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}
