//! Per-household series files: `step,draw_liters,hp_active,t_mid` with
//! hp_active as 0/1 and four decimal places on volumes and temperatures.

use super::{Corpus, SimRecord};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const SERIES_HEADER: &str = "step,draw_liters,hp_active,t_mid";

/// Render one series to CSV text (LF line endings, newline-terminated).
pub fn format_series(records: &[SimRecord]) -> String {
    let mut out = String::with_capacity(32 * (records.len() + 1));
    out.push_str(SERIES_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.4},{},{:.4}",
            r.step_index,
            r.draw_liters,
            if r.hp_active { 1 } else { 0 },
            r.t_mid
        );
    }
    out
}

/// Parse series CSV text, enforcing the writer's invariants: exact header,
/// four fields per row, finite non-negative draws, 0/1 heat-pump flags, and
/// step indices that start at 0 and increase without gaps.
pub fn parse_series(text: &str) -> Result<Vec<SimRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == SERIES_HEADER => {}
        Some(h) => {
            return Err(Error::Format(format!(
                "bad series header: expected `{SERIES_HEADER}`, got `{h}`"
            )))
        }
        None => return Err(Error::Format("empty series file".into())),
    }
    let mut records = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            return Err(Error::Format(format!("blank line {} in series", line_no + 2)));
        }
        let mut fields = line.split(',');
        let (step, draw, hp, t_mid) = match (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) {
            (Some(a), Some(b), Some(c), Some(d), None) => (a, b, c, d),
            _ => {
                return Err(Error::Format(format!(
                    "line {}: expected 4 comma-separated fields",
                    line_no + 2
                )))
            }
        };
        let step_index: usize = step.parse().map_err(|_| {
            Error::Format(format!("line {}: bad step index `{step}`", line_no + 2))
        })?;
        if step_index != records.len() {
            return Err(Error::Format(format!(
                "line {}: step index {} out of order (expected {})",
                line_no + 2,
                step_index,
                records.len()
            )));
        }
        let draw_liters: f64 = draw.parse().map_err(|_| {
            Error::Format(format!("line {}: bad draw volume `{draw}`", line_no + 2))
        })?;
        if !draw_liters.is_finite() || draw_liters < 0.0 {
            return Err(Error::Format(format!(
                "line {}: draw volume must be finite and >= 0",
                line_no + 2
            )));
        }
        let hp_active = match hp {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Format(format!(
                    "line {}: hp_active must be 0 or 1, got `{other}`",
                    line_no + 2
                )))
            }
        };
        let t_mid: f64 = t_mid.parse().map_err(|_| {
            Error::Format(format!("line {}: bad temperature `{t_mid}`", line_no + 2))
        })?;
        if !t_mid.is_finite() {
            return Err(Error::Format(format!(
                "line {}: temperature must be finite",
                line_no + 2
            )));
        }
        records.push(SimRecord {
            step_index,
            draw_liters,
            hp_active,
            t_mid,
        });
    }
    Ok(records)
}

pub fn write_series(path: &Path, records: &[SimRecord]) -> Result<()> {
    fs::write(path, format_series(records)).map_err(|e| Error::io(path, e))
}

pub fn read_series(path: &Path) -> Result<Vec<SimRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series(&text)
}

/// Write `<dir>/<set>/<household_id>.csv` for every series in the corpus.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    for series in corpus.all() {
        let set_dir = dir.join(series.set.as_str());
        fs::create_dir_all(&set_dir).map_err(|e| Error::io(&set_dir, e))?;
        write_series(
            &set_dir.join(format!("{}.csv", series.id())),
            &series.records,
        )?;
    }
    Ok(())
}

/// Read one household's series back from a corpus directory.
pub fn read_household(dir: &Path, set: super::SystemSet, id: &str) -> Result<Vec<SimRecord>> {
    let path = dir.join(set.as_str()).join(format!("{id}.csv"));
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "series file {} not found; run `simulate` first",
            path.display()
        )));
    }
    read_series(&path)
}
