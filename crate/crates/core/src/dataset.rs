//! Regression example extraction: turns a household's quarter-hourly series
//! into (t, w, T0) -> T_m pairs anchored at reheat-cycle ends, plus the
//! checkpoint training windows, the fixed holdout window, and normalization
//! statistics.

use crate::error::{Error, Result};
use crate::sim::{SimRecord, HOURS_PER_STEP, STEPS_PER_WEEK};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Holdout window: the last three months of the year, weeks [40, 52).
pub const HOLDOUT_START_WEEK: usize = 40;
pub const HOLDOUT_END_WEEK: usize = 52;
/// Examples are emitted at hourly spacing within idle phases.
pub const EXAMPLE_SPACING_STEPS: usize = 4;

/// One training/evaluation pair: inputs (t_elapsed, w_cum, t0), target T_m.
/// `target_step` locates the target observation in the source series for
/// window splitting; it is bookkeeping, not a model input.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionExample {
    /// Hours since the end of the last reheat cycle.
    pub t_elapsed_h: f64,
    /// Liters drawn since the end of the last reheat cycle.
    pub w_cum_l: f64,
    /// Mid-point temperature at the end of the last reheat cycle, °C.
    pub t0_c: f64,
    /// Mid-point temperature at the target step, °C.
    pub target_tm_c: f64,
    pub target_step: usize,
}

impl RegressionExample {
    pub fn inputs(&self) -> [f64; 3] {
        [self.t_elapsed_h, self.w_cum_l, self.t0_c]
    }
}

/// Training window selector: examples with target step before week
/// `checkpoint_weeks`. The holdout window is fixed and shared by all splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub checkpoint_weeks: usize,
}

impl SplitSpec {
    pub fn new(checkpoint_weeks: usize) -> Result<Self> {
        let spec = SplitSpec { checkpoint_weeks };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_weeks == 0 || self.checkpoint_weeks > HOLDOUT_START_WEEK {
            return Err(Error::InvalidConfig(format!(
                "checkpoint_weeks must be in [1, {HOLDOUT_START_WEEK}] so the training \
                 window cannot touch the holdout window, got {}",
                self.checkpoint_weeks
            )));
        }
        Ok(())
    }
}

/// Per-feature input normalization statistics (population-sd convention).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; 3],
            sd: [1.0; 3],
        }
    }

    pub fn normalize(&self, x: [f64; 3]) -> [f64; 3] {
        [
            (x[0] - self.mean[0]) / self.sd[0],
            (x[1] - self.mean[1]) / self.sd[1],
            (x[2] - self.mean[2]) / self.sd[2],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !self.mean[i].is_finite() || !self.sd[i].is_finite() {
                return Err(Error::InvalidConfig("non-finite norm stats".into()));
            }
            if self.sd[i] <= 0.0 {
                return Err(Error::DegenerateFeature { index: i });
            }
        }
        Ok(())
    }
}

fn check_gapless(records: &[SimRecord]) -> Result<()> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    for (i, r) in records.iter().enumerate() {
        if r.step_index != first.step_index + i {
            return Err(Error::Format(format!(
                "record {} has step index {}, expected {} (series must be gapless)",
                i,
                r.step_index,
                first.step_index + i
            )));
        }
        if !r.draw_liters.is_finite() || r.draw_liters < 0.0 || !r.t_mid.is_finite() {
            return Err(Error::Format(format!(
                "record {i} has invalid draw or temperature"
            )));
        }
    }
    Ok(())
}

/// Scan a series for reheat-cycle ends and emit idle-phase examples.
///
/// The cycle end is the first step where hp_active transitions 1 -> 0; that
/// step anchors t0 = t_mid and emits the trivial (0, 0, t0) -> t0 example.
/// Further examples follow every 4 steps (hourly) until the next reheat
/// starts, with w_cum summing draws over (anchor, target]. A series without
/// a completed reheat yields no examples, which is not an error.
pub fn extract_examples(records: &[SimRecord]) -> Result<Vec<RegressionExample>> {
    check_gapless(records)?;
    let mut out = Vec::new();
    let mut anchor: Option<(usize, f64)> = None;
    let mut w_cum = 0.0;
    for (i, r) in records.iter().enumerate() {
        if r.hp_active {
            anchor = None;
            continue;
        }
        if i > 0 && records[i - 1].hp_active {
            anchor = Some((i, r.t_mid));
            w_cum = 0.0;
            out.push(RegressionExample {
                t_elapsed_h: 0.0,
                w_cum_l: 0.0,
                t0_c: r.t_mid,
                target_tm_c: r.t_mid,
                target_step: r.step_index,
            });
            continue;
        }
        if let Some((k, t0)) = anchor {
            w_cum += r.draw_liters;
            if (i - k) % EXAMPLE_SPACING_STEPS == 0 {
                out.push(RegressionExample {
                    t_elapsed_h: (i - k) as f64 * HOURS_PER_STEP,
                    w_cum_l: w_cum,
                    t0_c: t0,
                    target_tm_c: r.t_mid,
                    target_step: r.step_index,
                });
            }
        }
    }
    Ok(out)
}

/// Examples whose target step falls inside the training window
/// [0, checkpoint_weeks * 672).
pub fn split_train(examples: &[RegressionExample], spec: &SplitSpec) -> Vec<RegressionExample> {
    let end = spec.checkpoint_weeks * STEPS_PER_WEEK;
    examples
        .iter()
        .filter(|e| e.target_step < end)
        .cloned()
        .collect()
}

/// Examples whose target step falls inside the fixed holdout window
/// [week 40, week 52). Errors if the window is empty.
pub fn extract_holdout(examples: &[RegressionExample]) -> Result<Vec<RegressionExample>> {
    let lo = HOLDOUT_START_WEEK * STEPS_PER_WEEK;
    let hi = HOLDOUT_END_WEEK * STEPS_PER_WEEK;
    let out: Vec<RegressionExample> = examples
        .iter()
        .filter(|e| (lo..hi).contains(&e.target_step))
        .cloned()
        .collect();
    if out.is_empty() {
        return Err(Error::InsufficientData(
            "holdout window (weeks 40-52) contains no examples; series too short?".into(),
        ));
    }
    Ok(out)
}

/// Per-feature mean and population standard deviation over training inputs.
pub fn compute_norm_stats(train: &[RegressionExample]) -> Result<NormStats> {
    if train.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 examples for normalization, got {}",
            train.len()
        )));
    }
    let n = train.len() as f64;
    let mut mean = [0.0; 3];
    for e in train {
        let x = e.inputs();
        for i in 0..3 {
            mean[i] += x[i];
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0; 3];
    for e in train {
        let x = e.inputs();
        for i in 0..3 {
            var[i] += (x[i] - mean[i]).powi(2);
        }
    }
    let mut sd = [0.0; 3];
    for i in 0..3 {
        sd[i] = (var[i] / n).sqrt();
        // Threshold rather than == 0: a constant column must not sneak
        // through as sd ~ 1e-16 and blow up the normalized inputs.
        if sd[i] <= 1e-9 {
            return Err(Error::DegenerateFeature { index: i });
        }
    }
    Ok(NormStats { mean, sd })
}

pub const EXAMPLES_HEADER: &str = "t_hours,w_liters,t0,target_tm";

/// Render examples as CSV for inspection. `target_step` is bookkeeping and
/// is not serialized.
pub fn format_examples(examples: &[RegressionExample]) -> String {
    let mut out = String::with_capacity(48 * (examples.len() + 1));
    out.push_str(EXAMPLES_HEADER);
    out.push('\n');
    for e in examples {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6}",
            e.t_elapsed_h, e.w_cum_l, e.t0_c, e.target_tm_c
        );
    }
    out
}

/// Parse the inspection CSV back. Parsed examples carry `target_step = 0`
/// since the file does not store step indices.
pub fn parse_examples(text: &str) -> Result<Vec<RegressionExample>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == EXAMPLES_HEADER => {}
        Some(h) => {
            return Err(Error::Format(format!(
                "bad examples header: expected `{EXAMPLES_HEADER}`, got `{h}`"
            )))
        }
        None => return Err(Error::Format("empty examples file".into())),
    }
    let mut out = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            return Err(Error::Format(format!(
                "blank line {} in examples file",
                line_no + 2
            )));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "line {}: expected 4 comma-separated fields",
                line_no + 2
            )));
        }
        let mut vals = [0.0f64; 4];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.parse().map_err(|_| {
                Error::Format(format!("line {}: bad number `{f}`", line_no + 2))
            })?;
            if !vals[i].is_finite() {
                return Err(Error::Format(format!(
                    "line {}: non-finite value",
                    line_no + 2
                )));
            }
        }
        if vals[0] < 0.0 || vals[1] < 0.0 {
            return Err(Error::Format(format!(
                "line {}: t_hours and w_liters must be >= 0",
                line_no + 2
            )));
        }
        out.push(RegressionExample {
            t_elapsed_h: vals[0],
            w_cum_l: vals[1],
            t0_c: vals[2],
            target_tm_c: vals[3],
            target_step: 0,
        });
    }
    Ok(out)
}

pub fn write_examples(path: &Path, examples: &[RegressionExample]) -> Result<()> {
    fs::write(path, format_examples(examples)).map_err(|e| Error::io(path, e))
}

pub fn read_examples(path: &Path) -> Result<Vec<RegressionExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_examples(&text)
}
