//! The paper's experiment grid: locally trained models at four data
//! checkpoints, small/large pre-trained models with and without fine-tuning,
//! and the 16x16 cross-performance matrix.
//!
//! Every grid cell derives its randomness from (master seed, cell
//! coordinates), so results are identical no matter how cells are scheduled
//! across threads.

pub mod results;

use crate::dataset::{
    extract_examples, extract_holdout, split_train, RegressionExample, SplitSpec,
};
use crate::error::{Error, Result};
use crate::model::{
    evaluate_mae, fine_tune, train, DynamicsModel, FineTuneConfig, ModelMeta, TrainConfig,
};
use crate::rng::derive_key;
use crate::sim::Corpus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;

/// The five model variants of Fig. 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Local,
    PtmSmall,
    PtmLarge,
    PtmSmallFt,
    PtmLargeFt,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Local,
        Variant::PtmSmall,
        Variant::PtmLarge,
        Variant::PtmSmallFt,
        Variant::PtmLargeFt,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Local => "local",
            Variant::PtmSmall => "ptm_small",
            Variant::PtmLarge => "ptm_large",
            Variant::PtmSmallFt => "ptm_small_ft",
            Variant::PtmLargeFt => "ptm_large_ft",
        }
    }

    pub fn from_str(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.as_str() == s)
    }

    /// Fine-tuned variants carry a checkpoint; plain PTMs do not.
    pub fn has_checkpoint(&self) -> bool {
        matches!(self, Variant::Local | Variant::PtmSmallFt | Variant::PtmLargeFt)
    }
}

/// Grid shape and training budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    /// Local/fine-tuning data checkpoints, weeks of observed data.
    pub checkpoints: Vec<usize>,
    pub n_seeds: usize,
    /// Source-corpus window for pre-training: "eight months" = 35 weeks.
    pub source_weeks: usize,
    /// Which source system the small PTM is trained on.
    pub small_source_index: usize,
    pub train: TrainConfig,
    pub fine_tune: FineTuneConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            checkpoints: vec![4, 8, 16, 32],
            n_seeds: 5,
            source_weeks: 35,
            small_source_index: 0,
            train: TrainConfig::default(),
            fine_tune: FineTuneConfig::default(),
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoints.is_empty() {
            return Err(Error::InvalidConfig("checkpoints must not be empty".into()));
        }
        for w in self.checkpoints.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidConfig(
                    "checkpoints must be strictly increasing".into(),
                ));
            }
        }
        for &cp in &self.checkpoints {
            SplitSpec::new(cp)?;
        }
        if self.n_seeds == 0 {
            return Err(Error::InvalidConfig("n_seeds must be >= 1".into()));
        }
        if self.source_weeks == 0 || self.source_weeks > 52 {
            return Err(Error::InvalidConfig(format!(
                "source_weeks must be in [1, 52], got {}",
                self.source_weeks
            )));
        }
        self.train.validate()?;
        self.fine_tune.validate()?;
        Ok(())
    }
}

/// One grid measurement: holdout MAE of (variant, system, checkpoint, seed).
/// `checkpoint_weeks` is None for non-fine-tuned PTM rows, whose performance
/// does not depend on locally observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub variant: Variant,
    pub system: String,
    pub checkpoint_weeks: Option<usize>,
    pub seed: usize,
    pub mae: f64,
}

/// A grid cell that could not produce a model (e.g. no training examples in
/// the window). Recorded, never silently skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingCell {
    pub variant: String,
    pub system: String,
    pub checkpoint_weeks: Option<usize>,
    pub seed: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct GridOutcome {
    pub rows: Vec<ResultRow>,
    pub missing: Vec<MissingCell>,
}

impl GridOutcome {
    fn merge(&mut self, other: GridOutcome) {
        self.rows.extend(other.rows);
        self.missing.extend(other.missing);
    }

    /// Rows for one variant, optionally restricted to a checkpoint (non-
    /// checkpoint variants match any requested checkpoint).
    pub fn rows_for(&self, variant: Variant, checkpoint: Option<usize>) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.variant == variant
                    && (!variant.has_checkpoint()
                        || checkpoint.is_none()
                        || r.checkpoint_weeks == checkpoint)
            })
            .collect()
    }
}

/// Fig. 3: entry (i, j) = MAE of system i's 35-week local model evaluated on
/// system j's holdout.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossMatrix {
    pub ids: Vec<String>,
    /// Row-major n x n.
    pub mae: Vec<f64>,
}

impl CrossMatrix {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.mae[row * self.n() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, col)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.is_empty() {
            return Err(Error::Format("empty cross matrix".into()));
        }
        if self.mae.len() != self.ids.len() * self.ids.len() {
            return Err(Error::Format(format!(
                "cross matrix has {} entries for {} ids",
                self.mae.len(),
                self.ids.len()
            )));
        }
        if self.mae.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Format(
                "cross matrix entries must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Audit trail of which data windows the grid touched; lets tests verify
/// that model fitting never reads holdout data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum DataAccess {
    /// Target-system training window read for fitting.
    TrainWindow { system: String, weeks: usize },
    /// Source-system window read for pre-training.
    SourceWindow { system: String, weeks: usize },
    /// Target-system holdout read for evaluation.
    Holdout { system: String },
}

#[derive(Debug, Default)]
pub struct AccessLog {
    events: Mutex<Vec<DataAccess>>,
}

impl AccessLog {
    fn record(&self, access: DataAccess) {
        self.events.lock().expect("access log poisoned").push(access);
    }

    /// Events so far, sorted (collection order is scheduling-dependent).
    pub fn events(&self) -> Vec<DataAccess> {
        let mut out = self.events.lock().expect("access log poisoned").clone();
        out.sort();
        out
    }

    pub fn clear(&self) {
        self.events.lock().expect("access log poisoned").clear();
    }
}

struct SystemData {
    id: String,
    examples: Vec<RegressionExample>,
    holdout: Vec<RegressionExample>,
}

/// Per-system example sets extracted once from the corpus, with frozen
/// holdouts and logged access.
pub struct ExperimentData {
    source: Vec<SystemData>,
    target: Vec<SystemData>,
    pub audit: AccessLog,
}

impl ExperimentData {
    pub fn from_corpus(corpus: &Corpus) -> Result<Self> {
        let build = |series: &crate::sim::HouseholdSeries, with_holdout: bool| -> Result<SystemData> {
            let examples = extract_examples(&series.records)?;
            let holdout = if with_holdout {
                extract_holdout(&examples)?
            } else {
                Vec::new()
            };
            Ok(SystemData {
                id: series.id().to_string(),
                examples,
                holdout,
            })
        };
        Ok(ExperimentData {
            source: corpus
                .source
                .iter()
                .map(|s| build(s, false))
                .collect::<Result<_>>()?,
            target: corpus
                .target
                .iter()
                .map(|s| build(s, true))
                .collect::<Result<_>>()?,
            audit: AccessLog::default(),
        })
    }

    pub fn n_source(&self) -> usize {
        self.source.len()
    }

    pub fn n_target(&self) -> usize {
        self.target.len()
    }

    pub fn target_ids(&self) -> Vec<String> {
        self.target.iter().map(|s| s.id.clone()).collect()
    }

    pub fn target_id(&self, idx: usize) -> &str {
        &self.target[idx].id
    }

    /// Training window of a target system: examples before the checkpoint.
    pub fn target_train(&self, idx: usize, weeks: usize) -> Result<Vec<RegressionExample>> {
        let spec = SplitSpec::new(weeks)?;
        self.audit.record(DataAccess::TrainWindow {
            system: self.target[idx].id.clone(),
            weeks,
        });
        Ok(split_train(&self.target[idx].examples, &spec))
    }

    /// Pre-training window of a source system.
    pub fn source_window(&self, idx: usize, weeks: usize) -> Result<Vec<RegressionExample>> {
        let spec = SplitSpec::new(weeks)?;
        self.audit.record(DataAccess::SourceWindow {
            system: self.source[idx].id.clone(),
            weeks,
        });
        Ok(split_train(&self.source[idx].examples, &spec))
    }

    /// The frozen holdout of a target system; only evaluation reads this.
    pub fn target_holdout(&self, idx: usize) -> &[RegressionExample] {
        self.audit.record(DataAccess::Holdout {
            system: self.target[idx].id.clone(),
        });
        &self.target[idx].holdout
    }
}

/// Canonical model file name for a grid cell, shared with the control study.
pub fn model_filename(
    variant: Variant,
    system: Option<&str>,
    checkpoint: Option<usize>,
    seed: usize,
) -> String {
    match variant {
        Variant::PtmSmall | Variant::PtmLarge => {
            format!("{}_s{}.json", variant.as_str(), seed)
        }
        Variant::Local | Variant::PtmSmallFt | Variant::PtmLargeFt => format!(
            "{}_{}_w{:02}_s{}.json",
            variant.as_str(),
            system.expect("per-system model needs a system id"),
            checkpoint.expect("per-system model needs a checkpoint"),
            seed
        ),
    }
}

/// Cross-matrix candidate model file name (35-week local model of a target
/// system, used as a small-corpus PTM).
pub fn xmat_filename(system: &str) -> String {
    format!("xmat_{system}.json")
}

fn save_if(model: &DynamicsModel, models_dir: Option<&Path>, name: &str) -> Result<()> {
    if let Some(dir) = models_dir {
        crate::model::save(model, &dir.join(name))?;
    }
    Ok(())
}

fn ensure_dir(models_dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = models_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

// Training failures that mean "this cell has no usable data", as opposed to
// real faults that should abort the run.
fn as_missing(e: &Error) -> Option<String> {
    match e {
        Error::InsufficientData(msg) => Some(msg.clone()),
        Error::DegenerateFeature { index } => {
            Some(format!("feature {index} is constant in this window"))
        }
        _ => None,
    }
}

enum CellOutput {
    Row(ResultRow),
    Missing(MissingCell),
}

fn collect_cells(results: Vec<Result<CellOutput>>) -> Result<GridOutcome> {
    let mut outcome = GridOutcome::default();
    for r in results {
        match r? {
            CellOutput::Row(row) => outcome.rows.push(row),
            CellOutput::Missing(m) => outcome.missing.push(m),
        }
    }
    Ok(outcome)
}

/// Local track: per target system x checkpoint x seed, train from scratch on
/// the system's own window and evaluate on its holdout.
pub fn run_local_track(
    data: &ExperimentData,
    plan: &ExperimentPlan,
    master_seed: u64,
    models_dir: Option<&Path>,
) -> Result<GridOutcome> {
    plan.validate()?;
    ensure_dir(models_dir)?;
    let mut cells = Vec::new();
    for sys in 0..data.n_target() {
        for &cp in &plan.checkpoints {
            for seed in 0..plan.n_seeds {
                cells.push((sys, cp, seed));
            }
        }
    }
    let results: Vec<Result<CellOutput>> = cells
        .into_par_iter()
        .map(|(sys, cp, seed)| {
            let system = data.target_id(sys).to_string();
            let train_set = data.target_train(sys, cp)?;
            let cfg = TrainConfig {
                seed: derive_key(master_seed, "local", &[sys as u64, cp as u64, seed as u64]),
                ..plan.train.clone()
            };
            match train(&train_set, &cfg) {
                Ok(mut model) => {
                    model.metadata = ModelMeta {
                        variant: Variant::Local.as_str().into(),
                        system_id: Some(system.clone()),
                        checkpoint_weeks: Some(cp),
                        seed: cfg.seed,
                        ..ModelMeta::default()
                    };
                    save_if(
                        &model,
                        models_dir,
                        &model_filename(Variant::Local, Some(&system), Some(cp), seed),
                    )?;
                    let mae = evaluate_mae(&model, data.target_holdout(sys))?;
                    Ok(CellOutput::Row(ResultRow {
                        variant: Variant::Local,
                        system,
                        checkpoint_weeks: Some(cp),
                        seed,
                        mae,
                    }))
                }
                Err(e) => match as_missing(&e) {
                    Some(reason) => Ok(CellOutput::Missing(MissingCell {
                        variant: Variant::Local.as_str().into(),
                        system,
                        checkpoint_weeks: Some(cp),
                        seed,
                        reason,
                    })),
                    None => Err(e),
                },
            }
        })
        .collect();
    collect_cells(results)
}

/// Pre-train the small (one source system) and large (all source systems)
/// models for one seed index, to the full training budget.
pub fn train_ptms(
    data: &ExperimentData,
    plan: &ExperimentPlan,
    master_seed: u64,
    seed: usize,
) -> Result<(DynamicsModel, DynamicsModel)> {
    plan.validate()?;
    if plan.small_source_index >= data.n_source() {
        return Err(Error::InvalidConfig(format!(
            "small_source_index {} out of range for {} source systems",
            plan.small_source_index,
            data.n_source()
        )));
    }
    let small_set = data.source_window(plan.small_source_index, plan.source_weeks)?;
    let small_cfg = TrainConfig {
        seed: derive_key(master_seed, "ptm_small", &[seed as u64]),
        ..plan.train.clone()
    };
    let mut small = train(&small_set, &small_cfg)?;
    small.metadata = ModelMeta {
        variant: Variant::PtmSmall.as_str().into(),
        source_ids: vec![data.source[plan.small_source_index].id.clone()],
        seed: small_cfg.seed,
        ..ModelMeta::default()
    };

    let mut pooled = Vec::new();
    for idx in 0..data.n_source() {
        pooled.extend(data.source_window(idx, plan.source_weeks)?);
    }
    let large_cfg = TrainConfig {
        seed: derive_key(master_seed, "ptm_large", &[seed as u64]),
        ..plan.train.clone()
    };
    let mut large = train(&pooled, &large_cfg)?;
    large.metadata = ModelMeta {
        variant: Variant::PtmLarge.as_str().into(),
        source_ids: data.source.iter().map(|s| s.id.clone()).collect(),
        seed: large_cfg.seed,
        ..ModelMeta::default()
    };
    Ok((small, large))
}

/// PTM track: evaluate the plain PTMs on every target holdout
/// (checkpoint-independent rows), and fine-tune them per system x checkpoint
/// x seed.
pub fn run_ptm_track(
    data: &ExperimentData,
    plan: &ExperimentPlan,
    ptms: &[(DynamicsModel, DynamicsModel)],
    master_seed: u64,
    models_dir: Option<&Path>,
) -> Result<GridOutcome> {
    plan.validate()?;
    ensure_dir(models_dir)?;
    if ptms.len() != plan.n_seeds {
        return Err(Error::InvalidConfig(format!(
            "expected {} PTM pairs, got {}",
            plan.n_seeds,
            ptms.len()
        )));
    }
    for (seed, (small, large)) in ptms.iter().enumerate() {
        save_if(small, models_dir, &model_filename(Variant::PtmSmall, None, None, seed))?;
        save_if(large, models_dir, &model_filename(Variant::PtmLarge, None, None, seed))?;
    }

    let mut outcome = GridOutcome::default();

    // Plain PTM rows: one evaluation per (variant, system, seed).
    for variant in [Variant::PtmSmall, Variant::PtmLarge] {
        let results: Vec<Result<CellOutput>> = (0..data.n_target())
            .flat_map(|sys| (0..plan.n_seeds).map(move |seed| (sys, seed)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(sys, seed)| {
                let model = match variant {
                    Variant::PtmSmall => &ptms[seed].0,
                    _ => &ptms[seed].1,
                };
                let mae = evaluate_mae(model, data.target_holdout(sys))?;
                Ok(CellOutput::Row(ResultRow {
                    variant,
                    system: data.target_id(sys).to_string(),
                    checkpoint_weeks: None,
                    seed,
                    mae,
                }))
            })
            .collect();
        outcome.merge(collect_cells(results)?);
    }

    // Fine-tuned rows.
    for variant in [Variant::PtmSmallFt, Variant::PtmLargeFt] {
        let mut cells = Vec::new();
        for sys in 0..data.n_target() {
            for &cp in &plan.checkpoints {
                for seed in 0..plan.n_seeds {
                    cells.push((sys, cp, seed));
                }
            }
        }
        let results: Vec<Result<CellOutput>> = cells
            .into_par_iter()
            .map(|(sys, cp, seed)| {
                let system = data.target_id(sys).to_string();
                let base = match variant {
                    Variant::PtmSmallFt => &ptms[seed].0,
                    _ => &ptms[seed].1,
                };
                let local_set = data.target_train(sys, cp)?;
                let cfg = TrainConfig {
                    seed: derive_key(
                        master_seed,
                        variant.as_str(),
                        &[sys as u64, cp as u64, seed as u64],
                    ),
                    ..plan.train.clone()
                };
                match fine_tune(base, &local_set, &cfg, &plan.fine_tune) {
                    Ok(mut model) => {
                        model.metadata.variant = variant.as_str().into();
                        model.metadata.system_id = Some(system.clone());
                        model.metadata.checkpoint_weeks = Some(cp);
                        save_if(
                            &model,
                            models_dir,
                            &model_filename(variant, Some(&system), Some(cp), seed),
                        )?;
                        let mae = evaluate_mae(&model, data.target_holdout(sys))?;
                        Ok(CellOutput::Row(ResultRow {
                            variant,
                            system,
                            checkpoint_weeks: Some(cp),
                            seed,
                            mae,
                        }))
                    }
                    Err(e) => match as_missing(&e) {
                        Some(reason) => Ok(CellOutput::Missing(MissingCell {
                            variant: variant.as_str().into(),
                            system,
                            checkpoint_weeks: Some(cp),
                            seed,
                            reason,
                        })),
                        None => Err(e),
                    },
                }
            })
            .collect();
        outcome.merge(collect_cells(results)?);
    }
    Ok(outcome)
}

/// Cross-performance matrix: train each target system's 35-week local model
/// once (its own derived seed) and evaluate it on every target holdout.
pub fn build_cross_matrix(
    data: &ExperimentData,
    plan: &ExperimentPlan,
    master_seed: u64,
    models_dir: Option<&Path>,
) -> Result<CrossMatrix> {
    plan.validate()?;
    ensure_dir(models_dir)?;
    let n = data.n_target();
    let models: Vec<DynamicsModel> = (0..n)
        .into_par_iter()
        .map(|sys| {
            let system = data.target_id(sys).to_string();
            let train_set = data.target_train(sys, plan.source_weeks)?;
            let cfg = TrainConfig {
                seed: derive_key(master_seed, "xmat", &[sys as u64]),
                ..plan.train.clone()
            };
            let mut model = train(&train_set, &cfg)?;
            model.metadata = ModelMeta {
                variant: "xmat_candidate".into(),
                system_id: Some(system.clone()),
                checkpoint_weeks: Some(plan.source_weeks),
                seed: cfg.seed,
                ..ModelMeta::default()
            };
            save_if(&model, models_dir, &xmat_filename(&system))?;
            Ok(model)
        })
        .collect::<Result<_>>()?;
    let mae: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|cell| {
            let (i, j) = (cell / n, cell % n);
            evaluate_mae(&models[i], data.target_holdout(j))
        })
        .collect::<Result<_>>()?;
    let matrix = CrossMatrix {
        ids: data.target_ids(),
        mae,
    };
    matrix.validate()?;
    Ok(matrix)
}

/// The whole grid: local track, PTMs, PTM track, cross matrix. Row order is
/// fixed: variant, then system, then checkpoint, then seed.
pub fn run_full_grid(
    data: &ExperimentData,
    plan: &ExperimentPlan,
    master_seed: u64,
    models_dir: Option<&Path>,
) -> Result<(GridOutcome, CrossMatrix)> {
    plan.validate()?;
    let mut outcome = run_local_track(data, plan, master_seed, models_dir)?;
    let ptms: Vec<(DynamicsModel, DynamicsModel)> = (0..plan.n_seeds)
        .into_par_iter()
        .map(|seed| train_ptms(data, plan, master_seed, seed))
        .collect::<Result<_>>()?;
    outcome.merge(run_ptm_track(data, plan, &ptms, master_seed, models_dir)?);
    let matrix = build_cross_matrix(data, plan, master_seed, models_dir)?;
    sort_rows(&mut outcome);
    Ok((outcome, matrix))
}

pub(crate) fn sort_rows(outcome: &mut GridOutcome) {
    outcome.rows.sort_by(|a, b| {
        (a.variant, &a.system, a.checkpoint_weeks, a.seed).cmp(&(
            b.variant,
            &b.system,
            b.checkpoint_weeks,
            b.seed,
        ))
    });
    outcome.missing.sort_by(|a, b| {
        (&a.variant, &a.system, a.checkpoint_weeks, a.seed).cmp(&(
            &b.variant,
            &b.system,
            b.checkpoint_weeks,
            b.seed,
        ))
    });
}

#[cfg(test)]
mod tests;
