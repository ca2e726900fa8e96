//! End-to-end orchestration shared by the CLI and the acceptance tests:
//! output-directory layout, corpus persistence with a provenance manifest,
//! the experiment grid, the control study, and plot-data export.

use crate::config::RunConfig;
use crate::control::study::{run_control_study, write_control_outcomes, ControlStudy};
use crate::error::{Error, Result};
use crate::experiments::results::{
    emit_results, parse_cross_matrix, parse_summary, Summary, CROSS_MATRIX_FILE, SUMMARY_FILE,
};
use crate::experiments::{run_full_grid, CrossMatrix, ExperimentData, GridOutcome};
use crate::sim::csv::{read_household, write_corpus};
use crate::sim::{build_profiles, generate_corpus, Corpus, CorpusConfig, SystemSet, STEPS_PER_DAY};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const CORPUS_DIR: &str = "corpus";
pub const MODELS_DIR: &str = "models";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FIG2_FILE: &str = "fig2_data.csv";
pub const FIG3_FILE: &str = "fig3_data.csv";

pub fn corpus_dir(out: &Path) -> PathBuf {
    out.join(CORPUS_DIR)
}

pub fn models_dir(out: &Path) -> PathBuf {
    out.join(MODELS_DIR)
}

/// Provenance of a corpus directory. Profiles are re-derived from it on
/// load, so the CSVs carry only the series themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub master_seed: u64,
    pub corpus: CorpusConfig,
}

/// Run a closure on a dedicated rayon pool of `jobs` threads (None = the
/// default global pool). Results are identical for any thread count; this
/// only bounds parallelism.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            if n == 0 {
                return Err(Error::InvalidConfig("--jobs must be >= 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Generate the corpus and persist it (per-household CSVs plus manifest).
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<Corpus> {
    cfg.validate()?;
    let corpus = generate_corpus(&cfg.corpus, cfg.master_seed)?;
    let dir = corpus_dir(out);
    write_corpus(&corpus, &dir)?;
    let manifest = CorpusManifest {
        master_seed: cfg.master_seed,
        corpus: cfg.corpus.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(corpus)
}

/// Load a previously simulated corpus back from disk, verifying it was
/// generated under the same configuration and seed.
pub fn load_corpus(cfg: &RunConfig, out: &Path) -> Result<Corpus> {
    cfg.validate()?;
    let dir = corpus_dir(out);
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::MissingPrerequisite(format!(
            "no corpus manifest at {}; run `simulate` first",
            manifest_path.display()
        )));
    }
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", manifest_path.display())))?;
    if manifest.master_seed != cfg.master_seed || manifest.corpus != cfg.corpus {
        return Err(Error::InvalidConfig(format!(
            "corpus at {} was generated under a different seed or corpus config; re-run `simulate`",
            dir.display()
        )));
    }
    let expected_len = cfg.corpus.n_days * STEPS_PER_DAY;
    let mut source = Vec::new();
    let mut target = Vec::new();
    for (set, profile) in build_profiles(&cfg.corpus, cfg.master_seed)? {
        let records = read_household(&dir, set, &profile.household_id)?;
        if records.len() != expected_len {
            return Err(Error::Format(format!(
                "{} has {} records, expected {expected_len}",
                profile.household_id,
                records.len()
            )));
        }
        let series = crate::sim::HouseholdSeries {
            set,
            profile,
            records,
        };
        match set {
            SystemSet::Source => source.push(series),
            SystemSet::Target => target.push(series),
        }
    }
    Ok(Corpus {
        tank: cfg.corpus.tank.clone(),
        source,
        target,
    })
}

/// The full experiment grid: train every cell, save models, emit the three
/// result files into `out`.
pub fn run_experiment(
    cfg: &RunConfig,
    corpus: &Corpus,
    out: &Path,
) -> Result<(GridOutcome, CrossMatrix, Summary)> {
    cfg.validate()?;
    let data = ExperimentData::from_corpus(corpus)?;
    let models = models_dir(out);
    let (outcome, matrix) = run_full_grid(&data, &cfg.experiment, cfg.master_seed, Some(&models))?;
    let summary = emit_results(
        &outcome,
        &matrix,
        &cfg.experiment.checkpoints,
        cfg.experiment.n_seeds,
        out,
    )?;
    Ok((outcome, matrix, summary))
}

/// The control study against the models saved by `run_experiment`.
pub fn run_control(cfg: &RunConfig, corpus: &Corpus, out: &Path) -> Result<ControlStudy> {
    cfg.validate()?;
    let models = models_dir(out);
    if !models.is_dir() {
        return Err(Error::MissingPrerequisite(format!(
            "no models directory at {}; run `experiment` first",
            models.display()
        )));
    }
    let study = run_control_study(corpus, &models, &cfg.control)?;
    write_control_outcomes(&study, out)?;
    Ok(study)
}

fn opt6(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn format_fig2(summary: &Summary) -> String {
    let mut out = String::from("variant,checkpoint,mean_mae,sd_across_systems,sd_across_seeds\n");
    for vs in &summary.variants {
        for cell in &vs.by_checkpoint {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                vs.variant,
                cell.checkpoint_weeks,
                opt6(cell.mean_mae),
                opt6(cell.sd_across_systems),
                opt6(cell.sd_across_seeds),
            ));
        }
    }
    out
}

pub fn format_fig3(matrix: &CrossMatrix) -> String {
    let mut out = String::from("train_system,eval_system,mae\n");
    for (i, train_id) in matrix.ids.iter().enumerate() {
        for (j, eval_id) in matrix.ids.iter().enumerate() {
            out.push_str(&format!("{train_id},{eval_id},{:.6}\n", matrix.get(i, j)));
        }
    }
    out
}

/// Re-derive the plot-data files from the result files already on disk.
pub fn run_report(out: &Path) -> Result<(Summary, CrossMatrix)> {
    let summary_path = out.join(SUMMARY_FILE);
    let matrix_path = out.join(CROSS_MATRIX_FILE);
    for p in [&summary_path, &matrix_path] {
        if !p.is_file() {
            return Err(Error::MissingPrerequisite(format!(
                "no result file at {}; run `experiment` first",
                p.display()
            )));
        }
    }
    let summary = parse_summary(
        &fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?,
    )?;
    let matrix = parse_cross_matrix(
        &fs::read_to_string(&matrix_path).map_err(|e| Error::io(&matrix_path, e))?,
    )?;
    let fig2 = out.join(FIG2_FILE);
    fs::write(&fig2, format_fig2(&summary)).map_err(|e| Error::io(&fig2, e))?;
    let fig3 = out.join(FIG3_FILE);
    fs::write(&fig3, format_fig3(&matrix)).map_err(|e| Error::io(&fig3, e))?;
    Ok((summary, matrix))
}
