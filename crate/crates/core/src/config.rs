//! One JSON document pinning every knob of a run. Strict schema: unknown
//! keys are rejected so a typo'd hyperparameter cannot silently fall back to
//! a default.

use crate::control::study::ControlStudyConfig;
use crate::error::{Error, Result};
use crate::experiments::ExperimentPlan;
use crate::sim::CorpusConfig;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub master_seed: u64,
    pub corpus: CorpusConfig,
    pub experiment: ExperimentPlan,
    pub control: ControlStudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 1729,
            corpus: CorpusConfig::default(),
            experiment: ExperimentPlan::default(),
            control: ControlStudyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.corpus.validate()?;
        self.experiment.validate()?;
        self.control.validate()?;
        if self.control.seed_index >= self.experiment.n_seeds {
            return Err(Error::InvalidConfig(format!(
                "control.seed_index {} out of range for {} experiment seeds",
                self.control.seed_index, self.experiment.n_seeds
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_config(&text)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("config serializes");
        out.push('\n');
        out
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}
