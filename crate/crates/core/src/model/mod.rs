//! The function approximator f(t, w, T0) -> T_m: input standardization plus
//! a two-hidden-layer ReLU MLP, trained from scratch with MAE loss, L2
//! weight decay, and the Adam update rule.

mod train;
pub mod verify;

pub use train::{evaluate_mae, fine_tune, loss_and_grad, train, Grads};

use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const N_INPUTS: usize = 3;

/// Raw MLP parameters. Matrices are row-major: `w1` is h1 x 3, `w2` is
/// h2 x h1, `w3` is 1 x h2. `b3` is kept as a 1-vector so all six parameter
/// blocks share the same update code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub h1: usize,
    pub h2: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl Mlp {
    pub fn zeros(h1: usize, h2: usize) -> Self {
        Mlp {
            h1,
            h2,
            w1: vec![0.0; h1 * N_INPUTS],
            b1: vec![0.0; h1],
            w2: vec![0.0; h2 * h1],
            b2: vec![0.0; h2],
            w3: vec![0.0; h2],
            b3: vec![0.0; 1],
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.h1 == 0 || self.h2 == 0 {
            return Err(Error::InvalidConfig("hidden widths must be >= 1".into()));
        }
        let expect = [
            ("w1", self.w1.len(), self.h1 * N_INPUTS),
            ("b1", self.b1.len(), self.h1),
            ("w2", self.w2.len(), self.h2 * self.h1),
            ("b2", self.b2.len(), self.h2),
            ("w3", self.w3.len(), self.h2),
            ("b3", self.b3.len(), 1),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {got} entries, shape header requires {want}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().into_iter().flatten().all(|p| p.is_finite())
    }

    fn blocks(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().into_iter().map(<[f64]>::len).sum()
    }

    /// Parameters flattened in block order (w1, b1, w2, b2, w3, b3); the
    /// inverse of [`Mlp::from_flat`]. Used by the finite-difference oracle.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().into_iter().flatten().copied().collect()
    }

    pub fn from_flat(h1: usize, h2: usize, flat: &[f64]) -> Result<Self> {
        let mut mlp = Mlp::zeros(h1, h2);
        if flat.len() != mlp.param_count() {
            return Err(Error::InvalidConfig(format!(
                "expected {} flat parameters, got {}",
                mlp.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for block in [
            &mut mlp.w1,
            &mut mlp.b1,
            &mut mlp.w2,
            &mut mlp.b2,
            &mut mlp.w3,
            &mut mlp.b3,
        ] {
            let len = block.len();
            block.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(mlp)
    }

    /// Forward pass on an already normalized input.
    pub fn forward(&self, z: &[f64; N_INPUTS]) -> f64 {
        let mut a1 = vec![0.0; self.h1];
        for i in 0..self.h1 {
            let row = &self.w1[i * N_INPUTS..(i + 1) * N_INPUTS];
            a1[i] = (row[0] * z[0] + row[1] * z[1] + row[2] * z[2] + self.b1[i]).max(0.0);
        }
        let mut a2 = vec![0.0; self.h2];
        for i in 0..self.h2 {
            let row = &self.w2[i * self.h1..(i + 1) * self.h1];
            let mut acc = self.b2[i];
            for j in 0..self.h1 {
                acc += row[j] * a1[j];
            }
            a2[i] = acc.max(0.0);
        }
        let mut out = self.b3[0];
        for i in 0..self.h2 {
            out += self.w3[i] * a2[i];
        }
        out
    }
}

/// Training provenance carried inside the model file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelMeta {
    /// Variant tag: local, ptm_small, ptm_large, ptm_small_ft, ptm_large_ft.
    pub variant: String,
    /// Target system the model was trained or fine-tuned for, if any.
    pub system_id: Option<String>,
    /// Source households a PTM was pre-trained on.
    pub source_ids: Vec<String>,
    pub checkpoint_weeks: Option<usize>,
    pub seed: u64,
    /// Variant of the base model when this model was fine-tuned.
    pub base_variant: Option<String>,
}

/// Normalization statistics + MLP weights + provenance: the deployable f(.).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub norm: NormStats,
    pub mlp: Mlp,
    pub metadata: ModelMeta,
}

impl DynamicsModel {
    /// Predicted mid-point temperature for inputs (t_hours, w_liters, t0).
    pub fn predict(&self, x: [f64; N_INPUTS]) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFault(format!(
                "non-finite model input {x:?}"
            )));
        }
        Ok(self.mlp.forward(&self.norm.normalize(x)))
    }

    /// `predict` without the finiteness check, for hot loops over inputs
    /// that are known to be finite.
    pub fn predict_unchecked(&self, x: [f64; N_INPUTS]) -> f64 {
        self.mlp.forward(&self.norm.normalize(x))
    }

    pub fn validate(&self) -> Result<()> {
        self.mlp.check_shapes()?;
        self.norm.validate()?;
        if !self.mlp.is_finite() {
            return Err(Error::NumericFault("non-finite model parameters".into()));
        }
        Ok(())
    }
}

/// Training hyperparameters. Defaults are the artifact's reference settings;
/// the paper specifies only the architecture shape and loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub h1: usize,
    pub h2: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            h1: 32,
            h2: 32,
            lr: 1e-3,
            epochs: 400,
            batch_size: 64,
            l2_lambda: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// `epochs = 0` and `l2_lambda = 0` are deliberately legal: they mean
    /// "return the initialized model" and "no weight decay".
    pub fn validate(&self) -> Result<()> {
        if self.h1 == 0 || self.h2 == 0 {
            return Err(Error::InvalidConfig("hidden widths must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr must be in (0, 1), got {}",
                self.lr
            )));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "l2_lambda must be finite and >= 0, got {}",
                self.l2_lambda
            )));
        }
        Ok(())
    }
}

/// Fine-tuning schedule: reduced learning rate and iteration count relative
/// to the base TrainConfig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FineTuneConfig {
    pub lr_scale: f64,
    pub epoch_scale: f64,
    pub freeze_norm: bool,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            lr_scale: 0.1,
            epoch_scale: 0.2,
            freeze_norm: true,
        }
    }
}

impl FineTuneConfig {
    /// `epoch_scale = 0` is legal (no update steps at all); `lr_scale` must
    /// stay strictly positive so the optimizer remains well-defined.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_scale > 0.0 && self.lr_scale < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lr_scale must be in (0, 1), got {}",
                self.lr_scale
            )));
        }
        if !(self.epoch_scale >= 0.0 && self.epoch_scale < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epoch_scale must be in [0, 1), got {}",
                self.epoch_scale
            )));
        }
        Ok(())
    }

    pub fn scaled_epochs(&self, base_epochs: usize) -> usize {
        (base_epochs as f64 * self.epoch_scale).ceil() as usize
    }
}

/// Xavier-uniform initialization: weights uniform in (-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)) per layer, biases zero. Deterministic
/// per seed.
pub fn init(cfg: &TrainConfig, norm: &NormStats) -> Result<DynamicsModel> {
    cfg.validate()?;
    norm.validate()?;
    let mut rng = stream(cfg.seed, "init", &[]);
    let mut mlp = Mlp::zeros(cfg.h1, cfg.h2);
    let bounds = [
        (6.0 / (N_INPUTS + cfg.h1) as f64).sqrt(),
        (6.0 / (cfg.h1 + cfg.h2) as f64).sqrt(),
        (6.0 / (cfg.h2 + 1) as f64).sqrt(),
    ];
    for (block, a) in [&mut mlp.w1, &mut mlp.w2, &mut mlp.w3].into_iter().zip(bounds) {
        for w in block.iter_mut() {
            *w = rng.random_range(-a..a);
        }
    }
    Ok(DynamicsModel {
        norm: norm.clone(),
        mlp,
        metadata: ModelMeta {
            seed: cfg.seed,
            ..ModelMeta::default()
        },
    })
}

pub const MODEL_FORMAT: &str = "tanklab-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeHeader {
    inputs: usize,
    h1: usize,
    h2: usize,
    outputs: usize,
}

/// On-disk model container: format tag, version, shape header, NormStats,
/// full-precision parameters, metadata.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    shape: ShapeHeader,
    norm: NormStats,
    weights: Mlp,
    metadata: ModelMeta,
}

pub fn save(model: &DynamicsModel, path: &Path) -> Result<()> {
    model.validate()?;
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        shape: ShapeHeader {
            inputs: N_INPUTS,
            h1: model.mlp.h1,
            h2: model.mlp.h2,
            outputs: 1,
        },
        norm: model.norm.clone(),
        weights: model.mlp.clone(),
        metadata: model.metadata.clone(),
    };
    let json = serde_json::to_string_pretty(&file).expect("model serialization cannot fail");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Parse a model container from JSON text. Shape header, parameter block
/// lengths, and finiteness are all enforced.
pub fn parse_model(text: &str) -> Result<DynamicsModel> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("model file: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Format(format!(
            "not a model file (format tag `{}`)",
            file.format
        )));
    }
    if file.version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported model version {} (expected {MODEL_VERSION})",
            file.version
        )));
    }
    if file.shape.inputs != N_INPUTS || file.shape.outputs != 1 {
        return Err(Error::Format(format!(
            "unsupported shape {}x...x{}; this model family is 3->h1->h2->1",
            file.shape.inputs, file.shape.outputs
        )));
    }
    if file.shape.h1 != file.weights.h1 || file.shape.h2 != file.weights.h2 {
        return Err(Error::Format(format!(
            "shape header ({}, {}) disagrees with weight blocks ({}, {})",
            file.shape.h1, file.shape.h2, file.weights.h1, file.weights.h2
        )));
    }
    let model = DynamicsModel {
        norm: file.norm,
        mlp: file.weights,
        metadata: file.metadata,
    };
    model
        .validate()
        .map_err(|e| Error::Format(format!("model file invalid: {e}")))?;
    Ok(model)
}

pub fn load(path: &Path) -> Result<DynamicsModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::ModelLoad {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_model(&text).map_err(|e| Error::ModelLoad {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}
