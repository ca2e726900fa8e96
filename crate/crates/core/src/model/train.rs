//! Minibatch MAE + L2 training with the Adam update rule. The kernels are
//! batch-major with the independent index innermost so they stay
//! auto-vectorizable; this path dominates the experiment-grid runtime.

use super::{DynamicsModel, FineTuneConfig, Mlp, ModelMeta, TrainConfig, N_INPUTS};
use crate::dataset::{compute_norm_stats, NormStats, RegressionExample};
use crate::error::{Error, Result};
use crate::rng::stream;
use rand::seq::SliceRandom;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
// Flush optimizer moments to zero once they decay this far: the update they
// produce is sub-ulp anyway, and letting them drift into denormal range
// makes the whole run an order of magnitude slower on x86.
const MOMENT_FLUSH: f64 = 1e-290;

/// Gradients, same shapes as [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl Grads {
    fn zeros(h1: usize, h2: usize) -> Self {
        Grads {
            w1: vec![0.0; h1 * N_INPUTS],
            b1: vec![0.0; h1],
            w2: vec![0.0; h2 * h1],
            b2: vec![0.0; h2],
            w3: vec![0.0; h2],
            b3: vec![0.0; 1],
        }
    }

    fn clear(&mut self) {
        for block in [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ] {
            block.fill(0.0);
        }
    }

    /// Flattened in the same block order as [`Mlp::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }
}

// Scratch buffers reused across batches of one training run.
struct Workspace {
    z: Vec<f64>,    // B x 3 normalized inputs
    y: Vec<f64>,    // B targets
    a1: Vec<f64>,   // B x h1
    a2: Vec<f64>,   // B x h2
    res: Vec<f64>,  // B residuals (prediction - target)
    dz2: Vec<f64>,  // B x h2
    da1: Vec<f64>,  // B x h1
    w2t: Vec<f64>,  // h1 x h2 transposed copy of w2
}

impl Workspace {
    fn new(max_batch: usize, h1: usize, h2: usize) -> Self {
        Workspace {
            z: vec![0.0; max_batch * N_INPUTS],
            y: vec![0.0; max_batch],
            a1: vec![0.0; max_batch * h1],
            a2: vec![0.0; max_batch * h2],
            res: vec![0.0; max_batch],
            dz2: vec![0.0; max_batch * h2],
            da1: vec![0.0; max_batch * h1],
            w2t: vec![0.0; h1 * h2],
        }
    }

    fn refresh_w2t(&mut self, mlp: &Mlp) {
        for i in 0..mlp.h2 {
            for j in 0..mlp.h1 {
                self.w2t[j * mlp.h2 + i] = mlp.w2[i * mlp.h1 + j];
            }
        }
    }
}

// MAE + L2 loss with gradients for one batch of pre-normalized inputs.
// Returns the loss; gradients land in `grads` (overwritten).
fn batch_loss_and_grad(
    mlp: &Mlp,
    ws: &mut Workspace,
    n: usize,
    l2_lambda: f64,
    grads: &mut Grads,
) -> f64 {
    let (h1, h2) = (mlp.h1, mlp.h2);
    ws.refresh_w2t(mlp);

    // Forward: a1 = relu(z W1^T + b1).
    for b in 0..n {
        let z = &ws.z[b * N_INPUTS..(b + 1) * N_INPUTS];
        let a1 = &mut ws.a1[b * h1..(b + 1) * h1];
        for i in 0..h1 {
            let row = &mlp.w1[i * N_INPUTS..(i + 1) * N_INPUTS];
            a1[i] = (row[0] * z[0] + row[1] * z[1] + row[2] * z[2] + mlp.b1[i]).max(0.0);
        }
    }
    // a2 = relu(a1 W2^T + b2), accumulated axpy-style over the w2 transpose
    // so the inner loop is independent in i.
    for b in 0..n {
        let a1 = &ws.a1[b * h1..(b + 1) * h1];
        let a2 = &mut ws.a2[b * h2..(b + 1) * h2];
        a2.copy_from_slice(&mlp.b2);
        for j in 0..h1 {
            let aj = a1[j];
            if aj != 0.0 {
                let wt = &ws.w2t[j * h2..(j + 1) * h2];
                for i in 0..h2 {
                    a2[i] += aj * wt[i];
                }
            }
        }
        for v in a2.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    // Output layer and residuals.
    let mut data_loss = 0.0;
    for b in 0..n {
        let a2 = &ws.a2[b * h2..(b + 1) * h2];
        let mut out = mlp.b3[0];
        for i in 0..h2 {
            out += mlp.w3[i] * a2[i];
        }
        ws.res[b] = out - ws.y[b];
        data_loss += ws.res[b].abs();
    }
    data_loss /= n as f64;

    // Backward. dL/dout_b = sign(res_b)/n, with sign(0) = 0.
    grads.clear();
    let inv_n = 1.0 / n as f64;
    for b in 0..n {
        let dy = if ws.res[b] > 0.0 {
            inv_n
        } else if ws.res[b] < 0.0 {
            -inv_n
        } else {
            0.0
        };
        let a2 = &ws.a2[b * h2..(b + 1) * h2];
        let dz2 = &mut ws.dz2[b * h2..(b + 1) * h2];
        grads.b3[0] += dy;
        for i in 0..h2 {
            grads.w3[i] += dy * a2[i];
            dz2[i] = if a2[i] > 0.0 { dy * mlp.w3[i] } else { 0.0 };
        }
    }
    // gradW2 += dz2^T a1; db2 += column sums; da1 = dz2 W2.
    for b in 0..n {
        let a1 = &ws.a1[b * h1..(b + 1) * h1];
        let dz2 = &ws.dz2[b * h2..(b + 1) * h2];
        let da1 = &mut ws.da1[b * h1..(b + 1) * h1];
        da1.fill(0.0);
        for i in 0..h2 {
            let d = dz2[i];
            if d != 0.0 {
                grads.b2[i] += d;
                let gw2 = &mut grads.w2[i * h1..(i + 1) * h1];
                let w2 = &mlp.w2[i * h1..(i + 1) * h1];
                for j in 0..h1 {
                    gw2[j] += d * a1[j];
                    da1[j] += d * w2[j];
                }
            }
        }
    }
    // First layer.
    for b in 0..n {
        let z = &ws.z[b * N_INPUTS..(b + 1) * N_INPUTS];
        let a1 = &ws.a1[b * h1..(b + 1) * h1];
        let da1 = &ws.da1[b * h1..(b + 1) * h1];
        for j in 0..h1 {
            if a1[j] > 0.0 && da1[j] != 0.0 {
                let d = da1[j];
                grads.b1[j] += d;
                let gw1 = &mut grads.w1[j * N_INPUTS..(j + 1) * N_INPUTS];
                gw1[0] += d * z[0];
                gw1[1] += d * z[1];
                gw1[2] += d * z[2];
            }
        }
    }

    // L2 term: lambda * sum of squared weights (biases excluded), grad 2*lambda*w.
    let mut l2 = 0.0;
    if l2_lambda > 0.0 {
        for (w, g) in [
            (&mlp.w1, &mut grads.w1),
            (&mlp.w2, &mut grads.w2),
            (&mlp.w3, &mut grads.w3),
        ] {
            for (wi, gi) in w.iter().zip(g.iter_mut()) {
                l2 += wi * wi;
                *gi += 2.0 * l2_lambda * wi;
            }
        }
    }
    data_loss + l2_lambda * l2
}

/// MAE + L2 loss and analytic gradients for a batch of examples, normalized
/// with the model's own statistics.
pub fn loss_and_grad(
    model: &DynamicsModel,
    batch: &[RegressionExample],
    l2_lambda: f64,
) -> Result<(f64, Grads)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let mut ws = Workspace::new(batch.len(), model.mlp.h1, model.mlp.h2);
    for (b, e) in batch.iter().enumerate() {
        let z = model.norm.normalize(e.inputs());
        ws.z[b * N_INPUTS..(b + 1) * N_INPUTS].copy_from_slice(&z);
        ws.y[b] = e.target_tm_c;
    }
    let mut grads = Grads::zeros(model.mlp.h1, model.mlp.h2);
    let loss = batch_loss_and_grad(&model.mlp, &mut ws, batch.len(), l2_lambda, &mut grads);
    Ok((loss, grads))
}

struct Adam {
    m: Grads,
    v: Grads,
    t: u64,
}

impl Adam {
    fn new(h1: usize, h2: usize) -> Self {
        Adam {
            m: Grads::zeros(h1, h2),
            v: Grads::zeros(h1, h2),
            t: 0,
        }
    }

    fn apply(&mut self, mlp: &mut Mlp, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        let blocks: [(&mut Vec<f64>, &Vec<f64>, &mut Vec<f64>, &mut Vec<f64>); 6] = [
            (&mut mlp.w1, &grads.w1, &mut self.m.w1, &mut self.v.w1),
            (&mut mlp.b1, &grads.b1, &mut self.m.b1, &mut self.v.b1),
            (&mut mlp.w2, &grads.w2, &mut self.m.w2, &mut self.v.w2),
            (&mut mlp.b2, &grads.b2, &mut self.m.b2, &mut self.v.b2),
            (&mut mlp.w3, &grads.w3, &mut self.m.w3, &mut self.v.w3),
            (&mut mlp.b3, &grads.b3, &mut self.m.b3, &mut self.v.b3),
        ];
        for (p, g, m, v) in blocks {
            for i in 0..p.len() {
                let mut mi = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                let mut vi = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                if mi.abs() < MOMENT_FLUSH {
                    mi = 0.0;
                }
                if vi < MOMENT_FLUSH {
                    vi = 0.0;
                }
                m[i] = mi;
                v[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
    }
}

// Shared optimization loop: pre-normalizes once, then runs seeded
// shuffled minibatch Adam for `epochs` passes.
fn optimize(
    mlp: &mut Mlp,
    norm: &NormStats,
    examples: &[RegressionExample],
    lr: f64,
    epochs: usize,
    batch_size: usize,
    l2_lambda: f64,
    shuffle_seed: u64,
    shuffle_domain: &str,
) {
    let n = examples.len();
    let mut xs = vec![0.0; n * N_INPUTS];
    let mut ys = vec![0.0; n];
    for (i, e) in examples.iter().enumerate() {
        let z = norm.normalize(e.inputs());
        xs[i * N_INPUTS..(i + 1) * N_INPUTS].copy_from_slice(&z);
        ys[i] = e.target_tm_c;
    }
    let batch = batch_size.min(n);
    let mut ws = Workspace::new(batch, mlp.h1, mlp.h2);
    let mut grads = Grads::zeros(mlp.h1, mlp.h2);
    let mut adam = Adam::new(mlp.h1, mlp.h2);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        let mut rng = stream(shuffle_seed, shuffle_domain, &[epoch as u64]);
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            for (slot, &idx) in chunk.iter().enumerate() {
                ws.z[slot * N_INPUTS..(slot + 1) * N_INPUTS]
                    .copy_from_slice(&xs[idx * N_INPUTS..(idx + 1) * N_INPUTS]);
                ws.y[slot] = ys[idx];
            }
            batch_loss_and_grad(mlp, &mut ws, chunk.len(), l2_lambda, &mut grads);
            adam.apply(mlp, &grads, lr);
        }
    }
}

/// Train a model from scratch: normalization statistics from `examples`,
/// Xavier init, then seeded minibatch Adam. Deterministic per `cfg.seed`.
pub fn train(examples: &[RegressionExample], cfg: &TrainConfig) -> Result<DynamicsModel> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::InsufficientData(
            "cannot train on an empty example set".into(),
        ));
    }
    let norm = compute_norm_stats(examples)?;
    let mut model = super::init(cfg, &norm)?;
    optimize(
        &mut model.mlp,
        &model.norm,
        examples,
        cfg.lr,
        cfg.epochs,
        cfg.batch_size,
        cfg.l2_lambda,
        cfg.seed,
        "shuffle",
    );
    if !model.mlp.is_finite() {
        return Err(Error::NumericFault(
            "training diverged to non-finite parameters".into(),
        ));
    }
    Ok(model)
}

/// Continue optimization from `base` on local data at `lr * lr_scale` for
/// `ceil(epochs * epoch_scale)` epochs with fresh optimizer state. With
/// `freeze_norm` (the default) the base normalization statistics are kept.
pub fn fine_tune(
    base: &DynamicsModel,
    local_examples: &[RegressionExample],
    cfg: &TrainConfig,
    ft: &FineTuneConfig,
) -> Result<DynamicsModel> {
    cfg.validate()?;
    ft.validate()?;
    base.validate()?;
    if local_examples.is_empty() {
        return Err(Error::InsufficientData(
            "cannot fine-tune on an empty example set".into(),
        ));
    }
    let norm = if ft.freeze_norm {
        base.norm.clone()
    } else {
        compute_norm_stats(local_examples)?
    };
    let mut model = DynamicsModel {
        norm,
        mlp: base.mlp.clone(),
        metadata: ModelMeta {
            seed: cfg.seed,
            base_variant: Some(base.metadata.variant.clone()),
            source_ids: base.metadata.source_ids.clone(),
            ..ModelMeta::default()
        },
    };
    optimize(
        &mut model.mlp,
        &model.norm,
        local_examples,
        cfg.lr * ft.lr_scale,
        ft.scaled_epochs(cfg.epochs),
        cfg.batch_size,
        cfg.l2_lambda,
        cfg.seed,
        "ft-shuffle",
    );
    if !model.mlp.is_finite() {
        return Err(Error::NumericFault(
            "fine-tuning diverged to non-finite parameters".into(),
        ));
    }
    Ok(model)
}

/// Mean absolute error over a holdout set, °C. No regularization term.
/// Absolute errors are summed in sorted order, so the result is exactly
/// permutation-invariant.
pub fn evaluate_mae(model: &DynamicsModel, holdout: &[RegressionExample]) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::InsufficientData(
            "cannot evaluate on an empty holdout".into(),
        ));
    }
    let mut errs: Vec<f64> = holdout
        .iter()
        .map(|e| (model.predict_unchecked(e.inputs()) - e.target_tm_c).abs())
        .collect();
    errs.sort_unstable_by(f64::total_cmp);
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}
