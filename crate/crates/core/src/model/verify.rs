//! Finite-difference gradient oracle: independent check of the analytic
//! backpropagation against central differences on randomly generated smooth
//! configurations. Used by the unit tests and the acceptance gate.

use super::{loss_and_grad, DynamicsModel, Mlp, ModelMeta, N_INPUTS};
use crate::dataset::{NormStats, RegressionExample};
use crate::error::{Error, Result};
use crate::rng::stream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_EPSILON: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub cases: usize,
    pub params_checked: usize,
    pub failures: usize,
    pub worst_rel_err: f64,
}

// Minimum margins that keep every |.| kink and ReLU corner out of reach of
// an epsilon-sized parameter perturbation (inputs and activations here are
// O(1), so the induced pre-activation shift is well below these).
const PREACT_MARGIN: f64 = 1e-3;
const RESIDUAL_MARGIN: f64 = 1e-2;

fn smoothness_margins(mlp: &Mlp, x: &[f64; N_INPUTS], target: f64) -> (f64, f64) {
    let mut min_preact = f64::INFINITY;
    let mut a1 = vec![0.0; mlp.h1];
    for i in 0..mlp.h1 {
        let row = &mlp.w1[i * N_INPUTS..(i + 1) * N_INPUTS];
        let pre = row[0] * x[0] + row[1] * x[1] + row[2] * x[2] + mlp.b1[i];
        min_preact = min_preact.min(pre.abs());
        a1[i] = pre.max(0.0);
    }
    let mut a2 = vec![0.0; mlp.h2];
    for i in 0..mlp.h2 {
        let row = &mlp.w2[i * mlp.h1..(i + 1) * mlp.h1];
        let mut pre = mlp.b2[i];
        for j in 0..mlp.h1 {
            pre += row[j] * a1[j];
        }
        min_preact = min_preact.min(pre.abs());
        a2[i] = pre.max(0.0);
    }
    let mut out = mlp.b3[0];
    for i in 0..mlp.h2 {
        out += mlp.w3[i] * a2[i];
    }
    (min_preact, (out - target).abs())
}

fn random_case(
    rng: &mut ChaCha8Rng,
) -> (DynamicsModel, Vec<RegressionExample>, f64) {
    let h1 = rng.random_range(2..=4usize);
    let h2 = rng.random_range(2..=4usize);
    let n = rng.random_range(2..=6usize);
    let lambda = [0.0, 0.01, 0.5][rng.random_range(0..3usize)];
    let mut mlp = Mlp::zeros(h1, h2);
    for block in [&mut mlp.w1, &mut mlp.w2, &mut mlp.w3] {
        for w in block.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
    }
    for block in [&mut mlp.b1, &mut mlp.b2, &mut mlp.b3] {
        for b in block.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let examples: Vec<RegressionExample> = (0..n)
        .map(|i| RegressionExample {
            t_elapsed_h: rng.random_range(0.1..3.0),
            w_cum_l: rng.random_range(0.1..3.0),
            t0_c: rng.random_range(-2.0..2.0),
            target_tm_c: rng.random_range(-3.0..3.0),
            target_step: i,
        })
        .collect();
    let model = DynamicsModel {
        norm: NormStats::identity(),
        mlp,
        metadata: ModelMeta::default(),
    };
    (model, examples, lambda)
}

fn is_smooth(model: &DynamicsModel, examples: &[RegressionExample]) -> bool {
    examples.iter().all(|e| {
        let (preact, residual) = smoothness_margins(&model.mlp, &e.inputs(), e.target_tm_c);
        preact >= PREACT_MARGIN && residual >= RESIDUAL_MARGIN
    })
}

/// Check every analytic gradient entry of `n_cases` random smooth
/// configurations against central finite differences (epsilon = 1e-5).
/// Relative error uses a 1e-4 denominator floor so near-zero gradients are
/// compared absolutely.
pub fn finite_difference_check(n_cases: usize, seed: u64) -> Result<FdReport> {
    let mut report = FdReport::default();
    for case in 0..n_cases {
        let mut rng = stream(seed, "fd-case", &[case as u64]);
        let mut attempt = 0;
        let (model, examples, lambda) = loop {
            let candidate = random_case(&mut rng);
            if is_smooth(&candidate.0, &candidate.1) {
                break candidate;
            }
            attempt += 1;
            if attempt > 500 {
                return Err(Error::NumericFault(format!(
                    "fd case {case}: no smooth configuration found in 500 tries"
                )));
            }
        };
        let (_, grads) = loss_and_grad(&model, &examples, lambda)?;
        let analytic = grads.to_flat();
        let flat = model.mlp.to_flat();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += FD_EPSILON;
            let mut minus = flat.clone();
            minus[i] -= FD_EPSILON;
            let model_plus = DynamicsModel {
                mlp: Mlp::from_flat(model.mlp.h1, model.mlp.h2, &plus)?,
                ..model.clone()
            };
            let model_minus = DynamicsModel {
                mlp: Mlp::from_flat(model.mlp.h1, model.mlp.h2, &minus)?,
                ..model.clone()
            };
            let fd = (loss_and_grad(&model_plus, &examples, lambda)?.0
                - loss_and_grad(&model_minus, &examples, lambda)?.0)
                / (2.0 * FD_EPSILON);
            let denom = analytic[i].abs().max(fd.abs()).max(FD_REL_TOL);
            let rel = (analytic[i] - fd).abs() / denom;
            report.params_checked += 1;
            report.worst_rel_err = report.worst_rel_err.max(rel);
            if rel >= FD_REL_TOL {
                report.failures += 1;
            }
        }
        report.cases += 1;
    }
    Ok(report)
}
