#![allow(dead_code)]

pub mod fixtures;
pub mod grad_cases;

use recnet::autograd::gradcheck::{GradCheck, GradCheckReport};
use recnet::model::{ModelConfig, Recnet};
use recnet::nn::{randn, Bound, ParamId};
use recnet::{Tape, Tensor, Var};

/// Central-difference tolerance for double-precision checks.
pub const GRAD_TOL: f64 = 1e-3;

pub fn tiny_config() -> ModelConfig {
    ModelConfig::new(2, 8, 2).unwrap()
}

/// Random image in `[lo, hi]`.
pub fn rand_image(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    randn::<f64>(shape, 1.0, seed).map(|v| lo + (hi - lo) * (1.0 / (1.0 + (-v).exp())))
}

/// Same model with every bias and the output head replaced by small random
/// values so no path is trivially zero.
pub fn perturbed_model(cfg: ModelConfig, seed: u64) -> Recnet<f64> {
    let mut m = Recnet::<f64>::new(cfg, seed).unwrap();
    let ids: Vec<ParamId> = m.params().ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let name = m.params().name(id).to_string();
        let shape = m.params().get(id).shape().to_vec();
        if name.ends_with(".bias") || name.starts_with("head.") {
            let t = randn::<f64>(&shape, 0.05, seed.wrapping_add(1000 + i as u64));
            m.params_mut().set(id, t).unwrap();
        }
    }
    m
}

/// Fixed random weights used to reduce a tensor output to a scalar.
pub fn projection(shape: &[usize], seed: u64) -> Tensor<f64> {
    randn::<f64>(shape, 1.0, seed)
}

pub fn weighted_sum(tape: &Tape<f64>, x: &Var<f64>, w: &Tensor<f64>) -> Var<f64> {
    let w = tape.constant(w.clone());
    tape.sum_all(&tape.mul(x, &w).unwrap())
}

/// Gradient check of `f(x, params)` with respect to the input and the
/// selected parameters; the closure receives a bound parameter set whose
/// selected entries are tape leaves.
pub fn check_with_params(
    model: &Recnet<f64>,
    params: &[ParamId],
    x: &Tensor<f64>,
    max_coords: Option<usize>,
    f: impl Fn(&Tape<f64>, &Bound<f64>, &Var<f64>) -> recnet::Result<Var<f64>>,
) -> Vec<GradCheckReport> {
    let mut inputs = vec![x.clone()];
    inputs.extend(params.iter().map(|&id| model.params().get(id).clone()));
    let check = GradCheck {
        max_coords,
        ..GradCheck::default()
    };
    check
        .run(&inputs, |tape, vars| {
            let mut p = model.params().bind_frozen(tape);
            for (id, v) in params.iter().zip(&vars[1..]) {
                p.replace(*id, v.clone());
            }
            f(tape, &p, &vars[0])
        })
        .unwrap()
}

pub fn assert_grads_ok(what: &str, reports: &[GradCheckReport]) {
    for (i, r) in reports.iter().enumerate() {
        assert!(
            r.rel_err < GRAD_TOL,
            "{what} input {i}: rel err {} (analytic norm {}, numeric norm {})",
            r.rel_err,
            r.analytic_norm,
            r.numeric_norm
        );
    }
}

pub fn max_rel_err(reports: &[GradCheckReport]) -> f64 {
    reports.iter().map(|r| r.rel_err).fold(0.0, f64::max)
}
