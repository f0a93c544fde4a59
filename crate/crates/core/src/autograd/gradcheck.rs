//! Central finite-difference checks for tape gradients.
//!
//! The numeric side only ever evaluates the function forward on a
//! gradient-free tape, so it shares no code with the backward pass it
//! verifies.

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `|analytic - numeric|_2 / max(|analytic|_2, |numeric|_2)` over the
    /// checked coordinates.
    pub rel_err: f64,
    pub max_abs_err: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub coords_checked: usize,
}

/// Finite-difference settings.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Check at most this many coordinates per input, evenly strided.
    pub max_coords: Option<usize>,
}

/// The default step sits near the cube root of f64 epsilon, where round-off
/// and truncation error of a central difference balance.
impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
        }
    }
}

impl GradCheck {
    /// Compares the tape gradient of the scalar `f(inputs)` against central
    /// differences for every input.
    pub fn run(
        &self,
        inputs: &[Tensor<f64>],
        f: impl Fn(&Tape<f64>, &[Var<f64>]) -> Result<Var<f64>>,
    ) -> Result<Vec<GradCheckReport>> {
        let tape = Tape::new();
        let vars: Vec<Var<f64>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&tape, &vars)?;
        if out.value().numel() != 1 {
            return Err(Error::Shape("gradient check needs a scalar function".into()));
        }
        let grads = tape.backward(&out)?;
        let analytic: Vec<Tensor<f64>> = vars.iter().map(|v| grads.get_or_zeros(v)).collect();
        drop(grads);

        let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
            let tape = Tape::no_grad();
            let vars: Vec<Var<f64>> = probe.iter().map(|t| tape.constant(t.clone())).collect();
            Ok(f(&tape, &vars)?.item())
        };

        let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
        let mut reports = Vec::with_capacity(inputs.len());
        for (i, input) in inputs.iter().enumerate() {
            let n = input.numel();
            let stride = match self.max_coords {
                Some(m) if m > 0 && n > m => n.div_ceil(m),
                _ => 1,
            };
            let (mut diff2, mut a2, mut n2, mut max_abs) = (0.0, 0.0, 0.0, 0.0f64);
            let mut count = 0;
            for j in (0..n).step_by(stride) {
                let orig = input.data()[j];
                probe[i].data_mut()[j] = orig + self.step;
                let plus = eval(&probe)?;
                probe[i].data_mut()[j] = orig - self.step;
                let minus = eval(&probe)?;
                probe[i].data_mut()[j] = orig;
                let numeric = (plus - minus) / (2.0 * self.step);
                let a = analytic[i].data()[j];
                diff2 += (a - numeric).powi(2);
                a2 += a * a;
                n2 += numeric * numeric;
                max_abs = max_abs.max((a - numeric).abs());
                count += 1;
            }
            let denom = a2.sqrt().max(n2.sqrt());
            reports.push(GradCheckReport {
                rel_err: if denom > 0.0 { diff2.sqrt() / denom } else { 0.0 },
                max_abs_err: max_abs,
                analytic_norm: a2.sqrt(),
                numeric_norm: n2.sqrt(),
                coords_checked: count,
            });
        }
        Ok(reports)
    }
}

/// Single-input convenience wrapper around [`GradCheck::run`].
pub fn check_gradient(
    x: &Tensor<f64>,
    step: f64,
    f: impl Fn(&Tape<f64>, &Var<f64>) -> Result<Var<f64>>,
) -> Result<GradCheckReport> {
    let check = GradCheck { step, max_coords: None };
    let mut r = check.run(std::slice::from_ref(x), |tape, vars| f(tape, &vars[0]))?;
    Ok(r.remove(0))
}
