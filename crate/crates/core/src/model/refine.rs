use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::nn::{Bound, Conv2d, ConvOptions, ParamStore};
use crate::tensor::Float;

pub const REDUCTION: usize = 4;

/// Residual channel attention: `f * gates(f) + f` with squeeze-excite
/// gates.
#[derive(Debug, Clone)]
pub struct Refine {
    pub squeeze: Conv2d,
    pub excite: Conv2d,
}

impl Refine {
    pub fn new<T: Float>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str, channels: usize) -> Self {
        let hidden = (channels / REDUCTION).max(1);
        Self {
            squeeze: Conv2d::new(
                store,
                rng,
                &format!("{prefix}.squeeze"),
                channels,
                hidden,
                ConvOptions::new(1),
            ),
            excite: Conv2d::new(
                store,
                rng,
                &format!("{prefix}.excite"),
                hidden,
                channels,
                ConvOptions::new(1),
            ),
        }
    }

    /// Per-sample channel gates `(B, C, 1, 1)`.
    pub fn gates<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, f: &Var<T>) -> Result<Var<T>> {
        let pooled = tape.mean_dims(f, &[2, 3])?;
        let z = tape.relu(&self.squeeze.forward(tape, p, &pooled)?);
        Ok(tape.sigmoid(&self.excite.forward(tape, p, &z)?))
    }

    pub fn forward<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, f: &Var<T>) -> Result<Var<T>> {
        let gates = self.gates(tape, p, f)?;
        let scaled = tape.mul(f, &gates)?;
        tape.add(&scaled, f)
    }
}
