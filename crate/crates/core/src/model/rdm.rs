//! Region-aware de-exposure: split features by the predicted exposure
//! mask and normalize each region with mask-aware instance normalization.

use rand_chacha::ChaCha8Rng;

use super::emp::ExposureMaskPredictor;
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, ConvOptions, ParamStore};
use crate::tensor::Float;

pub const IN_EPS: f64 = 1e-5;

/// Splits `f_in` into `(f_o, f_u)` with `f_u = f_in * m_u` and
/// `f_o = f_in * (1 - m_u)`, the mask broadcast over channels.
pub fn split_regions<T: Float>(tape: &Tape<T>, f_in: &Var<T>, mask_u: &Var<T>) -> Result<(Var<T>, Var<T>)> {
    check_mask(f_in, mask_u)?;
    let mask_o = tape.rsub_scalar(1.0, mask_u);
    let f_u = tape.mul(f_in, mask_u)?;
    let f_o = tape.mul(f_in, &mask_o)?;
    Ok((f_o, f_u))
}

pub(crate) fn check_mask<T: Float>(f: &Var<T>, mask: &Var<T>) -> Result<()> {
    let (b, _, h, w) = f.value().dims4()?;
    if mask.shape() != [b, 1, h, w] {
        return Err(Error::InvalidArgument(format!(
            "mask {:?} is not aligned with features {:?}",
            mask.shape(),
            f.shape()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RegionDeexposure {
    pub emp: ExposureMaskPredictor,
    pub gate_o: Conv2d,
    pub gate_u: Conv2d,
    pub proj_o: Conv2d,
    pub proj_u: Conv2d,
}

impl RegionDeexposure {
    pub fn new<T: Float>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str, channels: usize) -> Self {
        let emp = ExposureMaskPredictor::new(store, rng, &format!("{prefix}.emp"), channels);
        let mut conv = |name: &str, cin, cout, k| {
            Conv2d::new(store, rng, &format!("{prefix}.{name}"), cin, cout, ConvOptions::new(k))
        };
        Self {
            emp,
            gate_o: conv("gate_o", 3, 1, 3),
            gate_u: conv("gate_u", 3, 1, 3),
            proj_o: conv("proj_o", 2 * channels, channels, 1),
            proj_u: conv("proj_u", 2 * channels, channels, 1),
        }
    }

    /// Mask-aware instance normalization. Each region is re-weighted by a
    /// spatial gate computed from its channel-max, channel-mean and mask,
    /// concatenated with `f_in`, instance-normalized and projected; the two
    /// projections are summed.
    pub fn mask_aware_instance_norm<T: Float>(
        &self,
        tape: &Tape<T>,
        p: &Bound<T>,
        f_o: &Var<T>,
        f_u: &Var<T>,
        f_in: &Var<T>,
        mask_u: &Var<T>,
    ) -> Result<Var<T>> {
        check_mask(f_in, mask_u)?;
        let mask_o = tape.rsub_scalar(1.0, mask_u);
        let branch = |f_e: &Var<T>, m_e: &Var<T>, gate: &Conv2d, proj: &Conv2d| -> Result<Var<T>> {
            let gated = gated_region(tape, p, f_e, m_e, gate)?;
            let cat = tape.concat(&[&gated, f_in], 1)?;
            let normed = tape.instance_norm(&cat, IN_EPS)?;
            proj.forward(tape, p, &normed)
        };
        let n_o = branch(f_o, &mask_o, &self.gate_o, &self.proj_o)?;
        let n_u = branch(f_u, mask_u, &self.gate_u, &self.proj_u)?;
        tape.add(&n_o, &n_u)
    }

    /// Predicts the mask, splits and normalizes. Returns `(f_n, mask_u)`.
    pub fn forward<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, f_in: &Var<T>) -> Result<(Var<T>, Var<T>)> {
        let mask_u = self.emp.forward(tape, p, f_in)?;
        let (f_o, f_u) = split_regions(tape, f_in, &mask_u)?;
        let f_n = self.mask_aware_instance_norm(tape, p, &f_o, &f_u, f_in, &mask_u)?;
        Ok((f_n, mask_u))
    }
}

/// `sigmoid(conv3x3([max_c(f), mean_c(f), m])) * f`.
fn gated_region<T: Float>(tape: &Tape<T>, p: &Bound<T>, f: &Var<T>, mask: &Var<T>, gate: &Conv2d) -> Result<Var<T>> {
    let max = tape.max_dim(f, 1)?;
    let avg = tape.mean_dims(f, &[1])?;
    let pooled = tape.concat(&[&max, &avg, mask], 1)?;
    let g = tape.sigmoid(&gate.forward(tape, p, &pooled)?);
    tape.mul(f, &g)
}
