//! Mixed-scale restoration: depth-wise multi-scale spatial paths plus dual
//! channel-wise self-attention between the block input and the
//! normalized features.

use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Bound, Conv2d, ConvOptions, ParamStore};
use crate::tensor::Float;

/// Intermediate tensors of the spatial path.
pub struct MixedScale<T> {
    /// Per-scale depth-wise features `[3x3, 5x5]`, used as key/value of
    /// the attention at the same scale.
    pub kv: [Var<T>; 2],
    pub x_k: Var<T>,
    pub x_v: Var<T>,
    pub f_s: Var<T>,
}

#[derive(Debug, Clone)]
pub struct MixedScaleRestoration {
    pub dw3: Conv2d,
    pub dw5: Conv2d,
    pub merge_k: Conv2d,
    pub merge_v: Conv2d,
    pub fuse_s: Conv2d,
    pub query3: Conv2d,
    pub query5: Conv2d,
    pub fuse_c: Conv2d,
    pub fuse_out: Conv2d,
    heads: usize,
    temperature: f64,
}

impl MixedScaleRestoration {
    pub fn new<T: Float>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str, cfg: &ModelConfig) -> Self {
        let c = cfg.base_channels;
        let mut conv =
            |name: &str, cin, cout, opts| Conv2d::new(store, rng, &format!("{prefix}.{name}"), cin, cout, opts);
        Self {
            dw3: conv("dw3", c, c, ConvOptions::new(3).groups(c)),
            dw5: conv("dw5", c, c, ConvOptions::new(5).groups(c)),
            merge_k: conv("merge_k", 2 * c, c, ConvOptions::new(3)),
            merge_v: conv("merge_v", 2 * c, c, ConvOptions::new(5)),
            fuse_s: conv("fuse_s", 2 * c, c, ConvOptions::new(1)),
            query3: conv("query3", c, c, ConvOptions::new(3)),
            query5: conv("query5", c, c, ConvOptions::new(5)),
            fuse_c: conv("fuse_c", 2 * c, c, ConvOptions::new(1)),
            fuse_out: conv("fuse_out", 3 * c, c, ConvOptions::new(1)),
            heads: cfg.attn_heads,
            temperature: cfg.temperature(),
        }
    }

    pub fn mixed_scale_spatial<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, f_n: &Var<T>) -> Result<MixedScale<T>> {
        let kv1 = tape.relu(&self.dw3.forward(tape, p, f_n)?);
        let kv2 = tape.relu(&self.dw5.forward(tape, p, f_n)?);
        let cat = tape.concat(&[&kv1, &kv2], 1)?;
        let x_k = tape.relu(&self.merge_k.forward(tape, p, &cat)?);
        let x_v = tape.relu(&self.merge_v.forward(tape, p, &cat)?);
        let f_s = self.fuse_s.forward(tape, p, &tape.concat(&[&x_k, &x_v], 1)?)?;
        Ok(MixedScale {
            kv: [kv1, kv2],
            x_k,
            x_v,
            f_s,
        })
    }

    /// Queries come from the block input at two scales; keys and values
    /// are the per-scale depth-wise features.
    pub fn channel_self_attention<T: Float>(
        &self,
        tape: &Tape<T>,
        p: &Bound<T>,
        f_in: &Var<T>,
        kv: &[Var<T>; 2],
    ) -> Result<Var<T>> {
        let q1 = tape.relu(&self.query3.forward(tape, p, f_in)?);
        let q2 = tape.relu(&self.query5.forward(tape, p, f_in)?);
        let a1 = channel_attention(tape, &q1, &kv[0], &kv[0], self.heads, self.temperature)?.0;
        let a2 = channel_attention(tape, &q2, &kv[1], &kv[1], self.heads, self.temperature)?.0;
        self.fuse_c.forward(tape, p, &tape.concat(&[&a1, &a2], 1)?)
    }

    /// Full unit: returns `F_out = conv1x1([F^n, F^s, F^c])`.
    pub fn forward<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, f_in: &Var<T>, f_n: &Var<T>) -> Result<Var<T>> {
        let spatial = self.mixed_scale_spatial(tape, p, f_n)?;
        let f_c = self.channel_self_attention(tape, p, f_in, &spatial.kv)?;
        let cat = tape.concat(&[f_n, &spatial.f_s, &f_c], 1)?;
        self.fuse_out.forward(tape, p, &cat)
    }
}

/// Multi-head channel attention. Each of `q`, `k`, `v` is `(B, C, H, W)`;
/// channels split into `heads` groups of `d = C / heads`. Per head the
/// `d x d` matrix `softmax(Q^T K / temperature)` (rows over key channels,
/// `Q`, `K` as positions x channels) mixes the value channels.
///
/// Returns the attended features and the attention matrices
/// `(B, heads, d, d)`.
pub fn channel_attention<T: Float>(
    tape: &Tape<T>,
    q: &Var<T>,
    k: &Var<T>,
    v: &Var<T>,
    heads: usize,
    temperature: f64,
) -> Result<(Var<T>, Var<T>)> {
    let (b, c, h, w) = q.value().dims4()?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return Err(Error::Shape(format!(
            "attention inputs differ: q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if heads == 0 || c % heads != 0 {
        return Err(Error::Config(format!(
            "{c} channels cannot be split into {heads} heads"
        )));
    }
    let split = [b, heads, c / heads, h * w];
    let qh = tape.reshape(q, &split)?;
    let kh = tape.reshape(k, &split)?;
    let vh = tape.reshape(v, &split)?;
    let logits = tape.bmm(&qh, &kh, false, true)?;
    let attn = tape.softmax_last(&tape.affine(&logits, 1.0 / temperature, 0.0))?;
    let out = tape.bmm(&attn, &vh, false, false)?;
    Ok((tape.reshape(&out, &[b, c, h, w])?, attn))
}
