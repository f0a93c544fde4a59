//! Training objectives: intensity MSE, cosine color similarity, mask BCE
//! against the luma-derived ground-truth mask, and exposure contrastive
//! regularization over perceptual features of the two exposure regions.

mod perceptual;

pub use perceptual::{PerceptualLayer, Vgg16Features};

use std::fmt;

use crate::autograd::{Tape, Var};
use crate::data::color::luma;
use crate::error::{Error, Result};
use crate::model::split_regions;
use crate::tensor::{Float, Tensor};

/// Guards the per-pixel color norms.
pub const COS_EPS: f64 = 1e-8;
/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the logs.
pub const BCE_EPS: f64 = 1e-7;
/// Guards the denominators of the contrastive ratios.
pub const ECR_EPS: f64 = 1e-7;

/// Weights of the four objective terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub mse: f64,
    pub cos: f64,
    pub bce: f64,
    pub ecr: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mse: 1.0,
            cos: 1.0,
            bce: 0.25,
            ecr: 0.1,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            mse: 0.0,
            cos: 0.0,
            bce: 0.0,
            ecr: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mse", self.mse),
            ("cos", self.cos),
            ("bce", self.bce),
            ("ecr", self.ecr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("loss weight {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn same_shape<T: Float>(what: &str, a: &Var<T>, b: &Var<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn mse_loss<T: Float>(tape: &Tape<T>, out: &Var<T>, gt: &Var<T>) -> Result<Var<T>> {
    same_shape("mse", out, gt)?;
    Ok(tape.mean_all(&tape.sqr(&tape.sub(out, gt)?)))
}

/// `1 - mean cos(out_rgb, gt_rgb)` over pixels.
pub fn cosine_color_loss<T: Float>(tape: &Tape<T>, out: &Var<T>, gt: &Var<T>) -> Result<Var<T>> {
    same_shape("cosine", out, gt)?;
    let dot = tape.sum_dims(&tape.mul(out, gt)?, &[1])?;
    let norm = |x: &Var<T>| -> Result<Var<T>> {
        let sq = tape.sum_dims(&tape.sqr(x), &[1])?;
        Ok(tape.sqrt(&tape.affine(&sq, 1.0, COS_EPS)))
    };
    let denom = tape.mul(&norm(out)?, &norm(gt)?)?;
    let cos = tape.div(&dot, &denom)?;
    Ok(tape.rsub_scalar(1.0, &tape.mean_all(&cos)))
}

/// Binary mask `(B, 1, H, W)`: 1 where the input luma exceeds the ground
/// truth luma (the input is too bright), 0 otherwise.
pub fn compute_gt_mask<T: Float>(i_in: &Tensor<T>, i_gt: &Tensor<T>) -> Result<Tensor<T>> {
    if i_in.shape() != i_gt.shape() {
        return Err(Error::Shape(format!(
            "gt mask: {:?} vs {:?}",
            i_in.shape(),
            i_gt.shape()
        )));
    }
    let (b, c, h, w) = i_in.dims4()?;
    if c != 3 {
        return Err(Error::Shape(format!("gt mask needs RGB input, got {c} channels")));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(b * hw);
    for bi in 0..b {
        let a = &i_in.data()[bi * 3 * hw..(bi + 1) * 3 * hw];
        let g = &i_gt.data()[bi * 3 * hw..(bi + 1) * 3 * hw];
        for i in 0..hw {
            let ya = luma(a[i], a[hw + i], a[2 * hw + i]);
            let yg = luma(g[i], g[hw + i], g[2 * hw + i]);
            out.push(if ya - yg > T::zero() { T::one() } else { T::zero() });
        }
    }
    Tensor::new(&[b, 1, h, w], out)
}

/// Which way the predicted mask is read against the luma-derived mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskPolarity {
    /// The predictor outputs the underexposure mask; its target is
    /// `1 - gt_mask`.
    #[default]
    Underexposed,
    /// The predictor is supervised directly with `gt_mask`.
    Overexposed,
}

impl MaskPolarity {
    pub fn target<T: Float>(self, gt_mask: &Tensor<T>) -> Tensor<T> {
        match self {
            Self::Underexposed => gt_mask.map(|v| T::one() - v),
            Self::Overexposed => gt_mask.clone(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "underexposed" => Ok(Self::Underexposed),
            "overexposed" => Ok(Self::Overexposed),
            _ => Err(Error::Config(format!(
                "mask_polarity must be underexposed or overexposed, got {s:?}"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Underexposed => "underexposed",
            Self::Overexposed => "overexposed",
        }
    }
}

/// Mean binary cross entropy of every mask against `target`, averaged over
/// masks.
pub fn bce_mask_loss<T: Float>(tape: &Tape<T>, masks: &[Var<T>], target: &Var<T>) -> Result<Var<T>> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("bce over zero masks".into()));
    }
    let not_target = tape.rsub_scalar(1.0, target);
    let mut total: Option<Var<T>> = None;
    for m in masks {
        same_shape("bce", m, target)?;
        let p = tape.clamp(m, BCE_EPS, 1.0 - BCE_EPS);
        let log_p = tape.ln(&p);
        let log_q = tape.ln(&tape.rsub_scalar(1.0, &p));
        let ll = tape.add(&tape.mul(target, &log_p)?, &tape.mul(&not_target, &log_q)?)?;
        let term = tape.affine(&tape.mean_all(&ll), -1.0, 0.0);
        total = Some(match total {
            Some(t) => tape.add(&t, &term)?,
            None => term,
        });
    }
    let total = total.expect("non-empty");
    Ok(tape.affine(&total, 1.0 / masks.len() as f64, 0.0))
}

/// `(img * (1 - m_u), img * m_u)`: the overexposed and underexposed
/// regions.
pub fn extract_regions<T: Float>(tape: &Tape<T>, img: &Var<T>, mask_u: &Var<T>) -> Result<(Var<T>, Var<T>)> {
    split_regions(tape, img, mask_u)
}

/// Mean absolute difference.
pub fn l1_distance<T: Float>(tape: &Tape<T>, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
    same_shape("l1", a, b)?;
    Ok(tape.mean_all(&tape.abs(&tape.sub(a, b)?)))
}

/// Cross-Gram `(B, C, C)`: `H_o^T H_u / N` with `H` the
/// positions x channels flattening of each feature map.
pub fn style_correlation<T: Float>(tape: &Tape<T>, h_o: &Var<T>, h_u: &Var<T>) -> Result<Var<T>> {
    same_shape("style correlation", h_o, h_u)?;
    let (b, c, h, w) = h_o.value().dims4()?;
    let n = h * w;
    let fo = tape.reshape(h_o, &[b, c, n])?;
    let fu = tape.reshape(h_u, &[b, c, n])?;
    let g = tape.bmm(&fo, &fu, false, true)?;
    Ok(tape.affine(&g, 1.0 / n as f64, 0.0))
}

/// Exposure contrastive regularization: for each region, how close the
/// output's features are to the ground truth relative to the input, plus
/// the same ratio on the cross-region style correlation. All three images
/// are split with the same mask. Range `[0, 3)`.
pub fn ecr_loss<T: Float>(
    tape: &Tape<T>,
    extractor: &Vgg16Features<T>,
    i_out: &Var<T>,
    i_in: &Var<T>,
    i_gt: &Var<T>,
    mask_u: &Var<T>,
) -> Result<Var<T>> {
    same_shape("ecr", i_out, i_in)?;
    same_shape("ecr", i_out, i_gt)?;
    let feats = |img: &Var<T>| -> Result<(Var<T>, Var<T>)> {
        let (o, u) = extract_regions(tape, img, mask_u)?;
        Ok((extractor.forward(tape, &o)?, extractor.forward(tape, &u)?))
    };
    let (h_o, h_u) = feats(i_out)?;
    let (pos_o, pos_u) = feats(i_gt)?;
    let (neg_o, neg_u) = feats(i_in)?;

    let ratio = |a: &Var<T>, pos: &Var<T>, neg: &Var<T>| -> Result<Var<T>> {
        let dp = l1_distance(tape, a, pos)?;
        let dn = l1_distance(tape, a, neg)?;
        let denom = tape.affine(&tape.add(&dp, &dn)?, 1.0, ECR_EPS);
        tape.div(&dp, &denom)
    };
    let region = tape.add(&ratio(&h_o, &pos_o, &neg_o)?, &ratio(&h_u, &pos_u, &neg_u)?)?;
    let c = style_correlation(tape, &h_o, &h_u)?;
    let c_pos = style_correlation(tape, &pos_o, &pos_u)?;
    let c_neg = style_correlation(tape, &neg_o, &neg_u)?;
    tape.add(&region, &ratio(&c, &c_pos, &c_neg)?)
}

/// Unweighted values of each term plus the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub cos: f64,
    pub bce: f64,
    pub ecr: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.total, self.mse, self.cos, self.bce, self.ecr]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "total={:.6} mse={:.6} cos={:.6} bce={:.6} ecr={:.6}",
            self.total, self.mse, self.cos, self.bce, self.ecr
        )
    }
}

/// Individual objective terms; `ecr` is absent when it was not computed.
pub struct LossTerms<T> {
    pub mse: Var<T>,
    pub cos: Var<T>,
    pub bce: Var<T>,
    pub ecr: Option<Var<T>>,
}

/// Weighted sum of the terms and its breakdown.
pub fn total_loss<T: Float>(
    tape: &Tape<T>,
    terms: &LossTerms<T>,
    weights: &LossWeights,
) -> Result<(Var<T>, LossBreakdown)> {
    let mut parts = vec![
        tape.affine(&terms.mse, weights.mse, 0.0),
        tape.affine(&terms.cos, weights.cos, 0.0),
        tape.affine(&terms.bce, weights.bce, 0.0),
    ];
    if let Some(ecr) = &terms.ecr {
        parts.push(tape.affine(ecr, weights.ecr, 0.0));
    }
    let mut total = parts[0].clone();
    for p in &parts[1..] {
        total = tape.add(&total, p)?;
    }
    let breakdown = LossBreakdown {
        total: total.item().to_f64(),
        mse: terms.mse.item().to_f64(),
        cos: terms.cos.item().to_f64(),
        bce: terms.bce.item().to_f64(),
        ecr: terms.ecr.as_ref().map_or(0.0, |e| e.item().to_f64()),
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var(tape: &Tape<f64>, shape: &[usize], v: &[f64]) -> Var<f64> {
        tape.constant(Tensor::from_f64(shape, v).unwrap())
    }

    #[test]
    fn weights_defaults() {
        let w = LossWeights::default();
        assert_eq!((w.mse, w.cos, w.bce, w.ecr), (1.0, 1.0, 0.25, 0.1));
        assert!(LossWeights { bce: -1.0, ..w }.validate().is_err());
    }

    #[test]
    fn total_loss_arithmetic() {
        let tape = Tape::<f64>::new();
        let terms = LossTerms {
            mse: var(&tape, &[], &[0.04]),
            cos: var(&tape, &[], &[0.02]),
            bce: var(&tape, &[], &[0.693]),
            ecr: Some(var(&tape, &[], &[1.0])),
        };
        let (total, b) = total_loss(&tape, &terms, &LossWeights::default()).unwrap();
        assert!((total.item() - 0.33325).abs() < 1e-12);
        let weighted = b.mse + b.cos + 0.25 * b.bce + 0.1 * b.ecr;
        assert!((weighted - b.total).abs() < 1e-12);

        let zero = LossTerms {
            mse: var(&tape, &[], &[0.0]),
            cos: var(&tape, &[], &[0.0]),
            bce: var(&tape, &[], &[0.0]),
            ecr: None,
        };
        assert_eq!(total_loss(&tape, &zero, &LossWeights::default()).unwrap().1.total, 0.0);
    }

    #[test]
    fn mse_constant_offset() {
        let tape = Tape::<f64>::no_grad();
        let gt = Tensor::<f64>::full(&[1, 3, 8, 8], 0.3);
        let out = gt.map(|v| v + 0.1);
        let l = mse_loss(&tape, &tape.constant(out), &tape.constant(gt.clone())).unwrap();
        assert!((l.item() - 0.01).abs() < 1e-12);
        let z = mse_loss(&tape, &tape.constant(gt.clone()), &tape.constant(gt)).unwrap();
        assert_eq!(z.item(), 0.0);
    }

    #[test]
    fn cosine_cases() {
        let tape = Tape::<f64>::no_grad();
        let a = crate::nn::randn::<f64>(&[1, 3, 8, 8], 1.0, 3).map(|v| v.abs() + 0.1);
        let same = cosine_color_loss(&tape, &tape.constant(a.clone()), &tape.constant(a.clone())).unwrap();
        // the norm epsilon leaves a residue of about eps / |a|^2
        assert!(same.item().abs() < 1e-6);
        let scaled = cosine_color_loss(&tape, &tape.constant(a.clone()), &tape.constant(a.scale(2.0))).unwrap();
        assert!(scaled.item().abs() < 1e-6);
        let mut red = Tensor::<f64>::zeros(&[1, 3, 8, 8]);
        let mut green = Tensor::<f64>::zeros(&[1, 3, 8, 8]);
        red.data_mut()[..64].fill(1.0);
        green.data_mut()[64..128].fill(1.0);
        let ortho = cosine_color_loss(&tape, &tape.constant(red), &tape.constant(green)).unwrap();
        assert!((ortho.item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gt_mask_ties_and_brighter() {
        let gt = Tensor::<f32>::full(&[1, 3, 8, 8], 0.4);
        assert!(compute_gt_mask(&gt, &gt).unwrap().data().iter().all(|&v| v == 0.0));
        let brighter = gt.map(|v| v + 0.1);
        assert!(compute_gt_mask(&brighter, &gt)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.0));
        assert!(compute_gt_mask(&brighter, &Tensor::zeros(&[1, 3, 8, 9])).is_err());
    }

    #[test]
    fn bce_reference_points() {
        let tape = Tape::<f64>::no_grad();
        let target = Tensor::<f64>::from_f64(&[1, 1, 2, 2], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        let t = tape.constant(target.clone());
        let half = tape.constant(Tensor::full(&[1, 1, 2, 2], 0.5));
        let l = bce_mask_loss(&tape, &[half.clone(), half], &t).unwrap();
        assert!((l.item() - std::f64::consts::LN_2).abs() < 1e-12);
        let exact = bce_mask_loss(&tape, &[tape.constant(target)], &t).unwrap();
        assert!((exact.item() - (-(1.0 - BCE_EPS).ln())).abs() < 1e-12);
        assert!(exact.item() < 1e-6);
    }

    #[test]
    fn extract_regions_identity_masks() {
        let tape = Tape::<f64>::no_grad();
        let img = tape.constant(crate::nn::randn(&[1, 3, 8, 8], 1.0, 1));
        let ones = tape.constant(Tensor::full(&[1, 1, 8, 8], 1.0));
        let (o, u) = extract_regions(&tape, &img, &ones).unwrap();
        assert_eq!(u.value(), img.value());
        assert!(o.value().data().iter().all(|&v| v == 0.0));
        let zeros = tape.constant(Tensor::zeros(&[1, 1, 8, 8]));
        let (o, u) = extract_regions(&tape, &img, &zeros).unwrap();
        assert_eq!(o.value(), img.value());
        assert!(u.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn style_correlation_by_hand() {
        let tape = Tape::<f64>::no_grad();
        // (B=1, C=2, H=1, W=2): channel rows [1, 2] and [3, 4]
        let ho = var(&tape, &[1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]);
        let hu = var(&tape, &[1, 2, 1, 2], &[0.5, -1.0, 2.0, 1.0]);
        let c = style_correlation(&tape, &ho, &hu).unwrap();
        // c[i][j] = sum_n ho[i,n] hu[j,n] / 2
        let expected = [
            (1.0 * 0.5 - 2.0 * 1.0) / 2.0,
            (1.0 * 2.0 + 2.0 * 1.0) / 2.0,
            (3.0 * 0.5 - 4.0 * 1.0) / 2.0,
            (3.0 * 2.0 + 4.0 * 1.0) / 2.0,
        ];
        for (a, e) in c.value().data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
        let zero = var(&tape, &[1, 2, 1, 2], &[0.0; 4]);
        assert!(style_correlation(&tape, &ho, &zero)
            .unwrap()
            .value()
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }
}
