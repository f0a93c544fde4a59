use std::rc::Rc;

use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{
    bmm, broadcast_shape, broadcast_to, broadcast_zip, conv2d_backward, conv2d_forward, sum_to, ConvSpec, Float, Tensor,
};

fn reduced_shape(shape: &[usize], dims: &[usize]) -> Result<Vec<usize>> {
    let mut out = shape.to_vec();
    for &d in dims {
        if d >= shape.len() {
            return Err(Error::Shape(format!("reduction axis {d} out of range for {shape:?}")));
        }
        out[d] = 1;
    }
    Ok(out)
}

fn split_axis(shape: &[usize], dim: usize) -> (usize, usize, usize) {
    let outer = shape[..dim].iter().product();
    let inner = shape[dim + 1..].iter().product();
    (outer, shape[dim], inner)
}

impl<T: Float> Tape<T> {
    fn unary(
        &self,
        x: &Var<T>,
        f: impl Fn(T) -> T,
        // d(out)/d(in) from (input, output)
        df: impl Fn(T, T) -> T + 'static,
    ) -> Var<T> {
        let y = x.value().map(f);
        let (xr, yr) = (x.rc(), Rc::new(y.clone()));
        self.record(y, &[x], move |g, _| {
            let data = g
                .data()
                .iter()
                .zip(xr.data().iter().zip(yr.data()))
                .map(|(&g, (&x, &y))| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape(), data).expect("unary grad"))]
        })
    }

    pub fn relu(&self, x: &Var<T>) -> Var<T> {
        self.unary(
            x,
            // `max` would turn NaN into 0 and hide a diverged network
            |v| if v < T::zero() { T::zero() } else { v },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self, x: &Var<T>) -> Var<T> {
        self.unary(x, sigmoid, |_, y| y * (T::one() - y))
    }

    pub fn exp(&self, x: &Var<T>) -> Var<T> {
        self.unary(x, |v| v.exp(), |_, y| y)
    }

    pub fn ln(&self, x: &Var<T>) -> Var<T> {
        self.unary(x, |v| v.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt(&self, x: &Var<T>) -> Var<T> {
        self.unary(x, |v| v.sqrt(), |_, y| T::one() / (y + y))
    }

    /// Absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&self, x: &Var<T>) -> Var<T> {
        self.unary(
            x,
            |v| v.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn sqr(&self, x: &Var<T>) -> Var<T> {
        self.unary(x, |v| v * v, |x, _| x + x)
    }

    /// `x * scale + shift`.
    pub fn affine(&self, x: &Var<T>, scale: f64, shift: f64) -> Var<T> {
        let (s, b) = (T::from_f64(scale), T::from_f64(shift));
        self.unary(x, move |v| v * s + b, move |_, _| s)
    }

    /// `value - x`.
    pub fn rsub_scalar(&self, value: f64, x: &Var<T>) -> Var<T> {
        self.affine(x, -1.0, value)
    }

    /// Clamps into `[lo, hi]`; gradient passes where `lo <= x <= hi`.
    pub fn clamp(&self, x: &Var<T>, lo: f64, hi: f64) -> Var<T> {
        let (l, h) = (T::from_f64(lo), T::from_f64(hi));
        self.unary(
            x,
            move |v| {
                if v < l {
                    l
                } else if v > h {
                    h
                } else {
                    v
                }
            },
            move |x, _| if x >= l && x <= h { T::one() } else { T::zero() },
        )
    }

    fn binary(
        &self,
        a: &Var<T>,
        b: &Var<T>,
        f: impl Fn(T, T) -> T,
        grads: impl Fn(&Tensor<T>, &Tensor<T>, &Tensor<T>, &[bool]) -> [Option<Tensor<T>>; 2] + 'static,
    ) -> Result<Var<T>> {
        let y = broadcast_zip(a.value(), b.value(), f)?;
        let (ar, br) = (a.rc(), b.rc());
        Ok(self.record(y, &[a, b], move |g, need| {
            let [ga, gb] = grads(g, &ar, &br, need);
            vec![ga.map(|t| sum_to(&t, ar.shape())), gb.map(|t| sum_to(&t, br.shape()))]
        }))
    }

    pub fn add(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.binary(
            a,
            b,
            |x, y| x + y,
            |g, _, _, need| [need[0].then(|| g.clone()), need[1].then(|| g.clone())],
        )
    }

    pub fn sub(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.binary(
            a,
            b,
            |x, y| x - y,
            |g, _, _, need| [need[0].then(|| g.clone()), need[1].then(|| g.map(|v| -v))],
        )
    }

    pub fn mul(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.binary(
            a,
            b,
            |x, y| x * y,
            |g, a, b, need| {
                [
                    need[0].then(|| broadcast_zip(g, b, |g, b| g * b).expect("mul grad")),
                    need[1].then(|| broadcast_zip(g, a, |g, a| g * a).expect("mul grad")),
                ]
            },
        )
    }

    pub fn div(&self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.binary(
            a,
            b,
            |x, y| x / y,
            |g, a, b, need| {
                [
                    need[0].then(|| broadcast_zip(g, b, |g, b| g / b).expect("div grad")),
                    need[1].then(|| {
                        let ga = broadcast_zip(g, a, |g, a| g * a).expect("div grad");
                        broadcast_zip(&ga, b, |ga, b| -ga / (b * b)).expect("div grad")
                    }),
                ]
            },
        )
    }

    pub fn sum_all(&self, x: &Var<T>) -> Var<T> {
        let shape = x.shape().to_vec();
        self.record(Tensor::scalar(x.value().sum()), &[x], move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0]))]
        })
    }

    pub fn mean_all(&self, x: &Var<T>) -> Var<T> {
        let n = T::from_f64(x.value().numel() as f64);
        let shape = x.shape().to_vec();
        self.record(Tensor::scalar(x.value().sum() / n), &[x], move |g, _| {
            vec![Some(Tensor::full(&shape, g.data()[0] / n))]
        })
    }

    /// Sums over `dims`, keeping them as unit axes.
    pub fn sum_dims(&self, x: &Var<T>, dims: &[usize]) -> Result<Var<T>> {
        let target = reduced_shape(x.shape(), dims)?;
        let y = sum_to(x.value(), &target);
        let shape = x.shape().to_vec();
        Ok(self.record(y, &[x], move |g, _| vec![Some(broadcast_to(g, &shape))]))
    }

    /// Means over `dims`, keeping them as unit axes.
    pub fn mean_dims(&self, x: &Var<T>, dims: &[usize]) -> Result<Var<T>> {
        let count: usize = dims.iter().map(|&d| x.shape().get(d).copied().unwrap_or(1)).product();
        let s = self.sum_dims(x, dims)?;
        Ok(self.affine(&s, 1.0 / count as f64, 0.0))
    }

    /// Maximum along one axis, kept as a unit axis. Ties resolve to the
    /// first index.
    pub fn max_dim(&self, x: &Var<T>, dim: usize) -> Result<Var<T>> {
        let shape = x.shape().to_vec();
        let out_shape = reduced_shape(&shape, &[dim])?;
        let (outer, len, inner) = split_axis(&shape, dim);
        let xs = x.value().data();
        let mut out = vec![T::zero(); outer * inner];
        let mut arg = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = xs[o * len * inner + i];
                let mut bi = 0;
                for l in 1..len {
                    let v = xs[(o * len + l) * inner + i];
                    if v > best {
                        best = v;
                        bi = l;
                    }
                }
                out[o * inner + i] = best;
                arg[o * inner + i] = (o * len + bi) * inner + i;
            }
        }
        let y = Tensor::new(&out_shape, out)?;
        Ok(self.record(y, &[x], move |g, _| {
            let mut dx = Tensor::zeros(&shape);
            for (&src, &gv) in arg.iter().zip(g.data()) {
                dx.data_mut()[src] += gv;
            }
            vec![Some(dx)]
        }))
    }

    pub fn reshape(&self, x: &Var<T>, shape: &[usize]) -> Result<Var<T>> {
        let y = x.value().clone().reshape(shape)?;
        let orig = x.shape().to_vec();
        Ok(self.record(y, &[x], move |g, _| {
            vec![Some(g.clone().reshape(&orig).expect("reshape grad"))]
        }))
    }

    pub fn concat(&self, xs: &[&Var<T>], dim: usize) -> Result<Var<T>> {
        let first = xs
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let rank = first.shape().len();
        if dim >= rank {
            return Err(Error::Shape(format!("concat axis {dim} out of range")));
        }
        for x in xs {
            let s = x.shape();
            if s.len() != rank
                || s.iter()
                    .zip(first.shape())
                    .enumerate()
                    .any(|(i, (a, b))| i != dim && a != b)
            {
                return Err(Error::Shape(format!(
                    "concat: {:?} does not match {:?} outside axis {dim}",
                    s,
                    first.shape()
                )));
            }
        }
        let lens: Vec<usize> = xs.iter().map(|x| x.shape()[dim]).collect();
        let total: usize = lens.iter().sum();
        let mut out_shape = first.shape().to_vec();
        out_shape[dim] = total;
        let (outer, _, inner) = split_axis(&out_shape, dim);
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for (x, &l) in xs.iter().zip(&lens) {
                out.extend_from_slice(&x.value().data()[o * l * inner..(o + 1) * l * inner]);
            }
        }
        let y = Tensor::new(&out_shape, out)?;
        let shapes: Vec<Vec<usize>> = xs.iter().map(|x| x.shape().to_vec()).collect();
        Ok(self.record(y, xs, move |g, need| {
            let mut parts: Vec<Vec<T>> = shapes
                .iter()
                .zip(need)
                .map(|(s, &n)| {
                    if n {
                        Vec::with_capacity(s.iter().product())
                    } else {
                        Vec::new()
                    }
                })
                .collect();
            for o in 0..outer {
                let mut off = o * total * inner;
                for ((part, &l), &n) in parts.iter_mut().zip(&lens).zip(need) {
                    if n {
                        part.extend_from_slice(&g.data()[off..off + l * inner]);
                    }
                    off += l * inner;
                }
            }
            parts
                .into_iter()
                .zip(&shapes)
                .zip(need)
                .map(|((p, s), &n)| n.then(|| Tensor::new(s, p).expect("concat grad")))
                .collect()
        }))
    }

    /// The slice `start..start + len` along `dim`.
    pub fn narrow(&self, x: &Var<T>, dim: usize, start: usize, len: usize) -> Result<Var<T>> {
        let shape = x.shape().to_vec();
        if dim >= shape.len() || start + len > shape[dim] {
            return Err(Error::Shape(format!(
                "narrow {start}..{} on axis {dim} out of range for {shape:?}",
                start + len
            )));
        }
        let (outer, full, inner) = split_axis(&shape, dim);
        let mut out_shape = shape.clone();
        out_shape[dim] = len;
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&x.value().data()[base..base + len * inner]);
        }
        let y = Tensor::new(&out_shape, out)?;
        Ok(self.record(y, &[x], move |g, _| {
            let mut dx = Tensor::zeros(&shape);
            for o in 0..outer {
                let base = (o * full + start) * inner;
                dx.data_mut()[base..base + len * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(dx)]
        }))
    }

    /// Batched matrix product; see [`crate::tensor`] for the transpose
    /// convention.
    pub fn bmm(&self, a: &Var<T>, b: &Var<T>, trans_a: bool, trans_b: bool) -> Result<Var<T>> {
        let y = bmm(a.value(), b.value(), trans_a, trans_b)?;
        let (ar, br) = (a.rc(), b.rc());
        Ok(self.record(y, &[a, b], move |g, need| {
            let ga = need[0].then(|| {
                match (trans_a, trans_b) {
                    (false, false) => bmm(g, &br, false, true),
                    (false, true) => bmm(g, &br, false, false),
                    (true, false) => bmm(&br, g, false, true),
                    (true, true) => bmm(&br, g, true, true),
                }
                .expect("bmm grad")
            });
            let gb = need[1].then(|| {
                match (trans_a, trans_b) {
                    (false, false) => bmm(&ar, g, true, false),
                    (false, true) => bmm(g, &ar, true, false),
                    (true, false) => bmm(&ar, g, false, false),
                    (true, true) => bmm(g, &ar, true, true),
                }
                .expect("bmm grad")
            });
            vec![ga, gb]
        }))
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&self, x: &Var<T>) -> Result<Var<T>> {
        let shape = x.shape().to_vec();
        let n = *shape.last().ok_or_else(|| Error::Shape("softmax of a scalar".into()))?;
        let mut y = x.value().clone();
        for row in y.data_mut().chunks_mut(n) {
            let m = row.iter().copied().fold(row[0], |a, b| a.max(b));
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let yr = Rc::new(y.clone());
        Ok(self.record(y, &[x], move |g, _| {
            let mut dx = g.clone();
            for (drow, yrow) in dx.data_mut().chunks_mut(n).zip(yr.data().chunks(n)) {
                let dot: T = drow.iter().zip(yrow).map(|(&d, &y)| d * y).sum();
                for (d, &y) in drow.iter_mut().zip(yrow) {
                    *d = y * (*d - dot);
                }
            }
            vec![Some(dx)]
        }))
    }

    /// 2-D convolution, stride 1, zero "same" padding.
    pub fn conv2d(&self, x: &Var<T>, weight: &Var<T>, bias: Option<&Var<T>>, spec: ConvSpec) -> Result<Var<T>> {
        let y = conv2d_forward(x.value(), weight.value(), bias.map(|b| b.value()), spec)?;
        let (xr, wr) = (x.rc(), weight.rc());
        let has_bias = bias.is_some();
        let mut inputs = vec![x, weight];
        inputs.extend(bias);
        Ok(self.record(y, &inputs, move |g, need| {
            let need3 = [need[0], need[1], has_bias && need[2]];
            let [dx, dw, db] = conv2d_backward(&xr, &wr, g, spec, need3);
            let mut out = vec![dx, dw];
            if has_bias {
                out.push(db);
            }
            out
        }))
    }

    /// Per-sample, per-channel standardization over spatial positions,
    /// without affine parameters. A constant channel maps to zeros.
    pub fn instance_norm(&self, x: &Var<T>, eps: f64) -> Result<Var<T>> {
        let (b, c, h, w) = x.value().dims4()?;
        let hw = h * w;
        let n = T::from_f64(hw as f64);
        let eps = T::from_f64(eps);
        let mut y = x.value().clone();
        let mut inv_std = vec![T::zero(); b * c];
        for (plane, istd) in y.data_mut().chunks_mut(hw).zip(inv_std.iter_mut()) {
            // shift by the first sample so constant planes centre exactly
            let x0 = plane[0];
            let mean = x0 + plane.iter().map(|&v| v - x0).sum::<T>() / n;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            *istd = T::one() / (var + eps).sqrt();
            for v in plane.iter_mut() {
                *v = (*v - mean) * *istd;
            }
        }
        let yr = Rc::new(y.clone());
        Ok(self.record(y, &[x], move |g, _| {
            let mut dx = g.clone();
            for ((dplane, yplane), &istd) in dx.data_mut().chunks_mut(hw).zip(yr.data().chunks(hw)).zip(&inv_std) {
                let mean_g = dplane.iter().copied().sum::<T>() / n;
                let mean_gy = dplane.iter().zip(yplane).map(|(&g, &y)| g * y).sum::<T>() / n;
                for (d, &y) in dplane.iter_mut().zip(yplane) {
                    *d = istd * (*d - mean_g - y * mean_gy);
                }
            }
            vec![Some(dx)]
        }))
    }

    /// 2x2 max pooling with stride 2 (odd trailing rows/columns dropped).
    pub fn max_pool2x2(&self, x: &Var<T>) -> Result<Var<T>> {
        let (b, c, h, w) = x.value().dims4()?;
        let (oh, ow) = (h / 2, w / 2);
        let xs = x.value().data();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut arg = Vec::with_capacity(b * c * oh * ow);
        for p in 0..b * c {
            let base = p * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut bi = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if xs[idx] > xs[bi] {
                            bi = idx;
                        }
                    }
                    out.push(xs[bi]);
                    arg.push(bi);
                }
            }
        }
        let y = Tensor::new(&[b, c, oh, ow], out)?;
        let shape = x.shape().to_vec();
        Ok(self.record(y, &[x], move |g, _| {
            let mut dx = Tensor::zeros(&shape);
            for (&src, &gv) in arg.iter().zip(g.data()) {
                dx.data_mut()[src] += gv;
            }
            vec![Some(dx)]
        }))
    }

    /// Shape that `a op b` would broadcast to.
    pub fn broadcast_shape(&self, a: &Var<T>, b: &Var<T>) -> Result<Vec<usize>> {
        broadcast_shape(a.shape(), b.shape())
    }
}

#[inline]
pub(crate) fn sigmoid<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::check_gradient;

    fn input(shape: &[usize], seed: u64) -> Tensor<f64> {
        crate::nn::randn(shape, 1.0, seed)
    }

    #[test]
    fn relu_and_clamp_keep_nan() {
        let tape = Tape::<f32>::no_grad();
        let x = tape.constant(Tensor::new(&[3], vec![f32::NAN, -2.0, 2.0]).unwrap());
        let r = tape.relu(&x);
        let c = tape.clamp(&x, 0.0, 1.0);
        assert!(r.value().data()[0].is_nan() && c.value().data()[0].is_nan());
        assert_eq!(&r.value().data()[1..], &[0.0, 2.0]);
        assert_eq!(&c.value().data()[1..], &[0.0, 1.0]);
    }

    fn weighted_sum(tape: &Tape<f64>, y: &Var<f64>, seed: u64) -> Result<Var<f64>> {
        let w = tape.constant(input(y.shape(), seed));
        let p = tape.mul(y, &w)?;
        Ok(tape.sum_all(&p))
    }

    fn assert_grad(shape: &[usize], f: impl Fn(&Tape<f64>, &Var<f64>) -> Result<Var<f64>>) {
        let x = input(shape, 7);
        let report = check_gradient(&x, 1e-6, |tape, x| {
            let y = f(tape, x)?;
            weighted_sum(tape, &y, 99)
        })
        .unwrap();
        assert!(report.rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn elementwise_grads() {
        assert_grad(&[2, 3], |t, x| Ok(t.sigmoid(x)));
        assert_grad(&[2, 3], |t, x| Ok(t.exp(x)));
        assert_grad(&[2, 3], |t, x| Ok(t.sqr(x)));
        assert_grad(&[2, 3], |t, x| {
            let p = t.affine(&t.sqr(x), 1.0, 0.5);
            Ok(t.sqrt(&p))
        });
        assert_grad(&[2, 3], |t, x| {
            let p = t.affine(&t.sqr(x), 1.0, 0.5);
            Ok(t.ln(&p))
        });
    }

    #[test]
    fn broadcast_binary_grads() {
        let other = input(&[2, 1, 3, 1], 3);
        assert_grad(&[2, 4, 3, 5], |t, x| {
            let o = t.constant(other.clone());
            t.mul(x, &o)
        });
        assert_grad(&[2, 1, 3, 1], |t, x| {
            let o = t.constant(input(&[2, 4, 3, 5], 4));
            let p = t.mul(&o, x)?;
            let q = t.affine(&t.sqr(x), 1.0, 1.0);
            t.div(&p, &q)
        });
        assert_grad(&[2, 1, 3, 1], |t, x| {
            let o = t.constant(input(&[2, 4, 3, 5], 4));
            t.sub(&o, x)
        });
    }

    #[test]
    fn reduction_and_shape_grads() {
        assert_grad(&[2, 3, 4], |t, x| t.sum_dims(x, &[1]));
        assert_grad(&[2, 3, 4], |t, x| t.mean_dims(x, &[0, 2]));
        assert_grad(&[2, 3, 4, 2], |t, x| t.max_dim(x, 1));
        assert_grad(&[2, 3, 4], |t, x| {
            let a = t.narrow(x, 1, 1, 2)?;
            let b = t.sqr(&t.narrow(x, 1, 0, 1)?);
            t.concat(&[&a, &b, x], 1)
        });
        assert_grad(&[2, 6], |t, x| {
            let r = t.reshape(x, &[3, 4])?;
            t.softmax_last(&r)
        });
    }

    #[test]
    fn bmm_grads_all_transposes() {
        for (ta, tb) in [(false, false), (false, true), (true, false), (true, true)] {
            let bshape = if tb { [2, 5, 3] } else { [2, 3, 5] };
            let b = input(&bshape, 11);
            let ashape = if ta { [2, 3, 4] } else { [2, 4, 3] };
            assert_grad(&ashape, |t, x| {
                let bv = t.constant(b.clone());
                t.bmm(x, &bv, ta, tb)
            });
            let a = input(&ashape, 12);
            assert_grad(&bshape, |t, x| {
                let av = t.constant(a.clone());
                t.bmm(&av, x, ta, tb)
            });
        }
    }

    #[test]
    fn conv_grads() {
        for (k, groups, cin, cout) in [(1, 1, 3, 2), (3, 1, 2, 3), (5, 1, 2, 2), (3, 4, 4, 4)] {
            let w = input(&[cout, cin / groups, k, k], 5);
            let bias = input(&[cout], 6);
            let spec = ConvSpec::same(k, groups);
            assert_grad(&[2, cin, 5, 6], |t, x| {
                let wv = t.constant(w.clone());
                let bv = t.constant(bias.clone());
                t.conv2d(x, &wv, Some(&bv), spec)
            });
            let x = input(&[2, cin, 5, 6], 8);
            assert_grad(&[cout, cin / groups, k, k], |t, wv| {
                let xv = t.constant(x.clone());
                t.conv2d(&xv, wv, None, spec)
            });
            assert_grad(&[cout], |t, bv| {
                let xv = t.constant(x.clone());
                let wv = t.constant(w.clone());
                t.conv2d(&xv, &wv, Some(bv), spec)
            });
        }
    }

    #[test]
    fn norm_and_pool_grads() {
        assert_grad(&[2, 3, 4, 5], |t, x| t.instance_norm(x, 1e-5));
        assert_grad(&[1, 2, 4, 6], |t, x| t.max_pool2x2(x));
    }

    #[test]
    fn instance_norm_constant_plane_is_zero() {
        let tape = Tape::<f64>::no_grad();
        let x = tape.constant(Tensor::full(&[1, 1, 3, 3], 0.1));
        let y = tape.instance_norm(&x, 1e-5).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_grad_tape_records_nothing() {
        let tape = Tape::<f32>::no_grad();
        let x = tape.leaf(Tensor::full(&[2, 2], 1.0));
        let y = tape.sqr(&tape.relu(&x));
        assert!(!y.requires_grad());
        assert!(tape.is_empty());
    }
}
