//! Dense, contiguous, row-major tensors and the raw numeric kernels the
//! autograd layer is built on.
//!
//! Feature maps use the `(batch, channels, height, width)` ordering
//! internally. Images cross the API boundary as interleaved RGB
//! (`crate::data::Image`) and are converted on the way in and out.

use std::fmt;
use std::iter::Sum;

use crate::error::{Error, Result};

/// Element type for tensors. Implemented for `f32` (training) and `f64`
/// (gradient checking).
pub trait Float:
    num_like::NumLike + Copy + Default + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + Sum + 'static
{
    const DTYPE: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` with arbitrary row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

pub(crate) mod num_like {
    use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

    pub trait NumLike:
        Add<Output = Self>
        + Sub<Output = Self>
        + Mul<Output = Self>
        + Div<Output = Self>
        + Neg<Output = Self>
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sized
    {
        fn zero() -> Self;
        fn one() -> Self;
        fn exp(self) -> Self;
        fn ln(self) -> Self;
        fn sqrt(self) -> Self;
        fn abs(self) -> Self;
        fn max(self, other: Self) -> Self;
        fn min(self, other: Self) -> Self;
        #[allow(clippy::wrong_self_convention)]
        fn is_finite(self) -> bool;
    }

    macro_rules! impl_num_like {
        ($t:ty) => {
            impl NumLike for $t {
                #[inline]
                fn zero() -> Self {
                    0.0
                }
                #[inline]
                fn one() -> Self {
                    1.0
                }
                #[inline]
                fn exp(self) -> Self {
                    <$t>::exp(self)
                }
                #[inline]
                fn ln(self) -> Self {
                    <$t>::ln(self)
                }
                #[inline]
                fn sqrt(self) -> Self {
                    <$t>::sqrt(self)
                }
                #[inline]
                fn abs(self) -> Self {
                    <$t>::abs(self)
                }
                #[inline]
                fn max(self, other: Self) -> Self {
                    <$t>::max(self, other)
                }
                #[inline]
                fn min(self, other: Self) -> Self {
                    <$t>::min(self, other)
                }
                #[inline]
                fn is_finite(self) -> bool {
                    <$t>::is_finite(self)
                }
            }
        };
    }
    impl_num_like!(f32);
    impl_num_like!(f64);
}

macro_rules! impl_float {
    ($t:ty, $name:expr, $gemm:path) => {
        impl Float for $t {
            const DTYPE: &'static str = $name;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                debug_assert!(span(m, k, rsa, csa) <= a.len());
                debug_assert!(span(k, n, rsb, csb) <= b.len());
                debug_assert!(span(m, n, rsc, csc) <= c.len());
                // SAFETY: the slices cover every element addressed by the
                // given shapes and strides (checked above in debug builds,
                // guaranteed by the callers in this module).
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_float!(f32, "f32", matrixmultiply::sgemm);
impl_float!(f64, "f64", matrixmultiply::dgemm);

fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{}>{:?}", std::any::type_name::<T>(), self.shape)
    }
}

impl<T: Float> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| T::from_f64(v)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Dimensions of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [a, b, c, d] => Ok((a, b, c, d)),
            _ => Err(Error::Shape(format!("expected a rank-4 tensor, got {:?}", self.shape))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64())
            .fold(0.0, f64::max)
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Numpy-style broadcast of two equal-rank shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}: rank differs")));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}"))),
        })
        .collect()
}

/// Strides of `shape` viewed inside the broadcast `out` shape (zero along
/// broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides(shape);
    shape
        .iter()
        .zip(out)
        .zip(s)
        .map(|((&d, &o), st)| if d == 1 && o != 1 { 0 } else { st })
        .collect()
}

/// Calls `f(out_index, a_offset, b_offset)` for every element of the
/// broadcast shape, in row-major order.
fn for_each_broadcast(a: &[usize], b: &[usize], out: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let rank = out.len();
    let n: usize = out.iter().product();
    if n == 0 {
        return;
    }
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let last = rank - 1;
    let inner = out[last];
    let mut idx = vec![0usize; rank];
    let (mut oa, mut ob) = (0usize, 0usize);
    let mut o = 0;
    while o < n {
        for j in 0..inner {
            f(o + j, oa + j * sa[last], ob + j * sb[last]);
        }
        o += inner;
        // advance the odometer over the outer axes
        let mut d = last;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            oa += sa[d];
            ob += sb[d];
            if idx[d] < out[d] {
                break;
            }
            oa -= sa[d] * idx[d];
            ob -= sb[d] * idx[d];
            idx[d] = 0;
        }
    }
}

pub(crate) fn broadcast_zip<T: Float>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
    if a.shape == b.shape {
        return Ok(a.zip_map(b, f));
    }
    let out = broadcast_shape(&a.shape, &b.shape)?;
    let mut data = vec![T::zero(); out.iter().product()];
    for_each_broadcast(&a.shape, &b.shape, &out, |o, ia, ib| {
        data[o] = f(a.data[ia], b.data[ib]);
    });
    Tensor::new(&out, data)
}

/// Sums `t` down to `shape`, the inverse of broadcasting.
pub(crate) fn sum_to<T: Float>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if t.shape == shape {
        return t.clone();
    }
    let mut data = vec![T::zero(); shape.iter().product()];
    for_each_broadcast(shape, &t.shape, &t.shape, |o, is, _| {
        data[is] += t.data[o];
    });
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

/// Expands `t` to `shape` along its unit axes.
pub(crate) fn broadcast_to<T: Float>(t: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if t.shape == shape {
        return t.clone();
    }
    let mut data = vec![T::zero(); shape.iter().product()];
    for_each_broadcast(&t.shape, shape, shape, |o, it, _| {
        data[o] = t.data[it];
    });
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

/// Convolution geometry: stride 1, zero "same" padding, square odd
/// kernels, grouped channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn same(kernel: usize, groups: usize) -> Self {
        Self {
            kernel,
            pad: kernel / 2,
            groups,
        }
    }
}

/// Unfolds one image `(cin, h, w)` into `(cin*k*k, h*w)` columns.
fn im2col<T: Float>(x: &[T], cin: usize, h: usize, w: usize, spec: ConvSpec, col: &mut [T]) {
    let k = spec.kernel;
    let p = spec.pad as isize;
    let hw = h * w;
    for c in 0..cin {
        let plane = &x[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut col[((c * k + ki) * k + kj) * hw..][..hw];
                let dx = kj as isize - p;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + ki as isize - p;
                    let out = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    out[..x0].fill(T::zero());
                    out[x1..].fill(T::zero());
                    let s0 = (x0 as isize + dx) as usize;
                    out[x0..x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds columns back into an image.
fn col2im<T: Float>(col: &[T], cin: usize, h: usize, w: usize, spec: ConvSpec, x: &mut [T]) {
    let k = spec.kernel;
    let p = spec.pad as isize;
    let hw = h * w;
    for c in 0..cin {
        let plane = &mut x[c * hw..(c + 1) * hw];
        for ki in 0..k {
            for kj in 0..k {
                let row = &col[((c * k + ki) * k + kj) * hw..][..hw];
                let dx = kj as isize - p;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + ki as isize - p;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let s0 = (x0 as isize + dx) as usize;
                    for (d, &v) in dst[s0..s0 + (x1 - x0)].iter_mut().zip(&row[y * w + x0..y * w + x1]) {
                        *d += v;
                    }
                }
            }
        }
    }
}

pub(crate) fn check_conv_shapes<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: ConvSpec,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (b, cin, h, w) = x.dims4()?;
    let (cout, cin_g, kh, kw) = weight.dims4()?;
    let g = spec.groups;
    if g == 0 || cin % g != 0 || cout % g != 0 || cin_g * g != cin {
        return Err(Error::Shape(format!(
            "conv: input {:?} incompatible with weight {:?} and {g} groups",
            x.shape(),
            weight.shape()
        )));
    }
    if kh != spec.kernel || kw != spec.kernel {
        return Err(Error::Shape(format!(
            "conv: weight {:?} does not match kernel size {}",
            weight.shape(),
            spec.kernel
        )));
    }
    if let Some(bias) = bias {
        if bias.shape() != [cout] {
            return Err(Error::Shape(format!(
                "conv: bias {:?} does not match {cout} output channels",
                bias.shape()
            )));
        }
    }
    Ok((b, cin, h, w, cout))
}

pub(crate) fn conv2d_forward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: ConvSpec,
) -> Result<Tensor<T>> {
    let (b, cin, h, w, cout) = check_conv_shapes(x, weight, bias, spec)?;
    let g = spec.groups;
    let (cin_g, cout_g) = (cin / g, cout / g);
    let kk = spec.kernel * spec.kernel;
    let krows = cin_g * kk;
    let hw = h * w;
    let mut out = vec![T::zero(); b * cout * hw];
    let pointwise = spec.kernel == 1;
    let mut col = if pointwise {
        Vec::new()
    } else {
        vec![T::zero(); krows * hw]
    };
    for bi in 0..b {
        for gi in 0..g {
            let xg = &x.data()[(bi * cin + gi * cin_g) * hw..][..cin_g * hw];
            let cols: &[T] = if pointwise {
                xg
            } else {
                im2col(xg, cin_g, h, w, spec, &mut col);
                &col
            };
            let wg = &weight.data()[gi * cout_g * krows..][..cout_g * krows];
            let og = &mut out[(bi * cout + gi * cout_g) * hw..][..cout_g * hw];
            T::gemm(
                cout_g,
                krows,
                hw,
                T::one(),
                wg,
                krows as isize,
                1,
                cols,
                hw as isize,
                1,
                T::zero(),
                og,
                hw as isize,
                1,
            );
        }
        if let Some(bias) = bias {
            for (co, &bv) in bias.data().iter().enumerate() {
                for v in &mut out[(bi * cout + co) * hw..][..hw] {
                    *v += bv;
                }
            }
        }
    }
    Tensor::new(&[b, cout, h, w], out)
}

/// Gradients of a convolution with respect to its input, weight and bias.
/// Each is computed only when requested.
pub(crate) fn conv2d_backward<T: Float>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: ConvSpec,
    need: [bool; 3],
) -> [Option<Tensor<T>>; 3] {
    let (b, cin, h, w) = x.dims4().expect("conv input is rank 4");
    let cout = weight.shape()[0];
    let g = spec.groups;
    let (cin_g, cout_g) = (cin / g, cout / g);
    let kk = spec.kernel * spec.kernel;
    let krows = cin_g * kk;
    let hw = h * w;
    let pointwise = spec.kernel == 1;
    let mut dx = need[0].then(|| vec![T::zero(); x.numel()]);
    let mut dw = need[1].then(|| vec![T::zero(); weight.numel()]);
    let mut col = vec![T::zero(); if need[1] && !pointwise { krows * hw } else { 0 }];
    let mut dcol = vec![T::zero(); if need[0] && !pointwise { krows * hw } else { 0 }];
    for bi in 0..b {
        for gi in 0..g {
            let gy = &grad_out.data()[(bi * cout + gi * cout_g) * hw..][..cout_g * hw];
            let wg = &weight.data()[gi * cout_g * krows..][..cout_g * krows];
            if let Some(dw) = dw.as_mut() {
                let xg = &x.data()[(bi * cin + gi * cin_g) * hw..][..cin_g * hw];
                let cols: &[T] = if pointwise {
                    xg
                } else {
                    im2col(xg, cin_g, h, w, spec, &mut col);
                    &col
                };
                // dW[cout_g, krows] += dY[cout_g, hw] * cols^T[hw, krows]
                T::gemm(
                    cout_g,
                    hw,
                    krows,
                    T::one(),
                    gy,
                    hw as isize,
                    1,
                    cols,
                    1,
                    hw as isize,
                    T::one(),
                    &mut dw[gi * cout_g * krows..][..cout_g * krows],
                    krows as isize,
                    1,
                );
            }
            if let Some(dx) = dx.as_mut() {
                let dxg = &mut dx[(bi * cin + gi * cin_g) * hw..][..cin_g * hw];
                // dcol[krows, hw] = W^T[krows, cout_g] * dY[cout_g, hw]
                if pointwise {
                    T::gemm(
                        krows,
                        cout_g,
                        hw,
                        T::one(),
                        wg,
                        1,
                        krows as isize,
                        gy,
                        hw as isize,
                        1,
                        T::one(),
                        dxg,
                        hw as isize,
                        1,
                    );
                } else {
                    T::gemm(
                        krows,
                        cout_g,
                        hw,
                        T::one(),
                        wg,
                        1,
                        krows as isize,
                        gy,
                        hw as isize,
                        1,
                        T::zero(),
                        &mut dcol,
                        hw as isize,
                        1,
                    );
                    col2im(&dcol, cin_g, h, w, spec, dxg);
                }
            }
        }
    }
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); cout];
        for bi in 0..b {
            for (co, d) in db.iter_mut().enumerate() {
                *d += grad_out.data()[(bi * cout + co) * hw..][..hw]
                    .iter()
                    .copied()
                    .sum::<T>();
            }
        }
        Tensor::new(&[cout], db).expect("bias shape")
    });
    [
        dx.map(|d| Tensor::new(x.shape(), d).expect("dx shape")),
        dw.map(|d| Tensor::new(weight.shape(), d).expect("dw shape")),
        db,
    ]
}

/// Batched matrix product over identical leading dimensions. With the
/// transpose flags, `a` is read as `(.., k, m)` and `b` as `(.., n, k)`.
pub(crate) fn bmm<T: Float>(a: &Tensor<T>, b: &Tensor<T>, trans_a: bool, trans_b: bool) -> Result<Tensor<T>> {
    let (ra, rb) = (a.rank(), b.rank());
    if ra < 2 || ra != rb || a.shape()[..ra - 2] != b.shape()[..rb - 2] {
        return Err(Error::Shape(format!(
            "bmm: incompatible shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (a0, a1) = (a.shape()[ra - 2], a.shape()[ra - 1]);
    let (b0, b1) = (b.shape()[rb - 2], b.shape()[rb - 1]);
    let (m, k) = if trans_a { (a1, a0) } else { (a0, a1) };
    let (k2, n) = if trans_b { (b1, b0) } else { (b0, b1) };
    if k != k2 {
        return Err(Error::Shape(format!(
            "bmm: inner dimensions differ for {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let batch: usize = a.shape()[..ra - 2].iter().product();
    let mut out_shape = a.shape()[..ra - 2].to_vec();
    out_shape.extend([m, n]);
    let mut out = vec![T::zero(); batch * m * n];
    let (rsa, csa) = if trans_a { (1, a1 as isize) } else { (a1 as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b1 as isize) } else { (b1 as isize, 1) };
    for i in 0..batch {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            &a.data()[i * a0 * a1..][..a0 * a1],
            rsa,
            csa,
            &b.data()[i * b0 * b1..][..b0 * b1],
            rsb,
            csb,
            T::zero(),
            &mut out[i * m * n..][..m * n],
            n as isize,
            1,
        );
    }
    Tensor::new(&out_shape, out)
}
