//! Parameter storage and the convolution layer every network here is
//! built from.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Float, Tensor};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in creation order.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.tensors.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, tensor: Tensor<T>) -> Result<()> {
        if tensor.shape() != self.tensors[id.0].shape() {
            return Err(Error::Shape(format!(
                "parameter {} expects {:?}, got {:?}",
                self.names[id.0],
                self.tensors[id.0].shape(),
                tensor.shape()
            )));
        }
        self.tensors[id.0] = tensor;
        Ok(())
    }

    /// Puts every parameter on `tape` as a differentiable leaf (or as a
    /// constant on a gradient-free tape).
    pub fn bind(&self, tape: &Tape<T>) -> Bound<T> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Puts every parameter on `tape` as a constant.
    pub fn bind_frozen(&self, tape: &Tape<T>) -> Bound<T> {
        Bound {
            vars: self.tensors.iter().map(|t| tape.constant(t.clone())).collect(),
        }
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Parameters of one store placed on a tape.
pub struct Bound<T> {
    vars: Vec<Var<T>>,
}

impl<T: Float> Bound<T> {
    pub fn get(&self, id: ParamId) -> &Var<T> {
        &self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<T>] {
        &self.vars
    }

    /// Overrides one parameter, e.g. with a leaf created by a caller.
    pub fn replace(&mut self, id: ParamId, var: Var<T>) {
        self.vars[id.0] = var;
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal samples scaled by `std`, drawn in f64 so that f32 and
/// f64 models built from the same seed agree up to rounding.
pub fn randn_with<T: Float>(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::from_f64(z * std)
        })
        .collect();
    Tensor::new(shape, data).expect("randn shape")
}

pub fn randn<T: Float>(shape: &[usize], std: f64, seed: u64) -> Tensor<T> {
    randn_with(shape, std, &mut rng(seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Normal with std `gain * sqrt(2 / fan_in)`.
    KaimingNormal {
        gain: f64,
    },
    Zeros,
}

impl Init {
    pub const KAIMING: Init = Init::KaimingNormal { gain: 1.0 };
}

/// Stride-1 convolution with "same" zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: ConvSpec,
    pub in_channels: usize,
    pub out_channels: usize,
}

pub struct ConvOptions {
    pub kernel: usize,
    pub groups: usize,
    pub bias: bool,
    pub init: Init,
}

impl ConvOptions {
    pub fn new(kernel: usize) -> Self {
        Self {
            kernel,
            groups: 1,
            bias: true,
            init: Init::KAIMING,
        }
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }
}

impl Conv2d {
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        opts: ConvOptions,
    ) -> Self {
        let g = opts.groups;
        assert!(
            g > 0 && in_channels.is_multiple_of(g) && out_channels.is_multiple_of(g),
            "{name}: {in_channels}->{out_channels} channels not divisible into {g} groups"
        );
        let shape = [out_channels, in_channels / g, opts.kernel, opts.kernel];
        let fan_in = (in_channels / g) * opts.kernel * opts.kernel;
        let weight = match opts.init {
            Init::KaimingNormal { gain } => randn_with(&shape, gain * (2.0 / fan_in as f64).sqrt(), rng),
            Init::Zeros => Tensor::zeros(&shape),
        };
        let weight = store.add(format!("{name}.weight"), weight);
        let bias = opts
            .bias
            .then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels])));
        Self {
            weight,
            bias,
            spec: ConvSpec::same(opts.kernel, g),
            in_channels,
            out_channels,
        }
    }

    pub fn forward<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        tape.conv2d(x, p.get(self.weight), self.bias.map(|b| p.get(b)), self.spec)
    }

    pub fn params(&self) -> impl Iterator<Item = ParamId> {
        std::iter::once(self.weight).chain(self.bias)
    }
}
