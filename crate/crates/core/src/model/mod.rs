//! The exposure-correction network: a 1x1 stem, a chain of region-aware
//! blocks (de-exposure followed by mixed-scale restoration), a residual
//! channel-attention refine stage and a zero-initialized 1x1 head added
//! to the input image.
//!
//! All feature maps keep the input resolution.

mod config;
mod emp;
mod mru;
mod rdm;
mod refine;

pub use config::{ModelConfig, MAX_BLOCKS, MIN_BASE_CHANNELS};
pub use emp::ExposureMaskPredictor;
pub use mru::{channel_attention, MixedScale, MixedScaleRestoration};
pub use rdm::{split_regions, RegionDeexposure, IN_EPS};
pub use refine::{Refine, REDUCTION};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{rng, Bound, Conv2d, ConvOptions, Init, ParamStore};
use crate::tensor::{Float, Tensor};

pub const MIN_SIZE: usize = 8;

/// One region-aware block.
#[derive(Debug, Clone)]
pub struct Block {
    pub rdm: RegionDeexposure,
    pub mru: MixedScaleRestoration,
}

impl Block {
    /// Returns the block output and its underexposure mask.
    pub fn forward<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, f_in: &Var<T>) -> Result<(Var<T>, Var<T>)> {
        let (f_n, mask) = self.rdm.forward(tape, p, f_in)?;
        let f_out = self.mru.forward(tape, p, f_in, &f_n)?;
        Ok((f_out, mask))
    }
}

/// Layer layout; holds parameter ids only, so it is shared between
/// precisions.
#[derive(Debug, Clone)]
pub struct Architecture {
    pub stem: Conv2d,
    pub blocks: Vec<Block>,
    pub refine: Refine,
    pub head: Conv2d,
}

pub struct ForwardOutput<T> {
    /// Corrected image `(B, 3, H, W)` in `[0, 1]`.
    pub image: Var<T>,
    /// Underexposure mask of every block, `(B, 1, H, W)` each.
    pub masks: Vec<Var<T>>,
}

#[derive(Debug, Clone)]
pub struct Recnet<T> {
    cfg: ModelConfig,
    arch: Architecture,
    params: ParamStore<T>,
}

impl<T: Float> Recnet<T> {
    /// Builds a freshly initialized network. Conv kernels are Kaiming
    /// normal, biases zero and the output head zero, so the untrained
    /// network is the identity.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng(seed);
        let mut store = ParamStore::new();
        let c = cfg.base_channels;
        let stem = Conv2d::new(&mut store, &mut rng, "stem", 3, c, ConvOptions::new(1));
        let blocks = (0..cfg.num_blocks)
            .map(|i| {
                let prefix = format!("blocks.{i}");
                Block {
                    rdm: RegionDeexposure::new(&mut store, &mut rng, &format!("{prefix}.rdm"), c),
                    mru: MixedScaleRestoration::new(&mut store, &mut rng, &format!("{prefix}.mru"), &cfg),
                }
            })
            .collect();
        let refine = Refine::new(&mut store, &mut rng, "refine", c);
        let head = Conv2d::new(
            &mut store,
            &mut rng,
            "head",
            c,
            3,
            ConvOptions::new(1).init(Init::Zeros),
        );
        Ok(Self {
            cfg,
            arch: Architecture {
                stem,
                blocks,
                refine,
                head,
            },
            params: store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    /// Same weights in another precision.
    pub fn cast<U: Float>(&self) -> Recnet<U> {
        Recnet {
            cfg: self.cfg,
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    pub fn bind(&self, tape: &Tape<T>) -> Bound<T> {
        self.params.bind(tape)
    }

    /// 1x1 convolution of the RGB image to the base width.
    pub fn stem(&self, tape: &Tape<T>, p: &Bound<T>, image: &Var<T>) -> Result<Var<T>> {
        validate_image(image.value())?;
        self.arch.stem.forward(tape, p, image)
    }

    pub fn forward(&self, tape: &Tape<T>, p: &Bound<T>, image: &Var<T>) -> Result<ForwardOutput<T>> {
        let mut f = self.stem(tape, p, image)?;
        let mut masks = Vec::with_capacity(self.arch.blocks.len());
        for block in &self.arch.blocks {
            let (out, mask) = block.forward(tape, p, &f)?;
            masks.push(mask);
            f = out;
        }
        let f = self.arch.refine.forward(tape, p, &f)?;
        let residual = self.arch.head.forward(tape, p, &f)?;
        let sum = tape.add(image, &residual)?;
        Ok(ForwardOutput {
            image: tape.clamp(&sum, 0.0, 1.0),
            masks,
        })
    }

    /// Gradient-free forward pass on a `(B, 3, H, W)` batch.
    pub fn infer(&self, images: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let tape = Tape::no_grad();
        let p = self.params.bind_frozen(&tape);
        let x = tape.constant(images.clone());
        let out = self.forward(&tape, &p, &x)?;
        Ok((
            out.image.value().clone(),
            out.masks.iter().map(|m| m.value().clone()).collect(),
        ))
    }

    /// Parameter count per module, in creation order, followed by the total.
    pub fn summary(&self) -> ModelSummary {
        let mut rows: Vec<(String, usize)> = Vec::new();
        for (name, t) in self.params.iter() {
            let module = module_of(name);
            match rows.last_mut() {
                Some((m, n)) if *m == module => *n += t.numel(),
                _ => rows.push((module, t.numel())),
            }
        }
        ModelSummary {
            config: self.cfg,
            total: self.num_params(),
            rows,
        }
    }
}

fn module_of(param: &str) -> String {
    let layer = param.rsplit_once('.').map(|(l, _)| l).unwrap_or(param);
    match layer.rsplit_once('.') {
        Some((module, _)) => module.to_string(),
        None => layer.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub config: ModelConfig,
    pub rows: Vec<(String, usize)>,
    pub total: usize,
}

impl std::fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "blocks={} base_channels={} attn_heads={}",
            self.config.num_blocks, self.config.base_channels, self.config.attn_heads
        )?;
        writeln!(f, "{:<20} {:>10}", "module", "params")?;
        for (m, n) in &self.rows {
            writeln!(f, "{m:<20} {n:>10}")?;
        }
        write!(f, "{:<20} {:>10}", "total", self.total)
    }
}

/// Checks the image-batch contract: `(B, 3, H, W)`, `H, W >= 8`, finite
/// values in `[0, 1]`.
pub fn validate_image<T: Float>(x: &Tensor<T>) -> Result<()> {
    let (_, c, h, w) = x.dims4()?;
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 color channels, got {c}")));
    }
    if h < MIN_SIZE || w < MIN_SIZE {
        return Err(Error::InvalidArgument(format!(
            "image {h}x{w} is smaller than the {MIN_SIZE}x{MIN_SIZE} minimum"
        )));
    }
    let (lo, hi) = (T::zero(), T::one());
    if let Some(v) = x.data().iter().find(|&&v| !(v >= lo && v <= hi)) {
        return Err(Error::InvalidArgument(format!(
            "image values must be finite and in [0, 1], found {v}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_grouping() {
        assert_eq!(module_of("stem.weight"), "stem");
        assert_eq!(module_of("blocks.3.mru.dw5.bias"), "blocks.3.mru");
        assert_eq!(module_of("blocks.0.rdm.emp.conv1.weight"), "blocks.0.rdm.emp");
        assert_eq!(module_of("refine.squeeze.weight"), "refine");
    }

    #[test]
    fn rejects_small_and_out_of_range_images() {
        let m = Recnet::<f32>::new(ModelConfig::new(1, 8, 2).unwrap(), 0).unwrap();
        assert!(m.infer(&Tensor::zeros(&[1, 3, 7, 8])).is_err());
        assert!(m.infer(&Tensor::full(&[1, 3, 8, 8], 1.5)).is_err());
        assert!(m.infer(&Tensor::full(&[1, 3, 8, 8], f32::NAN)).is_err());
        assert!(m.infer(&Tensor::zeros(&[1, 4, 8, 8])).is_err());
    }
}
