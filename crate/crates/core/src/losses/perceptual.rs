//! Frozen VGG16 feature extractor for the contrastive term.
//!
//! Weights come from a safetensors file holding the torchvision
//! `features.*` convolutions up to `relu3_3` (see
//! `scripts/fetch_vgg16.py`). The extractor never silently falls back to
//! random weights; [`Vgg16Features::seeded`] exists for tests and has to
//! be asked for by name.

use std::fs;
use std::path::Path;

use safetensors::{Dtype, SafeTensors};
use sha2::{Digest, Sha256};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{rng, Bound, Conv2d, ConvOptions, ParamStore};
use crate::tensor::{ConvSpec, Float, Tensor};

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// torchvision indices and widths of the VGG16 convolutions up to relu3_3.
const CONVS: [(usize, usize, usize); 7] = [
    (0, 3, 64),
    (2, 64, 64),
    (5, 64, 128),
    (7, 128, 128),
    (10, 128, 256),
    (12, 256, 256),
    (14, 256, 256),
];

/// Which activation is used as the perceptual feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PerceptualLayer {
    Relu1_2,
    Relu2_2,
    #[default]
    Relu3_3,
}

impl PerceptualLayer {
    fn num_convs(self) -> usize {
        match self {
            Self::Relu1_2 => 2,
            Self::Relu2_2 => 4,
            Self::Relu3_3 => 7,
        }
    }

    /// Spatial downsampling factor of the layer.
    pub fn stride(self) -> usize {
        match self {
            Self::Relu1_2 => 1,
            Self::Relu2_2 => 2,
            Self::Relu3_3 => 4,
        }
    }

    pub fn channels(self) -> usize {
        CONVS[self.num_convs() - 1].2
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu1_2" => Ok(Self::Relu1_2),
            "relu2_2" => Ok(Self::Relu2_2),
            "relu3_3" => Ok(Self::Relu3_3),
            _ => Err(Error::Config(format!(
                "unknown perceptual layer {s:?} (expected relu1_2, relu2_2 or relu3_3)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Relu1_2 => "relu1_2",
            Self::Relu2_2 => "relu2_2",
            Self::Relu3_3 => "relu3_3",
        }
    }
}

/// Immutable after construction; gradients flow to the image only.
#[derive(Debug, Clone)]
pub struct Vgg16Features<T> {
    layer: PerceptualLayer,
    convs: Vec<Conv2d>,
    params: ParamStore<T>,
}

impl<T: Float> Vgg16Features<T> {
    /// Loads pretrained weights. When `expected_sha256` is given the file
    /// digest must match it.
    pub fn load(path: &Path, layer: PerceptualLayer, expected_sha256: Option<&str>) -> Result<Self> {
        let fail = |reason: String| Error::PerceptualWeights {
            path: path.to_path_buf(),
            reason,
        };
        let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
        if let Some(expected) = expected_sha256 {
            let actual = hex::encode(Sha256::digest(&bytes));
            if !actual.eq_ignore_ascii_case(expected.trim()) {
                return Err(fail(format!("sha256 {actual} does not match expected {expected}")));
            }
        }
        let st = SafeTensors::deserialize(&bytes).map_err(|e| fail(e.to_string()))?;
        let mut params = ParamStore::new();
        let mut convs = Vec::new();
        for &(idx, cin, cout) in &CONVS[..layer.num_convs()] {
            let w = read_tensor::<T>(&st, &format!("features.{idx}.weight"), &[cout, cin, 3, 3]).map_err(fail)?;
            let b = read_tensor::<T>(&st, &format!("features.{idx}.bias"), &[cout]).map_err(fail)?;
            let weight = params.add(format!("features.{idx}.weight"), w);
            let bias = params.add(format!("features.{idx}.bias"), b);
            convs.push(Conv2d {
                weight,
                bias: Some(bias),
                spec: ConvSpec::same(3, 1),
                in_channels: cin,
                out_channels: cout,
            });
        }
        Ok(Self { layer, convs, params })
    }

    /// VGG16 topology with seeded random weights and every width divided
    /// by `width_divisor`. For tests only; it is not a perceptual model.
    pub fn seeded(layer: PerceptualLayer, seed: u64, width_divisor: usize) -> Self {
        let div = width_divisor.max(1);
        let mut rng = rng(seed);
        let mut params = ParamStore::new();
        let convs = CONVS[..layer.num_convs()]
            .iter()
            .map(|&(idx, cin, cout)| {
                let cin = if idx == 0 { 3 } else { (cin / div).max(1) };
                Conv2d::new(
                    &mut params,
                    &mut rng,
                    &format!("features.{idx}"),
                    cin,
                    (cout / div).max(1),
                    ConvOptions::new(3),
                )
            })
            .collect();
        Self { layer, convs, params }
    }

    pub fn layer(&self) -> PerceptualLayer {
        self.layer
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Features of a `(B, 3, H, W)` image in `[0, 1]` after ImageNet
    /// normalization. The weights enter the tape as constants.
    pub fn forward(&self, tape: &Tape<T>, image: &Var<T>) -> Result<Var<T>> {
        let p: Bound<T> = self.params.bind_frozen(tape);
        let scale = tape.constant(Tensor::from_f64(&[1, 3, 1, 1], &IMAGENET_STD.map(|s| 1.0 / s))?);
        let shift = tape.constant(Tensor::from_f64(
            &[1, 3, 1, 1],
            &[0, 1, 2].map(|c| -IMAGENET_MEAN[c] / IMAGENET_STD[c]),
        )?);
        let mut h = tape.add(&tape.mul(image, &scale)?, &shift)?;
        for (i, conv) in self.convs.iter().enumerate() {
            h = tape.relu(&conv.forward(tape, &p, &h)?);
            // pools follow conv1_2 and conv2_2
            if (i == 1 || i == 3) && i + 1 < self.convs.len() {
                h = tape.max_pool2x2(&h)?;
            }
        }
        Ok(h)
    }
}

fn read_tensor<T: Float>(st: &SafeTensors<'_>, name: &str, shape: &[usize]) -> std::result::Result<Tensor<T>, String> {
    let view = st.tensor(name).map_err(|e| format!("{name}: {e}"))?;
    if view.shape() != shape {
        return Err(format!("{name}: expected shape {shape:?}, found {:?}", view.shape()));
    }
    let data: Vec<T> = match view.dtype() {
        Dtype::F32 => view
            .data()
            .chunks_exact(4)
            .map(|b| T::from_f64(f32::from_le_bytes(b.try_into().unwrap()) as f64))
            .collect(),
        Dtype::F64 => view
            .data()
            .chunks_exact(8)
            .map(|b| T::from_f64(f64::from_le_bytes(b.try_into().unwrap())))
            .collect(),
        other => return Err(format!("{name}: unsupported dtype {other:?}")),
    };
    Tensor::new(shape, data).map_err(|e| e.to_string())
}
