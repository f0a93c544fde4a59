//! Overfits a handful of small synthetic pairs to confirm the model and
//! objective can fit mixed exposure at all.

use log::info;
use rand::Rng;

use crate::config::{self, KeyValue};
use crate::data::synth::{procedural_scene, synthesize_pair, DegradationSpec, SampleRanges};
use crate::data::{tensor_to_images, Batch, PairedSample};
use crate::error::{Error, Result};
use crate::eval::psnr;
use crate::losses::{LossBreakdown, LossWeights, MaskPolarity, PerceptualLayer, Vgg16Features};
use crate::model::{ModelConfig, Recnet};
use crate::nn::rng;
use crate::tensor::Tensor;
use crate::training::{Adam, Objective, Trainer};

/// Clean scenes live in this range so the mild gains never clip.
pub const SCENE_RANGE: (f32, f32) = (0.1, 0.55);

#[derive(Debug, Clone, PartialEq)]
pub struct SanityConfig {
    pub model: ModelConfig,
    pub pairs: usize,
    pub size: usize,
    pub max_steps: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub mask_polarity: MaskPolarity,
    pub eval_every: u64,
    pub psnr_threshold: f64,
    pub mask_threshold: f64,
    /// Stop at the first evaluation that meets both thresholds.
    pub stop_early: bool,
    /// Use the clean scenes as inputs too.
    pub identity: bool,
    pub perceptual_weights: Option<std::path::PathBuf>,
    pub perceptual_layer: PerceptualLayer,
}

impl Default for SanityConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                num_blocks: 2,
                base_channels: 16,
                attn_heads: 4,
            },
            pairs: 4,
            size: 64,
            max_steps: 2000,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            seed: 0,
            weights: LossWeights {
                ecr: 0.0,
                ..LossWeights::default()
            },
            mask_polarity: MaskPolarity::default(),
            eval_every: 25,
            psnr_threshold: 30.0,
            mask_threshold: 0.25,
            stop_early: true,
            identity: false,
            perceptual_weights: None,
            perceptual_layer: PerceptualLayer::default(),
        }
    }
}

impl KeyValue for SanityConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        use config::{flag, optional_path, value};
        match key {
            "num_blocks" => self.model.num_blocks = value(key, v)?,
            "base_channels" => self.model.base_channels = value(key, v)?,
            "attn_heads" => self.model.attn_heads = value(key, v)?,
            "pairs" => self.pairs = value(key, v)?,
            "size" => self.size = value(key, v)?,
            "max_steps" => self.max_steps = value(key, v)?,
            "lr" => self.lr = value(key, v)?,
            "beta1" => self.beta1 = value(key, v)?,
            "beta2" => self.beta2 = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "lambda_mse" => self.weights.mse = value(key, v)?,
            "lambda_cos" => self.weights.cos = value(key, v)?,
            "lambda_bce" => self.weights.bce = value(key, v)?,
            "lambda_ecr" => self.weights.ecr = value(key, v)?,
            "mask_polarity" => self.mask_polarity = MaskPolarity::parse(v)?,
            "eval_every" => self.eval_every = value(key, v)?,
            "psnr_threshold" => self.psnr_threshold = value(key, v)?,
            "mask_threshold" => self.mask_threshold = value(key, v)?,
            "stop_early" => self.stop_early = flag(key, v)?,
            "identity" => self.identity = flag(key, v)?,
            "perceptual_weights" => self.perceptual_weights = optional_path(v),
            "perceptual_layer" => self.perceptual_layer = PerceptualLayer::parse(v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_blocks", self.model.num_blocks.to_string()),
            ("base_channels", self.model.base_channels.to_string()),
            ("attn_heads", self.model.attn_heads.to_string()),
            ("pairs", self.pairs.to_string()),
            ("size", self.size.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("seed", self.seed.to_string()),
            ("lambda_mse", self.weights.mse.to_string()),
            ("lambda_cos", self.weights.cos.to_string()),
            ("lambda_bce", self.weights.bce.to_string()),
            ("lambda_ecr", self.weights.ecr.to_string()),
            ("mask_polarity", self.mask_polarity.as_str().to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("psnr_threshold", self.psnr_threshold.to_string()),
            ("mask_threshold", self.mask_threshold.to_string()),
            ("stop_early", self.stop_early.to_string()),
            ("identity", self.identity.to_string()),
            ("perceptual_weights", config::show_path(&self.perceptual_weights)),
            ("perceptual_layer", self.perceptual_layer.as_str().to_string()),
        ]
    }
}

/// Deterministic synthetic pairs for the harness: procedural scenes
/// degraded with mild random region gains.
pub fn sanity_pairs(count: usize, size: usize, seed: u64, identity: bool) -> Result<Vec<PairedSample>> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let id = format!("pair_{i}");
            let scene = procedural_scene(size, size, SCENE_RANGE, &mut r);
            if identity {
                return Ok(PairedSample::new(id, scene.clone(), scene));
            }
            let spec = DegradationSpec::sample(&mut r, &SampleRanges::mild());
            synthesize_pair(id, &scene, &spec, r.random())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SanityPoint {
    pub step: u64,
    /// Mean training-set PSNR of the current weights.
    pub psnr: f64,
    /// Mean absolute difference between the last block's mask and its
    /// target.
    pub mask_error: f64,
}

#[derive(Debug, Clone)]
pub struct SanityReport {
    pub passed: bool,
    pub steps: u64,
    /// Loss of every optimizer step, measured before the update.
    pub losses: Vec<LossBreakdown>,
    pub trace: Vec<SanityPoint>,
    pub model: Recnet<f32>,
    pub pairs: Vec<PairedSample>,
}

impl SanityReport {
    pub fn last(&self) -> SanityPoint {
        *self.trace.last().expect("trace has the initial point")
    }
}

fn measure(
    model: &Recnet<f32>,
    batch: &Batch<f32>,
    target: &Tensor<f32>,
    pairs: &[PairedSample],
    step: u64,
) -> Result<SanityPoint> {
    let (out, masks) = model.infer(&batch.input)?;
    let imgs = tensor_to_images(&out)?;
    let mut total = 0.0;
    for (img, p) in imgs.iter().zip(pairs) {
        total += psnr(img, &p.gt)?;
    }
    let last = masks.last().expect("at least one block");
    let mask_error = last
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs() as f64)
        .sum::<f64>()
        / last.numel() as f64;
    Ok(SanityPoint {
        step,
        psnr: total / pairs.len() as f64,
        mask_error,
    })
}

/// Trains on the whole set of pairs every step and reports whether both
/// thresholds were met within the step budget.
pub fn overfit_sanity(cfg: &SanityConfig) -> Result<SanityReport> {
    cfg.model.validate()?;
    if cfg.pairs == 0 || cfg.size < crate::model::MIN_SIZE {
        return Err(Error::Config(format!(
            "need at least one pair of size >= {}",
            crate::model::MIN_SIZE
        )));
    }
    let extractor = if cfg.weights.ecr > 0.0 {
        let path = cfg
            .perceptual_weights
            .as_ref()
            .ok_or_else(|| Error::Config("lambda_ecr > 0 but `perceptual_weights` is not set".into()))?;
        Some(Vgg16Features::load(path, cfg.perceptual_layer, None)?)
    } else {
        None
    };
    let objective = Objective::new(cfg.weights, cfg.mask_polarity, extractor)?;
    let pairs = sanity_pairs(cfg.pairs, cfg.size, cfg.seed, cfg.identity)?;
    let batch = Batch::<f32>::from_samples(&pairs)?;
    let target = cfg.mask_polarity.target(&batch.gt_mask);
    let model = Recnet::<f32>::new(cfg.model, cfg.seed)?;
    let adam = Adam::new(model.params(), cfg.lr, cfg.beta1, cfg.beta2, 1e-8);
    let mut trainer = Trainer::new(model, adam, objective);

    let meets = |p: &SanityPoint| p.psnr > cfg.psnr_threshold && p.mask_error < cfg.mask_threshold;
    let mut trace = vec![measure(&trainer.model, &batch, &target, &pairs, 0)?];
    let mut losses = Vec::new();
    let mut passed = meets(&trace[0]);
    while trainer.step() < cfg.max_steps && !(passed && cfg.stop_early) {
        losses.push(trainer.train_step(&batch)?);
        let step = trainer.step();
        if (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.max_steps {
            let point = measure(&trainer.model, &batch, &target, &pairs, step)?;
            info!(
                "step {step}: loss {:.5} psnr {:.2} mask_error {:.3}",
                losses.last().map_or(0.0, |l| l.total),
                point.psnr,
                point.mask_error
            );
            passed = passed || meets(&point);
            trace.push(point);
        }
    }
    Ok(SanityReport {
        passed,
        steps: trainer.step(),
        losses,
        trace,
        model: trainer.model,
        pairs,
    })
}
