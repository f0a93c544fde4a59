//! Optimization: the combined objective, Adam, the training loop with its
//! CSV log and checkpoints, and the small overfitting harness.

mod adam;
mod checkpoint;
mod sanity;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use sanity::{overfit_sanity, sanity_pairs, SanityConfig, SanityPoint, SanityReport};

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;

use crate::autograd::{Tape, Var};
use crate::config::{self, KeyValue};
use crate::data::{load_paired_dir, random_crop_batch, tensor_to_images, Batch, Dataset};
use crate::error::{Error, Result};
use crate::eval::psnr;
use crate::losses::{
    bce_mask_loss, cosine_color_loss, ecr_loss, mse_loss, total_loss, LossBreakdown, LossTerms, LossWeights,
    MaskPolarity, PerceptualLayer, Vgg16Features,
};
use crate::model::{ForwardOutput, ModelConfig, Recnet};
use crate::nn::rng;
use crate::tensor::{Float, Tensor};

/// The weighted training objective.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub weights: LossWeights,
    pub polarity: MaskPolarity,
    /// Cut the contrastive term's gradient into the mask.
    pub detach_ecr_mask: bool,
    extractor: Option<Vgg16Features<T>>,
}

impl<T: Float> Objective<T> {
    /// Fails when the contrastive weight is positive and no extractor is
    /// given.
    pub fn new(weights: LossWeights, polarity: MaskPolarity, extractor: Option<Vgg16Features<T>>) -> Result<Self> {
        weights.validate()?;
        if weights.ecr > 0.0 && extractor.is_none() {
            return Err(Error::Config(
                "lambda_ecr > 0 requires perceptual extractor weights (set `perceptual_weights`, or `lambda_ecr = 0`)"
                    .into(),
            ));
        }
        Ok(Self {
            weights,
            polarity,
            detach_ecr_mask: true,
            extractor,
        })
    }

    pub fn extractor(&self) -> Option<&Vgg16Features<T>> {
        self.extractor.as_ref()
    }

    /// All terms for one forward pass. `gt_mask` is the 0/1 brighter-input
    /// mask; the polarity decides how the predicted masks are compared
    /// with it.
    pub fn evaluate(
        &self,
        tape: &Tape<T>,
        out: &ForwardOutput<T>,
        input: &Var<T>,
        gt: &Var<T>,
        gt_mask: &Tensor<T>,
    ) -> Result<(Var<T>, LossBreakdown)> {
        let mse = mse_loss(tape, &out.image, gt)?;
        let cos = cosine_color_loss(tape, &out.image, gt)?;
        let target = tape.constant(self.polarity.target(gt_mask));
        let bce = bce_mask_loss(tape, &out.masks, &target)?;
        let ecr = match (&self.extractor, self.weights.ecr > 0.0) {
            (Some(ex), true) => {
                let last = out.masks.last().expect("at least one block");
                let mask_u = if self.detach_ecr_mask {
                    tape.detach(last)
                } else {
                    last.clone()
                };
                Some(ecr_loss(tape, ex, &out.image, input, gt, &mask_u)?)
            }
            _ => None,
        };
        total_loss(tape, &LossTerms { mse, cos, bce, ecr }, &self.weights)
    }
}

/// Loss breakdown and per-parameter gradients (store order) for one batch.
pub fn compute_gradients<T: Float>(
    model: &Recnet<T>,
    objective: &Objective<T>,
    batch: &Batch<T>,
) -> Result<(LossBreakdown, Vec<Option<Tensor<T>>>)> {
    let tape = Tape::new();
    let p = model.bind(&tape);
    let input = tape.constant(batch.input.clone());
    let gt = tape.constant(batch.gt.clone());
    let out = model.forward(&tape, &p, &input)?;
    let (total, breakdown) = objective.evaluate(&tape, &out, &input, &gt, &batch.gt_mask)?;
    let grads = tape.backward(&total)?;
    let g = p.vars().iter().map(|v| grads.get(v).cloned()).collect();
    Ok((breakdown, g))
}

/// Model, optimizer and objective advanced together one batch at a time.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: Recnet<T>,
    pub optimizer: Adam<T>,
    pub objective: Objective<T>,
    pub grad_clip: Option<f64>,
    step: u64,
}

impl<T: Float> Trainer<T> {
    pub fn new(model: Recnet<T>, optimizer: Adam<T>, objective: Objective<T>) -> Self {
        Self {
            model,
            optimizer,
            objective,
            grad_clip: None,
            step: 0,
        }
    }

    pub fn with_step(mut self, step: u64) -> Self {
        self.step = step;
        self
    }

    /// Steps completed.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// One optimizer update. A non-finite loss aborts before the weights
    /// change.
    pub fn train_step(&mut self, batch: &Batch<T>) -> Result<LossBreakdown> {
        let (breakdown, mut grads) = compute_gradients(&self.model, &self.objective, batch)?;
        if !breakdown.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: self.step as usize,
                breakdown: breakdown.to_string(),
            });
        }
        if let Some(max) = self.grad_clip {
            clip_grad_norm(&mut grads, max);
        }
        self.optimizer.update(self.model.params_mut(), &grads)?;
        self.step += 1;
        Ok(breakdown)
    }
}

/// Everything the `train` command needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub weights: LossWeights,
    pub crop: usize,
    pub flips: bool,
    pub checkpoint_every: u64,
    pub val_every: u64,
    pub grad_clip: Option<f64>,
    pub mask_polarity: MaskPolarity,
    pub detach_ecr_mask: bool,
    pub train_input: Option<PathBuf>,
    pub train_gt: Option<PathBuf>,
    pub val_input: Option<PathBuf>,
    pub val_gt: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
    pub perceptual_weights: Option<PathBuf>,
    pub perceptual_sha256: Option<String>,
    pub perceptual_layer: PerceptualLayer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            batch: 8,
            max_steps: 2000,
            seed: 0,
            weights: LossWeights::default(),
            crop: 128,
            flips: true,
            checkpoint_every: 500,
            val_every: 100,
            grad_clip: None,
            mask_polarity: MaskPolarity::default(),
            detach_ecr_mask: true,
            train_input: None,
            train_gt: None,
            val_input: None,
            val_gt: None,
            out_dir: PathBuf::from("runs/train"),
            resume: None,
            perceptual_weights: None,
            perceptual_sha256: None,
            perceptual_layer: PerceptualLayer::default(),
        }
    }
}

impl KeyValue for TrainConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        use config::{flag, optional, optional_path, value};
        match key {
            "num_blocks" => self.model.num_blocks = value(key, v)?,
            "base_channels" => self.model.base_channels = value(key, v)?,
            "attn_heads" => self.model.attn_heads = value(key, v)?,
            "lr" => self.lr = value(key, v)?,
            "beta1" => self.beta1 = value(key, v)?,
            "beta2" => self.beta2 = value(key, v)?,
            "adam_eps" => self.adam_eps = value(key, v)?,
            "batch" => self.batch = value(key, v)?,
            "max_steps" => self.max_steps = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "lambda_mse" => self.weights.mse = value(key, v)?,
            "lambda_cos" => self.weights.cos = value(key, v)?,
            "lambda_bce" => self.weights.bce = value(key, v)?,
            "lambda_ecr" => self.weights.ecr = value(key, v)?,
            "crop" => self.crop = value(key, v)?,
            "flips" => self.flips = flag(key, v)?,
            "checkpoint_every" => self.checkpoint_every = value(key, v)?,
            "val_every" => self.val_every = value(key, v)?,
            "grad_clip" => self.grad_clip = optional(key, v)?,
            "mask_polarity" => self.mask_polarity = MaskPolarity::parse(v)?,
            "detach_ecr_mask" => self.detach_ecr_mask = flag(key, v)?,
            "train_input" => self.train_input = optional_path(v),
            "train_gt" => self.train_gt = optional_path(v),
            "val_input" => self.val_input = optional_path(v),
            "val_gt" => self.val_gt = optional_path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "resume" => self.resume = optional_path(v),
            "perceptual_weights" => self.perceptual_weights = optional_path(v),
            "perceptual_sha256" => self.perceptual_sha256 = optional(key, v)?,
            "perceptual_layer" => self.perceptual_layer = PerceptualLayer::parse(v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        use config::{show_optional, show_path};
        vec![
            ("num_blocks", self.model.num_blocks.to_string()),
            ("base_channels", self.model.base_channels.to_string()),
            ("attn_heads", self.model.attn_heads.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("batch", self.batch.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("seed", self.seed.to_string()),
            ("lambda_mse", self.weights.mse.to_string()),
            ("lambda_cos", self.weights.cos.to_string()),
            ("lambda_bce", self.weights.bce.to_string()),
            ("lambda_ecr", self.weights.ecr.to_string()),
            ("crop", self.crop.to_string()),
            ("flips", self.flips.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("val_every", self.val_every.to_string()),
            ("grad_clip", show_optional(&self.grad_clip)),
            ("mask_polarity", self.mask_polarity.as_str().to_string()),
            ("detach_ecr_mask", self.detach_ecr_mask.to_string()),
            ("train_input", show_path(&self.train_input)),
            ("train_gt", show_path(&self.train_gt)),
            ("val_input", show_path(&self.val_input)),
            ("val_gt", show_path(&self.val_gt)),
            ("out_dir", self.out_dir.display().to_string()),
            ("resume", show_path(&self.resume)),
            ("perceptual_weights", show_path(&self.perceptual_weights)),
            ("perceptual_sha256", show_optional(&self.perceptual_sha256)),
            ("perceptual_layer", self.perceptual_layer.as_str().to_string()),
        ]
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be positive".into()));
        }
        if self.crop < crate::model::MIN_SIZE {
            return Err(Error::Config(format!(
                "crop must be at least {}, got {}",
                crate::model::MIN_SIZE,
                self.crop
            )));
        }
        if self.val_input.is_some() != self.val_gt.is_some() {
            return Err(Error::Config("set both val_input and val_gt, or neither".into()));
        }
        Ok(())
    }

    /// Loads the extractor if `lambda_ecr > 0`; missing weights are a
    /// configuration error.
    pub fn objective(&self) -> Result<Objective<f32>> {
        let extractor = if self.weights.ecr > 0.0 {
            let path = self.perceptual_weights.as_ref().ok_or_else(|| {
                Error::Config(
                    "lambda_ecr > 0 but `perceptual_weights` is not set; run scripts/fetch_vgg16.py \
                     or set lambda_ecr = 0"
                        .into(),
                )
            })?;
            Some(Vgg16Features::load(
                path,
                self.perceptual_layer,
                self.perceptual_sha256.as_deref(),
            )?)
        } else {
            None
        };
        let mut obj = Objective::new(self.weights, self.mask_polarity, extractor)?;
        obj.detach_ecr_mask = self.detach_ecr_mask;
        Ok(obj)
    }
}

pub const LOG_HEADER: &str = "step,total,mse,cos,bce,ecr,lr";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub steps: u64,
    pub last: Option<LossBreakdown>,
    /// Mean validation PSNR before the first update, if validating.
    pub initial_val_psnr: Option<f64>,
    /// Best mean validation PSNR and the step it was measured at.
    pub best_val: Option<(f64, u64)>,
    pub log_path: PathBuf,
    pub final_checkpoint: PathBuf,
}

/// Mean PSNR of the model's output over full-size images.
pub fn validation_psnr(model: &Recnet<f32>, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for s in data.samples() {
        let (out, _) = model.infer(&s.input.to_tensor::<f32>())?;
        let img = tensor_to_images(&out)?.remove(0);
        total += psnr(&img, &s.gt)?;
    }
    Ok(total / data.len() as f64)
}

fn append_line(log: &mut File, path: &Path, line: &str) -> Result<()> {
    writeln!(log, "{line}").map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Runs the training loop described by `cfg`.
pub fn train(cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let (Some(tin), Some(tgt)) = (&cfg.train_input, &cfg.train_gt) else {
        return Err(Error::Config("train_input and train_gt must be set".into()));
    };
    let objective = cfg.objective()?;
    let data = load_paired_dir(tin, tgt)?;
    let val = match (&cfg.val_input, &cfg.val_gt) {
        (Some(i), Some(g)) => Some(load_paired_dir(i, g)?),
        _ => None,
    };
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(format!("creating {}", cfg.out_dir.display()), e))?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.to_kv_string()).map_err(|e| Error::io("writing config.txt", e))?;

    let (model, optimizer, start) = match &cfg.resume {
        Some(path) => {
            let ck = load_checkpoint(path, Some(&cfg.model))?;
            let opt = ck
                .optimizer
                .unwrap_or_else(|| Adam::new(ck.model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps));
            info!("resuming from {} at step {}", path.display(), ck.step);
            (ck.model, opt, ck.step)
        }
        None => {
            let model = Recnet::<f32>::new(cfg.model, cfg.seed)?;
            let opt = Adam::new(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
            (model, opt, 0)
        }
    };
    let mut trainer = Trainer::new(model, optimizer, objective).with_step(start);
    trainer.grad_clip = cfg.grad_clip;

    let log_path = cfg.out_dir.join("train_log.csv");
    let fresh = !log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(format!("opening {}", log_path.display()), e))?;
    if fresh {
        append_line(&mut log, &log_path, LOG_HEADER)?;
    }

    let initial_val_psnr = val.as_ref().map(|v| validation_psnr(&trainer.model, v)).transpose()?;
    let mut best_val = initial_val_psnr.map(|p| (p, start));
    // the sampler stream depends on the seed and the resume point only
    let mut sampler = rng(cfg.seed ^ start.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut last = None;
    while trainer.step() < cfg.max_steps {
        let batch = random_crop_batch::<f32>(&data, cfg.crop, cfg.batch, cfg.flips, &mut sampler)?;
        let b = trainer.train_step(&batch)?;
        let step = trainer.step();
        append_line(
            &mut log,
            &log_path,
            &format!("{step},{},{},{},{},{},{}", b.total, b.mse, b.cos, b.bce, b.ecr, cfg.lr),
        )?;
        last = Some(b);
        if let Some(v) = &val {
            if cfg.val_every > 0 && step % cfg.val_every == 0 {
                let p = validation_psnr(&trainer.model, v)?;
                info!("step {step}: {b} val_psnr={p:.3}");
                if best_val.is_none_or(|(best, _)| p > best) {
                    best_val = Some((p, step));
                }
            }
        }
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            let path = cfg.out_dir.join(format!("checkpoint_{step:07}.safetensors"));
            save_checkpoint(&path, &trainer.model, Some(&trainer.optimizer), step)?;
        }
    }
    let final_checkpoint = cfg.out_dir.join("final.safetensors");
    save_checkpoint(
        &final_checkpoint,
        &trainer.model,
        Some(&trainer.optimizer),
        trainer.step(),
    )?;
    Ok(TrainReport {
        steps: trainer.step(),
        last,
        initial_val_psnr,
        best_val,
        log_path,
        final_checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = TrainConfig::default();
        assert_eq!((cfg.lr, cfg.beta1, cfg.beta2, cfg.batch), (1e-4, 0.9, 0.99, 8));
        assert_eq!(cfg.weights, LossWeights::default());
        let text = cfg.to_kv_string();
        let mut back = TrainConfig {
            lr: 5.0,
            ..TrainConfig::default()
        };
        back.apply_pairs(&config::parse(&text).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn ecr_without_weights_is_a_config_error() {
        let cfg = TrainConfig::default();
        assert!(matches!(cfg.objective(), Err(Error::Config(_))));
        let missing = TrainConfig {
            perceptual_weights: Some(PathBuf::from("/nonexistent/vgg16.safetensors")),
            ..TrainConfig::default()
        };
        assert!(matches!(missing.objective(), Err(Error::PerceptualWeights { .. })));
    }
}
