//! The `recnet` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::Rng;

use crate::config::{self, KeyValue};
use crate::data::synth::{procedural_scene, synthesize_pair, DegradationSpec, SampleRanges};
use crate::data::{list_images, save_sample, tensor_to_images, Image};
use crate::error::{Error, Result};
use crate::eval::{evaluate_dirs, visualize_masks};
use crate::losses::MaskPolarity;
use crate::model::{ModelConfig, Recnet};
use crate::nn::rng;
use crate::training::{load_checkpoint, overfit_sanity, train, SanityConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "recnet", version, about = "Region-aware exposure correction")]
pub struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `key=value` override applied after the config file (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic mixed-exposure dataset.
    Synth(SynthArgs),
    /// Train a model on paired directories.
    Train(TrainArgs),
    /// Correct a single image or every PNG in a directory.
    Infer(InferArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Overfit a few synthetic pairs; exits 0 only if the thresholds are met.
    Sanity(SanityArgs),
    /// Print the per-module parameter table.
    Summary(SummaryArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Degrade these clean PNGs instead of procedural scenes.
    #[arg(long)]
    pub clean_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train_input: Option<PathBuf>,
    #[arg(long)]
    pub train_gt: Option<PathBuf>,
    #[arg(long)]
    pub val_input: Option<PathBuf>,
    #[arg(long)]
    pub val_gt: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A PNG file or a directory of PNGs.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; files keep their names.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `<name>_masks.png` grids.
    #[arg(long)]
    pub masks: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Corrected images.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Original inputs, for per-region scores and the input curve.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SanityArgs {
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Directory for the metric trace, loss log and final checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// Summarize a trained checkpoint instead of a fresh model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Problems with how the command was invoked (exit code 2).
#[derive(Debug)]
struct Usage(String);

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

fn require_exists(path: &Path, what: &str) -> std::result::Result<(), Usage> {
    if path.exists() {
        Ok(())
    } else {
        Err(Usage(format!("{what} {} does not exist", path.display())))
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Config file, then `--set` overrides, then `--seed`.
fn load_config<C: KeyValue>(cli: &Cli, mut cfg: C) -> std::result::Result<C, Failure> {
    if let Some(path) = &cli.config {
        require_exists(path, "config file")?;
        cfg.apply_file(path)?;
    }
    let pairs = cli
        .overrides
        .iter()
        .map(|s| config::parse_override(s))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    cfg.apply_overrides(&pairs).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.apply_overrides(&[("seed".to_string(), seed.to_string())])
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> std::result::Result<i32, Failure> {
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Infer(a) => infer(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::Sanity(a) => sanity(cli, a),
        Command::Summary(a) => summary(cli, a),
    }
}

/// Settings of the `synth` command.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    pub ranges: SampleRanges,
    pub scene_min: f32,
    pub scene_max: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 16,
            size: 128,
            seed: 0,
            ranges: SampleRanges::default(),
            scene_min: 0.1,
            scene_max: 0.9,
        }
    }
}

impl KeyValue for SynthConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        use config::value;
        let r = &mut self.ranges;
        match key {
            "count" => self.count = value(key, v)?,
            "size" => self.size = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "min_regions" => r.regions.0 = value(key, v)?,
            "max_regions" => r.regions.1 = value(key, v)?,
            "bright_gain_min" => r.bright_gain.0 = value(key, v)?,
            "bright_gain_max" => r.bright_gain.1 = value(key, v)?,
            "dark_gain_min" => r.dark_gain.0 = value(key, v)?,
            "dark_gain_max" => r.dark_gain.1 = value(key, v)?,
            "bright_gamma_min" => r.bright_gamma.0 = value(key, v)?,
            "bright_gamma_max" => r.bright_gamma.1 = value(key, v)?,
            "dark_gamma_min" => r.dark_gamma.0 = value(key, v)?,
            "dark_gamma_max" => r.dark_gamma.1 = value(key, v)?,
            "gamma_probability" => r.gamma_probability = value(key, v)?,
            "noise_std" => r.noise_std = value(key, v)?,
            "scene_min" => self.scene_min = value(key, v)?,
            "scene_max" => self.scene_max = value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let r = &self.ranges;
        vec![
            ("count", self.count.to_string()),
            ("size", self.size.to_string()),
            ("seed", self.seed.to_string()),
            ("min_regions", r.regions.0.to_string()),
            ("max_regions", r.regions.1.to_string()),
            ("bright_gain_min", r.bright_gain.0.to_string()),
            ("bright_gain_max", r.bright_gain.1.to_string()),
            ("dark_gain_min", r.dark_gain.0.to_string()),
            ("dark_gain_max", r.dark_gain.1.to_string()),
            ("bright_gamma_min", r.bright_gamma.0.to_string()),
            ("bright_gamma_max", r.bright_gamma.1.to_string()),
            ("dark_gamma_min", r.dark_gamma.0.to_string()),
            ("dark_gamma_max", r.dark_gamma.1.to_string()),
            ("gamma_probability", r.gamma_probability.to_string()),
            ("noise_std", r.noise_std.to_string()),
            ("scene_min", self.scene_min.to_string()),
            ("scene_max", self.scene_max.to_string()),
        ]
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> std::result::Result<i32, Failure> {
    let mut cfg = load_config(cli, SynthConfig::default())?;
    if let Some(c) = a.count {
        cfg.count = c;
    }
    if let Some(s) = a.size {
        cfg.size = s;
    }
    if cfg.size < crate::model::MIN_SIZE {
        return Err(Usage(format!("size must be at least {}", crate::model::MIN_SIZE)).into());
    }
    let r = &cfg.ranges;
    if r.regions.0 < 2 || r.regions.0 > r.regions.1 || r.regions.1 > crate::data::synth::MAX_REGIONS {
        return Err(Usage(format!(
            "region range {}..={} must lie within 2..={}",
            r.regions.0,
            r.regions.1,
            crate::data::synth::MAX_REGIONS
        ))
        .into());
    }
    let cleans: Vec<(String, Image)> = match &a.clean_dir {
        Some(dir) => {
            require_exists(dir, "clean directory")?;
            list_images(dir)?
                .iter()
                .map(|name| {
                    let id = Path::new(name)
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or(name)
                        .to_string();
                    Image::load(&dir.join(name)).map(|img| (id, img))
                })
                .collect::<Result<_>>()?
        }
        None => Vec::new(),
    };
    let mut r = rng(cfg.seed);
    let mut manifest = format!("# synthetic mixed-exposure pairs\n{}", cfg.to_kv_string());
    let count = if cleans.is_empty() { cfg.count } else { cleans.len() };
    for i in 0..count {
        let (id, clean) = match cleans.get(i) {
            Some((id, img)) => (id.clone(), img.clone()),
            None => (
                format!("{i:05}"),
                procedural_scene(cfg.size, cfg.size, (cfg.scene_min, cfg.scene_max), &mut r),
            ),
        };
        let spec = DegradationSpec::sample(&mut r, &cfg.ranges);
        let seed: u64 = r.random();
        let sample = synthesize_pair(id.clone(), &clean, &spec, seed)?;
        save_sample(&a.out, &sample)?;
        manifest.push_str(&format!("sample.{id} = seed={seed} {spec}\n"));
    }
    let path = a.out.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    println!("wrote {count} pairs to {}", a.out.display());
    Ok(0)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> std::result::Result<i32, Failure> {
    let mut cfg = load_config(cli, TrainConfig::default())?;
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.train_input, &a.train_input);
    set(&mut cfg.train_gt, &a.train_gt);
    set(&mut cfg.val_input, &a.val_input);
    set(&mut cfg.val_gt, &a.val_gt);
    set(&mut cfg.resume, &a.resume);
    if let Some(out) = &a.out {
        cfg.out_dir.clone_from(out);
    }
    if let Some(n) = a.max_steps {
        cfg.max_steps = n;
    }
    for (p, what) in [
        (&cfg.train_input, "train_input"),
        (&cfg.train_gt, "train_gt"),
        (&cfg.val_input, "val_input"),
        (&cfg.val_gt, "val_gt"),
        (&cfg.resume, "resume"),
    ] {
        if let Some(p) = p {
            require_exists(p, what)?;
        }
    }
    if cfg.train_input.is_none() || cfg.train_gt.is_none() {
        return Err(Usage("train needs --train-input and --train-gt (or the config keys)".into()).into());
    }
    let report = train(&cfg)?;
    println!("steps = {}", report.steps);
    if let Some(last) = report.last {
        println!("last_loss = {last}");
    }
    if let Some(p) = report.initial_val_psnr {
        println!("initial_val_psnr = {p:.4}");
    }
    if let Some((p, step)) = report.best_val {
        println!("best_val_psnr = {p:.4} (step {step})");
    }
    println!("checkpoint = {}", report.final_checkpoint.display());
    Ok(0)
}

fn infer(_cli: &Cli, a: &InferArgs) -> std::result::Result<i32, Failure> {
    require_exists(&a.checkpoint, "checkpoint")?;
    require_exists(&a.input, "input")?;
    let model = load_checkpoint(&a.checkpoint, None)?.model;
    let files: Vec<PathBuf> = if a.input.is_dir() {
        list_images(&a.input)?.iter().map(|n| a.input.join(n)).collect()
    } else {
        vec![a.input.clone()]
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
    for f in &files {
        let img = Image::load(f)?;
        let (out, _) = model.infer(&img.to_tensor::<f32>())?;
        let name = f.file_name().expect("file path has a name");
        let dest = a.out.join(Path::new(name).with_extension("png"));
        tensor_to_images(&out)?.remove(0).save(&dest)?;
        if a.masks {
            let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            visualize_masks(&model, &img, None, MaskPolarity::default())?
                .save(&a.out.join(format!("{stem}_masks.png")))?;
        }
        info!("wrote {}", dest.display());
    }
    println!("corrected {} image(s) into {}", files.len(), a.out.display());
    Ok(0)
}

fn eval(_cli: &Cli, a: &EvalArgs) -> std::result::Result<i32, Failure> {
    require_exists(&a.pred, "prediction directory")?;
    require_exists(&a.gt, "ground-truth directory")?;
    if let Some(i) = &a.input {
        require_exists(i, "input directory")?;
    }
    let report = evaluate_dirs(&a.pred, &a.gt, a.input.as_deref())?;
    report.write(&a.out)?;
    print!("{}", report.summary());
    Ok(0)
}

fn sanity(cli: &Cli, a: &SanityArgs) -> std::result::Result<i32, Failure> {
    let mut cfg = load_config(cli, SanityConfig::default())?;
    if let Some(n) = a.max_steps {
        cfg.max_steps = n;
    }
    let report = overfit_sanity(&cfg)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut trace = String::from("step,psnr,mask_error\n");
        for p in &report.trace {
            trace.push_str(&format!("{},{:.6},{:.6}\n", p.step, p.psnr, p.mask_error));
        }
        let mut log = String::from(crate::training::LOG_HEADER);
        log.push('\n');
        for (i, b) in report.losses.iter().enumerate() {
            log.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i + 1,
                b.total,
                b.mse,
                b.cos,
                b.bce,
                b.ecr,
                cfg.lr
            ));
        }
        let write = |name: &str, text: &str| {
            fs::write(dir.join(name), text).map_err(|e| Error::io(format!("writing {name}"), e))
        };
        write("trace.csv", &trace)?;
        write("train_log.csv", &log)?;
        write("config.txt", &cfg.to_kv_string())?;
        crate::training::save_checkpoint(&dir.join("final.safetensors"), &report.model, None, report.steps)?;
    }
    let last = report.last();
    let best = report
        .trace
        .iter()
        .copied()
        .max_by(|a, b| a.psnr.total_cmp(&b.psnr))
        .unwrap_or(last);
    println!(
        "steps = {}\nfinal_psnr = {:.4}\nfinal_mask_error = {:.4}\nbest_psnr = {:.4} (step {})",
        report.steps, last.psnr, last.mask_error, best.psnr, best.step
    );
    if report.passed {
        println!("sanity: passed");
        Ok(0)
    } else {
        eprintln!(
            "error: sanity thresholds not met within {} steps (psnr {:.2} <= {} or mask error {:.3} >= {})",
            report.steps, last.psnr, cfg.psnr_threshold, last.mask_error, cfg.mask_threshold
        );
        Ok(1)
    }
}

/// Settings of the `summary` command.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct SummaryConfig {
    model: ModelConfig,
    seed: u64,
}

impl KeyValue for SummaryConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool> {
        use config::value;
        match key {
            "num_blocks" => self.model.num_blocks = value(key, v)?,
            "base_channels" => self.model.base_channels = value(key, v)?,
            "attn_heads" => self.model.attn_heads = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("num_blocks", self.model.num_blocks.to_string()),
            ("base_channels", self.model.base_channels.to_string()),
            ("attn_heads", self.model.attn_heads.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

fn summary(cli: &Cli, a: &SummaryArgs) -> std::result::Result<i32, Failure> {
    let model = match &a.checkpoint {
        Some(path) => {
            require_exists(path, "checkpoint")?;
            load_checkpoint(path, None)?.model
        }
        None => {
            let cfg = load_config(cli, SummaryConfig::default())?;
            Recnet::<f32>::new(cfg.model, cfg.seed).map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    println!("{}", model.summary());
    Ok(0)
}
