//! Synthetic mixed-exposure degradation: a random smooth partition of the
//! image into regions, one brightness adjustment per region, blended
//! across Gaussian-feathered boundaries.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::image::Image;
use crate::data::PairedSample;
use crate::error::{Error, Result};
use crate::nn::rng;

pub const GAIN_RANGE: (f64, f64) = (0.3, 3.0);
pub const GAMMA_RANGE: (f64, f64) = (0.4, 2.5);
pub const MAX_REGIONS: usize = 4;
/// Feather radius as a fraction of `min(H, W)`.
pub const DEFAULT_FEATHER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Adjustment {
    /// `clamp(g * v)`.
    Gain(f64),
    /// `v^gamma`.
    Gamma(f64),
}

impl Adjustment {
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Self::Gain(g) => (g as f32 * v).clamp(0.0, 1.0),
            Self::Gamma(gamma) => v.max(0.0).powf(gamma as f32),
        }
    }

    pub fn brightens(self) -> bool {
        match self {
            Self::Gain(g) => g > 1.0,
            Self::Gamma(gamma) => gamma < 1.0,
        }
    }

    pub fn darkens(self) -> bool {
        match self {
            Self::Gain(g) => g < 1.0,
            Self::Gamma(gamma) => gamma > 1.0,
        }
    }

    fn validate(self) -> Result<()> {
        let (name, v, (lo, hi)) = match self {
            Self::Gain(g) => ("gain", g, GAIN_RANGE),
            Self::Gamma(gamma) => ("gamma", gamma, GAMMA_RANGE),
        };
        if !(lo..=hi).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} {v} outside [{lo}, {hi}]")));
        }
        Ok(())
    }
}

impl fmt::Display for Adjustment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gain(g) => write!(f, "gain:{g}"),
            Self::Gamma(gamma) => write!(f, "gamma:{gamma}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionLayout {
    /// Noise-perturbed Voronoi cells around random centers.
    Blobs { regions: usize },
    /// Left and right halves, in that order.
    LeftRight,
}

impl RegionLayout {
    pub fn regions(self) -> usize {
        match self {
            Self::Blobs { regions } => regions,
            Self::LeftRight => 2,
        }
    }
}

impl fmt::Display for RegionLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Blobs { regions } => write!(f, "blobs:{regions}"),
            Self::LeftRight => write!(f, "left-right"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    pub layout: RegionLayout,
    /// One per region.
    pub adjustments: Vec<Adjustment>,
    pub noise_std: f64,
    pub feather: f64,
}

impl DegradationSpec {
    pub fn new(layout: RegionLayout, adjustments: Vec<Adjustment>) -> Self {
        Self {
            layout,
            adjustments,
            noise_std: 0.0,
            feather: DEFAULT_FEATHER,
        }
    }

    pub fn with_noise(mut self, std: f64) -> Self {
        self.noise_std = std;
        self
    }

    pub fn with_feather(mut self, feather: f64) -> Self {
        self.feather = feather;
        self
    }

    /// All-identity specs pass through unchanged; otherwise at least one
    /// region must brighten and one must darken.
    pub fn validate(&self) -> Result<()> {
        let n = self.layout.regions();
        if !(2..=MAX_REGIONS).contains(&n) {
            return Err(Error::InvalidArgument(format!(
                "region count {n} outside 2..={MAX_REGIONS}"
            )));
        }
        if self.adjustments.len() != n {
            return Err(Error::InvalidArgument(format!(
                "{} adjustments for {n} regions",
                self.adjustments.len()
            )));
        }
        for a in &self.adjustments {
            a.validate()?;
        }
        if !(0.0..=0.5).contains(&self.noise_std) {
            return Err(Error::InvalidArgument(format!(
                "noise_std {} outside [0, 0.5]",
                self.noise_std
            )));
        }
        if !(0.0..=0.5).contains(&self.feather) {
            return Err(Error::InvalidArgument(format!(
                "feather {} outside [0, 0.5]",
                self.feather
            )));
        }
        let identity = self.adjustments.iter().all(|a| !a.brightens() && !a.darkens());
        let mixed = self.adjustments.iter().any(|a| a.brightens()) && self.adjustments.iter().any(|a| a.darkens());
        if !identity && !mixed {
            return Err(Error::InvalidArgument(format!(
                "degradation {self} is not mixed exposure: needs one brightening and one darkening region"
            )));
        }
        Ok(())
    }

    /// Random mixed-exposure spec: region 0 brightens, region 1 darkens,
    /// further regions pick either.
    pub fn sample(rng: &mut ChaCha8Rng, ranges: &SampleRanges) -> Self {
        let regions = rng.random_range(ranges.regions.0..=ranges.regions.1);
        let adjustments = (0..regions)
            .map(|i| {
                let bright = match i {
                    0 => true,
                    1 => false,
                    _ => rng.random_bool(0.5),
                };
                let gamma = rng.random_bool(ranges.gamma_probability);
                let (lo, hi) = match (bright, gamma) {
                    (true, false) => ranges.bright_gain,
                    (false, false) => ranges.dark_gain,
                    (true, true) => ranges.bright_gamma,
                    (false, true) => ranges.dark_gamma,
                };
                let v = rng.random_range(lo..=hi);
                if gamma {
                    Adjustment::Gamma(v)
                } else {
                    Adjustment::Gain(v)
                }
            })
            .collect();
        Self {
            layout: RegionLayout::Blobs { regions },
            adjustments,
            noise_std: ranges.noise_std,
            feather: DEFAULT_FEATHER,
        }
    }
}

impl fmt::Display for DegradationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let adj: Vec<String> = self.adjustments.iter().map(|a| a.to_string()).collect();
        write!(
            f,
            "layout={} adjustments={} noise_std={} feather={}",
            self.layout,
            adj.join(","),
            self.noise_std,
            self.feather
        )
    }
}

/// Parameter ranges for [`DegradationSpec::sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRanges {
    pub regions: (usize, usize),
    pub bright_gain: (f64, f64),
    pub dark_gain: (f64, f64),
    pub bright_gamma: (f64, f64),
    pub dark_gamma: (f64, f64),
    pub gamma_probability: f64,
    pub noise_std: f64,
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            regions: (2, MAX_REGIONS),
            bright_gain: (1.4, 2.2),
            dark_gain: (0.35, 0.7),
            bright_gamma: (0.45, 0.8),
            dark_gamma: (1.4, 2.2),
            gamma_probability: 0.3,
            noise_std: 0.0,
        }
    }
}

impl SampleRanges {
    /// Gains only, mild enough that a clean image in `[0.1, 0.55]` never
    /// clips.
    pub fn mild() -> Self {
        Self {
            regions: (2, 3),
            bright_gain: (1.4, 1.8),
            dark_gain: (0.4, 0.65),
            gamma_probability: 0.0,
            ..Self::default()
        }
    }
}

/// Degrades `clean` according to `spec`. The partition and noise depend
/// only on `seed`.
pub fn synthesize_pair(
    id: impl Into<String>,
    clean: &Image,
    spec: &DegradationSpec,
    seed: u64,
) -> Result<PairedSample> {
    spec.validate()?;
    if !clean.in_unit_range() {
        return Err(Error::InvalidArgument("clean image has values outside [0, 1]".into()));
    }
    let (w, h) = (clean.width(), clean.height());
    let mut rng = rng(seed);
    let labels = partition(spec.layout, w, h, &mut rng);
    let sigma = spec.feather * w.min(h) as f64;
    let weights: Vec<Vec<f32>> = (0..spec.layout.regions())
        .map(|k| {
            let onehot: Vec<f32> = labels.iter().map(|&l| if l == k { 1.0 } else { 0.0 }).collect();
            gaussian_blur(&onehot, w, h, sigma)
        })
        .collect();

    let noise = Normal::new(0.0, spec.noise_std.max(0.0)).expect("valid std");
    let mut data = Vec::with_capacity(w * h * 3);
    // blend in f64 so identity adjustments round back to the exact input
    for (p, px) in clean.pixels().enumerate() {
        let total: f64 = weights.iter().map(|wk| wk[p] as f64).sum();
        for v in px {
            let mut out = 0.0f64;
            for (wk, adj) in weights.iter().zip(&spec.adjustments) {
                if wk[p] > 0.0 {
                    out += wk[p] as f64 * adj.apply(v) as f64;
                }
            }
            out /= total;
            if spec.noise_std > 0.0 {
                out += noise.sample(&mut rng);
            }
            data.push((out as f32).clamp(0.0, 1.0));
        }
    }
    let input = Image::new(w, h, data)?;
    Ok(PairedSample::new(id, input, clean.clone()))
}

/// Region label per pixel.
fn partition(layout: RegionLayout, w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match layout {
        RegionLayout::LeftRight => (0..h)
            .flat_map(|_| (0..w).map(move |x| usize::from(2 * x >= w)))
            .collect(),
        RegionLayout::Blobs { regions } => {
            let centers: Vec<(f64, f64)> = (0..regions)
                .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            let fields: Vec<Vec<f32>> = (0..regions).map(|_| smooth_noise(w, h, 4, rng)).collect();
            (0..w * h)
                .map(|p| {
                    let (x, y) = ((p % w) as f64 / w as f64, (p / w) as f64 / h as f64);
                    (0..regions)
                        .map(|k| {
                            let d = ((x - centers[k].0).powi(2) + (y - centers[k].1).powi(2)).sqrt();
                            (k, d + 0.35 * fields[k][p] as f64)
                        })
                        .min_by(|a, b| a.1.total_cmp(&b.1))
                        .map(|(k, _)| k)
                        .expect("at least one region")
                })
                .collect()
        }
    }
}

/// Bilinear upsampling of a `(grid + 1)^2` lattice of uniform values in
/// `[0, 1]`.
pub(crate) fn smooth_noise(w: usize, h: usize, grid: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = grid + 1;
    let lattice: Vec<f32> = (0..n * n).map(|_| rng.random::<f32>()).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let fy = y as f32 / (h.max(2) - 1) as f32 * grid as f32;
        let y0 = (fy.floor() as usize).min(grid - 1);
        let ty = fy - y0 as f32;
        for x in 0..w {
            let fx = x as f32 / (w.max(2) - 1) as f32 * grid as f32;
            let x0 = (fx.floor() as usize).min(grid - 1);
            let tx = fx - x0 as f32;
            let at = |i: usize, j: usize| lattice[j * n + i];
            let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
            let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Separable Gaussian blur, renormalized at the borders. `sigma <= 0`
/// returns the input.
fn gaussian_blur(src: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return src.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let pass = |data: &[f32], horizontal: bool| -> Vec<f32> {
        let mut out = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let (mut acc, mut norm) = (0.0f32, 0.0f32);
                for (ki, kv) in kernel.iter().enumerate() {
                    let o = ki as isize - radius;
                    let (sx, sy) = if horizontal {
                        (x as isize + o, y as isize)
                    } else {
                        (x as isize, y as isize + o)
                    };
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue;
                    }
                    acc += kv * data[sy as usize * w + sx as usize];
                    norm += kv;
                }
                out[y * w + x] = acc / norm;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Smooth color field with a few flat shapes and fine texture, values in
/// `[lo, hi]`.
pub fn procedural_scene(w: usize, h: usize, range: (f32, f32), rng: &mut ChaCha8Rng) -> Image {
    let base: Vec<Vec<f32>> = (0..3).map(|_| smooth_noise(w, h, 3, rng)).collect();
    let mut img = Image::from_fn(w, h, |x, y| {
        let p = y * w + x;
        [base[0][p], base[1][p], base[2][p]]
    });
    let shapes = rng.random_range(3..=6);
    for _ in 0..shapes {
        let color = [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()];
        let (cx, cy) = (rng.random::<f32>() * w as f32, rng.random::<f32>() * h as f32);
        let (rx, ry) = (
            rng.random_range(0.08..0.3) * w as f32,
            rng.random_range(0.08..0.3) * h as f32,
        );
        let ellipse = rng.random_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = ((x as f32 - cx) / rx, (y as f32 - cy) / ry);
                let inside = if ellipse {
                    dx * dx + dy * dy <= 1.0
                } else {
                    dx.abs() <= 1.0 && dy.abs() <= 1.0
                };
                if inside {
                    img.set_pixel(x, y, color);
                }
            }
        }
    }
    let (fx, fy, phase) = (
        rng.random_range(0.2..0.8),
        rng.random_range(0.2..0.8),
        rng.random_range(0.0..std::f32::consts::TAU),
    );
    let (lo, hi) = range;
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let texture = 0.06 * (fx * x as f32 + fy * y as f32 + phase).sin();
            let px = img.pixel(x, y).map(|v| lo + (hi - lo) * (v + texture).clamp(0.0, 1.0));
            out.set_pixel(x, y, px);
        }
    }
    out
}
