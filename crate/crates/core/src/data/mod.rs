//! Paired images, color conversion, synthetic degradation, loading and
//! batching.

pub mod color;
mod image;
pub mod synth;

pub use self::image::{images_to_tensor, planes_to_tensor, tensor_to_images, tensor_to_planes, Image, Plane};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::color::luma;
use crate::error::{Error, Result};
use crate::nn::rng;
use crate::tensor::{Float, Tensor};

/// An (input, ground truth) pair with its ground-truth exposure mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: String,
    pub input: Image,
    pub gt: Image,
    /// 1 where the input is brighter than the ground truth.
    pub gt_mask: Plane,
}

impl PairedSample {
    /// Panics if the images differ in size; use [`PairedSample::try_new`]
    /// for unchecked inputs.
    pub fn new(id: impl Into<String>, input: Image, gt: Image) -> Self {
        Self::try_new(id, input, gt).expect("input and gt sizes match")
    }

    pub fn try_new(id: impl Into<String>, input: Image, gt: Image) -> Result<Self> {
        let gt_mask = gt_mask(&input, &gt)?;
        Ok(Self {
            id: id.into(),
            input,
            gt,
            gt_mask,
        })
    }

    pub fn width(&self) -> usize {
        self.input.width()
    }

    pub fn height(&self) -> usize {
        self.input.height()
    }

    pub fn flip_horizontal(&self) -> Self {
        Self {
            id: self.id.clone(),
            input: self.input.flip_horizontal(),
            gt: self.gt.flip_horizontal(),
            gt_mask: self.gt_mask.flip_horizontal(),
        }
    }

    pub fn flip_vertical(&self) -> Self {
        Self {
            id: self.id.clone(),
            input: self.input.flip_vertical(),
            gt: self.gt.flip_vertical(),
            gt_mask: self.gt_mask.flip_vertical(),
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(Self {
            id: self.id.clone(),
            input: self.input.crop(x0, y0, w, h)?,
            gt: self.gt.crop(x0, y0, w, h)?,
            gt_mask: self.gt_mask.crop(x0, y0, w, h)?,
        })
    }
}

/// Per-pixel `Y(input) > Y(gt)` as 0/1.
pub fn gt_mask(input: &Image, gt: &Image) -> Result<Plane> {
    if (input.width(), input.height()) != (gt.width(), gt.height()) {
        return Err(Error::Shape(format!(
            "input is {}x{}, gt is {}x{}",
            input.width(),
            input.height(),
            gt.width(),
            gt.height()
        )));
    }
    let data = input
        .pixels()
        .zip(gt.pixels())
        .map(|([r, g, b], [gr, gg, gb])| {
            if luma(r, g, b) - luma(gr, gg, gb) > 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Plane::new(input.width(), input.height(), data)
}

/// Applies the same random horizontal and vertical flips to the input,
/// ground truth and mask.
pub fn augment(sample: &PairedSample, seed: u64) -> PairedSample {
    augment_with(sample, &mut rng(seed))
}

pub fn augment_with(sample: &PairedSample, rng: &mut ChaCha8Rng) -> PairedSample {
    let (h, v) = (rng.random_bool(0.5), rng.random_bool(0.5));
    let mut out = sample.clone();
    if h {
        out = out.flip_horizontal();
    }
    if v {
        out = out.flip_vertical();
    }
    out
}

/// An immutable, name-ordered collection of pairs.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    samples: Vec<PairedSample>,
    skipped: Vec<(String, String)>,
}

impl Dataset {
    pub fn new(samples: Vec<PairedSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        Ok(Self {
            samples,
            skipped: Vec::new(),
        })
    }

    pub fn samples(&self) -> &[PairedSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Names that were not loaded, with the reason.
    pub fn skipped(&self) -> &[(String, String)] {
        &self.skipped
    }

    pub fn min_side(&self) -> usize {
        self.samples
            .iter()
            .map(|s| s.width().min(s.height()))
            .min()
            .unwrap_or(0)
    }
}

const IMAGE_EXTENSIONS: [&str; 1] = ["png"];

/// Image file names (not paths) in `dir`, sorted.
pub fn list_images(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("reading {}", dir.display()), e))?;
        let path = entry.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.insert(name.to_string());
            }
        }
    }
    Ok(names)
}

/// Pairs same-named images from the two directories. Orphans, unreadable
/// files and size mismatches are skipped with a warning.
pub fn load_paired_dir(input_dir: &Path, gt_dir: &Path) -> Result<Dataset> {
    let inputs = list_images(input_dir)?;
    let gts = list_images(gt_dir)?;
    let mut skipped = Vec::new();
    for name in inputs.symmetric_difference(&gts) {
        let reason = if inputs.contains(name) {
            "no ground truth"
        } else {
            "no input"
        };
        warn!("skipping {name}: {reason}");
        skipped.push((name.clone(), reason.to_string()));
    }
    let common: Vec<&String> = inputs.intersection(&gts).collect();
    if common.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no file names in common between {} and {}",
            input_dir.display(),
            gt_dir.display()
        )));
    }
    let mut samples = Vec::with_capacity(common.len());
    for name in common {
        let loaded = Image::load(&input_dir.join(name))
            .and_then(|input| Ok((input, Image::load(&gt_dir.join(name))?)))
            .and_then(|(input, gt)| PairedSample::try_new(stem(name), input, gt));
        match loaded {
            Ok(s) => samples.push(s),
            Err(e) => {
                warn!("skipping {name}: {e}");
                skipped.push((name.clone(), e.to_string()));
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "none of the paired files in {} could be loaded",
            input_dir.display()
        )));
    }
    Ok(Dataset { samples, skipped })
}

fn stem(name: &str) -> String {
    Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name)
        .to_string()
}

/// Writes a sample as `<dir>/input/<id>.png`, `<dir>/gt/<id>.png` and
/// `<dir>/mask/<id>.png`; returns the input path.
pub fn save_sample(dir: &Path, sample: &PairedSample) -> Result<PathBuf> {
    let file = format!("{}.png", sample.id);
    for sub in ["input", "gt", "mask"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(format!("creating {}", d.display()), e))?;
    }
    let input = dir.join("input").join(&file);
    sample.input.save(&input)?;
    sample.gt.save(&dir.join("gt").join(&file))?;
    sample.gt_mask.save(&dir.join("mask").join(&file))?;
    Ok(input)
}

/// Batch tensors in `(B, C, H, W)` order.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub input: Tensor<T>,
    pub gt: Tensor<T>,
    pub gt_mask: Tensor<T>,
    pub ids: Vec<String>,
}

impl<T: Float> Batch<T> {
    /// Stacks equally sized samples without cropping.
    pub fn from_samples(samples: &[PairedSample]) -> Result<Self> {
        let inputs: Vec<Image> = samples.iter().map(|s| s.input.clone()).collect();
        let gts: Vec<Image> = samples.iter().map(|s| s.gt.clone()).collect();
        let masks: Vec<Plane> = samples.iter().map(|s| s.gt_mask.clone()).collect();
        Ok(Self {
            input: images_to_tensor(&inputs)?,
            gt: images_to_tensor(&gts)?,
            gt_mask: planes_to_tensor(&masks)?,
            ids: samples.iter().map(|s| s.id.clone()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Draws `batch` samples with replacement, takes one aligned random
/// `crop x crop` window from each and optionally flips it.
pub fn random_crop_batch<T: Float>(
    dataset: &Dataset,
    crop: usize,
    batch: usize,
    flips: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Batch<T>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    if crop == 0 || crop > dataset.min_side() {
        return Err(Error::InvalidArgument(format!(
            "crop {crop} does not fit the smallest image side {}",
            dataset.min_side()
        )));
    }
    let mut picked = Vec::with_capacity(batch);
    for _ in 0..batch {
        let s = &dataset.samples[rng.random_range(0..dataset.len())];
        let x0 = rng.random_range(0..=s.width() - crop);
        let y0 = rng.random_range(0..=s.height() - crop);
        let c = s.crop(x0, y0, crop, crop)?;
        picked.push(if flips { augment_with(&c, rng) } else { c });
    }
    Batch::from_samples(&picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: usize, h: usize) -> PairedSample {
        let gt = Image::from_fn(w, h, |x, y| [(x as f32) / w as f32, (y as f32) / h as f32, 0.5]);
        let input = Image::from_fn(w, h, |x, y| {
            let g = if (x + y) % 3 == 0 { 1.3 } else { 0.6 };
            gt.pixel(x, y).map(|v| (v * g).min(1.0))
        });
        PairedSample::new("s", input, gt)
    }

    #[test]
    fn flips_keep_mask_consistent() {
        let s = sample(9, 6);
        for f in [s.flip_horizontal(), s.flip_vertical()] {
            assert_eq!(gt_mask(&f.input, &f.gt).unwrap(), f.gt_mask);
        }
    }

    #[test]
    fn augment_is_seeded() {
        let s = sample(9, 6);
        assert_eq!(augment(&s, 3), augment(&s, 3));
    }

    #[test]
    fn crop_batch_shapes_and_errors() {
        let ds = Dataset::new(vec![sample(20, 16), sample(20, 16)]).unwrap();
        let b: Batch<f32> = random_crop_batch(&ds, 8, 3, true, &mut rng(0)).unwrap();
        assert_eq!(b.input.shape(), &[3, 3, 8, 8]);
        assert_eq!(b.gt_mask.shape(), &[3, 1, 8, 8]);
        assert!(random_crop_batch::<f32>(&ds, 17, 1, false, &mut rng(0)).is_err());
        let full: Batch<f32> = random_crop_batch(&ds, 16, 1, false, &mut rng(0)).unwrap();
        assert_eq!(full.input.shape(), &[1, 3, 16, 16]);
    }
}
