use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;

use crate::data::{load_paired_dir, Image, Plane};
use crate::error::{Error, Result};
use crate::eval::curve::{brightness_mapping_curve, MappingCurve};
use crate::eval::metrics::{psnr, psnr_slices, ssim};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMetrics {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    /// PSNR over the pixels whose input was brighter / not brighter than
    /// the ground truth, when the input is known and the region is
    /// non-empty.
    pub psnr_over: Option<f64>,
    pub psnr_under: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
    pub curve: MappingCurve,
    /// Curve of the original inputs against the ground truth.
    pub input_curve: Option<MappingCurve>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricReport {
    pub fn mean_psnr(&self) -> f64 {
        mean(self.images.iter().map(|m| m.psnr)).unwrap_or(f64::NAN)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.images.iter().map(|m| m.ssim)).unwrap_or(f64::NAN)
    }

    pub fn mean_psnr_over(&self) -> Option<f64> {
        mean(self.images.iter().filter_map(|m| m.psnr_over))
    }

    pub fn mean_psnr_under(&self) -> Option<f64> {
        mean(self.images.iter().filter_map(|m| m.psnr_under))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,psnr,ssim\n");
        for m in &self.images {
            let _ = writeln!(s, "{},{:.6},{:.6}", m.name, m.psnr, m.ssim);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "images = {}", self.images.len());
        let _ = writeln!(s, "mean_psnr = {:.4}", self.mean_psnr());
        let _ = writeln!(s, "mean_ssim = {:.6}", self.mean_ssim());
        if let Some(v) = self.mean_psnr_over() {
            let _ = writeln!(s, "mean_psnr_overexposed = {v:.4}");
        }
        if let Some(v) = self.mean_psnr_under() {
            let _ = writeln!(s, "mean_psnr_underexposed = {v:.4}");
        }
        let _ = writeln!(s, "curve_area = {:.6}", self.curve.area);
        if let Some(c) = &self.input_curve {
            let _ = writeln!(s, "input_curve_area = {:.6}", c.area);
        }
        s
    }

    /// Writes `report.csv`, `summary.txt`, `curve.csv` and `curve.png`
    /// (plus `input_curve.csv` when the inputs were given).
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))
        };
        write("report.csv", self.to_csv())?;
        write("summary.txt", self.summary())?;
        write("curve.csv", self.curve.to_csv())?;
        let others: Vec<&MappingCurve> = self.input_curve.iter().collect();
        self.curve.save_png(&dir.join("curve.png"), &others)?;
        if let Some(c) = &self.input_curve {
            write("input_curve.csv", c.to_csv())?;
        }
        Ok(())
    }
}

/// PSNR over the pixels where `mask == select`; `None` if there are none.
pub fn masked_psnr(a: &Image, b: &Image, mask: &Plane, select: f32) -> Option<f64> {
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for (p, &m) in mask.data().iter().enumerate() {
        if m == select {
            xa.extend_from_slice(&a.data()[3 * p..3 * p + 3]);
            xb.extend_from_slice(&b.data()[3 * p..3 * p + 3]);
        }
    }
    (!xa.is_empty()).then(|| psnr_slices(&xa, &xb))
}

/// Scores same-named predictions against ground truth. With `input_dir`
/// the report also covers per-region PSNR and the input curve.
pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, input_dir: Option<&Path>) -> Result<MetricReport> {
    let pairs = load_paired_dir(pred_dir, gt_dir)?;
    let mut images = Vec::with_capacity(pairs.len());
    let mut inputs = Vec::new();
    for s in pairs.samples() {
        let input = match input_dir {
            Some(dir) => match Image::load(&dir.join(format!("{}.png", s.id))) {
                Ok(img) if (img.width(), img.height()) == (s.gt.width(), s.gt.height()) => Some(img),
                Ok(_) => {
                    warn!("input for {} has a different size; skipping its region metrics", s.id);
                    None
                }
                Err(e) => {
                    warn!("no input for {}: {e}", s.id);
                    None
                }
            },
            None => None,
        };
        let (psnr_over, psnr_under) = match &input {
            Some(inp) => {
                let mask = crate::data::gt_mask(inp, &s.gt)?;
                (
                    masked_psnr(&s.input, &s.gt, &mask, 1.0),
                    masked_psnr(&s.input, &s.gt, &mask, 0.0),
                )
            }
            None => (None, None),
        };
        images.push(ImageMetrics {
            name: s.id.clone(),
            psnr: psnr(&s.input, &s.gt)?,
            ssim: ssim(&s.input, &s.gt)?,
            psnr_over,
            psnr_under,
        });
        if let Some(inp) = input {
            inputs.push((inp, s.gt.clone()));
        }
    }
    let curve_pairs: Vec<(&Image, &Image)> = pairs.samples().iter().map(|s| (&s.input, &s.gt)).collect();
    let curve = brightness_mapping_curve(&curve_pairs)?;
    let input_curve = if inputs.is_empty() {
        None
    } else {
        let p: Vec<(&Image, &Image)> = inputs.iter().map(|(a, b)| (a, b)).collect();
        Some(brightness_mapping_curve(&p)?)
    };
    Ok(MetricReport {
        images,
        curve,
        input_curve,
    })
}
