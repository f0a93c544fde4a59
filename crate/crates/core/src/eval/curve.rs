//! Brightness mapping: how the luma of one image maps to the luma of
//! another, summarized per input-luma bin.

use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::data::Image;
use crate::error::{Error, Result};

pub const CURVE_BINS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveBin {
    pub center: f64,
    pub count: usize,
    /// Median luma of the pixels that fell in this bin (the point on the
    /// identity diagonal).
    pub input_median: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingCurve {
    pub bins: Vec<CurveBin>,
    /// `sum |median - input_median| / bins` over non-empty bins.
    pub area: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bins the luma of every `a` pixel and collects the luma of the aligned
/// `b` pixel. Empty bins are gaps.
pub fn brightness_mapping_curve(pairs: &[(&Image, &Image)]) -> Result<MappingCurve> {
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); CURVE_BINS];
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); CURVE_BINS];
    for (a, b) in pairs {
        if (a.width(), a.height()) != (b.width(), b.height()) {
            return Err(Error::Shape(format!(
                "curve pair sizes differ: {}x{} vs {}x{}",
                a.width(),
                a.height(),
                b.width(),
                b.height()
            )));
        }
        for (&x, &y) in a.luma().data().iter().zip(b.luma().data()) {
            let x = (x as f64).clamp(0.0, 1.0);
            let bin = ((x * CURVE_BINS as f64) as usize).min(CURVE_BINS - 1);
            xs[bin].push(x);
            ys[bin].push(y as f64);
        }
    }
    let width = 1.0 / CURVE_BINS as f64;
    let mut area = 0.0;
    let bins = xs
        .iter_mut()
        .zip(ys.iter_mut())
        .enumerate()
        .map(|(i, (x, y))| {
            let center = (i as f64 + 0.5) * width;
            if x.is_empty() {
                return CurveBin {
                    center,
                    count: 0,
                    input_median: None,
                    median: None,
                    q1: None,
                    q3: None,
                };
            }
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            let (xm, ym) = (quantile(x, 0.5), quantile(y, 0.5));
            area += (ym - xm).abs() * width;
            CurveBin {
                center,
                count: x.len(),
                input_median: Some(xm),
                median: Some(ym),
                q1: Some(quantile(y, 0.25)),
                q3: Some(quantile(y, 0.75)),
            }
        })
        .collect();
    Ok(MappingCurve { bins, area })
}

impl MappingCurve {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
        let mut s = String::from("bin,center,count,input_median,median,q1,q3\n");
        for (i, b) in self.bins.iter().enumerate() {
            let _ = writeln!(
                s,
                "{i},{:.6},{},{},{},{},{}",
                b.center,
                b.count,
                opt(b.input_median),
                opt(b.median),
                opt(b.q1),
                opt(b.q3)
            );
        }
        s
    }

    /// Square plot: identity diagonal in gray, interquartile band in light
    /// blue, median in dark blue. Extra curves are drawn in orange.
    pub fn render(&self, others: &[&MappingCurve]) -> RgbImage {
        const SIZE: u32 = 320;
        const MARGIN: u32 = 16;
        let plot = SIZE - 2 * MARGIN;
        let mut img = RgbImage::from_pixel(SIZE, SIZE, Rgb([255, 255, 255]));
        let to_px = |x: f64, y: f64| -> (i64, i64) {
            (
                (MARGIN as f64 + x.clamp(0.0, 1.0) * plot as f64).round() as i64,
                (MARGIN as f64 + (1.0 - y.clamp(0.0, 1.0)) * plot as f64).round() as i64,
            )
        };
        let axes = Rgb([0, 0, 0]);
        line(&mut img, to_px(0.0, 0.0), to_px(1.0, 0.0), axes);
        line(&mut img, to_px(0.0, 0.0), to_px(0.0, 1.0), axes);
        line(&mut img, to_px(0.0, 0.0), to_px(1.0, 1.0), Rgb([170, 170, 170]));
        let half = 0.5 / CURVE_BINS as f64;
        for b in &self.bins {
            if let (Some(q1), Some(q3)) = (b.q1, b.q3) {
                let (x0, y1) = to_px(b.center - half, q3);
                let (x1, y0) = to_px(b.center + half, q1);
                for x in x0..=x1 {
                    for y in y1..=y0 {
                        put(&mut img, x, y, Rgb([190, 215, 245]));
                    }
                }
            }
        }
        let draw = |img: &mut RgbImage, c: &MappingCurve, color: Rgb<u8>| {
            let mut prev = None;
            for b in &c.bins {
                match (b.input_median, b.median) {
                    (Some(x), Some(y)) => {
                        let p = to_px(x, y);
                        if let Some(q) = prev {
                            line(img, q, p, color);
                        }
                        put(img, p.0, p.1, color);
                        prev = Some(p);
                    }
                    _ => prev = None,
                }
            }
        };
        for o in others {
            draw(&mut img, o, Rgb([230, 120, 20]));
        }
        draw(&mut img, self, Rgb([20, 60, 160]));
        img
    }

    pub fn save_png(&self, path: &Path, others: &[&MappingCurve]) -> Result<()> {
        self.render(others).save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}
