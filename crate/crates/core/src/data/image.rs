use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::data::color::luma;
use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Interleaved RGB image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// Single-channel image (masks, luma).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    pub fn luma(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.pixels().map(|[r, g, b]| luma(r, g, b)).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        flip(&self.data, self.width, self.height, 3, true, |width, height, data| {
            Self { width, height, data }
        })
    }

    pub fn flip_vertical(&self) -> Self {
        flip(&self.data, self.width, self.height, 3, false, |width, height, data| {
            Self { width, height, data }
        })
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        let data = crop(&self.data, self.width, self.height, 3, x0, y0, w, h)?;
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Decodes any supported file to RGB in `[0, 1]`.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.into_rgb32f();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }

    /// Writes an 8-bit PNG; values are clamped and rounded.
    pub fn save(&self, path: &Path) -> Result<()> {
        let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().map(|&v| to_u8(v)).collect(),
        )
        .expect("buffer size matches dimensions");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// `(1, 3, H, W)` tensor.
    pub fn to_tensor<T: Float>(&self) -> Tensor<T> {
        images_to_tensor(std::slice::from_ref(self)).expect("single image")
    }
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} plane needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    pub fn flip_horizontal(&self) -> Self {
        flip(&self.data, self.width, self.height, 1, true, |width, height, data| {
            Self { width, height, data }
        })
    }

    pub fn flip_vertical(&self) -> Self {
        flip(&self.data, self.width, self.height, 1, false, |width, height, data| {
            Self { width, height, data }
        })
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        let data = crop(&self.data, self.width, self.height, 1, x0, y0, w, h)?;
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.to_luma32f();
        let (w, h) = gray.dimensions();
        Self::new(w as usize, h as usize, gray.into_raw())
    }

    /// Writes an 8-bit grayscale PNG.
    pub fn save(&self, path: &Path) -> Result<()> {
        let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().map(|&v| to_u8(v)).collect(),
        )
        .expect("buffer size matches dimensions");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn flip<I>(
    data: &[f32],
    w: usize,
    h: usize,
    c: usize,
    horizontal: bool,
    build: impl Fn(usize, usize, Vec<f32>) -> I,
) -> I {
    let mut out = Vec::with_capacity(data.len());
    for y in 0..h {
        let sy = if horizontal { y } else { h - 1 - y };
        for x in 0..w {
            let sx = if horizontal { w - 1 - x } else { x };
            let i = (sy * w + sx) * c;
            out.extend_from_slice(&data[i..i + c]);
        }
    }
    build(w, h, out)
}

#[allow(clippy::too_many_arguments)]
fn crop(data: &[f32], w: usize, h: usize, c: usize, x0: usize, y0: usize, cw: usize, ch: usize) -> Result<Vec<f32>> {
    if x0 + cw > w || y0 + ch > h {
        return Err(Error::InvalidArgument(format!(
            "crop {cw}x{ch} at ({x0}, {y0}) exceeds {w}x{h} image"
        )));
    }
    let mut out = Vec::with_capacity(cw * ch * c);
    for y in y0..y0 + ch {
        out.extend_from_slice(&data[(y * w + x0) * c..(y * w + x0 + cw) * c]);
    }
    Ok(out)
}

fn check_same_size(sizes: impl Iterator<Item = (usize, usize)>) -> Result<(usize, usize, usize)> {
    let mut n = 0;
    let mut dims = None;
    for d in sizes {
        n += 1;
        match dims {
            None => dims = Some(d),
            Some(first) if first != d => {
                return Err(Error::Shape(format!(
                    "batch mixes {}x{} and {}x{} images",
                    first.0, first.1, d.0, d.1
                )))
            }
            _ => {}
        }
    }
    let (w, h) = dims.ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    Ok((n, w, h))
}

/// Stacks equally sized images into a `(B, 3, H, W)` tensor.
pub fn images_to_tensor<T: Float>(images: &[Image]) -> Result<Tensor<T>> {
    let (b, w, h) = check_same_size(images.iter().map(|i| (i.width, i.height)))?;
    let hw = w * h;
    let mut out = vec![T::zero(); b * 3 * hw];
    for (bi, img) in images.iter().enumerate() {
        let base = bi * 3 * hw;
        for (p, px) in img.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[base + c * hw + p] = T::from_f64(px[c] as f64);
            }
        }
    }
    Tensor::new(&[b, 3, h, w], out)
}

/// Splits a `(B, 3, H, W)` tensor into images.
pub fn tensor_to_images<T: Float>(t: &Tensor<T>) -> Result<Vec<Image>> {
    let (b, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {c}")));
    }
    let hw = h * w;
    Ok((0..b)
        .map(|bi| {
            let src = &t.data()[bi * 3 * hw..(bi + 1) * 3 * hw];
            let mut data = Vec::with_capacity(3 * hw);
            for p in 0..hw {
                for ch in 0..3 {
                    data.push(src[ch * hw + p].to_f64() as f32);
                }
            }
            Image {
                width: w,
                height: h,
                data,
            }
        })
        .collect())
}

/// Stacks equally sized planes into a `(B, 1, H, W)` tensor.
pub fn planes_to_tensor<T: Float>(planes: &[Plane]) -> Result<Tensor<T>> {
    let (b, w, h) = check_same_size(planes.iter().map(|p| (p.width, p.height)))?;
    let data = planes
        .iter()
        .flat_map(|p| p.data.iter().map(|&v| T::from_f64(v as f64)))
        .collect();
    Tensor::new(&[b, 1, h, w], data)
}

/// Splits a `(B, 1, H, W)` tensor into planes.
pub fn tensor_to_planes<T: Float>(t: &Tensor<T>) -> Result<Vec<Plane>> {
    let (b, c, h, w) = t.dims4()?;
    if c != 1 {
        return Err(Error::Shape(format!("expected 1 channel, got {c}")));
    }
    Ok(t.data()
        .chunks_exact(h * w)
        .take(b)
        .map(|chunk| Plane {
            width: w,
            height: h,
            data: chunk.iter().map(|v| v.to_f64() as f32).collect(),
        })
        .collect())
}
