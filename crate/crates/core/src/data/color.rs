//! BT.601 full-range YCbCr.

use crate::data::image::Image;
use crate::tensor::Float;

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[inline]
pub fn luma<T: Float>(r: T, g: T, b: T) -> T {
    T::from_f64(LUMA_WEIGHTS[0]) * r + T::from_f64(LUMA_WEIGHTS[1]) * g + T::from_f64(LUMA_WEIGHTS[2]) * b
}

/// `[Y, Cb, Cr]` with the chroma channels offset by 0.5.
pub fn ycbcr_pixel(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    [
        luma(r, g, b),
        0.5 - 0.168_736 * r - 0.331_264 * g + 0.5 * b,
        0.5 + 0.5 * r - 0.418_688 * g - 0.081_312 * b,
    ]
}

/// Converts every pixel; the result stores Y, Cb, Cr in the three channels.
pub fn rgb_to_ycbcr(img: &Image) -> Image {
    let data = img
        .pixels()
        .flat_map(|p| ycbcr_pixel(p.map(f64::from)).map(|v| v as f32))
        .collect();
    Image::new(img.width(), img.height(), data).expect("same size")
}
