//! Deterministic image pairs with reference SSIM values.

use recnet::data::Image;

/// Stateless 64-bit mixer, reproduced by the script that generated the
/// SSIM fixtures below.
pub fn uniform(seed: u64, n: usize) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let mut h = i.wrapping_add(seed).wrapping_mul(0x9E3779B97F4A7C15);
            h ^= h >> 29;
            h = h.wrapping_mul(0xBF58476D1CE4E5B9);
            h ^= h >> 32;
            (h >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

pub const W: usize = 32;
pub const H: usize = 24;

pub fn image(values: impl Iterator<Item = f64>) -> Image {
    Image::new(W, H, values.map(|v| v as f32).collect()).unwrap()
}

/// Pair `k`: `a` uniform noise, `b = (1 - t) a + t u'` with `t = 0.15 (k + 1)`.
pub fn fixture_pair(k: u64) -> (Image, Image) {
    let n = W * H * 3;
    let ua = uniform((2 * k + 1) << 40, n);
    let ub = uniform((2 * k + 2) << 40, n);
    let a: Vec<f32> = ua.iter().map(|&v| v as f32).collect();
    let t = 0.15 * (k + 1) as f64;
    let b = image(a.iter().zip(&ub).map(|(&x, &y)| (1.0 - t) * x as f64 + t * y));
    (Image::new(W, H, a).unwrap(), b)
}

/// scikit-image 0.25 `structural_similarity(luma_a, luma_b,
/// gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
/// data_range=1.0)` on the fixture pairs, luma computed in double
/// precision with BT.601 weights.
pub const SKIMAGE_SSIM: [f64; 5] = [
    0.9742967993545937,
    0.895188101526379,
    0.7075825863687355,
    0.5331934239188519,
    0.2942842168778694,
];
