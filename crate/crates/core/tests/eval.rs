use recnet::data::{Image, Plane};
use recnet::eval::{
    brightness_mapping_curve, evaluate_dirs, masked_psnr, psnr, ssim, visualize_masks, CURVE_BINS, PSNR_CAP,
};
use recnet::losses::MaskPolarity;
use recnet::model::{ModelConfig, Recnet};

mod common;

use common::fixtures::*;

#[test]
fn ssim_matches_reference_implementation() {
    for (k, &expected) in SKIMAGE_SSIM.iter().enumerate() {
        let (a, b) = fixture_pair(k as u64);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-4, "pair {k}: {got} vs {expected}");
    }
}

#[test]
fn ssim_identity_symmetry_and_inversion() {
    let (a, b) = fixture_pair(2);
    assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);

    let mid = image(uniform(99 << 40, W * H * 3).into_iter().map(|v| 0.3 + 0.4 * v));
    let inv = mid.map(|v| 1.0 - v);
    let s = ssim(&mid, &inv).unwrap();
    // scikit-image gives -0.8591739403005 on this pair
    assert!((s - -0.8591739403005).abs() < 1e-4, "{s}");
    assert!(s < 0.5);
}

#[test]
fn ssim_rejects_small_images() {
    let a = Image::filled(10, 30, [0.5; 3]);
    assert!(ssim(&a, &a).is_err());
}

#[test]
fn psnr_cases() {
    let (a, b) = fixture_pair(1);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);

    let base = Image::filled(W, H, [0.25, 0.5, 0.6]);
    let up = base.map(|v| v + 0.1);
    assert!((psnr(&base, &up).unwrap() - 20.0).abs() < 1e-5);

    let mut acc = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = *x as f64 - *y as f64;
        acc += d * d;
    }
    let expected = 10.0 * (1.0 / (acc / a.data().len() as f64)).log10();
    assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-9);

    assert!(psnr(&a, &Image::filled(W + 1, H, [0.0; 3])).is_err());
}

#[test]
fn masked_psnr_selects_pixels() {
    let a = Image::filled(4, 2, [0.5; 3]);
    let mut b = a.clone();
    b.set_pixel(0, 0, [0.6; 3]);
    let mask = Plane::new(4, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((masked_psnr(&a, &b, &mask, 1.0).unwrap() - 20.0).abs() < 1e-5);
    assert_eq!(masked_psnr(&a, &b, &mask, 0.0).unwrap(), PSNR_CAP);
    let ones = Plane::filled(4, 2, 1.0);
    assert!(masked_psnr(&a, &b, &ones, 0.0).is_none());
}

/// Gray ramp covering `[0, 1]` densely and uniformly.
fn gray_ramp() -> Image {
    let (w, h) = (256, 40);
    Image::from_fn(w, h, |x, y| {
        let v = (y * w + x) as f32 / (w * h - 1) as f32;
        [v, v, v]
    })
}

#[test]
fn curve_of_identical_pairs_is_the_identity() {
    let a = gray_ramp();
    let c = brightness_mapping_curve(&[(&a, &a)]).unwrap();
    assert_eq!(c.bins.len(), CURVE_BINS);
    assert_eq!(c.area, 0.0);
    for bin in &c.bins {
        assert_eq!(bin.median, bin.input_median);
    }
}

#[test]
fn curve_of_shifted_pairs() {
    let a = gray_ramp();
    let b = a.map(|v| (v + 0.2).min(1.0));
    let c = brightness_mapping_curve(&[(&a, &b)]).unwrap();
    // oracle: per bin, clamp(m + 0.2) - m at the bin's median input luma
    let mut expected = 0.0;
    for bin in &c.bins {
        let m = bin.input_median.unwrap();
        expected += (m + 0.2).min(1.0) - m;
        assert!((bin.median.unwrap() - (m + 0.2).min(1.0)).abs() < 1e-5);
    }
    expected /= CURVE_BINS as f64;
    assert!((c.area - expected).abs() < 1e-5, "{} vs {expected}", c.area);
    // continuous limit: 0.2 * 0.8 + 0.2^2 / 2
    assert!((c.area - 0.18).abs() < 2e-3);
}

#[test]
fn curve_empty_bins_are_gaps() {
    let a = Image::filled(16, 16, [0.5; 3]);
    let c = brightness_mapping_curve(&[(&a, &a)]).unwrap();
    let filled: Vec<_> = c.bins.iter().filter(|b| b.count > 0).collect();
    assert_eq!(filled.len(), 1);
    assert!(c.bins.iter().filter(|b| b.count == 0).all(|b| b.median.is_none()));
    let csv = c.to_csv();
    assert_eq!(csv.lines().count(), CURVE_BINS + 1);
    let img = c.render(&[]);
    assert!(img.width() > 0 && img.height() > 0);
}

#[test]
fn mask_grid_has_one_row_of_block_columns() {
    let cfg = ModelConfig::new(3, 8, 2).unwrap();
    let model = Recnet::<f32>::new(cfg, 0).unwrap();
    let (a, b) = fixture_pair(0);
    let grid = visualize_masks(&model, &a, Some(&b), MaskPolarity::Underexposed).unwrap();
    assert_eq!((grid.width(), grid.height()), ((2 + 3) * W, H));
    assert!(grid.in_unit_range());
    let no_gt = visualize_masks(&model, &a, None, MaskPolarity::Underexposed).unwrap();
    assert_eq!(no_gt.width(), 5 * W);

    // untrained masks are mid-gray
    for col in 1..4 {
        let mut sum = 0.0;
        for y in 0..H {
            for x in 0..W {
                sum += grid.pixel(col * W + x, y)[0] as f64;
            }
        }
        let mean = sum / (W * H) as f64;
        assert!((0.4..=0.6).contains(&mean), "column {col}: {mean}");
    }

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("grid.png");
    grid.save(&path).unwrap();
    let back = image::open(&path).unwrap();
    assert_eq!(back.color(), image::ColorType::Rgb8);
}

#[test]
fn evaluate_identical_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("imgs");
    std::fs::create_dir_all(&dir).unwrap();
    for k in 0..3 {
        fixture_pair(k).0.save(&dir.join(format!("im{k}.png"))).unwrap();
    }
    let report = evaluate_dirs(&dir, &dir, Some(&dir)).unwrap();
    assert_eq!(report.images.len(), 3);
    assert_eq!(report.mean_psnr(), PSNR_CAP);
    assert_eq!(report.mean_ssim(), 1.0);
    assert_eq!(report.curve.area, 0.0);

    let out = tmp.path().join("report");
    report.write(&out).unwrap();
    for f in ["report.csv", "summary.txt", "curve.csv", "curve.png", "input_curve.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("name,psnr,ssim"));
}
