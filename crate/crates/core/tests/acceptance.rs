//! Acceptance run: prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Built without the libtest harness so the lines
//! always reach the console.

mod common;

use std::time::{Duration, Instant};

use common::fixtures::{fixture_pair, SKIMAGE_SSIM};
use common::*;
use recnet::data::synth::{procedural_scene, synthesize_pair, DegradationSpec, SampleRanges};
use recnet::data::{images_to_tensor, tensor_to_images, Batch, Image, Plane};
use recnet::eval::{brightness_mapping_curve, psnr, ssim};
use recnet::losses::{
    bce_mask_loss, compute_gt_mask, cosine_color_loss, ecr_loss, mse_loss, style_correlation, LossWeights,
    MaskPolarity, PerceptualLayer, Vgg16Features, BCE_EPS,
};
use recnet::model::{channel_attention, split_regions, ModelConfig, Recnet, IN_EPS};
use recnet::nn::{randn, rng};
use recnet::training::{
    load_checkpoint, overfit_sanity, sanity_pairs, save_checkpoint, Adam, Objective, SanityConfig, SanityReport,
    Trainer,
};
use recnet::{Tape, Tensor};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

// 1 -------------------------------------------------------------------

fn invariants() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();

    // mask complementarity: (1 - m) + m == 1 exactly
    let tape = Tape::<f32>::no_grad();
    for seed in 0..20 {
        let m = tape.constant(rand_image(&[1, 1, 32, 32], 0.0, 1.0, seed).cast());
        let sum = tape.add(&tape.rsub_scalar(1.0, &m), &m).unwrap();
        if !sum.value().data().iter().all(|&v| v == 1.0) {
            failures.push(format!("complement seed {seed}"));
        }
    }

    // region reconstruction within 4 ulp
    let mut worst_ulp = 0i64;
    for seed in 0..20 {
        let f = tape.constant(randn::<f32>(&[1, 8, 16, 16], 1.0, seed));
        let m = tape.constant(rand_image(&[1, 1, 16, 16], 0.0, 1.0, seed + 100).cast());
        let (fo, fu) = split_regions(&tape, &f, &m).unwrap();
        let back = tape.add(&fo, &fu).unwrap();
        for (a, b) in back.value().data().iter().zip(f.value().data()) {
            let ulp = (a.to_bits() as i32 as i64 - b.to_bits() as i32 as i64).abs();
            worst_ulp = worst_ulp.max(if a == b { 0 } else { ulp });
        }
    }
    if worst_ulp > 4 {
        failures.push(format!("reconstruction {worst_ulp} ulp"));
    }

    // instance normalization statistics
    let t64 = Tape::<f64>::no_grad();
    let x = t64.constant(randn::<f64>(&[2, 8, 16, 16], 1.0, 5).map(|v| 2.0 * v - 0.7));
    let y = t64.instance_norm(&x, IN_EPS).unwrap();
    let (mut worst_mu, mut worst_var) = (0f64, 0f64);
    for plane in y.value().data().chunks(256) {
        let mu = plane.iter().sum::<f64>() / 256.0;
        let var = plane.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 256.0;
        worst_mu = worst_mu.max(mu.abs());
        worst_var = worst_var.max((var - 1.0).abs());
    }
    if worst_mu >= 1e-5 || worst_var >= 1e-4 {
        failures.push(format!("IN |mu| {worst_mu:.1e} |var-1| {worst_var:.1e}"));
    }

    // attention rows sum to one
    let q = t64.constant(randn(&[2, 16, 8, 8], 1.0, 1));
    let k = t64.constant(randn(&[2, 16, 8, 8], 1.0, 2));
    let (_, attn) = channel_attention(&t64, &q, &k, &k, 4, 2.0).unwrap();
    let worst_row = attn
        .value()
        .data()
        .chunks(4)
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    if worst_row > 1e-6 {
        failures.push(format!("attention row sum off by {worst_row:.1e}"));
    }

    // every loss term is finite and nonnegative, including saturated inputs
    let e = Vgg16Features::<f64>::seeded(PerceptualLayer::Relu3_3, 0, 16);
    let cases = [
        (
            rand_image(&[1, 3, 16, 16], 0.0, 1.0, 1),
            rand_image(&[1, 3, 16, 16], 0.0, 1.0, 2),
        ),
        (Tensor::zeros(&[1, 3, 16, 16]), Tensor::full(&[1, 3, 16, 16], 1.0)),
        (Tensor::zeros(&[1, 3, 16, 16]), Tensor::zeros(&[1, 3, 16, 16])),
    ];
    for (i, (a, b)) in cases.iter().enumerate() {
        let c = |t: &Tensor<f64>| t64.constant(t.clone());
        let mask = Tensor::from_f64(&[1, 1, 16, 16], &[[0.0, 1.0]; 128].concat()).unwrap();
        let target = c(&compute_gt_mask(a, b).unwrap());
        let values = [
            mse_loss(&t64, &c(a), &c(b)).unwrap().item(),
            cosine_color_loss(&t64, &c(a), &c(b)).unwrap().item(),
            bce_mask_loss(&t64, &[c(&mask)], &target).unwrap().item(),
            ecr_loss(
                &t64,
                &e,
                &c(a),
                &c(b),
                &c(&rand_image(&[1, 3, 16, 16], 0.0, 1.0, 9)),
                &c(&mask),
            )
            .unwrap()
            .item(),
        ];
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            failures.push(format!("loss case {i}: {values:?}"));
        }
    }

    let took = start.elapsed();
    if took > Duration::from_secs(60) {
        failures.push(format!("runtime {}", secs(took)));
    }
    let ok = failures.is_empty();
    outcome(
        ok,
        format!(
            "complement exact, reconstruction {worst_ulp} ulp, IN |mu| {worst_mu:.1e} |var-1| {worst_var:.1e}, \
             attention rows {worst_row:.1e}, losses finite and >= 0; {}{}",
            secs(took),
            if ok {
                String::new()
            } else {
                format!("; failures: {failures:?}")
            }
        ),
    )
}

// 2 -------------------------------------------------------------------

fn oracles() -> Outcome {
    let mut failures = Vec::new();
    let t = Tape::<f64>::no_grad();
    let c = |x: &Tensor<f64>| t.constant(x.clone());

    let a = rand_image(&[2, 3, 12, 10], 0.0, 1.0, 1);
    let b = rand_image(&[2, 3, 12, 10], 0.0, 1.0, 2);
    let mse_loop = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.numel() as f64;
    let mse_err = (mse_loss(&t, &c(&a), &c(&b)).unwrap().item() - mse_loop).abs();
    if mse_err > 1e-8 {
        failures.push("mse");
    }

    let m = rand_image(&[2, 1, 12, 10], 0.0, 1.0, 3);
    let target = compute_gt_mask(&a, &b).unwrap();
    let bce_loop = m
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / m.numel() as f64;
    let bce_err = (bce_mask_loss(&t, &[c(&m)], &c(&target)).unwrap().item() - bce_loop).abs();
    if bce_err > 1e-8 {
        failures.push("bce");
    }

    let mut mask_exact = true;
    for n in 0..2 {
        for y in 0..12 {
            for x in 0..10 {
                let luma = |img: &Tensor<f64>| {
                    0.299 * img.get(&[n, 0, y, x]) + 0.587 * img.get(&[n, 1, y, x]) + 0.114 * img.get(&[n, 2, y, x])
                };
                let expected = if luma(&a) > luma(&b) { 1.0 } else { 0.0 };
                mask_exact &= target.get(&[n, 0, y, x]) == expected;
            }
        }
    }
    if !mask_exact {
        failures.push("gt mask");
    }

    let (pa, pb) = fixture_pair(1);
    let sq = pa
        .data()
        .iter()
        .zip(pb.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / pa.data().len() as f64;
    let psnr_err = (psnr(&pa, &pb).unwrap() - 10.0 * (1.0 / sq).log10()).abs();
    if psnr_err > 1e-9 {
        failures.push("psnr");
    }

    let ssim_err = (0..5)
        .map(|k| {
            let (x, y) = fixture_pair(k as u64);
            (ssim(&x, &y).unwrap() - SKIMAGE_SSIM[k]).abs()
        })
        .fold(0.0, f64::max);
    if ssim_err > 1e-4 {
        failures.push("ssim");
    }

    // 2 channels x 2 x 2 positions, worked by hand
    let fa = Tensor::from_f64(&[1, 2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 0.5, -1.0, 2.0, 0.0]).unwrap();
    let fb = Tensor::from_f64(&[1, 2, 2, 2], &[1.0, 0.0, 0.0, 1.0, 2.0, 1.0, 1.0, 2.0]).unwrap();
    let g = style_correlation(&t, &c(&fa), &c(&fb)).unwrap();
    let by_hand = [5.0 / 4.0, 15.0 / 4.0, 0.5 / 4.0, 2.0 / 4.0];
    let gram_err = g
        .value()
        .data()
        .iter()
        .zip(by_hand)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if gram_err > 1e-12 {
        failures.push("cross-Gram");
    }

    outcome(
        failures.is_empty(),
        format!(
            "mse {mse_err:.1e}, bce {bce_err:.1e}, gt mask {}, psnr {psnr_err:.1e} dB, ssim vs scikit-image \
             {ssim_err:.1e}, cross-Gram {gram_err:.1e}{}",
            if mask_exact { "exact" } else { "MISMATCH" },
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {failures:?}")
            }
        ),
    )
}

// 3 -------------------------------------------------------------------

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, "");
    let mut failed = Vec::new();
    for (name, case) in grad_cases::MODEL.iter().chain(grad_cases::LOSSES) {
        let e = max_rel_err(&case());
        if e > worst.0 {
            worst = (e, name);
        }
        if e.is_nan() || e >= GRAD_TOL {
            failed.push(format!("{name} {e:.1e}"));
        }
    }
    let took = start.elapsed();
    let in_time = took < Duration::from_secs(300);
    outcome(
        failed.is_empty() && in_time,
        format!(
            "{} model ops + {} loss terms, worst rel err {:.1e} ({}) < {GRAD_TOL:.0e}; {}{}",
            grad_cases::MODEL.len(),
            grad_cases::LOSSES.len(),
            worst.0,
            worst.1,
            secs(took),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failures: {failed:?}")
            }
        ),
    )
}

// 4 -------------------------------------------------------------------

fn identity_at_init() -> Outcome {
    let mut checked = 0;
    let mut ok = true;
    for seed in 0..3 {
        let model = Recnet::<f32>::new(ModelConfig::default(), seed).unwrap();
        for (h, w) in [(8, 8), (17, 23), (32, 32)] {
            let mut x = rand_image(&[1, 3, h, w], 0.0, 1.0, seed * 31 + h as u64).cast::<f32>();
            // include the interval ends
            x.data_mut()[0] = 0.0;
            x.data_mut()[1] = 1.0;
            let (out, _) = model.infer(&x).unwrap();
            ok &= out.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            checked += 1;
        }
    }
    outcome(
        ok,
        format!("default model, {checked} inputs, output bitwise equal to input"),
    )
}

// 5 -------------------------------------------------------------------

fn sanity(report: &SanityReport, cfg: &SanityConfig, took: Duration) -> Outcome {
    let last = report.last();
    let in_time = took < Duration::from_secs(15 * 60);
    outcome(
        report.passed && in_time,
        format!(
            "{} pairs {}x{}, {} steps (budget {}), lr {} betas ({}, {}): psnr {:.2} dB (> {}), mask error {:.3} \
             (< {}); {} (< 15 min)",
            cfg.pairs,
            cfg.size,
            cfg.size,
            report.steps,
            cfg.max_steps,
            cfg.lr,
            cfg.beta1,
            cfg.beta2,
            last.psnr,
            cfg.psnr_threshold,
            last.mask_error,
            cfg.mask_threshold,
            secs(took)
        ),
    )
}

// 6 -------------------------------------------------------------------

fn mean_luma(img: &Image, mask: &Plane, select: f32) -> f64 {
    let luma = img.luma();
    let (s, n) = luma
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m == select)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v as f64, n + 1));
    s / n.max(1) as f64
}

fn directional(report: &SanityReport, cfg: &SanityConfig) -> Outcome {
    let held_out = sanity_pairs(1, cfg.size, cfg.seed + 1000, false).unwrap().remove(0);
    let (out, _) = report.model.infer(&held_out.input.to_tensor::<f32>()).unwrap();
    let out = tensor_to_images(&out).unwrap().remove(0);
    // gt_mask 1: input brighter than ground truth (overexposed)
    let over_in = mean_luma(&held_out.input, &held_out.gt_mask, 1.0);
    let over_out = mean_luma(&out, &held_out.gt_mask, 1.0);
    let under_in = mean_luma(&held_out.input, &held_out.gt_mask, 0.0);
    let under_out = mean_luma(&out, &held_out.gt_mask, 0.0);
    outcome(
        under_out > under_in && over_out < over_in,
        format!(
            "held-out pair: underexposed luma {under_in:.4} -> {under_out:.4}, overexposed luma {over_in:.4} -> \
             {over_out:.4}"
        ),
    )
}

// 7 -------------------------------------------------------------------

fn ecr_path() -> Outcome {
    let (extractor, source) = match std::env::var_os("RECNET_VGG16") {
        Some(path) => (
            Vgg16Features::<f64>::load(std::path::Path::new(&path), PerceptualLayer::Relu3_3, None)
                .expect("RECNET_VGG16 points at a readable weight file"),
            "pretrained VGG16",
        ),
        None => (
            Vgg16Features::seeded(PerceptualLayer::Relu3_3, 0, 4),
            "seeded VGG16-topology extractor (no pretrained weights offline)",
        ),
    };
    let mut ok = true;
    let mut traces = Vec::new();
    for k in 0..3u64 {
        let mut r = rng(500 + k);
        let clean = procedural_scene(32, 32, (0.05, 0.95), &mut r);
        let spec = DegradationSpec::sample(&mut r, &SampleRanges::default());
        let pair = synthesize_pair(format!("t{k}"), &clean, &spec, 600 + k).unwrap();
        let inp: Tensor<f64> = images_to_tensor(std::slice::from_ref(&pair.input)).unwrap();
        let gt: Tensor<f64> = images_to_tensor(std::slice::from_ref(&pair.gt)).unwrap();
        let mask = MaskPolarity::Underexposed.target(&compute_gt_mask(&inp, &gt).unwrap());
        let values: Vec<f64> = (0..5)
            .map(|i| {
                let t = i as f64 / 4.0;
                let out = inp.zip_map(&gt, |a, b| (1.0 - t) * a + t * b);
                let tape = Tape::no_grad();
                let c = |x: &Tensor<f64>| tape.constant(x.clone());
                ecr_loss(&tape, &extractor, &c(&out), &c(&inp), &c(&gt), &c(&mask))
                    .unwrap()
                    .item()
            })
            .collect();
        ok &= values.windows(2).all(|w| w[1] <= w[0]);
        traces.push(format!(
            "[{}]",
            values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ")
        ));
    }
    outcome(ok, format!("{source}; 3 triples x 5 points: {}", traces.join(" ")))
}

// 8 -------------------------------------------------------------------

fn curve_parity(report: &SanityReport) -> Outcome {
    let inputs: Vec<Image> = report.pairs.iter().map(|p| p.input.clone()).collect();
    let (out, _) = report.model.infer(&images_to_tensor::<f32>(&inputs).unwrap()).unwrap();
    let corrected = tensor_to_images(&out).unwrap();
    let fixed: Vec<(&Image, &Image)> = corrected.iter().zip(&report.pairs).map(|(c, p)| (c, &p.gt)).collect();
    let raw: Vec<(&Image, &Image)> = report.pairs.iter().map(|p| (&p.input, &p.gt)).collect();
    let a_fixed = brightness_mapping_curve(&fixed).unwrap().area;
    let a_raw = brightness_mapping_curve(&raw).unwrap().area;
    outcome(
        a_fixed < a_raw,
        format!("sanity set curve area: corrected {a_fixed:.4} < input {a_raw:.4}"),
    )
}

// 9 -------------------------------------------------------------------

fn determinism() -> Outcome {
    let cfg = ModelConfig::new(2, 8, 2).unwrap();
    let batch = Batch::<f32>::from_samples(&sanity_pairs(2, 32, 11, false).unwrap()).unwrap();
    let make = || {
        let extractor = Vgg16Features::seeded(PerceptualLayer::Relu3_3, 1, 16);
        let objective = Objective::new(LossWeights::default(), MaskPolarity::default(), Some(extractor)).unwrap();
        let model = Recnet::<f32>::new(cfg, 11).unwrap();
        let adam = Adam::new(model.params(), 1e-4, 0.9, 0.99, 1e-8);
        Trainer::new(model, adam, objective)
    };
    let trace =
        |t: &mut Trainer<f32>| -> Vec<u64> { (0..10).map(|_| t.train_step(&batch).unwrap().total.to_bits()).collect() };
    let (mut t1, mut t2) = (make(), make());
    let same_trace = trace(&mut t1) == trace(&mut t2);

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("ck.safetensors");
    save_checkpoint(&path, &t1.model, Some(&t1.optimizer), t1.step()).unwrap();
    let ck = load_checkpoint(&path, Some(&cfg)).unwrap();
    let bits = |m: &Recnet<f32>| -> Vec<u32> {
        m.params()
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect()
    };
    let opt = ck.optimizer.as_ref().unwrap();
    let weights_equal = bits(&ck.model) == bits(&t1.model);
    let optimizer_equal = opt.moments() == t1.optimizer.moments() && opt.step_count() == t1.optimizer.step_count();
    let (before, _) = t1.model.infer(&batch.input).unwrap();
    let (after, _) = ck.model.infer(&batch.input).unwrap();
    let forward_equal = before
        .data()
        .iter()
        .zip(after.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    outcome(
        same_trace && weights_equal && optimizer_equal && forward_equal && ck.step == 10,
        format!(
            "10-step loss traces identical: {same_trace}; checkpoint weights {weights_equal}, moments \
             {optimizer_equal}, step {}, forward {forward_equal}",
            ck.step
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report_line = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {n} [{}] {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };

    report_line(1, "invariant suite", invariants());
    report_line(2, "oracle equivalence", oracles());
    report_line(3, "gradient checks", gradients());
    report_line(4, "identity at init", identity_at_init());

    let cfg = SanityConfig::default();
    let start = Instant::now();
    let sanity_report = overfit_sanity(&cfg).expect("sanity harness runs");
    let took = start.elapsed();
    report_line(5, "overfit sanity", sanity(&sanity_report, &cfg, took));
    report_line(6, "directional correction", directional(&sanity_report, &cfg));
    report_line(7, "contrastive term along the correction path", ecr_path());
    report_line(8, "brightness mapping curve area", curve_parity(&sanity_report));
    report_line(9, "determinism", determinism());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.passed).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
