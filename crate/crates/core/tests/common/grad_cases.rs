//! Finite-difference checks for every model operation and loss term, in
//! double precision on inputs no larger than (1, 8, 8, 8).

use recnet::autograd::gradcheck::{GradCheck, GradCheckReport};
use recnet::losses::{
    bce_mask_loss, cosine_color_loss, ecr_loss, mse_loss, style_correlation, PerceptualLayer, Vgg16Features,
};
use recnet::model::{channel_attention, split_regions, Recnet};
use recnet::nn::{randn, ParamId};
use recnet::Tensor;

use super::*;

pub type Case = (&'static str, fn() -> Vec<GradCheckReport>);

pub const MODEL: &[Case] = &[
    ("stem", stem),
    ("exposure mask predictor", emp),
    ("region split", split),
    ("mask-aware instance norm", main_params),
    ("mask-aware instance norm (mask input)", main_mask),
    ("region de-exposure module", rdm),
    ("mixed-scale spatial path", mixed_scale_spatial),
    ("channel attention", attention),
    ("channel self-attention", channel_self_attention),
    ("mixed-scale restoration unit", mru),
    ("refine", refine),
    ("full network", network),
];

pub const LOSSES: &[Case] = &[
    ("mse", mse),
    ("cosine color", cosine),
    ("mask bce", bce),
    ("style correlation", gram),
    ("exposure contrastive", ecr),
];

fn run(
    inputs: &[Tensor<f64>],
    f: impl Fn(&recnet::Tape<f64>, &[recnet::Var<f64>]) -> recnet::Result<recnet::Var<f64>>,
) -> Vec<GradCheckReport> {
    GradCheck::default().run(inputs, f).unwrap()
}

pub fn params_with_prefix(m: &Recnet<f64>, prefix: &str) -> Vec<ParamId> {
    m.params()
        .ids()
        .filter(|&id| m.params().name(id).starts_with(prefix))
        .collect()
}

fn params_named(m: &Recnet<f64>, block: &str, names: &[&str]) -> Vec<ParamId> {
    names
        .iter()
        .flat_map(|n| params_with_prefix(m, &format!("{block}.{n}")))
        .collect()
}

fn features() -> Tensor<f64> {
    randn::<f64>(&[1, 8, 8, 8], 1.0, 77)
}

fn stem() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 1);
    let x = rand_image(&[1, 3, 8, 8], 0.1, 0.9, 2);
    let w = projection(&[1, 8, 8, 8], 3);
    check_with_params(&m, &params_with_prefix(&m, "stem"), &x, None, |t, p, x| {
        Ok(weighted_sum(t, &m.stem(t, p, x)?, &w))
    })
}

fn emp() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 4);
    let w = projection(&[1, 1, 8, 8], 5);
    let emp = &m.arch().blocks[0].rdm.emp;
    check_with_params(
        &m,
        &params_with_prefix(&m, "blocks.0.rdm.emp"),
        &features(),
        Some(24),
        |t, p, x| Ok(weighted_sum(t, &emp.forward(t, p, x)?, &w)),
    )
}

fn split() -> Vec<GradCheckReport> {
    let mask = rand_image(&[1, 1, 8, 8], 0.05, 0.95, 6);
    let (w1, w2) = (projection(&[1, 8, 8, 8], 7), projection(&[1, 8, 8, 8], 8));
    run(&[features(), mask], |t, v| {
        let (fo, fu) = split_regions(t, &v[0], &v[1])?;
        t.add(&weighted_sum(t, &fo, &w1), &weighted_sum(t, &fu, &w2))
    })
}

fn main_params() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 9);
    let rdm = &m.arch().blocks[0].rdm;
    let mask = rand_image(&[1, 1, 8, 8], 0.05, 0.95, 10);
    let w = projection(&[1, 8, 8, 8], 11);
    let params = params_named(&m, "blocks.0.rdm", &["gate_o", "gate_u", "proj_o", "proj_u"]);
    check_with_params(&m, &params, &features(), Some(24), |t, p, x| {
        let mk = t.constant(mask.clone());
        let (fo, fu) = split_regions(t, x, &mk)?;
        Ok(weighted_sum(
            t,
            &rdm.mask_aware_instance_norm(t, p, &fo, &fu, x, &mk)?,
            &w,
        ))
    })
}

fn main_mask() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 9);
    let rdm = &m.arch().blocks[0].rdm;
    let mask = rand_image(&[1, 1, 8, 8], 0.05, 0.95, 10);
    let w = projection(&[1, 8, 8, 8], 11);
    let f = features();
    run(&[mask], |t, v| {
        let p = m.params().bind_frozen(t);
        let x = t.constant(f.clone());
        let (fo, fu) = split_regions(t, &x, &v[0])?;
        Ok(weighted_sum(
            t,
            &rdm.mask_aware_instance_norm(t, &p, &fo, &fu, &x, &v[0])?,
            &w,
        ))
    })
}

fn rdm() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 12);
    let rdm = &m.arch().blocks[0].rdm;
    let (w, wm) = (projection(&[1, 8, 8, 8], 13), projection(&[1, 1, 8, 8], 14));
    check_with_params(
        &m,
        &params_with_prefix(&m, "blocks.0.rdm"),
        &features(),
        Some(12),
        |t, p, x| {
            let (f_n, mask) = rdm.forward(t, p, x)?;
            t.add(&weighted_sum(t, &f_n, &w), &weighted_sum(t, &mask, &wm))
        },
    )
}

fn mixed_scale_spatial() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 15);
    let mru = &m.arch().blocks[0].mru;
    let w = projection(&[1, 8, 8, 8], 16);
    let params = params_named(&m, "blocks.0.mru", &["dw3", "dw5", "merge_k", "merge_v", "fuse_s"]);
    check_with_params(&m, &params, &features(), Some(24), |t, p, x| {
        Ok(weighted_sum(t, &mru.mixed_scale_spatial(t, p, x)?.f_s, &w))
    })
}

fn attention() -> Vec<GradCheckReport> {
    let qkv = [
        randn::<f64>(&[1, 8, 8, 8], 1.0, 1),
        randn(&[1, 8, 8, 8], 1.0, 2),
        randn(&[1, 8, 8, 8], 1.0, 3),
    ];
    let w = projection(&[1, 8, 8, 8], 4);
    run(&qkv, |t, x| {
        Ok(weighted_sum(
            t,
            &channel_attention(t, &x[0], &x[1], &x[2], 2, 2.0)?.0,
            &w,
        ))
    })
}

fn channel_self_attention() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 17);
    let mru = &m.arch().blocks[0].mru;
    let kv = [
        randn::<f64>(&[1, 8, 8, 8], 1.0, 18),
        randn::<f64>(&[1, 8, 8, 8], 1.0, 19),
    ];
    let w = projection(&[1, 8, 8, 8], 20);
    let params = params_named(&m, "blocks.0.mru", &["query3", "query5", "fuse_c"]);
    check_with_params(&m, &params, &features(), Some(24), |t, p, x| {
        let kv = [t.constant(kv[0].clone()), t.constant(kv[1].clone())];
        Ok(weighted_sum(t, &mru.channel_self_attention(t, p, x, &kv)?, &w))
    })
}

fn mru() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 21);
    let mru = &m.arch().blocks[0].mru;
    let f_n = randn::<f64>(&[1, 8, 8, 8], 1.0, 22);
    let w = projection(&[1, 8, 8, 8], 23);
    check_with_params(
        &m,
        &params_with_prefix(&m, "blocks.0.mru"),
        &features(),
        Some(8),
        |t, p, x| {
            let f_n = t.constant(f_n.clone());
            Ok(weighted_sum(t, &mru.forward(t, p, x, &f_n)?, &w))
        },
    )
}

fn refine() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 24);
    let w = projection(&[1, 8, 8, 8], 25);
    check_with_params(&m, &params_with_prefix(&m, "refine"), &features(), None, |t, p, x| {
        Ok(weighted_sum(t, &m.arch().refine.forward(t, p, x)?, &w))
    })
}

fn network() -> Vec<GradCheckReport> {
    let m = perturbed_model(tiny_config(), 26);
    let x = rand_image(&[1, 3, 8, 8], 0.3, 0.7, 27);
    let (w, wm) = (projection(&[1, 3, 8, 8], 28), projection(&[1, 1, 8, 8], 29));
    let all: Vec<ParamId> = m.params().ids().collect();
    check_with_params(&m, &all, &x, Some(4), |t, p, x| {
        let out = m.forward(t, p, x)?;
        let mut s = weighted_sum(t, &out.image, &w);
        for mask in &out.masks {
            s = t.add(&s, &weighted_sum(t, mask, &wm))?;
        }
        Ok(s)
    })
}

fn image_pair(seed: u64) -> [Tensor<f64>; 2] {
    [
        rand_image(&[1, 3, 8, 8], 0.1, 0.9, seed),
        rand_image(&[1, 3, 8, 8], 0.1, 0.9, seed + 1),
    ]
}

fn mse() -> Vec<GradCheckReport> {
    run(&image_pair(40), |t, v| mse_loss(t, &v[0], &v[1]))
}

fn cosine() -> Vec<GradCheckReport> {
    run(&image_pair(42), |t, v| cosine_color_loss(t, &v[0], &v[1]))
}

fn bce() -> Vec<GradCheckReport> {
    let masks = [
        rand_image(&[1, 1, 8, 8], 0.05, 0.95, 44),
        rand_image(&[1, 1, 8, 8], 0.05, 0.95, 45),
    ];
    let target = rand_image(&[1, 1, 8, 8], 0.0, 1.0, 46).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    run(&masks, |t, v| bce_mask_loss(t, v, &t.constant(target.clone())))
}

fn gram() -> Vec<GradCheckReport> {
    let w = projection(&[1, 8, 8], 48);
    run(&[features(), randn(&[1, 8, 8, 8], 1.0, 47)], |t, v| {
        Ok(weighted_sum(t, &style_correlation(t, &v[0], &v[1])?, &w))
    })
}

/// Gradient into both the output image and the mask.
fn ecr() -> Vec<GradCheckReport> {
    let e = Vgg16Features::<f64>::seeded(PerceptualLayer::Relu3_3, 3, 16);
    let inp = rand_image(&[1, 3, 8, 8], 0.0, 0.4, 30);
    let gt = rand_image(&[1, 3, 8, 8], 0.3, 0.8, 31);
    let out = rand_image(&[1, 3, 8, 8], 0.1, 0.7, 32);
    let mask = rand_image(&[1, 1, 8, 8], 0.1, 0.9, 33);
    run(&[out, mask], |t, v| {
        ecr_loss(t, &e, &v[0], &t.constant(inp.clone()), &t.constant(gt.clone()), &v[1])
    })
}
