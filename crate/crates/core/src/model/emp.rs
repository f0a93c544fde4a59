use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::nn::{Bound, Conv2d, ConvOptions, Init, ParamId, ParamStore};
use crate::tensor::Float;

/// Exposure mask predictor: three 3x3 conv-relu layers narrowing the
/// width to a quarter, then a 1x1 projection and a sigmoid. The output is
/// the underexposure mask: 1 = underexposed, 0 = overexposed.
#[derive(Debug, Clone)]
pub struct ExposureMaskPredictor {
    convs: [Conv2d; 3],
    out: Conv2d,
}

/// Logit head gain; keeps the initial mask close to 0.5.
const OUT_GAIN: f64 = 0.02;

impl ExposureMaskPredictor {
    pub fn new<T: Float>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, prefix: &str, channels: usize) -> Self {
        let (half, quarter) = ((channels / 2).max(1), (channels / 4).max(1));
        let widths = [(channels, half), (half, quarter), (quarter, quarter)];
        let convs = std::array::from_fn(|i| {
            let (cin, cout) = widths[i];
            Conv2d::new(
                store,
                rng,
                &format!("{prefix}.conv{}", i + 1),
                cin,
                cout,
                ConvOptions::new(3),
            )
        });
        let out = Conv2d::new(
            store,
            rng,
            &format!("{prefix}.out"),
            quarter,
            1,
            ConvOptions::new(1).init(Init::KaimingNormal { gain: OUT_GAIN }),
        );
        Self { convs, out }
    }

    /// `(B, C, H, W)` features to a `(B, 1, H, W)` mask in `(0, 1)`.
    pub fn forward<T: Float>(&self, tape: &Tape<T>, p: &Bound<T>, x: &Var<T>) -> Result<Var<T>> {
        let mut h = x.clone();
        for conv in &self.convs {
            h = tape.relu(&conv.forward(tape, p, &h)?);
        }
        Ok(tape.sigmoid(&self.out.forward(tape, p, &h)?))
    }

    pub fn params(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.convs.iter().flat_map(Conv2d::params).chain(self.out.params())
    }
}
