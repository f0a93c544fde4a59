//! Image-quality metrics, the brightness-mapping diagnostic and mask
//! visualizations.

mod curve;
mod metrics;
mod report;
mod visualize;

pub use curve::{brightness_mapping_curve, CurveBin, MappingCurve, CURVE_BINS};
pub use metrics::{psnr, psnr_slices, ssim, PSNR_CAP, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{evaluate_dirs, masked_psnr, ImageMetrics, MetricReport};
pub use visualize::visualize_masks;
