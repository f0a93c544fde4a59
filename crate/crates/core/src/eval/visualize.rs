use crate::data::{gt_mask, images_to_tensor, tensor_to_planes, Image, Plane};
use crate::error::Result;
use crate::losses::MaskPolarity;
use crate::model::Recnet;
use crate::tensor::Float;

fn paste_gray(grid: &mut Image, col: usize, plane: &Plane) {
    let w = plane.width();
    for y in 0..plane.height() {
        for x in 0..w {
            let v = plane.get(x, y).clamp(0.0, 1.0);
            grid.set_pixel(col * w + x, y, [v, v, v]);
        }
    }
}

/// One row: the input, every block's predicted mask, and the target mask
/// under `polarity` (black when `gt` is absent). Width is
/// `(2 + num_blocks) * W`.
pub fn visualize_masks<T: Float>(
    model: &Recnet<T>,
    input: &Image,
    gt: Option<&Image>,
    polarity: MaskPolarity,
) -> Result<Image> {
    let (w, h) = (input.width(), input.height());
    let (_, masks) = model.infer(&images_to_tensor::<T>(std::slice::from_ref(input))?)?;
    let cols = 2 + masks.len();
    let mut grid = Image::filled(w * cols, h, [0.0; 3]);
    for y in 0..h {
        for x in 0..w {
            grid.set_pixel(x, y, input.pixel(x, y));
        }
    }
    for (i, m) in masks.iter().enumerate() {
        let plane = tensor_to_planes(m)?.remove(0);
        paste_gray(&mut grid, 1 + i, &plane);
    }
    if let Some(gt) = gt {
        let target = polarity.target(&crate::data::planes_to_tensor::<f32>(&[gt_mask(input, gt)?])?);
        paste_gray(&mut grid, cols - 1, &tensor_to_planes(&target)?.remove(0));
    }
    Ok(grid)
}
