use crate::datagen::quantize_sample;
use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::position::PositionId;
use crate::tensor::{Scalar, Tensor};

use super::model::GvtcnnModel;

/// Side of the output region computed per tile.
pub const DEFAULT_TILE: usize = 96;

/// Interpolates a full 8-bit plane: normalize to `[0, 1]`, run the network,
/// clamp, and round half away from zero back to 8 bits. Returns one plane per
/// head, in head order.
///
/// Large planes are processed in tiles with a halo of the receptive radius.
/// Tiles touching the plane border keep that border, so the result matches a
/// single whole-plane pass.
pub fn infer_plane<T: Scalar>(model: &GvtcnnModel<T>, plane: &Plane) -> Result<Vec<Plane>> {
    infer_tiled(model, plane, DEFAULT_TILE)
}

/// Like [`infer_plane`], paired with each head's position.
pub fn infer_positions<T: Scalar>(model: &GvtcnnModel<T>, plane: &Plane) -> Result<Vec<(PositionId, Plane)>> {
    Ok(model.config().positions().into_iter().zip(infer_plane(model, plane)?).collect())
}

pub(crate) fn infer_tiled<T: Scalar>(model: &GvtcnnModel<T>, plane: &Plane, tile: usize) -> Result<Vec<Plane>> {
    let (w, h) = (plane.width(), plane.height());
    if w < 2 || h < 2 {
        return Err(Error::Input(format!("plane {w}x{h} is smaller than 2x2")));
    }
    let heads = model.heads().len();
    let halo = model.receptive_radius();
    let mut outputs = vec![vec![0u8; w * h]; heads];
    for ty in (0..h).step_by(tile) {
        for tx in (0..w).step_by(tile) {
            let (cw, ch) = (tile.min(w - tx), tile.min(h - ty));
            let x0 = tx.saturating_sub(halo);
            let y0 = ty.saturating_sub(halo);
            let x1 = (tx + cw + halo).min(w);
            let y1 = (ty + ch + halo).min(h);
            let (iw, ih) = (x1 - x0, y1 - y0);
            let input = Tensor::<T>::from_fn([1, 1, ih, iw], |[_, _, y, x]| {
                T::from_f64(plane.get(x0 + x, y0 + y) as f64 / 255.0)
            })?;
            let out = model.forward_stacked(&input)?;
            for (j, dst) in outputs.iter_mut().enumerate() {
                let src = out.plane(0, j);
                for y in 0..ch {
                    let sy = ty + y - y0;
                    for x in 0..cw {
                        let v = src[sy * iw + (tx + x - x0)].as_f64();
                        dst[(ty + y) * w + tx + x] = quantize_sample(v.clamp(0.0, 1.0) * 255.0);
                    }
                }
            }
        }
    }
    outputs.into_iter().map(|d| Plane::new(w, h, d)).collect()
}
