//! Naive kernels kept as test oracles for the optimized paths.

use super::{ConvLayer, PaddingMode, Scalar, Tensor};

/// Direct per-output-pixel 3×3 convolution, accumulated in `f64`.
pub fn conv2d_naive<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>, padding: PaddingMode) -> Tensor<T> {
    let [n, in_ch, h, w] = input.shape();
    let out_ch = layer.out_channels();
    assert_eq!(in_ch, layer.in_channels());
    let sample = |b: usize, c: usize, y: isize, x: isize| -> f64 {
        let inside = y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w;
        match (inside, padding) {
            (true, _) => input.get([b, c, y as usize, x as usize]).as_f64(),
            (false, PaddingMode::Zero) => 0.0,
            (false, PaddingMode::Replicate) => {
                let yy = y.clamp(0, h as isize - 1) as usize;
                let xx = x.clamp(0, w as isize - 1) as usize;
                input.get([b, c, yy, xx]).as_f64()
            }
        }
    };
    Tensor::from_fn([n, out_ch, h, w], |[b, oc, y, x]| {
        let mut acc = layer.bias[oc].as_f64();
        for ic in 0..in_ch {
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = layer.weights.get([oc, ic, ky, kx]).as_f64();
                    acc += wv * sample(b, ic, y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                }
            }
        }
        T::from_f64(acc)
    })
    .expect("non-empty shape")
}
