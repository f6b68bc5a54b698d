use crate::error::{Error, Result};

use super::kernels::{add_halo_grad, correlate, pad_planes, weight_grad, Packed};
use super::{Scalar, Tensor};

/// Border handling for the 1-pixel halo a 3×3 kernel needs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum PaddingMode {
    /// Edge clamp: out-of-range taps read the nearest border sample.
    #[default]
    Replicate,
    Zero,
}

/// One 3×3 convolution with bias and an optional shared PReLU slope.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T = f32> {
    /// Shape `(out_ch, in_ch, 3, 3)`.
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    /// Single slope shared by every channel; `None` means no activation.
    pub slope: Option<T>,
}

pub const KERNEL: usize = 3;

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(out_ch: usize, in_ch: usize, slope: Option<T>) -> Result<Self> {
        Ok(ConvLayer {
            weights: Tensor::zeros([out_ch, in_ch, KERNEL, KERNEL])?,
            bias: vec![T::zero(); out_ch],
            slope,
        })
    }

    pub fn from_parts(weights: Tensor<T>, bias: Vec<T>, slope: Option<T>) -> Result<Self> {
        let [out_ch, _, kh, kw] = weights.shape();
        if kh != KERNEL || kw != KERNEL {
            return Err(Error::shape(
                "ConvLayer",
                format!("kernel must be 3x3, got {kh}x{kw}"),
            ));
        }
        if bias.len() != out_ch {
            return Err(Error::shape(
                "ConvLayer",
                format!("bias length {} != out_ch {out_ch}", bias.len()),
            ));
        }
        Ok(ConvLayer {
            weights,
            bias,
            slope,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    /// Weights plus biases (the PReLU slope is counted separately).
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn cast<U: Scalar>(&self) -> ConvLayer<U> {
        ConvLayer {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|b| U::from_f64(b.as_f64())).collect(),
            slope: self.slope.map(|s| U::from_f64(s.as_f64())),
        }
    }

    /// Stacks single-output layers into one layer whose channel `j` is layer `j`.
    pub fn stack(layers: &[ConvLayer<T>]) -> Result<ConvLayer<T>> {
        let weights = Tensor::concat_channels(
            &layers
                .iter()
                .map(|l| {
                    let [o, i, kh, kw] = l.weights.shape();
                    Tensor::from_vec([1, o * i, kh, kw], l.weights.data().to_vec())
                })
                .collect::<Result<Vec<_>>>()?,
        )?;
        let in_ch = layers[0].in_channels();
        if layers.iter().any(|l| l.in_channels() != in_ch) {
            return Err(Error::shape("ConvLayer::stack", "input channel counts differ"));
        }
        let out_ch: usize = layers.iter().map(|l| l.out_channels()).sum();
        let weights = Tensor::from_vec([out_ch, in_ch, KERNEL, KERNEL], weights.into_vec())?;
        let bias = layers.iter().flat_map(|l| l.bias.iter().copied()).collect();
        Ok(ConvLayer {
            weights,
            bias,
            slope: None,
        })
    }
}

/// Gradients of one convolution.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

fn check_input<T: Scalar>(op: &'static str, input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<()> {
    if input.channels() != layer.in_channels() {
        return Err(Error::shape(
            op,
            format!(
                "input has {} channels, layer expects {} (input shape {:?}, weights {:?})",
                input.channels(),
                layer.in_channels(),
                input.shape(),
                layer.weights.shape()
            ),
        ));
    }
    Ok(())
}

/// Pre-activation output `W * x + B` with spatial size preserved.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    padding: PaddingMode,
) -> Result<Tensor<T>> {
    check_input("conv2d_forward", input, layer)?;
    let [n, in_ch, h, w] = input.shape();
    let out_ch = layer.out_channels();
    let packed = Packed::forward(layer.weights.data(), out_ch, in_ch);
    let mut out = Tensor::zeros([n, out_ch, h, w])?;
    for b in 0..n {
        let padded = pad_planes(input.item(b), in_ch, h, w, 1, padding);
        correlate(&padded, h, w, &packed, &layer.bias, out.item_mut(b));
    }
    Ok(out)
}

/// Exact adjoint of [`conv2d_forward`]: returns `(grad_input, grad_weights, grad_bias)`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
    padding: PaddingMode,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let g = backward_impl(input, layer, grad_out, padding, true)?;
    let input_grad = g.input.expect("input gradient requested");
    Ok((input_grad, g.weights, g.bias))
}

/// Like [`conv2d_backward`] but skips the input gradient (first layer of a network).
pub fn conv2d_backward_params<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
    padding: PaddingMode,
) -> Result<ConvGrads<T>> {
    backward_impl(input, layer, grad_out, padding, false)
}

fn backward_impl<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
    padding: PaddingMode,
    want_input: bool,
) -> Result<ConvGrads<T>> {
    check_input("conv2d_backward", input, layer)?;
    let [n, in_ch, h, w] = input.shape();
    let out_ch = layer.out_channels();
    if grad_out.shape() != [n, out_ch, h, w] {
        return Err(Error::shape(
            "conv2d_backward",
            format!(
                "grad_out shape {:?} != forward output shape {:?}",
                grad_out.shape(),
                [n, out_ch, h, w]
            ),
        ));
    }
    let hw = h * w;
    let mut grad_w = Tensor::zeros(layer.weights.shape())?;
    let mut grad_b = vec![T::zero(); out_ch];
    let mut grad_in = if want_input {
        Some(Tensor::zeros(input.shape())?)
    } else {
        None
    };
    let adjoint = want_input.then(|| Packed::adjoint(layer.weights.data(), out_ch, in_ch));
    for b in 0..n {
        let g = grad_out.item(b);
        for (oc, plane) in g.chunks_exact(hw).enumerate() {
            grad_b[oc] = plane.iter().fold(grad_b[oc], |acc, &v| acc + v);
        }
        let padded = pad_planes(input.item(b), in_ch, h, w, 1, padding);
        weight_grad(&padded, h, w, g, out_ch, in_ch, grad_w.data_mut());
        if let (Some(grad_in), Some(adjoint)) = (grad_in.as_mut(), adjoint.as_ref()) {
            // interior: correlation of the zero-padded cotangent with the
            // flipped kernel; replicate padding adds the halo contributions
            let g_padded = pad_planes(g, out_ch, h, w, 1, PaddingMode::Zero);
            let dst = grad_in.item_mut(b);
            correlate(&g_padded, h, w, adjoint, &[], dst);
            if padding == PaddingMode::Replicate {
                add_halo_grad(g, layer.weights.data(), out_ch, in_ch, h, w, dst);
            }
        }
    }
    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::tensor::reference::conv2d_naive;

    fn random_tensor<T: Scalar>(rng: &mut ChaCha8Rng, shape: [usize; 4], scale: f64) -> Tensor<T> {
        Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-scale..scale))).unwrap()
    }

    fn random_layer<T: Scalar>(rng: &mut ChaCha8Rng, out_ch: usize, in_ch: usize) -> ConvLayer<T> {
        let weights = random_tensor(rng, [out_ch, in_ch, 3, 3], 0.5);
        let bias = (0..out_ch).map(|_| T::from_f64(rng.random_range(-0.5..0.5))).collect();
        ConvLayer::from_parts(weights, bias, None).unwrap()
    }

    fn identity_layer() -> ConvLayer<f64> {
        let mut l = ConvLayer::zeros(1, 1, None).unwrap();
        l.weights.set([0, 0, 1, 1], 1.0);
        l
    }

    #[test]
    fn zero_input_passes_only_bias() {
        let input = Tensor::<f32>::zeros([1, 1, 5, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = random_layer::<f32>(&mut rng, 2, 1);
        layer.bias = vec![0.7, 0.7];
        for padding in [PaddingMode::Replicate, PaddingMode::Zero] {
            let out = conv2d_forward(&input, &layer, padding).unwrap();
            assert_eq!(out.shape(), [1, 2, 5, 5]);
            assert!(out.data().iter().all(|&v| v == 0.7));
        }
    }

    #[test]
    fn identity_kernel_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = random_tensor::<f64>(&mut rng, [2, 1, 6, 7], 100.0);
        for padding in [PaddingMode::Replicate, PaddingMode::Zero] {
            let out = conv2d_forward(&input, &identity_layer(), padding).unwrap();
            assert_eq!(out, input);
        }
    }

    #[test]
    fn matches_naive_oracle_on_random_8x8() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let input = random_tensor::<f32>(&mut rng, [1, 2, 8, 8], 1.0);
        let layer = random_layer::<f32>(&mut rng, 4, 2);
        for padding in [PaddingMode::Replicate, PaddingMode::Zero] {
            let fast = conv2d_forward(&input, &layer, padding).unwrap();
            let slow = conv2d_naive(&input.cast::<f64>(), &layer.cast::<f64>(), padding);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((*a as f64 - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let input = Tensor::<f32>::zeros([1, 3, 4, 4]).unwrap();
        let layer = ConvLayer::<f32>::zeros(2, 2, None).unwrap();
        let err = conv2d_forward(&input, &layer, PaddingMode::Replicate).unwrap_err();
        assert!(err.to_string().contains("3 channels"), "{err}");
        let g = Tensor::<f32>::zeros([1, 2, 4, 5]).unwrap();
        let input = Tensor::<f32>::zeros([1, 2, 4, 4]).unwrap();
        assert!(conv2d_backward(&input, &layer, &g, PaddingMode::Replicate).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let input = random_tensor::<f64>(&mut rng, [2, 3, 5, 4], 1.0);
        let layer = random_layer::<f64>(&mut rng, 2, 3);
        let g = Tensor::zeros([2, 2, 5, 4]).unwrap();
        let (gi, gw, gb) = conv2d_backward(&input, &layer, &g, PaddingMode::Replicate).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gw.data().iter().all(|&v| v == 0.0));
        assert!(gb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_adjoint_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_tensor::<f64>(&mut rng, [1, 1, 6, 6], 1.0);
        let g = random_tensor::<f64>(&mut rng, [1, 1, 6, 6], 1.0);
        for padding in [PaddingMode::Replicate, PaddingMode::Zero] {
            let (gi, _, _) = conv2d_backward(&input, &identity_layer(), &g, padding).unwrap();
            assert_eq!(gi, g);
        }
    }

    #[test]
    fn adjoint_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for padding in [PaddingMode::Replicate, PaddingMode::Zero] {
            let u = random_tensor::<f64>(&mut rng, [2, 3, 7, 5], 1.0);
            let mut layer = random_layer::<f64>(&mut rng, 4, 3);
            layer.bias = vec![0.0; 4];
            let v = random_tensor::<f64>(&mut rng, [2, 4, 7, 5], 1.0);
            let fu = conv2d_forward(&u, &layer, padding).unwrap();
            let (gi, gw, _) = conv2d_backward(&u, &layer, &v, padding).unwrap();
            let lhs = fu.dot(&v).unwrap();
            // Bias-free conv is linear in the input and in the weights separately.
            assert!((lhs - u.dot(&gi).unwrap()).abs() < 1e-10);
            assert!((lhs - layer.weights.dot(&gw).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn stack_puts_each_layer_in_its_own_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let heads: Vec<ConvLayer<f64>> = (0..3).map(|_| random_layer(&mut rng, 1, 2)).collect();
        let stacked = ConvLayer::stack(&heads).unwrap();
        let input = random_tensor::<f64>(&mut rng, [1, 2, 4, 4], 1.0);
        let all = conv2d_forward(&input, &stacked, PaddingMode::Replicate).unwrap();
        for (j, head) in heads.iter().enumerate() {
            let one = conv2d_forward(&input, head, PaddingMode::Replicate).unwrap();
            assert_eq!(one.plane(0, 0), all.plane(0, j));
        }
    }

    #[test]
    fn single_pixel_width_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let input = random_tensor::<f64>(&mut rng, [1, 2, 3, 1], 1.0);
        let layer = random_layer::<f64>(&mut rng, 2, 2);
        for padding in [PaddingMode::Replicate, PaddingMode::Zero] {
            let fast = conv2d_forward(&input, &layer, padding).unwrap();
            let slow = conv2d_naive(&input, &layer, padding);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
