use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward, conv2d_backward_params, conv2d_forward, prelu_backward, prelu_forward, ConvLayer, Scalar, Tensor,
};

use super::config::GvtcnnConfig;

/// Initial value of every PReLU slope.
pub const INITIAL_SLOPE: f64 = 0.25;

/// Trainable parameters, shared by the model and its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads<T = f32> {
    /// First layer, narrow layers, last layer. Every layer but the last
    /// carries a PReLU slope; the last feeds the residual sum directly.
    pub trunk: Vec<ConvLayer<T>>,
    /// PReLU applied to `first layer output + last layer output`.
    pub skip_slope: T,
    /// One single-channel layer per sub-pixel position, no activation.
    pub heads: Vec<ConvLayer<T>>,
}

impl<T: Scalar> ModelGrads<T> {
    /// Named parameter blocks in a fixed order (weights, bias, slope per layer).
    pub fn blocks(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (k, l) in self.trunk.iter().enumerate() {
            out.push((format!("layer{}.weights", k + 1), l.weights.data()));
            out.push((format!("layer{}.bias", k + 1), &l.bias[..]));
            if let Some(s) = &l.slope {
                out.push((format!("layer{}.slope", k + 1), std::slice::from_ref(s)));
            }
        }
        out.push(("skip.slope".to_string(), std::slice::from_ref(&self.skip_slope)));
        for (j, h) in self.heads.iter().enumerate() {
            out.push((format!("head{j}.weights"), h.weights.data()));
            out.push((format!("head{j}.bias"), &h.bias[..]));
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [T])> {
        let mut out = Vec::new();
        for (k, l) in self.trunk.iter_mut().enumerate() {
            out.push((format!("layer{}.weights", k + 1), l.weights.data_mut()));
            out.push((format!("layer{}.bias", k + 1), &mut l.bias[..]));
            if let Some(s) = l.slope.as_mut() {
                out.push((format!("layer{}.slope", k + 1), std::slice::from_mut(s)));
            }
        }
        out.push(("skip.slope".to_string(), std::slice::from_mut(&mut self.skip_slope)));
        for (j, h) in self.heads.iter_mut().enumerate() {
            out.push((format!("head{j}.weights"), h.weights.data_mut()));
            out.push((format!("head{j}.bias"), &mut h.bias[..]));
        }
        out
    }

    fn cast<U: Scalar>(&self) -> ModelGrads<U> {
        ModelGrads {
            trunk: self.trunk.iter().map(ConvLayer::cast).collect(),
            skip_slope: U::from_f64(self.skip_slope.as_f64()),
            heads: self.heads.iter().map(ConvLayer::cast).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GvtcnnModel<T = f32> {
    config: GvtcnnConfig,
    params: ModelGrads<T>,
}

/// Intermediate tensors of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Activations<T> {
    pub input: Tensor<T>,
    /// Pre-activation output of every trunk layer.
    pub pre: Vec<Tensor<T>>,
    /// Post-activation output of every trunk layer except the last.
    pub post: Vec<Tensor<T>>,
    /// First-layer output plus last-layer output, before the skip PReLU.
    pub sum: Tensor<T>,
    pub shared: Tensor<T>,
    /// `(n, heads, h, w)`: input plus each head's residual.
    pub output: Tensor<T>,
}

fn he_std(fan_in: usize) -> f64 {
    (2.0 / ((1.0 + INITIAL_SLOPE * INITIAL_SLOPE) * fan_in as f64)).sqrt()
}

fn init_layer<T: Scalar>(
    rng: &mut ChaCha8Rng,
    out_ch: usize,
    in_ch: usize,
    slope: Option<T>,
    gain: f64,
) -> Result<ConvLayer<T>> {
    let normal = Normal::new(0.0, gain * he_std(in_ch * 9)).expect("finite std");
    let weights = Tensor::from_fn([out_ch, in_ch, 3, 3], |_| T::from_f64(normal.sample(rng)))?;
    ConvLayer::from_parts(weights, vec![T::zero(); out_ch], slope)
}

/// Relative scale of the head initialization; small heads start the network
/// close to the copy-the-input solution.
const HEAD_GAIN: f64 = 0.1;

/// Deterministically initialized model: He-scaled Gaussian weights (adjusted
/// for the PReLU slope), zero biases, all slopes at [`INITIAL_SLOPE`].
pub fn build_model<T: Scalar>(config: &GvtcnnConfig, seed: u64) -> Result<GvtcnnModel<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slope = Some(T::from_f64(INITIAL_SLOPE));
    let (wide, narrow) = (config.wide_channels, config.narrow_channels);
    let mut trunk = Vec::with_capacity(config.trunk_depth());
    trunk.push(init_layer(&mut rng, wide, 1, slope, 1.0)?);
    let mut in_ch = wide;
    for _ in 0..config.narrow_layers {
        trunk.push(init_layer(&mut rng, narrow, in_ch, slope, 1.0)?);
        in_ch = narrow;
    }
    trunk.push(init_layer(&mut rng, wide, in_ch, None, 1.0)?);
    let heads = (0..config.head_count())
        .map(|_| init_layer(&mut rng, 1, wide, None, HEAD_GAIN))
        .collect::<Result<Vec<_>>>()?;
    Ok(GvtcnnModel {
        config: config.clone(),
        params: ModelGrads {
            trunk,
            skip_slope: T::from_f64(INITIAL_SLOPE),
            heads,
        },
    })
}

fn ensure_finite<T: Scalar>(t: &Tensor<T>, layer: impl FnOnce() -> String) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::Inference { layer: layer() })
    }
}

impl<T: Scalar> GvtcnnModel<T> {
    /// Assembles a model from explicit parameters, checking the topology.
    pub fn from_parts(config: GvtcnnConfig, params: ModelGrads<T>) -> Result<Self> {
        config.validate()?;
        let depth = config.trunk_depth();
        let bad = |msg: String| Err(Error::Config(msg));
        if params.trunk.len() != depth {
            return bad(format!("expected {depth} trunk layers, got {}", params.trunk.len()));
        }
        if params.heads.len() != config.head_count() {
            return bad(format!(
                "variant {} needs {} heads, got {}",
                config.variant,
                config.head_count(),
                params.heads.len()
            ));
        }
        let mut in_ch = 1;
        for (k, l) in params.trunk.iter().enumerate() {
            let out = if k == 0 || k == depth - 1 {
                config.wide_channels
            } else {
                config.narrow_channels
            };
            if l.in_channels() != in_ch || l.out_channels() != out {
                return bad(format!(
                    "layer {} is {}->{}, expected {in_ch}->{out}",
                    k + 1,
                    l.in_channels(),
                    l.out_channels()
                ));
            }
            if l.slope.is_some() != (k != depth - 1) {
                return bad(format!("layer {} has an unexpected activation setting", k + 1));
            }
            in_ch = out;
        }
        for (j, h) in params.heads.iter().enumerate() {
            if h.in_channels() != config.wide_channels || h.out_channels() != 1 || h.slope.is_some() {
                return bad(format!("head {j} must be a plain {}->1 convolution", config.wide_channels));
            }
        }
        Ok(GvtcnnModel { config, params })
    }

    pub fn config(&self) -> &GvtcnnConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelGrads<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelGrads<T> {
        &mut self.params
    }

    pub fn trunk(&self) -> &[ConvLayer<T>] {
        &self.params.trunk
    }

    pub fn heads(&self) -> &[ConvLayer<T>] {
        &self.params.heads
    }

    pub fn skip_slope(&self) -> T {
        self.params.skip_slope
    }

    /// Weights plus biases over all convolutions.
    pub fn parameter_count(&self) -> usize {
        self.params
            .trunk
            .iter()
            .chain(&self.params.heads)
            .map(ConvLayer::parameter_count)
            .sum()
    }

    /// PReLU slopes: one per activated trunk layer plus the skip activation.
    pub fn slope_count(&self) -> usize {
        self.params.trunk.iter().filter(|l| l.slope.is_some()).count() + 1
    }

    /// Chebyshev radius of the input region that can influence one output pixel.
    pub fn receptive_radius(&self) -> usize {
        self.params.trunk.len() + 1
    }

    /// Radius for the shared feature map alone.
    pub fn shared_receptive_radius(&self) -> usize {
        self.params.trunk.len()
    }

    pub fn cast<U: Scalar>(&self) -> GvtcnnModel<U> {
        GvtcnnModel {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        if input.channels() != 1 {
            return Err(Error::shape(
                "gvtcnn forward",
                format!("input must have 1 channel, got shape {:?}", input.shape()),
            ));
        }
        Ok(())
    }

    /// Runs the network; output channel `j` is the sample at head `j`'s position.
    /// Outputs are not clamped.
    pub fn forward_stacked(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let pad = self.config.padding;
        let trunk = &self.params.trunk;
        let last = trunk.len() - 1;
        let mut first_out = None;
        let mut x = input.clone();
        for (k, layer) in trunk.iter().enumerate() {
            let z = conv2d_forward(&x, layer, pad)?;
            ensure_finite(&z, || format!("layer{}", k + 1))?;
            x = match layer.slope {
                Some(a) => prelu_forward(&z, a),
                None => z,
            };
            if k == 0 && k != last {
                first_out = Some(x.clone());
            }
        }
        let sum = x.add(first_out.as_ref().expect("trunk has a first layer"))?;
        let shared = prelu_forward(&sum, self.params.skip_slope);
        ensure_finite(&shared, || "skip".to_string())?;
        self.apply_heads(input, &shared)
    }

    fn apply_heads(&self, input: &Tensor<T>, shared: &Tensor<T>) -> Result<Tensor<T>> {
        let heads = ConvLayer::stack(&self.params.heads)?;
        let mut out = conv2d_forward(shared, &heads, self.config.padding)?;
        for b in 0..out.batch() {
            let x = input.plane(b, 0).to_vec();
            for j in 0..out.channels() {
                for (o, &v) in out.plane_mut(b, j).iter_mut().zip(&x) {
                    *o = *o + v;
                }
            }
        }
        ensure_finite(&out, || "heads".to_string())?;
        Ok(out)
    }

    /// One `(n, 1, h, w)` tensor per head.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        Ok(self.forward_stacked(input)?.split_channels())
    }

    /// Forward pass that keeps every intermediate for [`Self::backward`].
    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<Activations<T>> {
        self.check_input(input)?;
        let pad = self.config.padding;
        let trunk = &self.params.trunk;
        let mut pre = Vec::with_capacity(trunk.len());
        let mut post: Vec<Tensor<T>> = Vec::with_capacity(trunk.len() - 1);
        for (k, layer) in trunk.iter().enumerate() {
            let src = if k == 0 { input } else { &post[k - 1] };
            let z = conv2d_forward(src, layer, pad)?;
            ensure_finite(&z, || format!("layer{}", k + 1))?;
            if let Some(a) = layer.slope {
                post.push(prelu_forward(&z, a));
            }
            pre.push(z);
        }
        let sum = pre.last().expect("non-empty trunk").add(&post[0])?;
        let shared = prelu_forward(&sum, self.params.skip_slope);
        ensure_finite(&shared, || "skip".to_string())?;
        let output = self.apply_heads(input, &shared)?;
        Ok(Activations {
            input: input.clone(),
            pre,
            post,
            sum,
            shared,
            output,
        })
    }

    /// Gradient of a scalar loss with respect to every parameter, given
    /// `grad_output = d loss / d output` shaped like [`Activations::output`].
    pub fn backward(&self, acts: &Activations<T>, grad_output: &Tensor<T>) -> Result<ModelGrads<T>> {
        let pad = self.config.padding;
        let trunk = &self.params.trunk;
        let depth = trunk.len();

        let heads = ConvLayer::stack(&self.params.heads)?;
        let (d_shared, d_heads_w, d_heads_b) = conv2d_backward(&acts.shared, &heads, grad_output, pad)?;
        let [_, in_ch, kh, kw] = d_heads_w.shape();
        let head_grads = d_heads_w
            .data()
            .chunks_exact(in_ch * kh * kw)
            .zip(&d_heads_b)
            .map(|(w, &b)| ConvLayer::from_parts(Tensor::from_vec([1, in_ch, kh, kw], w.to_vec())?, vec![b], None))
            .collect::<Result<Vec<_>>>()?;

        let (d_sum, d_skip) = prelu_backward(&acts.sum, self.params.skip_slope, &d_shared)?;

        let mut layer_grads: Vec<Option<(Tensor<T>, Vec<T>)>> = vec![None; depth];
        let mut slope_grads: Vec<Option<T>> = vec![None; depth];
        // gradient w.r.t. the pre-activation of layer k; the last layer feeds the sum directly
        let mut d_pre = d_sum.clone();
        for k in (0..depth).rev() {
            let layer = &trunk[k];
            if k == 0 {
                let g = conv2d_backward_params(&acts.input, layer, &d_pre, pad)?;
                layer_grads[0] = Some((g.weights, g.bias));
                break;
            }
            let (mut d_src, gw, gb) = conv2d_backward(&acts.post[k - 1], layer, &d_pre, pad)?;
            layer_grads[k] = Some((gw, gb));
            if k == 1 {
                // the first layer's activated output also feeds the residual sum
                d_src.add_assign(&d_sum)?;
            }
            let a = trunk[k - 1].slope.expect("inner trunk layers are activated");
            let (d_prev, d_a) = prelu_backward(&acts.pre[k - 1], a, &d_src)?;
            slope_grads[k - 1] = Some(d_a);
            d_pre = d_prev;
        }
        let trunk_grads = layer_grads
            .into_iter()
            .zip(slope_grads)
            .zip(trunk)
            .map(|((g, s), layer)| {
                let (w, b) = g.expect("every trunk layer visited");
                ConvLayer::from_parts(w, b, layer.slope.map(|_| s.expect("slope gradient computed")))
            })
            .collect::<Result<Vec<_>>>()?;
        let out = ModelGrads {
            trunk: trunk_grads,
            skip_slope: d_skip,
            heads: head_grads,
        };
        Ok(out)
    }
}
