//! The convolutional decoder: conv blocks with per-channel affine
//! normalization, residual blocks, fractional-stride upsampling, and a tanh
//! output layer. All derivatives are exact reverse-mode.

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::float::Real;

use super::conv::{
    conv2d, conv2d_backward_bias, conv2d_backward_input, conv2d_backward_weight, deconv2d,
    deconv2d_backward_input, deconv2d_backward_weight,
};
use super::spec::ActivationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    None,
}

impl From<ActivationSpec> for Activation {
    fn from(a: ActivationSpec) -> Self {
        match a {
            ActivationSpec::Relu => Activation::Relu,
            ActivationSpec::Tanh => Activation::Tanh,
            ActivationSpec::None => Activation::None,
        }
    }
}

impl Activation {
    fn apply<F: Real>(self, x: &Array3<F>) -> Array3<F> {
        match self {
            Activation::Relu => x.mapv(|v| v.max(F::zero())),
            Activation::Tanh => x.mapv(|v| v.tanh()),
            Activation::None => x.clone(),
        }
    }

    /// Derivative with respect to the pre-activation.
    fn derive<F: Real>(self, pre: &Array3<F>) -> Array3<F> {
        match self {
            Activation::Relu => pre.mapv(|v| if v > F::zero() { F::one() } else { F::zero() }),
            Activation::Tanh => pre.mapv(|v| {
                let t = v.tanh();
                F::one() - t * t
            }),
            Activation::None => Array3::from_elem(pre.dim(), F::one()),
        }
    }
}

/// Convolution weights plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<F> {
    pub weight: Array4<F>,
    pub bias: Vec<F>,
    pub stride: usize,
    pub padding: usize,
}

impl<F: Real> ConvParams<F> {
    fn forward(&self, x: &Array3<F>) -> Result<Array3<F>> {
        if x.dim().0 != self.weight.dim().1 {
            return Err(Error::Argument(format!(
                "channel mismatch: input has {}, layer expects {}",
                x.dim().0,
                self.weight.dim().1
            )));
        }
        Ok(conv2d(x, &self.weight, Some(&self.bias), self.stride, self.padding))
    }
}

/// Learned per-channel scale and shift, the batch-size-1 stand-in for batch
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParams<F> {
    pub scale: Vec<F>,
    pub shift: Vec<F>,
}

impl<F: Real> AffineParams<F> {
    fn identity(channels: usize) -> Self {
        Self { scale: vec![F::one(); channels], shift: vec![F::zero(); channels] }
    }

    fn forward(&self, x: &Array3<F>) -> Array3<F> {
        let mut out = x.clone();
        for (c, mut plane) in out.outer_iter_mut().enumerate() {
            plane.mapv_inplace(|v| self.scale[c] * v + self.shift[c]);
        }
        out
    }

    /// Returns (d_input, d_scale, d_shift).
    fn backward(&self, x: &Array3<F>, grad: &Array3<F>) -> (Array3<F>, Vec<F>, Vec<F>) {
        let channels = self.scale.len();
        let mut d_input = grad.clone();
        for (c, mut plane) in d_input.outer_iter_mut().enumerate() {
            plane.mapv_inplace(|v| self.scale[c] * v);
        }
        let mut d_scale = vec![F::zero(); channels];
        let mut d_shift = vec![F::zero(); channels];
        for c in 0..channels {
            let gx = grad.index_axis(ndarray::Axis(0), c);
            let xx = x.index_axis(ndarray::Axis(0), c);
            for (&g, &v) in gx.iter().zip(xx.iter()) {
                d_scale[c] += g * v;
                d_shift[c] += g;
            }
        }
        (d_input, d_scale, d_shift)
    }
}

/// One decoder layer.
#[derive(Debug, Clone, PartialEq)]
pub enum DecoderLayer<F> {
    /// Convolution + affine + activation.
    Conv { conv: ConvParams<F>, affine: AffineParams<F>, act: Activation },
    /// Two 3x3 convolutions with affines, ReLU between, added to the input.
    Residual {
        conv1: ConvParams<F>,
        affine1: AffineParams<F>,
        conv2: ConvParams<F>,
        affine2: AffineParams<F>,
    },
    /// Fractional-stride (x2) convolution + affine + ReLU.
    Deconv { conv: ConvParams<F>, affine: AffineParams<F> },
    /// Final convolution + tanh; no affine.
    Output { conv: ConvParams<F> },
}

impl<F: Real> DecoderLayer<F> {
    pub fn conv(weight: Array4<F>, bias: Vec<F>, stride: usize, padding: usize, act: Activation) -> Self {
        let channels = weight.dim().0;
        DecoderLayer::Conv {
            conv: ConvParams { weight, bias, stride, padding },
            affine: AffineParams::identity(channels),
            act,
        }
    }

    /// Parameter slices in canonical order.
    pub fn visit_params(&self, f: &mut impl FnMut(&[F])) {
        match self {
            DecoderLayer::Conv { conv, affine, .. } | DecoderLayer::Deconv { conv, affine } => {
                f(conv.weight.as_slice().unwrap());
                f(&conv.bias);
                f(&affine.scale);
                f(&affine.shift);
            }
            DecoderLayer::Residual { conv1, affine1, conv2, affine2 } => {
                f(conv1.weight.as_slice().unwrap());
                f(&conv1.bias);
                f(&affine1.scale);
                f(&affine1.shift);
                f(conv2.weight.as_slice().unwrap());
                f(&conv2.bias);
                f(&affine2.scale);
                f(&affine2.shift);
            }
            DecoderLayer::Output { conv } => {
                f(conv.weight.as_slice().unwrap());
                f(&conv.bias);
            }
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut [F])) {
        match self {
            DecoderLayer::Conv { conv, affine, .. } | DecoderLayer::Deconv { conv, affine } => {
                f(conv.weight.as_slice_mut().unwrap());
                f(&mut conv.bias);
                f(&mut affine.scale);
                f(&mut affine.shift);
            }
            DecoderLayer::Residual { conv1, affine1, conv2, affine2 } => {
                f(conv1.weight.as_slice_mut().unwrap());
                f(&mut conv1.bias);
                f(&mut affine1.scale);
                f(&mut affine1.shift);
                f(conv2.weight.as_slice_mut().unwrap());
                f(&mut conv2.bias);
                f(&mut affine2.scale);
                f(&mut affine2.shift);
            }
            DecoderLayer::Output { conv } => {
                f(conv.weight.as_slice_mut().unwrap());
                f(&mut conv.bias);
            }
        }
    }
}

/// Intermediate tensors cached per layer for the backward pass.
#[derive(Debug, Clone)]
pub enum LayerTrace<F> {
    Conv { input: Array3<F>, conv_out: Array3<F>, affine_out: Array3<F> },
    Residual {
        input: Array3<F>,
        conv1_out: Array3<F>,
        affine1_out: Array3<F>,
        hidden: Array3<F>,
        conv2_out: Array3<F>,
    },
    Deconv { input: Array3<F>, conv_out: Array3<F>, affine_out: Array3<F> },
    Output { input: Array3<F>, conv_out: Array3<F> },
}

#[derive(Debug, Clone)]
pub struct DecoderTrace<F> {
    pub layers: Vec<LayerTrace<F>>,
    pub output: Array3<F>,
}

/// Run the decoder chain on an encoder feature map.
pub fn decoder_forward<F: Real>(
    layers: &[DecoderLayer<F>],
    features: &Array3<F>,
) -> Result<(Array3<F>, DecoderTrace<F>)> {
    let mut x = features.clone();
    let mut traces = Vec::with_capacity(layers.len());
    for layer in layers {
        x = match layer {
            DecoderLayer::Conv { conv, affine, act } => {
                let conv_out = conv.forward(&x)?;
                let affine_out = affine.forward(&conv_out);
                let y = act.apply(&affine_out);
                traces.push(LayerTrace::Conv { input: x, conv_out, affine_out });
                y
            }
            DecoderLayer::Residual { conv1, affine1, conv2, affine2 } => {
                if conv2.weight.dim().0 != x.dim().0 {
                    return Err(Error::Argument(format!(
                        "residual block of {} channels fed {} channels",
                        conv2.weight.dim().0,
                        x.dim().0
                    )));
                }
                let conv1_out = conv1.forward(&x)?;
                let affine1_out = affine1.forward(&conv1_out);
                let hidden = Activation::Relu.apply(&affine1_out);
                let conv2_out = conv2.forward(&hidden)?;
                let affine2_out = affine2.forward(&conv2_out);
                let y = &x + &affine2_out;
                traces.push(LayerTrace::Residual { input: x, conv1_out, affine1_out, hidden, conv2_out });
                y
            }
            DecoderLayer::Deconv { conv, affine } => {
                if x.dim().0 != conv.weight.dim().1 {
                    return Err(Error::Argument(format!(
                        "channel mismatch: input has {}, deconv expects {}",
                        x.dim().0,
                        conv.weight.dim().1
                    )));
                }
                let conv_out = deconv2d(&x, &conv.weight, Some(&conv.bias), conv.stride, conv.padding);
                let affine_out = affine.forward(&conv_out);
                let y = Activation::Relu.apply(&affine_out);
                traces.push(LayerTrace::Deconv { input: x, conv_out, affine_out });
                y
            }
            DecoderLayer::Output { conv } => {
                let conv_out = conv.forward(&x)?;
                let y = Activation::Tanh.apply(&conv_out);
                traces.push(LayerTrace::Output { input: x, conv_out });
                y
            }
        };
    }
    Ok((x.clone(), DecoderTrace { layers: traces, output: x }))
}

/// Reverse-mode pass; returns parameter gradient blocks in the same canonical
/// order as `visit_params`, plus the gradient on the decoder input.
pub fn decoder_backward<F: Real>(
    layers: &[DecoderLayer<F>],
    trace: &DecoderTrace<F>,
    d_output: &Array3<F>,
) -> Result<(Vec<Vec<F>>, Array3<F>)> {
    if trace.layers.len() != layers.len() {
        return Err(Error::State("decoder trace does not match the layer stack".into()));
    }
    let mut grad_blocks_rev: Vec<Vec<F>> = Vec::new();
    let mut grad = d_output.clone();

    for (layer, cache) in layers.iter().zip(trace.layers.iter()).rev() {
        match (layer, cache) {
            (
                DecoderLayer::Conv { conv, affine, act },
                LayerTrace::Conv { input, conv_out, affine_out },
            ) => {
                let d_pre = &grad * &act.derive(affine_out);
                let (d_conv_out, d_scale, d_shift) = affine.backward(conv_out, &d_pre);
                let d_w =
                    conv2d_backward_weight(input, &d_conv_out, kernel_of(&conv.weight), conv.stride, conv.padding);
                let d_b = conv2d_backward_bias(&d_conv_out);
                grad = conv2d_backward_input(&d_conv_out, &conv.weight, input.dim(), conv.stride, conv.padding);
                // Reverse of visit order: shift, scale, bias, weight.
                grad_blocks_rev.push(d_shift);
                grad_blocks_rev.push(d_scale);
                grad_blocks_rev.push(d_b);
                grad_blocks_rev.push(d_w.into_raw_vec_and_offset().0);
            }
            (
                DecoderLayer::Residual { conv1, affine1, conv2, affine2 },
                LayerTrace::Residual { input, conv1_out, affine1_out, hidden, conv2_out },
            ) => {
                // y = x + affine2(conv2(relu(affine1(conv1(x)))))
                let (d_conv2_out, d_scale2, d_shift2) = affine2.backward(conv2_out, &grad);
                let d_w2 = conv2d_backward_weight(hidden, &d_conv2_out, kernel_of(&conv2.weight), 1, conv2.padding);
                let d_b2 = conv2d_backward_bias(&d_conv2_out);
                let d_hidden =
                    conv2d_backward_input(&d_conv2_out, &conv2.weight, hidden.dim(), 1, conv2.padding);
                let d_affine1_out = &d_hidden * &Activation::Relu.derive(affine1_out);
                let (d_conv1_out, d_scale1, d_shift1) = affine1.backward(conv1_out, &d_affine1_out);
                let d_w1 = conv2d_backward_weight(input, &d_conv1_out, kernel_of(&conv1.weight), 1, conv1.padding);
                let d_b1 = conv2d_backward_bias(&d_conv1_out);
                let d_branch =
                    conv2d_backward_input(&d_conv1_out, &conv1.weight, input.dim(), 1, conv1.padding);
                grad_blocks_rev.push(d_shift2);
                grad_blocks_rev.push(d_scale2);
                grad_blocks_rev.push(d_b2);
                grad_blocks_rev.push(d_w2.into_raw_vec_and_offset().0);
                grad_blocks_rev.push(d_shift1);
                grad_blocks_rev.push(d_scale1);
                grad_blocks_rev.push(d_b1);
                grad_blocks_rev.push(d_w1.into_raw_vec_and_offset().0);
                grad = grad + d_branch; // skip path
            }
            (
                DecoderLayer::Deconv { conv, affine },
                LayerTrace::Deconv { input, conv_out, affine_out },
            ) => {
                let d_pre = &grad * &Activation::Relu.derive(affine_out);
                let (d_conv_out, d_scale, d_shift) = affine.backward(conv_out, &d_pre);
                let d_w = deconv2d_backward_weight(input, &d_conv_out, kernel_of(&conv.weight), conv.stride, conv.padding);
                let d_b = conv2d_backward_bias(&d_conv_out);
                grad = deconv2d_backward_input(&d_conv_out, &conv.weight, input.dim(), conv.stride, conv.padding);
                grad_blocks_rev.push(d_shift);
                grad_blocks_rev.push(d_scale);
                grad_blocks_rev.push(d_b);
                grad_blocks_rev.push(d_w.into_raw_vec_and_offset().0);
            }
            (DecoderLayer::Output { conv }, LayerTrace::Output { input, conv_out }) => {
                let d_pre = &grad * &Activation::Tanh.derive(conv_out);
                let d_w = conv2d_backward_weight(input, &d_pre, kernel_of(&conv.weight), conv.stride, conv.padding);
                let d_b = conv2d_backward_bias(&d_pre);
                grad = conv2d_backward_input(&d_pre, &conv.weight, input.dim(), conv.stride, conv.padding);
                grad_blocks_rev.push(d_b);
                grad_blocks_rev.push(d_w.into_raw_vec_and_offset().0);
            }
            _ => return Err(Error::State("decoder trace kind does not match layer kind".into())),
        }
    }
    grad_blocks_rev.reverse();
    Ok((grad_blocks_rev, grad))
}

fn kernel_of<F>(w: &Array4<F>) -> (usize, usize) {
    (w.dim().2, w.dim().3)
}
