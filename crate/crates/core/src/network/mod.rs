//! The hybrid reconstruction model: a spiking-convolution encoder unrolled
//! over the frame sequence, a convolutional decoder over the aggregated spike
//! rates, losses, surrogate-gradient training, and checkpoint I/O.

pub mod checkpoint;
pub mod conv;
pub mod decoder;
pub mod encoder;
pub mod feature;
pub mod lif;
pub mod loss;
pub mod spec;
pub mod train;

use ndarray::{Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::float::{fl, Real};
use crate::framing::FrameSequence;

use decoder::{Activation, AffineParams, ConvParams, DecoderLayer, DecoderTrace};
use encoder::{EncoderTrace, SpikingConvLayer};
use lif::{LifConfig, SpikeMode};
use spec::{LayerKind, LayerSpec, NetworkSpec};

/// Parameter gradients in the network's canonical block order (encoder
/// layers first, then decoder layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub blocks: Vec<Vec<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn max_abs(&self) -> F {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .fold(F::zero(), |acc, &v| acc.max(v.abs()))
    }
}

/// State recorded by a full forward pass, consumed by [`HybridNetwork::backward`].
pub struct ForwardTrace<F> {
    pub encoder: EncoderTrace<F>,
    pub features: Array3<F>,
    pub decoder: DecoderTrace<F>,
}

/// The spiking-encoder / convolutional-decoder model.
pub struct HybridNetwork<F> {
    spec: NetworkSpec,
    lif: LifConfig<F>,
    encoder: Vec<SpikingConvLayer<F>>,
    decoder: Vec<DecoderLayer<F>>,
}

impl<F: Real> HybridNetwork<F> {
    /// Build a network with seeded weight initialization.
    pub fn build(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let lif = LifConfig::new(fl(spec.lif.alpha), fl(spec.lif.u_th), fl(spec.lif.surrogate_width))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

        let mut encoder = Vec::with_capacity(spec.encoder.len());
        let mut c_in = spec.input_channels;
        for l in &spec.encoder {
            let fan_in = c_in * l.kernel * l.kernel;
            let weight = sample_weight(&mut rng, (l.channels_out, c_in, l.kernel, l.kernel), 2.0 / fan_in as f64);
            encoder.push(SpikingConvLayer { weight, padding: l.padding });
            c_in = l.channels_out;
        }

        let mut decoder = Vec::with_capacity(spec.decoder.len());
        let mut c_in = spec.feature_channels();
        for l in &spec.decoder {
            decoder.push(build_decoder_layer(&mut rng, l, c_in)?);
            c_in = l.channels_out;
        }
        Ok(Self { spec, lif, encoder, decoder })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn lif(&self) -> &LifConfig<F> {
        &self.lif
    }

    pub fn n_steps(&self) -> usize {
        self.spec.n_steps
    }

    /// Convert raw counts into the normalized per-step input frames: divide
    /// by the 99th-percentile count (at least 1) and clip to `[0, 1]`.
    pub fn normalize_frames(seq: &FrameSequence) -> Vec<Array3<F>> {
        let data = seq.data();
        let (n, c, h, w) = data.dim();
        let mut sorted: Vec<u32> = data.iter().copied().collect();
        sorted.sort_unstable();
        let rank = ((0.99 * sorted.len() as f64).ceil() as usize).max(1) - 1;
        let divisor = fl::<F>(f64::from(sorted[rank]).max(1.0));
        (0..n)
            .map(|i| {
                Array3::from_shape_fn((c, h, w), |(ci, y, x)| {
                    (fl::<F>(f64::from(data[[i, ci, y, x]])) / divisor).min(F::one())
                })
            })
            .collect()
    }

    /// Unroll the spiking encoder over normalized frames; the result is the
    /// concatenated spike-rate feature map and the state trace.
    pub fn encoder_forward(&self, frames: &[Array3<F>]) -> Result<(Array3<F>, EncoderTrace<F>)> {
        self.encoder_forward_mode(frames, SpikeMode::Hard)
    }

    /// Encoder forward with an explicit spike mode; `SoftRamp` is the
    /// differentiable reference model used by gradient diagnostics.
    pub fn encoder_forward_mode(
        &self,
        frames: &[Array3<F>],
        mode: SpikeMode,
    ) -> Result<(Array3<F>, EncoderTrace<F>)> {
        if frames.len() != self.spec.n_steps {
            return Err(Error::Argument(format!(
                "{} input frames for a {}-step encoder",
                frames.len(),
                self.spec.n_steps
            )));
        }
        for f in frames {
            if f.dim().0 != self.spec.input_channels {
                return Err(Error::Argument(format!(
                    "input frame has {} channels, expected {}",
                    f.dim().0,
                    self.spec.input_channels
                )));
            }
        }
        let out = encoder::encoder_forward(&self.encoder, &self.lif, &self.spec.skip_taps, frames.to_vec(), mode)?;
        Ok((out.features, out.trace))
    }

    /// Run the decoder on an encoder feature map; output values lie in
    /// `[-1, 1]`.
    pub fn decoder_forward(&self, features: &Array3<F>) -> Result<(Array3<F>, DecoderTrace<F>)> {
        if features.dim().0 != self.spec.feature_channels() {
            return Err(Error::Argument(format!(
                "feature map has {} channels, decoder expects {}",
                features.dim().0,
                self.spec.feature_channels()
            )));
        }
        decoder::decoder_forward(&self.decoder, features)
    }

    /// Full forward pass over a frame sequence.
    pub fn forward(&self, seq: &FrameSequence) -> Result<(Array3<F>, ForwardTrace<F>)> {
        if seq.n() != self.spec.n_steps {
            return Err(Error::Argument(format!(
                "sequence has {} intervals, network expects {}",
                seq.n(),
                self.spec.n_steps
            )));
        }
        let frames = Self::normalize_frames(seq);
        let (features, enc_trace) = self.encoder_forward(&frames)?;
        let (output, dec_trace) = self.decoder_forward(&features)?;
        Ok((output, ForwardTrace { encoder: enc_trace, features, decoder: dec_trace }))
    }

    /// Reverse-mode gradients: exact through the decoder, surrogate
    /// spatio-temporal backpropagation through the encoder.
    pub fn backward(&self, trace: &ForwardTrace<F>, d_output: &Array3<F>) -> Result<Gradients<F>> {
        let (decoder_blocks, d_features) =
            decoder::decoder_backward(&self.decoder, &trace.decoder, d_output)?;
        let encoder_grads = encoder::encoder_backward(
            &self.encoder,
            &self.lif,
            &self.spec.skip_taps,
            &trace.encoder,
            &d_features,
        )?;
        let mut blocks: Vec<Vec<F>> = encoder_grads
            .into_iter()
            .map(|g| g.into_raw_vec_and_offset().0)
            .collect();
        blocks.extend(decoder_blocks);
        Ok(Gradients { blocks })
    }

    /// Visit every parameter block in canonical order.
    pub fn visit_params(&self, f: &mut impl FnMut(&[F])) {
        for l in &self.encoder {
            f(l.weight.as_slice().unwrap());
        }
        for l in &self.decoder {
            l.visit_params(f);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut [F])) {
        for l in &mut self.encoder {
            f(l.weight.as_slice_mut().unwrap());
        }
        for l in &mut self.decoder {
            l.visit_params_mut(f);
        }
    }

    pub fn param_block_lens(&self) -> Vec<usize> {
        let mut lens = Vec::new();
        self.visit_params(&mut |p| lens.push(p.len()));
        lens
    }

    pub fn param_count(&self) -> usize {
        self.param_block_lens().iter().sum()
    }

    /// All parameters flattened in canonical order.
    pub fn params_flat(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit_params(&mut |p| out.extend_from_slice(p));
        out
    }

    /// Overwrite all parameters from a flat canonical-order vector.
    pub fn set_params_flat(&mut self, values: &[F]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Argument(format!(
                "{} parameter values for a {}-parameter network",
                values.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        self.visit_params_mut(&mut |p| {
            p.copy_from_slice(&values[at..at + p.len()]);
            at += p.len();
        });
        Ok(())
    }
}

fn sample_weight<F: Real>(
    rng: &mut ChaCha8Rng,
    shape: (usize, usize, usize, usize),
    variance: f64,
) -> Array4<F> {
    let dist = Normal::new(0.0, variance.sqrt()).unwrap();
    Array4::from_shape_fn(shape, |_| fl::<F>(dist.sample(rng)))
}

fn build_decoder_layer<F: Real>(
    rng: &mut ChaCha8Rng,
    l: &LayerSpec,
    c_in: usize,
) -> Result<DecoderLayer<F>> {
    let he = |k: usize, c_in: usize| 2.0 / (c_in * k * k) as f64;
    let conv_params = |rng: &mut ChaCha8Rng, c_out: usize, c_in: usize, k: usize, stride: usize, pad: usize| ConvParams {
        weight: sample_weight(rng, (c_out, c_in, k, k), he(k, c_in)),
        bias: vec![F::zero(); c_out],
        stride,
        padding: pad,
    };
    Ok(match l.kind {
        LayerKind::Conv => DecoderLayer::Conv {
            conv: conv_params(rng, l.channels_out, c_in, l.kernel, l.stride, l.padding),
            affine: AffineParams { scale: vec![F::one(); l.channels_out], shift: vec![F::zero(); l.channels_out] },
            act: Activation::from(l.activation),
        },
        LayerKind::Residual => {
            if l.channels_out != c_in {
                return Err(Error::Validation(format!(
                    "residual block of {} channels placed after {} channels",
                    l.channels_out, c_in
                )));
            }
            DecoderLayer::Residual {
                conv1: conv_params(rng, l.channels_out, c_in, l.kernel, 1, l.padding),
                affine1: AffineParams { scale: vec![F::one(); l.channels_out], shift: vec![F::zero(); l.channels_out] },
                conv2: conv_params(rng, l.channels_out, l.channels_out, l.kernel, 1, l.padding),
                affine2: AffineParams { scale: vec![F::one(); l.channels_out], shift: vec![F::zero(); l.channels_out] },
            }
        }
        LayerKind::Deconv => DecoderLayer::Deconv {
            conv: conv_params(rng, l.channels_out, c_in, l.kernel, l.stride, l.padding),
            affine: AffineParams { scale: vec![F::one(); l.channels_out], shift: vec![F::zero(); l.channels_out] },
        },
        LayerKind::Output => DecoderLayer::Output {
            conv: ConvParams {
                weight: sample_weight(rng, (l.channels_out, c_in, l.kernel, l.kernel), 1.0 / (c_in * l.kernel * l.kernel) as f64),
                bias: vec![F::zero(); l.channels_out],
                stride: l.stride,
                padding: l.padding,
            },
        },
        LayerKind::SpikingConv => {
            return Err(Error::Validation("spiking layers are encoder-only".into()))
        }
    })
}
