//! The spiking-convolution encoder: frames drive layer 1 step by step, each
//! layer convolves the previous layer's spikes into its input current, and
//! after `N` steps every tapped layer is aggregated to its spike rate.
//!
//! The backward pass propagates through both the layer and the time axis:
//! the spike step's derivative is the rectangular surrogate, and the reset
//! factor `(1 - o(t-1))` is differentiated through the same surrogate.

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::float::{fl, Real};

use super::conv::{conv2d, conv2d_backward_input, conv2d_backward_weight};
use super::lif::{lif_step_mode, LifConfig, SpikeMode};

/// One spiking convolution layer. Current is the pure weighted sum of
/// presynaptic spikes: no bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingConvLayer<F> {
    pub weight: Array4<F>,
    pub padding: usize,
}

/// Everything the backward pass needs from a forward run.
#[derive(Debug, Clone)]
pub struct EncoderTrace<F> {
    /// Normalized input frames, one per step.
    pub inputs: Vec<Array3<F>>,
    /// Membrane potentials, `[layer][step]`.
    pub potentials: Vec<Vec<Array3<F>>>,
    /// Spike outputs, `[layer][step]`.
    pub spikes: Vec<Vec<Array3<F>>>,
    /// Spike function used in the recorded run.
    pub mode: SpikeMode,
}

/// Encoder output: the concatenated rate maps plus the state trace.
pub struct EncoderOutput<F> {
    /// `[channels, h, w]`: mean input frame (if tapped), tapped layer rates
    /// in ascending order, then the final layer's rate.
    pub features: Array3<F>,
    pub trace: EncoderTrace<F>,
}

fn rate_of<F: Real>(per_step: &[Array3<F>]) -> Array3<F> {
    let n = fl::<F>(per_step.len() as f64);
    let mut sum = Array3::<F>::zeros(per_step[0].dim());
    for frame in per_step {
        sum = sum + frame;
    }
    sum.mapv_into(|v| v / n)
}

/// Unroll the spiking stack over all input frames. State starts at zero for
/// every sample; within a step, each layer consumes the spikes its
/// predecessor just produced.
pub fn encoder_forward<F: Real>(
    layers: &[SpikingConvLayer<F>],
    lif: &LifConfig<F>,
    skip_taps: &[usize],
    inputs: Vec<Array3<F>>,
    mode: SpikeMode,
) -> Result<EncoderOutput<F>> {
    if inputs.is_empty() {
        return Err(Error::Argument("encoder needs at least one input frame".into()));
    }
    let (_, h, w) = inputs[0].dim();
    let n_layers = layers.len();

    let mut potentials: Vec<Vec<Array3<F>>> = vec![Vec::with_capacity(inputs.len()); n_layers];
    let mut spikes: Vec<Vec<Array3<F>>> = vec![Vec::with_capacity(inputs.len()); n_layers];
    let mut u_state: Vec<Array3<F>> = layers
        .iter()
        .map(|l| Array3::zeros((l.weight.dim().0, h, w)))
        .collect();
    let mut o_state = u_state.clone();

    for frame in &inputs {
        let mut activation = frame.clone();
        for (l, layer) in layers.iter().enumerate() {
            let current = conv2d(&activation, &layer.weight, None, 1, layer.padding);
            let (u, o) = lif_step_mode(&u_state[l], &o_state[l], &current, lif, mode)?;
            potentials[l].push(u.clone());
            spikes[l].push(o.clone());
            u_state[l] = u;
            o_state[l] = o.clone();
            activation = o;
        }
    }

    let mut parts: Vec<Array3<F>> = Vec::new();
    for &tap in skip_taps {
        if tap == 0 {
            parts.push(rate_of(&inputs));
        } else {
            parts.push(rate_of(&spikes[tap - 1]));
        }
    }
    parts.push(rate_of(&spikes[n_layers - 1]));

    let channels: usize = parts.iter().map(|p| p.dim().0).sum();
    let mut features = Array3::<F>::zeros((channels, h, w));
    let mut at = 0;
    for part in &parts {
        let c = part.dim().0;
        features
            .slice_mut(ndarray::s![at..at + c, .., ..])
            .assign(part);
        at += c;
    }

    Ok(EncoderOutput {
        features,
        trace: EncoderTrace { inputs, potentials, spikes, mode },
    })
}

/// Spatio-temporal backward pass. Returns per-layer weight gradients in layer
/// order. `d_features` is the loss gradient on the concatenated rate map.
pub fn encoder_backward<F: Real>(
    layers: &[SpikingConvLayer<F>],
    lif: &LifConfig<F>,
    skip_taps: &[usize],
    trace: &EncoderTrace<F>,
    d_features: &Array3<F>,
) -> Result<Vec<Array4<F>>> {
    let n_layers = layers.len();
    let n_steps = trace.inputs.len();
    if n_steps == 0 || trace.spikes.iter().any(|s| s.len() != n_steps) {
        return Err(Error::State("encoder trace does not cover the forward run".into()));
    }
    let inv_n = F::one() / fl::<F>(n_steps as f64);

    // Split the feature gradient back into per-tap rate gradients. The input
    // mean tap carries no parameters, so its slice is skipped.
    let mut d_rate: Vec<Option<Array3<F>>> = vec![None; n_layers];
    let mut at = 0usize;
    for &tap in skip_taps {
        let c = if tap == 0 {
            trace.inputs[0].dim().0
        } else {
            layers[tap - 1].weight.dim().0
        };
        if tap > 0 {
            d_rate[tap - 1] = Some(d_features.slice(ndarray::s![at..at + c, .., ..]).to_owned());
        }
        at += c;
    }
    let c_last = layers[n_layers - 1].weight.dim().0;
    let final_slice = d_features.slice(ndarray::s![at..at + c_last, .., ..]).to_owned();
    d_rate[n_layers - 1] = match d_rate[n_layers - 1].take() {
        Some(existing) => Some(existing + &final_slice),
        None => Some(final_slice),
    };

    let mut grad_w: Vec<Array4<F>> = layers.iter().map(|l| Array4::zeros(l.weight.dim())).collect();
    // du_next[l]: dLoss/du^l(t+1), from the previously processed (later) step.
    let mut du_next: Vec<Option<Array3<F>>> = vec![None; n_layers];

    for t in (0..n_steps).rev() {
        // dLoss/do^l(t) contribution from layer l+1's current at this step.
        let mut do_from_above: Option<Array3<F>> = None;
        for l in (0..n_layers).rev() {
            let u_t = &trace.potentials[l][t];
            let o_t = &trace.spikes[l][t];

            let mut d_o = Array3::<F>::zeros(u_t.dim());
            if let Some(dr) = &d_rate[l] {
                d_o.zip_mut_with(dr, |d, &g| *d += g * inv_n);
            }
            if let Some(above) = do_from_above.take() {
                d_o = d_o + &above;
            }
            if let Some(du1) = &du_next[l] {
                // u(t+1) = alpha * u(t) * (1 - o(t)) + c(t+1):
                // the reset path d u(t+1) / d o(t) = -alpha * u(t).
                ndarray::Zip::from(&mut d_o).and(du1).and(u_t).for_each(|d, &g, &u| {
                    *d = *d - lif.alpha * g * u;
                });
            }

            // d u(t): through the spike surrogate plus the leak path
            // d u(t+1) / d u(t) = alpha * (1 - o(t)).
            let mut d_u = Array3::<F>::zeros(u_t.dim());
            ndarray::Zip::from(&mut d_u).and(&d_o).and(u_t).for_each(|d, &g, &u| {
                *d = g * lif.surrogate_grad(u);
            });
            if let Some(du1) = &du_next[l] {
                ndarray::Zip::from(&mut d_u).and(du1).and(o_t).for_each(|d, &g, &o| {
                    *d = *d + lif.alpha * g * (F::one() - o);
                });
            }

            // d current = d u; accumulate weight gradients and pass the
            // input gradient down one layer.
            let conv_input = if l == 0 { &trace.inputs[t] } else { &trace.spikes[l - 1][t] };
            let (kh, kw) = (layers[l].weight.dim().2, layers[l].weight.dim().3);
            grad_w[l] = grad_w[l].clone()
                + conv2d_backward_weight(conv_input, &d_u, (kh, kw), 1, layers[l].padding);
            if l > 0 {
                do_from_above = Some(conv2d_backward_input(
                    &d_u,
                    &layers[l].weight,
                    conv_input.dim(),
                    1,
                    layers[l].padding,
                ));
            }
            du_next[l] = Some(d_u);
        }
    }
    Ok(grad_w)
}
