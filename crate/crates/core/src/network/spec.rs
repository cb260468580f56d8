//! Declarative network architecture: layer specs, the compact layer notation
//! (`sconv3p1-16`, `c3s2-128`, `r-256`, `deconv-64`), and whole-network specs
//! serialized into checkpoint manifests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    SpikingConv,
    Conv,
    Residual,
    Deconv,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationSpec {
    Relu,
    Tanh,
    None,
}

/// One layer of the encoder or decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub channels_out: usize,
    pub activation: ActivationSpec,
}

/// Parse one compact layer token:
///
/// * `sconvCpP-K`: spiking convolution, kernel `C`, stride 1, padding `P`
/// * `cCsS-K`: convolution + per-channel affine + ReLU
/// * `r-K`: residual block of two 3x3 convolutions
/// * `deconv-K`: 3x3 fractional-stride (1/2) convolution + affine + ReLU
pub fn parse_layer(token: &str) -> Result<LayerSpec> {
    let bad = || Error::Format(format!("bad layer token {:?}", token));
    let (head, channels) = token.rsplit_once('-').ok_or_else(bad)?;
    let channels_out: usize = channels.parse().map_err(|_| bad())?;
    if channels_out == 0 {
        return Err(bad());
    }
    if head == "r" {
        return Ok(LayerSpec {
            kind: LayerKind::Residual,
            kernel: 3,
            stride: 1,
            padding: 1,
            channels_out,
            activation: ActivationSpec::Relu,
        });
    }
    if head == "deconv" {
        return Ok(LayerSpec {
            kind: LayerKind::Deconv,
            kernel: 3,
            stride: 2,
            padding: 1,
            channels_out,
            activation: ActivationSpec::Relu,
        });
    }
    if let Some(rest) = head.strip_prefix("sconv") {
        let (kernel, padding) = rest.split_once('p').ok_or_else(bad)?;
        return Ok(LayerSpec {
            kind: LayerKind::SpikingConv,
            kernel: kernel.parse().map_err(|_| bad())?,
            stride: 1,
            padding: padding.parse().map_err(|_| bad())?,
            channels_out,
            activation: ActivationSpec::None,
        });
    }
    if let Some(rest) = head.strip_prefix('c') {
        let (kernel, stride) = rest.split_once('s').ok_or_else(bad)?;
        let kernel: usize = kernel.parse().map_err(|_| bad())?;
        return Ok(LayerSpec {
            kind: LayerKind::Conv,
            kernel,
            stride: stride.parse().map_err(|_| bad())?,
            padding: (kernel.max(1) - 1) / 2,
            channels_out,
            activation: ActivationSpec::Relu,
        });
    }
    Err(bad())
}

/// Parse a comma-separated encoder chain; every layer must be a spatial-size
/// preserving spiking convolution.
pub fn parse_encoder(spec: &str) -> Result<Vec<LayerSpec>> {
    let layers: Vec<LayerSpec> = spec.split(',').map(|t| parse_layer(t.trim())).collect::<Result<_>>()?;
    if layers.is_empty() {
        return Err(Error::Format("encoder spec is empty".into()));
    }
    for l in &layers {
        if l.kind != LayerKind::SpikingConv {
            return Err(Error::Validation(format!(
                "encoder layers must be spiking convolutions, got {:?}",
                l.kind
            )));
        }
        if l.stride != 1 || l.kernel % 2 == 0 || l.padding != (l.kernel - 1) / 2 {
            return Err(Error::Validation(format!(
                "spiking layer kernel {} pad {} stride {} does not preserve spatial size",
                l.kernel, l.padding, l.stride
            )));
        }
    }
    Ok(layers)
}

/// Parse a comma-separated decoder chain; the final token must be a
/// convolution and becomes the tanh output layer (no affine).
pub fn parse_decoder(spec: &str) -> Result<Vec<LayerSpec>> {
    let mut layers: Vec<LayerSpec> =
        spec.split(',').map(|t| parse_layer(t.trim())).collect::<Result<_>>()?;
    if layers.is_empty() {
        return Err(Error::Format("decoder spec is empty".into()));
    }
    let last = layers.last_mut().unwrap();
    if last.kind != LayerKind::Conv {
        return Err(Error::Validation(
            "decoder must end with a convolution token for the output layer".into(),
        ));
    }
    last.kind = LayerKind::Output;
    last.activation = ActivationSpec::Tanh;
    for l in &layers {
        if l.kind == LayerKind::SpikingConv {
            return Err(Error::Validation("spiking layers are encoder-only".into()));
        }
    }
    Ok(layers)
}

/// LIF parameters as stored in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifSpec {
    pub alpha: f64,
    pub u_th: f64,
    pub surrogate_width: f64,
}

impl Default for LifSpec {
    fn default() -> Self {
        Self { alpha: 0.8, u_th: 0.5, surrogate_width: 1.0 }
    }
}

/// Complete architecture description; everything needed to rebuild a network
/// shape from a checkpoint manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Channels of each input frame (two: positive and negative events).
    pub input_channels: usize,
    /// Encoder time steps; must equal the frame-sequence interval count.
    pub n_steps: usize,
    pub lif: LifSpec,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    /// Spike-rate maps concatenated into the decoder input: `0` is the mean
    /// input frame, `k >= 1` the rate of spiking layer `k`. The final spiking
    /// layer's rate is always included and must not be listed.
    pub skip_taps: Vec<usize>,
    /// Weight-initialization seed.
    pub seed: u64,
}

impl NetworkSpec {
    /// The desk-scale default: a thin three-layer spiking encoder with skip
    /// taps on the input and the first two spiking layers, and a compact
    /// residual decoder.
    pub fn desk_default(n_steps: usize, seed: u64) -> Self {
        Self {
            input_channels: 2,
            n_steps,
            lif: LifSpec::default(),
            encoder: parse_encoder("sconv3p1-8,sconv1p0-8,sconv1p0-16").unwrap(),
            decoder: parse_decoder("c3s1-16,r-16,r-16,c3s1-1").unwrap(),
            skip_taps: vec![0, 1, 2],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.n_steps == 0 {
            return Err(Error::Validation("input_channels and n_steps must be positive".into()));
        }
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::Validation("encoder and decoder must be non-empty".into()));
        }
        for l in &self.encoder {
            if l.kind != LayerKind::SpikingConv {
                return Err(Error::Validation("encoder layers must be spiking convolutions".into()));
            }
        }
        if self.decoder.last().unwrap().kind != LayerKind::Output {
            return Err(Error::Validation("decoder must end with an output layer".into()));
        }
        for (i, l) in self.decoder.iter().enumerate() {
            match l.kind {
                LayerKind::SpikingConv => {
                    return Err(Error::Validation("spiking layers are encoder-only".into()))
                }
                LayerKind::Output if i + 1 != self.decoder.len() => {
                    return Err(Error::Validation("output layer must be last".into()))
                }
                _ => {}
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for &tap in &self.skip_taps {
            if tap >= self.encoder.len() {
                return Err(Error::Validation(format!(
                    "skip tap {} out of range (the final layer {} is always included)",
                    tap,
                    self.encoder.len()
                )));
            }
            if !seen.insert(tap) {
                return Err(Error::Validation(format!("duplicate skip tap {}", tap)));
            }
        }
        Ok(())
    }

    /// Channel count of the concatenated encoder feature map.
    pub fn feature_channels(&self) -> usize {
        let mut channels = self.encoder.last().unwrap().channels_out;
        for &tap in &self.skip_taps {
            channels += if tap == 0 {
                self.input_channels
            } else {
                self.encoder[tap - 1].channels_out
            };
        }
        channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_supplement_notation() {
        let l = parse_layer("c7s1-64").unwrap();
        assert_eq!((l.kind, l.kernel, l.stride, l.padding, l.channels_out), (LayerKind::Conv, 7, 1, 3, 64));

        let l = parse_layer("c3s2-128").unwrap();
        assert_eq!((l.kernel, l.stride, l.padding), (3, 2, 1));

        let l = parse_layer("r-256").unwrap();
        assert_eq!((l.kind, l.channels_out), (LayerKind::Residual, 256));

        let l = parse_layer("deconv-128").unwrap();
        assert_eq!((l.kind, l.stride), (LayerKind::Deconv, 2));

        let l = parse_layer("sconv3p1-16").unwrap();
        assert_eq!((l.kind, l.kernel, l.padding), (LayerKind::SpikingConv, 3, 1));
        let l = parse_layer("sconv1p0-32").unwrap();
        assert_eq!((l.kernel, l.padding, l.channels_out), (1, 0, 32));
    }

    #[test]
    fn rejects_bad_tokens() {
        for t in ["", "c3-16", "x3s1-4", "r-0", "sconv3-16", "conv3p1-8"] {
            assert!(parse_layer(t).is_err(), "token {t:?}");
        }
    }

    #[test]
    fn paper_scale_chain_parses() {
        let enc = parse_encoder("sconv3p1-16,sconv1p0-16,sconv1p0-32").unwrap();
        assert_eq!(enc.len(), 3);
        let dec = parse_decoder(
            "c7s1-64,c3s2-128,c3s2-256,r-256,r-256,r-256,r-256,r-256,r-256,r-256,r-256,r-256,deconv-128,deconv-64,c7s1-1",
        )
        .unwrap();
        assert_eq!(dec.len(), 15);
        assert_eq!(dec.last().unwrap().kind, LayerKind::Output);
        assert_eq!(dec.last().unwrap().activation, ActivationSpec::Tanh);
    }

    #[test]
    fn encoder_must_preserve_size() {
        assert!(parse_encoder("sconv3p0-8").is_err());
    }

    #[test]
    fn desk_default_is_valid() {
        let spec = NetworkSpec::desk_default(10, 3);
        spec.validate().unwrap();
        assert_eq!(spec.feature_channels(), 2 + 8 + 8 + 16);
    }

    #[test]
    fn tap_on_final_layer_rejected() {
        let mut spec = NetworkSpec::desk_default(10, 3);
        spec.skip_taps = vec![0, 3];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn manifest_round_trips_through_json() {
        let spec = NetworkSpec::desk_default(30, 42);
        let json = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
