//! Fixed-weight convolutional feature extractors for the perceptual loss.
//!
//! The production extractor is a seeded four-layer strided stack with a tap
//! after every layer; its weights are frozen at construction and never
//! receive gradient updates. An identity extractor exists for exact
//! hand-computed loss tests.

use ndarray::{Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::float::{fl, Real};

use super::conv::{conv2d, conv2d_backward_input};

/// Maps an image to a list of feature maps ("taps"). Implementations carry no
/// trainable state.
pub trait FeatureExtractor<F: Real>: Send + Sync {
    fn tap_count(&self) -> usize;

    /// Feature maps at every tap.
    fn forward_taps(&self, x: &Array3<F>) -> Vec<Array3<F>>;

    /// Gradient with respect to `x` of `sum_k <tap_grads[k], tap_k(x)>`.
    fn backward(&self, x: &Array3<F>, tap_grads: &[Array3<F>]) -> Array3<F>;
}

/// The image itself as the single tap; turns the perceptual loss into a plain
/// normalized squared error.
pub struct IdentityFeatures;

impl<F: Real> FeatureExtractor<F> for IdentityFeatures {
    fn tap_count(&self) -> usize {
        1
    }

    fn forward_taps(&self, x: &Array3<F>) -> Vec<Array3<F>> {
        vec![x.clone()]
    }

    fn backward(&self, _x: &Array3<F>, tap_grads: &[Array3<F>]) -> Array3<F> {
        tap_grads[0].clone()
    }
}

/// Seeded, immutable stack of 3x3 stride-2 convolutions with tanh, tapped
/// after every layer.
pub struct SeededConvFeatures<F> {
    layers: Vec<Array4<F>>,
}

const FEATURE_CHANNELS: [usize; 4] = [8, 16, 16, 16];
const FEATURE_PAD: usize = 1;
const FEATURE_STRIDE: usize = 2;

impl<F: Real> SeededConvFeatures<F> {
    pub fn new(seed: u64, in_channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut c_in = in_channels;
        for &c_out in &FEATURE_CHANNELS {
            let std = (1.0 / (c_in * 9) as f64).sqrt();
            let dist = Normal::new(0.0, std).unwrap();
            let weight =
                Array4::from_shape_fn((c_out, c_in, 3, 3), |_| fl::<F>(dist.sample(&mut rng)));
            layers.push(weight);
            c_in = c_out;
        }
        Self { layers }
    }

    fn run(&self, x: &Array3<F>) -> (Vec<Array3<F>>, Vec<Array3<F>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut taps = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for w in &self.layers {
            let z = conv2d(&a, w, None, FEATURE_STRIDE, FEATURE_PAD);
            let t = z.mapv(|v| v.tanh());
            pre.push(z);
            taps.push(t.clone());
            a = t;
        }
        (pre, taps)
    }
}

impl<F: Real> FeatureExtractor<F> for SeededConvFeatures<F> {
    fn tap_count(&self) -> usize {
        self.layers.len()
    }

    fn forward_taps(&self, x: &Array3<F>) -> Vec<Array3<F>> {
        self.run(x).1
    }

    fn backward(&self, x: &Array3<F>, tap_grads: &[Array3<F>]) -> Array3<F> {
        let (pre, taps) = self.run(x);
        let mut grad: Option<Array3<F>> = None;
        for l in (0..self.layers.len()).rev() {
            let mut g = tap_grads[l].clone();
            if let Some(upper) = grad.take() {
                g = g + &upper;
            }
            // through tanh
            let dz = ndarray::Zip::from(&g).and(&pre[l]).map_collect(|&gv, &z| {
                let t = z.tanh();
                gv * (F::one() - t * t)
            });
            let input_dim = if l == 0 { x.dim() } else { taps[l - 1].dim() };
            grad = Some(conv2d_backward_input(&dz, &self.layers[l], input_dim, FEATURE_STRIDE, FEATURE_PAD));
        }
        grad.expect("at least one layer")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn seeded_weights_are_reproducible() {
        let a = SeededConvFeatures::<f64>::new(9, 1);
        let b = SeededConvFeatures::<f64>::new(9, 1);
        let x = Array3::from_shape_fn((1, 16, 16), |(_, y, c)| ((y * 17 + c) % 9) as f64 / 9.0);
        let ta = a.forward_taps(&x);
        let tb = b.forward_taps(&x);
        assert_eq!(ta.len(), 4);
        for (p, q) in ta.iter().zip(tb.iter()) {
            assert_eq!(p, q);
        }
        let c = SeededConvFeatures::<f64>::new(10, 1);
        assert_ne!(c.forward_taps(&x)[0], ta[0]);
    }

    #[test]
    fn tap_shapes_halve() {
        let f = SeededConvFeatures::<f64>::new(3, 1);
        let x = Array3::<f64>::zeros((1, 32, 32));
        let taps = f.forward_taps(&x);
        assert_eq!(taps[0].dim(), (8, 16, 16));
        assert_eq!(taps[1].dim(), (16, 8, 8));
        assert_eq!(taps[2].dim(), (16, 4, 4));
        assert_eq!(taps[3].dim(), (16, 2, 2));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let f = SeededConvFeatures::<f64>::new(21, 1);
        let x = Array3::from_shape_fn((1, 8, 8), |(_, y, c)| ((y * 5 + c * 3) % 7) as f64 / 7.0 - 0.4);
        let taps = f.forward_taps(&x);
        let tap_grads: Vec<Array3<f64>> = taps
            .iter()
            .map(|t| Array3::from_shape_fn(t.dim(), |(c, y, x)| 0.1 + ((c + 2 * y + 3 * x) % 5) as f64 * 0.07))
            .collect();
        let grad = f.backward(&x, &tap_grads);

        let scalar = |x: &Array3<f64>| -> f64 {
            f.forward_taps(x)
                .iter()
                .zip(&tap_grads)
                .map(|(t, g)| t.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };
        let eps = 1e-6;
        for idx in [(0usize, 0usize, 0usize), (0, 3, 5), (0, 7, 7), (0, 4, 2)] {
            let mut plus = x.clone();
            plus[idx] += eps;
            let mut minus = x.clone();
            minus[idx] -= eps;
            let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * eps);
            assert!((fd - grad[idx]).abs() < 1e-6, "at {idx:?}: {fd} vs {}", grad[idx]);
        }
    }
}
