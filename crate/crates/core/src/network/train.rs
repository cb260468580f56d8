//! Adam optimization with a step-decay learning-rate schedule and a
//! deterministic, seeded training loop.

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::float::{fl, Real};
use crate::framing::FrameSequence;
use crate::image::Image;

use super::loss::{total_loss_grad, LossConfig};
use super::{Gradients, HybridNetwork};

/// Adam moment state over the network's canonical parameter blocks.
pub struct Adam<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    step: u64,
    beta1: F,
    beta2: F,
    epsilon: F,
}

impl<F: Real> Adam<F> {
    /// Standard moments: `b1 = 0.9`, `b2 = 0.999`, `eps = 1e-8`.
    pub fn new(net: &HybridNetwork<F>) -> Self {
        let lens = net.param_block_lens();
        Self {
            m: lens.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: lens.iter().map(|&n| vec![F::zero(); n]).collect(),
            step: 0,
            beta1: fl(0.9),
            beta2: fl(0.999),
            epsilon: fl(1e-8),
        }
    }

    /// One update with learning rate `lr`.
    pub fn step(&mut self, net: &mut HybridNetwork<F>, grads: &Gradients<F>, lr: F) -> Result<()> {
        if grads.blocks.len() != self.m.len() {
            return Err(Error::Argument(format!(
                "{} gradient blocks for {} parameter blocks",
                grads.blocks.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = F::one() - self.beta1.powi(t);
        let bias2 = F::one() - self.beta2.powi(t);
        let mut block = 0usize;
        let mut result = Ok(());
        net.visit_params_mut(&mut |params| {
            if result.is_err() {
                return;
            }
            let g = &grads.blocks[block];
            if g.len() != params.len() {
                result = Err(Error::Argument(format!(
                    "gradient block {} has {} values for {} parameters",
                    block,
                    g.len(),
                    params.len()
                )));
                return;
            }
            let m = &mut self.m[block];
            let v = &mut self.v[block];
            for i in 0..params.len() {
                m[i] = self.beta1 * m[i] + (F::one() - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (F::one() - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            block += 1;
        });
        result
    }
}

/// Training hyperparameters.
#[derive(Clone)]
pub struct TrainConfig<F> {
    pub epochs: usize,
    /// Initial learning rate; default 5e-4.
    pub lr: F,
    /// Shuffle seed.
    pub seed: u64,
    /// Halve the rate every this many epochs; defaults to
    /// `max(1, epochs / 2)`.
    pub halve_every: Option<usize>,
    pub loss: LossConfig<F>,
}

impl<F: Real> TrainConfig<F> {
    pub fn new(epochs: usize, seed: u64, loss: LossConfig<F>) -> Self {
        Self { epochs, lr: fl(5e-4), seed, halve_every: None, loss }
    }

    fn lr_at(&self, epoch: usize) -> F {
        let halve_every = self.halve_every.unwrap_or_else(|| (self.epochs / 2).max(1)).max(1);
        self.lr * fl::<F>(0.5f64.powi((epoch / halve_every) as i32))
    }
}

/// Train on `(frame sequence, ground-truth image)` pairs with Adam and the
/// step-decay schedule. Ground truth in `[0, 1]` is mapped to the decoder's
/// `[-1, 1]` output range for the loss. Returns the per-epoch mean loss.
///
/// Deterministic for a fixed seed: shuffle order, update order, and all
/// arithmetic are fixed.
pub fn train<F: Real>(
    net: &mut HybridNetwork<F>,
    dataset: &[(FrameSequence, Image<F>)],
    cfg: &TrainConfig<F>,
) -> Result<Vec<F>> {
    if dataset.is_empty() {
        return Err(Error::Argument("training dataset is empty".into()));
    }
    cfg.loss.validate()?;
    for (seq, _) in dataset {
        if seq.n() != net.n_steps() {
            return Err(Error::Argument(format!(
                "dataset sequence has {} intervals, network expects {}",
                seq.n(),
                net.n_steps()
            )));
        }
    }
    let targets: Vec<Array3<F>> = dataset
        .iter()
        .map(|(_, gt)| {
            let (h, w) = gt.dim();
            Array3::from_shape_fn((1, h, w), |(_, y, x)| fl::<F>(2.0) * gt[[y, x]] - F::one())
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(net);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = F::zero();
        for &i in &order {
            let (out, trace) = net.forward(&dataset[i].0)?;
            let (loss, d_out) = total_loss_grad(&out, &targets[i], &cfg.loss)?;
            let grads = net.backward(&trace, &d_out)?;
            adam.step(net, &grads, lr)?;
            epoch_loss += loss;
        }
        history.push(epoch_loss / fl::<F>(dataset.len() as f64));
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{Event, EventStream};
    use crate::framing::voxelize;
    use crate::network::spec::{self, NetworkSpec};
    use ndarray::Array2;

    fn fixture(n_steps: usize) -> (HybridNetwork<f64>, Vec<(FrameSequence, Image<f64>)>) {
        let mut spec = NetworkSpec::desk_default(n_steps, 11);
        spec.encoder = spec::parse_encoder("sconv3p1-4,sconv1p0-8").unwrap();
        spec.decoder = spec::parse_decoder("c3s1-8,r-8,c3s1-1").unwrap();
        spec.skip_taps = vec![0, 1];
        let net = HybridNetwork::build(spec).unwrap();

        let mut events = Vec::new();
        for t in 0..40u64 {
            let x = (t * 7 % 8) as u32;
            let y = (t * 3 % 8) as u32;
            events.push(Event::new(t * 25, x, y, if t % 3 == 0 { -1 } else { 1 }));
        }
        let stream = EventStream::new(8, 8, events, None).unwrap();
        let seq = voxelize(&stream, n_steps, Some((0, 1000))).unwrap();
        let gt = Array2::from_shape_fn((8, 8), |(r, c)| if (r / 2 + c / 2) % 2 == 0 { 0.8 } else { 0.2 });
        (net, vec![(seq, gt)])
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (mut net, data) = fixture(5);
        let before = net.params_flat();
        let mut cfg = TrainConfig::new(3, 7, LossConfig::desk_default(5));
        cfg.lr = 0.0;
        let history = train(&mut net, &data, &cfg).unwrap();
        assert_eq!(net.params_flat(), before);
        assert_eq!(history.len(), 3);
        assert!((history[0] - history[2]).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_rejected() {
        let (mut net, _) = fixture(5);
        let cfg = TrainConfig::new(1, 7, LossConfig::desk_default(5));
        assert!(matches!(train(&mut net, &[], &cfg), Err(Error::Argument(_))));
    }

    #[test]
    fn single_sample_overfit_reduces_loss_by_90_percent() {
        let (mut net, data) = fixture(5);
        let cfg = TrainConfig::new(300, 7, LossConfig::desk_default(5));
        let history = train(&mut net, &data, &cfg).unwrap();
        let initial = history[0];
        let last = *history.last().unwrap();
        assert!(
            last < initial * 0.1,
            "loss went from {initial} to {last}, want < 10%"
        );
    }

    #[test]
    fn same_seed_identical_history_and_params() {
        let (mut a, data) = fixture(5);
        let (mut b, _) = fixture(5);
        let cfg = TrainConfig::new(5, 13, LossConfig::desk_default(5));
        let ha = train(&mut a, &data, &cfg).unwrap();
        let hb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.params_flat(), b.params_flat());

        let (mut c, _) = fixture(5);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 14;
        let hc = train(&mut c, &data, &cfg2).unwrap();
        // One sample: shuffle order can't differ, but epochs > 1 with more
        // samples would. Histories still match here; parameters must too.
        assert_eq!(hc.len(), ha.len());
    }

    #[test]
    fn lr_schedule_halves_at_midpoint() {
        let cfg = TrainConfig::<f64>::new(10, 1, LossConfig::identity());
        assert_eq!(cfg.lr_at(0), 5e-4);
        assert_eq!(cfg.lr_at(4), 5e-4);
        assert_eq!(cfg.lr_at(5), 2.5e-4);
        assert_eq!(cfg.lr_at(9), 2.5e-4);
    }
}
