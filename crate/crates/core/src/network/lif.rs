//! Leaky integrate-and-fire dynamics with reset-and-fire and the rectangular
//! surrogate used in the backward pass.
//!
//! Per neuron: `u(t) = alpha * u(t-1) * (1 - o(t-1)) + c(t)`, spiking when
//! `u(t) > u_th` (strict). The backward pass replaces the spike step's
//! derivative with `1/a` inside the band `|u - u_th| < a/2` and `0` outside.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::float::{fl, Real};

/// LIF neuron parameters shared by every spiking layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifConfig<F> {
    /// Membrane decay factor in `[0, 1]`.
    pub alpha: F,
    /// Spiking threshold, `> 0`.
    pub u_th: F,
    /// Resting potential; fixed at 0.
    pub u_rest: F,
    /// Width `a` of the rectangular surrogate band.
    pub surrogate_width: F,
}

impl<F: Real> LifConfig<F> {
    pub fn new(alpha: F, u_th: F, surrogate_width: F) -> Result<Self> {
        let cfg = Self { alpha, u_th, u_rest: F::zero(), surrogate_width };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults: alpha 0.8, threshold 0.5, surrogate width 1.
    pub fn desk_default() -> Self {
        Self { alpha: fl(0.8), u_th: fl(0.5), u_rest: F::zero(), surrogate_width: F::one() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < F::zero() || self.alpha > F::one() {
            return Err(Error::Validation(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.u_th <= F::zero() {
            return Err(Error::Validation(format!("u_th must be > 0, got {}", self.u_th)));
        }
        if self.u_rest != F::zero() {
            return Err(Error::Validation("u_rest is fixed at 0".into()));
        }
        if self.surrogate_width <= F::zero() {
            return Err(Error::Validation(format!(
                "surrogate width must be > 0, got {}",
                self.surrogate_width
            )));
        }
        Ok(())
    }

    /// Hard spike: 1 where `u > u_th`, else 0.
    #[inline]
    pub fn spike(&self, u: F) -> F {
        if u > self.u_th {
            F::one()
        } else {
            F::zero()
        }
    }

    /// Differentiable stand-in for [`Self::spike`]: the integral of the
    /// rectangular surrogate, a linear ramp from 0 at `u_th - a/2` to 1 at
    /// `u_th + a/2`. Used by the soft reference model in gradient checks.
    #[inline]
    pub fn soft_spike(&self, u: F) -> F {
        let half = fl::<F>(0.5);
        ((u - self.u_th) / self.surrogate_width + half).max(F::zero()).min(F::one())
    }

    /// Backward-pass derivative of the spike with respect to `u`.
    #[inline]
    pub fn surrogate_grad(&self, u: F) -> F {
        let half_width = self.surrogate_width / fl::<F>(2.0);
        if (u - self.u_th).abs() < half_width {
            F::one() / self.surrogate_width
        } else {
            F::zero()
        }
    }
}

/// Which spike function drives the forward dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeMode {
    /// Production binary spikes.
    #[default]
    Hard,
    /// The ramp of [`LifConfig::soft_spike`]; the exactly differentiable
    /// reference model whose finite differences validate the backward pass.
    SoftRamp,
}

/// One LIF update over a full activation map.
pub fn lif_step<F: Real>(
    u_prev: &Array3<F>,
    o_prev: &Array3<F>,
    current: &Array3<F>,
    cfg: &LifConfig<F>,
) -> Result<(Array3<F>, Array3<F>)> {
    lif_step_mode(u_prev, o_prev, current, cfg, SpikeMode::Hard)
}

pub fn lif_step_mode<F: Real>(
    u_prev: &Array3<F>,
    o_prev: &Array3<F>,
    current: &Array3<F>,
    cfg: &LifConfig<F>,
    mode: SpikeMode,
) -> Result<(Array3<F>, Array3<F>)> {
    if u_prev.dim() != o_prev.dim() || u_prev.dim() != current.dim() {
        return Err(Error::Argument(format!(
            "lif_step shape mismatch: u {:?}, o {:?}, current {:?}",
            u_prev.dim(),
            o_prev.dim(),
            current.dim()
        )));
    }
    let mut u = Array3::<F>::zeros(u_prev.dim());
    let mut o = Array3::<F>::zeros(u_prev.dim());
    for (idx, u_out) in u.indexed_iter_mut() {
        *u_out = cfg.alpha * u_prev[idx] * (F::one() - o_prev[idx]) + current[idx];
        o[idx] = match mode {
            SpikeMode::Hard => cfg.spike(*u_out),
            SpikeMode::SoftRamp => cfg.soft_spike(*u_out),
        };
    }
    Ok((u, o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn scalar(v: f64) -> Array3<f64> {
        Array3::from_elem((1, 1, 1), v)
    }

    fn cfg(alpha: f64, u_th: f64) -> LifConfig<f64> {
        LifConfig::new(alpha, u_th, 1.0).unwrap()
    }

    #[test]
    fn pure_leak() {
        let (u, o) = lif_step(&scalar(0.8), &scalar(0.0), &scalar(0.0), &cfg(0.5, 1.0)).unwrap();
        assert!((u[[0, 0, 0]] - 0.4).abs() < 1e-12);
        assert_eq!(o[[0, 0, 0]], 0.0);
    }

    #[test]
    fn reset_erases_history() {
        let (u, o) = lif_step(&scalar(123.0), &scalar(1.0), &scalar(0.3), &cfg(0.5, 0.5)).unwrap();
        assert!((u[[0, 0, 0]] - 0.3).abs() < 1e-12);
        assert_eq!(o[[0, 0, 0]], 0.0);
    }

    #[test]
    fn constant_drive_spikes_every_third_step() {
        let c = cfg(1.0, 1.0);
        let mut u = scalar(0.0);
        let mut o = scalar(0.0);
        let mut spike_steps = Vec::new();
        for step in 1..=9 {
            let (nu, no) = lif_step(&u, &o, &scalar(0.4), &c).unwrap();
            if no[[0, 0, 0]] == 1.0 {
                spike_steps.push(step);
            }
            u = nu;
            o = no;
        }
        assert_eq!(spike_steps, vec![3, 6, 9]);
    }

    #[test]
    fn strict_threshold() {
        // u exactly at threshold must not spike.
        let (_, o) = lif_step(&scalar(0.0), &scalar(0.0), &scalar(1.0), &cfg(0.9, 1.0)).unwrap();
        assert_eq!(o[[0, 0, 0]], 0.0);
    }

    #[test]
    fn alpha_zero_is_memoryless() {
        let (u, _) = lif_step(&scalar(5.0), &scalar(0.0), &scalar(0.25), &cfg(0.0, 1.0)).unwrap();
        assert_eq!(u[[0, 0, 0]], 0.25);
    }

    #[test]
    fn alpha_one_without_spikes_is_running_sum() {
        let c = cfg(1.0, 100.0);
        let mut u = scalar(0.0);
        let mut o = scalar(0.0);
        for _ in 0..5 {
            let (nu, no) = lif_step(&u, &o, &scalar(0.3), &c).unwrap();
            u = nu;
            o = no;
        }
        assert!((u[[0, 0, 0]] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn isolated_inputs_filtered_consecutive_pass() {
        // alpha = 0.9, u_th = 1.5: one isolated unit input never fires, two
        // consecutive unit inputs fire exactly once.
        let c = cfg(0.9, 1.5);
        let run = |inputs: &[f64]| {
            let mut u = scalar(0.0);
            let mut o = scalar(0.0);
            let mut spikes = 0u32;
            for &i in inputs {
                let (nu, no) = lif_step(&u, &o, &scalar(i), &c).unwrap();
                spikes += no[[0, 0, 0]] as u32;
                u = nu;
                o = no;
            }
            spikes
        };
        assert_eq!(run(&[0.0, 1.0, 0.0, 0.0, 0.0]), 0);
        assert_eq!(run(&[0.0, 1.0, 1.0, 0.0, 0.0]), 1);
    }

    #[test]
    fn surrogate_band() {
        let c = LifConfig::<f64>::new(0.8, 0.5, 0.4).unwrap();
        assert_eq!(c.surrogate_grad(0.5), 2.5);
        assert_eq!(c.surrogate_grad(0.69), 2.5);
        assert_eq!(c.surrogate_grad(0.71), 0.0);
        assert_eq!(c.surrogate_grad(0.29), 0.0);
    }

    #[test]
    fn soft_spike_matches_surrogate_integral() {
        let c = LifConfig::<f64>::new(0.8, 0.5, 1.0).unwrap();
        assert_eq!(c.soft_spike(0.0), 0.0);
        assert_eq!(c.soft_spike(1.0), 1.0);
        assert!((c.soft_spike(0.5) - 0.5).abs() < 1e-12);
        assert!((c.soft_spike(0.75) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(LifConfig::<f64>::new(1.1, 0.5, 1.0).is_err());
        assert!(LifConfig::<f64>::new(0.5, 0.0, 1.0).is_err());
        assert!(LifConfig::<f64>::new(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = Array3::<f64>::zeros((1, 2, 2));
        let b = Array3::<f64>::zeros((1, 2, 3));
        assert!(matches!(lif_step(&a, &a, &b, &cfg(0.5, 1.0)), Err(Error::Argument(_))));
    }
}
