//! Training losses: perceptual feature distance, mean absolute pixel error,
//! anisotropic total-variation smoothness, and their weighted sum.

use std::sync::Arc;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::float::{fl, Real};

use super::feature::{FeatureExtractor, IdentityFeatures, SeededConvFeatures};

/// Loss weights and the frozen feature extractor.
#[derive(Clone)]
pub struct LossConfig<F> {
    pub beta_per: F,
    pub beta_pix: F,
    pub beta_tv: F,
    /// Per-tap weights `lambda_k`; length must equal the extractor's tap count.
    pub lambda: Vec<F>,
    pub features: Arc<dyn FeatureExtractor<F>>,
}

impl<F: Real> LossConfig<F> {
    /// Default weights `[beta_per, beta_pix, beta_tv] = [1, 32, 2e-4]` with
    /// the seeded four-tap extractor and per-tap weights
    /// `[1e-1, 1/21, 10/21, 10/21]`.
    pub fn desk_default(feature_seed: u64) -> Self {
        Self {
            beta_per: F::one(),
            beta_pix: fl(32.0),
            beta_tv: fl(2e-4),
            lambda: vec![fl(0.1), fl(1.0 / 21.0), fl(10.0 / 21.0), fl(10.0 / 21.0)],
            features: Arc::new(SeededConvFeatures::new(feature_seed, 1)),
        }
    }

    /// Identity extractor with a single unit-weight tap; for exact
    /// hand-computed values.
    pub fn identity() -> Self {
        Self {
            beta_per: F::one(),
            beta_pix: fl(32.0),
            beta_tv: fl(2e-4),
            lambda: vec![F::one()],
            features: Arc::new(IdentityFeatures),
        }
    }

    pub fn with_betas(mut self, beta_per: F, beta_pix: F, beta_tv: F) -> Self {
        self.beta_per = beta_per;
        self.beta_pix = beta_pix;
        self.beta_tv = beta_tv;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_per < F::zero() || self.beta_pix < F::zero() || self.beta_tv < F::zero() {
            return Err(Error::Validation("loss weights must be non-negative".into()));
        }
        if self.lambda.len() != self.features.tap_count() {
            return Err(Error::Validation(format!(
                "{} lambda weights for {} feature taps",
                self.lambda.len(),
                self.features.tap_count()
            )));
        }
        Ok(())
    }
}

fn check_shapes<F: Real>(y: &Array3<F>, y_hat: &Array3<F>) -> Result<()> {
    if y.dim() != y_hat.dim() {
        return Err(Error::Argument(format!(
            "shape mismatch: {:?} vs {:?}",
            y.dim(),
            y_hat.dim()
        )));
    }
    Ok(())
}

/// Mean absolute difference, `||y - y_hat||_1 / (C H W)`.
pub fn pixel_loss<F: Real>(y: &Array3<F>, y_hat: &Array3<F>) -> Result<F> {
    check_shapes(y, y_hat)?;
    let n = fl::<F>(y.len() as f64);
    let sum: F = y.iter().zip(y_hat.iter()).map(|(&a, &b)| (a - b).abs()).sum();
    Ok(sum / n)
}

/// Pixel loss and its gradient with respect to `y`.
pub fn pixel_loss_grad<F: Real>(y: &Array3<F>, y_hat: &Array3<F>) -> Result<(F, Array3<F>)> {
    let loss = pixel_loss(y, y_hat)?;
    let n = fl::<F>(y.len() as f64);
    let grad = ndarray::Zip::from(y).and(y_hat).map_collect(|&a, &b| {
        if a > b {
            F::one() / n
        } else if a < b {
            -F::one() / n
        } else {
            F::zero()
        }
    });
    Ok((loss, grad))
}

fn tv_term_count(dim: (usize, usize, usize)) -> usize {
    let (c, h, w) = dim;
    c * (h * (w - 1) + (h - 1) * w)
}

/// Anisotropic L1 total variation: mean over all horizontal and vertical
/// neighbor differences. Needs at least one neighbor pair.
pub fn tv_loss<F: Real>(y: &Array3<F>) -> Result<F> {
    let (c, h, w) = y.dim();
    let terms = tv_term_count((c, h, w));
    if terms == 0 {
        return Err(Error::Argument(format!(
            "{c}x{h}x{w} image has no neighbor differences"
        )));
    }
    let mut sum = F::zero();
    for ci in 0..c {
        for yi in 0..h {
            for xi in 0..w {
                if xi + 1 < w {
                    sum += (y[[ci, yi, xi + 1]] - y[[ci, yi, xi]]).abs();
                }
                if yi + 1 < h {
                    sum += (y[[ci, yi + 1, xi]] - y[[ci, yi, xi]]).abs();
                }
            }
        }
    }
    Ok(sum / fl::<F>(terms as f64))
}

/// TV loss and its gradient with respect to `y`.
pub fn tv_loss_grad<F: Real>(y: &Array3<F>) -> Result<(F, Array3<F>)> {
    let loss = tv_loss(y)?;
    let (c, h, w) = y.dim();
    let inv = F::one() / fl::<F>(tv_term_count((c, h, w)) as f64);
    let mut grad = Array3::<F>::zeros(y.dim());
    let sign = |d: F| {
        if d > F::zero() {
            F::one()
        } else if d < F::zero() {
            -F::one()
        } else {
            F::zero()
        }
    };
    for ci in 0..c {
        for yi in 0..h {
            for xi in 0..w {
                if xi + 1 < w {
                    let s = sign(y[[ci, yi, xi + 1]] - y[[ci, yi, xi]]) * inv;
                    grad[[ci, yi, xi + 1]] += s;
                    grad[[ci, yi, xi]] -= s;
                }
                if yi + 1 < h {
                    let s = sign(y[[ci, yi + 1, xi]] - y[[ci, yi, xi]]) * inv;
                    grad[[ci, yi + 1, xi]] += s;
                    grad[[ci, yi, xi]] -= s;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Perceptual loss: per-tap normalized squared feature distance,
/// `sum_k lambda_k / (C_k H_k W_k) * ||phi_k(y) - phi_k(y_hat)||_2^2`.
pub fn perceptual_loss<F: Real>(y: &Array3<F>, y_hat: &Array3<F>, cfg: &LossConfig<F>) -> Result<F> {
    check_shapes(y, y_hat)?;
    cfg.validate()?;
    let taps_y = cfg.features.forward_taps(y);
    let taps_hat = cfg.features.forward_taps(y_hat);
    let mut loss = F::zero();
    for ((ty, th), &lambda) in taps_y.iter().zip(&taps_hat).zip(&cfg.lambda) {
        let n = fl::<F>(ty.len() as f64);
        let sq: F = ty.iter().zip(th.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        loss += lambda * sq / n;
    }
    Ok(loss)
}

/// Perceptual loss and its gradient with respect to `y`.
pub fn perceptual_loss_grad<F: Real>(
    y: &Array3<F>,
    y_hat: &Array3<F>,
    cfg: &LossConfig<F>,
) -> Result<(F, Array3<F>)> {
    check_shapes(y, y_hat)?;
    cfg.validate()?;
    let taps_y = cfg.features.forward_taps(y);
    let taps_hat = cfg.features.forward_taps(y_hat);
    let mut loss = F::zero();
    let mut tap_grads = Vec::with_capacity(taps_y.len());
    for ((ty, th), &lambda) in taps_y.iter().zip(&taps_hat).zip(&cfg.lambda) {
        let n = fl::<F>(ty.len() as f64);
        let sq: F = ty.iter().zip(th.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
        loss += lambda * sq / n;
        let coeff = fl::<F>(2.0) * lambda / n;
        tap_grads.push(ndarray::Zip::from(ty).and(th).map_collect(|&a, &b| coeff * (a - b)));
    }
    let grad = cfg.features.backward(y, &tap_grads);
    Ok((loss, grad))
}

/// Weighted sum `beta_per * L_per + beta_pix * L_pix + beta_tv * L_tv`.
pub fn total_loss<F: Real>(y: &Array3<F>, y_hat: &Array3<F>, cfg: &LossConfig<F>) -> Result<F> {
    let per = if cfg.beta_per > F::zero() { perceptual_loss(y, y_hat, cfg)? } else { F::zero() };
    let pix = if cfg.beta_pix > F::zero() { pixel_loss(y, y_hat)? } else { F::zero() };
    let tv = if cfg.beta_tv > F::zero() { tv_loss(y)? } else { F::zero() };
    Ok(cfg.beta_per * per + cfg.beta_pix * pix + cfg.beta_tv * tv)
}

/// Total loss and its gradient with respect to `y`.
pub fn total_loss_grad<F: Real>(
    y: &Array3<F>,
    y_hat: &Array3<F>,
    cfg: &LossConfig<F>,
) -> Result<(F, Array3<F>)> {
    let mut loss = F::zero();
    let mut grad = Array3::<F>::zeros(y.dim());
    if cfg.beta_per > F::zero() {
        let (l, g) = perceptual_loss_grad(y, y_hat, cfg)?;
        loss += cfg.beta_per * l;
        grad.zip_mut_with(&g, |acc, &v| *acc += cfg.beta_per * v);
    }
    if cfg.beta_pix > F::zero() {
        let (l, g) = pixel_loss_grad(y, y_hat)?;
        loss += cfg.beta_pix * l;
        grad.zip_mut_with(&g, |acc, &v| *acc += cfg.beta_pix * v);
    }
    if cfg.beta_tv > F::zero() {
        let (l, g) = tv_loss_grad(y)?;
        loss += cfg.beta_tv * l;
        grad.zip_mut_with(&g, |acc, &v| *acc += cfg.beta_tv * v);
    }
    Ok((loss, grad))
}
