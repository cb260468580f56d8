//! Image-quality metrics: PSNR, single-scale SSIM, 2D entropy, and STD.
//!
//! PSNR and SSIM need a reference image; 2D entropy and STD are
//! reference-free. STD and entropy operate on 8-bit-quantized values so their
//! magnitudes match conventional reports.


use crate::error::{Error, Result};
use crate::float::{fl, to_f64, Real};
use crate::image::{quantize8, Image};

/// The four metric values; `psnr`/`ssim` are absent without a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport<F> {
    pub psnr: Option<F>,
    pub ssim: Option<F>,
    pub entropy2d: F,
    pub std: F,
}

impl<F: Real> MetricReport<F> {
    /// Full report against a reference image.
    pub fn with_reference(image: &Image<F>, reference: &Image<F>) -> Result<Self> {
        Ok(Self {
            psnr: Some(psnr(image, reference)?),
            ssim: Some(ssim(image, reference)?),
            entropy2d: entropy2d(image)?,
            std: std_dev(image),
        })
    }

    /// Reference-free report.
    pub fn reference_free(image: &Image<F>) -> Result<Self> {
        Ok(Self {
            psnr: None,
            ssim: None,
            entropy2d: entropy2d(image)?,
            std: std_dev(image),
        })
    }

    /// JSON value with the infinite-PSNR sentinel spelled `"inf"`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        if let Some(p) = self.psnr {
            let v = if p.is_infinite() {
                serde_json::Value::String("inf".into())
            } else {
                serde_json::json!(to_f64(p))
            };
            map.insert("psnr".into(), v);
        }
        if let Some(s) = self.ssim {
            map.insert("ssim".into(), serde_json::json!(to_f64(s)));
        }
        map.insert("entropy2d".into(), serde_json::json!(to_f64(self.entropy2d)));
        map.insert("std".into(), serde_json::json!(to_f64(self.std)));
        serde_json::Value::Object(map)
    }
}

fn check_shapes<F: Real>(a: &Image<F>, b: &Image<F>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Argument(format!(
            "shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over unit-range images,
/// `10 * log10(1 / MSE)`; identical images give `+inf`.
pub fn psnr<F: Real>(a: &Image<F>, b: &Image<F>) -> Result<F> {
    check_shapes(a, b)?;
    if a.is_empty() {
        return Err(Error::Argument("empty image".into()));
    }
    let mut mse = 0.0f64;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = to_f64(x) - to_f64(y);
        mse += d * d;
    }
    mse /= a.len() as f64;
    if mse == 0.0 {
        Ok(F::infinity())
    } else {
        Ok(fl(10.0 * (1.0 / mse).log10()))
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [[f64; SSIM_WINDOW]; SSIM_WINDOW] {
    let mut w = [[0.0; SSIM_WINDOW]; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            sum += *v;
        }
    }
    for row in w.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    w
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5) on unit-range
/// images, averaged over valid window positions.
pub fn ssim<F: Real>(a: &Image<F>, b: &Image<F>) -> Result<F> {
    check_shapes(a, b)?;
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Argument(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let window = gaussian_window();
    let c1 = 0.01f64 * 0.01;
    let c2 = 0.03f64 * 0.03;
    let mut total = 0.0f64;
    let mut windows = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let (mut mu_a, mut mu_b) = (0.0f64, 0.0f64);
            let (mut aa, mut bb, mut ab) = (0.0f64, 0.0, 0.0);
            for (i, row) in window.iter().enumerate() {
                for (j, &wt) in row.iter().enumerate() {
                    let va = to_f64(a[[y0 + i, x0 + j]]);
                    let vb = to_f64(b[[y0 + i, x0 + j]]);
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let s = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            total += s;
            windows += 1;
        }
    }
    Ok(fl(total / windows as f64))
}

/// Two-dimensional Shannon entropy in bits of the joint distribution of
/// (pixel level, 3x3 neighborhood mean level), both quantized to 256 levels;
/// interior pixels only.
pub fn entropy2d<F: Real>(a: &Image<F>) -> Result<F> {
    let (h, w) = a.dim();
    if h < 3 || w < 3 {
        return Err(Error::Argument(format!("image {h}x{w} too small for 3x3 neighborhoods")));
    }
    let levels = a.mapv(|v| quantize8(v));
    let mut hist = vec![0u64; 256 * 256];
    let mut count = 0u64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut sum = 0u32;
            for dy in 0..3 {
                for dx in 0..3 {
                    sum += u32::from(levels[[y + dy - 1, x + dx - 1]]);
                }
            }
            let mean = ((2 * sum + 9) / 18) as usize; // round(sum / 9)
            hist[usize::from(levels[[y, x]]) * 256 + mean] += 1;
            count += 1;
        }
    }
    let mut bits = 0.0f64;
    for &n in &hist {
        if n > 0 {
            let p = n as f64 / count as f64;
            bits -= p * p.log2();
        }
    }
    Ok(fl(bits))
}

/// Population standard deviation of the 8-bit-quantized pixel values.
pub fn std_dev<F: Real>(a: &Image<F>) -> F {
    if a.is_empty() {
        return F::zero();
    }
    let n = a.len() as f64;
    let mut sum = 0.0f64;
    let mut sq = 0.0f64;
    for &v in a.iter() {
        let q = f64::from(quantize8(v));
        sum += q;
        sq += q * q;
    }
    let mean = sum / n;
    fl((sq / n - mean * mean).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn constant(h: usize, w: usize, v: f64) -> Image<f64> {
        Array2::from_elem((h, w), v)
    }

    #[test]
    fn psnr_identity_is_infinite() {
        let img = Array2::from_shape_fn((8, 8), |(r, c)| (r * 8 + c) as f64 / 63.0);
        assert!(psnr(&img, &img).unwrap().is_infinite());
    }

    #[test]
    fn psnr_uniform_difference() {
        let a = constant(8, 8, 0.5);
        let b = constant(8, 8, 0.6);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0).abs() < 1e-9, "got {p}");
        assert_eq!(p, psnr(&b, &a).unwrap());
    }

    #[test]
    fn psnr_shape_mismatch() {
        assert!(matches!(
            psnr(&constant(4, 4, 0.0), &constant(4, 5, 0.0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn ssim_identity_is_one() {
        let img = Array2::from_shape_fn((16, 16), |(r, c)| ((r * 31 + c * 17) % 64) as f64 / 63.0);
        let s = ssim(&img, &img).unwrap();
        assert!((s - 1.0).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn ssim_constant_images_closed_form() {
        let a = constant(12, 12, 0.0);
        let b = constant(12, 12, 1.0);
        let c1 = 1e-4;
        let c2 = 9e-4;
        let expected = ((2.0 * 0.0 * 1.0 + c1) * (2.0 * 0.0 + c2)) / ((0.0 + 1.0 + c1) * (0.0 + 0.0 + c2));
        let s = ssim(&a, &b).unwrap();
        assert!((s - expected).abs() < 1e-12, "got {s}, want {expected}");
        assert_eq!(s, ssim(&b, &a).unwrap());
    }

    #[test]
    fn ssim_small_image_rejected() {
        let a = constant(10, 16, 0.5);
        assert!(matches!(ssim(&a, &a), Err(Error::Argument(_))));
    }

    #[test]
    fn entropy_constant_is_zero() {
        assert_eq!(entropy2d(&constant(8, 8, 0.3)).unwrap(), 0.0);
    }

    #[test]
    fn entropy_checkerboard_matches_bruteforce() {
        let img = Array2::from_shape_fn((9, 9), |(r, c)| if (r + c) % 2 == 0 { 0.0 } else { 1.0 });
        // Brute-force joint histogram over interior pixels.
        let q = |v: f64| (v * 255.0).round() as u32;
        let mut pairs = std::collections::HashMap::new();
        let mut count = 0u64;
        for y in 1..8 {
            for x in 1..8 {
                let mut sum = 0u32;
                for dy in 0..3usize {
                    for dx in 0..3usize {
                        sum += q(img[[y + dy - 1, x + dx - 1]]);
                    }
                }
                let mean = (2 * sum + 9) / 18;
                *pairs.entry((q(img[[y, x]]), mean)).or_insert(0u64) += 1;
                count += 1;
            }
        }
        let expected: f64 = pairs
            .values()
            .map(|&n| {
                let p = n as f64 / count as f64;
                -p * p.log2()
            })
            .sum();
        let got = entropy2d(&img).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
        assert!(got > 0.0);
    }

    #[test]
    fn entropy_degenerate_size_rejected() {
        assert!(matches!(entropy2d(&constant(2, 8, 0.0)), Err(Error::Argument(_))));
    }

    #[test]
    fn std_hand_values() {
        assert_eq!(std_dev(&constant(6, 6, 0.42)), 0.0);
        let half = Array2::from_shape_fn((2, 8), |(r, _)| if r == 0 { 0.0 } else { 1.0 });
        assert_eq!(std_dev(&half), 127.5);
    }

    #[test]
    fn std_shift_invariant_on_exact_levels() {
        let a = Array2::from_shape_fn((4, 4), |(r, c)| ((r * 4 + c) % 7) as f64 / 255.0);
        let b = a.mapv(|v| v + 20.0 / 255.0);
        assert!((std_dev(&a) - std_dev(&b)).abs() < 1e-9);
    }

    #[test]
    fn report_json_inf_sentinel() {
        let img = constant(12, 12, 0.5);
        let report = MetricReport::with_reference(&img, &img).unwrap();
        let json = report.to_json();
        assert_eq!(json["psnr"], serde_json::json!("inf"));
        assert!((json["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-9);

        let free = MetricReport::reference_free(&img).unwrap();
        let json = free.to_json();
        assert!(json.get("psnr").is_none());
        assert!(json.get("ssim").is_none());
        assert_eq!(json["entropy2d"], serde_json::json!(0.0));
    }
}
