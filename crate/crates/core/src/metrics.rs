//! Reconstruction and flow error measures, and seeded noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::{FlowField, Image, ImageSequence};
use crate::interp::gaussian_kernel;

/// Flow components with magnitude above this mark unknown ground truth.
pub const UNKNOWN_FLOW_THRESHOLD: f64 = 1e9;

/// Mean squared error.
pub fn l2_error(u: &Image, reference: &Image) -> Result<f64> {
    u.check_same_dims(reference, "l2 error")?;
    let n = u.len() as f64;
    Ok(u.data().iter().zip(reference.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio in dB; `+∞` for identical images.
pub fn psnr(u: &Image, reference: &Image, peak: f64) -> Result<f64> {
    let mse = l2_error(u, reference)?;
    Ok(psnr_from_mse(mse, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Separable Gaussian-weighted local mean over the windows that fit entirely
/// inside the image.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for j in 0..h {
        for i in 0..ow {
            rows[j * ow + i] = (0..n).map(|t| k[t] * data[j * w + i + t]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for j in 0..oh {
        for i in 0..ow {
            out[j * ow + i] = (0..n).map(|t| k[t] * rows[(j + t) * ow + i]).sum();
        }
    }
    (out, ow, oh)
}

/// Structural similarity with an 11×11 Gaussian window (σ = 1.5),
/// `K₁ = 0.01`, `K₂ = 0.03` and dynamic range 1, averaged over the pixels
/// where the window fits. Images smaller than the window use the largest
/// odd window that fits.
pub fn ssim(u: &Image, reference: &Image) -> Result<f64> {
    u.check_same_dims(reference, "ssim")?;
    let (w, h) = u.dims();
    let size = 11.min(w).min(h);
    let size = if size % 2 == 0 { size - 1 } else { size };
    let full = gaussian_kernel(1.5);
    let k: Vec<f64> = if size == full.len() {
        full
    } else {
        let r = (size / 2) as isize;
        let raw: Vec<f64> = (-r..=r).map(|t| (-((t * t) as f64) / (2.0 * 1.5 * 1.5)).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let x = u.data();
    let y = reference.data();
    let xx: Vec<f64> = x.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = y.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mx, ow, oh) = filter_valid(x, w, h, &k);
    let (my, _, _) = filter_valid(y, w, h, &k);
    let (sxx, _, _) = filter_valid(&xx, w, h, &k);
    let (syy, _, _) = filter_valid(&yy, w, h, &k);
    let (sxy, _, _) = filter_valid(&xy, w, h, &k);
    let total: f64 = (0..ow * oh)
        .map(|p| {
            let vx = sxx[p] - mx[p] * mx[p];
            let vy = syy[p] - my[p] * my[p];
            let cov = sxy[p] - mx[p] * my[p];
            ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2))
                / ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / (ow * oh) as f64)
}

/// True where the reference flow is known.
pub fn valid_flow_mask(reference: &FlowField) -> Vec<bool> {
    reference
        .v1
        .data()
        .iter()
        .zip(reference.v2.data())
        .map(|(a, b)| a.abs() <= UNKNOWN_FLOW_THRESHOLD && b.abs() <= UNKNOWN_FLOW_THRESHOLD)
        .collect()
}

fn masked_mean(
    v: &FlowField,
    reference: &FlowField,
    mask: Option<&[bool]>,
    f: impl Fn(f64, f64, f64, f64) -> f64,
) -> Result<f64> {
    if v.dims() != reference.dims() {
        return Err(Error::dim("flow fields differ in size"));
    }
    let n = v.v1.len();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::dim(format!("mask has {} entries for {n} pixels", m.len())));
        }
    }
    let known = valid_flow_mask(reference);
    let (mut sum, mut count) = (0.0, 0usize);
    for p in 0..n {
        if known[p] && mask.is_none_or(|m| m[p]) {
            sum += f(v.v1.data()[p], v.v2.data()[p], reference.v1.data()[p], reference.v2.data()[p]);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Mean endpoint error over the masked pixels with known reference flow.
pub fn endpoint_error(v: &FlowField, reference: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    masked_mean(v, reference, mask, |a, b, c, d| (a - c).hypot(b - d))
}

/// Mean angle (radians) between the space-time vectors `(v₁, v₂, 1)`.
pub fn angular_error(v: &FlowField, reference: &FlowField, mask: Option<&[bool]>) -> Result<f64> {
    masked_mean(v, reference, mask, |a, b, c, d| {
        let num = a * c + b * d + 1.0;
        let den = (a * a + b * b + 1.0).sqrt() * (c * c + d * d + 1.0).sqrt();
        (num / den).clamp(-1.0, 1.0).acos()
    })
}

/// Adds i.i.d. Gaussian noise from a seeded generator. No clipping.
pub fn add_gaussian_noise(f: &ImageSequence, mean: f64, variance: f64, seed: u64) -> Result<ImageSequence> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::param(format!("noise variance must be non-negative, got {variance}")));
    }
    if variance == 0.0 && mean == 0.0 {
        return Ok(f.clone());
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::param(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = f
        .frames()
        .iter()
        .map(|fr| {
            let data = fr.data().iter().map(|x| x + normal.sample(&mut rng)).collect();
            Image::from_raw(fr.width(), fr.height(), data)
        })
        .collect();
    ImageSequence::new(frames)
}

/// Per-frame mean of an image metric.
pub fn sequence_mean(u: &ImageSequence, reference: &ImageSequence, metric: impl Fn(&Image, &Image) -> Result<f64>) -> Result<f64> {
    if u.len() != reference.len() {
        return Err(Error::dim(format!("{} frames against {} reference frames", u.len(), reference.len())));
    }
    let mut total = 0.0;
    for (a, b) in u.frames().iter().zip(reference.frames()) {
        total += metric(a, b)?;
    }
    Ok(total / u.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn l2_and_psnr_examples() {
        let a = random_image(7, 5, 1);
        assert_eq!(l2_error(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|x| x + 0.1);
        assert!((l2_error(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-9);
        assert!((psnr_from_mse(1e-4, 255.0) - 88.1308).abs() < 1e-4);

        let c = random_image(7, 5, 2);
        let mut direct = 0.0;
        for j in 0..5 {
            for i in 0..7 {
                direct += (a.get(i, j) - c.get(i, j)).powi(2);
            }
        }
        assert!((l2_error(&a, &c).unwrap() - direct / 35.0).abs() < 1e-15);
        assert!(l2_error(&a, &Image::zeros(5, 7)).is_err());
    }

    #[test]
    fn ssim_examples() {
        let t = Image::from_fn(32, 32, |i, j| 0.5 + 0.4 * ((i as f64 * 0.7).sin() * (j as f64 * 0.45).cos()));
        assert!((ssim(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&t, &t.map(|x| 1.0 - x)).unwrap() < 0.5);

        // Zero variances: SSIM = (2μxμy + C1) / (μx² + μy² + C1).
        let a = Image::filled(20, 20, 0.2);
        let b = Image::filled(20, 20, 0.7);
        let c1 = 1e-4;
        let expected = (2.0 * 0.2 * 0.7 + c1) / (0.04 + 0.49 + c1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);

        let small = random_image(6, 4, 3);
        assert!((ssim(&small, &small).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flow_error_examples() {
        let z = FlowField::zeros(4, 3);
        assert_eq!(endpoint_error(&z, &z, None).unwrap(), 0.0);
        assert_eq!(angular_error(&z, &z, None).unwrap(), 0.0);
        let d = FlowField::constant(4, 3, 3.0, 4.0);
        assert!((endpoint_error(&d, &z, None).unwrap() - 5.0).abs() < 1e-15);
        let a = FlowField::constant(1, 1, 1.0, 0.0);
        let b = FlowField::constant(1, 1, 0.0, 1.0);
        assert!((angular_error(&a, &b, None).unwrap() - 0.5f64.acos()).abs() < 1e-12);
        assert!((angular_error(&a, &b, None).unwrap() - std::f64::consts::FRAC_PI_3).abs() < 1e-12);
    }

    #[test]
    fn flow_errors_match_loop_oracle_and_skip_unknown() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = FlowField::new(
            Image::from_fn(5, 5, |_, _| rng.random::<f64>() * 4.0 - 2.0),
            Image::from_fn(5, 5, |_, _| rng.random::<f64>() * 4.0 - 2.0),
        )
        .unwrap();
        let mut r = FlowField::new(
            Image::from_fn(5, 5, |_, _| rng.random::<f64>() * 4.0 - 2.0),
            Image::from_fn(5, 5, |_, _| rng.random::<f64>() * 4.0 - 2.0),
        )
        .unwrap();
        let mut sum = 0.0;
        for p in 0..25 {
            let dx = v.v1.data()[p] - r.v1.data()[p];
            let dy = v.v2.data()[p] - r.v2.data()[p];
            sum += (dx * dx + dy * dy).sqrt();
        }
        assert!((endpoint_error(&v, &r, None).unwrap() - sum / 25.0).abs() < 1e-12);

        r.v1.data_mut()[0] = 1e10;
        let mut partial = 0.0;
        for p in 1..25 {
            let dx = v.v1.data()[p] - r.v1.data()[p];
            let dy = v.v2.data()[p] - r.v2.data()[p];
            partial += (dx * dx + dy * dy).sqrt();
        }
        assert!((endpoint_error(&v, &r, None).unwrap() - partial / 24.0).abs() < 1e-12);
        let mut mask = vec![false; 25];
        mask[3] = true;
        let dx = v.v1.data()[3] - r.v1.data()[3];
        let dy = v.v2.data()[3] - r.v2.data()[3];
        assert!((endpoint_error(&v, &r, Some(&mask)).unwrap() - dx.hypot(dy)).abs() < 1e-12);
    }

    #[test]
    fn noise_examples() {
        let f = ImageSequence::new(vec![Image::filled(50, 40, 0.5), Image::filled(50, 40, 0.25)]).unwrap();
        assert_eq!(add_gaussian_noise(&f, 0.0, 0.0, 1).unwrap(), f);
        let a = add_gaussian_noise(&f, 0.0, 0.01, 7).unwrap();
        let b = add_gaussian_noise(&f, 0.0, 0.01, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, add_gaussian_noise(&f, 0.0, 0.01, 8).unwrap());
        assert!(add_gaussian_noise(&f, 0.0, -1.0, 1).is_err());
    }

    #[test]
    fn noise_sample_mean() {
        let f = ImageSequence::new(vec![Image::zeros(1000, 500), Image::zeros(1000, 500)]).unwrap();
        let g = add_gaussian_noise(&f, 0.0, 0.01, 42).unwrap();
        let all = g.stacked();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        assert!(mean.abs() <= 3.0 * 0.1 / n.sqrt());
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((var - 0.01).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn metric_ranges(seed in 0u64..1000) {
            let a = random_image(14, 13, seed);
            let b = random_image(14, 13, seed + 1);
            let s = ssim(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert!((ssim(&b, &a).unwrap() - s).abs() < 1e-12);
            let fa = FlowField::new(a.clone(), b.clone()).unwrap();
            let fb = FlowField::new(b, a).unwrap();
            prop_assert!(endpoint_error(&fa, &fb, None).unwrap() >= 0.0);
            prop_assert!(angular_error(&fa, &fb, None).unwrap() >= 0.0);
        }
    }
}
