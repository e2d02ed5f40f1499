//! Cubic interpolation, resampling, smoothing and median filtering.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::par;

/// Catmull-Rom cubic through `p1` (at 0) and `p2` (at 1).
#[inline]
pub fn cubic1d(p0: f64, p1: f64, p2: f64, p3: f64, x: f64) -> f64 {
    (-0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3) * x * x * x
        + (p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3) * x * x
        + (-0.5 * p0 + 0.5 * p2) * x
        + p1
}

/// Coefficients of `p0..p3` in [`cubic1d`] at `x`.
#[inline]
pub fn cubic_weights(x: f64) -> [f64; 4] {
    let x2 = x * x;
    let x3 = x2 * x;
    [
        -0.5 * x3 + x2 - 0.5 * x,
        1.5 * x3 - 2.5 * x2 + 1.0,
        -1.5 * x3 + 2.0 * x2 + 0.5 * x,
        0.5 * x3 - 0.5 * x2,
    ]
}

/// Location of the 4×4 stencil around `(x, y)`: first column/row index and
/// the fractional offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub i0: isize,
    pub j0: isize,
    pub fx: f64,
    pub fy: f64,
}

impl Stencil {
    #[inline]
    pub fn at(x: f64, y: f64) -> Self {
        let bx = x.floor();
        let by = y.floor();
        Self { i0: bx as isize - 1, j0: by as isize - 1, fx: x - bx, fy: y - by }
    }

    /// Whether all 16 points lie on a `width × height` grid.
    #[inline]
    pub fn inside(&self, width: usize, height: usize) -> bool {
        self.i0 >= 0
            && self.j0 >= 0
            && self.i0 + 3 < width as isize
            && self.j0 + 3 < height as isize
    }
}

/// Coordinates this far outside any grid are treated as out of domain.
const COORD_LIMIT: f64 = 1e12;

/// Bicubic sample of `u` at `(x, y)`, or `None` when the 16-point stencil
/// leaves the grid. Interpolates each of the four stencil columns in `y`,
/// then the results in `x`.
pub fn bicubic_sample(u: &Image, x: f64, y: f64) -> Result<Option<f64>> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::param(format!("non-finite sample position ({x}, {y})")));
    }
    Ok(sample_strict(u, x, y))
}

#[inline]
pub(crate) fn sample_strict(u: &Image, x: f64, y: f64) -> Option<f64> {
    if x.abs() > COORD_LIMIT || y.abs() > COORD_LIMIT {
        return None;
    }
    let s = Stencil::at(x, y);
    if !s.inside(u.width(), u.height()) {
        return None;
    }
    let (i0, j0) = (s.i0 as usize, s.j0 as usize);
    let mut col = [0.0; 4];
    for (k, c) in col.iter_mut().enumerate() {
        let i = i0 + k;
        *c = cubic1d(u.get(i, j0), u.get(i, j0 + 1), u.get(i, j0 + 2), u.get(i, j0 + 3), s.fy);
    }
    Some(cubic1d(col[0], col[1], col[2], col[3], s.fx))
}

/// Bicubic sample with edge-replicated indices; defined everywhere.
pub fn bicubic_sample_clamped(u: &Image, x: f64, y: f64) -> f64 {
    let (w, h) = u.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let s = Stencil::at(x, y);
    let ci = |k: isize| (s.i0 + k).clamp(0, w as isize - 1) as usize;
    let cj = |k: isize| (s.j0 + k).clamp(0, h as isize - 1) as usize;
    let wx = cubic_weights(s.fx);
    let wy = cubic_weights(s.fy);
    let mut acc = 0.0;
    for (a, &wa) in wx.iter().enumerate() {
        let i = ci(a as isize);
        let mut col = 0.0;
        for (b, &wb) in wy.iter().enumerate() {
            col += wb * u.get(i, cj(b as isize));
        }
        acc += wa * col;
    }
    acc
}

/// Source coordinate of target index `a` when mapping `n_dst` samples
/// corner-to-corner onto `n_src` samples.
#[inline]
fn corner_map(a: usize, n_src: usize, n_dst: usize) -> f64 {
    if n_dst > 1 {
        a as f64 * (n_src - 1) as f64 / (n_dst - 1) as f64
    } else {
        (n_src - 1) as f64 / 2.0
    }
}

pub fn resample_bicubic(u: &Image, new_width: usize, new_height: usize) -> Image {
    assert!(new_width > 0 && new_height > 0, "empty resample target");
    let (w, h) = u.dims();
    if (w, h) == (new_width, new_height) {
        return u.clone();
    }
    let mut out = vec![0.0; new_width * new_height];
    par::update(&mut out, |p, o| {
        let x = corner_map(p % new_width, w, new_width);
        let y = corner_map(p / new_width, h, new_height);
        *o = bicubic_sample_clamped(u, x, y);
    });
    Image::from_raw(new_width, new_height, out)
}

/// Normalized Gaussian taps on `-⌈3σ⌉..=⌈3σ⌉`. `sigma = 0` gives `[1]`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian smoothing with replicate padding.
pub fn gaussian_smooth(u: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return u.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = u.dims();
    let src = u.data();
    let mut tmp = vec![0.0; w * h];
    par::update(&mut tmp, |p, o| {
        let (i, j) = ((p % w) as isize, p / w);
        *o = k
            .iter()
            .enumerate()
            .map(|(t, &kt)| kt * src[j * w + (i + t as isize - r).clamp(0, w as isize - 1) as usize])
            .sum();
    });
    let mut out = vec![0.0; w * h];
    par::update(&mut out, |p, o| {
        let (i, j) = (p % w, (p / w) as isize);
        *o = k
            .iter()
            .enumerate()
            .map(|(t, &kt)| kt * tmp[(j + t as isize - r).clamp(0, h as isize - 1) as usize * w + i])
            .sum();
    });
    Image::from_raw(w, h, out)
}

/// Median over a `size × size` window clipped to the image. Even-sized
/// clipped windows take the mean of the two middle values.
pub fn median_filter(u: &Image, size: usize) -> Result<Image> {
    if size.is_multiple_of(2) {
        return Err(Error::param(format!("median window must be odd, got {size}")));
    }
    let r = size / 2;
    let (w, h) = u.dims();
    let src = u.data();
    let mut out = vec![0.0; w * h];
    par::update(&mut out, |p, o| {
        let (i, j) = (p % w, p / w);
        let (i_lo, i_hi) = (i.saturating_sub(r), (i + r).min(w - 1));
        let (j_lo, j_hi) = (j.saturating_sub(r), (j + r).min(h - 1));
        let mut vals = Vec::with_capacity(size * size);
        for jj in j_lo..=j_hi {
            vals.extend_from_slice(&src[jj * w + i_lo..=jj * w + i_hi]);
        }
        *o = median(&mut vals);
    });
    Ok(Image::from_raw(w, h, out))
}

fn median(vals: &mut [f64]) -> f64 {
    let n = vals.len();
    let mid = n / 2;
    let (_, &mut upper, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = vals[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Level sizes of a coarse-to-fine pyramid, finest first.
///
/// Level `s` has size `round(w ηˢ) × round(h ηˢ)`; levels are added while
/// both dimensions stay at least `min_dim`. Levels that round to the size of
/// their predecessor are skipped.
pub fn pyramid_sizes(width: usize, height: usize, eta: f64, min_dim: usize) -> Vec<(usize, usize)> {
    assert!(eta > 0.0 && eta < 1.0, "eta must lie in (0, 1)");
    let mut sizes = vec![(width, height)];
    for s in 1.. {
        let f = eta.powi(s);
        let ws = (width as f64 * f).round() as usize;
        let hs = (height as f64 * f).round() as usize;
        if ws < min_dim || hs < min_dim || ws == 0 || hs == 0 {
            break;
        }
        if sizes.last() != Some(&(ws, hs)) {
            sizes.push((ws, hs));
        }
    }
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cubic_endpoints_and_linear_data() {
        assert_eq!(cubic1d(3.0, -1.0, 4.0, 2.0, 0.0), -1.0);
        assert!((cubic1d(3.0, -1.0, 4.0, 2.0, 1.0) - 4.0).abs() < 1e-15);
        assert!((cubic1d(0.0, 1.0, 2.0, 3.0, 0.25) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn pure_cubic_is_not_reproduced() {
        // Catmull-Rom is exact up to degree two only: t³ at x = ¼ gives 7/64, not 1/64.
        let v = cubic1d(-1.0, 0.0, 1.0, 8.0, 0.25);
        assert!((v - 0.109375).abs() < 1e-15);
    }

    #[test]
    fn weights_match_formula() {
        for &x in &[0.0, 0.1, 0.5, 0.77, 1.0] {
            let w = cubic_weights(x);
            let v = cubic1d(1.3, -0.2, 0.7, 2.1, x);
            let wv = w[0] * 1.3 - w[1] * 0.2 + w[2] * 0.7 + w[3] * 2.1;
            assert!((v - wv).abs() < 1e-14);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bicubic_integer_point_and_domain() {
        let u = Image::from_fn(6, 7, |i, j| (i * 7 + j * 3) as f64 * 0.1 + ((i * j) as f64).sin());
        assert_eq!(bicubic_sample(&u, 2.0, 3.0).unwrap(), Some(u.get(2, 3)));
        assert_eq!(bicubic_sample(&u, 0.5, 3.0).unwrap(), None);
        assert_eq!(bicubic_sample(&u, 2.0, 5.0).unwrap(), None);
        assert!(bicubic_sample(&u, 3.9, 4.9).unwrap().is_some());
        assert_eq!(bicubic_sample(&u, -3.2, 2.0).unwrap(), None);
        assert!(bicubic_sample(&u, f64::NAN, 2.0).is_err());
        assert!(bicubic_sample(&u, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn bicubic_reproduces_bilinear_ramp() {
        let u = Image::from_fn(8, 8, |i, j| 2.0 * i as f64 + 3.0 * j as f64);
        let v = bicubic_sample(&u, 1.5, 2.5).unwrap().unwrap();
        assert!((v - 10.5).abs() < 1e-12);
    }

    #[test]
    fn gaussian_impulse_center() {
        // Oracle: the 1D taps computed independently, squared.
        let taps: Vec<f64> = (-3..=3).map(|t: i32| (-(t * t) as f64 / 2.0).exp()).collect();
        let center = 1.0 / taps.iter().sum::<f64>();
        let mut u = Image::zeros(15, 15);
        u.set(7, 7, 1.0);
        let s = gaussian_smooth(&u, 1.0);
        assert!((s.get(7, 7) - center * center).abs() < 1e-15);
        assert!((s.get(7, 7) - 0.1592).abs() < 1e-4);
        assert_eq!(gaussian_smooth(&u, 0.0), u);
        let c = gaussian_smooth(&Image::filled(9, 4, 0.3), 2.0);
        assert!(c.data().iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn median_cases() {
        let c = Image::filled(6, 6, 0.4);
        assert_eq!(median_filter(&c, 5).unwrap(), c);
        assert!(median_filter(&c, 4).is_err());
        let mut o = Image::filled(8, 8, 1.0);
        o.set(3, 4, 50.0);
        assert!(median_filter(&o, 5).unwrap().data().iter().all(|&v| v == 1.0));
        let nine = Image::from_fn(3, 3, |i, j| (3 * j + i + 1) as f64);
        assert_eq!(median_filter(&nine, 3).unwrap().get(1, 1), 5.0);
        // Corner window {1, 2, 4, 5}: mean of the middle pair.
        assert_eq!(median_filter(&nine, 3).unwrap().get(0, 0), 3.0);
    }

    #[test]
    fn pyramid_sizes_examples() {
        let s = pyramid_sizes(100, 80, 0.8, 10);
        assert_eq!(s.len(), 10);
        assert_eq!(s[0], (100, 80));
        assert_eq!(*s.last().unwrap(), (13, 11));
        // Oracle: direct evaluation of the bound on the shorter side.
        assert!(80.0 * 0.8f64.powi(9) >= 10.0 && 80.0 * 0.8f64.powi(10) < 10.0);
        assert_eq!(pyramid_sizes(12, 12, 0.8, 10), vec![(12, 12), (10, 10)]);
        assert_eq!(pyramid_sizes(11, 11, 0.8, 10), vec![(11, 11)]);
        assert_eq!(pyramid_sizes(5, 50, 0.8, 10), vec![(5, 50)]);
        for w in s.windows(2) {
            assert!(w[1].0 < w[0].0 && w[1].1 < w[0].1);
        }
    }

    #[test]
    fn resample_identity_and_constant() {
        let u = Image::from_fn(9, 7, |i, j| ((i * 3 + j * 5) % 7) as f64);
        let same = resample_bicubic(&u, 9, 7);
        assert_eq!(same, u);
        // Forced path through the sampler at identical size.
        let mut out = Image::zeros(9, 7);
        for j in 0..7 {
            for i in 0..9 {
                out.set(i, j, bicubic_sample_clamped(&u, i as f64, j as f64));
            }
        }
        for (a, b) in out.data().iter().zip(u.data()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn resample_smooth_blob_roundtrip() {
        let blob = |i: usize, j: usize| {
            let (x, y) = (i as f64 - 15.5, j as f64 - 15.5);
            (-(x * x + y * y) / (2.0 * 36.0)).exp()
        };
        let u = Image::from_fn(32, 32, blob);
        let back = resample_bicubic(&resample_bicubic(&u, 16, 16), 32, 32);
        let err = back.data().iter().zip(u.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 0.05, "roundtrip error {err}");
    }

    proptest! {
        #[test]
        fn cubic_reproduces_quadratics(c in proptest::array::uniform3(-10.0f64..10.0), x in 0.0f64..1.0) {
            let poly = |t: f64| c[0] + c[1] * t + c[2] * t * t;
            let v = cubic1d(poly(-1.0), poly(0.0), poly(1.0), poly(2.0), x);
            prop_assert!((v - poly(x)).abs() <= 1e-12);
        }

        #[test]
        fn bicubic_preserves_constants(c in -5.0f64..5.0, x in 1.0f64..5.99, y in 1.0f64..4.99) {
            let u = Image::filled(8, 7, c);
            let v = bicubic_sample(&u, x, y).unwrap().unwrap();
            prop_assert!((v - c).abs() <= 1e-12);
        }

        #[test]
        fn resample_constant_any_size(c in -3.0f64..3.0, w in 1usize..20, h in 1usize..20) {
            let r = resample_bicubic(&Image::filled(6, 5, c), w, h);
            prop_assert!(r.data().iter().all(|v| (v - c).abs() <= 1e-12));
        }

        #[test]
        fn median_idempotent_on_binary_stripes(
            runs in proptest::collection::vec(5usize..9, 2..5),
            first in proptest::bool::ANY,
            rows in 5usize..12,
        ) {
            // Vertical stripes with every run at least as wide as the window.
            let mut cols = Vec::new();
            let mut bit = first;
            for r in &runs {
                cols.extend(std::iter::repeat_n(f64::from(u8::from(bit)), *r));
                bit = !bit;
            }
            let img = Image::from_fn(cols.len(), rows, |i, _| cols[i]);
            let once = median_filter(&img, 5).unwrap();
            let twice = median_filter(&once, 5).unwrap();
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn median_never_increases_sup(vals in proptest::collection::vec(-4.0f64..4.0, 42)) {
            let img = Image::new(7, 6, vals).unwrap();
            prop_assert!(median_filter(&img, 5).unwrap().max_abs() <= img.max_abs());
        }
    }
}
