//! The joint objective in `u` and `v`.

use crate::config::SolveConfig;
use crate::error::{Error, Result};
use crate::image::{FlowSequence, Image, ImageSequence};
use crate::operators::{dx_at, dy_at};
use crate::par;
use crate::reconstruct::ImageOperators;
use crate::warp::coupling_operator;

/// Isotropic total variation `Σ |∇u|`.
pub fn total_variation(u: &Image) -> f64 {
    let (w, h) = u.dims();
    let d = u.data();
    par::sum(w * h, |p| dx_at(d, w, p).hypot(dy_at(d, w, h, p)))
}

/// Evaluates
/// `Σᵢ ½‖Aⁱuⁱ − fⁱ‖² + α TV(uⁱ) + γ‖uⁱ⁺¹(x + vⁱ) − uⁱ(x)‖₁ + β Σⱼ TV(v^{i,j})`.
///
/// The brightness term uses the same warp (or, in time-continuous mode, the
/// same linearized coupling) as the image solver; pixels whose warped
/// position leaves the interpolation domain contribute nothing.
pub fn joint_energy(
    u: &ImageSequence,
    v: &FlowSequence,
    f: &ImageSequence,
    ops: &ImageOperators,
    cfg: &SolveConfig,
) -> Result<f64> {
    if u.len() != f.len() || u.len() != ops.frames() {
        return Err(Error::dim(format!("{} frames, {} observations, {} operators", u.len(), f.len(), ops.frames())));
    }
    if u.dims() != ops.dims() {
        return Err(Error::dim("reconstruction does not match the operator size"));
    }
    v.check_matches(u)?;
    let stacked = u.stacked();
    let au = ops.block().apply(&stacked);
    let fd = ops.data(f.frames())?;
    let data = 0.5 * par::sum(au.len(), |r| (au[r] - fd[r]).powi(2));
    let tv_u: f64 = u.frames().iter().map(total_variation).sum();
    let coupling = if cfg.gamma > 0.0 {
        let c = coupling_operator(v, u.dims(), cfg.time_continuous)?;
        let cu = c.apply(&stacked);
        cfg.gamma * par::sum(cu.len(), |r| cu[r].abs())
    } else {
        0.0
    };
    let tv_v: f64 = v.fields().iter().map(|fl| total_variation(&fl.v1) + total_variation(&fl.v2)).sum();
    let e = data + cfg.alpha * tv_u + coupling + cfg.beta * tv_v;
    if !e.is_finite() {
        return Err(Error::NonFinite { what: "joint energy", iteration: 0 });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::FlowField;
    use crate::interp::bicubic_sample;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize, shift: usize) -> Image {
        Image::from_fn(w, h, |i, j| {
            let x = i as f64 - shift as f64;
            ((0.9 * x).sin() + (0.7 * j as f64).cos()) * 0.25 + 0.5
        })
    }

    // Straightforward evaluation of every term for A = I.
    fn oracle(u: &[Image], v: &[FlowField], f: &[Image], cfg: &SolveConfig) -> f64 {
        let tv = |im: &Image| {
            let (w, h) = im.dims();
            let mut s = 0.0;
            for j in 0..h {
                for i in 0..w {
                    let gx = if i + 1 < w { im.get(i + 1, j) - im.get(i, j) } else { 0.0 };
                    let gy = if j + 1 < h { im.get(i, j + 1) - im.get(i, j) } else { 0.0 };
                    s += (gx * gx + gy * gy).sqrt();
                }
            }
            s
        };
        let mut e = 0.0;
        for (uf, ff) in u.iter().zip(f) {
            e += 0.5 * uf.data().iter().zip(ff.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            e += cfg.alpha * tv(uf);
        }
        for (k, fl) in v.iter().enumerate() {
            let (w, h) = fl.dims();
            for j in 0..h {
                for i in 0..w {
                    let x = i as f64 + fl.v1.get(i, j);
                    let y = j as f64 + fl.v2.get(i, j);
                    if let Some(s) = bicubic_sample(&u[k + 1], x, y).unwrap() {
                        e += cfg.gamma * (s - u[k].get(i, j)).abs();
                    }
                }
            }
            e += cfg.beta * (tv(&fl.v1) + tv(&fl.v2));
        }
        e
    }

    #[test]
    fn constant_sequence_with_zero_flow_is_zero() {
        let f = ImageSequence::new(vec![Image::filled(5, 5, 0.4); 3]).unwrap();
        let v = FlowSequence::zeros(3, 5, 5);
        let ops = ImageOperators::identity(5, 5, 3);
        assert_eq!(joint_energy(&f, &v, &f, &ops, &SolveConfig::default()).unwrap(), 0.0);

        let g = ImageSequence::new(vec![Image::filled(2, 2, 0.1), Image::filled(2, 2, 0.1)]).unwrap();
        let ops = ImageOperators::identity(2, 2, 2);
        let v = FlowSequence::zeros(2, 2, 2);
        assert_eq!(joint_energy(&g, &v, &g, &ops, &SolveConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn true_shift_has_lower_energy_and_matches_oracle() {
        // 3×3 frames have no pixel with a full 4×4 stencil, so use 8×8.
        let u1 = textured(8, 8, 0);
        let u2 = textured(8, 8, 1);
        let u = ImageSequence::new(vec![u1, u2]).unwrap();
        let ops = ImageOperators::identity(8, 8, 2);
        let cfg = SolveConfig::default();
        let zero = FlowSequence::zeros(2, 8, 8);
        let shift = FlowSequence::new(vec![FlowField::constant(8, 8, 1.0, 0.0)]).unwrap();
        let e0 = joint_energy(&u, &zero, &u, &ops, &cfg).unwrap();
        let e1 = joint_energy(&u, &shift, &u, &ops, &cfg).unwrap();
        assert!(e1 < e0, "{e1} !< {e0}");
        for (v, e) in [(&zero, e0), (&shift, e1)] {
            let o = oracle(u.frames(), v.fields(), u.frames(), &cfg);
            assert!((o - e).abs() <= 1e-10 * (1.0 + o), "{o} vs {e}");
        }
    }

    #[test]
    fn dimension_errors() {
        let u = ImageSequence::new(vec![Image::zeros(4, 4); 2]).unwrap();
        let ops = ImageOperators::identity(4, 4, 2);
        let v = FlowSequence::zeros(3, 4, 4);
        assert!(joint_energy(&u, &v, &u, &ops, &SolveConfig::default()).is_err());
        let ops3 = ImageOperators::identity(4, 4, 3);
        let v1 = FlowSequence::zeros(2, 4, 4);
        assert!(joint_energy(&u, &v1, &u, &ops3, &SolveConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn energy_is_non_negative(
            a in proptest::collection::vec(-1.0f64..1.0, 36),
            b in proptest::collection::vec(-1.0f64..1.0, 36),
            d in proptest::collection::vec(-3.0f64..3.0, 72),
            tc in any::<bool>(),
        ) {
            let u = ImageSequence::new(vec![Image::new(6, 6, a.clone()).unwrap(), Image::new(6, 6, b).unwrap()]).unwrap();
            let f = ImageSequence::new(vec![Image::new(6, 6, a).unwrap(), Image::zeros(6, 6)]).unwrap();
            let flow = FlowField::new(Image::new(6, 6, d[..36].to_vec()).unwrap(), Image::new(6, 6, d[36..].to_vec()).unwrap()).unwrap();
            let v = FlowSequence::new(vec![flow]).unwrap();
            let ops = ImageOperators::identity(6, 6, 2);
            let cfg = SolveConfig { time_continuous: tc, ..SolveConfig::default() };
            prop_assert!(joint_energy(&u, &v, &f, &ops, &cfg).unwrap() >= 0.0);
        }
    }
}
