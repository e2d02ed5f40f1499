mod support;

use jointflow::reconstruct::{init_rof, ImageOperators, ImageSolverParams};
use jointflow::{Image, ImageSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use support::oracles::{rms, rof_smoothed};

fn noisy_blob(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    Image::from_fn(16, 16, |i, j| {
        let (x, y) = (i as f64 - 7.5, j as f64 - 7.5);
        0.2 + 0.6 * (-(x * x + y * y) / 18.0).exp() + noise.sample(&mut rng)
    })
}

#[test]
fn primal_dual_rof_matches_smoothed_descent() {
    for alpha in [0.02, 0.1] {
        let frames = vec![noisy_blob(1), noisy_blob(2)];
        let f = ImageSequence::new(frames.clone()).unwrap();
        let ops = ImageOperators::identity(16, 16, 2);
        let params = ImageSolverParams { alpha, eps: 1e-6, n_res: 100, max_iter: 20_000 };
        let out = init_rof(&f, &ops, &params).unwrap();
        assert!(out.converged);
        for (k, frame) in frames.iter().enumerate() {
            let oracle = rof_smoothed(frame.data(), 16, 16, alpha, 1e-8, 400_000);
            let err = rms(out.u.frames()[k].data(), &oracle);
            eprintln!("alpha {alpha} frame {k}: {} iterations, rms {err:.2e}", out.iterations);
            assert!(err <= 1e-3, "rms {err}");
        }
    }
}
