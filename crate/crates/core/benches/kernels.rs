//! Kernel throughput. With the default `parallel` feature each kernel runs on
//! a one-thread pool and on the full pool; build with
//! `--no-default-features` to measure the plain sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jointflow::config::SolveConfig;
use jointflow::flow::{linearize, solve_flow_level, FlowDualState, FlowSolverParams};
use jointflow::image::{FlowField, FlowSequence, Image};
use jointflow::interp::median_filter;
use jointflow::warp::coupling_operator;

const SIZE: usize = 96;

fn scene(shift: f64) -> Image {
    Image::from_fn(SIZE, SIZE, |i, j| {
        let (x, y) = (i as f64 - 40.0 - shift, j as f64 - 48.0);
        0.2 + 0.6 * (-(x * x + y * y) / 120.0).exp() + 0.05 * (0.3 * i as f64).sin()
    })
}

#[cfg(feature = "parallel")]
fn modes() -> Vec<(String, rayon::ThreadPool)> {
    let all = rayon::current_num_threads();
    let mut out = vec![(
        "threads-1".to_string(),
        rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    if all > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(all).build().unwrap();
        out.push((format!("threads-{all}"), pool));
    }
    out
}

#[cfg(feature = "parallel")]
fn each_mode(c: &mut Criterion, group: &str, mut run: impl FnMut() + Send) {
    let mut g = c.benchmark_group(group);
    for (name, pool) in modes() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| pool.install(&mut run)));
    }
    g.finish();
}

#[cfg(not(feature = "parallel"))]
fn each_mode(c: &mut Criterion, group: &str, mut run: impl FnMut() + Send) {
    let mut g = c.benchmark_group(group);
    g.bench_function(BenchmarkId::from_parameter("sequential"), |b| b.iter(&mut run));
    g.finish();
}

fn spmv(c: &mut Criterion) {
    let flow = FlowField::from_fn(SIZE, SIZE, |i, j| (0.7 + 0.01 * i as f64, -0.4 + 0.01 * j as f64));
    let flows = FlowSequence::new(vec![flow; 4]).unwrap();
    let op = coupling_operator(&flows, (SIZE, SIZE), false).unwrap();
    let x: Vec<f64> = (0..op.cols()).map(|k| (k as f64 * 0.37).sin()).collect();
    each_mode(c, "warp_spmv", || {
        black_box(op.apply(black_box(&x)));
    });
    each_mode(c, "warp_spmv_transpose", || {
        black_box(op.apply_transpose(black_box(&x[..op.rows()])));
    });
}

fn flow_level(c: &mut Criterion) {
    let (u1, u2) = (scene(0.0), scene(1.5));
    let lin = linearize(&u1, &u2, &FlowField::zeros(SIZE, SIZE)).unwrap();
    let cfg = SolveConfig::default();
    // A residual tolerance of zero pins the work to exactly `max_iter` steps.
    let params = FlowSolverParams { eps: 0.0, max_iter: 200, ..FlowSolverParams::from_config(&cfg) };
    let v0 = FlowField::zeros(SIZE, SIZE);
    let state = FlowDualState::zeros(SIZE, SIZE);
    each_mode(c, "flow_level_200_iterations", || {
        black_box(solve_flow_level(&lin, (&v0, &state), &params, None).unwrap());
    });
}

fn median(c: &mut Criterion) {
    let u = scene(0.0);
    each_mode(c, "median_5x5", || {
        black_box(median_filter(black_box(&u), 5).unwrap());
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = spmv, flow_level, median
}
criterion_main!(benches);
