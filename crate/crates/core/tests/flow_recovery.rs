use std::time::Instant;

use jointflow::metrics::endpoint_error;
use jointflow::synth::{blob_scene, Motion, SceneSpec};
use jointflow::{solve_flow_pyramid, SolveConfig};

#[test]
fn large_translation_of_a_blob() {
    let spec = SceneSpec {
        frames: 2,
        motion: Motion::Translate { dx: 6.0, dy: 2.0 },
        noise_variance: 0.0,
        seed: 3,
        ..SceneSpec::default()
    };
    let scene = blob_scene(&spec).unwrap();
    let f = scene.clean.frames();
    let clock = Instant::now();
    let out = solve_flow_pyramid(&f[0], &f[1], &SolveConfig::default()).unwrap();
    let support = scene.support(0, 0.1);
    let epe = endpoint_error(&out.flow, &scene.flows.fields()[0], Some(&support)).unwrap();
    eprintln!("epe {epe:.4} in {:?}", clock.elapsed());
    for w in &out.warps {
        eprintln!("{:?}", w);
    }
    assert!(epe <= 0.5, "endpoint error {epe}");
}
