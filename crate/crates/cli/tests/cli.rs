use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jointflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointflow")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = jointflow(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(root: &Path, size: &str, frames: &str) -> std::path::PathBuf {
    let scene = root.join("scene");
    ok(&["synth", "-o", s(&scene), "--width", size, "--height", size, "--frames", frames, "--seed", "2"]);
    scene
}

#[test]
fn synth_joint_evaluate_smoke_path() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "24", "3");
    for k in 0..3 {
        assert!(scene.join(format!("truth/frame_{k:03}.pgm")).exists());
        assert!(scene.join(format!("noisy/frame_{k:03}.pgm")).exists());
    }
    assert!(scene.join("truth/flow_001.flo").exists());

    let out = tmp.path().join("out");
    ok(&["joint", s(&scene.join("noisy")), "-o", s(&out), "--max-outer", "1"]);
    for name in ["frame_000.pgm", "frame_002.pgm", "flow_000.flo", "flow_001.ppm", "diagnostics.json"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let diag: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["schemaVersion"], 1);
    assert_eq!(diag["outer"].as_array().unwrap().len(), 1);

    let csv = tmp.path().join("metrics.csv");
    ok(&["evaluate", "--result", s(&out), "--truth", s(&scene.join("truth")), "--name", "blob", "--csv", s(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "sequence,SSIM,L2Error,PSNR,PSNR255,EPE,AE");
    let cells: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(cells.len(), 7);
    assert_eq!(cells[0], "blob");
    assert!(cells[1..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
}

#[test]
fn evaluating_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "16", "2");
    let truth = scene.join("truth");
    let stdout = ok(&["evaluate", "--result", s(&truth), "--truth", s(&truth)]);
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(row[2].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[6].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn joint_without_coupling_matches_denoise() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "20", "2");
    let noisy = scene.join("noisy");
    let (a, b) = (tmp.path().join("joint"), tmp.path().join("denoise"));
    ok(&["joint", s(&noisy), "-o", s(&a), "--gamma", "0", "--max-outer", "1", "--alpha", "0.05"]);
    ok(&["denoise", s(&noisy), "-o", s(&b), "--alpha", "0.05"]);
    for k in 0..2 {
        let name = format!("frame_{k:03}.pgm");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn config_round_trips_through_dump() {
    let tmp = tempfile::tempdir().unwrap();
    let kv = tmp.path().join("cfg.txt");
    fs::write(&kv, "alpha = 0.05\ninit = smooth\nn_warps = 2\n").unwrap();
    let dumped = ok(&["joint", "--config", s(&kv), "--gamma", "0.5", "--dump-config"]);
    let json = tmp.path().join("cfg.json");
    fs::write(&json, &dumped).unwrap();
    let again = ok(&["joint", "--config", s(&json), "--dump-config"]);
    assert_eq!(dumped, again);
    let v: serde_json::Value = serde_json::from_str(&dumped).unwrap();
    assert_eq!(v["alpha"], 0.05);
    assert_eq!(v["gamma"], 0.5);
    assert_eq!(v["init"], "smooth");
    assert_eq!(v["n_warps"], 2);
}

#[test]
fn bad_input_fails_with_a_message() {
    let out = jointflow(&["joint", "--no-such-flag"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let out = jointflow(&["joint", "--dump-config", "--median", "4"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("size_med"));

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nothing*.pgm");
    let out = jointflow(&["denoise", s(&missing), "-o", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input matches"));
}

#[test]
fn flow_subcommand_writes_flo_and_color() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = synth(tmp.path(), "24", "2");
    let truth = scene.join("truth");
    let flo = tmp.path().join("v.flo");
    let ppm = tmp.path().join("v.ppm");
    ok(&[
        "flow",
        s(&truth.join("frame_000.pgm")),
        s(&truth.join("frame_001.pgm")),
        "-o",
        s(&flo),
        "--color",
        s(&ppm),
    ]);
    let bytes = fs::read(&flo).unwrap();
    assert_eq!(&bytes[..4], b"PIEH");
    assert_eq!(bytes.len(), 12 + 24 * 24 * 8);
    assert!(fs::read(&ppm).unwrap().starts_with(b"P6"));
}
