use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use jointflow::config::{OperatorKind, SolveConfig};
use jointflow::driver::{solve_joint_with, JointOptions};
use jointflow::flow::solve_flow_pyramid;
use jointflow::image::{normalize_sequence, FlowField, ImageSequence, Normalization};
use jointflow::io::{write_atomic, write_flo, write_flow_color, BitDepth};
use jointflow::metrics::{
    add_gaussian_noise, angular_error, endpoint_error, l2_error, psnr_from_mse, sequence_mean, ssim, valid_flow_mask,
};
use jointflow::operators::ForwardOperator;
use jointflow::reconstruct::{init_rof, ImageOperators, ImageSolverParams};
use jointflow::synth::{blob_scene, Motion, SceneSpec};

use crate::args::SolverArgs;
use crate::files;

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Frame files, directories or glob patterns, in temporal order.
    #[arg(required_unless_present = "dump_config", value_name = "FRAMES")]
    pub inputs: Vec<PathBuf>,
    /// Stretch the global intensity range onto [0, 1] before solving.
    #[arg(long)]
    pub normalize: bool,
    /// Variance of Gaussian noise added to the inputs before solving.
    #[arg(long, default_value_t = 0.0)]
    pub noise_var: f64,
    /// Seed for `--noise-var`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

impl From<Depth> for BitDepth {
    fn from(d: Depth) -> Self {
        match d {
            Depth::Eight => BitDepth::Eight,
            Depth::Sixteen => BitDepth::Sixteen,
        }
    }
}

#[derive(Debug, Args)]
pub struct JointArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long, short, required_unless_present = "dump_config")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "16")]
    pub depth: Depth,
    /// Record wall-clock stage timings in the diagnostics.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, short, required_unless_present = "dump_config")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "16")]
    pub depth: Depth,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output `.flo` file.
    #[arg(long, short, required_unless_present = "dump_config")]
    pub out: Option<PathBuf>,
    /// Also write a color rendering (PPM).
    #[arg(long, value_name = "FILE")]
    pub color: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory with the reconstructed frames and flows.
    #[arg(long)]
    pub result: PathBuf,
    /// Directory with the ground-truth frames and (optionally) `.flo` files.
    #[arg(long)]
    pub truth: PathBuf,
    /// Sequence name for the CSV row.
    #[arg(long, default_value = "sequence")]
    pub name: String,
    /// Result flow that a single ground-truth `.flo` belongs to.
    #[arg(long)]
    pub flow_index: Option<usize>,
    /// Append the row to this CSV file (created with a header) instead of printing.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 5)]
    pub frames: usize,
    /// Horizontal shift per frame.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub dx: f64,
    /// Vertical shift per frame.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub dy: f64,
    /// Rotate about the centre by this many degrees per frame instead of translating.
    #[arg(long, allow_negative_numbers = true)]
    pub rotate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub blobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_var: f64,
}

/// Prints the config and returns true when `--dump-config` was given.
fn dump_config(solver: &SolverArgs, cfg: &SolveConfig) -> Result<bool> {
    if solver.dump_config {
        writeln!(io::stdout(), "{}", cfg.to_json())?;
    }
    Ok(solver.dump_config)
}

fn out_path(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().context("--out is required")
}

struct Prepared {
    f: ImageSequence,
    norm: Option<Normalization>,
}

fn load_inputs(input: &InputArgs) -> Result<Prepared> {
    let paths = files::expand_inputs(&input.inputs)?;
    let raw = files::read_sequence(&paths)?;
    let (f, norm) = if input.normalize {
        let (f, n) = normalize_sequence(&raw);
        (f, Some(n))
    } else {
        (raw, None)
    };
    let f = if input.noise_var > 0.0 { add_gaussian_noise(&f, 0.0, input.noise_var, input.seed)? } else { f };
    Ok(Prepared { f, norm })
}

fn build_operators(cfg: &SolveConfig, solver: &SolverArgs, f: &ImageSequence) -> Result<ImageOperators> {
    let (ow, oh) = f.dims();
    let (w, h) = match cfg.operator {
        OperatorKind::Subsample => (ow * cfg.subsample_factor, oh * cfg.subsample_factor),
        _ => (ow, oh),
    };
    let mask = match solver.mask_path() {
        Some(path) if cfg.operator == OperatorKind::Mask => {
            let (mw, mh, m) = files::read_mask(path)?;
            ensure!((mw, mh) == (w, h), "mask is {mw}x{mh} but frames are {w}x{h}");
            Some(m)
        }
        _ => None,
    };
    let op = ForwardOperator::from_config(cfg, w, h, mask.as_deref())?;
    Ok(ImageOperators::replicate(op, f.len())?)
}

fn restore(u: &ImageSequence, norm: Option<Normalization>) -> ImageSequence {
    match norm {
        Some(n) => n.denormalize(u),
        None => u.clone(),
    }
}

pub fn joint(args: &JointArgs) -> Result<()> {
    let cfg = args.solver.resolve()?;
    if dump_config(&args.solver, &cfg)? {
        return Ok(());
    }
    let p = load_inputs(&args.input)?;
    ensure!(p.f.len() >= 2, "joint needs at least two frames");
    let ops = build_operators(&cfg, &args.solver, &p.f)?;
    let dir = out_path(&args.out)?;
    let out = solve_joint_with(&p.f, &ops, &cfg, JointOptions { timings: args.timings })?;
    files::write_frames(dir, &restore(&out.u, p.norm), args.depth.into())?;
    files::write_flows(dir, out.v.fields())?;
    let json = serde_json::to_string_pretty(&out.diagnostics)?;
    write_atomic(&dir.join("diagnostics.json"), json.as_bytes())?;
    let d = &out.diagnostics;
    eprintln!(
        "{} outer iterations, converged {}, energy {:.6e} -> {:.6e}",
        d.outer.len(),
        d.converged,
        d.init_energy,
        d.final_energy()
    );
    Ok(())
}

pub fn denoise(args: &DenoiseArgs) -> Result<()> {
    let cfg = args.solver.resolve()?;
    if dump_config(&args.solver, &cfg)? {
        return Ok(());
    }
    let p = load_inputs(&args.input)?;
    let ops = build_operators(&cfg, &args.solver, &p.f)?;
    let dir = out_path(&args.out)?;
    let out = init_rof(&p.f, &ops, &ImageSolverParams::from_config(&cfg))?;
    files::write_frames(dir, &restore(&out.u, p.norm), args.depth.into())?;
    eprintln!("{} iterations, residual {:.3e}, converged {}", out.iterations, out.residual, out.converged);
    Ok(())
}

pub fn flow(args: &FlowArgs) -> Result<()> {
    let cfg = args.solver.resolve()?;
    if dump_config(&args.solver, &cfg)? {
        return Ok(());
    }
    let p = load_inputs(&args.input)?;
    ensure!(p.f.len() == 2, "flow takes exactly two frames, got {}", p.f.len());
    let path = out_path(&args.out)?;
    let frames = p.f.frames();
    let out = solve_flow_pyramid(&frames[0], &frames[1], &cfg)?;
    write_flo(path, &out.flow)?;
    if let Some(path) = &args.color {
        write_flow_color(path, &out.flow, None)?;
    }
    eprintln!(
        "{} warps, {} iterations, all converged {}",
        out.warps.len(),
        out.total_iterations(),
        out.all_converged()
    );
    Ok(())
}

pub const CSV_HEADER: &str = "sequence,SSIM,L2Error,PSNR,PSNR255,EPE,AE";

fn fmt_metric(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:.6}"))
}

fn flow_errors(result: &[FlowField], truth: &[FlowField], index: Option<usize>) -> Result<Option<(f64, f64)>> {
    let pairs: Vec<(&FlowField, &FlowField)> = match (truth.len(), index) {
        (0, _) => return Ok(None),
        (1, Some(k)) => {
            let r = result.get(k).with_context(|| format!("no result flow {k}"))?;
            vec![(r, &truth[0])]
        }
        (n, None) if n == result.len() => result.iter().zip(truth).collect(),
        (n, _) => bail!("{n} ground-truth flows for {} result flows; pass --flow-index", result.len()),
    };
    let (mut epe, mut ae) = (0.0, 0.0);
    for (r, t) in &pairs {
        let mask = valid_flow_mask(t);
        epe += endpoint_error(r, t, Some(&mask))?;
        ae += angular_error(r, t, Some(&mask))?;
    }
    let n = pairs.len() as f64;
    Ok(Some((epe / n, ae / n)))
}

/// One CSV row comparing a result directory against ground truth.
pub fn evaluate_row(args: &EvaluateArgs) -> Result<String> {
    let result = files::read_frames_in(&args.result)?;
    let truth = files::read_frames_in(&args.truth)?;
    let ssim_mean = sequence_mean(&result, &truth, ssim)?;
    let mse = sequence_mean(&result, &truth, l2_error)?;
    let psnr1 = sequence_mean(&result, &truth, |a, b| Ok(psnr_from_mse(l2_error(a, b)?, 1.0)))?;
    let psnr255 = sequence_mean(&result, &truth, |a, b| Ok(psnr_from_mse(l2_error(a, b)?, 255.0)))?;
    let flows = flow_errors(&files::read_flows(&args.result)?, &files::read_flows(&args.truth)?, args.flow_index)?;
    Ok(format!(
        "{},{},{},{},{},{},{}",
        args.name,
        fmt_metric(Some(ssim_mean)),
        format_args!("{mse:.6e}"),
        fmt_metric(Some(psnr1)),
        fmt_metric(Some(psnr255)),
        fmt_metric(flows.map(|f| f.0)),
        fmt_metric(flows.map(|f| f.1)),
    ))
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let row = evaluate_row(args)?;
    match &args.csv {
        None => writeln!(io::stdout(), "{CSV_HEADER}\n{row}")?,
        Some(path) => {
            let mut text = if path.exists() {
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
            } else {
                format!("{CSV_HEADER}\n")
            };
            if !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&row);
            text.push('\n');
            write_atomic(path, text.as_bytes())?;
        }
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let motion = match args.rotate {
        Some(degrees) => Motion::Rotate { degrees },
        None => Motion::Translate { dx: args.dx, dy: args.dy },
    };
    let spec = SceneSpec {
        width: args.width,
        height: args.height,
        frames: args.frames,
        motion,
        blobs: args.blobs,
        seed: args.seed,
        noise_variance: args.noise_var,
    };
    let scene = blob_scene(&spec)?;
    let truth = args.out.join("truth");
    files::write_frames(&truth, &scene.clean, BitDepth::Sixteen)?;
    files::write_flows(&truth, scene.flows.fields())?;
    files::write_frames(&args.out.join("noisy"), &scene.observed, BitDepth::Sixteen)?;
    write_spec(&args.out, &spec)
}

fn write_spec(dir: &Path, spec: &SceneSpec) -> Result<()> {
    let json = serde_json::to_string_pretty(spec)?;
    write_atomic(&dir.join("scene.json"), json.as_bytes())?;
    Ok(())
}
