//! Alternating minimization over flows and images.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{InitKind, SolveConfig};
use crate::energy::joint_energy;
use crate::error::{Error, Result};
use crate::flow::solve_flow_pyramid;
use crate::image::{FlowField, FlowSequence, ImageSequence};
use crate::par;
use crate::reconstruct::{init_rof, init_smooth_time, solve_images, ImageOperators, ImageSolverParams};

pub const DIAGNOSTICS_SCHEMA_VERSION: u32 = 1;

/// Wall-clock seconds spent in each stage of one outer iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageTimings {
    pub flow_seconds: f64,
    pub image_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OuterRecord {
    pub iteration: usize,
    pub energy: f64,
    pub r_main: f64,
    /// Total primal-dual iterations of each frame pair's flow solve.
    pub flow_iterations: Vec<usize>,
    pub flow_converged: bool,
    pub image_iterations: usize,
    pub image_residual: f64,
    pub image_converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timings: Option<StageTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Diagnostics {
    pub schema_version: u32,
    pub config: SolveConfig,
    pub init: InitKind,
    pub init_iterations: usize,
    pub init_residual: f64,
    /// Energy of the initial reconstruction with zero flow.
    pub init_energy: f64,
    pub outer: Vec<OuterRecord>,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub init_seconds: Option<f64>,
}

impl Diagnostics {
    pub fn final_energy(&self) -> f64 {
        self.outer.last().map_or(self.init_energy, |r| r.energy)
    }

    /// Outer iterations where the energy went up.
    pub fn energy_increases(&self) -> Vec<usize> {
        let mut prev = self.init_energy;
        let mut out = Vec::new();
        for r in &self.outer {
            if r.energy > prev {
                out.push(r.iteration);
            }
            prev = r.energy;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub u: ImageSequence,
    pub v: FlowSequence,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct JointOptions {
    /// Record wall-clock timings (makes diagnostics run-dependent).
    pub timings: bool,
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    par::sum(a.len(), |k| (a[k] - b[k]).abs()) / a.len() as f64
}

fn stacked_flow(v: &FlowSequence) -> Vec<f64> {
    let mut out = Vec::new();
    for fl in v.fields() {
        out.extend_from_slice(fl.v1.data());
        out.extend_from_slice(fl.v2.data());
    }
    out
}

pub fn solve_joint(f: &ImageSequence, ops: &ImageOperators, cfg: &SolveConfig) -> Result<JointOutcome> {
    solve_joint_with(f, ops, cfg, JointOptions::default())
}

/// Runs the alternating scheme: initialize `u`, then repeat {flows for every
/// frame pair, images for the new flows} until the mean change of `u` and
/// `v` drops below `eps_main` or `iter_main_max` is reached.
pub fn solve_joint_with(
    f: &ImageSequence,
    ops: &ImageOperators,
    cfg: &SolveConfig,
    options: JointOptions,
) -> Result<JointOutcome> {
    cfg.validate()?;
    if f.len() != ops.frames() {
        return Err(Error::dim(format!("{} frames for {} operators", f.len(), ops.frames())));
    }
    let (w, h) = ops.dims();
    let params = ImageSolverParams::from_config(cfg);
    let clock = Instant::now();
    let init = match cfg.init {
        InitKind::Rof => init_rof(f, ops, &params)?,
        InitKind::Smooth => init_smooth_time(f, ops, &params, cfg.epsilon_t)?,
    };
    let init_seconds = options.timings.then(|| clock.elapsed().as_secs_f64());
    let init_converged = init.converged;
    let mut u = init.u;
    let mut v = FlowSequence::zeros(f.len(), w, h);
    let init_energy = joint_energy(&u, &v, f, ops, cfg)?;
    let mut diagnostics = Diagnostics {
        schema_version: DIAGNOSTICS_SCHEMA_VERSION,
        config: cfg.clone(),
        init: cfg.init,
        init_iterations: init.iterations,
        init_residual: init.residual,
        init_energy,
        outer: Vec::new(),
        converged: false,
        init_seconds,
    };

    for iteration in 1..=cfg.iter_main_max {
        let wrap = |e: Error| Error::Outer { iteration, source: Box::new(e) };
        let clock = Instant::now();
        let pairs: Vec<usize> = (0..f.len() - 1).collect();
        let frames = u.frames();
        let flows = par::map(&pairs, |&k| solve_flow_pyramid(&frames[k], &frames[k + 1], cfg));
        let flows: Vec<_> = flows.into_iter().collect::<Result<_>>().map_err(wrap)?;
        let flow_seconds = clock.elapsed().as_secs_f64();
        let flow_iterations = flows.iter().map(|o| o.total_iterations()).collect();
        let flow_converged = flows.iter().all(|o| o.all_converged());
        let new_v = FlowSequence::new(flows.into_iter().map(|o| o.flow).collect::<Vec<FlowField>>()).map_err(wrap)?;

        // Without coupling the image subproblem ignores `v`, so the initial
        // reconstruction is already its minimizer.
        let clock = Instant::now();
        let (new_u, image_iterations, image_residual, image_converged) = if cfg.gamma > 0.0 {
            let image = solve_images(f, &new_v, ops, cfg.gamma, cfg.time_continuous, &params, Some(&u)).map_err(wrap)?;
            (image.u, image.iterations, image.residual, image.converged)
        } else {
            (u.clone(), 0, diagnostics.init_residual, init_converged)
        };
        let image_seconds = clock.elapsed().as_secs_f64();

        let r_main =
            mean_abs_diff(&u.stacked(), &new_u.stacked()) + mean_abs_diff(&stacked_flow(&v), &stacked_flow(&new_v));
        u = new_u;
        v = new_v;
        let energy = joint_energy(&u, &v, f, ops, cfg).map_err(wrap)?;
        diagnostics.outer.push(OuterRecord {
            iteration,
            energy,
            r_main,
            flow_iterations,
            flow_converged,
            image_iterations,
            image_residual,
            image_converged,
            timings: options.timings.then_some(StageTimings { flow_seconds, image_seconds }),
        });
        if r_main <= cfg.eps_main {
            diagnostics.converged = true;
            break;
        }
    }
    Ok(JointOutcome { u, v, diagnostics })
}
