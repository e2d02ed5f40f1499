//! TV-L¹ optical flow between two frames.
//!
//! Each warp linearizes the brightness constancy around the current flow
//! `ṽ`, giving the data term `|∇ũ·v + ũ_t|` with `ũ = u₂(x + ṽ)` and
//! `ũ_t = ũ − u₁ − ṽ·∇ũ`. The linearized problem
//!
//! ```text
//! min_v  Σ |∇ũ·v + ũ_t|  +  w (‖∇v₁‖₁,₂ + ‖∇v₂‖₁,₂)
//! ```
//!
//! is solved with a diagonally preconditioned primal-dual iteration and
//! stopped on the primal-dual residual. Warps run inside a coarse-to-fine
//! pyramid; the flow and the dual variables are carried between levels.

use serde::{Deserialize, Serialize};

use crate::config::SolveConfig;
use crate::error::{Error, Result};
use crate::image::{FlowField, Image};
use crate::interp::{gaussian_smooth, median_filter, pyramid_sizes, resample_bicubic, sample_strict};
use crate::operators::GradientField;
use crate::par;

/// Guard added to step-size denominators.
const STEP_GUARD: f64 = 1e-9;
const SIGMA_TV: f64 = 0.5;

/// The data term of one warp: `ũ`, `∇ũ` and `ũ_t` at every pixel.
#[derive(Debug, Clone)]
pub struct WarpLinearization {
    pub width: usize,
    pub height: usize,
    pub utilde: Vec<f64>,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    pub ut: Vec<f64>,
    /// False where the warped stencil leaves the grid; those pixels carry no data term.
    pub valid: Vec<bool>,
}

impl WarpLinearization {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `∇ũ·v + ũ_t` at pixel `p` (zero where invalid).
    #[inline]
    pub fn rho(&self, p: usize, v1: f64, v2: f64) -> f64 {
        if self.valid[p] {
            self.gx[p] * v1 + self.gy[p] * v2 + self.ut[p]
        } else {
            0.0
        }
    }
}

/// Central differences, one-sided at the borders.
fn central_derivatives(u: &Image) -> (Image, Image) {
    let (w, h) = u.dims();
    let dx = Image::from_fn(w, h, |i, j| {
        if w == 1 {
            0.0
        } else if i == 0 {
            u.get(1, j) - u.get(0, j)
        } else if i + 1 == w {
            u.get(i, j) - u.get(i - 1, j)
        } else {
            0.5 * (u.get(i + 1, j) - u.get(i - 1, j))
        }
    });
    let dy = Image::from_fn(w, h, |i, j| {
        if h == 1 {
            0.0
        } else if j == 0 {
            u.get(i, 1) - u.get(i, 0)
        } else if j + 1 == h {
            u.get(i, j) - u.get(i, j - 1)
        } else {
            0.5 * (u.get(i, j + 1) - u.get(i, j - 1))
        }
    });
    (dx, dy)
}

/// Warps `u2` and its derivatives by `vtilde` and forms the data term.
pub fn linearize(u1: &Image, u2: &Image, vtilde: &FlowField) -> Result<WarpLinearization> {
    u1.check_same_dims(u2, "linearize frames")?;
    if vtilde.dims() != u1.dims() {
        return Err(Error::dim("linearize: flow and frame sizes differ"));
    }
    let (w, h) = u1.dims();
    let n = w * h;
    let (du_x, du_y) = central_derivatives(u2);
    let mut lin = WarpLinearization {
        width: w,
        height: h,
        utilde: vec![0.0; n],
        gx: vec![0.0; n],
        gy: vec![0.0; n],
        ut: vec![0.0; n],
        valid: vec![false; n],
    };
    let (tv1, tv2) = (vtilde.v1.data(), vtilde.v2.data());
    for p in 0..n {
        let (x, y) = ((p % w) as f64 + tv1[p], (p / w) as f64 + tv2[p]);
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::param("linearize: non-finite flow"));
        }
        if let Some(ut) = sample_strict(u2, x, y) {
            let gx = sample_strict(&du_x, x, y).expect("same grid");
            let gy = sample_strict(&du_y, x, y).expect("same grid");
            lin.utilde[p] = ut;
            lin.gx[p] = gx;
            lin.gy[p] = gy;
            lin.ut[p] = ut - u1.data()[p] - tv1[p] * gx - tv2[p] * gy;
            lin.valid[p] = true;
        }
    }
    Ok(lin)
}

/// Dual variables of the flow problem plus the extrapolated primal.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDualState {
    /// TV dual of `v₁`.
    pub y1: GradientField,
    /// TV dual of `v₂`.
    pub y2: GradientField,
    /// Data-term dual.
    pub y3: Image,
    pub vbar: FlowField,
}

impl FlowDualState {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            y1: GradientField::zeros(width, height),
            y2: GradientField::zeros(width, height),
            y3: Image::zeros(width, height),
            vbar: FlowField::zeros(width, height),
        }
    }

    /// Largest per-pixel violation of the dual constraints
    /// (`‖y₁‖₂, ‖y₂‖₂ ≤ radius`, `|y₃| ≤ 1`).
    pub fn max_violation(&self, radius: f64) -> f64 {
        let n = self.y3.len();
        let mut worst = 0.0f64;
        for p in 0..n {
            let a = self.y1.gx.data()[p].hypot(self.y1.gy.data()[p]) - radius;
            let b = self.y2.gx.data()[p].hypot(self.y2.gy.data()[p]) - radius;
            let c = self.y3.data()[p].abs() - 1.0;
            worst = worst.max(a).max(b).max(c);
        }
        worst
    }
}

/// Diagonal step sizes for one linearization.
#[derive(Debug, Clone)]
pub struct FlowSteps {
    pub sigma3: Vec<f64>,
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
}

impl FlowSteps {
    pub fn new(lin: &WarpLinearization) -> Self {
        let n = lin.gx.len();
        let mut sigma3 = vec![0.0; n];
        let mut tau1 = vec![0.0; n];
        let mut tau2 = vec![0.0; n];
        for p in 0..n {
            let (ax, ay) = (lin.gx[p].abs(), lin.gy[p].abs());
            sigma3[p] = if lin.valid[p] { 1.0 / (ax + ay + STEP_GUARD) } else { 0.0 };
            tau1[p] = 1.0 / (4.0 + ax + STEP_GUARD);
            tau2[p] = 1.0 / (4.0 + ay + STEP_GUARD);
        }
        Self { sigma3, tau1, tau2 }
    }
}

/// Per-pixel duals: `[y1x, y1y, y2x, y2y, y3]`.
type Dual = [f64; 5];
/// Per-pixel primal: `[v1, v2, vbar1, vbar2]`.
type Primal = [f64; 4];

/// One primal-dual iterate, in the solver's packed layout.
#[derive(Debug, Clone)]
struct Iterate {
    primal: Vec<Primal>,
    dual: Vec<Dual>,
}

impl Iterate {
    fn pack(v: &FlowField, s: &FlowDualState) -> Self {
        let n = v.v1.len();
        let primal = (0..n)
            .map(|p| [v.v1.data()[p], v.v2.data()[p], s.vbar.v1.data()[p], s.vbar.v2.data()[p]])
            .collect();
        let dual = (0..n)
            .map(|p| {
                [
                    s.y1.gx.data()[p],
                    s.y1.gy.data()[p],
                    s.y2.gx.data()[p],
                    s.y2.gy.data()[p],
                    s.y3.data()[p],
                ]
            })
            .collect();
        Self { primal, dual }
    }

    fn unpack(&self, w: usize, h: usize) -> (FlowField, FlowDualState) {
        let pc = |k: usize| Image::from_raw(w, h, self.primal.iter().map(|x| x[k]).collect());
        let dc = |k: usize| Image::from_raw(w, h, self.dual.iter().map(|x| x[k]).collect());
        let flow = FlowField { v1: pc(0), v2: pc(1) };
        let state = FlowDualState {
            y1: GradientField { gx: dc(0), gy: dc(1) },
            y2: GradientField { gx: dc(2), gy: dc(3) },
            y3: dc(4),
            vbar: FlowField { v1: pc(2), v2: pc(3) },
        };
        (flow, state)
    }
}

#[inline]
fn project_ball(x: f64, y: f64, radius: f64) -> (f64, f64) {
    let n2 = x * x + y * y;
    if n2 > radius * radius {
        let s = radius / n2.sqrt();
        (x * s, y * s)
    } else {
        (x, y)
    }
}

/// Forward differences of primal component `k` at `p = j·w + i`.
#[inline]
fn grad_primal(x: &[Primal], k: usize, w: usize, h: usize, i: usize, j: usize, p: usize) -> (f64, f64) {
    let gx = if i + 1 < w { x[p + 1][k] - x[p][k] } else { 0.0 };
    let gy = if j + 1 < h { x[p + w][k] - x[p][k] } else { 0.0 };
    (gx, gy)
}

/// Divergence of the dual pair starting at component `k` at `p = j·w + i`.
#[inline]
fn div_dual(y: &[Dual], k: usize, w: usize, h: usize, i: usize, j: usize, p: usize) -> f64 {
    let mut d = 0.0;
    if w > 1 {
        d += if i == 0 {
            y[p][k]
        } else if i + 1 == w {
            -y[p - 1][k]
        } else {
            y[p][k] - y[p - 1][k]
        };
    }
    if h > 1 {
        d += if j == 0 {
            y[p][k + 1]
        } else if j + 1 == h {
            -y[p - w][k + 1]
        } else {
            y[p][k + 1] - y[p - w][k + 1]
        };
    }
    d
}

fn step(it: &mut Iterate, lin: &WarpLinearization, steps: &FlowSteps, weight: f64) {
    let (w, h) = (lin.width, lin.height);
    let primal = &it.primal;
    par::update_rows(&mut it.dual, w, |j, row| {
        for (i, d) in row.iter_mut().enumerate() {
            let p = j * w + i;
            let (a, b) = grad_primal(primal, 2, w, h, i, j, p);
            let (a, b) = project_ball(d[0] + SIGMA_TV * a, d[1] + SIGMA_TV * b, weight);
            d[0] = a;
            d[1] = b;
            let (a, b) = grad_primal(primal, 3, w, h, i, j, p);
            let (a, b) = project_ball(d[2] + SIGMA_TV * a, d[3] + SIGMA_TV * b, weight);
            d[2] = a;
            d[3] = b;
            d[4] = if lin.valid[p] {
                let r = lin.gx[p] * primal[p][2] + lin.gy[p] * primal[p][3] + lin.ut[p];
                (d[4] + steps.sigma3[p] * r).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    });
    let dual = &it.dual;
    par::update_rows(&mut it.primal, w, |j, row| {
        for (i, x) in row.iter_mut().enumerate() {
            let p = j * w + i;
            let y3 = dual[p][4];
            let v1 = x[0] - steps.tau1[p] * (-div_dual(dual, 0, w, h, i, j, p) + lin.gx[p] * y3);
            let v2 = x[1] - steps.tau2[p] * (-div_dual(dual, 2, w, h, i, j, p) + lin.gy[p] * y3);
            x[2] = 2.0 * v1 - x[0];
            x[3] = 2.0 * v2 - x[1];
            x[0] = v1;
            x[1] = v2;
        }
    });
}

fn residual(lin: &WarpLinearization, steps: &FlowSteps, prev: &Iterate, curr: &Iterate) -> f64 {
    let (w, h) = (lin.width, lin.height);
    let n = w * h;
    let (xo, xn, yo, yn) = (&prev.primal, &curr.primal, &prev.dual, &curr.dual);
    let dv = |p: usize, k: usize| xo[p][k] - xn[p][k];
    // Dual change new − old, packed so the divergence helper can read it.
    let dy: Vec<Dual> = (0..n)
        .map(|p| std::array::from_fn(|k| yn[p][k] - yo[p][k]))
        .collect();
    let grad_dv = |p: usize, k: usize| {
        let gx = if p % w + 1 < w { dv(p + 1, k) - dv(p, k) } else { 0.0 };
        let gy = if p / w + 1 < h { dv(p + w, k) - dv(p, k) } else { 0.0 };
        (gx, gy)
    };
    let p1 = par::sum(n, |p| {
        (dv(p, 0) / steps.tau1[p] + div_dual(&dy, 0, w, h, p % w, p / w, p) - lin.gx[p] * dy[p][4]).abs()
    });
    let p2 = par::sum(n, |p| {
        (dv(p, 1) / steps.tau2[p] + div_dual(&dy, 2, w, h, p % w, p / w, p) - lin.gy[p] * dy[p][4]).abs()
    });
    let d1 = par::sum(n, |p| {
        let (gx, gy) = grad_dv(p, 0);
        (-dy[p][0] / SIGMA_TV - gx).abs() + (-dy[p][1] / SIGMA_TV - gy).abs()
    });
    let d2 = par::sum(n, |p| {
        let (gx, gy) = grad_dv(p, 1);
        (-dy[p][2] / SIGMA_TV - gx).abs() + (-dy[p][3] / SIGMA_TV - gy).abs()
    });
    let d3 = par::sum(n, |p| {
        if lin.valid[p] && steps.sigma3[p] > 0.0 {
            (-dy[p][4] / steps.sigma3[p] - (lin.gx[p] * dv(p, 0) + lin.gy[p] * dv(p, 1))).abs()
        } else {
            0.0
        }
    });
    let nf = n as f64;
    let valid = lin.valid_count().max(1) as f64;
    p1 / nf + p2 / nf + d1 / (2.0 * nf) + d2 / (2.0 * nf) + d3 / valid
}

/// Normalized primal-dual residual between two consecutive flow iterates.
pub fn flow_residual(
    lin: &WarpLinearization,
    steps: &FlowSteps,
    prev: (&FlowField, &FlowDualState),
    curr: (&FlowField, &FlowDualState),
) -> f64 {
    residual(lin, steps, &Iterate::pack(prev.0, prev.1), &Iterate::pack(curr.0, curr.1))
}

/// Linearized flow energy `Σ|ρ| + w Σ(|∇v₁| + |∇v₂|)`.
pub fn flow_energy(lin: &WarpLinearization, v: &FlowField, weight: f64) -> f64 {
    let (w, h) = (lin.width, lin.height);
    let (v1, v2) = (v.v1.data(), v.v2.data());
    par::sum(w * h, |p| {
        let data = lin.rho(p, v1[p], v2[p]).abs();
        let tv1 = crate::operators::dx_at(v1, w, p).hypot(crate::operators::dy_at(v1, w, h, p));
        let tv2 = crate::operators::dx_at(v2, w, p).hypot(crate::operators::dy_at(v2, w, h, p));
        data + weight * (tv1 + tv2)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSolverParams {
    /// TV ball radius (`β/γ`).
    pub weight: f64,
    pub eps: f64,
    pub n_res: usize,
    pub max_iter: usize,
}

impl FlowSolverParams {
    pub fn from_config(cfg: &SolveConfig) -> Self {
        Self { weight: cfg.flow_weight(), eps: cfg.eps_v, n_res: cfg.n_res, max_iter: cfg.flow_iter_cap }
    }
}

/// Progress report emitted every residual check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct LevelOutcome {
    pub flow: FlowField,
    pub state: FlowDualState,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Runs the primal-dual iteration on one linearization, starting from `init`.
pub fn solve_flow_level(
    lin: &WarpLinearization,
    init: (&FlowField, &FlowDualState),
    params: &FlowSolverParams,
    mut log: Option<&mut dyn FnMut(&IterationRecord)>,
) -> Result<LevelOutcome> {
    if params.weight.is_nan() || params.weight <= 0.0 {
        return Err(Error::param(format!("flow weight must be positive, got {}", params.weight)));
    }
    let (w, h) = (lin.width, lin.height);
    if init.0.dims() != (w, h) || init.1.y3.dims() != (w, h) {
        return Err(Error::dim("flow initialization does not match the linearization"));
    }
    let steps = FlowSteps::new(lin);
    let mut it = Iterate::pack(init.0, init.1);
    let n_res = params.n_res.max(1);
    let mut residual_value = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        let check = (iterations + 1) % n_res == 0;
        let prev = check.then(|| it.clone());
        step(&mut it, lin, &steps, params.weight);
        iterations += 1;
        if let Some(prev) = prev {
            residual_value = residual(lin, &steps, &prev, &it);
            if !residual_value.is_finite() {
                return Err(Error::NonFinite { what: "flow iterate", iteration: iterations });
            }
            if let Some(log) = log.as_deref_mut() {
                let (v, _) = it.unpack(w, h);
                log(&IterationRecord { iteration: iterations, residual: residual_value, energy: flow_energy(lin, &v, params.weight) });
            }
            if residual_value <= params.eps {
                converged = true;
                break;
            }
        }
    }
    let (flow, state) = it.unpack(w, h);
    if flow.v1.data().iter().chain(flow.v2.data()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "flow iterate", iteration: iterations });
    }
    Ok(LevelOutcome { flow, state, iterations, residual: residual_value, converged })
}

/// Statistics for one warp of one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpStats {
    pub level: usize,
    pub width: usize,
    pub height: usize,
    pub warp: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub flow: FlowField,
    pub warps: Vec<WarpStats>,
}

impl FlowOutcome {
    pub fn total_iterations(&self) -> usize {
        self.warps.iter().map(|w| w.iterations).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.warps.iter().all(|w| w.converged)
    }
}

/// Builds the smoothed, downsampled pyramid of `u`, finest first.
pub fn image_pyramid(u: &Image, sizes: &[(usize, usize)], sigma: f64) -> Vec<Image> {
    let mut levels = vec![u.clone()];
    for &(w, h) in &sizes[1..] {
        let prev = levels.last().unwrap();
        levels.push(resample_bicubic(&gaussian_smooth(prev, sigma), w, h));
    }
    levels
}

fn upscale_flow(v: &FlowField, w: usize, h: usize) -> FlowField {
    let (cw, ch) = v.dims();
    let rx = if cw > 1 { (w - 1) as f64 / (cw - 1) as f64 } else { 1.0 };
    let ry = if ch > 1 { (h - 1) as f64 / (ch - 1) as f64 } else { 1.0 };
    FlowField {
        v1: resample_bicubic(&v.v1, w, h).map(|x| x * rx),
        v2: resample_bicubic(&v.v2, w, h).map(|x| x * ry),
    }
}

fn upscale_duals(s: &FlowDualState, v: &FlowField, radius: f64) -> FlowDualState {
    let (w, h) = v.dims();
    let up = |im: &Image| resample_bicubic(im, w, h);
    let mut out = FlowDualState {
        y1: GradientField { gx: up(&s.y1.gx), gy: up(&s.y1.gy) },
        y2: GradientField { gx: up(&s.y2.gx), gy: up(&s.y2.gy) },
        y3: up(&s.y3).map(|x| x.clamp(-1.0, 1.0)),
        vbar: v.clone(),
    };
    // Interpolation can overshoot the constraint sets.
    for y in [&mut out.y1, &mut out.y2] {
        for p in 0..w * h {
            let (a, b) = project_ball(y.gx.data()[p], y.gy.data()[p], radius);
            y.gx.data_mut()[p] = a;
            y.gy.data_mut()[p] = b;
        }
    }
    out
}

/// Coarse-to-fine flow from `u1` to `u2` (so that `u2(x + v) ≈ u1(x)`).
///
/// In time-continuous mode the pyramid and the warps are skipped: one solve
/// at full resolution around `ṽ = 0`.
pub fn solve_flow_pyramid(u1: &Image, u2: &Image, cfg: &SolveConfig) -> Result<FlowOutcome> {
    solve_flow_pyramid_logged(u1, u2, cfg, None)
}

pub fn solve_flow_pyramid_logged(
    u1: &Image,
    u2: &Image,
    cfg: &SolveConfig,
    mut log: Option<&mut dyn FnMut(usize, usize, &IterationRecord)>,
) -> Result<FlowOutcome> {
    u1.check_same_dims(u2, "flow frames")?;
    cfg.validate()?;
    let (w, h) = u1.dims();
    let (sizes, n_warps) = if cfg.time_continuous {
        (vec![(w, h)], 1)
    } else {
        (pyramid_sizes(w, h, cfg.eta, cfg.min_scale_dim), cfg.n_warps)
    };
    let sigma = cfg.pyramid_sigma();
    let pyr1 = image_pyramid(u1, &sizes, sigma);
    let pyr2 = image_pyramid(u2, &sizes, sigma);
    let params = FlowSolverParams::from_config(cfg);

    let (cw, ch) = *sizes.last().unwrap();
    let mut v = FlowField::zeros(cw, ch);
    let mut state = FlowDualState::zeros(cw, ch);
    let mut warps = Vec::new();
    for level in (0..sizes.len()).rev() {
        let (lw, lh) = sizes[level];
        if v.dims() != (lw, lh) {
            v = upscale_flow(&v, lw, lh);
            state = upscale_duals(&state, &v, params.weight);
        }
        for warp in 0..n_warps {
            let vtilde = v.clone();
            let lin = linearize(&pyr1[level], &pyr2[level], &vtilde)?;
            state.vbar = v.clone();
            let mut level_log = log.as_deref_mut().map(|f| {
                move |r: &IterationRecord| f(level, warp, r)
            });
            let out = solve_flow_level(
                &lin,
                (&v, &state),
                &params,
                level_log.as_mut().map(|f| f as &mut dyn FnMut(&IterationRecord)),
            )?;
            warps.push(WarpStats {
                level,
                width: lw,
                height: lh,
                warp,
                iterations: out.iterations,
                residual: out.residual,
                converged: out.converged,
            });
            v = FlowField {
                v1: median_filter(&out.flow.v1, cfg.size_med)?,
                v2: median_filter(&out.flow.v2, cfg.size_med)?,
            };
            state = out.state;
        }
    }
    Ok(FlowOutcome { flow: v, warps })
}
