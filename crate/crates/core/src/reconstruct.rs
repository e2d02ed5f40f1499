//! Space-time image reconstruction for fixed flows.
//!
//! Minimizes `½‖𝒜u − f‖² + α‖∇̄u‖₁,₂ + γ‖𝒲u‖₁` over the stacked sequence `u`
//! with a diagonally preconditioned primal-dual iteration. `𝒜` and `∇̄` act
//! frame-wise; `𝒲` couples consecutive frames through the warping matrices.
//! With `γ = 0` the frames decouple into independent ROF problems.

use serde::{Deserialize, Serialize};

use crate::config::SolveConfig;
use crate::error::{Error, Result};
use crate::image::{FlowSequence, Image, ImageSequence};
use crate::operators::ForwardOperator;
use crate::par;
use crate::sparse::{SparseOperator, TripletBuilder};
use crate::warp::coupling_operator;

const SIGMA_TV: f64 = 0.5;

/// The frame-wise forward operators `A¹…Aⁿ` and their block-diagonal assembly.
#[derive(Debug, Clone)]
pub struct ImageOperators {
    forward: Vec<ForwardOperator>,
    block: SparseOperator,
    block_t: SparseOperator,
    width: usize,
    height: usize,
}

impl ImageOperators {
    pub fn new(forward: Vec<ForwardOperator>) -> Result<Self> {
        let first = forward.first().ok_or_else(|| Error::dim("no forward operators"))?;
        let (width, height) = first.input_dims();
        if forward.iter().any(|a| a.input_dims() != (width, height)) {
            return Err(Error::dim("forward operators act on different frame sizes"));
        }
        let mats: Vec<SparseOperator> = forward.iter().map(|a| a.matrix().clone()).collect();
        let block = SparseOperator::block_diag(&mats);
        let block_t = block.transpose();
        Ok(Self { forward, block, block_t, width, height })
    }

    /// The same operator on every frame.
    pub fn replicate(op: ForwardOperator, frames: usize) -> Result<Self> {
        Self::new(vec![op; frames])
    }

    pub fn identity(width: usize, height: usize, frames: usize) -> Self {
        Self::replicate(ForwardOperator::identity(width, height), frames).expect("consistent")
    }

    pub fn frames(&self) -> usize {
        self.forward.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn forward(&self) -> &[ForwardOperator] {
        &self.forward
    }

    pub fn block(&self) -> &SparseOperator {
        &self.block
    }

    /// Stacked data vector for the observed frames.
    pub fn data(&self, f: &[Image]) -> Result<Vec<f64>> {
        if f.len() != self.forward.len() {
            return Err(Error::dim(format!("{} frames for {} operators", f.len(), self.forward.len())));
        }
        let mut out = Vec::with_capacity(self.block.rows());
        for (a, frame) in self.forward.iter().zip(f) {
            out.extend(a.data(frame)?);
        }
        Ok(out)
    }
}

/// Penalty applied to the coupling operator's output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingPenalty {
    /// `γ‖Cu‖₁`.
    L1 { gamma: f64 },
    /// `(ε/2)‖Cu‖²`.
    Quadratic { epsilon: f64 },
}

#[derive(Debug, Clone)]
pub struct Coupling {
    pub op: SparseOperator,
    pub penalty: CouplingPenalty,
}

/// Forward temporal difference `uⁱ⁺¹ − uⁱ` on stacked frames.
pub fn temporal_difference(frames: usize, pixels: usize) -> SparseOperator {
    let rows = frames.saturating_sub(1) * pixels;
    let mut b = TripletBuilder::with_capacity(rows, frames * pixels, 2 * rows);
    for r in 0..rows {
        b.push(r, r, -1.0);
        b.push(r, r + pixels, 1.0);
    }
    b.build()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSolverParams {
    pub alpha: f64,
    pub eps: f64,
    pub n_res: usize,
    pub max_iter: usize,
}

impl ImageSolverParams {
    pub fn from_config(cfg: &SolveConfig) -> Self {
        Self { alpha: cfg.alpha, eps: cfg.eps_u, n_res: cfg.n_res, max_iter: cfg.image_iter_cap }
    }
}

/// Primal and dual iterates of the image problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageState {
    /// Stacked frames.
    pub u: Vec<f64>,
    pub ubar: Vec<f64>,
    /// Data-term dual, one entry per row of `𝒜`.
    pub y1: Vec<f64>,
    /// TV dual, one pair per pixel of the stack.
    pub y2: Vec<[f64; 2]>,
    /// Coupling dual, one entry per row of the coupling operator.
    pub y3: Vec<f64>,
}

/// A fully assembled image problem with its step sizes.
pub struct ImageProblem<'a> {
    ops: &'a ImageOperators,
    f: Vec<f64>,
    alpha: f64,
    coupling: Option<(SparseOperator, SparseOperator, CouplingPenalty)>,
    sigma1: Vec<f64>,
    sigma3: Vec<f64>,
    tau: Vec<f64>,
    frames: usize,
}

fn inverse_or_zero(s: f64) -> f64 {
    if s > 0.0 {
        1.0 / s
    } else {
        0.0
    }
}

impl<'a> ImageProblem<'a> {
    pub fn new(ops: &'a ImageOperators, f: &[Image], alpha: f64, coupling: Option<Coupling>) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be non-negative, got {alpha}")));
        }
        let data = ops.data(f)?;
        let frames = ops.frames();
        let (w, h) = ops.dims();
        let total = frames * w * h;
        let coupling = match coupling {
            Some(c) => {
                if c.op.cols() != total {
                    return Err(Error::dim(format!("coupling operator has {} columns, expected {total}", c.op.cols())));
                }
                match c.penalty {
                    CouplingPenalty::L1 { gamma: 0.0 } => None,
                    CouplingPenalty::L1 { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                        return Err(Error::param(format!("gamma must be non-negative, got {gamma}")))
                    }
                    CouplingPenalty::Quadratic { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")))
                    }
                    penalty => {
                        let t = c.op.transpose();
                        Some((c.op, t, penalty))
                    }
                }
            }
            None => None,
        };
        let sigma1 = ops.block.row_abs_sums().into_iter().map(inverse_or_zero).collect();
        let a_cols = ops.block.col_abs_sums();
        let (sigma3, c_cols) = match &coupling {
            Some((c, _, _)) => (c.row_abs_sums().into_iter().map(inverse_or_zero).collect(), c.col_abs_sums()),
            None => (Vec::new(), vec![0.0; total]),
        };
        let tau = (0..total).map(|q| 1.0 / (a_cols[q] + 4.0 + c_cols[q])).collect();
        Ok(Self { ops, f: data, alpha, coupling, sigma1, sigma3, tau, frames })
    }

    fn pixels(&self) -> usize {
        self.ops.width * self.ops.height
    }

    pub fn zero_state(&self) -> ImageState {
        let total = self.frames * self.pixels();
        ImageState {
            u: vec![0.0; total],
            ubar: vec![0.0; total],
            y1: vec![0.0; self.f.len()],
            y2: vec![[0.0; 2]; total],
            y3: vec![0.0; self.coupling.as_ref().map_or(0, |c| c.0.rows())],
        }
    }

    pub fn state_from(&self, u: &ImageSequence) -> Result<ImageState> {
        if u.len() != self.frames || u.dims() != self.ops.dims() {
            return Err(Error::dim("warm start does not match the problem"));
        }
        let mut s = self.zero_state();
        s.u = u.stacked();
        s.ubar = s.u.clone();
        Ok(s)
    }

    /// Frame-local `(i, j)` of stacked index `q`.
    #[inline]
    fn coords(&self, q: usize) -> (usize, usize) {
        let w = self.ops.width;
        (q % w, (q / w) % self.ops.height)
    }

    #[inline]
    fn grad_at(&self, x: &[f64], i: usize, j: usize, q: usize) -> (f64, f64) {
        let (w, h) = (self.ops.width, self.ops.height);
        let gx = if i + 1 < w { x[q + 1] - x[q] } else { 0.0 };
        let gy = if j + 1 < h { x[q + w] - x[q] } else { 0.0 };
        (gx, gy)
    }

    #[inline]
    fn div_at(&self, y: &[[f64; 2]], i: usize, j: usize, q: usize) -> f64 {
        let (w, h) = (self.ops.width, self.ops.height);
        let mut d = 0.0;
        if w > 1 {
            d += if i == 0 {
                y[q][0]
            } else if i + 1 == w {
                -y[q - 1][0]
            } else {
                y[q][0] - y[q - 1][0]
            };
        }
        if h > 1 {
            d += if j == 0 {
                y[q][1]
            } else if j + 1 == h {
                -y[q - w][1]
            } else {
                y[q][1] - y[q - w][1]
            };
        }
        d
    }

    /// One primal-dual iteration.
    pub fn step(&self, s: &mut ImageState) {
        let a_ubar = self.ops.block.apply(&s.ubar);
        par::update(&mut s.y1, |r, y| {
            let sg = self.sigma1[r];
            *y = (*y + sg * (a_ubar[r] - self.f[r])) / (1.0 + sg);
        });
        let ubar = &s.ubar;
        let alpha = self.alpha;
        let (w, h) = self.ops.dims();
        par::update_rows(&mut s.y2, w, |r, row| {
            let j = r % h;
            for (i, y) in row.iter_mut().enumerate() {
                let (gx, gy) = self.grad_at(ubar, i, j, r * w + i);
                let (a, b) = (y[0] + SIGMA_TV * gx, y[1] + SIGMA_TV * gy);
                let n2 = a * a + b * b;
                *y = if n2 <= alpha * alpha {
                    [a, b]
                } else {
                    let s = alpha / n2.sqrt();
                    [a * s, b * s]
                };
            }
        });
        let ct_y3 = if let Some((c, ct, penalty)) = &self.coupling {
            let c_ubar = c.apply(&s.ubar);
            match *penalty {
                CouplingPenalty::L1 { gamma } => par::update(&mut s.y3, |r, y| {
                    *y = (*y + self.sigma3[r] * c_ubar[r]).clamp(-gamma, gamma);
                }),
                CouplingPenalty::Quadratic { epsilon } => par::update(&mut s.y3, |r, y| {
                    let sg = self.sigma3[r];
                    *y = (*y + sg * c_ubar[r]) / (1.0 + sg / epsilon);
                }),
            }
            Some(ct.apply(&s.y3))
        } else {
            None
        };
        let at_y1 = self.ops.block_t.apply(&s.y1);
        let y2 = &s.y2;
        par::update2_rows(&mut s.u, &mut s.ubar, w, |r, us, ubs| {
            let j = r % h;
            for (i, (u, ub)) in us.iter_mut().zip(ubs.iter_mut()).enumerate() {
                let q = r * w + i;
                let mut g = at_y1[q] - self.div_at(y2, i, j, q);
                if let Some(ct) = &ct_y3 {
                    g += ct[q];
                }
                let next = *u - self.tau[q] * g;
                *ub = 2.0 * next - *u;
                *u = next;
            }
        });
    }

    /// Normalized primal-dual residual between consecutive iterates.
    pub fn residual(&self, prev: &ImageState, curr: &ImageState) -> f64 {
        let total = curr.u.len();
        let du: Vec<f64> = prev.u.iter().zip(&curr.u).map(|(o, n)| o - n).collect();
        let dy1: Vec<f64> = curr.y1.iter().zip(&prev.y1).map(|(n, o)| n - o).collect();
        let dy2: Vec<[f64; 2]> = curr.y2.iter().zip(&prev.y2).map(|(n, o)| [n[0] - o[0], n[1] - o[1]]).collect();
        let dy3: Vec<f64> = curr.y3.iter().zip(&prev.y3).map(|(n, o)| n - o).collect();
        let at_dy1 = self.ops.block_t.apply(&dy1);
        let a_du = self.ops.block.apply(&du);
        let (ct_dy3, c_du) = match &self.coupling {
            Some((c, ct, _)) => (Some(ct.apply(&dy3)), Some(c.apply(&du))),
            None => (None, None),
        };
        let p = par::sum(total, |q| {
            let (i, j) = self.coords(q);
            let mut r = du[q] / self.tau[q] - at_dy1[q] + self.div_at(&dy2, i, j, q);
            if let Some(ct) = &ct_dy3 {
                r -= ct[q];
            }
            r.abs()
        });
        let m = self.f.len();
        let active1 = self.sigma1.iter().filter(|&&s| s > 0.0).count().max(1);
        let d1 = par::sum(m, |r| {
            if self.sigma1[r] > 0.0 {
                (-dy1[r] / self.sigma1[r] - a_du[r]).abs()
            } else {
                0.0
            }
        });
        let d2 = par::sum(total, |q| {
            let (i, j) = self.coords(q);
            let (gx, gy) = self.grad_at(&du, i, j, q);
            (-dy2[q][0] / SIGMA_TV - gx).abs() + (-dy2[q][1] / SIGMA_TV - gy).abs()
        });
        let mut r = p / total as f64 + d1 / active1 as f64 + d2 / (2 * total) as f64;
        if let Some(c_du) = &c_du {
            let active3 = self.sigma3.iter().filter(|&&s| s > 0.0).count().max(1);
            let d3 = par::sum(c_du.len(), |row| {
                if self.sigma3[row] > 0.0 {
                    (-dy3[row] / self.sigma3[row] - c_du[row]).abs()
                } else {
                    0.0
                }
            });
            r += d3 / active3 as f64;
        }
        r
    }

    /// Objective value at stacked frames `u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let au = self.ops.block.apply(u);
        let data = 0.5 * par::sum(au.len(), |r| (au[r] - self.f[r]).powi(2));
        let tv = par::sum(u.len(), |q| {
            let (i, j) = self.coords(q);
            let (gx, gy) = self.grad_at(u, i, j, q);
            (gx * gx + gy * gy).sqrt()
        });
        let coupling = match &self.coupling {
            Some((c, _, CouplingPenalty::L1 { gamma })) => {
                let cu = c.apply(u);
                gamma * par::sum(cu.len(), |r| cu[r].abs())
            }
            Some((c, _, CouplingPenalty::Quadratic { epsilon })) => {
                let cu = c.apply(u);
                0.5 * epsilon * par::sum(cu.len(), |r| cu[r] * cu[r])
            }
            None => 0.0,
        };
        data + self.alpha * tv + coupling
    }

    /// Largest violation of `‖y₂‖₂ ≤ α` and, for the L¹ coupling, `|y₃| ≤ γ`.
    pub fn dual_violation(&self, s: &ImageState) -> f64 {
        let mut worst = s.y2.iter().fold(0.0f64, |m, y| m.max((y[0] * y[0] + y[1] * y[1]).sqrt() - self.alpha));
        if let Some((_, _, CouplingPenalty::L1 { gamma })) = &self.coupling {
            worst = s.y3.iter().fold(worst, |m, y| m.max(y.abs() - gamma));
        }
        worst
    }

    pub fn solve(
        &self,
        mut state: ImageState,
        params: &ImageSolverParams,
        mut log: Option<&mut dyn FnMut(&crate::flow::IterationRecord)>,
    ) -> Result<ImageOutcome> {
        let n_res = params.n_res.max(1);
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < params.max_iter {
            let check = (iterations + 1) % n_res == 0;
            let prev = check.then(|| state.clone());
            self.step(&mut state);
            iterations += 1;
            if let Some(prev) = prev {
                residual = self.residual(&prev, &state);
                if !residual.is_finite() {
                    return Err(Error::NonFinite { what: "image iterate", iteration: iterations });
                }
                if let Some(log) = log.as_deref_mut() {
                    log(&crate::flow::IterationRecord { iteration: iterations, residual, energy: self.energy(&state.u) });
                }
                if residual <= params.eps {
                    converged = true;
                    break;
                }
            }
        }
        if state.u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "image iterate", iteration: iterations });
        }
        let (w, h) = self.ops.dims();
        Ok(ImageOutcome {
            u: ImageSequence::from_stacked(w, h, &state.u),
            state,
            iterations,
            residual,
            converged,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub u: ImageSequence,
    pub state: ImageState,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Normalized primal-dual residual of the image problem.
pub fn image_residual(problem: &ImageProblem<'_>, prev: &ImageState, curr: &ImageState) -> f64 {
    problem.residual(prev, curr)
}

/// Solves the image subproblem for fixed flows.
///
/// `time_continuous` swaps the warping operator for the linearized
/// `[−I, diag(v₁)∂x + diag(v₂)∂y + I]` blocks. `init` warm-starts `u`.
pub fn solve_images(
    f: &ImageSequence,
    flows: &FlowSequence,
    ops: &ImageOperators,
    gamma: f64,
    time_continuous: bool,
    params: &ImageSolverParams,
    init: Option<&ImageSequence>,
) -> Result<ImageOutcome> {
    if flows.len() + 1 != f.len() {
        return Err(Error::dim(format!("{} flow fields for {} frames", flows.len(), f.len())));
    }
    if flows.fields().iter().any(|fl| fl.dims() != ops.dims()) {
        return Err(Error::dim("flow and frame sizes differ"));
    }
    let coupling = if gamma > 0.0 {
        Some(Coupling {
            op: coupling_operator(flows, ops.dims(), time_continuous)?,
            penalty: CouplingPenalty::L1 { gamma },
        })
    } else if gamma == 0.0 {
        None
    } else {
        return Err(Error::param(format!("gamma must be non-negative, got {gamma}")));
    };
    let problem = ImageProblem::new(ops, f.frames(), params.alpha, coupling)?;
    let state = match init {
        Some(u) => problem.state_from(u)?,
        None => problem.zero_state(),
    };
    problem.solve(state, params, None)
}

/// Frame-wise ROF initialization (coupling weight zero).
pub fn init_rof(f: &ImageSequence, ops: &ImageOperators, params: &ImageSolverParams) -> Result<ImageOutcome> {
    let problem = ImageProblem::new(ops, f.frames(), params.alpha, None)?;
    problem.solve(problem.zero_state(), params, None)
}

/// ROF plus `(ε/2)‖uⁱ⁺¹ − uⁱ‖²` on the forward temporal differences.
pub fn init_smooth_time(
    f: &ImageSequence,
    ops: &ImageOperators,
    params: &ImageSolverParams,
    epsilon: f64,
) -> Result<ImageOutcome> {
    let (w, h) = ops.dims();
    let coupling = Coupling {
        op: temporal_difference(ops.frames(), w * h),
        penalty: CouplingPenalty::Quadratic { epsilon },
    };
    let problem = ImageProblem::new(ops, f.frames(), params.alpha, Some(coupling))?;
    problem.solve(problem.zero_state(), params, None)
}

/// ROF reconstruction of a single frame.
pub fn rof_frame(f: &Image, op: &ForwardOperator, params: &ImageSolverParams) -> Result<Image> {
    let ops = ImageOperators::new(vec![op.clone()])?;
    let problem = ImageProblem::new(&ops, std::slice::from_ref(f), params.alpha, None)?;
    let out = problem.solve(problem.zero_state(), params, None)?;
    let (w, h) = ops.dims();
    Ok(Image::from_raw(w, h, out.state.u))
}
