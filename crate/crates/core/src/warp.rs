//! Sparse warping matrices and the temporal coupling operators built from them.

use crate::error::{Error, Result};
use crate::image::{FlowField, FlowSequence};
use crate::interp::{cubic_weights, Stencil};
use crate::sparse::{SparseOperator, TripletBuilder};

/// Weights smaller than this are not stored.
pub const WEIGHT_EPS: f64 = 1e-14;

/// `W` with `(W u)(i, j) ≈ u(i + v1(i, j), j + v2(i, j))`.
///
/// Rows whose bicubic stencil leaves the grid are zero.
#[derive(Debug, Clone)]
pub struct WarpMatrix {
    pub op: SparseOperator,
    /// `valid[p]` is false for zeroed rows.
    pub valid: Vec<bool>,
}

pub fn build_warp_matrix(flow: &FlowField, dims: (usize, usize)) -> Result<WarpMatrix> {
    if flow.dims() != dims {
        return Err(Error::dim(format!(
            "flow is {}x{}, frames are {}x{}",
            flow.dims().0,
            flow.dims().1,
            dims.0,
            dims.1
        )));
    }
    let (w, h) = dims;
    let n = w * h;
    let mut b = TripletBuilder::with_capacity(n, n, 16 * n);
    let mut valid = vec![false; n];
    let (v1, v2) = (flow.v1.data(), flow.v2.data());
    for p in 0..n {
        let (i, j) = (p % w, p / w);
        let (x, y) = (i as f64 + v1[p], j as f64 + v2[p]);
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::param(format!("non-finite flow at pixel ({i}, {j})")));
        }
        if x.abs() > 1e12 || y.abs() > 1e12 {
            continue;
        }
        let s = Stencil::at(x, y);
        if !s.inside(w, h) {
            continue;
        }
        valid[p] = true;
        let wx = cubic_weights(s.fx);
        let wy = cubic_weights(s.fy);
        for (a, &wa) in wx.iter().enumerate() {
            for (c, &wc) in wy.iter().enumerate() {
                let weight = wa * wc;
                if weight.abs() >= WEIGHT_EPS {
                    let col = (s.j0 as usize + c) * w + s.i0 as usize + a;
                    b.push(p, col, weight);
                }
            }
        }
    }
    Ok(WarpMatrix { op: b.build(), valid })
}

/// `(n−1)N × nN` block-bidiagonal operator with block row `i` equal to
/// `[−I, W]` at frames `i, i+1`, where `W` warps frame `i+1` by flow `i`.
/// The `−I` entry is dropped on rows where `W` is zero.
pub fn build_block_warp(flows: &FlowSequence, dims: (usize, usize)) -> Result<SparseOperator> {
    let n = dims.0 * dims.1;
    let frames = flows.len() + 1;
    let mut b = TripletBuilder::with_capacity(flows.len() * n, frames * n, 17 * flows.len() * n);
    for (k, flow) in flows.fields().iter().enumerate() {
        let wm = build_warp_matrix(flow, dims)?;
        let row0 = k * n;
        for p in 0..n {
            if !wm.valid[p] {
                continue;
            }
            b.push(row0 + p, k * n + p, -1.0);
            for (c, v) in wm.op.row(p) {
                b.push(row0 + p, (k + 1) * n + c, v);
            }
        }
    }
    Ok(b.build())
}

/// `N × 2N` operator `[−I, diag(v1)∂x + diag(v2)∂y + I]` on stacked frames,
/// with the forward-difference stencils of the image gradient.
pub fn build_time_continuous_k(flow: &FlowField, dims: (usize, usize)) -> Result<SparseOperator> {
    let seq = FlowSequence::new(vec![flow.clone()])?;
    build_block_time_continuous(&seq, dims)
}

/// Block-bidiagonal assembly of the per-pair time-continuous operators.
pub fn build_block_time_continuous(flows: &FlowSequence, dims: (usize, usize)) -> Result<SparseOperator> {
    let (w, h) = dims;
    let n = w * h;
    let frames = flows.len() + 1;
    let mut b = TripletBuilder::with_capacity(flows.len() * n, frames * n, 4 * flows.len() * n);
    for (k, flow) in flows.fields().iter().enumerate() {
        if flow.dims() != dims {
            return Err(Error::dim("flow and frame sizes differ"));
        }
        if flow.v1.data().iter().chain(flow.v2.data()).any(|v| !v.is_finite()) {
            return Err(Error::param("non-finite flow"));
        }
        let (v1, v2) = (flow.v1.data(), flow.v2.data());
        let (row0, prev, next) = (k * n, k * n, (k + 1) * n);
        for p in 0..n {
            let (i, j) = (p % w, p / w);
            b.push(row0 + p, prev + p, -1.0);
            let mut diag = 1.0;
            if i + 1 < w {
                b.push(row0 + p, next + p + 1, v1[p]);
                diag -= v1[p];
            }
            if j + 1 < h {
                b.push(row0 + p, next + p + w, v2[p]);
                diag -= v2[p];
            }
            b.push(row0 + p, next + p, diag);
        }
    }
    Ok(b.build())
}

/// The coupling operator used by the image subproblem.
pub fn coupling_operator(flows: &FlowSequence, dims: (usize, usize), time_continuous: bool) -> Result<SparseOperator> {
    if time_continuous {
        build_block_time_continuous(flows, dims)
    } else {
        build_block_warp(flows, dims)
    }
}
