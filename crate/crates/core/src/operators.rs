//! Finite-difference gradient and divergence, and the forward operators that
//! map an image to its observation.
//!
//! The gradient uses forward differences with a zero last row/column. The
//! divergence is the negative adjoint of that gradient: backward differences,
//! the value itself on the first index and its negation on the last.

use crate::config::{OperatorKind, SolveConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::interp::gaussian_kernel;
use crate::par;
use crate::sparse::{SparseOperator, TripletBuilder};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gx: Image,
    pub gy: Image,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { gx: Image::zeros(width, height), gy: Image::zeros(width, height) }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.gx.dims()
    }
}

/// Forward difference in `i` at pixel index `p`.
#[inline]
pub(crate) fn dx_at(u: &[f64], w: usize, p: usize) -> f64 {
    if p % w + 1 < w {
        u[p + 1] - u[p]
    } else {
        0.0
    }
}

/// Forward difference in `j` at pixel index `p`.
#[inline]
pub(crate) fn dy_at(u: &[f64], w: usize, h: usize, p: usize) -> f64 {
    if p / w + 1 < h {
        u[p + w] - u[p]
    } else {
        0.0
    }
}

/// Divergence of `(y1, y2)` at pixel index `p`.
#[inline]
pub(crate) fn div_at(y1: &[f64], y2: &[f64], w: usize, h: usize, p: usize) -> f64 {
    let i = p % w;
    let j = p / w;
    let mut d = 0.0;
    if w > 1 {
        d += if i == 0 {
            y1[p]
        } else if i + 1 == w {
            -y1[p - 1]
        } else {
            y1[p] - y1[p - 1]
        };
    }
    if h > 1 {
        d += if j == 0 {
            y2[p]
        } else if j + 1 == h {
            -y2[p - w]
        } else {
            y2[p] - y2[p - w]
        };
    }
    d
}

pub fn gradient(u: &Image) -> GradientField {
    let (w, h) = u.dims();
    let d = u.data();
    let mut gx = vec![0.0; d.len()];
    let mut gy = vec![0.0; d.len()];
    par::update2(&mut gx, &mut gy, |p, x, y| {
        *x = dx_at(d, w, p);
        *y = dy_at(d, w, h, p);
    });
    GradientField { gx: Image::from_raw(w, h, gx), gy: Image::from_raw(w, h, gy) }
}

pub fn divergence(y: &GradientField) -> Image {
    let (w, h) = y.dims();
    let (y1, y2) = (y.gx.data(), y.gy.data());
    let mut out = vec![0.0; w * h];
    par::update(&mut out, |p, o| *o = div_at(y1, y2, w, h, p));
    Image::from_raw(w, h, out)
}

/// `2N × N` matrix stacking the `i`-difference rows above the `j`-difference rows.
pub fn gradient_matrix(width: usize, height: usize) -> SparseOperator {
    let n = width * height;
    let mut b = TripletBuilder::with_capacity(2 * n, n, 4 * n);
    for j in 0..height {
        for i in 0..width {
            let p = j * width + i;
            if i + 1 < width {
                b.push(p, p, -1.0);
                b.push(p, p + 1, 1.0);
            }
            if j + 1 < height {
                b.push(n + p, p, -1.0);
                b.push(n + p, p + width, 1.0);
            }
        }
    }
    b.build()
}

/// Per-row sum of absolute entries, the diagonal preconditioner input.
pub fn row_abs_sums(k: &SparseOperator) -> Vec<f64> {
    k.row_abs_sums()
}

/// A linear observation model `A` for one frame.
#[derive(Debug, Clone)]
pub struct ForwardOperator {
    kind: OperatorKind,
    width: usize,
    height: usize,
    out_dims: (usize, usize),
    op: SparseOperator,
    /// Observed pixel indices, for the mask operator.
    selection: Vec<usize>,
}

impl ForwardOperator {
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            kind: OperatorKind::Identity,
            width,
            height,
            out_dims: (width, height),
            op: SparseOperator::identity(width * height),
            selection: Vec::new(),
        }
    }

    /// Keeps only the pixels where `mask` is true; unobserved pixels get no row.
    pub fn mask(width: usize, height: usize, mask: &[bool]) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::dim(format!("mask has {} entries for {width}x{height}", mask.len())));
        }
        let selection: Vec<usize> = (0..mask.len()).filter(|&p| mask[p]).collect();
        let mut b = TripletBuilder::with_capacity(selection.len(), mask.len(), selection.len());
        for (r, &p) in selection.iter().enumerate() {
            b.push(r, p, 1.0);
        }
        Ok(Self {
            kind: OperatorKind::Mask,
            width,
            height,
            out_dims: (selection.len(), 1),
            op: b.build(),
            selection,
        })
    }

    /// Gaussian convolution with replicate padding.
    pub fn blur(width: usize, height: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("blur sigma must be positive, got {sigma}")));
        }
        let op = blur_matrix(width, height, sigma, &(0..height).collect::<Vec<_>>(), &(0..width).collect::<Vec<_>>());
        Ok(Self {
            kind: OperatorKind::Blur,
            width,
            height,
            out_dims: (width, height),
            op,
            selection: Vec::new(),
        })
    }

    /// Gaussian presmoothing with std-dev `factor / 2`, then keeping every
    /// `factor`-th pixel in each direction.
    pub fn subsample(width: usize, height: usize, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::param("subsample factor must be at least 1"));
        }
        let xs: Vec<usize> = (0..width).step_by(factor).collect();
        let ys: Vec<usize> = (0..height).step_by(factor).collect();
        let sigma = if factor == 1 { 0.0 } else { factor as f64 / 2.0 };
        let op = blur_matrix(width, height, sigma, &ys, &xs);
        Ok(Self {
            kind: OperatorKind::Subsample,
            width,
            height,
            out_dims: (xs.len(), ys.len()),
            op,
            selection: Vec::new(),
        })
    }

    /// Builds the operator selected by `cfg` for frames of the given size.
    pub fn from_config(cfg: &SolveConfig, width: usize, height: usize, mask: Option<&[bool]>) -> Result<Self> {
        match cfg.operator {
            OperatorKind::Identity => Ok(Self::identity(width, height)),
            OperatorKind::Mask => {
                let m = mask.ok_or_else(|| Error::param("mask operator needs a mask bitmap"))?;
                Self::mask(width, height, m)
            }
            OperatorKind::Subsample => Self::subsample(width, height, cfg.subsample_factor),
            OperatorKind::Blur => Self::blur(width, height, cfg.blur_sigma),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn matrix(&self) -> &SparseOperator {
        &self.op
    }

    /// Size of the unknown image.
    pub fn input_dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Size of an observed frame. For the mask operator this is `(count, 1)`.
    pub fn output_dims(&self) -> (usize, usize) {
        self.out_dims
    }

    /// Dimensions an observed frame file must have.
    pub fn observed_frame_dims(&self) -> (usize, usize) {
        match self.kind {
            OperatorKind::Subsample => self.out_dims,
            _ => (self.width, self.height),
        }
    }

    pub fn observe(&self, u: &Image) -> Vec<f64> {
        self.op.apply(u.data())
    }

    /// Extracts the data vector `f` that `A u` is compared against.
    pub fn data(&self, frame: &Image) -> Result<Vec<f64>> {
        let expected = self.observed_frame_dims();
        if frame.dims() != expected {
            return Err(Error::dim(format!(
                "{} operator expects {}x{} frames, got {}x{}",
                self.kind,
                expected.0,
                expected.1,
                frame.width(),
                frame.height()
            )));
        }
        Ok(match self.kind {
            OperatorKind::Mask => self.selection.iter().map(|&p| frame.data()[p]).collect(),
            _ => frame.data().to_vec(),
        })
    }

    /// Lifts an observed frame back onto the unknown grid (`Aᵀ f`, normalized
    /// by the column sums where they are nonzero). Used for initial guesses.
    pub fn backproject(&self, frame: &Image) -> Result<Image> {
        let f = self.data(frame)?;
        let mut x = self.op.apply_transpose(&f);
        for (v, s) in x.iter_mut().zip(self.op.col_abs_sums()) {
            if s > 0.0 {
                *v /= s;
            }
        }
        Ok(Image::from_raw(self.width, self.height, x))
    }
}

/// Rows for output pixels `(xs[a], ys[b])` of a replicate-padded Gaussian blur.
fn blur_matrix(width: usize, height: usize, sigma: f64, ys: &[usize], xs: &[usize]) -> SparseOperator {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut b = TripletBuilder::with_capacity(xs.len() * ys.len(), width * height, xs.len() * ys.len() * k.len() * k.len());
    for (row_j, &j) in ys.iter().enumerate() {
        for (row_i, &i) in xs.iter().enumerate() {
            let row = row_j * xs.len() + row_i;
            for (b_off, &ky) in k.iter().enumerate() {
                let jj = clamp(j as isize + b_off as isize - r, height);
                for (a_off, &kx) in k.iter().enumerate() {
                    let ii = clamp(i as isize + a_off as isize - r, width);
                    b.push(row, jj * width + ii, kx * ky);
                }
            }
        }
    }
    b.build()
}
