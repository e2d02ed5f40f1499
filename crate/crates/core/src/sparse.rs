//! Row-compressed sparse matrices.

use crate::error::{Error, Result};
use crate::par;

/// CSR matrix. Column indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    row_start: Vec<usize>,
    col_index: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; duplicates are summed.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: Vec::new() }
    }

    pub fn with_capacity(rows: usize, cols: usize, cap: usize) -> Self {
        Self { rows, cols, entries: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols, "({row}, {col}) out of bounds");
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseOperator {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_start = vec![0; self.rows + 1];
        let mut col_index = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_index.push(c);
                values.push(v);
                row_start[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.rows {
            row_start[r + 1] += row_start[r];
        }
        let mut op = SparseOperator { rows: self.rows, cols: self.cols, row_start, col_index, values };
        op.drop_zeros();
        op
    }
}

impl SparseOperator {
    /// Assembles from raw CSR arrays, validating the structure.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_start: Vec<usize>,
        col_index: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_start.len() != rows + 1 || row_start[0] != 0 {
            return Err(Error::dim("row_start must have rows + 1 entries starting at 0"));
        }
        if col_index.len() != values.len() || *row_start.last().unwrap() != values.len() {
            return Err(Error::dim("column/value arrays disagree with row_start"));
        }
        for r in 0..rows {
            if row_start[r] > row_start[r + 1] {
                return Err(Error::dim(format!("row_start decreases at row {r}")));
            }
            let cs = &col_index[row_start[r]..row_start[r + 1]];
            if cs.iter().any(|&c| c >= cols) || cs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::dim(format!("row {r}: column indices out of range or unsorted")));
            }
        }
        Ok(Self { rows, cols, row_start, col_index, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_start: (0..=n).collect(),
            col_index: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, row_start: vec![0; rows + 1], col_index: Vec::new(), values: Vec::new() }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[r]..self.row_start[r + 1];
        self.col_index[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_start[r + 1] - self.row_start[r]
    }

    /// Removes entries that are exactly zero.
    fn drop_zeros(&mut self) {
        self.retain(|v| v != 0.0);
    }

    /// Removes entries whose magnitude is below `threshold`.
    pub fn prune(&mut self, threshold: f64) {
        self.retain(|v| v.abs() >= threshold);
    }

    fn retain(&mut self, keep: impl Fn(f64) -> bool) {
        let mut write = 0;
        let mut start = 0;
        for r in 0..self.rows {
            let end = self.row_start[r + 1];
            for k in start..end {
                if keep(self.values[k]) {
                    self.col_index[write] = self.col_index[k];
                    self.values[write] = self.values[k];
                    write += 1;
                }
            }
            start = end;
            self.row_start[r + 1] = write;
        }
        self.col_index.truncate(write);
        self.values.truncate(write);
    }

    /// `y = K x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "apply: input length");
        assert_eq!(y.len(), self.rows, "apply: output length");
        par::update(y, |r, out| {
            let mut acc = 0.0;
            for k in self.row_start[r]..self.row_start[r + 1] {
                acc += self.values[k] * x[self.col_index[k]];
            }
            *out = acc;
        });
    }

    /// `x = Kᵀ y` by scattering rows; sequential.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows, "apply_transpose: input length");
        let mut x = vec![0.0; self.cols];
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for k in self.row_start[r]..self.row_start[r + 1] {
                x[self.col_index[k]] += self.values[k] * yr;
            }
        }
        x
    }

    /// Explicit transpose in CSR form. Applying it row-wise parallelizes `Kᵀ y`.
    pub fn transpose(&self) -> SparseOperator {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_index {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_start = counts.clone();
        let mut next = counts;
        let mut col_index = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for k in self.row_start[r]..self.row_start[r + 1] {
                let c = self.col_index[k];
                let dst = next[c];
                col_index[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        SparseOperator { rows: self.cols, cols: self.rows, row_start, col_index, values }
    }

    /// Per-row sum of absolute entries.
    pub fn row_abs_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v.abs()).sum()).collect()
    }

    /// Per-column sum of absolute entries.
    pub fn col_abs_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for (&c, &v) in self.col_index.iter().zip(&self.values) {
            s[c] += v.abs();
        }
        s
    }

    /// Block-diagonal composition.
    pub fn block_diag(blocks: &[SparseOperator]) -> SparseOperator {
        let grid: Vec<Vec<Option<&SparseOperator>>> = (0..blocks.len())
            .map(|b| (0..blocks.len()).map(|c| (b == c).then_some(&blocks[b])).collect())
            .collect();
        let row_dims: Vec<usize> = blocks.iter().map(|b| b.rows).collect();
        let col_dims: Vec<usize> = blocks.iter().map(|b| b.cols).collect();
        Self::from_blocks(&grid, &row_dims, &col_dims).expect("diagonal blocks are consistent")
    }

    /// Assembles a block matrix; `None` blocks are zero.
    pub fn from_blocks(
        grid: &[Vec<Option<&SparseOperator>>],
        row_dims: &[usize],
        col_dims: &[usize],
    ) -> Result<SparseOperator> {
        if grid.len() != row_dims.len() || grid.iter().any(|r| r.len() != col_dims.len()) {
            return Err(Error::dim("block grid shape"));
        }
        let col_offsets: Vec<usize> = col_dims
            .iter()
            .scan(0, |acc, &d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        let cols: usize = col_dims.iter().sum();
        let rows: usize = row_dims.iter().sum();
        let mut row_start = Vec::with_capacity(rows + 1);
        row_start.push(0);
        let mut col_index = Vec::new();
        let mut values = Vec::new();
        for (br, blocks) in grid.iter().enumerate() {
            for (bc, block) in blocks.iter().enumerate() {
                if let Some(b) = block {
                    if b.rows != row_dims[br] || b.cols != col_dims[bc] {
                        return Err(Error::dim(format!("block ({br}, {bc}) has wrong shape")));
                    }
                }
            }
            for r in 0..row_dims[br] {
                for (bc, block) in blocks.iter().enumerate() {
                    if let Some(b) = block {
                        for (c, v) in b.row(r) {
                            col_index.push(col_offsets[bc] + c);
                            values.push(v);
                        }
                    }
                }
                row_start.push(values.len());
            }
        }
        Ok(SparseOperator { rows, cols, row_start, col_index, values })
    }

    /// Dense copy, row-major. Intended for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }
}
