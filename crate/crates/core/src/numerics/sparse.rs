//! Boolean compressed-row matrices used as relation adjacency.

use super::Real;
use crate::error::{Error, Result};

/// An `n × n` 0/1 matrix in compressed-row form. Every stored cell has
/// the implicit value 1; column indices are sorted and unique per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseRelationMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl SparseRelationMatrix {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
        }
    }

    /// Builds from arbitrary `(row, col)` cells; duplicates collapse.
    ///
    /// Panics if a cell is out of bounds.
    pub fn from_cells(n_rows: usize, n_cols: usize, cells: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cells: Vec<(usize, usize)> = cells.into_iter().collect();
        for &(i, j) in &cells {
            assert!(i < n_rows && j < n_cols, "cell ({i}, {j}) outside {n_rows}x{n_cols}");
        }
        cells.sort_unstable();
        cells.dedup();
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(i, _) in &cells {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = cells.iter().map(|&(_, j)| j as u32).collect();
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_cells(self.n_cols, self.n_rows, self.cells().map(|(i, j)| (j, i)))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i < self.n_rows && self.row(i).binary_search(&(j as u32)).is_ok()
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j as usize)))
    }

    /// `out[j] = Σ_i z[i]·M[i][j]`.
    pub fn spvm<F: Real>(&self, z: &[F]) -> Result<Vec<F>> {
        if z.len() != self.n_rows {
            return Err(Error::Shape {
                op: "spvm",
                detail: format!("vector of length {} against {} rows", z.len(), self.n_rows),
            });
        }
        let mut out = vec![F::zero(); self.n_cols];
        self.spvm_acc(z, F::one(), None, &mut out);
        Ok(out)
    }

    /// `out[j] += scale · Σ_i z[i]·M[i][j]`, optionally skipping one cell.
    #[inline]
    pub fn spvm_acc<F: Real>(&self, z: &[F], scale: F, skip: Option<(usize, usize)>, out: &mut [F]) {
        for (i, &zi) in z.iter().enumerate() {
            if zi == F::zero() {
                continue;
            }
            let w = zi * scale;
            let row = self.row(i);
            match skip {
                Some((si, sj)) if si == i => {
                    for &j in row {
                        if j as usize != sj {
                            out[j as usize] += w;
                        }
                    }
                }
                _ => {
                    for &j in row {
                        out[j as usize] += w;
                    }
                }
            }
        }
    }

    /// `out[i] = Σ_j M[i][j]·g[j]` (matrix times column vector), optionally
    /// skipping one cell.
    #[inline]
    pub fn spmv_into<F: Real>(&self, g: &[F], skip: Option<(usize, usize)>, out: &mut [F]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n_rows) {
            let mut acc = F::zero();
            for &j in self.row(i) {
                if skip != Some((i, j as usize)) {
                    acc += g[j as usize];
                }
            }
            *o = acc;
        }
    }
}
