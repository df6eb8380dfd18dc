//! Compressed-row real matrices for sector Hamiltonians.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

/// Real square matrix in CSR layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

const PAR_ROWS: usize = 4096;

impl SparseMatrix {
    /// Builds from per-row entry lists; duplicate columns are summed.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Largest |H_ij − H_ji|.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.dim)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let row = |i: usize| self.row(i).map(|(j, v)| x[j] * v).sum::<Complex64>();
        if self.dim >= PAR_ROWS {
            (0..self.dim).into_par_iter().map(row).collect()
        } else {
            (0..self.dim).map(row).collect()
        }
    }

    /// ⟨x|H|x⟩ for real symmetric H.
    pub fn expectation(&self, x: &[Complex64]) -> f64 {
        let hx = self.matvec(x);
        x.iter().zip(&hx).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let m = SparseMatrix::from_rows(2, vec![vec![(1, 1.0), (0, 2.0), (1, 0.5)], vec![(0, 1.5)]]);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.symmetry_defect(), 0.0);
        let y = m.matvec(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        assert_eq!(y, vec![Complex64::new(2.0, 1.5), Complex64::new(1.5, 0.0)]);
    }
}
