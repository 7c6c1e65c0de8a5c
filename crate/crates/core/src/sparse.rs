//! Compressed sparse row matrices and a checked sparse LU solver.

use faer::sparse::{SparseColMat, Triplet};
use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};

/// Accumulates `(row, col, value)` contributions; duplicates are summed.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        TripletBuilder { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn extend_from(&mut self, other: &CsrMatrix, row_offset: usize, col_offset: usize, scale: f64) {
        for (i, j, v) in other.iter() {
            self.push(i + row_offset, j + col_offset, scale * v);
        }
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix { nrows: self.nrows, ncols: self.ncols, row_ptr, cols, vals }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.build()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = TripletBuilder::new(self.ncols, self.nrows);
        for (i, j, v) in self.iter() {
            b.push(j, i, v);
        }
        b.build()
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut b = TripletBuilder::new(self.nrows, self.ncols);
        b.extend_from(self, 0, 0, 1.0);
        b.extend_from(other, 0, 0, s);
        b.build()
    }

    /// Rows and columns picked by the given index lists.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut b = TripletBuilder::new(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if col_map[j] != usize::MAX {
                    b.push(r, col_map[j], v);
                }
            }
        }
        b.build()
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            d[(i, j)] += v;
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> =
            self.iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::SingularSystem(format!("matrix conversion failed: {e:?}")))
    }
}

/// Sparse LU factorization whose solves are verified: a non-finite solution or
/// a residual above `1e-8` relative is reported as [`Error::SingularSystem`].
pub struct SparseLu {
    matrix: CsrMatrix,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

const RESIDUAL_TOL: f64 = 1e-8;

impl SparseLu {
    pub fn new(matrix: &CsrMatrix) -> Result<Self> {
        if matrix.nrows != matrix.ncols {
            return Err(Error::SingularSystem("matrix is not square".into()));
        }
        let lu = matrix
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::SingularSystem(format!("LU factorization failed: {e:?}")))?;
        Ok(SparseLu { matrix: matrix.clone(), lu })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.solve_many(&[rhs.to_vec()])?;
        Ok(out.pop().expect("one column"))
    }

    /// Solves for several right-hand sides with one factorization.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        let b = Mat::<f64>::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
        let x = self.lu.solve(&b);
        let mut cols = Vec::with_capacity(rhs.len());
        for (j, r) in rhs.iter().enumerate() {
            let col: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
            self.check(&col, r)?;
            cols.push(col);
        }
        Ok(cols)
    }

    fn check(&self, x: &[f64], rhs: &[f64]) -> Result<()> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("solution is not finite".into()));
        }
        let ax = self.matrix.mul_vec(x);
        let res = ax.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = norm2(rhs) + self.matrix.max_abs() * norm2(x);
        if res > RESIDUAL_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularSystem(format!(
                "residual {res:.3e} exceeds tolerance (scale {scale:.3e})"
            )));
        }
        Ok(())
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, neumann: bool) -> CsrMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            let d = if neumann && (i == 0 || i == n - 1) { 1.0 } else { 2.0 };
            b.push(i, i, d);
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
                b.push(i + 1, i, -1.0);
            }
        }
        b.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut b = TripletBuilder::new(2, 2);
        b.push(0, 1, 1.0);
        b.push(0, 1, 2.5);
        b.push(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.get(0, 1), 3.5);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.transpose().get(1, 0), 3.5);
    }

    #[test]
    fn solves_dirichlet_laplacian() {
        let a = laplacian_1d(50, false);
        let lu = SparseLu::new(&a).unwrap();
        let x = lu.solve(&vec![1.0; 50]).unwrap();
        // discrete solution of -u'' = 1 with unit spacing: u_i = (i+1)(n-i)/2
        for (i, v) in x.iter().enumerate() {
            let exact = (i + 1) as f64 * (50 - i) as f64 / 2.0;
            assert!((v - exact).abs() < 1e-9 * exact);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = laplacian_1d(20, true);
        let err = SparseLu::new(&a).and_then(|lu| lu.solve(&vec![1.0; 20]));
        assert!(matches!(err, Err(Error::SingularSystem(_))));
    }
}
