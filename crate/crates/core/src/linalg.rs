//! Sparse storage, SPD solves and extremal-eigenvalue estimation.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric positive definite ({0})")]
    NotSpd(String),
    #[error("conjugate gradients stalled after {iterations} iterations (relative residual {residual:e})")]
    CgStalled { iterations: usize, residual: f64 },
    #[error("power iteration did not converge in {iterations} iterations (last estimate {estimate:e})")]
    PowerIteration { iterations: usize, estimate: f64 },
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets. Duplicates are summed in
    /// their input order, so the result depends only on the triplet order.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        self.indices[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let s = self.indptr[r];
        let e = self.indptr[r + 1];
        match self.indices[s..e].binary_search(&c) {
            Ok(i) => self.values[s + i],
            Err(_) => 0.0,
        }
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[i] * x[self.indices[i]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        self.mul_into(x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }

    /// max |A − Aᵀ| over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        worst
    }

    fn to_faer_lower(&self) -> Result<SparseColMat<usize, f64>, LinalgError> {
        let mut t = Vec::with_capacity(self.nnz() / 2 + self.nrows);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                if r >= c {
                    t.push(Triplet::new(r, c, v));
                }
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| LinalgError::NotSpd(format!("{e:?}")))
    }
}

/// Solver for a fixed SPD matrix: sparse Cholesky, or Jacobi-preconditioned
/// conjugate gradients.
pub enum SpdSolver {
    Cholesky { llt: Llt<usize, f64>, n: usize },
    Cg { a: CsrMatrix, inv_diag: Vec<f64>, tol: f64 },
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpdSolver::Cholesky { n, .. } => write!(f, "SpdSolver::Cholesky(n = {n})"),
            SpdSolver::Cg { a, tol, .. } => write!(f, "SpdSolver::Cg(n = {}, tol = {tol:e})", a.nrows()),
        }
    }
}

impl SpdSolver {
    pub fn cholesky(a: &CsrMatrix) -> Result<Self, LinalgError> {
        if a.nrows() == 0 {
            return Ok(Self::Cg {
                a: a.clone(),
                inv_diag: Vec::new(),
                tol: 1e-12,
            });
        }
        let lower = a.to_faer_lower()?;
        let llt = lower
            .sp_cholesky(Side::Lower)
            .map_err(|e| LinalgError::NotSpd(format!("Cholesky failed: {e:?}")))?;
        Ok(Self::Cholesky { llt, n: a.nrows() })
    }

    pub fn conjugate_gradient(a: &CsrMatrix, tol: f64) -> Result<Self, LinalgError> {
        let inv_diag = a
            .diagonal()
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                if d > 0.0 {
                    Ok(1.0 / d)
                } else {
                    Err(LinalgError::NotSpd(format!("diagonal entry {i} is {d:e}")))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self::Cg {
            a: a.clone(),
            inv_diag,
            tol,
        })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        match self {
            SpdSolver::Cholesky { llt, n } => {
                let rhs = Mat::from_fn(*n, 1, |i, _| b[i]);
                let x = llt.solve(&rhs);
                Ok(DVector::from_fn(*n, |i, _| x[(i, 0)]))
            }
            SpdSolver::Cg { a, inv_diag, tol } => pcg(a, inv_diag, b, *tol),
        }
    }
}

fn pcg(a: &CsrMatrix, inv_diag: &[f64], b: &DVector<f64>, tol: f64) -> Result<DVector<f64>, LinalgError> {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut z = r.component_mul(&DVector::from_column_slice(inv_diag));
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let max_it = 10 * n.max(10);
    for it in 0..max_it {
        let ap = a.mul_vec(&p);
        let alpha = rz / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let res = r.norm() / bnorm;
        if res <= tol {
            return Ok(x);
        }
        if !res.is_finite() {
            return Err(LinalgError::CgStalled {
                iterations: it,
                residual: res,
            });
        }
        z = r.component_mul(&DVector::from_column_slice(inv_diag));
        let rz_new = r.dot(&z);
        p = &z + &p * (rz_new / rz);
        rz = rz_new;
    }
    Err(LinalgError::CgStalled {
        iterations: max_it,
        residual: r.norm() / bnorm,
    })
}

/// Largest eigenvalue of the pencil (K, M) by power iteration on M⁻¹K with
/// Rayleigh-quotient estimates. Returns the estimate and iteration count.
pub fn largest_generalized_eigenvalue(
    k: &CsrMatrix,
    m_solver: &SpdSolver,
    m: &CsrMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, usize), LinalgError> {
    let n = k.nrows();
    if n == 0 {
        return Ok((0.0, 0));
    }
    // Deterministic, non-degenerate start vector.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + ((i as f64) * 0.618_033_988_75).fract());
    let mut last = 0.0;
    for it in 1..=max_iter {
        let kx = k.mul_vec(&x);
        let mx = m.mul_vec(&x);
        let lambda = x.dot(&kx) / x.dot(&mx);
        if it > 1 && (lambda - last).abs() <= tol * lambda.abs() {
            return Ok((lambda, it));
        }
        last = lambda;
        let y = m_solver.solve(&kx)?;
        let nrm = y.norm();
        if nrm == 0.0 {
            return Ok((0.0, it));
        }
        x = y / nrm;
    }
    Err(LinalgError::PowerIteration {
        iterations: max_iter,
        estimate: last,
    })
}
