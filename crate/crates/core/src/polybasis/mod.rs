//! Scaled monomials, polygon and edge quadrature, monomial Gram matrices and
//! the L2-orthonormalized alternative basis.

mod grams;
mod quadrature;

pub use grams::{monomial_grams, MonomialGrams};
pub use quadrature::{
    gauss_legendre, polygon_quadrature, triangle_quadrature, unit_interval_rule, QuadratureRule,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mesh::{ElementGeometry, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyBasisError {
    #[error("cell {cell} is not star-shaped with respect to its centroid; fan quadrature is invalid")]
    NotStarShaped { cell: usize },
    #[error("monomial mass matrix of cell {cell} is numerically singular (degree {degree}); reduce the polynomial degree")]
    SingularGram { cell: usize, degree: usize },
}

/// Dimension of P_k in two variables, zero for negative degrees.
pub fn dim(k: i64) -> usize {
    if k < 0 {
        0
    } else {
        let k = k as usize;
        (k + 1) * (k + 2) / 2
    }
}

/// Position of the monomial with exponents `(a, b)` in the graded ordering.
pub fn index(a: usize, b: usize) -> usize {
    let d = a + b;
    d * (d + 1) / 2 + b
}

/// Exponents of all monomials of degree ≤ k: by total degree, then
/// decreasing power of the first variable.
pub fn exponents(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(dim(k as i64));
    for d in 0..=k {
        for j in 0..=d {
            out.push((d - j, j));
        }
    }
    out
}

/// Scaled monomials m_α(x) = ((x − x_P)/h_P)^α of degree ≤ k.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    pub center: Point,
    pub scale: f64,
    pub degree: usize,
}

impl MonomialBasis {
    pub fn new(center: Point, scale: f64, degree: usize) -> Self {
        Self {
            center,
            scale,
            degree,
        }
    }

    pub fn for_element(geom: &ElementGeometry, degree: usize) -> Self {
        Self::new(geom.centroid, geom.diameter, degree)
    }

    pub fn dim(&self) -> usize {
        dim(self.degree as i64)
    }

    fn powers(&self, p: Point) -> (Vec<f64>, Vec<f64>) {
        let xi = (p.x - self.center.x) / self.scale;
        let eta = (p.y - self.center.y) / self.scale;
        let mut px = vec![1.0; self.degree + 1];
        let mut py = vec![1.0; self.degree + 1];
        for i in 1..=self.degree {
            px[i] = px[i - 1] * xi;
            py[i] = py[i - 1] * eta;
        }
        (px, py)
    }

    pub fn eval(&self, p: Point) -> Vec<f64> {
        let (px, py) = self.powers(p);
        exponents(self.degree)
            .into_iter()
            .map(|(a, b)| px[a] * py[b])
            .collect()
    }

    /// Values and physical-coordinate gradients.
    pub fn eval_with_grad(&self, p: Point) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (px, py) = self.powers(p);
        let n = self.dim();
        let mut v = Vec::with_capacity(n);
        let mut gx = Vec::with_capacity(n);
        let mut gy = Vec::with_capacity(n);
        let s = 1.0 / self.scale;
        for (a, b) in exponents(self.degree) {
            v.push(px[a] * py[b]);
            gx.push(if a > 0 { a as f64 * px[a - 1] * py[b] * s } else { 0.0 });
            gy.push(if b > 0 { b as f64 * px[a] * py[b - 1] * s } else { 0.0 });
        }
        (v, gx, gy)
    }

    /// Coefficients of ∂x m_α as a combination of monomials of degree ≤ k − 1,
    /// one column per α.
    pub fn dx_matrix(&self) -> DMatrix<f64> {
        self.derivative_matrix(0)
    }

    pub fn dy_matrix(&self) -> DMatrix<f64> {
        self.derivative_matrix(1)
    }

    fn derivative_matrix(&self, dir: usize) -> DMatrix<f64> {
        let k = self.degree;
        let rows = dim(k as i64 - 1);
        let mut d = DMatrix::zeros(rows, self.dim());
        for (col, (a, b)) in exponents(k).into_iter().enumerate() {
            let (p, target) = if dir == 0 {
                (a, (a.wrapping_sub(1), b))
            } else {
                (b, (a, b.wrapping_sub(1)))
            };
            if p > 0 {
                d[(index(target.0, target.1), col)] = p as f64 / self.scale;
            }
        }
        d
    }

    /// Coefficients of Δm_α in monomials of degree ≤ k − 2, one column per α.
    pub fn laplacian_matrix(&self) -> DMatrix<f64> {
        let k = self.degree;
        let rows = dim(k as i64 - 2);
        let mut l = DMatrix::zeros(rows, self.dim());
        let s2 = 1.0 / (self.scale * self.scale);
        for (col, (a, b)) in exponents(k).into_iter().enumerate() {
            if a >= 2 {
                l[(index(a - 2, b), col)] += (a * (a - 1)) as f64 * s2;
            }
            if b >= 2 {
                l[(index(a, b - 2), col)] += (b * (b - 1)) as f64 * s2;
            }
        }
        l
    }
}

/// Polynomial basis of P_k used by the projectors: scaled monomials, or their
/// L2-orthonormalized combinations b_j = Σ_α m_α T_{αj}.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBasis {
    pub monomials: MonomialBasis,
    /// Upper-triangular change of basis; `None` for plain monomials.
    pub transform: Option<DMatrix<f64>>,
}

/// Which polynomial basis the element computations use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    #[default]
    Monomial,
    Orthonormal,
}

impl std::str::FromStr for BasisKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "monomial" | "monomials" => Ok(BasisKind::Monomial),
            "orthonormal" | "orthogonal" | "ortho" => Ok(BasisKind::Orthonormal),
            other => Err(format!("unknown basis '{other}'")),
        }
    }
}

impl PolyBasis {
    pub fn monomial(monomials: MonomialBasis) -> Self {
        Self {
            monomials,
            transform: None,
        }
    }

    pub fn build(
        kind: BasisKind,
        geom: &ElementGeometry,
        degree: usize,
        quad: &QuadratureRule,
    ) -> Result<Self, PolyBasisError> {
        let m = MonomialBasis::for_element(geom, degree);
        match kind {
            BasisKind::Monomial => Ok(Self::monomial(m)),
            BasisKind::Orthonormal => {
                let t = orthonormalize(&m, quad, geom.cell)?;
                Ok(Self {
                    monomials: m,
                    transform: Some(t),
                })
            }
        }
    }

    pub fn degree(&self) -> usize {
        self.monomials.degree
    }

    pub fn dim(&self) -> usize {
        self.monomials.dim()
    }

    /// The leading sub-basis spanning P_degree.
    pub fn truncated(&self, degree: usize) -> PolyBasis {
        let n = dim(degree as i64);
        PolyBasis {
            monomials: MonomialBasis::new(self.monomials.center, self.monomials.scale, degree),
            transform: self
                .transform
                .as_ref()
                .map(|t| t.view((0, 0), (n, n)).into_owned()),
        }
    }

    /// Change-of-basis matrix T (identity for monomials).
    pub fn transform_matrix(&self) -> DMatrix<f64> {
        self.transform
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.dim(), self.dim()))
    }

    fn apply(&self, mono: Vec<f64>) -> DVector<f64> {
        let v = DVector::from_vec(mono);
        match &self.transform {
            None => v,
            Some(t) => t.tr_mul(&v),
        }
    }

    pub fn eval(&self, p: Point) -> DVector<f64> {
        self.apply(self.monomials.eval(p))
    }

    pub fn eval_with_grad(&self, p: Point) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let (v, gx, gy) = self.monomials.eval_with_grad(p);
        (self.apply(v), self.apply(gx), self.apply(gy))
    }

    /// Coefficients of ∂x b_j in the leading degree-(k−1) sub-basis.
    pub fn dx_matrix(&self) -> DMatrix<f64> {
        self.to_subbasis(self.monomials.dx_matrix(), 1)
    }

    pub fn dy_matrix(&self) -> DMatrix<f64> {
        self.to_subbasis(self.monomials.dy_matrix(), 1)
    }

    /// Monomial coefficients (degree ≤ k − 2) of Δb_j.
    pub fn laplacian_monomial_matrix(&self) -> DMatrix<f64> {
        let l = self.monomials.laplacian_matrix();
        match &self.transform {
            None => l,
            Some(t) => l * t,
        }
    }

    /// Monomial coefficients of ∂x b_j, degree ≤ k − 1.
    pub fn dx_monomial_matrix(&self) -> DMatrix<f64> {
        let d = self.monomials.dx_matrix();
        match &self.transform {
            None => d,
            Some(t) => d * t,
        }
    }

    pub fn dy_monomial_matrix(&self) -> DMatrix<f64> {
        let d = self.monomials.dy_matrix();
        match &self.transform {
            None => d,
            Some(t) => d * t,
        }
    }

    /// Re-expresses monomial coefficients (rows of degree ≤ k − drop) in the
    /// leading sub-basis of the same degree.
    fn to_subbasis(&self, mono: DMatrix<f64>, drop: usize) -> DMatrix<f64> {
        match &self.transform {
            None => mono,
            Some(t) => {
                let n = dim(self.degree() as i64 - drop as i64);
                let lead = t.view((0, 0), (n, n)).into_owned();
                let inv = lead
                    .solve_upper_triangular(&(mono * t))
                    .expect("triangular transform has a positive diagonal");
                inv
            }
        }
    }
}

/// Modified Gram–Schmidt (two passes) of the scaled monomials in the discrete
/// L2(P) inner product of `quad`. Returns the upper-triangular T with
/// positive diagonal such that T^T Q T = I.
pub fn orthonormalize(
    basis: &MonomialBasis,
    quad: &QuadratureRule,
    cell: usize,
) -> Result<DMatrix<f64>, PolyBasisError> {
    let n = basis.dim();
    let nq = quad.len();
    let mut v = DMatrix::zeros(nq, n);
    for (q, (p, w)) in quad.points.iter().zip(&quad.weights).enumerate() {
        let sw = w.sqrt();
        for (j, m) in basis.eval(*p).into_iter().enumerate() {
            v[(q, j)] = sw * m;
        }
    }
    let mut t = DMatrix::<f64>::identity(n, n);
    let mut cols = v.clone();
    for j in 0..n {
        let original = cols.column(j).norm();
        for _pass in 0..2 {
            for i in 0..j {
                let r = cols.column(i).dot(&cols.column(j));
                let ci = cols.column(i).into_owned();
                cols.column_mut(j).axpy(-r, &ci, 1.0);
                let ti = t.column(i).into_owned();
                t.column_mut(j).axpy(-r, &ti, 1.0);
            }
        }
        let nrm = cols.column(j).norm();
        if !(nrm > 1e-8 * original) {
            return Err(PolyBasisError::SingularGram {
                cell,
                degree: basis.degree,
            });
        }
        cols.column_mut(j).scale_mut(1.0 / nrm);
        t.column_mut(j).scale_mut(1.0 / nrm);
    }
    Ok(t)
}
