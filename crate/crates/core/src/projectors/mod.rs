//! Local degrees of freedom of the scalar virtual element space and the
//! computable polynomial projections built from them.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mesh::{ElementGeometry, Point};
use crate::polybasis::{
    dim, monomial_grams, polygon_quadrature, unit_interval_rule, BasisKind,
    MonomialBasis, MonomialGrams, PolyBasis, PolyBasisError, QuadratureRule,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectorError {
    #[error(transparent)]
    Basis(#[from] PolyBasisError),
    #[error("singular projector system on cell {cell} (condition estimate {condition:e})")]
    Singular { cell: usize, condition: f64 },
    #[error("polynomial degree must be at least 1, got {0}")]
    InvalidDegree(usize),
}

/// Local DOF numbering: vertex values, then `k − 1` moments per edge in
/// the cell's edge order, then `k(k−1)/2` interior moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarDofLayout {
    pub k: usize,
    pub n_vertices: usize,
}

impl ScalarDofLayout {
    pub fn new(k: usize, n_vertices: usize) -> Self {
        Self { k, n_vertices }
    }

    pub fn per_edge(&self) -> usize {
        self.k - 1
    }

    pub fn n_interior(&self) -> usize {
        dim(self.k as i64 - 2)
    }

    pub fn len(&self) -> usize {
        self.n_vertices * self.k + self.n_interior()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn vertex(&self, i: usize) -> usize {
        i
    }

    pub fn edge(&self, e: usize, j: usize) -> usize {
        self.n_vertices + e * self.per_edge() + j
    }

    pub fn interior(&self, g: usize) -> usize {
        self.n_vertices * self.k + g
    }

    /// Local DOFs that determine the trace on local edge `e`, in the order
    /// [oriented start vertex, oriented end vertex, moments].
    pub fn trace_dofs(&self, geom: &ElementGeometry, e: usize) -> Vec<usize> {
        let n = self.n_vertices;
        let (a, b) = if geom.edges[e].reversed {
            ((e + 1) % n, e)
        } else {
            (e, (e + 1) % n)
        };
        let mut out = vec![self.vertex(a), self.vertex(b)];
        out.extend((0..self.per_edge()).map(|j| self.edge(e, j)));
        out
    }
}

/// Coefficients of the degree-k edge trace in powers of t ∈ [−1/2, 1/2]
/// from [v(−1/2), v(1/2), ∫ v (2t)^j dt (j ≤ k − 2)]. Column l is the
/// trace of the l-th input.
pub fn edge_trace_matrix(k: usize) -> DMatrix<f64> {
    let n = k + 1;
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        a[(0, j)] = (-0.5f64).powi(j as i32);
        a[(1, j)] = 0.5f64.powi(j as i32);
    }
    for i in 0..k.saturating_sub(1) {
        for j in 0..n {
            let p = i + j;
            a[(2 + i, j)] = if p % 2 == 0 {
                0.5f64.powi(j as i32) / (p as f64 + 1.0)
            } else {
                0.0
            };
        }
    }
    a.try_inverse().expect("edge trace system is nonsingular")
}

/// Everything needed to evaluate integrals on one element at degree k.
#[derive(Debug, Clone)]
pub struct ElementSpace {
    pub geom: ElementGeometry,
    pub k: usize,
    pub layout: ScalarDofLayout,
    pub quad: QuadratureRule,
    pub basis: PolyBasis,
    pub grams: MonomialGrams,
    /// Monomials used by the interior moments (degree ≤ k − 2).
    pub moment_basis: MonomialBasis,
    trace: DMatrix<f64>,
    edge_rule: (Vec<f64>, Vec<f64>),
}

/// Quadrature point on a local edge with the traces of its k + 1 trace DOFs.
pub struct EdgePoint {
    pub x: Point,
    /// Weight including the edge length.
    pub w: f64,
    /// Parameter t ∈ [−1/2, 1/2] along the global orientation.
    pub t: f64,
    pub traces: Vec<f64>,
}

impl ElementSpace {
    pub fn new(geom: ElementGeometry, k: usize, kind: BasisKind) -> Result<Self, ProjectorError> {
        Self::with_exactness(geom, k, kind, 2 * k + 2)
    }

    pub fn with_exactness(
        geom: ElementGeometry,
        k: usize,
        kind: BasisKind,
        exactness: usize,
    ) -> Result<Self, ProjectorError> {
        if k == 0 {
            return Err(ProjectorError::InvalidDegree(k));
        }
        let quad = polygon_quadrature(&geom, exactness)?;
        let basis = PolyBasis::build(kind, &geom, k, &quad)?;
        let grams = monomial_grams(&quad, &basis);
        let layout = ScalarDofLayout::new(k, geom.vertices.len());
        let moment_basis = MonomialBasis::new(geom.centroid, geom.diameter, k.saturating_sub(2));
        Ok(Self {
            layout,
            quad,
            basis,
            grams,
            moment_basis,
            trace: edge_trace_matrix(k),
            edge_rule: unit_interval_rule(k + 1),
            geom,
            k,
        })
    }

    pub fn ndofs(&self) -> usize {
        self.layout.len()
    }

    /// Quadrature on local edge `e` with `n` points (k + 1 when `None`).
    pub fn edge_points(&self, e: usize, n: Option<usize>) -> Vec<EdgePoint> {
        let owned;
        let (ts, ws) = match n {
            None => (&self.edge_rule.0, &self.edge_rule.1),
            Some(n) => {
                owned = unit_interval_rule(n);
                (&owned.0, &owned.1)
            }
        };
        let edge = &self.geom.edges[e];
        let (s, f) = edge.oriented_endpoints();
        let d = f - s;
        ts.iter()
            .zip(ws)
            .map(|(&t, &w)| {
                let mut pw = vec![1.0; self.k + 1];
                for j in 1..=self.k {
                    pw[j] = pw[j - 1] * t;
                }
                let traces = (0..=self.k)
                    .map(|l| (0..=self.k).map(|j| self.trace[(j, l)] * pw[j]).sum())
                    .collect();
                EdgePoint {
                    x: edge.midpoint + d * t,
                    w: w * edge.length,
                    t,
                    traces,
                }
            })
            .collect()
    }

    /// DOF values of `ncols` functions evaluated jointly by `f`. Edge moments
    /// are (1/|E|)∫_E v ((s − x_E)/(|E|/2))^j ds along the global orientation.
    pub fn dof_matrix(&self, ncols: usize, f: impl Fn(Point) -> DVector<f64>) -> DMatrix<f64> {
        let l = self.layout;
        let mut d = DMatrix::zeros(l.len(), ncols);
        for (i, v) in self.geom.vertices.iter().enumerate() {
            d.row_mut(l.vertex(i)).copy_from(&f(*v).transpose());
        }
        if self.k >= 2 {
            let (ts, ws) = unit_interval_rule(self.k + 3);
            for (e, edge) in self.geom.edges.iter().enumerate() {
                let (s, t) = edge.oriented_endpoints();
                for (&tq, &wq) in ts.iter().zip(&ws) {
                    let val = f(edge.midpoint + (t - s) * tq);
                    let mut p = 1.0;
                    for j in 0..l.per_edge() {
                        let mut row = d.row_mut(l.edge(e, j));
                        row += val.transpose() * (wq * p);
                        p *= 2.0 * tq;
                    }
                }
            }
            let inv_area = 1.0 / self.geom.area;
            for (x, w) in self.quad.points.iter().zip(&self.quad.weights) {
                let val = f(*x);
                for (g, m) in self.moment_basis.eval(*x).into_iter().enumerate() {
                    let mut row = d.row_mut(l.interior(g));
                    row += val.transpose() * (w * m * inv_area);
                }
            }
        }
        d
    }

    /// The DOF vector of a scalar function (the interpolation operator).
    pub fn dof_functionals(&self, w: impl Fn(Point) -> f64) -> DVector<f64> {
        self.dof_matrix(1, |p| DVector::from_element(1, w(p))).column(0).into_owned()
    }

    /// DOFs of the basis polynomials, one column per basis function.
    pub fn basis_dofs(&self) -> DMatrix<f64> {
        self.dof_matrix(self.basis.dim(), |p| self.basis.eval(p))
    }
}

/// Projection matrices of one element, all mapping local DOF vectors to
/// coefficients in the element's polynomial basis.
#[derive(Debug, Clone)]
pub struct ElementProjectors {
    pub pi_nabla: DMatrix<f64>,
    pub pi0: DMatrix<f64>,
    pub pi0x: DMatrix<f64>,
    pub pi0y: DMatrix<f64>,
    /// DOFs of the basis polynomials (N^dofs × N^k).
    pub d: DMatrix<f64>,
}

fn lu_solve(
    a: DMatrix<f64>,
    b: &DMatrix<f64>,
    cell: usize,
) -> Result<DMatrix<f64>, ProjectorError> {
    let sv = a.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition < 1e15) {
        return Err(ProjectorError::Singular { cell, condition });
    }
    a.lu()
        .solve(b)
        .ok_or(ProjectorError::Singular { cell, condition })
}

/// Π∇_k from the DOFs via integration by parts.
pub fn elliptic_projector(space: &ElementSpace) -> Result<DMatrix<f64>, ProjectorError> {
    let k = space.k;
    let n = space.basis.dim();
    let l = space.layout;
    let mut g = space.grams.g();
    let mut b = DMatrix::zeros(n, l.len());
    let mut boundary_mass = DVector::zeros(n);
    let mut boundary_dof_mass = DVector::zeros(l.len());
    for (e, edge) in space.geom.edges.iter().enumerate() {
        let dofs = l.trace_dofs(&space.geom, e);
        let nrm = edge.outward_normal;
        for q in space.edge_points(e, None) {
            let (v, gx, gy) = space.basis.eval_with_grad(q.x);
            let dn = gx * nrm.x + gy * nrm.y;
            for (slot, &i) in dofs.iter().enumerate() {
                let c = q.w * q.traces[slot];
                b.column_mut(i).axpy(c, &dn, 1.0);
                boundary_dof_mass[i] += c;
            }
            boundary_mass.axpy(q.w, &v, 1.0);
        }
    }
    let lap = space.basis.laplacian_monomial_matrix();
    for gm in 0..l.n_interior() {
        let mut col = b.column_mut(l.interior(gm));
        col.axpy(-space.geom.area, &lap.row(gm).transpose(), 1.0);
    }
    if k == 1 {
        g.row_mut(0).copy_from(&boundary_mass.transpose());
        b.row_mut(0).copy_from(&boundary_dof_mass.transpose());
    } else {
        let mut mean = DVector::zeros(n);
        for (x, w) in space.quad.points.iter().zip(&space.quad.weights) {
            mean.axpy(*w, &space.basis.eval(*x), 1.0);
        }
        g.row_mut(0).copy_from(&mean.transpose());
        b.row_mut(0).fill(0.0);
        b[(0, l.interior(0))] = space.geom.area;
    }
    lu_solve(g, &b, space.geom.cell)
}

/// Π0_k of the enhanced space: moments of degree ≤ k − 2 from the interior
/// DOFs, higher moments from Π∇_k.
pub fn l2_projector_enhanced(
    space: &ElementSpace,
    pi_nabla: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ProjectorError> {
    let n = space.basis.dim();
    let l = space.layout;
    let full = MonomialBasis::for_element(&space.geom, space.k);
    // H[α, b] = ∫ m_α b_b.
    let mut h = DMatrix::zeros(n, n);
    for (x, w) in space.quad.points.iter().zip(&space.quad.weights) {
        let m = DVector::from_vec(full.eval(*x));
        h.ger(*w, &m, &space.basis.eval(*x), 1.0);
    }
    let hp = &h * pi_nabla;
    let low = l.n_interior();
    let mut cm = DMatrix::zeros(n, l.len());
    for a in 0..n {
        if a < low {
            cm[(a, l.interior(a))] = space.geom.area;
        } else {
            cm.row_mut(a).copy_from(&hp.row(a));
        }
    }
    let c = match &space.basis.transform {
        None => cm,
        Some(t) => t.tr_mul(&cm),
    };
    spd_solve(&space.grams.q, &c, space.geom.cell)
}

fn spd_solve(
    q: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    cell: usize,
) -> Result<DMatrix<f64>, ProjectorError> {
    match q.clone().cholesky() {
        Some(ch) => Ok(ch.solve(rhs)),
        None => Err(ProjectorError::Singular {
            cell,
            condition: f64::INFINITY,
        }),
    }
}

/// Π0_{k−1} of ∂x and ∂y, in the leading degree-(k−1) sub-basis.
pub fn gradient_projectors(
    space: &ElementSpace,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ProjectorError> {
    let k = space.k;
    let l = space.layout;
    let lower = space.basis.truncated(k - 1);
    let nl = lower.dim();
    let mut ex = DMatrix::zeros(nl, l.len());
    let mut ey = DMatrix::zeros(nl, l.len());
    for (e, edge) in space.geom.edges.iter().enumerate() {
        let dofs = l.trace_dofs(&space.geom, e);
        let nrm = edge.outward_normal;
        for q in space.edge_points(e, None) {
            let v = lower.eval(q.x);
            for (slot, &i) in dofs.iter().enumerate() {
                let c = q.w * q.traces[slot];
                ex.column_mut(i).axpy(c * nrm.x, &v, 1.0);
                ey.column_mut(i).axpy(c * nrm.y, &v, 1.0);
            }
        }
    }
    if k >= 2 {
        let dx = lower.dx_monomial_matrix();
        let dy = lower.dy_monomial_matrix();
        for gm in 0..l.n_interior() {
            let i = l.interior(gm);
            ex.column_mut(i).axpy(-space.geom.area, &dx.row(gm).transpose(), 1.0);
            ey.column_mut(i).axpy(-space.geom.area, &dy.row(gm).transpose(), 1.0);
        }
    }
    let q = space.grams.q.view((0, 0), (nl, nl)).into_owned();
    Ok((
        spd_solve(&q, &ex, space.geom.cell)?,
        spd_solve(&q, &ey, space.geom.cell)?,
    ))
}

/// All projectors of one element.
pub fn compute_projectors(space: &ElementSpace) -> Result<ElementProjectors, ProjectorError> {
    let pi_nabla = elliptic_projector(space)?;
    let pi0 = l2_projector_enhanced(space, &pi_nabla)?;
    let (pi0x, pi0y) = gradient_projectors(space)?;
    Ok(ElementProjectors {
        pi_nabla,
        pi0,
        pi0x,
        pi0y,
        d: space.basis_dofs(),
    })
}

/// Coefficients of the monomial `(a, b)` of degree ≤ k in `basis`.
pub fn monomial_in_basis(basis: &PolyBasis, a: usize, b: usize) -> DVector<f64> {
    let n = basis.dim();
    let mut e = DVector::zeros(n);
    e[crate::polybasis::index(a, b)] = 1.0;
    match &basis.transform {
        None => e,
        Some(t) => t
            .clone()
            .solve_upper_triangular(&e)
            .expect("triangular transform has a positive diagonal"),
    }
}
