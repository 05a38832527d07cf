//! Manufactured-solution benchmark, error norms and refinement studies.

mod study;

pub use study::*;

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{AssemblyError, GlobalSystem, Material};
use crate::mesh::Point;
use crate::polybasis::{polygon_quadrature, PolyBasisError};
use crate::timestep::TimestepError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid {name}: {message}")]
    Invalid { name: &'static str, message: String },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Timestep(#[from] TimestepError),
    #[error(transparent)]
    Quadrature(#[from] PolyBasisError),
    #[error("Δt = {dt:e} exceeds the stability limit{context}; choose Δt ≤ {admissible:e}")]
    Cfl { context: String, dt: f64, admissible: f64 },
}

/// u(x, y, t) = cos(2πt/τ) (sin²(πx) sin(2πy), sin(2πx) sin²(πy)) on (0,1)²,
/// which vanishes on the boundary. The load is separable, f = cos(2πt/τ) g(x).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkProblem {
    pub material: Material,
    /// Temporal period τ.
    pub period: f64,
    /// Final time.
    pub t_final: f64,
}

impl Default for BenchmarkProblem {
    fn default() -> Self {
        Self {
            material: Material::new(1.0, 1.0, 1.0).expect("unit material is valid"),
            period: 1.0,
            t_final: 1.0,
        }
    }
}

impl BenchmarkProblem {
    pub fn with_final_time(t_final: f64) -> Self {
        Self {
            t_final,
            ..Self::default()
        }
    }

    fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        (self.omega() * t).cos()
    }

    fn shape(p: Point) -> [f64; 2] {
        let (sx, sy) = ((PI * p.x).sin(), (PI * p.y).sin());
        [sx * sx * (2.0 * PI * p.y).sin(), (2.0 * PI * p.x).sin() * sy * sy]
    }

    /// Rows are components, columns are ∂x, ∂y.
    fn shape_gradient(p: Point) -> [[f64; 2]; 2] {
        let (x, y) = (p.x, p.y);
        let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
        let (s2x, s2y) = ((2.0 * PI * x).sin(), (2.0 * PI * y).sin());
        [
            [PI * s2x * s2y, 2.0 * PI * sx * sx * (2.0 * PI * y).cos()],
            [2.0 * PI * (2.0 * PI * x).cos() * sy * sy, PI * s2x * s2y],
        ]
    }

    /// Spatial load g = −ρω² u_s − ∇·σ(u_s).
    pub fn force_shape(&self, p: Point) -> [f64; 2] {
        let Material { rho, lambda, mu } = self.material;
        let (x, y) = (p.x, p.y);
        let pi2 = PI * PI;
        let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
        let (s2x, s2y, c2x, c2y) = (
            (2.0 * PI * x).sin(),
            (2.0 * PI * y).sin(),
            (2.0 * PI * x).cos(),
            (2.0 * PI * y).cos(),
        );
        let axx = 2.0 * pi2 * c2x * s2y;
        let ayy = -4.0 * pi2 * sx * sx * s2y;
        let axy = 2.0 * pi2 * s2x * c2y;
        let bxx = -4.0 * pi2 * s2x * sy * sy;
        let byy = 2.0 * pi2 * s2x * c2y;
        let bxy = 2.0 * pi2 * c2x * s2y;
        let [a, b] = Self::shape(p);
        let w2 = self.omega().powi(2);
        [
            -rho * w2 * a - (mu * (axx + ayy) + (lambda + mu) * (axx + bxy)),
            -rho * w2 * b - (mu * (bxx + byy) + (lambda + mu) * (axy + byy)),
        ]
    }

    pub fn displacement(&self, p: Point, t: f64) -> [f64; 2] {
        let c = self.time_factor(t);
        let [a, b] = Self::shape(p);
        [c * a, c * b]
    }

    pub fn gradient(&self, p: Point, t: f64) -> [[f64; 2]; 2] {
        let c = self.time_factor(t);
        let g = Self::shape_gradient(p);
        [[c * g[0][0], c * g[0][1]], [c * g[1][0], c * g[1][1]]]
    }

    pub fn body_force(&self, p: Point, t: f64) -> [f64; 2] {
        let c = self.time_factor(t);
        let [g0, g1] = self.force_shape(p);
        [c * g0, c * g1]
    }
}

/// Errors of a discrete field against an exact one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub h1: f64,
    /// False when the exact norm vanished and absolute errors are reported.
    pub relative: bool,
}

/// ‖u − Π0_k u_h‖ and the broken ‖∇u − Π0_{k−1}∇u_h‖, relative to the exact
/// norms. Quadrature is two degrees richer than the one used for assembly.
pub fn error_norms(
    sys: &GlobalSystem,
    u_h: &DVector<f64>,
    exact: impl Fn(Point) -> [f64; 2] + Sync,
    exact_grad: impl Fn(Point) -> [[f64; 2]; 2] + Sync,
) -> Result<ErrorNorms, HarnessError> {
    let k = sys.disc.k;
    let parts: Vec<[f64; 4]> = sys
        .spaces
        .par_iter()
        .zip(&sys.projectors)
        .enumerate()
        .map(|(c, (space, proj))| {
            let quad = polygon_quadrature(&space.geom, 2 * k + 4)?;
            let local = sys.gather(c, u_h);
            let n = space.ndofs();
            let grad_basis = space.basis.truncated(k - 1);
            let mut acc = [0.0; 4];
            for comp in 0..2 {
                let dofs = local.rows(comp * n, n);
                let val = &proj.pi0 * dofs;
                let dx = &proj.pi0x * dofs;
                let dy = &proj.pi0y * dofs;
                for (p, w) in quad.points.iter().zip(&quad.weights) {
                    let u = exact(*p)[comp];
                    let g = exact_grad(*p)[comp];
                    let b = space.basis.eval(*p);
                    let gb = grad_basis.eval(*p);
                    let e = u - b.dot(&val);
                    let ex = g[0] - gb.dot(&dx);
                    let ey = g[1] - gb.dot(&dy);
                    acc[0] += w * e * e;
                    acc[1] += w * u * u;
                    acc[2] += w * (ex * ex + ey * ey);
                    acc[3] += w * (g[0] * g[0] + g[1] * g[1]);
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, HarnessError>>()?;
    let mut sum = [0.0; 4];
    for p in &parts {
        for i in 0..4 {
            sum[i] += p[i];
        }
    }
    let (el2, nl2, eh1, nh1) = (sum[0].sqrt(), sum[1].sqrt(), sum[2].sqrt(), sum[3].sqrt());
    if nl2 < 1e-14 || nh1 < 1e-14 {
        return Ok(ErrorNorms {
            l2: el2,
            h1: eh1,
            relative: false,
        });
    }
    Ok(ErrorNorms {
        l2: el2 / nl2,
        h1: eh1 / nh1,
        relative: true,
    })
}
