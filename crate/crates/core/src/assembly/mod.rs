//! Vector-valued local and global mass/stiffness matrices, load vectors and
//! homogeneous Dirichlet elimination.

mod global;
mod load;
mod local;

pub use global::{assemble_global, Constraints, DofMap, GlobalSystem};
pub use load::{assemble_load, BodyForce, Traction};
pub use local::{local_mass, local_matrices, local_stiffness, LocalMatrices};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::projectors::ProjectorError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("invalid material: {0}")]
    Material(String),
    #[error("a Dirichlet problem needs |Γ_D| > 0, but the mesh has no Dirichlet edge")]
    NoDirichlet,
    #[error("cell {cell}: {source}")]
    Element {
        cell: usize,
        #[source]
        source: ProjectorError,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Homogeneous isotropic elastic medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub rho: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl Material {
    pub fn new(rho: f64, lambda: f64, mu: f64) -> Result<Self, AssemblyError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(AssemblyError::Material(format!("density must be positive, got {rho}")));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(AssemblyError::Material(format!("mu must be nonnegative, got {mu}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(AssemblyError::Material(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        Ok(Self { rho, lambda, mu })
    }

    /// Unit density with P-wave speed `c_p` and speed ratio `r = c_P / c_S`.
    pub fn from_speeds(c_p: f64, r: f64) -> Result<Self, AssemblyError> {
        let mu = (c_p / r).powi(2);
        Self::new(1.0, c_p * c_p - 2.0 * mu, mu)
    }

    pub fn c_p(&self) -> f64 {
        ((self.lambda + 2.0 * self.mu) / self.rho).sqrt()
    }

    pub fn c_s(&self) -> f64 {
        (self.mu / self.rho).sqrt()
    }
}

/// Which projector defines the stabilization kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stabilization {
    /// (I − Π∇) for stiffness, (I − Π0) for mass.
    #[default]
    Elliptic,
    /// (I − Π0) for both.
    L2,
}

/// Projection applied to test functions in the body-force term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadProjection {
    /// ∫ f·Π0_k v.
    #[default]
    Full,
    /// ∫ f·Π0_{k−2} v, with Π0_0 at k = 1.
    Reduced,
}

/// Discretization settings shared by every element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub k: usize,
    pub basis: crate::polybasis::BasisKind,
    pub stabilization: Stabilization,
    pub load: LoadProjection,
}

impl Discretization {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            basis: Default::default(),
            stabilization: Default::default(),
            load: Default::default(),
        }
    }

    pub fn with_basis(mut self, basis: crate::polybasis::BasisKind) -> Self {
        self.basis = basis;
        self
    }

    pub fn with_load(mut self, load: LoadProjection) -> Self {
        self.load = load;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn material_validation() {
        assert!(Material::new(0.0, 1.0, 1.0).is_err());
        assert!(Material::new(1.0, -1.0, 1.0).is_err());
        let m = Material::from_speeds(2f64.sqrt(), 2.0).unwrap();
        assert!((m.mu - 0.5).abs() < 1e-15 && (m.lambda - 1.0).abs() < 1e-15);
        assert!((m.c_p() / m.c_s() - 2.0).abs() < 1e-15);
    }
}
