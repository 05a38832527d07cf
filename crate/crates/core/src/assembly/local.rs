use nalgebra::DMatrix;

use super::{Material, Stabilization};
use crate::projectors::{ElementProjectors, ElementSpace};

/// Element matrices in [x-component; y-component] block order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatrices {
    pub m: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

fn block_diag(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    out.view_mut((0, 0), (n, n)).copy_from(a);
    out.view_mut((n, n), (n, n)).copy_from(a);
    out
}

fn kernel_gram(proj: &ElementProjectors, pi: &DMatrix<f64>) -> DMatrix<f64> {
    let n = proj.d.nrows();
    let r = DMatrix::identity(n, n) - &proj.d * pi;
    r.tr_mul(&r)
}

pub fn local_mass(space: &ElementSpace, proj: &ElementProjectors, material: &Material) -> DMatrix<f64> {
    let rho = material.rho;
    let h = space.geom.diameter;
    let consistency = proj.pi0.tr_mul(&(&space.grams.q * &proj.pi0));
    let stab = kernel_gram(proj, &proj.pi0);
    block_diag(&(consistency * rho + stab * (rho * h * h)))
}

pub fn local_stiffness(
    space: &ElementSpace,
    proj: &ElementProjectors,
    material: &Material,
    stabilization: Stabilization,
) -> DMatrix<f64> {
    let (lam, mu) = (material.lambda, material.mu);
    let nl = proj.pi0x.nrows();
    let q1 = space.grams.q.view((0, 0), (nl, nl));
    let qx = q1 * &proj.pi0x;
    let qy = q1 * &proj.pi0y;
    let axx = proj.pi0x.tr_mul(&qx);
    let ayy = proj.pi0y.tr_mul(&qy);
    let axy = proj.pi0x.tr_mul(&qy);
    let n = axx.nrows();
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    let kxx = &axx * (2.0 * mu + lam) + &ayy * mu;
    let kxy = &axy * lam + axy.transpose() * mu;
    let kyy = &axx * mu + &ayy * (2.0 * mu + lam);
    k.view_mut((0, 0), (n, n)).copy_from(&kxx);
    k.view_mut((0, n), (n, n)).copy_from(&kxy);
    k.view_mut((n, 0), (n, n)).copy_from(&kxy.transpose());
    k.view_mut((n, n), (n, n)).copy_from(&kyy);
    let pi = match stabilization {
        Stabilization::Elliptic => &proj.pi_nabla,
        Stabilization::L2 => &proj.pi0,
    };
    let s = kernel_gram(proj, pi) * (2.0 * mu).max(lam);
    k += block_diag(&s);
    // Remove roundoff asymmetry.
    (&k + k.transpose()) * 0.5
}

pub fn local_matrices(
    space: &ElementSpace,
    proj: &ElementProjectors,
    material: &Material,
    stabilization: Stabilization,
) -> LocalMatrices {
    let m = local_mass(space, proj, material);
    LocalMatrices {
        m: (&m + m.transpose()) * 0.5,
        k: local_stiffness(space, proj, material, stabilization),
    }
}
