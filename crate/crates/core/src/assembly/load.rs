use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use super::{GlobalSystem, LoadProjection};
use crate::projectors::ElementProjectors;
use crate::mesh::{BoundaryTag, Point, PolygonalMesh};
use crate::projectors::ElementSpace;

/// Body force density at a point.
pub type BodyForce<'a> = dyn Fn(Point) -> [f64; 2] + Sync + 'a;
/// Traction at a boundary point with outward unit normal.
pub type Traction<'a> = dyn Fn(Point, Vector2<f64>) -> [f64; 2] + Sync + 'a;

/// ∫ f·Π0_k φ_i via the basis moments of f.
fn full_volume_load(space: &ElementSpace, pi0: &DMatrix<f64>, f: &BodyForce<'_>) -> DVector<f64> {
    let n = space.ndofs();
    let nb = space.basis.dim();
    let mut moments = DMatrix::zeros(nb, 2);
    for (x, w) in space.quad.points.iter().zip(&space.quad.weights) {
        let b = space.basis.eval(*x);
        let v = f(*x);
        moments.column_mut(0).axpy(w * v[0], &b, 1.0);
        moments.column_mut(1).axpy(w * v[1], &b, 1.0);
    }
    let loc = pi0.tr_mul(&moments);
    let mut out = DVector::zeros(2 * n);
    out.rows_mut(0, n).copy_from(&loc.column(0));
    out.rows_mut(n, n).copy_from(&loc.column(1));
    out
}

/// Local volume load in [x; y] order.
fn volume_load(
    space: &ElementSpace,
    proj: &ElementProjectors,
    f: &BodyForce<'_>,
    mode: LoadProjection,
) -> DVector<f64> {
    if mode == LoadProjection::Full {
        return full_volume_load(space, &proj.pi0, f);
    }
    let proj_pi_nabla = &proj.pi_nabla;
    let n = space.ndofs();
    let mut out = DVector::zeros(2 * n);
    let area = space.geom.area;
    if space.k == 1 {
        // Cell-average pairing: ∫ f · Π0_0 φ = f̄ ∫ Π∇φ.
        let mut fbar = [0.0; 2];
        let mut basis_int = DVector::zeros(space.basis.dim());
        for (x, w) in space.quad.points.iter().zip(&space.quad.weights) {
            let v = f(*x);
            fbar[0] += w * v[0];
            fbar[1] += w * v[1];
            basis_int.axpy(*w, &space.basis.eval(*x), 1.0);
        }
        let phi_int = proj_pi_nabla.tr_mul(&basis_int);
        for i in 0..n {
            out[i] = fbar[0] / area * phi_int[i];
            out[i + n] = fbar[1] / area * phi_int[i];
        }
        return out;
    }
    let mb = &space.moment_basis;
    let nm = mb.dim();
    let mut gram = DMatrix::zeros(nm, nm);
    let mut rhs = DMatrix::zeros(nm, 2);
    for (x, w) in space.quad.points.iter().zip(&space.quad.weights) {
        let m = DVector::from_vec(mb.eval(*x));
        gram.ger(*w, &m, &m, 1.0);
        let v = f(*x);
        rhs.column_mut(0).axpy(w * v[0], &m, 1.0);
        rhs.column_mut(1).axpy(w * v[1], &m, 1.0);
    }
    let coef = gram
        .cholesky()
        .expect("moment Gram matrix is SPD on a valid element")
        .solve(&rhs);
    for g in 0..nm {
        let i = space.layout.interior(g);
        out[i] = area * coef[(g, 0)];
        out[i + n] = area * coef[(g, 1)];
    }
    out
}

fn neumann_load(space: &ElementSpace, mesh: &PolygonalMesh, g: &Traction<'_>, out: &mut DVector<f64>) {
    let n = space.ndofs();
    for (e, edge) in space.geom.edges.iter().enumerate() {
        if mesh.edges()[edge.global].tag != BoundaryTag::Neumann {
            continue;
        }
        let dofs = space.layout.trace_dofs(&space.geom, e);
        for q in space.edge_points(e, Some(space.k + 3)) {
            let t = g(q.x, edge.outward_normal);
            for (slot, &i) in dofs.iter().enumerate() {
                out[i] += q.w * q.traces[slot] * t[0];
                out[i + n] += q.w * q.traces[slot] * t[1];
            }
        }
    }
}

/// Load vector on the free DOFs: the projected body-force term plus the
/// Neumann traction term.
pub fn assemble_load(
    mesh: &PolygonalMesh,
    sys: &GlobalSystem,
    f: &BodyForce<'_>,
    traction: Option<&Traction<'_>>,
) -> DVector<f64> {
    let locals: Vec<DVector<f64>> = sys
        .spaces
        .par_iter()
        .zip(&sys.projectors)
        .map(|(space, proj)| {
            let mut l = volume_load(space, proj, f, sys.disc.load);
            if let Some(g) = traction {
                neumann_load(space, mesh, g, &mut l);
            }
            l
        })
        .collect();
    let mut out = DVector::zeros(sys.num_free());
    for (l, dofs) in locals.iter().zip(&sys.cell_dofs) {
        for (i, &gi) in dofs.iter().enumerate() {
            if let Some(fi) = sys.constraints.free_index(gi) {
                out[fi] += l[i];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_global, Discretization, LoadProjection, Material};
    use crate::mesh::{generate_family, MeshFamily};
    use std::collections::HashMap;

    fn mat() -> Material {
        Material::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_load() {
        let mesh = generate_family(MeshFamily::Hexagonal, 0, 0);
        let sys = assemble_global(&mesh, mat(), Discretization::new(2), true).unwrap();
        let f = assemble_load(&mesh, &sys, &|_| [0.0, 0.0], None);
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn constant_force_pairs_with_cell_means() {
        let mesh = generate_family(MeshFamily::NonconvexOctagon, 0, 0);
        let disc = Discretization::new(2).with_load(LoadProjection::Reduced);
        let sys = assemble_global(&mesh, mat(), disc, false).unwrap();
        let f = assemble_load(&mesh, &sys, &|_| [2.0, -1.0], None);
        for (c, space) in sys.spaces.iter().enumerate() {
            let i = sys.map.interior(c, 0);
            let n = sys.map.n_scalar();
            assert!((f[i] - 2.0 * space.geom.area).abs() < 1e-13);
            assert!((f[i + n] + space.geom.area).abs() < 1e-13);
        }
        // Only interior constant moments carry load at k = 2.
        let total: f64 = f.iter().take(sys.map.n_scalar()).sum();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn k1_load_integrates_linears_exactly() {
        // ∫ f·v for constant f and v = interpolant of a linear field.
        for fam in MeshFamily::ALL {
            let mesh = generate_family(fam, 0, 1);
            for mode in [LoadProjection::Full, LoadProjection::Reduced] {
                let sys = assemble_global(&mesh, mat(), Discretization::new(1).with_load(mode), false).unwrap();
                let f = assemble_load(&mesh, &sys, &|_| [1.5, 0.5], None);
                let v = sys.interpolate(|p| (p.x + 0.2, 1.0 - p.y));
                let exact = 1.5 * (0.5 + 0.2) + 0.5 * 0.5;
                assert!((f.dot(&v) - exact).abs() < 1e-12, "{fam:?} {mode:?}");
            }
        }
    }

    #[test]
    fn higher_order_load_matches_exact_pairing() {
        // For polynomial f of degree ≤ k − 2, ∫ f·Π0_{k−2}v = ∫ f·v exactly.
        let mesh = generate_family(MeshFamily::RandomQuad, 0, 2);
        let k = 3;
        let disc = Discretization::new(k).with_load(LoadProjection::Reduced);
        let sys = assemble_global(&mesh, mat(), disc, false).unwrap();
        let f = assemble_load(&mesh, &sys, &|p| [p.x, 1.0 - p.y], None);
        // v polynomial of degree k, so the pairing is an exact integral.
        let v = sys.interpolate(|p| (p.x * p.y * p.y, p.x * p.x + p.y));
        let mut exact = 0.0;
        for s in &sys.spaces {
            exact += s.quad.integrate(|p| p.x * p.x * p.y * p.y + (1.0 - p.y) * (p.x * p.x + p.y));
        }
        assert!((f.dot(&v) - exact).abs() < 1e-12);
    }

    #[test]
    fn full_projection_is_exact_for_degree_k_forces() {
        let mesh = generate_family(MeshFamily::Hexagonal, 0, 0);
        let k = 2;
        for (mode, exact_expected) in [(LoadProjection::Full, true), (LoadProjection::Reduced, false)] {
            let sys = assemble_global(&mesh, mat(), Discretization::new(k).with_load(mode), false).unwrap();
            let f = assemble_load(&mesh, &sys, &|p| [p.x * p.y, p.y * p.y], None);
            let v = sys.interpolate(|p| (p.x * p.x, p.x + p.y));
            let mut exact = 0.0;
            for s in &sys.spaces {
                exact += s.quad.integrate(|p| p.x.powi(3) * p.y + p.y * p.y * (p.x + p.y));
            }
            assert_eq!((f.dot(&v) - exact).abs() < 1e-12, exact_expected, "{mode:?}");
        }
    }

    #[test]
    fn neumann_traction_on_one_side() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let mut tags = HashMap::new();
        tags.insert((1, 2), BoundaryTag::Neumann);
        let mesh = PolygonalMesh::new(pts, vec![vec![0, 1, 2, 3]], &tags).unwrap();
        for k in 1..=3 {
            let sys = assemble_global(&mesh, mat(), Discretization::new(k), false).unwrap();
            let g = |p: Point, n: Vector2<f64>| [n.x * p.y, 0.0];
            let f = assemble_load(&mesh, &sys, &|_| [0.0, 0.0], Some(&g));
            // ∫_{x=1} y·v_x dy with v_x = y² + 1 (exact for k ≥ 2).
            let v = sys.interpolate(|p| (p.y * p.y + 1.0, p.x));
            let exact = if k >= 2 { 0.25 + 0.5 } else { 1.0 / 3.0 + 0.5 };
            assert!((f.dot(&v) - exact).abs() < 1e-12, "k={k}");
        }
    }
}
