use nalgebra::DMatrix;

use super::{PolyBasis, QuadratureRule};

/// Element Gram matrices of a polynomial basis.
///
/// `q[(a, b)] = ∫ b_b b_a`, and for derivative directions `s, t`,
/// `q_st[(a, b)] = ∫ ∂_s b_b ∂_t b_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialGrams {
    pub q: DMatrix<f64>,
    pub qxx: DMatrix<f64>,
    pub qxy: DMatrix<f64>,
    pub qyx: DMatrix<f64>,
    pub qyy: DMatrix<f64>,
}

impl MonomialGrams {
    /// Stiffness Gram ∫ ∇b_b · ∇b_a.
    pub fn g(&self) -> DMatrix<f64> {
        &self.qxx + &self.qyy
    }
}

pub fn monomial_grams(quad: &QuadratureRule, basis: &PolyBasis) -> MonomialGrams {
    let n = basis.dim();
    let mut q = DMatrix::zeros(n, n);
    let mut qxx = DMatrix::zeros(n, n);
    let mut qxy = DMatrix::zeros(n, n);
    let mut qyy = DMatrix::zeros(n, n);
    for (p, w) in quad.points.iter().zip(&quad.weights) {
        let (v, gx, gy) = basis.eval_with_grad(*p);
        q.ger(*w, &v, &v, 1.0);
        qxx.ger(*w, &gx, &gx, 1.0);
        qyy.ger(*w, &gy, &gy, 1.0);
        // Row index a carries ∂y, column index b carries ∂x.
        qxy.ger(*w, &gy, &gx, 1.0);
    }
    let qyx = qxy.transpose();
    MonomialGrams {
        q,
        qxx,
        qxy,
        qyx,
        qyy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ElementGeometry, Point, PolygonalMesh};
    use crate::polybasis::{polygon_quadrature, MonomialBasis};
    use std::collections::HashMap;

    fn geom(pts: Vec<Point>) -> ElementGeometry {
        let n = pts.len();
        PolygonalMesh::new(pts, vec![(0..n).collect()], &HashMap::new())
            .unwrap()
            .geometry(0)
    }

    fn square() -> ElementGeometry {
        geom(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
    }

    #[test]
    fn unit_square_linear_gram() {
        let g = square();
        let q = polygon_quadrature(&g, 4).unwrap();
        let grams = monomial_grams(&q, &PolyBasis::monomial(MonomialBasis::for_element(&g, 1)));
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            1.0,
            1.0 / 24.0,
            1.0 / 24.0,
        ]));
        assert!((grams.q - expect).amax() < 1e-15);
    }

    #[test]
    fn derivative_gram_structure() {
        let g = geom(vec![
            Point::new(0.0, 0.0),
            Point::new(1.1, 0.1),
            Point::new(1.3, 0.9),
            Point::new(0.5, 1.4),
            Point::new(-0.2, 0.7),
        ]);
        let q = polygon_quadrature(&g, 8).unwrap();
        let grams = monomial_grams(&q, &PolyBasis::monomial(MonomialBasis::for_element(&g, 3)));
        assert!((grams.qyx.transpose() - &grams.qxy).amax() < 1e-14);
        assert!(grams.qxx.row(0).amax() == 0.0 && grams.qxx.column(0).amax() == 0.0);
        assert!((grams.qxx.transpose() - &grams.qxx).amax() < 1e-14);
        assert!(grams.q.clone().cholesky().is_some());
        let ev = grams.qyy.clone().symmetric_eigenvalues();
        assert!(ev.min() > -1e-13);
        // Q^{xy}_{ab} for m_a = η, m_b = ξ equals |P| / h^2.
        let h2 = g.diameter * g.diameter;
        assert!((grams.qxy[(2, 1)] - g.area / h2).abs() < 1e-13);
    }

    #[test]
    fn cyclic_relabeling_invariance() {
        let pts = vec![
            Point::new(0.0, 0.0),
            Point::new(1.1, 0.1),
            Point::new(1.3, 0.9),
            Point::new(0.5, 1.4),
            Point::new(-0.2, 0.7),
        ];
        let mut rotated = pts.clone();
        rotated.rotate_left(2);
        let a = geom(pts);
        let b = geom(rotated);
        let ga = monomial_grams(
            &polygon_quadrature(&a, 8).unwrap(),
            &PolyBasis::monomial(MonomialBasis::for_element(&a, 3)),
        );
        let gb = monomial_grams(
            &polygon_quadrature(&b, 8).unwrap(),
            &PolyBasis::monomial(MonomialBasis::for_element(&b, 3)),
        );
        assert!((ga.q - gb.q).amax() < 1e-13);
        assert!((ga.qxy - gb.qxy).amax() < 1e-13);
    }
}
