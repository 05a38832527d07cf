use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::GaussLegendre;

use super::PolyBasisError;
use crate::mesh::{ElementGeometry, Point};

/// Gauss–Legendre nodes and weights on [-1, 1], cached per point count.
pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let n = n.max(1);
            let rule = GaussLegendre::new(n.try_into().expect("n >= 1"));
            let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(pairs.into_iter().unzip())
        })
        .clone()
}

/// Gauss–Legendre rule on [-1/2, 1/2] with weights summing to 1.
pub fn unit_interval_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let gl = gauss_legendre(n);
    (
        gl.0.iter().map(|x| 0.5 * x).collect(),
        gl.1.iter().map(|w| 0.5 * w).collect(),
    )
}

/// Points and weights for integration over a polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(*p))
            .sum()
    }
}

/// Exact-to-degree `exactness` rule for a triangle, from a collapsed tensor
/// Gauss–Legendre product.
pub fn triangle_quadrature(a: Point, b: Point, c: Point, exactness: usize) -> QuadratureRule {
    let n = (exactness + 3) / 2;
    let gl = gauss_legendre(n);
    let area2 = ((b - a).x * (c - a).y - (b - a).y * (c - a).x).abs();
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (xu, wu) in gl.0.iter().zip(&gl.1) {
        let u = 0.5 * (xu + 1.0);
        for (xv, wv) in gl.0.iter().zip(&gl.1) {
            let v = 0.5 * (xv + 1.0);
            let p = a + (b - a) * u * (1.0 - v) + (c - a) * u * v;
            points.push(p);
            weights.push(0.25 * wu * wv * u * area2);
        }
    }
    QuadratureRule {
        points,
        weights,
        exactness,
    }
}

/// Fan triangulation from the centroid with a degree-`exactness` rule on each
/// triangle. Requires star-shapedness with respect to the centroid.
pub fn polygon_quadrature(
    geom: &ElementGeometry,
    exactness: usize,
) -> Result<QuadratureRule, PolyBasisError> {
    if !geom.is_star_shaped_wrt_centroid() {
        return Err(PolyBasisError::NotStarShaped { cell: geom.cell });
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for e in &geom.edges {
        let t = triangle_quadrature(geom.centroid, e.start, e.end, exactness);
        points.extend(t.points);
        weights.extend(t.weights);
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness,
    })
}
