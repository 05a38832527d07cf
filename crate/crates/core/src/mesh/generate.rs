use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point, PolygonalMesh};

/// Built-in mesh families on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeshFamily {
    /// Randomly perturbed n×n quadrilateral grid, n = 5·2^level.
    RandomQuad,
    /// Smoothly distorted honeycomb-like hexagons.
    Hexagonal,
    /// Indented squares: every cell is a nonconvex octagon.
    NonconvexOctagon,
}

impl MeshFamily {
    pub const ALL: [MeshFamily; 3] = [
        MeshFamily::RandomQuad,
        MeshFamily::Hexagonal,
        MeshFamily::NonconvexOctagon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeshFamily::RandomQuad => "random-quad",
            MeshFamily::Hexagonal => "hexagonal",
            MeshFamily::NonconvexOctagon => "nonconvex-octagon",
        }
    }
}

impl FromStr for MeshFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random-quad" | "randomquad" | "quad" | "mesh1" | "1" => Ok(MeshFamily::RandomQuad),
            "hexagonal" | "hex" | "mesh2" | "2" => Ok(MeshFamily::Hexagonal),
            "nonconvex-octagon" | "nonconvexoctagon" | "octagon" | "mesh3" | "3" => {
                Ok(MeshFamily::NonconvexOctagon)
            }
            other => Err(format!("unknown mesh family '{other}'")),
        }
    }
}

/// Generates a mesh of (0,1)^2. Deterministic in `(family, level, seed)`;
/// only `RandomQuad` uses the seed.
pub fn generate_family(family: MeshFamily, level: u32, seed: u64) -> PolygonalMesh {
    let mesh = match family {
        MeshFamily::RandomQuad => random_quad(5 << level, seed),
        MeshFamily::Hexagonal => hexagonal(4 << level),
        MeshFamily::NonconvexOctagon => nonconvex_octagon(5 << level),
    };
    mesh.expect("built-in generators produce valid meshes")
}

/// Uniform n×n grid of squares on the unit square, all boundary Dirichlet.
pub fn uniform_quad(n: usize) -> PolygonalMesh {
    assert!(n > 0, "grid needs at least one cell per side");
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let vertices = (0..=n)
        .flat_map(|j| (0..=n).map(move |i| Point::new(i as f64 / n as f64, j as f64 / n as f64)))
        .collect();
    let cells = (0..n)
        .flat_map(|j| (0..n).map(move |i| vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]))
        .collect();
    PolygonalMesh::new(vertices, cells, &HashMap::new()).expect("uniform grid is valid")
}

fn random_quad(n: usize, seed: u64) -> Result<PolygonalMesh, super::MeshError> {
    let h = 1.0 / n as f64;
    let amp = 0.2 * h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let mut x = i as f64 * h;
            let mut y = j as f64 * h;
            let bx = i == 0 || i == n;
            let by = j == 0 || j == n;
            // Always draw two numbers so the stream does not depend on position.
            let dx: f64 = rng.random_range(-amp..amp);
            let dy: f64 = rng.random_range(-amp..amp);
            if !bx {
                x += dx;
            }
            if !by {
                y += dy;
            }
            vertices.push(Point::new(x, y));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    PolygonalMesh::new(vertices, cells, &HashMap::new())
}

fn hexagonal(n: usize) -> Result<PolygonalMesh, super::MeshError> {
    let parities: Vec<usize> = (0..n).map(|j| j % 2).collect();
    let (vertices, cells) = brick_grid(n, &parities, 1.0 / (6.0 * n as f64), true);
    PolygonalMesh::new(vertices, cells, &HashMap::new())
}

/// Brick-wall pattern on the unit square with `n` full cells per even band.
/// Band `j` starts its cells at column `parities[j]` of a `2n`-column vertex
/// grid; interior vertex rows are shifted by `±eps` so full cells become
/// hexagons. `warp` applies a smooth interior distortion.
pub(super) fn brick_grid(
    n: usize,
    parities: &[usize],
    eps: f64,
    warp: bool,
) -> (Vec<Point>, Vec<Vec<usize>>) {
    let m = parities.len();
    let cols = 2 * n;
    let id = |i: usize, j: usize| j * (cols + 1) + i;
    let mut vertices = Vec::with_capacity((cols + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=cols {
            let x = i as f64 / cols as f64;
            let mut y = j as f64 / m as f64;
            if j > 0 && j < m {
                y += if (i + parities[j]) % 2 == 0 { eps } else { -eps };
            }
            if warp {
                let s = (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
                vertices.push(Point::new(x + 0.1 * s, y + 0.1 * s));
            } else {
                vertices.push(Point::new(x, y));
            }
        }
    }
    let mut cells = Vec::new();
    for (j, &par) in parities.iter().enumerate() {
        let mut spans = Vec::new();
        if par == 0 {
            for c in 0..n {
                spans.push((2 * c, 2 * c + 2));
            }
        } else {
            spans.push((0, 1));
            for c in 0..n - 1 {
                spans.push((2 * c + 1, 2 * c + 3));
            }
            spans.push((cols - 1, cols));
        }
        for (a, b) in spans {
            let mut cell: Vec<usize> = (a..=b).map(|i| id(i, j)).collect();
            cell.extend((a..=b).rev().map(|i| id(i, j + 1)));
            cells.push(cell);
        }
    }
    (vertices, cells)
}

fn nonconvex_octagon(n: usize) -> Result<PolygonalMesh, super::MeshError> {
    let d = 0.1 / n as f64;
    let (vertices, cells) = octagon_grid(
        n,
        |i, _| if i == 0 { -d } else { d },
        |_, j| if j == n - 1 { -d } else { d },
    );
    PolygonalMesh::new(vertices, cells, &HashMap::new())
}

/// n×n squares with a vertex at every edge midpoint. Interior horizontal
/// midpoints of edge `(i, j)-(i+1, j)` move by `hshift(i, j)` in y, interior
/// vertical midpoints of `(i, j)-(i, j+1)` by `vshift(i, j)` in x.
pub(super) fn octagon_grid(
    n: usize,
    hshift: impl Fn(usize, usize) -> f64,
    vshift: impl Fn(usize, usize) -> f64,
) -> (Vec<Point>, Vec<Vec<usize>>) {
    let h = 1.0 / n as f64;
    let mut vertices = Vec::new();
    let corner = |i: usize, j: usize| j * (n + 1) + i;
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Point::new(i as f64 * h, j as f64 * h));
        }
    }
    let hbase = vertices.len();
    for j in 0..=n {
        for i in 0..n {
            let mut y = j as f64 * h;
            if j > 0 && j < n {
                y += hshift(i, j);
            }
            vertices.push(Point::new((i as f64 + 0.5) * h, y));
        }
    }
    let hmid = |i: usize, j: usize| hbase + j * n + i;
    let vbase = vertices.len();
    for j in 0..n {
        for i in 0..=n {
            let mut x = i as f64 * h;
            if i > 0 && i < n {
                x += vshift(i, j);
            }
            vertices.push(Point::new(x, (j as f64 + 0.5) * h));
        }
    }
    let vmid = |i: usize, j: usize| vbase + j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![
                corner(i, j),
                hmid(i, j),
                corner(i + 1, j),
                vmid(i + 1, j),
                corner(i + 1, j + 1),
                hmid(i, j + 1),
                corner(i, j + 1),
                vmid(i, j),
            ]);
        }
    }
    (vertices, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{validate_regularity, BoundaryTag};

    fn total_area(m: &PolygonalMesh) -> f64 {
        (0..m.num_cells()).map(|c| m.geometry(c).area).sum()
    }

    #[test]
    fn random_quad_level0_is_regular() {
        let m = generate_family(MeshFamily::RandomQuad, 0, 42);
        assert_eq!(m.num_cells(), 25);
        assert!(m.cells().iter().all(|c| c.len() == 4));
        assert!(validate_regularity(&m, 0.1).passes());
    }

    #[test]
    fn octagons_are_all_nonconvex() {
        for level in 0..2 {
            let m = generate_family(MeshFamily::NonconvexOctagon, level, 0);
            assert!(m.cells().iter().all(|c| c.len() == 8));
            assert!((0..m.num_cells()).all(|c| !m.is_convex(c)));
            assert!(validate_regularity(&m, 0.1).star_shaped_ok);
        }
    }

    #[test]
    fn hexagonal_refinement_quadruples_cells() {
        let c0 = generate_family(MeshFamily::Hexagonal, 0, 0).num_cells() as f64;
        let c1 = generate_family(MeshFamily::Hexagonal, 1, 0).num_cells() as f64;
        let ratio = c1 / c0;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn families_tile_the_unit_square() {
        for fam in MeshFamily::ALL {
            for level in 0..3 {
                let m = generate_family(fam, level, 7);
                assert!((total_area(&m) - 1.0).abs() < 1e-12, "{fam:?} {level}");
                let euler =
                    m.num_vertices() as i64 - m.num_edges() as i64 + m.num_cells() as i64;
                assert_eq!(euler, 1);
                assert!(m
                    .edges()
                    .iter()
                    .filter(|e| e.cells[1].is_none())
                    .all(|e| e.tag == BoundaryTag::Dirichlet));
                let r = validate_regularity(&m, 0.05);
                assert!(r.star_shaped_ok, "{fam:?} {level}");
            }
        }
    }

    #[test]
    fn mesh_size_halves_with_level() {
        for fam in MeshFamily::ALL {
            let h0 = generate_family(fam, 1, 3).mesh_size();
            let h1 = generate_family(fam, 2, 3).mesh_size();
            let r = h0 / h1;
            assert!((1.6..=2.5).contains(&r), "{fam:?} ratio {r}");
        }
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        for fam in MeshFamily::ALL {
            let a = generate_family(fam, 1, 99);
            let b = generate_family(fam, 1, 99);
            let bits = |m: &PolygonalMesh| -> Vec<(u64, u64)> {
                m.vertices()
                    .iter()
                    .map(|p| (p.x.to_bits(), p.y.to_bits()))
                    .collect()
            };
            assert_eq!(bits(&a), bits(&b));
            assert_eq!(a.cells(), b.cells());
        }
        let a = generate_family(MeshFamily::RandomQuad, 0, 1);
        let b = generate_family(MeshFamily::RandomQuad, 0, 2);
        assert_ne!(a.vertices(), b.vertices());
    }
}
