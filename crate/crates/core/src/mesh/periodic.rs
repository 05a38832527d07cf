use std::collections::HashMap;
use std::str::FromStr;

use super::generate::{brick_grid, octagon_grid};
use super::{MeshError, Point, PolygonalMesh};

/// Tilings of the square periodic reference cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReferenceGrid {
    /// One square.
    Quad,
    /// Two triangles split by the (h,0)-(0,h) diagonal.
    Tria,
    /// Brick-wall composite of hexagons, pentagons and quadrilaterals.
    C1,
    /// One square and four pentagons.
    C2,
    /// Four octagons.
    C3,
    /// One hexagon and four triangles.
    C4,
}

impl ReferenceGrid {
    pub const ALL: [ReferenceGrid; 6] = [
        ReferenceGrid::Quad,
        ReferenceGrid::Tria,
        ReferenceGrid::C1,
        ReferenceGrid::C2,
        ReferenceGrid::C3,
        ReferenceGrid::C4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReferenceGrid::Quad => "quad",
            ReferenceGrid::Tria => "tria",
            ReferenceGrid::C1 => "c1",
            ReferenceGrid::C2 => "c2",
            ReferenceGrid::C3 => "c3",
            ReferenceGrid::C4 => "c4",
        }
    }
}

impl FromStr for ReferenceGrid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "quad" => Ok(ReferenceGrid::Quad),
            "tria" | "tri" | "triangle" => Ok(ReferenceGrid::Tria),
            "c1" => Ok(ReferenceGrid::C1),
            "c2" => Ok(ReferenceGrid::C2),
            "c3" => Ok(ReferenceGrid::C3),
            "c4" => Ok(ReferenceGrid::C4),
            other => Err(format!("unknown reference grid '{other}'")),
        }
    }
}

/// Slave-to-master identification on a periodic cell of side `period`.
/// A slave entity sits at its master's position plus `offset · period`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPairing {
    pub period: f64,
    pub vertex_master: Vec<Option<(usize, [i32; 2])>>,
    pub edge_master: Vec<Option<(usize, [i32; 2])>>,
}

impl PeriodicPairing {
    pub fn num_slave_vertices(&self) -> usize {
        self.vertex_master.iter().filter(|m| m.is_some()).count()
    }

    pub fn num_slave_edges(&self) -> usize {
        self.edge_master.iter().filter(|m| m.is_some()).count()
    }

    /// Master index and translation offset of vertex `v` (itself if it is a master).
    pub fn vertex_representative(&self, v: usize) -> (usize, [i32; 2]) {
        self.vertex_master[v].unwrap_or((v, [0, 0]))
    }

    pub fn edge_representative(&self, e: usize) -> (usize, [i32; 2]) {
        self.edge_master[e].unwrap_or((e, [0, 0]))
    }
}

fn unit_cell(grid: ReferenceGrid) -> (Vec<Point>, Vec<Vec<usize>>) {
    let p = Point::new;
    match grid {
        ReferenceGrid::Quad => (
            vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)],
            vec![vec![0, 1, 2, 3]],
        ),
        ReferenceGrid::Tria => (
            vec![p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)],
            vec![vec![0, 1, 3], vec![1, 2, 3]],
        ),
        ReferenceGrid::C1 => brick_grid(2, &[1, 0, 1], 1.0 / 18.0, false),
        ReferenceGrid::C2 => (
            vec![
                p(0.0, 0.0),
                p(1.0, 0.0),
                p(1.0, 1.0),
                p(0.0, 1.0),
                p(0.5, 0.0),
                p(1.0, 0.5),
                p(0.5, 1.0),
                p(0.0, 0.5),
                p(0.35, 0.25),
                p(0.75, 0.35),
                p(0.65, 0.75),
                p(0.25, 0.65),
            ],
            vec![
                vec![8, 9, 10, 11],
                vec![4, 1, 5, 9, 8],
                vec![5, 2, 6, 10, 9],
                vec![6, 3, 7, 11, 10],
                vec![7, 0, 4, 8, 11],
            ],
        ),
        ReferenceGrid::C3 => octagon_grid(2, |_, _| 0.05, |_, _| 0.05),
        ReferenceGrid::C4 => (
            vec![
                p(0.0, 0.0),
                p(1.0, 0.0),
                p(1.0, 1.0),
                p(0.0, 1.0),
                p(0.5, 0.0),
                p(1.0, 0.25),
                p(1.0, 0.75),
                p(0.5, 1.0),
                p(0.0, 0.75),
                p(0.0, 0.25),
            ],
            vec![
                vec![4, 5, 6, 7, 8, 9],
                vec![4, 1, 5],
                vec![6, 2, 7],
                vec![7, 3, 8],
                vec![9, 0, 4],
            ],
        ),
    }
}

/// Builds the periodic reference cell `[0, h]^2` tiled by `grid`, with the
/// slave (right/top) boundary entities paired to their masters.
pub fn reference_periodic_cell(grid: ReferenceGrid, h: f64) -> PolygonalMesh {
    assert!(h > 0.0, "cell size must be positive");
    let (unit, cells) = unit_cell(grid);
    let vertices: Vec<Point> = unit.iter().map(|q| Point::new(q.x * h, q.y * h)).collect();
    let mesh = PolygonalMesh::new(vertices, cells, &HashMap::new())
        .expect("reference cells are valid meshes");
    let pairing = pair_by_translation(&mesh, h).expect("reference cells are periodic");
    mesh.with_periodic(pairing)
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

/// Derives the pairing of a mesh of `[0, h]^2` from its geometry.
pub(crate) fn pair_by_translation(
    mesh: &PolygonalMesh,
    h: f64,
) -> Result<PeriodicPairing, MeshError> {
    let tol = 1e-9 * h;
    let verts = mesh.vertices();
    let lookup = |q: Point| -> Option<usize> { verts.iter().position(|v| (v - q).norm() < tol) };

    let nv = verts.len();
    let mut parent: Vec<usize> = (0..nv).collect();
    for (v, p) in verts.iter().enumerate() {
        let mut partners = Vec::new();
        if (p.x - h).abs() < tol {
            partners.push(Point::new(p.x - h, p.y));
        }
        if (p.y - h).abs() < tol {
            partners.push(Point::new(p.x, p.y - h));
        }
        for q in partners {
            let w = lookup(q).ok_or_else(|| {
                MeshError::Pairing(format!("vertex {v} at ({}, {}) has no partner", p.x, p.y))
            })?;
            let (a, b) = (find(&mut parent, v), find(&mut parent, w));
            if a != b {
                parent[a] = b;
            }
        }
    }
    // The master of a class is its lexicographically smallest member.
    let mut class_master: HashMap<usize, usize> = HashMap::new();
    for v in 0..nv {
        let r = find(&mut parent, v);
        let e = class_master.entry(r).or_insert(v);
        if (verts[v].x, verts[v].y) < (verts[*e].x, verts[*e].y) {
            *e = v;
        }
    }
    let offset_of = |d: nalgebra::Vector2<f64>| -> Result<[i32; 2], MeshError> {
        let o = [(d.x / h).round(), (d.y / h).round()];
        if (d.x - o[0] * h).abs() > tol || (d.y - o[1] * h).abs() > tol {
            return Err(MeshError::Pairing("translation is not a multiple of the period".into()));
        }
        Ok([o[0] as i32, o[1] as i32])
    };
    let mut vertex_master = vec![None; nv];
    for v in 0..nv {
        let m = class_master[&find(&mut parent, v)];
        if m != v {
            vertex_master[v] = Some((m, offset_of(verts[v] - verts[m])?));
        }
    }

    let mut edge_by_pair: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, e) in mesh.edges().iter().enumerate() {
        let [a, b] = e.vertices;
        edge_by_pair.insert((a.min(b), a.max(b)), i);
    }
    let mut edge_master = vec![None; mesh.num_edges()];
    for (i, e) in mesh.edges().iter().enumerate() {
        if e.cells[1].is_some() {
            continue;
        }
        let [a, b] = e.vertices;
        let (pa, pb) = (verts[a], verts[b]);
        let shift = if (pa.x - h).abs() < tol && (pb.x - h).abs() < tol {
            nalgebra::Vector2::new(h, 0.0)
        } else if (pa.y - h).abs() < tol && (pb.y - h).abs() < tol {
            nalgebra::Vector2::new(0.0, h)
        } else {
            continue;
        };
        let (qa, qb) = (lookup(pa - shift), lookup(pb - shift));
        let m = match (qa, qb) {
            (Some(x), Some(y)) => edge_by_pair.get(&(x.min(y), x.max(y))).copied(),
            _ => None,
        }
        .ok_or_else(|| MeshError::Pairing(format!("boundary edge {i} has no partner")))?;
        edge_master[i] = Some((m, offset_of(shift)?));
    }
    Ok(PeriodicPairing {
        period: h,
        vertex_master,
        edge_master,
    })
}
