//! Polygonal meshes: connectivity, per-element geometry, regularity checks,
//! built-in generators and the plain-text file format.

mod generate;
mod io;
mod periodic;

pub use generate::{generate_family, uniform_quad, MeshFamily};
pub use io::{format_mesh, parse_mesh, read_mesh, write_mesh, MeshParseError};
pub use periodic::{reference_periodic_cell, PeriodicPairing, ReferenceGrid};

use std::collections::HashMap;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

pub type Point = Point2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("cell {cell} has {count} vertices; at least 3 are required")]
    TooFewVertices { cell: usize, count: usize },
    #[error("cell {cell} references missing vertex {vertex}")]
    MissingVertex { cell: usize, vertex: usize },
    #[error("cell {cell} repeats vertex {vertex}")]
    RepeatedVertex { cell: usize, vertex: usize },
    #[error("cell {cell} has non-positive signed area {area:e} (vertex loops must be counterclockwise)")]
    NonPositiveArea { cell: usize, area: f64 },
    #[error("cell {cell} is self-intersecting (local edges {first} and {second} cross)")]
    SelfIntersecting {
        cell: usize,
        first: usize,
        second: usize,
    },
    #[error("edge ({a}, {b}) is shared by more than two cells")]
    NonManifoldEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) is traversed in the same direction by both adjacent cells")]
    InconsistentOrientation { a: usize, b: usize },
    #[error("boundary tag given for ({a}, {b}), which is not a boundary edge")]
    NotABoundaryEdge { a: usize, b: usize },
    #[error("cell {cell} is not star-shaped with respect to its centroid")]
    NotStarShaped { cell: usize },
    #[error("periodic pairing failed: {0}")]
    Pairing(String),
}

/// Boundary condition attached to an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interior,
    Dirichlet,
    Neumann,
    PeriodicMaster,
    PeriodicSlave,
}

impl BoundaryTag {
    pub fn is_boundary(self) -> bool {
        self != BoundaryTag::Interior
    }
}

/// A mesh edge. `vertices[0] -> vertices[1]` is the global orientation: the
/// lexicographically smaller endpoint (by x, then y) comes first, so the
/// orientation survives translations of the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// Unit normal of the global orientation (tangent rotated clockwise).
    pub normal: Vector2<f64>,
    pub length: f64,
    pub tag: BoundaryTag,
    /// Adjacent cells, the second one is `None` on the boundary.
    pub cells: [Option<usize>; 2],
}

/// Axis-aligned bounding box of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Point,
    pub max: Point,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

/// A conforming mesh of simple polygons. Immutable after construction.
#[derive(Debug, Clone)]
pub struct PolygonalMesh {
    vertices: Vec<Point>,
    cells: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    /// `cell_edges[c][i]` is the edge from local vertex `i` to `i + 1`.
    cell_edges: Vec<Vec<usize>>,
    bbox: BoundingBox,
    periodic: Option<PeriodicPairing>,
}

fn lexicographic_less(a: &Point, b: &Point) -> bool {
    (a.x, a.y) < (b.x, b.y)
}

fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let scale = (p2 - p1).norm().max((q2 - q1).norm());
    let eps = 1e-14 * scale * scale;
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
}

impl PolygonalMesh {
    /// Builds and validates a mesh. Boundary edges default to Dirichlet;
    /// `boundary_tags` overrides individual boundary edges, keyed by their
    /// (unordered) vertex pair.
    pub fn new(
        vertices: Vec<Point>,
        cells: Vec<Vec<usize>>,
        boundary_tags: &HashMap<(usize, usize), BoundaryTag>,
    ) -> Result<Self, MeshError> {
        for (c, cell) in cells.iter().enumerate() {
            if cell.len() < 3 {
                return Err(MeshError::TooFewVertices {
                    cell: c,
                    count: cell.len(),
                });
            }
            for (i, &v) in cell.iter().enumerate() {
                if v >= vertices.len() {
                    return Err(MeshError::MissingVertex { cell: c, vertex: v });
                }
                if cell[..i].contains(&v) {
                    return Err(MeshError::RepeatedVertex { cell: c, vertex: v });
                }
            }
            let pts: Vec<Point> = cell.iter().map(|&v| vertices[v]).collect();
            let area = signed_area(&pts);
            if area <= 0.0 {
                return Err(MeshError::NonPositiveArea { cell: c, area });
            }
            let n = pts.len();
            for i in 0..n {
                for j in (i + 2)..n {
                    if i == 0 && j == n - 1 {
                        continue;
                    }
                    if segments_cross(&pts[i], &pts[(i + 1) % n], &pts[j], &pts[(j + 1) % n]) {
                        return Err(MeshError::SelfIntersecting {
                            cell: c,
                            first: i,
                            second: j,
                        });
                    }
                }
            }
        }

        // Directed half-edge bookkeeping.
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut directed: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let n = cell.len();
            let mut local = Vec::with_capacity(n);
            for i in 0..n {
                let a = cell[i];
                let b = cell[(i + 1) % n];
                let key = (a.min(b), a.max(b));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    let (s, e) = if lexicographic_less(&vertices[a], &vertices[b]) {
                        (a, b)
                    } else {
                        (b, a)
                    };
                    let t = vertices[e] - vertices[s];
                    let length = t.norm();
                    edges.push(Edge {
                        vertices: [s, e],
                        normal: Vector2::new(t.y, -t.x) / length,
                        length,
                        tag: BoundaryTag::Interior,
                        cells: [None, None],
                    });
                    directed.push(Vec::new());
                    edges.len() - 1
                });
                let slot = &mut edges[id].cells;
                if slot[0].is_none() {
                    slot[0] = Some(c);
                } else if slot[1].is_none() {
                    slot[1] = Some(c);
                } else {
                    return Err(MeshError::NonManifoldEdge { a: key.0, b: key.1 });
                }
                directed[id].push((a, b));
                local.push(id);
            }
            cell_edges.push(local);
        }
        for (id, dirs) in directed.iter().enumerate() {
            if dirs.len() == 2 && dirs[0] == dirs[1] {
                let [a, b] = edges[id].vertices;
                return Err(MeshError::InconsistentOrientation { a, b });
            }
        }
        for e in edges.iter_mut() {
            if e.cells[1].is_none() {
                e.tag = BoundaryTag::Dirichlet;
            }
        }
        for (&(a, b), &tag) in boundary_tags {
            let key = (a.min(b), a.max(b));
            match edge_index.get(&key) {
                Some(&id) if edges[id].cells[1].is_none() => edges[id].tag = tag,
                _ => return Err(MeshError::NotABoundaryEdge { a, b }),
            }
        }

        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &vertices {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }

        Ok(Self {
            vertices,
            cells,
            edges,
            cell_edges,
            bbox: BoundingBox { min, max },
            periodic: None,
        })
    }

    pub(crate) fn with_periodic(mut self, pairing: PeriodicPairing) -> Self {
        for (e, m) in pairing.edge_master.iter().enumerate() {
            if self.edges[e].tag.is_boundary() {
                self.edges[e].tag = if m.is_some() {
                    BoundaryTag::PeriodicSlave
                } else {
                    BoundaryTag::PeriodicMaster
                };
            }
        }
        self.periodic = Some(pairing);
        self
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn cell_edges(&self, cell: usize) -> &[usize] {
        &self.cell_edges[cell]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        self.bbox
    }

    pub fn periodic_pairing(&self) -> Option<&PeriodicPairing> {
        self.periodic.as_ref()
    }

    pub fn cell_points(&self, cell: usize) -> Vec<Point> {
        self.cells[cell].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Maximum cell diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_cells())
            .map(|c| self.geometry(c).diameter)
            .fold(0.0, f64::max)
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.edges.iter().any(|e| e.tag == tag)
    }

    /// Geometric data of one cell.
    pub fn geometry(&self, cell: usize) -> ElementGeometry {
        let n = self.cells[cell].len();
        let pts = self.cell_points(cell);
        let area = signed_area(&pts);
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let p = pts[i];
            let q = pts[(i + 1) % n];
            let w = p.x * q.y - q.x * p.y;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        let centroid = Point::new(cx / (6.0 * area), cy / (6.0 * area));
        let mut diameter: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                diameter = diameter.max((pts[i] - pts[j]).norm());
            }
        }
        let edges = (0..n)
            .map(|i| {
                let a = pts[i];
                let b = pts[(i + 1) % n];
                let t = b - a;
                let length = t.norm();
                let id = self.cell_edges[cell][i];
                let [gs, _] = self.edges[id].vertices;
                LocalEdge {
                    global: id,
                    start: a,
                    end: b,
                    midpoint: Point::from((a.coords + b.coords) * 0.5),
                    length,
                    outward_normal: Vector2::new(t.y, -t.x) / length,
                    reversed: gs != self.cells[cell][i],
                }
            })
            .collect();
        ElementGeometry {
            cell,
            vertices: pts,
            centroid,
            diameter,
            area,
            edges,
        }
    }

    /// Whether cell `cell` is convex (all turns left, collinear allowed).
    pub fn is_convex(&self, cell: usize) -> bool {
        let pts = self.cell_points(cell);
        let n = pts.len();
        (0..n).all(|i| orient(&pts[i], &pts[(i + 1) % n], &pts[(i + 2) % n]) >= -1e-14)
    }
}

/// One edge of a cell, in the cell's counterclockwise traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEdge {
    pub global: usize,
    pub start: Point,
    pub end: Point,
    pub midpoint: Point,
    pub length: f64,
    pub outward_normal: Vector2<f64>,
    /// True when the traversal direction is opposite to the global orientation.
    pub reversed: bool,
}

impl LocalEdge {
    /// Start and end point in the global orientation.
    pub fn oriented_endpoints(&self) -> (Point, Point) {
        if self.reversed {
            (self.end, self.start)
        } else {
            (self.start, self.end)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    pub cell: usize,
    pub vertices: Vec<Point>,
    pub centroid: Point,
    pub diameter: f64,
    pub area: f64,
    pub edges: Vec<LocalEdge>,
}

impl ElementGeometry {
    /// Distance from the centroid to the closest edge line, negative when the
    /// centroid lies outside some edge's inner half-plane.
    pub fn centroid_inradius(&self) -> f64 {
        self.edges
            .iter()
            .map(|e| (e.midpoint - self.centroid).dot(&e.outward_normal))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_star_shaped_wrt_centroid(&self) -> bool {
        self.centroid_inradius() > 1e-12 * self.diameter
    }
}

/// Result of [`validate_regularity`].
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub star_shaped_ok: bool,
    /// min over cells of (centroid disk radius / h_P).
    pub inradius_ratio_min: f64,
    /// min over cells and their edges of h_E / h_P.
    pub edge_ratio_min: f64,
    /// Cell achieving the smaller of the two ratios.
    pub smallest_ratio_cell: usize,
    /// Cells with h_E < rho_star * h_P or a centroid disk radius below rho_star * h_P.
    pub violations: Vec<usize>,
}

impl RegularityReport {
    pub fn passes(&self) -> bool {
        self.star_shaped_ok && self.violations.is_empty()
    }
}

/// Checks the mesh against the star-shapedness and edge-length regularity
/// conditions with constant `rho_star`. Star-shapedness is tested with
/// respect to a disk centered at each cell centroid.
pub fn validate_regularity(mesh: &PolygonalMesh, rho_star: f64) -> RegularityReport {
    let mut star_ok = true;
    let mut inr_min = f64::INFINITY;
    let mut edge_min = f64::INFINITY;
    let mut worst = (f64::INFINITY, 0);
    let mut violations = Vec::new();
    for c in 0..mesh.num_cells() {
        let g = mesh.geometry(c);
        let inr = g.centroid_inradius() / g.diameter;
        let er = g
            .edges
            .iter()
            .map(|e| e.length / g.diameter)
            .fold(f64::INFINITY, f64::min);
        if !g.is_star_shaped_wrt_centroid() {
            star_ok = false;
        }
        inr_min = inr_min.min(inr);
        edge_min = edge_min.min(er);
        let cell_min = inr.min(er);
        if cell_min < worst.0 {
            worst = (cell_min, c);
        }
        if er < rho_star || inr < rho_star {
            violations.push(c);
        }
    }
    RegularityReport {
        star_shaped_ok: star_ok,
        inradius_ratio_min: inr_min,
        edge_ratio_min: edge_min,
        smallest_ratio_cell: worst.1,
        violations,
    }
}
