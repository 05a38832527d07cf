use nalgebra::DVector;
use rayon::prelude::*;

use super::local::{local_matrices, LocalMatrices};
use super::{AssemblyError, Discretization, Material};
use crate::linalg::CsrMatrix;
use crate::mesh::{BoundaryTag, Point, PolygonalMesh};
use crate::polybasis::dim;
use crate::projectors::{compute_projectors, ElementProjectors, ElementSpace};

/// Global scalar numbering: vertices, then k − 1 moments per edge, then
/// the interior moments of each cell. The y component is offset by
/// `n_scalar`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    pub k: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub n_cells: usize,
}

impl DofMap {
    pub fn new(mesh: &PolygonalMesh, k: usize) -> Self {
        Self {
            k,
            n_vertices: mesh.num_vertices(),
            n_edges: mesh.num_edges(),
            n_cells: mesh.num_cells(),
        }
    }

    pub fn per_edge(&self) -> usize {
        self.k - 1
    }

    pub fn per_cell(&self) -> usize {
        dim(self.k as i64 - 2)
    }

    pub fn n_scalar(&self) -> usize {
        self.n_vertices + self.n_edges * self.per_edge() + self.n_cells * self.per_cell()
    }

    pub fn len(&self) -> usize {
        2 * self.n_scalar()
    }

    pub fn is_empty(&self) -> bool {
        self.n_scalar() == 0
    }

    pub fn vertex(&self, v: usize) -> usize {
        v
    }

    pub fn edge(&self, e: usize, j: usize) -> usize {
        self.n_vertices + e * self.per_edge() + j
    }

    pub fn interior(&self, c: usize, g: usize) -> usize {
        self.n_vertices + self.n_edges * self.per_edge() + c * self.per_cell() + g
    }

    /// Scalar global index of every local scalar DOF of `cell`.
    pub fn cell_scalar_dofs(&self, mesh: &PolygonalMesh, cell: usize) -> Vec<usize> {
        let verts = &mesh.cells()[cell];
        let edges = mesh.cell_edges(cell);
        let mut out: Vec<usize> = verts.iter().map(|&v| self.vertex(v)).collect();
        for &e in edges {
            out.extend((0..self.per_edge()).map(|j| self.edge(e, j)));
        }
        out.extend((0..self.per_cell()).map(|g| self.interior(cell, g)));
        out
    }

    /// Vector global indices in local [x; y] order.
    pub fn cell_dofs(&self, mesh: &PolygonalMesh, cell: usize) -> Vec<usize> {
        let s = self.cell_scalar_dofs(mesh, cell);
        let n = self.n_scalar();
        s.iter().copied().chain(s.iter().map(|&i| i + n)).collect()
    }
}

/// Map between all vector DOFs and the free (unconstrained) ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraints {
    free_of: Vec<Option<usize>>,
    free: Vec<usize>,
}

impl Constraints {
    pub fn none(n: usize) -> Self {
        Self {
            free_of: (0..n).map(Some).collect(),
            free: (0..n).collect(),
        }
    }

    /// Homogeneous Dirichlet data on every edge tagged Dirichlet.
    pub fn dirichlet(mesh: &PolygonalMesh, map: &DofMap) -> Result<Self, AssemblyError> {
        if !mesh.has_tag(BoundaryTag::Dirichlet) {
            return Err(AssemblyError::NoDirichlet);
        }
        let ns = map.n_scalar();
        let mut fixed = vec![false; ns];
        for (e, edge) in mesh.edges().iter().enumerate() {
            if edge.tag == BoundaryTag::Dirichlet {
                fixed[map.vertex(edge.vertices[0])] = true;
                fixed[map.vertex(edge.vertices[1])] = true;
                for j in 0..map.per_edge() {
                    fixed[map.edge(e, j)] = true;
                }
            }
        }
        let mut free_of = vec![None; 2 * ns];
        let mut free = Vec::new();
        for i in 0..2 * ns {
            if !fixed[i % ns] {
                free_of[i] = Some(free.len());
                free.push(i);
            }
        }
        Ok(Self { free_of, free })
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn num_total(&self) -> usize {
        self.free_of.len()
    }

    pub fn free_index(&self, global: usize) -> Option<usize> {
        self.free_of[global]
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn restrict(&self, full: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| full[i]))
    }

    /// Zero extension of a free vector.
    pub fn extend(&self, free: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_total());
        for (f, &g) in self.free.iter().enumerate() {
            out[g] = free[f];
        }
        out
    }
}

/// Assembled mass and stiffness on the free DOFs, with the per-element data
/// kept for loads and error norms.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub material: Material,
    pub disc: Discretization,
    pub map: DofMap,
    pub constraints: Constraints,
    pub spaces: Vec<ElementSpace>,
    pub projectors: Vec<ElementProjectors>,
    pub cell_dofs: Vec<Vec<usize>>,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl GlobalSystem {
    pub fn num_free(&self) -> usize {
        self.constraints.num_free()
    }

    /// Free DOF vector interpolating a vector field.
    pub fn interpolate(&self, f: impl Fn(Point) -> (f64, f64) + Sync) -> DVector<f64> {
        let ns = self.map.n_scalar();
        let mut full = DVector::zeros(2 * ns);
        for (space, dofs) in self.spaces.iter().zip(&self.cell_dofs) {
            let local = space.dof_matrix(2, |p| {
                let (a, b) = f(p);
                DVector::from_vec(vec![a, b])
            });
            let n = space.ndofs();
            for i in 0..n {
                full[dofs[i]] = local[(i, 0)];
                full[dofs[i + n]] = local[(i, 1)];
            }
        }
        self.constraints.restrict(&full)
    }

    /// max over elements of λ_max(K_e, M_e), an upper bound for λ_max(K, M).
    pub fn element_eigenvalue_bound(&self) -> f64 {
        self.spaces
            .par_iter()
            .zip(&self.projectors)
            .map(|(space, proj)| {
                let lm = local_matrices(space, proj, &self.material, self.disc.stabilization);
                let l = lm.m.cholesky().expect("local mass is SPD").unpack();
                let li = l.try_inverse().expect("Cholesky factor is invertible");
                let c = &li * &lm.k * li.transpose();
                let c = (&c + c.transpose()) * 0.5;
                c.symmetric_eigenvalues().max()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Local vector DOFs of `cell` from a free vector (constrained ones read as 0).
    pub fn gather(&self, cell: usize, free: &DVector<f64>) -> DVector<f64> {
        let dofs = &self.cell_dofs[cell];
        DVector::from_iterator(
            dofs.len(),
            dofs.iter()
                .map(|&g| self.constraints.free_index(g).map_or(0.0, |f| free[f])),
        )
    }
}

fn scatter(
    locals: &[LocalMatrices],
    cell_dofs: &[Vec<usize>],
    constraints: &Constraints,
    pick: impl Fn(&LocalMatrices) -> &nalgebra::DMatrix<f64>,
) -> CsrMatrix {
    let mut triplets = Vec::new();
    for (lm, dofs) in locals.iter().zip(cell_dofs) {
        let a = pick(lm);
        for (i, &gi) in dofs.iter().enumerate() {
            let Some(fi) = constraints.free_index(gi) else { continue };
            for (j, &gj) in dofs.iter().enumerate() {
                if let Some(fj) = constraints.free_index(gj) {
                    triplets.push((fi, fj, a[(i, j)]));
                }
            }
        }
    }
    let n = constraints.num_free();
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Builds element data and the global mass and stiffness matrices.
/// Element order is fixed, so the result does not depend on thread count.
pub fn assemble_global(
    mesh: &PolygonalMesh,
    material: Material,
    disc: Discretization,
    eliminate_dirichlet: bool,
) -> Result<GlobalSystem, AssemblyError> {
    let map = DofMap::new(mesh, disc.k);
    let constraints = if eliminate_dirichlet {
        Constraints::dirichlet(mesh, &map)?
    } else {
        Constraints::none(map.len())
    };
    let elements: Vec<(ElementSpace, ElementProjectors, LocalMatrices)> = (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| {
            let wrap = |source| AssemblyError::Element { cell: c, source };
            let space = ElementSpace::new(mesh.geometry(c), disc.k, disc.basis).map_err(wrap)?;
            let proj = compute_projectors(&space).map_err(wrap)?;
            let lm = local_matrices(&space, &proj, &material, disc.stabilization);
            Ok((space, proj, lm))
        })
        .collect::<Result<_, AssemblyError>>()?;
    let cell_dofs: Vec<Vec<usize>> = (0..mesh.num_cells()).map(|c| map.cell_dofs(mesh, c)).collect();
    let mut spaces = Vec::with_capacity(elements.len());
    let mut projectors = Vec::with_capacity(elements.len());
    let mut locals = Vec::with_capacity(elements.len());
    for (s, p, l) in elements {
        spaces.push(s);
        projectors.push(p);
        locals.push(l);
    }
    let mass = scatter(&locals, &cell_dofs, &constraints, |l| &l.m);
    let stiffness = scatter(&locals, &cell_dofs, &constraints, |l| &l.k);
    Ok(GlobalSystem {
        material,
        disc,
        map,
        constraints,
        spaces,
        projectors,
        cell_dofs,
        mass,
        stiffness,
    })
}
