//! Plane-wave (von Neumann) analysis of the semi- and fully-discrete
//! schemes on periodic reference cells.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{assemble_global, AssemblyError, Discretization, Material};
use crate::linalg::CsrMatrix;
use crate::mesh::{reference_periodic_cell, PolygonalMesh, ReferenceGrid};
use crate::polybasis::BasisKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("invalid parameter {name}: {message}")]
    Invalid { name: &'static str, message: String },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("reduced mass matrix is not Hermitian positive definite")]
    NotDefinite,
    #[error("eigenvalue solver failed")]
    Eigen,
    #[error("Δt = {dt:e} is unstable: arcsin argument {argument} exceeds 1")]
    UnstableStep { dt: f64, argument: f64 },
    #[error("{entity} on the cell boundary has no periodic partner")]
    Unpaired { entity: String },
}

/// How the P-wave wavevector relates to the sampling ratio δ, which is
/// always referenced to the shear (shortest) wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PWaveSampling {
    /// Both waves share the frequency of the sampled S wave, so the P
    /// wavevector is |𝐤|/r.
    #[default]
    SharedFrequency,
    /// Both waves share the wavevector 𝐤.
    SharedWavevector,
}

/// What the sampling ratio δ counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaConvention {
    /// δ = h/(kL): δ⁻¹ nodes per wavelength, so |𝐤| = 2πkδ/h.
    #[default]
    PerNode,
    /// δ = h/L: δ⁻¹ cells per wavelength, so |𝐤| = 2πδ/h.
    PerCell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionConfig {
    pub grid: ReferenceGrid,
    pub k: usize,
    pub delta: f64,
    pub theta: f64,
    pub r: f64,
    /// Relative Courant number; `None` means exact time integration.
    pub q_rel: Option<f64>,
    pub c_p: f64,
    pub rho: f64,
    pub basis: BasisKind,
    pub sampling: PWaveSampling,
    pub delta_convention: DeltaConvention,
}

impl DispersionConfig {
    pub fn new(grid: ReferenceGrid, k: usize, delta: f64, theta: f64, r: f64) -> Self {
        Self {
            grid,
            k,
            delta,
            theta,
            r,
            q_rel: None,
            c_p: 2f64.sqrt(),
            rho: 1.0,
            basis: BasisKind::Orthonormal,
            sampling: PWaveSampling::default(),
            delta_convention: DeltaConvention::default(),
        }
    }

    pub fn validate(&self) -> Result<(), DispersionError> {
        let bad = |name, message: String| Err(DispersionError::Invalid { name, message });
        if self.k == 0 {
            return bad("k", "the polynomial degree must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", format!("δ > 0 is required, got {}", self.delta));
        }
        if !(self.r > 2f64.sqrt() && self.r.is_finite()) {
            return bad("r", format!("r > √2 is required (λ ≥ 0), got {}", self.r));
        }
        if !(0.0..2.0 * PI).contains(&self.theta) {
            return bad("theta", format!("θ ∈ [0, 2π) is required, got {}", self.theta));
        }
        if let Some(q) = self.q_rel {
            if !(q > 0.0 && q <= 1.0) {
                return bad("q_rel", format!("q_rel ∈ (0, 1] is required, got {q}"));
            }
        }
        if !(self.c_p > 0.0 && self.rho > 0.0) {
            return bad("c_p", "wave speed and density must be positive".into());
        }
        Ok(())
    }

    pub fn material(&self) -> Result<Material, DispersionError> {
        let mu = self.rho * (self.c_p / self.r).powi(2);
        Ok(Material::new(self.rho, self.rho * self.c_p * self.c_p - 2.0 * mu, mu)?)
    }

    pub fn c_s(&self) -> f64 {
        self.c_p / self.r
    }

    /// Wavevector of the sampled shear wave on a cell of size 1.
    pub fn wavevector(&self) -> Vector2<f64> {
        let per = match self.delta_convention {
            DeltaConvention::PerNode => self.k as f64,
            DeltaConvention::PerCell => 1.0,
        };
        let kmag = 2.0 * PI * per * self.delta;
        Vector2::new(self.theta.cos(), self.theta.sin()) * kmag
    }
}

/// Full periodic-cell matrices plus the slave-to-master map.
#[derive(Debug, Clone)]
pub struct BlochSystem {
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    /// Master index and lattice translation of every full vector DOF.
    pub master_of: Vec<(usize, Vector2<f64>)>,
    pub n_master: usize,
    pub h: f64,
}

/// Pᴴ M P and Pᴴ K P at one wavevector.
#[derive(Debug, Clone)]
pub struct BlochReduction {
    pub phase: Vec<Complex64>,
    pub mass: DMatrix<Complex64>,
    pub stiffness: DMatrix<Complex64>,
}

impl BlochReduction {
    /// Dense P (full DOFs × master DOFs).
    pub fn projection(&self, sys: &BlochSystem) -> DMatrix<Complex64> {
        let mut p = DMatrix::zeros(sys.master_of.len(), sys.n_master);
        for (i, &(m, _)) in sys.master_of.iter().enumerate() {
            p[(i, m)] = self.phase[i];
        }
        p
    }
}

fn scalar_masters(mesh: &PolygonalMesh, k: usize) -> Result<(Vec<(usize, Vector2<f64>)>, usize), DispersionError> {
    let map = crate::assembly::DofMap::new(mesh, k);
    let pairing = mesh
        .periodic_pairing()
        .ok_or_else(|| DispersionError::Unpaired {
            entity: "the mesh (no pairing)".into(),
        })?;
    let h = pairing.period;
    let ns = map.n_scalar();
    let mut rep: Vec<(usize, [i32; 2])> = (0..ns).map(|g| (g, [0, 0])).collect();
    for v in 0..mesh.num_vertices() {
        let (m, o) = pairing.vertex_representative(v);
        rep[map.vertex(v)] = (map.vertex(m), o);
    }
    for e in 0..mesh.num_edges() {
        let (m, o) = pairing.edge_representative(e);
        if mesh.edges()[e].cells[1].is_none() && m == e && o == [0, 0] {
            // Boundary master edges must have a slave partner.
            let has_slave = pairing.edge_master.iter().any(|s| matches!(s, Some((mm, _)) if *mm == e));
            if !has_slave {
                return Err(DispersionError::Unpaired {
                    entity: format!("edge {e}"),
                });
            }
        }
        for j in 0..map.per_edge() {
            rep[map.edge(e, j)] = (map.edge(m, j), o);
        }
    }
    let mut compact = vec![usize::MAX; ns];
    let mut n = 0;
    for g in 0..ns {
        if rep[g].0 == g {
            compact[g] = n;
            n += 1;
        }
    }
    let out = rep
        .iter()
        .map(|&(m, o)| (compact[m], Vector2::new(o[0] as f64, o[1] as f64) * h))
        .collect();
    Ok((out, n))
}

impl BlochSystem {
    pub fn new(grid: ReferenceGrid, k: usize, material: Material, basis: BasisKind) -> Result<Self, DispersionError> {
        let mesh = reference_periodic_cell(grid, 1.0);
        Self::from_mesh(&mesh, k, material, basis)
    }

    pub fn from_mesh(
        mesh: &PolygonalMesh,
        k: usize,
        material: Material,
        basis: BasisKind,
    ) -> Result<Self, DispersionError> {
        let sys = assemble_global(mesh, material, Discretization::new(k).with_basis(basis), false)?;
        let (scalar, nm) = scalar_masters(mesh, k)?;
        let mut master_of = scalar.clone();
        master_of.extend(scalar.iter().map(|&(m, d)| (m + nm, d)));
        Ok(Self {
            mass: sys.mass,
            stiffness: sys.stiffness,
            master_of,
            n_master: 2 * nm,
            h: mesh.periodic_pairing().map_or(1.0, |p| p.period),
        })
    }

    pub fn reduce(&self, kvec: Vector2<f64>) -> BlochReduction {
        let phase: Vec<Complex64> = self
            .master_of
            .iter()
            .map(|&(_, d)| Complex64::from_polar(1.0, kvec.dot(&d)))
            .collect();
        let congruence = |a: &CsrMatrix| {
            let mut out = DMatrix::<Complex64>::zeros(self.n_master, self.n_master);
            for i in 0..a.nrows() {
                let (mi, pi) = (self.master_of[i].0, phase[i].conj());
                for (j, v) in a.row(i) {
                    out[(mi, self.master_of[j].0)] += pi * phase[j] * v;
                }
            }
            out
        };
        BlochReduction {
            mass: congruence(&self.mass),
            stiffness: congruence(&self.stiffness),
            phase,
        }
    }
}

/// L⁻¹ 𝓚 L⁻ᴴ with 𝓜 = L Lᴴ.
fn standard_form(red: &BlochReduction) -> Result<DMatrix<Complex64>, DispersionError> {
    let l = red.mass.clone().cholesky().ok_or(DispersionError::NotDefinite)?.unpack();
    let y = l.solve_lower_triangular(&red.stiffness).ok_or(DispersionError::NotDefinite)?;
    let a = l
        .solve_lower_triangular(&y.adjoint())
        .ok_or(DispersionError::NotDefinite)?
        .adjoint();
    Ok(a)
}

/// Sorted real eigenvalues of the Hermitian-definite pencil.
pub fn bloch_eigenvalues(red: &BlochReduction) -> Result<Vec<f64>, DispersionError> {
    let a = standard_form(red)?;
    let herm = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Eigenvalues of 𝓜⁻¹𝓚 from a general (non-Hermitian) solver.
pub fn general_eigenvalues(red: &BlochReduction) -> Result<Vec<Complex64>, DispersionError> {
    let a = standard_form(red)?;
    Ok(a.eigenvalues().ok_or(DispersionError::Eigen)?.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionResult {
    pub omega_p: f64,
    pub omega_s: f64,
    pub c_p_h: f64,
    pub c_s_h: f64,
    pub e_p: f64,
    pub e_s: f64,
    /// max |Im ω_h| / |ω_h| over all computed frequencies.
    pub im_omega_max: f64,
    pub ambiguous: bool,
    /// Semi-discrete Λ at the shear wavevector.
    pub eigenvalues: Vec<f64>,
    pub dt: Option<f64>,
}

struct Pick {
    lambda: f64,
    ambiguous: bool,
}

fn pick_mode(eigs: &[f64], omega: f64) -> Pick {
    let dist = |l: f64| (l.max(0.0).sqrt() - omega).abs();
    let mut order: Vec<usize> = (0..eigs.len()).collect();
    order.sort_by(|&a, &b| {
        dist(eigs[a])
            .total_cmp(&dist(eigs[b]))
            .then((eigs[a] - omega * omega).abs().total_cmp(&(eigs[b] - omega * omega).abs()))
            .then(a.cmp(&b))
    });
    let best = eigs[order[0]];
    let ambiguous = order.len() > 1 && {
        let second = eigs[order[1]];
        (dist(second) - dist(best)).abs() <= 1e-12 * omega && (second - best).abs() > 1e-12 * best.abs()
    };
    Pick { lambda: best, ambiguous }
}

/// max |Im ω| / |ω| with ω = √Λ, or the leap-frog inversion when `dt` is set.
fn relative_imaginary(eigs: &[Complex64], dt: Option<f64>) -> f64 {
    let scale = eigs.iter().fold(0.0f64, |m, l| m.max(l.norm()));
    let mut worst: f64 = 0.0;
    for &l in eigs {
        if l.norm() <= 1e-14 * scale {
            continue;
        }
        let w = match dt {
            None => l.sqrt(),
            Some(dt) => {
                let z = l.sqrt() * (dt / 2.0);
                if z.re > 1.0 + 1e-12 {
                    // Beyond the stability bound of this wavevector; only
                    // physical modes make the step inadmissible.
                    continue;
                }
                z.asin() * (2.0 / dt)
            }
        };
        worst = worst.max(w.im.abs() / w.norm());
    }
    worst
}

fn leapfrog_frequency(lambda: f64, dt: f64) -> Result<f64, DispersionError> {
    let z = dt * lambda.max(0.0).sqrt() / 2.0;
    if z > 1.0 + 1e-12 {
        return Err(DispersionError::UnstableStep { dt, argument: z });
    }
    Ok(2.0 / dt * z.min(1.0).asin())
}

/// Dispersion errors of one configuration (fully discrete if `q_rel` is set).
pub fn dispersion(config: &DispersionConfig) -> Result<DispersionResult, DispersionError> {
    config.validate()?;
    let sys = BlochSystem::new(config.grid, config.k, config.material()?, config.basis)?;
    let dt = match config.q_rel {
        None => None,
        Some(q) => {
            let qcfl = cfl_parameter_with(&sys, config)?;
            Some(q * qcfl * sys.h / config.c_p)
        }
    };
    dispersion_with(&sys, config, dt)
}

fn dispersion_with(
    sys: &BlochSystem,
    config: &DispersionConfig,
    dt: Option<f64>,
) -> Result<DispersionResult, DispersionError> {
    let ks = config.wavevector() / sys.h;
    let kp = match config.sampling {
        PWaveSampling::SharedFrequency => ks / config.r,
        PWaveSampling::SharedWavevector => ks,
    };
    let (c_p, c_s) = (config.c_p, config.c_s());
    let red_s = sys.reduce(ks);
    let eig_s = bloch_eigenvalues(&red_s)?;
    let mut im = relative_imaginary(&general_eigenvalues(&red_s)?, dt);
    let eig_p = if kp == ks {
        eig_s.clone()
    } else {
        let red_p = sys.reduce(kp);
        im = im.max(relative_imaginary(&general_eigenvalues(&red_p)?, dt));
        bloch_eigenvalues(&red_p)?
    };
    let ps = pick_mode(&eig_s, ks.norm() * c_s);
    let pp = pick_mode(&eig_p, kp.norm() * c_p);
    let freq = |l: f64| match dt {
        None => Ok(l.max(0.0).sqrt()),
        Some(dt) => leapfrog_frequency(l, dt),
    };
    let omega_s = freq(ps.lambda)?;
    let omega_p = freq(pp.lambda)?;
    let c_s_h = omega_s / ks.norm();
    let c_p_h = omega_p / kp.norm();
    Ok(DispersionResult {
        omega_p,
        omega_s,
        c_p_h,
        c_s_h,
        e_p: c_p_h / c_p - 1.0,
        e_s: c_s_h / c_s - 1.0,
        im_omega_max: im,
        ambiguous: ps.ambiguous || pp.ambiguous,
        eigenvalues: eig_s,
        dt,
    })
}

/// Number of angles in the θ sweep of the CFL parameter.
pub const CFL_ANGLES: usize = 64;

fn cfl_parameter_with(sys: &BlochSystem, config: &DispersionConfig) -> Result<f64, DispersionError> {
    cfl_parameter_angles(sys, config, CFL_ANGLES)
}

fn cfl_parameter_angles(sys: &BlochSystem, config: &DispersionConfig, n: usize) -> Result<f64, DispersionError> {
    let lmax = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = DispersionConfig {
                theta: 2.0 * PI * i as f64 / n as f64,
                ..*config
            };
            let ev = bloch_eigenvalues(&sys.reduce(c.wavevector() / sys.h))?;
            Ok(ev.last().copied().unwrap_or(0.0))
        })
        .collect::<Result<Vec<f64>, DispersionError>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(2.0 * config.c_p / (sys.h * lmax.sqrt()))
}

/// q_CFL = 2 c_P / (h √Λ_max), with Λ_max over a uniform θ sweep.
pub fn cfl_parameter(config: &DispersionConfig) -> Result<f64, DispersionError> {
    let cfg = DispersionConfig { theta: 0.0, ..*config };
    cfg.validate()?;
    let sys = BlochSystem::new(cfg.grid, cfg.k, cfg.material()?, cfg.basis)?;
    cfl_parameter_with(&sys, &cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropyRow {
    pub theta: f64,
    pub ratio_s: f64,
    pub ratio_p: f64,
}

/// c_{S,h}/c_S and c_{P,h}/c_P on a uniform θ grid.
pub fn anisotropy_sweep(config: &DispersionConfig, n_angles: usize) -> Result<Vec<AnisotropyRow>, DispersionError> {
    if n_angles < 8 {
        return Err(DispersionError::Invalid {
            name: "n_angles",
            message: format!("at least 8 angles are required, got {n_angles}"),
        });
    }
    let cfg = DispersionConfig { theta: 0.0, ..*config };
    cfg.validate()?;
    let sys = BlochSystem::new(cfg.grid, cfg.k, cfg.material()?, cfg.basis)?;
    let dt = match cfg.q_rel {
        None => None,
        Some(q) => Some(q * cfl_parameter_with(&sys, &cfg)? * sys.h / cfg.c_p),
    };
    (0..n_angles)
        .into_par_iter()
        .map(|i| {
            let c = DispersionConfig {
                theta: 2.0 * PI * i as f64 / n_angles as f64,
                ..cfg
            };
            let r = dispersion_with(&sys, &c, dt)?;
            Ok(AnisotropyRow {
                theta: c.theta,
                ratio_s: r.e_s + 1.0,
                ratio_p: r.e_p + 1.0,
            })
        })
        .collect()
}

/// Maximal relative imaginary part of the discrete frequencies.
pub fn dissipation_check(config: &DispersionConfig) -> Result<f64, DispersionError> {
    Ok(dispersion(config)?.im_omega_max)
}

/// Cartesian product of sweep parameters, evaluated in this nesting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub grids: Vec<ReferenceGrid>,
    pub ks: Vec<usize>,
    pub deltas: Vec<f64>,
    pub thetas: Vec<f64>,
    pub rs: Vec<f64>,
    pub q_rels: Vec<Option<f64>>,
    pub delta_convention: DeltaConvention,
}

impl Default for Sweep {
    /// Every reference grid, k = 1..4, δ = 0.2, θ = π/4, r = 2, exact time.
    fn default() -> Self {
        Self {
            grids: ReferenceGrid::ALL.to_vec(),
            ks: (1..=4).collect(),
            deltas: vec![0.2],
            thetas: vec![PI / 4.0],
            rs: vec![2.0],
            q_rels: vec![None],
            delta_convention: DeltaConvention::PerNode,
        }
    }
}

impl Sweep {
    pub fn configs(&self) -> Vec<DispersionConfig> {
        let mut out = Vec::new();
        for &grid in &self.grids {
            for &k in &self.ks {
                for &delta in &self.deltas {
                    for &theta in &self.thetas {
                        for &r in &self.rs {
                            for &q_rel in &self.q_rels {
                                out.push(DispersionConfig {
                                    q_rel,
                                    delta_convention: self.delta_convention,
                                    ..DispersionConfig::new(grid, k, delta, theta, r)
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn run(&self) -> Result<Vec<(DispersionConfig, DispersionResult)>, DispersionError> {
        self.configs()
            .into_par_iter()
            .map(|c| Ok((c, dispersion(&c)?)))
            .collect()
    }
}

pub const DISPERSION_HEADER: &str = "grid,k,delta,theta,r,q_rel,e_P,e_S,im_omega_max";
pub const CFL_HEADER: &str = "grid,k,q_cfl";
pub const ANISOTROPY_HEADER: &str = "theta,ratio_s,ratio_p";

/// `dispersion.csv` contents; q_rel = 0 marks exact time integration.
pub fn dispersion_csv(rows: &[(DispersionConfig, DispersionResult)]) -> String {
    let mut s = String::from(DISPERSION_HEADER);
    s.push('\n');
    for (c, r) in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{:e},{:e},{:e}",
            c.grid.name(),
            c.k,
            c.delta,
            c.theta,
            c.r,
            c.q_rel.unwrap_or(0.0),
            r.e_p,
            r.e_s,
            r.im_omega_max
        )
        .expect("writing to a String");
    }
    s
}

pub fn cfl_csv(rows: &[(ReferenceGrid, usize, f64)]) -> String {
    let mut s = String::from(CFL_HEADER);
    s.push('\n');
    for (g, k, q) in rows {
        writeln!(s, "{},{},{:e}", g.name(), k, q).expect("writing to a String");
    }
    s
}

pub fn anisotropy_csv(rows: &[AnisotropyRow]) -> String {
    let mut s = String::from(ANISOTROPY_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{},{:e},{:e}", r.theta, r.ratio_s, r.ratio_p).expect("writing to a String");
    }
    s
}
