use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use super::{error_norms, BenchmarkProblem, ErrorNorms, HarnessError};
use crate::assembly::{assemble_global, assemble_load, Discretization, GlobalSystem};
use crate::linalg::{LinalgError, SpdSolver};
use crate::mesh::{generate_family, MeshFamily, PolygonalMesh};
use crate::polybasis::BasisKind;
use crate::timestep::{cfl_timestep, LeapFrog, SimulationState, TimestepError};

/// Time-integration settings for the manufactured-solution runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSettings {
    pub dt: f64,
    pub t_final: f64,
}

impl Default for TimeSettings {
    fn default() -> Self {
        Self {
            dt: 5e-4,
            t_final: 0.1,
        }
    }
}

impl TimeSettings {
    /// T = 1 with Δt = 1e-4.
    pub fn paper_scale() -> Self {
        Self {
            dt: 1e-4,
            t_final: 1.0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(HarnessError::Invalid {
                name: "dt",
                message: format!("Δt > 0 is required, got {}", self.dt),
            });
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(HarnessError::Invalid {
                name: "T",
                message: format!("T ≥ 0 is required, got {}", self.t_final),
            });
        }
        let n = self.t_final / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(HarnessError::Invalid {
                name: "dt",
                message: format!("T = {} is not a whole number of steps of {}", self.t_final, self.dt),
            });
        }
        Ok(())
    }
}

/// One (level, k) entry of an h-refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub family: MeshFamily,
    pub k: usize,
    pub level: u32,
    pub h: f64,
    pub ndofs: usize,
    pub err_l2: f64,
    pub err_h1: f64,
    pub seconds: f64,
}

/// Outcome of a benchmark solve on one mesh.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub system: GlobalSystem,
    pub u_final: DVector<f64>,
    pub errors: ErrorNorms,
    pub dt: f64,
    pub admissible_dt: f64,
    pub steps: usize,
}

/// Assembles, interpolates the initial data and integrates to `t_final`.
/// Refuses a Δt above the CFL estimate.
pub fn solve_benchmark(
    mesh: &PolygonalMesh,
    disc: Discretization,
    problem: &BenchmarkProblem,
    time: TimeSettings,
) -> Result<BenchmarkRun, HarnessError> {
    solve_benchmark_observed(mesh, disc, problem, time, &mut |_, _| Ok(()))
}

/// Step observer: sees the integrator and the state after every step.
pub type Observer<'a> = dyn FnMut(&LeapFrog, &SimulationState) -> Result<(), HarnessError> + 'a;

/// [`solve_benchmark`] with `observe` called after each time step.
pub fn solve_benchmark_observed(
    mesh: &PolygonalMesh,
    disc: Discretization,
    problem: &BenchmarkProblem,
    time: TimeSettings,
    observe: &mut Observer<'_>,
) -> Result<BenchmarkRun, HarnessError> {
    time.validate()?;
    let sys = assemble_global(mesh, problem.material, disc, true)?;
    let solver = SpdSolver::cholesky(&sys.mass).map_err(TimestepError::from)?;
    let admissible = admissible_dt(&sys, &solver)?;
    if time.dt > admissible {
        return Err(HarnessError::Cfl {
            context: format!(" for k = {}", disc.k),
            dt: time.dt,
            admissible,
        });
    }
    let shape = assemble_load(mesh, &sys, &|p| problem.force_shape(p), None);
    let mut lf = LeapFrog::with_solver(sys.mass.clone(), sys.stiffness.clone(), solver, time.dt);
    lf.set_suggested_dt(admissible);
    let u0 = sys.interpolate(|p| {
        let v = problem.displacement(p, 0.0);
        (v[0], v[1])
    });
    let steps = time.steps();
    let u_final = if steps == 0 {
        u0
    } else {
        let v0 = DVector::zeros(u0.len());
        let mut state = lf.initial_step(&u0, &v0, &(&shape * problem.time_factor(0.0)))?;
        observe(&lf, &state)?;
        for _ in 1..steps {
            let f = &shape * problem.time_factor(state.time());
            lf.step(&mut state, Some(&f))?;
            observe(&lf, &state)?;
        }
        state.u_curr
    };
    let t = steps as f64 * time.dt;
    let errors = error_norms(&sys, &u_final, |p| problem.displacement(p, t), |p| problem.gradient(p, t))?;
    Ok(BenchmarkRun {
        system: sys,
        u_final,
        errors,
        dt: time.dt,
        admissible_dt: admissible,
        steps,
    })
}

/// 2/√λ_max from power iteration, or from the element-wise bound on λ_max
/// when the iteration stalls on clustered eigenvalues.
pub fn admissible_dt(sys: &GlobalSystem, mass_solver: &SpdSolver) -> Result<f64, HarnessError> {
    match cfl_timestep(&sys.mass, &sys.stiffness, mass_solver, 1.0) {
        Ok(c) => Ok(c.dt),
        Err(TimestepError::Linalg(LinalgError::PowerIteration { .. })) => {
            Ok(2.0 / sys.element_eigenvalue_bound().sqrt())
        }
        Err(e) => Err(e.into()),
    }
}

/// h-refinement over `levels` for every k, run as independent parallel tasks.
/// Records are ordered by k, then level.
pub fn run_convergence(
    family: MeshFamily,
    ks: &[usize],
    levels: &[u32],
    time: TimeSettings,
    seed: u64,
) -> Result<Vec<ConvergenceRecord>, HarnessError> {
    time.validate()?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(HarnessError::Invalid {
            name: "k",
            message: "at least one degree k ≥ 1 is required".into(),
        });
    }
    if levels.is_empty() {
        return Err(HarnessError::Invalid {
            name: "levels",
            message: "at least one mesh level is required".into(),
        });
    }
    let problem = BenchmarkProblem::with_final_time(time.t_final);
    let tasks: Vec<(usize, u32)> = ks.iter().flat_map(|&k| levels.iter().map(move |&l| (k, l))).collect();
    tasks
        .into_par_iter()
        .map(|(k, level)| {
            let start = Instant::now();
            let mesh = generate_family(family, level, seed);
            let run = solve_benchmark(&mesh, Discretization::new(k), &problem, time).map_err(|e| match e {
                HarnessError::Cfl { dt, admissible, .. } => HarnessError::Cfl {
                    context: format!(" on {} level {level}, k = {k}", family.name()),
                    dt,
                    admissible,
                },
                other => other,
            })?;
            Ok(ConvergenceRecord {
                family,
                k,
                level,
                h: mesh.mesh_size(),
                ndofs: run.system.num_free(),
                err_l2: run.errors.l2,
                err_h1: run.errors.h1,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Convergence rates of one degree, fitted against h.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSummary {
    pub k: usize,
    pub l2_slope: f64,
    pub h1_slope: f64,
    pub l2_pairs: Vec<f64>,
    pub h1_pairs: Vec<f64>,
}

pub fn rate_summary(records: &[ConvergenceRecord], k: usize) -> Option<RateSummary> {
    let mut rows: Vec<&ConvergenceRecord> = records.iter().filter(|r| r.k == k).collect();
    if rows.len() < 2 {
        return None;
    }
    rows.sort_by_key(|r| r.level);
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.err_l2).collect();
    let h1: Vec<f64> = rows.iter().map(|r| r.err_h1).collect();
    let pairs = |e: &[f64]| -> Vec<f64> {
        (1..h.len())
            .map(|i| (e[i - 1] / e[i]).ln() / (h[i - 1] / h[i]).ln())
            .collect()
    };
    Some(RateSummary {
        k,
        l2_slope: loglog_slope(&h, &l2),
        h1_slope: loglog_slope(&h, &h1),
        l2_pairs: pairs(&l2),
        h1_pairs: pairs(&h1),
    })
}

pub const CONVERGENCE_HEADER: &str = "family,k,level,h,ndofs,err_l2,err_h1,seconds";

pub fn convergence_csv(records: &[ConvergenceRecord]) -> String {
    let mut s = String::from(CONVERGENCE_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&format!(
            "{},{},{},{:.12e},{},{:.12e},{:.12e},{:.3}\n",
            r.family.name(),
            r.k,
            r.level,
            r.h,
            r.ndofs,
            r.err_l2,
            r.err_h1,
            r.seconds
        ));
    }
    s
}

/// One degree of a p-refinement study. Failed degrees keep `NaN` errors and
/// the reason in `failure`.
#[derive(Debug, Clone, PartialEq)]
pub struct PRefinementRecord {
    pub basis: BasisKind,
    pub k: usize,
    pub ndofs: usize,
    pub err_l2: f64,
    pub err_h1: f64,
    /// Largest condition number of an element Gram matrix in the chosen basis.
    pub condition: f64,
    pub dt: f64,
    pub seconds: f64,
    pub failure: Option<String>,
}

fn max_gram_condition(sys: &GlobalSystem) -> f64 {
    sys.spaces
        .iter()
        .map(|s| {
            let sv = s.grams.q.singular_values();
            sv.max() / sv.min()
        })
        .fold(0.0, f64::max)
}

/// p-refinement on the level-0 random-quad mesh (5×5 cells). The step is
/// the requested one, lowered to half the CFL estimate where needed.
pub fn run_p_refinement(
    k_max: usize,
    basis: BasisKind,
    time: TimeSettings,
    seed: u64,
) -> Result<Vec<PRefinementRecord>, HarnessError> {
    time.validate()?;
    if !(1..=10).contains(&k_max) {
        return Err(HarnessError::Invalid {
            name: "k",
            message: format!("p-refinement needs 1 ≤ k_max ≤ 10, got {k_max}"),
        });
    }
    let mesh = generate_family(MeshFamily::RandomQuad, 0, seed);
    let problem = BenchmarkProblem::with_final_time(time.t_final);
    (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let start = Instant::now();
            let disc = Discretization::new(k).with_basis(basis);
            let failed = |msg: String, ndofs, condition| PRefinementRecord {
                basis,
                k,
                ndofs,
                err_l2: f64::NAN,
                err_h1: f64::NAN,
                condition,
                dt: time.dt,
                seconds: start.elapsed().as_secs_f64(),
                failure: Some(msg),
            };
            let sys = match assemble_global(&mesh, problem.material, disc, true) {
                Ok(s) => s,
                Err(e) => return Ok(failed(e.to_string(), 0, f64::INFINITY)),
            };
            let condition = max_gram_condition(&sys);
            let ndofs = sys.num_free();
            let admissible = match SpdSolver::cholesky(&sys.mass)
                .map_err(|e| HarnessError::from(TimestepError::from(e)))
                .and_then(|s| admissible_dt(&sys, &s))
            {
                Ok(dt) => dt,
                Err(e) => return Ok(failed(e.to_string(), ndofs, condition)),
            };
            let mut t = time;
            if t.dt > 0.5 * admissible {
                let n = (t.t_final / (0.5 * admissible)).ceil().max(1.0);
                t.dt = t.t_final / n;
            }
            match solve_benchmark(&mesh, disc, &problem, t) {
                Ok(run) => Ok(PRefinementRecord {
                    basis,
                    k,
                    ndofs,
                    err_l2: run.errors.l2,
                    err_h1: run.errors.h1,
                    condition,
                    dt: t.dt,
                    seconds: start.elapsed().as_secs_f64(),
                    failure: None,
                }),
                Err(e) => Ok(failed(e.to_string(), ndofs, condition)),
            }
        })
        .collect()
}

pub const PREFINE_HEADER: &str = "basis,k,ndofs,err_l2,err_h1,condition,dt,seconds";

pub fn prefine_csv(records: &[PRefinementRecord]) -> String {
    let mut s = String::from(PREFINE_HEADER);
    s.push('\n');
    for r in records {
        let basis = match r.basis {
            BasisKind::Monomial => "monomial",
            BasisKind::Orthonormal => "orthonormal",
        };
        s.push_str(&format!(
            "{},{},{},{:.12e},{:.12e},{:.6e},{:.6e},{:.3}\n",
            basis, r.k, r.ndofs, r.err_l2, r.err_h1, r.condition, r.dt, r.seconds
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 0.5, 0.25, 0.125];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.5)).collect();
        assert!((loglog_slope(&x, &y) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn time_settings_validation() {
        assert!(TimeSettings::default().validate().is_ok());
        assert_eq!(TimeSettings::default().steps(), 200);
        assert_eq!(TimeSettings::paper_scale().steps(), 10_000);
        let bad = TimeSettings { dt: -1.0, t_final: 1.0 };
        assert!(matches!(bad.validate(), Err(HarnessError::Invalid { name: "dt", .. })));
        let odd = TimeSettings { dt: 0.3, t_final: 1.0 };
        assert!(odd.validate().is_err());
    }

    #[test]
    fn oversized_step_is_refused() {
        let err = run_convergence(MeshFamily::RandomQuad, &[2], &[1], TimeSettings { dt: 0.05, t_final: 0.1 }, 0)
            .unwrap_err();
        match err {
            HarnessError::Cfl { dt, admissible, context } => {
                assert!(context.contains("level 1"), "{context}");
                assert!(admissible < dt);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn zero_steps_returns_interpolant() {
        let mesh = generate_family(MeshFamily::Hexagonal, 0, 0);
        let pb = BenchmarkProblem::with_final_time(0.0);
        let run = solve_benchmark(&mesh, Discretization::new(2), &pb, TimeSettings { dt: 1e-3, t_final: 0.0 }).unwrap();
        let u0 = run.system.interpolate(|p| {
            let v = pb.displacement(p, 0.0);
            (v[0], v[1])
        });
        assert_eq!(run.steps, 0);
        assert_eq!(run.u_final, u0);
    }

    #[test]
    fn short_run_converges_in_h() {
        let time = TimeSettings { dt: 1e-3, t_final: 0.05 };
        let recs = run_convergence(MeshFamily::RandomQuad, &[1], &[0, 1, 2], time, 0).unwrap();
        let s = rate_summary(&recs, 1).unwrap();
        assert!(recs.windows(2).all(|w| w[1].err_l2 < w[0].err_l2 && w[1].err_h1 < w[0].err_h1));
        assert!(s.h1_slope > 0.7, "{s:?}");
        assert!(s.l2_slope > 1.6, "{s:?}");
        let csv = convergence_csv(&recs);
        assert!(csv.starts_with(CONVERGENCE_HEADER));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn k1_bases_agree() {
        let time = TimeSettings { dt: 1e-3, t_final: 0.02 };
        let a = run_p_refinement(1, BasisKind::Monomial, time, 0).unwrap();
        let b = run_p_refinement(1, BasisKind::Orthonormal, time, 0).unwrap();
        assert!((a[0].err_l2 - b[0].err_l2).abs() < 1e-12);
        assert!((a[0].err_h1 - b[0].err_h1).abs() < 1e-12);
    }
}
