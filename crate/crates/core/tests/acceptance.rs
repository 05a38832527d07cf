//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector2};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vemwave::assembly::{assemble_global, local_matrices, Discretization, Material, Stabilization};
use vemwave::dispersion::{
    bloch_eigenvalues, cfl_parameter, dispersion, BlochSystem, DeltaConvention, DispersionConfig, PWaveSampling,
    Sweep,
};
use vemwave::harness::{loglog_slope, rate_summary, run_convergence, run_p_refinement, TimeSettings};
use vemwave::mesh::{
    generate_family, reference_periodic_cell, ElementGeometry, MeshFamily, Point, PolygonalMesh, ReferenceGrid,
};
use vemwave::polybasis::{exponents, BasisKind};
use vemwave::projectors::{compute_projectors, monomial_in_basis, ElementProjectors, ElementSpace};
use vemwave::timestep::{cfl_timestep, LeapFrog};
use vemwave::linalg::SpdSolver;

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn line(&mut self, id: &str, ok: bool, text: String) {
        println!("[{}] {id} {text}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id.to_string());
        }
    }
}

fn info(text: String) {
    println!("       {text}");
}

// |e_P|, |e_S| at δ = 0.2, θ = π/4, r = 2.
const REFERENCE: [(ReferenceGrid, usize, f64, f64, f64); 5] = [
    (ReferenceGrid::Quad, 1, 6.0577e-4, 1.0492e-2, 0.01),
    (ReferenceGrid::Quad, 2, 3.9826e-4, 5.4411e-3, 0.02),
    (ReferenceGrid::Quad, 3, 2.7291e-5, 5.1136e-4, 0.02),
    (ReferenceGrid::Tria, 1, 8.2437e-3, 3.3135e-2, 0.02),
    (ReferenceGrid::Tria, 2, 1.5669e-6, 2.3285e-4, 0.02),
];

fn reference_config(grid: ReferenceGrid, k: usize, sampling: PWaveSampling, conv: DeltaConvention) -> DispersionConfig {
    DispersionConfig {
        sampling,
        delta_convention: conv,
        ..DispersionConfig::new(grid, k, 0.2, PI / 4.0, 2.0)
    }
}

/// Rows matched and the slowest row time under one convention pair.
fn reference_rows(sampling: PWaveSampling, conv: DeltaConvention, verbose: bool) -> (usize, f64) {
    let mut matched = 0;
    let mut slowest: f64 = 0.0;
    for (grid, k, ep, es, tol) in REFERENCE {
        let t = Instant::now();
        let r = dispersion(&reference_config(grid, k, sampling, conv)).expect("reference row");
        slowest = slowest.max(t.elapsed().as_secs_f64());
        let dp = r.e_p.abs() / ep - 1.0;
        let ds = r.e_s.abs() / es - 1.0;
        let ok = dp.abs() <= tol && ds.abs() <= tol;
        matched += ok as usize;
        if verbose {
            info(format!(
                "{:?}/{:?} {} k={k}: |e_P| {:.4e} ({:+.1}%), |e_S| {:.4e} ({:+.1}%) {}",
                sampling,
                conv,
                grid.name(),
                r.e_p.abs(),
                100.0 * dp,
                r.e_s.abs(),
                100.0 * ds,
                if ok { "ok" } else { "off" }
            ));
        }
    }
    (matched, slowest)
}

fn criterion_1(rep: &mut Report) {
    let conv = DeltaConvention::PerNode;
    let mut full = Vec::new();
    let mut slowest: f64 = 0.0;
    for s in [PWaveSampling::SharedFrequency, PWaveSampling::SharedWavevector] {
        let (m, t) = reference_rows(s, conv, true);
        slowest = slowest.max(t);
        if m == REFERENCE.len() {
            full.push(s);
        }
    }
    for s in [PWaveSampling::SharedFrequency, PWaveSampling::SharedWavevector] {
        let (m, _) = reference_rows(s, DeltaConvention::PerCell, false);
        info(format!("per-cell δ, {s:?}: {m}/{} rows within tolerance (not gated)", REFERENCE.len()));
    }
    rep.line(
        "C1",
        full.len() == 1 && slowest < 10.0,
        format!(
            "dispersion reference values: conventions matching all {} rows = {:?}, slowest row {:.2} s",
            REFERENCE.len(),
            full,
            slowest
        ),
    );
}

fn max_es(conv: DeltaConvention) -> (f64, String) {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for grid in [ReferenceGrid::Quad, ReferenceGrid::Tria] {
        for k in 5..=8 {
            let c = DispersionConfig {
                delta_convention: conv,
                ..DispersionConfig::new(grid, k, 0.2, PI / 4.0, 2.0)
            };
            let e = dispersion(&c).expect("k-decay row").e_s.abs();
            if e > worst {
                worst = e;
                at = format!("{} k={k}", grid.name());
            }
        }
    }
    (worst, at)
}

fn criterion_2(rep: &mut Report) {
    let (w, at) = max_es(DeltaConvention::PerNode);
    let (wc, atc) = max_es(DeltaConvention::PerCell);
    info(format!("per-cell δ: max |e_S| = {wc:.3e} at {atc} (not gated)"));
    rep.line(
        "C2",
        w < 1e-6,
        format!("k-decay: max |e_S| over quad/tria k=5..8 = {w:.3e} at {at} (need < 1e-6)"),
    );
}

fn criterion_3(rep: &mut Report) {
    let deltas = [0.025, 0.05, 0.1, 0.2];
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [2usize, 3] {
        let target = if k % 2 == 1 { 2 * k } else { 2 * k - 1 } as f64;
        let es: Vec<f64> = deltas
            .iter()
            .map(|&d| {
                dispersion(&DispersionConfig::new(ReferenceGrid::Quad, k, d, PI / 4.0, 2.0))
                    .expect("δ row")
                    .e_s
                    .abs()
            })
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = deltas.iter().zip(&es).filter(|(_, e)| **e > 1e-9).unzip();
        let slope = if x.len() >= 2 { loglog_slope(&x, &y) } else { f64::NAN };
        let pairs: Vec<String> = (1..deltas.len())
            .map(|i| format!("{:.2}", (es[i] / es[i - 1]).ln() / (deltas[i] / deltas[i - 1]).ln()))
            .collect();
        info(format!(
            "k={k}: |e_S| = {:?}, pair slopes [{}]",
            es.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            pairs.join(", ")
        ));
        ok &= (slope - target).abs() <= 0.7;
        parts.push(format!("k={k} slope {slope:.2} (target {target})"));
    }
    rep.line("C3", ok, format!("δ-order on quad: {}", parts.join(", ")));
}

fn criterion_4(rep: &mut Report) {
    let ks: Vec<f64> = (2..=6).map(|k| k as f64).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for grid in [ReferenceGrid::Quad, ReferenceGrid::Tria] {
        let q: Vec<f64> = (2..=6)
            .map(|k| cfl_parameter(&DispersionConfig::new(grid, k, 0.2, 0.0, 2.0)).expect("q_CFL"))
            .collect();
        let s = loglog_slope(&ks, &q);
        info(format!(
            "{}: q_CFL = {:?}",
            grid.name(),
            q.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ));
        ok &= (-1.9..=-1.1).contains(&s);
        parts.push(format!("{} {s:.2}", grid.name()));
    }
    rep.line("C4", ok, format!("CFL trend slopes vs k (k=2..6): {} (need [-1.9, -1.1])", parts.join(", ")));
}

fn criterion_5(rep: &mut Report) {
    let sweep = Sweep {
        q_rels: vec![None, Some(0.9)],
        ..Sweep::default()
    };
    let rows = sweep.run().expect("default sweep");
    let worst = rows.iter().map(|(_, r)| r.im_omega_max).fold(0.0, f64::max);
    rep.line(
        "C5",
        worst <= 1e-10,
        format!("non-dissipativity: max |Im ω|/|ω| over {} sweep rows = {worst:.3e}", rows.len()),
    );
}

fn criterion_6(rep: &mut Report) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let start = Instant::now();
    let mut ok = true;
    let mut misses = Vec::new();
    for family in MeshFamily::ALL {
        let recs = pool
            .install(|| run_convergence(family, &[1, 2, 3], &[0, 1, 2, 3], TimeSettings::default(), 0))
            .expect("convergence study");
        for k in 1..=3 {
            let r = rate_summary(&recs, k).expect("rates");
            let good = (r.l2_slope - (k + 1) as f64).abs() <= 0.3 && (r.h1_slope - k as f64).abs() <= 0.3;
            info(format!(
                "{} k={k}: L2 {:.2} {:?}, H1 {:.2} {:?} {}",
                family.name(),
                r.l2_slope,
                r.l2_pairs.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
                r.h1_slope,
                r.h1_pairs.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>(),
                if good { "ok" } else { "off" }
            ));
            if !good {
                ok = false;
                misses.push(format!("{} k={k}", family.name()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    rep.line(
        "C6",
        ok && secs < 900.0,
        format!("h-rates on 3 families, k=1..3: outside bands {misses:?}, single-thread suite {secs:.0} s"),
    );
}

fn criterion_7(rep: &mut Report) {
    let recs = run_p_refinement(6, BasisKind::Orthonormal, TimeSettings::default(), 0).expect("p-refinement");
    let errs: Vec<f64> = recs.iter().map(|r| r.err_l2).collect();
    let monotone = recs.iter().all(|r| r.failure.is_none()) && errs.windows(2).all(|w| w[1] < w[0]);
    let drop = errs[0] / errs[errs.len() - 1];
    rep.line(
        "C7",
        monotone && drop >= 10.0,
        format!(
            "p-refinement: L2 {:?}, monotone {monotone}, drop {drop:.2e}",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()
        ),
    );
}

// ---- property suites ----

fn polygon(n: usize, radii: &[f64], jitter: &[f64], phase: f64, shift: (f64, f64), scale: f64) -> Option<ElementGeometry> {
    let pts: Vec<Point> = (0..n)
        .map(|i| {
            let a = phase + 2.0 * PI * (i as f64 + 0.3 * jitter[i]) / n as f64;
            Point::new(shift.0 + scale * radii[i] * a.cos(), shift.1 + scale * radii[i] * a.sin())
        })
        .collect();
    PolygonalMesh::new(pts, vec![(0..n).collect()], &HashMap::new())
        .ok()
        .map(|m| m.geometry(0))
}

fn shape_strategy() -> impl Strategy<Value = Option<ElementGeometry>> {
    (3usize..=8).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(0.75f64..1.25, n),
            prop::collection::vec(-1.0f64..1.0, n),
            0.0f64..(2.0 * PI),
            (-5.0f64..5.0, -5.0f64..5.0),
            prop_oneof![Just(1e-2), Just(1.0), Just(30.0)],
        )
            .prop_map(|(n, r, j, p, s, h)| polygon(n, &r, &j, p, s, h))
    })
}

/// A cell of a built-in mesh or reference periodic cell, moved by a
/// similarity.
fn builtin_cell(source: usize, seed: u64, index: usize, shift: (f64, f64), scale: f64) -> Option<ElementGeometry> {
    let mesh = match source {
        0..=2 => generate_family(MeshFamily::ALL[source], 0, seed),
        _ => reference_periodic_cell(ReferenceGrid::ALL[source - 3], 1.0),
    };
    let c = index % mesh.num_cells();
    let pts: Vec<Point> = mesh
        .cell_points(c)
        .iter()
        .map(|p| Point::new(shift.0 + scale * p.x, shift.1 + scale * p.y))
        .collect();
    let n = pts.len();
    PolygonalMesh::new(pts, vec![(0..n).collect()], &HashMap::new())
        .ok()
        .map(|m| m.geometry(0))
}

fn builtin_strategy() -> impl Strategy<Value = Option<ElementGeometry>> {
    (
        0usize..9,
        any::<u64>(),
        any::<usize>(),
        (-5.0f64..5.0, -5.0f64..5.0),
        prop_oneof![Just(1e-2), Just(1.0), Just(30.0)],
    )
        .prop_map(|(src, seed, i, s, h)| builtin_cell(src, seed, i, s, h))
}

fn space(g: &ElementGeometry, k: usize) -> Result<(ElementSpace, ElementProjectors), TestCaseError> {
    let s = ElementSpace::new(g.clone(), k, BasisKind::Orthonormal)
        .map_err(|e| TestCaseError::reject(e.to_string()))?;
    let p = compute_projectors(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
    Ok((s, p))
}

fn run_suite<S: Strategy>(
    rep: &mut Report,
    id: &str,
    label: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let t = Instant::now();
    let result = runner.run(&strategy, test);
    let secs = t.elapsed().as_secs_f64();
    match result {
        Ok(()) => rep.line(id, true, format!("{label} ({cases} cases, {secs:.1} s)")),
        Err(e) => rep.line(id, false, format!("{label}: {e}")),
    }
}

fn vector_dofs(s: &ElementSpace, cx: &DVector<f64>, cy: &DVector<f64>) -> DVector<f64> {
    let ux = s.dof_functionals(|x| s.basis.eval(x).dot(cx));
    let uy = s.dof_functionals(|x| s.basis.eval(x).dot(cy));
    let n = ux.len();
    DVector::from_fn(2 * n, |i, _| if i < n { ux[i] } else { uy[i - n] })
}

/// Largest coefficient error of the four projectors on scaled monomials,
/// relative to the coefficient size.
fn reproduction_error(g: &ElementGeometry, k: usize) -> Result<(f64, String), TestCaseError> {
    let (s, p) = space(g, k)?;
    let lower = s.basis.truncated(k - 1);
    let h = g.diameter;
    let mut worst = (0.0f64, String::new());
    for (a, b) in exponents(k) {
        let c = g.centroid;
        let d = s.dof_functionals(|x| ((x.x - c.x) / h).powi(a as i32) * ((x.y - c.y) / h).powi(b as i32));
        let exact = monomial_in_basis(&s.basis, a, b);
        let scale = exact.amax().max(1.0);
        let cx = if a > 0 { monomial_in_basis(&lower, a - 1, b) * (a as f64 / h) } else { DVector::zeros(lower.dim()) };
        let cy = if b > 0 { monomial_in_basis(&lower, a, b - 1) * (b as f64 / h) } else { DVector::zeros(lower.dim()) };
        let dscale = scale * k as f64 / h;
        for (name, got, want, sc) in [
            ("Π∇", &p.pi_nabla * &d, exact.clone(), scale),
            ("Π0", &p.pi0 * &d, exact.clone(), scale),
            ("Π0∂x", &p.pi0x * &d, cx, dscale),
            ("Π0∂y", &p.pi0y * &d, cy, dscale),
        ] {
            let err = (got - want).amax() / sc;
            if err > worst.0 {
                worst = (err, format!("{name} k={k} ({a},{b})"));
            }
        }
    }
    Ok(worst)
}

fn prop_reproduction(g: Option<ElementGeometry>, k: usize) -> Result<(), TestCaseError> {
    let g = g.ok_or_else(|| TestCaseError::reject("invalid polygon"))?;
    let (err, at) = reproduction_error(&g, k)?;
    prop_assert!(err <= 1e-11, "{at}: relative error {err:e}");
    Ok(())
}

fn strain_energy(mat: &Material, gu: [[f64; 2]; 2], gv: [[f64; 2]; 2]) -> f64 {
    let eu = [[gu[0][0], 0.5 * (gu[0][1] + gu[1][0])], [0.5 * (gu[0][1] + gu[1][0]), gu[1][1]]];
    let ev = [[gv[0][0], 0.5 * (gv[0][1] + gv[1][0])], [0.5 * (gv[0][1] + gv[1][0]), gv[1][1]]];
    let mut s = mat.lambda * (eu[0][0] + eu[1][1]) * (ev[0][0] + ev[1][1]);
    for i in 0..2 {
        for j in 0..2 {
            s += 2.0 * mat.mu * eu[i][j] * ev[i][j];
        }
    }
    s
}

fn prop_patch(g: Option<ElementGeometry>, k: usize, mat: (f64, f64, f64), seed: u64) -> Result<(), TestCaseError> {
    let g = g.ok_or_else(|| TestCaseError::reject("invalid polygon"))?;
    let (s, p) = space(&g, k)?;
    let m = Material::new(mat.0, mat.1, mat.2).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let lm = local_matrices(&s, &p, &m, Stabilization::Elliptic);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = s.basis.dim();
    let mut coef = || DVector::from_fn(nb, |_, _| rng.random_range(-1.0..1.0));
    let (px, py, qx, qy) = (coef(), coef(), coef(), coef());
    let pd = vector_dofs(&s, &px, &py);
    let qd = vector_dofs(&s, &qx, &qy);
    let (mut mass, mut energy) = (0.0, 0.0);
    for (x, w) in s.quad.points.iter().zip(&s.quad.weights) {
        let (v, dx, dy) = s.basis.eval_with_grad(*x);
        mass += w * m.rho * (v.dot(&px) * v.dot(&qx) + v.dot(&py) * v.dot(&qy));
        let gp = [[dx.dot(&px), dy.dot(&px)], [dx.dot(&py), dy.dot(&py)]];
        let gq = [[dx.dot(&qx), dy.dot(&qx)], [dx.dot(&qy), dy.dot(&qy)]];
        energy += w * strain_energy(&m, gp, gq);
    }
    let mh = qd.dot(&(&lm.m * &pd));
    let ah = qd.dot(&(&lm.k * &pd));
    let cs = pd.norm() * qd.norm();
    prop_assert!((mh - mass).abs() <= 1e-10 * lm.m.norm() * cs, "m_h {mh} vs {mass}");
    prop_assert!((ah - energy).abs() <= 1e-10 * lm.k.norm() * cs, "a_h {ah} vs {energy}");
    Ok(())
}

fn prop_rigid(g: Option<ElementGeometry>, k: usize, lam: f64, mu: f64) -> Result<(), TestCaseError> {
    let g = g.ok_or_else(|| TestCaseError::reject("invalid polygon"))?;
    let (s, p) = space(&g, k)?;
    let m = Material::new(1.0, lam, mu).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let km = local_matrices(&s, &p, &m, Stabilization::Elliptic).k;
    let n = s.ndofs();
    let one = s.dof_functionals(|_| 1.0);
    let rx = s.dof_functionals(|x| -(x.y - g.centroid.y));
    let ry = s.dof_functionals(|x| x.x - g.centroid.x);
    let stack = |a: &DVector<f64>, b: &DVector<f64>| DVector::from_fn(2 * n, |i, _| if i < n { a[i] } else { b[i - n] });
    let zero = DVector::zeros(n);
    for (name, mode) in [("x", stack(&one, &zero)), ("y", stack(&zero, &one)), ("rotation", stack(&rx, &ry))] {
        let r = (&km * &mode).amax() / (km.amax() * mode.amax());
        prop_assert!(r <= 1e-11, "{name} mode residual {r:e}");
    }
    // Kernel dimension of the Jacobi-scaled matrix, which is congruent to K.
    let dinv = DMatrix::from_diagonal(&km.diagonal().map(|v| 1.0 / v.sqrt()));
    let ev = (&dinv * &km * &dinv).symmetric_eigenvalues();
    let tol = 1e-11 * ev.amax();
    prop_assert_eq!(ev.iter().filter(|v| v.abs() < tol).count(), 3);
    Ok(())
}

fn prop_p1(pts: [(f64, f64); 3], mat: (f64, f64, f64)) -> Result<(), TestCaseError> {
    let mut v: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
    let cross = (v[1] - v[0]).perp(&(v[2] - v[0]));
    if cross.abs() < 1e-2 {
        return Err(TestCaseError::reject("degenerate triangle"));
    }
    if cross < 0.0 {
        v.swap(1, 2);
    }
    let g = PolygonalMesh::new(v, vec![vec![0, 1, 2]], &HashMap::new())
        .map_err(|e| TestCaseError::reject(e.to_string()))?
        .geometry(0);
    let (s, p) = space(&g, 1)?;
    let m = Material::new(mat.0, mat.1, mat.2).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let lm = local_matrices(&s, &p, &m, Stabilization::Elliptic);
    let x = &g.vertices;
    let area = g.area;
    let grads: Vec<Vector2<f64>> = (0..3)
        .map(|i| {
            let (b, c) = (x[(i + 1) % 3], x[(i + 2) % 3]);
            Vector2::new(b.y - c.y, c.x - b.x) / (2.0 * area)
        })
        .collect();
    let (lam, mu) = (m.lambda, m.mu);
    let mut kex = DMatrix::zeros(6, 6);
    let mut mex = DMatrix::zeros(6, 6);
    for i in 0..3 {
        for j in 0..3 {
            let (gi, gj) = (grads[i], grads[j]);
            kex[(i, j)] = area * ((2.0 * mu + lam) * gi.x * gj.x + mu * gi.y * gj.y);
            kex[(i, j + 3)] = area * (lam * gi.x * gj.y + mu * gi.y * gj.x);
            kex[(i + 3, j)] = area * (lam * gi.y * gj.x + mu * gi.x * gj.y);
            kex[(i + 3, j + 3)] = area * (mu * gi.x * gj.x + (2.0 * mu + lam) * gi.y * gj.y);
            let mij = m.rho * area / 12.0 * if i == j { 2.0 } else { 1.0 };
            mex[(i, j)] = mij;
            mex[(i + 3, j + 3)] = mij;
        }
    }
    let ek = (&lm.k - &kex).amax() / kex.amax();
    let em = (&lm.m - &mex).amax() / mex.amax();
    prop_assert!(ek <= 1e-12 && em <= 1e-12, "K {ek:e}, M {em:e}");
    Ok(())
}

fn prop_leapfrog(seed: u64, k: usize) -> Result<(), TestCaseError> {
    let mesh = generate_family(MeshFamily::RandomQuad, 0, seed);
    let mat = Material::new(1.0, 1.0, 1.0).unwrap();
    let sys = assemble_global(&mesh, mat, Discretization::new(k), true).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let solver = SpdSolver::cholesky(&sys.mass).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let est = cfl_timestep(&sys.mass, &sys.stiffness, &solver, 0.9).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let lf = LeapFrog::with_solver(sys.mass.clone(), sys.stiffness.clone(), solver, est.dt);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sys.num_free();
    let u0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let v0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let start = lf.initial_step(&u0, &v0, &DVector::zeros(n)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let e0 = lf.energy(&start);
    let mut st = start.clone();
    let mut drift: f64 = 0.0;
    for _ in 0..10_000 {
        lf.step(&mut st, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
        drift = drift.max((lf.energy(&st) - e0).abs() / e0);
    }
    prop_assert!(drift <= 1e-10, "energy drift {drift:e}");
    let mut back = st.reversed();
    lf.run(&mut back, 10_000, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let scale = start.u_curr.amax().max(start.u_prev.amax());
    let rev = (&back.u_curr - &start.u_prev)
        .amax()
        .max((&back.u_prev - &start.u_curr).amax())
        / scale;
    prop_assert!(rev <= 1e-10, "reversal error {rev:e}");
    Ok(())
}

fn grid_strategy() -> impl Strategy<Value = ReferenceGrid> {
    prop::sample::select(ReferenceGrid::ALL.to_vec())
}

fn cmax(a: &DMatrix<num_complex::Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn prop_bloch(grid: ReferenceGrid, k: usize, kx: f64, ky: f64, r: f64) -> Result<(), TestCaseError> {
    let m = Material::from_speeds(2f64.sqrt(), r).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let sys = BlochSystem::new(grid, k, m, BasisKind::Orthonormal).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let red = sys.reduce(Vector2::new(kx, ky));
    let hm = cmax(&(&red.mass - red.mass.adjoint())) / cmax(&red.mass);
    let hk = cmax(&(&red.stiffness - red.stiffness.adjoint())) / cmax(&red.stiffness);
    prop_assert!(hm <= 1e-13 && hk <= 1e-13, "Hermitian defect M {hm:e}, K {hk:e}");
    prop_assert!(red.mass.clone().cholesky().is_some(), "reduced mass is not definite");
    let ev = bloch_eigenvalues(&red).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(ev[0] >= -1e-10 * ev[ev.len() - 1], "negative eigenvalue {:e}", ev[0]);
    Ok(())
}

fn prop_symmetry(grid: ReferenceGrid, k: usize, theta: f64) -> Result<(), TestCaseError> {
    let at = |t: f64| dispersion(&DispersionConfig::new(grid, k, 0.1, t, 2.0));
    let a = at(theta).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for (name, t) in [("θ+π", theta + PI), ("π/2−θ", PI / 2.0 - theta)] {
        let b = at(t).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let d = (a.c_s_h - b.c_s_h).abs().max((a.c_p_h - b.c_p_h).abs());
        prop_assert!(d <= 1e-10, "{name}: phase velocity differs by {d:e}");
    }
    Ok(())
}

fn criterion_8(rep: &mut Report) {
    run_suite(
        rep,
        "C8a",
        "projector reproduction on built-in cells, k ≤ 8, to 1e-11",
        48,
        (builtin_strategy(), 1usize..=8),
        |(g, k)| prop_reproduction(g, k),
    );
    let mut runner = TestRunner::deterministic();
    let mut worst = (0.0f64, String::new());
    for _ in 0..32 {
        let Some(g) = shape_strategy().new_tree(&mut runner).unwrap().current() else { continue };
        if let Ok((e, at)) = reproduction_error(&g, 8) {
            if e > worst.0 {
                worst = (e, format!("{at}, {}-gon", g.vertices.len()));
            }
        }
    }
    info(format!("random polygons: worst k = 8 reproduction error {:.2e} at {} (not gated)", worst.0, worst.1));
    run_suite(
        rep,
        "C8b",
        "m_h and a_h patch tests to 1e-10",
        32,
        (shape_strategy(), 1usize..=5, (0.1f64..10.0, 0.0f64..10.0, 0.1f64..10.0), any::<u64>()),
        |(g, k, m, seed)| prop_patch(g, k, m, seed),
    );
    run_suite(
        rep,
        "C8c",
        "rigid-body kernel of K_loc to 1e-11",
        32,
        (shape_strategy(), 1usize..=6, 0.0f64..10.0, 0.1f64..10.0),
        |(g, k, lam, mu)| prop_rigid(g, k, lam, mu),
    );
    let pt = || (-2.0f64..2.0, -2.0f64..2.0);
    run_suite(
        rep,
        "C8d",
        "k = 1 triangle equals P1 finite elements to 1e-12",
        64,
        ([pt(), pt(), pt()], (0.1f64..10.0, 0.0f64..10.0, 0.1f64..10.0)),
        |(p, m)| prop_p1(p, m),
    );
    run_suite(
        rep,
        "C8ef",
        "leap-frog energy drift and reversal over 1e4 steps to 1e-10",
        4,
        (0u64..1000, 1usize..=3),
        |(seed, k)| prop_leapfrog(seed, k),
    );
    run_suite(
        rep,
        "C8g",
        "Bloch matrices Hermitian-definite",
        24,
        (grid_strategy(), 1usize..=3, -PI..PI, -PI..PI, 1.5f64..4.0),
        |(g, k, kx, ky, r)| prop_bloch(g, k, kx, ky, r),
    );
    run_suite(
        rep,
        "C8h",
        "square-lattice angle symmetries to 1e-10",
        12,
        (
            prop::sample::select(vec![ReferenceGrid::Quad, ReferenceGrid::Tria]),
            1usize..=3,
            0.05f64..(PI / 2.0 - 0.05),
        ),
        |(g, k, t)| prop_symmetry(g, k, t),
    );
}

fn main() {
    let mut rep = Report { failed: Vec::new() };
    let t = Instant::now();
    criterion_1(&mut rep);
    criterion_2(&mut rep);
    criterion_3(&mut rep);
    criterion_4(&mut rep);
    criterion_5(&mut rep);
    criterion_6(&mut rep);
    criterion_7(&mut rep);
    criterion_8(&mut rep);
    println!("acceptance: {} failed {:?}, {:.0} s", rep.failed.len(), rep.failed, t.elapsed().as_secs_f64());
    if !rep.failed.is_empty() {
        std::process::exit(1);
    }
}
