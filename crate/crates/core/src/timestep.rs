//! Leap-frog time marching for M ü + K u = F.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::linalg::{largest_generalized_eigenvalue, CsrMatrix, LinalgError, SpdSolver};

#[derive(Debug, Error)]
pub enum TimestepError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("solution blew up at step {step} (t = {time:e}); {}", suggestion(*.suggested_dt))]
    Unstable {
        step: usize,
        time: f64,
        suggested_dt: Option<f64>,
    },
    #[error("size mismatch: expected {expected} DOFs, got {got}")]
    Size { expected: usize, got: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn suggestion(dt: Option<f64>) -> String {
    match dt {
        Some(dt) => format!("the CFL estimate suggests Δt ≤ {dt:e}"),
        None => "reduce Δt".into(),
    }
}

/// Two consecutive displacement levels, u^{n−1} and u^n.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub u_prev: DVector<f64>,
    pub u_curr: DVector<f64>,
    pub n: usize,
    pub dt: f64,
}

impl SimulationState {
    pub fn time(&self) -> f64 {
        self.n as f64 * self.dt
    }

    /// Velocity (u^n − u^{n−1})/Δt at the half step.
    pub fn velocity(&self) -> DVector<f64> {
        (&self.u_curr - &self.u_prev) / self.dt
    }

    /// Swaps the two levels, so the next steps march backwards in time.
    pub fn reversed(&self) -> Self {
        Self {
            u_prev: self.u_curr.clone(),
            u_curr: self.u_prev.clone(),
            n: self.n,
            dt: self.dt,
        }
    }

    pub fn is_finite_and_bounded(&self) -> bool {
        self.u_curr.iter().all(|v| v.is_finite() && v.abs() <= BLOWUP)
    }
}

const BLOWUP: f64 = 1e12;
const MAGIC: &[u8; 8] = b"VEMCKPT\0";

/// Leap-frog integrator with a single factorization of M.
#[derive(Debug)]
pub struct LeapFrog {
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    solver: SpdSolver,
    dt: f64,
    suggested_dt: Option<f64>,
}

impl LeapFrog {
    pub fn new(mass: CsrMatrix, stiffness: CsrMatrix, dt: f64) -> Result<Self, TimestepError> {
        let solver = SpdSolver::cholesky(&mass)?;
        Ok(Self::with_solver(mass, stiffness, solver, dt))
    }

    pub fn with_solver(mass: CsrMatrix, stiffness: CsrMatrix, solver: SpdSolver, dt: f64) -> Self {
        Self {
            mass,
            stiffness,
            solver,
            dt,
            suggested_dt: None,
        }
    }

    /// Reported in instability errors.
    pub fn set_suggested_dt(&mut self, dt: f64) {
        self.suggested_dt = Some(dt);
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn solver(&self) -> &SpdSolver {
        &self.solver
    }

    fn check(&self, v: &DVector<f64>) -> Result<(), TimestepError> {
        let n = self.mass.nrows();
        if v.len() != n {
            return Err(TimestepError::Size {
                expected: n,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// u¹ = u⁰ + Δt u̇⁰ + (Δt²/2) M⁻¹(F⁰ − K u⁰).
    pub fn initial_step(
        &self,
        u0: &DVector<f64>,
        v0: &DVector<f64>,
        f0: &DVector<f64>,
    ) -> Result<SimulationState, TimestepError> {
        self.check(u0)?;
        self.check(v0)?;
        self.check(f0)?;
        let dt = self.dt;
        let acc = self.solver.solve(&(f0 - self.stiffness.mul_vec(u0)))?;
        let u1 = u0 + v0 * dt + acc * (0.5 * dt * dt);
        let state = SimulationState {
            u_prev: u0.clone(),
            u_curr: u1,
            n: 1,
            dt,
        };
        self.guard(&state)?;
        Ok(state)
    }

    fn guard(&self, state: &SimulationState) -> Result<(), TimestepError> {
        if state.is_finite_and_bounded() {
            Ok(())
        } else {
            Err(TimestepError::Unstable {
                step: state.n,
                time: state.time(),
                suggested_dt: self.suggested_dt,
            })
        }
    }

    /// u^{n+1} = 2u^n − u^{n−1} + Δt² M⁻¹(F^n − K u^n).
    pub fn step(&self, state: &mut SimulationState, f: Option<&DVector<f64>>) -> Result<(), TimestepError> {
        let mut rhs = self.stiffness.mul_vec(&state.u_curr);
        rhs.neg_mut();
        if let Some(f) = f {
            self.check(f)?;
            rhs += f;
        }
        let acc = self.solver.solve(&rhs)?;
        let mut next = &state.u_curr * 2.0 - &state.u_prev;
        next.axpy(self.dt * self.dt, &acc, 1.0);
        state.u_prev = std::mem::replace(&mut state.u_curr, next);
        state.n += 1;
        self.guard(state)
    }

    /// Advances `steps` steps, sampling the load at t_n before each one.
    pub fn run(
        &self,
        state: &mut SimulationState,
        steps: usize,
        mut load: Option<&mut dyn FnMut(f64) -> DVector<f64>>,
    ) -> Result<(), TimestepError> {
        for _ in 0..steps {
            let f = load.as_mut().map(|l| l(state.time()));
            self.step(state, f.as_ref())?;
        }
        Ok(())
    }

    /// E^{n−1/2} = ½ vᵀMv + ½ (u^n)ᵀ K u^{n−1}, conserved by unforced steps.
    pub fn energy(&self, state: &SimulationState) -> f64 {
        let v = state.velocity();
        0.5 * v.dot(&self.mass.mul_vec(&v)) + 0.5 * state.u_curr.dot(&self.stiffness.mul_vec(&state.u_prev))
    }
}

/// Stable step estimate from the extremal eigenvalue of (K, M).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflEstimate {
    pub dt: f64,
    pub lambda_max: f64,
    pub iterations: usize,
}

impl CflEstimate {
    /// C_CFL = c_P Δt / h.
    pub fn courant_number(&self, c_p: f64, h: f64) -> f64 {
        c_p * self.dt / h
    }
}

pub fn cfl_timestep(
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    mass_solver: &SpdSolver,
    safety: f64,
) -> Result<CflEstimate, TimestepError> {
    let (lambda_max, iterations) = largest_generalized_eigenvalue(stiffness, mass_solver, mass, 1e-6, 500)?;
    Ok(CflEstimate {
        dt: safety * 2.0 / lambda_max.sqrt(),
        lambda_max,
        iterations,
    })
}

pub fn write_checkpoint(path: &Path, state: &SimulationState) -> Result<(), TimestepError> {
    let mut buf = Vec::with_capacity(16 + 8 * (2 * state.u_curr.len() + 2));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(state.u_curr.len() as u64).to_le_bytes());
    for v in state.u_prev.iter().chain(state.u_curr.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(state.n as f64).to_le_bytes());
    buf.extend_from_slice(&state.dt.to_le_bytes());
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<SimulationState, TimestepError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |m: &str| TimestepError::Checkpoint(m.to_string());
    if buf.len() < 16 || &buf[..8] != MAGIC {
        return Err(bad("missing header"));
    }
    let len = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes")) as usize;
    let expected = len
        .checked_mul(2)
        .and_then(|n| n.checked_add(2))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(16))
        .ok_or_else(|| bad("length overflow"))?;
    if buf.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", buf.len())));
    }
    let vals: Vec<f64> = buf[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let n = vals[2 * len];
    if !(n >= 0.0 && n.fract() == 0.0) {
        return Err(bad("step index is not a nonnegative integer"));
    }
    Ok(SimulationState {
        u_prev: DVector::from_column_slice(&vals[..len]),
        u_curr: DVector::from_column_slice(&vals[len..2 * len]),
        n: n as usize,
        dt: vals[2 * len + 1],
    })
}
