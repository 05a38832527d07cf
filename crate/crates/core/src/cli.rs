//! Command-line front end. Flags override the `--config` file, which
//! overrides the built-in defaults.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{Discretization, Material};
use crate::dispersion::{
    anisotropy_csv, anisotropy_sweep, cfl_csv, cfl_parameter, dispersion, dispersion_csv, DeltaConvention,
    DispersionConfig, DispersionError, PWaveSampling, Sweep,
};
use crate::harness::{
    convergence_csv, prefine_csv, rate_summary, run_convergence, run_p_refinement, solve_benchmark_observed,
    BenchmarkProblem, HarnessError, TimeSettings,
};
use crate::mesh::{generate_family, read_mesh, MeshFamily, ReferenceGrid};
use crate::polybasis::BasisKind;
use crate::timestep::{write_checkpoint, SimulationState};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid value for --{flag}: {message}")]
    Validation { flag: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for bad input, 1 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } | CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn invalid(flag: &str, message: impl Into<String>) -> CliError {
    CliError::Validation {
        flag: flag.to_string(),
        message: message.into(),
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn flag_of(name: &str) -> &str {
    match name {
        "q_rel" => "q-rel",
        "n_angles" => "angles",
        "c_p" => "r",
        other => other,
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Invalid { name, message } => invalid(flag_of(name), message),
            HarnessError::Cfl { .. } => invalid("dt", e.to_string()),
            other => runtime(other),
        }
    }
}

impl From<DispersionError> for CliError {
    fn from(e: DispersionError) -> Self {
        match e {
            DispersionError::Invalid { name, message } => invalid(flag_of(name), message),
            other => runtime(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vemwave", version, about = "Virtual element solver for 2D elastodynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// h-refinement study of the manufactured benchmark.
    Convergence(ConvergenceArgs),
    /// p-refinement study on the 5×5 perturbed quadrilateral mesh.
    Prefine(PrefineArgs),
    /// Plane-wave dispersion errors on periodic reference cells.
    Dispersion(DispersionArgs),
    /// Stability parameter q_CFL per grid and degree.
    Cfl(CflArgs),
    /// Phase-velocity ratios against propagation angle.
    Anisotropy(AnisotropyArgs),
    /// Time integration of the benchmark with checkpoints and energy log.
    Solve(SolveArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Seed for the random mesh perturbation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File of `key = value` lines using the long flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TimeArgs {
    /// Time step [default: 5e-4, 1e-4 with --paper-scale].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Final time [default: 0.1, 1 with --paper-scale].
    #[arg(long = "T", visible_alias = "t-final")]
    pub t_final: Option<f64>,
    /// Use T = 1 and Δt = 1e-4.
    #[arg(long)]
    pub paper_scale: bool,
}

impl TimeArgs {
    fn resolve(&self) -> Result<TimeSettings, CliError> {
        let base = if self.paper_scale {
            TimeSettings::paper_scale()
        } else {
            TimeSettings::default()
        };
        let t = TimeSettings {
            dt: self.dt.unwrap_or(base.dt),
            t_final: self.t_final.unwrap_or(base.t_final),
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub time: TimeArgs,
    /// Mesh families: quad, hex, octagon.
    #[arg(long, value_delimiter = ',', default_value = "quad")]
    pub family: Vec<MeshFamily>,
    /// Polynomial degrees.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub k: Vec<usize>,
    /// Finest level; levels 0..=LEVELS are run.
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    /// Write 0 in the seconds column.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct PrefineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub time: TimeArgs,
    /// Highest degree, at most 10.
    #[arg(long, default_value_t = 6)]
    pub k_max: usize,
    #[arg(long, default_value = "orthonormal")]
    pub basis: BasisKind,
    /// Write 0 in the seconds column.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct WaveArgs {
    /// P-wave sampling: shared-frequency or shared-wavevector.
    #[arg(long, default_value = "shared-frequency", value_parser = parse_sampling)]
    pub sampling: PWaveSampling,
    /// What δ counts: per-node (δ = h/(kL)) or per-cell (δ = h/L).
    #[arg(long, default_value = "per-node", value_parser = parse_delta_convention)]
    pub delta_convention: DeltaConvention,
    #[arg(long, default_value = "orthonormal")]
    pub basis: BasisKind,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct DispersionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub wave: WaveArgs,
    /// Reference grids: quad, tria, c1..c4.
    #[arg(long, value_delimiter = ',', default_value = "quad,tria,c1,c2,c3,c4")]
    pub grid: Vec<ReferenceGrid>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    pub k: Vec<usize>,
    /// Sampling ratios.
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub delta: Vec<f64>,
    /// Propagation angles in radians; `pi/4` style values are accepted.
    #[arg(long, value_delimiter = ',', default_value = "pi/4", value_parser = parse_angle)]
    pub theta: Vec<f64>,
    /// Speed ratios c_P/c_S.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub r: Vec<f64>,
    /// Relative Courant numbers; 0 means exact time integration.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub q_rel: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct CflArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "quad,tria")]
    pub grid: Vec<ReferenceGrid>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    pub k: Vec<usize>,
    /// Sampling ratio fixing |𝐤| of the θ sweep.
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    #[arg(long, default_value = "per-node", value_parser = parse_delta_convention)]
    pub delta_convention: DeltaConvention,
    #[arg(long, default_value = "orthonormal")]
    pub basis: BasisKind,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct AnisotropyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub wave: WaveArgs,
    #[arg(long, default_value = "quad")]
    pub grid: ReferenceGrid,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub r: f64,
    /// Relative Courant number; 0 means exact time integration.
    #[arg(long, default_value_t = 0.0)]
    pub q_rel: f64,
    #[arg(long, default_value_t = 64)]
    pub angles: usize,
}

#[derive(Debug, Clone, Args)]
#[command(allow_negative_numbers = true)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub time: TimeArgs,
    /// Mesh file; without it the built-in family mesh is used.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value = "quad")]
    pub family: MeshFamily,
    #[arg(long, default_value_t = 0)]
    pub level: u32,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value = "monomial")]
    pub basis: BasisKind,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Snapshot interval in steps, 0 for none.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Energy log interval in steps.
    #[arg(long, default_value_t = 100)]
    pub energy_every: usize,
}

fn parse_sampling(s: &str) -> Result<PWaveSampling, String> {
    match s.to_ascii_lowercase().as_str() {
        "shared-frequency" | "frequency" => Ok(PWaveSampling::SharedFrequency),
        "shared-wavevector" | "wavevector" => Ok(PWaveSampling::SharedWavevector),
        other => Err(format!("unknown sampling '{other}'")),
    }
}

fn parse_delta_convention(s: &str) -> Result<DeltaConvention, String> {
    match s.to_ascii_lowercase().as_str() {
        "per-node" | "node" => Ok(DeltaConvention::PerNode),
        "per-cell" | "cell" => Ok(DeltaConvention::PerCell),
        other => Err(format!("unknown δ convention '{other}'")),
    }
}

/// Radians, or multiples of π such as `pi/4`, `3pi/4`, `π`.
fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim().to_ascii_lowercase().replace('π', "pi");
    let Some(at) = t.find("pi") else {
        return t.parse().map_err(|_| format!("cannot parse angle '{s}'"));
    };
    let coef = t[..at].trim_end_matches('*');
    let coef: f64 = if coef.is_empty() {
        1.0
    } else {
        coef.parse().map_err(|_| format!("cannot parse angle '{s}'"))?
    };
    let rest = &t[at + 2..];
    let div: f64 = match rest.strip_prefix('/') {
        Some(d) => d.parse().map_err(|_| format!("cannot parse angle '{s}'"))?,
        None if rest.is_empty() => 1.0,
        None => return Err(format!("cannot parse angle '{s}'")),
    };
    Ok(coef * PI / div)
}

/// `key = value` pairs; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(invalid("config", format!("line {}: expected key = value", i + 1)));
        };
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(invalid("config", format!("line {}: empty key", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Appends config entries whose flags are absent from `argv`.
fn merge_config(mut argv: Vec<String>, entries: &[(String, String)]) -> Result<Vec<String>, CliError> {
    let root = Cli::command();
    let Some(sub) = argv
        .iter()
        .skip(1)
        .find_map(|a| root.get_subcommands().find(|c| c.get_name() == a))
    else {
        return Ok(argv);
    };
    let mut extra = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long_and_visible_aliases().is_some_and(|l| l.contains(&key.as_str())))
            .filter(|a| a.get_id() != "config")
            .ok_or_else(|| invalid("config", format!("unknown key '{key}' for {}", sub.get_name())))?;
        let names = arg.get_long_and_visible_aliases().unwrap_or_default();
        let given = argv.iter().any(|a| {
            names
                .iter()
                .any(|n| a.strip_prefix("--").is_some_and(|r| r == *n || r.starts_with(&format!("{n}="))))
        });
        if given {
            continue;
        }
        let long = arg.get_long().expect("config keys are long flags");
        if arg.get_action().takes_values() {
            extra.push(format!("--{long}"));
            extra.push(value.clone());
        } else {
            match value.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => extra.push(format!("--{long}")),
                "false" | "no" | "0" => {}
                _ => return Err(invalid(long, format!("expected true or false in config, got '{value}'"))),
            }
        }
    }
    argv.extend(extra);
    Ok(argv)
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn parse_and_dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    match try_parse_and_dispatch(argv.into_iter().map(Into::into).collect()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn try_parse_and_dispatch(argv: Vec<String>) -> Result<(), CliError> {
    let argv = match config_path(&argv) {
        Some(p) => {
            let text = fs::read_to_string(&p)
                .map_err(|e| invalid("config", format!("cannot read {}: {e}", p.display())))?;
            merge_config(argv, &parse_config(&text)?)?
        }
        None => argv,
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    let common = match &cli.command {
        Command::Convergence(a) => &a.common,
        Command::Prefine(a) => &a.common,
        Command::Dispersion(a) => &a.common,
        Command::Cfl(a) => &a.common,
        Command::Anisotropy(a) => &a.common,
        Command::Solve(a) => &a.common,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(runtime)?;
    pool.install(|| match &cli.command {
        Command::Convergence(a) => convergence(a),
        Command::Prefine(a) => prefine(a),
        Command::Dispersion(a) => dispersion_cmd(a),
        Command::Cfl(a) => cfl(a),
        Command::Anisotropy(a) => anisotropy(a),
        Command::Solve(a) => solve(a),
    })
}

fn write_output(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn check_degrees(ks: &[usize], max: usize) -> Result<(), CliError> {
    if ks.is_empty() {
        return Err(invalid("k", "at least one degree is required"));
    }
    match ks.iter().find(|&&k| k == 0 || k > max) {
        Some(k) => Err(invalid("k", format!("1 ≤ k ≤ {max} is required, got {k}"))),
        None => Ok(()),
    }
}

fn convergence(a: &ConvergenceArgs) -> Result<(), CliError> {
    let time = a.time.resolve()?;
    check_degrees(&a.k, 10)?;
    if a.levels > 7 {
        return Err(invalid("levels", format!("at most 7 levels are supported, got {}", a.levels)));
    }
    if a.family.is_empty() {
        return Err(invalid("family", "at least one family is required"));
    }
    let levels: Vec<u32> = (0..=a.levels).collect();
    let mut records = Vec::new();
    for &family in &a.family {
        let rows = run_convergence(family, &a.k, &levels, time, a.common.seed)?;
        for &k in &a.k {
            if let Some(r) = rate_summary(&rows, k) {
                println!(
                    "{} k = {k}: L2 slope {:.2}, H1 slope {:.2}",
                    family.name(),
                    r.l2_slope,
                    r.h1_slope
                );
            }
        }
        records.extend(rows);
    }
    if a.no_timing {
        records.iter_mut().for_each(|r| r.seconds = 0.0);
    }
    let path = write_output(&a.common.out, "convergence.csv", convergence_csv(&records).as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn prefine(a: &PrefineArgs) -> Result<(), CliError> {
    let time = a.time.resolve()?;
    if !(1..=10).contains(&a.k_max) {
        return Err(invalid("k-max", format!("1 ≤ k_max ≤ 10 is required, got {}", a.k_max)));
    }
    let mut records = run_p_refinement(a.k_max, a.basis, time, a.common.seed)?;
    for r in &records {
        if let Some(f) = &r.failure {
            println!("k = {}: {f}", r.k);
        }
    }
    if a.no_timing {
        records.iter_mut().for_each(|r| r.seconds = 0.0);
    }
    let path = write_output(&a.common.out, "prefine.csv", prefine_csv(&records).as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn q_rel_of(q: f64) -> Option<f64> {
    (q != 0.0).then_some(q)
}

fn dispersion_cmd(a: &DispersionArgs) -> Result<(), CliError> {
    check_degrees(&a.k, 12)?;
    for (flag, empty) in [
        ("grid", a.grid.is_empty()),
        ("delta", a.delta.is_empty()),
        ("theta", a.theta.is_empty()),
        ("r", a.r.is_empty()),
        ("q-rel", a.q_rel.is_empty()),
    ] {
        if empty {
            return Err(invalid(flag, "at least one value is required"));
        }
    }
    let sweep = Sweep {
        grids: a.grid.clone(),
        ks: a.k.clone(),
        deltas: a.delta.clone(),
        thetas: a.theta.clone(),
        rs: a.r.clone(),
        q_rels: a.q_rel.iter().map(|&q| q_rel_of(q)).collect(),
        delta_convention: a.wave.delta_convention,
    };
    let configs: Vec<DispersionConfig> = sweep
        .configs()
        .into_iter()
        .map(|c| DispersionConfig {
            sampling: a.wave.sampling,
            basis: a.wave.basis,
            ..c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let rows = configs
        .par_iter()
        .map(|c| Ok((*c, dispersion(c)?)))
        .collect::<Result<Vec<_>, DispersionError>>()?;
    let path = write_output(&a.common.out, "dispersion.csv", dispersion_csv(&rows).as_bytes())?;
    println!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

fn cfl(a: &CflArgs) -> Result<(), CliError> {
    check_degrees(&a.k, 12)?;
    if a.grid.is_empty() {
        return Err(invalid("grid", "at least one grid is required"));
    }
    let mut configs = Vec::new();
    for &g in &a.grid {
        for &k in &a.k {
            let c = DispersionConfig {
                basis: a.basis,
                delta_convention: a.delta_convention,
                ..DispersionConfig::new(g, k, a.delta, 0.0, a.r)
            };
            c.validate()?;
            configs.push(c);
        }
    }
    let mut rows = Vec::new();
    for c in &configs {
        rows.push((c.grid, c.k, cfl_parameter(c)?));
    }
    let path = write_output(&a.common.out, "cfl.csv", cfl_csv(&rows).as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn anisotropy(a: &AnisotropyArgs) -> Result<(), CliError> {
    check_degrees(&[a.k], 12)?;
    if a.angles < 8 {
        return Err(invalid("angles", format!("at least 8 angles are required, got {}", a.angles)));
    }
    let c = DispersionConfig {
        q_rel: q_rel_of(a.q_rel),
        sampling: a.wave.sampling,
        delta_convention: a.wave.delta_convention,
        basis: a.wave.basis,
        ..DispersionConfig::new(a.grid, a.k, a.delta, 0.0, a.r)
    };
    c.validate()?;
    let rows = anisotropy_sweep(&c, a.angles)?;
    let path = write_output(&a.common.out, "anisotropy.csv", anisotropy_csv(&rows).as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn solve(a: &SolveArgs) -> Result<(), CliError> {
    let time = a.time.resolve()?;
    check_degrees(&[a.k], 10)?;
    for (flag, v, strict) in [("rho", a.rho, true), ("mu", a.mu, true), ("lambda", a.lambda, false)] {
        if !(v.is_finite() && (v > 0.0 || (!strict && v >= 0.0))) {
            let rel = if strict { ">" } else { "≥" };
            return Err(invalid(flag, format!("{flag} {rel} 0 is required, got {v}")));
        }
    }
    if a.energy_every == 0 {
        return Err(invalid("energy-every", "the interval must be at least 1"));
    }
    let material = Material::new(a.rho, a.lambda, a.mu).map_err(|e| invalid("rho", e.to_string()))?;
    let mesh = match &a.mesh {
        Some(p) => read_mesh(p).map_err(|e| runtime(format!("mesh {}: {e}", p.display())))?,
        None => generate_family(a.family, a.level, a.common.seed),
    };
    let problem = BenchmarkProblem {
        material,
        ..BenchmarkProblem::with_final_time(time.t_final)
    };
    let disc = Discretization::new(a.k).with_basis(a.basis);
    let steps = time.steps();
    let out = &a.common.out;
    fs::create_dir_all(out).map_err(|e| runtime(format!("cannot create {}: {e}", out.display())))?;
    let mut energy = String::from("step,time,energy\n");
    let mut last: Option<SimulationState> = None;
    let mut observe = |lf: &crate::timestep::LeapFrog, s: &SimulationState| -> Result<(), HarnessError> {
        if s.n % a.energy_every == 0 {
            let e = lf.energy(s);
            writeln!(energy, "{},{:e},{:e}", s.n, s.time(), e).expect("writing to a String");
            println!("step {:>7}  t = {:.6}  energy = {e:.12e}", s.n, s.time());
        }
        if a.checkpoint_every > 0 && s.n % a.checkpoint_every == 0 {
            write_checkpoint(&out.join(format!("snapshot_{:07}.bin", s.n)), s)?;
        }
        if s.n == steps {
            last = Some(s.clone());
        }
        Ok(())
    };
    let run = solve_benchmark_observed(&mesh, disc, &problem, time, &mut observe)?;
    let final_state = last.unwrap_or_else(|| SimulationState {
        u_prev: run.u_final.clone(),
        u_curr: run.u_final.clone(),
        n: 0,
        dt: time.dt,
    });
    write_checkpoint(&out.join("final.bin"), &final_state).map_err(runtime)?;
    if steps > 0 {
        write_output(out, "energy.csv", energy.as_bytes())?;
    }
    let summary = format!(
        "k,ndofs,steps,dt,err_l2,err_h1\n{},{},{},{:e},{:e},{:e}\n",
        a.k,
        run.system.num_free(),
        steps,
        time.dt,
        run.errors.l2,
        run.errors.h1
    );
    write_output(out, "solve.csv", summary.as_bytes())?;
    println!(
        "{steps} steps, relative L2 error {:.6e}, H1 error {:.6e}",
        run.errors.l2, run.errors.h1
    );
    Ok(())
}
