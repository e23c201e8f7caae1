//! `oqslab`: experiment runner emitting CSV.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure.

mod config;
mod csv;

use std::f64::consts::PI;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use oqslab::cqec::{self, CqecParams, MarkovBitflipState, NmCoeffs};
use oqslab::holonomy::{self, Gate, Schedule};
use oqslab::monotones::{self, StateFunction};
use oqslab::qcore::Decomposition;
use oqslab::spinbath::{self, BathSpec, BlochXY, Model};
use oqslab::{rng, subsys, weakmeas};

use crate::csv::Table;

#[derive(Parser, Debug)]
#[command(name = "oqslab", version, about = "Numerical experiments on open quantum systems")]
struct Cli {
    /// key=value file using the subcommand's long flag names; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long, short, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Writes the resolved configuration and seed as JSON to this path.
    #[arg(long, global = true, value_name = "PATH")]
    json_meta: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum Cmd {
    /// Weak-measurement random walks.
    #[command(subcommand)]
    Weakmeas(WeakmeasCmd),
    /// Differential monotonicity conditions.
    #[command(subcommand)]
    Monotone(MonotoneCmd),
    /// Central spin coupled to a spin bath.
    #[command(subcommand)]
    Spinbath(SpinbathCmd),
    /// Continuous quantum error correction.
    #[command(subcommand)]
    Cqec(CqecCmd),
    /// Subsystem fidelity under blocked noise.
    #[command(subcommand)]
    Subsys(SubsysCmd),
    /// Adiabatic holonomic gates.
    #[command(subcommand)]
    Holonomy(HolonomyCmd),
    /// Data series for a named figure at fixed parameters.
    Reproduce(ReproduceArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum WeakmeasCmd {
    /// Absorbing walks for the computational-basis measurement; outcome 1 is |0>.
    Walk(WalkArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum MonotoneCmd {
    /// Invariance, measurement and convexity checks on random three-qubit states.
    Check(MonotoneArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum SpinbathCmd {
    /// Exact dynamics against an approximate master equation, in units of αt.
    Compare(CompareArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum CqecCmd {
    /// Markovian bit flips at rate λ = 1, correction rate r; time in units of 1/λ.
    Markov(MarkovArgs),
    /// Bath-qubit coupling γ = 1, correction rate R; time in units of 1/γ.
    Nonmarkov(NonmarkovArgs),
    /// Spectrum of the 13-dimensional three-qubit generator.
    Eigen(EigenArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum SubsysCmd {
    /// Non-decrease of F^A under random blocked channels.
    Fa(FaArgs),
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum HolonomyCmd {
    /// One gate recipe; T is the duration of each path segment.
    Run(HolonomyArgs),
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct WalkArgs {
    /// Probability of outcome 1 in the initial state.
    #[arg(long, default_value_t = 0.7)]
    p1: f64,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 6.0)]
    xcut: f64,
    /// Starting walk coordinate.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
enum MonotoneName {
    #[serde(rename = "trace")]
    Trace,
    #[serde(rename = "purity")]
    Purity,
    #[serde(rename = "entropy")]
    Entropy,
    #[value(name = "phi_abc")]
    #[serde(rename = "phi_abc")]
    PhiAbc,
}

impl MonotoneName {
    fn key(self) -> &'static str {
        match self {
            MonotoneName::Trace => "trace",
            MonotoneName::Purity => "purity",
            MonotoneName::Entropy => "entropy",
            MonotoneName::PhiAbc => "phi_abc",
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct MonotoneArgs {
    #[arg(long, value_enum)]
    name: MonotoneName,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Exact,
    Nz2,
    Nz3,
    Nz4,
    Tcl2,
    Tcl3,
    Tcl4,
    Pm,
    Cg,
}

impl ModelArg {
    fn model(self) -> Model {
        match self {
            ModelArg::Exact => Model::Exact,
            ModelArg::Nz2 => Model::Nz2,
            ModelArg::Nz3 => Model::Nz3,
            ModelArg::Nz4 => Model::Nz4,
            ModelArg::Tcl2 => Model::Tcl2,
            ModelArg::Tcl3 => Model::Tcl3,
            ModelArg::Tcl4 => Model::Tcl4,
            ModelArg::Pm => Model::Pm,
            ModelArg::Cg => Model::Cg,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct CompareArgs {
    /// Number of bath spins.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Inverse bath temperature.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = ModelArg::Tcl2)]
    model: ModelArg,
    /// Final αt.
    #[arg(long, default_value_t = 5.0)]
    tmax: f64,
    /// Grid intervals; the grid has steps + 1 points.
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// Draw g_n and Ω_n uniformly from [-1, 1] instead of setting them to 1.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = clap::ArgAction::Set)]
    random: bool,
    /// Random baths averaged when --random is set.
    #[arg(long, default_value_t = 50)]
    ensemble: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    vx0: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    vy0: f64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct MarkovArgs {
    /// Correction to bit-flip rate ratio κ/λ.
    #[arg(long, default_value_t = 10.0)]
    r: f64,
    #[arg(long, default_value_t = 5.0)]
    tmax: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct NonmarkovArgs {
    /// Correction rate to coupling ratio κ/γ.
    #[arg(long = "R", default_value_t = 10.0)]
    #[serde(rename = "R")]
    big_r: f64,
    #[arg(long, default_value_t = 10.0)]
    tmax: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct EigenArgs {
    #[arg(long = "R", default_value_t = 100.0)]
    #[serde(rename = "R")]
    big_r: f64,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct FaArgs {
    /// Subsystem dimensions d_A,d_B,d_K.
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "2,2,1")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum GateArg {
    Z,
    X,
    Hadamard,
    Phase,
    Cnot,
}

impl GateArg {
    fn gate(self) -> Gate {
        match self {
            GateArg::Z => Gate::Z,
            GateArg::X => Gate::X,
            GateArg::Hadamard => Gate::Hadamard,
            GateArg::Phase => Gate::Phase,
            GateArg::Cnot => Gate::Cnot,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ScheduleArg {
    Linear,
    Trig,
    Smooth,
}

impl ScheduleArg {
    fn schedule(self) -> Schedule {
        match self {
            ScheduleArg::Linear => Schedule::Linear,
            ScheduleArg::Trig => Schedule::Trig,
            ScheduleArg::Smooth => Schedule::SmoothBump,
        }
    }
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct HolonomyArgs {
    #[arg(long, value_enum, default_value_t = GateArg::Z)]
    gate: GateArg,
    /// Duration of each path segment (the default is 100 T_d with T_d = π/2).
    #[arg(long = "T", default_value_t = 100.0 * holonomy::T_D)]
    #[serde(rename = "T")]
    t: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Smooth)]
    schedule: ScheduleArg,
    /// Propagation steps per segment.
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FigureId {
    /// Single-qubit code fidelity for R in {1, 2, 5}.
    CqecFig1,
    /// Three-qubit code at R = 100, long times.
    CqecFig3,
    /// Three-qubit code at R = 100, short times.
    CqecFig4,
    /// Exact and TCL2/3/4 at N = 100 for β in {1, 10}.
    SpinbathN100Tcl,
    /// Exact and TCL2/3/4 at N = 4 for β in {1, 10}.
    SpinbathN4Tcl,
}

#[derive(Args, Debug, Serialize)]
#[command(args_override_self = true)]
struct ReproduceArgs {
    #[arg(value_enum)]
    id: FigureId,
}

// ---------------------------------------------------------------------------
// Failure classes

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<oqslab::Error> for Failure {
    fn from(e: oqslab::Error) -> Self {
        Failure::Numeric(e.to_string())
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> Failure {
    Failure::Config(format!("field '{name}': {msg}"))
}

fn positive(name: &str, v: f64) -> Result<(), Failure> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be a positive finite number, got {v}")))
    }
}

fn nonzero(name: &str, v: usize) -> Result<(), Failure> {
    if v == 0 {
        Err(field(name, "must be at least 1"))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Subcommands

fn weakmeas_walk(a: &WalkArgs) -> Result<Table, Failure> {
    if !(0.0..=1.0).contains(&a.p1) {
        return Err(field("p1", format!("must lie in [0, 1], got {}", a.p1)));
    }
    if !(a.eps > 0.0 && a.eps < 0.5) {
        return Err(field("eps", format!("must lie in (0, 0.5), got {}", a.eps)));
    }
    positive("xcut", a.xcut)?;
    if !(a.x0.abs() < a.xcut) {
        return Err(field("x0", format!("must lie strictly inside (-xcut, xcut), got {}", a.x0)));
    }
    nonzero("trials", a.trials)?;
    let rho0 = weakmeas::qubit_state(a.p1)?;
    let meas = weakmeas::TwoOutcomeMeasurement::qubit_projective();
    let mut cfg = weakmeas::WalkConfig::new(a.eps, a.xcut, a.seed);
    cfg.x_start = a.x0;
    let runs = weakmeas::run_ensemble(&rho0, &meas, &cfg, a.trials)?;
    let mut t = Table::new(&["trial", "outcome", "steps", "final_x"]);
    for (i, w) in runs.iter().enumerate() {
        t.row(row![i, w.outcome_index, w.steps, w.final_x]);
    }
    Ok(t)
}

fn monotone_check(a: &MonotoneArgs) -> Result<Table, Failure> {
    nonzero("trials", a.trials)?;
    let f = StateFunction::builtin(a.name.key())?;
    let rows = monotones::run_checks(&f, a.trials, a.seed)?;
    let mut t = Table::new(&["trial", "condition", "value", "pass"]);
    for r in rows {
        t.row(row![r.trial, r.condition, r.value, r.pass]);
    }
    Ok(t)
}

fn spinbath_compare(a: &CompareArgs) -> Result<Table, Failure> {
    nonzero("n", a.n)?;
    if !(a.beta.is_finite() && a.beta >= 0.0) {
        return Err(field("beta", format!("must be finite and non-negative, got {}", a.beta)));
    }
    positive("tmax", a.tmax)?;
    nonzero("steps", a.steps)?;
    let v0 = BlochXY::new(a.vx0, a.vy0);
    if !v0.in_ball() {
        return Err(field("vx0", format!("initial Bloch vector ({}, {}) lies outside the unit ball", a.vx0, a.vy0)));
    }
    let specs = if a.random {
        nonzero("ensemble", a.ensemble)?;
        (0..a.ensemble)
            .map(|i| BathSpec::random(a.n, a.beta, 1.0, &mut rng::stream(a.seed, i as u64)))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![BathSpec::uniform(a.n, a.beta, 1.0)?]
    };
    let grid = spinbath::uniform_grid(a.tmax, a.steps);
    let rows = spinbath::compare(&specs, a.model.model(), v0, &grid)?;
    let mut t = Table::new(&["alpha_t", "vx_exact", "vx_model", "trace_distance"]);
    for r in rows {
        t.row(row![r.alpha_t, r.vx_exact, r.vx_model, r.trace_distance]);
    }
    Ok(t)
}

fn cqec_markov(a: &MarkovArgs) -> Result<Table, Failure> {
    if !(a.r.is_finite() && a.r >= 0.0) {
        return Err(field("r", format!("must be finite and non-negative, got {}", a.r)));
    }
    positive("tmax", a.tmax)?;
    nonzero("steps", a.steps)?;
    let p = CqecParams::markov(a.r)?;
    let grid = spinbath::uniform_grid(a.tmax, a.steps);
    let three = cqec::markov_bitflip(&p, MarkovBitflipState::codeword(), &grid)?;
    let mut t = Table::new(&["t", "fidelity_single", "fidelity_three", "outside_weight"]);
    for (&time, s) in grid.iter().zip(&three) {
        t.row(row![time, cqec::markov_single(1.0, &p, time), s.a, s.outside()]);
    }
    Ok(t)
}

fn cqec_nonmarkov(a: &NonmarkovArgs) -> Result<Table, Failure> {
    if !(a.big_r.is_finite() && a.big_r >= 0.0) {
        return Err(field("R", format!("must be finite and non-negative, got {}", a.big_r)));
    }
    positive("tmax", a.tmax)?;
    nonzero("steps", a.steps)?;
    let p = CqecParams::nonmarkov(a.big_r)?;
    let grid = spinbath::uniform_grid(a.tmax, a.steps);
    let three = cqec::nm_bitflip_evolve(&p, NmCoeffs::codeword(), &grid)?;
    let mut t = Table::new(&["t", "fidelity_single", "fidelity_three"]);
    for (&time, c) in grid.iter().zip(&three) {
        t.row(row![time, cqec::nonmarkov_single(&p, time).0, c.fidelity()]);
    }
    Ok(t)
}

fn cqec_eigen(a: &EigenArgs) -> Result<Table, Failure> {
    positive("R", a.big_r)?;
    let p = CqecParams::nonmarkov(a.big_r)?;
    let mut ev = cqec::nm_eigenvalues(&p)?;
    // Ties in |λ| broken by real then imaginary part so the order is total.
    ev.sort_by(|x, y| x.norm().total_cmp(&y.norm()).then(x.re.total_cmp(&y.re)).then(x.im.total_cmp(&y.im)));
    let mut t = Table::new(&["re", "im"]);
    for l in ev {
        t.row(row![l.re, l.im]);
    }
    Ok(t)
}

fn subsys_fa(a: &FaArgs) -> Result<Table, Failure> {
    let [da, db, dk] = a.dims[..] else {
        return Err(field("dims", format!("expected three values dA,dB,dK, got {}", a.dims.len())));
    };
    nonzero("trials", a.trials)?;
    let decomp = Decomposition::new(da, db, dk).map_err(|e| field("dims", e))?;
    if dk == 0 {
        return Err(field("dims", "dK must be at least 1"));
    }
    let report = subsys::check_fa_monotone_under_blocked_noise(decomp, a.trials, a.seed)?;
    let mut t = Table::new(&["trial", "fa_before", "fa_after", "pass"]);
    for r in report.trials {
        t.row(row![r.trial, r.fa_before, r.fa_after, r.pass]);
    }
    Ok(t)
}

fn holonomy_run(a: &HolonomyArgs) -> Result<Table, Failure> {
    positive("T", a.t)?;
    nonzero("steps", a.steps)?;
    let run = holonomy::run_gate(a.gate.gate(), a.t, a.schedule.schedule(), a.steps)?;
    let mut t = Table::new(&["T", "leakage", "gate_fidelity", "phase0", "phase1"]);
    t.row(row![a.t, run.leakage(), run.gate_fidelity, run.phase0, run.phase1]);
    Ok(t)
}

fn reproduce(a: &ReproduceArgs) -> Result<Table, Failure> {
    match a.id {
        FigureId::CqecFig1 => {
            let grid = spinbath::uniform_grid(10.0, 1000);
            let mut t = Table::new(&["R", "gamma_t", "fidelity", "alpha_star"]);
            for big_r in [1.0, 2.0, 5.0] {
                let p = CqecParams::nonmarkov(big_r)?;
                for &time in &grid {
                    t.row(row![big_r, time, cqec::nonmarkov_single(&p, time).0, cqec::nonmarkov_alpha_star(big_r)]);
                }
            }
            Ok(t)
        }
        FigureId::CqecFig3 | FigureId::CqecFig4 => {
            let (t_max, steps) = if a.id == FigureId::CqecFig3 { (1e4, 2000) } else { (0.2, 400) };
            let p = CqecParams::nonmarkov(100.0)?;
            let grid = spinbath::uniform_grid(t_max, steps);
            let cs = cqec::nm_bitflip_evolve(&p, NmCoeffs::codeword(), &grid)?;
            let mut t = Table::new(&["gamma_t", "fidelity", "long_time_approx"]);
            for (&time, c) in grid.iter().zip(&cs) {
                let approx = cqec::nm_long_time_fidelity(&p, time).unwrap_or(f64::NAN);
                t.row(row![time, c.fidelity(), approx]);
            }
            Ok(t)
        }
        FigureId::SpinbathN100Tcl | FigureId::SpinbathN4Tcl => {
            let n = if a.id == FigureId::SpinbathN100Tcl { 100 } else { 4 };
            let grid = spinbath::uniform_grid(PI, 800);
            let v0 = BlochXY::new(1.0, 0.0);
            let mut t = Table::new(&["beta", "alpha_t", "vx_exact", "vx_tcl2", "vx_tcl3", "vx_tcl4"]);
            for beta in [1.0, 10.0] {
                let spec = BathSpec::uniform(n, beta, 1.0)?;
                let series = [Model::Exact, Model::Tcl2, Model::Tcl3, Model::Tcl4]
                    .map(|m| spinbath::model_trajectory(&spec, m, v0, &grid));
                let [ex, t2, t3, t4] = series;
                let (ex, t2, t3, t4) = (ex?, t2?, t3?, t4?);
                for k in 0..grid.len() {
                    t.row(row![beta, grid[k], ex[k].vx, t2[k].vx, t3[k].vx, t4[k].vx]);
                }
            }
            Ok(t)
        }
    }
}

fn dispatch(cmd: &Cmd) -> Result<Table, Failure> {
    match cmd {
        Cmd::Weakmeas(WeakmeasCmd::Walk(a)) => weakmeas_walk(a),
        Cmd::Monotone(MonotoneCmd::Check(a)) => monotone_check(a),
        Cmd::Spinbath(SpinbathCmd::Compare(a)) => spinbath_compare(a),
        Cmd::Cqec(CqecCmd::Markov(a)) => cqec_markov(a),
        Cmd::Cqec(CqecCmd::Nonmarkov(a)) => cqec_nonmarkov(a),
        Cmd::Cqec(CqecCmd::Eigen(a)) => cqec_eigen(a),
        Cmd::Subsys(SubsysCmd::Fa(a)) => subsys_fa(a),
        Cmd::Holonomy(HolonomyCmd::Run(a)) => holonomy_run(a),
        Cmd::Reproduce(a) => reproduce(a),
    }
}

// ---------------------------------------------------------------------------
// Driver

/// Names of the matched subcommand chain, outermost first.
fn command_path(m: &clap::ArgMatches) -> Vec<String> {
    let mut path = Vec::new();
    let mut cur = m;
    while let Some((name, sub)) = cur.subcommand() {
        path.push(name.to_string());
        cur = sub;
    }
    path
}

fn parse(argv: &[String]) -> Result<(Cli, Vec<String>), Failure> {
    let matches = Cli::command().try_get_matches_from(argv).unwrap_or_else(|e| e.exit());
    let path = command_path(&matches);
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let Some(file) = cli.config.clone() else {
        return Ok((cli, path));
    };
    let entries = config::read_entries(&file).map_err(|e| Failure::Config(e.0))?;
    config::check_keys(&Cli::command(), &path, &entries).map_err(|e| Failure::Config(e.0))?;
    let merged = config::splice(argv, &path, &entries);
    let cli = Cli::try_parse_from(&merged).unwrap_or_else(|e| e.exit());
    Ok((cli, path))
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("OQS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("OQS_THREADS: expected a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(format!("OQS_THREADS: {e}")))
}

/// Seed recorded in the sidecar; deterministic subcommands have none.
fn seed_of(cmd: &Cmd) -> Option<u64> {
    match cmd {
        Cmd::Weakmeas(WeakmeasCmd::Walk(a)) => Some(a.seed),
        Cmd::Monotone(MonotoneCmd::Check(a)) => Some(a.seed),
        Cmd::Spinbath(SpinbathCmd::Compare(a)) => a.random.then_some(a.seed),
        Cmd::Subsys(SubsysCmd::Fa(a)) => Some(a.seed),
        _ => None,
    }
}

/// Flat key → string map; feeding it back as a config file reproduces the run.
fn canonical_config(cmd: &Cmd) -> serde_json::Map<String, serde_json::Value> {
    let value = serde_json::to_value(cmd).expect("arguments serialize");
    let serde_json::Value::Object(map) = value else { unreachable!("argument structs serialize as objects") };
    map.into_iter()
        .filter(|(k, _)| k != "id")
        .map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Array(xs) => xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
                serde_json::Value::Number(n) => n.to_string(),
                other => other.to_string(),
            };
            (k, serde_json::Value::String(s))
        })
        .collect()
}

fn run(argv: &[String]) -> Result<(), Failure> {
    let (cli, path) = parse(argv)?;
    configure_threads()?;
    let table = dispatch(&cli.cmd)?;
    let body = table.into_string();
    match &cli.out {
        Some(p) => std::fs::write(p, &body).map_err(|e| Failure::Config(format!("field 'out': {}: {e}", p.display())))?,
        None => std::io::stdout().lock().write_all(body.as_bytes()).map_err(|e| Failure::Numeric(e.to_string()))?,
    }
    if let Some(p) = &cli.json_meta {
        let mut meta = serde_json::Map::new();
        meta.insert("command".into(), path.join(" ").into());
        if let Cmd::Reproduce(a) = &cli.cmd {
            meta.insert("id".into(), serde_json::to_value(a.id).expect("figure id serializes"));
        }
        meta.insert("config".into(), canonical_config(&cli.cmd).into());
        meta.insert("seed".into(), seed_of(&cli.cmd).into());
        meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
        std::fs::write(p, text).map_err(|e| Failure::Config(format!("field 'json-meta': {}: {e}", p.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match run(&argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric error: {msg}");
            ExitCode::from(3)
        }
    }
}
