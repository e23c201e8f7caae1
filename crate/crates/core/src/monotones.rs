//! Numerical probes of the differential conditions for entanglement monotones:
//! local-unitary invariance, monotonicity under local weak measurements, and
//! convexity. Derivatives are never formed; every condition is a finite
//! difference of `f` itself at probe scale `h`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::qcore::{
    c, eigh, expm_skew, on_qubit, partial_trace_mat, random_density, random_hermitian, random_pure, sqrtm_psd,
    tensor, ComplexMatrix, DensityMatrix, C64, I, ZERO,
};
use crate::{rng, Error, Result};

pub const DEFAULT_H: f64 = 1e-3;
const PROBE_MAX_NORM: f64 = 0.1;
const TOL_SIGN: f64 = 1e-10;
const TOL_LU: f64 = 1e-8;
/// Depolarizing weight mixed into convexity probe states.
const MIX_FLOOR: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Decreasing,
    Increasing,
}

type Evaluator = dyn Fn(&DensityMatrix) -> Result<f64> + Send + Sync;

#[derive(Clone)]
pub struct StateFunction {
    pub name: String,
    pub direction: Direction,
    eval: Arc<Evaluator>,
}

impl fmt::Debug for StateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateFunction").field("name", &self.name).field("direction", &self.direction).finish()
    }
}

impl StateFunction {
    pub fn new(
        name: impl Into<String>,
        direction: Direction,
        eval: impl Fn(&DensityMatrix) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        StateFunction { name: name.into(), direction, eval: Arc::new(eval) }
    }

    pub fn eval(&self, rho: &DensityMatrix) -> Result<f64> {
        (self.eval)(rho)
    }

    fn eval_mat(&self, m: ComplexMatrix) -> Result<f64> {
        self.eval(&DensityMatrix::new_unchecked(m))
    }

    /// `Tr ρ`; satisfies every condition with equality.
    pub fn trace() -> Self {
        Self::new("trace", Direction::Decreasing, |r| Ok(r.mat().trace().re))
    }

    /// Local purity `Tr ρ_A²` of factor `party`; an increasing monotone.
    pub fn purity(dims: Vec<usize>, party: usize) -> Self {
        Self::new("purity", Direction::Increasing, move |r| {
            let ra = partial_trace_mat(r.mat(), &dims, &[party])?;
            Ok(ra.trace_product(&ra).re)
        })
    }

    /// Entropy of entanglement `−Tr ρ_A ln ρ_A`.
    pub fn entropy(dims: Vec<usize>, party: usize) -> Self {
        Self::new("entropy", Direction::Decreasing, move |r| {
            let ra = partial_trace_mat(r.mat(), &dims, &[party])?;
            von_neumann(&ra)
        })
    }

    /// The sixth-order three-qubit monotone `φ_ABC`.
    pub fn phi_abc() -> Self {
        Self::new("phi_abc", Direction::Decreasing, |r| phi_abc_mat(r.mat()))
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let dims = vec![2, 2, 2];
        match name {
            "trace" => Ok(Self::trace()),
            "purity" => Ok(Self::purity(dims, 0)),
            "entropy" => Ok(Self::entropy(dims, 0)),
            "phi_abc" => Ok(Self::phi_abc()),
            other => Err(Error::InvalidInput(format!("unknown state function '{other}'"))),
        }
    }
}

pub fn von_neumann(m: &ComplexMatrix) -> Result<f64> {
    let (vals, _) = eigh(&m.hermitian_part())?;
    Ok(vals.iter().filter(|&&l| l > 0.0).map(|&l| -l * l.ln()).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
    dims: Vec<usize>,
}

impl PureState {
    pub fn new(amps: Vec<C64>, dims: Vec<usize>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if d != amps.len() || dims.is_empty() {
            return Err(Error::Dimension(format!("{} amplitudes for dims {dims:?}", amps.len())));
        }
        let n: f64 = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("norm {n}")));
        }
        Ok(PureState { amps, dims })
    }

    pub fn random<R: Rng + ?Sized>(dims: Vec<usize>, rng: &mut R) -> Self {
        let d = dims.iter().product();
        PureState { amps: random_pure(d, rng), dims }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix::new_unchecked(ComplexMatrix::projector(&self.amps))
    }
}

#[derive(Clone, Debug)]
pub struct LocalHermitian {
    pub site: usize,
    pub op: ComplexMatrix,
}

impl LocalHermitian {
    pub fn new(site: usize, op: ComplexMatrix) -> Result<Self> {
        if op.hermitian_deviation() > 1e-12 {
            return Err(Error::NotHermitian(op.hermitian_deviation()));
        }
        Ok(LocalHermitian { site, op })
    }

    pub fn random<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let site = rng.random_range(0..dims.len());
        let op = random_hermitian(dims[site], rng);
        let n = operator_norm(&op);
        LocalHermitian { site, op: op.scale_re(1.0 / n) }
    }

    /// The operator acting on the full space with identities elsewhere.
    pub fn embed(&self, dims: &[usize]) -> Result<ComplexMatrix> {
        if self.site >= dims.len() || dims[self.site] != self.op.rows() {
            return Err(Error::Dimension(format!("site {} with dims {dims:?}", self.site)));
        }
        let left: usize = dims[..self.site].iter().product();
        let right: usize = dims[self.site + 1..].iter().product();
        tensor(&tensor(&ComplexMatrix::identity(left), &self.op)?, &ComplexMatrix::identity(right))
    }
}

fn operator_norm(h: &ComplexMatrix) -> f64 {
    eigh(h).map(|(v, _)| v.iter().fold(0.0f64, |a, x| a.max(x.abs()))).unwrap_or(f64::INFINITY)
}

/// `|f(e^{ihε} ρ e^{−ihε}) − f(ρ)| / h`.
pub fn check_lu_invariance(f: &StateFunction, rho: &DensityMatrix, dims: &[usize], eps: &LocalHermitian, h: f64) -> Result<f64> {
    let e = eps.embed(dims)?;
    let u = expm_skew(&e, -h)?;
    let rotated = &(&u * rho.mat()) * &u.adjoint();
    Ok((f.eval_mat(rotated)? - f.eval(rho)?).abs() / h)
}

/// First-order residual `|f(ρ + ih[ε, ρ]) − f(ρ)| / h`; `O(h)` iff the first
/// derivative along the commutator vanishes.
pub fn lu_linear_residual(f: &StateFunction, rho: &DensityMatrix, dims: &[usize], eps: &LocalHermitian, h: f64) -> Result<f64> {
    let e = eps.embed(dims)?;
    let comm = e.commutator(rho.mat()).scale(I * h);
    Ok((f.eval_mat(rho.mat() + &comm)? - f.eval(rho)?).abs() / h)
}

/// `residual(h) / residual(h/2)`; `None` when both vanish (exact invariance).
pub fn lu_richardson_ratio(f: &StateFunction, rho: &DensityMatrix, dims: &[usize], eps: &LocalHermitian, h: f64) -> Result<Option<f64>> {
    let r1 = lu_linear_residual(f, rho, dims, eps, h)?;
    let r2 = lu_linear_residual(f, rho, dims, eps, h / 2.0)?;
    if r1 < 1e-9 && r2 < 1e-9 {
        return Ok(None);
    }
    Ok(Some(r1 / r2))
}

/// Measurement pair `M± = sqrt((I ± hε)/2)` on the full space.
pub fn probe_measurement(dims: &[usize], eps: &LocalHermitian, h: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = operator_norm(&eps.op) * h.abs();
    if n > PROBE_MAX_NORM + 1e-15 {
        return Err(Error::InvalidInput(format!("probe too large: ‖hε‖ = {n:.3e} > {PROBE_MAX_NORM}")));
    }
    let d = eps.op.rows();
    let id = ComplexMatrix::identity(d);
    let half = |s: f64| sqrtm_psd(&(&id + &eps.op.scale_re(s * h)).scale_re(0.5));
    let mp = LocalHermitian { site: eps.site, op: half(1.0)? }.embed(dims)?;
    let mm = LocalHermitian { site: eps.site, op: half(-1.0)? }.embed(dims)?;
    Ok((mp, mm))
}

/// `Σ p_k f(ρ_k) − f(ρ)` for the two-outcome probe measurement.
pub fn check_measurement_monotonicity(
    f: &StateFunction,
    rho: &DensityMatrix,
    dims: &[usize],
    eps: &LocalHermitian,
    h: f64,
) -> Result<f64> {
    let (mp, mm) = probe_measurement(dims, eps, h)?;
    let mut avg = 0.0;
    for m in [mp, mm] {
        let out = &(&m * rho.mat()) * &m.adjoint();
        let p = out.trace().re;
        if p > 0.0 {
            avg += p * f.eval_mat(out.scale_re(1.0 / p))?;
        }
    }
    Ok(avg - f.eval(rho)?)
}

/// `f(ρ + hσ) + f(ρ − hσ) − 2 f(ρ)` for traceless Hermitian `σ`.
pub fn check_convexity(f: &StateFunction, rho: &DensityMatrix, sigma: &ComplexMatrix, h: f64) -> Result<f64> {
    if sigma.hermitian_deviation() > 1e-12 || sigma.trace().norm() > 1e-12 {
        return Err(Error::InvalidInput("σ must be traceless Hermitian".into()));
    }
    let plus = rho.mat() + &sigma.scale_re(h);
    let minus = rho.mat() - &sigma.scale_re(h);
    for m in [&plus, &minus] {
        let (v, _) = eigh(m)?;
        if v[0] < -1e-12 {
            return Err(Error::InvalidInput(format!("probe leaves the state space (eigenvalue {:.3e})", v[0])));
        }
    }
    Ok(f.eval_mat(plus)? + f.eval_mat(minus)? - 2.0 * f.eval(rho)?)
}

/// Both sides of the second-order LU identity
/// `Tr{f'·[[ε,ρ],ε]} = −Tr{f''·(i[ε,ρ])^{⊗2}}`, by central differences.
pub fn lu_equiv_terms(f: &StateFunction, rho: &DensityMatrix, dims: &[usize], eps: &LocalHermitian, h: f64) -> Result<(f64, f64)> {
    let e = eps.embed(dims)?;
    let comm = e.commutator(rho.mat());
    let dd = comm.commutator(&e);
    let cc = comm.scale(I);
    let f0 = f.eval(rho)?;
    let lhs = (f.eval_mat(rho.mat() + &dd.scale_re(h))? - f.eval_mat(rho.mat() - &dd.scale_re(h))?) / (2.0 * h);
    let second = (f.eval_mat(rho.mat() + &cc.scale_re(h))? + f.eval_mat(rho.mat() - &cc.scale_re(h))? - 2.0 * f0) / (h * h);
    Ok((lhs, -second))
}

pub fn respects_direction(dir: Direction, delta: f64, tol: f64) -> bool {
    match dir {
        Direction::Decreasing => delta <= tol,
        Direction::Increasing => delta >= -tol,
    }
}

/// Mixed-state monotones must be convex (decreasing) or concave (increasing).
pub fn convexity_ok(dir: Direction, second_diff: f64, tol: f64) -> bool {
    match dir {
        Direction::Decreasing => second_diff >= -tol,
        Direction::Increasing => second_diff <= tol,
    }
}

// ---------------------------------------------------------------------------
// Three-qubit invariants

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeQubitInvariants {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
    pub i5: f64,
}

struct Reduced {
    ab: ComplexMatrix,
    ac: ComplexMatrix,
    bc: ComplexMatrix,
    a: ComplexMatrix,
    b: ComplexMatrix,
    cc: ComplexMatrix,
}

fn reduced(m: &ComplexMatrix) -> Result<Reduced> {
    let d = [2, 2, 2];
    if m.rows() != 8 {
        return Err(Error::Dimension(format!("three-qubit state expected, got dimension {}", m.rows())));
    }
    Ok(Reduced {
        ab: partial_trace_mat(m, &d, &[0, 1])?,
        ac: partial_trace_mat(m, &d, &[0, 2])?,
        bc: partial_trace_mat(m, &d, &[1, 2])?,
        a: partial_trace_mat(m, &d, &[0])?,
        b: partial_trace_mat(m, &d, &[1])?,
        cc: partial_trace_mat(m, &d, &[2])?,
    })
}

fn tr2(m: &ComplexMatrix) -> f64 {
    m.trace_product(m).re
}

fn tr3(m: &ComplexMatrix) -> f64 {
    (m * m).trace_product(m).re
}

fn pair_term(rho2: &ComplexMatrix, x: &ComplexMatrix, y: &ComplexMatrix) -> f64 {
    rho2.trace_product(&tensor(x, y).unwrap()).re
}

fn check_three_qubit(psi: &PureState) -> Result<()> {
    if psi.dims() != [2, 2, 2] {
        return Err(Error::Dimension(format!("dims {:?}, expected (2,2,2)", psi.dims())));
    }
    Ok(())
}

/// The three equivalent expressions for `I₄` (AB, AC and BC forms).
pub fn i4_forms(psi: &PureState) -> Result<[f64; 3]> {
    check_three_qubit(psi)?;
    let r = reduced(psi.density().mat())?;
    Ok([
        3.0 * pair_term(&r.ab, &r.a, &r.b) - tr3(&r.a) - tr3(&r.b),
        3.0 * pair_term(&r.ac, &r.a, &r.cc) - tr3(&r.a) - tr3(&r.cc),
        3.0 * pair_term(&r.bc, &r.b, &r.cc) - tr3(&r.b) - tr3(&r.cc),
    ])
}

/// Epsilon-tensor contraction whose modulus is half the 3-tangle.
pub fn tangle_contraction(psi: &PureState) -> Result<C64> {
    check_three_qubit(psi)?;
    let a = |i: usize, j: usize, k: usize| psi.amps[(i << 2) | (j << 1) | k];
    let sign = |x: usize| if x == 0 { 1.0 } else { -1.0 };
    let mut s = ZERO;
    for bits in 0..64usize {
        let (i, j, k, m, n, p) = (bits & 1, (bits >> 1) & 1, (bits >> 2) & 1, (bits >> 3) & 1, (bits >> 4) & 1, (bits >> 5) & 1);
        // ε_{x, 1−x} = +1 for x = 0, −1 for x = 1
        let sg = sign(i) * sign(j) * sign(k) * sign(m) * sign(n) * sign(p);
        s += a(i, j, k) * a(1 - i, 1 - j, m) * a(n, p, 1 - k) * a(1 - n, 1 - p, 1 - m) * sg;
    }
    Ok(s)
}

pub fn three_tangle(psi: &PureState) -> Result<f64> {
    Ok(2.0 * tangle_contraction(psi)?.norm())
}

pub fn eval_three_qubit_invariants(psi: &PureState) -> Result<ThreeQubitInvariants> {
    check_three_qubit(psi)?;
    let r = reduced(psi.density().mat())?;
    let i4 = i4_forms(psi)?[0];
    Ok(ThreeQubitInvariants {
        i1: tr2(&r.cc),
        i2: tr2(&r.b),
        i3: tr2(&r.a),
        i4,
        i5: tangle_contraction(psi)?.norm_sqr(),
    })
}

fn x_operator(r: &Reduced) -> ComplexMatrix {
    let id = ComplexMatrix::identity(2);
    &(&r.ab.scale_re(2.0) + &tensor(&r.a, &id).unwrap()) + &tensor(&id, &r.b).unwrap()
}

/// `Tr X³` with `X = 2ρ_AB + ρ_A⊗I + I⊗ρ_B`.
pub fn trace_x_cubed(psi: &PureState) -> Result<f64> {
    check_three_qubit(psi)?;
    Ok(tr3(&x_operator(&reduced(psi.density().mat())?)))
}

fn phi_abc_mat(m: &ComplexMatrix) -> Result<f64> {
    let r = reduced(m)?;
    Ok(69.0 - tr3(&x_operator(&r)) - 3.0 * tr2(&r.ab))
}

/// `φ_ABC = 69 − Tr X³ − 3 Tr ρ_AB²`; zero on product states.
pub fn phi_abc(psi: &PureState) -> Result<f64> {
    check_three_qubit(psi)?;
    phi_abc_mat(psi.density().mat())
}

pub fn ghz() -> PureState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut a = vec![ZERO; 8];
    a[0] = c(s, 0.0);
    a[7] = c(s, 0.0);
    PureState { amps: a, dims: vec![2, 2, 2] }
}

pub fn w_state() -> PureState {
    let s = 1.0 / 3f64.sqrt();
    let mut a = vec![ZERO; 8];
    for k in [1, 2, 4] {
        a[k] = c(s, 0.0);
    }
    PureState { amps: a, dims: vec![2, 2, 2] }
}

/// Random local unitary `U_A ⊗ U_B ⊗ U_C` applied to a three-qubit state.
pub fn random_local_unitary<R: Rng + ?Sized>(psi: &PureState, rng: &mut R) -> PureState {
    let mut amps = psi.amps.clone();
    for q in 0..3 {
        let u = crate::qcore::random_unitary(2, rng);
        amps = on_qubit(&u, q, 3).apply(&amps);
    }
    PureState { amps, dims: psi.dims.clone() }
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub trial: usize,
    pub condition: &'static str,
    pub value: f64,
    pub pass: bool,
}

/// Random traceless Hermitian direction keeping `ρ ± hσ` positive.
pub fn random_traceless<R: Rng + ?Sized>(rho: &DensityMatrix, h: f64, rng: &mut R) -> ComplexMatrix {
    let d = rho.dim();
    let g = random_hermitian(d, rng);
    let t = g.trace().re / d as f64;
    let sigma = &g - &ComplexMatrix::identity(d).scale_re(t);
    let lmin = rho.eigenvalues()[0].max(0.0);
    let n = operator_norm(&sigma).max(1e-300);
    // ‖hσ‖ ≤ λ_min/2
    sigma.scale_re((lmin / (2.0 * h * n)).min(1.0 / n))
}

/// Runs every applicable condition on `trials` random three-qubit instances.
pub fn run_checks(f: &StateFunction, trials: usize, seed: u64) -> Result<Vec<CheckRow>> {
    let dims = [2usize, 2, 2];
    let h = DEFAULT_H;
    let mut rows = Vec::with_capacity(trials * 4);
    for trial in 0..trials {
        let mut r = rng::stream(seed, trial as u64);
        let psi = PureState::random(dims.to_vec(), &mut r).density();
        let eps = LocalHermitian::random(&dims, &mut r);

        let lu = check_lu_invariance(f, &psi, &dims, &eps, h)?;
        rows.push(CheckRow { trial, condition: "lu_invariance", value: lu, pass: lu <= TOL_LU });

        let ratio = lu_richardson_ratio(f, &psi, &dims, &eps, h)?;
        let (value, pass) = match ratio {
            None => (0.0, true),
            Some(q) => (q, (1.5..=2.5).contains(&q)),
        };
        rows.push(CheckRow { trial, condition: "lu_richardson", value, pass });

        let strength = PROBE_MAX_NORM * r.random_range(0.1..1.0);
        let delta = check_measurement_monotonicity(f, &psi, &dims, &eps, strength)?;
        rows.push(CheckRow { trial, condition: "measurement", value: delta, pass: respects_direction(f.direction, delta, TOL_SIGN) });

        if f.name != "phi_abc" {
            // Interior states: λ_min ≥ MIX_FLOOR/8 keeps the probe σ at full size.
            let raw = random_density(8, &mut r);
            let mixed = DensityMatrix::new(
                &raw.mat().scale_re(1.0 - MIX_FLOOR) + &ComplexMatrix::identity(8).scale_re(MIX_FLOOR / 8.0),
            )?;
            let sigma = random_traceless(&mixed, h, &mut r);
            let sd = check_convexity(f, &mixed, &sigma, h)?;
            rows.push(CheckRow { trial, condition: "convexity", value: sd, pass: convexity_ok(f.direction, sd, TOL_SIGN) });
        }
    }
    Ok(rows)
}
