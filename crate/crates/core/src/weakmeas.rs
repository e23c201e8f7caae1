//! Decomposition of two-outcome measurements into weak-measurement random walks.
//!
//! For commuting positive `M1`, `M2` with `D = M2² − M1²`, the walk moves along
//! the curve `M(x) = sqrt((I + tanh(x) D)/2)`; `x → −∞` is outcome 1, `x → +∞`
//! is outcome 2. Steps are `M(x, ±ε)` and shift `x` by `±ε`.

use rand::Rng;
use rayon::prelude::*;

use crate::qcore::{c, eigh, sqrtm_psd, ComplexMatrix, DensityMatrix};
use crate::{rng, Error, Result};

const TOL_COMPLETE: f64 = 1e-10;
const TOL_COMMUTE: f64 = 1e-10;
const TRACE_TAIL: usize = 100;

#[derive(Clone, Debug)]
pub struct TwoOutcomeMeasurement {
    m1: ComplexMatrix,
    m2: ComplexMatrix,
}

impl TwoOutcomeMeasurement {
    pub fn new(m1: ComplexMatrix, m2: ComplexMatrix) -> Result<Self> {
        if !m1.is_square() || m1.rows() != m2.rows() || !m2.is_square() {
            return Err(Error::Dimension("measurement operators must be square and equal size".into()));
        }
        let sum = &(&m1.adjoint() * &m1) + &(&m2.adjoint() * &m2);
        let dev = (&sum - &ComplexMatrix::identity(m1.rows())).frobenius();
        if dev > TOL_COMPLETE {
            return Err(Error::InvalidInput(format!("M1†M1 + M2†M2 deviates from I by {dev:.3e}")));
        }
        Ok(TwoOutcomeMeasurement { m1, m2 })
    }

    /// Projective measurement in the computational basis of a qubit: `P1 = |0><0|`.
    pub fn qubit_projective() -> Self {
        TwoOutcomeMeasurement {
            m1: ComplexMatrix::diag_real(&[1.0, 0.0]),
            m2: ComplexMatrix::diag_real(&[0.0, 1.0]),
        }
    }

    pub fn m1(&self) -> &ComplexMatrix {
        &self.m1
    }

    pub fn m2(&self) -> &ComplexMatrix {
        &self.m2
    }

    pub fn dim(&self) -> usize {
        self.m1.rows()
    }

    /// Outcome probabilities `Tr(M_j ρ M_j†)` of the strong measurement.
    pub fn probabilities(&self, rho: &DensityMatrix) -> (f64, f64) {
        let p1 = rho.expect(&(&self.m1.adjoint() * &self.m1)).re;
        let p2 = rho.expect(&(&self.m2.adjoint() * &self.m2)).re;
        (p1, p2)
    }

    /// Eigenbasis and eigenvalues of `D = M2² − M1²`; fails outside the
    /// positive commuting case.
    fn spectrum(&self) -> Result<(Vec<f64>, ComplexMatrix)> {
        for m in [&self.m1, &self.m2] {
            if m.hermitian_deviation() > TOL_COMMUTE {
                return Err(Error::Unsupported("measurement operator is not Hermitian".into()));
            }
            let (v, _) = eigh(m)?;
            if v[0] < -TOL_COMMUTE {
                return Err(Error::Unsupported("measurement operator is not positive".into()));
            }
        }
        let comm = self.m1.commutator(&self.m2).frobenius();
        if comm > TOL_COMMUTE {
            return Err(Error::Unsupported(format!(
                "non-commuting measurement operators (‖[M1,M2]‖ = {comm:.3e})"
            )));
        }
        let d = &(&self.m2 * &self.m2) - &(&self.m1 * &self.m1);
        let (vals, v) = eigh(&d)?;
        Ok((vals.iter().map(|x| x.clamp(-1.0, 1.0)).collect(), v))
    }
}

/// `1 + tanh(x)·δ`, evaluated without cancellation at `δ = ±1`.
fn one_plus_tanh(x: f64, delta: f64) -> f64 {
    if delta >= 1.0 {
        2.0 / (1.0 + (-2.0 * x).exp())
    } else if delta <= -1.0 {
        2.0 / (1.0 + (2.0 * x).exp())
    } else {
        1.0 + x.tanh() * delta
    }
}

fn spectral_real(v: &ComplexMatrix, f: &[f64]) -> ComplexMatrix {
    let n = f.len();
    ComplexMatrix::from_fn(n, n, |r, k| (0..n).map(|j| v[(r, j)] * f[j] * v[(k, j)].conj()).sum())
}

/// `P(x)` on the curve between complementary projectors.
pub fn projective_curve(p1: &ComplexMatrix, p2: &ComplexMatrix, x: f64) -> Result<ComplexMatrix> {
    check_projectors(p1, p2)?;
    let a = (one_plus_tanh(x, -1.0) / 2.0).sqrt();
    let b = (one_plus_tanh(x, 1.0) / 2.0).sqrt();
    Ok(&p1.scale_re(a) + &p2.scale_re(b))
}

/// The weak projective pair `(P(ε), P(−ε))`.
pub fn projective_step(p1: &ComplexMatrix, p2: &ComplexMatrix, eps: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    Ok((projective_curve(p1, p2, eps)?, projective_curve(p1, p2, -eps)?))
}

/// Scalar `k` in `P(x)P(y) = k·P(x+y)`.
pub fn composition_factor(x: f64, y: f64) -> f64 {
    ((x + y).cosh() / (2.0 * x.cosh() * y.cosh())).sqrt()
}

fn check_projectors(p1: &ComplexMatrix, p2: &ComplexMatrix) -> Result<()> {
    if !p1.is_square() || p1.rows() != p2.rows() || !p2.is_square() {
        return Err(Error::Dimension("projectors must be square and equal size".into()));
    }
    let d = p1.rows();
    let tol = TOL_COMPLETE;
    for p in [p1, p2] {
        if (&(p * p) - p).frobenius() > tol || p.hermitian_deviation() > tol {
            return Err(Error::InvalidInput("operator is not an orthogonal projector".into()));
        }
    }
    if (&(p1 + p2) - &ComplexMatrix::identity(d)).frobenius() > tol {
        return Err(Error::InvalidInput("projectors do not sum to the identity".into()));
    }
    Ok(())
}

/// Effective operator `M(x) = M(0, x)`.
pub fn effective_operator(meas: &TwoOutcomeMeasurement, x: f64) -> Result<ComplexMatrix> {
    let (vals, v) = meas.spectrum()?;
    let f: Vec<f64> = vals.iter().map(|&d| (one_plus_tanh(x, d) / 2.0).sqrt()).collect();
    Ok(spectral_real(&v, &f))
}

/// `(M(x, +ε), M(x, −ε))`.
pub fn weak_step_operators(meas: &TwoOutcomeMeasurement, x: f64, eps: f64) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let (vals, v) = meas.spectrum()?;
    Ok(step_pair(&vals, &v, x, eps))
}

fn step_pair(vals: &[f64], v: &ComplexMatrix, x: f64, eps: f64) -> (ComplexMatrix, ComplexMatrix) {
    let te = eps.tanh() * x.tanh();
    let (cp, cm) = ((1.0 + te) / 2.0, (1.0 - te) / 2.0);
    let op = |cw: f64, s: f64| -> ComplexMatrix {
        let f: Vec<f64> = vals
            .iter()
            .map(|&d| (cw * one_plus_tanh(x + s, d) / one_plus_tanh(x, d)).sqrt())
            .collect();
        spectral_real(v, &f)
    };
    (op(cp, eps), op(cm, -eps))
}

/// Probability that the walk started at `x` is absorbed at `+X`.
pub fn absorption_probability(x: f64, x_cut: f64) -> f64 {
    0.5 * (1.0 + x.tanh() / x_cut.tanh())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkConfig {
    pub epsilon: f64,
    pub x_cut: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Starting coordinate. The initial state is `M(x_start) ρ0 M(x_start)`
    /// normalized, so `x_start = 0` starts from `ρ0` itself.
    pub x_start: f64,
}

impl WalkConfig {
    pub fn new(epsilon: f64, x_cut: f64, seed: u64) -> Self {
        WalkConfig { epsilon, x_cut, max_steps: 10_000_000, seed, x_start: 0.0 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::InvalidInput(format!("epsilon {} outside (0, 0.5)", self.epsilon)));
        }
        if !(self.x_cut > 0.0 && self.x_cut.is_finite()) {
            return Err(Error::InvalidInput(format!("x_cut {} must be positive", self.x_cut)));
        }
        if !(self.x_start.abs() < self.x_cut) {
            return Err(Error::InvalidInput(format!("x_start {} outside (-X, X)", self.x_start)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkOutcome {
    pub outcome_index: u8,
    pub final_x: f64,
    pub steps: usize,
    pub final_state: DensityMatrix,
}

/// Precomputed walk: lattice `x_k = x_start + kε` for `k ∈ [k_lo, k_hi]`, with
/// `p_+` at each interior site. Boundary sites are absorbing.
struct Lattice {
    k_lo: i64,
    k_hi: i64,
    p_plus: Vec<f64>,
    cfg: WalkConfig,
}

impl Lattice {
    fn new(vals: &[f64], pops: &[f64], cfg: WalkConfig) -> Self {
        let eps = cfg.epsilon;
        let tol = 1e-9 * cfg.x_cut.max(1.0);
        let k_hi = ((cfg.x_cut - cfg.x_start - tol) / eps).ceil() as i64;
        let k_lo = -(((cfg.x_cut + cfg.x_start - tol) / eps).ceil() as i64);
        // q(x) = Tr(M(x)² ρ0) up to the factor 1/2
        let q = |x: f64| -> f64 { vals.iter().zip(pops).map(|(&d, &w)| w * one_plus_tanh(x, d)).sum() };
        let p_plus = (k_lo..=k_hi)
            .map(|k| {
                let x = cfg.x_start + k as f64 * eps;
                let cp = (1.0 + eps.tanh() * x.tanh()) / 2.0;
                let qx = q(x);
                if qx <= 0.0 {
                    0.5
                } else {
                    (cp * q(x + eps) / qx).clamp(0.0, 1.0)
                }
            })
            .collect();
        Lattice { k_lo, k_hi, p_plus, cfg }
    }

    fn x(&self, k: i64) -> f64 {
        let x = self.cfg.x_start + k as f64 * self.cfg.epsilon;
        // snap the boundary sites onto ±X
        if k == self.k_hi && x >= self.cfg.x_cut - 1e-9 * self.cfg.x_cut.max(1.0) {
            self.cfg.x_cut.max(x)
        } else if k == self.k_lo && x <= -self.cfg.x_cut + 1e-9 * self.cfg.x_cut.max(1.0) {
            (-self.cfg.x_cut).min(x)
        } else {
            x
        }
    }

    /// Returns `(final k, steps)`.
    fn run<R: Rng>(&self, rng: &mut R) -> Result<(i64, usize)> {
        let mut k = 0i64;
        let mut tail = std::collections::VecDeque::with_capacity(TRACE_TAIL);
        for step in 0..self.cfg.max_steps {
            if k <= self.k_lo || k >= self.k_hi {
                return Ok((k, step));
            }
            let p = self.p_plus[(k - self.k_lo) as usize];
            let u: f64 = rng.random();
            k += if u < p { 1 } else { -1 };
            if tail.len() == TRACE_TAIL {
                tail.pop_front();
            }
            tail.push_back(k);
        }
        if k <= self.k_lo || k >= self.k_hi {
            return Ok((k, self.cfg.max_steps));
        }
        Err(Error::NonTermination {
            steps: self.cfg.max_steps,
            last_x: self.x(k),
            trace: tail.iter().map(|&k| self.x(k)).collect(),
        })
    }
}

fn populations(rho0: &DensityMatrix, v: &ComplexMatrix) -> Vec<f64> {
    let r = &(&v.adjoint() * rho0.mat()) * v;
    (0..r.rows()).map(|k| r[(k, k)].re.max(0.0)).collect()
}

/// `M(x) ρ0 M(x) / Tr(·)`.
pub fn state_at(rho0: &DensityMatrix, meas: &TwoOutcomeMeasurement, x: f64) -> Result<DensityMatrix> {
    let m = effective_operator(meas, x)?;
    DensityMatrix::normalize(&(&m * rho0.mat()) * &m)
}

struct Prepared {
    vals: Vec<f64>,
    v: ComplexMatrix,
    lattice: Lattice,
}

fn prepare(rho0: &DensityMatrix, meas: &TwoOutcomeMeasurement, cfg: &WalkConfig) -> Result<Prepared> {
    cfg.validate()?;
    if rho0.dim() != meas.dim() {
        return Err(Error::Dimension("state and measurement dimensions differ".into()));
    }
    let (vals, v) = meas.spectrum()?;
    let pops = populations(rho0, &v);
    let lattice = Lattice::new(&vals, &pops, *cfg);
    Ok(Prepared { vals, v, lattice })
}

fn finish(rho0: &DensityMatrix, p: &Prepared, k: i64, steps: usize) -> Result<WalkOutcome> {
    let x = p.lattice.x(k);
    let f: Vec<f64> = p.vals.iter().map(|&d| (one_plus_tanh(x, d) / 2.0).sqrt()).collect();
    let m = spectral_real(&p.v, &f);
    let final_state = DensityMatrix::normalize(&(&m * rho0.mat()) * &m)?;
    Ok(WalkOutcome { outcome_index: if x > 0.0 { 2 } else { 1 }, final_x: x, steps, final_state })
}

/// Runs one walk until `|x| ≥ X`.
pub fn run_walk(rho0: &DensityMatrix, meas: &TwoOutcomeMeasurement, cfg: &WalkConfig) -> Result<WalkOutcome> {
    let p = prepare(rho0, meas, cfg)?;
    let mut r = rng::seeded(cfg.seed);
    let (k, steps) = p.lattice.run(&mut r)?;
    finish(rho0, &p, k, steps)
}

/// Independent walks; trial `i` uses seed `cfg.seed + i`.
pub fn run_ensemble(
    rho0: &DensityMatrix,
    meas: &TwoOutcomeMeasurement,
    cfg: &WalkConfig,
    trials: usize,
) -> Result<Vec<WalkOutcome>> {
    let p = prepare(rho0, meas, cfg)?;
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i as u64);
            let (k, steps) = p.lattice.run(&mut r)?;
            finish(rho0, &p, k, steps)
        })
        .collect()
}

/// Applies a fixed sequence of step outcomes (`true` = `+ε`) with explicit
/// step operators. Returns the final coordinate and normalized state.
pub fn apply_steps(
    rho0: &DensityMatrix,
    meas: &TwoOutcomeMeasurement,
    x_start: f64,
    eps: f64,
    signs: &[bool],
) -> Result<(f64, DensityMatrix)> {
    let (vals, v) = meas.spectrum()?;
    let m0 = effective_operator(meas, x_start)?;
    let mut rho = DensityMatrix::normalize(&(&m0 * rho0.mat()) * &m0)?.into_inner();
    let mut x = x_start;
    for &up in signs {
        let (mp, mm) = step_pair(&vals, &v, x, eps);
        let m = if up { mp } else { mm };
        let next = &(&m * &rho) * &m.adjoint();
        let tr = next.trace().re;
        rho = next.scale_re(1.0 / tr);
        x += if up { eps } else { -eps };
    }
    Ok((x, DensityMatrix::new_unchecked(rho)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if s.is_empty() || s.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidInput(format!("simplex coordinates {s:?} outside [0,1]")));
        }
        let sum: f64 = s.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("simplex coordinates sum to {sum}")));
        }
        Ok(SimplexPoint(s))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// `M(s) = sqrt(f(s)) sqrt(Σ s_j L_j²)` with `f(s) = 1 + n Σ s_j (1 − s_j)`.
pub fn multi_outcome_effective(l_ops: &[ComplexMatrix], s: &SimplexPoint) -> Result<ComplexMatrix> {
    let n = l_ops.len();
    if n == 0 || s.coords().len() != n {
        return Err(Error::Dimension(format!("{} operators for {} simplex coordinates", n, s.coords().len())));
    }
    let d = l_ops[0].rows();
    let mut total = ComplexMatrix::zeros(d, d);
    let mut weighted = ComplexMatrix::zeros(d, d);
    for (l, &sj) in l_ops.iter().zip(s.coords()) {
        if l.rows() != d || !l.is_square() {
            return Err(Error::Dimension("operators differ in size".into()));
        }
        let sq = l * l;
        total = &total + &sq;
        weighted = &weighted + &sq.scale_re(sj);
    }
    let dev = (&total - &ComplexMatrix::identity(d)).frobenius();
    if dev > TOL_COMPLETE {
        return Err(Error::InvalidInput(format!("Σ L_j² deviates from I by {dev:.3e}")));
    }
    let f = 1.0 + n as f64 * s.coords().iter().map(|&x| x * (1.0 - x)).sum::<f64>();
    Ok(sqrtm_psd(&weighted)?.scale(c(f.sqrt(), 0.0)))
}

/// Qubit state `sqrt(p1)|0> + sqrt(1−p1)|1>`.
pub fn qubit_state(p1: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidInput(format!("p1 = {p1} outside [0,1]")));
    }
    Ok(DensityMatrix::pure(&[c(p1.sqrt(), 0.0), c((1.0 - p1).sqrt(), 0.0)]))
}
