//! Continuous error correction `ρ → (1 − κdt)ρ + κdt Φ(ρ)` against bit-flip
//! noise: single-qubit closed forms, the Markovian three-qubit weights, the
//! non-Markovian 13-coefficient generator, and weak-measurement realizations
//! of `Φ`.

use num_complex::Complex64 as C64;

use crate::ode::LinearSystem;
use crate::qcore::{apply_kraus, c, eig_general, pauli_x, pauli_y, ComplexMatrix, DensityMatrix, ONE, TOL_HERM, ZERO};
use crate::{Error, Result};

/// Step-halving acceptance for every integrated trajectory.
pub const ODE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CqecParams {
    /// Markovian bit-flip rate.
    pub lambda: f64,
    /// Correction rate.
    pub kappa: f64,
    /// System-bath coupling.
    pub gamma: f64,
}

impl CqecParams {
    pub fn new(lambda: f64, kappa: f64, gamma: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("kappa", kappa), ("gamma", gamma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(CqecParams { lambda, kappa, gamma })
    }

    /// `λ = 1`, `κ = r`.
    pub fn markov(r: f64) -> Result<Self> {
        Self::new(1.0, r, 0.0)
    }

    /// `γ = 1`, `κ = R`.
    pub fn nonmarkov(big_r: f64) -> Result<Self> {
        Self::new(0.0, big_r, 1.0)
    }

    /// `r = κ/λ`.
    pub fn r(&self) -> Option<f64> {
        (self.lambda > 0.0).then(|| self.kappa / self.lambda)
    }

    /// `R = κ/γ`.
    pub fn big_r(&self) -> Option<f64> {
        (self.gamma > 0.0).then(|| self.kappa / self.gamma)
    }
}

pub fn markov_alpha_star(r: f64) -> f64 {
    1.0 - 1.0 / (2.0 + r)
}

pub fn nonmarkov_alpha_star(big_r: f64) -> f64 {
    1.0 - 2.0 / (4.0 + big_r * big_r)
}

// ---------------------------------------------------------------------------
// Single-qubit code

/// `α(t) = (α0 − α*)e^{−(κ+2λ)t} + α*` with `α* = (κ+λ)/(κ+2λ)`.
pub fn markov_single(alpha0: f64, p: &CqecParams, t: f64) -> f64 {
    let rate = p.kappa + 2.0 * p.lambda;
    if rate == 0.0 {
        return alpha0;
    }
    let star = (p.kappa + p.lambda) / rate;
    (alpha0 - star) * (-rate * t).exp() + star
}

/// `α' = −(κ+2λ)α + (κ+λ)`.
pub fn markov_single_system(p: &CqecParams) -> LinearSystem {
    LinearSystem { n: 1, a: vec![-(p.kappa + 2.0 * p.lambda)], b: vec![p.kappa + p.lambda] }
}

/// Fidelity `α` and hidden system-bath correlation `β` for one qubit coupled
/// by `γX⊗X` to a maximally mixed bath qubit, starting from `|0⟩`.
pub fn nonmarkov_single(p: &CqecParams, t: f64) -> (f64, f64) {
    let (k, g) = (p.kappa, p.gamma);
    let den = 4.0 * g * g + k * k;
    if den == 0.0 {
        return (1.0, 0.0);
    }
    let (a, b) = (k * g / den, 2.0 * g * g / den);
    let w = 2.0 * g * t;
    let e = (-k * t).exp();
    let alpha = (2.0 * g * g + k * k) / den + e * (a * w.sin() + b * w.cos());
    if g == 0.0 {
        return (alpha, 0.0);
    }
    let dalpha = e * (-k * (a * w.sin() + b * w.cos()) + 2.0 * g * (a * w.cos() - b * w.sin()));
    (alpha, (k * (1.0 - alpha) - dalpha) / (2.0 * g))
}

/// `α' = κ(1−α) − 2γβ`, `β' = γ(2α−1) − κβ` on the state `[α, β]`.
pub fn nonmarkov_single_system(p: &CqecParams) -> LinearSystem {
    let (k, g) = (p.kappa, p.gamma);
    LinearSystem { n: 2, a: vec![-k, -2.0 * g, 2.0 * g, -k], b: vec![k, -g] }
}

// ---------------------------------------------------------------------------
// Three-qubit code, Markovian noise

/// Weights of the no-, one-, two- and three-error mixtures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkovBitflipState {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl MarkovBitflipState {
    pub fn codeword() -> Self {
        MarkovBitflipState { a: 1.0, b: 0.0, c: 0.0, d: 0.0 }
    }

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let s = MarkovBitflipState { a, b, c, d };
        if (s.total() - 1.0).abs() > 1e-9 || s.as_array().iter().any(|w| !(-1e-9..=1.0 + 1e-9).contains(w)) {
            return Err(Error::InvalidState(format!("weights {:?} are not a distribution", s.as_array())));
        }
        Ok(s)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn total(&self) -> f64 {
        self.a + self.b + self.c + self.d
    }

    /// Weight outside the code space.
    pub fn outside(&self) -> f64 {
        self.b + self.c
    }
}

pub fn markov_bitflip_system(p: &CqecParams) -> LinearSystem {
    let (l, k) = (p.lambda, p.kappa);
    #[rustfmt::skip]
    let a = vec![
        -3.0 * l, l + k,          0.0,            0.0,
        3.0 * l,  -(3.0 * l + k), 2.0 * l,        0.0,
        0.0,      2.0 * l,        -(3.0 * l + k), 3.0 * l,
        0.0,      0.0,            l + k,          -3.0 * l,
    ];
    LinearSystem { n: 4, a, b: vec![0.0; 4] }
}

pub fn markov_bitflip(p: &CqecParams, s0: MarkovBitflipState, grid: &[f64]) -> Result<Vec<MarkovBitflipState>> {
    let xs = markov_bitflip_system(p).integrate(&s0.as_array(), grid, ODE_TOL)?;
    Ok(xs.into_iter().map(|x| MarkovBitflipState { a: x[0], b: x[1], c: x[2], d: x[3] }).collect())
}

/// `b + c = 3λ/(4λ+κ)·(1 − e^{−(4λ+κ)t})` from the codeword.
pub fn markov_outside_weight(p: &CqecParams, t: f64) -> f64 {
    let rate = 4.0 * p.lambda + p.kappa;
    if rate == 0.0 {
        return 0.0;
    }
    3.0 * p.lambda / rate * (1.0 - (-rate * t).exp())
}

/// Effective bit flip with rate `6λ/r`: `a ≈ (1 + e^{−12λt/r})/2`.
pub fn markov_large_r_fidelity(p: &CqecParams, t: f64) -> f64 {
    let rate = 12.0 * p.lambda * p.lambda / p.kappa;
    0.5 * (1.0 + (-rate * t).exp())
}

// ---------------------------------------------------------------------------
// Three-qubit code, one bath qubit per code qubit

pub const NM_DIM: usize = 13;

/// Representative index pairs `lmn,pqr` of the 13 symmetry classes, in vector order.
pub const NM_LABELS: [&str; NM_DIM] = [
    "000,000", "100,000", "110,000", "100,010", "100,100", "110,001", "111,000", "110,100", "110,110", "110,011",
    "111,100", "111,110", "111,111",
];

/// Members of each class with `lmn = pqr`; only these contribute to the trace.
pub const NM_TRACE_WEIGHTS: [f64; NM_DIM] = [1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0];

// Generator = γ·G + κ·K.
#[rustfmt::skip]
const NM_GAMMA: [[i8; NM_DIM]; NM_DIM] = [
    [0, -6,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0],
    [1,  0, -2, -2, -1,  0,  0,  0,  0,  0,  0,  0,  0],
    [0,  2,  0,  0,  0, -1, -1, -2,  0,  0,  0,  0,  0],
    [0,  2,  0,  0,  0, -2,  0, -2,  0,  0,  0,  0,  0],
    [0,  2,  0,  0,  0,  0,  0, -4,  0,  0,  0,  0,  0],
    [0,  0,  1,  2,  0,  0,  0,  0,  0, -2, -1,  0,  0],
    [0,  0,  3,  0,  0,  0,  0,  0,  0,  0, -3,  0,  0],
    [0,  0,  1,  1,  1,  0,  0,  0, -1, -1, -1,  0,  0],
    [0,  0,  0,  0,  0,  0,  0,  4,  0,  0,  0, -2,  0],
    [0,  0,  0,  0,  0,  2,  0,  2,  0,  0,  0, -2,  0],
    [0,  0,  0,  0,  0,  1,  1,  2,  0,  0,  0, -2,  0],
    [0,  0,  0,  0,  0,  0,  0,  0,  1,  2,  2,  0, -1],
    [0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  6,  0],
];

#[rustfmt::skip]
const NM_KAPPA: [[i8; NM_DIM]; NM_DIM] = [
    [0,  0,  0,  0,  3,  0,  0,  0,  0,  0,  0,  0,  0],
    [0, -1,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0],
    [0,  0, -1,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0],
    [0,  0,  0, -1,  0,  0,  0,  0,  0,  0,  0,  0,  0],
    [0,  0,  0,  0, -1,  0,  0,  0,  0,  0,  0,  0,  0],
    [0,  0,  0,  0,  0, -1,  0,  0,  0,  0,  0,  0,  0],
    [0,  0,  0,  0,  0, -3,  0,  0,  0,  0,  0,  0,  0],
    [0,  0,  0,  0,  0,  0,  0, -1,  0,  0,  0,  0,  0],
    [0,  0,  0,  0,  0,  0,  0,  0, -1,  0,  0,  0,  0],
    [0,  0,  0,  0,  0,  0,  0,  0,  0, -1,  0,  0,  0],
    [0,  0,  0,  0,  0,  0,  0,  0,  0,  0, -1,  0,  0],
    [0,  0,  0,  0,  0,  0,  0,  0,  0,  0,  0, -1,  0],
    [0,  0,  0,  0,  0,  0,  0,  0,  3,  0,  0,  0,  0],
];

pub fn build_nm_generator(p: &CqecParams) -> [[f64; NM_DIM]; NM_DIM] {
    let mut m = [[0.0; NM_DIM]; NM_DIM];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = p.gamma * NM_GAMMA[i][j] as f64 + p.kappa * NM_KAPPA[i][j] as f64;
        }
    }
    m
}

pub fn nm_system(p: &CqecParams) -> LinearSystem {
    LinearSystem { n: NM_DIM, a: build_nm_generator(p).concat(), b: vec![0.0; NM_DIM] }
}

/// Eigenvalues ordered by modulus, ties by imaginary part.
pub fn nm_eigenvalues(p: &CqecParams) -> Result<Vec<C64>> {
    let m = build_nm_generator(p);
    let cm = ComplexMatrix::from_fn(NM_DIM, NM_DIM, |i, j| c(m[i][j], 0.0));
    let mut ev = eig_general(&cm)?;
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// Slow pair `γ(−144/R³ ± 24i/R²)`; returns the `+` member.
pub fn nm_slow_pair_prediction(p: &CqecParams) -> Option<C64> {
    let r = p.big_r()?;
    Some(c(-144.0 / r.powi(3), 24.0 / (r * r)) * p.gamma)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NmCoeffs {
    pub c: [f64; NM_DIM],
}

impl NmCoeffs {
    /// `ρ(0)` itself: only `C_{000,000} = 1`.
    pub fn codeword() -> Self {
        let mut c = [0.0; NM_DIM];
        c[0] = 1.0;
        NmCoeffs { c }
    }

    /// Lower bound on the codeword fidelity.
    pub fn fidelity(&self) -> f64 {
        self.c[0]
    }

    /// `Tr ρ`, conserved exactly by the generator.
    pub fn trace(&self) -> f64 {
        self.c.iter().zip(NM_TRACE_WEIGHTS).map(|(c, w)| c * w).sum()
    }
}

pub fn nm_bitflip_evolve(p: &CqecParams, c0: NmCoeffs, grid: &[f64]) -> Result<Vec<NmCoeffs>> {
    let xs = nm_system(p).integrate(&c0.c, grid, ODE_TOL)?;
    Ok(xs
        .into_iter()
        .map(|x| {
            let mut c = [0.0; NM_DIM];
            c.copy_from_slice(&x);
            NmCoeffs { c }
        })
        .collect())
}

/// `(1 + e^{−144γt/R³} cos(24γt/R²))/2`, the large-`R` codeword fidelity.
pub fn nm_long_time_fidelity(p: &CqecParams, t: f64) -> Option<f64> {
    let r = p.big_r()?;
    let gt = p.gamma * t;
    Some(0.5 * (1.0 + (-144.0 * gt / r.powi(3)).exp() * (24.0 * gt / (r * r)).cos()))
}

// ---------------------------------------------------------------------------
// Weak realizations of the correcting map

/// `ε′ = (1 − √(1−ε²))/ε`, the rotation paired with measurement strength `ε`.
pub fn epsilon_prime(eps: f64) -> f64 {
    (1.0 - (1.0 - eps * eps).sqrt()) / eps
}

/// `α′ − α = 4ε′²/(1+ε′²)²·(1 − α)`; the prefactor equals `ε²`.
pub fn alpha_gain(alpha: f64, eps: f64) -> f64 {
    let ep = epsilon_prime(eps);
    4.0 * ep * ep / (1.0 + ep * ep).powi(2) * (1.0 - alpha)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("measurement strength {eps} must lie in (0, 1)")))
    }
}

/// `√((I ± εX)/2)`.
fn sqrt_measurement(eps: f64, sign: f64) -> ComplexMatrix {
    let (p, m) = (((1.0 + eps) / 2.0).sqrt(), ((1.0 - eps) / 2.0).sqrt());
    let (d, o) = (0.5 * (p + m), 0.5 * sign * (p - m));
    ComplexMatrix::from_fn(2, 2, |r, k| c(if r == k { d } else { o }, 0.0))
}

/// `(I ± iε′Y)/√(1+ε′²)`, a rotation about Y.
fn weak_rotation(ep: f64, sign: f64) -> ComplexMatrix {
    let n = 1.0 / (1.0 + ep * ep).sqrt();
    let y = pauli_y();
    ComplexMatrix::from_fn(2, 2, |r, k| {
        let id = if r == k { ONE } else { ZERO };
        (id + c(0.0, sign * ep) * y[(r, k)]) * n
    })
}

/// Kraus pair `U± M±` of the single-qubit weak correction.
pub fn weak_single_kraus(eps: f64) -> Result<Vec<ComplexMatrix>> {
    check_eps(eps)?;
    let ep = epsilon_prime(eps);
    Ok([1.0, -1.0].iter().map(|&s| &weak_rotation(ep, s) * &sqrt_measurement(eps, s)).collect())
}

pub fn weak_ec_map_single(rho: &DensityMatrix, eps: f64) -> Result<DensityMatrix> {
    if rho.dim() != 2 {
        return Err(Error::Dimension(format!("single-qubit map on a {}-dim state", rho.dim())));
    }
    let ks = weak_single_kraus(eps)?;
    Ok(DensityMatrix::new_unchecked(apply_kraus(&ks, rho.mat()).hermitian_part()))
}

/// `|0⟩⟨0|·|0⟩⟨0| + |0⟩⟨1|·|1⟩⟨0|`.
pub fn strong_single_kraus() -> Vec<ComplexMatrix> {
    vec![
        ComplexMatrix::from_fn(2, 2, |r, k| if r == 0 && k == 0 { ONE } else { ZERO }),
        ComplexMatrix::from_fn(2, 2, |r, k| if r == 0 && k == 1 { ONE } else { ZERO }),
    ]
}

/// Operator on three qubits acting as `op(others)` on `qubit`, where `others`
/// are the computational values of the remaining two qubits in order.
fn conditioned_on_others(qubit: usize, op: impl Fn(u8, u8) -> ComplexMatrix) -> ComplexMatrix {
    let bit = |x: usize, q: usize| (x >> (2 - q)) & 1;
    let others: Vec<usize> = (0..3).filter(|&q| q != qubit).collect();
    let mut m = ComplexMatrix::zeros(8, 8);
    for r in 0..8 {
        for k in 0..8 {
            if others.iter().any(|&q| bit(r, q) != bit(k, q)) {
                continue;
            }
            let local = op(bit(r, others[0]) as u8, bit(r, others[1]) as u8);
            m[(r, k)] = local[(bit(r, qubit), bit(k, qubit))];
        }
    }
    m
}

/// Kraus pair `U^i_± M^i_±` correcting qubit `i` of the bit-flip code.
pub fn weak_bitflip_kraus(eps: f64, qubit: usize) -> Result<Vec<ComplexMatrix>> {
    check_eps(eps)?;
    if qubit > 2 {
        return Err(Error::InvalidInput(format!("qubit index {qubit} out of range")));
    }
    let ep = epsilon_prime(eps);
    let half = ComplexMatrix::identity(2).scale_re(std::f64::consts::FRAC_1_SQRT_2);
    Ok([1.0, -1.0]
        .iter()
        .map(|&s| {
            let m = conditioned_on_others(qubit, |a, b| if a == b { sqrt_measurement(eps, s) } else { half.clone() });
            let u = conditioned_on_others(qubit, |a, b| match (a, b) {
                (0, 0) => weak_rotation(ep, s),
                (1, 1) => weak_rotation(ep, -s),
                _ => ComplexMatrix::identity(2),
            });
            &u * &m
        })
        .collect())
}

/// The three single-qubit weak corrections applied in order 1, 2, 3.
pub fn weak_ec_map_bitflip(rho: &DensityMatrix, eps: f64) -> Result<DensityMatrix> {
    if rho.dim() != 8 {
        return Err(Error::Dimension(format!("bit-flip map on a {}-dim state", rho.dim())));
    }
    let mut m = rho.mat().clone();
    for q in 0..3 {
        m = apply_kraus(&weak_bitflip_kraus(eps, q)?, &m);
    }
    Ok(DensityMatrix::new_unchecked(m.hermitian_part()))
}

/// Syndrome projection followed by the flip back into `span{|000⟩, |111⟩}`.
pub fn strong_bitflip_kraus() -> Vec<ComplexMatrix> {
    let pair = |a: usize, b: usize| {
        ComplexMatrix::from_fn(8, 8, |r, k| if (r == 0 && k == a) || (r == 7 && k == b) { ONE } else { ZERO })
    };
    vec![pair(0, 7), pair(0b100, 0b011), pair(0b010, 0b101), pair(0b001, 0b110)]
}

pub fn strong_map_bitflip(rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != 8 {
        return Err(Error::Dimension(format!("bit-flip map on a {}-dim state", rho.dim())));
    }
    Ok(DensityMatrix::new_unchecked(apply_kraus(&strong_bitflip_kraus(), rho.mat())))
}

/// Short-time coefficient in `α(t) = 1 − Ct²` for a system qubit starting in
/// `|0⟩` next to bath state `ρ_B`:
/// `C = Tr{H²(P0⊗ρ_B)} − Tr{H(P0⊗I)H(P0⊗ρ_B)}`.
pub fn zeno_coefficient(h: &ComplexMatrix, rho_b: &DensityMatrix) -> Result<f64> {
    let d = h.rows();
    let db = rho_b.dim();
    if !h.is_square() || db == 0 || d % db != 0 || d / db < 2 {
        return Err(Error::Dimension(format!("Hamiltonian of dim {d} against a bath of dim {db}")));
    }
    let dev = h.hermitian_deviation();
    if dev > TOL_HERM {
        return Err(Error::NotHermitian(dev));
    }
    let ds = d / db;
    let p0 = ComplexMatrix::from_fn(ds, ds, |r, k| if r == 0 && k == 0 { ONE } else { ZERO });
    let proj = crate::qcore::tensor(&p0, &ComplexMatrix::identity(db))?;
    let rho0 = crate::qcore::tensor(&p0, rho_b.mat())?;
    let h2 = h * h;
    let first = h2.trace_product(&rho0);
    let second = (&(h * &proj) * h).trace_product(&rho0);
    Ok((first - second).re)
}

/// `X` on code qubit `q` of three.
pub fn bitflip_on(q: usize) -> ComplexMatrix {
    crate::qcore::on_qubit(&pauli_x(), q, 3)
}
