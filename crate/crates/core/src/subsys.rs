//! Fidelity of information encoded in a subsystem, blocked noise channels, and
//! the Markovian correctability conditions for `H = (H^A ⊗ H^B) ⊕ K`.
//!
//! Block basis: the first `d_A·d_B` vectors span `H^A ⊗ H^B` (A-major), the last
//! `d_K` span `K`.

use rand::Rng;
use rayon::prelude::*;

use crate::qcore::{
    apply_kraus, completeness_deviation, eigh, fidelity_mat, ginibre, inv_sqrtm_psd, partial_trace_mat, random_density,
    sqrtm_psd, tensor, ComplexMatrix, Decomposition, DensityMatrix, I,
};
use crate::{rng, Error, Result};

pub const TOL_BLOCK: f64 = 1e-10;
pub const TOL_CORRECTABLE: f64 = 1e-8;
/// Largest accepted disagreement between the `h` and `2h` derivative estimates of `U(t)`.
pub const TOL_RICHARDSON: f64 = 1e-6;

/// `I^A ⊗ (tr_A m)/d_A`: the closest operator of the form `I^A ⊗ C` in Frobenius norm.
pub fn a_average(m: &ComplexMatrix, d_a: usize, d_b: usize) -> Result<ComplexMatrix> {
    let c = partial_trace_mat(m, &[d_a, d_b], &[1])?.scale_re(1.0 / d_a as f64);
    tensor(&ComplexMatrix::identity(d_a), &c)
}

// ---------------------------------------------------------------------------
// Encoded states and F^A

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedState {
    pub rho: DensityMatrix,
    pub decomp: Decomposition,
}

impl EncodedState {
    pub fn new(rho: DensityMatrix, decomp: Decomposition) -> Result<Self> {
        if rho.dim() != decomp.dim() {
            return Err(Error::Dimension(format!(
                "state of dimension {} for decomposition of dimension {}",
                rho.dim(),
                decomp.dim()
            )));
        }
        Ok(EncodedState { rho, decomp })
    }

    /// Embeds a state on `H^A ⊗ H^B`; zero weight on `K`.
    pub fn perfect(rho_ab: &DensityMatrix, decomp: Decomposition) -> Result<Self> {
        if rho_ab.dim() != decomp.d_ab() {
            return Err(Error::Dimension(format!("state on H^AB must have dimension {}", decomp.d_ab())));
        }
        Ok(EncodedState { rho: DensityMatrix::new_unchecked(decomp.embed_ab(rho_ab.mat())), decomp })
    }

    /// Unnormalized reduced operator `Tr_B P^AB ρ P^AB`.
    pub fn reduced_a(&self) -> ComplexMatrix {
        let d = self.decomp;
        partial_trace_mat(&d.ab_block(self.rho.mat()), &[d.d_a, d.d_b], &[0]).expect("block shape matches decomposition")
    }

    pub fn weight_ab(&self) -> f64 {
        self.decomp.ab_block(self.rho.mat()).trace().re
    }

    pub fn weight_k(&self) -> f64 {
        self.decomp.k_block(self.rho.mat()).trace().re
    }

    /// True if the state has no support outside `H^A ⊗ H^B` (within `tol`).
    pub fn is_perfect(&self, tol: f64) -> bool {
        let d = self.decomp;
        let m = self.rho.mat();
        (0..d.dim()).all(|r| (d.d_ab()..d.dim()).all(|k| m[(r, k)].norm() <= tol))
    }
}

/// `F^A(τ, υ) = √(Tr P^AB τ · Tr P^AB υ)·F(τ^A, υ^A) + √(Tr P_K τ · Tr P_K υ)`.
///
/// The first term is evaluated as the fidelity of the unnormalized reduced
/// operators, so a zero `H^AB` weight on either side contributes 0.
pub fn f_a(tau: &EncodedState, ups: &EncodedState) -> Result<f64> {
    if tau.decomp != ups.decomp {
        return Err(Error::Dimension("F^A needs both states on the same decomposition".into()));
    }
    let first = fidelity_mat(&tau.reduced_a(), &ups.reduced_a())?;
    let second = (tau.weight_k().max(0.0) * ups.weight_k().max(0.0)).sqrt();
    Ok((first + second).clamp(0.0, 1.0))
}

/// `Λ^A = arccos F^A`.
pub fn angle_a(tau: &EncodedState, ups: &EncodedState) -> Result<f64> {
    Ok(f_a(tau, ups)?.acos())
}

// ---------------------------------------------------------------------------
// Blocked Kraus channels

/// Kraus operators `M_i = [[I^A ⊗ C_i, D_i], [0, G_i]]`.
#[derive(Clone, Debug)]
pub struct BlockKraus {
    decomp: Decomposition,
    ops: Vec<ComplexMatrix>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockResiduals {
    pub completeness: f64,
    /// Largest entry of any lower-left block; must be exactly zero.
    pub lower_left: f64,
    /// Largest Frobenius deviation of an upper-left block from `I^A ⊗ C`.
    pub factorization: f64,
}

impl BlockResiduals {
    pub fn ok(&self) -> bool {
        self.completeness <= TOL_BLOCK && self.lower_left == 0.0 && self.factorization <= TOL_BLOCK
    }
}

impl BlockKraus {
    pub fn new(decomp: Decomposition, ops: Vec<ComplexMatrix>) -> Result<Self> {
        let res = Self::residuals(&decomp, &ops)?;
        if !res.ok() {
            return Err(Error::InvalidInput(format!(
                "not a blocked channel: completeness {:.3e}, lower-left {:.3e}, factorization {:.3e}",
                res.completeness, res.lower_left, res.factorization
            )));
        }
        Ok(BlockKraus { decomp, ops })
    }

    pub fn residuals(decomp: &Decomposition, ops: &[ComplexMatrix]) -> Result<BlockResiduals> {
        let d = decomp.dim();
        let dab = decomp.d_ab();
        if ops.is_empty() {
            return Err(Error::InvalidInput("channel needs at least one Kraus operator".into()));
        }
        if ops.iter().any(|m| m.rows() != d || m.cols() != d) {
            return Err(Error::Dimension(format!("Kraus operators must be {d}x{d}")));
        }
        let mut lower_left: f64 = 0.0;
        let mut factorization: f64 = 0.0;
        for m in ops {
            lower_left = lower_left.max(m.block(dab, 0, decomp.d_k, dab).max_abs());
            let ul = decomp.ab_block(m);
            factorization = factorization.max((&ul - &a_average(&ul, decomp.d_a, decomp.d_b)?).frobenius());
        }
        Ok(BlockResiduals { completeness: completeness_deviation(ops), lower_left, factorization })
    }

    /// Assembles `M_i` from `C_i` (`d_B×d_B`), `D_i` (`d_AB×d_K`) and `G_i` (`d_K×d_K`).
    pub fn from_blocks(decomp: Decomposition, c: &[ComplexMatrix], d: &[ComplexMatrix], g: &[ComplexMatrix]) -> Result<Self> {
        if c.len() != d.len() || c.len() != g.len() {
            return Err(Error::InvalidInput("C, D and G lists must have equal length".into()));
        }
        let (dab, dk) = (decomp.d_ab(), decomp.d_k);
        let mut ops = Vec::with_capacity(c.len());
        for ((ci, di), gi) in c.iter().zip(d).zip(g) {
            if ci.rows() != decomp.d_b || ci.cols() != decomp.d_b || di.rows() != dab || di.cols() != dk || gi.rows() != dk || gi.cols() != dk {
                return Err(Error::Dimension("block shapes do not match the decomposition".into()));
            }
            let mut m = ComplexMatrix::zeros(decomp.dim(), decomp.dim());
            m.set_block(0, 0, &tensor(&ComplexMatrix::identity(decomp.d_a), ci)?);
            if dk > 0 {
                m.set_block(0, dab, di);
                m.set_block(dab, dab, gi);
            }
            ops.push(m);
        }
        Self::new(decomp, ops)
    }

    /// Random blocked channel with `n_ops` Kraus operators.
    ///
    /// Built block by block so the form is exact: the `C_i` are normalized to
    /// `Σ C†C = I`, the stacked `D` is projected off the range of the isometry
    /// `[I⊗C_i]_i` and scaled to `‖Σ D†D‖ ≤ d_scale < 1`, and the `G_i` fill the
    /// remainder `Σ G†G = I − Σ D†D`. With `d_scale = 0` the channel never
    /// moves weight from `K` into `H^AB`.
    pub fn random<R: Rng + ?Sized>(decomp: Decomposition, n_ops: usize, d_scale: f64, rng: &mut R) -> Result<Self> {
        if n_ops == 0 || !(0.0..1.0).contains(&d_scale) {
            return Err(Error::InvalidInput("need n_ops ≥ 1 and d_scale in [0, 1)".into()));
        }
        let (da, db, dk, dab) = (decomp.d_a, decomp.d_b, decomp.d_k, decomp.d_ab());
        let eye_a = ComplexMatrix::identity(da);

        let c0: Vec<ComplexMatrix> = (0..n_ops).map(|_| ginibre(db, db, rng)).collect();
        let norm_c = inv_sqrtm_psd(&gram(&c0), 0.0)?;
        let c: Vec<ComplexMatrix> = c0.iter().map(|ci| ci * &norm_c).collect();
        let v: Vec<ComplexMatrix> = c.iter().map(|ci| tensor(&eye_a, ci)).collect::<Result<_>>()?;

        if dk == 0 {
            let empty = vec![ComplexMatrix::zeros(0, 0); n_ops];
            return Self::from_blocks(decomp, &c, &vec![ComplexMatrix::zeros(dab, 0); n_ops], &empty);
        }
        let mut d: Vec<ComplexMatrix> = (0..n_ops).map(|_| ginibre(dab, dk, rng)).collect();
        // D ← (1 − V V†) D on the stacked space.
        let mut vd = ComplexMatrix::zeros(dab, dk);
        for (vi, di) in v.iter().zip(&d) {
            vd = &vd + &(&vi.adjoint() * di);
        }
        for (vi, di) in v.iter().zip(d.iter_mut()) {
            *di = &*di - &(vi * &vd);
        }
        let sum_dd = gram(&d);
        let top = eigh(&sum_dd)?.0.last().copied().unwrap_or(0.0);
        let s = if top > 1e-12 { (d_scale * rng.random::<f64>()).sqrt() / top.sqrt() } else { 0.0 };
        for di in d.iter_mut() {
            *di = di.scale_re(s);
        }

        let g0: Vec<ComplexMatrix> = (0..n_ops).map(|_| ginibre(dk, dk, rng)).collect();
        let rest = &ComplexMatrix::identity(dk) - &gram(&d);
        let fill = &inv_sqrtm_psd(&gram(&g0), 0.0)? * &sqrtm_psd(&rest.hermitian_part())?;
        let g: Vec<ComplexMatrix> = g0.iter().map(|gi| gi * &fill).collect();

        Self::from_blocks(decomp, &c, &d, &g)
    }

    pub fn decomp(&self) -> Decomposition {
        self.decomp
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }

    /// All `D_i = 0`: no transitions from `K` into `H^AB`.
    pub fn is_initialization_free(&self, tol: f64) -> bool {
        let dab = self.decomp.d_ab();
        self.ops.iter().all(|m| m.block(0, dab, dab, self.decomp.d_k).max_abs() <= tol)
    }

    pub fn apply(&self, state: &EncodedState) -> Result<EncodedState> {
        if state.decomp != self.decomp {
            return Err(Error::Dimension("channel and state use different decompositions".into()));
        }
        let out = apply_kraus(&self.ops, state.rho.mat()).hermitian_part();
        Ok(EncodedState { rho: DensityMatrix::new_unchecked(out), decomp: self.decomp })
    }
}

/// `Σ M†M`.
fn gram(ms: &[ComplexMatrix]) -> ComplexMatrix {
    let n = ms.first().map_or(0, |m| m.cols());
    ms.iter().fold(ComplexMatrix::zeros(n, n), |acc, m| &acc + &(&m.adjoint() * m))
}

/// Random state supported on `H^A ⊗ H^B`.
pub fn random_perfect<R: Rng + ?Sized>(decomp: Decomposition, rng: &mut R) -> EncodedState {
    let rho_ab = random_density(decomp.d_ab(), rng);
    EncodedState::perfect(&rho_ab, decomp).expect("dimension matches by construction")
}

/// Random full-rank state; generically has weight and coherences on `K`.
pub fn random_imperfect<R: Rng + ?Sized>(decomp: Decomposition, rng: &mut R) -> EncodedState {
    EncodedState { rho: random_density(decomp.dim(), rng), decomp }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaTrial {
    pub trial: usize,
    pub fa_before: f64,
    pub fa_after: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct FaMonotoneReport {
    pub trials: Vec<FaTrial>,
    pub violations: usize,
    /// Smallest `F^A(ρ, E(ρ̃)) − F^A(ρ, ρ̃)` observed.
    pub min_margin: f64,
}

pub const FA_SLACK: f64 = 1e-9;
const KRAUS_PER_CHANNEL: usize = 3;
const D_SCALE: f64 = 0.9;

/// Samples perfect `ρ`, imperfect `ρ̃` and a blocked channel `E` per trial and
/// records `F^A(ρ, ρ̃)` against `F^A(ρ, E(ρ̃))`. Trial `i` draws from stream `seed + i`.
pub fn check_fa_monotone_under_blocked_noise(decomp: Decomposition, trials: usize, seed: u64) -> Result<FaMonotoneReport> {
    if decomp.d_k == 0 {
        return Err(Error::InvalidInput("monotonicity check needs d_K ≥ 1".into()));
    }
    let rows: Vec<FaTrial> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let rho = random_perfect(decomp, &mut r);
            let tilde = random_imperfect(decomp, &mut r);
            let channel = BlockKraus::random(decomp, KRAUS_PER_CHANNEL, D_SCALE, &mut r)?;
            let fa_before = f_a(&rho, &tilde)?;
            let fa_after = f_a(&rho, &channel.apply(&tilde)?)?;
            Ok(FaTrial { trial: i, fa_before, fa_after, pass: fa_after >= fa_before - FA_SLACK })
        })
        .collect::<Result<_>>()?;
    let violations = rows.iter().filter(|t| !t.pass).count();
    let min_margin = rows.iter().map(|t| t.fa_after - t.fa_before).fold(f64::INFINITY, f64::min);
    Ok(FaMonotoneReport { trials: rows, violations, min_margin })
}

// ---------------------------------------------------------------------------
// Markovian correctability

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectabilityPoint {
    pub t: f64,
    /// `max_j ‖L̃_j P^AB − I^A ⊗ C_j‖`.
    pub residual1: f64,
    /// `‖P^AB (H̃ + H′) P^AB − I^A ⊗ D^B‖`.
    pub residual2: f64,
    /// `‖P^AB (H̃ + H′ + (i/2) Σ L̃†L̃) P_K‖`.
    pub residual3: f64,
}

#[derive(Clone, Debug)]
pub struct CorrectabilityReport {
    pub points: Vec<CorrectabilityPoint>,
    pub max_residual1: f64,
    pub max_residual2: f64,
    pub max_residual3: f64,
    pub correctable: bool,
}

/// Derivative of `U` at every grid index from second-order stencils at spacing
/// `h` and `2h`; returns the Richardson combination and the largest disagreement.
fn schedule_derivative(u: &[ComplexMatrix], h: f64) -> (Vec<ComplexMatrix>, f64) {
    let n = u.len();
    let lin = |terms: &[(f64, usize)], scale: f64| -> ComplexMatrix {
        let d = u[0].rows();
        terms.iter().fold(ComplexMatrix::zeros(d, d), |acc, &(w, k)| &acc + &u[k].scale_re(w)).scale_re(scale)
    };
    let mut worst: f64 = 0.0;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (dh, d2h) = if k >= 2 && k + 2 < n {
            (lin(&[(1.0, k + 1), (-1.0, k - 1)], 0.5 / h), lin(&[(1.0, k + 2), (-1.0, k - 2)], 0.25 / h))
        } else if k < 2 {
            (lin(&[(-3.0, k), (4.0, k + 1), (-1.0, k + 2)], 0.5 / h), lin(&[(-3.0, k), (4.0, k + 2), (-1.0, k + 4)], 0.25 / h))
        } else {
            (lin(&[(3.0, k), (-4.0, k - 1), (1.0, k - 2)], 0.5 / h), lin(&[(3.0, k), (-4.0, k - 2), (1.0, k - 4)], 0.25 / h))
        };
        let gap = &dh - &d2h;
        worst = worst.max(gap.max_abs() / 3.0);
        out.push(&dh + &gap.scale_re(1.0 / 3.0));
    }
    (out, worst)
}

/// Checks the three correctability conditions in the frame `Õ = U O U†` with
/// `H′ = i (dU/dt) U†` estimated by finite differences on a uniform grid.
pub fn check_markov_correctable(
    hamil: &ComplexMatrix,
    lindblad_ops: &[ComplexMatrix],
    decomp: Decomposition,
    u_of_t: &[ComplexMatrix],
    t_grid: &[f64],
) -> Result<CorrectabilityReport> {
    let d = decomp.dim();
    if hamil.rows() != d || hamil.cols() != d || lindblad_ops.iter().any(|l| l.rows() != d || l.cols() != d) {
        return Err(Error::Dimension(format!("operators must be {d}x{d}")));
    }
    if u_of_t.len() != t_grid.len() || u_of_t.iter().any(|u| u.rows() != d || u.cols() != d) {
        return Err(Error::Dimension("one unitary of matching size per grid point".into()));
    }
    if t_grid.len() < 5 {
        return Err(Error::InvalidInput("grid needs at least 5 points".into()));
    }
    let h = t_grid[1] - t_grid[0];
    if h <= 0.0 || t_grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::InvalidInput("grid must be uniform and increasing".into()));
    }
    let herm_dev = hamil.hermitian_deviation();
    if herm_dev > crate::qcore::TOL_HERM {
        return Err(Error::NotHermitian(herm_dev));
    }
    let (du, disagreement) = schedule_derivative(u_of_t, h);
    if disagreement > TOL_RICHARDSON {
        return Err(Error::InvalidInput(format!(
            "grid too coarse for dU/dt: step estimates disagree by {disagreement:.3e}"
        )));
    }

    let (da, db, dab, dk) = (decomp.d_a, decomp.d_b, decomp.d_ab(), decomp.d_k);
    let p_ab = decomp.p_ab();
    let p_k = decomp.p_k();
    let mut points = Vec::with_capacity(t_grid.len());
    for ((&t, u), du) in t_grid.iter().zip(u_of_t).zip(&du) {
        let ud = u.adjoint();
        let rot = |o: &ComplexMatrix| &(u * o) * &ud;
        let h_prime = (du * &ud).scale(I);
        let l_tilde: Vec<ComplexMatrix> = lindblad_ops.iter().map(rot).collect();
        let mut r1: f64 = 0.0;
        let mut lsum = ComplexMatrix::zeros(d, d);
        for l in &l_tilde {
            let lp = l * &p_ab;
            let target = decomp.embed_ab(&a_average(&decomp.ab_block(&lp), da, db)?);
            r1 = r1.max((&lp - &target).frobenius());
            lsum = &lsum + &(&l.adjoint() * l);
        }
        let heff = &rot(hamil) + &h_prime;
        let ab = decomp.ab_block(&heff);
        let r2 = (&ab - &a_average(&ab, da, db)?).frobenius();
        let r3 = if dk == 0 {
            0.0
        } else {
            let m = &(&p_ab * &(&heff + &lsum.scale(I * 0.5))) * &p_k;
            m.block(0, dab, dab, dk).frobenius()
        };
        points.push(CorrectabilityPoint { t, residual1: r1, residual2: r2, residual3: r3 });
    }
    let max_of = |f: fn(&CorrectabilityPoint) -> f64| points.iter().map(f).fold(0.0, f64::max);
    let (m1, m2, m3) = (max_of(|p| p.residual1), max_of(|p| p.residual2), max_of(|p| p.residual3));
    Ok(CorrectabilityReport {
        correctable: m1 < TOL_CORRECTABLE && m2 < TOL_CORRECTABLE && m3 < TOL_CORRECTABLE,
        points,
        max_residual1: m1,
        max_residual2: m2,
        max_residual3: m3,
    })
}

/// Correcting frame Hamiltonian in the gauge `D^B = 0`:
/// `H′ = −H̃ − (i/2) P^AB A + (i/2) A P^AB` with `A = Σ L̃†L̃`.
pub fn correcting_hamiltonian(
    hamil: &ComplexMatrix,
    lindblad_ops: &[ComplexMatrix],
    decomp: Decomposition,
    u: &ComplexMatrix,
) -> ComplexMatrix {
    let d = decomp.dim();
    let ud = u.adjoint();
    let rot = |o: &ComplexMatrix| &(u * o) * &ud;
    let p = decomp.p_ab();
    let a = lindblad_ops.iter().fold(ComplexMatrix::zeros(d, d), |acc, l| {
        let lt = rot(l);
        &acc + &(&lt.adjoint() * &lt)
    });
    let skew = &(&a * &p) - &(&p * &a);
    &(-&rot(hamil)) + &skew.scale(I * 0.5)
}

/// Integrates `i dU/dt = H′(U) U` from `U(0) = I` with RK4, `substeps` per grid interval.
pub fn correcting_unitary_schedule(
    hamil: &ComplexMatrix,
    lindblad_ops: &[ComplexMatrix],
    decomp: Decomposition,
    t_grid: &[f64],
    substeps: usize,
) -> Result<Vec<ComplexMatrix>> {
    let d = decomp.dim();
    if hamil.rows() != d || lindblad_ops.iter().any(|l| l.rows() != d) {
        return Err(Error::Dimension(format!("operators must be {d}x{d}")));
    }
    if t_grid.is_empty() || substeps == 0 {
        return Err(Error::InvalidInput("need a nonempty grid and at least one substep".into()));
    }
    let f = |u: &ComplexMatrix| (&correcting_hamiltonian(hamil, lindblad_ops, decomp, u) * u).scale(-I);
    let mut u = ComplexMatrix::identity(d);
    let mut out = vec![u.clone()];
    for w in t_grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for _ in 0..substeps {
            let k1 = f(&u);
            let k2 = f(&(&u + &k1.scale_re(h / 2.0)));
            let k3 = f(&(&u + &k2.scale_re(h / 2.0)));
            let k4 = f(&(&u + &k3.scale_re(h)));
            let incr = &(&k1 + &k2.scale_re(2.0)) + &(&k3.scale_re(2.0) + &k4);
            u = &u + &incr.scale_re(h / 6.0);
        }
        out.push(u.clone());
    }
    Ok(out)
}

/// `E^A ⊗ E^B ⊕ E_K` from Kraus lists on each factor; the direct-sum pieces
/// are separate Kraus operators.
pub fn local_channel(
    decomp: Decomposition,
    ea: &[ComplexMatrix],
    eb: &[ComplexMatrix],
    ek: &[ComplexMatrix],
) -> Result<Vec<ComplexMatrix>> {
    let d = decomp.dim();
    let mut ops = Vec::new();
    for a in ea {
        for b in eb {
            ops.push(decomp.embed_ab(&tensor(a, b)?));
        }
    }
    for k in ek {
        if k.rows() != decomp.d_k {
            return Err(Error::Dimension("K-block Kraus operator has wrong size".into()));
        }
        let mut m = ComplexMatrix::zeros(d, d);
        m.set_block(decomp.d_ab(), decomp.d_ab(), k);
        ops.push(m);
    }
    let dev = completeness_deviation(&ops);
    if dev > TOL_BLOCK {
        return Err(Error::InvalidInput(format!("local channel not trace preserving (deviation {dev:.3e})")));
    }
    Ok(ops)
}
