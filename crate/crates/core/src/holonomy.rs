//! Adiabatic simulation of holonomic gates driven by `Ĥ(t) = −H(t) ⊗ G̃`.
//!
//! `H(t)` acts on the driven qubits and interpolates segment by segment as
//! `f(s)·H_start + g(s)·H_end`; `G̃` is a traceless Hermitian involution on the
//! spectator factor, so each eigenspace of `Ĥ` splits into `G̃ = ±1` sectors.
//! Basis order is driven ⊗ spectator.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};
use std::sync::OnceLock;

use num_complex::Complex64 as C64;

use crate::qcore::{
    c, eigh, inv_sqrtm_psd, partial_trace_mat, pauli_x, pauli_y, pauli_z, tensor, ComplexMatrix, I, ONE,
    TOL_HERM, ZERO,
};
use crate::{Error, Result};

/// Duration of the optimal dynamical X gate (`−X` for `π/2`) at unit strength.
pub const T_D: f64 = FRAC_PI_2;
/// Gap collapse threshold, relative to the spectral radius of `Ĥ`.
pub const GAP_FLOOR: f64 = 1e-6;
/// Quadrature intervals for the smooth-bump reparameterization.
pub const BUMP_NODES: usize = 10_000;

const CLUSTER_TOL: f64 = 1e-9;
const MATCH_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// `f = 1 − s`, `g = s`.
    Linear,
    /// `f = cos(πs/2)`, `g = sin(πs/2)`: constant-speed rotation.
    Trig,
    /// Trig weights composed with the bump progress `y(s)`; every derivative
    /// of `f` and `g` vanishes at both ends.
    SmoothBump,
}

impl Schedule {
    /// Fraction of the path covered at dimensionless time `s`.
    pub fn progress(self, s: f64) -> f64 {
        match self {
            Schedule::Linear | Schedule::Trig => s,
            Schedule::SmoothBump => smooth_bump(s),
        }
    }

    pub fn weights(self, s: f64) -> (f64, f64) {
        match self {
            Schedule::Linear => (1.0 - s, s),
            Schedule::Trig | Schedule::SmoothBump => {
                let a = FRAC_PI_2 * self.progress(s);
                (a.cos(), a.sin())
            }
        }
    }
}

fn bump(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    (-1.0 / (PI * s).sin()).exp()
}

fn bump_table() -> &'static (Vec<f64>, f64) {
    static TABLE: OnceLock<(Vec<f64>, f64)> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 1.0 / BUMP_NODES as f64;
        let mut cum = Vec::with_capacity(BUMP_NODES + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for k in 0..BUMP_NODES {
            let x = k as f64 * h;
            acc += h / 6.0 * (bump(x) + 4.0 * bump(x + 0.5 * h) + bump(x + h));
            cum.push(acc);
        }
        let a = acc;
        (cum, a)
    })
}

/// `y(s) = ∫₀ˢ e^{−1/sin(πu)} du / a`, normalized so `y(1) = 1`.
///
/// Tabulated by Simpson's rule and interpolated with cubic Hermite pieces
/// using the exact derivative, so `y` stays monotone and C¹.
pub fn smooth_bump(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let (cum, a) = bump_table();
    let h = 1.0 / BUMP_NODES as f64;
    let k = ((s / h) as usize).min(BUMP_NODES - 1);
    let x0 = k as f64 * h;
    let u = (s - x0) / h;
    let (y0, y1) = (cum[k], cum[k + 1]);
    let (d0, d1) = (bump(x0) * h, bump(x0 + h) * h);
    let u2 = u * u;
    let u3 = u2 * u;
    let v = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
        + (u3 - 2.0 * u2 + u) * d0
        + (-2.0 * u3 + 3.0 * u2) * y1
        + (u3 - u2) * d1;
    v / a
}

fn spectral_radius(m: &ComplexMatrix) -> Result<f64> {
    let (vals, _) = eigh(m)?;
    Ok(vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())))
}

#[derive(Clone, Debug)]
pub struct PathSegment {
    pub h_start: ComplexMatrix,
    pub h_end: ComplexMatrix,
    pub schedule: Schedule,
    pub duration: f64,
}

impl PathSegment {
    pub fn new(h_start: ComplexMatrix, h_end: ComplexMatrix, schedule: Schedule, duration: f64) -> Result<Self> {
        if !h_start.is_square() || h_start.rows() != h_end.rows() || h_start.cols() != h_end.cols() {
            return Err(Error::Dimension("segment endpoints must be square and of equal size".into()));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::InvalidInput(format!("segment duration {duration} must be positive")));
        }
        for m in [&h_start, &h_end] {
            let dev = m.hermitian_deviation();
            if dev > TOL_HERM {
                return Err(Error::NotHermitian(dev));
            }
            if m.trace().norm() > 1e-10 * m.rows() as f64 {
                return Err(Error::InvalidInput("segment endpoints must be traceless".into()));
            }
        }
        let (ra, rb) = (spectral_radius(&h_start)?, spectral_radius(&h_end)?);
        if ra <= 0.0 || (ra - rb).abs() > 1e-9 * ra.max(rb) {
            return Err(Error::InvalidInput(format!(
                "segment endpoints need equal nonzero spectral radius (got {ra} and {rb})"
            )));
        }
        Ok(PathSegment { h_start, h_end, schedule, duration })
    }

    pub fn hamiltonian(&self, s: f64) -> ComplexMatrix {
        let (f, g) = self.schedule.weights(s);
        &self.h_start.scale_re(f) + &self.h_end.scale_re(g)
    }

    pub fn reversed(&self) -> Self {
        PathSegment {
            h_start: self.h_end.clone(),
            h_end: self.h_start.clone(),
            schedule: self.schedule,
            duration: self.duration,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HolonomyPath {
    pub segments: Vec<PathSegment>,
    pub gauge: ComplexMatrix,
}

impl HolonomyPath {
    pub fn new(segments: Vec<PathSegment>, gauge: ComplexMatrix) -> Result<Self> {
        let first = segments.first().ok_or_else(|| Error::InvalidInput("path has no segments".into()))?;
        let d = first.h_start.rows();
        for (k, seg) in segments.iter().enumerate() {
            if seg.h_start.rows() != d {
                return Err(Error::Dimension(format!("segment {k} acts on dimension {}", seg.h_start.rows())));
            }
            if k > 0 && (&segments[k - 1].h_end - &seg.h_start).max_abs() > MATCH_TOL {
                return Err(Error::InvalidInput(format!("segment {k} does not start where segment {} ends", k - 1)));
            }
        }
        let ds = gauge.rows();
        if !gauge.is_square() || ds % 2 != 0 {
            return Err(Error::Dimension("gauge factor must be square with even dimension".into()));
        }
        let dev = gauge.hermitian_deviation();
        if dev > TOL_HERM {
            return Err(Error::NotHermitian(dev));
        }
        if (&(&gauge * &gauge) - &ComplexMatrix::identity(ds)).max_abs() > 1e-10 || gauge.trace().norm() > 1e-10 {
            return Err(Error::InvalidInput("gauge factor must be a traceless involution".into()));
        }
        Ok(HolonomyPath { segments, gauge })
    }

    /// Chain `points[0] → points[1] → …` with one schedule and per-segment duration.
    pub fn through(points: &[ComplexMatrix], schedule: Schedule, duration: f64, gauge: ComplexMatrix) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput("a path needs at least two points".into()));
        }
        let segs = points
            .windows(2)
            .map(|w| PathSegment::new(w[0].clone(), w[1].clone(), schedule, duration))
            .collect::<Result<Vec<_>>>()?;
        HolonomyPath::new(segs, gauge)
    }

    pub fn driven_dim(&self) -> usize {
        self.segments[0].h_start.rows()
    }

    pub fn spectator_dim(&self) -> usize {
        self.gauge.rows()
    }

    pub fn dim(&self) -> usize {
        self.driven_dim() * self.spectator_dim()
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// `H → cH`, `T → T/c`: the same curve traversed at a rescaled rate.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidInput(format!("scale factor {factor} must be positive")));
        }
        let segs = self
            .segments
            .iter()
            .map(|s| PathSegment {
                h_start: s.h_start.scale_re(factor),
                h_end: s.h_end.scale_re(factor),
                schedule: s.schedule,
                duration: s.duration / factor,
            })
            .collect();
        Ok(HolonomyPath { segments: segs, gauge: self.gauge.clone() })
    }

    pub fn reversed(&self) -> Self {
        HolonomyPath {
            segments: self.segments.iter().rev().map(PathSegment::reversed).collect(),
            gauge: self.gauge.clone(),
        }
    }

    /// Full `Ĥ(t)`.
    pub fn hamiltonian_at(&self, t: f64) -> Result<ComplexMatrix> {
        let mut left = t.clamp(0.0, self.total_duration());
        for seg in &self.segments {
            if left <= seg.duration {
                return lift(&seg.hamiltonian(left / seg.duration), &self.gauge);
            }
            left -= seg.duration;
        }
        let last = self.segments.last().expect("non-empty");
        lift(&last.hamiltonian(1.0), &self.gauge)
    }
}

fn lift(h: &ComplexMatrix, gauge: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(-&tensor(h, gauge)?)
}

/// Per-segment data for `Ĥ(s) = f Â + g B̂`.
struct SegPrep {
    a: ComplexMatrix,
    b: ComplexMatrix,
    schedule: Schedule,
    duration: f64,
    /// `Some(r)` when `Â² = B̂² = r²I` and `{Â, B̂} = 0`, so `Ĥ² = r²(f²+g²)I`.
    involutive: Option<f64>,
}

impl SegPrep {
    fn new(seg: &PathSegment, gauge: &ComplexMatrix) -> Result<Self> {
        let a = lift(&seg.h_start, gauge)?;
        let b = lift(&seg.h_end, gauge)?;
        let d = a.rows();
        let aa = &a * &a;
        let r2 = aa[(0, 0)].re;
        let id = ComplexMatrix::identity(d);
        let involutive = r2 > 0.0
            && (&aa - &id.scale_re(r2)).max_abs() <= 1e-12 * r2
            && (&(&b * &b) - &id.scale_re(r2)).max_abs() <= 1e-12 * r2
            && (&(&a * &b) + &(&b * &a)).max_abs() <= 1e-12 * r2;
        Ok(SegPrep {
            a,
            b,
            schedule: seg.schedule,
            duration: seg.duration,
            involutive: involutive.then(|| r2.sqrt()),
        })
    }

    fn at(&self, s: f64) -> (ComplexMatrix, f64, f64) {
        let (f, g) = self.schedule.weights(s);
        (&self.a.scale_re(f) + &self.b.scale_re(g), f, g)
    }
}

/// Eigenlevels of `Ĥ` grouped by the multiplicities fixed at `t = 0`.
struct Levels {
    energies: Vec<f64>,
    projectors: Vec<ComplexMatrix>,
    /// Eigenvectors, present only on the generic path.
    eig: Option<(Vec<f64>, ComplexMatrix)>,
    gap: f64,
}

fn levels(prep: &SegPrep, s: f64, sizes: &[usize]) -> Result<(ComplexMatrix, Levels)> {
    let (h, f, g) = prep.at(s);
    let d = h.rows();
    if let Some(r) = prep.involutive {
        let e = r * f.hypot(g);
        let id = ComplexMatrix::identity(d);
        let hn = h.scale_re(0.5 / e);
        let half = id.scale_re(0.5);
        let lv = Levels {
            energies: vec![-e, e],
            projectors: vec![&half - &hn, &half + &hn],
            eig: None,
            gap: 2.0 * e,
        };
        return Ok((h, lv));
    }
    let (vals, vecs) = eigh(&h)?;
    let mut energies = Vec::with_capacity(sizes.len());
    let mut projectors = Vec::with_capacity(sizes.len());
    let mut gap = f64::INFINITY;
    let mut start = 0;
    for (k, &m) in sizes.iter().enumerate() {
        let idx = start..start + m;
        energies.push(vals[idx.clone()].iter().sum::<f64>() / m as f64);
        projectors.push(ComplexMatrix::from_fn(d, d, |r, q| {
            idx.clone().map(|j| vecs[(r, j)] * vecs[(q, j)].conj()).sum()
        }));
        if k > 0 {
            gap = gap.min(vals[start] - vals[start - 1]);
        }
        start += m;
    }
    Ok((h, Levels { energies, projectors, eig: Some((vals, vecs)), gap }))
}

fn step_exp(h: &ComplexMatrix, lv: &Levels, dt: f64) -> ComplexMatrix {
    match &lv.eig {
        None => {
            let e = lv.energies[1];
            let d = h.rows();
            let mut u = h.scale(c(0.0, -(e * dt).sin() / e));
            let cs = (e * dt).cos();
            for k in 0..d {
                u[(k, k)] += cs;
            }
            u
        }
        Some((vals, v)) => {
            let n = vals.len();
            let ph: Vec<C64> = vals.iter().map(|&x| C64::from_polar(1.0, -x * dt)).collect();
            ComplexMatrix::from_fn(n, n, |r, q| (0..n).map(|j| v[(r, j)] * ph[j] * v[(q, j)].conj()).sum())
        }
    }
}

fn multiplicities(h: &ComplexMatrix) -> Result<(Vec<usize>, f64)> {
    let (vals, _) = eigh(h)?;
    let scale = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let mut sizes = vec![1usize];
    for w in vals.windows(2) {
        if w[1] - w[0] <= CLUSTER_TOL * scale {
            *sizes.last_mut().expect("non-empty") += 1;
        } else {
            sizes.push(1);
        }
    }
    Ok((sizes, scale))
}

/// Orthonormal basis of `range(p)` in the single-valued convention: sectors of
/// `I ⊗ G̃` in the order `+1, −1`; within a sector Gram-Schmidt over projected
/// standard basis vectors; each vector's first largest entry real positive.
/// Depends only on `p`, so closed loops return to the same basis.
pub fn canonical_basis(p: &ComplexMatrix, gauge: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = p.rows();
    let ds = gauge.rows();
    let dl = d / ds;
    let idl = ComplexMatrix::identity(dl);
    let ids = ComplexMatrix::identity(ds);
    let mut cols: Vec<Vec<C64>> = Vec::new();
    for sign in [1.0, -1.0] {
        let sector = tensor(&idl, &(&ids + &gauge.scale_re(sign)).scale_re(0.5))?;
        let ps = p * &sector;
        for m in 0..d {
            let mut v = ps.column(m);
            for u in &cols {
                let ov: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= ov * y;
                }
            }
            let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            if n < 1e-6 {
                continue;
            }
            let peak = v.iter().fold(0.0_f64, |a, x| a.max(x.norm()));
            let lead = v.iter().find(|x| x.norm() >= peak * (1.0 - 1e-9)).copied().expect("non-empty");
            let phase = lead.conj() / lead.norm();
            cols.push(v.iter().map(|x| x * phase / n).collect());
        }
    }
    let r = cols.len();
    Ok(ComplexMatrix::from_fn(d, r, |i, k| cols[k][i]))
}

/// `M (M†M)^{-1/2}`: the closest isometry, which transports a basis without
/// rotating it inside the subspace.
fn polar_isometry(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let g = (&m.adjoint() * m).hermitian_part();
    Ok(m * &inv_sqrtm_psd(&g, 1e-12)?)
}

struct Piece {
    u: ComplexMatrix,
    phases: Vec<f64>,
    p_start: Vec<ComplexMatrix>,
    p_end: Vec<ComplexMatrix>,
    transported: Vec<ComplexMatrix>,
    starts: Vec<ComplexMatrix>,
    min_gap: f64,
}

fn node(preps: &[SegPrep], steps: usize, g: usize) -> (usize, f64) {
    let k = (g / steps).min(preps.len() - 1);
    let j = g - k * steps;
    (k, j as f64 / steps as f64)
}

fn propagate(path: &HolonomyPath, steps: usize, from: usize, to: usize, transport: bool) -> Result<Piece> {
    let preps = path
        .segments
        .iter()
        .map(|s| SegPrep::new(s, &path.gauge))
        .collect::<Result<Vec<_>>>()?;
    let (h0, _, _) = preps[0].at(0.0);
    let (sizes, scale) = multiplicities(&h0)?;
    if sizes.len() < 2 {
        return Err(Error::InvalidInput("Ĥ has a single eigenvalue; nothing to separate".into()));
    }
    let fast = preps.iter().all(|p| p.involutive.is_some());
    if fast && sizes.len() != 2 {
        return Err(Error::InvalidInput("involutive segments must have two levels".into()));
    }
    let check = |lv: &Levels, t: f64| -> Result<()> {
        if lv.gap < GAP_FLOOR * scale {
            return Err(Error::DegeneratePath { gap: lv.gap, t });
        }
        Ok(())
    };
    let offsets: Vec<f64> = preps
        .iter()
        .scan(0.0, |acc, p| {
            let o = *acc;
            *acc += p.duration;
            Some(o)
        })
        .collect();

    let (k0, s0) = node(&preps, steps, from);
    let (_, lv0) = levels(&preps[k0], s0, &sizes)?;
    check(&lv0, offsets[k0] + s0 * preps[k0].duration)?;
    let starts = if transport {
        lv0.projectors.iter().map(|p| canonical_basis(p, &path.gauge)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let mut transported = starts.clone();
    let d = path.dim();
    let mut u = ComplexMatrix::identity(d);
    let mut phases = vec![0.0; sizes.len()];
    let mut min_gap = lv0.gap;
    let mut min_gap_t = offsets[k0] + s0 * preps[k0].duration;

    for gstep in from..to {
        let (k, j) = (gstep / steps, gstep % steps);
        let prep = &preps[k];
        let dt = prep.duration / steps as f64;
        let s = (j as f64 + 0.5) / steps as f64;
        let (h, lv) = levels(prep, s, &sizes)?;
        let t = offsets[k] + s * prep.duration;
        if lv.gap < min_gap {
            min_gap = lv.gap;
            min_gap_t = t;
        }
        check(&lv, t)?;
        u = &step_exp(&h, &lv, dt) * &u;
        for (ph, e) in phases.iter_mut().zip(&lv.energies) {
            *ph += e * dt;
        }
        if transport {
            for (b, p) in transported.iter_mut().zip(&lv.projectors) {
                *b = polar_isometry(&(p * &*b))?;
            }
        }
    }
    if !fast {
        refine_gap(&preps, &sizes, scale, &offsets, &mut min_gap, &mut min_gap_t)?;
    }

    let (k1, s1) = node(&preps, steps, to);
    let s1 = if to == preps.len() * steps { 1.0 } else { s1 };
    let (_, lv1) = levels(&preps[k1], s1, &sizes)?;
    check(&lv1, offsets[k1] + s1 * preps[k1].duration)?;
    if transport {
        for (b, p) in transported.iter_mut().zip(&lv1.projectors) {
            *b = polar_isometry(&(p * &*b))?;
        }
    }
    Ok(Piece {
        u,
        phases,
        p_start: lv0.projectors,
        p_end: lv1.projectors,
        transported,
        starts,
        min_gap,
    })
}

/// The midpoint grid can step over a gap closing between samples; scan each
/// segment finely and polish the smallest gap by golden-section search.
fn refine_gap(
    preps: &[SegPrep],
    sizes: &[usize],
    scale: f64,
    offsets: &[f64],
    min_gap: &mut f64,
    min_gap_t: &mut f64,
) -> Result<()> {
    const SCAN: usize = 256;
    for (k, prep) in preps.iter().enumerate() {
        let gap_at = |s: f64| -> Result<f64> { Ok(levels(prep, s, sizes)?.1.gap) };
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..=SCAN {
            let gp = gap_at(i as f64 / SCAN as f64)?;
            if gp < best.0 {
                best = (gp, i);
            }
        }
        let (mut lo, mut hi) = (
            (best.1.saturating_sub(1)) as f64 / SCAN as f64,
            ((best.1 + 1).min(SCAN)) as f64 / SCAN as f64,
        );
        let r = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let (a, b) = (hi - r * (hi - lo), lo + r * (hi - lo));
            if gap_at(a)? < gap_at(b)? {
                hi = b;
            } else {
                lo = a;
            }
        }
        let s = 0.5 * (lo + hi);
        let gp = gap_at(s)?.min(best.0);
        if gp < *min_gap {
            *min_gap = gp;
            *min_gap_t = offsets[k] + s * prep.duration;
        }
    }
    if *min_gap < GAP_FLOOR * scale {
        return Err(Error::DegeneratePath { gap: *min_gap, t: *min_gap_t });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct AdiabaticResult {
    pub propagator: ComplexMatrix,
    /// Mean ground-space survival `Tr(P_g(T) U P_g(0) U†)/rank`.
    pub ground_fidelity: f64,
    /// `B_T† e^{i∫E_g} P_g(T) U P_g(0) B_0` in the single-valued ground bases.
    pub geometric_gate: ComplexMatrix,
    /// The same block for the highest level.
    pub excited_gate: ComplexMatrix,
    /// Adiabatic-limit holonomy `B_T† W(T)` from parallel transport of `B_0`.
    pub transported_gate: ComplexMatrix,
    /// Driven-factor operator implied by the ground space: `Tr_s(Γ_g)·d_L/rank`,
    /// which is `U` whenever `Γ_g = (U ⊗ I)P_g(0)`.
    pub logical_ground: ComplexMatrix,
    pub logical_excited: ComplexMatrix,
    /// Driven-factor operator from all eigenspaces: `Tr_s(Σ_ℓ Γ_ℓ)/d_s`.
    pub logical: ComplexMatrix,
    /// `∫E_ℓ dt` per level, ascending.
    pub dynamical_phases: Vec<f64>,
    pub min_gap: f64,
}

impl AdiabaticResult {
    pub fn leakage(&self) -> f64 {
        1.0 - self.ground_fidelity
    }

    /// Arguments of the ground-gate diagonal in `[0, 2π)`.
    pub fn phases(&self) -> Vec<f64> {
        (0..self.geometric_gate.rows()).map(|k| wrap_phase(self.geometric_gate[(k, k)].arg())).collect()
    }

    pub fn unitarity_deviation(&self) -> f64 {
        let d = self.propagator.rows();
        (&(&self.propagator.adjoint() * &self.propagator) - &ComplexMatrix::identity(d)).max_abs()
    }
}

pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

fn geometric_part(piece: &Piece, level: usize) -> ComplexMatrix {
    let g = &(&piece.p_end[level] * &piece.u) * &piece.p_start[level];
    g.scale(C64::from_polar(1.0, piece.phases[level]))
}

fn spectator_trace(m: &ComplexMatrix, dl: usize, ds: usize) -> Result<ComplexMatrix> {
    partial_trace_mat(m, &[dl, ds], &[0])
}

/// Time-ordered product of midpoint exponentials over the whole path.
pub fn evolve(path: &HolonomyPath, steps_per_segment: usize) -> Result<AdiabaticResult> {
    if steps_per_segment == 0 {
        return Err(Error::InvalidInput("steps_per_segment must be positive".into()));
    }
    let total = path.segments.len() * steps_per_segment;
    let piece = propagate(path, steps_per_segment, 0, total, true)?;
    let top = piece.p_start.len() - 1;
    let (dl, ds) = (path.driven_dim(), path.spectator_dim());
    let gam_g = geometric_part(&piece, 0);
    let gam_e = geometric_part(&piece, top);
    let mut gam_all = gam_g.clone();
    for l in 1..=top {
        gam_all = &gam_all + &geometric_part(&piece, l);
    }
    let b0 = &piece.starts;
    let bt = piece.p_end.iter().map(|p| canonical_basis(p, &path.gauge)).collect::<Result<Vec<_>>>()?;
    let block = |l: usize, m: &ComplexMatrix| -> ComplexMatrix { &(&bt[l].adjoint() * m) * &b0[l] };
    let rank_g = b0[0].cols();
    let pu = &(&piece.p_end[0] * &piece.u) * &piece.p_start[0];
    let ground_fidelity = (pu.frobenius().powi(2) / rank_g as f64).min(1.0);
    let driven = |l: usize, m: &ComplexMatrix| -> Result<ComplexMatrix> {
        Ok(spectator_trace(m, dl, ds)?.scale_re(dl as f64 / b0[l].cols() as f64))
    };
    Ok(AdiabaticResult {
        ground_fidelity,
        geometric_gate: block(0, &gam_g),
        excited_gate: block(top, &gam_e),
        transported_gate: &bt[0].adjoint() * &piece.transported[0],
        logical_ground: driven(0, &gam_g)?,
        logical_excited: driven(top, &gam_e)?,
        logical: spectator_trace(&gam_all, dl, ds)?.scale_re(1.0 / ds as f64),
        dynamical_phases: piece.phases,
        min_gap: piece.min_gap,
        propagator: piece.u,
    })
}

/// Doubles the step count until the propagator moves by less than `tol`.
pub fn evolve_converged(
    path: &HolonomyPath,
    start_steps: usize,
    tol: f64,
    max_steps: usize,
) -> Result<(AdiabaticResult, usize)> {
    let mut n = start_steps.max(1);
    let mut prev = evolve(path, n)?;
    while 2 * n <= max_steps {
        let next = evolve(path, 2 * n)?;
        let change = (&next.propagator - &prev.propagator).max_abs();
        n *= 2;
        prev = next;
        if change < tol {
            return Ok((prev, n));
        }
    }
    Err(Error::NoConvergence { what: "midpoint step halving", iters: n })
}

pub fn z_matrix() -> ComplexMatrix {
    pauli_z()
}

fn diag_xy() -> ComplexMatrix {
    (&pauli_x() + &pauli_y()).scale_re(FRAC_1_SQRT_2)
}

/// Spectator model: one qubit with `G̃ = Z`.
pub fn spectator_gauge() -> ComplexMatrix {
    pauli_z()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    Z,
    X,
    Hadamard,
    Phase,
    Cnot,
}

impl Gate {
    pub fn ideal(self) -> ComplexMatrix {
        match self {
            Gate::Z => pauli_z(),
            Gate::X => pauli_x(),
            Gate::Hadamard => crate::qcore::hadamard(),
            Gate::Phase => ComplexMatrix::diag(&[ONE, I]),
            Gate::Cnot => {
                let mut m = ComplexMatrix::zeros(4, 4);
                for (r, q) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
                    m[(r, q)] = ONE;
                }
                m
            }
        }
    }

    pub fn driven_dim(self) -> usize {
        if self == Gate::Cnot {
            4
        } else {
            2
        }
    }
}

/// Single-qubit waypoints of `H` (with `Ĥ = −H ⊗ G̃`).
fn waypoints(gate: Gate) -> Vec<ComplexMatrix> {
    let (x, y, z) = (pauli_x(), pauli_y(), pauli_z());
    let d = diag_xy();
    match gate {
        Gate::Z => vec![z.clone(), x, -&z, -&y, z],
        Gate::X => vec![z.clone(), y, -&z],
        Gate::Phase => vec![z.clone(), d, -&z, -&y, z],
        Gate::Hadamard => vec![z.clone(), x.clone(), -&z, -&y, z, x],
        Gate::Cnot => unreachable!("two-qubit recipe"),
    }
}

/// Adiabatic paths realizing `gate`, applied in order.
///
/// C-NOT: `S†` on the control (the phase loop reversed), `V_{π/2+}` on the
/// target (`Z → Y`), then the conditional interpolation `I⊗Y → Z⊗Z`.
pub fn gate_paths(gate: Gate, duration: f64, schedule: Schedule) -> Result<Vec<HolonomyPath>> {
    let gauge = spectator_gauge();
    if gate != Gate::Cnot {
        return Ok(vec![HolonomyPath::through(&waypoints(gate), schedule, duration, gauge)?]);
    }
    let id = ComplexMatrix::identity(2);
    let on_control = |m: &ComplexMatrix| tensor(m, &id);
    let on_target = |m: &ComplexMatrix| tensor(&id, m);
    let s_dag: Vec<ComplexMatrix> =
        waypoints(Gate::Phase).iter().rev().map(on_control).collect::<Result<_>>()?;
    let v: Vec<ComplexMatrix> = [pauli_z(), pauli_y()].iter().map(on_target).collect::<Result<_>>()?;
    let cond = vec![on_target(&pauli_y())?, tensor(&pauli_z(), &pauli_z())?];
    Ok(vec![
        HolonomyPath::through(&s_dag, schedule, duration, gauge.clone())?,
        HolonomyPath::through(&v, schedule, duration, gauge.clone())?,
        HolonomyPath::through(&cond, schedule, duration, gauge)?,
    ])
}

#[derive(Clone, Debug)]
pub struct GateRun {
    pub gate: Gate,
    /// Product of the per-path ground-space driven operators.
    pub logical: ComplexMatrix,
    /// Product of per-path ground fidelities.
    pub ground_fidelity: f64,
    /// `|Tr(W† L)|² / d²` against the ideal gate `W`; global phase drops out.
    pub gate_fidelity: f64,
    /// Phase of the dominant entry in columns 0 and 1 of `logical`, in `[0, 2π)`.
    pub phase0: f64,
    pub phase1: f64,
    pub paths: Vec<AdiabaticResult>,
}

impl GateRun {
    pub fn leakage(&self) -> f64 {
        1.0 - self.ground_fidelity
    }

    /// Phase of `Tr(W† L)`: the global phase by which `L` differs from `W`.
    pub fn global_phase(&self) -> C64 {
        let tr = self.gate.ideal().adjoint().trace_product(&self.logical);
        tr / tr.norm()
    }
}

fn dominant_phase(m: &ComplexMatrix, col: usize) -> f64 {
    let mut best = (0.0, ZERO);
    for r in 0..m.rows() {
        let v = m[(r, col)];
        if v.norm() > best.0 + 1e-9 {
            best = (v.norm(), v);
        }
    }
    wrap_phase(best.1.arg())
}

pub fn gate_fidelity(ideal: &ComplexMatrix, logical: &ComplexMatrix) -> f64 {
    let d = ideal.rows() as f64;
    (ideal.adjoint().trace_product(logical).norm() / d).powi(2)
}

/// Runs every path of a gate recipe; `duration` is per segment.
pub fn run_gate(gate: Gate, duration: f64, schedule: Schedule, steps_per_segment: usize) -> Result<GateRun> {
    let paths = gate_paths(gate, duration, schedule)?;
    let results = paths.iter().map(|p| evolve(p, steps_per_segment)).collect::<Result<Vec<_>>>()?;
    let dl = gate.driven_dim();
    let mut logical = ComplexMatrix::identity(dl);
    let mut ground_fidelity = 1.0;
    for r in &results {
        logical = &r.logical_ground * &logical;
        ground_fidelity *= r.ground_fidelity;
    }
    Ok(GateRun {
        gate,
        gate_fidelity: gate_fidelity(&gate.ideal(), &logical),
        phase0: dominant_phase(&logical, 0),
        phase1: dominant_phase(&logical, 1),
        logical,
        ground_fidelity,
        paths: results,
    })
}

/// Four-segment loop `Z → X → −Z → −Y → Z` of `H`.
pub fn z_gate_loop(duration: f64, schedule: Schedule, steps_per_segment: usize) -> Result<AdiabaticResult> {
    let path = HolonomyPath::through(&waypoints(Gate::Z), schedule, duration, spectator_gauge())?;
    evolve(&path, steps_per_segment)
}

/// `Z → Y → −Z` of `H`: `V_{π/2+}² = iX`.
pub fn x_gate_sequence(duration: f64, schedule: Schedule, steps_per_segment: usize) -> Result<AdiabaticResult> {
    let path = HolonomyPath::through(&waypoints(Gate::X), schedule, duration, spectator_gauge())?;
    evolve(&path, steps_per_segment)
}

pub fn cnot_construction(duration: f64, schedule: Schedule, steps_per_segment: usize) -> Result<GateRun> {
    run_gate(Gate::Cnot, duration, schedule, steps_per_segment)
}

/// Ground-state survival for `H(t) = V_X(τ) Z V_X†(τ)`, `V_X(τ) = exp(iτπX/(2T_h))`,
/// at constant speed `τ = t`: exact solution in the rotating frame `Z + εX`.
pub fn rotation_survival_closed_form(eps: f64) -> f64 {
    let q = 1.0 + eps * eps;
    let arg = PI / (2.0 * eps) * q.sqrt();
    1.0 / q + eps * eps / q * arg.cos().powi(2)
}

/// Leakage out of the instantaneous ground state for the X rotation above,
/// with `T_h = ratio · T_d` and `τ(t) = T_h · progress(t/T_h)`.
pub fn rotation_leakage(ratio: f64, schedule: Schedule, steps: usize) -> Result<f64> {
    if !(ratio.is_finite() && ratio > 0.0) || steps == 0 {
        return Err(Error::InvalidInput("ratio and steps must be positive".into()));
    }
    let th = ratio * T_D;
    let dt = th / steps as f64;
    let (x, z) = (pauli_x(), pauli_z());
    let vx = |theta: f64| -> ComplexMatrix {
        let mut m = x.scale(c(0.0, theta.sin()));
        m[(0, 0)] += theta.cos();
        m[(1, 1)] += theta.cos();
        m
    };
    let mut psi = [ONE, ZERO];
    for k in 0..steps {
        let s = (k as f64 + 0.5) / steps as f64;
        let v = vx(FRAC_PI_2 * schedule.progress(s));
        let h = &(&v * &z) * &v.adjoint();
        let (cs, sn) = (dt.cos(), dt.sin());
        let next = [
            psi[0] * cs - I * sn * (h[(0, 0)] * psi[0] + h[(0, 1)] * psi[1]),
            psi[1] * cs - I * sn * (h[(1, 0)] * psi[0] + h[(1, 1)] * psi[1]),
        ];
        psi = next;
    }
    let target = vx(FRAC_PI_2).column(0);
    let ov = target[0].conj() * psi[0] + target[1].conj() * psi[1];
    Ok(1.0 - ov.norm_sqr())
}

#[derive(Clone, Debug)]
pub struct ErrorAudit {
    /// Relative distance of the deviation from `I_q ⊗ (rest)`, per qubit.
    pub qubit_weights: Vec<f64>,
    pub support: Vec<usize>,
    pub injected: usize,
    /// `support ⊆ {injected} ∪ partner`.
    pub localized: bool,
}

/// Residual of `m` after removing qubit `q`: `‖m − I_q ⊗ Tr_q(m)/2‖_F / ‖m‖_F`.
fn qubit_weight(m: &ComplexMatrix, q: usize, n: usize) -> f64 {
    let d = m.rows();
    let bit = 1usize << (n - 1 - q);
    let mut resid = 0.0;
    for r in 0..d {
        for k in 0..d {
            let avg = if (r & bit) == (k & bit) {
                0.5 * (m[(r & !bit, k & !bit)] + m[(r | bit, k | bit)])
            } else {
                ZERO
            };
            resid += (m[(r, k)] - avg).norm_sqr();
        }
    }
    (resid.sqrt() / m.frobenius().max(f64::MIN_POSITIVE)).min(1.0)
}

/// Injects `pauli` on `qubit` after fraction `at` of the path and reports the
/// support of the deviation `Γ_after · E · Γ_after†`, where `Γ_after` is the
/// tail evolution with every eigenspace's dynamical phase removed (relative
/// ground/excited phases are a gauge freedom of the encoding).
pub fn error_propagation_audit(
    path: &HolonomyPath,
    steps_per_segment: usize,
    pauli: &ComplexMatrix,
    qubit: usize,
    at: f64,
    partner: Option<usize>,
    tol: f64,
) -> Result<ErrorAudit> {
    let d = path.dim();
    if !d.is_power_of_two() || pauli.rows() != 2 || !pauli.is_square() {
        return Err(Error::Dimension("audit needs a qubit model and a single-qubit error".into()));
    }
    let n = d.trailing_zeros() as usize;
    if qubit >= n || !(0.0..=1.0).contains(&at) {
        return Err(Error::InvalidInput(format!("qubit {qubit} or fraction {at} out of range")));
    }
    let total = path.segments.len() * steps_per_segment;
    let split = ((at * total as f64).round() as usize).min(total);
    let tail = propagate(path, steps_per_segment, split, total, false)?;
    let mut gam = geometric_part(&tail, 0);
    for l in 1..tail.p_start.len() {
        gam = &gam + &geometric_part(&tail, l);
    }
    let err = crate::qcore::on_qubit(pauli, qubit, n);
    let dev = &(&gam * &err) * &gam.adjoint();
    let qubit_weights: Vec<f64> = (0..n).map(|q| qubit_weight(&dev, q, n)).collect();
    let support: Vec<usize> = (0..n).filter(|&q| qubit_weights[q] > tol).collect();
    let localized = support.iter().all(|&q| q == qubit || Some(q) == partner);
    Ok(ErrorAudit { qubit_weights, support, injected: qubit, localized })
}
