//! A qubit coupled through `σ_z ⊗ B` to a bath of `N` non-interacting spins in
//! a Gibbs state, `B = Σ g_n σ_z^n − θ`. The exact reduced dynamics is a
//! decoherence factor `f(t)` acting on the coherence `ρ01`; every approximate
//! master equation here is a different guess at `f`.
//!
//! All time arguments are physical `t`; only the product `αt` enters, so the
//! convention `alpha = 1` makes `t` the dimensionless time.

use num_complex::Complex64 as C64;
use rand::Rng;

use crate::{Error, Result};

/// Above this many spins the correlators come from per-spin cumulants.
pub const ENUMERATION_MAX_SPINS: usize = 20;
const NZ_TOL: f64 = 1e-6;
const NZ_MAX_HALVINGS: usize = 14;

#[derive(Clone, Debug, PartialEq)]
pub struct BathSpec {
    pub n: usize,
    pub g: Vec<f64>,
    pub omega: Vec<f64>,
    pub inv_temp: f64,
    pub alpha: f64,
}

impl BathSpec {
    pub fn new(g: Vec<f64>, omega: Vec<f64>, inv_temp: f64, alpha: f64) -> Result<Self> {
        if g.len() != omega.len() {
            return Err(Error::Dimension(format!("{} couplings but {} frequencies", g.len(), omega.len())));
        }
        if g.iter().chain(&omega).any(|v| !v.is_finite() || v.abs() > 1.0) {
            return Err(Error::InvalidInput("couplings and frequencies must lie in [-1, 1]".into()));
        }
        if !inv_temp.is_finite() || inv_temp < 0.0 {
            return Err(Error::InvalidInput(format!("inverse temperature {inv_temp} must be finite and >= 0")));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidInput(format!("coupling strength {alpha} must be positive")));
        }
        Ok(BathSpec { n: g.len(), g, omega, inv_temp, alpha })
    }

    /// `g_n = Ω_n = 1` for every spin.
    pub fn uniform(n: usize, inv_temp: f64, alpha: f64) -> Result<Self> {
        Self::new(vec![1.0; n], vec![1.0; n], inv_temp, alpha)
    }

    /// Couplings and frequencies drawn independently from uniform[−1, 1].
    pub fn random<R: Rng + ?Sized>(n: usize, inv_temp: f64, alpha: f64, rng: &mut R) -> Result<Self> {
        let g = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let omega = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Self::new(g, omega, inv_temp, alpha)
    }

    /// Mirror-symmetric bath: every spin `(g, Ω)` gets a partner `(−g, Ω)`.
    pub fn alternating(g: &[f64], omega: &[f64], inv_temp: f64, alpha: f64) -> Result<Self> {
        let gs = g.iter().flat_map(|&x| [x, -x]).collect();
        let ws = omega.iter().flat_map(|&w| [w, w]).collect();
        Self::new(gs, ws, inv_temp, alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochXY {
    pub vx: f64,
    pub vy: f64,
}

impl BlochXY {
    pub fn new(vx: f64, vy: f64) -> Self {
        BlochXY { vx, vy }
    }

    /// `(1/√2, 1/√2)`, the initial condition used for every comparison plot.
    pub fn diagonal() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        BlochXY { vx: h, vy: h }
    }

    pub fn norm(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn in_ball(&self) -> bool {
        self.vx * self.vx + self.vy * self.vy <= 1.0 + 1e-9
    }

    /// `ρ01 = (vx − i vy)/2`.
    pub fn coherence(&self) -> C64 {
        C64::new(self.vx, -self.vy) * 0.5
    }

    pub fn from_coherence(r01: C64) -> Self {
        BlochXY { vx: 2.0 * r01.re, vy: -2.0 * r01.im }
    }

    /// Applies the decoherence factor: `ρ01 → ρ01·f`.
    pub fn evolve(&self, f: C64) -> Self {
        BlochXY { vx: self.vx * f.re + self.vy * f.im, vy: self.vy * f.re - self.vx * f.im }
    }

    /// Trace distance between qubit states sharing `v_z`.
    pub fn trace_distance(&self, other: &BlochXY) -> f64 {
        0.5 * (self.vx - other.vx).hypot(self.vy - other.vy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelatorSet {
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

pub fn beta_n(spec: &BathSpec) -> Vec<f64> {
    spec.omega.iter().map(|w| (-w * spec.inv_temp / 2.0).tanh()).collect()
}

pub fn theta(spec: &BathSpec) -> f64 {
    spec.g.iter().zip(beta_n(spec)).map(|(g, b)| g * b).sum()
}

/// `f(t) = e^{2iαθt} Π_n [cos(2αg_n t) − iβ_n sin(2αg_n t)]`; `|f| ≤ 1`.
pub fn exact_f(spec: &BathSpec, t: f64) -> C64 {
    let a = spec.alpha;
    let mut f = C64::from_polar(1.0, 2.0 * a * theta(spec) * t);
    for (g, b) in spec.g.iter().zip(beta_n(spec)) {
        let x = 2.0 * a * g * t;
        f *= C64::new(x.cos(), -b * x.sin());
    }
    f
}

pub fn exact_bloch(spec: &BathSpec, v0: BlochXY, t: f64) -> BlochXY {
    v0.evolve(exact_f(spec, t))
}

/// Central moments `Q_k = Tr(B^k ρ_B)`.
pub fn correlators(spec: &BathSpec) -> CorrelatorSet {
    if spec.n <= ENUMERATION_MAX_SPINS {
        correlators_enumerated(spec)
    } else {
        correlators_from_cumulants(spec)
    }
}

/// Sum over all `2^n` bath configurations weighted by `e^{−βE_l}`.
pub fn correlators_enumerated(spec: &BathSpec) -> CorrelatorSet {
    assert!(spec.n <= 30, "enumeration over 2^{} configurations", spec.n);
    let th = theta(spec);
    let b = spec.inv_temp;
    // Shift energies by the ground-state value so the largest weight is 1.
    let e_min: f64 = spec.omega.iter().map(|w| -0.5 * w.abs()).sum();
    let (mut z, mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0, 0.0);
    for l in 0u64..(1u64 << spec.n) {
        let (mut e, mut et) = (0.0, -th);
        for k in 0..spec.n {
            let s = if (l >> k) & 1 == 0 { 1.0 } else { -1.0 };
            e += 0.5 * spec.omega[k] * s;
            et += spec.g[k] * s;
        }
        let w = (-b * (e - e_min)).exp();
        let e2 = et * et;
        z += w;
        m2 += w * e2;
        m3 += w * e2 * et;
        m4 += w * e2 * e2;
    }
    CorrelatorSet { q2: m2 / z, q3: m3 / z, q4: m4 / z }
}

/// Independent spins: cumulants add. For one spin with mean `β`,
/// `κ2 = g²(1−β²)`, `κ3 = −2βg³(1−β²)`, `κ4 = g⁴(1−β²)(6β²−2)`.
pub fn correlators_from_cumulants(spec: &BathSpec) -> CorrelatorSet {
    let (mut k2, mut k3, mut k4) = (0.0, 0.0, 0.0);
    for (g, b) in spec.g.iter().zip(beta_n(spec)) {
        let v = 1.0 - b * b;
        let g2 = g * g;
        k2 += g2 * v;
        k3 += -2.0 * b * g2 * g * v;
        k4 += g2 * g2 * v * (6.0 * b * b - 2.0);
    }
    CorrelatorSet { q2: k2, q3: k3, q4: k4 + 3.0 * k2 * k2 }
}

/// Born approximation, identical to second-order Nakajima–Zwanzig.
pub fn born_nz2(spec: &BathSpec, v0: BlochXY, t: f64) -> BlochXY {
    let q = correlators(spec);
    let c = (2.0 * spec.alpha * q.q2.sqrt() * t).cos();
    BlochXY { vx: v0.vx * c, vy: v0.vy * c }
}

/// Time-convolutionless solution of order 2, 3 or 4.
pub fn tcl_solution(spec: &BathSpec, order: u8, v0: BlochXY, t: f64) -> Result<BlochXY> {
    tcl_with(&correlators(spec), spec.alpha, order, v0, t)
}

fn tcl_with(q: &CorrelatorSet, alpha: f64, order: u8, v0: BlochXY, t: f64) -> Result<BlochXY> {
    let at = alpha * t;
    let a2 = at * at;
    let gauss = -2.0 * q.q2 * a2;
    let (amp, g) = match order {
        2 => (gauss.exp(), 0.0),
        3 => (gauss.exp(), 4.0 * q.q3 * a2 * at / 3.0),
        4 => ((gauss + (2.0 * q.q4 - 6.0 * q.q2 * q.q2) * a2 * a2 / 3.0).exp(), 4.0 * q.q3 * a2 * at / 3.0),
        _ => return Err(Error::Unsupported(format!("TCL order {order}"))),
    };
    Ok(v0.evolve(C64::from_polar(amp, g)))
}

/// Nakajima–Zwanzig solution of order 2, 3 or 4 on a uniform grid starting at 0.
///
/// For the coherence `y = ρ01` the memory terms reduce to nested integrals:
/// `y' = −4α²Q2·J1 + 8iα³Q3·J2 + 16α⁴(Q4−Q2²)·J3` with `J1' = y`, `J2' = J1`,
/// `J3' = J2`. The augmented system is linear with constant coefficients and is
/// integrated by RK4, halving the step until the sup-norm change, relative to
/// the trajectory scale, drops below 1e-6.
pub fn nz_solution(spec: &BathSpec, order: u8, v0: BlochXY, t_grid: &[f64]) -> Result<Vec<BlochXY>> {
    nz_with(&correlators(spec), spec.alpha, order, v0, t_grid)
}

fn nz_with(q: &CorrelatorSet, alpha: f64, order: u8, v0: BlochXY, t_grid: &[f64]) -> Result<Vec<BlochXY>> {
    if !(2..=4).contains(&order) {
        return Err(Error::Unsupported(format!("NZ order {order}")));
    }
    let dt = check_grid(t_grid)?;
    let a = alpha;
    let c1 = C64::new(-4.0 * a * a * q.q2, 0.0);
    let c2 = if order >= 3 { C64::new(0.0, 8.0 * a.powi(3) * q.q3) } else { C64::new(0.0, 0.0) };
    let c3 = if order == 4 { C64::new(16.0 * a.powi(4) * (q.q4 - q.q2 * q.q2), 0.0) } else { C64::new(0.0, 0.0) };
    let y0 = v0.coherence();
    if t_grid.len() == 1 {
        return Ok(vec![v0]);
    }
    // Fujiwara bound on the characteristic roots of λ⁴ = c1λ² + c2λ + c3.
    let rate = 2.0 * c1.norm().sqrt().max(c2.norm().cbrt()).max(c3.norm().sqrt().sqrt());
    let mut sub = ((dt * rate / 0.05).ceil() as usize).max(1);
    let mut prev = nz_rk4(c1, c2, c3, y0, t_grid.len(), dt, sub);
    for _ in 0..NZ_MAX_HALVINGS {
        sub *= 2;
        let next = nz_rk4(c1, c2, c3, y0, t_grid.len(), dt, sub);
        let scale = next.iter().map(|y| y.norm()).fold(1.0, f64::max);
        let change = prev.iter().zip(&next).map(|(p, n)| (p - n).norm()).fold(0.0, f64::max);
        if change.is_finite() && change < NZ_TOL * scale {
            return Ok(next.into_iter().map(BlochXY::from_coherence).collect());
        }
        prev = next;
    }
    Err(Error::NoConvergence { what: "NZ step refinement", iters: NZ_MAX_HALVINGS })
}

fn nz_rk4(c1: C64, c2: C64, c3: C64, y0: C64, points: usize, dt: f64, sub: usize) -> Vec<C64> {
    let deriv = |s: [C64; 4]| [c1 * s[1] + c2 * s[2] + c3 * s[3], s[0], s[1], s[2]];
    let axpy = |s: [C64; 4], k: [C64; 4], h: f64| [s[0] + k[0] * h, s[1] + k[1] * h, s[2] + k[2] * h, s[3] + k[3] * h];
    let h = dt / sub as f64;
    let mut s = [y0, C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
    let mut out = Vec::with_capacity(points);
    out.push(y0);
    for _ in 1..points {
        for _ in 0..sub {
            let k1 = deriv(s);
            let k2 = deriv(axpy(s, k1, h / 2.0));
            let k3 = deriv(axpy(s, k2, h / 2.0));
            let k4 = deriv(axpy(s, k3, h));
            for i in 0..4 {
                s[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        out.push(s[0]);
    }
    out
}

fn check_grid(t: &[f64]) -> Result<f64> {
    match t {
        [] => Err(Error::InvalidInput("empty time grid".into())),
        [t0] if *t0 == 0.0 => Ok(0.0),
        [t0, t1, ..] if *t0 == 0.0 && t1 > t0 => {
            let dt = t1 - t0;
            for (k, &tk) in t.iter().enumerate() {
                if (tk - k as f64 * dt).abs() > 1e-9 * dt.max(tk.abs()) {
                    return Err(Error::InvalidInput(format!("time grid not uniform at index {k}")));
                }
            }
            Ok(dt)
        }
        _ => Err(Error::InvalidInput("time grid must start at 0 and increase".into())),
    }
}

/// `t_k = k·t_max/steps` for `k = 0..=steps`.
pub fn uniform_grid(t_max: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| t_max * k as f64 / steps.max(1) as f64).collect()
}

/// Damped rotation `C̃ + iS̃ = e^{−γ̃t}e^{iω̃t}` with `ω̃ = S(τ)/2τ`,
/// `γ̃ = (1 − C(τ))/2τ`.
pub fn coarse_grain_factor(spec: &BathSpec, tau: f64, t: f64) -> C64 {
    let f = exact_f(spec, tau);
    let omega = f.im / (2.0 * tau);
    let gamma = (1.0 - f.re) / (2.0 * tau);
    C64::from_polar((-gamma * t).exp(), omega * t)
}

pub fn coarse_grain(spec: &BathSpec, tau: f64, v0: BlochXY, t: f64) -> BlochXY {
    v0.evolve(coarse_grain_factor(spec, tau, t))
}

/// Mean over `samples + 1` equally spaced times in `[0, horizon]` of
/// `½|f(t) − f̃_τ(t)|`, i.e. the trace distance for a unit in-plane vector.
pub fn coarse_grain_mean_distance(spec: &BathSpec, tau: f64, horizon: f64, samples: usize) -> f64 {
    let grid = uniform_grid(horizon, samples);
    let sum: f64 = grid.iter().map(|&t| 0.5 * (exact_f(spec, t) - coarse_grain_factor(spec, tau, t)).norm()).sum();
    sum / grid.len() as f64
}

pub const CG_SAMPLES: usize = 400;

/// The candidate `τ` minimizing [`coarse_grain_mean_distance`]; ties keep the first.
pub fn optimal_tau(spec: &BathSpec, horizon: f64, taus: &[f64]) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &tau in taus {
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!("coarse-graining time {tau} must be positive")));
        }
        let d = coarse_grain_mean_distance(spec, tau, horizon, CG_SAMPLES);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((tau, d));
        }
    }
    best.map(|(t, _)| t).ok_or_else(|| Error::InvalidInput("empty coarse-graining grid".into()))
}

/// First time the exact `|f|` falls below `level`, scanning `[0, t_max]`.
pub fn decay_time(spec: &BathSpec, level: f64, t_max: f64, steps: usize) -> Option<f64> {
    uniform_grid(t_max, steps).into_iter().find(|&t| exact_f(spec, t).norm() < level)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PmKernel {
    /// `ξ = C`, the best any kernel can do.
    Optimal,
    /// `k(t) = 2α²Q2·e^{2t}`, reproducing the Born solution.
    Nz2Match,
}

/// Post-Markovian solution `v(t) = ξ(t)·v(0)`; `x` and `y` never mix.
pub fn post_markovian(spec: &BathSpec, kernel: PmKernel, v0: BlochXY, t: f64) -> BlochXY {
    let xi = pm_xi(spec, kernel, t);
    BlochXY { vx: xi * v0.vx, vy: xi * v0.vy }
}

pub fn pm_xi(spec: &BathSpec, kernel: PmKernel, t: f64) -> f64 {
    match kernel {
        PmKernel::Optimal => exact_f(spec, t).re,
        PmKernel::Nz2Match => (2.0 * spec.alpha * correlators(spec).q2.sqrt() * t).cos(),
    }
}

/// Memory kernel that reproduces the Born solution.
pub fn pm_kernel_nz2(spec: &BathSpec, t: f64) -> f64 {
    2.0 * spec.alpha * spec.alpha * correlators(spec).q2 * (2.0 * t).exp()
}

/// Lower bound on the trace distance any post-Markovian kernel achieves: `½|S(t)||v0|`.
pub fn pm_min_distance(spec: &BathSpec, v0: BlochXY, t: f64) -> f64 {
    0.5 * exact_f(spec, t).im.abs() * v0.norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
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

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => Model::Exact,
            "nz2" => Model::Nz2,
            "nz3" => Model::Nz3,
            "nz4" => Model::Nz4,
            "tcl2" => Model::Tcl2,
            "tcl3" => Model::Tcl3,
            "tcl4" => Model::Tcl4,
            "pm" => Model::Pm,
            "cg" => Model::Cg,
            other => return Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        })
    }
}

/// Coarse-graining candidates: 200 log-spaced values of `ατ` in `[1e-3, 10]`.
pub fn default_tau_grid(alpha: f64) -> Vec<f64> {
    (0..200).map(|k| 10f64.powf(-3.0 + 4.0 * k as f64 / 199.0) / alpha).collect()
}

/// Horizon for the coarse-graining average: where `|f|` first drops below 1e-3,
/// or `t_max` when it never does.
pub fn cg_horizon(spec: &BathSpec, t_max: f64) -> f64 {
    decay_time(spec, 1e-3, t_max, 20_000).unwrap_or(t_max)
}

/// Evaluates one model on a uniform grid starting at 0.
pub fn model_trajectory(spec: &BathSpec, model: Model, v0: BlochXY, t_grid: &[f64]) -> Result<Vec<BlochXY>> {
    check_grid(t_grid)?;
    let q = correlators(spec);
    let a = spec.alpha;
    let pointwise = |m: &dyn Fn(f64) -> Result<BlochXY>| t_grid.iter().map(|&t| m(t)).collect::<Result<Vec<_>>>();
    match model {
        Model::Exact => pointwise(&|t| Ok(exact_bloch(spec, v0, t))),
        Model::Nz2 => pointwise(&|t| {
            let c = (2.0 * a * q.q2.sqrt() * t).cos();
            Ok(BlochXY::new(v0.vx * c, v0.vy * c))
        }),
        Model::Nz3 => nz_with(&q, a, 3, v0, t_grid),
        Model::Nz4 => nz_with(&q, a, 4, v0, t_grid),
        Model::Tcl2 => pointwise(&|t| tcl_with(&q, a, 2, v0, t)),
        Model::Tcl3 => pointwise(&|t| tcl_with(&q, a, 3, v0, t)),
        Model::Tcl4 => pointwise(&|t| tcl_with(&q, a, 4, v0, t)),
        Model::Pm => pointwise(&|t| Ok(post_markovian(spec, PmKernel::Optimal, v0, t))),
        Model::Cg => {
            let t_max = *t_grid.last().unwrap_or(&0.0);
            let horizon = if t_max > 0.0 { cg_horizon(spec, t_max) } else { 1.0 / a };
            let tau = optimal_tau(spec, horizon, &default_tau_grid(a))?;
            pointwise(&|t| Ok(coarse_grain(spec, tau, v0, t)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareRow {
    pub alpha_t: f64,
    pub vx_exact: f64,
    pub vx_model: f64,
    pub trace_distance: f64,
}

/// Exact versus model on each grid point; ensembles average the Bloch
/// vectors (equivalently the density matrices) before taking distances.
pub fn compare(specs: &[BathSpec], model: Model, v0: BlochXY, t_grid: &[f64]) -> Result<Vec<CompareRow>> {
    let first = specs.first().ok_or_else(|| Error::InvalidInput("empty ensemble".into()))?;
    let n = t_grid.len();
    let mut ex = vec![BlochXY::new(0.0, 0.0); n];
    let mut mo = ex.clone();
    for spec in specs {
        let e = model_trajectory(spec, Model::Exact, v0, t_grid)?;
        let m = model_trajectory(spec, model, v0, t_grid)?;
        for k in 0..n {
            ex[k].vx += e[k].vx;
            ex[k].vy += e[k].vy;
            mo[k].vx += m[k].vx;
            mo[k].vy += m[k].vy;
        }
    }
    let w = 1.0 / specs.len() as f64;
    Ok((0..n)
        .map(|k| {
            let e = BlochXY::new(ex[k].vx * w, ex[k].vy * w);
            let m = BlochXY::new(mo[k].vx * w, mo[k].vy * w);
            CompareRow { alpha_t: first.alpha * t_grid[k], vx_exact: e.vx, vx_model: m.vx, trace_distance: e.trace_distance(&m) }
        })
        .collect())
}
