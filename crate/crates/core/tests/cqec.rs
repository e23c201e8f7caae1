use num_complex::Complex64 as C64;
use oqslab::cqec::*;
use oqslab::ode::LinearSystem;
use oqslab::qcore::*;
use oqslab::rng::seeded;
use oqslab::Error;
use proptest::prelude::*;

/// Classical RK4 on a matrix ODE, returning the state after every step.
fn rk4_matrix(rho0: &ComplexMatrix, f: impl Fn(&ComplexMatrix) -> ComplexMatrix, h: f64, steps: usize) -> Vec<ComplexMatrix> {
    let mut out = vec![rho0.clone()];
    let mut x = rho0.clone();
    for _ in 0..steps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1.scale_re(h / 2.0)));
        let k3 = f(&(&x + &k2.scale_re(h / 2.0)));
        let k4 = f(&(&x + &k3.scale_re(h)));
        let incr = &(&k1 + &k2.scale_re(2.0)) + &(&k3.scale_re(2.0) + &k4);
        x = &x + &incr.scale_re(h / 6.0);
        out.push(x.clone());
    }
    out
}

fn minus_i_commutator(h: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    h.commutator(rho).scale(c(0.0, -1.0))
}

fn grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_max * k as f64 / n as f64).collect()
}

fn random_code_state(seed: u64) -> DensityMatrix {
    let mut rng = seeded(seed);
    let q = random_density(2, &mut rng);
    let embed = ComplexMatrix::from_fn(8, 8, |r, k| {
        let idx = |x: usize| match x {
            0 => Some(0),
            7 => Some(1),
            _ => None,
        };
        match (idx(r), idx(k)) {
            (Some(a), Some(b)) => q.mat()[(a, b)],
            _ => ZERO,
        }
    });
    DensityMatrix::new(embed).unwrap()
}

fn conj(u: &ComplexMatrix, m: &ComplexMatrix) -> ComplexMatrix {
    &(u * m) * &u.adjoint()
}

#[test]
fn params_and_ratios() {
    let p = CqecParams::new(2.0, 8.0, 0.0).unwrap();
    assert_eq!(p.r(), Some(4.0));
    assert_eq!(p.big_r(), None);
    assert!(matches!(CqecParams::new(-1.0, 1.0, 1.0), Err(Error::InvalidInput(_))));
    assert!((markov_alpha_star(8.0) - 0.9).abs() < 1e-15);
    assert!(markov_alpha_star(1e12) > 1.0 - 1e-11);
}

#[test]
fn markov_single_closed_form() {
    let p = CqecParams::new(0.7, 0.0, 0.0).unwrap();
    for t in [0.0, 0.3, 2.0] {
        assert!((markov_single(1.0, &p, t) - 0.5 * (1.0 + (-1.4 * t).exp())).abs() < 1e-15);
    }
    let p = CqecParams::markov(6.0).unwrap();
    let g = grid(3.0, 30);
    let xs = markov_single_system(&p).integrate(&[0.4], &g, 1e-12).unwrap();
    for (x, &t) in xs.iter().zip(&g) {
        assert!((x[0] - markov_single(0.4, &p, t)).abs() < 1e-10);
    }
}

#[test]
fn nonmarkov_single_closed_form_and_ode() {
    let p0 = CqecParams::new(0.0, 0.0, 1.3).unwrap();
    for t in [0.0, 0.5, 4.0] {
        assert!((nonmarkov_single(&p0, t).0 - 0.5 * (1.0 + (2.6 * t).cos())).abs() < 1e-15);
    }
    for big_r in [1.0, 2.0, 5.0] {
        let p = CqecParams::nonmarkov(big_r).unwrap();
        let g = grid(6.0, 60);
        let xs = nonmarkov_single_system(&p).integrate(&[1.0, 0.0], &g, 1e-12).unwrap();
        for (x, &t) in xs.iter().zip(&g) {
            let (a, b) = nonmarkov_single(&p, t);
            assert!((x[0] - a).abs() < 1e-10 && (x[1] - b).abs() < 1e-10, "R {big_r} t {t}");
            assert!(b.abs() <= (a * (1.0 - a)).sqrt() + 1e-12);
        }
    }
}

/// System qubit ⊗ bath qubit, `H = γX⊗X`, correction `Φ ⊗ id`, bath maximally mixed.
#[test]
fn nonmarkov_single_against_two_qubit_dynamics() {
    let p = CqecParams::nonmarkov(2.0).unwrap();
    let x = pauli_x();
    let h = tensor(&x, &x).unwrap().scale_re(p.gamma);
    let ks: Vec<ComplexMatrix> = strong_single_kraus().iter().map(|k| tensor(k, &ComplexMatrix::identity(2)).unwrap()).collect();
    let yx = tensor(&pauli_y(), &x).unwrap();
    let rho0 = tensor(&ComplexMatrix::diag_real(&[1.0, 0.0]), &ComplexMatrix::identity(2).scale_re(0.5)).unwrap();
    let dt = 1e-3;
    let traj = rk4_matrix(&rho0, |r| &minus_i_commutator(&h, r) + &(&apply_kraus(&ks, r) - r).scale_re(p.kappa), dt, 4000);
    for (k, rho) in traj.iter().enumerate().step_by(250) {
        let t = k as f64 * dt;
        let alpha = rho[(0, 0)].re + rho[(1, 1)].re;
        let beta = -0.5 * rho.trace_product(&yx).re;
        let (a, b) = nonmarkov_single(&p, t);
        assert!((alpha - a).abs() < 1e-9 && (beta - b).abs() < 1e-9, "t {t}");
    }
}

#[test]
fn long_time_asymptotes_from_integration() {
    for r in [10.0, 100.0] {
        let p = CqecParams::markov(r).unwrap();
        let t_end = 40.0 / (p.kappa + 2.0 * p.lambda);
        let xs = markov_single_system(&p).integrate(&[1.0], &[0.0, t_end], 1e-12).unwrap();
        assert!((xs[1][0] - markov_alpha_star(r)).abs() < 1e-6);
        let q = CqecParams::nonmarkov(r).unwrap();
        let t_end = 40.0 / q.kappa;
        let xs = nonmarkov_single_system(&q).integrate(&[1.0, 0.0], &[0.0, t_end], 1e-12).unwrap();
        assert!((xs[1][0] - nonmarkov_alpha_star(r)).abs() < 1e-6);
    }
}

fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    sxy / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

#[test]
fn deficit_scaling_contrast() {
    let rates: Vec<f64> = (0..=20).map(|k| 10f64.powf(1.0 + k as f64 / 10.0)).collect();
    let markov: Vec<(f64, f64)> = rates
        .iter()
        .map(|&r| {
            let p = CqecParams::markov(r).unwrap();
            let t_end = 40.0 / (p.kappa + 2.0 * p.lambda);
            (r, 1.0 - markov_single_system(&p).integrate(&[1.0], &[0.0, t_end], 1e-13).unwrap()[1][0])
        })
        .collect();
    let nm: Vec<(f64, f64)> = rates
        .iter()
        .map(|&r| {
            let p = CqecParams::nonmarkov(r).unwrap();
            let xs = nonmarkov_single_system(&p).integrate(&[1.0, 0.0], &[0.0, 40.0 / p.kappa], 1e-13).unwrap();
            (r, 1.0 - xs[1][0])
        })
        .collect();
    let (sm, sn) = (loglog_slope(&markov), loglog_slope(&nm));
    assert!((sm + 1.0).abs() <= 0.05, "Markov slope {sm}");
    assert!((sn + 2.0).abs() <= 0.05, "non-Markov slope {sn}");
}

#[test]
fn markov_bitflip_generator_conserves_weight() {
    let sys = markov_bitflip_system(&CqecParams::new(0.8, 5.0, 0.0).unwrap());
    for col in 0..4 {
        let s: f64 = (0..4).map(|row| sys.a[row * 4 + col]).sum();
        assert!(s.abs() < 1e-15);
    }
}

#[test]
fn markov_bitflip_outside_weight_closed_form() {
    for r in [0.5, 10.0, 100.0] {
        let p = CqecParams::markov(r).unwrap();
        let g = grid(3.0, 300);
        let tr = markov_bitflip(&p, MarkovBitflipState::codeword(), &g).unwrap();
        for (s, &t) in tr.iter().zip(&g) {
            assert!((s.outside() - markov_outside_weight(&p, t)).abs() < 1e-8);
            assert!((s.total() - 1.0).abs() < 1e-12);
        }
        let end = markov_outside_weight(&p, 1e3);
        assert!((end - 3.0 / (4.0 + r)).abs() < 1e-12);
    }
}

#[test]
fn markov_bitflip_without_correction_mixes_uniformly() {
    let p = CqecParams::new(1.0, 0.0, 0.0).unwrap();
    let tr = markov_bitflip(&p, MarkovBitflipState::codeword(), &[0.0, 10.0]).unwrap();
    let s = tr[1];
    for (w, e) in s.as_array().iter().zip([0.125, 0.375, 0.375, 0.125]) {
        assert!((w - e).abs() < 1e-8);
    }
}

/// Full three-qubit Lindblad evolution starting from `|000⟩`.
#[test]
fn markov_bitflip_against_density_matrix() {
    let p = CqecParams::markov(3.0).unwrap();
    let xs: Vec<ComplexMatrix> = (0..3).map(bitflip_on).collect();
    let ks = strong_bitflip_kraus();
    let rho0 = ComplexMatrix::projector(&ket(&[0, 0, 0]));
    let dt = 1e-3;
    let traj = rk4_matrix(
        &rho0,
        |r| {
            let mut d = (&apply_kraus(&ks, r) - r).scale_re(p.kappa);
            for x in &xs {
                d = &d + &(&conj(x, r) - r).scale_re(p.lambda);
            }
            d
        },
        dt,
        2000,
    );
    let g: Vec<f64> = (0..=2000).map(|k| k as f64 * dt).collect();
    let weights = markov_bitflip(&p, MarkovBitflipState::codeword(), &g).unwrap();
    for k in (0..=2000).step_by(200) {
        let pop = |i: usize| traj[k][(i, i)].re;
        let b = pop(4) + pop(2) + pop(1);
        let cc = pop(6) + pop(5) + pop(3);
        let w = weights[k];
        assert!((w.a - pop(0)).abs() < 1e-9 && (w.b - b).abs() < 1e-9 && (w.c - cc).abs() < 1e-9 && (w.d - pop(7)).abs() < 1e-9);
    }
}

#[test]
fn markov_bitflip_large_r_effective_rate() {
    let p = CqecParams::markov(100.0).unwrap();
    let g = grid(20.0, 200);
    let tr = markov_bitflip(&p, MarkovBitflipState::codeword(), &g).unwrap();
    let mut worst_raw: f64 = 0.0;
    for (s, &t) in tr.iter().zip(&g) {
        // Recoverable weight a + b: single errors still sitting in the register are undone by one more Φ.
        assert!((s.a + s.b - markov_large_r_fidelity(&p, t)).abs() < 0.02, "t {t}");
        worst_raw = worst_raw.max((s.a - markov_large_r_fidelity(&p, t)).abs());
    }
    // The bare codeword weight carries the extra ~3/(4+r) outside weight.
    assert!(worst_raw > 0.02 && worst_raw < 3.0 / 104.0);
}

#[test]
fn markov_state_validation() {
    assert!(MarkovBitflipState::new(0.5, 0.5, 0.0, 0.0).is_ok());
    assert!(MarkovBitflipState::new(0.5, 0.6, 0.0, 0.0).is_err());
    assert!(MarkovBitflipState::new(1.2, -0.2, 0.0, 0.0).is_err());
}

/// The displayed generator in units of γ, with `R` standing for `κ/γ`.
const PRINTED: &str = "
0 -6 0 0 3R 0 0 0 0 0 0 0 0
1 -R -2 -2 -1 0 0 0 0 0 0 0 0
0 2 -R 0 0 -1 -1 -2 0 0 0 0 0
0 2 0 -R 0 -2 0 -2 0 0 0 0 0
0 2 0 0 -R 0 0 -4 0 0 0 0 0
0 0 1 2 0 -R 0 0 0 -2 -1 0 0
0 0 3 0 0 -3R 0 0 0 0 -3 0 0
0 0 1 1 1 0 0 -R -1 -1 -1 0 0
0 0 0 0 0 0 0 4 -R 0 0 -2 0
0 0 0 0 0 2 0 2 0 -R 0 -2 0
0 0 0 0 0 1 1 2 0 0 -R -2 0
0 0 0 0 0 0 0 0 1 2 2 -R -1
0 0 0 0 0 0 0 0 3R 0 0 6 0";

fn printed_matrix(big_r: f64) -> Vec<Vec<f64>> {
    PRINTED
        .trim()
        .lines()
        .map(|l| {
            l.split_whitespace()
                .map(|tok| match tok.strip_suffix('R') {
                    Some("") => big_r,
                    Some("-") => -big_r,
                    Some(k) => k.parse::<f64>().unwrap() * big_r,
                    None => tok.parse().unwrap(),
                })
                .collect()
        })
        .collect()
}

#[test]
fn generator_matches_printed_table() {
    let big_r = 7.25;
    let p = CqecParams::new(0.0, big_r * 1.5, 1.5).unwrap();
    let m = build_nm_generator(&p);
    let printed = printed_matrix(big_r);
    for i in 0..NM_DIM {
        for j in 0..NM_DIM {
            assert!((m[i][j] - 1.5 * printed[i][j]).abs() < 1e-12, "entry ({i},{j})");
        }
    }
    assert_eq!(m[0][1], -6.0 * 1.5);
    assert_eq!(m[0][4], 3.0 * p.kappa);
}

fn weight(x: usize) -> u32 {
    (x as u32).count_ones()
}

fn class_of(l: usize, p: usize) -> (u32, u32, u32) {
    let (a, b) = (weight(l), weight(p));
    (a.max(b), a.min(b), weight(l & p))
}

fn parse_label(s: &str) -> (usize, usize) {
    let (l, p) = s.split_once(',').unwrap();
    (usize::from_str_radix(l, 2).unwrap(), usize::from_str_radix(p, 2).unwrap())
}

/// Generator on all 64 coefficients `C_{lmn,pqr}`, derived from the action of
/// `−i[γΣX_iX_i^B, ·]` and `κ(Φ − id)` on each term `X^L ρ0 X^P ⊗ bath`.
fn full_generator(gamma: f64, kappa: f64) -> Vec<Vec<C64>> {
    let phase = |l: usize, p: usize| C64::new(0.0, -1.0).powu(weight(l)) * C64::new(0.0, 1.0).powu(weight(p));
    let syndrome = |x: usize| if weight(x) <= 1 { x } else { x ^ 7 };
    let fix = |x: usize| if weight(x) <= 1 { 0 } else { 7 };
    let idx = |l: usize, p: usize| l * 8 + p;
    let mut m = vec![vec![C64::new(0.0, 0.0); 64]; 64];
    for l in 0..8 {
        for p in 0..8 {
            let src = idx(l, p);
            // Coefficient flow from term (l,p) into term (l',p'): divide by the target phase.
            let mut flow = |tl: usize, tp: usize, amp: C64| {
                m[idx(tl, tp)][src] += amp * phase(l, p) / phase(tl, tp);
            };
            for q in [4, 2, 1] {
                flow(l ^ q, p, C64::new(0.0, -gamma));
                flow(l, p ^ q, C64::new(0.0, gamma));
            }
            if syndrome(l) == syndrome(p) {
                flow(fix(l), fix(p), C64::new(kappa, 0.0));
            }
            flow(l, p, C64::new(-kappa, 0.0));
        }
    }
    m
}

#[test]
fn generator_rederived_from_full_ansatz() {
    let (gamma, kappa) = (1.0, 3.7);
    let full = full_generator(gamma, kappa);
    assert!(full.iter().flatten().all(|z| z.im.abs() < 1e-14));
    let labels: Vec<(usize, usize)> = NM_LABELS.iter().map(|s| parse_label(s)).collect();
    let classes: Vec<(u32, u32, u32)> = labels.iter().map(|&(l, p)| class_of(l, p)).collect();
    let lib = build_nm_generator(&CqecParams::new(0.0, kappa, gamma).unwrap());
    for (i, _) in labels.iter().enumerate() {
        // Every member of class i must see the same reduced row.
        for l in 0..8 {
            for p in 0..8 {
                if class_of(l, p) != classes[i] {
                    continue;
                }
                for (j, cls) in classes.iter().enumerate() {
                    let s: f64 = (0..64).filter(|&k| class_of(k / 8, k % 8) == *cls).map(|k| full[l * 8 + p][k].re).sum();
                    assert!((s - lib[i][j]).abs() < 1e-12, "row {} col {} member {l:03b},{p:03b}", NM_LABELS[i], NM_LABELS[j]);
                }
            }
        }
    }
}

/// Six-qubit density matrix (code ⊗ bath) against the 13-coefficient reduction.
#[test]
fn reduced_dynamics_matches_six_qubit_simulation() {
    let p = CqecParams::nonmarkov(3.0).unwrap();
    let x = pauli_x();
    let mut h = ComplexMatrix::zeros(64, 64);
    for q in 0..3 {
        h = &h + &(&on_qubit(&x, q, 6) * &on_qubit(&x, q + 3, 6)).scale_re(p.gamma);
    }
    let ks: Vec<ComplexMatrix> =
        strong_bitflip_kraus().iter().map(|k| tensor(k, &ComplexMatrix::identity(8)).unwrap()).collect();
    let rho0 = tensor(&ComplexMatrix::projector(&ket(&[0, 0, 0])), &ComplexMatrix::identity(8).scale_re(0.125)).unwrap();
    let dt = 2e-3;
    let steps = 1000;
    let traj = rk4_matrix(&rho0, |r| &minus_i_commutator(&h, r) + &(&apply_kraus(&ks, r) - r).scale_re(p.kappa), dt, steps);
    let g: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let coeffs = nm_bitflip_evolve(&p, NmCoeffs::codeword(), &g).unwrap();
    for k in (0..=steps).step_by(100) {
        let rs = partial_trace_mat(&traj[k], &[8, 8], &[0]).unwrap();
        assert!((rs[(0, 0)].re - coeffs[k].fidelity()).abs() < 1e-8, "t {}", g[k]);
        assert!((coeffs[k].trace() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn eigenvalue_structure() {
    let p = CqecParams::nonmarkov(100.0).unwrap();
    let ev = nm_eigenvalues(&p).unwrap();
    assert!(ev[0].norm() <= 1e-9);
    let pred = nm_slow_pair_prediction(&p).unwrap();
    for z in [ev[1], ev[2]] {
        assert!(((z.re - pred.re) / pred.re).abs() < 0.05);
        assert!(((z.im.abs() - pred.im) / pred.im).abs() < 0.05);
    }
    assert!((ev[1].im + ev[2].im).abs() < 1e-12);
    let k = p.kappa;
    let near = |target: C64, tol: f64| ev.iter().any(|z| (z - target).norm() <= tol);
    for target in [c(-k, 0.0), c(-k, 2.0), c(-k, -2.0), c(-k, 4.0), c(-k, -4.0)] {
        assert!(near(target, 1e-8), "missing {target}");
    }
    let s = 13f64.sqrt();
    for target in [c(-k, s + 3.0), c(-k, -(s + 3.0)), c(-k, s - 3.0), c(-k, 3.0 - s)] {
        assert!(near(target, 0.1 * target.norm()), "missing {target}");
    }
}

#[test]
fn generator_trace_row_vanishes() {
    let m = build_nm_generator(&CqecParams::new(0.0, 4.2, 0.9).unwrap());
    for j in 0..NM_DIM {
        let s: f64 = (0..NM_DIM).map(|i| NM_TRACE_WEIGHTS[i] * m[i][j]).sum();
        assert!(s.abs() < 1e-12);
    }
}

#[test]
fn long_time_fidelity_at_large_r() {
    let p = CqecParams::nonmarkov(100.0).unwrap();
    let g: Vec<f64> = (0..=2000).map(|k| k as f64 * 5.0).collect();
    let tr = nm_bitflip_evolve(&p, NmCoeffs::codeword(), &g).unwrap();
    assert_eq!(tr[0].fidelity(), 1.0);
    for (c, &t) in tr.iter().zip(&g).filter(|(_, &t)| t >= 1.0) {
        let approx = nm_long_time_fidelity(&p, t).unwrap();
        assert!((c.fidelity() - approx).abs() < 0.02, "t {t}");
    }
    // Fast small dip near γt ~ 0.1, recovering afterwards.
    let short = nm_bitflip_evolve(&p, NmCoeffs::codeword(), &grid(1.0, 100)).unwrap();
    let dip = short.iter().map(|c| c.fidelity()).fold(1.0, f64::min);
    assert!(dip < 1.0 && dip > 0.99);
}

#[test]
fn effective_coupling_reduction() {
    let big_r = 100.0;
    let p = CqecParams::nonmarkov(big_r).unwrap();
    let dt = 1.0;
    let g: Vec<f64> = (0..=600).map(|k| k as f64 * dt).collect();
    let tr = nm_bitflip_evolve(&p, NmCoeffs::codeword(), &g).unwrap();
    // First time the codeword fidelity crosses 0.75.
    let k = tr.iter().position(|c| c.fidelity() < 0.75).unwrap();
    let f = tr[k].fidelity();
    let rate = -(tr[k + 1].fidelity() - tr[k - 1].fidelity()) / (2.0 * dt);
    let single = 2.0 * p.gamma * (f * (1.0 - f)).sqrt();
    let ratio = single / rate;
    let expected = big_r * big_r / 12.0;
    assert!(((ratio - expected) / expected).abs() < 0.1, "ratio {ratio}");
}

#[test]
fn epsilon_prime_relation() {
    for eps in [0.01, 0.2, 0.7, 0.99] {
        let ep = epsilon_prime(eps);
        assert!((2.0 * ep / (1.0 + ep * ep) - eps).abs() < 1e-14);
        assert!((4.0 * ep * ep / (1.0 + ep * ep).powi(2) - eps * eps).abs() < 1e-14);
    }
    assert!((epsilon_prime(1e-3) - 5e-4).abs() < 1e-9);
}

#[test]
fn single_weak_map_fixes_target_and_raises_fidelity() {
    let zero = DensityMatrix::pure(&basis(2, 0));
    for eps in [0.05, 0.2, 0.6] {
        let out = weak_ec_map_single(&zero, eps).unwrap();
        assert!((out.mat() - zero.mat()).max_abs() < 1e-15);
        for alpha in [0.0, 0.3, 0.5, 0.9] {
            let rho = DensityMatrix::new(ComplexMatrix::diag_real(&[alpha, 1.0 - alpha])).unwrap();
            let out = weak_ec_map_single(&rho, eps).unwrap();
            assert!((out.mat()[(0, 0)].re - alpha - alpha_gain(alpha, eps)).abs() < 1e-12);
            assert!(out.mat()[(0, 1)].norm() < 1e-15);
        }
    }
    let rho = DensityMatrix::new(ComplexMatrix::diag_real(&[0.5, 0.5])).unwrap();
    let ep = (1.0 - 0.96f64.sqrt()) / 0.2;
    let gain = weak_ec_map_single(&rho, 0.2).unwrap().mat()[(0, 0)].re - 0.5;
    assert!((gain - 4.0 * ep * ep / (1.0 + ep * ep).powi(2) * 0.5).abs() < 1e-12);
    assert!(matches!(weak_ec_map_single(&rho, 1.0), Err(Error::InvalidInput(_))));
    assert!(matches!(weak_ec_map_single(&rho, 0.0), Err(Error::InvalidInput(_))));
}

#[test]
fn single_weak_map_coherence_damping() {
    let rho = DensityMatrix::new(ComplexMatrix::from_fn(2, 2, |r, k| match (r, k) {
        (0, 0) => c(0.6, 0.0),
        (1, 1) => c(0.4, 0.0),
        (0, 1) => c(0.2, 0.1),
        _ => c(0.2, -0.1),
    }))
    .unwrap();
    // Off-diagonals shrink by exactly √(1 − ε²); populations move by ε²(1 − α).
    for eps in [0.2, 0.1, 0.05] {
        let out = weak_ec_map_single(&rho, eps).unwrap();
        let ratio = out.mat()[(0, 1)] / rho.mat()[(0, 1)];
        assert!((ratio - c((1.0 - eps * eps).sqrt(), 0.0)).norm() < 1e-14);
        assert!((out.mat()[(0, 0)].re - (0.6 + 0.4 * eps * eps)).abs() < 1e-12);
    }
}

#[test]
fn weak_maps_are_cptp() {
    for eps in [0.05, 0.3, 0.8] {
        let ks = weak_single_kraus(eps).unwrap();
        assert!(completeness_deviation(&ks) < 1e-12);
        let choi = choi_matrix(2, |m| apply_kraus(&ks, m));
        assert!(eigh(&choi).unwrap().0[0] >= -1e-9);
        for q in 0..3 {
            let ks = weak_bitflip_kraus(eps, q).unwrap();
            assert!(completeness_deviation(&ks) < 1e-12);
        }
        let choi = choi_matrix(8, |m| {
            let mut out = m.clone();
            for q in 0..3 {
                out = apply_kraus(&weak_bitflip_kraus(eps, q).unwrap(), &out);
            }
            out
        });
        assert!(eigh(&choi).unwrap().0[0] >= -1e-9);
        let rho = random_density(8, &mut seeded(3));
        assert!((weak_ec_map_bitflip(&rho, eps).unwrap().mat().trace() - ONE).norm() < 1e-12);
    }
    assert!(completeness_deviation(&strong_bitflip_kraus()) < 1e-15);
    assert!(completeness_deviation(&strong_single_kraus()) < 1e-15);
}

#[test]
fn bitflip_weak_map_leaves_code_space_fixed() {
    for seed in 0..5 {
        let rho = random_code_state(seed);
        let out = weak_ec_map_bitflip(&rho, 0.3).unwrap();
        assert!((out.mat() - rho.mat()).max_abs() < 1e-12);
    }
}

#[test]
fn bitflip_weak_map_listed_transfers() {
    let eps = 0.1;
    let kt = eps * eps;
    let ks = weak_bitflip_kraus(eps, 0).unwrap();
    let op = |a: usize, b: usize| ComplexMatrix::from_fn(8, 8, |r, k| if r == a && k == b { ONE } else { ZERO });
    // |100⟩⟨100| → (1−κτ)|100⟩⟨100| + κτ|000⟩⟨000|, and the three partners.
    for (src, dst) in [((4, 4), (0, 0)), ((4, 3), (0, 7)), ((3, 4), (7, 0)), ((3, 3), (7, 7))] {
        let out = apply_kraus(&ks, &op(src.0, src.1));
        let expected = &op(src.0, src.1).scale_re(1.0 - kt) + &op(dst.0, dst.1).scale_re(kt);
        assert!((&out - &expected).max_abs() < 1e-12, "{src:?}");
    }
    // Coherences between the qubit-1 error block and anything orthogonal: factor 1 − κτ/2 to first order.
    let out = apply_kraus(&ks, &op(4, 2));
    assert!((out[(4, 2)].re - (1.0 - 0.5 * kt)).abs() < kt * kt);
    // Terms with an error on qubit 2 or 3 are untouched by the qubit-1 correction.
    for (a, b) in [(2, 2), (1, 6), (5, 5)] {
        let out = apply_kraus(&ks, &op(a, b));
        assert!((&out - &op(a, b)).max_abs() < 1e-12, "({a},{b})");
    }
}

#[test]
fn bitflip_weak_map_iterates_to_strong_map() {
    let eps = 0.3;
    for seed in 0..4 {
        let code = random_code_state(seed);
        let mut rng = seeded(100 + seed);
        let w: Vec<f64> = (0..4).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let tot: f64 = w.iter().sum();
        let mut m = code.mat().scale_re(w[0] / tot);
        for q in 0..3 {
            m = &m + &conj(&bitflip_on(q), code.mat()).scale_re(w[q + 1] / tot);
        }
        for single in [false, true] {
            let input = if single {
                DensityMatrix::new(conj(&bitflip_on(seed as usize % 3), code.mat())).unwrap()
            } else {
                DensityMatrix::new(m.clone()).unwrap()
            };
            let target = strong_map_bitflip(&input).unwrap();
            assert!((target.mat() - code.mat()).max_abs() < 1e-14);
            let mut rho = input;
            for _ in 0..400 {
                rho = weak_ec_map_bitflip(&rho, eps).unwrap();
            }
            assert!((rho.mat() - target.mat()).max_abs() < 1e-6);
        }
    }
    let bad = DensityMatrix::maximally_mixed(4);
    assert!(matches!(weak_ec_map_bitflip(&bad, 0.1), Err(Error::Dimension(_))));
}

#[test]
fn zeno_coefficient_examples() {
    let gamma = 0.7;
    let x = pauli_x();
    let h = tensor(&x, &x).unwrap().scale_re(gamma);
    let rb = DensityMatrix::maximally_mixed(2);
    assert!((zeno_coefficient(&h, &rb).unwrap() - gamma * gamma).abs() < 1e-14);
    let hz = tensor(&pauli_z(), &x).unwrap();
    assert!(zeno_coefficient(&hz, &rb).unwrap().abs() < 1e-15);
    let bad = ComplexMatrix::from_fn(4, 4, |r, k| if r == 0 && k == 1 { ONE } else { ZERO });
    assert!(matches!(zeno_coefficient(&bad, &rb), Err(Error::NotHermitian(_))));
}

#[test]
fn zeno_coefficient_against_schrodinger() {
    let mut rng = seeded(8);
    let h = random_hermitian(6, &mut rng);
    let rb = random_density(3, &mut rng);
    let cz = zeno_coefficient(&h, &rb).unwrap();
    let p0 = ComplexMatrix::diag_real(&[1.0, 0.0]);
    let rho0 = tensor(&p0, rb.mat()).unwrap();
    let proj = tensor(&p0, &ComplexMatrix::identity(3)).unwrap();
    for t in [1e-2, 5e-3, 2.5e-3] {
        let u = expm_skew(&h, t).unwrap();
        let alpha = conj(&u, &rho0).trace_product(&proj).re;
        let resid = (1.0 - alpha - cz * t * t).abs();
        assert!(resid < 10.0 * t.powi(3), "t {t} resid {resid}");
    }
}

#[test]
fn zeno_regime_slope() {
    let p = CqecParams::new(0.0, 0.0, 1.0).unwrap();
    let pts: Vec<(f64, f64)> = (0..=10)
        .map(|k| {
            let t = 10f64.powf(-3.0 + 0.2 * k as f64);
            (t, 1.0 - nonmarkov_single(&p, t).0)
        })
        .collect();
    assert!((loglog_slope(&pts) - 2.0).abs() <= 0.05);
}

#[test]
fn ode_validation() {
    assert!(LinearSystem::new(2, vec![0.0; 3], None).is_err());
    let s = LinearSystem::new(1, vec![-1.0], None).unwrap();
    assert!(s.integrate(&[1.0], &[], 1e-9).is_err());
    assert!(s.integrate(&[1.0], &[0.0, 0.0], 1e-9).is_err());
    let xs = s.integrate(&[1.0], &[0.0, 1.0, 2.5], 1e-12).unwrap();
    assert!((xs[2][0] - (-2.5f64).exp()).abs() < 1e-11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_weak_map_never_lowers_z_fidelity(alpha in 0.0f64..1.0, eps in 0.01f64..0.95) {
        let rho = DensityMatrix::new(ComplexMatrix::diag_real(&[alpha, 1.0 - alpha])).unwrap();
        let out = weak_ec_map_single(&rho, eps).unwrap();
        prop_assert!(out.mat()[(0, 0)].re >= alpha - 1e-15);
    }

    #[test]
    fn weak_bitflip_map_preserves_trace_and_positivity(seed in any::<u64>(), eps in 0.01f64..0.95) {
        let rho = random_density(8, &mut seeded(seed));
        let out = weak_ec_map_bitflip(&rho, eps).unwrap();
        prop_assert!((out.mat().trace() - ONE).norm() < 1e-12);
        prop_assert!(eigh(out.mat()).unwrap().0[0] > -1e-12);
    }

    #[test]
    fn nm_trace_conserved(big_r in 0.5f64..50.0, t in 0.0f64..5.0) {
        let p = CqecParams::nonmarkov(big_r).unwrap();
        let tr = nm_bitflip_evolve(&p, NmCoeffs::codeword(), &[0.0, t.max(1e-3)]).unwrap();
        prop_assert!((tr[1].trace() - 1.0).abs() < 1e-9);
    }
}
