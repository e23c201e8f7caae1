use oqslab::monotones::*;
use oqslab::qcore::*;
use oqslab::rng::seeded;
use oqslab::Error;
use proptest::prelude::*;

const D3: [usize; 3] = [2, 2, 2];

fn product(rng: &mut oqslab::rng::Rng) -> PureState {
    let (a, b, cc) = (random_pure(2, rng), random_pure(2, rng), random_pure(2, rng));
    PureState::new(kron_vec(&kron_vec(&a, &b), &cc), D3.to_vec()).unwrap()
}

/// Cayley hyperdeterminant of a 2x2x2 array.
fn hyperdet(psi: &PureState) -> C64 {
    let a = |i: usize, j: usize, k: usize| psi.amplitudes()[(i << 2) | (j << 1) | k];
    let d1 = a(0, 0, 0).powi(2) * a(1, 1, 1).powi(2)
        + a(0, 0, 1).powi(2) * a(1, 1, 0).powi(2)
        + a(0, 1, 0).powi(2) * a(1, 0, 1).powi(2)
        + a(1, 0, 0).powi(2) * a(0, 1, 1).powi(2);
    let d2 = a(0, 0, 0) * a(1, 1, 1) * a(0, 1, 1) * a(1, 0, 0)
        + a(0, 0, 0) * a(1, 1, 1) * a(1, 0, 1) * a(0, 1, 0)
        + a(0, 0, 0) * a(1, 1, 1) * a(1, 1, 0) * a(0, 0, 1)
        + a(0, 1, 1) * a(1, 0, 0) * a(1, 0, 1) * a(0, 1, 0)
        + a(0, 1, 1) * a(1, 0, 0) * a(1, 1, 0) * a(0, 0, 1)
        + a(1, 0, 1) * a(0, 1, 0) * a(1, 1, 0) * a(0, 0, 1);
    let d3 = a(0, 0, 0) * a(1, 1, 0) * a(1, 0, 1) * a(0, 1, 1) + a(1, 1, 1) * a(0, 0, 1) * a(0, 1, 0) * a(1, 0, 0);
    d1 - d2 * 2.0 + d3 * 4.0
}

/// Local purity directly from amplitudes: Σ |Σ_rest a_{i,rest} ā_{j,rest}|².
fn purity_oracle(psi: &PureState, party: usize) -> f64 {
    let a = psi.amplitudes();
    let bit = |idx: usize| (idx >> (2 - party)) & 1;
    let rest = |idx: usize| idx & !(1 << (2 - party));
    let mut r = [[ZERO; 2]; 2];
    for x in 0..8 {
        for y in 0..8 {
            if rest(x) == rest(y) {
                r[bit(x)][bit(y)] += a[x] * a[y].conj();
            }
        }
    }
    r.iter().flatten().map(|z| z.norm_sqr()).sum()
}

#[test]
fn product_state_invariants() {
    let mut rng = seeded(1);
    let p0 = PureState::new(ket(&[0, 0, 0]), D3.to_vec()).unwrap();
    for psi in [p0, product(&mut rng)] {
        let inv = eval_three_qubit_invariants(&psi).unwrap();
        for v in [inv.i1, inv.i2, inv.i3, inv.i4] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(inv.i5.abs() < 1e-14);
        assert!(phi_abc(&psi).unwrap().abs() < 1e-10);
    }
}

#[test]
fn ghz_invariants() {
    let g = ghz();
    let inv = eval_three_qubit_invariants(&g).unwrap();
    for v in [inv.i1, inv.i2, inv.i3] {
        assert!((v - 0.5).abs() < 1e-14);
    }
    assert!((inv.i5 - 0.25).abs() < 1e-14);
    assert!((three_tangle(&g).unwrap() - 1.0).abs() < 1e-14);
    assert!((inv.i4 - 0.25).abs() < 1e-14);
    assert!((hyperdet(&g).norm() - 0.25).abs() < 1e-15);
}

#[test]
fn w_state_has_no_three_tangle() {
    let w = w_state();
    assert!(three_tangle(&w).unwrap() < 1e-14);
    let inv = eval_three_qubit_invariants(&w).unwrap();
    assert!((inv.i3 - 5.0 / 9.0).abs() < 1e-14);
}

#[test]
fn phi_regression_values() {
    // GHZ: X = diag(2,1,1,2), Tr ρ_AB² = 1/2 → 69 − 18 − 3/2
    assert!((phi_abc(&ghz()).unwrap() - 49.5).abs() < 1e-12);
    // W: spectrum of X is {2, 2/3, 7/3, 1}, Tr ρ_AB² = 5/9 → 69 − 22 − 5/3
    assert!((phi_abc(&w_state()).unwrap() - 136.0 / 3.0).abs() < 1e-12);
}

#[test]
fn tangle_contraction_matches_hyperdeterminant() {
    let mut rng = seeded(2);
    for _ in 0..100 {
        let psi = PureState::random(D3.to_vec(), &mut rng);
        let t = three_tangle(&psi).unwrap();
        assert!((t - 4.0 * hyperdet(&psi).norm()).abs() < 1e-13);
        let inv = eval_three_qubit_invariants(&psi).unwrap();
        assert!((inv.i5 - 4.0 * hyperdet(&psi).norm_sqr()).abs() < 1e-13);
    }
}

#[test]
fn purities_match_amplitude_oracle() {
    let mut rng = seeded(3);
    for _ in 0..20 {
        let psi = PureState::random(D3.to_vec(), &mut rng);
        let inv = eval_three_qubit_invariants(&psi).unwrap();
        assert!((inv.i3 - purity_oracle(&psi, 0)).abs() < 1e-13);
        assert!((inv.i2 - purity_oracle(&psi, 1)).abs() < 1e-13);
        assert!((inv.i1 - purity_oracle(&psi, 2)).abs() < 1e-13);
    }
}

#[test]
fn i4_forms_agree() {
    let mut rng = seeded(4);
    for _ in 0..100 {
        let psi = PureState::random(D3.to_vec(), &mut rng);
        let f = i4_forms(&psi).unwrap();
        assert!((f[0] - f[1]).abs() < 1e-12 && (f[0] - f[2]).abs() < 1e-12);
    }
}

#[test]
fn trace_x_cubed_identity() {
    let mut rng = seeded(5);
    for _ in 0..100 {
        let psi = PureState::random(D3.to_vec(), &mut rng);
        let r = psi.density();
        let ra = partial_trace(&r, &D3, &[0]).unwrap();
        let rb = partial_trace(&r, &D3, &[1]).unwrap();
        let rc = partial_trace(&r, &D3, &[2]).unwrap();
        let t3 = |m: &DensityMatrix| (m.mat() * m.mat()).trace_product(m.mat()).re;
        let inv = eval_three_qubit_invariants(&psi).unwrap();
        let rhs = 12.0 * inv.i4 + 16.0 * (t3(&ra) + t3(&rb) + t3(&rc)) + 3.0 * ra.purity() + 3.0 * rb.purity();
        assert!((trace_x_cubed(&psi).unwrap() - rhs).abs() < 1e-11);
    }
}

#[test]
fn invariants_reject_wrong_dims() {
    let psi = PureState::new(basis(4, 0), vec![2, 2]).unwrap();
    assert!(matches!(phi_abc(&psi), Err(Error::Dimension(_))));
    assert!(PureState::new(basis(4, 0), vec![2, 3]).is_err());
}

#[test]
fn trace_satisfies_everything_with_equality() {
    let f = StateFunction::trace();
    let mut rng = seeded(6);
    for _ in 0..20 {
        let rho = PureState::random(D3.to_vec(), &mut rng).density();
        let eps = LocalHermitian::random(&D3, &mut rng);
        assert!(check_lu_invariance(&f, &rho, &D3, &eps, 1e-3).unwrap() <= 1e-12);
        assert!(check_measurement_monotonicity(&f, &rho, &D3, &eps, 0.05).unwrap().abs() <= 1e-12);
        let mixed = random_density(8, &mut rng);
        let sigma = random_traceless(&mixed, 1e-3, &mut rng);
        assert!(check_convexity(&f, &mixed, &sigma, 1e-3).unwrap().abs() <= 1e-12);
    }
}

#[test]
fn purity_unchanged_by_remote_unitaries() {
    let f = StateFunction::purity(D3.to_vec(), 0);
    let mut rng = seeded(7);
    for _ in 0..20 {
        let rho = PureState::random(D3.to_vec(), &mut rng).density();
        let eps = LocalHermitian::new(1, random_hermitian(2, &mut rng)).unwrap();
        assert!(check_lu_invariance(&f, &rho, &D3, &eps, 1e-3).unwrap() <= 1e-10);
    }
}

#[test]
fn richardson_ratio_is_two() {
    let mut rng = seeded(8);
    for f in [StateFunction::purity(D3.to_vec(), 0), StateFunction::entropy(D3.to_vec(), 0), StateFunction::phi_abc()] {
        let mut seen = 0;
        for _ in 0..50 {
            let rho = PureState::random(D3.to_vec(), &mut rng).density();
            let eps = LocalHermitian::random(&D3, &mut rng);
            if let Some(q) = lu_richardson_ratio(&f, &rho, &D3, &eps, 1e-3).unwrap() {
                assert!((1.5..=2.5).contains(&q), "{} ratio {q}", f.name);
                seen += 1;
            }
        }
        assert!(seen > 0);
    }
}

#[test]
fn entropy_lu_on_two_qubits() {
    let dims = [2usize, 2];
    let f = StateFunction::entropy(dims.to_vec(), 0);
    let mut rng = seeded(9);
    let rho = DensityMatrix::pure(&random_pure(4, &mut rng));
    for _ in 0..50 {
        let eps = LocalHermitian::random(&dims, &mut rng);
        let r1 = check_lu_invariance(&f, &rho, &dims, &eps, 1e-3).unwrap();
        assert!(r1 < 1e-9);
        let lin = lu_linear_residual(&f, &rho, &dims, &eps, 1e-3).unwrap();
        assert!(lin < 1e-2);
    }
}

#[test]
fn purity_never_decreases_on_average() {
    let f = StateFunction::purity(D3.to_vec(), 0);
    let mut rng = seeded(10);
    for _ in 0..200 {
        let rho = PureState::random(D3.to_vec(), &mut rng).density();
        let eps = LocalHermitian::random(&D3, &mut rng);
        let d = check_measurement_monotonicity(&f, &rho, &D3, &eps, 0.1).unwrap();
        assert!(d >= -1e-10);
    }
}

#[test]
fn bell_entropy_second_order() {
    let dims = [2usize, 2];
    let f = StateFunction::entropy(dims.to_vec(), 0);
    let rho = DensityMatrix::pure(&[ONE, ZERO, ZERO, ONE]);
    let eps = LocalHermitian::new(0, pauli_z()).unwrap();
    let h = 1e-3;
    let delta = check_measurement_monotonicity(&f, &rho, &dims, &eps, h).unwrap();
    assert!(delta <= 0.0);

    // second-order term evaluated on the complementary party:
    // −Tr_B |ρ_B^{-1/2} (Tr{ερ}ρ − ½{ε,ρ})_B|²
    let e = eps.embed(&dims).unwrap();
    let te = rho.expect(&e).re;
    let delta_op = &rho.mat().scale_re(te) - &e.anticommutator(rho.mat()).scale_re(0.5);
    let db = partial_trace_mat(&delta_op, &dims, &[1]).unwrap();
    let rb = partial_trace(&rho, &dims, &[1]).unwrap();
    let inv = inv_sqrtm_psd(rb.mat(), 1e-12).unwrap();
    let w = &inv * &db;
    let predicted = -(&w.adjoint() * &w).trace().re;
    assert!((predicted + 1.0).abs() < 1e-12);
    let ratio = delta / (h * h * predicted);
    assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
    // the Taylor expansion carries ½ on the Hessian term
    assert!((delta - 0.5 * h * h * predicted).abs() < 1e-10);
    // exact: binary entropy of (1 ± h)/2
    let hb = |p: f64| -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
    assert!((delta - (hb((1.0 + h) / 2.0) - 2f64.ln())).abs() < 1e-14);
}

#[test]
fn convexity_signs() {
    let mut rng = seeded(11);
    let pur = StateFunction::purity(D3.to_vec(), 0);
    let ent = StateFunction::entropy(D3.to_vec(), 0);
    for _ in 0..30 {
        let mixed = random_density(8, &mut rng);
        let sigma = random_traceless(&mixed, 1e-3, &mut rng);
        let sp = check_convexity(&pur, &mixed, &sigma, 1e-3).unwrap();
        let se = check_convexity(&ent, &mixed, &sigma, 1e-3).unwrap();
        assert!(sp >= -1e-10);
        assert!(se <= 1e-10);
        assert!(!convexity_ok(pur.direction, sp, 0.0) || sp.abs() < 1e-14);
        assert!(!convexity_ok(ent.direction, se, 0.0) || se.abs() < 1e-14);
    }
}

#[test]
fn probes_are_rejected_when_too_large() {
    let f = StateFunction::trace();
    let rho = DensityMatrix::maximally_mixed(8);
    let eps = LocalHermitian::new(0, pauli_z()).unwrap();
    assert!(matches!(check_measurement_monotonicity(&f, &rho, &D3, &eps, 0.5), Err(Error::InvalidInput(_))));
    let pure = DensityMatrix::pure(&ket(&[0, 0, 0]));
    let sigma = on_qubit(&pauli_z(), 0, 3).scale_re(-1.0);
    assert!(check_convexity(&f, &pure, &sigma, 0.1).is_err());
}

#[test]
fn lu_equiv_identity() {
    let mut rng = seeded(12);
    for f in [StateFunction::purity(D3.to_vec(), 0), StateFunction::entropy(D3.to_vec(), 0), StateFunction::phi_abc()] {
        for _ in 0..20 {
            let rho = random_density(8, &mut rng);
            let eps = LocalHermitian::random(&D3, &mut rng);
            let (lhs, rhs) = lu_equiv_terms(&f, &rho, &D3, &eps, 1e-3).unwrap();
            assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0), "{}: {lhs} vs {rhs}", f.name);
        }
    }
}

#[test]
fn phi_is_monotone_under_weak_measurements() {
    let f = StateFunction::phi_abc();
    let mut rng = seeded(13);
    for _ in 0..100 {
        let psi = PureState::random(D3.to_vec(), &mut rng);
        let rho = psi.density();
        assert!(phi_abc(&psi).unwrap() >= -1e-9);
        for _ in 0..20 {
            let eps = LocalHermitian::random(&D3, &mut rng);
            let h = 0.1 * rand::Rng::random_range(&mut rng, 0.05..1.0);
            let d = check_measurement_monotonicity(&f, &rho, &D3, &eps, h).unwrap();
            assert!(d <= 1e-9, "φ increased by {d}");
        }
    }
}

#[test]
fn run_checks_summary() {
    let count_fail = |name: &str, cond: &str| {
        let f = StateFunction::builtin(name).unwrap();
        run_checks(&f, 30, 99).unwrap().iter().filter(|r| r.condition == cond && !r.pass).count()
    };
    for name in ["trace", "purity", "entropy", "phi_abc"] {
        assert_eq!(count_fail(name, "lu_invariance"), 0, "{name}");
        assert_eq!(count_fail(name, "lu_richardson"), 0, "{name}");
        assert_eq!(count_fail(name, "measurement"), 0, "{name}");
    }
    assert_eq!(count_fail("trace", "convexity"), 0);
    assert_eq!(count_fail("purity", "convexity"), 30);
    assert_eq!(count_fail("entropy", "convexity"), 30);
    assert!(StateFunction::builtin("nope").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_are_lu_invariant(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let psi = PureState::random(D3.to_vec(), &mut rng);
        let moved = random_local_unitary(&psi, &mut rng);
        let a = eval_three_qubit_invariants(&psi).unwrap();
        let b = eval_three_qubit_invariants(&moved).unwrap();
        for (x, y) in [(a.i1, b.i1), (a.i2, b.i2), (a.i3, b.i3), (a.i4, b.i4), (a.i5, b.i5)] {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((phi_abc(&psi).unwrap() - phi_abc(&moved).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn phi_vanishes_on_products(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        prop_assert!(phi_abc(&product(&mut rng)).unwrap().abs() <= 1e-10);
    }
}
