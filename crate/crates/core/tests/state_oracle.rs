mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use qffn_bert::state::{Gate, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_gate<R: Rng>(n: usize, rng: &mut R) -> Gate {
    let a = rng.random_range(0..n);
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let theta = rng.random_range(-10.0..10.0);
    match rng.random_range(0..4) {
        0 => Gate::Ry { qubit: a, theta },
        1 => Gate::Rz { qubit: a, theta },
        2 => Gate::Cnot { control: a, target: b },
        _ => Gate::Cz { a, b },
    }
}

fn dense(n: usize, gate: Gate) -> Matrix {
    match gate {
        Gate::Ry { qubit, theta } => single(n, qubit, ry(theta)),
        Gate::Rz { qubit, theta } => single(n, qubit, rz(theta)),
        Gate::Cnot { control, target } => cnot(n, control, target),
        Gate::Cz { a, b } => cz(n, a, b),
    }
}

#[test]
fn every_gate_matches_dense_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..400 {
        let n = 2 + case % 3;
        let amps = random_state(n, &mut rng);
        let gate = random_gate(n, &mut rng);
        let mut state = StateVector::from_amplitudes(amps.clone()).unwrap();
        state.apply(gate).unwrap();
        let expected = matvec(&dense(n, gate), &amps);
        worst = worst.max(max_abs_diff(state.amplitudes(), &expected));
    }
    assert!(worst <= 1e-12, "worst deviation {worst}");
}

#[test]
fn single_qubit_register_gates() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let amps = random_state(1, &mut rng);
        let theta = rng.random_range(-7.0..7.0);
        for (gate, m) in [
            (Gate::Ry { qubit: 0, theta }, ry(theta)),
            (Gate::Rz { qubit: 0, theta }, rz(theta)),
        ] {
            let mut s = StateVector::from_amplitudes(amps.clone()).unwrap();
            s.apply(gate).unwrap();
            assert!(max_abs_diff(s.amplitudes(), &matvec(&m, &amps)) <= 1e-12);
        }
    }
}

#[test]
fn norm_survives_a_thousand_gates() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in [1, 3, 4, 8] {
        let mut state = StateVector::zero_state(n).unwrap();
        for _ in 0..1000 {
            let gate = if n == 1 {
                let theta = rng.random_range(-10.0..10.0);
                if rng.random() { Gate::Ry { qubit: 0, theta } } else { Gate::Rz { qubit: 0, theta } }
            } else {
                random_gate(n, &mut rng)
            };
            state.apply(gate).unwrap();
        }
        assert!((state.norm_sqr() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn expectation_matches_diagonal_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let amps = random_state(4, &mut rng);
        let s = StateVector::from_amplitudes(amps.clone()).unwrap();
        for q in 0..4 {
            let e = expectation(&z_observable(4, q), &amps);
            assert!(e.im.abs() <= 1e-12);
            let got = s.expectation_z(q).unwrap();
            assert!((got - e.re).abs() <= 1e-12);
            assert!((-1.0..=1.0).contains(&got));
        }
    }
}

#[test]
fn rz_phase_becomes_measurable_after_ry() {
    let plus = vec![c(std::f64::consts::FRAC_1_SQRT_2), c(std::f64::consts::FRAC_1_SQRT_2)];
    let run = |theta: f64| {
        let mut s = StateVector::from_amplitudes(plus.clone()).unwrap();
        s.apply_rz(0, theta).unwrap();
        s.apply_ry(0, std::f64::consts::FRAC_PI_2).unwrap();
        s
    };
    let oracle = |theta: f64| matvec(&ry(std::f64::consts::FRAC_PI_2), &matvec(&rz(theta), &plus));
    let (a, b) = (run(0.0), run(std::f64::consts::PI));
    assert!(max_abs_diff(a.amplitudes(), &oracle(0.0)) <= 1e-12);
    assert!(max_abs_diff(b.amplitudes(), &oracle(std::f64::consts::PI)) <= 1e-12);
    // |+⟩ rotates to |1⟩; RZ(π)|+⟩ ∝ |−⟩ rotates to |0⟩.
    assert!((a.expectation_z(0).unwrap() + 1.0).abs() <= 1e-12);
    assert!((b.expectation_z(0).unwrap() - 1.0).abs() <= 1e-12);
}

fn amps_strategy(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1 << n)
        .prop_filter("non-zero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

proptest! {
    #[test]
    fn ry_angles_add(amps in amps_strategy(3), q in 0usize..3, t1 in -7.0f64..7.0, t2 in -7.0f64..7.0) {
        let mut a = StateVector::from_amplitudes(amps.clone()).unwrap();
        a.apply_ry(q, t1).unwrap();
        a.apply_ry(q, t2).unwrap();
        let mut b = StateVector::from_amplitudes(amps).unwrap();
        b.apply_ry(q, t1 + t2).unwrap();
        prop_assert!(max_abs_diff(a.amplitudes(), b.amplitudes()) <= 1e-12);
    }

    #[test]
    fn cz_is_symmetric(amps in amps_strategy(3)) {
        let mut a = StateVector::from_amplitudes(amps.clone()).unwrap();
        a.apply_cz(0, 2).unwrap();
        let mut b = StateVector::from_amplitudes(amps).unwrap();
        b.apply_cz(2, 0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn readout_is_real_and_bounded(amps in amps_strategy(4)) {
        let s = StateVector::from_amplitudes(amps).unwrap();
        for q in 0..4 {
            let e = s.expectation_z(q).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&e));
        }
    }
}
