mod common;

use std::f64::consts::PI;

use common::*;
use qffn_bert::pqc::{pqc_forward, pqc_state, PqcConfig, PqcParams, Variant, REFERENCE_DEPTHS};
use qffn_bert::state::StateVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn draw(rng: &mut ChaCha8Rng, config: &PqcConfig) -> (PqcParams, Vec<f64>) {
    let params = PqcParams::random(config, rng);
    let x = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
    (params, x)
}

#[test]
fn forward_matches_dense_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for l in REFERENCE_DEPTHS {
        for variant in [Variant::Optimized, Variant::Vanilla] {
            for _ in 0..5 {
                let config = PqcConfig::new(variant, l);
                let (params, x) = draw(&mut rng, &config);
                let got = pqc_forward(&config, &params, &x).unwrap();
                let want = dense_pqc_forward(variant == Variant::Optimized, l, &params.theta, &x);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() <= 1e-10, "{variant:?} L={l}: {g} vs {w}");
                }
                let psi = pqc_state(&config, &params, &x).unwrap();
                let dense = dense_pqc_state(variant == Variant::Optimized, l, &params.theta, &x);
                assert!(max_abs_diff(psi.amplitudes(), &dense) <= 1e-10);
            }
        }
    }
}

#[test]
fn vanilla_flip_propagates_around_ring() {
    let config = PqcConfig::new(Variant::Vanilla, 1);
    let x = [PI, 0.0, 0.0, 0.0];
    let theta = [0.0; 4];
    let want = dense_pqc_forward(false, 1, &theta, &x);
    // Value frozen from the dense oracle: the ring ends with CX(3,0),
    // which flips qubit 0 back.
    let frozen = [1.0, -1.0, -1.0, -1.0];
    for (w, f) in want.iter().zip(frozen) {
        assert!((w - f).abs() <= 1e-12);
    }
    let got = pqc_forward(&config, &PqcParams { theta: theta.to_vec() }, &x).unwrap();
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-12);
    }
}

#[test]
fn parameter_shift_equals_finite_differences() {
    let (cases, worst) = shift_vs_fd(15, 99);
    assert!(cases >= 100);
    assert!(worst <= 1e-6, "worst deviation {worst}");
}

#[test]
fn single_qubit_shift_rule_identity() {
    for k in 0..50 {
        let x = -PI + 2.0 * PI * k as f64 / 49.0;
        let f = |a: f64| {
            let mut s = StateVector::zero_state(1).unwrap();
            s.apply_ry(0, a).unwrap();
            s.expectation_z(0).unwrap()
        };
        let shift = 0.5 * (f(x + PI / 2.0) - f(x - PI / 2.0));
        assert!((shift + x.sin()).abs() <= 1e-12);
    }
}

#[test]
fn deeper_optimized_circuits_entangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for l in [2, 4, 8] {
        let config = PqcConfig::new(Variant::Optimized, l);
        let mut entangled = 0;
        for _ in 0..100 {
            let (params, x) = draw(&mut rng, &config);
            let psi = pqc_state(&config, &params, &x).unwrap();
            if (0..4).any(|q| reduced_purity(psi.amplitudes(), q) < 1.0 - 1e-9) {
                entangled += 1;
            }
        }
        assert!(entangled >= 90, "L={l}: only {entangled}/100 entangled");
    }
}
