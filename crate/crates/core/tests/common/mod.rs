//! Test-only oracles: explicit dense matrices built by Kronecker products,
//! independent of the in-place gate kernels under test.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

pub type Matrix = Vec<Vec<Complex64>>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(dim: usize) -> Matrix {
    (0..dim)
        .map(|i| (0..dim).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect())
        .collect()
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let mut out = vec![vec![c(0.0); n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

pub fn ry(theta: f64) -> Matrix {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co), c(-s)], vec![c(s), c(co)]]
}

pub fn rz(theta: f64) -> Matrix {
    vec![
        vec![Complex64::from_polar(1.0, -theta / 2.0), c(0.0)],
        vec![c(0.0), Complex64::from_polar(1.0, theta / 2.0)],
    ]
}

pub fn pauli_z() -> Matrix {
    vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(-1.0)]]
}

fn projector(bit: usize) -> Matrix {
    if bit == 0 {
        vec![vec![c(1.0), c(0.0)], vec![c(0.0), c(0.0)]]
    } else {
        vec![vec![c(0.0), c(0.0)], vec![c(0.0), c(1.0)]]
    }
}

fn pauli_x() -> Matrix {
    vec![vec![c(0.0), c(1.0)], vec![c(1.0), c(0.0)]]
}

/// `⊗_{k = n−1..0} ops[k]`: qubit 0 is the rightmost (least significant)
/// factor.
pub fn tensor(ops: &[Matrix]) -> Matrix {
    let mut out = vec![vec![c(1.0)]];
    for op in ops.iter().rev() {
        out = kron(&out, op);
    }
    out
}

pub fn single(n: usize, qubit: usize, gate: Matrix) -> Matrix {
    let ops: Vec<Matrix> = (0..n).map(|k| if k == qubit { gate.clone() } else { identity(2) }).collect();
    tensor(&ops)
}

/// `|0⟩⟨0|_c ⊗ I + |1⟩⟨1|_c ⊗ X_t`.
pub fn cnot(n: usize, control: usize, target: usize) -> Matrix {
    let mut keep: Vec<Matrix> = vec![identity(2); n];
    keep[control] = projector(0);
    let mut flip: Vec<Matrix> = vec![identity(2); n];
    flip[control] = projector(1);
    flip[target] = pauli_x();
    add(&tensor(&keep), &tensor(&flip))
}

/// `I − 2·|11⟩⟨11|_{ab}`.
pub fn cz(n: usize, a: usize, b: usize) -> Matrix {
    let mut both: Vec<Matrix> = vec![identity(2); n];
    both[a] = projector(1);
    both[b] = projector(1);
    let p = tensor(&both);
    let id = identity(1 << n);
    id.iter()
        .zip(&p)
        .map(|(ri, rp)| ri.iter().zip(rp).map(|(x, y)| x - y * 2.0).collect())
        .collect()
}

fn add(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn expectation(op: &Matrix, state: &[Complex64]) -> Complex64 {
    let applied = matvec(op, state);
    state.iter().zip(&applied).map(|(s, a)| s.conj() * a).sum()
}

pub fn z_observable(n: usize, qubit: usize) -> Matrix {
    single(n, qubit, pauli_z())
}

pub fn random_state<R: Rng>(n: usize, rng: &mut R) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..1 << n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Dense-unitary re-derivation of the two four-qubit ansätze, written
/// from their textual description.
pub fn dense_pqc_state(optimized: bool, layers: usize, theta: &[f64], x: &[f64]) -> Vec<Complex64> {
    let n = 4;
    let mut u = identity(16);
    let mut push = |g: Matrix| u = matmul(&g, &u);
    let ring = |push: &mut dyn FnMut(Matrix)| {
        push(cnot(n, 0, 1));
        push(cnot(n, 1, 2));
        push(cnot(n, 2, 3));
        push(cnot(n, 3, 0));
    };
    let mut t = theta.iter();
    if optimized {
        for (q, &xi) in x.iter().enumerate() {
            push(single(n, q, ry(xi)));
        }
        for layer in 0..layers {
            if layer % 2 == 0 {
                ring(&mut push);
            } else {
                push(cz(n, 0, 2));
                push(cz(n, 1, 3));
            }
            for q in 0..n {
                push(single(n, q, rz(*t.next().unwrap())));
                push(single(n, q, ry(*t.next().unwrap())));
            }
        }
    } else {
        for _ in 0..layers {
            for (q, &xi) in x.iter().enumerate() {
                push(single(n, q, ry(xi)));
            }
            ring(&mut push);
            for q in 0..n {
                push(single(n, q, ry(*t.next().unwrap())));
            }
        }
    }
    assert!(t.next().is_none(), "unused angles");
    let mut zero = vec![c(0.0); 16];
    zero[0] = c(1.0);
    matvec(&u, &zero)
}

pub fn dense_pqc_forward(optimized: bool, layers: usize, theta: &[f64], x: &[f64]) -> Vec<f64> {
    let psi = dense_pqc_state(optimized, layers, theta, x);
    (0..4).map(|q| expectation(&z_observable(4, q), &psi).re).collect()
}

/// `tr(ρ_q²)` of the reduced state of one wire.
pub fn reduced_purity(state: &[Complex64], qubit: usize) -> f64 {
    let mut rho = [[c(0.0); 2]; 2];
    for (i, ai) in state.iter().enumerate() {
        for (j, aj) in state.iter().enumerate() {
            if i & !(1 << qubit) == j & !(1 << qubit) {
                rho[(i >> qubit) & 1][(j >> qubit) & 1] += ai * aj.conj();
            }
        }
    }
    let mut purity = 0.0;
    for r in &rho {
        for v in r {
            purity += v.norm_sqr();
        }
    }
    purity
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst relative error (floor 1e-6) between backprop and central
/// differences with step `h` over every model parameter.
pub fn model_gradcheck(
    model: &qffn_bert::encoder::EncoderModel,
    batch: &[qffn_bert::data::EncodedExample],
    dropout_seed: Option<u64>,
    h: f64,
) -> f64 {
    use qffn_bert::{Exec, ParamSet};
    let refs: Vec<_> = batch.iter().collect();
    let (_, grads) = model.loss_and_gradients(&refs, dropout_seed, Exec::Sequential).unwrap();
    let analytic = grads.flatten();
    let flat = model.flatten();
    let mut probe = model.clone();
    let mut loss_at = |p: &[f64]| {
        probe.assign_flat(p);
        match dropout_seed {
            None => probe.loss(&refs, Exec::Sequential).unwrap(),
            Some(_) => probe.loss_and_gradients(&refs, dropout_seed, Exec::Sequential).unwrap().0,
        }
    };
    let mut worst: f64 = 0.0;
    let mut p = flat.clone();
    for i in 0..flat.len() {
        p[i] = flat[i] + h;
        let up = loss_at(&p);
        p[i] = flat[i] - h;
        let down = loss_at(&p);
        p[i] = flat[i];
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h), 1e-6));
    }
    worst
}

/// Max absolute gap between parameter-shift and central-difference
/// Jacobians (θ and x) over `rounds` draws of every (variant, depth).
/// Returns (cases, worst).
pub fn shift_vs_fd(rounds: usize, seed: u64) -> (usize, f64) {
    use qffn_bert::diagnostics::finite_diff;
    use qffn_bert::pqc::{pqc_forward, pqc_gradients, PqcConfig, PqcParams, Variant, REFERENCE_DEPTHS};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut cases, mut worst) = (0, 0.0f64);
    for _ in 0..rounds {
        for l in REFERENCE_DEPTHS {
            for variant in [Variant::Optimized, Variant::Vanilla] {
                let config = PqcConfig::new(variant, l);
                let params = PqcParams::random(&config, &mut rng);
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
                let jac = pqc_gradients(&config, &params, &x).unwrap();
                for q in 0..4 {
                    let f_theta = |t: &[f64]| pqc_forward(&config, &PqcParams { theta: t.to_vec() }, &x).unwrap()[q];
                    for (j, d) in finite_diff(f_theta, &params.theta, 1e-5).unwrap().iter().enumerate() {
                        worst = worst.max((jac.jac_theta[[q, j]] - d).abs());
                    }
                    let f_x = |xs: &[f64]| pqc_forward(&config, &params, xs).unwrap()[q];
                    for (i, d) in finite_diff(f_x, &x, 1e-5).unwrap().iter().enumerate() {
                        worst = worst.max((jac.jac_x[[q, i]] - d).abs());
                    }
                }
                cases += 1;
            }
        }
    }
    (cases, worst)
}
