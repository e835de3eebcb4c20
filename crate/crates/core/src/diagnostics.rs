//! Barren-plateau gradient-variance probe and the central finite-difference
//! oracle used to check every analytic gradient in the crate.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::pqc::{pqc_theta_derivative, PqcConfig, PqcParams, Variant};
use crate::state::StateVector;

pub const MIN_PROBE_SAMPLES: usize = 30;

/// Circuit family probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeCircuit {
    /// Four-qubit ansatz.
    Pqc(Variant),
    /// `RY(θ_L)…RY(θ_1)|0⟩` on one wire; the derivative is −sin(Σθ), whose
    /// variance under uniform angles is exactly 1/2.
    SingleQubitRy,
}

impl ProbeCircuit {
    pub fn name(self) -> &'static str {
        match self {
            ProbeCircuit::Pqc(v) => v.name(),
            ProbeCircuit::SingleQubitRy => "single_qubit_ry",
        }
    }

    fn num_angles(self, depth: usize) -> (usize, usize) {
        match self {
            ProbeCircuit::Pqc(v) => {
                let config = PqcConfig::new(v, depth);
                (config.param_count(), config.num_qubits)
            }
            ProbeCircuit::SingleQubitRy => (depth, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub depth: usize,
    pub variant: String,
    pub variance: f64,
    pub num_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub rows: Vec<ProbeRow>,
}

/// One random draw of the probe: trainable angles and encoded inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDraw {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

/// Deterministic draw `sample` at `depth`: θ and x i.i.d. uniform on
/// (−π, π), from a stream keyed by (depth, sample).
pub fn probe_draw(circuit: ProbeCircuit, depth: usize, sample: usize, seed: u64) -> ProbeDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((depth as u64) << 32) | sample as u64);
    let (num_theta, num_x) = circuit.num_angles(depth);
    let theta = (0..num_theta).map(|_| rng.random_range(-PI..PI)).collect();
    let x = (0..num_x).map(|_| rng.random_range(-PI..PI)).collect();
    ProbeDraw { theta, x }
}

/// ⟨Z_0⟩ of the probed circuit.
pub fn probe_expectation(circuit: ProbeCircuit, depth: usize, draw: &ProbeDraw) -> Result<f64> {
    match circuit {
        ProbeCircuit::Pqc(v) => {
            let config = PqcConfig::new(v, depth);
            let params = PqcParams { theta: draw.theta.clone() };
            crate::pqc::pqc_state(&config, &params, &draw.x)?.expectation_z(0)
        }
        ProbeCircuit::SingleQubitRy => {
            let mut state = StateVector::zero_state(1)?;
            for &t in &draw.theta {
                state.apply_ry(0, t)?;
            }
            state.expectation_z(0)
        }
    }
}

/// Parameter-shift ∂⟨Z_0⟩/∂θ_0 for one draw.
pub fn probe_derivative(circuit: ProbeCircuit, depth: usize, draw: &ProbeDraw) -> Result<f64> {
    match circuit {
        ProbeCircuit::Pqc(v) => {
            let config = PqcConfig::new(v, depth);
            let params = PqcParams { theta: draw.theta.clone() };
            pqc_theta_derivative(&config, &params, &draw.x, 0, 0)
        }
        ProbeCircuit::SingleQubitRy => {
            let shifted = |delta: f64| {
                let mut d = draw.clone();
                d.theta[0] += delta;
                probe_expectation(circuit, depth, &d)
            };
            Ok(0.5 * (shifted(FRAC_PI_2)? - shifted(-FRAC_PI_2)?))
        }
    }
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Per-sample derivatives at one depth, in sample order.
pub fn probe_samples(circuit: ProbeCircuit, depth: usize, num_samples: usize, seed: u64, exec: Exec) -> Result<Vec<f64>> {
    exec.map_range(num_samples, |i| probe_derivative(circuit, depth, &probe_draw(circuit, depth, i, seed)))
        .into_iter()
        .collect()
}

pub fn grad_variance_probe(circuit: ProbeCircuit, depths: &[usize], num_samples: usize, seed: u64) -> Result<ProbeResult> {
    grad_variance_probe_with(circuit, depths, num_samples, seed, Exec::default())
}

/// Variance over random (θ, x) of ∂⟨Z_0⟩/∂θ_0 at each depth.
pub fn grad_variance_probe_with(
    circuit: ProbeCircuit,
    depths: &[usize],
    num_samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<ProbeResult> {
    if num_samples < MIN_PROBE_SAMPLES {
        return Err(Error::config(
            "num_samples",
            format!("at least {MIN_PROBE_SAMPLES} samples required, got {num_samples}"),
        ));
    }
    if depths.is_empty() || depths.contains(&0) {
        return Err(Error::config("depths", "need a non-empty list of positive depths"));
    }
    let mut rows = Vec::with_capacity(depths.len());
    for &depth in depths {
        let samples = probe_samples(circuit, depth, num_samples, seed, exec)?;
        rows.push(ProbeRow {
            depth,
            variant: circuit.name().to_string(),
            variance: sample_variance(&samples),
            num_samples,
            seed,
        });
    }
    Ok(ProbeResult { rows })
}

/// Central differences `(f(p + h·e_i) − f(p − h·e_i)) / 2h`.
pub fn finite_diff<F: Fn(&[f64]) -> f64>(f: F, params: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let original = p[i];
        p[i] = original + h;
        let plus = f(&p);
        p[i] = original - h;
        let minus = f(&p);
        p[i] = original;
        if !(plus.is_finite() && minus.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
