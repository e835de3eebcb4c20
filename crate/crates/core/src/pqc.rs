//! The two ansätze and their exact parameter-shift Jacobians.
//!
//! Optimized (depth L): `RY(x_i)` encoding once, then per layer `k` the
//! alternating entangler followed by `RZ(θ)`, `RY(θ)` on every wire.
//! Vanilla (depth L): per layer `RY(x_i)` re-encoding, the fixed CNOT ring,
//! then `RY(θ)` on every wire. Readout is ⟨Z_q⟩ for each wire.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{Gate, StateVector, MAX_QUBITS};

/// Depths evaluated in the reference experiments.
pub const REFERENCE_DEPTHS: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Optimized,
    Vanilla,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Optimized => "optimized",
            Variant::Vanilla => "vanilla",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PqcConfig {
    pub variant: Variant,
    pub num_layers: usize,
    pub num_qubits: usize,
}

impl PqcConfig {
    /// A four-qubit circuit of the given variant and depth.
    pub fn new(variant: Variant, num_layers: usize) -> Self {
        Self {
            variant,
            num_layers,
            num_qubits: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(Error::config("pqc_layers", "must be at least 1"));
        }
        if !(1..=MAX_QUBITS).contains(&self.num_qubits) {
            return Err(Error::config(
                "num_qubits",
                format!("must be in 1..={MAX_QUBITS}, got {}", self.num_qubits),
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        pqc_param_count(self)
    }
}

/// Trainable angles: `2·n·L` for Optimized (RZ, RY per wire per layer),
/// `n·L` for Vanilla.
pub fn pqc_param_count(config: &PqcConfig) -> usize {
    let per_layer = match config.variant {
        Variant::Optimized => 2 * config.num_qubits,
        Variant::Vanilla => config.num_qubits,
    };
    per_layer * config.num_layers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqcParams {
    pub theta: Vec<f64>,
}

impl PqcParams {
    pub fn zeros(config: &PqcConfig) -> Self {
        Self {
            theta: vec![0.0; pqc_param_count(config)],
        }
    }

    /// i.i.d. uniform angles on (−π, π).
    pub fn random<R: Rng + ?Sized>(config: &PqcConfig, rng: &mut R) -> Self {
        let theta = (0..pqc_param_count(config))
            .map(|_| rng.random_range(-PI..PI))
            .collect();
        Self { theta }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// The CNOT ring `CX(0,1), CX(1,2), …, CX(n−1,0)` in that order.
pub fn cnot_ring(num_qubits: usize) -> Vec<Gate> {
    if num_qubits < 2 {
        return Vec::new();
    }
    (0..num_qubits)
        .map(|i| Gate::Cnot {
            control: i,
            target: (i + 1) % num_qubits,
        })
        .collect()
}

/// Fixed entangler of 0-indexed layer `layer_index`: even layers use the
/// CNOT ring, odd layers CZ between wires `i` and `i + n/2`. For four
/// qubits that is CZ(0,2), CZ(1,3).
pub fn layer_entangler(layer_index: usize, num_qubits: usize) -> Vec<Gate> {
    if layer_index.is_multiple_of(2) {
        cnot_ring(num_qubits)
    } else {
        let half = num_qubits / 2;
        (0..half).map(|i| Gate::Cz { a: i, b: i + half }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Angle {
    Input(usize),
    Theta(usize),
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Rotation { axis: Axis, qubit: usize, angle: Angle },
    Fixed(Gate),
}

/// A compiled ansatz: gate sequence with symbolic angle references.
#[derive(Debug, Clone)]
struct Circuit {
    num_qubits: usize,
    ops: Vec<Op>,
}

impl Circuit {
    fn build(config: &PqcConfig) -> Self {
        let n = config.num_qubits;
        let mut ops = Vec::new();
        let mut next_theta = 0;
        let mut theta = || {
            let a = Angle::Theta(next_theta);
            next_theta += 1;
            a
        };
        let encode = |ops: &mut Vec<Op>| {
            for q in 0..n {
                ops.push(Op::Rotation {
                    axis: Axis::Y,
                    qubit: q,
                    angle: Angle::Input(q),
                });
            }
        };
        match config.variant {
            Variant::Optimized => {
                encode(&mut ops);
                for layer in 0..config.num_layers {
                    ops.extend(layer_entangler(layer, n).into_iter().map(Op::Fixed));
                    for q in 0..n {
                        ops.push(Op::Rotation { axis: Axis::Z, qubit: q, angle: theta() });
                        ops.push(Op::Rotation { axis: Axis::Y, qubit: q, angle: theta() });
                    }
                }
            }
            Variant::Vanilla => {
                for _ in 0..config.num_layers {
                    encode(&mut ops);
                    ops.extend(cnot_ring(n).into_iter().map(Op::Fixed));
                    for q in 0..n {
                        ops.push(Op::Rotation { axis: Axis::Y, qubit: q, angle: theta() });
                    }
                }
            }
        }
        Self { num_qubits: n, ops }
    }

    /// Runs the circuit with an optional extra angle added to the op at
    /// position `shift.0`.
    fn run(&self, theta: &[f64], x: &[f64], shift: Option<(usize, f64)>) -> StateVector {
        let mut state = StateVector::zero_state(self.num_qubits).expect("validated register size");
        for (i, op) in self.ops.iter().enumerate() {
            let gate = match *op {
                Op::Fixed(g) => g,
                Op::Rotation { axis, qubit, angle } => {
                    let mut value = match angle {
                        Angle::Input(k) => x[k],
                        Angle::Theta(k) => theta[k],
                    };
                    if let Some((at, delta)) = shift {
                        if at == i {
                            value += delta;
                        }
                    }
                    match axis {
                        Axis::Y => Gate::Ry { qubit, theta: value },
                        Axis::Z => Gate::Rz { qubit, theta: value },
                    }
                }
            };
            state.apply(gate).expect("compiled gates address valid wires");
        }
        state
    }
}

fn check_shapes(config: &PqcConfig, params: &PqcParams, input: &[f64]) -> Result<()> {
    config.validate()?;
    let expected = pqc_param_count(config);
    if params.len() != expected {
        return Err(Error::shape("pqc parameters", expected, params.len()));
    }
    if input.len() != config.num_qubits {
        return Err(Error::shape("pqc input", config.num_qubits, input.len()));
    }
    Ok(())
}

/// Final state of the circuit on |0…0⟩.
pub fn pqc_state(config: &PqcConfig, params: &PqcParams, input: &[f64]) -> Result<StateVector> {
    check_shapes(config, params, input)?;
    Ok(Circuit::build(config).run(&params.theta, input, None))
}

/// Per-wire ⟨Z⟩ readout of the circuit; every entry lies in [−1, 1].
pub fn pqc_forward(config: &PqcConfig, params: &PqcParams, input: &[f64]) -> Result<Vec<f64>> {
    Ok(pqc_state(config, params, input)?.expectations_z())
}

/// Outputs plus exact Jacobians of a circuit evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PqcJacobians {
    /// Baseline readout, identical to [`pqc_forward`].
    pub outputs: Vec<f64>,
    /// `∂⟨Z_q⟩/∂θ_j`, shape `[num_qubits × P]`.
    pub jac_theta: Array2<f64>,
    /// `∂⟨Z_q⟩/∂x_i`, shape `[num_qubits × num_qubits]`.
    pub jac_x: Array2<f64>,
    /// Circuit simulations performed: one baseline plus two per shifted
    /// angle occurrence.
    pub evaluations: usize,
}

/// Parameter-shift Jacobians. Each rotation occurrence is shifted by ±π/2
/// separately; encoding angles that occur in several layers (Vanilla)
/// accumulate the contributions of every occurrence.
pub fn pqc_gradients(config: &PqcConfig, params: &PqcParams, input: &[f64]) -> Result<PqcJacobians> {
    check_shapes(config, params, input)?;
    let circuit = Circuit::build(config);
    let n = config.num_qubits;
    let outputs = circuit.run(&params.theta, input, None).expectations_z();
    let mut jac_theta = Array2::zeros((n, params.len()));
    let mut jac_x = Array2::zeros((n, n));
    let mut evaluations = 1;

    for (i, op) in circuit.ops.iter().enumerate() {
        let Op::Rotation { angle, .. } = *op else {
            continue;
        };
        let plus = circuit.run(&params.theta, input, Some((i, FRAC_PI_2))).expectations_z();
        let minus = circuit.run(&params.theta, input, Some((i, -FRAC_PI_2))).expectations_z();
        evaluations += 2;
        let mut column = match angle {
            Angle::Theta(j) => jac_theta.column_mut(j),
            Angle::Input(k) => jac_x.column_mut(k),
        };
        for q in 0..n {
            column[q] += 0.5 * (plus[q] - minus[q]);
        }
    }

    Ok(PqcJacobians {
        outputs,
        jac_theta,
        jac_x,
        evaluations,
    })
}

/// Parameter-shift derivative of ⟨Z_qubit⟩ with respect to a single
/// trainable angle. Two simulations.
pub fn pqc_theta_derivative(
    config: &PqcConfig,
    params: &PqcParams,
    input: &[f64],
    qubit: usize,
    theta_index: usize,
) -> Result<f64> {
    check_shapes(config, params, input)?;
    if qubit >= config.num_qubits {
        return Err(Error::QubitIndex {
            index: qubit,
            num_qubits: config.num_qubits,
        });
    }
    if theta_index >= params.len() {
        return Err(Error::shape("theta index", format!("< {}", params.len()), theta_index));
    }
    let circuit = Circuit::build(config);
    let position = circuit
        .ops
        .iter()
        .position(|op| matches!(op, Op::Rotation { angle: Angle::Theta(j), .. } if *j == theta_index))
        .expect("every theta index has one rotation");
    let plus = circuit.run(&params.theta, input, Some((position, FRAC_PI_2)));
    let minus = circuit.run(&params.theta, input, Some((position, -FRAC_PI_2)));
    Ok(0.5 * (plus.expectation_z(qubit)? - minus.expectation_z(qubit)?))
}
