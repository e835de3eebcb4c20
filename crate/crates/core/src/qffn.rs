//! Quantum feedforward block: hidden → 4 projection, PQC, 4 → hidden
//! projection, internal residual. Only the [CLS] row goes through the
//! quantum branch; every other row is returned unchanged.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{gaussian, slice_mut, view, ParamSet, TensorView};
use crate::pqc::{pqc_forward, pqc_gradients, pqc_param_count, PqcConfig, PqcParams, Variant};

/// Standard deviation of the classical projection weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct QffnBlock {
    /// `[quantum_dim × hidden]`
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    /// `[hidden × quantum_dim]`
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
    pub pqc_config: PqcConfig,
    pub pqc_params: PqcParams,
    /// Adds the block input back onto the branch output. Off for the
    /// vanilla ablation.
    pub residual: bool,
}

/// Saved activations of one [CLS] row for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct QffnCache {
    cls: usize,
    h: Array1<f64>,
    z: Array1<f64>,
    jac_theta: Array2<f64>,
    jac_x: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct QffnGradients {
    /// Parameter gradients in the block's own layout.
    pub params: QffnBlock,
    /// Gradient with respect to the block input.
    pub input: Array2<f64>,
}

/// Trainable scalars of a block: `(h+1)·q` in, `(q+1)·h` out, plus PQC angles.
pub fn qffn_param_count(hidden: usize, pqc_config: &PqcConfig) -> usize {
    let q = pqc_config.num_qubits;
    (hidden + 1) * q + (q + 1) * hidden + pqc_param_count(pqc_config)
}

/// Two-layer feedforward network `hidden → intermediate → hidden`.
pub fn classical_ffn_param_count(hidden: usize, intermediate: usize) -> usize {
    (hidden + 1) * intermediate + (intermediate + 1) * hidden
}

impl QffnBlock {
    pub fn new<R: Rng + ?Sized>(
        hidden: usize,
        pqc_config: PqcConfig,
        residual: bool,
        rng: &mut R,
    ) -> Result<Self> {
        pqc_config.validate()?;
        if hidden == 0 {
            return Err(Error::config("hidden", "must be positive"));
        }
        let q = pqc_config.num_qubits;
        Ok(Self {
            w_in: gaussian((q, hidden), INIT_STD, rng),
            b_in: Array1::zeros(q),
            w_out: gaussian((hidden, q), INIT_STD, rng),
            b_out: Array1::zeros(hidden),
            pqc_params: PqcParams::random(&pqc_config, rng),
            pqc_config,
            residual,
        })
    }

    /// Optimized ansatz with the internal residual.
    pub fn optimized<R: Rng + ?Sized>(hidden: usize, layers: usize, rng: &mut R) -> Result<Self> {
        Self::new(hidden, PqcConfig::new(Variant::Optimized, layers), true, rng)
    }

    /// Ablation block: vanilla ansatz, no internal residual.
    pub fn vanilla<R: Rng + ?Sized>(hidden: usize, layers: usize, rng: &mut R) -> Result<Self> {
        Self::new(hidden, PqcConfig::new(Variant::Vanilla, layers), false, rng)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_in: Array2::zeros(self.w_in.raw_dim()),
            b_in: Array1::zeros(self.b_in.len()),
            w_out: Array2::zeros(self.w_out.raw_dim()),
            b_out: Array1::zeros(self.b_out.len()),
            pqc_config: self.pqc_config,
            pqc_params: PqcParams::zeros(&self.pqc_config),
            residual: self.residual,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn quantum_dim(&self) -> usize {
        self.pqc_config.num_qubits
    }

    fn check(&self, hidden: &Array2<f64>, cls: usize) -> Result<()> {
        if hidden.ncols() != self.hidden_dim() {
            return Err(Error::shape("qffn input width", self.hidden_dim(), hidden.ncols()));
        }
        if cls >= hidden.nrows() {
            return Err(Error::shape(
                "qffn cls index",
                format!("< {}", hidden.nrows()),
                cls,
            ));
        }
        Ok(())
    }

    fn project_in(&self, h: ArrayView1<f64>) -> Vec<f64> {
        (self.w_in.dot(&h) + &self.b_in).to_vec()
    }

    fn emit(&self, output: &mut Array2<f64>, cls: usize, z: &Array1<f64>) {
        let branch = self.w_out.dot(z) + &self.b_out;
        let mut row = output.row_mut(cls);
        if self.residual {
            row += &branch;
        } else {
            row.assign(&branch);
        }
    }

    pub fn forward(&self, hidden: &Array2<f64>, cls: usize) -> Result<Array2<f64>> {
        self.check(hidden, cls)?;
        let x = self.project_in(hidden.row(cls));
        let z = Array1::from(pqc_forward(&self.pqc_config, &self.pqc_params, &x)?);
        let mut output = hidden.clone();
        self.emit(&mut output, cls, &z);
        Ok(output)
    }

    pub(crate) fn forward_train(&self, hidden: &Array2<f64>, cls: usize) -> Result<(Array2<f64>, QffnCache)> {
        self.check(hidden, cls)?;
        let h = hidden.row(cls).to_owned();
        let x = self.project_in(h.view());
        let jac = pqc_gradients(&self.pqc_config, &self.pqc_params, &x)?;
        let z = Array1::from(jac.outputs);
        let mut output = hidden.clone();
        self.emit(&mut output, cls, &z);
        Ok((
            output,
            QffnCache {
                cls,
                h,
                z,
                jac_theta: jac.jac_theta,
                jac_x: jac.jac_x,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient.
    pub(crate) fn backward_cached(
        &self,
        cache: &QffnCache,
        upstream: &Array2<f64>,
        grads: &mut QffnBlock,
    ) -> Array2<f64> {
        let g = upstream.row(cache.cls);
        grads.b_out += &g;
        grads
            .w_out
            .scaled_add(1.0, &outer(g, cache.z.view()));
        let dz = self.w_out.t().dot(&g);
        let dtheta = cache.jac_theta.t().dot(&dz);
        for (t, d) in grads.pqc_params.theta.iter_mut().zip(dtheta.iter()) {
            *t += d;
        }
        let dx = cache.jac_x.t().dot(&dz);
        grads.b_in += &dx;
        grads.w_in.scaled_add(1.0, &outer(dx.view(), cache.h.view()));
        let mut dh = self.w_in.t().dot(&dx);
        if self.residual {
            dh += &g;
        }
        let mut input = upstream.clone();
        input.row_mut(cache.cls).assign(&dh);
        input
    }

    pub fn backward(&self, hidden: &Array2<f64>, cls: usize, upstream: &Array2<f64>) -> Result<QffnGradients> {
        if upstream.dim() != hidden.dim() {
            return Err(Error::shape(
                "qffn upstream gradient",
                format!("{:?}", hidden.dim()),
                format!("{:?}", upstream.dim()),
            ));
        }
        let (_, cache) = self.forward_train(hidden, cls)?;
        let mut params = self.zeros_like();
        let input = self.backward_cached(&cache, upstream, &mut params);
        Ok(QffnGradients { params, input })
    }
}

pub(crate) fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

impl ParamSet for QffnBlock {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        out.push(view(prefix, "w_in", &self.w_in));
        out.push(view(prefix, "b_in", &self.b_in));
        out.push(view(prefix, "w_out", &self.w_out));
        out.push(view(prefix, "b_out", &self.b_out));
        out.push(TensorView {
            name: crate::params::join(prefix, "theta"),
            shape: vec![self.pqc_params.len()],
            data: &self.pqc_params.theta,
        });
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(slice_mut(&mut self.w_in));
        out.push(slice_mut(&mut self.b_in));
        out.push(slice_mut(&mut self.w_out));
        out.push(slice_mut(&mut self.b_out));
        out.push(&mut self.pqc_params.theta);
    }
}
