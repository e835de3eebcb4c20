//! Encoder building blocks operating on one sequence (`[seq × hidden]`).
//! Each layer has a forward that returns a cache and a backward that
//! accumulates parameter gradients into a same-shaped container.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use crate::params::{gaussian, join, slice_mut, view, ParamSet, TensorView};
use crate::qffn::INIT_STD;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `[out × in]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: gaussian((output, input), INIT_STD, rng),
            bias: Array1::zeros(output),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.len()),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grads: &mut Linear) -> Array2<f64> {
        grads.weight += &dy.t().dot(x);
        grads.bias += &dy.sum_axis(Axis(0));
        dy.dot(&self.weight)
    }
}

impl ParamSet for Linear {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        out.push(view(prefix, "weight", &self.weight));
        out.push(view(prefix, "bias", &self.bias));
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(slice_mut(&mut self.weight));
        out.push(slice_mut(&mut self.bias));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNormCache {
    /// Rows before the affine scale/shift.
    pub fn normalized(&self) -> &Array2<f64> {
        &self.normalized
    }
}

impl LayerNorm {
    pub fn new(width: usize, eps: f64) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            eps,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: Array1::zeros(self.gamma.len()),
            beta: Array1::zeros(self.beta.len()),
            eps: self.eps,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let width = x.ncols() as f64;
        let mut normalized = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, istd) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / width;
            row -= mean;
            let var = row.dot(&row) / width;
            *istd = 1.0 / (var + self.eps).sqrt();
            row *= *istd;
        }
        let y = &normalized * &self.gamma + &self.beta;
        (y, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Array2<f64>, grads: &mut LayerNorm) -> Array2<f64> {
        grads.gamma += &(dy * &cache.normalized).sum_axis(Axis(0));
        grads.beta += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let width = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
            let g = dxhat.row(i);
            let xh = cache.normalized.row(i);
            let mean_g = g.sum() / width;
            let mean_gx = g.dot(&xh) / width;
            let istd = cache.inv_std[i];
            row.zip_mut_with(&g, |d, &gv| *d = gv);
            row -= mean_g;
            row.scaled_add(-mean_gx, &xh);
            row *= istd;
        }
        dx
    }
}

impl ParamSet for LayerNorm {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        out.push(view(prefix, "gamma", &self.gamma));
        out.push(view(prefix, "beta", &self.beta));
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(slice_mut(&mut self.gamma));
        out.push(slice_mut(&mut self.beta));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub num_heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One `[seq × seq]` row-stochastic matrix per head.
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
}

impl AttentionCache {
    pub fn probs(&self) -> &[Array2<f64>] {
        &self.probs
    }
}

impl SelfAttention {
    pub fn new<R: Rng + ?Sized>(hidden: usize, num_heads: usize, rng: &mut R) -> Self {
        Self {
            query: Linear::new(hidden, hidden, rng),
            key: Linear::new(hidden, hidden, rng),
            value: Linear::new(hidden, hidden, rng),
            output: Linear::new(hidden, hidden, rng),
            num_heads,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            output: self.output.zeros_like(),
            num_heads: self.num_heads,
        }
    }

    /// Multi-head scaled dot-product self-attention. Keys with
    /// `mask[j] == false` receive exactly zero weight; at least one key
    /// must be unmasked.
    pub fn forward(&self, x: &Array2<f64>, mask: &[bool]) -> (Array2<f64>, AttentionCache) {
        let seq = x.nrows();
        let hidden = x.ncols();
        let head_dim = hidden / self.num_heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let mut context = Array2::zeros((seq, hidden));
        let mut probs = Vec::with_capacity(self.num_heads);
        for h in 0..self.num_heads {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let mut p = Array2::zeros((seq, seq));
            for (mut prow, srow) in p.rows_mut().into_iter().zip(scores.rows()) {
                let max = srow
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(s, _)| *s)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for ((pv, &sv), &m) in prow.iter_mut().zip(srow).zip(mask) {
                    if m {
                        *pv = (sv - max).exp();
                        total += *pv;
                    }
                }
                prow /= total;
            }
            context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let out = self.output.forward(&context);
        (
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                context,
            },
        )
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &Array2<f64>, grads: &mut SelfAttention) -> Array2<f64> {
        let hidden = dy.ncols();
        let head_dim = hidden / self.num_heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let dcontext = self.output.backward(&cache.context, dy, &mut grads.output);
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for (h, p) in cache.probs.iter().enumerate() {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let dctx = dcontext.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&dctx));
            let dp = dctx.dot(&cache.v.slice(cols).t());
            // softmax backward, row-wise: dS = P ⊙ (dP − Σ_j dP·P)
            let mut ds = &dp * p;
            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let inner = row.sum();
                row.scaled_add(-inner, &prow);
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let mut dx = self.query.backward(&cache.x, &dq, &mut grads.query);
        dx += &self.key.backward(&cache.x, &dk, &mut grads.key);
        dx += &self.value.backward(&cache.x, &dv, &mut grads.value);
        dx
    }
}

impl ParamSet for SelfAttention {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        self.query.push_tensors(&join(prefix, "query"), out);
        self.key.push_tensors(&join(prefix, "key"), out);
        self.value.push_tensors(&join(prefix, "value"), out);
        self.output.push_tensors(&join(prefix, "output"), out);
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.query.push_tensors_mut(out);
        self.key.push_tensors_mut(out);
        self.value.push_tensors_mut(out);
        self.output.push_tensors_mut(out);
    }
}

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

/// Position-wise `hidden → intermediate → hidden` network with GELU.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalFfn {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Debug, Clone)]
pub struct FfnCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl ClassicalFfn {
    pub fn new<R: Rng + ?Sized>(hidden: usize, intermediate: usize, rng: &mut R) -> Self {
        Self {
            up: Linear::new(hidden, intermediate, rng),
            down: Linear::new(intermediate, hidden, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            up: self.up.zeros_like(),
            down: self.down.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, FfnCache) {
        let pre = self.up.forward(x);
        let act = pre.mapv(gelu);
        let y = self.down.forward(&act);
        (
            y,
            FfnCache {
                x: x.clone(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, cache: &FfnCache, dy: &Array2<f64>, grads: &mut ClassicalFfn) -> Array2<f64> {
        let dact = self.down.backward(&cache.act, dy, &mut grads.down);
        let dpre = dact * &cache.pre.mapv(gelu_derivative);
        self.up.backward(&cache.x, &dpre, &mut grads.up)
    }
}

impl ParamSet for ClassicalFfn {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>) {
        self.up.push_tensors(&join(prefix, "up"), out);
        self.down.push_tensors(&join(prefix, "down"), out);
    }

    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.up.push_tensors_mut(out);
        self.down.push_tensors_mut(out);
    }
}

/// Inverted dropout: zeroes entries with probability `p` and rescales the
/// survivors. Returns the multiplier mask.
pub fn dropout<R: Rng + ?Sized>(x: &mut Array2<f64>, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    let mask = Array2::from_shape_fn(x.raw_dim(), |_| if rng.random::<f64>() < p { 0.0 } else { keep });
    *x *= &mask;
    mask
}
