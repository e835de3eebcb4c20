//! Uniform access to the trainable tensors of a model component.
//!
//! Components list their tensors in a fixed order; gradient containers
//! have the same type as the component, so optimizers and reductions zip
//! the two lists.

use ndarray::{Array, Array2, Dimension};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

pub trait ParamSet {
    fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorView<'a>>);
    fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>);

    fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = Vec::new();
        self.push_tensors("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.push_tensors_mut(&mut out);
        out
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Overwrites all tensors from a flat vector in traversal order.
    fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// `self += scale · other` for two containers of the same structure.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub(crate) fn view<'a, D: Dimension>(prefix: &str, name: &str, a: &'a Array<f64, D>) -> TensorView<'a> {
    TensorView {
        name: join(prefix, name),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("parameters are stored contiguously"),
    }
}

pub(crate) fn slice_mut<D: Dimension>(a: &mut Array<f64, D>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored contiguously")
}

/// `[rows × cols]` matrix of N(0, std²) draws in row-major order.
pub(crate) fn gaussian<R: Rng + ?Sized>(shape: (usize, usize), std: f64, rng: &mut R) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    let mut a = Array2::zeros(shape);
    for v in a.iter_mut() {
        *v = normal.sample(rng);
    }
    a
}
