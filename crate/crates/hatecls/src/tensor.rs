//! Flat parameter storage with named tensor views.
//!
//! All trainable parameters (encoder and heads) live in one contiguous
//! `Vec<f64>` per model part. Tensors are addressed by name and exposed as
//! `ndarray` views into the flat buffer. Keeping parameters flat makes the
//! optimizer, checkpointing, and finite-difference checks uniform: they all
//! operate on plain slices.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

use crate::error::{PipelineError, Result};

/// Shape and location of one named tensor inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// A set of named tensors backed by one flat `f64` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    specs: Vec<TensorSpec>,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            specs: Vec::new(),
            index: BTreeMap::new(),
            data: Vec::new(),
        }
    }

    /// Append a tensor of the given shape, initially zero. Names must be unique.
    pub fn add(&mut self, name: &str, shape: &[usize]) -> usize {
        assert!(
            !self.index.contains_key(name),
            "duplicate tensor name {name:?}"
        );
        let len: usize = shape.iter().product();
        let offset = self.data.len();
        self.data.resize(offset + len, 0.0);
        let id = self.specs.len();
        self.specs.push(TensorSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len,
        });
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.index.get(name).map(|&i| &self.specs[i])
    }

    fn spec_expect(&self, name: &str) -> &TensorSpec {
        self.spec(name)
            .unwrap_or_else(|| panic!("unknown tensor {name:?}"))
    }

    pub fn slice(&self, name: &str) -> &[f64] {
        let s = self.spec_expect(name);
        &self.data[s.offset..s.offset + s.len]
    }

    pub fn slice_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self.spec_expect(name).clone();
        &mut self.data[s.offset..s.offset + s.len]
    }

    /// Range of a named tensor inside the flat buffer.
    pub fn range(&self, name: &str) -> std::ops::Range<usize> {
        let s = self.spec_expect(name);
        s.offset..s.offset + s.len
    }

    pub fn view1(&self, name: &str) -> ArrayView1<'_, f64> {
        let s = self.spec_expect(name);
        assert_eq!(s.shape.len(), 1, "tensor {name:?} is not 1-d");
        ArrayView1::from_shape(s.shape[0], self.slice(name)).unwrap()
    }

    pub fn view2(&self, name: &str) -> ArrayView2<'_, f64> {
        let s = self.spec_expect(name);
        assert_eq!(s.shape.len(), 2, "tensor {name:?} is not 2-d");
        ArrayView2::from_shape((s.shape[0], s.shape[1]), self.slice(name)).unwrap()
    }

    pub fn view1_mut(&mut self, name: &str) -> ArrayViewMut1<'_, f64> {
        let s = self.spec_expect(name).clone();
        assert_eq!(s.shape.len(), 1, "tensor {name:?} is not 1-d");
        ArrayViewMut1::from_shape(s.shape[0], &mut self.data[s.offset..s.offset + s.len]).unwrap()
    }

    pub fn view2_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let s = self.spec_expect(name).clone();
        assert_eq!(s.shape.len(), 2, "tensor {name:?} is not 2-d");
        ArrayViewMut2::from_shape(
            (s.shape[0], s.shape[1]),
            &mut self.data[s.offset..s.offset + s.len],
        )
        .unwrap()
    }

    /// A zeroed buffer with the same layout, for gradient accumulation.
    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Replace the whole buffer. Length must match the registered specs.
    pub fn load_data(&mut self, data: Vec<f64>) -> Result<()> {
        if data.len() != self.data.len() {
            return Err(PipelineError::ShapeMismatch {
                what: "parameter buffer".into(),
                expected: self.data.len().to_string(),
                actual: data.len().to_string(),
            });
        }
        self.data = data;
        Ok(())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Truncated normal samples: values outside two standard deviations are
/// redrawn, matching the initialization convention of the encoder family.
pub fn fill_truncated_normal(out: &mut [f64], std: f64, rng: &mut ChaCha20Rng) {
    let dist = Normal::new(0.0, std).expect("valid normal");
    for v in out.iter_mut() {
        loop {
            let x = dist.sample(rng);
            if x.abs() <= 2.0 * std {
                *v = x;
                break;
            }
        }
    }
}

/// Fill a square `n x n` block (row-major) with an orthogonal matrix obtained
/// by modified Gram-Schmidt on a Gaussian draw.
pub fn fill_orthogonal(out: &mut [f64], n: usize, rng: &mut ChaCha20Rng) {
    assert_eq!(out.len(), n * n);
    let dist = Normal::new(0.0, 1.0).expect("valid normal");
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| dist.sample(rng)).collect())
        .collect();
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..n {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm: f64 = (0..n).map(|i| cols[j][i] * cols[j][i]).sum::<f64>().sqrt();
        // Gaussian draws are almost surely full rank; redraw defensively.
        if norm < 1e-12 {
            for i in 0..n {
                cols[j][i] = dist.sample(rng);
            }
            let norm2: f64 = (0..n).map(|i| cols[j][i] * cols[j][i]).sum::<f64>().sqrt();
            for i in 0..n {
                cols[j][i] /= norm2;
            }
        } else {
            for i in 0..n {
                cols[j][i] /= norm;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = cols[j][i];
        }
    }
}

/// Numerically stable softmax over a slice, in place.
pub fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// Tanh-form GELU used by the encoder feed-forward blocks.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

/// Derivative of [`gelu`].
pub fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn store_layout_and_views() {
        let mut p = ParamStore::new();
        p.add("w", &[2, 3]);
        p.add("b", &[3]);
        assert_eq!(p.len(), 9);
        p.slice_mut("w").copy_from_slice(&[1., 2., 3., 4., 5., 6.]);
        p.slice_mut("b").copy_from_slice(&[7., 8., 9.]);
        let w = p.view2("w");
        assert_eq!(w[[1, 2]], 6.0);
        assert_eq!(p.view1("b")[0], 7.0);
        assert_eq!(p.range("b"), 6..9);
    }

    #[test]
    fn truncated_normal_respects_bound() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut buf = vec![0.0; 10_000];
        fill_truncated_normal(&mut buf, 0.02, &mut rng);
        assert!(buf.iter().all(|v| v.abs() <= 0.04));
        let mean: f64 = buf.iter().sum::<f64>() / buf.len() as f64;
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let n = 8;
        let mut buf = vec![0.0; n * n];
        fill_orthogonal(&mut buf, n, &mut rng);
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|i| buf[i * n + a] * buf[i * n + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "col {a} . col {b} = {dot}");
            }
        }
    }

    #[test]
    fn softmax_normalizes() {
        let mut x = vec![1.0, 2.0, 3.0];
        softmax_in_place(&mut x);
        let sum: f64 = x.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(x[2] > x[1] && x[1] > x[0]);
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 2.5] {
            let eps = 1e-6;
            let fd = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!((gelu_grad(x) - fd).abs() < 1e-8, "x={x}");
        }
    }
}
