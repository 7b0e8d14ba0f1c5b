use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RerankerError;
use crate::graph::EdgeKind;
use crate::scalar::Scalar;

/// Shapes of a reranker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RerankerShape {
    pub layers: usize,
    pub hidden: usize,
    pub key_dim: usize,
    pub input_dim: usize,
}

impl RerankerShape {
    /// `key_dim = hidden`, single head.
    pub fn new(layers: usize, hidden: usize, input_dim: usize) -> Self {
        Self { layers, hidden, key_dim: hidden, input_dim }
    }

    pub fn has_input_proj(&self) -> bool {
        self.input_dim != self.hidden
    }
}

/// Trainable tensors of one layer. Matrices map row vectors: `W_self` is d×d, each
/// relation has `W_r` (d×d) and attention projections `Q_r`, `K_r` (d_k×d).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub w_self: Array2<T>,
    pub w_rel: Vec<Array2<T>>,
    pub q: Vec<Array2<T>>,
    pub k: Vec<Array2<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankerParams<T> {
    pub shape: RerankerShape,
    /// d × input_dim; `None` means identity (input_dim == d).
    pub input_proj: Option<Array2<T>>,
    pub layers: Vec<LayerParams<T>>,
    pub w: Array1<T>,
    pub b: T,
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<T> {
    let a = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-a..a)))
}

impl<T: Scalar> RerankerParams<T> {
    /// Uniform(±1/√fan_in) initialisation, fully determined by `seed`.
    pub fn init(shape: RerankerShape, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, dk) = (shape.hidden, shape.key_dim);
        let input_proj = shape.has_input_proj().then(|| uniform(&mut rng, d, shape.input_dim));
        let layers = (0..shape.layers)
            .map(|_| LayerParams {
                w_self: uniform(&mut rng, d, d),
                w_rel: (0..EdgeKind::COUNT).map(|_| uniform(&mut rng, d, d)).collect(),
                q: (0..EdgeKind::COUNT).map(|_| uniform(&mut rng, dk, d)).collect(),
                k: (0..EdgeKind::COUNT).map(|_| uniform(&mut rng, dk, d)).collect(),
            })
            .collect();
        let a = 1.0 / (d as f64).sqrt();
        let w = Array1::from_shape_simple_fn(d, || T::lit(rng.random_range(-a..a)));
        Self { shape, input_proj, layers, w, b: T::zero() }
    }

    /// All-zero tensors of the same shape (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let z2 = |m: &Array2<T>| Array2::zeros(m.raw_dim());
        Self {
            shape: self.shape,
            input_proj: self.input_proj.as_ref().map(z2),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w_self: z2(&l.w_self),
                    w_rel: l.w_rel.iter().map(z2).collect(),
                    q: l.q.iter().map(z2).collect(),
                    k: l.k.iter().map(z2).collect(),
                })
                .collect(),
            w: Array1::zeros(self.w.len()),
            b: T::zero(),
        }
    }

    /// Visits every matrix/vector as a flat slice, in the on-disk order.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        if let Some(p) = &self.input_proj {
            out.push(p.as_slice().expect("standard layout"));
        }
        for l in &self.layers {
            out.push(l.w_self.as_slice().expect("standard layout"));
            for r in 0..EdgeKind::COUNT {
                out.push(l.w_rel[r].as_slice().expect("standard layout"));
                out.push(l.q[r].as_slice().expect("standard layout"));
                out.push(l.k[r].as_slice().expect("standard layout"));
            }
        }
        out.push(self.w.as_slice().expect("standard layout"));
        out.push(std::slice::from_ref(&self.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        if let Some(p) = &mut self.input_proj {
            out.push(p.as_slice_mut().expect("standard layout"));
        }
        for l in &mut self.layers {
            out.push(l.w_self.as_slice_mut().expect("standard layout"));
            for ((w, q), k) in l.w_rel.iter_mut().zip(l.q.iter_mut()).zip(l.k.iter_mut()) {
                out.push(w.as_slice_mut().expect("standard layout"));
                out.push(q.as_slice_mut().expect("standard layout"));
                out.push(k.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.w.as_slice_mut().expect("standard layout"));
        out.push(std::slice::from_mut(&mut self.b));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + alpha * *s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Converts every tensor to another precision.
    pub fn cast<U: Scalar>(&self) -> RerankerParams<U> {
        let c2 = |m: &Array2<T>| m.mapv(|x| U::lit(x.to_f64_lossy()));
        RerankerParams {
            shape: self.shape,
            input_proj: self.input_proj.as_ref().map(c2),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w_self: c2(&l.w_self),
                    w_rel: l.w_rel.iter().map(c2).collect(),
                    q: l.q.iter().map(c2).collect(),
                    k: l.k.iter().map(c2).collect(),
                })
                .collect(),
            w: self.w.mapv(|x| U::lit(x.to_f64_lossy())),
            b: U::lit(self.b.to_f64_lossy()),
        }
    }

    pub(crate) fn check_input(&self, rows: usize, cols: usize, nodes: usize) -> Result<(), RerankerError> {
        if rows != nodes {
            return Err(RerankerError::Shape(format!("{rows} input rows for {nodes} graph nodes")));
        }
        if cols != self.shape.input_dim {
            return Err(RerankerError::Shape(format!(
                "input vectors have {cols} dimensions, parameters expect {}",
                self.shape.input_dim
            )));
        }
        Ok(())
    }
}
