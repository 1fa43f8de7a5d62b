//! Minimal dense network engine: forward pass, reverse-mode gradients, Adam,
//! and the cosine quantile embedding used by the distributional agent.
//!
//! Everything is generic over the scalar type. Training runs in `f32`;
//! gradient-check oracles instantiate the identical code in `f64`.

mod adam;
mod checkpoint;
mod model;

pub use adam::{adam_step, AdamParams, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError, LayerDump};
pub use model::{DqnTape, IqnTape, MlpModel, ModelGrads, ModelKind, StateTape, Topology};

use num_traits::Float;
use std::fmt::Debug;

/// Scalar type for network arithmetic.
pub trait Real:
    Float + num_traits::NumAssign + std::iter::Sum + Default + Debug + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

/// Dense layer, weights in row-major `out_dim x in_dim` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Linear<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Linear {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
            activation,
        }
    }

    /// He-style uniform fan-in initialization: U[-sqrt(6/fan_in), +sqrt(6/fan_in)].
    pub fn init<R: rand::Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / in_dim as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| T::from_f64(rng.gen_range(-limit..limit)))
            .collect();
        Linear {
            in_dim,
            out_dim,
            weights,
            bias: vec![T::zero(); out_dim],
            activation,
        }
    }

    /// Compute pre-activations into `pre` and activations into `out`.
    pub fn forward(&self, x: &[T], pre: &mut Vec<T>, out: &mut Vec<T>) {
        debug_assert_eq!(x.len(), self.in_dim, "layer input dimension mismatch");
        pre.clear();
        pre.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.bias)
                .map(|(row, &b)| dot(row, x) + b),
        );
        out.clear();
        out.extend(pre.iter().map(|&z| self.activation.apply(z)));
    }

    /// Reverse step: given the gradient w.r.t. this layer's activations,
    /// accumulate parameter gradients and add the input gradient into `dx`.
    pub fn backward(
        &self,
        x: &[T],
        pre: &[T],
        d_out: &[T],
        grad_w: &mut [T],
        grad_b: &mut [T],
        dx: &mut [T],
    ) {
        for o in 0..self.out_dim {
            let dz = d_out[o] * self.activation.derivative(pre[o]);
            if dz == T::zero() {
                continue;
            }
            grad_b[o] += dz;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad_w[o * self.in_dim..(o + 1) * self.in_dim];
            for ((g, &xi), (&w, dxi)) in
                grow.iter_mut().zip(x).zip(row.iter().zip(dx.iter_mut()))
            {
                *g += dz * xi;
                *dxi += dz * w;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Dot product with independent accumulators so the fixed summation order
/// still vectorizes.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let chunks = a.len() / LANES;
    for i in 0..chunks {
        let a8 = &a[i * LANES..i * LANES + LANES];
        let b8 = &b[i * LANES..i * LANES + LANES];
        for l in 0..LANES {
            acc[l] += a8[l] * b8[l];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for i in chunks * LANES..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Row-major matrix of `rows x cols` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Cosine quantile embedding: feature `i` is `cos(pi * i * phi * tau)` for
/// `i = 0 .. n_features-1`, where `phi` is the CVaR threshold distorting the
/// quantile level.
pub fn cosine_embed<T: Real>(tau: T, phi: T, n_features: usize) -> Vec<T> {
    let pi = T::from_f64(std::f64::consts::PI);
    let base = pi * phi * tau;
    (0..n_features)
        .map(|i| (base * T::from_f64(i as f64)).cos())
        .collect()
}
