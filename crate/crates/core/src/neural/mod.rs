//! A small from-scratch neural toolkit: dense layers, stacked LSTMs, Adam,
//! MSE/BCE losses, truncated backpropagation through time and a
//! finite-difference gradient checker.
//!
//! Networks are generic over [`Scalar`]; training runs in `f32`, gradient
//! checks in `f64`.

mod adam;
mod checkpoint;
mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use dense::{Dense, Mlp, MlpCache};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use loss::{bce, bce_grad_logits, mse, mse_grad, Loss, BCE_CLAMP};
pub use lstm::{lstm_cell, LstmForward, LstmLayer, LstmNetwork, LstmState};
pub use train::train_step;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Uniform parameter access, used by the optimizer, the gradient checker and checkpoints.
pub trait Params<T: Scalar>: Clone {
    fn param_slices(&self) -> Vec<&[T]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [T]>;
    fn param_shapes(&self) -> Vec<Vec<usize>>;

    /// Same architecture, every parameter zero. Doubles as a gradient accumulator.
    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.param_slices_mut() {
            s.iter_mut().for_each(|x| *x = T::zero());
        }
        z
    }

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, element-wise.
    fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
    }
}

pub(crate) fn uniform_init<T: Scalar, R: Rng + ?Sized>(n: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..n)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect()
}
