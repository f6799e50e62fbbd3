use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Probabilities are clamped this far from {0, 1} before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    Bce,
}

fn same_shape<T>(a: &ArrayView2<T>, b: &ArrayView2<T>) -> Result<()> {
    check_dim("loss rows", a.nrows(), b.nrows())?;
    check_dim("loss columns", a.ncols(), b.ncols())?;
    if a.is_empty() {
        return Err(Error::Empty("empty loss batch"));
    }
    Ok(())
}

/// Mean squared error over every element.
pub fn mse<T: Scalar>(pred: ArrayView2<T>, target: ArrayView2<T>) -> Result<T> {
    same_shape(&pred, &target)?;
    let mut acc = T::zero();
    Zip::from(&pred).and(&target).for_each(|&p, &t| acc += (p - t) * (p - t));
    Ok(acc / T::lit(pred.len() as f64))
}

pub fn mse_grad<T: Scalar>(pred: ArrayView2<T>, target: ArrayView2<T>) -> Array2<T> {
    let scale = T::lit(2.0 / pred.len() as f64);
    let mut g = &pred - &target;
    g.mapv_inplace(|d| d * scale);
    g
}

/// Mean binary cross-entropy over every element.
pub fn bce<T: Scalar>(prob: ArrayView2<T>, target: ArrayView2<T>) -> Result<T> {
    same_shape(&prob, &target)?;
    let lo = T::lit(BCE_CLAMP);
    let hi = T::one() - lo;
    let mut acc = T::zero();
    Zip::from(&prob).and(&target).for_each(|&p, &t| {
        let p = p.max(lo).min(hi);
        acc -= t * p.ln() + (T::one() - t) * (T::one() - p).ln();
    });
    let loss = acc / T::lit(prob.len() as f64);
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numerical("non-finite BCE loss".into()))
    }
}

/// `dL/dz` for a sigmoid output feeding the mean BCE: `(p - t) / n`, divided by `norm` elements.
pub fn bce_grad_logits<T: Scalar>(prob: ArrayView2<T>, target: ArrayView2<T>, norm: usize) -> Array2<T> {
    let scale = T::lit(1.0 / norm as f64);
    let mut g = &prob - &target;
    g.mapv_inplace(|d| d * scale);
    g
}
