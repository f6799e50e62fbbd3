use ndarray::ArrayView2;

use super::{bce, bce_grad_logits, mse, mse_grad, Activation, Adam, Loss, Mlp};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One Adam step on the mean batch loss of a dense network. Returns the loss before the update.
///
/// BCE requires a sigmoid output layer and differentiates through the logits.
pub fn train_step<T: Scalar>(
    net: &mut Mlp<T>,
    adam: &mut Adam<T>,
    inputs: ArrayView2<T>,
    targets: ArrayView2<T>,
    loss: Loss,
) -> Result<T> {
    if inputs.nrows() == 0 {
        return Err(Error::Empty("empty training batch"));
    }
    let cache = net.forward_cached(inputs)?;
    let (value, grads) = match loss {
        Loss::Mse => {
            let value = mse(cache.output().view(), targets)?;
            let d = mse_grad(cache.output().view(), targets);
            (value, net.backward(&cache, d.view()).0)
        }
        Loss::Bce => {
            let last = net.layers()[net.layers().len() - 1].activation;
            if last != Activation::Sigmoid {
                return Err(Error::Config("BCE training needs a sigmoid output layer".into()));
            }
            let value = bce(cache.output().view(), targets)?;
            let d = bce_grad_logits(cache.output().view(), targets, targets.len());
            (value, net.backward_from_logits(&cache, d.view()).0)
        }
    };
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite {loss:?} loss at step {}", adam.steps() + 1)));
    }
    adam.step(net, &grads)?;
    Ok(value)
}
