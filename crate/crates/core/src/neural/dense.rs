use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, Activation, Params};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Affine map followed by an element-wise activation. `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let weight = Array2::from_shape_vec((outputs, inputs), uniform_init(outputs * inputs, inputs, rng))
            .expect("shape matches length");
        let bias = Array1::from(uniform_init(outputs, inputs, rng));
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Pre-activation for a `batch × in` input.
    pub fn affine(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Array2<T> {
        let act = self.activation;
        self.affine(x).mapv_into(|z| act.apply(z))
    }
}

/// Multi-layer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    layers: Vec<Dense<T>>,
}

/// Inputs of every layer plus the final output, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    inputs: Vec<Array2<T>>,
    output: Array2<T>,
}

impl<T> MlpCache<T> {
    pub fn output(&self) -> &Array2<T> {
        &self.output
    }
}

impl<T: Scalar> Mlp<T> {
    /// `sizes = [in, h1, ..., out]`; `hidden` on every layer but the last.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        Self::build(sizes, hidden, output, |i, o, a| Dense::new(i, o, a, rng))
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::build(sizes, hidden, output, Dense::zeros)
    }

    fn build(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        mut make: impl FnMut(usize, usize, Activation) -> Dense<T>,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| make(sizes[l], sizes[l + 1], if l + 1 == n { output } else { hidden }))
            .collect();
        Ok(Self { layers })
    }

    /// Builds from explicit layers, checking that consecutive dimensions compose.
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_dim("layer composition", pair[0].outputs(), pair[1].inputs())?;
        }
        for l in &layers {
            check_dim("bias length", l.outputs(), l.bias.len())?;
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.inputs())
            .chain(self.layers.iter().map(|l| l.outputs()))
            .collect()
    }

    pub fn forward(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        let out = self.forward_batch(x.insert_axis(Axis(0)))?;
        Ok(out.index_axis_move(Axis(0), 0))
    }

    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        check_dim("MLP input", self.inputs(), x.ncols())?;
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(h.view());
        }
        check_finite(&h)?;
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<T>) -> Result<MlpCache<T>> {
        check_dim("MLP input", self.inputs(), x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for layer in &self.layers {
            let next = layer.forward(h.view());
            inputs.push(h);
            h = next;
        }
        check_finite(&h)?;
        Ok(MlpCache { inputs, output: h })
    }

    /// Gradients given `dL/d output`. Returns parameter gradients and `dL/d input`.
    pub fn backward(&self, cache: &MlpCache<T>, d_output: ArrayView2<T>) -> (Self, Array2<T>) {
        let act = self.layers[self.layers.len() - 1].activation;
        let mut d_pre = d_output.to_owned();
        ndarray::Zip::from(&mut d_pre)
            .and(&cache.output)
            .for_each(|d, &y| *d *= act.derivative_from_output(y));
        self.backward_from_pre(cache, d_pre)
    }

    /// Gradients given `dL/d z` of the last layer's pre-activation (e.g. sigmoid + BCE).
    pub fn backward_from_logits(&self, cache: &MlpCache<T>, d_logits: ArrayView2<T>) -> (Self, Array2<T>) {
        self.backward_from_pre(cache, d_logits.to_owned())
    }

    fn backward_from_pre(&self, cache: &MlpCache<T>, mut d_pre: Array2<T>) -> (Self, Array2<T>) {
        let mut grads = self.zeros_like();
        for l in (0..self.layers.len()).rev() {
            let input = &cache.inputs[l];
            grads.layers[l].weight.assign(&d_pre.t().dot(input));
            grads.layers[l].bias = d_pre.sum_axis(Axis(0));
            let d_in = d_pre.dot(&self.layers[l].weight);
            if l > 0 {
                let act = self.layers[l - 1].activation;
                d_pre = d_in;
                ndarray::Zip::from(&mut d_pre)
                    .and(input)
                    .for_each(|d, &y| *d *= act.derivative_from_output(y));
            } else {
                return (grads, d_in);
            }
        }
        unreachable!("loop returns at the first layer")
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Mlp<U> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    weight: l.weight.mapv(|x| U::lit(x.as_f64())),
                    bias: l.bias.mapv(|x| U::lit(x.as_f64())),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

pub(crate) fn check_finite<T: Scalar>(a: &Array2<T>) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite network output".into()))
    }
}

impl<T: Scalar> Params<T> for Mlp<T> {
    fn param_slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.shape().to_vec(), l.bias.shape().to_vec()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeedTree, Stream};
    use ndarray::array;

    #[test]
    fn gradients_of_a_single_input_network_are_contiguous() {
        let mut rng = SeedTree::new(3).stream(Stream::Init);
        let net = Mlp::<f32>::new(&[1, 4, 3], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let x = Array2::from_elem((5, 1), 0.5f32);
        let cache = net.forward_cached(x.view()).unwrap();
        let (grads, _) = net.backward(&cache, Array2::ones((5, 3)).view());
        assert_eq!(grads.param_slices().iter().map(|s| s.len()).sum::<usize>(), 4 + 4 + 12 + 3);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::<f64>::zeros(&[3, 5, 2], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(net.forward(array![1.0, -2.0, 3.0].view()).unwrap(), array![0.0, 0.0]);
    }

    #[test]
    fn identity_relu_layer() {
        let layer = Dense {
            weight: array![[1.0, 0.0], [0.0, 1.0]],
            bias: array![0.0, 0.0],
            activation: Activation::Relu,
        };
        let net = Mlp::from_layers(vec![layer]).unwrap();
        assert_eq!(net.forward(array![-1.0, 2.0].view()).unwrap(), array![0.0, 2.0]);
    }

    #[test]
    fn matches_hand_computed_chain() {
        let mut rng = SeedTree::new(11).stream(Stream::Init);
        let net = Mlp::<f64>::new(&[4, 8, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let x = [0.3, -1.2, 0.7, 2.0];
        // Straight-line recomputation with plain loops.
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let hidden: Vec<f64> = (0..8)
            .map(|o| {
                let mut z = l0.bias[o];
                for i in 0..4 {
                    z += l0.weight[[o, i]] * x[i];
                }
                z.max(0.0)
            })
            .collect();
        let expected: Vec<f64> = (0..2)
            .map(|o| {
                let mut z = l1.bias[o];
                for i in 0..8 {
                    z += l1.weight[[o, i]] * hidden[i];
                }
                z
            })
            .collect();
        let out = net.forward(ndarray::ArrayView1::from(&x)).unwrap();
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let net = Mlp::<f64>::zeros(&[3, 2], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(net.forward(array![1.0, 2.0].view()), Err(Error::Dimension { .. })));
        assert!(Mlp::<f64>::zeros(&[3], Activation::Relu, Activation::Identity).is_err());
        let a = Dense::<f64>::zeros(3, 4, Activation::Relu);
        let b = Dense::<f64>::zeros(5, 1, Activation::Identity);
        assert!(Mlp::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn non_finite_output_is_a_numerical_fault() {
        let mut net = Mlp::<f64>::zeros(&[1, 1], Activation::Relu, Activation::Identity).unwrap();
        net.layers_mut()[0].bias[0] = f64::NAN;
        assert!(matches!(net.forward(array![1.0].view()), Err(Error::Numerical(_))));
    }

    #[test]
    fn copies_are_deep() {
        let mut rng = SeedTree::new(3).stream(Stream::Init);
        let mut online = Mlp::<f32>::new(&[2, 4, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let target = online.clone();
        online.layers_mut()[0].weight[[0, 0]] += 1.0;
        assert_ne!(online, target);
    }
}
