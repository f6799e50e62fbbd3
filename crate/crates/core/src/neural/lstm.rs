use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::check_finite;
use super::{sigmoid, uniform_init, Activation, Dense, Params};
use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// One LSTM layer. `weight` is `4H × (H + X)` acting on `[h(t-1), x(t)]`;
/// row blocks are the forget, input, candidate and output gates in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub hidden: Array1<T>,
    pub cell: Array1<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden: Array1::zeros(hidden),
            cell: Array1::zeros(hidden),
        }
    }
}

/// Per-step values needed by backpropagation through time.
#[derive(Debug, Clone)]
struct StepCache<T> {
    joined: Array2<T>,
    forget: Array2<T>,
    input: Array2<T>,
    candidate: Array2<T>,
    output: Array2<T>,
    cell_prev: Array2<T>,
    cell_tanh: Array2<T>,
}

impl<T: Scalar> LstmLayer<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = inputs + hidden;
        Self {
            weight: Array2::from_shape_vec((4 * hidden, fan_in), uniform_init(4 * hidden * fan_in, hidden, rng))
                .expect("shape matches length"),
            bias: Array1::from(uniform_init(4 * hidden, hidden, rng)),
        }
    }

    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            weight: Array2::zeros((4 * hidden, inputs + hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.weight.nrows() / 4
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols() - self.hidden()
    }

    fn check_shape(&self) -> Result<()> {
        if !self.weight.nrows().is_multiple_of(4) || self.weight.ncols() < self.weight.nrows() / 4 {
            return Err(Error::Config(format!("malformed LSTM weight {:?}", self.weight.shape())));
        }
        check_dim("LSTM bias", self.weight.nrows(), self.bias.len())
    }

    fn step(&self, h: ArrayView2<T>, c: ArrayView2<T>, x: ArrayView2<T>) -> (Array2<T>, Array2<T>, StepCache<T>) {
        let hd = self.hidden();
        let joined = concatenate(Axis(1), &[h, x]).expect("batch sizes agree");
        let mut z = joined.dot(&self.weight.t());
        z += &self.bias;
        let forget = z.slice(s![.., 0..hd]).mapv(sigmoid);
        let input = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let candidate = z.slice(s![.., 2 * hd..3 * hd]).mapv(|v| v.tanh());
        let output = z.slice(s![.., 3 * hd..4 * hd]).mapv(sigmoid);
        let mut cell = Array2::zeros(forget.raw_dim());
        Zip::from(&mut cell)
            .and(&forget)
            .and(&c)
            .and(&input)
            .and(&candidate)
            .for_each(|n, &f, &cp, &i, &g| *n = f * cp + i * g);
        let cell_tanh = cell.mapv(|v| v.tanh());
        let hidden = &output * &cell_tanh;
        let cache = StepCache {
            joined,
            forget,
            input,
            candidate,
            output,
            cell_prev: c.to_owned(),
            cell_tanh,
        };
        (hidden, cell, cache)
    }

    /// Runs a sequence of `batch × X` inputs from a zero state.
    fn forward_seq(&self, xs: &[Array2<T>]) -> (Vec<Array2<T>>, Vec<StepCache<T>>) {
        let batch = xs[0].nrows();
        let mut h = Array2::zeros((batch, self.hidden()));
        let mut c = Array2::zeros((batch, self.hidden()));
        let mut hs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let (nh, nc, cache) = self.step(h.view(), c.view(), x.view());
            hs.push(nh.clone());
            caches.push(cache);
            h = nh;
            c = nc;
        }
        (hs, caches)
    }

    fn forward_seq_nocache(&self, xs: &[Array2<T>]) -> Vec<Array2<T>> {
        let batch = xs[0].nrows();
        let mut h = Array2::zeros((batch, self.hidden()));
        let mut c = Array2::zeros((batch, self.hidden()));
        let mut hs = Vec::with_capacity(xs.len());
        for x in xs {
            let (nh, nc, _) = self.step(h.view(), c.view(), x.view());
            hs.push(nh.clone());
            h = nh;
            c = nc;
        }
        hs
    }

    /// BPTT over the cached sequence given `dL/dh(t)` from above at every step.
    fn backward_seq(&self, caches: &[StepCache<T>], d_hs: &[Array2<T>]) -> (Self, Vec<Array2<T>>) {
        let hd = self.hidden();
        let batch = d_hs[0].nrows();
        let mut grads = self.zeros_like();
        let mut dh_next = Array2::<T>::zeros((batch, hd));
        let mut dc_next = Array2::<T>::zeros((batch, hd));
        let mut d_xs = vec![Array2::zeros((0, 0)); caches.len()];
        let mut dz = Array2::<T>::zeros((batch, 4 * hd));
        for t in (0..caches.len()).rev() {
            let sc = &caches[t];
            let dh = &d_hs[t] + &dh_next;
            let mut dc = Array2::zeros((batch, hd));
            Zip::from(&mut dc)
                .and(&dh)
                .and(&sc.output)
                .and(&sc.cell_tanh)
                .and(&dc_next)
                .for_each(|dc, &dh, &o, &tc, &dn| *dc = dh * o * (T::one() - tc * tc) + dn);
            {
                let (mut dzf, rest) = dz.view_mut().split_at(Axis(1), hd);
                let (mut dzi, rest) = rest.split_at(Axis(1), hd);
                let (mut dzg, mut dzo) = rest.split_at(Axis(1), hd);
                Zip::from(&mut dzf)
                    .and(&dc)
                    .and(&sc.cell_prev)
                    .and(&sc.forget)
                    .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (T::one() - f));
                Zip::from(&mut dzi)
                    .and(&dc)
                    .and(&sc.candidate)
                    .and(&sc.input)
                    .for_each(|d, &dc, &g, &i| *d = dc * g * i * (T::one() - i));
                Zip::from(&mut dzg)
                    .and(&dc)
                    .and(&sc.input)
                    .and(&sc.candidate)
                    .for_each(|d, &dc, &i, &g| *d = dc * i * (T::one() - g * g));
                Zip::from(&mut dzo)
                    .and(&dh)
                    .and(&sc.cell_tanh)
                    .and(&sc.output)
                    .for_each(|d, &dh, &tc, &o| *d = dh * tc * o * (T::one() - o));
            }
            dc_next = &dc * &sc.forget;
            grads.weight += &dz.t().dot(&sc.joined);
            grads.bias += &dz.sum_axis(Axis(0));
            let d_joined = dz.dot(&self.weight);
            dh_next = d_joined.slice(s![.., 0..hd]).to_owned();
            d_xs[t] = d_joined.slice(s![.., hd..]).to_owned();
        }
        (grads, d_xs)
    }
}

impl<T: Scalar> Params<T> for LstmLayer<T> {
    fn param_slices(&self) -> Vec<&[T]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        vec![self.weight.shape().to_vec(), self.bias.shape().to_vec()]
    }
}

/// One cell update for a single (unbatched) input.
pub fn lstm_cell<T: Scalar>(layer: &LstmLayer<T>, state: &LstmState<T>, x: ArrayView1<T>) -> Result<LstmState<T>> {
    layer.check_shape()?;
    check_dim("LSTM input", layer.inputs(), x.len())?;
    check_dim("LSTM hidden state", layer.hidden(), state.hidden.len())?;
    check_dim("LSTM cell state", layer.hidden(), state.cell.len())?;
    let (h, c, _) = layer.step(
        state.hidden.view().insert_axis(Axis(0)),
        state.cell.view().insert_axis(Axis(0)),
        x.insert_axis(Axis(0)),
    );
    Ok(LstmState {
        hidden: h.index_axis_move(Axis(0), 0),
        cell: c.index_axis_move(Axis(0), 0),
    })
}

/// Stacked LSTM layers followed by a dense head applied at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork<T> {
    layers: Vec<LstmLayer<T>>,
    head: Dense<T>,
}

/// Cached forward pass over a batch of sequences.
pub struct LstmForward<T> {
    layer_caches: Vec<Vec<StepCache<T>>>,
    top: Vec<Array2<T>>,
    /// Head outputs per step (after the head activation).
    pub outputs: Vec<Array2<T>>,
}

impl<T: Scalar> LstmNetwork<T> {
    pub fn new<R: Rng + ?Sized>(
        inputs: usize,
        hidden: &[usize],
        outputs: usize,
        head_activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) || inputs == 0 || outputs == 0 {
            return Err(Error::Config(format!("invalid LSTM architecture {inputs} -> {hidden:?} -> {outputs}")));
        }
        let mut layers = Vec::with_capacity(hidden.len());
        let mut prev = inputs;
        for &h in hidden {
            layers.push(LstmLayer::new(prev, h, rng));
            prev = h;
        }
        let head = Dense::new(prev, outputs, head_activation, rng);
        Ok(Self { layers, head })
    }

    pub fn from_parts(layers: Vec<LstmLayer<T>>, head: Dense<T>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an LSTM network needs at least one layer".into()));
        }
        for l in &layers {
            l.check_shape()?;
        }
        for pair in layers.windows(2) {
            check_dim("LSTM stacking", pair[0].hidden(), pair[1].inputs())?;
        }
        check_dim("LSTM head", layers[layers.len() - 1].hidden(), head.inputs())?;
        Ok(Self { layers, head })
    }

    pub fn layers(&self) -> &[LstmLayer<T>] {
        &self.layers
    }

    pub fn head(&self) -> &Dense<T> {
        &self.head
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.head.outputs()
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.hidden()).collect()
    }

    fn check_input(&self, xs: &[Array2<T>]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::Empty("empty input sequence"));
        }
        let batch = xs[0].nrows();
        for x in xs {
            check_dim("LSTM input features", self.inputs(), x.ncols())?;
            check_dim("LSTM batch", batch, x.nrows())?;
        }
        Ok(())
    }

    /// Forward pass with caches; `xs[t]` is `batch × inputs`.
    pub fn forward(&self, xs: &[Array2<T>]) -> Result<LstmForward<T>> {
        self.check_input(xs)?;
        let mut layer_caches = Vec::with_capacity(self.layers.len());
        let mut seq: Vec<Array2<T>> = xs.to_vec();
        for layer in &self.layers {
            let (hs, caches) = layer.forward_seq(&seq);
            layer_caches.push(caches);
            seq = hs;
        }
        let outputs: Vec<Array2<T>> = seq.iter().map(|h| self.head.forward(h.view())).collect();
        for o in &outputs {
            check_finite(o)?;
        }
        Ok(LstmForward {
            layer_caches,
            top: seq,
            outputs,
        })
    }

    /// Head output at the final step only, without caches.
    pub fn predict_last(&self, xs: &[Array2<T>]) -> Result<Array2<T>> {
        self.check_input(xs)?;
        let mut seq: Vec<Array2<T>> = xs.to_vec();
        for layer in &self.layers {
            seq = layer.forward_seq_nocache(&seq);
        }
        let out = self.head.forward(seq[seq.len() - 1].view());
        check_finite(&out)?;
        Ok(out)
    }

    /// Gradients from `dL/dz` of the head pre-activation at each step (`None` = no loss there).
    pub fn backward_from_logits(&self, fwd: &LstmForward<T>, d_logits: &[Option<Array2<T>>]) -> Self {
        let steps = fwd.top.len();
        let batch = fwd.top[0].nrows();
        let mut grads = self.zeros_like();
        let top_hidden = self.head.inputs();
        let mut d_seq: Vec<Array2<T>> = (0..steps)
            .map(|t| match &d_logits[t] {
                Some(dz) => {
                    grads.head.weight += &dz.t().dot(&fwd.top[t]);
                    grads.head.bias += &dz.sum_axis(Axis(0));
                    dz.dot(&self.head.weight)
                }
                None => Array2::zeros((batch, top_hidden)),
            })
            .collect();
        for l in (0..self.layers.len()).rev() {
            let (g, d_xs) = self.layers[l].backward_seq(&fwd.layer_caches[l], &d_seq);
            grads.layers[l] = g;
            d_seq = d_xs;
        }
        grads
    }

    pub fn cast<U: Scalar>(&self) -> LstmNetwork<U> {
        let c2 = |a: &Array2<T>| a.mapv(|x| U::lit(x.as_f64()));
        let c1 = |a: &Array1<T>| a.mapv(|x| U::lit(x.as_f64()));
        LstmNetwork {
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    weight: c2(&l.weight),
                    bias: c1(&l.bias),
                })
                .collect(),
            head: Dense {
                weight: c2(&self.head.weight),
                bias: c1(&self.head.bias),
                activation: self.head.activation,
            },
        }
    }
}

impl<T: Scalar> Params<T> for LstmNetwork<T> {
    fn param_slices(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = self.layers.iter().flat_map(|l| l.param_slices()).collect();
        v.push(self.head.weight.as_slice().expect("standard layout"));
        v.push(self.head.bias.as_slice().expect("standard layout"));
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v: Vec<&mut [T]> = self.layers.iter_mut().flat_map(|l| l.param_slices_mut()).collect();
        v.push(self.head.weight.as_slice_mut().expect("standard layout"));
        v.push(self.head.bias.as_slice_mut().expect("standard layout"));
        v
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut v: Vec<Vec<usize>> = self.layers.iter().flat_map(|l| l.param_shapes()).collect();
        v.push(self.head.weight.shape().to_vec());
        v.push(self.head.bias.shape().to_vec());
        v
    }
}
