use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::params::{Entry, ParamStore};
use super::tape::{Tape, Var};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Dense stack whose weights live in a [`ParamStore`] under
/// `{prefix}.W{i}` (`[out, in]`) and `{prefix}.b{i}` (`[out]`), `i` from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub prefix: String,
    pub layers: Vec<LayerSpec>,
}

/// `rows x cols` matrix with orthonormal rows or columns, scaled by `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign fix makes the distribution uniform over the orthogonal group.
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Array2::from_shape_fn((rows, cols), |(i, j)| gain * if rows >= cols { q[(i, j)] } else { q[(j, i)] })
}

impl Mlp {
    /// Tanh hidden layers and a linear output.
    pub fn new(prefix: impl Into<String>, input: usize, hidden: &[usize], output: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(LayerSpec { in_dim: prev, out_dim: h, activation: Activation::Tanh });
            prev = h;
        }
        layers.push(LayerSpec { in_dim: prev, out_dim: output, activation: Activation::Identity });
        Self { prefix: prefix.into(), layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.W{}", self.prefix, layer)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.b{}", self.prefix, layer)
    }

    /// Parameter names of layer `layer` (1-based): weight then bias.
    pub fn layer_params(&self, layer: usize) -> [String; 2] {
        [self.weight_name(layer), self.bias_name(layer)]
    }

    pub fn param_names(&self) -> Vec<String> {
        (1..=self.depth()).flat_map(|i| self.layer_params(i)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim * (l.in_dim + 1)).sum()
    }

    /// Orthogonal weights (gain sqrt 2 for hidden layers, `output_gain` for
    /// the last) and zero biases.
    pub fn init_layer<R: Rng + ?Sized>(
        &self,
        store: &mut ParamStore,
        layer: usize,
        gain: f64,
        trainable: bool,
        rng: &mut R,
    ) -> Result<(), NnError> {
        let spec = self.layers[layer - 1];
        let w = orthogonal(spec.out_dim, spec.in_dim, gain, rng);
        store.insert_matrix(self.weight_name(layer), &w, trainable)?;
        store.insert(self.bias_name(layer), Entry::new(vec![spec.out_dim], vec![0.0; spec.out_dim], trainable))
    }

    pub fn init_params<R: Rng + ?Sized>(
        &self,
        store: &mut ParamStore,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<(), NnError> {
        for i in 1..=self.depth() {
            let gain = if i == self.depth() { output_gain } else { std::f64::consts::SQRT_2 };
            self.init_layer(store, i, gain, true, rng)?;
        }
        Ok(())
    }

    /// Checks that every parameter exists with the declared shape.
    pub fn check(&self, store: &ParamStore) -> Result<(), NnError> {
        for (i, l) in self.layers.iter().enumerate() {
            for (name, shape) in
                [(self.weight_name(i + 1), vec![l.out_dim, l.in_dim]), (self.bias_name(i + 1), vec![l.out_dim])]
            {
                let e = store.get(&name)?;
                if e.shape != shape {
                    return Err(NnError::ShapeMismatch { context: name, expected: shape, got: e.shape.clone() });
                }
            }
        }
        Ok(())
    }

    /// Batched forward pass without recording. Returns every post-activation,
    /// the last one being the network output.
    pub fn activations(&self, store: &ParamStore, input: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>, NnError> {
        if input.ncols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                context: format!("{} input", self.prefix),
                expected: vec![input.nrows(), self.input_dim()],
                got: input.shape().to_vec(),
            });
        }
        let mut out = Vec::with_capacity(self.depth());
        let mut h = input.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let w = store.get(&self.weight_name(i + 1))?.as_matrix();
            let b = store.get(&self.bias_name(i + 1))?.as_matrix();
            let mut z = h.dot(&w.t()) + &b;
            if l.activation == Activation::Tanh {
                z.mapv_inplace(f64::tanh);
            }
            out.push(z.clone());
            h = z;
        }
        Ok(out)
    }

    pub fn forward_batch(&self, store: &ParamStore, input: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.activations(store, input)?.pop().expect("at least one layer"))
    }

    pub fn forward(&self, store: &ParamStore, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_batch(store, x)?.into_raw_vec_and_offset().0)
    }

    /// Records the forward pass on `tape`. With `track = false` every
    /// parameter is a constant, so no gradient reaches this network.
    pub fn record(&self, tape: &mut Tape, store: &ParamStore, x: Var, track: bool) -> Result<Var, NnError> {
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            let (wn, bn) = (self.weight_name(i + 1), self.bias_name(i + 1));
            let (w, b) = if track {
                (tape.param(store, &wn)?, tape.param(store, &bn)?)
            } else {
                (tape.param_detached(store, &wn)?, tape.param_detached(store, &bn)?)
            };
            let z = tape.matmul_t(h, w)?;
            h = tape.add_row(z, b)?;
            if l.activation == Activation::Tanh {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }
}
