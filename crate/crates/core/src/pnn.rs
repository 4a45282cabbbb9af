//! Progressive actor: frozen earlier columns feed the newest column through
//! gated nonlinear lateral adapters.
//!
//! Columns share one layer layout. For target column `k`, hidden layer
//! `i >= 2` and the output head (`i = L + 1`) receive, before activation,
//! `sum_{j<k} U tanh(V (alpha * h_{i-1}^{(j)}))`. Only the last column's head
//! is evaluated.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{orthogonal, Activation, Entry, Mlp, NnError, ParamStore, Tape, Var};

/// Smallest adapter width produced by [`default_adapter_dim`].
pub const MIN_ADAPTER_DIM: usize = 16;
pub const V_GAIN: f64 = std::f64::consts::SQRT_2;
pub const U_GAIN: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum PnnError {
    #[error("no adapter into layer {layer} from column {column}")]
    NoSuchAdapter { layer: usize, column: usize },
    #[error("column layouts differ: {0}")]
    IncompatibleShapes(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Adapter width for a layer whose lateral inputs are `n_prev` wide, with
/// `columns` columns in total.
pub fn default_adapter_dim(n_prev: usize, columns: usize) -> usize {
    (n_prev / columns.max(1)).max(MIN_ADAPTER_DIM)
}

/// Name prefix of the adapter from column `source` into layer `layer` of
/// column `target`. The common two-column case keeps the short form.
pub fn adapter_prefix(target: usize, layer: usize, source: usize) -> String {
    if target == 2 {
        format!("adapt.l{layer}.c{source}")
    } else {
        format!("adapt.k{target}.l{layer}.c{source}")
    }
}

/// Gaussian noise added to one post-activation during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    /// 1-based column index.
    pub column: usize,
    /// 1-based hidden layer index.
    pub layer: usize,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressiveActor {
    /// Column layouts; column `k` (1-based) uses prefix `col{k}`.
    pub columns: Vec<Mlp>,
    /// Adapter width per target layer, indexed by `layer - 2`.
    pub adapter_dims: Vec<usize>,
}

impl ProgressiveActor {
    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Hidden layers per column.
    pub fn hidden_layers(&self) -> usize {
        self.columns[0].depth() - 1
    }

    pub fn head_layer(&self) -> usize {
        self.columns[0].depth()
    }

    pub fn input_dim(&self) -> usize {
        self.columns[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.columns[0].output_dim()
    }

    pub fn column(&self, k: usize) -> &Mlp {
        &self.columns[k - 1]
    }

    fn adapter_dim(&self, layer: usize) -> usize {
        self.adapter_dims[layer - 2]
    }

    /// Starts a progressive actor whose first column is `source`, renamed to
    /// `col1` and frozen.
    pub fn from_source(source: &Mlp, source_store: &ParamStore) -> Result<(Self, ParamStore), PnnError> {
        source.check(source_store)?;
        let col = Mlp { prefix: "col1".into(), layers: source.layers.clone() };
        let mut store = ParamStore::new();
        for layer in 1..=source.depth() {
            for (from, to) in source.layer_params(layer).iter().zip(col.layer_params(layer)) {
                let e = source_store.get(from)?;
                store.insert(to, Entry::new(e.shape.clone(), e.values.clone(), false))?;
            }
        }
        Ok((Self { columns: vec![col], adapter_dims: Vec::new() }, store))
    }

    /// Freezes every existing entry and appends a fresh trainable column
    /// with adapters from all earlier columns. `adapter_dim` overrides the
    /// default width.
    pub fn add_column<R: Rng + ?Sized>(
        &mut self,
        store: &mut ParamStore,
        adapter_dim: Option<usize>,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<(), PnnError> {
        store.set_all_trainable(false);
        let k = self.columns.len() + 1;
        let layout = self.columns[0].layers.clone();
        let col = Mlp { prefix: format!("col{k}"), layers: layout.clone() };
        col.init_params(store, output_gain, rng)?;
        self.adapter_dims = (2..=layout.len())
            .map(|i| adapter_dim.unwrap_or_else(|| default_adapter_dim(layout[i - 2].out_dim, k)))
            .collect();
        for i in 2..=layout.len() {
            let n_prev = layout[i - 2].out_dim;
            let n_out = layout[i - 1].out_dim;
            let a = self.adapter_dims[i - 2];
            for j in 1..k {
                let p = adapter_prefix(k, i, j);
                store.insert(format!("{p}.alpha"), Entry::new(vec![1], vec![1.0], true))?;
                store.insert_matrix(format!("{p}.V"), &orthogonal(a, n_prev, V_GAIN, rng), true)?;
                store.insert_matrix(format!("{p}.U"), &orthogonal(n_out, a, U_GAIN, rng), true)?;
            }
        }
        self.columns.push(col);
        Ok(())
    }

    /// Names of all adapter entries into the last column.
    pub fn adapter_names(&self) -> Vec<String> {
        let k = self.num_columns();
        let mut out = Vec::new();
        for i in 2..=self.head_layer() {
            for j in 1..k {
                let p = adapter_prefix(k, i, j);
                out.extend(["alpha", "V", "U"].map(|s| format!("{p}.{s}")));
            }
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.columns.iter().flat_map(Mlp::param_names).collect();
        names.extend(self.adapter_names());
        names
    }

    /// Checks that adapters exist for every (layer, earlier column) pair.
    pub fn check(&self, store: &ParamStore) -> Result<(), PnnError> {
        for c in &self.columns {
            if c.layers != self.columns[0].layers {
                return Err(PnnError::IncompatibleShapes(format!("{} differs from col1", c.prefix)));
            }
            c.check(store)?;
        }
        for name in self.adapter_names() {
            store.get(&name)?;
        }
        Ok(())
    }

    /// Pins the gain of the adapter from column `source` into layer `layer`
    /// of the last column and marks it non-trainable.
    pub fn set_adapter_gain(
        &self,
        store: &mut ParamStore,
        layer: usize,
        source: usize,
        value: f64,
    ) -> Result<(), PnnError> {
        let k = self.num_columns();
        if layer < 2 || layer > self.head_layer() || source == 0 || source >= k {
            return Err(PnnError::NoSuchAdapter { layer, column: source });
        }
        let e = store.get_mut(&format!("{}.alpha", adapter_prefix(k, layer, source)))?;
        e.values[0] = value;
        e.trainable = false;
        Ok(())
    }

    pub fn adapter_gain(&self, store: &ParamStore, layer: usize, source: usize) -> Result<f64, PnnError> {
        let k = self.num_columns();
        if layer < 2 || layer > self.head_layer() || source == 0 || source >= k {
            return Err(PnnError::NoSuchAdapter { layer, column: source });
        }
        Ok(store.get(&format!("{}.alpha", adapter_prefix(k, layer, source)))?.values[0])
    }

    /// Batched forward pass. Adapters into intermediate columns are used
    /// when present, so a frozen K-column stack evaluates as it did when it
    /// was trained.
    pub fn forward_batch(&self, store: &ParamStore, input: ArrayView2<'_, f64>) -> Result<Array2<f64>, PnnError> {
        self.forward_perturbed(store, input, None::<(&Perturbation, &mut rand_chacha::ChaCha8Rng)>)
    }

    pub fn forward(&self, store: &ParamStore, input: &[f64]) -> Result<Vec<f64>, PnnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
        Ok(self.forward_batch(store, x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_perturbed<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        input: ArrayView2<'_, f64>,
        mut noise: Option<(&Perturbation, &mut R)>,
    ) -> Result<Array2<f64>, PnnError> {
        if input.ncols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                context: "progressive actor input".into(),
                expected: vec![input.nrows(), self.input_dim()],
                got: input.shape().to_vec(),
            }
            .into());
        }
        let depth = self.head_layer();
        let kmax = self.num_columns();
        // hidden[k-1][i-1] = post-activation of hidden layer i in column k.
        let mut hidden: Vec<Vec<Array2<f64>>> = Vec::with_capacity(kmax);
        let mut output = None;
        for k in 1..=kmax {
            let col = self.column(k);
            let last_layer = if k == kmax { depth } else { depth - 1 };
            let mut hs: Vec<Array2<f64>> = Vec::with_capacity(last_layer);
            for i in 1..=last_layer {
                let prev = if i == 1 { input.to_owned() } else { hs[i - 2].clone() };
                let w = store.get(&col.weight_name(i))?.as_matrix();
                let b = store.get(&col.bias_name(i))?.as_matrix();
                let mut z = prev.dot(&w.t()) + &b;
                if i >= 2 {
                    for (j, hj) in hidden.iter().enumerate() {
                        let p = adapter_prefix(k, i, j + 1);
                        if !store.contains(&format!("{p}.V")) {
                            continue;
                        }
                        let alpha = store.get(&format!("{p}.alpha"))?.values[0];
                        let v = store.get(&format!("{p}.V"))?.as_matrix();
                        let u = store.get(&format!("{p}.U"))?.as_matrix();
                        let a = (&hj[i - 2] * alpha).dot(&v.t()).mapv(f64::tanh);
                        z += &a.dot(&u.t());
                    }
                }
                if col.layers[i - 1].activation == Activation::Tanh {
                    z.mapv_inplace(f64::tanh);
                }
                if i < depth {
                    if let Some((p, rng)) = noise.as_mut() {
                        if p.column == k && p.layer == i && p.sigma > 0.0 {
                            let dist = Normal::new(0.0, p.sigma).expect("positive sigma");
                            z.mapv_inplace(|v| v + dist.sample(&mut **rng));
                        }
                    }
                }
                hs.push(z);
            }
            if k == kmax {
                output = hs.pop();
            }
            hidden.push(hs);
        }
        Ok(output.expect("at least one column"))
    }

    /// Records the forward pass on `tape`. Frozen entries enter as
    /// constants, so gradients reach only trainable adapters and columns.
    pub fn record(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, PnnError> {
        let depth = self.head_layer();
        let kmax = self.num_columns();
        let mut hidden: Vec<Vec<Var>> = Vec::with_capacity(kmax);
        let mut output = None;
        for k in 1..=kmax {
            let col = self.column(k);
            let last_layer = if k == kmax { depth } else { depth - 1 };
            let mut hs: Vec<Var> = Vec::with_capacity(last_layer);
            for i in 1..=last_layer {
                let prev = if i == 1 { x } else { hs[i - 2] };
                let w = tape.param(store, &col.weight_name(i))?;
                let b = tape.param(store, &col.bias_name(i))?;
                let zw = tape.matmul_t(prev, w)?;
                let mut z = tape.add_row(zw, b)?;
                if i >= 2 {
                    for (j, hj) in hidden.iter().enumerate() {
                        let p = adapter_prefix(k, i, j + 1);
                        if !store.contains(&format!("{p}.V")) {
                            continue;
                        }
                        let alpha = tape.param(store, &format!("{p}.alpha"))?;
                        let v = tape.param(store, &format!("{p}.V"))?;
                        let u = tape.param(store, &format!("{p}.U"))?;
                        let gated = tape.mul_scalar(hj[i - 2], alpha)?;
                        let proj = tape.matmul_t(gated, v)?;
                        let act = tape.tanh(proj);
                        let mixed = tape.matmul_t(act, u)?;
                        z = tape.add(z, mixed)?;
                    }
                }
                if col.layers[i - 1].activation == Activation::Tanh {
                    z = tape.tanh(z);
                }
                hs.push(z);
            }
            if k == kmax {
                output = hs.pop();
            }
            hidden.push(hs);
        }
        Ok(output.expect("at least one column"))
    }

    pub fn adapter_dim_for(&self, layer: usize) -> usize {
        self.adapter_dim(layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn two_column(seed: u64) -> (ProgressiveActor, ParamStore) {
        let src = Mlp::new("pi", 8, &[32, 32, 32], 8);
        let mut s = ParamStore::new();
        let mut rng = seeded(seed);
        src.init_params(&mut s, 0.5, &mut rng).unwrap();
        let (mut pnn, mut store) = ProgressiveActor::from_source(&src, &s).unwrap();
        pnn.add_column(&mut store, None, 0.5, &mut rng).unwrap();
        (pnn, store)
    }

    #[test]
    fn default_adapter_width_halves_for_two_columns() {
        assert_eq!(default_adapter_dim(256, 2), 128);
        assert_eq!(default_adapter_dim(20, 2), MIN_ADAPTER_DIM);
    }

    #[test]
    fn only_the_new_column_and_adapters_are_trainable() {
        let (pnn, store) = two_column(1);
        for (name, e) in store.iter() {
            assert_eq!(e.trainable, !name.starts_with("col1."), "{name}");
        }
        pnn.check(&store).unwrap();
        assert_eq!(pnn.adapter_names().len(), 3 * 3);
    }

    #[test]
    fn first_layer_has_no_adapter() {
        let (pnn, mut store) = two_column(2);
        assert!(matches!(pnn.set_adapter_gain(&mut store, 1, 1, 0.0), Err(PnnError::NoSuchAdapter { layer: 1, .. })));
        assert!(pnn.set_adapter_gain(&mut store, 2, 2, 0.0).is_err());
    }

    #[test]
    fn zero_gains_reduce_to_the_target_column() {
        let (pnn, mut store) = two_column(3);
        for i in 2..=pnn.head_layer() {
            pnn.set_adapter_gain(&mut store, i, 1, 0.0).unwrap();
        }
        let x = Array2::from_shape_fn((4, 8), |(i, j)| ((i * 8 + j) as f64).sin());
        let got = pnn.forward_batch(&store, x.view()).unwrap();
        let want = pnn.column(2).forward_batch(&store, x.view()).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn recorded_pass_matches_direct_pass() {
        let (pnn, store) = two_column(4);
        let x = Array2::from_shape_fn((3, 8), |(i, j)| (i as f64 - j as f64) * 0.2);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = pnn.record(&mut tape, &store, xv).unwrap();
        let direct = pnn.forward_batch(&store, x.view()).unwrap();
        for (a, b) in tape.value(y).iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn noise_changes_output_only_when_enabled() {
        let (pnn, store) = two_column(5);
        let x = Array2::from_elem((1, 8), 0.3);
        let clean = pnn.forward_batch(&store, x.view()).unwrap();
        let mut rng = seeded(0);
        let p = Perturbation { column: 1, layer: 1, sigma: 0.0 };
        let same = pnn.forward_perturbed(&store, x.view(), Some((&p, &mut rng))).unwrap();
        assert_eq!(clean, same);
        let p = Perturbation { column: 2, layer: 2, sigma: 1.0 };
        let noisy = pnn.forward_perturbed(&store, x.view(), Some((&p, &mut rng))).unwrap();
        assert_ne!(clean, noisy);
    }
}
