//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! Every value is a 2-D array whose leading dimension is the batch. A
//! backward sweep from a `1 x 1` node yields gradients for every parameter
//! leaf registered as trainable; detached or frozen leaves never appear in
//! the result.

use std::f64::consts::LN_2;

use indexmap::IndexMap;
use ndarray::{s, Array2, Axis, Zip};

use super::params::ParamStore;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(String),
    /// `x [B, in] * W^T`, `W [out, in]`.
    MatMulT(Var, Var),
    /// `x [B, n] + b [1, n]` broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `x * s` with `s` a `1 x 1` node.
    MulScalar(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    LogOneMinusTanhSq(Var),
    Min(Var, Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    SumCols(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Parameter gradients keyed by entry name, in first-use order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    map: IndexMap<String, Array2<f64>>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.map.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array2<f64>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Keeps only gradients whose name satisfies `keep`.
    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        self.map.retain(|k, _| keep(k));
    }

    fn accumulate(&mut self, name: &str, g: Array2<f64>) {
        match self.map.get_mut(name) {
            Some(acc) => *acc += &g,
            None => {
                self.map.insert(name.to_string(), g);
            }
        }
    }
}

/// `log(1 - tanh(x)^2)` evaluated without cancellation.
pub fn log_one_minus_tanh_sq(x: f64) -> f64 {
    let z = -2.0 * x;
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    2.0 * (LN_2 - x - softplus)
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Registers a parameter. It is differentiated iff it is trainable.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NnError> {
        let e = store.get(name)?;
        let value = e.as_matrix().to_owned();
        Ok(if e.trainable {
            self.push(value, Op::Param(name.to_string()), true)
        } else {
            self.push(value, Op::Leaf, false)
        })
    }

    /// Registers a parameter as a constant regardless of its flag.
    pub fn param_detached(&mut self, store: &ParamStore, name: &str) -> Result<Var, NnError> {
        let value = store.get(name)?.as_matrix().to_owned();
        Ok(self.push(value, Op::Leaf, false))
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var, NnError> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ncols() != wv.ncols() {
            return Err(NnError::ShapeMismatch {
                context: "matmul".into(),
                expected: vec![xv.nrows(), wv.ncols()],
                got: vec![xv.nrows(), xv.ncols()],
            });
        }
        let y = xv.dot(&wv.t());
        let ng = self.needs(x) || self.needs(w);
        Ok(self.push(y, Op::MatMulT(x, w), ng))
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, NnError> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return Err(NnError::ShapeMismatch {
                context: "bias".into(),
                expected: vec![1, xv.ncols()],
                got: vec![bv.nrows(), bv.ncols()],
            });
        }
        let y = xv + bv;
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(y, Op::AddRow(x, b), ng))
    }

    fn same_shape(&self, a: Var, b: Var, context: &str) -> Result<(), NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dim() != bv.dim() {
            return Err(NnError::ShapeMismatch {
                context: context.into(),
                expected: vec![av.nrows(), av.ncols()],
                got: vec![bv.nrows(), bv.ncols()],
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "add")?;
        let y = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "sub")?;
        let y = self.value(a) - self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "mul")?;
        let y = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Mul(a, b), ng))
    }

    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var, NnError> {
        if self.value(s).dim() != (1, 1) {
            return Err(NnError::ShapeMismatch {
                context: "scalar gain".into(),
                expected: vec![1, 1],
                got: self.value(s).shape().to_vec(),
            });
        }
        let y = self.value(x) * self.scalar(s);
        let ng = self.needs(x) || self.needs(s);
        Ok(self.push(y, Op::MulScalar(x, s), ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y = self.value(x) * c;
        let ng = self.needs(x);
        self.push(y, Op::Scale(x, c), ng)
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let y = self.value(x) + c;
        let ng = self.needs(x);
        self.push(y, Op::Offset(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(f64::tanh);
        let ng = self.needs(x);
        self.push(y, Op::Tanh(x), ng)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(f64::exp);
        let ng = self.needs(x);
        self.push(y, Op::Exp(x), ng)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(|v| v * v);
        let ng = self.needs(x);
        self.push(y, Op::Square(x), ng)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let y = self.value(x).mapv(|v| v.clamp(lo, hi));
        let ng = self.needs(x);
        self.push(y, Op::Clamp(x, lo, hi), ng)
    }

    pub fn log_one_minus_tanh_sq(&mut self, x: Var) -> Var {
        let y = self.value(x).mapv(log_one_minus_tanh_sq);
        let ng = self.needs(x);
        self.push(y, Op::LogOneMinusTanhSq(x), ng)
    }

    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape(a, b, "min")?;
        let mut y = self.value(a).clone();
        Zip::from(&mut y).and(self.value(b)).for_each(|y, &b| *y = y.min(b));
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::Min(a, b), ng))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (self.value(a), self.value(b));
        let y = ndarray::concatenate(Axis(1), &[av.view(), bv.view()]).map_err(|_| NnError::ShapeMismatch {
            context: "concat".into(),
            expected: vec![av.nrows()],
            got: vec![bv.nrows()],
        })?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(y, Op::ConcatCols(a, b), ng))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Var {
        let y = self.value(x).slice(s![.., start..end]).to_owned();
        let ng = self.needs(x);
        self.push(y, Op::SliceCols(x, start), ng)
    }

    /// Row sums, `[B, n] -> [B, 1]`.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let y = self.value(x).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.needs(x);
        self.push(y, Op::SumCols(x), ng)
    }

    /// Mean of all elements, `-> [1, 1]`.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = v.sum() / v.len() as f64;
        let ng = self.needs(x);
        self.push(Array2::from_elem((1, 1), m), Op::Mean(x), ng)
    }

    /// Gradients of the `1 x 1` node `loss` w.r.t. every trainable parameter
    /// leaf that influences it.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        if self.value(loss).dim() != (1, 1) {
            return Err(NnError::NonScalarLoss);
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut out = Gradients::default();

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(a) => *a += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::Param(name) => out.accumulate(name, g),
                Op::MatMulT(x, w) => {
                    if self.needs(*x) {
                        acc(&mut grads, *x, g.dot(self.value(*w)));
                    }
                    if self.needs(*w) {
                        acc(&mut grads, *w, g.t().dot(self.value(*x)));
                    }
                }
                Op::AddRow(x, b) => {
                    if self.needs(*b) {
                        acc(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.needs(*x) {
                        acc(&mut grads, *x, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        acc(&mut grads, *b, -&g);
                    }
                    if self.needs(*a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        acc(&mut grads, *a, &g * self.value(*b));
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::MulScalar(x, s) => {
                    if self.needs(*s) {
                        let d = (&g * self.value(*x)).sum();
                        acc(&mut grads, *s, Array2::from_elem((1, 1), d));
                    }
                    if self.needs(*x) {
                        acc(&mut grads, *x, g * self.scalar(*s));
                    }
                }
                Op::Scale(x, c) => acc(&mut grads, *x, g * *c),
                Op::Offset(x) => acc(&mut grads, *x, g),
                Op::Tanh(x) => {
                    let mut d = g;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    acc(&mut grads, *x, d);
                }
                Op::Exp(x) => acc(&mut grads, *x, g * &node.value),
                Op::Square(x) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*x)).for_each(|d, &v| *d *= 2.0 * v);
                    acc(&mut grads, *x, d);
                }
                Op::Clamp(x, lo, hi) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*x)).for_each(|d, &v| {
                        if v < *lo || v > *hi {
                            *d = 0.0;
                        }
                    });
                    acc(&mut grads, *x, d);
                }
                Op::LogOneMinusTanhSq(x) => {
                    let mut d = g;
                    Zip::from(&mut d).and(self.value(*x)).for_each(|d, &v| *d *= -2.0 * v.tanh());
                    acc(&mut grads, *x, d);
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let mut d = g.clone();
                        Zip::from(&mut d).and(av).and(bv).for_each(|d, &x, &y| {
                            if x > y {
                                *d = 0.0;
                            }
                        });
                        acc(&mut grads, *a, d);
                    }
                    if self.needs(*b) {
                        let mut d = g;
                        Zip::from(&mut d).and(av).and(bv).for_each(|d, &x, &y| {
                            if x <= y {
                                *d = 0.0;
                            }
                        });
                        acc(&mut grads, *b, d);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let split = self.value(*a).ncols();
                    if self.needs(*a) {
                        acc(&mut grads, *a, g.slice(s![.., ..split]).to_owned());
                    }
                    if self.needs(*b) {
                        acc(&mut grads, *b, g.slice(s![.., split..]).to_owned());
                    }
                }
                Op::SliceCols(x, start) => {
                    let mut d = Array2::zeros(self.value(*x).dim());
                    let end = start + g.ncols();
                    d.slice_mut(s![.., *start..end]).assign(&g);
                    acc(&mut grads, *x, d);
                }
                Op::SumCols(x) => {
                    let shape = self.value(*x).dim();
                    let d = g.broadcast(shape).expect("row gradient broadcasts").to_owned();
                    acc(&mut grads, *x, d);
                }
                Op::Mean(x) => {
                    let shape = self.value(*x).dim();
                    let n = (shape.0 * shape.1) as f64;
                    acc(&mut grads, *x, Array2::from_elem(shape, g[[0, 0]] / n));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Entry;
    use ndarray::array;

    #[test]
    fn linear_sum_gradient_is_outer_product() {
        let mut store = ParamStore::new();
        store.insert("W", Entry::new(vec![2, 3], vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6], true)).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(array![[1.0, 2.0, 3.0]]);
        let w = tape.param(&store, "W").unwrap();
        let y = tape.matmul_t(x, w).unwrap();
        let s = tape.sum_cols(y);
        let loss = tape.mean(s);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("W").unwrap(), &array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]);
    }

    #[test]
    fn frozen_leaf_has_no_gradient_entry() {
        let mut store = ParamStore::new();
        store.insert("a", Entry::new(vec![1, 1], vec![2.0], false)).unwrap();
        store.insert("b", Entry::new(vec![1, 1], vec![3.0], true)).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, "a").unwrap();
        let b = tape.param(&store, "b").unwrap();
        let p = tape.mul(a, b).unwrap();
        let loss = tape.mean(p);
        let g = tape.backward(loss).unwrap();
        assert!(!g.contains("a"));
        assert_eq!(g.get("b").unwrap()[[0, 0]], 2.0);
    }

    #[test]
    fn non_scalar_loss_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Array2::zeros((2, 2)));
        assert!(matches!(tape.backward(x), Err(NnError::NonScalarLoss)));
    }

    #[test]
    fn stable_log_jacobian_matches_naive_form() {
        for x in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            let naive = (1.0 - f64::tanh(x).powi(2)).ln();
            assert!((log_one_minus_tanh_sq(x) - naive).abs() < 1e-12);
        }
        // Far in the tail the naive form underflows to -inf.
        assert!((log_one_minus_tanh_sq(40.0) - (2.0 * LN_2 - 80.0)).abs() < 1e-9);
    }

    #[test]
    fn min_routes_gradient_to_smaller_branch() {
        let mut store = ParamStore::new();
        store.insert("a", Entry::new(vec![1, 2], vec![1.0, 5.0], true)).unwrap();
        store.insert("b", Entry::new(vec![1, 2], vec![2.0, 4.0], true)).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&store, "a").unwrap();
        let b = tape.param(&store, "b").unwrap();
        let m = tape.min(a, b).unwrap();
        let loss = tape.mean(m);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get("a").unwrap(), &array![[0.5, 0.0]]);
        assert_eq!(g.get("b").unwrap(), &array![[0.0, 0.5]]);
    }
}
