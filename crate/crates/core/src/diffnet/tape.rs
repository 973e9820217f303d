//! Reverse-mode differentiation over a linear tape of matrix-valued nodes.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! valid topological order for accumulating adjoints.

use ndarray::{s, Array2, Axis};

use super::params::{Gradients, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Rows with a smaller norm are rejected by [`Tape::row_normalize`].
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Square(Var),
    Transpose(Var),
    RowNormalize(Var, Vec<f64>),
    RowDot(Var, Var),
    RowLogMeanExp(Var),
    LogMeanExpAll(Var),
    Mean(Var),
    Diag(Var),
    SelectRows(Var, Vec<usize>),
    MeanPoolRows(Var, Vec<Vec<usize>>),
    ConcatCols(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

/// `log(mean(exp(xs)))` with the max-shift.
pub fn log_mean_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + (x - m).exp(), n + 1));
    m + (sum / n as f64).ln()
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
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Leaf bound to a named parameter; its adjoint is reported by [`Tape::gradients`].
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let t = store
            .get(name)
            .ok_or_else(|| Error::shape(name, "parameter missing from store"))?;
        Ok(self.push(t.to_matrix(), Op::Param(name.to_string()), true))
    }

    fn check(&self, cond: bool, context: &str, a: Var, b: Var) -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(Error::shape(
                context,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.shape(a).1 == self.shape(b).0, "matmul", a, b)?;
        let v = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.shape(a).1 == self.shape(b).1, "matmul_nt", a, b)?;
        let v = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::MatMulNT(a, b), ng))
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(
            self.shape(bias).0 == 1 && self.shape(bias).1 == self.shape(x).1,
            "add_bias",
            x,
            bias,
        )?;
        let v = self.value(x) + self.value(bias);
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(v, Op::AddBias(x, bias), ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a.max(0.0));
        let ng = self.ng(x);
        self.push(v, Op::Relu(x), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.shape(a) == self.shape(b), "add", a, b)?;
        let v = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.shape(a) == self.shape(b), "sub", a, b)?;
        let v = self.value(a) - self.value(b);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::Sub(a, b), ng))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) * c;
        let ng = self.ng(x);
        self.push(v, Op::Scale(x, c), ng)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x) + c;
        let ng = self.ng(x);
        self.push(v, Op::AddScalar(x), ng)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(|a| a * a);
        let ng = self.ng(x);
        self.push(v, Op::Square(x), ng)
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let v = self.value(x).t().to_owned();
        let ng = self.ng(x);
        self.push(v, Op::Transpose(x), ng)
    }

    /// Unit-norm rows; rows with norm below [`NORM_FLOOR`] are an error.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let mut v = self.value(x).clone();
        let mut norms = Vec::with_capacity(v.nrows());
        for mut row in v.rows_mut() {
            let n = row.dot(&row).sqrt();
            if !(n >= NORM_FLOOR) {
                return Err(Error::DegenerateEmbedding { norm: n });
            }
            row.mapv_inplace(|a| a / n);
            norms.push(n);
        }
        let ng = self.ng(x);
        Ok(self.push(v, Op::RowNormalize(x, norms), ng))
    }

    /// Row-wise inner products, `n×1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.shape(a) == self.shape(b), "row_dot", a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let v = (va * vb).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::RowDot(a, b), ng))
    }

    /// Per row `log((1/m) Σ_j exp(x_ij))`, `n×1`.
    pub fn row_log_mean_exp(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let v = Array2::from_shape_fn((vx.nrows(), 1), |(i, _)| {
            log_mean_exp(vx.row(i).iter().copied())
        });
        let ng = self.ng(x);
        self.push(v, Op::RowLogMeanExp(x), ng)
    }

    /// `log(mean(exp(x)))` over every entry, `1×1`.
    pub fn log_mean_exp_all(&mut self, x: Var) -> Var {
        let s = log_mean_exp(self.value(x).iter().copied());
        let ng = self.ng(x);
        self.push(Array2::from_elem((1, 1), s), Op::LogMeanExpAll(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let s = vx.sum() / vx.len() as f64;
        let ng = self.ng(x);
        self.push(Array2::from_elem((1, 1), s), Op::Mean(x), ng)
    }

    pub fn diag(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if r != c {
            return Err(Error::shape("diag", format!("{r}×{c} is not square")));
        }
        let vx = self.value(x);
        let v = Array2::from_shape_fn((r, 1), |(i, _)| vx[[i, i]]);
        let ng = self.ng(x);
        Ok(self.push(v, Op::Diag(x), ng))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        if let Some(&bad) = rows.iter().find(|&&r| r >= vx.nrows()) {
            return Err(Error::shape("select_rows", format!("row {bad} of {}", vx.nrows())));
        }
        let v = vx.select(Axis(0), rows);
        let ng = self.ng(x);
        Ok(self.push(v, Op::SelectRows(x, rows.to_vec()), ng))
    }

    /// Row `i` of the output is the mean of `table` rows listed in `lists[i]`.
    pub fn mean_pool_rows(&mut self, table: Var, lists: &[Vec<usize>]) -> Result<Var> {
        let vt = self.value(table);
        let mut v = Array2::zeros((lists.len(), vt.ncols()));
        for (i, list) in lists.iter().enumerate() {
            if list.is_empty() {
                return Err(Error::EmptyAnnotation);
            }
            let mut row = v.row_mut(i);
            for &id in list {
                if id >= vt.nrows() {
                    return Err(Error::TokenOutOfRange {
                        id,
                        vocab: vt.nrows(),
                    });
                }
                row += &vt.row(id);
            }
            row /= list.len() as f64;
        }
        let ng = self.ng(table);
        Ok(self.push(v, Op::MeanPoolRows(table, lists.to_vec()), ng))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.shape(a).0 == self.shape(b).0, "concat_cols", a, b)?;
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts checked");
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(v, Op::ConcatCols(a, b), ng))
    }

    /// Adjoints of every node with respect to the scalar `output`.
    fn backward(&self, output: Var) -> Vec<Option<Array2<f64>>> {
        let mut adj: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(Array2::ones(self.nodes[output.0].value.dim()));

        fn acc(adj: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut adj[v.0] {
                Some(a) => *a += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Param(_) => {
                    adj[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if self.ng(*a) {
                        acc(&mut adj, *a, g.dot(&self.value(*b).t()));
                    }
                    if self.ng(*b) {
                        acc(&mut adj, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulNT(a, b) => {
                    if self.ng(*a) {
                        acc(&mut adj, *a, g.dot(self.value(*b)));
                    }
                    if self.ng(*b) {
                        acc(&mut adj, *b, g.t().dot(self.value(*a)));
                    }
                }
                Op::AddBias(x, b) => {
                    if self.ng(*b) {
                        acc(&mut adj, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if self.ng(*x) {
                        acc(&mut adj, *x, g);
                    }
                }
                Op::Relu(x) => {
                    let mask = self.value(*x).mapv(|a| if a > 0.0 { 1.0 } else { 0.0 });
                    acc(&mut adj, *x, g * mask);
                }
                Op::Add(a, b) => {
                    if self.ng(*a) {
                        acc(&mut adj, *a, g.clone());
                    }
                    if self.ng(*b) {
                        acc(&mut adj, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.ng(*a) {
                        acc(&mut adj, *a, g.clone());
                    }
                    if self.ng(*b) {
                        acc(&mut adj, *b, -g);
                    }
                }
                Op::Scale(x, c) => acc(&mut adj, *x, g * *c),
                Op::AddScalar(x) => acc(&mut adj, *x, g),
                Op::Square(x) => acc(&mut adj, *x, g * self.value(*x) * 2.0),
                Op::Transpose(x) => acc(&mut adj, *x, g.t().to_owned()),
                Op::RowNormalize(x, norms) => {
                    let y = &node.value;
                    let mut dx = g.clone();
                    for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
                        let yr = y.row(i);
                        let proj = g.row(i).dot(&yr);
                        row.zip_mut_with(&yr, |d, &yv| *d = (*d - proj * yv) / norms[i]);
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::RowDot(a, b) => {
                    let col = g.column(0).insert_axis(Axis(1)).to_owned();
                    if self.ng(*a) {
                        acc(&mut adj, *a, self.value(*b) * &col);
                    }
                    if self.ng(*b) {
                        acc(&mut adj, *b, self.value(*a) * &col);
                    }
                }
                Op::RowLogMeanExp(x) => {
                    let sm = softmax_rows(self.value(*x));
                    let col = g.column(0).insert_axis(Axis(1)).to_owned();
                    acc(&mut adj, *x, sm * &col);
                }
                Op::LogMeanExpAll(x) => {
                    let vx = self.value(*x);
                    let m = vx.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    let mut e = vx.mapv(|v| (v - m).exp());
                    let z = e.sum();
                    e.mapv_inplace(|v| v / z * g[[0, 0]]);
                    acc(&mut adj, *x, e);
                }
                Op::Mean(x) => {
                    let vx = self.value(*x);
                    acc(&mut adj, *x, Array2::from_elem(vx.dim(), g[[0, 0]] / vx.len() as f64));
                }
                Op::Diag(x) => {
                    let n = self.shape(*x).0;
                    let mut dx = Array2::zeros((n, n));
                    for i in 0..n {
                        dx[[i, i]] = g[[i, 0]];
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::SelectRows(x, rows) => {
                    let mut dx = Array2::zeros(self.shape(*x));
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = dx.row_mut(r);
                        dst += &g.row(i);
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::MeanPoolRows(t, lists) => {
                    let mut dt = Array2::zeros(self.shape(*t));
                    for (i, list) in lists.iter().enumerate() {
                        let w = 1.0 / list.len() as f64;
                        for &id in list {
                            let mut dst = dt.row_mut(id);
                            dst.scaled_add(w, &g.row(i));
                        }
                    }
                    acc(&mut adj, *t, dt);
                }
                Op::ConcatCols(a, b) => {
                    let p = self.shape(*a).1;
                    if self.ng(*a) {
                        acc(&mut adj, *a, g.slice(s![.., ..p]).to_owned());
                    }
                    if self.ng(*b) {
                        acc(&mut adj, *b, g.slice(s![.., p..]).to_owned());
                    }
                }
            }
        }
        adj
    }

    /// Gradients of the scalar `output` for every parameter in `store`;
    /// parameters that never entered the tape get explicit zeros.
    pub fn gradients(&self, output: Var, store: &ParamStore) -> Result<Gradients> {
        if self.shape(output) != (1, 1) {
            return Err(Error::shape("gradients", "output is not a scalar"));
        }
        let adj = self.backward(output);
        let mut grads = store.zeros_like();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(name), Some(g)) = (&node.op, &adj[idx]) {
                let t: &mut Tensor = grads
                    .get_mut(name)
                    .ok_or_else(|| Error::shape(name.as_str(), "parameter missing from store"))?;
                for (dst, src) in t.data.iter_mut().zip(g.iter()) {
                    *dst += *src;
                }
            }
        }
        Ok(grads)
    }
}
