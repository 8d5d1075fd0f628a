//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every primitive records one node holding its output value plus whatever
//! it needs for the backward pass. Nodes are appended in execution order, so
//! walking the tape from the end visits them in reverse topological order.

use std::collections::HashMap;

use super::tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc};
use super::{ParamGrads, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Variance stabilizer inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddConst(Var),
    MulConst(Var, Tensor),
    Scale(Var, f64),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    Sum(Var),
    Mean(Var),
    Square(Var),
    Log(Var),
    Nll {
        logits: Var,
        probs: Vec<f64>,
        targets: Vec<(usize, usize)>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Single-owner record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Result of [`Tape::backward`]: adjoints of every node plus per-parameter gradients.
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
    params: ParamGrads,
}

impl Gradients {
    /// Gradient with respect to any recorded node, zeros if unreached.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        let shape = tape.value(v).shape().to_vec();
        match &self.adjoints[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("adjoint shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn params(&self) -> &ParamGrads {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    dst.get_or_insert_with(|| vec![0.0; len])
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(Error::NonFinite(format!("{op:?}").chars().take(40).collect()));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A constant input; receives an adjoint but no parameter gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Bind a parameter; repeated calls for the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: store.get(id).clone(),
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((r, k), (k2, c)) = (ta.dims2(), tb.dims2());
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; r * c];
        gemm_acc(ta.data(), tb.data(), &mut out, r, k, c);
        self.push(Tensor::matrix(r, c, out)?, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let src = t.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push(Tensor::matrix(c, r, out)?, Op::Transpose(a))
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape().to_vec();
        self.push(Tensor::new(shape, out)?, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn broadcast_row(
        &mut self,
        name: &'static str,
        x: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        let (r, c) = tx.dims2();
        if tr.numel() != c {
            return Err(mismatch(name, tx, tr));
        }
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            out.extend(tx.row_slice(i).iter().zip(tr.data()).map(|(a, b)| f(*a, *b)));
        }
        self.push(Tensor::matrix(r, c, out)?, op)
    }

    /// `x + row`, broadcasting a `1 x c` row over every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.broadcast_row("add_row", x, row, |a, b| a + b, Op::AddRow(x, row))
    }

    /// `x * row` elementwise per row.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.broadcast_row("mul_row", x, row, |a, b| a * b, Op::MulRow(x, row))
    }

    /// `x + c` for a constant tensor `c` (masks, noise, positional codes).
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape() != c.shape() {
            return Err(mismatch("add_const", tx, c));
        }
        let out = tx.data().iter().zip(c.data()).map(|(a, b)| a + b).collect();
        let shape = tx.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::AddConst(x))
    }

    /// `x * c` elementwise for a constant tensor `c`.
    pub fn mul_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape() != c.shape() {
            return Err(mismatch("mul_const", tx, c));
        }
        let out = tx.data().iter().zip(c.data()).map(|(a, b)| a * b).collect();
        let shape = tx.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::MulConst(x, c.clone()))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let tx = self.value(x);
        let out = tx.data().iter().map(|a| a * s).collect();
        let shape = tx.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Scale(x, s))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat_rows of nothing"));
        };
        let c = self.value(first).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != c {
                return Err(mismatch("concat_rows", self.value(first), t));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        self.push(Tensor::matrix(rows, c, out)?, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat_cols of nothing"));
        };
        let r = self.value(first).rows();
        let mut total = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != r {
                return Err(mismatch("concat_cols", self.value(first), t));
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        self.push(Tensor::matrix(r, total, out)?, Op::ConcatCols(parts.to_vec()))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        if start > end || end > r {
            return Err(Error::ShapeMismatch {
                op: "slice_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let out = t.data()[start * c..end * c].to_vec();
        self.push(Tensor::matrix(end - start, c, out)?, Op::SliceRows(x, start))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        if start > end || end > c {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&t.row_slice(i)[start..end]);
        }
        self.push(Tensor::matrix(r, end - start, out)?, Op::SliceCols(x, start))
    }

    /// Rows of an embedding table selected by `ids`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (n, d) = t.dims2();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= n {
                return Err(Error::ShapeMismatch {
                    op: "gather",
                    lhs: t.shape().to_vec(),
                    rhs: vec![id],
                });
            }
            out.extend_from_slice(t.row_slice(id));
        }
        self.push(Tensor::matrix(ids.len(), d, out)?, Op::Gather(table, ids.to_vec()))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(x);
        let out = t.data().iter().map(|v| f(*v)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, op)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.map(x, |v| v * v, Op::Square(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("non-positive input {bad}"),
            });
        }
        self.map(x, f64::ln, Op::Log(x))
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            out.extend(softmax_row(t.row_slice(i)));
        }
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Softmax(x))
    }

    /// Row-wise normalization to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let mut out = Vec::with_capacity(r * c);
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = t.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(s);
            out.extend(row.iter().map(|v| (v - mean) * s));
        }
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::LayerNorm { x, inv_std })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Mean over `targets` of `-log softmax(logits[row])[col]`, computed as a
    /// fused log-softmax so that no probability is ever passed through `log`.
    pub fn nll(&mut self, logits: Var, targets: &[(usize, usize)]) -> Result<Var> {
        if targets.is_empty() {
            return Err(Error::invalid("nll with no targets"));
        }
        let t = self.value(logits);
        let (r, c) = t.dims2();
        let mut probs = Vec::with_capacity(r * c);
        let mut log_z = Vec::with_capacity(r);
        for i in 0..r {
            let row = t.row_slice(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            log_z.push(m + z.ln());
            probs.extend(row.iter().map(|v| (v - m).exp() / z));
        }
        let mut total = 0.0;
        for &(row, col) in targets {
            if row >= r || col >= c {
                return Err(Error::ShapeMismatch {
                    op: "nll",
                    lhs: t.shape().to_vec(),
                    rhs: vec![row, col],
                });
            }
            total += log_z[row] - t.get(row, col);
        }
        let value = Tensor::scalar(total / targets.len() as f64);
        self.push(
            value,
            Op::Nll {
                logits,
                probs,
                targets: targets.to_vec(),
            },
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let n = self.nodes.len();
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut adj);
            adj[idx] = Some(g);
        }

        let mut params = vec![None; self.params.keys().map(|p| p.0 + 1).max().unwrap_or(0)];
        for (&pid, &var) in &self.params {
            params[pid.0] = adj[var.0].clone();
        }
        Ok(Gradients {
            adjoints: adj,
            params: ParamGrads::from_parts(params),
        })
    }

    /// Like [`Tape::backward`] but with gradients sized for `store`.
    pub fn param_grads(&self, loss: Var, store: &ParamStore) -> Result<ParamGrads> {
        let g = self.backward(loss)?;
        let mut out = ParamGrads::zeros_like(store);
        for id in g.params.ids() {
            out.set(id, g.params.get(id).unwrap().to_vec());
        }
        Ok(out)
    }

    fn propagate(&self, node: &Node, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let len = |v: Var| self.nodes[v.0].value.numel();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (r, k) = val(*a).dims2();
                let c = val(*b).cols();
                let da = add_into(&mut adj[a.0], r * k);
                gemm_bt_acc(g, val(*b).data(), da, r, c, k);
                let db = add_into(&mut adj[b.0], k * c);
                gemm_at_acc(val(*a).data(), g, db, k, r, c);
            }
            Op::Transpose(a) => {
                let (r, c) = val(*a).dims2();
                let da = add_into(&mut adj[a.0], r * c);
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Add(a, b) => {
                acc(add_into(&mut adj[a.0], g.len()), g, 1.0);
                acc(add_into(&mut adj[b.0], g.len()), g, 1.0);
            }
            Op::Sub(a, b) => {
                acc(add_into(&mut adj[a.0], g.len()), g, 1.0);
                acc(add_into(&mut adj[b.0], g.len()), g, -1.0);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a).data(), val(*b).data());
                let da = add_into(&mut adj[a.0], g.len());
                da.iter_mut().zip(g).zip(vb).for_each(|((d, g), y)| *d += g * y);
                let db = add_into(&mut adj[b.0], g.len());
                db.iter_mut().zip(g).zip(va).for_each(|((d, g), x)| *d += g * x);
            }
            Op::AddRow(x, row) => {
                acc(add_into(&mut adj[x.0], g.len()), g, 1.0);
                let c = len(*row);
                let dr = add_into(&mut adj[row.0], c);
                for chunk in g.chunks(c) {
                    acc(dr, chunk, 1.0);
                }
            }
            Op::MulRow(x, row) => {
                let c = len(*row);
                let (vx, vr) = (val(*x).data(), val(*row).data());
                let dx = add_into(&mut adj[x.0], g.len());
                for (gc, dc) in g.chunks(c).zip(dx.chunks_mut(c)) {
                    dc.iter_mut().zip(gc).zip(vr).for_each(|((d, g), s)| *d += g * s);
                }
                let dr = add_into(&mut adj[row.0], c);
                for (gc, xc) in g.chunks(c).zip(vx.chunks(c)) {
                    dr.iter_mut().zip(gc).zip(xc).for_each(|((d, g), x)| *d += g * x);
                }
            }
            Op::AddConst(x) => acc(add_into(&mut adj[x.0], g.len()), g, 1.0),
            Op::MulConst(x, c) => {
                let dx = add_into(&mut adj[x.0], g.len());
                dx.iter_mut().zip(g).zip(c.data()).for_each(|((d, g), s)| *d += g * s);
            }
            Op::Scale(x, s) => acc(add_into(&mut adj[x.0], g.len()), g, *s),
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = len(*p);
                    acc(add_into(&mut adj[p.0], n), &g[off..off + n], 1.0);
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let r = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for p in parts {
                    let c = val(*p).cols();
                    let dp = add_into(&mut adj[p.0], r * c);
                    for i in 0..r {
                        acc(
                            &mut dp[i * c..(i + 1) * c],
                            &g[i * total + off..i * total + off + c],
                            1.0,
                        );
                    }
                    off += c;
                }
            }
            Op::SliceRows(x, start) => {
                let c = val(*x).cols();
                let dx = add_into(&mut adj[x.0], len(*x));
                acc(&mut dx[start * c..start * c + g.len()], g, 1.0);
            }
            Op::SliceCols(x, start) => {
                let (r, c) = val(*x).dims2();
                let w = node.value.cols();
                let dx = add_into(&mut adj[x.0], r * c);
                for i in 0..r {
                    acc(
                        &mut dx[i * c + start..i * c + start + w],
                        &g[i * w..(i + 1) * w],
                        1.0,
                    );
                }
            }
            Op::Gather(table, ids) => {
                let d = val(*table).cols();
                let dt = add_into(&mut adj[table.0], len(*table));
                for (k, &id) in ids.iter().enumerate() {
                    acc(&mut dt[id * d..(id + 1) * d], &g[k * d..(k + 1) * d], 1.0);
                }
            }
            Op::Relu(x) => {
                let vx = val(*x).data();
                let dx = add_into(&mut adj[x.0], g.len());
                for ((d, g), x) in dx.iter_mut().zip(g).zip(vx) {
                    if *x > 0.0 {
                        *d += g;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                let dx = add_into(&mut adj[x.0], g.len());
                dx.iter_mut().zip(g).zip(y).for_each(|((d, g), y)| *d += g * y * (1.0 - y));
            }
            Op::Square(x) => {
                let vx = val(*x).data();
                let dx = add_into(&mut adj[x.0], g.len());
                dx.iter_mut().zip(g).zip(vx).for_each(|((d, g), x)| *d += 2.0 * g * x);
            }
            Op::Log(x) => {
                let vx = val(*x).data();
                let dx = add_into(&mut adj[x.0], g.len());
                dx.iter_mut().zip(g).zip(vx).for_each(|((d, g), x)| *d += g / x);
            }
            Op::Softmax(x) => {
                let c = node.value.cols();
                let y = node.value.data();
                let dx = add_into(&mut adj[x.0], g.len());
                for ((gr, yr), dr) in g.chunks(c).zip(y.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, g), y) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += y * (g - dot);
                    }
                }
            }
            Op::LayerNorm { x, inv_std } => {
                let c = node.value.cols();
                let y = node.value.data();
                let dx = add_into(&mut adj[x.0], g.len());
                for (i, ((gr, yr), dr)) in
                    g.chunks(c).zip(y.chunks(c)).zip(dx.chunks_mut(c)).enumerate()
                {
                    let mg = gr.iter().sum::<f64>() / c as f64;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for ((d, g), y) in dr.iter_mut().zip(gr).zip(yr) {
                        *d += inv_std[i] * (g - mg - y * mgy);
                    }
                }
            }
            Op::Sum(x) => {
                let dx = add_into(&mut adj[x.0], len(*x));
                dx.iter_mut().for_each(|d| *d += g[0]);
            }
            Op::Mean(x) => {
                let n = len(*x);
                let dx = add_into(&mut adj[x.0], n);
                let s = g[0] / n as f64;
                dx.iter_mut().for_each(|d| *d += s);
            }
            Op::Nll {
                logits,
                probs,
                targets,
            } => {
                let c = val(*logits).cols();
                let s = g[0] / targets.len() as f64;
                let dl = add_into(&mut adj[logits.0], probs.len());
                for &(row, col) in targets {
                    let base = row * c;
                    for j in 0..c {
                        dl[base + j] += s * probs[base + j];
                    }
                    dl[base + col] -= s;
                }
            }
        }
    }
}

fn acc(dst: &mut [f64], src: &[f64], s: f64) {
    dst.iter_mut().zip(src).for_each(|(d, v)| *d += s * v);
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of one row.
pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
