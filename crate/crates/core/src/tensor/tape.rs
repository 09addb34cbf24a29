//! Reverse-mode differentiation over a linear tape of recorded operations.
//!
//! Every operation appends one record holding its output value and the
//! handles of its operands. Operands always precede the record that consumes
//! them, so a single reverse sweep visits each record exactly once in
//! topological order.

use std::sync::Arc;

use super::dense::{matmul, matmul_a_bt, matmul_at_b, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction applied by [`Tape::segment_reduce`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    Sum,
    Mean,
    Max,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    SegmentMean(Var, Arc<[usize]>, Vec<usize>),
    // Flat (row, col) -> winning message row, `usize::MAX` for empty segments.
    SegmentMax(Var, Vec<usize>),
    SegmentSoftmax(Var, Arc<[usize]>),
    HeadDot(Var, Var, usize),
    MulHeads(Var, Var, usize),
    SumAll(Var),
    SoftmaxXent {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Tensor,
    },
}

struct Record {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the differentiated scalar with respect to `v`. Returns
    /// `None` when `v` does not influence the scalar or does not require
    /// gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but yields zeros of the right shape when no
    /// gradient flowed.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            Tensor::zeros(r, c)
        })
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    records: Vec<Record>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn check_indices(op: &'static str, idx: &[usize], bound: usize) -> Result<()> {
    match idx.iter().position(|&i| i >= bound) {
        Some(position) => Err(Error::Index {
            op,
            index: idx[position],
            bound,
            position,
        }),
        None => Ok(()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.records.push(Record {
            value,
            op,
            requires_grad,
        });
        Var(self.records.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.records[v.0].requires_grad
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.records[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = matmul(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.same_shape(tb, name)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the row vector `bias` (1×d) to every row of `x` (n×d).
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rows() != 1 || tb.cols() != tx.cols() {
            return Err(dim_err("add_row", tx, tb));
        }
        let mut out = tx.clone();
        let d = tx.cols();
        if d > 0 {
            for row in out.data_mut().chunks_mut(d) {
                for (o, b) in row.iter_mut().zip(tb.data()) {
                    *o += b;
                }
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, c), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push(out, Op::LeakyRelu(x, slope), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(dim_err("concat_cols", ta, tb));
        }
        let (p, q) = (ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(ta.rows() * (p + q));
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor::from_vec(ta.rows(), p + q, data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::vstack(&tensors)?;
        let rg = parts.iter().any(|&v| self.rg(v));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Row `i` of the output is row `idx[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let tx = self.value(x);
        check_indices("gather_rows", &idx, tx.rows())?;
        let d = tx.cols();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx.iter() {
            data.extend_from_slice(tx.row(i));
        }
        let out = Tensor::from_vec(idx.len(), d, data)?;
        let rg = self.rg(x);
        Ok(self.push(out, Op::GatherRows(x, idx), rg))
    }

    /// Reduces message rows into `n` destination rows. Messages are visited
    /// in the given order; destinations without messages receive zeros. For
    /// `Max`, the gradient goes to the first message attaining the maximum.
    pub fn segment_reduce(
        &mut self,
        msgs: Var,
        dst: Arc<[usize]>,
        n: usize,
        mode: Reduce,
    ) -> Result<Var> {
        let tm = self.value(msgs);
        if dst.len() != tm.rows() {
            return Err(Error::Dimension {
                op: "segment_reduce",
                left: tm.shape(),
                right: (dst.len(), 1),
            });
        }
        check_indices("segment_reduce", &dst, n)?;
        let d = tm.cols();
        let rg = self.rg(msgs);
        match mode {
            Reduce::Sum | Reduce::Mean => {
                let mut out = Tensor::zeros(n, d);
                let mut counts = vec![0usize; n];
                for (e, &t) in dst.iter().enumerate() {
                    counts[t] += 1;
                    let src = tm.row(e);
                    for (o, v) in out.row_mut(t).iter_mut().zip(src) {
                        *o += v;
                    }
                }
                if mode == Reduce::Sum {
                    return Ok(self.push(out, Op::SegmentSum(msgs, dst), rg));
                }
                for (t, &c) in counts.iter().enumerate() {
                    if c > 1 {
                        let inv = c as f64;
                        for o in out.row_mut(t) {
                            *o /= inv;
                        }
                    }
                }
                Ok(self.push(out, Op::SegmentMean(msgs, dst, counts), rg))
            }
            Reduce::Max => {
                let mut out = Tensor::zeros(n, d);
                let mut arg = vec![usize::MAX; n * d];
                for (e, &t) in dst.iter().enumerate() {
                    let src = tm.row(e);
                    for c in 0..d {
                        let slot = t * d + c;
                        if arg[slot] == usize::MAX || src[c] > out.data()[slot] {
                            out.data_mut()[slot] = src[c];
                            arg[slot] = e;
                        }
                    }
                }
                Ok(self.push(out, Op::SegmentMax(msgs, arg), rg))
            }
        }
    }

    /// Softmax of each column of `scores` over the arcs sharing a
    /// destination. Uses max subtraction per segment.
    pub fn segment_softmax(&mut self, scores: Var, dst: Arc<[usize]>, n: usize) -> Result<Var> {
        let ts = self.value(scores);
        if dst.len() != ts.rows() {
            return Err(Error::Dimension {
                op: "segment_softmax",
                left: ts.shape(),
                right: (dst.len(), 1),
            });
        }
        check_indices("segment_softmax", &dst, n)?;
        let h = ts.cols();
        let mut maxv = vec![f64::NEG_INFINITY; n * h];
        for (e, &t) in dst.iter().enumerate() {
            for c in 0..h {
                let m = &mut maxv[t * h + c];
                *m = m.max(ts.get(e, c));
            }
        }
        let mut out = Tensor::zeros(ts.rows(), h);
        let mut denom = vec![0.0; n * h];
        for (e, &t) in dst.iter().enumerate() {
            for c in 0..h {
                let z = (ts.get(e, c) - maxv[t * h + c]).exp();
                out.set(e, c, z);
                denom[t * h + c] += z;
            }
        }
        for (e, &t) in dst.iter().enumerate() {
            for c in 0..h {
                let v = out.get(e, c) / denom[t * h + c];
                out.set(e, c, v);
            }
        }
        let rg = self.rg(scores);
        Ok(self.push(out, Op::SegmentSoftmax(scores, dst), rg))
    }

    /// Per-head inner products: `x` is e×(H·k), `a` is 1×(H·k); output e×H
    /// with entry (i, h) = Σ_j x[i, h·k + j]·a[h·k + j].
    pub fn head_dot(&mut self, x: Var, a: Var, heads: usize) -> Result<Var> {
        let (tx, ta) = (self.value(x), self.value(a));
        if heads == 0 || ta.rows() != 1 || ta.cols() != tx.cols() || tx.cols() % heads != 0 {
            return Err(dim_err("head_dot", tx, ta));
        }
        let k = tx.cols() / heads;
        let mut out = Tensor::zeros(tx.rows(), heads);
        for i in 0..tx.rows() {
            let row = tx.row(i);
            for h in 0..heads {
                let s: f64 = row[h * k..(h + 1) * k]
                    .iter()
                    .zip(&ta.data()[h * k..(h + 1) * k])
                    .map(|(p, q)| p * q)
                    .sum();
                out.set(i, h, s);
            }
        }
        let rg = self.rg(x) || self.rg(a);
        Ok(self.push(out, Op::HeadDot(x, a, heads), rg))
    }

    /// Scales each head block of `x` (e×(H·k)) by the matching column of
    /// `w` (e×H).
    pub fn mul_heads(&mut self, x: Var, w: Var, heads: usize) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if heads == 0 || tw.rows() != tx.rows() || tw.cols() != heads || tx.cols() % heads != 0 {
            return Err(dim_err("mul_heads", tx, tw));
        }
        let k = tx.cols() / heads;
        let mut out = tx.clone();
        for i in 0..tx.rows() {
            for h in 0..heads {
                let s = tw.get(i, h);
                for v in &mut out.row_mut(i)[h * k..(h + 1) * k] {
                    *v *= s;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, Op::MulHeads(x, w, heads), rg))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    /// Mean negative log-likelihood over the rows with `mask[i]` set.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[bool]) -> Result<Var> {
        let tl = self.value(logits);
        let (n, c) = tl.shape();
        if labels.len() != n || mask.len() != n {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                left: tl.shape(),
                right: (labels.len(), mask.len()),
            });
        }
        let targets: Vec<(usize, usize)> = (0..n)
            .filter(|&i| mask[i])
            .map(|i| (i, labels[i]))
            .collect();
        if targets.is_empty() {
            return Err(Error::InvalidBatch("no masked nodes in loss".into()));
        }
        if let Some(&(row, label)) = targets.iter().find(|&&(_, l)| l >= c) {
            return Err(Error::InvalidBatch(format!(
                "label {label} on row {row} exceeds {c} classes"
            )));
        }
        let probs = softmax_rows(tl);
        let mut loss = 0.0;
        for &(i, y) in &targets {
            let row = tl.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[y];
        }
        loss /= targets.len() as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            },
            rg,
        ))
    }

    /// Back-propagates from the 1×1 value `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                left: out.shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.records.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::scalar(1.0));

        for k in (0..=output.0).rev() {
            let rec = &self.records[k];
            if !rec.requires_grad {
                continue;
            }
            let Some(g) = grads[k].take() else { continue };
            self.backprop_record(rec, &g, &mut grads);
            grads[k] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_record(&self, rec: &Record, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, delta: Tensor| {
            if !self.rg(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &rec.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(*a, matmul_a_bt(g, self.value(*b)));
                }
                if self.rg(*b) {
                    acc(*b, matmul_at_b(self.value(*a), g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, zip(g, tb, |x, y| x * y));
                }
                if self.rg(*b) {
                    acc(*b, zip(g, ta, |x, y| x * y));
                }
            }
            Op::AddRow(x, b) => {
                acc(*x, g.clone());
                if self.rg(*b) {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*b, gb);
                }
            }
            Op::Scale(x, c) => acc(*x, g.map(|v| v * c)),
            Op::Relu(x) => {
                let tx = self.value(*x);
                acc(*x, zip(g, tx, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::LeakyRelu(x, slope) => {
                let tx = self.value(*x);
                let s = *slope;
                acc(*x, zip(g, tx, |gv, xv| if xv > 0.0 { gv } else { s * gv }));
            }
            Op::ConcatCols(a, b) => {
                let p = self.value(*a).cols();
                let q = self.value(*b).cols();
                let n = g.rows();
                let mut ga = Vec::with_capacity(n * p);
                let mut gb = Vec::with_capacity(n * q);
                for r in 0..n {
                    let row = g.row(r);
                    ga.extend_from_slice(&row[..p]);
                    gb.extend_from_slice(&row[p..]);
                }
                acc(*a, Tensor::from_vec(n, p, ga).expect("shape"));
                acc(*b, Tensor::from_vec(n, q, gb).expect("shape"));
            }
            Op::ConcatRows(parts) => {
                let d = g.cols();
                let mut start = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    let slice = g.data()[start * d..(start + r) * d].to_vec();
                    acc(p, Tensor::from_vec(r, d, slice).expect("shape"));
                    start += r;
                }
            }
            Op::GatherRows(x, idx) => {
                let tx = self.value(*x);
                let mut gx = Tensor::zeros(tx.rows(), tx.cols());
                for (i, &src) in idx.iter().enumerate() {
                    for (o, v) in gx.row_mut(src).iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                acc(*x, gx);
            }
            Op::SegmentSum(x, dst) => {
                let tx = self.value(*x);
                let mut gx = Tensor::zeros(tx.rows(), tx.cols());
                for (e, &t) in dst.iter().enumerate() {
                    gx.row_mut(e).copy_from_slice(g.row(t));
                }
                acc(*x, gx);
            }
            Op::SegmentMean(x, dst, counts) => {
                let tx = self.value(*x);
                let mut gx = Tensor::zeros(tx.rows(), tx.cols());
                for (e, &t) in dst.iter().enumerate() {
                    let inv = 1.0 / counts[t] as f64;
                    for (o, v) in gx.row_mut(e).iter_mut().zip(g.row(t)) {
                        *o = v * inv;
                    }
                }
                acc(*x, gx);
            }
            Op::SegmentMax(x, arg) => {
                let tx = self.value(*x);
                let d = tx.cols();
                let mut gx = Tensor::zeros(tx.rows(), d);
                for (slot, &e) in arg.iter().enumerate() {
                    if e != usize::MAX {
                        let c = slot % d;
                        let v = gx.get(e, c) + g.data()[slot];
                        gx.set(e, c, v);
                    }
                }
                acc(*x, gx);
            }
            Op::SegmentSoftmax(x, dst) => {
                let y = &rec.value;
                let h = y.cols();
                let n = dst.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n * h];
                for (e, &t) in dst.iter().enumerate() {
                    for c in 0..h {
                        dot[t * h + c] += y.get(e, c) * g.get(e, c);
                    }
                }
                let mut gx = Tensor::zeros(y.rows(), h);
                for (e, &t) in dst.iter().enumerate() {
                    for c in 0..h {
                        gx.set(e, c, y.get(e, c) * (g.get(e, c) - dot[t * h + c]));
                    }
                }
                acc(*x, gx);
            }
            Op::HeadDot(x, a, heads) => {
                let (tx, ta) = (self.value(*x), self.value(*a));
                let k = tx.cols() / heads;
                if self.rg(*x) {
                    let mut gx = Tensor::zeros(tx.rows(), tx.cols());
                    for i in 0..tx.rows() {
                        for h in 0..*heads {
                            let gv = g.get(i, h);
                            for j in h * k..(h + 1) * k {
                                gx.set(i, j, gv * ta.data()[j]);
                            }
                        }
                    }
                    acc(*x, gx);
                }
                if self.rg(*a) {
                    let mut ga = Tensor::zeros(1, ta.cols());
                    for i in 0..tx.rows() {
                        let row = tx.row(i);
                        for h in 0..*heads {
                            let gv = g.get(i, h);
                            for j in h * k..(h + 1) * k {
                                ga.data_mut()[j] += gv * row[j];
                            }
                        }
                    }
                    acc(*a, ga);
                }
            }
            Op::MulHeads(x, w, heads) => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let k = tx.cols() / heads;
                if self.rg(*x) {
                    let mut gx = g.clone();
                    for i in 0..tx.rows() {
                        for h in 0..*heads {
                            let s = tw.get(i, h);
                            for v in &mut gx.row_mut(i)[h * k..(h + 1) * k] {
                                *v *= s;
                            }
                        }
                    }
                    acc(*x, gx);
                }
                if self.rg(*w) {
                    let mut gw = Tensor::zeros(tw.rows(), *heads);
                    for i in 0..tx.rows() {
                        for h in 0..*heads {
                            let s: f64 = g.row(i)[h * k..(h + 1) * k]
                                .iter()
                                .zip(&tx.row(i)[h * k..(h + 1) * k])
                                .map(|(p, q)| p * q)
                                .sum();
                            gw.set(i, h, s);
                        }
                    }
                    acc(*w, gw);
                }
            }
            Op::SumAll(x) => {
                let (r, c) = self.value(*x).shape();
                acc(*x, Tensor::filled(r, c, g.item()));
            }
            Op::SoftmaxXent {
                logits,
                targets,
                probs,
            } => {
                let scale = g.item() / targets.len() as f64;
                let mut gl = Tensor::zeros(probs.rows(), probs.cols());
                for &(i, y) in targets {
                    for (o, p) in gl.row_mut(i).iter_mut().zip(probs.row(i)) {
                        *o = p * scale;
                    }
                    let v = gl.get(i, y) - scale;
                    gl.set(i, y, v);
                }
                acc(*logits, gl);
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("shape")
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let c = x.cols();
    if c == 0 {
        return out;
    }
    for row in out.data_mut().chunks_mut(c) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}
