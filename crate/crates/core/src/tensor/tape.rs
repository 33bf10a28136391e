use super::mlp::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{shape_err, Error, Result};
use crate::math;
use alloc::{format, vec, vec::Vec};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right operand of a binary elementwise op is broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    /// `[1, n]` against `[m, n]`.
    Row,
    /// `[m, 1]` against `[m, n]`.
    Col,
    Scalar,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Scale(Var, f64),
    Shift(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    SumCols(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Reshape(Var),
    GroupSum(Var, usize),
    RepeatRows(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records ops in topological order; inputs always precede their outputs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound_params: Vec<(ParamId, Var)>,
}

/// Result of [`Tape::backward`]: one gradient buffer per reachable node.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of the root with respect to `v`; zeros when `v` is unreachable.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.lens[v.0]],
        }
    }
}

fn bcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast> {
    let (m, n) = a.dims2()?;
    let (p, q) = b.dims2()?;
    if (m, n) == (p, q) {
        Ok(Bcast::Same)
    } else if p == 1 && q == 1 {
        Ok(Bcast::Scalar)
    } else if p == 1 && q == n {
        Ok(Bcast::Row)
    } else if p == m && q == 1 {
        Ok(Bcast::Col)
    } else {
        Err(shape_err(op, format!("cannot broadcast {:?} onto {:?}", b.shape(), a.shape())))
    }
}

#[inline]
fn bidx(kind: Bcast, i: usize, j: usize, n: usize) -> usize {
    match kind {
        Bcast::Same => i * n + j,
        Bcast::Row => j,
        Bcast::Col => i,
        Bcast::Scalar => 0,
    }
}

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn transpose_data(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn group_sum_data(a: &[f64], groups: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; groups * n];
    for g in 0..groups {
        let dst = &mut out[g * n..(g + 1) * n];
        for r in 0..k {
            let src = &a[(g * k + r) * n..(g * k + r + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out
}

fn repeat_rows_data(a: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m * k * n);
    for i in 0..m {
        for _ in 0..k {
            out.extend_from_slice(&a[i * n..(i + 1) * n]);
        }
    }
    out
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => {
            for (x, y) in d.iter_mut().zip(src) {
                *x += y;
            }
        }
        None => *dst = Some(src.to_vec()),
    }
}

/// Reduces a gradient shaped like the lhs down to the broadcast rhs shape.
fn reduce_bcast(kind: Bcast, g: &[f64], m: usize, n: usize) -> Vec<f64> {
    match kind {
        Bcast::Same => g.to_vec(),
        Bcast::Scalar => vec![g.iter().sum()],
        Bcast::Row => {
            let mut out = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    out[j] += g[i * n + j];
                }
            }
            out
        }
        Bcast::Col => (0..m).map(|i| g[i * n..(i + 1) * n].iter().sum()).collect(),
    }
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

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn push(&mut self, mut value: Tensor, op: Op) -> Var {
        value.grad = None;
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf (an input or a constant).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.leaf(Tensor::scalar(v))
    }

    pub fn matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        Ok(self.leaf(Tensor::matrix(rows, cols, data)?))
    }

    /// A fresh leaf carrying `v`'s value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.leaf(value)
    }

    /// Binds parameter `id` of `store`; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.bound_params.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.bound_params.push((id, v));
        v
    }

    /// A constant copy of parameter `id` that does not receive gradients.
    pub fn param_detached(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.leaf(store.get(id).clone())
    }

    pub fn bound_params(&self) -> &[(ParamId, Var)] {
        &self.bound_params
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(shape_err(
                "matmul",
                format!("{:?} x {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(self.data(a), self.data(b), &mut out, m, k, n);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let out = transpose_data(self.data(a), m, n);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::Transpose(a)))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: impl Fn(Var, Var, Bcast) -> Op,
    ) -> Result<Var> {
        let kind = bcast_kind(name, self.value(a), self.value(b))?;
        let (m, n) = self.value(a).dims2()?;
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(f(ad[i * n + j], bd[bidx(kind, i, j, n)]));
            }
        }
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, out)?, mk(a, b, kind)))
    }

    /// Elementwise `a + b`; `b` may broadcast as a row, column or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let out: Vec<f64> = t.data().iter().map(|&x| f(x)).collect();
        let value = Tensor { shape: t.shape().to_vec(), data: out, grad: None };
        self.push(value, op)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `a + c` for a constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::Shift(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, math::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, math::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, math::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    fn rowwise(&mut self, a: Var, log: bool) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let d = self.data(a);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let row = &d[i * n..(i + 1) * n];
            let lse = math::log_sum_exp(row);
            out.extend(row.iter().map(|&x| if log { x - lse } else { math::exp(x - lse) }));
        }
        let shape = self.shape(a).to_vec();
        let op = if log { Op::LogSoftmax(a) } else { Op::Softmax(a) };
        Ok(self.push(Tensor::new(shape, out)?, op))
    }

    /// Softmax over the last axis, row by row.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.rowwise(a, false)
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.rowwise(a, true)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Sums over rows: `[m, n] -> [1, n]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let d = self.data(a);
        let mut out = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                out[j] += d[i * n + j];
            }
        }
        Ok(self.push(Tensor::matrix(1, n, out)?, Op::SumRows(a)))
    }

    /// Sums over columns: `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        let d = self.data(a);
        let out = (0..m).map(|i| d[i * n..(i + 1) * n].iter().sum()).collect();
        Ok(self.push(Tensor::matrix(m, 1, out)?, Op::SumCols(a)))
    }

    /// Concatenates along the last axis; every part must have the same rows.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat", "no inputs".into()));
        }
        let m = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != m {
                return Err(shape_err(
                    "concat",
                    format!("row count {r} differs from {m} (shape {:?})", self.shape(p)),
                ));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = vec![0.0; m * n];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let d = self.data(p);
            for i in 0..m {
                out[i * n + off..i * n + off + w].copy_from_slice(&d[i * w..(i + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Concat(parts.to_vec())))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if start >= end || end > n {
            return Err(shape_err(
                "slice",
                format!("columns {start}..{end} of {:?}", self.shape(a)),
            ));
        }
        let w = end - start;
        let d = self.data(a);
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&d[i * n + start..i * n + end]);
        }
        Ok(self.push(Tensor::matrix(m, w, out)?, Op::Slice(a, start, end)))
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let value = Tensor::new(shape, self.data(a).to_vec())
            .map_err(|_| shape_err("reshape", format!("{:?} has {} elements", self.shape(a), self.value(a).len())))?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Sums consecutive blocks of `k` rows: `[g * k, n] -> [g, n]`.
    pub fn group_sum(&mut self, a: Var, k: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if k == 0 || m % k != 0 {
            return Err(shape_err("group_sum", format!("{m} rows do not split into blocks of {k}")));
        }
        let out = group_sum_data(self.data(a), m / k, k, n);
        Ok(self.push(Tensor::matrix(m / k, n, out)?, Op::GroupSum(a, k)))
    }

    /// Repeats every row `k` times: `[g, n] -> [g * k, n]`.
    pub fn repeat_rows(&mut self, a: Var, k: usize) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if k == 0 {
            return Err(shape_err("repeat_rows", "k must be >= 1".into()));
        }
        let out = repeat_rows_data(self.data(a), m, k, n);
        Ok(self.push(Tensor::matrix(m * k, n, out)?, Op::RepeatRows(a, k)))
    }

    /// Checks that every element of `v` is finite.
    pub fn check_finite(&self, v: Var, what: &str) -> Result<()> {
        if self.data(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what: what.into() })
        }
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::NonScalarRoot { shape: rv.shape().to_vec() });
        }
        let count = root.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..count).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let out = node.value.data();
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::Matmul(a, b) => {
                    let (m, k) = self.value(*a).dims2()?;
                    let n = self.value(*b).dims2()?.1;
                    let bt = transpose_data(self.data(*b), k, n);
                    let mut ga = vec![0.0; m * k];
                    matmul_into(&g, &bt, &mut ga, m, n, k);
                    let at = transpose_data(self.data(*a), m, k);
                    let mut gb = vec![0.0; k * n];
                    matmul_into(&at, &g, &mut gb, k, m, n);
                    add_into(&mut grads[a.0], &ga);
                    add_into(&mut grads[b.0], &gb);
                }
                Op::Transpose(a) => {
                    let (m, n) = self.value(*a).dims2()?;
                    add_into(&mut grads[a.0], &transpose_data(&g, n, m));
                }
                Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                    let (m, n) = self.value(*a).dims2()?;
                    add_into(&mut grads[a.0], &g);
                    let mut gb = reduce_bcast(*kind, &g, m, n);
                    if matches!(node.op, Op::Sub(..)) {
                        gb.iter_mut().for_each(|x| *x = -*x);
                    }
                    add_into(&mut grads[b.0], &gb);
                }
                Op::Mul(a, b, kind) => {
                    let (m, n) = self.value(*a).dims2()?;
                    let (ad, bd) = (self.data(*a), self.data(*b));
                    let mut ga = vec![0.0; m * n];
                    let mut gfull = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            let idx = i * n + j;
                            ga[idx] = g[idx] * bd[bidx(*kind, i, j, n)];
                            gfull[idx] = g[idx] * ad[idx];
                        }
                    }
                    add_into(&mut grads[a.0], &ga);
                    add_into(&mut grads[b.0], &reduce_bcast(*kind, &gfull, m, n));
                }
                Op::Scale(a, c) => {
                    let ga: Vec<f64> = g.iter().map(|x| c * x).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Shift(a) => add_into(&mut grads[a.0], &g),
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Relu(a) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(self.data(*a))
                        .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                        .collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Exp(a) => {
                    let ga: Vec<f64> = g.iter().zip(out).map(|(g, y)| g * y).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Log(a) => {
                    let ga: Vec<f64> = g.iter().zip(self.data(*a)).map(|(g, x)| g / x).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Square(a) => {
                    let ga: Vec<f64> =
                        g.iter().zip(self.data(*a)).map(|(g, x)| 2.0 * g * x).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(self.data(*a))
                        .map(|(g, x)| if x < lo || x > hi { 0.0 } else { *g })
                        .collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Softmax(a) => {
                    let (m, n) = self.value(*a).dims2()?;
                    let mut ga = vec![0.0; m * n];
                    for i in 0..m {
                        let (y, gr) = (&out[i * n..(i + 1) * n], &g[i * n..(i + 1) * n]);
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            ga[i * n + j] = y[j] * (gr[j] - dot);
                        }
                    }
                    add_into(&mut grads[a.0], &ga);
                }
                Op::LogSoftmax(a) => {
                    let (m, n) = self.value(*a).dims2()?;
                    let mut ga = vec![0.0; m * n];
                    for i in 0..m {
                        let (y, gr) = (&out[i * n..(i + 1) * n], &g[i * n..(i + 1) * n]);
                        let total: f64 = gr.iter().sum();
                        for j in 0..n {
                            ga[i * n + j] = gr[j] - math::exp(y[j]) * total;
                        }
                    }
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Sum(a) => {
                    let ga = vec![g[0]; self.value(*a).len()];
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Mean(a) => {
                    let len = self.value(*a).len();
                    add_into(&mut grads[a.0], &vec![g[0] / len as f64; len]);
                }
                Op::SumRows(a) => {
                    let (m, n) = self.value(*a).dims2()?;
                    let ga: Vec<f64> = (0..m * n).map(|idx| g[idx % n]).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::SumCols(a) => {
                    let (m, n) = self.value(*a).dims2()?;
                    let ga: Vec<f64> = (0..m * n).map(|idx| g[idx / n]).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Concat(parts) => {
                    let (m, n) = node.value.dims2()?;
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).dims2()?.1;
                        let mut gp = Vec::with_capacity(m * w);
                        for r in 0..m {
                            gp.extend_from_slice(&g[r * n + off..r * n + off + w]);
                        }
                        add_into(&mut grads[p.0], &gp);
                        off += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let (m, n) = self.value(*a).dims2()?;
                    let w = end - start;
                    let mut ga = vec![0.0; m * n];
                    for r in 0..m {
                        ga[r * n + start..r * n + end].copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    add_into(&mut grads[a.0], &ga);
                }
                Op::Reshape(a) => add_into(&mut grads[a.0], &g),
                Op::GroupSum(a, k) => {
                    let (m, n) = self.value(*a).dims2()?;
                    add_into(&mut grads[a.0], &repeat_rows_data(&g, m / k, *k, n));
                }
                Op::RepeatRows(a, k) => {
                    let (m, n) = self.value(*a).dims2()?;
                    add_into(&mut grads[a.0], &group_sum_data(&g, m, *k, n));
                }
            }
            grads[i] = Some(g);
        }
        let lens = self.nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, lens })
    }

    /// Backward from `root`, then sums gradients of every bound parameter
    /// into `store`'s gradient slots.
    pub fn backward_into(&self, root: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(root)?;
        for &(id, v) in &self.bound_params {
            if let Some(g) = grads.get(v) {
                store.get_mut(id).accumulate_grad(g);
            }
        }
        Ok(grads)
    }
}
