use crate::tensor::{axis_view, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Transpose(Var),
    Concat(Vec<Var>),
    Elu(Var, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    /// `out[k] = x[source[k]]` over flat indices.
    Gather(Var, Vec<usize>),
    PairwiseDiff(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// `c (m×n) = beta·c + a (m×k) · b (k×n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds views of `a` (m×k), `b` (k×n) and
    // `c` (m×n, row-major); `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient left by the last [`Tape::backward`], if `v` received one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor> {
        let g = self.grad(v)?;
        Tensor::new(self.shape(v), g.to_vec()).ok()
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape(), data).expect("same shape");
        self.push(value, op, &[x])
    }

    fn zip(&mut self, op_name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op_name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape(), data).expect("same shape");
        Ok(self.push(value, op, &[a, b]))
    }

    /// `[m,k] × [k,n] → [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), (k, 1), tb.data(), (n, 1), &mut out, 0.0);
        let value = Tensor::new(&[m, n], out).expect("m×n");
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    /// `[B,m,k] × [B,k,n] → [B,m,n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 3 || tb.rank() != 3 || ta.shape()[0] != tb.shape()[0] || ta.shape()[2] != tb.shape()[1] {
            return Err(shape_err("bmm", ta, tb));
        }
        let (bs, m, k, n) = (ta.shape()[0], ta.shape()[1], ta.shape()[2], tb.shape()[2]);
        let mut out = vec![0.0; bs * m * n];
        for s in 0..bs {
            gemm(
                m,
                k,
                n,
                &ta.data()[s * m * k..],
                (k, 1),
                &tb.data()[s * k * n..],
                (n, 1),
                &mut out[s * m * n..(s + 1) * m * n],
                0.0,
            );
        }
        let value = Tensor::new(&[bs, m, n], out).expect("B×m×n");
        Ok(self.push(value, Op::BatchMatMul(a, b), &[a, b]))
    }

    /// Elementwise sum; a rank-1 `b` matching the last dimension of `a` is
    /// broadcast over rows.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            return self.zip("add", a, b, Op::Add(a, b), |x, y| x + y);
        }
        if tb.rank() == 1 && ta.rank() >= 1 && tb.len() == ta.last_dim() {
            let d = tb.len();
            let data = ta
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + tb.data()[i % d])
                .collect();
            let value = Tensor::new(ta.shape(), data).expect("same shape");
            return Ok(self.push(value, Op::AddRow(a, b), &[a, b]));
        }
        Err(shape_err("add", ta, tb))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| c * v)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, Op::Abs(x), f64::abs)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = compensated_sum(self.value(x).data());
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = compensated_sum(t.data()) / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Swaps the last two axes (rank ≥ 2).
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let r = t.rank();
        if r < 2 {
            return Err(Error::Axis {
                op: "transpose",
                axis: 1,
                shape: t.shape().to_vec(),
            });
        }
        let (rows, cols) = (t.shape()[r - 2], t.shape()[r - 1]);
        let mut shape = t.shape().to_vec();
        shape.swap(r - 2, r - 1);
        let out = transpose_blocks(t.data(), rows, cols);
        let value = Tensor::new(&shape, out).expect("permuted shape");
        Ok(self.push(value, Op::Transpose(x), &[x]))
    }

    /// Concatenates along the first axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = self.value(*xs.first().ok_or(Error::Shape {
            op: "concat",
            left: Vec::new(),
            right: Vec::new(),
        })?);
        if first.rank() == 0 {
            return Err(Error::Axis {
                op: "concat",
                axis: 0,
                shape: Vec::new(),
            });
        }
        let tail = first.shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &x in xs {
            let t = self.value(x);
            if t.rank() == 0 || t.shape()[1..] != tail[..] {
                return Err(shape_err("concat", self.value(xs[0]), t));
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let value = Tensor::new(&shape, data).expect("stacked rows");
        Ok(self.push(value, Op::Concat(xs.to_vec()), xs))
    }

    pub fn elu(&mut self, x: Var, alpha: f64) -> Var {
        self.unary(x, Op::Elu(x, alpha), |v| if v > 0.0 { v } else { alpha * v.exp_m1() })
    }

    /// Normalizes over the last axis, then applies `gain` and `bias` (both
    /// of that axis' length).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.last_dim();
        if tx.rank() == 0 || tg.shape() != [d] || tb.shape() != [d] {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let rows = tx.len() / d.max(1);
        let mut xhat = vec![0.0; tx.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; tx.len()];
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let value = Tensor::new(tx.shape(), out).expect("same shape");
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    fn check_axis(&self, op: &'static str, x: Var, axis: usize) -> Result<()> {
        let t = self.value(x);
        if axis >= t.rank() {
            return Err(Error::Axis {
                op,
                axis,
                shape: t.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Softmax over the last axis.
    pub fn row_softmax(&mut self, x: Var) -> Result<Var> {
        let axis = self.value(x).rank().max(1) - 1;
        self.softmax(x, axis)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("softmax", x, axis)?;
        let t = self.value(x);
        let mut out = t.data().to_vec();
        for_each_line(t.shape(), axis, |idx| {
            let m = idx.clone().map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for i in idx.clone() {
                out[i] = (out[i] - m).exp();
                s += out[i];
            }
            for i in idx {
                out[i] /= s;
            }
        });
        let value = Tensor::new(t.shape(), out).expect("same shape");
        Ok(self.push(value, Op::Softmax(x, axis), &[x]))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check_axis("log_softmax", x, axis)?;
        let t = self.value(x);
        let mut out = t.data().to_vec();
        for_each_line(t.shape(), axis, |idx| {
            let m = idx.clone().map(|i| out[i]).fold(f64::NEG_INFINITY, f64::max);
            let lse = m + idx.clone().map(|i| (out[i] - m).exp()).sum::<f64>().ln();
            for i in idx {
                out[i] -= lse;
            }
        });
        let value = Tensor::new(t.shape(), out).expect("same shape");
        Ok(self.push(value, Op::LogSoftmax(x, axis), &[x]))
    }

    /// Sorts along the last axis; gradients follow the values to their
    /// source positions. Equal values keep their original relative order.
    pub fn sort(&mut self, x: Var, descending: bool) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 {
            return Err(Error::Axis {
                op: "sort",
                axis: 0,
                shape: Vec::new(),
            });
        }
        let d = t.last_dim();
        let mut source = Vec::with_capacity(t.len());
        for row in 0..t.len() / d.max(1) {
            let vals = &t.data()[row * d..(row + 1) * d];
            let mut idx: Vec<usize> = (0..d).collect();
            if descending {
                idx.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
            } else {
                idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
            }
            source.extend(idx.into_iter().map(|i| row * d + i));
        }
        let data = source.iter().map(|&i| t.data()[i]).collect();
        let value = Tensor::new(t.shape(), data).expect("same shape");
        Ok(self.push(value, Op::Gather(x, source), &[x]))
    }

    /// `out[.., i, j] = a[.., i] - b[.., j]` for `a: [.., n]`, `b: [.., m]`
    /// with equal leading dimensions.
    pub fn pairwise_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() == 0 || ta.rank() != tb.rank() || ta.shape()[..ta.rank() - 1] != tb.shape()[..tb.rank() - 1] {
            return Err(shape_err("pairwise_diff", ta, tb));
        }
        let (n, m) = (ta.last_dim(), tb.last_dim());
        let lead = ta.len() / n.max(1);
        let mut out = Vec::with_capacity(lead * n * m);
        for l in 0..lead {
            for i in 0..n {
                let x = ta.data()[l * n + i];
                out.extend(tb.data()[l * m..(l + 1) * m].iter().map(|y| x - y));
            }
        }
        let mut shape = ta.shape().to_vec();
        shape.push(m);
        let value = Tensor::new(&shape, out).expect("outer shape");
        Ok(self.push(value, Op::PairwiseDiff(a, b), &[a, b]))
    }

    /// Reverse sweep from a single-element `loss`. Replaces gradients from any
    /// earlier sweep.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if self.nodes[idx].needs_grad {
                propagate(&self.nodes, idx, &g, &mut grads);
            }
            grads[idx] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }
}

fn transpose_blocks(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let block = rows * cols;
    let mut out = vec![0.0; data.len()];
    if block == 0 {
        return out;
    }
    for (src, dst) in data.chunks(block).zip(out.chunks_mut(block)) {
        for i in 0..rows {
            for j in 0..cols {
                dst[j * rows + i] = src[i * cols + j];
            }
        }
    }
    out
}

/// Calls `f` with the flat indices of every 1-D line along `axis`.
fn for_each_line(shape: &[usize], axis: usize, mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>)) {
    let (outer, len, inner) = axis_view(shape, axis);
    for o in 0..outer {
        for i in 0..inner {
            let start = o * len * inner + i;
            f((start..start + len * inner).step_by(inner.max(1)));
        }
    }
}

/// Gradient buffer for `v`, created on first use; `None` when `v` does not
/// lead to any trainable leaf.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]))
}

fn axpy(dst: &mut [f64], c: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn propagate(nodes: &[Node], idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[idx];
    let out = node.value.data();
    let val = |v: Var| nodes[v.0].value.data();
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            if let Some(ga) = slot(nodes, grads, *a) {
                // dA = dC · Bᵀ
                gemm(m, n, k, g, (n, 1), val(*b), (1, n), ga, 1.0);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                // dB = Aᵀ · dC
                gemm(k, m, n, val(*a), (1, k), g, (n, 1), gb, 1.0);
            }
        }
        Op::BatchMatMul(a, b) => {
            let (sa, sb) = (nodes[a.0].value.shape(), nodes[b.0].value.shape());
            let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            if let Some(ga) = slot(nodes, grads, *a) {
                for s in 0..bs {
                    gemm(
                        m,
                        n,
                        k,
                        &g[s * m * n..],
                        (n, 1),
                        &val(*b)[s * k * n..],
                        (1, n),
                        &mut ga[s * m * k..(s + 1) * m * k],
                        1.0,
                    );
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for s in 0..bs {
                    gemm(
                        k,
                        m,
                        n,
                        &val(*a)[s * m * k..],
                        (1, k),
                        &g[s * m * n..],
                        (n, 1),
                        &mut gb[s * k * n..(s + 1) * k * n],
                        1.0,
                    );
                }
            }
        }
        Op::Add(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                axpy(ga, 1.0, g);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                axpy(gb, 1.0, g);
            }
        }
        Op::AddRow(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                axpy(ga, 1.0, g);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                let d = gb.len();
                for row in g.chunks(d) {
                    axpy(gb, 1.0, row);
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                axpy(ga, 1.0, g);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                axpy(gb, -1.0, g);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for ((d, gi), y) in ga.iter_mut().zip(g).zip(val(*b)) {
                    *d += gi * y;
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for ((d, gi), x) in gb.iter_mut().zip(g).zip(val(*a)) {
                    *d += gi * x;
                }
            }
        }
        Op::Scale(x, c) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                axpy(gx, *c, g);
            }
        }
        Op::AddScalar(x) | Op::Reshape(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                axpy(gx, 1.0, g);
            }
        }
        Op::Exp(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gi), y) in gx.iter_mut().zip(g).zip(out) {
                    *d += gi * y;
                }
            }
        }
        Op::Log(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gi), v) in gx.iter_mut().zip(g).zip(val(*x)) {
                    *d += gi / v;
                }
            }
        }
        Op::Abs(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gi), v) in gx.iter_mut().zip(g).zip(val(*x)) {
                    if *v > 0.0 {
                        *d += gi;
                    } else if *v < 0.0 {
                        *d -= gi;
                    }
                }
            }
        }
        Op::Clamp(x, lo, hi) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for ((d, gi), v) in gx.iter_mut().zip(g).zip(val(*x)) {
                    if *v >= *lo && *v <= *hi {
                        *d += gi;
                    }
                }
            }
        }
        Op::Sum(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                gx.iter_mut().for_each(|d| *d += g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                let c = g[0] / gx.len() as f64;
                gx.iter_mut().for_each(|d| *d += c);
            }
        }
        Op::Transpose(x) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                let s = node.value.shape();
                let r = s.len();
                // `out` is [.., cols, rows] of the input's [.., rows, cols]
                let back = transpose_blocks(g, s[r - 2], s[r - 1]);
                axpy(gx, 1.0, &back);
            }
        }
        Op::Concat(xs) => {
            let mut offset = 0;
            for x in xs {
                let len = nodes[x.0].value.len();
                if let Some(gx) = slot(nodes, grads, *x) {
                    axpy(gx, 1.0, &g[offset..offset + len]);
                }
                offset += len;
            }
        }
        Op::Elu(x, alpha) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for (((d, gi), v), y) in gx.iter_mut().zip(g).zip(val(*x)).zip(out) {
                    *d += if *v > 0.0 { *gi } else { gi * (y + alpha) };
                }
            }
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let d = nodes[gain.0].value.len();
            let gamma = val(*gain);
            if let Some(gg) = slot(nodes, grads, *gain) {
                for (gr, hr) in g.chunks(d).zip(xhat.chunks(d)) {
                    for j in 0..d {
                        gg[j] += gr[j] * hr[j];
                    }
                }
            }
            if let Some(gb) = slot(nodes, grads, *bias) {
                for gr in g.chunks(d) {
                    axpy(gb, 1.0, gr);
                }
            }
            if let Some(gx) = slot(nodes, grads, *x) {
                let mut dh = vec![0.0; d];
                for (r, (gr, hr)) in g.chunks(d).zip(xhat.chunks(d)).enumerate() {
                    for j in 0..d {
                        dh[j] = gr[j] * gamma[j];
                    }
                    let s1: f64 = dh.iter().sum();
                    let s2: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                    let c = inv_std[r] / d as f64;
                    for j in 0..d {
                        gx[r * d + j] += c * (d as f64 * dh[j] - s1 - hr[j] * s2);
                    }
                }
            }
        }
        Op::Softmax(x, axis) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for_each_line(node.value.shape(), *axis, |idx| {
                    let s: f64 = idx.clone().map(|i| g[i] * out[i]).sum();
                    for i in idx {
                        gx[i] += out[i] * (g[i] - s);
                    }
                });
            }
        }
        Op::LogSoftmax(x, axis) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for_each_line(node.value.shape(), *axis, |idx| {
                    let s: f64 = idx.clone().map(|i| g[i]).sum();
                    for i in idx {
                        gx[i] += g[i] - out[i].exp() * s;
                    }
                });
            }
        }
        Op::Gather(x, source) => {
            if let Some(gx) = slot(nodes, grads, *x) {
                for (k, &i) in source.iter().enumerate() {
                    gx[i] += g[k];
                }
            }
        }
        Op::PairwiseDiff(a, b) => {
            let (n, m) = (nodes[a.0].value.last_dim(), nodes[b.0].value.last_dim());
            if let Some(ga) = slot(nodes, grads, *a) {
                for (li, chunk) in g.chunks(m).enumerate() {
                    ga[li] += chunk.iter().sum::<f64>();
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for (l, block) in g.chunks(n * m).enumerate() {
                    for row in block.chunks(m) {
                        axpy(&mut gb[l * m..(l + 1) * m], -1.0, row);
                    }
                }
            }
        }
    }
}

/// Neumaier summation: the result is within a few ulps of the exact sum
/// regardless of length, which keeps finite-difference probes of scalar
/// losses clean.
fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, -2.0, 5.0]));
        let loss = tape.sum(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn mean_elu_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, -1.0]));
        let y = tape.elu(x, 1.0);
        let loss = tape.mean(y);
        tape.backward(loss).unwrap();
        let g = tape.grad(x).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
        assert!((g[1] - 0.5 * (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn elu_asymptote() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1], &[-50.0]));
        let y = tape.elu(x, 1.0);
        assert!((tape.value(y).data()[0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[0.0, 0.0]));
        let y = tape.row_softmax(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn layer_norm_on_constant_row() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 3], &[4.0, 4.0, 4.0]));
        let g = tape.constant(t(&[3], &[2.0, 2.0, 2.0]));
        let b = tape.constant(t(&[3], &[0.5, -1.0, 0.0]));
        let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, -1.0, 0.0]);
    }

    #[test]
    fn non_scalar_backward_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(err.to_string(), "matmul: incompatible shapes [2, 3] and [2, 3]");
    }

    #[test]
    fn matmul_values() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = tape.constant(t(&[2, 1], &[5.0, 6.0]));
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[17.0, 39.0]);
    }

    #[test]
    fn transpose_and_sort() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 3], &[3.0, 1.0, 2.0, 0.0, 5.0, 4.0]));
        let at = tape.transpose(a).unwrap();
        assert_eq!(tape.shape(at), &[3, 2]);
        assert_eq!(tape.value(at).data(), &[3.0, 0.0, 1.0, 5.0, 2.0, 4.0]);
        let s = tape.sort(a, false).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0, 2.0, 3.0, 0.0, 4.0, 5.0]);
        let s = tape.sort(a, true).unwrap();
        assert_eq!(tape.value(s).data(), &[3.0, 2.0, 1.0, 5.0, 4.0, 0.0]);
    }

    #[test]
    fn repeated_sweeps_agree() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2, 2], &[0.3, -0.2, 1.5, 0.7]));
        let y = tape.log_softmax(x, 0).unwrap();
        let z = tape.mul(y, y).unwrap();
        let loss = tape.sum(z);
        tape.backward(loss).unwrap();
        let first = tape.grad(x).unwrap().to_vec();
        tape.zero_grad();
        assert!(tape.grad(x).is_none());
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &first[..]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let c = tape.constant(t(&[2], &[3.0, 4.0]));
        let y = tape.mul(x, c).unwrap();
        let loss = tape.sum(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[3.0, 4.0]);
        assert!(tape.grad(c).is_none());
    }
}
