use super::{NumericsError, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Sigmoid(Var),
    Tanh(Var),
    ReluHinge(Var),
    Softmax(Var),
    PickLogSoftmax(Var, usize),
    Sum(Var),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
}

struct Node {
    op: Op,
    value: Tensor,
    grad: Vec<f64>,
}

/// Tape of recorded operations. Nodes are appended in execution order, so a
/// plain reverse sweep visits every node after all of its consumers.
///
/// A graph lives for one forward/backward pass; record a fresh one per step.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_run: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let n = value.len();
        self.nodes.push(Node {
            op,
            value,
            grad: vec![0.0; n],
        });
        Var(self.nodes.len() - 1)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Records an input or parameter tensor.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let mut value = t.clone();
        value.grad = None;
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.push(Op::Leaf, Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.val(v)
    }

    /// Gradient of the loss with respect to node `v`. Valid after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Result<&[f64], NumericsError> {
        if !self.backward_run {
            return Err(NumericsError::NoGradients);
        }
        Ok(&self.nodes[v.0].grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(&ta.data, &tb.data, m, k, n, &mut out);
        let value = Tensor::new(vec![m, n], out).expect("matmul shape");
        Ok(self.push(Op::MatMul(a, b), value))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericsError> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape != tb.shape {
            return Err(NumericsError::ShapeMismatch {
                op: name,
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let data: Vec<f64> = ta
            .data
            .iter()
            .zip(tb.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape.clone(), data).expect("binary shape");
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.val(a);
        let data: Vec<f64> = ta.data.iter().map(|&x| f(x)).collect();
        let value = Tensor::new(ta.shape.clone(), data).expect("unary shape");
        self.push(op, value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddConst(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// max(0, x). The subgradient at exactly 0 is taken as 0.
    pub fn relu_hinge(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::ReluHinge(a))
    }

    /// Row-wise softmax with max-subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericsError> {
        let ta = self.val(a);
        if ta.is_empty() {
            return Err(NumericsError::EmptyInput("softmax"));
        }
        let (rows, cols) = (ta.rows(), ta.cols());
        let mut data = ta.data.clone();
        for r in 0..rows {
            softmax_row_in_place(&mut data[r * cols..(r + 1) * cols]);
        }
        let value = Tensor::new(ta.shape.clone(), data).expect("softmax shape");
        Ok(self.push(Op::Softmax(a), value))
    }

    /// log softmax(x)[index] of a single-row input, as a scalar node.
    pub fn pick_log_softmax(&mut self, a: Var, index: usize) -> Result<Var, NumericsError> {
        let ta = self.val(a);
        if ta.is_empty() {
            return Err(NumericsError::EmptyInput("pick_log_softmax"));
        }
        if ta.rows() != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "pick_log_softmax",
                lhs: ta.shape.clone(),
                rhs: vec![1, ta.cols()],
            });
        }
        if index >= ta.cols() {
            return Err(NumericsError::IndexOutOfRange {
                index,
                size: ta.cols(),
            });
        }
        let max = ta.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = ta.data.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        let v = ta.data[index] - max - log_sum;
        Ok(self.push(Op::PickLogSoftmax(a, index), Tensor::scalar(v)))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.val(a).data.iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(total))
    }

    /// Inner product of two same-shape tensors, as a scalar node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let prod = self.mul(a, b)?;
        Ok(self.sum(prod))
    }

    /// Selects rows of a matrix by index, preserving order and multiplicity.
    pub fn gather_rows(&mut self, m: Var, ids: &[usize]) -> Result<Var, NumericsError> {
        let tm = self.val(m);
        if tm.shape.len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op: "gather_rows",
                lhs: tm.shape.clone(),
                rhs: vec![0, 0],
            });
        }
        let (rows, cols) = (tm.shape[0], tm.shape[1]);
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(NumericsError::IndexOutOfRange {
                    index: id,
                    size: rows,
                });
            }
            data.extend_from_slice(&tm.data[id * cols..(id + 1) * cols]);
        }
        let value = Tensor::new(vec![ids.len(), cols], data).expect("gather shape");
        Ok(self.push(Op::GatherRows(m, ids.to_vec()), value))
    }

    /// Stacks same-width 2-D nodes vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::EmptyInput("concat_rows"));
        }
        let cols = self.val(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let tp = self.val(p);
            if tp.cols() != cols {
                return Err(NumericsError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: vec![tp.rows(), tp.cols()],
                    rhs: vec![rows, cols],
                });
            }
            rows += tp.rows();
            data.extend_from_slice(&tp.data);
        }
        let value = Tensor::new(vec![rows, cols], data).expect("concat shape");
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value))
    }

    /// Selects the column range [lo, hi) of every row.
    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Result<Var, NumericsError> {
        let ta = self.val(a);
        let (rows, cols) = (ta.rows(), ta.cols());
        if lo >= hi || hi > cols {
            return Err(NumericsError::IndexOutOfRange {
                index: hi,
                size: cols,
            });
        }
        let width = hi - lo;
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&ta.data[r * cols + lo..r * cols + hi]);
        }
        let value = Tensor::new(vec![rows, width], data).expect("slice shape");
        Ok(self.push(Op::SliceCols(a, lo, hi), value))
    }

    /// Reverse sweep from a scalar loss. Every node's gradient buffer is
    /// populated; leaves the caller registered can then be read via
    /// [`Graph::grad`]. Gradients of nodes with no path to the loss stay zero.
    pub fn backward(&mut self, loss: Var) -> Result<(), NumericsError> {
        if self.backward_run {
            return Err(NumericsError::BackwardAlreadyRun);
        }
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(NumericsError::NonScalarLoss(
                self.nodes[loss.0].value.shape.clone(),
            ));
        }
        self.backward_run = true;
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            let op = self.nodes[i].op.clone();
            let g = std::mem::take(&mut self.nodes[i].grad);
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (self.nodes[a.0].value.shape[0], self.nodes[a.0].value.shape[1]);
                    let n = self.nodes[b.0].value.shape[1];
                    // dA = dC * B^T
                    {
                        let bdat = &self.nodes[b.0].value.data;
                        let mut da = vec![0.0; m * k];
                        for r in 0..m {
                            for c in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[r * n + j] * bdat[c * n + j];
                                }
                                da[r * k + c] = s;
                            }
                        }
                        accumulate(&mut self.nodes[a.0].grad, &da);
                    }
                    // dB = A^T * dC
                    {
                        let adat = &self.nodes[a.0].value.data;
                        let mut db = vec![0.0; k * n];
                        for r in 0..k {
                            for c in 0..n {
                                let mut s = 0.0;
                                for j in 0..m {
                                    s += adat[j * k + r] * g[j * n + c];
                                }
                                db[r * n + c] = s;
                            }
                        }
                        accumulate(&mut self.nodes[b.0].grad, &db);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut self.nodes[a.0].grad, &g);
                    accumulate(&mut self.nodes[b.0].grad, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut self.nodes[a.0].grad, &g);
                    for (dst, &src) in self.nodes[b.0].grad.iter_mut().zip(g.iter()) {
                        *dst -= src;
                    }
                }
                Op::Mul(a, b) => {
                    for j in 0..g.len() {
                        let bv = self.nodes[b.0].value.data[j];
                        self.nodes[a.0].grad[j] += g[j] * bv;
                    }
                    for j in 0..g.len() {
                        let av = self.nodes[a.0].value.data[j];
                        self.nodes[b.0].grad[j] += g[j] * av;
                    }
                }
                Op::Scale(a, c) => {
                    for j in 0..g.len() {
                        self.nodes[a.0].grad[j] += g[j] * c;
                    }
                }
                Op::AddConst(a) => accumulate(&mut self.nodes[a.0].grad, &g),
                Op::Sigmoid(a) => {
                    for j in 0..g.len() {
                        let y = self.nodes[i].value.data[j];
                        self.nodes[a.0].grad[j] += g[j] * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    for j in 0..g.len() {
                        let y = self.nodes[i].value.data[j];
                        self.nodes[a.0].grad[j] += g[j] * (1.0 - y * y);
                    }
                }
                Op::ReluHinge(a) => {
                    for j in 0..g.len() {
                        let x = self.nodes[a.0].value.data[j];
                        if x > 0.0 {
                            self.nodes[a.0].grad[j] += g[j];
                        }
                    }
                }
                Op::Softmax(a) => {
                    let (rows, cols) = (self.nodes[i].value.rows(), self.nodes[i].value.cols());
                    let y_all = self.nodes[i].value.data.clone();
                    for r in 0..rows {
                        let y = &y_all[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dotgy: f64 = gr.iter().zip(y.iter()).map(|(&gi, &yi)| gi * yi).sum();
                        for c in 0..cols {
                            self.nodes[a.0].grad[r * cols + c] += y[c] * (gr[c] - dotgy);
                        }
                    }
                }
                Op::PickLogSoftmax(a, index) => {
                    let x = self.nodes[a.0].value.data.clone();
                    let mut probs = x;
                    softmax_row_in_place(&mut probs);
                    let gs = g[0];
                    for (j, &p) in probs.iter().enumerate() {
                        let indicator = if j == index { 1.0 } else { 0.0 };
                        self.nodes[a.0].grad[j] += gs * (indicator - p);
                    }
                }
                Op::Sum(a) => {
                    let gs = g[0];
                    for dst in self.nodes[a.0].grad.iter_mut() {
                        *dst += gs;
                    }
                }
                Op::GatherRows(m, ids) => {
                    let cols = self.nodes[m.0].value.shape[1];
                    for (l, &id) in ids.iter().enumerate() {
                        for c in 0..cols {
                            self.nodes[m.0].grad[id * cols + c] += g[l * cols + c];
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        accumulate(&mut self.nodes[p.0].grad, &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::SliceCols(a, lo, hi) => {
                    let cols = self.nodes[a.0].value.cols();
                    let width = hi - lo;
                    for r in 0..self.nodes[i].value.rows() {
                        for c in 0..width {
                            self.nodes[a.0].grad[r * cols + lo + c] += g[r * width + c];
                        }
                    }
                }
            }
            self.nodes[i].grad = g;
        }
        Ok(())
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}

fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for r in 0..m {
        for p in 0..k {
            let av = a[r * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[r * n..(r + 1) * n];
            for c in 0..n {
                orow[c] += av * brow[c];
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
