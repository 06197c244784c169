//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of a forward pass; nodes are appended
//! in topological order, so [`Tape::backward`] is a single reverse sweep.
//! Values are 64-bit floats throughout. Broadcasting is restricted to
//! scalar-with-tensor products and row-vector bias addition; anything else
//! requires an explicit reshape.

use crate::error::{Error, Result};

/// Epsilon inside the layer-norm variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// A dense row-major tensor that lives outside any tape (model parameters,
/// inputs). Gradients accumulate across backward passes until an SGD step
/// zeroes them.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Dimension(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data, grad: None, requires_grad: false })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self { shape, data: vec![0.0; numel], grad: None, requires_grad: false }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value], grad: None, requires_grad: false }
    }

    /// A learnable tensor.
    pub fn param(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let mut t = Self::new(shape, data)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Add a gradient contribution, allocating the buffer on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.numel() {
            return Err(Error::Dimension(format!(
                "gradient length {} does not match tensor of {} elements",
                g.len(),
                self.numel()
            )));
        }
        let grad = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (acc, &gi) in grad.iter_mut().zip(g) {
            *acc += gi;
        }
        Ok(())
    }
}

/// Plain SGD: `param <- param - lr * grad`, then zero the gradient.
pub fn sgd_step<'a, I>(params: I, learning_rate: f64) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Tensor>,
{
    for p in params {
        let grad = p
            .grad
            .as_mut()
            .ok_or_else(|| Error::State("sgd_step: parameter has no gradient".into()))?;
        for (v, g) in p.data.iter_mut().zip(grad.iter_mut()) {
            *v -= learning_rate * *g;
            *g = 0.0;
        }
    }
    Ok(())
}

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId),
    Scale(NodeId, f64),
    /// Tensor scaled by a single-element node.
    ScaleByNode(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize, usize),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    Softmax(NodeId),
    LayerNorm(NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Gelu(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Sqrt(NodeId),
    Square(NodeId),
    PowScalar(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
}

/// Records a forward computation and runs the reverse sweep.
pub struct Tape {
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    ops: Vec<Op>,
    grads: Vec<Vec<f64>>,
    ran_backward: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x.powi(3))).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x.powi(3))).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Self { shapes: Vec::new(), values: Vec::new(), ops: Vec::new(), grads: Vec::new(), ran_backward: false }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.shapes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.values[id.0]
    }

    /// Gradient of the backward output with respect to this node. Only
    /// meaningful after [`Tape::backward`].
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.shapes.push(shape);
        self.values.push(value);
        self.ops.push(op);
        NodeId(self.ops.len() - 1)
    }

    /// Record an input value (constant or parameter snapshot).
    pub fn leaf(&mut self, tensor: &Tensor) -> NodeId {
        self.push(tensor.shape.clone(), tensor.data.clone(), Op::Leaf)
    }

    pub fn leaf_from(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Dimension(format!(
                "leaf data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(self.push(shape, data, Op::Leaf))
    }

    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.push(vec![1], vec![value], Op::Leaf)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shapes[a.0] != self.shapes[b.0] {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shapes[a.0], self.shapes[b.0]
            )));
        }
        Ok(())
    }

    fn dims2(&self, a: NodeId, what: &str) -> Result<(usize, usize)> {
        match self.shapes[a.0].as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Dimension(format!("{what}: expected a 2-D tensor, got shape {s:?}"))),
        }
    }

    /// Rows and columns of a tensor treated as a stack of last-axis slices.
    fn rows_cols(&self, a: NodeId) -> (usize, usize) {
        let shape = &self.shapes[a.0];
        let cols = *shape.last().unwrap_or(&1);
        (self.values[a.0].len() / cols.max(1), cols)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let value = self.values[a.0].iter().zip(&self.values[b.0]).map(|(x, y)| x + y).collect();
        Ok(self.push(self.shapes[a.0].clone(), value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let value = self.values[a.0].iter().zip(&self.values[b.0]).map(|(x, y)| x - y).collect();
        Ok(self.push(self.shapes[a.0].clone(), value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let value = self.values[a.0].iter().zip(&self.values[b.0]).map(|(x, y)| x * y).collect();
        Ok(self.push(self.shapes[a.0].clone(), value, Op::Mul(a, b)))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.values[a.0].iter().map(|x| x + c).collect();
        self.push(self.shapes[a.0].clone(), value, Op::AddScalar(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.values[a.0].iter().map(|x| x * c).collect();
        self.push(self.shapes[a.0].clone(), value, Op::Scale(a, c))
    }

    /// Multiply a tensor by a single-element node.
    pub fn scale_by(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.values[s.0].len() != 1 {
            return Err(Error::Dimension(format!(
                "scale_by: scale must be a scalar node, got shape {:?}",
                self.shapes[s.0]
            )));
        }
        let c = self.values[s.0][0];
        let value = self.values[a.0].iter().map(|x| x * c).collect();
        Ok(self.push(self.shapes[a.0].clone(), value, Op::ScaleByNode(a, s)))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.dims2(a, "matmul lhs")?;
        let (k2, n) = self.dims2(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul: inner dimensions differ, {m}x{k} vs {k2}x{n}"
            )));
        }
        let value = matmul_raw(&self.values[a.0], &self.values[b.0], m, k, n);
        Ok(self.push(vec![m, n], value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (m, n) = self.dims2(a, "transpose")?;
        let src = &self.values[a.0];
        let mut value = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                value[j * m + i] = src[i * n + j];
            }
        }
        Ok(self.push(vec![n, m], value, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.values[a.0].len() {
            return Err(Error::Dimension(format!(
                "reshape: {:?} has {} elements, target {shape:?} has {numel}",
                self.shapes[a.0],
                self.values[a.0].len()
            )));
        }
        let value = self.values[a.0].clone();
        Ok(self.push(shape, value, Op::Reshape(a)))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.dims2(a, "slice_rows")?;
        if start >= end || end > m {
            return Err(Error::Dimension(format!(
                "slice_rows: range {start}..{end} invalid for {m} rows"
            )));
        }
        let value = self.values[a.0][start * n..end * n].to_vec();
        Ok(self.push(vec![end - start, n], value, Op::SliceRows(a, start)))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let (m, n) = self.dims2(a, "slice_cols")?;
        if start >= end || end > n {
            return Err(Error::Dimension(format!(
                "slice_cols: range {start}..{end} invalid for {n} columns"
            )));
        }
        let src = &self.values[a.0];
        let w = end - start;
        let mut value = Vec::with_capacity(m * w);
        for i in 0..m {
            value.extend_from_slice(&src[i * n + start..i * n + end]);
        }
        Ok(self.push(vec![m, w], value, Op::SliceCols(a, start, end)))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_rows: no inputs".into()));
        }
        let (_, n) = self.dims2(parts[0], "concat_rows")?;
        let mut rows = 0;
        let mut value = Vec::new();
        for &p in parts {
            let (m, w) = self.dims2(p, "concat_rows")?;
            if w != n {
                return Err(Error::Dimension(format!(
                    "concat_rows: column counts differ, {n} vs {w}"
                )));
            }
            rows += m;
            value.extend_from_slice(&self.values[p.0]);
        }
        Ok(self.push(vec![rows, n], value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Dimension("concat_cols: no inputs".into()));
        }
        let (m, _) = self.dims2(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for &p in parts {
            let (r, w) = self.dims2(p, "concat_cols")?;
            if r != m {
                return Err(Error::Dimension(format!("concat_cols: row counts differ, {m} vs {r}")));
            }
            widths.push(w);
            total += w;
        }
        let mut value = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                value.extend_from_slice(&self.values[p.0][i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(vec![m, total], value, Op::ConcatCols(parts.to_vec())))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.rows_cols(a);
        if cols == 0 {
            return Err(Error::Dimension("softmax: last axis must be non-empty".into()));
        }
        let src = &self.values[a.0];
        let mut value = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (o, &x) in value[r * cols..(r + 1) * cols].iter_mut().zip(row.iter()) {
                *o = (x - max).exp();
                denom += *o;
            }
            for o in &mut value[r * cols..(r + 1) * cols] {
                *o /= denom;
            }
        }
        Ok(self.push(self.shapes[a.0].clone(), value, Op::Softmax(a)))
    }

    /// Normalize each last-axis slice to zero mean and unit variance. Apply
    /// learnable scale and shift separately via [`Tape::mul_row`] and
    /// [`Tape::add_row`].
    pub fn layer_norm(&mut self, a: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.rows_cols(a);
        if cols == 0 {
            return Err(Error::Dimension("layer_norm: last axis must be non-empty".into()));
        }
        let src = &self.values[a.0];
        let mut value = vec![0.0; src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / cols as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, &x) in value[r * cols..(r + 1) * cols].iter_mut().zip(row.iter()) {
                *o = (x - mean) * inv_std;
            }
        }
        Ok(self.push(self.shapes[a.0].clone(), value, Op::LayerNorm(a)))
    }

    fn row_operand(&self, a: NodeId, b: NodeId, what: &str) -> Result<(usize, usize)> {
        let (rows, cols) = self.rows_cols(a);
        if self.values[b.0].len() != cols {
            return Err(Error::Dimension(format!(
                "{what}: row operand of shape {:?} does not match {} columns of {:?}",
                self.shapes[b.0], cols, self.shapes[a.0]
            )));
        }
        Ok((rows, cols))
    }

    /// Broadcast-add a row vector to every last-axis slice.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.row_operand(a, b, "add_row")?;
        let mut value = self.values[a.0].clone();
        for r in 0..rows {
            for c in 0..cols {
                value[r * cols + c] += self.values[b.0][c];
            }
        }
        Ok(self.push(self.shapes[a.0].clone(), value, Op::AddRow(a, b)))
    }

    /// Broadcast-multiply every last-axis slice by a row vector.
    pub fn mul_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.row_operand(a, b, "mul_row")?;
        let mut value = self.values[a.0].clone();
        for r in 0..rows {
            for c in 0..cols {
                value[r * cols + c] *= self.values[b.0][c];
            }
        }
        Ok(self.push(self.shapes[a.0].clone(), value, Op::MulRow(a, b)))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let value = self.values[a.0].iter().map(|&x| gelu(x)).collect();
        self.push(self.shapes[a.0].clone(), value, Op::Gelu(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.values[a.0].iter().map(|&x| x.max(0.0)).collect();
        self.push(self.shapes[a.0].clone(), value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.values[a.0].iter().map(|&x| sigmoid(x)).collect();
        self.push(self.shapes[a.0].clone(), value, Op::Sigmoid(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        if self.values[a.0].iter().any(|&x| x < 0.0) {
            return Err(Error::Domain("sqrt of a negative value".into()));
        }
        let value = self.values[a.0].iter().map(|x| x.sqrt()).collect();
        Ok(self.push(self.shapes[a.0].clone(), value, Op::Sqrt(a)))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let value = self.values[a.0].iter().map(|x| x * x).collect();
        self.push(self.shapes[a.0].clone(), value, Op::Square(a))
    }

    /// Elementwise `x^c` for a fixed scalar exponent.
    pub fn pow_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        if c.fract() != 0.0 && self.values[a.0].iter().any(|&x| x < 0.0) {
            return Err(Error::Domain(format!(
                "pow_scalar: negative base with non-integer exponent {c}"
            )));
        }
        let value = self.values[a.0].iter().map(|x| x.powf(c)).collect();
        Ok(self.push(self.shapes[a.0].clone(), value, Op::PowScalar(a, c)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = vec![self.values[a.0].iter().sum()];
        self.push(vec![1], value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.values[a.0].len().max(1);
        let value = vec![self.values[a.0].iter().sum::<f64>() / n as f64];
        self.push(vec![1], value, Op::Mean(a))
    }

    /// Reverse sweep from a scalar output. Every node's gradient sums the
    /// contributions of all its consumers.
    pub fn backward(&mut self, output: NodeId) -> Result<()> {
        if self.values[output.0].len() != 1 {
            return Err(Error::State(format!(
                "backward requires a scalar output, got shape {:?}",
                self.shapes[output.0]
            )));
        }
        if self.ran_backward {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        self.ran_backward = true;
        let mut grads: Vec<Vec<f64>> = self.values.iter().map(|v| vec![0.0; v.len()]).collect();
        grads[output.0][0] = 1.0;

        for i in (0..=output.0).rev() {
            let g = std::mem::take(&mut grads[i]);
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    axpy(&mut grads[a.0], &g, 1.0);
                    axpy(&mut grads[b.0], &g, 1.0);
                }
                Op::Sub(a, b) => {
                    axpy(&mut grads[a.0], &g, 1.0);
                    axpy(&mut grads[b.0], &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    for (k, &gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * self.values[b.0][k];
                    }
                    for (k, &gk) in g.iter().enumerate() {
                        grads[b.0][k] += gk * self.values[a.0][k];
                    }
                }
                Op::AddScalar(a) => axpy(&mut grads[a.0], &g, 1.0),
                Op::Scale(a, c) => axpy(&mut grads[a.0], &g, *c),
                Op::ScaleByNode(a, s) => {
                    let (a, s) = (*a, *s);
                    let c = self.values[s.0][0];
                    axpy(&mut grads[a.0], &g, c);
                    let ds: f64 = g.iter().zip(&self.values[a.0]).map(|(gk, ak)| gk * ak).sum();
                    grads[s.0][0] += ds;
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let (m, k) = (self.shapes[a.0][0], self.shapes[a.0][1]);
                    let n = self.shapes[b.0][1];
                    // dA += g . B^T
                    let vb = &self.values[b.0];
                    let da = &mut grads[a.0];
                    for i2 in 0..m {
                        for j in 0..n {
                            let gij = g[i2 * n + j];
                            if gij != 0.0 {
                                for p in 0..k {
                                    da[i2 * k + p] += gij * vb[p * n + j];
                                }
                            }
                        }
                    }
                    // dB += A^T . g
                    let va = &self.values[a.0];
                    let db = &mut grads[b.0];
                    for i2 in 0..m {
                        for p in 0..k {
                            let aip = va[i2 * k + p];
                            if aip != 0.0 {
                                for j in 0..n {
                                    db[p * n + j] += aip * g[i2 * n + j];
                                }
                            }
                        }
                    }
                }
                Op::Transpose(a) => {
                    let a = *a;
                    let (m, n) = (self.shapes[a.0][0], self.shapes[a.0][1]);
                    let da = &mut grads[a.0];
                    for i2 in 0..m {
                        for j in 0..n {
                            da[i2 * n + j] += g[j * m + i2];
                        }
                    }
                }
                Op::Reshape(a) => axpy(&mut grads[a.0], &g, 1.0),
                Op::SliceRows(a, start) => {
                    let a = *a;
                    let n = self.shapes[a.0][1];
                    let da = &mut grads[a.0];
                    for (k, &gk) in g.iter().enumerate() {
                        da[start * n + k] += gk;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let (a, start, end) = (*a, *start, *end);
                    let n = self.shapes[a.0][1];
                    let w = end - start;
                    let da = &mut grads[a.0];
                    for (k, &gk) in g.iter().enumerate() {
                        let (row, col) = (k / w, k % w);
                        da[row * n + start + col] += gk;
                    }
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut offset = 0;
                    for p in parts {
                        let len = self.values[p.0].len();
                        axpy(&mut grads[p.0], &g[offset..offset + len], 1.0);
                        offset += len;
                    }
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let m = self.shapes[parts[0].0][0];
                    let total: usize = parts.iter().map(|p| self.shapes[p.0][1]).sum();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.shapes[p.0][1];
                        let dp = &mut grads[p.0];
                        for i2 in 0..m {
                            for c in 0..w {
                                dp[i2 * w + c] += g[i2 * total + offset + c];
                            }
                        }
                        offset += w;
                    }
                }
                Op::Softmax(a) => {
                    let a = *a;
                    let (rows, cols) = self.rows_cols(NodeId(i));
                    let y = &self.values[i];
                    let da = &mut grads[a.0];
                    for r in 0..rows {
                        let base = r * cols;
                        let dot: f64 =
                            (0..cols).map(|c| g[base + c] * y[base + c]).sum();
                        for c in 0..cols {
                            da[base + c] += y[base + c] * (g[base + c] - dot);
                        }
                    }
                }
                Op::LayerNorm(a) => {
                    let a = *a;
                    let (rows, cols) = self.rows_cols(NodeId(i));
                    let x = &self.values[a.0];
                    let xhat = &self.values[i];
                    let da = &mut grads[a.0];
                    let nf = cols as f64;
                    for r in 0..rows {
                        let base = r * cols;
                        let mean = x[base..base + cols].iter().sum::<f64>() / nf;
                        let var =
                            x[base..base + cols].iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
                        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let g_mean: f64 = (0..cols).map(|c| g[base + c]).sum::<f64>() / nf;
                        let gx_mean: f64 =
                            (0..cols).map(|c| g[base + c] * xhat[base + c]).sum::<f64>() / nf;
                        for c in 0..cols {
                            da[base + c] +=
                                inv_std * (g[base + c] - g_mean - xhat[base + c] * gx_mean);
                        }
                    }
                }
                Op::AddRow(a, b) => {
                    let (a, b) = (*a, *b);
                    let cols = self.values[b.0].len();
                    axpy(&mut grads[a.0], &g, 1.0);
                    let db = &mut grads[b.0];
                    for (k, &gk) in g.iter().enumerate() {
                        db[k % cols] += gk;
                    }
                }
                Op::MulRow(a, b) => {
                    let (a, b) = (*a, *b);
                    let cols = self.values[b.0].len();
                    for (k, &gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * self.values[b.0][k % cols];
                    }
                    for (k, &gk) in g.iter().enumerate() {
                        grads[b.0][k % cols] += gk * self.values[a.0][k];
                    }
                }
                Op::Gelu(a) => {
                    let a = *a;
                    for (k, &gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * gelu_grad(self.values[a.0][k]);
                    }
                }
                Op::Relu(a) => {
                    let a = *a;
                    for (k, &gk) in g.iter().enumerate() {
                        if self.values[a.0][k] > 0.0 {
                            grads[a.0][k] += gk;
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = &self.values[i];
                    for (k, &gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * y[k] * (1.0 - y[k]);
                    }
                }
                Op::Sqrt(a) => {
                    let a = *a;
                    let y = &self.values[i];
                    for (k, &gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * 0.5 / y[k];
                    }
                }
                Op::Square(a) => {
                    let a = *a;
                    for (k, &gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * 2.0 * self.values[a.0][k];
                    }
                }
                Op::PowScalar(a, c) => {
                    let (a, c) = (*a, *c);
                    for (k, &gk) in g.iter().enumerate() {
                        grads[a.0][k] += gk * c * self.values[a.0][k].powf(c - 1.0);
                    }
                }
                Op::Sum(a) => {
                    let a = *a;
                    let g0 = g[0];
                    for d in grads[a.0].iter_mut() {
                        *d += g0;
                    }
                }
                Op::Mean(a) => {
                    let a = *a;
                    let g0 = g[0] / self.values[a.0].len() as f64;
                    for d in grads[a.0].iter_mut() {
                        *d += g0;
                    }
                }
            }
            grads[i] = g;
        }
        self.grads = grads;
        Ok(())
    }
}

fn axpy(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip != 0.0 {
                let b_row = &b[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aip * bv;
                }
            }
        }
    }
    out
}
