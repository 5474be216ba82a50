//! Minimal reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! Every value on a [`Tape`] is a 2-D [`Tensor`]; vectors are `1×n` or `n×1`
//! and scalars are `1×1`. There is no implicit broadcasting: row/column
//! replication is spelled out with [`Tape::gather_rows`] or a matmul against
//! a ones vector. Nodes are appended in evaluation order, so the tape is
//! already topologically sorted and [`Tape::backward`] is a single reverse
//! sweep.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("segment {0} has no rows")]
    EmptySegment(usize),
    #[error("segment ids must be sorted ascending and below the segment count")]
    UnsortedSegments,
    #[error("gather index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("backward requires a 1x1 loss, got {0:?}")]
    NonScalarLoss([usize; 2]),
}

pub type Result<T> = core::result::Result<T, AutodiffError>;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(AutodiffError::ShapeMismatch {
                op: "new",
                left: [rows, cols],
                right: [data.len(), 1],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    pub fn row(data: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn column(data: Vec<f64>) -> Self {
        Self {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Single value of a `1×1` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

/// Sorted segment assignment of rows: row `r` belongs to segment `ids[r]`.
///
/// Every segment in `0..count` owns at least one row, and rows of the same
/// segment are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    ids: Vec<usize>,
    offsets: Vec<usize>,
}

impl Segments {
    pub fn new(ids: Vec<usize>, count: usize) -> Result<Self> {
        let mut offsets = vec![0usize; count + 1];
        let mut prev = 0usize;
        for &id in &ids {
            if id < prev || id >= count {
                return Err(AutodiffError::UnsortedSegments);
            }
            prev = id;
            offsets[id + 1] += 1;
        }
        for s in 0..count {
            if offsets[s + 1] == 0 {
                return Err(AutodiffError::EmptySegment(s));
            }
            offsets[s + 1] += offsets[s];
        }
        Ok(Self { ids, offsets })
    }

    /// One segment per run of `lengths`.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(lengths.iter().sum());
        for (s, &n) in lengths.iter().enumerate() {
            ids.extend(core::iter::repeat_n(s, n));
        }
        Self::new(ids, lengths.len())
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn range(&self, segment: usize) -> core::ops::Range<usize> {
        self.offsets[segment]..self.offsets[segment + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMode {
    Mean,
    Max,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Mul(usize, usize),
    Concat(Vec<usize>, Axis),
    LeakyRelu(usize, f64),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Affine(usize, f64),
    GatherRows(usize, Arc<[usize]>),
    SegmentSoftmax(usize, Arc<Segments>),
    SegmentReduce {
        input: usize,
        segments: Arc<Segments>,
        mode: ReduceMode,
        /// Winning row per (segment, col) for max mode.
        argmax: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of primitive applications.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of the last `backward` loss with respect to `v`, if any
    /// flowed into it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        let [r, c] = self.shape(v);
        Some(Tensor {
            rows: r,
            cols: c,
            data: g.clone(),
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.cols != y.rows {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: x.shape(),
                right: y.shape(),
            });
        }
        let out = matmul_raw(x, y);
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::MatMul(a.0, b.0), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Add(a.0, b.0), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        let rg = self.needs(&[a.0, b.0]);
        Ok(self.push(out, Op::Mul(a.0, b.0), rg))
    }

    fn zip(&self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.shape() != y.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op,
                left: x.shape(),
                right: y.shape(),
            });
        }
        Ok(Tensor {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect(),
        })
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = self.shape(parts[0]);
        let out = match axis {
            Axis::Rows => {
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = &self.nodes[p.0].value;
                    if t.cols != first[1] {
                        return Err(AutodiffError::ShapeMismatch {
                            op: "concat",
                            left: first,
                            right: t.shape(),
                        });
                    }
                    rows += t.rows;
                    data.extend_from_slice(&t.data);
                }
                Tensor {
                    rows,
                    cols: first[1],
                    data,
                }
            }
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let t = &self.nodes[p.0].value;
                    if t.rows != first[0] {
                        return Err(AutodiffError::ShapeMismatch {
                            op: "concat",
                            left: first,
                            right: t.shape(),
                        });
                    }
                    cols += t.cols;
                }
                let mut data = Vec::with_capacity(first[0] * cols);
                for r in 0..first[0] {
                    for &p in parts {
                        data.extend_from_slice(self.nodes[p.0].value.row_slice(r));
                    }
                }
                Tensor {
                    rows: first[0],
                    cols,
                    data,
                }
            }
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.needs(&ids);
        Ok(self.push(out, Op::Concat(ids, axis), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = &self.nodes[a.0].value;
        let out = Tensor {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().map(|&v| f(v)).collect(),
        };
        let rg = self.nodes[a.0].requires_grad;
        self.push(out, op, rg)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(a, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(a.0, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, libm::tanh, Op::Tanh(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, libm::exp, Op::Exp(a.0))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, libm::log, Op::Log(a.0))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        self.unary(a, |v| scale * v + shift, Op::Affine(a.0, scale))
    }

    pub fn gather_rows(&mut self, a: Var, index: impl Into<Arc<[usize]>>) -> Result<Var> {
        let index: Arc<[usize]> = index.into();
        let x = &self.nodes[a.0].value;
        let mut data = Vec::with_capacity(index.len() * x.cols);
        for &i in index.iter() {
            if i >= x.rows {
                return Err(AutodiffError::IndexOutOfRange {
                    index: i,
                    rows: x.rows,
                });
            }
            data.extend_from_slice(x.row_slice(i));
        }
        let out = Tensor {
            rows: index.len(),
            cols: x.cols,
            data,
        };
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(out, Op::GatherRows(a.0, index), rg))
    }

    /// Column-wise softmax within each segment of rows.
    pub fn segment_softmax(&mut self, a: Var, segments: &Arc<Segments>) -> Result<Var> {
        let x = &self.nodes[a.0].value;
        check_segments(x, segments)?;
        let mut out = Tensor::zeros(x.rows, x.cols);
        for s in 0..segments.count() {
            let range = segments.range(s);
            for c in 0..x.cols {
                let mut max = f64::NEG_INFINITY;
                for r in range.clone() {
                    max = max.max(x.data[r * x.cols + c]);
                }
                let mut total = 0.0;
                for r in range.clone() {
                    let e = libm::exp(x.data[r * x.cols + c] - max);
                    out.data[r * x.cols + c] = e;
                    total += e;
                }
                for r in range.clone() {
                    out.data[r * x.cols + c] /= total;
                }
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(out, Op::SegmentSoftmax(a.0, segments.clone()), rg))
    }

    /// Reduce the rows of each segment to a single row.
    pub fn segment_reduce(&mut self, a: Var, segments: &Arc<Segments>, mode: ReduceMode) -> Result<Var> {
        let x = &self.nodes[a.0].value;
        check_segments(x, segments)?;
        let n = segments.count();
        let mut out = Tensor::zeros(n, x.cols);
        let mut argmax = Vec::new();
        if mode == ReduceMode::Max {
            argmax = vec![0usize; n * x.cols];
        }
        for s in 0..n {
            let range = segments.range(s);
            for c in 0..x.cols {
                let slot = &mut out.data[s * x.cols + c];
                match mode {
                    ReduceMode::Sum => {
                        let mut acc = 0.0;
                        for r in range.clone() {
                            acc += x.data[r * x.cols + c];
                        }
                        *slot = acc;
                    }
                    ReduceMode::Mean => {
                        // running mean: identical rows reproduce the row bit-for-bit
                        let mut mean = 0.0;
                        for (k, r) in range.clone().enumerate() {
                            mean += (x.data[r * x.cols + c] - mean) / (k + 1) as f64;
                        }
                        *slot = mean;
                    }
                    ReduceMode::Max => {
                        let mut best = range.start;
                        for r in range.clone() {
                            // strict comparison keeps the first index on ties
                            if x.data[r * x.cols + c] > x.data[best * x.cols + c] {
                                best = r;
                            }
                        }
                        *slot = x.data[best * x.cols + c];
                        argmax[s * x.cols + c] = best;
                    }
                }
            }
        }
        let rg = self.nodes[a.0].requires_grad;
        Ok(self.push(
            out,
            Op::SegmentReduce {
                input: a.0,
                segments: segments.clone(),
                mode,
                argmax,
            },
            rg,
        ))
    }

    // ---- composites built from the primitives above ----

    /// Sum of every element as a `1×1` value.
    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        let [r, c] = self.shape(a);
        let left = self.constant(Tensor::filled(1, r, 1.0));
        let right = self.constant(Tensor::filled(c, 1, 1.0));
        let t = self.matmul(left, a)?;
        self.matmul(t, right)
    }

    /// Per-row sum as an `n×1` column.
    pub fn row_sums(&mut self, a: Var) -> Result<Var> {
        let c = self.shape(a)[1];
        let ones = self.constant(Tensor::filled(c, 1, 1.0));
        self.matmul(a, ones)
    }

    /// Replicate an `n×1` column across `cols` columns.
    pub fn repeat_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let ones = self.constant(Tensor::filled(1, cols, 1.0));
        self.matmul(a, ones)
    }

    /// Replicate a `1×d` row `rows` times.
    pub fn repeat_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        self.gather_rows(a, vec![0usize; rows])
    }

    /// `x · w + b` with `b` a `1×d` row.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => {
                let rows = self.shape(y)[0];
                let bb = self.repeat_rows(b, rows)?;
                self.add(y, bb)
            }
            None => Ok(y),
        }
    }

    /// Populate gradients of `loss` with respect to every node that
    /// requires one. Gradients from repeated uses of a value add up.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (n, k, m) = (x.rows, x.cols, y.cols);
                if m == 0 || k == 0 {
                    return;
                }
                if self.nodes[*a].requires_grad {
                    // dA = G · Bᵀ
                    let acc = slot(grads, *a, n * k);
                    for (arow, grow) in acc.chunks_exact_mut(k).zip(g.chunks_exact(m)) {
                        for (d, brow) in arow.iter_mut().zip(y.data.chunks_exact(m)) {
                            *d += grow.iter().zip(brow).map(|(p, q)| p * q).sum::<f64>();
                        }
                    }
                }
                if self.nodes[*b].requires_grad {
                    // dB = Aᵀ · G
                    let acc = slot(grads, *b, k * m);
                    for (xrow, grow) in x.data.chunks_exact(k).zip(g.chunks_exact(m)) {
                        for (&av, brow) in xrow.iter().zip(acc.chunks_exact_mut(m)) {
                            if av == 0.0 {
                                continue;
                            }
                            for (d, &q) in brow.iter_mut().zip(grow) {
                                *d += av * q;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for &p in [a, b] {
                    if self.nodes[p].requires_grad {
                        let acc = slot(grads, p, g.len());
                        for (d, &s) in acc.iter_mut().zip(g) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (&self.nodes[*a].value.data, &self.nodes[*b].value.data);
                if self.nodes[*a].requires_grad {
                    let acc = slot(grads, *a, g.len());
                    for j in 0..g.len() {
                        acc[j] += g[j] * y[j];
                    }
                }
                if self.nodes[*b].requires_grad {
                    let acc = slot(grads, *b, g.len());
                    for j in 0..g.len() {
                        acc[j] += g[j] * x[j];
                    }
                }
            }
            Op::Concat(parts, axis) => match axis {
                Axis::Rows => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p].value.len();
                        if self.nodes[p].requires_grad {
                            let acc = slot(grads, p, len);
                            for j in 0..len {
                                acc[j] += g[offset + j];
                            }
                        }
                        offset += len;
                    }
                }
                Axis::Cols => {
                    let mut col = 0;
                    for &p in parts {
                        let t = &self.nodes[p].value;
                        if self.nodes[p].requires_grad {
                            let acc = slot(grads, p, t.len());
                            for r in 0..t.rows {
                                for c in 0..t.cols {
                                    acc[r * t.cols + c] += g[r * out.cols + col + c];
                                }
                            }
                        }
                        col += t.cols;
                    }
                }
            },
            Op::LeakyRelu(a, slope) => {
                let x = &self.nodes[*a].value.data;
                let acc = slot(grads, *a, g.len());
                for j in 0..g.len() {
                    acc[j] += if x[j] > 0.0 { g[j] } else { slope * g[j] };
                }
            }
            Op::Tanh(a) => {
                let acc = slot(grads, *a, g.len());
                for j in 0..g.len() {
                    let t = out.data[j];
                    acc[j] += g[j] * (1.0 - t * t);
                }
            }
            Op::Exp(a) => {
                let acc = slot(grads, *a, g.len());
                for j in 0..g.len() {
                    acc[j] += g[j] * out.data[j];
                }
            }
            Op::Log(a) => {
                let x = &self.nodes[*a].value.data;
                let acc = slot(grads, *a, g.len());
                for j in 0..g.len() {
                    acc[j] += g[j] / x[j];
                }
            }
            Op::Affine(a, scale) => {
                let acc = slot(grads, *a, g.len());
                for j in 0..g.len() {
                    acc[j] += g[j] * scale;
                }
            }
            Op::GatherRows(a, index) => {
                let x = &self.nodes[*a].value;
                let cols = x.cols;
                let acc = slot(grads, *a, x.len());
                for (r, &src) in index.iter().enumerate() {
                    for c in 0..cols {
                        acc[src * cols + c] += g[r * cols + c];
                    }
                }
            }
            Op::SegmentSoftmax(a, segments) => {
                let cols = out.cols;
                let acc = slot(grads, *a, g.len());
                for s in 0..segments.count() {
                    let range = segments.range(s);
                    for c in 0..cols {
                        let mut dot = 0.0;
                        for r in range.clone() {
                            dot += g[r * cols + c] * out.data[r * cols + c];
                        }
                        for r in range.clone() {
                            let y = out.data[r * cols + c];
                            acc[r * cols + c] += y * (g[r * cols + c] - dot);
                        }
                    }
                }
            }
            Op::SegmentReduce {
                input,
                segments,
                mode,
                argmax,
            } => {
                let x = &self.nodes[*input].value;
                let cols = x.cols;
                let acc = slot(grads, *input, x.len());
                for s in 0..segments.count() {
                    let range = segments.range(s);
                    let scale = match mode {
                        ReduceMode::Mean => 1.0 / range.len() as f64,
                        _ => 1.0,
                    };
                    for c in 0..cols {
                        let gv = g[s * cols + c];
                        match mode {
                            ReduceMode::Sum | ReduceMode::Mean => {
                                for r in range.clone() {
                                    acc[r * cols + c] += gv * scale;
                                }
                            }
                            ReduceMode::Max => {
                                acc[argmax[s * cols + c] * cols + c] += gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], i: usize, len: usize) -> &mut Vec<f64> {
    grads[i].get_or_insert_with(|| vec![0.0; len])
}

fn check_segments(x: &Tensor, segments: &Segments) -> Result<()> {
    if segments.len() != x.rows {
        return Err(AutodiffError::ShapeMismatch {
            op: "segments",
            left: x.shape(),
            right: [segments.len(), 1],
        });
    }
    Ok(())
}

pub(crate) fn matmul_raw(x: &Tensor, y: &Tensor) -> Tensor {
    let (n, m) = (x.rows, y.cols);
    let mut data = vec![0.0; n * m];
    if m == 0 {
        return Tensor { rows: n, cols: m, data };
    }
    for (orow, xrow) in data.chunks_exact_mut(m).zip(x.data.chunks_exact(x.cols.max(1))) {
        for (&av, brow) in xrow.iter().zip(y.data.chunks_exact(m)) {
            if av == 0.0 {
                continue;
            }
            for (o, &b) in orow.iter_mut().zip(brow) {
                *o += av * b;
            }
        }
    }
    Tensor { rows: n, cols: m, data }
}
