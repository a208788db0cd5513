use std::sync::Arc;

use rand::Rng;

use super::kernels::{gemm, View};
use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var, Var),
    Scale(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    Relu(Var),
    Gelu(Var),
    Exp(Var),
    Log1p(Var),
    Square(Var),
    Softplus(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Softmax { x: Var, axis: usize },
    LogSoftmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    GatherRows { x: Var, idx: Arc<[usize]> },
    ScatterAddRows { x: Var, idx: Arc<[usize]> },
    SegmentSoftmax { x: Var, seg: Arc<[usize]> },
    HeadMatmul { x: Var, w: Var, heads: usize },
    HeadDot { a: Var, b: Var, heads: usize },
    HeadScale { x: Var, s: Var, heads: usize },
    Sum(Var),
    Mean(Var),
    GradReverse { x: Var, scale: f64 },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::AddScalar(..) => "add_scalar",
            Op::Scale(..) => "scale",
            Op::Concat { .. } => "concat",
            Op::Relu(..) => "relu",
            Op::Gelu(..) => "gelu",
            Op::Exp(..) => "exp",
            Op::Log1p(..) => "log1p",
            Op::Square(..) => "square",
            Op::Softplus(..) => "softplus",
            Op::Clamp { .. } => "clamp",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax(..) => "log_softmax",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Dropout { .. } => "dropout",
            Op::GatherRows { .. } => "gather_rows",
            Op::ScatterAddRows { .. } => "scatter_add_rows",
            Op::SegmentSoftmax { .. } => "segment_softmax",
            Op::HeadMatmul { .. } => "head_matmul",
            Op::HeadDot { .. } => "head_dot",
            Op::HeadScale { .. } => "head_scale",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::GradReverse { .. } => "grad_reverse",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) | Op::AddScalar(a, b) => {
                vec![*a, *b]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::HeadMatmul { x, w: y, .. } | Op::HeadDot { a: x, b: y, .. } | Op::HeadScale { x, s: y, .. } => {
                vec![*x, *y]
            }
            Op::Scale(x, _)
            | Op::Relu(x)
            | Op::Gelu(x)
            | Op::Exp(x)
            | Op::Log1p(x)
            | Op::Square(x)
            | Op::Softplus(x)
            | Op::LogSoftmax(x)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::Clamp { x, .. }
            | Op::Softmax { x, .. }
            | Op::Dropout { x, .. }
            | Op::GatherRows { x, .. }
            | Op::ScatterAddRows { x, .. }
            | Op::SegmentSoftmax { x, .. }
            | Op::GradReverse { x, .. } => vec![*x],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records tensor operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order; [`Tape::backward`] walks it once in reverse.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the variable does not require grad or the loss does not
    /// depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, detail }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_K * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// (outer, len, inner) decomposition of `shape` around `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
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

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.leaf(t, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFiniteValue { op: op.name() });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{:?} vs {:?}", sa, sb)));
        }
        Ok(())
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(out, op)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, AutodiffError> {
        self.same_shape(op.name(), a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", format!("{:?} @ {:?}", ta.shape(), tb.shape())));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(View::dense(ta.data(), m, k), View::dense(tb.data(), k, n), &mut out, 0, n, 0.0);
        let out = Tensor::new(vec![m, n], out)?;
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Adds a length-`cols` vector to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = tx.cols();
        if tb.len() != c {
            return Err(shape_err("add_row", format!("{:?} + row {:?}", tx.shape(), tb.shape())));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            for (v, b) in row.iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push(out, Op::AddRow(x, bias))
    }

    /// Adds a single-element tensor to every entry of `x`.
    pub fn add_scalar(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        let ts = self.value(s);
        if ts.len() != 1 {
            return Err(shape_err("add_scalar", format!("scalar operand has shape {:?}", ts.shape())));
        }
        let s_val = ts.item();
        let tx = self.value(x);
        let data = tx.data().iter().map(|v| v + s_val).collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push(out, Op::AddScalar(x, s))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.map(x, Op::Scale(x, c), |v| v * c)
    }

    /// Concatenate along `axis` (0 = stack rows, 1 = join columns) of
    /// rank-2 tensors.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        if inputs.is_empty() || axis > 1 {
            return Err(shape_err("concat", format!("{} inputs, axis {}", inputs.len(), axis)));
        }
        let shapes: Vec<(usize, usize)> = inputs
            .iter()
            .map(|&v| (self.value(v).rows(), self.value(v).cols()))
            .collect();
        let out = if axis == 0 {
            let c = shapes[0].1;
            if shapes.iter().any(|s| s.1 != c) {
                return Err(shape_err("concat", format!("column counts differ: {:?}", shapes)));
            }
            let mut data = Vec::with_capacity(shapes.iter().map(|s| s.0 * c).sum());
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
            let rows = shapes.iter().map(|s| s.0).sum();
            Tensor::new(vec![rows, c], data)?
        } else {
            let r = shapes[0].0;
            if shapes.iter().any(|s| s.0 != r) {
                return Err(shape_err("concat", format!("row counts differ: {:?}", shapes)));
            }
            let total: usize = shapes.iter().map(|s| s.1).sum();
            let mut data = Vec::with_capacity(r * total);
            for i in 0..r {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row(i));
                }
            }
            Tensor::new(vec![r, total], data)?
        };
        self.push(
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.map(x, Op::Relu(x), |v| v.max(0.0))
    }

    /// `max(0, x)`; same rule as [`Tape::relu`].
    pub fn hinge(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.relu(x)
    }

    /// tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.map(x, Op::Gelu(x), gelu)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.map(x, Op::Exp(x), f64::exp)
    }

    pub fn log1p(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.map(x, Op::Log1p(x), f64::ln_1p)
    }

    pub fn square(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.map(x, Op::Square(x), |v| v * v)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.map(x, Op::Softplus(x), softplus)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        self.map(x, Op::Clamp { x, lo, hi }, |v| v.clamp(lo, hi))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if axis >= t.shape().len() {
            return Err(shape_err("softmax", format!("axis {} for shape {:?}", axis, t.shape())));
        }
        let (outer, len, inner) = axis_split(t.shape(), axis);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..len {
                    let e = (src[at(k)] - max).exp();
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..len {
                    out[at(k)] /= z;
                }
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        self.push(out, Op::Softmax { x, axis })
    }

    /// Row-wise log-softmax of a rank-2 tensor.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let c = t.cols();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(c.max(1)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        self.push(out, Op::LogSoftmax(x))
    }

    /// Normalizes each row to zero mean / unit variance, then applies the
    /// per-column affine `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let c = t.cols();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(shape_err(
                "layer_norm",
                format!(
                    "x {:?}, gamma {:?}, beta {:?}",
                    t.shape(),
                    self.value(gamma).shape(),
                    self.value(beta).shape()
                ),
            ));
        }
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let rows = t.rows();
        let mut xhat = vec![0.0; t.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; t.len()];
        for r in 0..rows {
            let row = t.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..c {
                let xh = (row[j] - mean) * is;
                xhat[r * c + j] = xh;
                out[r * c + j] = xh * g[j] + b[j];
            }
        }
        let out = Tensor::new(t.shape().to_vec(), out)?;
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)`. With
    /// `train == false` (or `p == 0`) this returns `x` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, train: bool, rng: &mut R) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(shape_err("dropout", format!("probability {} outside [0,1)", p)));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
        let t = self.value(x);
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(out, Op::Dropout { x, mask })
    }

    /// Row gather: `out[i] = x[idx[i]]`.
    pub fn embedding_select(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let (n, c) = (t.rows(), t.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err("gather_rows", format!("index {} out of {} rows", bad, n)));
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::new(vec![idx.len(), c], data)?;
        self.push(out, Op::GatherRows { x, idx })
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var, AutodiffError> {
        self.embedding_select(x, idx)
    }

    /// Row scatter-add into `n_out` rows: `out[idx[i]] += x[i]`.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Arc<[usize]>, n_out: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let c = t.cols();
        if idx.len() != t.rows() || idx.iter().any(|&i| i >= n_out) {
            return Err(shape_err(
                "scatter_add_rows",
                format!("{} indices for {} rows into {}", idx.len(), t.rows(), n_out),
            ));
        }
        let mut data = vec![0.0; n_out * c];
        for (r, &i) in idx.iter().enumerate() {
            for (o, v) in data[i * c..(i + 1) * c].iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let out = Tensor::new(vec![n_out, c], data)?;
        self.push(out, Op::ScatterAddRows { x, idx })
    }

    /// Softmax over rows sharing the same segment id, independently per
    /// column. `x` is `[edges, heads]`; `seg[e]` is the segment of row `e`.
    pub fn segment_softmax(&mut self, x: Var, seg: Arc<[usize]>, n_seg: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let (e, h) = (t.rows(), t.cols());
        if seg.len() != e || seg.iter().any(|&s| s >= n_seg) {
            return Err(shape_err("segment_softmax", format!("{} segment ids for {} rows", seg.len(), e)));
        }
        let src = t.data();
        let mut max = vec![f64::NEG_INFINITY; n_seg * h];
        for r in 0..e {
            for k in 0..h {
                let m = &mut max[seg[r] * h + k];
                *m = m.max(src[r * h + k]);
            }
        }
        let mut out = vec![0.0; e * h];
        let mut z = vec![0.0; n_seg * h];
        for r in 0..e {
            for k in 0..h {
                let v = (src[r * h + k] - max[seg[r] * h + k]).exp();
                out[r * h + k] = v;
                z[seg[r] * h + k] += v;
            }
        }
        for r in 0..e {
            for k in 0..h {
                out[r * h + k] /= z[seg[r] * h + k];
            }
        }
        let out = Tensor::new(vec![e, h], out)?;
        self.push(out, Op::SegmentSoftmax { x, seg })
    }

    /// Per-head block-diagonal projection. `x` is `[n, heads*dh]`, `w` is
    /// `[heads*dh, dh]` holding one `dh x dh` block per head.
    pub fn head_matmul(&mut self, x: Var, w: Var, heads: usize) -> Result<Var, AutodiffError> {
        let (tx, tw) = (self.value(x), self.value(w));
        let d = tx.cols();
        if heads == 0 || d % heads != 0 || tw.shape() != [d, d / heads] {
            return Err(shape_err(
                "head_matmul",
                format!("x {:?}, w {:?}, heads {}", tx.shape(), tw.shape(), heads),
            ));
        }
        let (n, dh) = (tx.rows(), d / heads);
        let mut out = vec![0.0; n * d];
        for h in 0..heads {
            let xv = View {
                data: tx.data(),
                offset: h * dh,
                rows: n,
                cols: dh,
                rs: d as isize,
                cs: 1,
            };
            let wv = View {
                data: tw.data(),
                offset: h * dh * dh,
                rows: dh,
                cols: dh,
                rs: dh as isize,
                cs: 1,
            };
            gemm(xv, wv, &mut out, h * dh, d, 0.0);
        }
        let out = Tensor::new(vec![n, d], out)?;
        self.push(out, Op::HeadMatmul { x, w, heads })
    }

    /// Per-head row-wise dot products: `[e, heads*dh] x [e, heads*dh] -> [e, heads]`.
    pub fn head_dot(&mut self, a: Var, b: Var, heads: usize) -> Result<Var, AutodiffError> {
        self.same_shape("head_dot", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let d = ta.cols();
        if heads == 0 || d % heads != 0 {
            return Err(shape_err("head_dot", format!("{} columns for {} heads", d, heads)));
        }
        let (e, dh) = (ta.rows(), d / heads);
        let mut out = vec![0.0; e * heads];
        for r in 0..e {
            let (ra, rb) = (ta.row(r), tb.row(r));
            for h in 0..heads {
                out[r * heads + h] = ra[h * dh..(h + 1) * dh]
                    .iter()
                    .zip(&rb[h * dh..(h + 1) * dh])
                    .map(|(x, y)| x * y)
                    .sum();
            }
        }
        let out = Tensor::new(vec![e, heads], out)?;
        self.push(out, Op::HeadDot { a, b, heads })
    }

    /// Scales each head block of `x` (`[e, heads*dh]`) by `s[e, h]`.
    pub fn head_scale(&mut self, x: Var, s: Var, heads: usize) -> Result<Var, AutodiffError> {
        let (tx, ts) = (self.value(x), self.value(s));
        let d = tx.cols();
        if heads == 0 || d % heads != 0 || ts.rows() != tx.rows() || ts.cols() != heads {
            return Err(shape_err(
                "head_scale",
                format!("x {:?}, s {:?}, heads {}", tx.shape(), ts.shape(), heads),
            ));
        }
        let dh = d / heads;
        let mut out = tx.data().to_vec();
        for r in 0..tx.rows() {
            for h in 0..heads {
                let f = ts.data()[r * heads + h];
                out[r * d + h * dh..r * d + (h + 1) * dh].iter_mut().for_each(|v| *v *= f);
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(out, Op::HeadScale { x, s, heads })
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(shape_err("mean", "empty tensor".into()));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Identity on the forward pass; multiplies the incoming gradient by
    /// `-scale` on the backward pass.
    pub fn grad_reverse(&mut self, x: Var, scale: f64) -> Result<Var, AutodiffError> {
        let t = self.value(x).clone();
        self.push(t, Op::GradReverse { x, scale })
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, AutodiffError> {
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss {
                shape: self.value(loss).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                match (g, node.requires_grad) {
                    (Some(g), true) => Tensor::new(node.value.shape().to_vec(), g).ok(),
                    _ => None,
                }
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                let gv = View::dense(g, m, n);
                if let Some(ga) = self.acc(grads, *a) {
                    gemm(gv, View::dense(tb.data(), k, n).t(), ga, 0, k, 1.0);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    gemm(View::dense(ta.data(), m, k).t(), gv, gb, 0, n, 1.0);
                }
            }
            Op::Add(a, b) => {
                for (v, sign) in [(*a, 1.0), (*b, 1.0)] {
                    if let Some(ga) = self.acc(grads, v) {
                        ga.iter_mut().zip(g).for_each(|(x, y)| *x += sign * y);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                    if let Some(ga) = self.acc(grads, v) {
                        ga.iter_mut().zip(g).for_each(|(x, y)| *x += sign * y);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for j in 0..g.len() {
                        ga[j] += g[j] * db[j];
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for j in 0..g.len() {
                        gb[j] += g[j] * da[j];
                    }
                }
            }
            Op::AddRow(x, bias) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                let c = self.value(*bias).len();
                if let Some(gb) = self.acc(grads, *bias) {
                    for row in g.chunks(c.max(1)) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::AddScalar(x, s) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                if let Some(gs) = self.acc(grads, *s) {
                    gs[0] += g.iter().sum::<f64>();
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a += c * b);
                }
            }
            Op::GradReverse { x, scale } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, b)| *a -= scale * b);
                }
            }
            Op::Concat { inputs, axis } => {
                if *axis == 0 {
                    let mut off = 0;
                    for &v in inputs {
                        let n = self.value(v).len();
                        if let Some(gv) = self.acc(grads, v) {
                            gv.iter_mut().zip(&g[off..off + n]).for_each(|(a, b)| *a += b);
                        }
                        off += n;
                    }
                } else {
                    let total = node.value.cols();
                    let mut col = 0;
                    for &v in inputs {
                        let (r, c) = (self.value(v).rows(), self.value(v).cols());
                        if let Some(gv) = self.acc(grads, v) {
                            for row in 0..r {
                                let src = &g[row * total + col..row * total + col + c];
                                gv[row * c..(row + 1) * c].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                            }
                        }
                        col += c;
                    }
                }
            }
            Op::Relu(x) => self.unary_grad(grads, *x, g, |xv, _| if xv > 0.0 { 1.0 } else { 0.0 }),
            Op::Gelu(x) => self.unary_grad(grads, *x, g, |xv, _| gelu_grad(xv)),
            Op::Exp(x) => {
                let o = out.to_vec();
                if let Some(gx) = self.acc(grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += g[j] * o[j];
                    }
                }
            }
            Op::Log1p(x) => self.unary_grad(grads, *x, g, |xv, _| 1.0 / (1.0 + xv)),
            Op::Square(x) => self.unary_grad(grads, *x, g, |xv, _| 2.0 * xv),
            Op::Softplus(x) => self.unary_grad(grads, *x, g, |xv, _| sigmoid(xv)),
            Op::Clamp { x, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                self.unary_grad(grads, *x, g, move |xv, _| if xv > lo && xv < hi { 1.0 } else { 0.0 })
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                if let Some(gx) = self.acc(grads, *x) {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + ii;
                            let dot: f64 = (0..len).map(|k| g[at(k)] * out[at(k)]).sum();
                            for k in 0..len {
                                gx[at(k)] += out[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                }
            }
            Op::LogSoftmax(x) => {
                let c = node.value.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for r in 0..node.value.rows() {
                        let gs: f64 = g[r * c..(r + 1) * c].iter().sum();
                        for j in 0..c {
                            gx[r * c + j] += g[r * c + j] - out[r * c + j].exp() * gs;
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = node.value.cols();
                let rows = node.value.rows();
                let gam = self.value(*gamma).data().to_vec();
                if let Some(gb) = self.acc(grads, *beta) {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                }
                if let Some(gg) = self.acc(grads, *gamma) {
                    for r in 0..rows {
                        for j in 0..c {
                            gg[j] += g[r * c + j] * xhat[r * c + j];
                        }
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let cf = c as f64;
                    for r in 0..rows {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..c {
                            let dxh = g[r * c + j] * gam[j];
                            s1 += dxh;
                            s2 += dxh * xhat[r * c + j];
                        }
                        for j in 0..c {
                            let dxh = g[r * c + j] * gam[j];
                            gx[r * c + j] += inv_std[r] / cf * (cf * dxh - s1 - xhat[r * c + j] * s2);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += g[j] * mask[j];
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                let c = node.value.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (&src, gr) in idx.iter().zip(g.chunks_exact(c.max(1))) {
                        gx[src * c..(src + 1) * c].iter_mut().zip(gr).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::ScatterAddRows { x, idx } => {
                let c = node.value.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (&dst, gr) in idx.iter().zip(gx.chunks_exact_mut(c.max(1))) {
                        gr.iter_mut().zip(&g[dst * c..(dst + 1) * c]).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::SegmentSoftmax { x, seg } => {
                let h = node.value.cols();
                let n_seg = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg * h];
                for (r, &s) in seg.iter().enumerate() {
                    for k in 0..h {
                        dot[s * h + k] += g[r * h + k] * out[r * h + k];
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &s) in seg.iter().enumerate() {
                        for k in 0..h {
                            gx[r * h + k] += out[r * h + k] * (g[r * h + k] - dot[s * h + k]);
                        }
                    }
                }
            }
            Op::HeadMatmul { x, w, heads } => {
                let (tx, tw) = (self.value(*x), self.value(*w));
                let (n, d) = (tx.rows(), tx.cols());
                let dh = d / heads;
                for h in 0..*heads {
                    let gv = View {
                        data: g,
                        offset: h * dh,
                        rows: n,
                        cols: dh,
                        rs: d as isize,
                        cs: 1,
                    };
                    if let Some(gx) = self.acc(grads, *x) {
                        let wt = View {
                            data: tw.data(),
                            offset: h * dh * dh,
                            rows: dh,
                            cols: dh,
                            rs: dh as isize,
                            cs: 1,
                        }
                        .t();
                        gemm(gv, wt, gx, h * dh, d, 1.0);
                    }
                    if let Some(gw) = self.acc(grads, *w) {
                        let xt = View {
                            data: tx.data(),
                            offset: h * dh,
                            rows: n,
                            cols: dh,
                            rs: d as isize,
                            cs: 1,
                        }
                        .t();
                        gemm(xt, gv, gw, h * dh * dh, dh, 1.0);
                    }
                }
            }
            Op::HeadDot { a, b, heads } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let d = ta.cols();
                let dh = d / heads;
                for (src, other) in [(*a, tb), (*b, ta)] {
                    if let Some(gs) = self.acc(grads, src) {
                        let rows = gs.chunks_exact_mut(d).zip(other.data().chunks_exact(d));
                        for ((gr, or), gh) in rows.zip(g.chunks_exact(*heads)) {
                            for ((gb, ob), &f) in gr.chunks_exact_mut(dh).zip(or.chunks_exact(dh)).zip(gh) {
                                gb.iter_mut().zip(ob).for_each(|(a, b)| *a += f * b);
                            }
                        }
                    }
                }
            }
            Op::HeadScale { x, s, heads } => {
                let (tx, ts) = (self.value(*x), self.value(*s));
                let d = tx.cols();
                let dh = d / heads;
                if let Some(gx) = self.acc(grads, *x) {
                    let rows = gx.chunks_exact_mut(d).zip(g.chunks_exact(d));
                    for ((xr, gr), sr) in rows.zip(ts.data().chunks_exact(*heads)) {
                        for ((xb, gb), &f) in xr.chunks_exact_mut(dh).zip(gr.chunks_exact(dh)).zip(sr) {
                            xb.iter_mut().zip(gb).for_each(|(a, b)| *a += f * b);
                        }
                    }
                }
                if let Some(gs) = self.acc(grads, *s) {
                    let rows = g.chunks_exact(d).zip(tx.data().chunks_exact(d));
                    for ((gr, xr), sr) in rows.zip(gs.chunks_exact_mut(*heads)) {
                        for ((gb, xb), o) in gr.chunks_exact(dh).zip(xr.chunks_exact(dh)).zip(sr) {
                            *o += gb.iter().zip(xb).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().for_each(|a| *a += g[0] / n);
                }
            }
        }
    }

    fn unary_grad(&self, grads: &mut [Option<Vec<f64>>], x: Var, g: &[f64], d: impl Fn(f64, f64) -> f64) {
        let xs = self.value(x).data();
        if let Some(gx) = self.acc(grads, x) {
            for j in 0..g.len() {
                gx[j] += g[j] * d(xs[j], g[j]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_check, finite_difference_check_many};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn rand_t(shape: &[usize], seed: u64) -> Tensor {
        Tensor::uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Weighted sum so every output element reaches the loss with a
    /// distinct coefficient.
    fn probe(tape: &mut Tape, y: Var) -> Result<Var, AutodiffError> {
        let shape = tape.value(y).shape().to_vec();
        let n = tape.value(y).len();
        let w = tape.constant(Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?);
        let p = tape.mul(y, w)?;
        tape.sum(p)
    }

    #[test]
    fn spec_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[1, 1], &[2.0]));
        let b = tape.constant(t(&[1, 1], &[3.0]));
        let m = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(m).data(), &[6.0]);

        let x = tape.constant(t(&[4], &[0.7; 4]));
        let s = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(s).data(), &[0.25; 4]);

        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.square(x).unwrap();
        assert_eq!(tape.backward(y).unwrap().get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![5], vec![1.0, -2.0, 3.0, 0.5, 9.0]).unwrap());
        let s = tape.sum(x).unwrap();
        assert_eq!(tape.backward(s).unwrap().get(x).unwrap().data(), &[1.0; 5]);

        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, 3.0]));
        let sq = tape.square(x).unwrap();
        let m = tape.mean(sq).unwrap();
        let g = tape.backward(m).unwrap();
        let want = [2.0 / 3.0, 4.0 / 3.0, 2.0];
        for (a, b) in g.get(x).unwrap().data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }

        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.5));
        let y = tape.add(x, x).unwrap();
        assert_eq!(tape.backward(y).unwrap().get(x).unwrap().item(), 2.0);
    }

    #[test]
    fn non_grad_inputs_get_nothing_and_errors_trap() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let c = tape.constant(t(&[2], &[3.0, 4.0]));
        let p = tape.mul(x, c).unwrap();
        let s = tape.sum(p).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[3.0, 4.0]);
        assert!(matches!(tape.backward(p), Err(AutodiffError::NonScalarLoss { .. })));
        let big = tape.constant(t(&[1], &[1000.0]));
        assert!(matches!(tape.exp(big), Err(AutodiffError::NonFiniteValue { op: "exp" })));
        let a = tape.constant(t(&[2, 3], &[0.0; 6]));
        assert!(matches!(tape.matmul(a, a), Err(AutodiffError::ShapeMismatch { .. })));
    }

    #[test]
    fn unary_and_binary_ops_pass_gradient_checks() {
        let x = rand_t(&[3, 4], 1);
        // keep away from the kinks of relu / clamp
        let away = Tensor::new(vec![3, 4], x.data().iter().map(|v| if v.abs() < 0.05 { v + 0.2 } else { *v }).collect()).unwrap();
        type Unary = fn(&mut Tape, Var) -> Result<Var, AutodiffError>;
        let unary: Vec<(&str, Unary)> = vec![
            ("relu", |t, x| t.relu(x)),
            ("hinge", |t, x| t.hinge(x)),
            ("gelu", |t, x| t.gelu(x)),
            ("exp", |t, x| t.exp(x)),
            ("log1p", |t, x| {
                let s = t.square(x)?;
                t.log1p(s)
            }),
            ("square", |t, x| t.square(x)),
            ("softplus", |t, x| t.softplus(x)),
            ("clamp", |t, x| t.clamp(x, -0.5, 0.5)),
            ("scale", |t, x| t.scale(x, -1.7)),
            ("softmax0", |t, x| t.softmax(x, 0)),
            ("softmax1", |t, x| t.softmax(x, 1)),
            ("log_softmax", |t, x| t.log_softmax(x)),
            ("mean", |t, x| t.mean(x)),
            ("grad_reverse", |t, x| t.grad_reverse(x, -1.0)),
        ];
        for (name, f) in unary {
            let err = finite_difference_check(|tape, x| f(tape, x).and_then(|y| probe(tape, y)), &away, 1e-5).unwrap();
            assert!(err < 1e-6, "{}: {}", name, err);
        }
        type Binary = fn(&mut Tape, Var, Var) -> Result<Var, AutodiffError>;
        let same: Vec<(&str, Binary)> = vec![
            ("add", |t, a, b| t.add(a, b)),
            ("sub", |t, a, b| t.sub(a, b)),
            ("mul", |t, a, b| t.mul(a, b)),
            ("concat0", |t, a, b| t.concat(&[a, b], 0)),
            ("concat1", |t, a, b| t.concat(&[a, b], 1)),
            ("head_dot", |t, a, b| t.head_dot(a, b, 2)),
        ];
        for (name, f) in same {
            let err = finite_difference_check_many(
                |tape, v| f(tape, v[0], v[1]).and_then(|y| probe(tape, y)),
                &[rand_t(&[3, 4], 2), rand_t(&[3, 4], 3)],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-6, "{}: {}", name, err);
        }
    }

    #[test]
    fn structured_ops_pass_gradient_checks() {
        let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>>)> = vec![
            ("matmul", vec![rand_t(&[3, 4], 4), rand_t(&[4, 2], 5)], Box::new(|t, v| t.matmul(v[0], v[1]))),
            ("add_row", vec![rand_t(&[3, 4], 6), rand_t(&[4], 7)], Box::new(|t, v| t.add_row(v[0], v[1]))),
            ("add_scalar", vec![rand_t(&[3, 4], 8), rand_t(&[1], 9)], Box::new(|t, v| t.add_scalar(v[0], v[1]))),
            (
                "layer_norm",
                vec![rand_t(&[3, 4], 10), rand_t(&[4], 11), rand_t(&[4], 12)],
                Box::new(|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5)),
            ),
            ("gather_rows", vec![rand_t(&[3, 4], 13)], Box::new(|t, v| t.gather_rows(v[0], vec![2, 0, 2, 1].into()))),
            (
                "scatter_add_rows",
                vec![rand_t(&[4, 4], 14)],
                Box::new(|t, v| t.scatter_add_rows(v[0], vec![1, 0, 1, 2].into(), 3)),
            ),
            (
                "segment_softmax",
                vec![rand_t(&[5, 2], 15)],
                Box::new(|t, v| t.segment_softmax(v[0], vec![0, 1, 0, 0, 1].into(), 2)),
            ),
            ("head_matmul", vec![rand_t(&[3, 4], 16), rand_t(&[4, 2], 17)], Box::new(|t, v| t.head_matmul(v[0], v[1], 2))),
            ("head_scale", vec![rand_t(&[3, 4], 18), rand_t(&[3, 2], 19)], Box::new(|t, v| t.head_scale(v[0], v[1], 2))),
            (
                "dropout",
                vec![rand_t(&[3, 4], 20)],
                Box::new(|t, v| t.dropout(v[0], 0.4, true, &mut ChaCha8Rng::seed_from_u64(1))),
            ),
        ];
        for (name, inputs, f) in cases {
            let err = finite_difference_check_many(|tape, v| f(tape, v).and_then(|y| probe(tape, y)), &inputs, 1e-5).unwrap();
            assert!(err < 1e-6, "{}: {}", name, err);
        }
    }

    #[test]
    fn gradient_reversal_flips_sign() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[2], &[1.0, 2.0]));
        let r = tape.grad_reverse(x, 0.5).unwrap();
        assert_eq!(tape.value(r).data(), &[1.0, 2.0]);
        let s = tape.sum(r).unwrap();
        assert_eq!(tape.backward(s).unwrap().get(x).unwrap().data(), &[-0.5, -0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(rand_t(&[6, 5], 21).reshape(vec![6, 5]).unwrap());
        let s = tape.softmax(x, 1).unwrap();
        for r in 0..6 {
            let row = tape.value(s).row(r);
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let seg = tape.segment_softmax(x, vec![0, 0, 1, 2, 2, 2].into(), 3).unwrap();
        for (rows, col) in [(&[0usize, 1][..], 0usize), (&[2], 3), (&[3, 4, 5], 4)] {
            let total: f64 = rows.iter().map(|&r| tape.value(seg).row(r)[col]).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_masks_and_scales() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[1000], 1.0));
        let y = tape.dropout(x, 0.4, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let vals = tape.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.6).abs() < 1e-15));
        let dropped = vals.iter().filter(|&&v| v == 0.0).count();
        assert!((300..500).contains(&dropped));
        let y2 = tape.dropout(x, 0.4, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(y2).data());
        let e = tape.dropout(x, 0.4, false, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(e, x);
    }
}
