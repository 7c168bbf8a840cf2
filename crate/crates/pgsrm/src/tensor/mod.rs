//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The engine is a recorded tape: every operation evaluates eagerly and
//! appends a node to a [`Graph`], so insertion order is already a topological
//! order. [`Graph::backward`] walks the tape once in reverse, accumulating
//! gradients into every reachable node whose `requires_grad` flag is set.
//!
//! A graph lives for a single forward/backward cycle; persistent state
//! (model parameters, optimizer moments) is owned elsewhere and re-entered as
//! leaves each step.

mod kernels;

pub use kernels::{dot, gemm_nn, gemm_nt, gemm_tn, log_sum_exp, softmax_row};

use crate::num::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not describe {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("target index {id} out of vocabulary range {vocab} (position {pos})")]
    TargetOutOfRange { id: usize, vocab: usize, pos: usize },
    #[error("row index {id} out of range for {rows} rows (position {pos})")]
    RowOutOfRange { id: usize, rows: usize, pos: usize },
    #[error("mask selects no elements")]
    DegenerateMask,
    #[error("mask entry at position {pos} is {found}, expected 0 or 1")]
    InvalidMask { pos: usize, found: f64 },
    #[error("backward requires a scalar root, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("invalid permutation {axes:?} for rank {rank}")]
    BadPermutation { axes: Vec<usize>, rank: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense row-major float tensor.
#[derive(Debug, Clone)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

impl<S: Real> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.contains(&0) {
            return Err(TensorError::InvalidShape {
                shape,
                len: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Self {
            shape,
            data: vec![S::ZERO; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: S) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    /// 1-D tensor from a plain vector.
    pub fn from_vec(data: Vec<S>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks the tensor as a differentiation leaf.
    pub fn requiring_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> S {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    fn grad_buf(&mut self) -> &mut Vec<S> {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![S::ZERO; n])
    }
}

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

enum Op<S> {
    Leaf,
    Matmul {
        a: TensorId,
        b: TensorId,
    },
    Bmm {
        a: TensorId,
        b: TensorId,
    },
    TransposeLast2 {
        a: TensorId,
    },
    Permute {
        a: TensorId,
        axes: Vec<usize>,
    },
    Reshape {
        a: TensorId,
    },
    Add {
        a: TensorId,
        b: TensorId,
    },
    Sub {
        a: TensorId,
        b: TensorId,
    },
    Mul {
        a: TensorId,
        b: TensorId,
    },
    AddBias {
        a: TensorId,
        bias: TensorId,
    },
    Scale {
        a: TensorId,
        c: S,
    },
    Gelu {
        a: TensorId,
    },
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        mean: Vec<S>,
        rstd: Vec<S>,
    },
    GatherRows {
        a: TensorId,
        ids: Vec<usize>,
    },
    DropLastTime {
        a: TensorId,
    },
    SoftmaxLast {
        a: TensorId,
    },
    SoftmaxLogProbs {
        logits: TensorId,
        targets: Vec<usize>,
        probs: Vec<S>,
    },
    EntropyRows {
        logits: TensorId,
        probs: Vec<S>,
    },
    MaskedMean {
        v: TensorId,
        mask: TensorId,
        mask_sum: S,
    },
    Mse {
        v: TensorId,
        target: TensorId,
    },
    SumAll {
        a: TensorId,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
}

/// Recorded operation tape. Confined to one thread for its lifetime.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Real> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a tensor as a leaf. Its `requires_grad` flag decides whether
    /// backward populates its gradient.
    pub fn leaf(&mut self, t: Tensor<S>) -> TensorId {
        self.push(t, Op::Leaf)
    }

    /// Inserts a non-differentiable constant leaf.
    pub fn constant(&mut self, mut t: Tensor<S>) -> TensorId {
        t.requires_grad = false;
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, id: TensorId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        self.nodes[id.0].value.grad()
    }

    /// Drops all accumulated gradients, keeping values intact.
    pub fn clear_grads(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> TensorId {
        self.nodes.push(Node { value, op });
        TensorId(self.nodes.len() - 1)
    }

    fn push_result(&mut self, shape: Vec<usize>, data: Vec<S>, rg: bool, op: Op<S>) -> TensorId {
        let t = Tensor {
            shape,
            data,
            requires_grad: rg,
            grad: None,
        };
        self.push(t, op)
    }

    fn rg(&self, id: TensorId) -> bool {
        self.nodes[id.0].value.requires_grad
    }

    // ---- shape helpers -------------------------------------------------

    fn shape_of(&self, id: TensorId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn mismatch(&self, op: &'static str, a: TensorId, b: TensorId) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            lhs: self.shape_of(a).to_vec(),
            rhs: self.shape_of(b).to_vec(),
        }
    }

    // ---- operations ----------------------------------------------------

    /// 2-D matrix product `[m x k] * [k x n] -> [m x n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::ZERO; m * n];
        gemm_nn(
            self.nodes[a.0].value.data(),
            self.nodes[b.0].value.data(),
            &mut out,
            m,
            k,
            n,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push_result(vec![m, n], out, rg, Op::Matmul { a, b }))
    }

    /// Batched matrix product `[N x m x k] * [N x k x n] -> [N x m x n]`.
    pub fn bmm(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape_of(a).to_vec(), self.shape_of(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(self.mismatch("bmm", a, b));
        }
        let (nb, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![S::ZERO; nb * m * n];
        for s in 0..nb {
            gemm_nn(
                &self.nodes[a.0].value.data()[s * m * k..(s + 1) * m * k],
                &self.nodes[b.0].value.data()[s * k * n..(s + 1) * k * n],
                &mut out[s * m * n..(s + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push_result(vec![nb, m, n], out, rg, Op::Bmm { a, b }))
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape_of(a).to_vec();
        if sa.len() < 2 {
            return Err(TensorError::BadRank {
                op: "transpose_last2",
                expected: 2,
                shape: sa,
            });
        }
        let (m, n) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let lead: usize = sa[..sa.len() - 2].iter().product();
        let src = self.nodes[a.0].value.data();
        let mut out = vec![S::ZERO; src.len()];
        transpose_slices(src, &mut out, lead, m, n);
        let mut shape = sa.clone();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        let rg = self.rg(a);
        Ok(self.push_result(shape, out, rg, Op::TransposeLast2 { a }))
    }

    /// Reorders axes; `axes[d]` names the source axis placed at position `d`.
    pub fn permute(&mut self, a: TensorId, axes: &[usize]) -> Result<TensorId> {
        let sa = self.shape_of(a).to_vec();
        if !is_permutation(axes, sa.len()) {
            return Err(TensorError::BadPermutation {
                axes: axes.to_vec(),
                rank: sa.len(),
            });
        }
        let (out, shape) = permute_copy(self.nodes[a.0].value.data(), &sa, axes);
        let rg = self.rg(a);
        Ok(self.push_result(
            shape,
            out,
            rg,
            Op::Permute {
                a,
                axes: axes.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].value.numel() {
            return Err(TensorError::InvalidShape {
                shape,
                len: self.nodes[a.0].value.numel(),
            });
        }
        let data = self.nodes[a.0].value.data().to_vec();
        let rg = self.rg(a);
        Ok(self.push_result(shape, data, rg, Op::Reshape { a }))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip_elementwise("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip_elementwise("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.zip_elementwise("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    fn zip_elementwise(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<TensorId> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(self.mismatch(name, a, b));
        }
        let out: Vec<S> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape_of(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push_result(shape, out, rg, op))
    }

    /// Adds a `[d]` bias to every row of a `[... x d]` tensor.
    pub fn add_bias(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let sa = self.shape_of(a).to_vec();
        let sb = self.shape_of(bias);
        let d = *sa.last().unwrap_or(&0);
        if sb.len() != 1 || sb[0] != d {
            return Err(self.mismatch("add_bias", a, bias));
        }
        let bdata = self.nodes[bias.0].value.data().to_vec();
        let out: Vec<S> = self.nodes[a.0]
            .value
            .data()
            .chunks_exact(d)
            .flat_map(|row| row.iter().zip(&bdata).map(|(&x, &y)| x + y))
            .collect();
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push_result(sa, out, rg, Op::AddBias { a, bias }))
    }

    pub fn scale(&mut self, a: TensorId, c: S) -> Result<TensorId> {
        let out: Vec<S> = self.nodes[a.0].value.data().iter().map(|&x| x * c).collect();
        let shape = self.shape_of(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push_result(shape, out, rg, Op::Scale { a, c }))
    }

    pub fn gelu(&mut self, a: TensorId) -> Result<TensorId> {
        let out: Vec<S> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .map(|&x| gelu_fwd(x))
            .collect();
        let shape = self.shape_of(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push_result(shape, out, rg, Op::Gelu { a }))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: S,
    ) -> Result<TensorId> {
        let sx = self.shape_of(x).to_vec();
        let d = *sx.last().unwrap_or(&0);
        if self.shape_of(gain) != [d] {
            return Err(self.mismatch("layer_norm", x, gain));
        }
        if self.shape_of(bias) != [d] {
            return Err(self.mismatch("layer_norm", x, bias));
        }
        let rows = self.nodes[x.0].value.numel() / d;
        let mut out = vec![S::ZERO; rows * d];
        let mut means = vec![S::ZERO; rows];
        let mut rstds = vec![S::ZERO; rows];
        {
            let xd = self.nodes[x.0].value.data();
            let g = self.nodes[gain.0].value.data();
            let b = self.nodes[bias.0].value.data();
            let inv_d = S::ONE / S::from_usize(d);
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let mut mean = S::ZERO;
                for &v in row {
                    mean += v;
                }
                mean *= inv_d;
                let mut var = S::ZERO;
                for &v in row {
                    let c = v - mean;
                    var += c * c;
                }
                var *= inv_d;
                let rstd = S::ONE / (var + eps).sqrt();
                means[r] = mean;
                rstds[r] = rstd;
                let orow = &mut out[r * d..(r + 1) * d];
                for j in 0..d {
                    orow[j] = (row[j] - mean) * rstd * g[j] + b[j];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push_result(
            sx,
            out,
            rg,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean: means,
                rstd: rstds,
            },
        ))
    }

    /// Gathers rows of a `[R x d]` tensor: output row `i` is `a[ids[i]]`.
    pub fn gather_rows(&mut self, a: TensorId, ids: &[usize]) -> Result<TensorId> {
        let sa = self.shape_of(a).to_vec();
        if sa.len() != 2 {
            return Err(TensorError::BadRank {
                op: "gather_rows",
                expected: 2,
                shape: sa,
            });
        }
        let (rows, d) = (sa[0], sa[1]);
        for (pos, &id) in ids.iter().enumerate() {
            if id >= rows {
                return Err(TensorError::RowOutOfRange { id, rows, pos });
            }
        }
        let src = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            out.extend_from_slice(&src[id * d..(id + 1) * d]);
        }
        let rg = self.rg(a);
        Ok(self.push_result(
            vec![ids.len(), d],
            out,
            rg,
            Op::GatherRows {
                a,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Drops the final time step of a `[B x T x V]` tensor.
    pub fn drop_last_time(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape_of(a).to_vec();
        if sa.len() != 3 || sa[1] < 2 {
            return Err(TensorError::BadRank {
                op: "drop_last_time",
                expected: 3,
                shape: sa,
            });
        }
        let (b, t, v) = (sa[0], sa[1], sa[2]);
        let src = self.nodes[a.0].value.data();
        let mut out = Vec::with_capacity(b * (t - 1) * v);
        for bi in 0..b {
            out.extend_from_slice(&src[bi * t * v..(bi * t + t - 1) * v]);
        }
        let rg = self.rg(a);
        Ok(self.push_result(vec![b, t - 1, v], out, rg, Op::DropLastTime { a }))
    }

    /// Softmax over the last axis.
    pub fn softmax_last(&mut self, a: TensorId) -> Result<TensorId> {
        let sa = self.shape_of(a).to_vec();
        let v = *sa.last().unwrap_or(&0);
        let mut out = self.nodes[a.0].value.data().to_vec();
        for row in out.chunks_exact_mut(v) {
            softmax_row(row);
        }
        let rg = self.rg(a);
        Ok(self.push_result(sa, out, rg, Op::SoftmaxLast { a }))
    }

    /// Log-softmax of `logits[... x V]` gathered at `targets`; output shape is
    /// the logits shape with the vocabulary axis removed.
    pub fn softmax_logprobs(&mut self, logits: TensorId, targets: &[usize]) -> Result<TensorId> {
        let sl = self.shape_of(logits).to_vec();
        let v = *sl.last().unwrap_or(&0);
        let rows = self.nodes[logits.0].value.numel() / v;
        if targets.len() != rows {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_logprobs",
                lhs: sl,
                rhs: vec![targets.len()],
            });
        }
        for (pos, &t) in targets.iter().enumerate() {
            if t >= v {
                return Err(TensorError::TargetOutOfRange {
                    id: t,
                    vocab: v,
                    pos,
                });
            }
        }
        let src = self.nodes[logits.0].value.data();
        let mut out = vec![S::ZERO; rows];
        let mut probs = vec![S::ZERO; rows * v];
        for r in 0..rows {
            let row = &src[r * v..(r + 1) * v];
            let lse = log_sum_exp(row);
            out[r] = row[targets[r]] - lse;
            let prow = &mut probs[r * v..(r + 1) * v];
            for j in 0..v {
                prow[j] = (row[j] - lse).exp();
            }
        }
        let mut shape = sl;
        shape.pop();
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(logits);
        Ok(self.push_result(
            shape,
            out,
            rg,
            Op::SoftmaxLogProbs {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Per-row Shannon entropy of `softmax(logits)` over the last axis.
    pub fn entropy_rows(&mut self, logits: TensorId) -> Result<TensorId> {
        let sl = self.shape_of(logits).to_vec();
        let v = *sl.last().unwrap_or(&0);
        let rows = self.nodes[logits.0].value.numel() / v;
        let src = self.nodes[logits.0].value.data();
        let mut out = vec![S::ZERO; rows];
        let mut probs = vec![S::ZERO; rows * v];
        let floor = S::from_f64(1e-12);
        for r in 0..rows {
            let prow = &mut probs[r * v..(r + 1) * v];
            prow.copy_from_slice(&src[r * v..(r + 1) * v]);
            softmax_row(prow);
            let mut h = S::ZERO;
            for &p in prow.iter() {
                h -= p * p.maximum(floor).ln();
            }
            out[r] = h;
        }
        let mut shape = sl;
        shape.pop();
        if shape.is_empty() {
            shape.push(1);
        }
        let rg = self.rg(logits);
        Ok(self.push_result(shape, out, rg, Op::EntropyRows { logits, probs }))
    }

    /// `sum(values * mask) / sum(mask)` as a scalar, differentiable in
    /// `values`. The mask must contain only zeros and ones and select at
    /// least one element.
    pub fn masked_mean(&mut self, v: TensorId, mask: TensorId) -> Result<TensorId> {
        if self.shape_of(v) != self.shape_of(mask) {
            return Err(self.mismatch("masked_mean", v, mask));
        }
        let md = self.nodes[mask.0].value.data();
        let mut mask_sum = S::ZERO;
        for (pos, &m) in md.iter().enumerate() {
            if m != S::ZERO && m != S::ONE {
                return Err(TensorError::InvalidMask {
                    pos,
                    found: m.to_f64(),
                });
            }
            mask_sum += m;
        }
        if mask_sum == S::ZERO {
            return Err(TensorError::DegenerateMask);
        }
        let vd = self.nodes[v.0].value.data();
        let mut acc = S::ZERO;
        for (&x, &m) in vd.iter().zip(md) {
            acc += x * m;
        }
        let out = acc / mask_sum;
        let rg = self.rg(v);
        Ok(self.push_result(vec![1], vec![out], rg, Op::MaskedMean { v, mask, mask_sum }))
    }

    /// Masked mean of per-position entropies: `entropy(logits, mask)`.
    pub fn entropy(&mut self, logits: TensorId, mask: TensorId) -> Result<TensorId> {
        let rows = self.entropy_rows(logits)?;
        self.masked_mean(rows, mask)
    }

    /// Mean squared error between two equal-length tensors, as a scalar.
    pub fn mse(&mut self, v: TensorId, target: TensorId) -> Result<TensorId> {
        if self.shape_of(v) != self.shape_of(target) {
            return Err(self.mismatch("mse", v, target));
        }
        let vd = self.nodes[v.0].value.data();
        let td = self.nodes[target.0].value.data();
        let n = S::from_usize(vd.len());
        let mut acc = S::ZERO;
        for (&x, &t) in vd.iter().zip(td) {
            let d = x - t;
            acc += d * d;
        }
        let rg = self.rg(v) || self.rg(target);
        Ok(self.push_result(vec![1], vec![acc / n], rg, Op::Mse { v, target }))
    }

    pub fn sum_all(&mut self, a: TensorId) -> Result<TensorId> {
        let mut acc = S::ZERO;
        for &x in self.nodes[a.0].value.data() {
            acc += x;
        }
        let rg = self.rg(a);
        Ok(self.push_result(vec![1], vec![acc], rg, Op::SumAll { a }))
    }

    // ---- backward ------------------------------------------------------

    /// Reverse-mode sweep from a scalar root.
    ///
    /// Each call computes one unit of gradient in a scratch table and adds it
    /// into the stored grads, so repeated calls without
    /// [`Graph::clear_grads`] accumulate.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(TensorError::NonScalarRoot {
                shape: self.shape_of(root).to_vec(),
            });
        }
        let mut scratch: Vec<Option<Vec<S>>> = (0..=root.0).map(|_| None).collect();
        scratch[root.0] = Some(vec![S::ONE]);
        for id in (0..=root.0).rev() {
            let g = match scratch[id].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[id].value.requires_grad {
                continue;
            }
            self.propagate(id, &g, &mut scratch);
            let buf = self.nodes[id].value.grad_buf();
            for (dst, &src) in buf.iter_mut().zip(&g) {
                *dst += src;
            }
        }
        Ok(())
    }

    /// Adds `g` into the scratch gradient of `id` if that node requires grad.
    fn accumulate(&self, scratch: &mut [Option<Vec<S>>], id: TensorId, g: &[S]) {
        if !self.nodes[id.0].value.requires_grad {
            return;
        }
        let numel = self.nodes[id.0].value.numel();
        let buf = scratch[id.0].get_or_insert_with(|| vec![S::ZERO; numel]);
        for (dst, &src) in buf.iter_mut().zip(g) {
            *dst += src;
        }
    }

    fn propagate(&self, id: usize, g: &[S], scratch: &mut [Option<Vec<S>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let sa = self.shape_of(a);
                let (m, k, n) = (sa[0], sa[1], self.shape_of(b)[1]);
                if self.rg(a) {
                    let mut ga = vec![S::ZERO; m * k];
                    gemm_nt(g, self.nodes[b.0].value.data(), &mut ga, m, n, k);
                    self.accumulate(scratch, a, &ga);
                }
                if self.rg(b) {
                    let mut gb = vec![S::ZERO; k * n];
                    gemm_tn(self.nodes[a.0].value.data(), g, &mut gb, m, k, n);
                    self.accumulate(scratch, b, &gb);
                }
            }
            Op::Bmm { a, b } => {
                let (a, b) = (*a, *b);
                let sa = self.shape_of(a);
                let (nb, m, k, n) = (sa[0], sa[1], sa[2], self.shape_of(b)[2]);
                if self.rg(a) {
                    let mut ga = vec![S::ZERO; nb * m * k];
                    for s in 0..nb {
                        gemm_nt(
                            &g[s * m * n..(s + 1) * m * n],
                            &self.nodes[b.0].value.data()[s * k * n..(s + 1) * k * n],
                            &mut ga[s * m * k..(s + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    self.accumulate(scratch, a, &ga);
                }
                if self.rg(b) {
                    let mut gb = vec![S::ZERO; nb * k * n];
                    for s in 0..nb {
                        gemm_tn(
                            &self.nodes[a.0].value.data()[s * m * k..(s + 1) * m * k],
                            &g[s * m * n..(s + 1) * m * n],
                            &mut gb[s * k * n..(s + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    self.accumulate(scratch, b, &gb);
                }
            }
            Op::TransposeLast2 { a } => {
                let a = *a;
                let so = self.shape_of(TensorId(id));
                let (m, n) = (so[so.len() - 2], so[so.len() - 1]);
                let lead: usize = so[..so.len() - 2].iter().product();
                let mut ga = vec![S::ZERO; g.len()];
                transpose_slices(g, &mut ga, lead, m, n);
                self.accumulate(scratch, a, &ga);
            }
            Op::Permute { a, axes } => {
                let so = self.shape_of(TensorId(id));
                let inv = invert_permutation(axes);
                let (ga, _) = permute_copy(g, so, &inv);
                self.accumulate(scratch, *a, &ga);
            }
            Op::Reshape { a } => {
                self.accumulate(scratch, *a, g);
            }
            Op::Add { a, b } => {
                self.accumulate(scratch, *a, g);
                self.accumulate(scratch, *b, g);
            }
            Op::Sub { a, b } => {
                self.accumulate(scratch, *a, g);
                if self.rg(*b) {
                    let neg: Vec<S> = g.iter().map(|&x| -x).collect();
                    self.accumulate(scratch, *b, &neg);
                }
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                if self.rg(a) {
                    let ga: Vec<S> = g
                        .iter()
                        .zip(self.nodes[b.0].value.data())
                        .map(|(&gv, &bv)| gv * bv)
                        .collect();
                    self.accumulate(scratch, a, &ga);
                }
                if self.rg(b) {
                    let gb: Vec<S> = g
                        .iter()
                        .zip(self.nodes[a.0].value.data())
                        .map(|(&gv, &av)| gv * av)
                        .collect();
                    self.accumulate(scratch, b, &gb);
                }
            }
            Op::AddBias { a, bias } => {
                let (a, bias) = (*a, *bias);
                let d = self.shape_of(bias)[0];
                self.accumulate(scratch, a, g);
                if self.rg(bias) {
                    let mut gb = vec![S::ZERO; d];
                    for row in g.chunks_exact(d) {
                        for (dst, &src) in gb.iter_mut().zip(row) {
                            *dst += src;
                        }
                    }
                    self.accumulate(scratch, bias, &gb);
                }
            }
            Op::Scale { a, c } => {
                let c = *c;
                let ga: Vec<S> = g.iter().map(|&x| x * c).collect();
                self.accumulate(scratch, *a, &ga);
            }
            Op::Gelu { a } => {
                let a = *a;
                let ga: Vec<S> = g
                    .iter()
                    .zip(self.nodes[a.0].value.data())
                    .map(|(&gv, &x)| gv * gelu_bwd(x))
                    .collect();
                self.accumulate(scratch, a, &ga);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let d = self.shape_of(gain)[0];
                let rows = g.len() / d;
                let xd = self.nodes[x.0].value.data();
                let gd = self.nodes[gain.0].value.data();
                let inv_d = S::ONE / S::from_usize(d);

                if self.rg(gain) {
                    let mut gg = vec![S::ZERO; d];
                    for r in 0..rows {
                        for j in 0..d {
                            let xhat = (xd[r * d + j] - mean[r]) * rstd[r];
                            gg[j] += g[r * d + j] * xhat;
                        }
                    }
                    self.accumulate(scratch, gain, &gg);
                }
                if self.rg(bias) {
                    let mut gb = vec![S::ZERO; d];
                    for row in g.chunks_exact(d) {
                        for (dst, &src) in gb.iter_mut().zip(row) {
                            *dst += src;
                        }
                    }
                    self.accumulate(scratch, bias, &gb);
                }
                if self.rg(x) {
                    let mut gx = vec![S::ZERO; rows * d];
                    for r in 0..rows {
                        let mut sum_gy = S::ZERO;
                        let mut sum_gy_xhat = S::ZERO;
                        for j in 0..d {
                            let gy = g[r * d + j] * gd[j];
                            let xhat = (xd[r * d + j] - mean[r]) * rstd[r];
                            sum_gy += gy;
                            sum_gy_xhat += gy * xhat;
                        }
                        let m1 = sum_gy * inv_d;
                        let m2 = sum_gy_xhat * inv_d;
                        for j in 0..d {
                            let gy = g[r * d + j] * gd[j];
                            let xhat = (xd[r * d + j] - mean[r]) * rstd[r];
                            gx[r * d + j] = rstd[r] * (gy - m1 - xhat * m2);
                        }
                    }
                    self.accumulate(scratch, x, &gx);
                }
            }
            Op::GatherRows { a, ids } => {
                let a = *a;
                if self.rg(a) {
                    let d = self.shape_of(a)[1];
                    let mut ga = vec![S::ZERO; self.nodes[a.0].value.numel()];
                    for (i, &id_row) in ids.iter().enumerate() {
                        let dst = &mut ga[id_row * d..(id_row + 1) * d];
                        let src = &g[i * d..(i + 1) * d];
                        for (o, &s) in dst.iter_mut().zip(src) {
                            *o += s;
                        }
                    }
                    self.accumulate(scratch, a, &ga);
                }
            }
            Op::DropLastTime { a } => {
                let a = *a;
                let sa = self.shape_of(a);
                let (b, t, v) = (sa[0], sa[1], sa[2]);
                let mut ga = vec![S::ZERO; b * t * v];
                for bi in 0..b {
                    ga[bi * t * v..(bi * t + t - 1) * v]
                        .copy_from_slice(&g[bi * (t - 1) * v..(bi + 1) * (t - 1) * v]);
                }
                self.accumulate(scratch, a, &ga);
            }
            Op::SoftmaxLast { a } => {
                let a = *a;
                let so = self.shape_of(TensorId(id));
                let v = *so.last().unwrap();
                let probs = self.nodes[id].value.data();
                let mut ga = vec![S::ZERO; g.len()];
                for r in 0..g.len() / v {
                    let prow = &probs[r * v..(r + 1) * v];
                    let grow = &g[r * v..(r + 1) * v];
                    let mut inner = S::ZERO;
                    for j in 0..v {
                        inner += grow[j] * prow[j];
                    }
                    let orow = &mut ga[r * v..(r + 1) * v];
                    for j in 0..v {
                        orow[j] = prow[j] * (grow[j] - inner);
                    }
                }
                self.accumulate(scratch, a, &ga);
            }
            Op::SoftmaxLogProbs {
                logits,
                targets,
                probs,
            } => {
                let lid = *logits;
                if self.rg(lid) {
                    let v = *self.shape_of(lid).last().unwrap();
                    let mut gl = vec![S::ZERO; probs.len()];
                    for (r, &gr) in g.iter().enumerate() {
                        let prow = &probs[r * v..(r + 1) * v];
                        let orow = &mut gl[r * v..(r + 1) * v];
                        for j in 0..v {
                            orow[j] = -gr * prow[j];
                        }
                        orow[targets[r]] += gr;
                    }
                    self.accumulate(scratch, lid, &gl);
                }
            }
            Op::EntropyRows { logits, probs } => {
                let lid = *logits;
                if self.rg(lid) {
                    let v = *self.shape_of(lid).last().unwrap();
                    let h = self.nodes[id].value.data();
                    let floor = S::from_f64(1e-12);
                    let mut gl = vec![S::ZERO; probs.len()];
                    for (r, &gr) in g.iter().enumerate() {
                        let prow = &probs[r * v..(r + 1) * v];
                        let orow = &mut gl[r * v..(r + 1) * v];
                        for j in 0..v {
                            let lp = prow[j].maximum(floor).ln();
                            orow[j] = -gr * prow[j] * (lp + h[r]);
                        }
                    }
                    self.accumulate(scratch, lid, &gl);
                }
            }
            Op::MaskedMean { v, mask, mask_sum } => {
                let (v, mask, mask_sum) = (*v, *mask, *mask_sum);
                if self.rg(v) {
                    let gr = g[0] / mask_sum;
                    let gv: Vec<S> = self.nodes[mask.0]
                        .value
                        .data()
                        .iter()
                        .map(|&m| m * gr)
                        .collect();
                    self.accumulate(scratch, v, &gv);
                }
            }
            Op::Mse { v, target } => {
                let (v, target) = (*v, *target);
                let n = self.nodes[v.0].value.numel();
                let c = g[0] * S::from_f64(2.0) / S::from_usize(n);
                if self.rg(v) {
                    let gv: Vec<S> = self.nodes[v.0]
                        .value
                        .data()
                        .iter()
                        .zip(self.nodes[target.0].value.data())
                        .map(|(&x, &t)| c * (x - t))
                        .collect();
                    self.accumulate(scratch, v, &gv);
                }
                if self.rg(target) {
                    let gt: Vec<S> = self.nodes[v.0]
                        .value
                        .data()
                        .iter()
                        .zip(self.nodes[target.0].value.data())
                        .map(|(&x, &t)| -c * (x - t))
                        .collect();
                    self.accumulate(scratch, target, &gt);
                }
            }
            Op::SumAll { a } => {
                let ga = vec![g[0]; self.nodes[a.0].value.numel()];
                self.accumulate(scratch, *a, &ga);
            }
        }
    }
}

fn gelu_fwd<S: Real>(x: S) -> S {
    let c = S::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let k = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let inner = c * (x + k * x * x * x);
    half * x * (S::ONE + inner.tanh())
}

fn gelu_bwd<S: Real>(x: S) -> S {
    let c = S::from_f64(0.797_884_560_802_865_4);
    let k = S::from_f64(0.044715);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let sech2 = S::ONE - t * t;
    half * (S::ONE + t) + half * x * sech2 * c * (S::ONE + three * k * x * x)
}

fn transpose_slices<S: Real>(src: &[S], dst: &mut [S], lead: usize, m: usize, n: usize) {
    for s in 0..lead {
        let base = s * m * n;
        for i in 0..m {
            for j in 0..n {
                dst[base + j * m + i] = src[base + i * n + j];
            }
        }
    }
}

fn is_permutation(axes: &[usize], rank: usize) -> bool {
    if axes.len() != rank {
        return false;
    }
    let mut seen = vec![false; rank];
    for &a in axes {
        if a >= rank || seen[a] {
            return false;
        }
        seen[a] = true;
    }
    true
}

fn invert_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Copies `data` with axes reordered so that output axis `d` is input axis
/// `axes[d]`. Returns the copied buffer and the output shape.
fn permute_copy<S: Real>(data: &[S], shape: &[usize], axes: &[usize]) -> (Vec<S>, Vec<usize>) {
    let rank = shape.len();
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let mut in_strides = vec![1usize; rank];
    for d in (0..rank.saturating_sub(1)).rev() {
        in_strides[d] = in_strides[d + 1] * shape[d + 1];
    }
    let out_in_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = vec![data[0]; data.len()];
    let numel = data.len();
    let mut coords = vec![0usize; rank];
    let mut src_idx = 0usize;
    for item in out.iter_mut().take(numel) {
        *item = data[src_idx];
        // Odometer increment over output coordinates.
        for d in (0..rank).rev() {
            coords[d] += 1;
            src_idx += out_in_strides[d];
            if coords[d] < out_shape[d] {
                break;
            }
            src_idx -= out_in_strides[d] * out_shape[d];
            coords[d] = 0;
        }
    }
    (out, out_shape)
}
