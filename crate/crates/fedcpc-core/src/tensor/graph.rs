//! Append-only operation tape with reverse-mode differentiation.

use super::kernels::{
    col2im_1d, col2im_2d, conv1d_output_len, im2col_1d, im2col_2d, matmul_acc, matmul_nt_acc,
    matmul_tn_acc, maxpool2d,
};
use super::{Scalar, Tensor};
use crate::error::{CoreError, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

impl NodeId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Recorded operation; inputs always precede the node on the tape.
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `mul * input + add`, elementwise with constant coefficients.
    Affine { input: NodeId, mul: f64, add: f64 },
    /// `[r, c] + [c]`, bias added to every row.
    AddRowBroadcast { input: NodeId, bias: NodeId },
    MatMul { lhs: NodeId, rhs: NodeId },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Conv1d { input: NodeId, weight: NodeId, bias: NodeId, stride: usize, padding: usize },
    Conv2d { input: NodeId, weight: NodeId, bias: NodeId, stride: usize, padding: usize },
    MaxPool2d { input: NodeId, argmax: Vec<u32> },
    /// Rectangular block of a rank-2 tensor.
    SliceRect { input: NodeId, row0: usize, rows: usize, col0: usize, cols: usize },
    /// Concatenate rank-2 tensors with equal column counts along rows.
    StackRows { parts: Vec<NodeId> },
    Transpose(NodeId),
    Reshape(NodeId),
    /// `[c, t, w]` -> `[t, c * w]`: time steps become rows.
    TimeMajor(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    LogSoftmaxRows(NodeId),
    /// Mean of `-logp[r, target_r]` over rows.
    NllLossMean { logp: NodeId, targets: Vec<u32> },
    /// Bilinear candidate scoring: `scores[r, j] = (context · head)[r] · latents[cand[r, j]]`.
    CandidateScores { context: NodeId, head: NodeId, latents: NodeId, cand: Vec<u32>, n_cand: usize },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op,
}

/// Computation tape. Nodes are appended in topological order; `backward`
/// visits each node exactly once in reverse.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.idx()].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id.idx()].grad.as_ref()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.idx()].requires_grad
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        id
    }

    fn any_requires(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&id| self.nodes[id.idx()].requires_grad)
    }

    fn check_same_shape(&self, a: NodeId, b: NodeId, op: &str) -> Result<()> {
        let sa = self.value(a).shape();
        let sb = self.value(b).shape();
        if sa != sb {
            return Err(CoreError::InvalidShape(format!(
                "{op}: shapes {sa:?} and {sb:?} differ"
            )));
        }
        Ok(())
    }

    fn check_rank2(&self, a: NodeId, op: &str) -> Result<(usize, usize)> {
        let s = self.value(a).shape();
        if s.len() != 2 {
            return Err(CoreError::InvalidShape(format!(
                "{op}: expected rank-2 tensor, got shape {s:?}"
            )));
        }
        Ok((s[0], s[1]))
    }

    // ---- elementwise -----------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(t, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape(a, b, "sub")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x - y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(t, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(t, rg, Op::Mul(a, b)))
    }

    /// `mul * a + add` elementwise.
    pub fn affine(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let (m, c) = (T::from_f64(mul), T::from_f64(add));
        let t = self.value(a).map(|v| m * v + c);
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::Affine { input: a, mul, add })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(|v| v.maxv(T::ZERO));
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(|v| T::ONE / (T::ONE + (-v).exp()));
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(Scalar::tanh);
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(Scalar::exp);
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).map(Scalar::ln);
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::Ln(a))
    }

    // ---- linear algebra --------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.check_rank2(a, "matmul")?;
        let (kb, n) = self.check_rank2(b, "matmul")?;
        if ka != kb {
            return Err(CoreError::InvalidShape(format!(
                "matmul: inner dims differ ({m}x{ka} vs {kb}x{n})"
            )));
        }
        let mut out = vec![T::ZERO; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), m, ka, n, &mut out);
        let t = Tensor::new(vec![m, n], out)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(t, rg, Op::MatMul { lhs: a, rhs: b }))
    }

    /// Add `bias` (length `c`) to every row of `[r, c]`.
    pub fn add_row_broadcast(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.check_rank2(a, "add_row_broadcast")?;
        let bshape = self.value(bias).shape();
        if bshape != [c] {
            return Err(CoreError::InvalidShape(format!(
                "add_row_broadcast: bias {bshape:?} does not match {c} columns"
            )));
        }
        let bias_data = self.value(bias).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for row in data.chunks_mut(c) {
            for (v, &b) in row.iter_mut().zip(&bias_data) {
                *v += b;
            }
        }
        let t = Tensor::new(vec![r, c], data)?;
        let rg = self.any_requires(&[a, bias]);
        Ok(self.push(t, rg, Op::AddRowBroadcast { input: a, bias }))
    }

    /// `x[r, in] * w[in, out] + b[out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.matmul(x, w)?;
        self.add_row_broadcast(y, b)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.check_rank2(a, "transpose")?;
        let src = self.value(a).data();
        let mut data = vec![T::ZERO; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], data)?;
        let rg = self.nodes[a.idx()].requires_grad;
        Ok(self.push(t, rg, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let t = self.value(a).reshaped(shape)?;
        let rg = self.nodes[a.idx()].requires_grad;
        Ok(self.push(t, rg, Op::Reshape(a)))
    }

    /// Block `[row0 .. row0+rows, col0 .. col0+cols]` of a rank-2 tensor.
    pub fn slice_rect(
        &mut self,
        a: NodeId,
        row0: usize,
        rows: usize,
        col0: usize,
        cols: usize,
    ) -> Result<NodeId> {
        let (r, c) = self.check_rank2(a, "slice_rect")?;
        if rows == 0 || cols == 0 || row0 + rows > r || col0 + cols > c {
            return Err(CoreError::InvalidShape(format!(
                "slice_rect: block {row0}+{rows} x {col0}+{cols} outside {r}x{c}"
            )));
        }
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(rows * cols);
        for i in row0..row0 + rows {
            data.extend_from_slice(&src[i * c + col0..i * c + col0 + cols]);
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        let rg = self.nodes[a.idx()].requires_grad;
        Ok(self.push(t, rg, Op::SliceRect { input: a, row0, rows, col0, cols }))
    }

    /// Row `i` of a rank-2 tensor as `[1, c]`.
    pub fn select_row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let (_, c) = self.check_rank2(a, "select_row")?;
        self.slice_rect(a, i, 1, 0, c)
    }

    /// Concatenate rank-2 tensors with equal column counts along rows.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(CoreError::InvalidShape("stack_rows: no parts".into()));
        }
        let (_, c0) = self.check_rank2(parts[0], "stack_rows")?;
        let mut total_rows = 0;
        for &p in parts {
            let (r, c) = self.check_rank2(p, "stack_rows")?;
            if c != c0 {
                return Err(CoreError::InvalidShape(format!(
                    "stack_rows: column counts differ ({c0} vs {c})"
                )));
            }
            total_rows += r;
        }
        let mut data = Vec::with_capacity(total_rows * c0);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let t = Tensor::new(vec![total_rows, c0], data)?;
        let rg = self.any_requires(parts);
        Ok(self.push(t, rg, Op::StackRows { parts: parts.to_vec() }))
    }

    /// `[c, t, w]` -> `[t, c * w]`: one row per time step.
    pub fn time_major_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.value(a).shape();
        if s.len() != 3 {
            return Err(CoreError::InvalidShape(format!(
                "time_major_rows: expected rank-3, got {s:?}"
            )));
        }
        let (c, t, w) = (s[0], s[1], s[2]);
        let src = self.value(a).data();
        let mut data = vec![T::ZERO; c * t * w];
        for ci in 0..c {
            for ti in 0..t {
                for wi in 0..w {
                    data[ti * (c * w) + ci * w + wi] = src[(ci * t + ti) * w + wi];
                }
            }
        }
        let out = Tensor::new(vec![t, c * w], data)?;
        let rg = self.nodes[a.idx()].requires_grad;
        Ok(self.push(out, rg, Op::TimeMajor(a)))
    }

    // ---- convolutions and pooling -----------------------------------------

    /// 1-d convolution: input `[c_in, l]`, weight `[c_out, c_in, k]`, bias
    /// `[c_out]`, zero padding on both ends.
    pub fn conv1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let ishape = self.value(input).shape().to_vec();
        let wshape = self.value(weight).shape().to_vec();
        if ishape.len() != 2 || wshape.len() != 3 {
            return Err(CoreError::InvalidShape(format!(
                "conv1d: input {ishape:?} must be [c_in, l], weight {wshape:?} must be [c_out, c_in, k]"
            )));
        }
        let (c_in, l) = (ishape[0], ishape[1]);
        let (c_out, w_cin, k) = (wshape[0], wshape[1], wshape[2]);
        if w_cin != c_in {
            return Err(CoreError::InvalidShape(format!(
                "conv1d: weight expects {w_cin} input channels, input has {c_in}"
            )));
        }
        if self.value(bias).shape() != [c_out] {
            return Err(CoreError::InvalidShape(format!(
                "conv1d: bias {:?} does not match {c_out} output channels",
                self.value(bias).shape()
            )));
        }
        if stride == 0 {
            return Err(CoreError::InvalidShape("conv1d: stride must be >= 1".into()));
        }
        if l + 2 * padding < k {
            return Err(CoreError::InvalidShape(format!(
                "conv1d: padded length {} shorter than kernel {k}",
                l + 2 * padding
            )));
        }
        let l_out = conv1d_output_len(l, k, stride, padding);
        let cols = im2col_1d(self.value(input).data(), c_in, l, k, stride, padding);
        let mut out = vec![T::ZERO; c_out * l_out];
        matmul_acc(self.value(weight).data(), &cols, c_out, c_in * k, l_out, &mut out);
        let bias_data = self.value(bias).data().to_vec();
        for (c, row) in out.chunks_mut(l_out).enumerate() {
            let b = bias_data[c];
            for v in row.iter_mut() {
                *v += b;
            }
        }
        let t = Tensor::new(vec![c_out, l_out], out)?;
        let rg = self.any_requires(&[input, weight, bias]);
        Ok(self.push(t, rg, Op::Conv1d { input, weight, bias, stride, padding }))
    }

    /// 2-d convolution: input `[c_in, h, w]`, weight `[c_out, c_in, kh, kw]`.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let ishape = self.value(input).shape().to_vec();
        let wshape = self.value(weight).shape().to_vec();
        if ishape.len() != 3 || wshape.len() != 4 {
            return Err(CoreError::InvalidShape(format!(
                "conv2d: input {ishape:?} must be [c_in, h, w], weight {wshape:?} must be [c_out, c_in, kh, kw]"
            )));
        }
        let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
        let (c_out, w_cin, kh, kw) = (wshape[0], wshape[1], wshape[2], wshape[3]);
        if w_cin != c_in {
            return Err(CoreError::InvalidShape(format!(
                "conv2d: weight expects {w_cin} input channels, input has {c_in}"
            )));
        }
        if self.value(bias).shape() != [c_out] {
            return Err(CoreError::InvalidShape(format!(
                "conv2d: bias {:?} does not match {c_out} output channels",
                self.value(bias).shape()
            )));
        }
        if stride == 0 {
            return Err(CoreError::InvalidShape("conv2d: stride must be >= 1".into()));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(CoreError::InvalidShape(
                "conv2d: kernel larger than padded input".into(),
            ));
        }
        let h_out = conv1d_output_len(h, kh, stride, padding);
        let w_out = conv1d_output_len(w, kw, stride, padding);
        let cols = im2col_2d(self.value(input).data(), c_in, h, w, kh, kw, stride, padding);
        let mut out = vec![T::ZERO; c_out * h_out * w_out];
        matmul_acc(
            self.value(weight).data(),
            &cols,
            c_out,
            c_in * kh * kw,
            h_out * w_out,
            &mut out,
        );
        let bias_data = self.value(bias).data().to_vec();
        for (c, plane) in out.chunks_mut(h_out * w_out).enumerate() {
            let b = bias_data[c];
            for v in plane.iter_mut() {
                *v += b;
            }
        }
        let t = Tensor::new(vec![c_out, h_out, w_out], out)?;
        let rg = self.any_requires(&[input, weight, bias]);
        Ok(self.push(t, rg, Op::Conv2d { input, weight, bias, stride, padding }))
    }

    /// 2x2 max-pool with per-axis clamping on `[c, h, w]`; records argmax
    /// positions for the backward pass.
    pub fn maxpool2d(&mut self, input: NodeId, window: usize) -> Result<NodeId> {
        let s = self.value(input).shape();
        if s.len() != 3 {
            return Err(CoreError::InvalidShape(format!(
                "maxpool2d: expected rank-3 input, got {s:?}"
            )));
        }
        if window == 0 {
            return Err(CoreError::InvalidShape("maxpool2d: window must be >= 1".into()));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (out, argmax, h_out, w_out) = maxpool2d(self.value(input).data(), c, h, w, window);
        let t = Tensor::new(vec![c, h_out, w_out], out)?;
        let rg = self.nodes[input.idx()].requires_grad;
        Ok(self.push(t, rg, Op::MaxPool2d { input, argmax }))
    }

    // ---- reductions and losses --------------------------------------------

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let t = Tensor::scalar(self.value(a).sum());
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).numel();
        let t = Tensor::scalar(self.value(a).sum() * T::from_f64(1.0 / n as f64));
        let rg = self.nodes[a.idx()].requires_grad;
        self.push(t, rg, Op::MeanAll(a))
    }

    /// Row-wise log-softmax of a rank-2 tensor (max-shifted for stability).
    pub fn log_softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (r, c) = self.check_rank2(a, "log_softmax_rows")?;
        let src = self.value(a).data();
        let mut data = vec![T::ZERO; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mut m = row[0];
            for &v in row {
                m = m.maxv(v);
            }
            let mut sum = T::ZERO;
            for &v in row {
                sum += (v - m).exp();
            }
            let lse = m + sum.ln();
            for (j, &v) in row.iter().enumerate() {
                data[i * c + j] = v - lse;
            }
        }
        let t = Tensor::new(vec![r, c], data)?;
        let rg = self.nodes[a.idx()].requires_grad;
        Ok(self.push(t, rg, Op::LogSoftmaxRows(a)))
    }

    /// Mean negative log-likelihood: `-mean_r logp[r, target_r]`.
    pub fn nll_loss_mean(&mut self, logp: NodeId, targets: &[usize]) -> Result<NodeId> {
        let (r, c) = self.check_rank2(logp, "nll_loss_mean")?;
        if targets.len() != r {
            return Err(CoreError::InvalidShape(format!(
                "nll_loss_mean: {} targets for {r} rows",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(CoreError::Contract(format!(
                "nll_loss_mean: target {bad} out of range for {c} classes"
            )));
        }
        let src = self.value(logp).data();
        let mut acc = T::ZERO;
        for (i, &t) in targets.iter().enumerate() {
            acc += src[i * c + t];
        }
        let loss = -acc * T::from_f64(1.0 / r as f64);
        let t = Tensor::scalar(loss);
        let rg = self.nodes[logp.idx()].requires_grad;
        Ok(self.push(
            t,
            rg,
            Op::NllLossMean { logp, targets: targets.iter().map(|&t| t as u32).collect() },
        ))
    }

    /// Bilinear candidate scores for contrastive prediction:
    /// `scores[r, j] = (context[r] · head) · latents[cand[r*n_cand + j]]`.
    /// `context` is `[r, d_ctx]`, `head` is `[d_ctx, d_lat]`, `latents` is
    /// `[t, d_lat]`, and `cand` holds `r * n_cand` row indices into `latents`.
    pub fn candidate_scores(
        &mut self,
        context: NodeId,
        head: NodeId,
        latents: NodeId,
        cand: &[u32],
        n_cand: usize,
    ) -> Result<NodeId> {
        let (r, d_ctx) = self.check_rank2(context, "candidate_scores")?;
        let (h_in, d_lat) = self.check_rank2(head, "candidate_scores")?;
        let (t_lat, l_cols) = self.check_rank2(latents, "candidate_scores")?;
        if h_in != d_ctx || l_cols != d_lat {
            return Err(CoreError::InvalidShape(format!(
                "candidate_scores: context [.., {d_ctx}], head [{h_in}, {d_lat}], latents [.., {l_cols}] disagree"
            )));
        }
        if n_cand == 0 || cand.len() != r * n_cand {
            return Err(CoreError::InvalidShape(format!(
                "candidate_scores: expected {r}x{n_cand} candidate indices, got {}",
                cand.len()
            )));
        }
        if let Some(&bad) = cand.iter().find(|&&i| i as usize >= t_lat) {
            return Err(CoreError::Contract(format!(
                "candidate_scores: candidate row {bad} out of range for {t_lat} latents"
            )));
        }
        let mut proj = vec![T::ZERO; r * d_lat];
        matmul_acc(self.value(context).data(), self.value(head).data(), r, d_ctx, d_lat, &mut proj);
        let lat = self.value(latents).data();
        let mut scores = vec![T::ZERO; r * n_cand];
        for i in 0..r {
            let p_row = &proj[i * d_lat..(i + 1) * d_lat];
            for j in 0..n_cand {
                let z_row_idx = cand[i * n_cand + j] as usize;
                let z_row = &lat[z_row_idx * d_lat..(z_row_idx + 1) * d_lat];
                let mut acc = T::ZERO;
                for (&p, &z) in p_row.iter().zip(z_row) {
                    acc += p * z;
                }
                scores[i * n_cand + j] = acc;
            }
        }
        let t = Tensor::new(vec![r, n_cand], scores)?;
        let rg = self.any_requires(&[context, head, latents]);
        Ok(self.push(
            t,
            rg,
            Op::CandidateScores { context, head, latents, cand: cand.to_vec(), n_cand },
        ))
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse pass from a scalar loss. Gradients accumulate into the nodes'
    /// persistent buffers; calling backward again without `zero_grads` adds
    /// another full contribution.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(CoreError::Contract(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut pass: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.idx()].requires_grad {
            pass[loss.idx()] = Some(Tensor::scalar(T::ONE));
        }

        for i in (0..=loss.idx()).rev() {
            if pass[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = pass[i].take().expect("checked above");
            self.apply_backward(i, &g, &mut pass)?;
            pass[i] = Some(g);
        }

        for (i, slot) in pass.into_iter().enumerate() {
            if let Some(g) = slot {
                match &mut self.nodes[i].grad {
                    Some(acc) => acc.add_scaled(&g, T::ONE)?,
                    none => *none = Some(g),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.idx()].requires_grad
    }

    fn acc_into(pass: &mut [Option<Tensor<T>>], id: NodeId, grad: Tensor<T>) -> Result<()> {
        match &mut pass[id.idx()] {
            Some(acc) => acc.add_scaled(&grad, T::ONE),
            none => {
                *none = Some(grad);
                Ok(())
            }
        }
    }

    #[allow(clippy::too_many_lines)]
    fn apply_backward(
        &self,
        node_idx: usize,
        g: &Tensor<T>,
        pass: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let op = &self.nodes[node_idx].op;
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(*a) {
                    Self::acc_into(pass, *a, g.clone())?;
                }
                if self.wants(*b) {
                    Self::acc_into(pass, *b, g.clone())?;
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    Self::acc_into(pass, *a, g.clone())?;
                }
                if self.wants(*b) {
                    Self::acc_into(pass, *b, g.map(|v| -v))?;
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(self.value(*b).data()) {
                        *x *= y;
                    }
                    Self::acc_into(pass, *a, d)?;
                }
                if self.wants(*b) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *x *= y;
                    }
                    Self::acc_into(pass, *b, d)?;
                }
            }
            Op::Affine { input, mul, .. } => {
                if self.wants(*input) {
                    let m = T::from_f64(*mul);
                    Self::acc_into(pass, *input, g.map(|v| v * m))?;
                }
            }
            Op::AddRowBroadcast { input, bias } => {
                if self.wants(*input) {
                    Self::acc_into(pass, *input, g.clone())?;
                }
                if self.wants(*bias) {
                    let c = self.value(*bias).numel();
                    let mut d = vec![T::ZERO; c];
                    for row in g.data().chunks(c) {
                        for (acc, &v) in d.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    Self::acc_into(pass, *bias, Tensor::new(vec![c], d)?)?;
                }
            }
            Op::MatMul { lhs, rhs } => {
                let (m, k) = {
                    let s = self.value(*lhs).shape();
                    (s[0], s[1])
                };
                let n = self.value(*rhs).shape()[1];
                if self.wants(*lhs) {
                    // dA = dY * B^T
                    let mut d = vec![T::ZERO; m * k];
                    matmul_nt_acc(g.data(), self.value(*rhs).data(), m, n, k, &mut d);
                    Self::acc_into(pass, *lhs, Tensor::new(vec![m, k], d)?)?;
                }
                if self.wants(*rhs) {
                    // dB = A^T * dY
                    let mut d = vec![T::ZERO; k * n];
                    matmul_tn_acc(self.value(*lhs).data(), g.data(), k, m, n, &mut d);
                    Self::acc_into(pass, *rhs, Tensor::new(vec![k, n], d)?)?;
                }
            }
            Op::Relu(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &v) in d.data_mut().iter_mut().zip(self.value(*a).data()) {
                        if v <= T::ZERO {
                            *x = T::ZERO;
                        }
                    }
                    Self::acc_into(pass, *a, d)?;
                }
            }
            Op::Sigmoid(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(self.nodes[node_idx].value.data()) {
                        *x *= y * (T::ONE - y);
                    }
                    Self::acc_into(pass, *a, d)?;
                }
            }
            Op::Tanh(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(self.nodes[node_idx].value.data()) {
                        *x *= T::ONE - y * y;
                    }
                    Self::acc_into(pass, *a, d)?;
                }
            }
            Op::Exp(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &y) in d.data_mut().iter_mut().zip(self.nodes[node_idx].value.data()) {
                        *x *= y;
                    }
                    Self::acc_into(pass, *a, d)?;
                }
            }
            Op::Ln(a) => {
                if self.wants(*a) {
                    let mut d = g.clone();
                    for (x, &v) in d.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *x = *x / v;
                    }
                    Self::acc_into(pass, *a, d)?;
                }
            }
            Op::Conv1d { input, weight, bias, stride, padding } => {
                let ishape = self.value(*input).shape();
                let wshape = self.value(*weight).shape();
                let (c_in, l) = (ishape[0], ishape[1]);
                let (c_out, k) = (wshape[0], wshape[2]);
                let l_out = conv1d_output_len(l, k, *stride, *padding);
                if self.wants(*bias) {
                    let mut d = vec![T::ZERO; c_out];
                    for (c, row) in g.data().chunks(l_out).enumerate() {
                        for &v in row {
                            d[c] += v;
                        }
                    }
                    Self::acc_into(pass, *bias, Tensor::new(vec![c_out], d)?)?;
                }
                let needs_w = self.wants(*weight);
                let needs_x = self.wants(*input);
                if needs_w || needs_x {
                    let cols =
                        im2col_1d(self.value(*input).data(), c_in, l, k, *stride, *padding);
                    if needs_w {
                        let mut dw = vec![T::ZERO; c_out * c_in * k];
                        matmul_nt_acc(g.data(), &cols, c_out, l_out, c_in * k, &mut dw);
                        Self::acc_into(pass, *weight, Tensor::new(vec![c_out, c_in, k], dw)?)?;
                    }
                    if needs_x {
                        let mut d_cols = vec![T::ZERO; c_in * k * l_out];
                        matmul_tn_acc(
                            self.value(*weight).data(),
                            g.data(),
                            c_in * k,
                            c_out,
                            l_out,
                            &mut d_cols,
                        );
                        let dx = col2im_1d(&d_cols, c_in, l, k, *stride, *padding);
                        Self::acc_into(pass, *input, Tensor::new(vec![c_in, l], dx)?)?;
                    }
                }
            }
            Op::Conv2d { input, weight, bias, stride, padding } => {
                let ishape = self.value(*input).shape();
                let wshape = self.value(*weight).shape();
                let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
                let (c_out, kh, kw) = (wshape[0], wshape[2], wshape[3]);
                let h_out = conv1d_output_len(h, kh, *stride, *padding);
                let w_out = conv1d_output_len(w, kw, *stride, *padding);
                let plane = h_out * w_out;
                if self.wants(*bias) {
                    let mut d = vec![T::ZERO; c_out];
                    for (c, p) in g.data().chunks(plane).enumerate() {
                        for &v in p {
                            d[c] += v;
                        }
                    }
                    Self::acc_into(pass, *bias, Tensor::new(vec![c_out], d)?)?;
                }
                let needs_w = self.wants(*weight);
                let needs_x = self.wants(*input);
                if needs_w || needs_x {
                    let cols = im2col_2d(
                        self.value(*input).data(),
                        c_in,
                        h,
                        w,
                        kh,
                        kw,
                        *stride,
                        *padding,
                    );
                    if needs_w {
                        let mut dw = vec![T::ZERO; c_out * c_in * kh * kw];
                        matmul_nt_acc(g.data(), &cols, c_out, plane, c_in * kh * kw, &mut dw);
                        Self::acc_into(
                            pass,
                            *weight,
                            Tensor::new(vec![c_out, c_in, kh, kw], dw)?,
                        )?;
                    }
                    if needs_x {
                        let mut d_cols = vec![T::ZERO; c_in * kh * kw * plane];
                        matmul_tn_acc(
                            self.value(*weight).data(),
                            g.data(),
                            c_in * kh * kw,
                            c_out,
                            plane,
                            &mut d_cols,
                        );
                        let dx = col2im_2d(&d_cols, c_in, h, w, kh, kw, *stride, *padding);
                        Self::acc_into(pass, *input, Tensor::new(vec![c_in, h, w], dx)?)?;
                    }
                }
            }
            Op::MaxPool2d { input, argmax } => {
                if self.wants(*input) {
                    let mut d = Tensor::zeros(self.value(*input).shape());
                    for (&idx, &gv) in argmax.iter().zip(g.data()) {
                        d.data_mut()[idx as usize] += gv;
                    }
                    Self::acc_into(pass, *input, d)?;
                }
            }
            Op::SliceRect { input, row0, rows, col0, cols } => {
                if self.wants(*input) {
                    let c = self.value(*input).shape()[1];
                    let mut d = Tensor::zeros(self.value(*input).shape());
                    for i in 0..*rows {
                        let dst = (row0 + i) * c + col0;
                        let src = i * cols;
                        for j in 0..*cols {
                            d.data_mut()[dst + j] += g.data()[src + j];
                        }
                    }
                    Self::acc_into(pass, *input, d)?;
                }
            }
            Op::StackRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let numel = self.value(p).numel();
                    if self.wants(p) {
                        let d = Tensor::new(
                            self.value(p).shape().to_vec(),
                            g.data()[offset..offset + numel].to_vec(),
                        )?;
                        Self::acc_into(pass, p, d)?;
                    }
                    offset += numel;
                }
            }
            Op::Transpose(a) => {
                if self.wants(*a) {
                    let s = self.value(*a).shape();
                    let (r, c) = (s[0], s[1]);
                    let mut d = vec![T::ZERO; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] = g.data()[j * r + i];
                        }
                    }
                    Self::acc_into(pass, *a, Tensor::new(vec![r, c], d)?)?;
                }
            }
            Op::Reshape(a) => {
                if self.wants(*a) {
                    let d = Tensor::new(self.value(*a).shape().to_vec(), g.data().to_vec())?;
                    Self::acc_into(pass, *a, d)?;
                }
            }
            Op::TimeMajor(a) => {
                if self.wants(*a) {
                    let s = self.value(*a).shape();
                    let (c, t, w) = (s[0], s[1], s[2]);
                    let mut d = vec![T::ZERO; c * t * w];
                    for ci in 0..c {
                        for ti in 0..t {
                            for wi in 0..w {
                                d[(ci * t + ti) * w + wi] +=
                                    g.data()[ti * (c * w) + ci * w + wi];
                            }
                        }
                    }
                    Self::acc_into(pass, *a, Tensor::new(vec![c, t, w], d)?)?;
                }
            }
            Op::SumAll(a) => {
                if self.wants(*a) {
                    let gv = g.data()[0];
                    Self::acc_into(pass, *a, Tensor::filled(self.value(*a).shape(), gv))?;
                }
            }
            Op::MeanAll(a) => {
                if self.wants(*a) {
                    let n = self.value(*a).numel();
                    let gv = g.data()[0] * T::from_f64(1.0 / n as f64);
                    Self::acc_into(pass, *a, Tensor::filled(self.value(*a).shape(), gv))?;
                }
            }
            Op::LogSoftmaxRows(a) => {
                if self.wants(*a) {
                    let y = self.nodes[node_idx].value.data();
                    let s = self.value(*a).shape();
                    let (r, c) = (s[0], s[1]);
                    let mut d = vec![T::ZERO; r * c];
                    for i in 0..r {
                        let g_row = &g.data()[i * c..(i + 1) * c];
                        let mut g_sum = T::ZERO;
                        for &v in g_row {
                            g_sum += v;
                        }
                        for j in 0..c {
                            d[i * c + j] = g_row[j] - y[i * c + j].exp() * g_sum;
                        }
                    }
                    Self::acc_into(pass, *a, Tensor::new(vec![r, c], d)?)?;
                }
            }
            Op::NllLossMean { logp, targets } => {
                if self.wants(*logp) {
                    let s = self.value(*logp).shape();
                    let (r, c) = (s[0], s[1]);
                    let gv = g.data()[0] * T::from_f64(1.0 / r as f64);
                    let mut d = Tensor::zeros(&[r, c]);
                    for (i, &t) in targets.iter().enumerate() {
                        d.data_mut()[i * c + t as usize] -= gv;
                    }
                    Self::acc_into(pass, *logp, d)?;
                }
            }
            Op::CandidateScores { context, head, latents, cand, n_cand } => {
                let (r, d_ctx) = {
                    let s = self.value(*context).shape();
                    (s[0], s[1])
                };
                let d_lat = self.value(*head).shape()[1];
                // Recompute the projection; cheaper than storing it on the op.
                let mut proj = vec![T::ZERO; r * d_lat];
                matmul_acc(
                    self.value(*context).data(),
                    self.value(*head).data(),
                    r,
                    d_ctx,
                    d_lat,
                    &mut proj,
                );
                let lat = self.value(*latents).data();
                // dProj[r] = sum_j dS[r, j] * latents[cand[r, j]]
                let mut d_proj = vec![T::ZERO; r * d_lat];
                for i in 0..r {
                    for j in 0..*n_cand {
                        let gv = g.data()[i * n_cand + j];
                        let z_idx = cand[i * n_cand + j] as usize;
                        let z_row = &lat[z_idx * d_lat..(z_idx + 1) * d_lat];
                        let dp = &mut d_proj[i * d_lat..(i + 1) * d_lat];
                        for (o, &z) in dp.iter_mut().zip(z_row) {
                            *o += gv * z;
                        }
                    }
                }
                if self.wants(*latents) {
                    let t_lat = self.value(*latents).shape()[0];
                    let mut dz = vec![T::ZERO; t_lat * d_lat];
                    for i in 0..r {
                        let p_row = &proj[i * d_lat..(i + 1) * d_lat];
                        for j in 0..*n_cand {
                            let gv = g.data()[i * n_cand + j];
                            let z_idx = cand[i * n_cand + j] as usize;
                            let dst = &mut dz[z_idx * d_lat..(z_idx + 1) * d_lat];
                            for (o, &p) in dst.iter_mut().zip(p_row) {
                                *o += gv * p;
                            }
                        }
                    }
                    Self::acc_into(pass, *latents, Tensor::new(vec![t_lat, d_lat], dz)?)?;
                }
                if self.wants(*context) {
                    // dC = dProj * head^T
                    let mut dc = vec![T::ZERO; r * d_ctx];
                    matmul_nt_acc(&d_proj, self.value(*head).data(), r, d_lat, d_ctx, &mut dc);
                    Self::acc_into(pass, *context, Tensor::new(vec![r, d_ctx], dc)?)?;
                }
                if self.wants(*head) {
                    // dW = context^T * dProj
                    let mut dw = vec![T::ZERO; d_ctx * d_lat];
                    matmul_tn_acc(
                        self.value(*context).data(),
                        &d_proj,
                        d_ctx,
                        r,
                        d_lat,
                        &mut dw,
                    );
                    Self::acc_into(pass, *head, Tensor::new(vec![d_ctx, d_lat], dw)?)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leafv(g: &mut Graph<f64>, shape: &[usize], data: Vec<f64>) -> NodeId {
        g.leaf(Tensor::new(shape.to_vec(), data).unwrap(), true)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = leafv(&mut g, &[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let loss = g.sum_all(x);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn elementwise_square_gradient_is_2x() {
        let mut g = Graph::new();
        let data = vec![0.5, -1.5, 2.0, 3.0];
        let x = leafv(&mut g, &[4], data.clone());
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        let grad = g.grad(x).unwrap().data();
        for (gv, xv) in grad.iter().zip(&data) {
            assert!((gv - 2.0 * xv).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut g = Graph::new();
        let x = leafv(&mut g, &[2], vec![1.0, 2.0]);
        let err = g.backward(x).unwrap_err();
        assert!(matches!(err, CoreError::Contract(_)));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = leafv(&mut g, &[3], vec![1.0, 2.0, 3.0]);
        let loss = g.sum_all(x);
        g.backward(loss).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0; 3]);
    }

    #[test]
    fn matmul_known_gradient() {
        // loss = sum(A x B); dA = row sums of B broadcast, dB = col sums of A.
        let mut g = Graph::new();
        let a = leafv(&mut g, &[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = leafv(&mut g, &[2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        let y = g.matmul(a, b).unwrap();
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a).unwrap().data(), &[11.0, 15.0, 11.0, 15.0]);
        assert_eq!(g.grad(b).unwrap().data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let mut g = Graph::new();
        let x = leafv(&mut g, &[3, 4], (0..12).map(|i| (i as f64) * 0.7 - 3.0).collect());
        let y = g.log_softmax_rows(x).unwrap();
        for row in g.value(y).data().chunks(4) {
            let s: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12, "row sums to {s}");
        }
    }

    #[test]
    fn nll_uniform_three_classes_is_ln3() {
        let mut g = Graph::new();
        let logits = leafv(&mut g, &[1, 3], vec![0.0, 0.0, 0.0]);
        let logp = g.log_softmax_rows(logits).unwrap();
        let loss = g.nll_loss_mean(logp, &[1]).unwrap();
        let v = g.value(loss).data()[0];
        assert!((v - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn conv1d_output_length_matches_formula() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[1, 20480]));
        let w = g.constant(Tensor::zeros(&[4, 1, 10]));
        let b = g.constant(Tensor::zeros(&[4]));
        let y = g.conv1d(x, w, b, 5, 3).unwrap();
        assert_eq!(g.value(y).shape(), &[4, 4096]);
    }

    #[test]
    fn conv1d_zero_input_outputs_bias() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(&[2, 17]));
        let w = g.constant(Tensor::zeros(&[3, 2, 4]));
        let b = g.constant(Tensor::new(vec![3], vec![0.5, -1.25, 2.0]).unwrap());
        let y = g.conv1d(x, w, b, 2, 1).unwrap();
        let l_out = g.value(y).shape()[1];
        for (c, row) in g.value(y).data().chunks(l_out).enumerate() {
            let expect = [0.5, -1.25, 2.0][c];
            assert!(row.iter().all(|&v| v == expect));
        }
    }

    #[test]
    fn conv1d_channel_mismatch_is_invalid_shape() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[2, 10]));
        let w = g.constant(Tensor::zeros(&[3, 5, 3]));
        let b = g.constant(Tensor::zeros(&[3]));
        let err = g.conv1d(x, w, b, 1, 1).unwrap_err();
        assert!(matches!(err, CoreError::InvalidShape(_)));
    }

    #[test]
    fn maxpool_over_constant_tensor_keeps_value() {
        let mut g = Graph::<f32>::new();
        let x = g.constant(Tensor::filled(&[2, 4, 4], 3.25));
        let y = g.maxpool2d(x, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 2, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn slice_and_stack_invert() {
        let mut g = Graph::new();
        let x = leafv(&mut g, &[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r0 = g.select_row(x, 0).unwrap();
        let r1 = g.select_row(x, 1).unwrap();
        let r2 = g.select_row(x, 2).unwrap();
        let back = g.stack_rows(&[r0, r1, r2]).unwrap();
        assert_eq!(g.value(back).data(), g.value(x).data());
        let loss = g.sum_all(back);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn time_major_rows_layout() {
        // [c=2, t=2, w=2] with values enumerating (c, t, w).
        let mut g = Graph::new();
        let x = leafv(&mut g, &[2, 2, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let y = g.time_major_rows(x).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 4]);
        // row t=0: [c0w0, c0w1, c1w0, c1w1] = [0, 1, 4, 5]
        assert_eq!(g.value(y).data(), &[0.0, 1.0, 4.0, 5.0, 2.0, 3.0, 6.0, 7.0]);
        let loss = g.sum_all(y);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 8]);
    }
}
