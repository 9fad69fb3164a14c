//! Recurrent layers built from graph primitives, so backpropagation through
//! time falls out of the tape.
//!
//! Gate weights are packed: the input projection for all gates is one matmul
//! over the whole sequence, and the hidden projection is one matmul per step.
//! GRU gate order is `(z, r, n)` (update, reset, candidate); LSTM gate order
//! is `(i, f, g, o)`.

use super::graph::{Graph, NodeId};
use super::Scalar;
use crate::error::{CoreError, Result};

fn check_rnn_shapes<T: Scalar>(
    g: &Graph<T>,
    op: &str,
    inputs: NodeId,
    state: NodeId,
    w_ih: NodeId,
    w_hh: NodeId,
    bias: NodeId,
    gates: usize,
) -> Result<(usize, usize, usize)> {
    let ishape = g.value(inputs).shape();
    if ishape.len() != 2 {
        return Err(CoreError::InvalidShape(format!(
            "{op}: inputs must be [t, d], got {ishape:?}"
        )));
    }
    let (t, d) = (ishape[0], ishape[1]);
    if t == 0 {
        return Err(CoreError::Contract(format!("{op}: empty input sequence")));
    }
    let wih = g.value(w_ih).shape();
    if wih.len() != 2 || wih[0] != d || wih[1] % gates != 0 {
        return Err(CoreError::InvalidShape(format!(
            "{op}: w_ih {wih:?} incompatible with input dim {d}"
        )));
    }
    let h = wih[1] / gates;
    if g.value(w_hh).shape() != [h, gates * h] {
        return Err(CoreError::InvalidShape(format!(
            "{op}: w_hh {:?}, expected [{h}, {}]",
            g.value(w_hh).shape(),
            gates * h
        )));
    }
    if g.value(bias).shape() != [gates * h] {
        return Err(CoreError::InvalidShape(format!(
            "{op}: bias {:?}, expected [{}]",
            g.value(bias).shape(),
            gates * h
        )));
    }
    if g.value(state).shape() != [1, h] {
        return Err(CoreError::InvalidShape(format!(
            "{op}: initial state {:?}, expected [1, {h}]",
            g.value(state).shape()
        )));
    }
    Ok((t, d, h))
}

/// GRU over `inputs` `[t, d]` with initial hidden `h0` `[1, h]`. Weights:
/// `w_ih` `[d, 3h]`, `w_hh` `[h, 3h]`, `bias` `[3h]`. Returns all hidden
/// states `[t, h]`.
///
/// Recurrence per step:
/// `z = sigmoid(a_z + u_z)`, `r = sigmoid(a_r + u_r)`,
/// `n = tanh(a_n + r * u_n)`, `h' = (1 - z) * n + z * h`
/// where `a = x w_ih + bias` and `u = h w_hh`.
pub fn gru_forward<T: Scalar>(
    g: &mut Graph<T>,
    inputs: NodeId,
    h0: NodeId,
    w_ih: NodeId,
    w_hh: NodeId,
    bias: NodeId,
) -> Result<NodeId> {
    let (t, _d, h) = check_rnn_shapes(g, "gru_forward", inputs, h0, w_ih, w_hh, bias, 3)?;
    let proj = g.matmul(inputs, w_ih)?;
    let proj = g.add_row_broadcast(proj, bias)?;
    let mut hidden = h0;
    let mut outputs = Vec::with_capacity(t);
    for step in 0..t {
        let a = g.slice_rect(proj, step, 1, 0, 3 * h)?;
        let u = g.matmul(hidden, w_hh)?;
        let az = g.slice_rect(a, 0, 1, 0, h)?;
        let ar = g.slice_rect(a, 0, 1, h, h)?;
        let an = g.slice_rect(a, 0, 1, 2 * h, h)?;
        let uz = g.slice_rect(u, 0, 1, 0, h)?;
        let ur = g.slice_rect(u, 0, 1, h, h)?;
        let un = g.slice_rect(u, 0, 1, 2 * h, h)?;
        let z_pre = g.add(az, uz)?;
        let z = g.sigmoid(z_pre);
        let r_pre = g.add(ar, ur)?;
        let r = g.sigmoid(r_pre);
        let gated = g.mul(r, un)?;
        let n_pre = g.add(an, gated)?;
        let n = g.tanh(n_pre);
        let one_minus_z = g.affine(z, -1.0, 1.0);
        let new_part = g.mul(one_minus_z, n)?;
        let keep_part = g.mul(z, hidden)?;
        hidden = g.add(new_part, keep_part)?;
        outputs.push(hidden);
    }
    g.stack_rows(&outputs)
}

/// LSTM over `inputs` `[t, d]` with initial `(h0, c0)` each `[1, h]`.
/// Weights: `w_ih` `[d, 4h]`, `w_hh` `[h, 4h]`, `bias` `[4h]`. Returns all
/// hidden states `[t, h]`.
pub fn lstm_forward<T: Scalar>(
    g: &mut Graph<T>,
    inputs: NodeId,
    h0: NodeId,
    c0: NodeId,
    w_ih: NodeId,
    w_hh: NodeId,
    bias: NodeId,
) -> Result<NodeId> {
    let (t, _d, h) = check_rnn_shapes(g, "lstm_forward", inputs, h0, w_ih, w_hh, bias, 4)?;
    if g.value(c0).shape() != [1, h] {
        return Err(CoreError::InvalidShape(format!(
            "lstm_forward: cell state {:?}, expected [1, {h}]",
            g.value(c0).shape()
        )));
    }
    let proj = g.matmul(inputs, w_ih)?;
    let proj = g.add_row_broadcast(proj, bias)?;
    let mut hidden = h0;
    let mut cell = c0;
    let mut outputs = Vec::with_capacity(t);
    for step in 0..t {
        let a = g.slice_rect(proj, step, 1, 0, 4 * h)?;
        let u = g.matmul(hidden, w_hh)?;
        let pre = g.add(a, u)?;
        let i_pre = g.slice_rect(pre, 0, 1, 0, h)?;
        let f_pre = g.slice_rect(pre, 0, 1, h, h)?;
        let g_pre = g.slice_rect(pre, 0, 1, 2 * h, h)?;
        let o_pre = g.slice_rect(pre, 0, 1, 3 * h, h)?;
        let i_gate = g.sigmoid(i_pre);
        let f_gate = g.sigmoid(f_pre);
        let g_gate = g.tanh(g_pre);
        let o_gate = g.sigmoid(o_pre);
        let keep = g.mul(f_gate, cell)?;
        let write = g.mul(i_gate, g_gate)?;
        cell = g.add(keep, write)?;
        let cell_act = g.tanh(cell);
        hidden = g.mul(o_gate, cell_act)?;
        outputs.push(hidden);
    }
    g.stack_rows(&outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn gru_zero_weights_zero_state_outputs_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(vec![4, 3], (0..12).map(|i| i as f64).collect()).unwrap());
        let h0 = g.constant(Tensor::zeros(&[1, 2]));
        let w_ih = g.constant(Tensor::zeros(&[3, 6]));
        let w_hh = g.constant(Tensor::zeros(&[2, 6]));
        let b = g.constant(Tensor::zeros(&[6]));
        let y = gru_forward(&mut g, x, h0, w_ih, w_hh, b).unwrap();
        assert_eq!(g.value(y).shape(), &[4, 2]);
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_single_step_matches_scalar_hand_computation() {
        // d=2 input, h=1 hidden; every quantity recomputed with plain f64.
        let x = [0.5, -1.0];
        let h_prev = 0.2;
        let w_ih = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]; // [2 x 3] rows per input dim
        let w_hh = [0.7, 0.8, 0.9]; // [1 x 3]
        let b = [0.01, 0.02, 0.03];

        let az = x[0] * w_ih[0] + x[1] * w_ih[3] + b[0];
        let ar = x[0] * w_ih[1] + x[1] * w_ih[4] + b[1];
        let an = x[0] * w_ih[2] + x[1] * w_ih[5] + b[2];
        let z = sigmoid(az + h_prev * w_hh[0]);
        let r = sigmoid(ar + h_prev * w_hh[1]);
        let n = (an + r * (h_prev * w_hh[2])).tanh();
        let expected = (1.0 - z) * n + z * h_prev;

        let mut g = Graph::<f64>::new();
        let xi = g.constant(Tensor::new(vec![1, 2], x.to_vec()).unwrap());
        let h0 = g.constant(Tensor::new(vec![1, 1], vec![h_prev]).unwrap());
        let wi = g.constant(Tensor::new(vec![2, 3], w_ih.to_vec()).unwrap());
        let wh = g.constant(Tensor::new(vec![1, 3], w_hh.to_vec()).unwrap());
        let bb = g.constant(Tensor::new(vec![3], b.to_vec()).unwrap());
        let y = gru_forward(&mut g, xi, h0, wi, wh, bb).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1]);
        assert!((g.value(y).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn lstm_zero_weights_zero_state_outputs_zero() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(vec![3, 2], vec![1.0; 6]).unwrap());
        let h0 = g.constant(Tensor::zeros(&[1, 2]));
        let c0 = g.constant(Tensor::zeros(&[1, 2]));
        let w_ih = g.constant(Tensor::zeros(&[2, 8]));
        let w_hh = g.constant(Tensor::zeros(&[2, 8]));
        let b = g.constant(Tensor::zeros(&[8]));
        let y = lstm_forward(&mut g, x, h0, c0, w_ih, w_hh, b).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_single_step_matches_scalar_hand_computation() {
        let x = [0.3, -0.7];
        let (h_prev, c_prev) = (0.1, -0.2);
        // [2 x 4] input weights, [1 x 4] hidden weights, gate order (i, f, g, o).
        let w_ih = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let w_hh = [0.9, 1.0, 1.1, 1.2];
        let b = [0.01, 0.02, 0.03, 0.04];

        let pre: Vec<f64> = (0..4)
            .map(|k| x[0] * w_ih[k] + x[1] * w_ih[4 + k] + b[k] + h_prev * w_hh[k])
            .collect();
        let i = sigmoid(pre[0]);
        let f = sigmoid(pre[1]);
        let gg = pre[2].tanh();
        let o = sigmoid(pre[3]);
        let c = f * c_prev + i * gg;
        let expected = o * c.tanh();

        let mut g = Graph::<f64>::new();
        let xi = g.constant(Tensor::new(vec![1, 2], x.to_vec()).unwrap());
        let h0 = g.constant(Tensor::new(vec![1, 1], vec![h_prev]).unwrap());
        let c0 = g.constant(Tensor::new(vec![1, 1], vec![c_prev]).unwrap());
        let wi = g.constant(Tensor::new(vec![2, 4], w_ih.to_vec()).unwrap());
        let wh = g.constant(Tensor::new(vec![1, 4], w_hh.to_vec()).unwrap());
        let bb = g.constant(Tensor::new(vec![4], b.to_vec()).unwrap());
        let y = lstm_forward(&mut g, xi, h0, c0, wi, wh, bb).unwrap();
        assert!((g.value(y).data()[0] - expected).abs() < 1e-15);
    }
}
