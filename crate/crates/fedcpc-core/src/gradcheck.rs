//! Central finite-difference gradient checking.
//!
//! The checker never touches the reverse pass: it rebuilds the forward graph
//! at perturbed parameter vectors and differences the loss values, then
//! compares against the gradient the tape produced. All checks run at `f64`.

use crate::error::Result;
use crate::rng::derive_rng_indexed;
use crate::tensor::{gru_forward, lstm_forward, Graph, NodeId, Tensor};
use rand::Rng;

/// Builds a scalar loss from a flat parameter vector; returns the loss node
/// and the leaves (in `x` order) whose gradients are under test.
pub type BuildFn<'a> = dyn Fn(&mut Graph<f64>, &[f64]) -> Result<(NodeId, Vec<NodeId>)> + 'a;

/// Forward-only loss evaluation.
pub fn loss_at(build: &BuildFn, x: &[f64]) -> f64 {
    let mut g = Graph::new();
    let (loss, _) = build(&mut g, x).expect("gradient-check graph must build");
    g.value(loss).data()[0]
}

/// Loss and concatenated autodiff gradient at `x`.
pub fn autodiff_gradient(build: &BuildFn, x: &[f64]) -> (f64, Vec<f64>) {
    let mut g = Graph::new();
    let (loss, leaves) = build(&mut g, x).expect("gradient-check graph must build");
    g.backward(loss).expect("backward over gradient-check graph");
    let mut grad = Vec::with_capacity(x.len());
    for id in leaves {
        match g.grad(id) {
            Some(t) => grad.extend_from_slice(t.data()),
            None => grad.extend(std::iter::repeat(0.0).take(g.value(id).numel())),
        }
    }
    (g.value(loss).data()[0], grad)
}

/// Central differences `(f(x+h e_i) - f(x-h e_i)) / 2h` for every coordinate.
pub fn finite_difference_gradient(build: &BuildFn, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = loss_at(build, &probe);
        probe[i] = x[i] - h;
        let down = loss_at(build, &probe);
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Norm-level relative error `||a - b|| / max(||a||, ||b||, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-12)
}

/// Compare tape gradient against central differences; returns the relative
/// error.
pub fn check_gradient(build: &BuildFn, x0: &[f64], h: f64) -> f64 {
    let (_, analytic) = autodiff_gradient(build, x0);
    let numeric = finite_difference_gradient(build, x0, h);
    relative_error(&analytic, &numeric)
}

/// One named gradient check outcome.
#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: &'static str,
    pub rel_error: f64,
}

fn sample_away_from_zero(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    // Keeps |x| >= 0.1 so kinked ops (relu, maxpool) sit away from their
    // non-differentiable points at h = 1e-5.
    (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn sample_uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn probe_tensor(seed: u64, tag: u64, shape: &[usize]) -> Tensor<f64> {
    let mut rng = derive_rng_indexed(seed, "probe", tag);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), sample_uniform(&mut rng, n, -1.0, 1.0)).expect("probe shape")
}

/// Weighted sum of a node against a fixed probe so non-scalar outputs reduce
/// to a scalar loss sensitive to every element.
fn probed_loss(
    g: &mut Graph<f64>,
    out: NodeId,
    seed: u64,
    tag: u64,
) -> Result<NodeId> {
    let shape = g.value(out).shape().to_vec();
    let probe = g.constant(probe_tensor(seed, tag, &shape));
    let weighted = g.mul(out, probe)?;
    Ok(g.sum_all(weighted))
}

/// Finite-difference checks for every differentiable graph operation at
/// small shapes. Target: relative error below `1e-4` at `h = 1e-5`.
pub fn op_gradient_checks(seed: u64) -> Vec<OpCheck> {
    let h = 1e-5;
    let mut out = Vec::new();
    let mut push = |name: &'static str, build: &BuildFn, x0: &[f64]| {
        out.push(OpCheck { name, rel_error: check_gradient(build, x0, h) });
    };

    // -- elementwise and affine ---------------------------------------------
    {
        let n = 12;
        let mut rng = derive_rng_indexed(seed, "elementwise", 0);
        let x0: Vec<f64> = sample_away_from_zero(&mut rng, 2 * n);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let a = g.leaf(Tensor::new(vec![n], x[..n].to_vec())?, true);
            let b = g.leaf(Tensor::new(vec![n], x[n..].to_vec())?, true);
            let sum = g.add(a, b)?;
            let diff = g.sub(a, b)?;
            let prod = g.mul(sum, diff)?;
            let scaled = g.affine(prod, 0.75, -0.2);
            let loss = probed_loss(g, scaled, seed, 1)?;
            Ok((loss, vec![a, b]))
        };
        push("add_sub_mul_affine", &build, &x0);
    }

    // -- activations ----------------------------------------------------------
    {
        let n = 10;
        let mut rng = derive_rng_indexed(seed, "activations", 0);
        let x0 = sample_away_from_zero(&mut rng, n);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let a = g.leaf(Tensor::new(vec![n], x.to_vec())?, true);
            let r = g.relu(a);
            let s = g.sigmoid(a);
            let t = g.tanh(a);
            let e = g.exp(a);
            let sum1 = g.add(r, s)?;
            let sum2 = g.add(t, e)?;
            let both = g.add(sum1, sum2)?;
            let loss = probed_loss(g, both, seed, 2)?;
            Ok((loss, vec![a]))
        };
        push("relu_sigmoid_tanh_exp", &build, &x0);
    }
    {
        let n = 8;
        let mut rng = derive_rng_indexed(seed, "ln", 0);
        let x0 = sample_uniform(&mut rng, n, 0.2, 2.0);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let a = g.leaf(Tensor::new(vec![n], x.to_vec())?, true);
            let l = g.ln(a);
            let loss = probed_loss(g, l, seed, 3)?;
            Ok((loss, vec![a]))
        };
        push("ln", &build, &x0);
    }

    // -- matmul + bias broadcast ---------------------------------------------
    {
        let (m, k, n) = (3, 4, 5);
        let mut rng = derive_rng_indexed(seed, "matmul", 0);
        let x0 = sample_uniform(&mut rng, m * k + k * n + n, -1.0, 1.0);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let a = g.leaf(Tensor::new(vec![m, k], x[..m * k].to_vec())?, true);
            let b = g.leaf(Tensor::new(vec![k, n], x[m * k..m * k + k * n].to_vec())?, true);
            let bias = g.leaf(Tensor::new(vec![n], x[m * k + k * n..].to_vec())?, true);
            let y = g.linear(a, b, bias)?;
            let loss = probed_loss(g, y, seed, 4)?;
            Ok((loss, vec![a, b, bias]))
        };
        push("matmul_linear_bias", &build, &x0);
    }

    // -- conv1d ---------------------------------------------------------------
    {
        let (c_in, l, c_out, k) = (3, 20, 4, 5);
        let mut rng = derive_rng_indexed(seed, "conv1d", 0);
        let x0 = sample_uniform(&mut rng, c_in * l + c_out * c_in * k + c_out, -1.0, 1.0);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let mut ofs = 0;
            let input = g.leaf(Tensor::new(vec![c_in, l], x[ofs..ofs + c_in * l].to_vec())?, true);
            ofs += c_in * l;
            let weight = g.leaf(
                Tensor::new(vec![c_out, c_in, k], x[ofs..ofs + c_out * c_in * k].to_vec())?,
                true,
            );
            ofs += c_out * c_in * k;
            let bias = g.leaf(Tensor::new(vec![c_out], x[ofs..ofs + c_out].to_vec())?, true);
            let y = g.conv1d(input, weight, bias, 2, 2)?;
            let loss = probed_loss(g, y, seed, 5)?;
            Ok((loss, vec![input, weight, bias]))
        };
        push("conv1d", &build, &x0);
    }

    // -- conv2d + maxpool ------------------------------------------------------
    {
        let (c_in, hh, ww, c_out) = (2, 6, 7, 3);
        let n_in = c_in * hh * ww;
        let n_w = c_out * c_in * 9;
        let mut rng = derive_rng_indexed(seed, "conv2d", 0);
        let x0 = sample_uniform(&mut rng, n_in + n_w + c_out, -1.0, 1.0);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let input = g.leaf(Tensor::new(vec![c_in, hh, ww], x[..n_in].to_vec())?, true);
            let weight = g.leaf(
                Tensor::new(vec![c_out, c_in, 3, 3], x[n_in..n_in + n_w].to_vec())?,
                true,
            );
            let bias = g.leaf(Tensor::new(vec![c_out], x[n_in + n_w..].to_vec())?, true);
            let y = g.conv2d(input, weight, bias, 1, 1)?;
            let pooled = g.maxpool2d(y, 2)?;
            let loss = probed_loss(g, pooled, seed, 6)?;
            Ok((loss, vec![input, weight, bias]))
        };
        push("conv2d_maxpool2d", &build, &x0);
    }

    // -- shape ops --------------------------------------------------------------
    {
        let (r, c) = (4, 6);
        let mut rng = derive_rng_indexed(seed, "shape_ops", 0);
        let x0 = sample_uniform(&mut rng, r * c, -1.0, 1.0);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let a = g.leaf(Tensor::new(vec![r, c], x.to_vec())?, true);
            let t = g.transpose(a)?;
            let s = g.slice_rect(t, 1, 3, 0, 3)?;
            let top = g.slice_rect(s, 0, 1, 0, 3)?;
            let rest = g.slice_rect(s, 1, 2, 0, 3)?;
            let back = g.stack_rows(&[rest, top])?;
            let cube = g.reshape(back, vec![3, 1, 3])?;
            let tm = g.time_major_rows(cube)?;
            let loss = probed_loss(g, tm, seed, 7)?;
            Ok((loss, vec![a]))
        };
        push("transpose_slice_stack_reshape_timemajor", &build, &x0);
    }

    // -- log-softmax + nll --------------------------------------------------------
    {
        let (r, c) = (5, 4);
        let mut rng = derive_rng_indexed(seed, "nll", 0);
        let x0 = sample_uniform(&mut rng, r * c, -2.0, 2.0);
        let targets: Vec<usize> = (0..r).map(|i| i % c).collect();
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let a = g.leaf(Tensor::new(vec![r, c], x.to_vec())?, true);
            let logp = g.log_softmax_rows(a)?;
            let loss = g.nll_loss_mean(logp, &targets)?;
            Ok((loss, vec![a]))
        };
        push("log_softmax_nll", &build, &x0);
    }

    // -- mean reduction -------------------------------------------------------------
    {
        let n = 9;
        let mut rng = derive_rng_indexed(seed, "mean", 0);
        let x0 = sample_uniform(&mut rng, n, -1.0, 1.0);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let a = g.leaf(Tensor::new(vec![n], x.to_vec())?, true);
            let sq = g.mul(a, a)?;
            let loss = g.mean_all(sq);
            Ok((loss, vec![a]))
        };
        push("mean_all", &build, &x0);
    }

    // -- candidate scores -------------------------------------------------------------
    {
        let (r, d_ctx, d_lat, t_lat, n_cand) = (4, 3, 5, 6, 3);
        let mut rng = derive_rng_indexed(seed, "cand", 0);
        let x0 = sample_uniform(&mut rng, r * d_ctx + d_ctx * d_lat + t_lat * d_lat, -1.0, 1.0);
        let cand: Vec<u32> = {
            let mut c_rng = derive_rng_indexed(seed, "cand_idx", 0);
            (0..r * n_cand).map(|_| c_rng.gen_range(0..t_lat as u32)).collect()
        };
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let mut ofs = 0;
            let ctx = g.leaf(Tensor::new(vec![r, d_ctx], x[ofs..ofs + r * d_ctx].to_vec())?, true);
            ofs += r * d_ctx;
            let head =
                g.leaf(Tensor::new(vec![d_ctx, d_lat], x[ofs..ofs + d_ctx * d_lat].to_vec())?, true);
            ofs += d_ctx * d_lat;
            let lat =
                g.leaf(Tensor::new(vec![t_lat, d_lat], x[ofs..ofs + t_lat * d_lat].to_vec())?, true);
            let scores = g.candidate_scores(ctx, head, lat, &cand, n_cand)?;
            let logp = g.log_softmax_rows(scores)?;
            let loss = g.nll_loss_mean(logp, &vec![0; r])?;
            Ok((loss, vec![ctx, head, lat]))
        };
        push("candidate_scores", &build, &x0);
    }

    // -- gru --------------------------------------------------------------------------
    {
        let (t, d, hdim) = (4, 3, 2);
        let n_x = t * d;
        let n_wih = d * 3 * hdim;
        let n_whh = hdim * 3 * hdim;
        let n_b = 3 * hdim;
        let mut rng = derive_rng_indexed(seed, "gru", 0);
        let x0 = sample_uniform(&mut rng, n_x + n_wih + n_whh + n_b, -0.8, 0.8);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let mut ofs = 0;
            let inp = g.leaf(Tensor::new(vec![t, d], x[ofs..ofs + n_x].to_vec())?, true);
            ofs += n_x;
            let w_ih = g.leaf(Tensor::new(vec![d, 3 * hdim], x[ofs..ofs + n_wih].to_vec())?, true);
            ofs += n_wih;
            let w_hh =
                g.leaf(Tensor::new(vec![hdim, 3 * hdim], x[ofs..ofs + n_whh].to_vec())?, true);
            ofs += n_whh;
            let b = g.leaf(Tensor::new(vec![3 * hdim], x[ofs..ofs + n_b].to_vec())?, true);
            let h0 = g.constant(Tensor::zeros(&[1, hdim]));
            let y = gru_forward(g, inp, h0, w_ih, w_hh, b)?;
            let loss = probed_loss(g, y, seed, 8)?;
            Ok((loss, vec![inp, w_ih, w_hh, b]))
        };
        push("gru_forward", &build, &x0);
    }

    // -- lstm --------------------------------------------------------------------------
    {
        let (t, d, hdim) = (4, 3, 2);
        let n_x = t * d;
        let n_wih = d * 4 * hdim;
        let n_whh = hdim * 4 * hdim;
        let n_b = 4 * hdim;
        let mut rng = derive_rng_indexed(seed, "lstm", 0);
        let x0 = sample_uniform(&mut rng, n_x + n_wih + n_whh + n_b, -0.8, 0.8);
        let build = move |g: &mut Graph<f64>, x: &[f64]| -> Result<(NodeId, Vec<NodeId>)> {
            let mut ofs = 0;
            let inp = g.leaf(Tensor::new(vec![t, d], x[ofs..ofs + n_x].to_vec())?, true);
            ofs += n_x;
            let w_ih = g.leaf(Tensor::new(vec![d, 4 * hdim], x[ofs..ofs + n_wih].to_vec())?, true);
            ofs += n_wih;
            let w_hh =
                g.leaf(Tensor::new(vec![hdim, 4 * hdim], x[ofs..ofs + n_whh].to_vec())?, true);
            ofs += n_whh;
            let b = g.leaf(Tensor::new(vec![4 * hdim], x[ofs..ofs + n_b].to_vec())?, true);
            let h0 = g.constant(Tensor::zeros(&[1, hdim]));
            let c0 = g.constant(Tensor::zeros(&[1, hdim]));
            let y = lstm_forward(g, inp, h0, c0, w_ih, w_hh, b)?;
            let loss = probed_loss(g, y, seed, 9)?;
            Ok((loss, vec![inp, w_ih, w_hh, b]))
        };
        push("lstm_forward", &build, &x0);
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_finite_difference_check_over_five_seeds() {
        for seed in 0..5 {
            for check in op_gradient_checks(seed) {
                assert!(
                    check.rel_error < 1e-4,
                    "seed {seed}, op {}: rel error {}",
                    check.name,
                    check.rel_error
                );
            }
        }
    }

    #[test]
    fn relative_error_of_identical_vectors_is_zero() {
        let v = vec![1.0, -2.0, 3.0];
        assert_eq!(relative_error(&v, &v), 0.0);
    }
}
