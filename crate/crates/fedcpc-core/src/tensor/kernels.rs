//! Raw numeric kernels behind the graph operations.
//!
//! Every kernel accumulates in a fixed order (ascending inner index), and the
//! rayon paths only split work across disjoint output rows, so results are
//! bit-identical whether or not the `parallel` feature is enabled.

use super::Scalar;
use crate::par::maybe_par_chunks_mut;

/// Work threshold (multiply-adds) below which matmuls stay sequential.
const PAR_FLOPS_MIN: usize = 1 << 15;

/// `out[m,n] += a[m,k] * b[k,n]` (out must be zeroed by the caller).
pub fn matmul_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row_work = k * n;
    if m > 1 && m * row_work >= PAR_FLOPS_MIN {
        let rows_per = (PAR_FLOPS_MIN / row_work.max(1)).max(1);
        maybe_par_chunks_mut(out, rows_per * n, |ci, chunk| {
            let i0 = ci * rows_per;
            for (ri, out_row) in chunk.chunks_mut(n).enumerate() {
                let i = i0 + ri;
                for p in 0..k {
                    let a_ip = a[i * k + p];
                    let b_row = &b[p * n..(p + 1) * n];
                    for (o, &bv) in out_row.iter_mut().zip(b_row) {
                        *o += a_ip * bv;
                    }
                }
            }
        });
        return;
    }
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_ip * bv;
            }
        }
    }
}

/// `out[m,n] += a[m,k] * b[n,k]^T` (dot products of rows).
pub fn matmul_nt_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    let row_work = k * n;
    let body = |i: usize, out_row: &mut [T]| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::ZERO;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o += acc;
        }
    };
    if m > 1 && m * row_work >= PAR_FLOPS_MIN {
        let rows_per = (PAR_FLOPS_MIN / row_work.max(1)).max(1);
        maybe_par_chunks_mut(out, rows_per * n, |ci, chunk| {
            for (ri, out_row) in chunk.chunks_mut(n).enumerate() {
                body(ci * rows_per + ri, out_row);
            }
        });
        return;
    }
    for i in 0..m {
        body(i, &mut out[i * n..(i + 1) * n]);
    }
}

/// `out[m,n] += a[k,m]^T * b[k,n]`.
pub fn matmul_tn_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row_work = k * n;
    let body = |i: usize, out_row: &mut [T]| {
        for p in 0..k {
            let a_pi = a[p * m + i];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += a_pi * bv;
            }
        }
    };
    if m > 1 && m * row_work >= PAR_FLOPS_MIN {
        let rows_per = (PAR_FLOPS_MIN / row_work.max(1)).max(1);
        maybe_par_chunks_mut(out, rows_per * n, |ci, chunk| {
            for (ri, out_row) in chunk.chunks_mut(n).enumerate() {
                body(ci * rows_per + ri, out_row);
            }
        });
        return;
    }
    for i in 0..m {
        body(i, &mut out[i * n..(i + 1) * n]);
    }
}

/// Output length of a 1-d convolution.
pub fn conv1d_output_len(input_len: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input_len + 2 * padding - kernel) / stride + 1
}

/// im2col for 1-d convolution: input `[c_in, len]` (zero-padded by `padding`
/// on both ends) unrolled to `[c_in * kernel, l_out]`.
pub fn im2col_1d<T: Scalar>(
    input: &[T],
    c_in: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Vec<T> {
    let l_out = conv1d_output_len(len, kernel, stride, padding);
    let mut cols = vec![T::ZERO; c_in * kernel * l_out];
    for c in 0..c_in {
        let in_row = &input[c * len..(c + 1) * len];
        for kk in 0..kernel {
            let row = &mut cols[(c * kernel + kk) * l_out..(c * kernel + kk + 1) * l_out];
            for (l, slot) in row.iter_mut().enumerate() {
                let src = (l * stride + kk) as isize - padding as isize;
                if src >= 0 && (src as usize) < len {
                    *slot = in_row[src as usize];
                }
            }
        }
    }
    cols
}

/// Scatter the gradient of the im2col matrix back onto the input layout.
pub fn col2im_1d<T: Scalar>(
    d_cols: &[T],
    c_in: usize,
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Vec<T> {
    let l_out = conv1d_output_len(len, kernel, stride, padding);
    let mut d_input = vec![T::ZERO; c_in * len];
    for c in 0..c_in {
        for kk in 0..kernel {
            let row = &d_cols[(c * kernel + kk) * l_out..(c * kernel + kk + 1) * l_out];
            for (l, &g) in row.iter().enumerate() {
                let src = (l * stride + kk) as isize - padding as isize;
                if src >= 0 && (src as usize) < len {
                    d_input[c * len + src as usize] += g;
                }
            }
        }
    }
    d_input
}

/// im2col for 2-d convolution with square stride/padding: input
/// `[c_in, h, w]` unrolled to `[c_in * kh * kw, h_out * w_out]`.
#[allow(clippy::too_many_arguments)]
pub fn im2col_2d<T: Scalar>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Vec<T> {
    let h_out = conv1d_output_len(h, kh, stride, padding);
    let w_out = conv1d_output_len(w, kw, stride, padding);
    let cols_w = h_out * w_out;
    let mut cols = vec![T::ZERO; c_in * kh * kw * cols_w];
    for c in 0..c_in {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row_idx = (c * kh + ky) * kw + kx;
                let row = &mut cols[row_idx * cols_w..(row_idx + 1) * cols_w];
                for oy in 0..h_out {
                    let sy = (oy * stride + ky) as isize - padding as isize;
                    for ox in 0..w_out {
                        let sx = (ox * stride + kx) as isize - padding as isize;
                        if sy >= 0 && (sy as usize) < h && sx >= 0 && (sx as usize) < w {
                            row[oy * w_out + ox] = plane[sy as usize * w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Scatter the gradient of the 2-d im2col matrix back onto the input layout.
#[allow(clippy::too_many_arguments)]
pub fn col2im_2d<T: Scalar>(
    d_cols: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Vec<T> {
    let h_out = conv1d_output_len(h, kh, stride, padding);
    let w_out = conv1d_output_len(w, kw, stride, padding);
    let cols_w = h_out * w_out;
    let mut d_input = vec![T::ZERO; c_in * h * w];
    for c in 0..c_in {
        for ky in 0..kh {
            for kx in 0..kw {
                let row_idx = (c * kh + ky) * kw + kx;
                let row = &d_cols[row_idx * cols_w..(row_idx + 1) * cols_w];
                for oy in 0..h_out {
                    let sy = (oy * stride + ky) as isize - padding as isize;
                    if sy < 0 || (sy as usize) >= h {
                        continue;
                    }
                    for ox in 0..w_out {
                        let sx = (ox * stride + kx) as isize - padding as isize;
                        if sx >= 0 && (sx as usize) < w {
                            d_input[(c * h + sy as usize) * w + sx as usize] +=
                                row[oy * w_out + ox];
                        }
                    }
                }
            }
        }
    }
    d_input
}

/// Max-pool over `[c, h, w]` with per-axis window clamping: a size-2 window
/// shrinks to 1 on axes of extent 1, so degenerate axes pass through. Returns
/// `(output, argmax)` where argmax holds flat input indices for backward.
pub fn maxpool2d<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    window: usize,
) -> (Vec<T>, Vec<u32>, usize, usize) {
    let kh = window.min(h);
    let kw = window.min(w);
    let h_out = h / kh;
    let w_out = w / kw;
    let mut out = vec![T::ZERO; c * h_out * w_out];
    let mut argmax = vec![0u32; c * h_out * w_out];
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut best = plane[(oy * kh) * w + ox * kw];
                let mut best_idx = (oy * kh) * w + ox * kw;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let idx = (oy * kh + ky) * w + ox * kw + kx;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[(ci * h_out + oy) * w_out + ox] = best;
                argmax[(ci * h_out + oy) * w_out + ox] = (ci * h * w + best_idx) as u32;
            }
        }
    }
    (out, argmax, h_out, w_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known() {
        // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut out = [0.0f64; 4];
        matmul_acc(&a, &b, 2, 2, 2, &mut out);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_variants_agree_with_naive() {
        let m = 7;
        let k = 5;
        let n = 6;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c_nn = vec![0.0; m * n];
        matmul_acc(&a, &b, m, k, n, &mut c_nn);

        // a stored transposed as [k, m]
        let mut a_t = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                a_t[p * m + i] = a[i * k + p];
            }
        }
        let mut c_tn = vec![0.0; m * n];
        matmul_tn_acc(&a_t, &b, m, k, n, &mut c_tn);

        // b stored transposed as [n, k]
        let mut b_t = vec![0.0; n * k];
        for p in 0..k {
            for j in 0..n {
                b_t[j * k + p] = b[p * n + j];
            }
        }
        let mut c_nt = vec![0.0; m * n];
        matmul_nt_acc(&a, &b_t, m, k, n, &mut c_nt);

        for i in 0..m * n {
            assert!((c_nn[i] - c_tn[i]).abs() < 1e-12);
            assert!((c_nn[i] - c_nt[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn large_matmul_parallel_is_bit_exact_vs_rows() {
        // Large enough to take the parallel path; compare against a per-row
        // sequential computation with the same inner order.
        let m = 64;
        let k = 64;
        let n = 64;
        let a: Vec<f32> = (0..m * k).map(|i| ((i * 2654435761usize) as f32).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|i| ((i * 40503usize) as f32).cos()).collect();
        let mut par = vec![0.0f32; m * n];
        matmul_acc(&a, &b, m, k, n, &mut par);
        let mut seq = vec![0.0f32; m * n];
        for i in 0..m {
            for p in 0..k {
                let a_ip = a[i * k + p];
                for j in 0..n {
                    seq[i * n + j] += a_ip * b[p * n + j];
                }
            }
        }
        assert_eq!(par, seq);
    }

    #[test]
    fn im2col_col2im_1d_roundtrip_counts() {
        // col2im of an all-ones gradient counts how many windows touch each
        // input position.
        let c_in = 2;
        let len = 7;
        let (k, s, p) = (3, 1, 1);
        let l_out = conv1d_output_len(len, k, s, p);
        let d_cols = vec![1.0f64; c_in * k * l_out];
        let d_input = col2im_1d(&d_cols, c_in, len, k, s, p);
        // interior positions are covered k times, edges fewer.
        assert_eq!(d_input[0], 2.0);
        assert_eq!(d_input[1], 3.0);
        assert_eq!(d_input[3], 3.0);
        assert_eq!(d_input[len - 1], 2.0);
    }

    #[test]
    fn maxpool_constant_input_stays_constant() {
        let input = vec![2.5f32; 3 * 4 * 6];
        let (out, _, h_out, w_out) = maxpool2d(&input, 3, 4, 6, 2);
        assert_eq!((h_out, w_out), (2, 3));
        assert!(out.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn maxpool_clamps_degenerate_axes() {
        let input = vec![1.0f32, 5.0, 3.0, 4.0];
        let (out, argmax, h_out, w_out) = maxpool2d(&input, 1, 4, 1, 2);
        assert_eq!((h_out, w_out), (2, 1));
        assert_eq!(out, vec![5.0, 4.0]);
        assert_eq!(argmax, vec![1, 3]);
    }
}
