//! Forward and backward kernels of the decoder blocks, on flat row-major
//! buffers.

use super::scalar::{gemm, Scalar, View};

pub const LN_EPS: f64 = 1e-5;

pub fn layernorm_forward<T: Scalar>(
    out: &mut [T],
    mean: &mut [T],
    rstd: &mut [T],
    inp: &[T],
    w: &[T],
    b: &[T],
    c: usize,
) {
    let eps = T::of(LN_EPS);
    let inv_c = T::of(1.0 / c as f64);
    for (r, (o, x)) in out.chunks_exact_mut(c).zip(inp.chunks_exact(c)).enumerate() {
        let m = x.iter().copied().sum::<T>() * inv_c;
        let v = x.iter().map(|&xi| (xi - m) * (xi - m)).sum::<T>() * inv_c;
        let s = T::one() / (v + eps).sqrt();
        for i in 0..c {
            o[i] = (x[i] - m) * s * w[i] + b[i];
        }
        mean[r] = m;
        rstd[r] = s;
    }
}

#[allow(clippy::too_many_arguments)]
pub fn layernorm_backward<T: Scalar>(
    dinp: &mut [T],
    dw: &mut [T],
    db: &mut [T],
    dout: &[T],
    inp: &[T],
    w: &[T],
    mean: &[T],
    rstd: &[T],
    c: usize,
) {
    let inv_c = T::of(1.0 / c as f64);
    let mut norm = vec![T::zero(); c];
    let mut dnorm = vec![T::zero(); c];
    for (r, ((di, d), x)) in dinp.chunks_exact_mut(c).zip(dout.chunks_exact(c)).zip(inp.chunks_exact(c)).enumerate() {
        let (m, s) = (mean[r], rstd[r]);
        let mut dnorm_mean = T::zero();
        let mut dnorm_norm_mean = T::zero();
        for i in 0..c {
            norm[i] = (x[i] - m) * s;
            dnorm[i] = w[i] * d[i];
            dnorm_mean += dnorm[i];
            dnorm_norm_mean += dnorm[i] * norm[i];
        }
        dnorm_mean *= inv_c;
        dnorm_norm_mean *= inv_c;
        for i in 0..c {
            db[i] += d[i];
            dw[i] += norm[i] * d[i];
            di[i] += (dnorm[i] - dnorm_mean - norm[i] * dnorm_norm_mean) * s;
        }
    }
}

/// `out[rows x oc] = inp[rows x c] * w[oc x c]^T + bias`.
pub fn matmul_forward<T: Scalar>(out: &mut [T], inp: &[T], w: &[T], bias: Option<&[T]>, rows: usize, c: usize, oc: usize) {
    gemm(inp, View::row_major(rows, c), w, View::transposed(oc, c), T::zero(), out, View::row_major(rows, oc));
    if let Some(b) = bias {
        for row in out.chunks_exact_mut(oc) {
            for (o, &bi) in row.iter_mut().zip(b) {
                *o += bi;
            }
        }
    }
}

/// Accumulates gradients of [`matmul_forward`] into `dinp`, `dw`, `dbias`.
#[allow(clippy::too_many_arguments)]
pub fn matmul_backward<T: Scalar>(
    dinp: &mut [T],
    dw: &mut [T],
    dbias: Option<&mut [T]>,
    dout: &[T],
    inp: &[T],
    w: &[T],
    rows: usize,
    c: usize,
    oc: usize,
) {
    gemm(dout, View::row_major(rows, oc), w, View::row_major(oc, c), T::one(), dinp, View::row_major(rows, c));
    gemm(dout, View::transposed(rows, oc), inp, View::row_major(rows, c), T::one(), dw, View::row_major(oc, c));
    if let Some(db) = dbias {
        for row in dout.chunks_exact(oc) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
    }
}

const GELU_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_CUBIC: f64 = 0.044_715;

// 0.5 x (1 + tanh(u)) is evaluated as x * sigmoid(2u), which avoids tanh.
pub fn gelu_forward<T: Scalar>(out: &mut [T], inp: &[T]) {
    let (s2, k) = (T::of(2.0 * GELU_SCALE), T::of(GELU_CUBIC));
    for (o, &x) in out.iter_mut().zip(inp) {
        *o = x / (T::one() + (-(s2 * (x + k * x * x * x))).exp());
    }
}

pub fn gelu_backward<T: Scalar>(dinp: &mut [T], inp: &[T], dout: &[T]) {
    let (s2, k) = (T::of(2.0 * GELU_SCALE), T::of(GELU_CUBIC));
    let three_k = T::of(3.0 * GELU_CUBIC);
    for ((di, &x), &d) in dinp.iter_mut().zip(inp).zip(dout) {
        let sig = T::one() / (T::one() + (-(s2 * (x + k * x * x * x))).exp());
        let local = sig + x * sig * (T::one() - sig) * s2 * (T::one() + three_k * x * x);
        *di += local * d;
    }
}

/// Causal multi-head attention over `qkv[n, t, 3c]`. Writes the head
/// outputs to `out[n, t, c]` and keeps the attention weights in
/// `att[n, nh, t, t]` (zero above the diagonal).
pub fn attention_forward<T: Scalar>(out: &mut [T], att: &mut [T], qkv: &[T], n: usize, t: usize, c: usize, nh: usize) {
    let hs = c / nh;
    let scale = T::of(1.0 / (hs as f64).sqrt());
    let c3 = 3 * c;
    let head = View { rows: t, cols: hs, rs: c3, cs: 1 };
    let head_t = View { rows: hs, cols: t, rs: 1, cs: c3 };
    for b in 0..n {
        let base = b * t * c3;
        for h in 0..nh {
            let a = &mut att[(b * nh + h) * t * t..][..t * t];
            gemm(&qkv[base + h * hs..], head, &qkv[base + c + h * hs..], head_t, T::zero(), a, View::row_major(t, t));
            for (ti, row) in a.chunks_exact_mut(t).enumerate() {
                let (live, masked) = row.split_at_mut(ti + 1);
                live.iter_mut().for_each(|x| *x *= scale);
                softmax_in_place(live);
                masked.iter_mut().for_each(|x| *x = T::zero());
            }
            let o = View { rows: t, cols: hs, rs: c, cs: 1 };
            gemm(a, View::row_major(t, t), &qkv[base + 2 * c + h * hs..], head, T::zero(), &mut out[b * t * c + h * hs..], o);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    dqkv: &mut [T],
    dout: &[T],
    qkv: &[T],
    att: &[T],
    n: usize,
    t: usize,
    c: usize,
    nh: usize,
) {
    let hs = c / nh;
    let scale = T::of(1.0 / (hs as f64).sqrt());
    let c3 = 3 * c;
    let head = View { rows: t, cols: hs, rs: c3, cs: 1 };
    let head_t = View { rows: hs, cols: t, rs: 1, cs: c3 };
    let out_view = View { rows: t, cols: hs, rs: c, cs: 1 };
    let square = View::row_major(t, t);
    let square_t = View::transposed(t, t);
    let mut datt = vec![T::zero(); t * t];
    for b in 0..n {
        let base = b * t * c3;
        for h in 0..nh {
            let a = &att[(b * nh + h) * t * t..][..t * t];
            let d = &dout[b * t * c + h * hs..];
            // d(att) = dout V^T and dV += att^T dout
            gemm(d, out_view, &qkv[base + 2 * c + h * hs..], head_t, T::zero(), &mut datt, square);
            gemm(a, square_t, d, out_view, T::one(), &mut dqkv[base + 2 * c + h * hs..], head);
            // softmax backward, folded with the score scale
            for (row, drow) in a.chunks_exact(t).zip(datt.chunks_exact_mut(t)) {
                let dot: T = row.iter().zip(drow.iter()).map(|(&p, &g)| p * g).sum();
                for (g, &p) in drow.iter_mut().zip(row) {
                    *g = p * (*g - dot) * scale;
                }
            }
            gemm(&datt, square, &qkv[base + c + h * hs..], head, T::one(), &mut dqkv[base + h * hs..], head);
            gemm(&datt, square_t, &qkv[base + h * hs..], head, T::one(), &mut dqkv[base + c + h * hs..], head);
        }
    }
}

/// In-place softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = T::one() / sum;
    row.iter_mut().for_each(|x| *x *= inv);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
        let eps = 1e-6;
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                p[i] += eps;
                let up = f(&p);
                p[i] -= 2.0 * eps;
                (up - f(&p)) / (2.0 * eps)
            })
            .collect()
    }

    // Straightforward per-row loops, kept as a reference for the blocked kernels.
    fn naive_attention_forward<T: Scalar>(out: &mut [T], att: &mut [T], qkv: &[T], n: usize, t: usize, c: usize, nh: usize) {
        let hs = c / nh;
        let scale = T::of(1.0 / (hs as f64).sqrt());
        let c3 = 3 * c;
        att.iter_mut().for_each(|a| *a = T::zero());
        let mut scores = vec![T::zero(); t];
        for b in 0..n {
            let base = b * t * c3;
            for h in 0..nh {
                for ti in 0..t {
                    let q = &qkv[base + ti * c3 + h * hs..][..hs];
                    let mut max = T::neg_infinity();
                    for (t2, s) in scores.iter_mut().enumerate().take(ti + 1) {
                        let k = &qkv[base + t2 * c3 + c + h * hs..][..hs];
                        let dot = q.iter().zip(k).map(|(&a, &b)| a * b).sum::<T>() * scale;
                        *s = dot;
                        if dot > max {
                            max = dot;
                        }
                    }
                    let row = &mut att[((b * nh + h) * t + ti) * t..][..t];
                    let mut sum = T::zero();
                    for t2 in 0..=ti {
                        let e = (scores[t2] - max).exp();
                        row[t2] = e;
                        sum += e;
                    }
                    let inv = T::one() / sum;
                    for a in row.iter_mut().take(ti + 1) {
                        *a *= inv;
                    }
                    let o = &mut out[(b * t + ti) * c + h * hs..][..hs];
                    o.iter_mut().for_each(|x| *x = T::zero());
                    for t2 in 0..=ti {
                        let a = row[t2];
                        let v = &qkv[base + t2 * c3 + 2 * c + h * hs..][..hs];
                        for (oi, &vi) in o.iter_mut().zip(v) {
                            *oi += a * vi;
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn naive_attention_backward<T: Scalar>(
        dqkv: &mut [T],
        dout: &[T],
        qkv: &[T],
        att: &[T],
        n: usize,
        t: usize,
        c: usize,
        nh: usize,
    ) {
        let hs = c / nh;
        let scale = T::of(1.0 / (hs as f64).sqrt());
        let c3 = 3 * c;
        let mut datt = vec![T::zero(); t];
        for b in 0..n {
            let base = b * t * c3;
            for h in 0..nh {
                for ti in 0..t {
                    let row = &att[((b * nh + h) * t + ti) * t..][..t];
                    let d = &dout[(b * t + ti) * c + h * hs..][..hs];
                    // d(att) and d(v)
                    for t2 in 0..=ti {
                        let v_off = base + t2 * c3 + 2 * c + h * hs;
                        let v = &qkv[v_off..][..hs];
                        datt[t2] = d.iter().zip(v).map(|(&x, &y)| x * y).sum();
                        let a = row[t2];
                        for (dv, &di) in dqkv[v_off..][..hs].iter_mut().zip(d) {
                            *dv += a * di;
                        }
                    }
                    // softmax backward
                    let dot: T = (0..=ti).map(|t2| row[t2] * datt[t2]).sum();
                    let q_off = base + ti * c3 + h * hs;
                    for t2 in 0..=ti {
                        let dpre = row[t2] * (datt[t2] - dot) * scale;
                        let k_off = base + t2 * c3 + c + h * hs;
                        for i in 0..hs {
                            let qi = qkv[q_off + i];
                            let ki = qkv[k_off + i];
                            dqkv[q_off + i] += dpre * ki;
                            dqkv[k_off + i] += dpre * qi;
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gelu_derivative_matches_finite_difference() {
        let xs = [-3.0, -0.7, 0.0, 0.4, 2.5];
        for &x in &xs {
            let f = |v: &[f64]| {
                let mut o = [0.0];
                gelu_forward(&mut o, v);
                o[0]
            };
            let num = numeric(f, &[x])[0];
            let mut d = [0.0];
            gelu_backward(&mut d, &[x], &[1.0]);
            assert!((d[0] - num).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn layernorm_backward_matches_finite_difference() {
        let c = 5;
        let x = [0.3, -1.2, 2.0, 0.7, -0.1, 1.1, 0.4, -0.6, 0.9, 0.0];
        let w = [1.0, 0.5, -0.3, 2.0, 0.8];
        let b = [0.1, 0.0, -0.2, 0.3, 0.05];
        let up = [0.7, -0.4, 0.2, 1.0, -1.3, 0.5, 0.6, -0.9, 0.3, 0.2];
        let f = |v: &[f64]| {
            let mut out = vec![0.0; 10];
            let (mut m, mut r) = (vec![0.0; 2], vec![0.0; 2]);
            layernorm_forward(&mut out, &mut m, &mut r, v, &w, &b, c);
            out.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>()
        };
        let num = numeric(f, &x);
        let mut out = vec![0.0; 10];
        let (mut m, mut r) = (vec![0.0; 2], vec![0.0; 2]);
        layernorm_forward(&mut out, &mut m, &mut r, &x, &w, &b, c);
        let mut dx = vec![0.0; 10];
        let (mut dw, mut db) = (vec![0.0; 5], vec![0.0; 5]);
        layernorm_backward(&mut dx, &mut dw, &mut db, &up, &x, &w, &m, &r, c);
        for (a, n) in dx.iter().zip(&num) {
            assert!((a - n).abs() < 1e-7, "{a} vs {n}");
        }
    }

    #[test]
    fn gelu_matches_tanh_form() {
        for i in -60..=60 {
            let x = i as f64 * 0.1;
            let want = 0.5 * x * (1.0 + (GELU_SCALE * (x + GELU_CUBIC * x * x * x)).tanh());
            let mut o = [0.0];
            gelu_forward(&mut o, &[x]);
            assert!((o[0] - want).abs() < 1e-14, "x = {x}");
        }
    }

    #[test]
    fn blocked_attention_matches_scalar_loops() {
        let (n, t, c, nh) = (2, 7, 12, 3);
        let qkv: Vec<f64> = (0..n * t * 3 * c).map(|i| ((i * 37 % 23) as f64 - 11.0) * 0.07).collect();
        let dout: Vec<f64> = (0..n * t * c).map(|i| ((i * 13 % 17) as f64 - 8.0) * 0.1).collect();
        let (mut o1, mut o2) = (vec![0.0; n * t * c], vec![0.0; n * t * c]);
        let (mut a1, mut a2) = (vec![0.0; n * nh * t * t], vec![0.0; n * nh * t * t]);
        attention_forward(&mut o1, &mut a1, &qkv, n, t, c, nh);
        naive_attention_forward(&mut o2, &mut a2, &qkv, n, t, c, nh);
        assert!(o1.iter().zip(&o2).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(a1.iter().zip(&a2).all(|(a, b)| (a - b).abs() < 1e-12));
        let (mut d1, mut d2) = (vec![0.0; qkv.len()], vec![0.0; qkv.len()]);
        attention_backward(&mut d1, &dout, &qkv, &a1, n, t, c, nh);
        naive_attention_backward(&mut d2, &dout, &qkv, &a2, n, t, c, nh);
        assert!(d1.iter().zip(&d2).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn attention_is_causal_and_rows_sum_to_one() {
        let (n, t, c, nh) = (1, 4, 4, 2);
        let qkv: Vec<f64> = (0..n * t * 3 * c).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let mut out = vec![0.0; n * t * c];
        let mut att = vec![0.0; n * nh * t * t];
        attention_forward(&mut out, &mut att, &qkv, n, t, c, nh);
        for h in 0..nh {
            for ti in 0..t {
                let row = &att[(h * t + ti) * t..][..t];
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[ti + 1..].iter().all(|&a| a == 0.0));
            }
        }
        // first position attends only to itself: output equals its value
        for i in 0..c {
            assert!((out[i] - qkv[2 * c + i]).abs() < 1e-12);
        }
    }
}
