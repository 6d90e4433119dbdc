//! Forward math kernels.
//!
//! Both execution paths of the model — the plain inference path and the
//! recorded tape used for training — call these exact functions, so their
//! forward results are bit-identical by construction. Keep summation order
//! fixed (plain left-to-right loops) when touching anything here.

use crate::tensor::Tensor;

/// Guard added to the product of norms in cosine similarity so zero keys and
/// zero memory rows score 0 instead of dividing by zero.
pub const COSINE_EPS: f64 = 1e-8;

pub fn matvec(a: &Tensor, x: &Tensor) -> Tensor {
    debug_assert_eq!(a.cols, x.rows);
    let mut out = vec![0.0; a.rows];
    for (r, o) in out.iter_mut().enumerate() {
        let row = a.row(r);
        let mut acc = 0.0;
        for (w, v) in row.iter().zip(x.data.iter()) {
            acc += w * v;
        }
        *o = acc;
    }
    Tensor::from_vec(out)
}

/// `aᵀ x` without materializing the transpose.
pub fn matvec_t(a: &Tensor, x: &Tensor) -> Tensor {
    debug_assert_eq!(a.rows, x.rows);
    let mut out = vec![0.0; a.cols];
    for r in 0..a.rows {
        let w = x.data[r];
        let row = a.row(r);
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += w * v;
        }
    }
    Tensor::from_vec(out)
}

pub fn affine(w: &Tensor, x: &Tensor, b: &Tensor) -> Tensor {
    let mut y = matvec(w, x);
    for (o, bv) in y.data.iter_mut().zip(b.data.iter()) {
        *o += bv;
    }
    y
}

pub fn add(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data.iter().zip(b.data.iter()).map(|(x, y)| x + y).collect();
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data,
    }
}

pub fn mul(a: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.data.iter().zip(b.data.iter()).map(|(x, y)| x * y).collect();
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data,
    }
}

pub fn one_minus(a: &Tensor) -> Tensor {
    let data = a.data.iter().map(|x| 1.0 - x).collect();
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data,
    }
}

pub fn scale(v: &Tensor, s: f64) -> Tensor {
    let data = v.data.iter().map(|x| x * s).collect();
    Tensor {
        rows: v.rows,
        cols: v.cols,
        data,
    }
}

pub fn concat(parts: &[&Tensor]) -> Tensor {
    let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        data.extend_from_slice(&p.data);
    }
    Tensor::from_vec(data)
}

pub fn slice(v: &Tensor, start: usize, len: usize) -> Tensor {
    Tensor::from_vec(v.data[start..start + len].to_vec())
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &Tensor) -> Tensor {
    let data = v.data.iter().map(|&x| sigmoid_scalar(x)).collect();
    Tensor {
        rows: v.rows,
        cols: v.cols,
        data,
    }
}

pub fn tanh(v: &Tensor) -> Tensor {
    let data = v.data.iter().map(|x| x.tanh()).collect();
    Tensor {
        rows: v.rows,
        cols: v.cols,
        data,
    }
}

/// `oneplus(x) = 1 + log(1 + eˣ)`, the strength activation; range [1, ∞).
pub fn oneplus_scalar(x: f64) -> f64 {
    // Stable softplus.
    let sp = if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    };
    1.0 + sp
}

pub fn oneplus(v: &Tensor) -> Tensor {
    let data = v.data.iter().map(|&x| oneplus_scalar(x)).collect();
    Tensor {
        rows: v.rows,
        cols: v.cols,
        data,
    }
}

/// Numerically stable softmax of `x * k` for a fixed scale `k`.
pub fn softmax_scaled(x: &Tensor, k: f64) -> Tensor {
    let mut m = f64::NEG_INFINITY;
    for &v in &x.data {
        let s = v * k;
        if s > m {
            m = s;
        }
    }
    let mut out = Vec::with_capacity(x.len());
    let mut sum = 0.0;
    for &v in &x.data {
        let e = (v * k - m).exp();
        sum += e;
        out.push(e);
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Tensor {
        rows: x.rows,
        cols: x.cols,
        data: out,
    }
}

pub fn softmax(x: &Tensor) -> Tensor {
    softmax_scaled(x, 1.0)
}

/// Log-softmax (stable), used by the loss.
pub fn log_softmax(x: &Tensor) -> Tensor {
    let m = x.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &v in &x.data {
        sum += (v - m).exp();
    }
    let lse = m + sum.ln();
    let data = x.data.iter().map(|v| v - lse).collect();
    Tensor {
        rows: x.rows,
        cols: x.cols,
        data,
    }
}

/// Per-cell cosine similarity between `key` and each row of `m`.
/// Denominator is `‖row‖·‖key‖ + ε` so degenerate inputs score 0.
pub fn content_scores(m: &Tensor, key: &Tensor) -> Tensor {
    debug_assert_eq!(m.cols, key.rows);
    let key_norm = norm(&key.data);
    let mut out = Vec::with_capacity(m.rows);
    for r in 0..m.rows {
        let row = m.row(r);
        let mut dot = 0.0;
        for (a, b) in row.iter().zip(key.data.iter()) {
            dot += a * b;
        }
        let row_norm = norm(row);
        out.push(dot / (row_norm * key_norm + COSINE_EPS));
    }
    Tensor::from_vec(out)
}

pub fn norm(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in v {
        acc += x * x;
    }
    acc.sqrt()
}

/// Erase/add memory update: `M'[j] = M[j] ∘ (1 − w[j]·e) + w[j]·v`.
pub fn write_memory(m: &Tensor, w: &Tensor, erase: &Tensor, value: &Tensor) -> Tensor {
    debug_assert_eq!(m.rows, w.rows);
    debug_assert_eq!(m.cols, erase.rows);
    debug_assert_eq!(m.cols, value.rows);
    let mut out = m.clone();
    for j in 0..m.rows {
        let wj = w.data[j];
        let row = &mut out.data[j * m.cols..(j + 1) * m.cols];
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = *cell * (1.0 - wj * erase.data[c]) + wj * value.data[c];
        }
    }
    out
}

/// Retention vector `ψ[j] = Π_i (1 − f_i · w_r_i[j])`.
pub fn retention_sized(read_ws: &[&Tensor], free: &Tensor, n: usize) -> Tensor {
    debug_assert_eq!(read_ws.len(), free.len());
    let mut psi = vec![1.0; n];
    for (i, w) in read_ws.iter().enumerate() {
        let f = free.data[i];
        for (p, &wv) in psi.iter_mut().zip(w.data.iter()) {
            *p *= 1.0 - f * wv;
        }
    }
    Tensor::from_vec(psi)
}

pub fn retention(read_ws: &[&Tensor], free: &Tensor) -> Tensor {
    let n = read_ws.first().map_or(0, |w| w.rows);
    retention_sized(read_ws, free, n)
}

/// Usage update `u' = (u + w_w − u ∘ w_w) ∘ ψ`.
pub fn usage_update(u: &Tensor, w_w: &Tensor, psi: &Tensor) -> Tensor {
    debug_assert_eq!(u.shape(), w_w.shape());
    debug_assert_eq!(u.shape(), psi.shape());
    let data = u
        .data
        .iter()
        .zip(w_w.data.iter())
        .zip(psi.data.iter())
        .map(|((&uv, &wv), &pv)| (uv + wv - uv * wv) * pv)
        .collect();
    Tensor {
        rows: u.rows,
        cols: u.cols,
        data,
    }
}

/// Free-list order: cell indices sorted by ascending usage, ties by index.
pub fn free_list(u: &Tensor) -> Vec<usize> {
    let mut order: Vec<usize> = (0..u.rows).collect();
    order.sort_by(|&a, &b| {
        u.data[a]
            .partial_cmp(&u.data[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Sorted-free-list allocation weighting:
/// `a[φ_k] = (1 − u[φ_k]) · Π_{l<k} u[φ_l]` with φ the free list.
pub fn allocation_from_order(u: &Tensor, order: &[usize]) -> Tensor {
    let mut a = vec![0.0; u.rows];
    let mut prod = 1.0;
    for &j in order {
        a[j] = (1.0 - u.data[j]) * prod;
        prod *= u.data[j];
    }
    Tensor::from_vec(a)
}

/// Precedence update `pr' = (1 − Σ w_w) · pr + w_w`.
pub fn precedence_update(pr: &Tensor, w_w: &Tensor) -> Tensor {
    let s: f64 = w_w.data.iter().sum();
    let data = pr
        .data
        .iter()
        .zip(w_w.data.iter())
        .map(|(&p, &w)| (1.0 - s) * p + w)
        .collect();
    Tensor {
        rows: pr.rows,
        cols: pr.cols,
        data,
    }
}

/// Temporal link update:
/// `L'[i][j] = (1 − w_w[i] − w_w[j]) · L[i][j] + w_w[i] · pr[j]`, zero diagonal.
pub fn link_update(link: &Tensor, pr: &Tensor, w_w: &Tensor) -> Tensor {
    let n = link.rows;
    debug_assert_eq!(link.cols, n);
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        let wi = w_w.data[i];
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = (1.0 - wi - w_w.data[j]) * link.at(i, j) + wi * pr.data[j];
            *out.at_mut(i, j) = v;
        }
    }
    out
}

/// Negative log-likelihood of `target` under `softmax(logits)`.
pub fn nll(logits: &Tensor, target: usize) -> f64 {
    -log_softmax(logits).data[target]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5]);
        let s = softmax(&x);
        let sum: f64 = s.data.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_softmax_matches_manual() {
        // softmax((2/0.65, 0)) computed with scalar math.
        let x = Tensor::from_vec(vec![1.0, 0.0]);
        let s = softmax_scaled(&x, 2.0 / 0.65);
        let e = (2.0f64 / 0.65).exp();
        let expect = e / (e + 1.0);
        assert!((s.data[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn oneplus_at_zero() {
        assert!((oneplus_scalar(0.0) - (1.0 + 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn matvec_t_is_transpose_product() {
        let a = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]);
        let x = Tensor::from_vec(vec![0.2, 0.3, 0.5]);
        let y = matvec_t(&a, &x);
        assert!((y.data[0] - 1.2).abs() < 1e-15);
        assert!((y.data[1] - 1.3).abs() < 1e-15);
    }
}
