//! Row-major dense kernels used by the transformer.

/// `out = a (m x k) * b (k x n)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    out.fill(0.0);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += s * bv;
            }
        }
    }
}

/// `out += a^T (k x m) * dy (m x n)` where `a` is `m x k`.
pub(crate) fn matmul_at_b_acc(a: &[f64], dy: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(dy.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let dyrow = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &d) in orow.iter_mut().zip(dyrow) {
                *o += s * d;
            }
        }
    }
}

/// `out = dy (m x n) * w^T` where `w` is `k x n`; result is `m x k`.
pub(crate) fn matmul_a_bt(dy: &[f64], w: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(dy.len(), m * n);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let dyrow = &dy[i * n..(i + 1) * n];
        for p in 0..k {
            let wrow = &w[p * n..(p + 1) * n];
            out[i * k + p] = dot(dyrow, wrow);
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators give the vectorizer room; summation order is fixed
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for j in 0..4 {
            acc[j] += a[c * 4 + j] * b[c * 4 + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}
