//! Raw f64 kernels shared by the forward ops and their backward rules.
//!
//! All matrices are flat row-major slices. The matmul kernels use an i-k-j
//! loop order so the inner loop walks both operands contiguously, and skip
//! zero multipliers, which pays off on sparse adjacency rows and padding.

/// C[m,n] = A[m,k] * B[k,n]
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    matmul_acc(&mut c, a, b, m, k, n);
    c
}

/// C[m,n] += A[m,k] * B[k,n]
pub fn matmul_acc(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, bj) in c_row.iter_mut().zip(b_row) {
                *cj += av * bj;
            }
        }
    }
}

/// C[m,k] += G[m,n] * B^T where B is [k,n] (i.e. C = G * B^T without
/// materializing the transpose).
pub fn matmul_nt_acc(c: &mut [f64], g: &[f64], b: &[f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        let c_row = &mut c[i * k..(i + 1) * k];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (gj, bj) in g_row.iter().zip(b_row) {
                s += gj * bj;
            }
            c_row[p] += s;
        }
    }
}

/// C[k,n] += A^T * G where A is [m,k] and G is [m,n].
pub fn matmul_tn_acc(c: &mut [f64], a: &[f64], g: &[f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cj, gj) in c_row.iter_mut().zip(g_row) {
                *cj += av * gj;
            }
        }
    }
}

pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}

/// Numerically stable row softmax of an [m,n] matrix.
pub fn row_softmax(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &a[i * n..(i + 1) * n];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let o = &mut out[i * n..(i + 1) * n];
        let mut sum = 0.0;
        for (oj, rj) in o.iter_mut().zip(row) {
            *oj = (rj - max).exp();
            sum += *oj;
        }
        for oj in o.iter_mut() {
            *oj /= sum;
        }
    }
    out
}

/// Row log-softmax via the log-sum-exp guard.
pub fn row_log_softmax(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &a[i * n..(i + 1) * n];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|r| (r - max).exp()).sum::<f64>().ln();
        for (oj, rj) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
            *oj = rj - lse;
        }
    }
    out
}
