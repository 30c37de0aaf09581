//! Shared numeric kernels.
//!
//! Both the tape's forward ops and the no-grad inference path call these, so
//! the two routes stay bit-identical: same loop order, same accumulation
//! order, no reassociation.

/// `out[i][j] = sum_k a[i][k] * b[k][j]` for row-major `a: m x k`, `b: k x n`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_into(&mut out, a, b, m, k, n);
    out
}

pub fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row.iter()) {
                *o += aik * bkj;
            }
        }
    }
}

/// `out = a^T` for row-major `a: rows x cols`.
pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Row-wise bias add: `out[i][j] = a[i][j] + bias[j]`.
pub fn add_rowwise(a: &[f64], bias: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    debug_assert_eq!(bias.len(), cols);
    let mut out = Vec::with_capacity(a.len());
    for i in 0..rows {
        for j in 0..cols {
            out.push(a[i * cols + j] + bias[j]);
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

pub fn map(a: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    a.iter().map(|&x| f(x)).collect()
}

/// Per-row division: `out[i][j] = a[i][j] / d[i]` for `d: rows x 1`.
pub fn div_per_row(a: &[f64], d: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(d.len(), rows);
    let mut out = Vec::with_capacity(a.len());
    for i in 0..rows {
        for j in 0..cols {
            out.push(a[i * cols + j] / d[i]);
        }
    }
    out
}

/// Numerically guarded row softmax (max-shifted).
pub fn softmax_rows(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    for i in 0..rows {
        let row = &a[i * cols..(i + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        let start = out.len();
        for &x in row {
            let e = (x - max).exp();
            out.push(e);
            sum += e;
        }
        for o in &mut out[start..] {
            *o /= sum;
        }
    }
    out
}

/// Row Euclidean norms: `rows x cols` -> `rows` values.
pub fn l2_norm_rows(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows);
    for i in 0..rows {
        let mut s = 0.0;
        for j in 0..cols {
            let v = a[i * cols + j];
            s += v * v;
        }
        out.push(s.sqrt());
    }
    out
}

pub fn sum(a: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in a {
        s += x;
    }
    s
}
