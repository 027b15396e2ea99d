//! Small dense row-major linear algebra, generic over [`Scalar`].

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

/// `y = A x` with `A` of shape `rows × cols`.
pub fn matvec<S: Scalar>(a: &[S], rows: usize, cols: usize, x: &[S]) -> Vec<S> {
    (0..rows)
        .map(|i| {
            let row = &a[i * cols..(i + 1) * cols];
            let mut acc = S::zero();
            for (r, xv) in row.iter().zip(x) {
                acc += *r * *xv;
            }
            acc
        })
        .collect()
}

/// `y = Aᵀ x` with `A` of shape `rows × cols`.
pub fn matvec_t<S: Scalar>(a: &[S], rows: usize, cols: usize, x: &[S]) -> Vec<S> {
    let mut y = vec![S::zero(); cols];
    for i in 0..rows {
        for j in 0..cols {
            y[j] += a[i * cols + j] * x[i];
        }
    }
    y
}

/// `C = A B`, `A: n × k`, `B: k × m`.
pub fn matmul<S: Scalar>(a: &[S], b: &[S], n: usize, k: usize, m: usize) -> Vec<S> {
    let mut c = vec![S::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = S::zero();
            for l in 0..k {
                acc += a[i * k + l] * b[l * m + j];
            }
            c[i * m + j] = acc;
        }
    }
    c
}

/// `C = Aᵀ B`, `A: k × n`, `B: k × m`.
pub fn matmul_tn<S: Scalar>(a: &[S], b: &[S], k: usize, n: usize, m: usize) -> Vec<S> {
    let mut c = vec![S::zero(); n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = S::zero();
            for l in 0..k {
                acc += a[l * n + i] * b[l * m + j];
            }
            c[i * m + j] = acc;
        }
    }
    c
}

pub fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Lower Cholesky factor of a symmetric `n × n` matrix, or `None` when the
/// matrix is not numerically positive definite.
pub fn cholesky<S: Scalar>(a: &[S], n: usize) -> Option<Vec<S>> {
    let mut l = vec![S::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - l[j * n + k] * l[j * n + k];
        }
        if !(d.value() > 1e-14) || !d.value().is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ X = B` for `B: n × m` given the Cholesky factor `L`.
pub fn cholesky_solve<S: Scalar>(l: &[S], n: usize, b: &[S], m: usize) -> Vec<S> {
    let mut x = b.to_vec();
    for c in 0..m {
        for i in 0..n {
            let mut s = x[i * m + c];
            for k in 0..i {
                s = s - l[i * n + k] * x[k * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i * m + c];
            for k in i + 1..n {
                s = s - l[k * n + i] * x[k * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
    }
    x
}

/// Inverse of a small general matrix by Gauss-Jordan with partial pivoting.
pub fn inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i * n + col]
                .abs()
                .partial_cmp(&m[j * n + col].abs())
                .unwrap_or(core::cmp::Ordering::Equal)
        })?;
        if m[pivot * n + col].abs() < 1e-300 {
            return None;
        }
        for k in 0..n {
            m.swap(col * n + k, pivot * n + k);
            inv.swap(col * n + k, pivot * n + k);
        }
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for k in 0..n {
                        m[r * n + k] -= f * m[col * n + k];
                        inv[r * n + k] -= f * inv[col * n + k];
                    }
                }
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let b = [1.0, 2.0, 3.0];
        let l = cholesky(&a, 3).unwrap();
        let x = cholesky_solve(&l, 3, &b, 1);
        let back = matvec(&a, 3, 3, &x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_none());
        assert!(cholesky(&[0.0], 1).is_none());
    }

    #[test]
    fn inverse_roundtrip() {
        let a = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let inv = inverse(&a, 3).unwrap();
        let id = matmul(&a, &inv, 3, 3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[i * 3 + j] - e).abs() < 1e-12);
            }
        }
    }
}
