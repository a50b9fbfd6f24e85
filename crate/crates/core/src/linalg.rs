//! Minimal dense linear algebra for small square matrices.
//!
//! The channel matrices here are N×N with N = 2 in practice, so this is a
//! plain row-major implementation with no blocking or pivoting tricks.

use crate::num::Real;

/// `c = a · b` for row-major `n×n` matrices.
pub fn mat_mul<F: Real>(n: usize, a: &[F], b: &[F]) -> Vec<F> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * n);
    let mut c = vec![F::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// `y = a · x` for a row-major `n×n` matrix.
pub fn mat_vec<F: Real>(n: usize, a: &[F], x: &[F]) -> Vec<F> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(x.len(), n);
    (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
        .collect()
}

/// Row-major transpose.
pub fn transpose<F: Real>(n: usize, a: &[F]) -> Vec<F> {
    let mut t = vec![F::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}

/// Identity matrix.
pub fn identity<F: Real>(n: usize) -> Vec<F> {
    let mut m = vec![F::zero(); n * n];
    for i in 0..n {
        m[i * n + i] = F::one();
    }
    m
}

/// Householder QR of a square matrix, with the sign convention that the
/// diagonal of `R` is nonnegative (which makes the factorization unique
/// for full-rank input). Returns row-major `(q, r)` with `q · r = a`.
pub fn qr<F: Real>(n: usize, a: &[F]) -> (Vec<F>, Vec<F>) {
    let mut r = a.to_vec();
    let mut q: Vec<F> = identity(n);
    let mut v = vec![F::zero(); n];

    for k in 0..n.saturating_sub(1) {
        let mut norm = F::zero();
        for i in k..n {
            norm = norm + r[i * n + k] * r[i * n + k];
        }
        norm = norm.sqrt();
        if norm == F::zero() {
            continue;
        }
        let alpha = if r[k * n + k] > F::zero() { -norm } else { norm };
        for i in k..n {
            v[i] = r[i * n + k];
        }
        v[k] -= alpha;
        let beta: F = (k..n).map(|i| v[i] * v[i]).sum();
        if beta == F::zero() {
            continue;
        }
        let two = F::of(2.0);
        // R <- H R
        for j in k..n {
            let dot: F = (k..n).map(|i| v[i] * r[i * n + j]).sum();
            let s = two * dot / beta;
            for i in k..n {
                r[i * n + j] = r[i * n + j] - s * v[i];
            }
        }
        // Q <- Q H
        for i in 0..n {
            let dot: F = (k..n).map(|j| q[i * n + j] * v[j]).sum();
            let s = two * dot / beta;
            for j in k..n {
                q[i * n + j] = q[i * n + j] - s * v[j];
            }
        }
    }

    // Fix signs so diag(R) >= 0.
    for i in 0..n {
        if r[i * n + i] < F::zero() {
            for j in 0..n {
                r[i * n + j] = -r[i * n + j];
                q[j * n + i] = -q[j * n + i];
            }
        }
        // Clean the strictly-lower triangle of rounding dust.
        for j in 0..i {
            r[i * n + j] = F::zero();
        }
    }
    (q, r)
}

/// Solve `a·x = b` for square `a` (row major) by Gaussian elimination
/// with partial pivoting. Returns `None` for a numerically singular
/// system. `a` and `b` are consumed as scratch.
pub fn solve<F: Real>(n: usize, mut a: Vec<F>, mut b: Vec<F>) -> Option<Vec<F>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < F::of(1e-300) {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let inv = F::one() / a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f != F::zero() {
                for j in col..n {
                    let v = a[col * n + j];
                    a[row * n + j] = a[row * n + j] - f * v;
                }
                b[row] = b[row] - f * b[col];
            }
        }
    }
    let mut x = vec![F::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for j in row + 1..n {
            acc = acc - a[row * n + j] * x[j];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}
