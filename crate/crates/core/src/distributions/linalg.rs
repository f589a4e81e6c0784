//! Small dense kernels on row-major square matrices stored in slices.
//!
//! The matrices handled here are tiny (p×p or M×M with M = (p² + 3p)/2), so a
//! general linear algebra dependency buys nothing on the hot path.

/// Lower Cholesky factor `g` with `a = g gᵀ`, or `None` if a pivot is not positive.
pub(crate) fn cholesky_lower(a: &[f64], n: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut g = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= g[j * n + k] * g[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        g[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = s / djj;
        }
    }
    Some(g)
}

/// Solves `g gᵀ x = b` in place given the lower factor `g`.
pub(crate) fn cholesky_solve(g: &[f64], n: usize, b: &mut [f64]) {
    // forward: g y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= g[i * n + k] * b[k];
        }
        b[i] = s / g[i * n + i];
    }
    // backward: gᵀ x = y
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= g[k * n + i] * b[k];
        }
        b[i] = s / g[i * n + i];
    }
}

/// Solves `u x = b` in place for upper-triangular `u` (backward substitution).
pub(crate) fn solve_upper(u: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= u[i * n + k] * b[k];
        }
        b[i] = s / u[i * n + i];
    }
}

/// Inverse of an upper-triangular matrix; the result is upper triangular.
pub(crate) fn upper_inverse(u: &[f64], n: usize) -> Vec<f64> {
    let mut inv = vec![0.0; n * n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        solve_upper(u, n, &mut col);
        for i in 0..=j {
            inv[i * n + j] = col[i];
        }
    }
    inv
}

/// `a aᵀ` for a square matrix.
pub(crate) fn gram_outer(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

/// `aᵀ a` for a square matrix.
pub(crate) fn gram_inner(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|k| a[k * n + i] * a[k * n + j]).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}
