use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 80;

/// Complex Schur decomposition A = Q T Q^H with T upper triangular,
/// computed by Hessenberg reduction followed by shifted QR iteration.
///
/// Intended for the small matrices this crate works with (n <= 8 or so).
pub fn schur(a: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let (mut q, mut t) = hessenberg(a);
    let scale = t.norm().max(1.0);
    let tol = 1e-14 * scale;

    // Deflate from the bottom-right corner.
    let mut active = n;
    let mut sweeps = 0usize;
    while active > 1 {
        if t[(active - 1, active - 2)].norm() < tol {
            t[(active - 1, active - 2)] = Complex64::default();
            active -= 1;
            sweeps = 0;
            continue;
        }
        if sweeps >= MAX_SWEEPS_PER_EIGENVALUE {
            return Err(Error::EigenNotConverged { sweeps });
        }
        sweeps += 1;
        let shift = wilkinson_shift(&t, active);
        // Implicit single-shift QR step on the leading active block via
        // Givens rotations.
        for i in 0..active {
            t[(i, i)] -= shift;
        }
        let mut rotations = Vec::with_capacity(active - 1);
        for k in 0..active - 1 {
            let (c, s, r) = givens(t[(k, k)], t[(k + 1, k)]);
            apply_givens_left(&mut t, k, c, s, r);
            rotations.push((k, c, s));
        }
        for &(k, c, s) in &rotations {
            apply_givens_right(&mut t, k, c, s);
            apply_givens_right(&mut q, k, c, s);
        }
        for i in 0..active {
            t[(i, i)] += shift;
        }
        // Clean negligible subdiagonal fill-in.
        for k in 0..active - 1 {
            if t[(k + 1, k)].norm() < tol {
                t[(k + 1, k)] = Complex64::default();
            }
        }
    }
    // Zero the strictly-lower part (rounding residue).
    for i in 0..n {
        for j in 0..i {
            t[(i, j)] = Complex64::default();
        }
    }
    Ok((q, t))
}

/// Eigendecomposition of a matrix with well-separated eigenvalues:
/// A = S diag(lambda) S^{-1}, eigenvalues read off the Schur factor and
/// eigenvectors recovered by triangular back-substitution.
pub fn diagonalize(
    a: &DMatrix<Complex64>,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>, Vec<Complex64>)> {
    let (q, t) = schur(a)?;
    let n = t.nrows();
    let scale = t.norm().max(1.0);
    let lambdas: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    // Eigenvectors of T: for eigenvalue t_kk solve (T - t_kk I) y = 0 with
    // y_k = 1 and y_j = 0 for j > k.
    let mut y_mat = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        let mut y = DVector::<Complex64>::zeros(n);
        y[k] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = Complex64::default();
            for j in i + 1..=k {
                s += t[(i, j)] * y[j];
            }
            let denom = t[(i, i)] - t[(k, k)];
            if denom.norm() < 1e-12 * scale {
                return Err(Error::NearSingularSystem {
                    context: "eigenvector back-substitution (repeated eigenvalue?)",
                    pivot: denom.norm(),
                });
            }
            y[i] = -s / denom;
        }
        let norm = y.norm();
        y_mat.set_column(k, &y.map(|v| v / Complex64::new(norm, 0.0)));
    }
    let s = &q * y_mat;
    let s_inv = s
        .clone()
        .try_inverse()
        .ok_or(Error::NearSingularSystem { context: "eigenvector matrix inversion", pivot: 0.0 })?;
    Ok((s, s_inv, lambdas))
}

fn hessenberg(a: &DMatrix<Complex64>) -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let n = a.nrows();
    let mut h = a.clone();
    let mut q = DMatrix::<Complex64>::identity(n, n);
    for k in 0..n.saturating_sub(2) {
        let mut x = DVector::<Complex64>::zeros(n - k - 1);
        for i in k + 1..n {
            x[i - k - 1] = h[(i, k)];
        }
        let alpha = x.norm();
        if alpha < 1e-300 {
            continue;
        }
        let phase = if x[0].norm() > 0.0 { x[0] / x[0].norm() } else { Complex64::new(1.0, 0.0) };
        let mut v = x.clone();
        v[0] += phase * alpha;
        let vnorm = v.norm();
        if vnorm < 1e-300 {
            continue;
        }
        let v = v.map(|e| e / Complex64::new(vnorm, 0.0));
        // H <- P H P with P = I - 2 v v^H on the trailing block.
        for col in 0..n {
            let mut dot = Complex64::default();
            for i in k + 1..n {
                dot += v[i - k - 1].conj() * h[(i, col)];
            }
            for i in k + 1..n {
                let vi = v[i - k - 1];
                h[(i, col)] -= 2.0 * vi * dot;
            }
        }
        for row in 0..n {
            let mut dot = Complex64::default();
            for j in k + 1..n {
                dot += h[(row, j)] * v[j - k - 1];
            }
            for j in k + 1..n {
                h[(row, j)] -= 2.0 * dot * v[j - k - 1].conj();
            }
        }
        for row in 0..n {
            let mut dot = Complex64::default();
            for j in k + 1..n {
                dot += q[(row, j)] * v[j - k - 1];
            }
            for j in k + 1..n {
                q[(row, j)] -= 2.0 * dot * v[j - k - 1].conj();
            }
        }
    }
    (q, h)
}

fn wilkinson_shift(t: &DMatrix<Complex64>, active: usize) -> Complex64 {
    let m = active - 1;
    let a = t[(m - 1, m - 1)];
    let b = t[(m - 1, m)];
    let c = t[(m, m - 1)];
    let d = t[(m, m)];
    // Eigenvalue of the trailing 2x2 block closest to d.
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - 4.0 * det).sqrt();
    let l1 = (tr + disc) / 2.0;
    let l2 = (tr - disc) / 2.0;
    if (l1 - d).norm() < (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn givens(a: Complex64, b: Complex64) -> (Complex64, Complex64, Complex64) {
    let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if norm < 1e-300 {
        return (Complex64::new(1.0, 0.0), Complex64::default(), Complex64::default());
    }
    let c = a.conj() / norm;
    let s = b.conj() / norm;
    (c, s, Complex64::new(norm, 0.0))
}

fn apply_givens_left(t: &mut DMatrix<Complex64>, k: usize, c: Complex64, s: Complex64, r: Complex64) {
    let n = t.ncols();
    for j in 0..n {
        let x = t[(k, j)];
        let y = t[(k + 1, j)];
        t[(k, j)] = c * x + s * y;
        t[(k + 1, j)] = -s.conj() * x + c.conj() * y;
    }
    t[(k, k)] = r;
    t[(k + 1, k)] = Complex64::default();
}

fn apply_givens_right(m: &mut DMatrix<Complex64>, k: usize, c: Complex64, s: Complex64) {
    let n = m.nrows();
    for i in 0..n {
        let x = m[(i, k)];
        let y = m[(i, k + 1)];
        m[(i, k)] = x * c.conj() + y * s.conj();
        m[(i, k + 1)] = -x * s + y * c;
    }
}
