//! Homotopy of an invertible linear map to an involution through
//! invertible maps.
//!
//! The path runs in two legs on a triangular representative T: first the
//! entries are scaled by t^{j-i}, shrinking T to its diagonal; then the
//! diagonal moves along straight segments to +-1, with -1 exactly for the
//! eigenvalues on the closed negative real axis. Eigenvalues off that
//! axis never cross the origin along their segment, so every intermediate
//! map stays invertible.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::schur;

/// Distance from the closed negative real axis below which an eigenvalue
/// is assigned the -1 involution entry.
pub const NEG_AXIS_TOL: f64 = 1e-12;

/// Sampled homotopy F_t from an invertible map to an involution.
pub struct InvolutionHomotopy {
    /// unitary basis change to the triangular representative (identity for
    /// triangular input)
    basis: DMatrix<Complex64>,
    triangular: DMatrix<Complex64>,
    signs: Vec<f64>,
}

impl InvolutionHomotopy {
    /// F_t in the triangular basis: F_0 = T, F_1 = a.
    pub fn eval_triangular(&self, t: f64) -> DMatrix<Complex64> {
        let n = self.triangular.nrows();
        if t <= 0.5 {
            // scale superdiagonals by s^{j-i}, s: 1 -> 0
            let s = 1.0 - 2.0 * t;
            DMatrix::from_fn(n, n, |i, j| {
                if j < i {
                    Complex64::default()
                } else {
                    self.triangular[(i, j)] * s.powi((j - i) as i32)
                }
            })
        } else {
            let s = 2.0 * t - 1.0;
            DMatrix::from_fn(n, n, |i, j| {
                if i != j {
                    Complex64::default()
                } else {
                    (1.0 - s) * self.triangular[(i, i)] + s * Complex64::new(self.signs[i], 0.0)
                }
            })
        }
    }

    /// F_t conjugated back to the original basis.
    pub fn eval(&self, t: f64) -> DMatrix<Complex64> {
        &self.basis * self.eval_triangular(t) * self.basis.adjoint()
    }

    /// The involution endpoint a (in the original basis); a^2 = id exactly.
    pub fn involution(&self) -> DMatrix<Complex64> {
        self.eval(1.0)
    }

    /// The +-1 diagonal of the involution in the triangular basis.
    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        (0..self.triangular.nrows()).map(|i| self.triangular[(i, i)]).collect()
    }
}

/// Build the homotopy and validate invertibility on a t-grid of
/// `t_samples` points. Also returns the sampled (t, |det F_t|) pairs.
pub fn involution_homotopy(
    lp: &DMatrix<Complex64>,
    t_samples: usize,
) -> Result<(InvolutionHomotopy, Vec<(f64, f64)>)> {
    let n = lp.nrows();
    if lp.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch { expected: n.max(1), got: lp.ncols() });
    }
    let scale = lp.norm().max(1.0);
    let lower_mass: f64 = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| lp[(i, j)].norm_sqr())
        .sum::<f64>()
        .sqrt();
    let (basis, triangular) = if lower_mass < 1e-13 * scale {
        (DMatrix::identity(n, n), lp.clone())
    } else {
        schur(lp)?
    };
    let det: Complex64 = (0..n).map(|i| triangular[(i, i)]).product();
    if det.norm() < 1e-12 * scale.powi(n as i32) {
        return Err(Error::SingularLinearPart { det_abs: det.norm() });
    }
    let signs: Vec<f64> = (0..n)
        .map(|i| {
            let lambda = triangular[(i, i)];
            let on_negative_axis = lambda.im.abs() <= NEG_AXIS_TOL && lambda.re <= NEG_AXIS_TOL;
            if on_negative_axis {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    let homotopy = InvolutionHomotopy { basis, triangular, signs };

    let tol = 1e-12 * scale.powi(n as i32);
    let mut samples = Vec::with_capacity(t_samples);
    for s in 0..t_samples {
        let t = s as f64 / (t_samples - 1).max(1) as f64;
        let ft = homotopy.eval_triangular(t);
        let det: Complex64 = (0..n).map(|i| ft[(i, i)]).product();
        if det.norm() < tol {
            return Err(Error::HomotopyDegenerate { t, det_abs: det.norm() });
        }
        samples.push((t, det.norm()));
    }
    Ok((homotopy, samples))
}
