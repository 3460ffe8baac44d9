//! Spectral analysis of the linear part: eigenvalue extraction, detection
//! of the root-of-unity order q, semi-hyperbolicity margins, quasi-absence
//! of resonances, and small-denominator evaluation.

mod schur;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use schur::{diagonalize, schur};

use crate::error::{Error, Result};
use crate::jet::{indices_of_degree, MultiIndex};

pub const DEFAULT_Q_MAX: u32 = 64;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MODULI_MARGIN: f64 = 0.05;

/// Spectral data of a validated Jordan-form linear part.
///
/// The eigenvalues appear in matrix order with lambda_1 first; lambda_1 is
/// a primitive q-th root of unity within `tol`, and every other eigenvalue
/// keeps modulus at least `moduli_margin` away from both 0 and 1. The
/// `superdiagonal` entries are the Jordan couplings rho_i in {0, 1} for
/// rows i = 2, ..., n-1 (1-based), which feed the elimination constants of
/// the normal-form sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub eigenvalues: Vec<Complex64>,
    pub q: u32,
    pub moduli_margin: f64,
    pub tol: f64,
    pub superdiagonal: Vec<u8>,
}

impl SpectralData {
    pub fn dimension(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda1(&self) -> Complex64 {
        self.eigenvalues[0]
    }

    /// Lambda^P = prod_i lambda_i^{p_i}.
    pub fn lambda_power(&self, index: &MultiIndex) -> Complex64 {
        index
            .exps()
            .iter()
            .enumerate()
            .fold(Complex64::new(1.0, 0.0), |acc, (i, &p)| acc * self.eigenvalues[i].powu(p))
    }

    /// Rebuild the Jordan matrix this data was read from.
    pub fn jordan_matrix(&self) -> DMatrix<Complex64> {
        let n = self.dimension();
        let mut a = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = self.eigenvalues[i];
        }
        for (offset, &rho) in self.superdiagonal.iter().enumerate() {
            let i = offset + 1; // rows 2..n-1, zero-based 1..n-2
            a[(i, i + 1)] = Complex64::new(f64::from(rho), 0.0);
        }
        a
    }
}

/// Resonance search outcome: `quasi_absent` means no multi-index
/// R = (r_2, ..., r_n) with 1 <= |R| <= searched_degree brings the product
/// lambda_2^{r_2} ... lambda_n^{r_n} within `tol` of 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceReport {
    pub quasi_absent: bool,
    pub witnesses: Vec<MultiIndex>,
    pub searched_degree: u32,
    pub tol: f64,
}

/// Read the spectrum off a Jordan-form matrix and locate the least q with
/// lambda_1^q = 1 (within `tol`), verifying semi-hyperbolicity with margin
/// `delta`.
pub fn analyze_linear_part(
    a: &DMatrix<Complex64>,
    q_max: u32,
    tol: f64,
    delta: f64,
) -> Result<SpectralData> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch { expected: n.max(1), got: a.ncols() });
    }
    let superdiagonal = validate_jordan(a, tol)?;
    let eigenvalues: Vec<Complex64> = (0..n).map(|i| a[(i, i)]).collect();

    let lambda1 = eigenvalues[0];
    if (lambda1.norm() - 1.0).abs() >= tol {
        return Err(Error::NotRootOfUnity { q_max, tol });
    }
    let mut q = None;
    let mut power = Complex64::new(1.0, 0.0);
    for candidate in 1..=q_max {
        power *= lambda1;
        if (power - Complex64::new(1.0, 0.0)).norm() < tol {
            q = Some(candidate);
            break;
        }
    }
    let q = q.ok_or(Error::NotRootOfUnity { q_max, tol })?;

    for (i, lambda) in eigenvalues.iter().enumerate().skip(1) {
        let m = lambda.norm();
        if m < delta || (m - 1.0).abs() < delta {
            return Err(Error::NotSemiHyperbolic { index: i + 1, modulus: m, margin: delta });
        }
    }
    Ok(SpectralData { eigenvalues, q, moduli_margin: delta, tol, superdiagonal })
}

/// Check that `a` is upper bidiagonal in Jordan form: zeros below the
/// diagonal and away from the superdiagonal, superdiagonal entries in
/// {0, 1}, couplings only between equal eigenvalues, and no coupling out
/// of the first row. Returns the rho_i vector (rows 2..n-1).
fn validate_jordan(a: &DMatrix<Complex64>, tol: f64) -> Result<Vec<u8>> {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..n {
            if j == i || j == i + 1 {
                continue;
            }
            if a[(i, j)].norm() > tol {
                return Err(Error::NotJordanForm {
                    reason: format!("entry ({}, {}) = {} is nonzero", i + 1, j + 1, a[(i, j)]),
                });
            }
        }
    }
    let mut superdiagonal = Vec::new();
    for i in 0..n.saturating_sub(1) {
        let entry = a[(i, i + 1)];
        let rho = if entry.norm() <= tol {
            0u8
        } else if (entry - Complex64::new(1.0, 0.0)).norm() <= tol {
            1u8
        } else {
            return Err(Error::NotJordanForm {
                reason: format!("superdiagonal entry ({}, {}) = {} is not 0 or 1", i + 1, i + 2, entry),
            });
        };
        if rho == 1 {
            if i == 0 {
                return Err(Error::NotJordanForm {
                    reason: "the leading eigenvalue block must be 1x1".into(),
                });
            }
            if (a[(i, i)] - a[(i + 1, i + 1)]).norm() > tol {
                return Err(Error::NotJordanForm {
                    reason: format!(
                        "rows {} and {} are coupled but carry different eigenvalues",
                        i + 1,
                        i + 2
                    ),
                });
            }
        }
        if i >= 1 && i + 1 < n {
            superdiagonal.push(rho);
        }
    }
    Ok(superdiagonal)
}

/// Exhaustive resonance search over 1 <= |R| <= degree_bound on the
/// hyperbolic eigenvalues (lambda_2, ..., lambda_n).
pub fn check_quasi_absence(s: &SpectralData, degree_bound: u32, tol: f64) -> ResonanceReport {
    let m = s.dimension() - 1;
    let mut witnesses = Vec::new();
    if m > 0 {
        for deg in 1..=degree_bound {
            for r in indices_of_degree(m, deg) {
                let mut prod = Complex64::new(1.0, 0.0);
                for (i, &e) in r.exps().iter().enumerate() {
                    prod *= s.eigenvalues[i + 1].powu(e);
                }
                if (prod - Complex64::new(1.0, 0.0)).norm() < tol {
                    witnesses.push(r);
                }
            }
        }
    }
    ResonanceReport { quasi_absent: witnesses.is_empty(), witnesses, searched_degree: degree_bound, tol }
}

/// The small denominator lambda_1 - Lambda^P, plus a flag marking a
/// forbidden near-resonance |lambda_1 - Lambda^P| < tol.
pub fn small_denominator(s: &SpectralData, index: &MultiIndex) -> (Complex64, bool) {
    let value = s.lambda1() - s.lambda_power(index);
    (value, value.norm() < s.tol)
}
