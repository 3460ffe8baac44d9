//! Seeded generators of random semi-hyperbolic inputs for the
//! verification suites.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::jet::{indices_of_degree, GermJet, MultiIndex};
use crate::spectral::{analyze_linear_part, check_quasi_absence, SpectralData};

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// A random primitive q-th root of unity.
pub fn random_primitive_root<R: Rng>(rng: &mut R, q: u32) -> Complex64 {
    let coprime: Vec<u32> = (1..=q).filter(|&h| gcd(h, q) == 1).collect();
    let h = coprime[rng.random_range(0..coprime.len())];
    Complex64::from_polar(1.0, std::f64::consts::TAU * f64::from(h) / f64::from(q))
}

/// Random diagonal spectrum: lambda_1 a primitive q-th root of unity, the
/// others with log-moduli drawn away from 0 so products stay off 1.
/// Redrawn until the quasi-absence check passes at the given degree.
pub fn random_spectrum<R: Rng>(
    rng: &mut R,
    n: usize,
    q: u32,
    resonance_degree: u32,
) -> SpectralData {
    loop {
        let mut eigenvalues = vec![random_primitive_root(rng, q)];
        for _ in 1..n {
            let log_mod: f64 =
                rng.random_range(0.25..1.1) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            eigenvalues.push(Complex64::from_polar(log_mod.exp(), theta));
        }
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                eigenvalues[i]
            } else {
                Complex64::default()
            }
        });
        let Ok(s) = analyze_linear_part(&a, 64, 1e-9, 0.05) else { continue };
        if check_quasi_absence(&s, resonance_degree, 1e-6).quasi_absent {
            return s;
        }
    }
}

/// Sparse random nonlinear terms across all components.
pub fn random_nonlinear_terms<R: Rng>(
    rng: &mut R,
    n: usize,
    trunc: u32,
    density: f64,
    amplitude: f64,
) -> Vec<(usize, MultiIndex, Complex64)> {
    let mut terms = Vec::new();
    for comp in 0..n {
        for d in 2..=trunc.min(4) {
            for p in indices_of_degree(n, d) {
                if rng.random_bool(density) {
                    let r = amplitude * rng.random_range(0.1..1.0);
                    let theta = rng.random_range(0.0..std::f64::consts::TAU);
                    terms.push((comp, p, Complex64::from_polar(r, theta)));
                }
            }
        }
    }
    terms
}

/// A random semi-hyperbolic germ passing the quasi-absence check, with its
/// spectral data.
pub fn random_semi_hyperbolic_germ<R: Rng>(
    rng: &mut R,
    n: usize,
    trunc: u32,
    q: u32,
) -> (GermJet, SpectralData) {
    let s = random_spectrum(rng, n, q, trunc);
    let terms = random_nonlinear_terms(rng, n, trunc, 0.4, 0.5);
    let f = GermJet::from_linear_and_terms(s.jordan_matrix(), trunc, &terms)
        .expect("random germ construction");
    (f, s)
}

/// A random germ that is case (i) by construction: a model germ with
/// linear first coordinate, conjugated by a random polynomial germ with
/// identity linear part.
pub fn random_case_i_germ<R: Rng>(
    rng: &mut R,
    n: usize,
    trunc: u32,
    q: u32,
) -> (GermJet, SpectralData) {
    let s = random_spectrum(rng, n, q, trunc);
    // model: first coordinate exactly linear, others free
    let model_terms: Vec<_> = random_nonlinear_terms(rng, n, trunc, 0.35, 0.4)
        .into_iter()
        .filter(|(comp, _, _)| *comp != 0)
        .collect();
    let model = GermJet::from_linear_and_terms(s.jordan_matrix(), trunc, &model_terms)
        .expect("model germ construction");
    let conj_terms = random_nonlinear_terms(rng, n, trunc, 0.3, 0.25);
    let h = GermJet::from_linear_and_terms(DMatrix::identity(n, n), trunc, &conj_terms)
        .expect("conjugator construction");
    let f = GermJet::conjugate(&h, &model).expect("conjugation");
    (f, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_spectra_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for q in [1u32, 2, 3, 4] {
            let s = random_spectrum(&mut rng, 3, q, 8);
            assert_eq!(s.q, q);
            assert_eq!(s.dimension(), 3);
        }
    }

    #[test]
    fn case_i_germs_normalize_to_linear_first_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (f, s) = random_case_i_germ(&mut rng, 2, 6, 3);
        let (normalized, _) = crate::normal_form::normalize_first_coordinate(&f, &s).unwrap();
        let lin = normalized.nonlinear_component(0).max_coeff_modulus();
        assert!(lin < 1e-9, "case-i germ kept nonlinear first coordinate: {lin}");
    }
}
