//! Seeded property runs of the normal-form pipeline: witness
//! certification by the composition oracle, structure of the normalized
//! first coordinate, idempotence, averaging exactness, and the
//! small-denominator safety net under quasi-absence.

use germlab_core::jet::{indices_of_degree, GermJet, PolyJet};
use germlab_core::normal_form::{
    averaging_linearizer, classify, normalize_first_coordinate, GermCase, DEFAULT_CASE_TOL,
};
use germlab_core::samples::{random_case_i_germ, random_semi_hyperbolic_germ, random_spectrum};
use germlab_core::spectral::{check_quasi_absence, small_denominator};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Check the normal-form structure on a germ recertified through the
/// composition oracle: every mixed monomial and every pure power with
/// exponent not congruent to 1 mod q stays below `tol`.
fn assert_normal_structure(first: &PolyJet, q: u32, tol: f64) {
    for (p, coeff) in first.terms() {
        if p.degree() < 2 {
            continue;
        }
        let allowed = p.is_pure_first() && (p.get(0) - 1) % q == 0;
        assert!(
            allowed || coeff.norm() < tol,
            "forbidden monomial {p} with coefficient modulus {}",
            coeff.norm()
        );
    }
}

#[test]
fn witness_certified_normal_forms_on_random_germs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut runs = 0;
    for &n in &[2usize, 3] {
        for &trunc in &[6u32, 8] {
            for &q in &[1u32, 2, 3, 4] {
                let (f, s) = random_semi_hyperbolic_germ(&mut rng, n, trunc, q);
                let (normalized, conjugator) = normalize_first_coordinate(&f, &s).unwrap();
                // the certificate: recompute through the composition oracle
                let witness = GermJet::conjugate(&conjugator, &f).unwrap();
                assert!(
                    witness.max_difference(&normalized).unwrap() < 1e-10,
                    "conjugator fails to witness the normal form (n={n}, N={trunc}, q={q})"
                );
                assert_normal_structure(witness.component(0), q, 1e-10);
                runs += 1;
            }
        }
    }
    assert_eq!(runs, 16);
}

#[test]
fn idempotence_preserves_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for &q in &[1u32, 2, 4] {
        let (f, s) = random_semi_hyperbolic_germ(&mut rng, 2, 8, q);
        let (normalized, conjugator) = normalize_first_coordinate(&f, &s).unwrap();
        let class = classify(&normalized, &conjugator, &s, DEFAULT_CASE_TOL);
        let (renormalized, second) = normalize_first_coordinate(&normalized, &s).unwrap();
        let nonlinear_mass: f64 = (0..2)
            .map(|i| second.nonlinear_component(i).max_coeff_modulus())
            .fold(0.0, f64::max);
        assert!(nonlinear_mass < 1e-10, "re-normalization produced a nontrivial conjugator");
        let reclass = classify(&renormalized, &second, &s, DEFAULT_CASE_TOL);
        match (&class.case, &reclass.case) {
            (GermCase::Linearizable, GermCase::Linearizable) => {}
            (GermCase::Parabolic { k: k1, a_k: a1 }, GermCase::Parabolic { k: k2, a_k: a2 }) => {
                assert_eq!(k1, k2);
                assert!((a1 - a2).norm() < 1e-9);
            }
            other => panic!("case changed under idempotence: {other:?}"),
        }
    }
}

#[test]
fn averaging_exactness_on_case_i_germs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for &q in &[2u32, 3, 4] {
        for _ in 0..3 {
            let (f, s) = random_case_i_germ(&mut rng, 2, 6, q);
            let (normalized, _) = normalize_first_coordinate(&f, &s).unwrap();
            let h = averaging_linearizer(&normalized, &s, 1e-9).unwrap();
            let conjugated = GermJet::conjugate(&h, &normalized).unwrap();
            let lambda1 = s.lambda1();
            let linear = PolyJet::variable(2, 6, 0).scale(lambda1);
            let residual =
                conjugated.component(0).sub(&linear).unwrap().max_coeff_modulus();
            assert!(residual < 1e-10, "averaging residual {residual} for q = {q}");
            // eta_i diagonal certificates
            for i in 0..2 {
                let ratio = s.eigenvalues[i] / lambda1;
                let mut eta = Complex64::default();
                let mut pow = Complex64::new(1.0, 0.0);
                for _ in 0..q {
                    eta += pow;
                    pow *= ratio;
                }
                assert!((h.linear_part()[(i, i)] - eta).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn small_denominators_never_flag_under_quasi_absence() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for &q in &[1u32, 2, 3, 4] {
        let trunc = 8u32;
        // regenerate until quasi-absence holds through degree q N, which
        // is the bound at which a flagged mixed denominator would have to
        // produce a witness
        let s = loop {
            let s = random_spectrum(&mut rng, 3, q, trunc);
            if check_quasi_absence(&s, q * trunc, 1e-6).quasi_absent {
                break s;
            }
        };
        for d in 2..=trunc {
            for p in indices_of_degree(3, d) {
                if p.is_pure_first() {
                    continue;
                }
                let (_, flagged) = small_denominator(&s, &p);
                assert!(!flagged, "near-resonance flagged at {p} despite quasi-absence");
            }
        }
    }
}

#[test]
fn conjugator_intertwines_actual_orbits() {
    // the formal conjugacy tracks the dynamics pointwise:
    // h(f^m(z)) stays close to g^m(h(z)) for small |z| and modest m
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (f, s) = random_semi_hyperbolic_germ(&mut rng, 2, 8, 2);
    let (normalized, conjugator) = normalize_first_coordinate(&f, &s).unwrap();
    for t in 0..6 {
        let mut zf = vec![
            Complex64::from_polar(0.02, 1.1 * t as f64),
            Complex64::from_polar(0.02, 2.3 * t as f64),
        ];
        let mut zg = conjugator.evaluate(&zf);
        for _ in 0..5 {
            zf = f.evaluate(&zf);
            zg = normalized.evaluate(&zg);
            let lifted = conjugator.evaluate(&zf);
            let gap = lifted
                .iter()
                .zip(&zg)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            assert!(gap < 1e-10, "orbit intertwining drifts by {gap}");
        }
    }
}

#[test]
fn normalize_rejects_dimension_mismatch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (f, _) = random_semi_hyperbolic_germ(&mut rng, 2, 6, 2);
    let s3 = random_spectrum(&mut rng, 3, 2, 6);
    assert!(normalize_first_coordinate(&f, &s3).is_err());
}
