//! Brute-force oracles for the sparse jet arithmetic: a dense
//! full-enumeration convolution, a monomial-substitution composer built on
//! it, and property tests of the ring laws. The oracles never call the
//! sparse multiplication path they certify.

use germlab_core::jet::{indices_of_degree, GermJet, MultiIndex, PolyJet};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dense jet on the full exponent box [0, deg]^n, indexed mixed-radix.
#[derive(Clone)]
struct DenseJet {
    n: usize,
    deg: usize,
    data: Vec<Complex64>,
}

impl DenseJet {
    fn zeros(n: usize, deg: usize) -> Self {
        Self { n, deg, data: vec![Complex64::default(); (deg + 1).pow(n as u32)] }
    }

    fn from_sparse(jet: &PolyJet) -> Self {
        let mut out = Self::zeros(jet.n_vars(), jet.trunc_degree() as usize);
        for (p, coeff) in jet.terms() {
            let idx = out.flat_index(p.exps());
            out.data[idx] = *coeff;
        }
        out
    }

    fn flat_index(&self, exps: &[u32]) -> usize {
        exps.iter().fold(0usize, |acc, &e| acc * (self.deg + 1) + e as usize)
    }

    fn exps_of(&self, mut idx: usize) -> Vec<u32> {
        let mut exps = vec![0u32; self.n];
        for slot in (0..self.n).rev() {
            exps[slot] = (idx % (self.deg + 1)) as u32;
            idx /= self.deg + 1;
        }
        exps
    }

    /// Full O(terms^2) convolution over every index pair, truncated only
    /// at the end.
    fn mul(&self, other: &DenseJet) -> DenseJet {
        assert_eq!(self.n, other.n);
        let deg = self.deg.min(other.deg);
        let mut out = DenseJet::zeros(self.n, deg);
        for (ia, &a) in self.data.iter().enumerate() {
            if a == Complex64::default() {
                continue;
            }
            let ea = self.exps_of(ia);
            for (ib, &b) in other.data.iter().enumerate() {
                if b == Complex64::default() {
                    continue;
                }
                let eb = other.exps_of(ib);
                let sum: Vec<u32> = ea.iter().zip(&eb).map(|(x, y)| x + y).collect();
                if sum.iter().sum::<u32>() as usize <= deg {
                    let idx = out.flat_index(&sum);
                    out.data[idx] += a * b;
                }
            }
        }
        out
    }

    fn to_sparse(&self) -> PolyJet {
        let terms = self.data.iter().enumerate().filter(|(_, c)| **c != Complex64::default()).map(
            |(idx, coeff)| (MultiIndex::new(self.exps_of(idx)), *coeff),
        );
        PolyJet::from_terms(self.n, self.deg as u32, terms)
    }
}

fn random_sparse(rng: &mut StdRng, n: usize, deg: u32, terms: usize) -> PolyJet {
    let mut jet = PolyJet::zero(n, deg);
    for _ in 0..terms {
        let mut exps = vec![0u32; n];
        let d = rng.random_range(0..=deg);
        for _ in 0..d {
            exps[rng.random_range(0..n)] += 1;
        }
        jet.set_coeff(
            MultiIndex::new(exps),
            c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        );
    }
    jet
}

fn max_diff(a: &PolyJet, b: &PolyJet) -> f64 {
    a.sub(b).unwrap().max_coeff_modulus()
}

#[test]
fn sparse_mul_matches_dense_oracle() {
    let mut rng = StdRng::seed_from_u64(101);
    for n in 1..=3usize {
        for deg in 2..=6u32 {
            for _ in 0..8 {
                let a = random_sparse(&mut rng, n, deg, 7);
                let b = random_sparse(&mut rng, n, deg, 7);
                let sparse = a.mul(&b).unwrap();
                let dense = DenseJet::from_sparse(&a).mul(&DenseJet::from_sparse(&b)).to_sparse();
                assert!(
                    max_diff(&sparse, &dense) < 1e-12,
                    "n = {n}, deg = {deg}: sparse product disagrees with dense oracle"
                );
            }
        }
    }
}

/// Independent composition: substitute each monomial of the outer jet by
/// dense products of the inner components.
fn substitution_oracle(outer: &PolyJet, inner: &GermJet) -> PolyJet {
    let n = inner.dimension();
    let trunc = outer.trunc_degree().min(inner.trunc_degree());
    let dense_components: Vec<DenseJet> =
        (0..n).map(|i| DenseJet::from_sparse(inner.component(i))).collect();
    let mut acc = DenseJet::zeros(n, trunc as usize);
    for (p, coeff) in outer.terms() {
        let mut term = DenseJet::zeros(n, trunc as usize);
        term.data[0] = *coeff;
        for (i, &e) in p.exps().iter().enumerate() {
            for _ in 0..e {
                term = term.mul(&dense_components[i]);
            }
        }
        for (idx, v) in term.data.iter().enumerate() {
            acc.data[idx] += v;
        }
    }
    acc.to_sparse()
}

fn random_germ(rng: &mut StdRng, n: usize, deg: u32) -> GermJet {
    loop {
        let mut components = Vec::with_capacity(n);
        for _ in 0..n {
            let mut comp = random_sparse(rng, n, deg, 6);
            comp.set_coeff(MultiIndex::zero(n), Complex64::default());
            components.push(comp);
        }
        // overwrite the linear part with a well-conditioned matrix
        let matrix = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            if i == j {
                c(rng.random_range(0.5..2.0), rng.random_range(-0.5..0.5))
            } else {
                c(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
            }
        });
        for (i, comp) in components.iter_mut().enumerate() {
            for j in 0..n {
                comp.set_coeff(MultiIndex::unit(n, j), matrix[(i, j)]);
            }
        }
        if let Ok(germ) = GermJet::from_components(components) {
            return germ;
        }
    }
}

#[test]
fn compose_matches_substitution_oracle() {
    let mut rng = StdRng::seed_from_u64(202);
    for n in 2..=3usize {
        for _ in 0..6 {
            let outer = random_sparse(&mut rng, n, 5, 8);
            let inner = random_germ(&mut rng, n, 5);
            let fast = inner.compose_poly(&outer).unwrap();
            let oracle = substitution_oracle(&outer, &inner);
            assert!(max_diff(&fast, &oracle) < 1e-10, "n = {n}: compose disagrees with oracle");
        }
    }
}

#[test]
fn invert_composition_residual_random_germs() {
    let mut rng = StdRng::seed_from_u64(303);
    for _ in 0..10 {
        let g = random_germ(&mut rng, 2, 5);
        let g_inv = g.invert().unwrap();
        let id = GermJet::identity(2, 5);
        let right = g.compose(&g_inv).unwrap();
        let left = g_inv.compose(&g).unwrap();
        assert!(right.max_difference(&id).unwrap() < 1e-12);
        assert!(left.max_difference(&id).unwrap() < 1e-12);
    }
}

#[test]
fn conjugate_matches_unrolled_composition_order() {
    // h . f . h^{-1} computed with the opposite grouping
    let mut rng = StdRng::seed_from_u64(404);
    let trunc = 3;
    let h = GermJet::from_linear_and_terms(
        DMatrix::identity(2, 2),
        trunc,
        &[(0, MultiIndex::new(vec![1, 1]), c(1.0, 0.0))],
    )
    .unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
    let f = GermJet::from_linear_and_terms(a, trunc, &[(0, MultiIndex::new(vec![1, 1]), c(1.0, 0.0))])
        .unwrap();
    let direct = GermJet::conjugate(&h, &f).unwrap();
    let other_order = h.compose(&f).unwrap().compose(&h.invert().unwrap()).unwrap();
    assert!(max_diff(direct.component(0), other_order.component(0)) < 1e-12);
    assert!(max_diff(direct.component(1), other_order.component(1)) < 1e-12);

    for _ in 0..6 {
        let h = random_germ(&mut rng, 2, 5);
        let f = random_germ(&mut rng, 2, 5);
        let direct = GermJet::conjugate(&h, &f).unwrap();
        let other = h.compose(&f).unwrap().compose(&h.invert().unwrap()).unwrap();
        assert!(direct.max_difference(&other).unwrap() < 1e-9);
    }
}

#[test]
fn conjugate_inverse_round_trip() {
    // conjugate(h, conjugate(h^{-1}, f)) returns f
    let mut rng = StdRng::seed_from_u64(505);
    for _ in 0..6 {
        let h = random_germ(&mut rng, 2, 5);
        let f = random_germ(&mut rng, 2, 5);
        let inner = GermJet::conjugate(&h.invert().unwrap(), &f).unwrap();
        let back = GermJet::conjugate(&h, &inner).unwrap();
        assert!(back.max_difference(&f).unwrap() < 1e-10);
    }
}

#[test]
fn composition_agrees_with_pointwise_evaluation() {
    // evaluate(g . h, z) matches evaluate(g, evaluate(h, z)) up to the
    // truncation error at small |z|
    let mut rng = StdRng::seed_from_u64(707);
    for _ in 0..5 {
        let g = random_germ(&mut rng, 2, 6);
        let h = random_germ(&mut rng, 2, 6);
        let composed = g.compose(&h).unwrap();
        for t in 0..8 {
            let z = [
                Complex64::from_polar(0.01, 0.8 * t as f64),
                Complex64::from_polar(0.01, 1.9 * t as f64),
            ];
            let via_jet = composed.evaluate(&z);
            let pointwise = g.evaluate(&h.evaluate(&z));
            for i in 0..2 {
                // truncation at degree 6 leaves O(|z|^7) discrepancies
                assert!(
                    (via_jet[i] - pointwise[i]).norm() < 1e-11,
                    "jet composition drifts from pointwise evaluation"
                );
            }
        }
    }
}

#[test]
fn compose_associativity_with_germ_composition() {
    let mut rng = StdRng::seed_from_u64(606);
    for _ in 0..6 {
        let outer = random_sparse(&mut rng, 2, 5, 6);
        let g = random_germ(&mut rng, 2, 5);
        let h = random_germ(&mut rng, 2, 5);
        let lhs = h.compose_poly(&g.compose_poly(&outer).unwrap()).unwrap();
        let rhs = g.compose(&h).unwrap().compose_poly(&outer).unwrap();
        assert!(max_diff(&lhs, &rhs) < 1e-9);
    }
}

// proptest strategies for small sparse jets
fn arb_jet(n: usize, deg: u32) -> impl Strategy<Value = PolyJet> {
    let indices = {
        let mut all = Vec::new();
        for d in 0..=deg {
            all.extend(indices_of_degree(n, d));
        }
        all
    };
    let count = indices.len();
    prop::collection::vec((0..count, -2.0f64..2.0, -2.0f64..2.0), 0..8).prop_map(
        move |picks| {
            PolyJet::from_terms(
                n,
                deg,
                picks.into_iter().map(|(i, re, im)| (indices[i].clone(), c(re, im))),
            )
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mul_commutes(a in arb_jet(2, 5), b in arb_jet(2, 5)) {
        let ab = a.mul(&b).unwrap();
        let ba = b.mul(&a).unwrap();
        prop_assert!(max_diff(&ab, &ba) < 1e-12);
    }

    #[test]
    fn mul_associates(a in arb_jet(2, 4), b in arb_jet(2, 4), bc in arb_jet(2, 4)) {
        let lhs = a.mul(&b).unwrap().mul(&bc).unwrap();
        let rhs = a.mul(&b.mul(&bc).unwrap()).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn mul_distributes(a in arb_jet(2, 4), b in arb_jet(2, 4), d in arb_jet(2, 4)) {
        let lhs = a.mul(&b.add(&d).unwrap()).unwrap();
        let rhs = a.mul(&b).unwrap().add(&a.mul(&d).unwrap()).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10);
    }
}
