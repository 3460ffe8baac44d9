//! Formal normalization of the first coordinate and the surrounding
//! assembly steps: quadratic shear, averaging linearizer, and the leading
//! rescale that puts a parabolic germ into model form.
//!
//! The solver eliminates, degree by degree, every monomial of the first
//! coordinate except the pure powers z1^{kq+1}. Within one degree the
//! coefficients are solved by back-substitution in decreasing
//! lexicographic order: substituting the Jordan matrix into a monomial
//! only sheds lexicographically smaller monomials, so the coupling is
//! triangular.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::jet::{indices_of_degree, GermJet, MultiIndex, PolyJet};
use crate::spectral::SpectralData;

/// Modulus threshold deciding whether a normal-form coefficient a_k counts
/// as nonvanishing.
pub const DEFAULT_CASE_TOL: f64 = 1e-8;

/// Coefficients below this threshold count as identically zero when
/// testing the shear genericity condition.
const GENERICITY_TOL: f64 = 1e-12;

/// Retry budget for the quadratic shear draw.
pub const DEFAULT_SHEAR_RETRIES: u32 = 8;

/// Radius of the disk the shear constants are drawn from.
pub const SHEAR_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum GermCase {
    /// First coordinate is lambda_1 z1 exactly through the truncation
    /// degree; no nonvanishing a_k was found.
    Linearizable,
    /// First nonvanishing coefficient a_k on z1^{kq+1}.
    Parabolic { k: u32, a_k: Complex64 },
}

/// Outcome of the classification pipeline, carrying the conjugator as a
/// checkable certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub case: GermCase,
    pub q: u32,
    pub trunc_degree: u32,
    pub conjugator: GermJet,
    pub normalized: GermJet,
}

impl Classification {
    pub fn is_parabolic(&self) -> bool {
        matches!(self.case, GermCase::Parabolic { .. })
    }
}

/// Eliminate all non-resonant monomials from the first coordinate.
///
/// Returns the normalized germ h . f . h^{-1} together with the composed
/// conjugator h = h^{(N)} . ... . h^{(2)}. Each step h^{(d)} = id + xi,
/// xi = (xi_1, 0, ..., 0) homogeneous of degree d, solves
///
///   -lambda_1 xi_1(z) + sum_{|P|=d} phi_P z^P + xi_1(A z) = psi z1^d,
///
/// where psi keeps the coefficient only when d = kq + 1. If q = 1 the
/// conjugator satisfies xi_1(z1, 0, ..., 0) = 0 identically.
pub fn normalize_first_coordinate(f: &GermJet, s: &SpectralData) -> Result<(GermJet, GermJet)> {
    let n = f.dimension();
    if n != s.dimension() {
        return Err(Error::DimensionMismatch { expected: s.dimension(), got: n });
    }
    let trunc = f.trunc_degree();
    let mut current = f.clone();
    let mut conjugator = GermJet::identity(n, trunc);

    for d in 2..=trunc {
        let xi = solve_degree(&current, s, d)?;
        if xi.is_zero() {
            continue;
        }
        let step = step_germ(n, trunc, &xi)?;
        current = GermJet::conjugate(&step, &current)?;
        conjugator = step.compose(&conjugator)?;
    }
    Ok((current, conjugator))
}

/// Solve the degree-d elimination condition; returns xi_1 (homogeneous of
/// degree d).
fn solve_degree(f: &GermJet, s: &SpectralData, d: u32) -> Result<PolyJet> {
    let n = f.dimension();
    let trunc = f.trunc_degree();
    let lambda1 = s.lambda1();
    let first = f.component(0);

    let mut indices = indices_of_degree(n, d);
    // decreasing lexicographic sweep; the top index (d, 0, ..., 0) comes
    // first after the reverse
    indices.reverse();

    let keep_resonant = (d - 1).is_multiple_of(s.q);
    let mut xi = PolyJet::zero(n, trunc);
    // lex-lower spill of the already-solved part of xi_1(A z)
    let mut carried = PolyJet::zero(n, trunc);

    for (pos, p) in indices.iter().enumerate() {
        let is_top = pos == 0;
        debug_assert_eq!(is_top, p.is_pure_first());
        let rhs = first.coeff(p) + carried.coeff(p);
        if is_top && keep_resonant {
            // z1^d stays in the normal form; nothing to eliminate
            continue;
        }
        let denom = lambda1 - s.lambda_power(p);
        if denom.norm() < s.tol {
            return Err(Error::ResonanceObstruction {
                index: p.clone(),
                denominator: denom.norm(),
            });
        }
        let coeff = rhs / denom;
        if coeff.norm() == 0.0 {
            continue;
        }
        xi.set_coeff(p.clone(), coeff);
        // expand the monomial under z -> A z and spill the lex-lower terms
        let expansion = jordan_monomial_expansion(s, p, trunc)?;
        let lead = s.lambda_power(p);
        for (q_idx, c) in expansion.terms() {
            if q_idx == p {
                debug_assert!((c - lead).norm() < 1e-10 * lead.norm().max(1.0));
                continue;
            }
            let old = carried.coeff(q_idx);
            carried.set_coeff(q_idx.clone(), old + coeff * c);
        }
    }
    Ok(xi)
}

/// The expansion of the degree-|P| monomial under z -> A z for the Jordan
/// matrix of `s`:
/// (lambda_1 z1)^{p1} (lambda_2 z2 + rho_2 z3)^{p2} ... (lambda_n zn)^{pn}.
/// Equals Lambda^P z^P plus lexicographically smaller terms of the same
/// degree.
fn jordan_monomial_expansion(s: &SpectralData, p: &MultiIndex, trunc: u32) -> Result<PolyJet> {
    let n = s.dimension();
    let mut out = PolyJet::constant(n, trunc, Complex64::new(1.0, 0.0));
    for (i, &e) in p.exps().iter().enumerate() {
        if e == 0 {
            continue;
        }
        let mut factor = PolyJet::variable(n, trunc, i).scale(s.eigenvalues[i]);
        // rows 2..n-1 (1-based) may couple to the next coordinate
        if i >= 1 && i + 1 < n && s.superdiagonal[i - 1] == 1 {
            factor = factor.add(&PolyJet::variable(n, trunc, i + 1))?;
        }
        out = out.mul(&factor.pow(e)?)?;
    }
    Ok(out)
}

fn step_germ(n: usize, trunc: u32, xi: &PolyJet) -> Result<GermJet> {
    let mut components = Vec::with_capacity(n);
    for i in 0..n {
        let zi = PolyJet::variable(n, trunc, i);
        components.push(if i == 0 { zi.add(xi)? } else { zi });
    }
    GermJet::from_components(components)
}

/// Scan the normalized first coordinate for the first nonvanishing
/// coefficient on z1^{kq+1}. When none is found through the truncation
/// degree the germ is reported linearizable, a statement valid only up to
/// that degree.
pub fn classify(
    normalized: &GermJet,
    conjugator: &GermJet,
    s: &SpectralData,
    tol: f64,
) -> Classification {
    let n = normalized.dimension();
    let trunc = normalized.trunc_degree();
    let first = normalized.component(0);
    let mut case = GermCase::Linearizable;
    let mut k = 1u32;
    while k * s.q < trunc {
        let coeff = first.coeff(&MultiIndex::pure_power(n, k * s.q + 1));
        if coeff.norm() >= tol {
            case = GermCase::Parabolic { k, a_k: coeff };
            break;
        }
        k += 1;
    }
    Classification {
        case,
        q: s.q,
        trunc_degree: trunc,
        conjugator: conjugator.clone(),
        normalized: normalized.clone(),
    }
}

/// Conjugate by the quadratic shear h(z) = (z1, z2 + e2 z1^2, ...) so that
/// no coordinate of f^q vanishes identically on the z1-axis.
///
/// The constants are drawn from a disk of radius [`SHEAR_RADIUS`]; the zero
/// draw is tried first so already-generic germs pass through unchanged.
pub fn quadratic_shear<R: Rng>(f: &GermJet, s: &SpectralData, rng: &mut R) -> Result<GermJet> {
    quadratic_shear_with_map(f, s, rng).map(|(sheared, _)| sheared)
}

/// Like [`quadratic_shear`], also returning the shear germ used, so
/// callers can compose it into a total conjugacy witness.
pub fn quadratic_shear_with_map<R: Rng>(
    f: &GermJet,
    s: &SpectralData,
    rng: &mut R,
) -> Result<(GermJet, GermJet)> {
    let n = f.dimension();
    let trunc = f.trunc_degree();
    for attempt in 0..=DEFAULT_SHEAR_RETRIES {
        let (candidate, shear) = if attempt == 0 {
            (f.clone(), GermJet::identity(n, trunc))
        } else {
            let mut terms = Vec::with_capacity(n.saturating_sub(1));
            for i in 1..n {
                let r = SHEAR_RADIUS * rng.random_range(0.0f64..1.0).sqrt();
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                terms.push((i, MultiIndex::pure_power(n, 2), Complex64::from_polar(r, theta)));
            }
            let shear = GermJet::from_linear_and_terms(DMatrix::identity(n, n), trunc, &terms)?;
            (GermJet::conjugate(&shear, f)?, shear)
        };
        if axis_generic(&candidate, s.q)? {
            return Ok((candidate, shear));
        }
    }
    let fq = f.iterate(s.q)?;
    let bad = fq
        .restrict_to_first_axis()
        .iter()
        .position(|axis| axis.max_coeff_modulus() < GENERICITY_TOL)
        .unwrap_or(0);
    Err(Error::DegenerateAxis { component: bad + 1, retries: DEFAULT_SHEAR_RETRIES })
}

/// True when every coordinate of f^q has a nonzero restriction to the
/// z1-axis through the truncation degree.
pub fn axis_generic(f: &GermJet, q: u32) -> Result<bool> {
    let fq = f.iterate(q)?;
    Ok(fq
        .restrict_to_first_axis()
        .iter()
        .all(|axis| axis.max_coeff_modulus() >= GENERICITY_TOL))
}

/// The averaging map h(z) = z + f(z)/lambda_1 + ... + f^{q-1}(z)/lambda_1^{q-1}.
///
/// Requires q > 1 and (f^q)_1 = z1 through the truncation degree. The
/// differential at 0 is triangular with diagonal eta_i = sum_j
/// (lambda_i/lambda_1)^j, all nonzero under semi-hyperbolicity; conjugating
/// by h makes the first coordinate exactly linear.
pub fn averaging_linearizer(f: &GermJet, s: &SpectralData, tol: f64) -> Result<GermJet> {
    if s.q <= 1 {
        return Err(Error::InvalidInput("averaging needs q > 1".into()));
    }
    let n = f.dimension();
    let trunc = f.trunc_degree();
    let lambda1 = s.lambda1();

    let fq = f.iterate(s.q)?;
    let residual = fq.component(0).sub(&PolyJet::variable(n, trunc, 0))?.max_coeff_modulus();
    if residual > tol {
        return Err(Error::AveragingPrecondition { residual });
    }

    let mut components: Vec<PolyJet> = (0..n).map(|i| PolyJet::variable(n, trunc, i)).collect();
    let mut iterate = f.clone();
    let mut lambda_pow = Complex64::new(1.0, 0.0);
    for _ in 1..s.q {
        lambda_pow *= lambda1;
        let weight = Complex64::new(1.0, 0.0) / lambda_pow;
        for (i, comp) in components.iter_mut().enumerate() {
            *comp = comp.add(&iterate.component(i).scale(weight))?;
        }
        iterate = f.compose(&iterate)?;
    }
    let h = GermJet::from_components(components)?;

    for (i, lambda) in s.eigenvalues.iter().enumerate() {
        let ratio = lambda / lambda1;
        let mut eta = Complex64::default();
        let mut pow = Complex64::new(1.0, 0.0);
        for _ in 0..s.q {
            eta += pow;
            pow *= ratio;
        }
        let observed = h.linear_part()[(i, i)];
        if (observed - eta).norm() > 1e-10 * eta.norm().max(1.0) || eta.norm() <= tol {
            return Err(Error::AveragingDegenerate { index: i + 1, modulus: observed.norm() });
        }
    }
    Ok(h)
}

/// Rescale z1 so the leading parabolic coefficient becomes lambda_1,
/// bringing case (ii) to the form lambda_1 z1 + lambda_1 z1^{kq+1} + ...
/// used by the sector construction. Returns the rescaled germ and the
/// scale factor c (a fixed kq-th root of a_k / lambda_1).
pub fn camacho_rescale(class: &Classification) -> Result<(GermJet, Complex64)> {
    let GermCase::Parabolic { k, a_k } = class.case else {
        return Err(Error::ExperimentInapplicable { experiment: "camacho rescale" });
    };
    rescale_leading(&class.normalized, class.q, k, a_k)
}

/// The rescale underlying [`camacho_rescale`], applicable to any germ
/// whose first coordinate carries a_k on z1^{kq+1}.
pub fn rescale_leading(
    germ: &GermJet,
    q: u32,
    k: u32,
    a_k: Complex64,
) -> Result<(GermJet, Complex64)> {
    let lambda1 = germ.linear_part()[(0, 0)];
    if a_k.norm() < 1e-13 {
        return Err(Error::InvalidInput("a_k below tolerance, cannot rescale".into()));
    }
    let n = germ.dimension();
    let trunc = germ.trunc_degree();
    let kq = k * q;
    let c = (a_k / lambda1).powf(1.0 / f64::from(kq));
    let mut d = DMatrix::<Complex64>::identity(n, n);
    d[(0, 0)] = c;
    let scaling = GermJet::linear(d, trunc)?;
    let rescaled = GermJet::conjugate(&scaling, germ)?;
    let new_ak = rescaled.component(0).coeff(&MultiIndex::pure_power(n, kq + 1));
    debug_assert!((new_ak - lambda1).norm() < 1e-9, "rescaled a_k = {new_ak}");
    Ok((rescaled, c))
}
