//! Polynomial jet of the f-invariant center curve tangent to the z1-axis.
//!
//! The curve S = {(z1, u(z1))} is the formal surrogate for the cited
//! center-manifold existence theorem: all C^r center manifolds share this jet, and
//! the invariance residual is checkable at the truncation degree.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jet::{GermJet, MultiIndex, PolyJet};
use crate::spectral::SpectralData;

/// Relative singularity tolerance for the order-m linear systems.
const SOLVE_TOL: f64 = 1e-10;

/// The curve jet u = (u_2, ..., u_n): n-1 univariate jets in z1 with
/// u(0) = 0 and du_0 = 0 (no terms of degree below 2).
#[derive(Debug, Clone, PartialEq)]
pub struct CurveJet {
    components: Vec<PolyJet>,
    trunc_degree: u32,
}

impl CurveJet {
    pub fn components(&self) -> &[PolyJet] {
        &self.components
    }

    pub fn trunc_degree(&self) -> u32 {
        self.trunc_degree
    }

    /// The inner tuple (z1, u_2(z1), ..., u_n(z1)) used for substitution.
    pub fn graph_map(&self) -> Vec<PolyJet> {
        let mut inners = Vec::with_capacity(self.components.len() + 1);
        inners.push(PolyJet::variable(1, self.trunc_degree, 0));
        inners.extend(self.components.iter().cloned());
        inners
    }
}

/// Solve the invariance identity f_i(z1, u(z1)) = u_i(f_1(z1, u(z1))),
/// i = 2..n, order by order in z1.
///
/// At order m the unknown coefficient vector is hit by
/// (lambda_1^m I - A22), invertible because |lambda_1^m| = 1 while the
/// trailing eigenvalues stay off the unit circle.
pub fn center_jet(f: &GermJet, s: &SpectralData, trunc_degree: u32) -> Result<CurveJet> {
    let n = f.dimension();
    if n != s.dimension() {
        return Err(Error::DimensionMismatch { expected: s.dimension(), got: n });
    }
    let trunc = trunc_degree.min(f.trunc_degree());
    let m_tail = n - 1;
    let lambda1 = s.lambda1();

    if m_tail == 0 {
        return Ok(CurveJet { components: Vec::new(), trunc_degree: trunc });
    }

    // A22 includes the Jordan superdiagonal couplings.
    let a = f.linear_part();
    let a22 = DMatrix::<Complex64>::from_fn(m_tail, m_tail, |i, j| a[(i + 1, j + 1)]);

    let mut u = CurveJet {
        components: vec![PolyJet::zero(1, trunc); m_tail],
        trunc_degree: trunc,
    };

    for m in 2..=trunc {
        let residual = invariance_residual_jets(f, &u)?;
        let rhs = DVector::<Complex64>::from_fn(m_tail, |i, _| {
            residual[i].coeff(&MultiIndex::new(vec![m]))
        });
        let system = DMatrix::<Complex64>::identity(m_tail, m_tail) * lambda1.powu(m) - &a22;
        let scale = system.norm();
        let lu = system.lu();
        let delta = lu.solve(&rhs).ok_or(Error::NearSingularSystem {
            context: "center-curve order-m system",
            pivot: 0.0,
        })?;
        // partial-pivot LU succeeded; still guard the conditioning
        let min_pivot = (0..m_tail).map(|i| lu.u()[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if min_pivot < SOLVE_TOL * scale {
            return Err(Error::NearSingularSystem {
                context: "center-curve order-m system",
                pivot: min_pivot,
            });
        }
        for (i, comp) in u.components.iter_mut().enumerate() {
            let old = comp.coeff(&MultiIndex::new(vec![m]));
            comp.set_coeff(MultiIndex::new(vec![m]), old + delta[i]);
        }
    }
    Ok(u)
}

/// The residual jets f_i(z1, u(z1)) - u_i(f_1(z1, u(z1))) for i = 2..n.
pub fn invariance_residual_jets(f: &GermJet, u: &CurveJet) -> Result<Vec<PolyJet>> {
    let inners = u.graph_map();
    let pulled_first = f.component(0).substitute(&inners)?;
    let mut residuals = Vec::with_capacity(u.components.len());
    for (i, ui) in u.components.iter().enumerate() {
        let lhs = f.component(i + 1).substitute(&inners)?;
        let rhs = ui.substitute(std::slice::from_ref(&pulled_first))?;
        residuals.push(lhs.sub(&rhs)?);
    }
    Ok(residuals)
}

/// Largest residual coefficient modulus through the curve's degree.
pub fn invariance_residual(f: &GermJet, u: &CurveJet) -> Result<f64> {
    Ok(invariance_residual_jets(f, u)?
        .iter()
        .map(PolyJet::max_coeff_modulus)
        .fold(0.0, f64::max))
}

/// The straightening germ h(z) = (z1, z2 - u_2(z1), ..., zn - u_n(z1));
/// conjugating f by it carries S to the z1-axis through the truncation
/// degree.
pub fn straightening_germ(u: &CurveJet, n: usize, trunc: u32) -> Result<GermJet> {
    let mut components = Vec::with_capacity(n);
    components.push(PolyJet::variable(n, trunc, 0));
    for (i, ui) in u.components.iter().enumerate() {
        // promote the univariate jet in z1 to n variables
        let mut promoted = PolyJet::zero(n, trunc);
        for (p, c) in ui.terms() {
            promoted.set_coeff(MultiIndex::pure_power(n, p.get(0)), *c);
        }
        components.push(PolyJet::variable(n, trunc, i + 1).sub(&promoted)?);
    }
    GermJet::from_components(components)
}

/// Conjugate f so the z1-axis becomes invariant through the truncation
/// degree (the "reduce to u = 0" step).
pub fn straighten(f: &GermJet, u: &CurveJet) -> Result<GermJet> {
    let h = straightening_germ(u, f.dimension(), f.trunc_degree())?;
    GermJet::conjugate(&h, f)
}

/// Largest modulus among axis-restricted coefficients of the trailing
/// coordinates: zero means the z1-axis is invariant to the jet degree.
pub fn axis_invariance_defect(f: &GermJet) -> f64 {
    f.restrict_to_first_axis()
        .iter()
        .skip(1)
        .map(PolyJet::max_coeff_modulus)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::analyze_linear_part;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag(values: &[Complex64]) -> DMatrix<Complex64> {
        let n = values.len();
        DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { Complex64::default() })
    }

    #[test]
    fn linear_germ_has_zero_center_curve() {
        let a = diag(&[c(-1.0, 0.0), c(2.0, 0.0)]);
        let s = analyze_linear_part(&a, 64, 1e-9, 0.05).unwrap();
        let f = GermJet::linear(a, 6).unwrap();
        let u = center_jet(&f, &s, 6).unwrap();
        assert!(u.components().iter().all(PolyJet::is_zero));
    }

    #[test]
    fn hand_case_order_two() {
        // f = (-z1, 2 z2 + z1^2): c lambda_1^2 = lambda_2 c + 1 gives c = -1
        let a = diag(&[c(-1.0, 0.0), c(2.0, 0.0)]);
        let s = analyze_linear_part(&a, 64, 1e-9, 0.05).unwrap();
        let f = GermJet::from_linear_and_terms(
            a,
            5,
            &[(1, MultiIndex::new(vec![2, 0]), c(1.0, 0.0))],
        )
        .unwrap();
        let u = center_jet(&f, &s, 5).unwrap();
        let c2 = u.components()[0].coeff(&MultiIndex::new(vec![2]));
        assert!((c2 - c(-1.0, 0.0)).norm() < 1e-13);
        assert!(invariance_residual(&f, &u).unwrap() < 1e-12);
    }

    #[test]
    fn tangency_no_low_order_terms() {
        let a = diag(&[c(0.0, 1.0), c(0.5, 0.0), c(3.0, 0.0)]);
        let s = analyze_linear_part(&a, 64, 1e-9, 0.05).unwrap();
        let f = GermJet::from_linear_and_terms(
            a,
            6,
            &[
                (1, MultiIndex::new(vec![2, 0, 0]), c(0.7, -0.2)),
                (2, MultiIndex::new(vec![3, 0, 0]), c(-0.4, 0.1)),
                (2, MultiIndex::new(vec![1, 1, 0]), c(0.2, 0.0)),
            ],
        )
        .unwrap();
        let u = center_jet(&f, &s, 6).unwrap();
        for comp in u.components() {
            for (p, _) in comp.terms() {
                assert!(p.degree() >= 2, "curve term of degree {} found", p.degree());
            }
        }
        assert!(invariance_residual(&f, &u).unwrap() < 1e-10);
    }

    #[test]
    fn jordan_coupled_tail_system() {
        // A22 carries a Jordan block; the order-m solves stay clean
        let mut a = diag(&[c(-1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0)]);
        a[(1, 2)] = c(1.0, 0.0);
        let s = analyze_linear_part(&a, 64, 1e-9, 0.05).unwrap();
        let f = GermJet::from_linear_and_terms(
            a,
            6,
            &[
                (1, MultiIndex::new(vec![2, 0, 0]), c(1.0, 0.0)),
                (2, MultiIndex::new(vec![3, 0, 0]), c(-0.5, 0.2)),
            ],
        )
        .unwrap();
        let u = center_jet(&f, &s, 6).unwrap();
        assert!(invariance_residual(&f, &u).unwrap() < 1e-11);
        assert!(!u.components()[0].is_zero());
    }

    #[test]
    fn straightening_makes_axis_invariant() {
        let a = diag(&[c(-1.0, 0.0), c(2.0, 0.0)]);
        let s = analyze_linear_part(&a, 64, 1e-9, 0.05).unwrap();
        let f = GermJet::from_linear_and_terms(
            a,
            6,
            &[
                (1, MultiIndex::new(vec![2, 0]), c(1.0, 0.0)),
                (1, MultiIndex::new(vec![3, 0]), c(-0.5, 0.3)),
            ],
        )
        .unwrap();
        assert!(axis_invariance_defect(&f) > 0.5);
        let u = center_jet(&f, &s, 6).unwrap();
        let straightened = straighten(&f, &u).unwrap();
        assert!(axis_invariance_defect(&straightened) < 1e-11);
    }
}
