use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jet::index::MultiIndex;
use crate::jet::poly::{PolyJet, PRUNE_EPS};

/// Tolerance on |det A| below which a linear part is treated as singular.
const SINGULAR_TOL: f64 = 1e-12;

/// A truncated holomorphic germ f: (C^n, 0) -> (C^n, 0).
///
/// Invariants:
/// - every component is a `PolyJet` with `n_vars = n` and no constant term;
/// - the degree-1 coefficients of the components are the rows of
///   `linear_part`;
/// - `linear_part` is invertible.
#[derive(Debug, Clone, PartialEq)]
pub struct GermJet {
    components: Vec<PolyJet>,
    linear_part: DMatrix<Complex64>,
}

impl GermJet {
    /// Build a germ from full component jets. The linear part is read off
    /// the degree-1 coefficients.
    pub fn from_components(components: Vec<PolyJet>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidInput("a germ needs at least one component".into()));
        }
        for comp in &components {
            if comp.n_vars() != n {
                return Err(Error::DimensionMismatch { expected: n, got: comp.n_vars() });
            }
            let c0 = comp.coeff(&MultiIndex::zero(n)).norm();
            if c0 >= PRUNE_EPS {
                return Err(Error::NonzeroConstantTerm { modulus: c0 });
            }
        }
        let mut linear_part = DMatrix::<Complex64>::zeros(n, n);
        for (i, comp) in components.iter().enumerate() {
            for j in 0..n {
                linear_part[(i, j)] = comp.coeff(&MultiIndex::unit(n, j));
            }
        }
        let det = linear_part.determinant();
        if det.norm() < SINGULAR_TOL {
            return Err(Error::SingularLinearPart { det_abs: det.norm() });
        }
        Ok(Self { components, linear_part })
    }

    /// Build a germ as A z plus nonlinear terms given per component.
    pub fn from_linear_and_terms(
        linear_part: DMatrix<Complex64>,
        trunc_degree: u32,
        nonlinear: &[(usize, MultiIndex, Complex64)],
    ) -> Result<Self> {
        let n = linear_part.nrows();
        if linear_part.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: linear_part.ncols() });
        }
        let mut components = Vec::with_capacity(n);
        for i in 0..n {
            let mut comp = PolyJet::zero(n, trunc_degree);
            for j in 0..n {
                comp.set_coeff(MultiIndex::unit(n, j), linear_part[(i, j)]);
            }
            components.push(comp);
        }
        for (i, index, coeff) in nonlinear {
            if *i >= n {
                return Err(Error::InvalidInput(format!("component {i} out of range")));
            }
            if index.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: index.len() });
            }
            if index.degree() < 2 {
                return Err(Error::InvalidInput(format!(
                    "nonlinear term {index} has degree < 2"
                )));
            }
            let old = components[*i].coeff(index);
            components[*i].set_coeff(index.clone(), old + coeff);
        }
        Self::from_components(components)
    }

    pub fn identity(n: usize, trunc_degree: u32) -> Self {
        Self::linear(DMatrix::identity(n, n), trunc_degree).expect("identity is invertible")
    }

    pub fn linear(matrix: DMatrix<Complex64>, trunc_degree: u32) -> Result<Self> {
        Self::from_linear_and_terms(matrix, trunc_degree, &[])
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn trunc_degree(&self) -> u32 {
        self.components[0].trunc_degree()
    }

    pub fn component(&self, i: usize) -> &PolyJet {
        &self.components[i]
    }

    pub fn components(&self) -> &[PolyJet] {
        &self.components
    }

    pub fn linear_part(&self) -> &DMatrix<Complex64> {
        &self.linear_part
    }

    /// Replace one component jet, keeping the linear part in sync.
    pub fn with_component(&self, i: usize, comp: PolyJet) -> Result<Self> {
        let mut components = self.components.clone();
        components[i] = comp;
        Self::from_components(components)
    }

    /// The nonlinear part of component i (degree >= 2 terms only).
    pub fn nonlinear_component(&self, i: usize) -> PolyJet {
        let n = self.dimension();
        let mut out = PolyJet::zero(n, self.trunc_degree());
        for (p, c) in self.components[i].terms() {
            if p.degree() >= 2 {
                out.set_coeff(p.clone(), *c);
            }
        }
        out
    }

    /// Compose a scalar jet with this germ: outer(f(z)).
    pub fn compose_poly(&self, outer: &PolyJet) -> Result<PolyJet> {
        outer.substitute(&self.components)
    }

    /// Germ composition self(other(z)), truncated to the common degree.
    pub fn compose(&self, other: &GermJet) -> Result<GermJet> {
        if self.dimension() != other.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: other.dimension(),
            });
        }
        let components = self
            .components
            .iter()
            .map(|comp| comp.substitute(&other.components))
            .collect::<Result<Vec<_>>>()?;
        GermJet::from_components(components)
    }

    /// q-fold composition f^q.
    pub fn iterate(&self, q: u32) -> Result<GermJet> {
        let mut out = GermJet::identity(self.dimension(), self.trunc_degree());
        for _ in 0..q {
            out = self.compose(&out)?;
        }
        Ok(out)
    }

    /// The formal inverse germ, accurate through the truncation degree.
    ///
    /// Iterates g_inv <- A^{-1} (id - phi(g_inv)); each pass fixes one more
    /// degree because phi has valuation 2.
    pub fn invert(&self) -> Result<GermJet> {
        let n = self.dimension();
        let trunc = self.trunc_degree();
        let a_inv = self
            .linear_part
            .clone()
            .try_inverse()
            .ok_or(Error::SingularLinearPart { det_abs: 0.0 })?;
        let nonlinear: Vec<PolyJet> = (0..n).map(|i| self.nonlinear_component(i)).collect();
        let mut inv = GermJet::linear(a_inv.clone(), trunc)?;
        for _ in 1..trunc {
            let mut next = Vec::with_capacity(n);
            for i in 0..n {
                // row i of A^{-1} (z - phi(inv(z)))
                let mut acc = PolyJet::zero(n, trunc);
                for j in 0..n {
                    let phi_j = nonlinear[j].substitute(inv.components())?;
                    let zj = PolyJet::variable(n, trunc, j);
                    acc = acc.add(&zj.sub(&phi_j)?.scale(a_inv[(i, j)]))?;
                }
                next.push(acc);
            }
            let candidate = GermJet::from_components(next)?;
            if candidate == inv {
                break;
            }
            inv = candidate;
        }
        Ok(inv)
    }

    /// Conjugation h . f . h^{-1}, truncated to the common degree.
    pub fn conjugate(h: &GermJet, f: &GermJet) -> Result<GermJet> {
        let h_inv = h.invert()?;
        h.compose(&f.compose(&h_inv)?)
    }

    pub fn evaluate(&self, z: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|comp| comp.evaluate(z)).collect()
    }

    /// Maximum coefficient modulus of self - other, componentwise.
    pub fn max_difference(&self, other: &GermJet) -> Result<f64> {
        if self.dimension() != other.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: other.dimension(),
            });
        }
        let mut max = 0.0f64;
        for (a, b) in self.components.iter().zip(other.components()) {
            max = max.max(a.sub(b)?.max_coeff_modulus());
        }
        Ok(max)
    }

    /// Restriction of every component to the z1-axis, as univariate jets.
    pub fn restrict_to_first_axis(&self) -> Vec<PolyJet> {
        self.components.iter().map(PolyJet::restrict_to_first_axis).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn germ_2d(trunc: u32, a: DMatrix<Complex64>, terms: &[(usize, Vec<u32>, Complex64)]) -> GermJet {
        let t: Vec<_> = terms
            .iter()
            .map(|(i, e, v)| (*i, MultiIndex::new(e.clone()), *v))
            .collect();
        GermJet::from_linear_and_terms(a, trunc, &t).unwrap()
    }

    #[test]
    fn identity_composition_is_projection() {
        let a = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let f = germ_2d(3, a, &[(0, vec![1, 1], c(1.0, 0.0))]);
        let z1 = PolyJet::variable(2, 3, 0);
        let composed = f.compose_poly(&z1).unwrap();
        assert_eq!(&composed, f.component(0));
    }

    #[test]
    fn compose_scaling_square() {
        // outer = z1^2, inner = (lambda z1): lambda^2 z1^2
        let lambda = c(0.0, 1.0);
        let inner = GermJet::linear(DMatrix::from_row_slice(1, 1, &[lambda]), 4).unwrap();
        let outer = PolyJet::variable(1, 4, 0).pow(2).unwrap();
        let composed = inner.compose_poly(&outer).unwrap();
        assert!((composed.coeff(&MultiIndex::new(vec![2])) - lambda * lambda).norm() < 1e-15);
    }

    #[test]
    fn invert_identity_and_hand_case() {
        let id = GermJet::identity(2, 3);
        assert_eq!(id.invert().unwrap(), id);

        // g = (z1 + z1^2, z2) at N = 3 inverts to (z1 - z1^2 + 2 z1^3, z2)
        let a = DMatrix::identity(2, 2);
        let g = germ_2d(3, a, &[(0, vec![2, 0], c(1.0, 0.0))]);
        let g_inv = g.invert().unwrap();
        let cf = |e: &[u32]| g_inv.component(0).coeff(&MultiIndex::new(e.to_vec()));
        assert!((cf(&[1, 0]) - c(1.0, 0.0)).norm() < 1e-14);
        assert!((cf(&[2, 0]) - c(-1.0, 0.0)).norm() < 1e-14);
        assert!((cf(&[3, 0]) - c(2.0, 0.0)).norm() < 1e-14);
        // composition residual
        let residual = g.compose(&g_inv).unwrap().max_difference(&GermJet::identity(2, 3)).unwrap();
        assert!(residual < 1e-13);
    }

    #[test]
    fn singular_linear_part_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            GermJet::linear(a, 3),
            Err(Error::SingularLinearPart { .. })
        ));
    }

    #[test]
    fn conjugate_by_identity_and_linear_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let f = germ_2d(4, a.clone(), &[(0, vec![1, 1], c(0.3, 0.1))]);
        let id = GermJet::identity(2, 4);
        assert!(GermJet::conjugate(&id, &f).unwrap().max_difference(&f).unwrap() < 1e-14);

        let d = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        let h = GermJet::linear(d.clone(), 4).unwrap();
        let lin = GermJet::linear(a.clone(), 4).unwrap();
        let conj = GermJet::conjugate(&h, &lin).unwrap();
        let expected = &d * &a * d.try_inverse().unwrap();
        assert!((conj.linear_part() - expected).norm() < 1e-14);
    }

    #[test]
    fn evaluate_hand_case() {
        // f = (-z1 + z1^2, 2 z2) at (0.1, 0.2) -> (-0.09, 0.4)
        let a = DMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]);
        let f = germ_2d(3, a, &[(0, vec![2, 0], c(1.0, 0.0))]);
        let v = f.evaluate(&[c(0.1, 0.0), c(0.2, 0.0)]);
        assert!((v[0] - c(-0.09, 0.0)).norm() < 1e-15);
        assert!((v[1] - c(0.4, 0.0)).norm() < 1e-15);
        assert_eq!(f.evaluate(&[c(0.0, 0.0), c(0.0, 0.0)]), vec![c(0.0, 0.0); 2]);
    }
}
