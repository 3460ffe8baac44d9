use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jet::index::MultiIndex;

/// Coefficients with modulus below this threshold are dropped after every
/// operation to keep the sparse representation tight.
pub const PRUNE_EPS: f64 = 1e-14;

/// A truncated multivariate power series with sparse complex coefficients.
///
/// Invariants:
/// - every stored index has length `n_vars` and degree <= `trunc_degree`;
/// - no stored coefficient has modulus below [`PRUNE_EPS`];
/// - iteration follows graded-lexicographic order (degree, then lex).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyJet {
    coeffs: BTreeMap<MultiIndex, Complex64>,
    n_vars: usize,
    trunc_degree: u32,
}

impl PolyJet {
    pub fn zero(n_vars: usize, trunc_degree: u32) -> Self {
        Self { coeffs: BTreeMap::new(), n_vars, trunc_degree }
    }

    pub fn constant(n_vars: usize, trunc_degree: u32, value: Complex64) -> Self {
        let mut jet = Self::zero(n_vars, trunc_degree);
        jet.set_coeff(MultiIndex::zero(n_vars), value);
        jet
    }

    /// The plain variable z_i (zero-based).
    pub fn variable(n_vars: usize, trunc_degree: u32, i: usize) -> Self {
        let mut jet = Self::zero(n_vars, trunc_degree);
        jet.set_coeff(MultiIndex::unit(n_vars, i), Complex64::new(1.0, 0.0));
        jet
    }

    pub fn from_terms<I>(n_vars: usize, trunc_degree: u32, terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, Complex64)>,
    {
        let mut jet = Self::zero(n_vars, trunc_degree);
        for (index, value) in terms {
            assert_eq!(index.len(), n_vars, "index length must match n_vars");
            let entry = jet.coeff(&index) + value;
            jet.set_coeff(index, entry);
        }
        jet
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn trunc_degree(&self) -> u32 {
        self.trunc_degree
    }

    pub fn coeff(&self, index: &MultiIndex) -> Complex64 {
        self.coeffs.get(index).copied().unwrap_or_default()
    }

    /// Insert or overwrite one coefficient, applying truncation and pruning.
    pub fn set_coeff(&mut self, index: MultiIndex, value: Complex64) {
        debug_assert_eq!(index.len(), self.n_vars);
        if index.degree() > self.trunc_degree || value.norm() < PRUNE_EPS {
            self.coeffs.remove(&index);
        } else {
            self.coeffs.insert(index, value);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex64)> {
        self.coeffs.iter()
    }

    pub fn term_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest coefficient modulus, zero for the zero jet.
    pub fn max_coeff_modulus(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Re-truncate to a (possibly lower) degree.
    pub fn truncated(&self, trunc_degree: u32) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(p, _)| p.degree() <= trunc_degree)
            .map(|(p, c)| (p.clone(), *c))
            .collect();
        Self { coeffs, n_vars: self.n_vars, trunc_degree }
    }

    fn check_vars(&self, other: &Self) -> Result<()> {
        if self.n_vars != other.n_vars {
            return Err(Error::DimensionMismatch { expected: self.n_vars, got: other.n_vars });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let trunc = self.trunc_degree.min(other.trunc_degree);
        let mut out = self.truncated(trunc);
        for (p, c) in &other.coeffs {
            if p.degree() <= trunc {
                out.set_coeff(p.clone(), out.coeff(p) + c);
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        let coeffs = self.coeffs.iter().map(|(p, c)| (p.clone(), -c)).collect();
        Self { coeffs, n_vars: self.n_vars, trunc_degree: self.trunc_degree }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let mut out = Self::zero(self.n_vars, self.trunc_degree);
        for (p, c) in &self.coeffs {
            out.set_coeff(p.clone(), c * factor);
        }
        out
    }

    /// Sparse convolution product, truncated to the lower of the two degrees.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_vars(other)?;
        let trunc = self.trunc_degree.min(other.trunc_degree);
        let mut acc: BTreeMap<MultiIndex, Complex64> = BTreeMap::new();
        for (p, a) in &self.coeffs {
            if p.degree() > trunc {
                continue;
            }
            let budget = trunc - p.degree();
            for (q, b) in &other.coeffs {
                if q.degree() > budget {
                    // other iterates in graded order, so all later terms are too big
                    break;
                }
                let idx = p.add(q)?;
                *acc.entry(idx).or_default() += a * b;
            }
        }
        acc.retain(|_, c| c.norm() >= PRUNE_EPS);
        Ok(Self { coeffs: acc, n_vars: self.n_vars, trunc_degree: trunc })
    }

    /// Integer power by repeated multiplication.
    pub fn pow(&self, exp: u32) -> Result<Self> {
        let mut out = Self::constant(self.n_vars, self.trunc_degree, Complex64::new(1.0, 0.0));
        for _ in 0..exp {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Substitute `inners[i]` for the i-th variable. All inner jets must
    /// share a common variable count and fix the origin (zero constant
    /// term), so that monomials of degree > N cannot feed back below N.
    pub fn substitute(&self, inners: &[PolyJet]) -> Result<PolyJet> {
        if inners.len() != self.n_vars {
            return Err(Error::DimensionMismatch { expected: self.n_vars, got: inners.len() });
        }
        let inner_vars = inners.first().map_or(0, PolyJet::n_vars);
        let mut trunc = self.trunc_degree;
        for inner in inners {
            if inner.n_vars() != inner_vars {
                return Err(Error::DimensionMismatch {
                    expected: inner_vars,
                    got: inner.n_vars(),
                });
            }
            let c0 = inner.coeff(&MultiIndex::zero(inner_vars)).norm();
            if c0 >= PRUNE_EPS {
                return Err(Error::NonzeroConstantTerm { modulus: c0 });
            }
            trunc = trunc.min(inner.trunc_degree());
        }
        let one = PolyJet::constant(inner_vars, trunc, Complex64::new(1.0, 0.0));
        // Memoized powers of each inner component.
        let mut powers: Vec<Vec<PolyJet>> = inners.iter().map(|_| vec![one.clone()]).collect();
        let mut out = PolyJet::zero(inner_vars, trunc);
        for (p, c) in &self.coeffs {
            // An inner jet with zero constant term has valuation >= 1, so a
            // monomial of degree > trunc contributes nothing below trunc.
            if p.degree() > trunc {
                continue;
            }
            let mut term = one.scale(*c);
            for (i, &e) in p.exps().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                while powers[i].len() <= e as usize {
                    let next = powers[i].last().unwrap().mul(&inners[i])?;
                    powers[i].push(next);
                }
                term = term.mul(&powers[i][e as usize])?;
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// Evaluate the jet at a point by summing stored monomials, with the
    /// coordinate powers cached per variable.
    pub fn evaluate(&self, z: &[Complex64]) -> Complex64 {
        assert_eq!(z.len(), self.n_vars, "evaluation point dimension mismatch");
        let max_deg = self.trunc_degree as usize;
        let pows: Vec<Vec<Complex64>> = z
            .iter()
            .map(|&zi| {
                let mut v = Vec::with_capacity(max_deg + 1);
                v.push(Complex64::new(1.0, 0.0));
                for k in 0..max_deg {
                    let prev = v[k];
                    v.push(prev * zi);
                }
                v
            })
            .collect();
        let mut sum = Complex64::default();
        for (p, c) in &self.coeffs {
            let mut m = *c;
            for (i, &e) in p.exps().iter().enumerate() {
                if e > 0 {
                    m *= pows[i][e as usize];
                }
            }
            sum += m;
        }
        sum
    }

    /// Formal partial derivative with respect to variable j.
    pub fn partial_derivative(&self, j: usize) -> PolyJet {
        assert!(j < self.n_vars);
        let mut out = PolyJet::zero(self.n_vars, self.trunc_degree);
        for (p, c) in &self.coeffs {
            let e = p.get(j);
            if e == 0 {
                continue;
            }
            let mut exps = p.exps().to_vec();
            exps[j] = e - 1;
            out.set_coeff(MultiIndex::new(exps), c * f64::from(e));
        }
        out
    }

    /// Restrict to the z1-axis: substitute z_2 = ... = z_n = 0, producing a
    /// univariate jet in z_1.
    pub fn restrict_to_first_axis(&self) -> PolyJet {
        let mut out = PolyJet::zero(1, self.trunc_degree);
        for (p, c) in &self.coeffs {
            if p.is_pure_first() {
                out.set_coeff(MultiIndex::new(vec![p.get(0)]), *c);
            }
        }
        out
    }
}
