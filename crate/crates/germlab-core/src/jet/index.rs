use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Exponent vector P = (p_1, ..., p_n) of a monomial z^P.
///
/// Stored indices are ordered graded-lexicographically: total degree first,
/// then plain lexicographic comparison of the exponents. The lexicographic
/// convention is P < P' when p_j < p'_j at the first position j where the
/// two vectors differ.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        Self { exps }
    }

    pub fn zero(n_vars: usize) -> Self {
        Self { exps: vec![0; n_vars] }
    }

    /// The index of the plain variable z_i (zero-based).
    pub fn unit(n_vars: usize, i: usize) -> Self {
        let mut exps = vec![0; n_vars];
        exps[i] = 1;
        Self { exps }
    }

    /// The pure power z_1^m.
    pub fn pure_power(n_vars: usize, m: u32) -> Self {
        let mut exps = vec![0; n_vars];
        exps[0] = m;
        Self { exps }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exps(&self) -> &[u32] {
        &self.exps
    }

    pub fn get(&self, i: usize) -> u32 {
        self.exps[i]
    }

    /// Total degree |P|.
    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    /// True when the monomial involves only z_1.
    pub fn is_pure_first(&self) -> bool {
        self.exps[1..].iter().all(|&p| p == 0)
    }

    /// Componentwise sum, used by monomial multiplication.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        Ok(Self { exps: self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect() })
    }

    /// Plain lexicographic comparison (no degree precedence), matching the
    /// convention used by the per-degree elimination sweep.
    pub fn lex_cmp(&self, other: &Self) -> Result<Ordering> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: other.len() });
        }
        for (a, b) in self.exps.iter().zip(&other.exps) {
            match a.cmp(b) {
                Ordering::Equal => continue,
                ord => return Ok(ord),
            }
        }
        Ok(Ordering::Equal)
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for MultiIndex {
    /// Graded-lexicographic storage order: degree first, then lex.
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.exps.cmp(&other.exps))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.exps.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// All multi-indices of length `n_vars` with total degree exactly `degree`,
/// in increasing lexicographic order.
pub fn indices_of_degree(n_vars: usize, degree: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut current = vec![0u32; n_vars];
    fill(&mut out, &mut current, 0, degree);
    out
}

fn fill(out: &mut Vec<MultiIndex>, current: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex::new(current.clone()));
        return;
    }
    for p in 0..=remaining {
        current[pos] = p;
        fill(out, current, pos + 1, remaining - p);
    }
    current[pos] = 0;
}
