//! The structured germ document: JSON input format of the CLI and the
//! round-trippable germ serialization used to persist witnesses.

use germlab_core::jet::{GermJet, MultiIndex};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Input document. Complex numbers are always [re, im] pairs; `terms`
/// lists the nonlinear monomials per (1-based) component; the linear part
/// must already be in Jordan form with the unit-modulus eigenvalue first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GermDocument {
    pub n: usize,
    #[serde(default = "default_trunc_degree")]
    pub trunc_degree: u32,
    pub linear_part: Vec<Vec<[f64; 2]>>,
    #[serde(default)]
    pub terms: Vec<TermEntry>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermEntry {
    pub component: usize,
    pub index: Vec<u32>,
    pub coeff: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Options {
    #[serde(default = "default_q_max")]
    pub q_max: u32,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_margin")]
    pub moduli_margin: f64,
    #[serde(default = "default_case_tol")]
    pub case_tol: f64,
    /// bump radius for the sector / bundle experiments; default derives
    /// from the blend geometry
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub seed: u64,
    /// resonance search bound; defaults to the truncation degree
    #[serde(default)]
    pub resonance_degree: Option<u32>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            q_max: default_q_max(),
            tol: default_tol(),
            moduli_margin: default_margin(),
            case_tol: default_case_tol(),
            eta: None,
            grid: default_grid(),
            seed: 0,
            resonance_degree: None,
        }
    }
}

fn default_trunc_degree() -> u32 {
    10
}
fn default_q_max() -> u32 {
    64
}
fn default_tol() -> f64 {
    1e-9
}
fn default_margin() -> f64 {
    0.05
}
fn default_case_tol() -> f64 {
    1e-8
}
fn default_grid() -> usize {
    200
}

impl GermDocument {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Format(format!("cannot read {}: {e}", path.display())))?;
        let doc: GermDocument = serde_json::from_str(&text)
            .map_err(|e| CliError::Format(format!("cannot parse {}: {e}", path.display())))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::Format("dimension n must be at least 1".into()));
        }
        if self.trunc_degree < 1 {
            return Err(CliError::Format("trunc_degree must be at least 1".into()));
        }
        if self.linear_part.len() != self.n
            || self.linear_part.iter().any(|row| row.len() != self.n)
        {
            return Err(CliError::Format(format!(
                "linear_part must be an {0} x {0} matrix of [re, im] pairs",
                self.n
            )));
        }
        for (pos, term) in self.terms.iter().enumerate() {
            if term.component == 0 || term.component > self.n {
                return Err(CliError::Format(format!(
                    "term {pos}: component {} out of range 1..={}",
                    term.component, self.n
                )));
            }
            if term.index.len() != self.n {
                return Err(CliError::Format(format!(
                    "term {pos}: index length {} != n = {}",
                    term.index.len(),
                    self.n
                )));
            }
            let degree: u32 = term.index.iter().sum();
            if degree < 2 || degree > self.trunc_degree {
                return Err(CliError::Format(format!(
                    "term {pos}: degree {degree} outside 2..={}",
                    self.trunc_degree
                )));
            }
        }
        Ok(())
    }

    pub fn linear_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            Complex64::new(self.linear_part[i][j][0], self.linear_part[i][j][1])
        })
    }

    pub fn to_germ(&self) -> Result<GermJet, CliError> {
        let terms: Vec<(usize, MultiIndex, Complex64)> = self
            .terms
            .iter()
            .map(|t| {
                (
                    t.component - 1,
                    MultiIndex::new(t.index.clone()),
                    Complex64::new(t.coeff[0], t.coeff[1]),
                )
            })
            .collect();
        GermJet::from_linear_and_terms(self.linear_matrix(), self.trunc_degree, &terms)
            .map_err(CliError::from)
    }
}

/// Round-trippable germ serialization: the linear part plus every
/// nonlinear term, reloadable as a `GermDocument` fragment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GermData {
    pub n: usize,
    pub trunc_degree: u32,
    pub linear_part: Vec<Vec<[f64; 2]>>,
    pub terms: Vec<TermEntry>,
}

impl GermData {
    pub fn from_germ(germ: &GermJet) -> Self {
        let n = germ.dimension();
        let a = germ.linear_part();
        let linear_part = (0..n)
            .map(|i| (0..n).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect())
            .collect();
        let mut terms = Vec::new();
        for i in 0..n {
            for (p, coeff) in germ.component(i).terms() {
                if p.degree() >= 2 {
                    terms.push(TermEntry {
                        component: i + 1,
                        index: p.exps().to_vec(),
                        coeff: [coeff.re, coeff.im],
                    });
                }
            }
        }
        Self { n, trunc_degree: germ.trunc_degree(), linear_part, terms }
    }

    pub fn to_germ(&self) -> Result<GermJet, CliError> {
        let a = DMatrix::from_fn(self.n, self.n, |i, j| {
            Complex64::new(self.linear_part[i][j][0], self.linear_part[i][j][1])
        });
        let terms: Vec<(usize, MultiIndex, Complex64)> = self
            .terms
            .iter()
            .map(|t| {
                (
                    t.component - 1,
                    MultiIndex::new(t.index.clone()),
                    Complex64::new(t.coeff[0], t.coeff[1]),
                )
            })
            .collect();
        GermJet::from_linear_and_terms(a, self.trunc_degree, &terms).map_err(CliError::from)
    }
}
