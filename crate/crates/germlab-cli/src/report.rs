//! Machine-readable and text reports of the classification and
//! verification pipelines. Reports contain no timestamps or other
//! nondeterministic state: the same document and seed reproduce them
//! byte for byte.

use serde::{Deserialize, Serialize};

use crate::document::GermData;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<[f64; 2]>,
    pub q: u32,
    pub moduli_margin: f64,
    pub tol: f64,
    pub quasi_absent: bool,
    pub resonance_search_degree: u32,
    pub resonance_witnesses: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseSummary {
    /// "case_ii" or "case_i_up_to_degree_N"
    pub tag: String,
    pub k: Option<u32>,
    pub a_k: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugatorDigest {
    pub coefficient_count: usize,
    pub max_modulus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AveragingSummary {
    pub eta_diagonal: Vec<[f64; 2]>,
    pub first_coordinate_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RescaleSummary {
    pub scale: [f64; 2],
    pub leading_coefficient_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    pub trunc_degree: u32,
    pub seed: u64,
    pub spectral: SpectralSummary,
    pub case: CaseSummary,
    pub conjugator_digest: ConjugatorDigest,
    /// witness residual |conjugate(conjugator, f) - normalized|
    pub witness_residual: f64,
    /// largest forbidden coefficient in the witnessed first coordinate
    pub structure_defect: f64,
    pub averaging: Option<AveragingSummary>,
    pub rescale: Option<RescaleSummary>,
    /// the composed conjugator (shear included): conjugating the input
    /// document's germ by it reproduces `normalized`
    pub conjugator: GermData,
    pub normalized: GermData,
}

impl ClassificationReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "germ classification (n = {}, truncation degree N = {}, seed {})\n",
            self.n, self.trunc_degree, self.seed
        ));
        out.push_str("eigenvalues:\n");
        for (i, ev) in self.spectral.eigenvalues.iter().enumerate() {
            out.push_str(&format!(
                "  lambda_{} = {:+.12} {:+.12}i  (|.| = {:.12})\n",
                i + 1,
                ev[0],
                ev[1],
                (ev[0] * ev[0] + ev[1] * ev[1]).sqrt()
            ));
        }
        out.push_str(&format!("root-of-unity order q = {}\n", self.spectral.q));
        out.push_str(&format!(
            "quasi-absence of resonances: {} (searched to degree {})\n",
            if self.spectral.quasi_absent { "holds" } else { "VIOLATED" },
            self.spectral.resonance_search_degree
        ));
        match (&self.case.k, &self.case.a_k) {
            (Some(k), Some(a)) => out.push_str(&format!(
                "case (ii): k = {k}, a_k = {:+.12} {:+.12}i\n  model: z1 -> lambda_1 z1 + z1^(kq+1), others linear\n",
                a[0], a[1]
            )),
            _ => out.push_str(&format!(
                "case (i) up to degree {}: first coordinate is lambda_1 z1\n  model: the linear part\n",
                self.trunc_degree
            )),
        }
        out.push_str(&format!(
            "conjugator: {} coefficients, max modulus {:.6e}\n",
            self.conjugator_digest.coefficient_count, self.conjugator_digest.max_modulus
        ));
        out.push_str(&format!("witness residual: {:.3e}\n", self.witness_residual));
        out.push_str(&format!("normal-form structure defect: {:.3e}\n", self.structure_defect));
        if let Some(avg) = &self.averaging {
            out.push_str(&format!(
                "averaging map: first-coordinate residual {:.3e}, eta diagonal {:?}\n",
                avg.first_coordinate_residual, avg.eta_diagonal
            ));
        }
        if let Some(res) = &self.rescale {
            out.push_str(&format!(
                "leading rescale: c = {:+.12} {:+.12}i, residual {:.3e}\n",
                res.scale[0], res.scale[1], res.leading_coefficient_residual
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub experiment: String,
    pub seed: u64,
    pub passed: bool,
    pub threshold: f64,
    pub measured: f64,
    pub details: Vec<(String, f64)>,
    pub csv_files: Vec<String>,
}

impl VerifyReport {
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "verification experiment: {}\nresult: {} (measured {:.6e} vs threshold {:.3e})\n",
            self.experiment,
            if self.passed { "PASS" } else { "FAIL" },
            self.measured,
            self.threshold
        );
        for (name, value) in &self.details {
            out.push_str(&format!("  {name}: {value:.6e}\n"));
        }
        if !self.csv_files.is_empty() {
            out.push_str(&format!("csv outputs: {}\n", self.csv_files.join(", ")));
        }
        out
    }
}
