//! Library surface of the germ classification CLI: document parsing, the
//! classify/verify pipelines, and report rendering. The binary in
//! `main.rs` is a thin argument-parsing wrapper.

pub mod document;
pub mod pipeline;
pub mod report;

use germlab_core::Error as CoreError;

/// Exit classes of the CLI: 0 ok, 2 format, 3 not semi-hyperbolic,
/// 4 resonance, 5 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Format(String),
    Spectral(CoreError),
    Resonance(CoreError),
    Numerical(CoreError),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Format(msg) | CliError::Io(msg) => write!(f, "{msg}"),
            CliError::Spectral(e) | CliError::Resonance(e) | CliError::Numerical(e) => {
                write!(f, "{e}")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        use CoreError::*;
        match e {
            DimensionMismatch { .. }
            | NotJordanForm { .. }
            | NonzeroConstantTerm { .. }
            | InvalidBlendGeometry { .. }
            | ExperimentInapplicable { .. }
            | InvalidInput(_) => CliError::Format(e.to_string()),
            NotRootOfUnity { .. } | NotSemiHyperbolic { .. } => CliError::Spectral(e),
            QuasiAbsenceViolated { .. } | ResonanceObstruction { .. } => CliError::Resonance(e),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Format(_) => 2,
            CliError::Spectral(_) => 3,
            CliError::Resonance(_) => 4,
            CliError::Numerical(_) | CliError::Io(_) => 5,
        }
    }
}
