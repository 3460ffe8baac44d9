use crate::jet::MultiIndex;

/// Errors reported by the core pipeline.
///
/// Variants are grouped so a front end can map them onto exit classes:
/// input-format problems, spectral-hypothesis failures, resonance
/// obstructions, and numerical failures.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear part is singular (|det| = {det_abs:.3e})")]
    SingularLinearPart { det_abs: f64 },

    #[error("inner germ of a composition must fix the origin (constant term {modulus:.3e})")]
    NonzeroConstantTerm { modulus: f64 },

    #[error("matrix is not in the expected Jordan form: {reason}")]
    NotJordanForm { reason: String },

    #[error("leading eigenvalue is not a root of unity up to order {q_max} (tol {tol:.1e})")]
    NotRootOfUnity { q_max: u32, tol: f64 },

    #[error("germ is not semi-hyperbolic: |lambda_{index}| = {modulus} within margin {margin} of 0 or 1")]
    NotSemiHyperbolic { index: usize, modulus: f64, margin: f64 },

    #[error("quasi-absence of resonances violated; first witness {witness:?}")]
    QuasiAbsenceViolated { witness: Vec<u32> },

    #[error("resonance obstruction at {index:?}: |lambda_1 - Lambda^P| = {denominator:.3e}")]
    ResonanceObstruction { index: MultiIndex, denominator: f64 },

    #[error("degenerate axis: (f^q)_{component} vanishes on the z1-axis after {retries} shear retries")]
    DegenerateAxis { component: usize, retries: u32 },

    #[error("averaging precondition failed: (f^q)_1 differs from z1 by {residual:.3e}")]
    AveragingPrecondition { residual: f64 },

    #[error("averaging degenerate: |eta_{index}| = {modulus:.3e} below tolerance")]
    AveragingDegenerate { index: usize, modulus: f64 },

    #[error("{context}: linear solve hit a near-singular system (pivot {pivot:.3e})")]
    NearSingularSystem { context: &'static str, pivot: f64 },

    #[error("sector coordinates are undefined at z = 0")]
    SectorAtOrigin,

    #[error("sector translation out of domain: |w| = {modulus:.3e} <= R = {radius:.3e}")]
    SectorOutOfDomain { modulus: f64, radius: f64 },

    #[error("invalid blend geometry: {reason}")]
    InvalidBlendGeometry { reason: String },

    #[error("blended map is not uniformly close to the model: chart distance {distance:.3e} >= {bound:.3e}")]
    NotUniformlyClose { distance: f64, bound: f64 },

    #[error("bump extension deviation {deviation:.3e} exceeds epsilon {epsilon:.3e} after {shrinks} shrink steps")]
    BumpDeviationTooLarge { deviation: f64, epsilon: f64, shrinks: u32 },

    #[error("cone iteration did not converge in {iters} iterations (last frame distance {last_gap:.3e})")]
    ConeNotConverged { iters: usize, last_gap: f64 },

    #[error("cone aperture exceeded: frame vector has tilt {tilt:.3e} > gamma = {gamma:.3e}")]
    ApertureExceeded { tilt: f64, gamma: f64 },

    #[error("involution homotopy degenerated at t = {t}: |det| = {det_abs:.3e}")]
    HomotopyDegenerate { t: f64, det_abs: f64 },

    #[error("gamma = {gamma} violates the fiber-conjugacy bound {bound} (needs a smaller gamma)")]
    GammaTooLarge { gamma: f64, bound: f64 },

    #[error("fiber map does not uniformly contract: sup |phi| = {sup_norm}")]
    NotUniformlyContracting { sup_norm: f64 },

    #[error("orbit escaped: no iterate entered the fundamental region within {max_iter} steps")]
    OrbitEscape { max_iter: usize },

    #[error("eigenvalue iteration failed to converge after {sweeps} QR sweeps")]
    EigenNotConverged { sweeps: usize },

    #[error("classification is case (i); {experiment} applies only to case (ii)")]
    ExperimentInapplicable { experiment: &'static str },

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
