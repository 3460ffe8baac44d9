//! Bump extension of a germ to a global diffeomorphism, cone-iteration
//! computation of the normally hyperbolic splitting over the z1-axis, the
//! linear involution homotopy, and the fiberwise bundle conjugacy.

pub mod assembly;
mod fiber;
mod involution;

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use fiber::{
    conjugacy_check, fiber_conjugacy, BundleConjugacy, FiberConjugacyParams, FiberSystem,
};
pub use involution::{involution_homotopy, InvolutionHomotopy, NEG_AXIS_TOL};

use crate::center::axis_invariance_defect;
use crate::error::{Error, Result};
use crate::jet::{GermJet, PolyJet};
use crate::sector::{bump, bump_derivative};

/// Dimensions and rate data of a normally hyperbolic splitting
/// C^n = C^h + C^k + C^l over the h-dimensional center.
///
/// The rates satisfy 0 < lambda < lambda' <= 1 <= mu' < mu; `c_prime < c`
/// are the contraction/expansion certificates checked on the computed
/// frames, and `gamma0` is the cone aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingSpec {
    pub dims: (usize, usize, usize),
    pub rate_lambda: f64,
    pub rate_lambda_prime: f64,
    pub rate_mu_prime: f64,
    pub rate_mu: f64,
    pub gamma0: f64,
    pub c: f64,
    pub c_prime: f64,
}

impl SplittingSpec {
    pub fn new(
        dims: (usize, usize, usize),
        rates: (f64, f64, f64, f64),
        gamma0: f64,
        c: f64,
        c_prime: f64,
    ) -> Result<Self> {
        let (lambda, lambda_prime, mu_prime, mu) = rates;
        if !(0.0 < lambda && lambda < lambda_prime && lambda_prime <= 1.0)
            || !(1.0 <= mu_prime && mu_prime < mu)
        {
            return Err(Error::InvalidInput(format!(
                "rate chain 0 < {lambda} < {lambda_prime} <= 1 <= {mu_prime} < {mu} violated"
            )));
        }
        if c_prime >= c || gamma0 <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "need c' < c and gamma0 > 0, got c' = {c_prime}, c = {c}, gamma0 = {gamma0}"
            )));
        }
        Ok(Self {
            dims,
            rate_lambda: lambda,
            rate_lambda_prime: lambda_prime,
            rate_mu_prime: mu_prime,
            rate_mu: mu,
            gamma0,
            c,
            c_prime,
        })
    }

    pub fn n(&self) -> usize {
        self.dims.0 + self.dims.1 + self.dims.2
    }

    /// Default closeness budget: gamma * gap / 10 with
    /// gap = min(lambda' - lambda, mu - mu').
    pub fn epsilon(&self) -> f64 {
        let gap = (self.rate_lambda_prime - self.rate_lambda).min(self.rate_mu - self.rate_mu_prime);
        self.gamma0 * gap / 10.0
    }
}

/// A germ blended with its linear part through the radial bump:
/// F(z) = rho_eta(|z|) f(z) + (1 - rho_eta(|z|)) L z. Defined on all of
/// C^n and equal to L outside |z| < eta.
pub struct BumpDiffeo {
    germ: GermJet,
    jacobian_jets: Vec<Vec<PolyJet>>,
    linear: DMatrix<Complex64>,
    eta: f64,
    deviation: f64,
}

/// Build the bump extension, halving eta until the measured C^1 deviation
/// from L drops below `epsilon` (up to `max_shrink` halvings).
///
/// Requires the germ's linear part to equal L and its z1-axis to be
/// invariant through the jet degree (straighten first).
pub fn extend_with_bump(
    f: &GermJet,
    linear: &DMatrix<Complex64>,
    eta: f64,
    epsilon: f64,
    max_shrink: u32,
) -> Result<BumpDiffeo> {
    if (f.linear_part() - linear).norm() > 1e-10 {
        return Err(Error::InvalidInput(
            "bump extension requires the germ's linear part to equal L".into(),
        ));
    }
    let defect = axis_invariance_defect(f);
    if defect > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "z1-axis must be invariant before bump extension (defect {defect:.3e})"
        )));
    }
    let n = f.dimension();
    let jacobian_jets: Vec<Vec<PolyJet>> = (0..n)
        .map(|i| (0..n).map(|j| f.component(i).partial_derivative(j)).collect())
        .collect();
    let mut eta = eta;
    for shrinks in 0..=max_shrink {
        let candidate = BumpDiffeo {
            germ: f.clone(),
            jacobian_jets: jacobian_jets.clone(),
            linear: linear.clone(),
            eta,
            deviation: 0.0,
        };
        let deviation = candidate.measure_deviation();
        if deviation < epsilon {
            return Ok(BumpDiffeo { deviation, ..candidate });
        }
        if shrinks == max_shrink {
            return Err(Error::BumpDeviationTooLarge { deviation, epsilon, shrinks });
        }
        eta /= 2.0;
    }
    unreachable!()
}

impl BumpDiffeo {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn linear(&self) -> &DMatrix<Complex64> {
        &self.linear
    }

    pub fn dimension(&self) -> usize {
        self.germ.dimension()
    }

    /// Measured sup of |F - Lz| and of the full (complex-linear plus
    /// conjugate-linear) Jacobian deviation over a radial sample grid.
    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        let r = norm(z);
        let rho = bump(r, self.eta);
        let mut lz = self.apply_linear(z);
        if rho == 0.0 {
            return lz;
        }
        let fz = self.germ.evaluate(z);
        for i in 0..z.len() {
            lz[i] = rho * fz[i] + (1.0 - rho) * lz[i];
        }
        lz
    }

    fn apply_linear(&self, z: &[Complex64]) -> Vec<Complex64> {
        let n = z.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.linear[(i, j)] * z[j]).sum())
            .collect()
    }

    /// Complex-linear (Wirtinger dz) block of the differential:
    /// rho Df + (1 - rho) L + rho'(r) (f(z) - Lz) conj(z)^T / (2r).
    pub fn jac(&self, z: &[Complex64]) -> DMatrix<Complex64> {
        let n = z.len();
        let r = norm(z);
        let rho = bump(r, self.eta);
        let mut out = self.linear.clone();
        if rho == 0.0 {
            return out;
        }
        for i in 0..n {
            for j in 0..n {
                let df = self.jacobian_jets[i][j].evaluate(z);
                out[(i, j)] = rho * df + (1.0 - rho) * self.linear[(i, j)];
            }
        }
        let dr = bump_derivative(r, self.eta);
        if dr != 0.0 && r > 0.0 {
            let fz = self.germ.evaluate(z);
            let lz = self.apply_linear(z);
            for i in 0..n {
                let gap = fz[i] - lz[i];
                for j in 0..n {
                    out[(i, j)] += gap * dr * z[j].conj() / (2.0 * r);
                }
            }
        }
        out
    }

    /// Frobenius norm of the conjugate-linear (dz-bar) Jacobian block,
    /// rho'(r) (f(z) - Lz) z^T / (2r); it contributes to the C^1 deviation
    /// bound but vanishes on normal directions at axis points.
    pub fn jac_antilinear_norm(&self, z: &[Complex64]) -> f64 {
        let r = norm(z);
        let dr = bump_derivative(r, self.eta);
        if dr == 0.0 || r == 0.0 {
            return 0.0;
        }
        let fz = self.germ.evaluate(z);
        let lz = self.apply_linear(z);
        let gap: f64 = fz.iter().zip(&lz).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        gap * dr.abs() / 2.0
    }

    fn measure_deviation(&self) -> f64 {
        let n = self.dimension();
        let mut sup: f64 = 0.0;
        // radial/diagonal sample directions through the bump support
        let mut dirs: Vec<Vec<Complex64>> = Vec::new();
        for i in 0..n {
            let mut e = vec![Complex64::default(); n];
            e[i] = Complex64::new(1.0, 0.0);
            dirs.push(e);
        }
        dirs.push(vec![Complex64::new(1.0, 0.4); n]);
        dirs.push(vec![Complex64::new(-0.3, 0.9); n]);
        for dir in &dirs {
            let d_norm = norm(dir);
            for step in 1..=24 {
                let scale = self.eta * 1.05 * step as f64 / 24.0 / d_norm;
                let z: Vec<Complex64> = dir.iter().map(|d| d * scale).collect();
                let fz = self.eval(&z);
                let lz = self.apply_linear(&z);
                let value_gap: f64 =
                    fz.iter().zip(&lz).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let jac_gap = (self.jac(&z) - &self.linear).norm() + self.jac_antilinear_norm(&z);
                sup = sup.max(value_gap).max(jac_gap);
            }
        }
        sup
    }

    /// First-coordinate dynamics on the invariant z1-axis.
    pub fn axis_map(&self, x: Complex64) -> Complex64 {
        let n = self.dimension();
        let mut z = vec![Complex64::default(); n];
        z[0] = x;
        self.eval(&z)[0]
    }

    /// Inverse of the axis dynamics by damped Newton on R^2.
    pub fn axis_inverse(&self, target: Complex64) -> Result<Complex64> {
        let seed = target / self.linear[(0, 0)];
        let scale = target.norm().max(1e-9);
        let mut x = seed;
        for _ in 0..60 {
            let fx = self.axis_map(x) - target;
            if fx.norm() < 1e-13 * scale {
                return Ok(x);
            }
            let h = 1e-7 * x.norm().max(1e-4);
            let fdx = (self.axis_map(x + Complex64::new(h, 0.0)) - target - fx) / h;
            let fdy = (self.axis_map(x + Complex64::new(0.0, h)) - target - fx) / h;
            let det = fdx.re * fdy.im - fdy.re * fdx.im;
            if det.abs() < 1e-300 {
                break;
            }
            x += Complex64::new(
                (-fx.re * fdy.im + fx.im * fdy.re) / det,
                (-fx.im * fdx.re + fx.re * fdx.im) / det,
            );
        }
        let fx = self.axis_map(x) - target;
        if fx.norm() < 1e-9 * scale {
            Ok(x)
        } else {
            Err(Error::NearSingularSystem { context: "axis-map inversion", pivot: fx.norm() })
        }
    }
}

fn norm(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Stable and unstable frames at one axis point, with convergence
/// diagnostics of the cone iteration.
#[derive(Debug, Clone)]
pub struct ConeSplitting {
    pub base: Vec<Complex64>,
    pub e_s: DMatrix<Complex64>,
    pub e_u: DMatrix<Complex64>,
    pub iterations: usize,
    pub last_gap: f64,
}

/// Approximate the invariant splitting at an axis point by power iteration
/// along the orbit: the stable frame is the pullback of the vertical-cone
/// frame under the Jacobians of the forward orbit, the unstable frame the
/// push-forward of the horizontal frame along the backward orbit. Stops
/// when deepening the orbit moves the frames by less than 1e-10.
pub fn cone_splitting(
    map: &BumpDiffeo,
    spec: &SplittingSpec,
    x: &[Complex64],
    iters: usize,
) -> Result<ConeSplitting> {
    let n = map.dimension();
    let (h, k, l) = spec.dims;
    if h + k + l != n {
        return Err(Error::DimensionMismatch { expected: n, got: h + k + l });
    }
    if x[1..].iter().any(|c| c.norm() > 1e-12) {
        return Err(Error::InvalidInput("cone splitting expects a z1-axis base point".into()));
    }
    const FRAME_TOL: f64 = 1e-10;

    // forward orbit (for E_s) and backward orbit (for E_u)
    let mut forward = vec![x.to_vec()];
    for _ in 0..iters {
        let next = map.eval(forward.last().unwrap());
        forward.push(next);
    }
    let mut backward = vec![x.to_vec()];
    if l > 0 {
        for _ in 0..iters {
            let prev_axis = map.axis_inverse(backward.last().unwrap()[0])?;
            let mut prev = vec![Complex64::default(); n];
            prev[0] = prev_axis;
            backward.push(prev);
        }
    }

    let model_frame = |offset: usize, width: usize| -> DMatrix<Complex64> {
        let mut m = DMatrix::<Complex64>::zeros(n, width);
        for c in 0..width {
            m[(offset + c, c)] = Complex64::new(1.0, 0.0);
        }
        m
    };

    let mut iterations = 0usize;
    let mut last_gap = 0.0f64;

    let e_s = if k == 0 {
        DMatrix::<Complex64>::zeros(n, 0)
    } else {
        let mut previous = model_frame(h, k);
        let mut converged = None;
        for depth in 1..=iters {
            let mut frame = model_frame(h, k);
            for j in (0..depth).rev() {
                let jac = map.jac(&forward[j]);
                let lu = jac.lu();
                frame = lu.solve(&frame).ok_or(Error::NearSingularSystem {
                    context: "cone pullback",
                    pivot: 0.0,
                })?;
                frame = orthonormalize(&frame)?;
            }
            last_gap = frame_distance(&previous, &frame);
            previous = frame.clone();
            iterations = depth;
            if last_gap < FRAME_TOL {
                converged = Some(frame);
                break;
            }
        }
        converged.ok_or(Error::ConeNotConverged { iters, last_gap })?
    };

    let e_u = if l == 0 {
        DMatrix::<Complex64>::zeros(n, 0)
    } else {
        let mut previous = model_frame(h + k, l);
        let mut converged = None;
        for depth in 1..=iters {
            let mut frame = model_frame(h + k, l);
            for j in (1..=depth).rev() {
                let jac = map.jac(&backward[j]);
                frame = jac * frame;
                frame = orthonormalize(&frame)?;
            }
            last_gap = frame_distance(&previous, &frame);
            previous = frame.clone();
            iterations = iterations.max(depth);
            if last_gap < FRAME_TOL {
                converged = Some(frame);
                break;
            }
        }
        converged.ok_or(Error::ConeNotConverged { iters, last_gap })?
    };

    let splitting = ConeSplitting { base: x.to_vec(), e_s, e_u, iterations, last_gap };
    verify_cone_inclusions(&splitting, spec)?;
    Ok(splitting)
}

fn orthonormalize(frame: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let mut out = frame.clone();
    let cols = out.ncols();
    for c in 0..cols {
        for prev in 0..c {
            let proj: Complex64 =
                (0..out.nrows()).map(|r| out[(r, prev)].conj() * out[(r, c)]).sum();
            for r in 0..out.nrows() {
                let adj = proj * out[(r, prev)];
                out[(r, c)] -= adj;
            }
        }
        let norm: f64 = out.column(c).norm();
        if norm < 1e-14 {
            return Err(Error::NearSingularSystem { context: "frame orthonormalization", pivot: norm });
        }
        for r in 0..out.nrows() {
            out[(r, c)] /= Complex64::new(norm, 0.0);
        }
    }
    Ok(out)
}

/// Distance between the subspaces spanned by two orthonormal frames, as
/// the Frobenius norm of the projector difference.
pub fn frame_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let pa = a * a.adjoint();
    let pb = b * b.adjoint();
    (pa - pb).norm()
}

/// Check the cone inclusions of the computed frames: stable columns tilt
/// away from the C^k block by at most gamma0, unstable columns from the
/// C^l block.
fn verify_cone_inclusions(splitting: &ConeSplitting, spec: &SplittingSpec) -> Result<()> {
    let (h, k, _l) = spec.dims;
    for col in 0..splitting.e_s.ncols() {
        let v = splitting.e_s.column(col);
        let inside: f64 = (h..h + k).map(|r| v[r].norm_sqr()).sum::<f64>().sqrt();
        let outside = (v.norm_squared() - inside * inside).max(0.0).sqrt();
        if outside > spec.gamma0 * inside {
            return Err(Error::ApertureExceeded { tilt: outside / inside.max(1e-300), gamma: spec.gamma0 });
        }
    }
    for col in 0..splitting.e_u.ncols() {
        let v = splitting.e_u.column(col);
        let inside: f64 = (h + k..splitting.base.len()).map(|r| v[r].norm_sqr()).sum::<f64>().sqrt();
        let outside = (v.norm_squared() - inside * inside).max(0.0).sqrt();
        if outside > spec.gamma0 * inside {
            return Err(Error::ApertureExceeded { tilt: outside / inside.max(1e-300), gamma: spec.gamma0 });
        }
    }
    Ok(())
}

/// Rate and invariance certificates of a computed splitting.
#[derive(Debug, Clone, Copy)]
pub struct SplittingCertificates {
    /// max |dF v| over unit stable frame vectors (must be <= c')
    pub stable_rate: f64,
    /// min |dF v| over unit unstable frame vectors (must be >= c)
    pub unstable_rate: f64,
    /// Frobenius residual of dF E_s(x) - E_s(F x) M
    pub invariance_residual: f64,
}

/// Evaluate the rate and invariance certificates at one axis point, comparing the
/// frame transported by the Jacobian with the frame recomputed at the
/// image point.
pub fn splitting_certificates(
    map: &BumpDiffeo,
    at: &ConeSplitting,
    next: &ConeSplitting,
) -> SplittingCertificates {
    let jac = map.jac(&at.base);
    let mut stable_rate = 0.0f64;
    let mut invariance_residual = 0.0f64;
    if at.e_s.ncols() > 0 {
        let pushed = &jac * &at.e_s;
        for col in 0..pushed.ncols() {
            stable_rate = stable_rate.max(pushed.column(col).norm());
        }
        // best-fit induced fiber matrix M = E_s(Fx)^H (dF E_s(x))
        let m = next.e_s.adjoint() * &pushed;
        invariance_residual = (&pushed - &next.e_s * m).norm();
    }
    let mut unstable_rate = f64::INFINITY;
    if at.e_u.ncols() > 0 {
        let pushed = &jac * &at.e_u;
        for col in 0..pushed.ncols() {
            unstable_rate = unstable_rate.min(pushed.column(col).norm());
        }
        let m = next.e_u.adjoint() * &pushed;
        invariance_residual = invariance_residual.max((&pushed - &next.e_u * m).norm());
    }
    SplittingCertificates { stable_rate, unstable_rate, invariance_residual }
}

/// Random-vector cone invariance probe: dF maps the horizontal cone into
/// itself and dF^{-1} the vertical cone into itself, sampled at one axis
/// point. Returns the worst horizontal and vertical aperture ratios
/// (both <= 1 certifies invariance at the sampled vectors).
pub fn cone_invariance_probe(
    map: &BumpDiffeo,
    spec: &SplittingSpec,
    x: &[Complex64],
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = map.dimension();
    let (h, k, _l) = spec.dims;
    let jac = map.jac(x);
    let lu = jac.clone().lu();
    let mut worst_h = 0.0f64;
    let mut worst_v = 0.0f64;
    let random_unit = |dims: &[usize], rng: &mut rand_chacha::ChaCha8Rng| {
        let mut v = DVector::<Complex64>::zeros(n);
        for &d in dims {
            v[d] = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let nv = v.norm();
        v / Complex64::new(nv, 0.0)
    };
    // horizontal cone around C^h + C^l (the non-stable block), vertical
    // around C^k, matching the contracting-part construction
    let horiz_dims: Vec<usize> = (0..h).chain(h + k..n).collect();
    let vert_dims: Vec<usize> = (h..h + k).collect();
    for _ in 0..samples {
        // horizontal sample: |v_vert| <= gamma0 |v_horiz|
        let mut v = random_unit(&horiz_dims, &mut rng);
        let tilt = random_unit(&vert_dims, &mut rng);
        let g0 = Complex64::new(spec.gamma0 * rng.random_range(0.0..1.0), 0.0);
        v += tilt * g0;
        let image = &jac * &v;
        let vert: f64 = vert_dims.iter().map(|&d| image[d].norm_sqr()).sum::<f64>().sqrt();
        let horiz = (image.norm_squared() - vert * vert).max(0.0).sqrt();
        worst_h = worst_h.max(vert / (spec.gamma0 * horiz).max(1e-300));

        // vertical sample pulled back by dF^{-1}
        let mut v = random_unit(&vert_dims, &mut rng);
        let tilt = random_unit(&horiz_dims, &mut rng);
        v += tilt * g0;
        let pre = lu.solve(&v).ok_or(Error::NearSingularSystem {
            context: "cone invariance probe",
            pivot: 0.0,
        })?;
        let vert: f64 = vert_dims.iter().map(|&d| pre[d].norm_sqr()).sum::<f64>().sqrt();
        let horiz = (pre.norm_squared() - vert * vert).max(0.0).sqrt();
        worst_v = worst_v.max(horiz / (spec.gamma0 * vert).max(1e-300));
    }
    Ok((worst_h, worst_v))
}

/// CSV export of per-base-point splitting data: frames, rates, residuals.
pub fn write_splitting_csv(
    rows: &[(ConeSplitting, SplittingCertificates)],
    path: &Path,
) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(
        file,
        "re_x,im_x,iterations,frame_gap,stable_rate,unstable_rate,invariance_residual,frames"
    )?;
    for (split, cert) in rows {
        let mut frames = String::new();
        for m in [&split.e_s, &split.e_u] {
            for c in 0..m.ncols() {
                for r in 0..m.nrows() {
                    frames.push_str(&format!("{:.6e} {:.6e} ", m[(r, c)].re, m[(r, c)].im));
                }
            }
        }
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            split.base[0].re,
            split.base[0].im,
            split.iterations,
            split.last_gap,
            cert.stable_rate,
            cert.unstable_rate,
            cert.invariance_residual,
            frames.trim_end()
        )?;
    }
    Ok(())
}

/// Turn a computed orthonormal frame into the trivialization used by the
/// fiber conjugacy: right-multiply so the model-block rows become the
/// identity. Returns the trivialization columns and the measured
/// gamma-closeness sup |pi_x(v) - iota(v)| / |v|.
pub fn trivialization_from_frame(
    frame: &DMatrix<Complex64>,
    block_start: usize,
) -> Result<(DMatrix<Complex64>, f64)> {
    let r = frame.ncols();
    let n = frame.nrows();
    let mut block = DMatrix::<Complex64>::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            block[(i, j)] = frame[(block_start + i, j)];
        }
    }
    let inv = block.try_inverse().ok_or(Error::NearSingularSystem {
        context: "trivialization block inversion",
        pivot: 0.0,
    })?;
    let pi = frame * inv;
    let mut iota = DMatrix::<Complex64>::zeros(n, r);
    for i in 0..r {
        iota[(block_start + i, i)] = Complex64::new(1.0, 0.0);
    }
    let diff = &pi - &iota;
    // operator norm via largest singular value
    let gamma = diff.svd(false, false).singular_values.max();
    Ok((pi, gamma))
}
