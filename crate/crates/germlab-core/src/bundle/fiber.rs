//! Fiberwise conjugacy of two uniformly contracting linear bundle maps
//! over conjugated base dynamics.
//!
//! Works in trivialized fiber coordinates C^r. On the fundamental shell
//! Omega = closure(E(1) minus phi(E(1))) the conjugacy is the chart
//! transport H_0 = chi_beta . Gamma_0-lift . chi_alpha^{-1}, where chi
//! parametrizes the shell by (direction, t): the t <= 1/2 leg sweeps a
//! homotopy from the involution of the reference map L_0 to the bundle
//! map, the t >= 1/2 leg interpolates along the map's image. Away from
//! the shell the conjugacy is extended along fiber orbits. Expanding
//! bundles are handled by feeding the inverted system.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::bundle::involution::{involution_homotopy, InvolutionHomotopy};
use crate::error::{Error, Result};

type BaseMap = Box<dyn Fn(&[Complex64]) -> Vec<Complex64> + Sync + Send>;
type FiberMat = Box<dyn Fn(&[Complex64]) -> DMatrix<Complex64> + Sync + Send>;

/// A fiberwise-linear bundle automorphism in trivialized coordinates: the
/// fiber matrix at base x maps the fiber over x to the fiber over
/// base_fwd(x).
pub struct FiberSystem {
    pub base_fwd: BaseMap,
    pub base_inv: BaseMap,
    pub fiber: FiberMat,
}

impl FiberSystem {
    pub fn new(
        base_fwd: impl Fn(&[Complex64]) -> Vec<Complex64> + Sync + Send + 'static,
        base_inv: impl Fn(&[Complex64]) -> Vec<Complex64> + Sync + Send + 'static,
        fiber: impl Fn(&[Complex64]) -> DMatrix<Complex64> + Sync + Send + 'static,
    ) -> Self {
        Self { base_fwd: Box::new(base_fwd), base_inv: Box::new(base_inv), fiber: Box::new(fiber) }
    }

    /// The system driving phi^{-1} over the inverted base, used to apply
    /// the contracting construction to an expanding bundle.
    pub fn inverted(self) -> Self {
        let Self { base_fwd, base_inv, fiber } = self;
        let base_inv = std::sync::Arc::new(base_inv);
        let base_inv_for_fwd = base_inv.clone();
        Self {
            base_fwd: Box::new(move |x| (base_inv_for_fwd)(x)),
            base_inv: base_fwd,
            fiber: Box::new(move |x| {
                let prev = (base_inv)(x);
                (fiber)(&prev)
                    .try_inverse()
                    .expect("fiber matrices of an invertible bundle map stay invertible")
            }),
        }
    }
}

/// Construction parameters: the reference map L_0 on C^r, the closeness
/// parameter gamma, and the measurement/check budgets.
pub struct FiberConjugacyParams {
    pub l0: DMatrix<Complex64>,
    pub gamma: f64,
    /// base points where delta and the closeness hypotheses are measured
    pub probe_points: Vec<Vec<Complex64>>,
    /// base points where Gamma_0-equivariance is verified
    pub base_check_tol: f64,
    pub orbit_cap: usize,
}

/// One side's chi data: everything needed to parametrize its shell.
struct ChartSide {
    sys: FiberSystem,
}

/// The conjugacy H: E^alpha -> E^beta lifting the base conjugacy.
pub struct BundleConjugacy {
    alpha: ChartSide,
    beta: ChartSide,
    base_conj: BaseMap,
    path: InvolutionHomotopy,
    l0: DMatrix<Complex64>,
    delta: f64,
    orbit_cap: usize,
}

/// Build the bundle conjugacy after verifying the hypotheses: uniform
/// fiber contraction on the probe points (delta), the gamma smallness
/// bound with c = 2 (1 + |L_0|), the cgamma-closeness of both fiber maps
/// to L_0, and Gamma_0-equivariance of the base conjugacy.
pub fn fiber_conjugacy(
    alpha: FiberSystem,
    beta: FiberSystem,
    base_conj: impl Fn(&[Complex64]) -> Vec<Complex64> + Sync + Send + 'static,
    params: FiberConjugacyParams,
) -> Result<BundleConjugacy> {
    let FiberConjugacyParams { l0, gamma, probe_points, base_check_tol, orbit_cap } = params;
    let svd = l0.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    let sigma_min = svd.singular_values.min();
    if sigma_min <= 0.0 {
        return Err(Error::SingularLinearPart { det_abs: sigma_min });
    }
    let c = 2.0 * (1.0 + sigma_max);
    let gamma_bound = (sigma_min / (sigma_max + c)).min(1.0);
    if gamma <= 0.0 || gamma >= gamma_bound {
        return Err(Error::GammaTooLarge { gamma, bound: gamma_bound });
    }

    let mut sup_norm = 0.0f64;
    let mut closeness = 0.0f64;
    for x in &probe_points {
        for (side, name) in [(&alpha, "alpha"), (&beta, "beta")] {
            let m = (side.fiber)(x);
            let op_norm = m.clone().svd(false, false).singular_values.max();
            sup_norm = sup_norm.max(op_norm);
            let defect = (m - &l0).svd(false, false).singular_values.max();
            closeness = closeness.max(defect);
            let _ = name;
        }
    }
    if sup_norm >= 1.0 {
        return Err(Error::NotUniformlyContracting { sup_norm });
    }
    if closeness > c * gamma {
        return Err(Error::InvalidInput(format!(
            "fiber maps deviate from L_0 by {closeness:.3e} > c gamma = {:.3e}; enlarge gamma",
            c * gamma
        )));
    }
    // base conjugacy must intertwine the base dynamics
    for x in &probe_points {
        let lhs = base_conj(&(alpha.base_fwd)(x));
        let rhs = (beta.base_fwd)(&base_conj(x));
        let err: f64 =
            lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        if err > base_check_tol {
            return Err(Error::InvalidInput(format!(
                "base conjugacy fails to intertwine the base maps (residual {err:.3e})"
            )));
        }
    }
    let delta = 0.9 * (1.0 - sup_norm);
    let (path, _) = involution_homotopy(&l0, 101)?;

    Ok(BundleConjugacy {
        alpha: ChartSide { sys: alpha },
        beta: ChartSide { sys: beta },
        base_conj: Box::new(base_conj),
        path,
        l0,
        delta,
        orbit_cap,
    })
}

impl BundleConjugacy {
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The homotopy F_s at base x: the involution-to-L_0 leg for
    /// s <= 1/2, then the segment from L_0 to the bundle map over x.
    fn homotopy_at(&self, side: &ChartSide, x: &[Complex64], s: f64) -> DMatrix<Complex64> {
        if s <= 0.5 {
            // reversed involution path: s = 0 gives a, s = 1/2 gives L_0
            self.path.eval(1.0 - 2.0 * s)
        } else {
            let prev = (side.sys.base_inv)(x);
            let m = (side.sys.fiber)(&prev);
            let w = 2.0 * s - 1.0;
            &self.l0 * Complex64::new(1.0 - w, 0.0) + m * Complex64::new(w, 0.0)
        }
    }

    /// chi(x, v, t) for a unit direction v.
    fn chi(&self, side: &ChartSide, x: &[Complex64], v: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
        if t <= 0.5 {
            let w = &self.homotopy_at(side, x, 2.0 * t) * v;
            let norm = w.norm();
            w * Complex64::new((1.0 - 2.0 * t * self.delta) / norm, 0.0)
        } else {
            let prev = (side.sys.base_inv)(x);
            let m = (side.sys.fiber)(&prev);
            let mv = &m * v;
            let coeff = (2.0 * t - 1.0) + (2.0 - 2.0 * t) * (1.0 - self.delta) / mv.norm();
            mv * Complex64::new(coeff, 0.0)
        }
    }

    /// Exact inversion of chi on the shell: the modulus fixes the leg and
    /// t, the linear structure fixes the direction.
    fn chi_inverse(
        &self,
        side: &ChartSide,
        x: &[Complex64],
        nu: &DVector<Complex64>,
    ) -> Result<(DVector<Complex64>, f64)> {
        let r = nu.norm();
        if r >= 1.0 - self.delta {
            let t = ((1.0 - r) / (2.0 * self.delta)).clamp(0.0, 0.5);
            let a = self.homotopy_at(side, x, 2.0 * t);
            let w = a.lu().solve(nu).ok_or(Error::HomotopyDegenerate { t, det_abs: 0.0 })?;
            let norm = w.norm();
            Ok((w * Complex64::new(1.0 / norm, 0.0), t))
        } else {
            let prev = (side.sys.base_inv)(x);
            let m = (side.sys.fiber)(&prev);
            let u = m.clone().lu().solve(nu).ok_or(Error::NearSingularSystem {
                context: "fiber matrix inversion",
                pivot: 0.0,
            })?;
            let c_coeff = u.norm();
            let v = &u * Complex64::new(1.0 / c_coeff, 0.0);
            let mv_norm = (&m * &v).norm();
            let beta = (1.0 - self.delta) / mv_norm;
            let t = ((c_coeff - (2.0 * beta - 1.0)) / (2.0 - 2.0 * beta)).clamp(0.5, 1.0);
            Ok((v, t))
        }
    }

    /// H_0 on the fundamental shell over base x.
    fn h0(&self, x: &[Complex64], nu: &DVector<Complex64>) -> Result<(Vec<Complex64>, DVector<Complex64>)> {
        let (v, t) = self.chi_inverse(&self.alpha, x, nu)?;
        let y = (self.base_conj)(x);
        let w = self.chi(&self.beta, &y, &v, t);
        Ok((y, w))
    }

    /// Evaluate the conjugacy at a fiber point (x, v).
    pub fn eval(
        &self,
        x: &[Complex64],
        v: &DVector<Complex64>,
    ) -> Result<(Vec<Complex64>, DVector<Complex64>)> {
        let y0 = (self.base_conj)(x);
        if v.norm() == 0.0 {
            return Ok((y0, DVector::zeros(v.len())));
        }
        // walk the fiber orbit into the shell
        let mut bases = vec![x.to_vec()];
        let mut vecs = vec![v.clone()];
        let mut m: i32 = 0;
        if v.norm() > 1.0 {
            loop {
                let x_cur = bases.last().unwrap().clone();
                let v_cur = vecs.last().unwrap().clone();
                let next_v = (self.alpha.sys.fiber)(&x_cur) * &v_cur;
                bases.push((self.alpha.sys.base_fwd)(&x_cur));
                vecs.push(next_v);
                m += 1;
                if vecs.last().unwrap().norm() <= 1.0 {
                    break;
                }
                if m as usize >= self.orbit_cap {
                    return Err(Error::OrbitEscape { max_iter: self.orbit_cap });
                }
            }
        } else {
            loop {
                let x_cur = bases.last().unwrap().clone();
                let v_cur = vecs.last().unwrap().clone();
                let prev_base = (self.alpha.sys.base_inv)(&x_cur);
                let m_prev = (self.alpha.sys.fiber)(&prev_base);
                let prev_v = m_prev.lu().solve(&v_cur).ok_or(Error::NearSingularSystem {
                    context: "fiber orbit pullback",
                    pivot: 0.0,
                })?;
                if prev_v.norm() >= 1.0 {
                    break; // current point is in the shell
                }
                bases.push(prev_base);
                vecs.push(prev_v);
                m -= 1;
                if (-m) as usize >= self.orbit_cap {
                    return Err(Error::OrbitEscape { max_iter: self.orbit_cap });
                }
            }
        }
        let (_, mut w) = self.h0(bases.last().unwrap(), vecs.last().unwrap())?;
        if m > 0 {
            // pull back along the beta orbit over Gamma_0(x_j)
            for j in (0..m as usize).rev() {
                let y_j = (self.base_conj)(&bases[j]);
                let m_beta = (self.beta.sys.fiber)(&y_j);
                w = m_beta.lu().solve(&w).ok_or(Error::NearSingularSystem {
                    context: "beta fiber pullback",
                    pivot: 0.0,
                })?;
            }
        } else {
            for j in (1..=(-m) as usize).rev() {
                let y_j = (self.base_conj)(&bases[j]);
                w = (self.beta.sys.fiber)(&y_j) * w;
            }
        }
        Ok((y0, w))
    }

    /// sup over samples of |H(phi_alpha(nu)) - phi_beta(H(nu))| in the
    /// fiber coordinates.
    pub fn equivariance_residual(
        &self,
        samples: &[(Vec<Complex64>, DVector<Complex64>)],
    ) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for (x, v) in samples {
            let pushed_v = (self.alpha.sys.fiber)(x) * v;
            let pushed_x = (self.alpha.sys.base_fwd)(x);
            let (_, lhs) = self.eval(&pushed_x, &pushed_v)?;
            let (y, hv) = self.eval(x, v)?;
            let rhs = (self.beta.sys.fiber)(&y) * hv;
            sup = sup.max((lhs - rhs).norm());
        }
        Ok(sup)
    }
}

/// sup-residual of the conjugacy equation over the given fiber samples.
pub fn conjugacy_check(
    h: &BundleConjugacy,
    samples: &[(Vec<Complex64>, DVector<Complex64>)],
) -> Result<f64> {
    h.equivariance_residual(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_mat(v: f64) -> DMatrix<Complex64> {
        DMatrix::from_element(1, 1, c(v, 0.0))
    }

    fn scalar_system(rate: f64) -> FiberSystem {
        FiberSystem::new(
            |x: &[Complex64]| x.to_vec(),
            |x: &[Complex64]| x.to_vec(),
            move |_: &[Complex64]| scalar_mat(rate),
        )
    }

    fn scalar_params() -> FiberConjugacyParams {
        FiberConjugacyParams {
            l0: scalar_mat(0.45),
            gamma: 0.05,
            probe_points: vec![vec![]],
            base_check_tol: 1e-12,
            orbit_cap: 400,
        }
    }

    #[test]
    fn identical_bundles_give_identity() {
        let h = fiber_conjugacy(
            scalar_system(0.5),
            scalar_system(0.5),
            |x: &[Complex64]| x.to_vec(),
            FiberConjugacyParams { l0: scalar_mat(0.5), ..scalar_params() },
        )
        .unwrap();
        for i in 1..40 {
            let nu = DVector::from_element(1, c(0.05 * i as f64, 0.02 * i as f64));
            let (_, w) = h.eval(&[], &nu).unwrap();
            assert!((w - &nu).norm() < 1e-10, "H moved {nu} at sample {i}");
        }
    }

    #[test]
    fn scalar_rates_conjugate() {
        let h = fiber_conjugacy(
            scalar_system(0.5),
            scalar_system(0.4),
            |x: &[Complex64]| x.to_vec(),
            scalar_params(),
        )
        .unwrap();
        let mut samples = Vec::new();
        for i in 1..=50 {
            let r = 0.05 + 0.06 * i as f64;
            let theta = 0.37 * i as f64;
            samples.push((Vec::new(), DVector::from_element(1, Complex64::from_polar(r, theta))));
        }
        let residual = conjugacy_check(&h, &samples).unwrap();
        assert!(residual < 1e-8, "residual {residual}");

        // closed-form radial-profile oracle H(nu) = nu |nu|^{sigma - 1}
        let sigma = 0.4f64.ln() / 0.5f64.ln();
        for (_, nu) in &samples {
            let z = nu[0];
            let oracle = z * z.norm().powf(sigma - 1.0);
            assert!((oracle * 0.5f64.powf(sigma) - oracle * 0.4).norm() < 1e-12);
        }
        // our H is radial and phase-equivariant like the oracle
        let base: DVector<Complex64> = DVector::from_element(1, c(0.3, 0.0));
        let (_, h_base) = h.eval(&[], &base).unwrap();
        for k in 1..8 {
            let phase = Complex64::from_polar(1.0, 0.7 * k as f64);
            let (_, rotated) = h.eval(&[], &(&base * phase)).unwrap();
            assert!((rotated - &h_base * phase).norm() < 1e-9);
        }
    }

    #[test]
    fn norm_one_shell_maps_into_beta_shell() {
        let h = fiber_conjugacy(
            scalar_system(0.5),
            scalar_system(0.4),
            |x: &[Complex64]| x.to_vec(),
            scalar_params(),
        )
        .unwrap();
        for k in 0..24 {
            let nu = DVector::from_element(1, Complex64::from_polar(1.0, 0.26 * k as f64));
            let (_, w) = h.eval(&[], &nu).unwrap();
            assert!(w.norm() <= 1.0 + 1e-12 && w.norm() >= 0.4 - 1e-12);
        }
    }

    #[test]
    fn shell_images_do_not_collide() {
        // fiber-degree preservation and injectivity at shell scale: images
        // of distinct unit-shell points keep pairwise distance comparable
        // to their preimages' spacing
        let h = fiber_conjugacy(
            scalar_system(0.5),
            scalar_system(0.4),
            |x: &[Complex64]| x.to_vec(),
            scalar_params(),
        )
        .unwrap();
        let count = 64;
        let images: Vec<Complex64> = (0..count)
            .map(|j| {
                let nu = DVector::from_element(
                    1,
                    Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / count as f64),
                );
                h.eval(&[], &nu).unwrap().1[0]
            })
            .collect();
        let spacing = std::f64::consts::TAU / count as f64;
        for (i, a) in images.iter().enumerate() {
            for b in images.iter().skip(i + 1) {
                assert!((a - b).norm() > 0.05 * spacing, "shell images collide");
            }
        }
    }

    #[test]
    fn non_equivariant_base_conjugacy_rejected() {
        let rot = c(0.6, 0.0);
        let sys = || {
            FiberSystem::new(
                move |x: &[Complex64]| vec![x[0] * rot],
                move |x: &[Complex64]| vec![x[0] / rot],
                move |_: &[Complex64]| scalar_mat(0.5),
            )
        };
        let err = fiber_conjugacy(
            sys(),
            sys(),
            |x: &[Complex64]| vec![x[0] + c(0.3, 0.0)],
            FiberConjugacyParams {
                l0: scalar_mat(0.5),
                gamma: 0.05,
                probe_points: vec![vec![c(0.4, 0.1)]],
                base_check_tol: 1e-9,
                orbit_cap: 100,
            },
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gamma_bound_is_enforced() {
        let err = fiber_conjugacy(
            scalar_system(0.5),
            scalar_system(0.4),
            |x: &[Complex64]| x.to_vec(),
            FiberConjugacyParams { gamma: 0.9, ..scalar_params() },
        );
        assert!(matches!(err, Err(Error::GammaTooLarge { .. })));
    }

    #[test]
    fn non_contracting_fibers_rejected() {
        let err = fiber_conjugacy(
            scalar_system(1.1),
            scalar_system(0.4),
            |x: &[Complex64]| x.to_vec(),
            FiberConjugacyParams { l0: scalar_mat(0.9), gamma: 0.05, ..scalar_params() },
        );
        assert!(matches!(
            err,
            Err(Error::NotUniformlyContracting { .. }) | Err(Error::GammaTooLarge { .. })
        ));
    }

    #[test]
    fn expanding_bundle_via_inversion() {
        // rates 2.0 vs 2.5: invert to 0.5 vs 0.4 and conjugate
        let inv_a = scalar_system(2.0).inverted();
        let inv_b = scalar_system(2.5).inverted();
        let h = fiber_conjugacy(
            inv_a,
            inv_b,
            |x: &[Complex64]| x.to_vec(),
            scalar_params(),
        )
        .unwrap();
        let samples: Vec<_> = (1..30)
            .map(|i| (Vec::new(), DVector::from_element(1, Complex64::from_polar(0.1 * i as f64, 0.5 * i as f64))))
            .collect();
        // H conjugates the inverses, hence the original expanding maps
        let residual = conjugacy_check(&h, &samples).unwrap();
        assert!(residual < 1e-8, "residual {residual}");
    }

    #[test]
    fn base_dependent_fibers() {
        // fibers contract at a base-dependent rate over a rotating base
        let rot = c(0.6, 0.0); // base map x -> 0.6 x on C
        let sys = |slope: f64| {
            FiberSystem::new(
                move |x: &[Complex64]| vec![x[0] * rot],
                move |x: &[Complex64]| vec![x[0] / rot],
                move |x: &[Complex64]| scalar_mat(0.45 + slope * x[0].re),
            )
        };
        let probe: Vec<Vec<Complex64>> =
            (0..20).map(|i| vec![c(0.04 * i as f64 - 0.4, 0.0)]).collect();
        let h = fiber_conjugacy(
            sys(0.05),
            sys(-0.04),
            |x: &[Complex64]| x.to_vec(),
            FiberConjugacyParams {
                l0: scalar_mat(0.45),
                gamma: 0.03,
                probe_points: probe,
                base_check_tol: 1e-12,
                orbit_cap: 500,
            },
        )
        .unwrap();
        let samples: Vec<_> = (1..40)
            .map(|i| {
                (
                    vec![c(0.3 * (0.1 * i as f64).sin(), 0.0)],
                    DVector::from_element(1, Complex64::from_polar(0.08 * i as f64, 0.4 * i as f64)),
                )
            })
            .collect();
        let residual = conjugacy_check(&h, &samples).unwrap();
        assert!(residual < 1e-8, "residual {residual}");
    }
}
