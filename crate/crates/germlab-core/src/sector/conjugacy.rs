//! Bump-blended 1-D maps and the discrete fundamental-domain conjugacy.
//!
//! The conjugacy is built exactly as in the proof: the blended map agrees
//! with the sector model outside the bump support, the region Omega (disk
//! of radius R-hat union the vertical strip 0 <= Re w <= kq) meets every
//! translation orbit, a homeomorphism Gamma_0 is prescribed on Omega's
//! boundary and interpolated inside, and the global map is extended along
//! orbits. Everything is sampled on a polar grid in z-space.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sector::{
    bump, from_sector, model_phi, model_phi_inverse, to_sector, translate_phi,
    translate_phi_inverse, BlendParams, SectorPoint,
};

/// Newton tolerance (relative) for inverting the blended map.
const INVERSE_TOL: f64 = 1e-13;
const INVERSE_MAX_STEPS: usize = 60;

/// Sample count for the uniform-closeness precondition check.
const CLOSENESS_SAMPLES: usize = 256;

type Map1D = Box<dyn Fn(Complex64) -> Complex64 + Sync + Send>;

/// The blend rho_eta(|z|) f(z) + (1 - rho_eta(|z|)) phi(z): equal to f on
/// |z| < eta/2 and to the sector model phi on |z| >= eta.
pub struct BlendedMap {
    f: Map1D,
    params: BlendParams,
}

/// Blend a 1-D germ representative with the sector model map.
///
/// `f` must be defined (and close to lambda z + lambda z^{kq+1}) on the
/// bump support |z| < eta.
pub fn blend(f: impl Fn(Complex64) -> Complex64 + Sync + Send + 'static, params: BlendParams) -> BlendedMap {
    BlendedMap { f: Box::new(f), params }
}

impl BlendedMap {
    pub fn params(&self) -> &BlendParams {
        &self.params
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let rho = bump(z.norm(), self.params.eta);
        if rho == 1.0 {
            return Ok((self.f)(z));
        }
        let phi = model_phi(z, &self.params)?;
        if rho == 0.0 {
            return Ok(phi);
        }
        Ok(rho * (self.f)(z) + (1.0 - rho) * phi)
    }

    /// Solve eval(x) = target by a quasi-Newton iteration on R^2, seeded
    /// at the model preimage. Where the model preimage lies outside the
    /// bump support the blend equals the model and the seed is already
    /// exact. The finite-difference Jacobian is refreshed only when the
    /// iteration stalls.
    pub fn inverse(&self, target: Complex64) -> Result<Complex64> {
        let guess = model_phi_inverse(target, &self.params)?;
        if guess.norm() >= self.params.eta {
            return Ok(guess);
        }
        let scale = target.norm().max(1e-6);
        let mut x = guess;
        let mut fx = self.eval(x)? - target;
        let mut jac: Option<(Complex64, Complex64)> = None;
        let mut last_norm = f64::INFINITY;
        for _ in 0..INVERSE_MAX_STEPS {
            if fx.norm() < INVERSE_TOL * scale {
                return Ok(x);
            }
            if jac.is_none() || fx.norm() > 0.5 * last_norm {
                let h = 1e-7 * x.norm().max(1e-3);
                let fdx = (self.eval(x + Complex64::new(h, 0.0))? - target - fx) / h;
                let fdy = (self.eval(x + Complex64::new(0.0, h))? - target - fx) / h;
                jac = Some((fdx, fdy));
            }
            let (fdx, fdy) = jac.unwrap();
            // real 2x2 system [fdx.re fdy.re; fdx.im fdy.im] d = -fx
            let det = fdx.re * fdy.im - fdy.re * fdx.im;
            if det.abs() < 1e-300 {
                break;
            }
            let dre = (-fx.re * fdy.im + fx.im * fdy.re) / det;
            let dim = (-fx.im * fdx.re + fx.re * fdx.im) / det;
            x += Complex64::new(dre, dim);
            last_norm = fx.norm();
            fx = self.eval(x)? - target;
        }
        if fx.norm() < 1e-9 * scale {
            Ok(x)
        } else {
            Err(Error::NearSingularSystem { context: "blended-map inversion", pivot: fx.norm() })
        }
    }

    fn sector_fwd(&self, p: &SectorPoint) -> Result<SectorPoint> {
        let z = from_sector(p, self.params.k, self.params.q);
        to_sector(self.eval(z)?, self.params.k, self.params.q)
    }

    fn sector_inv(&self, p: &SectorPoint) -> Result<SectorPoint> {
        let z = from_sector(p, self.params.k, self.params.q);
        to_sector(self.inverse(z)?, self.params.k, self.params.q)
    }
}

/// sup over sampled points just inside the bump support of the chart
/// distance between the conjugated blend and the translation; errors when
/// the sup reaches kq / 4 (the strip bookkeeping breaks down beyond that).
pub fn uniform_closeness(map: &BlendedMap) -> Result<f64> {
    let params = map.params();
    let kq = f64::from(params.kq());
    let bound = kq / 4.0;
    let mut sup: f64 = 0.0;
    for i in 0..CLOSENESS_SAMPLES {
        let t = (i as f64 + 0.5) / CLOSENESS_SAMPLES as f64;
        // |z| spread over the blend annulus, angle winding several turns
        let r = params.eta * (0.5 + 0.49 * t);
        let z = Complex64::from_polar(r, 13.0 * std::f64::consts::TAU * t);
        let p = to_sector(z, params.k, params.q)?;
        let translated = translate_phi(&p, params)?;
        let mapped = map.sector_fwd(&p)?;
        let dist = mapped
            .express_in_chart(translated.sheet, translated.sector, params.kq())
            .map_or(f64::INFINITY, |w| (w - translated.w).norm());
        sup = sup.max(dist);
        if sup >= bound {
            return Err(Error::NotUniformlyClose { distance: sup, bound });
        }
    }
    Ok(sup)
}

/// Gamma_0 on the fundamental region: identity on the disk |w| <= R-hat
/// and on the right strip edge, the blend pullback of the identity on the
/// left edge, joined by linear interpolation in x between the two edge
/// values at the same height y. Input must lie in Omega.
fn gamma0(map: &BlendedMap, p: &SectorPoint) -> Result<SectorPoint> {
    let params = map.params();
    let kq = params.kq();
    let kqf = f64::from(kq);
    let r_hat = params.r_hat();
    if p.w.norm() <= r_hat {
        return Ok(*p);
    }
    let x = p.w.re;
    let y = p.w.im;
    debug_assert!((0.0..=kqf).contains(&x), "gamma0 called outside Omega");
    debug_assert_eq!(p.sheet, 0, "strip points away from the disk live on sheet 0");
    let i_prime = p.sector;
    let shift = (params.h * params.k) % kq;
    let i = (i_prime + kq - shift) % kq;
    let left_input = SectorPoint::new(0, i, Complex64::new(kqf, y), kq);
    let left_image = map.sector_fwd(&left_input)?;
    let w_left = left_image.express_in_chart(0, i_prime, kq).ok_or(Error::NotUniformlyClose {
        distance: f64::INFINITY,
        bound: kqf / 4.0,
    })?;
    let t = x / kqf;
    let w = (1.0 - t) * w_left + t * Complex64::new(kqf, y);
    Ok(SectorPoint::new(0, i_prime, w, kq))
}

fn in_omega(w: Complex64, r_hat: f64, kq: f64) -> bool {
    w.norm() <= r_hat || (0.0..=kq).contains(&w.re)
}

/// Evaluate the extended conjugacy at one z-space point, returning the
/// image and the orbit offset m used by the extension formula.
pub fn gamma_at(map: &BlendedMap, z: Complex64, max_iter: usize) -> Result<(Complex64, i32)> {
    let params = map.params();
    let kq = f64::from(params.kq());
    let r_hat = params.r_hat();
    let mut p = to_sector(z, params.k, params.q)?;
    let mut m: i32 = 0;
    if !in_omega(p.w, r_hat, kq) {
        let forward = p.w.re > kq;
        loop {
            p = if forward { translate_phi(&p, params)? } else { translate_phi_inverse(&p, params) };
            m += if forward { 1 } else { -1 };
            if in_omega(p.w, r_hat, kq) {
                break;
            }
            if m.unsigned_abs() as usize >= max_iter {
                return Err(Error::OrbitEscape { max_iter });
            }
        }
    }
    let mut g = gamma0(map, &p)?;
    if m > 0 {
        for _ in 0..m {
            g = map.sector_inv(&g)?;
        }
    } else {
        for _ in 0..(-m) {
            g = map.sector_fwd(&g)?;
        }
    }
    Ok((from_sector(&g, params.k, params.q), m))
}

/// Polar sampling grid for the conjugacy: log-spaced radii, uniform
/// angles.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_theta: usize,
    pub r_min: f64,
    pub r_max: f64,
}

impl GridSpec {
    /// Default annulus around the blend zone: covers [0.45 eta, 1.25 eta]
    /// so both the perturbed region and the identity zone are sampled.
    pub fn around_blend_zone(params: &BlendParams, n: usize) -> Self {
        Self { n_r: n, n_theta: n, r_min: 0.45 * params.eta, r_max: 1.25 * params.eta }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridNode {
    pub z: Complex64,
    pub image: Complex64,
    pub m: i32,
    pub covered: bool,
}

/// The sampled conjugacy Gamma_f, interpolated between nodes.
pub struct ConjugacyGrid {
    spec: GridSpec,
    params: BlendParams,
    nodes: Vec<GridNode>,
    uncovered: usize,
}

/// Construct Gamma_f on the grid: check the uniform-closeness hypothesis,
/// then run the orbit extension independently per node (nodes that escape
/// the iteration budget are recorded as uncovered, not fatal).
pub fn build_fundamental_conjugacy(
    map: &BlendedMap,
    spec: GridSpec,
    max_iter: usize,
) -> Result<ConjugacyGrid> {
    uniform_closeness(map)?;
    let params = *map.params();
    let nodes: Vec<GridNode> = (0..spec.n_r * spec.n_theta)
        .into_par_iter()
        .map(|idx| {
            let j = idx / spec.n_theta;
            let t = idx % spec.n_theta;
            let r = spec.r_min
                * (spec.r_max / spec.r_min).powf(j as f64 / (spec.n_r - 1).max(1) as f64);
            let theta = std::f64::consts::TAU * t as f64 / spec.n_theta as f64;
            let z = Complex64::from_polar(r, theta);
            match gamma_at(map, z, max_iter) {
                Ok((image, m)) => GridNode { z, image, m, covered: true },
                Err(_) => GridNode { z, image: z, m: 0, covered: false },
            }
        })
        .collect();
    let uncovered = nodes.iter().filter(|n| !n.covered).count();
    Ok(ConjugacyGrid { spec, params, nodes, uncovered })
}

impl ConjugacyGrid {
    pub fn nodes(&self) -> &[GridNode] {
        &self.nodes
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn params(&self) -> &BlendParams {
        &self.params
    }

    /// Count of nodes whose orbit extension failed.
    pub fn uncovered_count(&self) -> usize {
        self.uncovered
    }

    fn node(&self, j: usize, t: usize) -> &GridNode {
        &self.nodes[j * self.spec.n_theta + (t % self.spec.n_theta)]
    }

    /// Interpolated evaluation. The identity part is exact: the grid
    /// stores deviations Gamma(z) - z and interpolates those bilinearly in
    /// (log r, theta). Outside the bump support the map is the identity;
    /// below the inner radius the grid has no information and returns
    /// `None`.
    pub fn evaluate(&self, z: Complex64) -> Option<Complex64> {
        let r = z.norm();
        if r >= self.params.eta {
            return Some(z);
        }
        if r < self.spec.r_min || r > self.spec.r_max {
            return None;
        }
        let log_span = (self.spec.r_max / self.spec.r_min).ln();
        let jr = ((r / self.spec.r_min).ln() / log_span) * (self.spec.n_r - 1) as f64;
        let j0 = (jr.floor() as usize).min(self.spec.n_r - 2);
        let fj = jr - j0 as f64;
        let theta = {
            let a = z.arg();
            if a < 0.0 {
                a + std::f64::consts::TAU
            } else {
                a
            }
        };
        let tt = theta / std::f64::consts::TAU * self.spec.n_theta as f64;
        let t0 = (tt.floor() as usize) % self.spec.n_theta;
        let ft = tt - tt.floor();
        let corners = [
            self.node(j0, t0),
            self.node(j0 + 1, t0),
            self.node(j0, t0 + 1),
            self.node(j0 + 1, t0 + 1),
        ];
        if corners.iter().any(|n| !n.covered) {
            return None;
        }
        let dev = |n: &GridNode| n.image - n.z;
        let d = dev(corners[0]) * ((1.0 - fj) * (1.0 - ft))
            + dev(corners[1]) * (fj * (1.0 - ft))
            + dev(corners[2]) * ((1.0 - fj) * ft)
            + dev(corners[3]) * (fj * ft);
        Some(z + d)
    }

    /// Number of grid cells whose image quadrilateral is degenerate or
    /// orientation-reversed; zero certifies no fold-over at grid scale.
    pub fn fold_over_count(&self) -> usize {
        let mut count = 0;
        for j in 0..self.spec.n_r - 1 {
            for t in 0..self.spec.n_theta {
                let quad = [
                    self.node(j, t),
                    self.node(j + 1, t),
                    self.node(j + 1, t + 1),
                    self.node(j, t + 1),
                ];
                if quad.iter().any(|n| !n.covered) {
                    continue;
                }
                let mut area = 0.0;
                for e in 0..4 {
                    let a = quad[e].image;
                    let b = quad[(e + 1) % 4].image;
                    area += a.re * b.im - b.re * a.im;
                }
                if area <= 0.0 {
                    count += 1;
                }
            }
        }
        count
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub sup: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// sup over samples of |Gamma(phi(z)) - f_tilde(Gamma(z))| with Gamma read
/// from the grid by interpolation. Samples whose own or phi-image point
/// leaves the coverage are skipped and counted.
pub fn conjugacy_residual(
    grid: &ConjugacyGrid,
    map: &BlendedMap,
    samples: &[Complex64],
) -> Result<ResidualReport> {
    let params = grid.params();
    let mut sup: f64 = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for &z in samples {
        let phi_z = model_phi(z, params)?;
        match (grid.evaluate(phi_z), grid.evaluate(z)) {
            (Some(lhs), Some(gz)) => {
                let rhs = map.eval(gz)?;
                sup = sup.max((lhs - rhs).norm());
                evaluated += 1;
            }
            _ => skipped += 1,
        }
    }
    Ok(ResidualReport { sup, evaluated, skipped })
}

/// Forward orbit of the blended map, for petal visualization; stops early
/// if the orbit leaves the model's domain.
pub fn orbit_trace(map: &BlendedMap, z0: Complex64, steps: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut z = z0;
    out.push(z);
    for _ in 0..steps {
        match map.eval(z) {
            Ok(next) => {
                z = next;
                out.push(z);
            }
            Err(_) => break,
        }
    }
    out
}

/// CSV export of the sampled conjugacy: one row per node with the node's
/// equivariance residual where it is computable.
pub fn write_grid_csv(grid: &ConjugacyGrid, map: &BlendedMap, path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "re_z,im_z,re_gz,im_gz,m,residual")?;
    for node in grid.nodes() {
        let residual = if node.covered {
            model_phi(node.z, grid.params())
                .ok()
                .and_then(|phi_z| grid.evaluate(phi_z))
                .and_then(|lhs| map.eval(node.image).ok().map(|rhs| (lhs - rhs).norm()))
        } else {
            None
        };
        match residual {
            Some(r) => writeln!(
                file,
                "{},{},{},{},{},{}",
                node.z.re, node.z.im, node.image.re, node.image.im, node.m, r
            )?,
            None => writeln!(
                file,
                "{},{},{},{},{},",
                node.z.re, node.z.im, node.image.re, node.image.im, node.m
            )?,
        }
    }
    Ok(())
}

/// CSV export of an orbit trace: step, re(z), im(z).
pub fn write_orbit_csv(orbit: &[Complex64], path: &Path) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "step,re_z,im_z")?;
    for (step, z) in orbit.iter().enumerate() {
        writeln!(file, "{},{},{}", step, z.re, z.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_map(params: BlendParams) -> BlendedMap {
        blend(move |z| model_phi(z, &params).unwrap(), params)
    }

    fn parabolic_map(params: BlendParams) -> BlendedMap {
        let lambda = params.lambda();
        let kq = params.kq();
        blend(
            move |z| lambda * z + lambda * z.powu(kq + 1) + z.powu(kq + 2),
            params,
        )
    }

    #[test]
    fn blend_of_model_is_model() {
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = model_map(params);
        for i in 0..50 {
            let r = params.eta * (0.2 + 0.02 * i as f64);
            let z = Complex64::from_polar(r, 0.31 * i as f64);
            let blended = map.eval(z).unwrap();
            let phi = model_phi(z, &params).unwrap();
            assert!((blended - phi).norm() < 1e-14);
        }
    }

    #[test]
    fn blend_equals_model_outside_support() {
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = parabolic_map(params);
        let z = Complex64::from_polar(params.eta * 1.01, 0.7);
        assert_eq!(map.eval(z).unwrap(), model_phi(z, &params).unwrap());
        // and equals f inside eta / 2
        let z = Complex64::from_polar(params.eta * 0.4, 0.7);
        let lambda = params.lambda();
        let f = lambda * z + lambda * z.powu(3) + z.powu(4);
        assert_eq!(map.eval(z).unwrap(), f);
    }

    #[test]
    fn blend_is_between_endpoints() {
        // |f_tilde - phi| <= |f - phi| pointwise on the transition annulus
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = parabolic_map(params);
        let lambda = params.lambda();
        for i in 0..40 {
            let r = params.eta * (0.5 + 0.0125 * i as f64);
            let z = Complex64::from_polar(r, 1.1 * i as f64);
            let phi = model_phi(z, &params).unwrap();
            let f = lambda * z + lambda * z.powu(3) + z.powu(4);
            let blended = map.eval(z).unwrap();
            assert!((blended - phi).norm() <= (f - phi).norm() + 1e-15);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = parabolic_map(params);
        for i in 0..60 {
            let r = params.eta * (0.3 + 0.015 * i as f64);
            let z = Complex64::from_polar(r, 0.17 * i as f64);
            let y = map.eval(z).unwrap();
            let back = map.inverse(y).unwrap();
            assert!((back - z).norm() < 1e-10, "inverse failed at {z}: {back}");
        }
    }

    #[test]
    fn gamma_is_identity_for_model_input() {
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = model_map(params);
        let spec = GridSpec { n_r: 24, n_theta: 24, r_min: 0.35 * params.eta, r_max: 1.25 * params.eta };
        let grid = build_fundamental_conjugacy(&map, spec, 20_000).unwrap();
        assert_eq!(grid.uncovered_count(), 0);
        for node in grid.nodes() {
            assert!(
                (node.image - node.z).norm() < 1e-10,
                "Gamma moved {} to {} (m = {})",
                node.z,
                node.image,
                node.m
            );
        }
    }

    #[test]
    fn gamma_fixes_outside_eta_and_conjugates_inside() {
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = parabolic_map(params);
        let spec = GridSpec { n_r: 40, n_theta: 40, r_min: 0.35 * params.eta, r_max: 1.25 * params.eta };
        let grid = build_fundamental_conjugacy(&map, spec, 20_000).unwrap();
        assert_eq!(grid.uncovered_count(), 0);
        for node in grid.nodes() {
            if node.z.norm() >= params.eta {
                assert!((node.image - node.z).norm() < 1e-12);
            }
        }
        assert_eq!(grid.fold_over_count(), 0);
        let samples: Vec<Complex64> = (0..400)
            .map(|i| {
                let t = i as f64 / 400.0;
                Complex64::from_polar(
                    0.45 * params.eta + 0.7 * params.eta * t,
                    std::f64::consts::TAU * (7.0 * t).fract(),
                )
            })
            .collect();
        let report = conjugacy_residual(&grid, &map, &samples).unwrap();
        assert!(report.evaluated > 300);
        assert!(report.sup < 1e-3, "residual {}", report.sup);
    }

    #[test]
    fn exhausted_iteration_budget_marks_nodes_uncovered() {
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = parabolic_map(params);
        let spec = GridSpec::around_blend_zone(&params, 12);
        let grid = build_fundamental_conjugacy(&map, spec, 1).unwrap();
        assert!(grid.uncovered_count() > 0);
        // interpolation refuses cells touching uncovered nodes
        let probe = Complex64::from_polar(0.6 * params.eta, 0.3);
        assert!(grid.evaluate(probe).is_none());
        // while the identity zone still answers
        assert!(grid.evaluate(Complex64::from_polar(1.1 * params.eta, 0.3)).is_some());
    }

    #[test]
    fn closeness_check_rejects_wild_maps() {
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = blend(move |z| 40.0 * z, params);
        assert!(matches!(
            build_fundamental_conjugacy(
                &map,
                GridSpec::around_blend_zone(&params, 8),
                1000
            ),
            Err(Error::NotUniformlyClose { .. })
        ));
    }

    #[test]
    fn orbit_trace_contracts_into_petal() {
        // lambda = -1, kq = 2: orbits of the parabolic model drift toward 0
        let params = BlendParams::defaults(1, 2, 1).unwrap();
        let map = parabolic_map(params);
        // seed off the real axis: its w-line stays clear of the domain edge
        let seed = Complex64::from_polar(0.6 * params.eta, std::f64::consts::FRAC_PI_4);
        let orbit = orbit_trace(&map, seed, 400);
        assert_eq!(orbit.len(), 401);
        assert!(orbit.last().unwrap().norm() < 0.5 * orbit[0].norm());
        // a real-axis seed runs into the repelling direction and the trace
        // stops at the domain edge
        let escaping = orbit_trace(&map, Complex64::new(0.6 * params.eta, 0.0), 400);
        assert!(escaping.len() < 401);
    }
}
