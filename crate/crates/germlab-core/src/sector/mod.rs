//! The sector manifold: a kq-sheeted cover of the punctured plane carrying
//! the coordinate change that turns the parabolic model dynamics into the
//! translation w -> w - kq, plus the bump-function blending and the
//! fundamental-domain conjugacy built on top of it.
//!
//! Chart bookkeeping: two sheets l = 0, 1, each with sectors
//! i = 0, ..., kq-1. Sheet 0 reads arguments in (0, 2pi) (slit along the
//! positive real axis), sheet 1 in (-pi, pi) (slit along the negative real
//! axis). Upper half-plane points glue charts with equal sector index,
//! lower half-plane points glue (0, i) to (1, i-1 mod kq).

mod conjugacy;

use num_complex::Complex64;

pub use conjugacy::{
    blend, build_fundamental_conjugacy, conjugacy_residual, gamma_at, orbit_trace,
    uniform_closeness, write_grid_csv, write_orbit_csv, BlendedMap, ConjugacyGrid, GridNode,
    GridSpec, ResidualReport,
};

use crate::error::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// A point of the sector manifold in chart coordinates.
///
/// `w` is the literal covering-projection value; (sheet, sector) selects
/// the chart. Points are kept in canonical form: sheet 0 whenever the
/// argument of w lies in (0, 2pi), sheet 1 exactly on the positive real
/// axis (the sheet-0 slit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorPoint {
    pub sheet: u8,
    pub sector: u32,
    pub w: Complex64,
}

impl SectorPoint {
    pub fn new(sheet: u8, sector: u32, w: Complex64, kq: u32) -> Self {
        canonicalize(sheet, sector, w, kq)
    }

    /// The chart argument of w: [0, 2pi) on sheet 0, (-pi, pi] on sheet 1.
    pub fn chart_arg(&self) -> f64 {
        let a = self.w.arg();
        if self.sheet == 0 && a <= 0.0 {
            a + TAU
        } else {
            a
        }
    }

    /// Express this point in the chart (sheet, sector), following the
    /// gluing relation; `None` if the point does not lie in that chart.
    pub fn express_in_chart(&self, sheet: u8, sector: u32, kq: u32) -> Option<Complex64> {
        for (l, i) in self.chart_labels(kq) {
            if l == sheet && i == sector {
                return Some(self.w);
            }
        }
        None
    }

    /// All (sheet, sector) labels this point carries under the gluing.
    fn chart_labels(&self, kq: u32) -> Vec<(u8, u32)> {
        let a = self.w.arg(); // (-pi, pi]
        let j = self.sector;
        if self.sheet == 0 {
            if a > 0.0 && a < std::f64::consts::PI {
                vec![(0, j), (1, j)]
            } else if a < 0.0 || a == std::f64::consts::PI {
                // lower half (arg in (pi, 2pi) as read in sheet 0); the
                // negative real axis itself lives only on sheet 0
                if a == std::f64::consts::PI {
                    vec![(0, j)]
                } else {
                    vec![(0, j), (1, (j + kq - 1) % kq)]
                }
            } else {
                vec![(0, j)]
            }
        } else if a > 0.0 && a < std::f64::consts::PI {
            vec![(1, j), (0, j)]
        } else if a < 0.0 {
            vec![(1, j), (0, (j + 1) % kq)]
        } else {
            // positive real axis: sheet 1 only
            vec![(1, j)]
        }
    }
}

fn canonicalize(sheet: u8, sector: u32, w: Complex64, kq: u32) -> SectorPoint {
    let a = w.arg();
    let on_positive_axis = w.im == 0.0 && w.re > 0.0;
    if on_positive_axis {
        // only sheet-1 charts contain the positive real axis
        return SectorPoint { sheet: 1, sector: sector % kq, w };
    }
    if sheet == 1 {
        let i = if a > 0.0 { sector % kq } else { (sector + 1) % kq };
        return SectorPoint { sheet: 0, sector: i, w };
    }
    SectorPoint { sheet: 0, sector: sector % kq, w }
}

/// The biholomorphism gamma onto the sector manifold: z in the sector
/// S_l(i) maps to the chart point (l, i, z^{-kq}).
///
/// Points on a sheet-0 sector boundary ray sit on their chart's slit; they
/// are assigned the (unique) sheet-1 chart containing them.
pub fn to_sector(z: Complex64, k: u32, q: u32) -> Result<SectorPoint> {
    if z.norm() == 0.0 {
        return Err(Error::SectorAtOrigin);
    }
    let kq = k * q;
    let kqf = f64::from(kq);
    let theta = {
        let a = z.arg();
        if a < 0.0 {
            a + TAU
        } else {
            a
        }
    };
    let r = z.norm().powi(-(kq as i32));
    let s0 = kqf * theta / TAU;
    let i0 = (s0.floor() as i64).rem_euclid(kq as i64) as u32;
    if s0.fract() == 0.0 {
        // exactly on a sheet-0 boundary ray: interior of S_1(i0 - 1)
        let j = (i0 + kq - 1) % kq;
        let w = Complex64::from_polar(r, 0.0);
        return Ok(SectorPoint::new(1, j, w, kq));
    }
    // chart argument in (0, 2pi): 2 pi (i0 + 1) - kq theta
    let arg0 = TAU * (f64::from(i0) + 1.0) - kqf * theta;
    let w = Complex64::from_polar(r, arg0);
    Ok(SectorPoint::new(0, i0, w, kq))
}

/// Inverse of [`to_sector`]: the unique kq-th root of 1/w in S_l(i).
pub fn from_sector(p: &SectorPoint, k: u32, q: u32) -> Complex64 {
    let kq = f64::from(k * q);
    let r = p.w.norm().powf(-1.0 / kq);
    let theta = (TAU * (f64::from(p.sector) + 1.0) - p.chart_arg()) / kq;
    Complex64::from_polar(r, theta)
}

/// Geometry and arithmetic parameters of the sector construction.
///
/// lambda = e^{2 pi i h / q} with gcd(h, q) = 1; `r0` is the translation
/// domain radius R > kq; `eta` is the bump radius, constrained so the
/// bump's support maps to |w| >= 4 r0 (eta^{-kq} >= 4 r0), which keeps the
/// whole blend zone inside the model map's domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendParams {
    pub k: u32,
    pub q: u32,
    pub h: u32,
    pub r0: f64,
    pub eta: f64,
}

impl BlendParams {
    pub fn new(k: u32, q: u32, h: u32, r0: f64, eta: f64) -> Result<Self> {
        if k == 0 || q == 0 || h == 0 || h > q {
            return Err(Error::InvalidBlendGeometry {
                reason: format!("need k >= 1 and 1 <= h <= q, got k = {k}, q = {q}, h = {h}"),
            });
        }
        if gcd(h, q) != 1 {
            return Err(Error::InvalidBlendGeometry {
                reason: format!("h = {h} and q = {q} are not coprime"),
            });
        }
        let kq = f64::from(k * q);
        if r0 <= kq {
            return Err(Error::InvalidBlendGeometry {
                reason: format!("need r0 > kq, got r0 = {r0}, kq = {kq}"),
            });
        }
        if eta <= 0.0 || eta.powf(-kq) < 4.0 * r0 {
            return Err(Error::InvalidBlendGeometry {
                reason: format!("need eta^(-kq) >= 4 r0, got eta = {eta}, r0 = {r0}"),
            });
        }
        Ok(Self { k, q, h, r0, eta })
    }

    /// Default geometry: R = 2 kq and eta placing the bump support at
    /// |w| >= 5 r0.
    pub fn defaults(k: u32, q: u32, h: u32) -> Result<Self> {
        let kq = f64::from(k * q);
        let r0 = 2.0 * kq;
        let eta = (5.0 * r0).powf(-1.0 / kq);
        Self::new(k, q, h, r0, eta)
    }

    pub fn kq(&self) -> u32 {
        self.k * self.q
    }

    pub fn lambda(&self) -> Complex64 {
        Complex64::from_polar(1.0, TAU * f64::from(self.h) / f64::from(self.q))
    }

    /// Cutoff radius R-hat = eta^{-kq}: the bump support {|z| < eta} in
    /// w-coordinates.
    pub fn r_hat(&self) -> f64 {
        self.eta.powf(-f64::from(self.kq()))
    }

    /// The paper-nominal model domain radius r0^{-kq} in z-space.
    pub fn rho_nominal(&self) -> f64 {
        self.r0.powf(-f64::from(self.kq()))
    }

    /// Largest |z| on which the model map is evaluated: |w| > r0.
    pub fn z_domain_radius(&self) -> f64 {
        self.r0.powf(-1.0 / f64::from(self.kq()))
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// The translation Phi on the sector manifold: subtract kq from w and
/// advance the sector index by h k. Defined for |w| > r0.
pub fn translate_phi(p: &SectorPoint, params: &BlendParams) -> Result<SectorPoint> {
    let kq = params.kq();
    if p.w.norm() <= params.r0 {
        return Err(Error::SectorOutOfDomain { modulus: p.w.norm(), radius: params.r0 });
    }
    let w = p.w - Complex64::new(f64::from(kq), 0.0);
    let sector = (p.sector + params.h * params.k) % kq;
    Ok(SectorPoint::new(p.sheet, sector, w, kq))
}

/// Inverse translation: add kq to w and rewind the sector index.
pub fn translate_phi_inverse(p: &SectorPoint, params: &BlendParams) -> SectorPoint {
    let kq = params.kq();
    let w = p.w + Complex64::new(f64::from(kq), 0.0);
    let shift = (params.h * params.k) % kq;
    let sector = (p.sector + kq - shift) % kq;
    SectorPoint::new(p.sheet, sector, w, kq)
}

/// The model map phi = gamma^{-1} . Phi . gamma, with Taylor expansion
/// lambda z + lambda z^{kq+1} + O(z^{kq+2}) at the origin.
pub fn model_phi(z: Complex64, params: &BlendParams) -> Result<Complex64> {
    let p = to_sector(z, params.k, params.q)?;
    let moved = translate_phi(&p, params)?;
    Ok(from_sector(&moved, params.k, params.q))
}

/// Inverse of the model map on its image.
pub fn model_phi_inverse(z: Complex64, params: &BlendParams) -> Result<Complex64> {
    let p = to_sector(z, params.k, params.q)?;
    let moved = translate_phi_inverse(&p, params);
    Ok(from_sector(&moved, params.k, params.q))
}

/// Radial C-infinity cutoff: 1 on [0, eta/2], 0 on [eta, inf), with the
/// transition profile t -> e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}) rescaled to
/// [eta/2, eta]. The profile's maximal slope is 2, so the derivative bound
/// is 4 / eta.
pub fn bump(r: f64, eta: f64) -> f64 {
    assert!(eta > 0.0, "bump radius must be positive");
    if r < eta / 2.0 {
        1.0
    } else if r >= eta {
        0.0
    } else {
        1.0 - smoothstep((r - eta / 2.0) / (eta / 2.0))
    }
}

fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Analytic radial derivative of [`bump`]; bounded by 4 / eta in modulus.
pub fn bump_derivative(r: f64, eta: f64) -> f64 {
    if r <= eta / 2.0 || r >= eta {
        return 0.0;
    }
    let t = (r - eta / 2.0) / (eta / 2.0);
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    let g_prime = a * b * (t.powi(-2) + (1.0 - t).powi(-2)) / (a + b).powi(2);
    -g_prime * 2.0 / eta
}
