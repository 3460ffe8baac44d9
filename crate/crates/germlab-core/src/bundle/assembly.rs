//! Assembly of the bundle-conjugacy inputs for a classified germ: the
//! two-stage blend (germ toward the parabolic model, then toward the
//! linear part), its axis dynamics, the normal-block Jacobian cocycle
//! over the axis, and the frame/trivialization plumbing that turns cone
//! frames into trivialized fiber systems.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bundle::trivialization_from_frame;
use crate::error::{Error, Result};
use crate::jet::{GermJet, PolyJet};
use crate::sector::bump;

/// The diffeomorphism rho_eta (rho_{eta/2} f + (1 - rho_{eta/2}) m) +
/// (1 - rho_eta) L restricted to the data the bundle experiments need:
/// axis dynamics and the tail-block differential along the axis.
///
/// `f` must be axis-invariant with a first coordinate depending on z1
/// alone (the post-normalization, post-straightening shape); the model
/// tail is diagonal, so the whole blend is block-diagonal along the axis.
pub struct TwoStageBlend {
    axis_poly: PolyJet,
    model_axis: Arc<dyn Fn(Complex64) -> Complex64 + Sync + Send>,
    tail_jac_jets: Vec<Vec<PolyJet>>,
    model_tail: DMatrix<Complex64>,
    linear_tail: DMatrix<Complex64>,
    lambda1: Complex64,
    pub eta: f64,
}

impl TwoStageBlend {
    /// Assemble from a prepared germ. `model_axis` is the 1-D model the
    /// inner blend limits to on the axis (the sector map for case (ii),
    /// lambda_1 z for case (i)); the model tail is the diagonal part of
    /// the linear tail.
    pub fn new(
        f: &GermJet,
        model_axis: Arc<dyn Fn(Complex64) -> Complex64 + Sync + Send>,
        eta: f64,
    ) -> Result<Self> {
        let n = f.dimension();
        if n < 2 {
            return Err(Error::InvalidInput("bundle assembly needs n >= 2".into()));
        }
        let defect = crate::center::axis_invariance_defect(f);
        if defect > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "two-stage blend needs an invariant axis (defect {defect:.3e})"
            )));
        }
        let first = f.component(0);
        for (p, _) in first.terms() {
            if !p.is_pure_first() {
                return Err(Error::InvalidInput(
                    "two-stage blend needs a first coordinate in z1 alone (normalize first)".into(),
                ));
            }
        }
        let tail_jac_jets = (1..n)
            .map(|i| (1..n).map(|j| f.component(i).partial_derivative(j)).collect())
            .collect();
        let a = f.linear_part();
        let linear_tail = DMatrix::from_fn(n - 1, n - 1, |i, j| a[(i + 1, j + 1)]);
        let model_tail = DMatrix::from_fn(
            n - 1,
            n - 1,
            |i, j| if i == j { a[(i + 1, i + 1)] } else { Complex64::default() },
        );
        Ok(Self {
            axis_poly: first.restrict_to_first_axis(),
            model_axis,
            tail_jac_jets,
            model_tail,
            linear_tail,
            lambda1: a[(0, 0)],
            eta,
        })
    }

    pub fn lambda1(&self) -> Complex64 {
        self.lambda1
    }

    pub fn tail_dim(&self) -> usize {
        self.linear_tail.nrows()
    }

    /// First-coordinate dynamics on the axis.
    pub fn axis_fwd(&self, x: Complex64) -> Complex64 {
        let r = x.norm();
        let rho_o = bump(r, self.eta);
        if rho_o == 0.0 {
            return self.lambda1 * x;
        }
        let rho_i = bump(r, self.eta / 2.0);
        let inner = if rho_i == 0.0 {
            (self.model_axis)(x)
        } else if rho_i == 1.0 {
            self.axis_poly.evaluate(&[x])
        } else {
            rho_i * self.axis_poly.evaluate(&[x]) + (1.0 - rho_i) * (self.model_axis)(x)
        };
        rho_o * inner + (1.0 - rho_o) * self.lambda1 * x
    }

    /// Newton inverse of the axis dynamics.
    pub fn axis_inv(&self, target: Complex64) -> Result<Complex64> {
        let scale = target.norm().max(1e-9);
        let mut x = target / self.lambda1;
        for _ in 0..60 {
            let fx = self.axis_fwd(x) - target;
            if fx.norm() < 1e-13 * scale {
                return Ok(x);
            }
            let h = 1e-7 * x.norm().max(1e-4);
            let fdx = (self.axis_fwd(x + Complex64::new(h, 0.0)) - target - fx) / h;
            let fdy = (self.axis_fwd(x + Complex64::new(0.0, h)) - target - fx) / h;
            let det = fdx.re * fdy.im - fdy.re * fdx.im;
            if det.abs() < 1e-300 {
                break;
            }
            x += Complex64::new(
                (-fx.re * fdy.im + fx.im * fdy.re) / det,
                (-fx.im * fdx.re + fx.re * fdx.im) / det,
            );
        }
        let fx = self.axis_fwd(x) - target;
        if fx.norm() < 1e-9 * scale {
            Ok(x)
        } else {
            Err(Error::NearSingularSystem { context: "axis inversion", pivot: fx.norm() })
        }
    }

    /// Tail-block differential at the axis point x: the blend of the
    /// germ's tail Jacobian with the diagonal model tail and the linear
    /// tail. Block-diagonality along the axis makes this exact.
    pub fn tail_jac(&self, x: Complex64) -> DMatrix<Complex64> {
        let r = x.norm();
        let rho_o = bump(r, self.eta);
        if rho_o == 0.0 {
            return self.linear_tail.clone();
        }
        let rho_i = bump(r, self.eta / 2.0);
        let m = self.tail_dim();
        let point = {
            let mut z = vec![Complex64::default(); m + 1];
            z[0] = x;
            z
        };
        let mut inner = self.model_tail.clone();
        if rho_i > 0.0 {
            for i in 0..m {
                for j in 0..m {
                    let df = self.tail_jac_jets[i][j].evaluate(&point);
                    inner[(i, j)] =
                        rho_i * df + (1.0 - rho_i) * self.model_tail[(i, j)];
                }
            }
        }
        inner * Complex64::new(rho_o, 0.0) + &self.linear_tail * Complex64::new(1.0 - rho_o, 0.0)
    }
}

/// Power-iterate the tail cocycle at one axis point: pull the model
/// stable frame back along the forward orbit and push the unstable frame
/// along the backward orbit, until deepening moves the frames by less
/// than 1e-10. Frames live in the (n-1)-dimensional tail space, ordered
/// stable block first.
pub fn tail_splitting(
    blend: &TwoStageBlend,
    x: Complex64,
    k: usize,
    iters: usize,
) -> Result<(DMatrix<Complex64>, DMatrix<Complex64>)> {
    let m = blend.tail_dim();
    let l = m - k;
    const TOL: f64 = 1e-10;

    let mut forward = vec![x];
    for _ in 0..iters {
        forward.push(blend.axis_fwd(*forward.last().unwrap()));
    }
    let mut backward = vec![x];
    if l > 0 {
        for _ in 0..iters {
            backward.push(blend.axis_inv(*backward.last().unwrap())?);
        }
    }
    let model = |offset: usize, width: usize| {
        DMatrix::<Complex64>::from_fn(m, width, |r, c| {
            if r == offset + c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::default()
            }
        })
    };
    let orth = |mut f: DMatrix<Complex64>| -> Result<DMatrix<Complex64>> {
        for c in 0..f.ncols() {
            for p in 0..c {
                let proj: Complex64 = (0..m).map(|r| f[(r, p)].conj() * f[(r, c)]).sum();
                for r in 0..m {
                    let adj = proj * f[(r, p)];
                    f[(r, c)] -= adj;
                }
            }
            let norm = f.column(c).norm();
            if norm < 1e-14 {
                return Err(Error::NearSingularSystem { context: "tail frame", pivot: norm });
            }
            for r in 0..m {
                f[(r, c)] /= Complex64::new(norm, 0.0);
            }
        }
        Ok(f)
    };

    let stable = if k == 0 {
        DMatrix::zeros(m, 0)
    } else {
        let mut prev = model(0, k);
        let mut found = None;
        for depth in 1..=iters {
            let mut frame = model(0, k);
            for j in (0..depth).rev() {
                let jac = blend.tail_jac(forward[j]);
                frame = jac.lu().solve(&frame).ok_or(Error::NearSingularSystem {
                    context: "tail pullback",
                    pivot: 0.0,
                })?;
                frame = orth(frame)?;
            }
            let gap = crate::bundle::frame_distance(&prev, &frame);
            prev = frame.clone();
            if gap < TOL {
                found = Some(frame);
                break;
            }
        }
        found.ok_or(Error::ConeNotConverged { iters, last_gap: f64::NAN })?
    };
    let unstable = if l == 0 {
        DMatrix::zeros(m, 0)
    } else {
        let mut prev = model(k, l);
        let mut found = None;
        for depth in 1..=iters {
            let mut frame = model(k, l);
            for j in (1..=depth).rev() {
                frame = blend.tail_jac(backward[j]) * frame;
                frame = orth(frame)?;
            }
            let gap = crate::bundle::frame_distance(&prev, &frame);
            prev = frame.clone();
            if gap < TOL {
                found = Some(frame);
                break;
            }
        }
        found.ok_or(Error::ConeNotConverged { iters, last_gap: f64::NAN })?
    };
    Ok((stable, unstable))
}

/// Memoizing frame/trivialization provider over axis points. Keys are the
/// exact bit patterns of the base point, so the deterministic orbit
/// recomputation always hits the cache.
type TrivializationEntry = (DMatrix<Complex64>, DMatrix<Complex64>, f64);

pub struct FrameCache {
    blend: Arc<TwoStageBlend>,
    k: usize,
    iters: usize,
    cache: Mutex<HashMap<(u64, u64), TrivializationEntry>>,
}

impl FrameCache {
    pub fn new(blend: Arc<TwoStageBlend>, k: usize, iters: usize) -> Self {
        Self { blend, k, iters, cache: Mutex::new(HashMap::new()) }
    }

    /// Trivializations (stable, unstable) at x plus the measured
    /// gamma-closeness of both to the coordinate inclusions.
    pub fn trivializations(&self, x: Complex64) -> TrivializationEntry {
        let key = (x.re.to_bits(), x.im.to_bits());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let (stable, unstable) =
            tail_splitting(&self.blend, x, self.k, self.iters).expect("tail splitting");
        let mut gamma: f64 = 0.0;
        let pi_s = if self.k > 0 {
            let (pi, g) = trivialization_from_frame(&stable, 0).expect("stable trivialization");
            gamma = gamma.max(g);
            pi
        } else {
            stable
        };
        let pi_u = if unstable.ncols() > 0 {
            let (pi, g) =
                trivialization_from_frame(&unstable, self.k).expect("unstable trivialization");
            gamma = gamma.max(g);
            pi
        } else {
            unstable
        };
        let entry = (pi_s, pi_u, gamma);
        self.cache.lock().unwrap().insert(key, entry.clone());
        entry
    }

    /// Trivialized stable fiber matrix at x (maps fiber over x to fiber
    /// over axis_fwd(x)).
    pub fn stable_fiber(&self, x: Complex64) -> DMatrix<Complex64> {
        let (pi_x, _, _) = self.trivializations(x);
        let (pi_fx, _, _) = self.trivializations(self.blend.axis_fwd(x));
        induced_fiber_matrix(&self.blend.tail_jac(x), &pi_x, &pi_fx)
    }

    /// Trivialized unstable fiber matrix at x.
    pub fn unstable_fiber(&self, x: Complex64) -> DMatrix<Complex64> {
        let (_, pi_x, _) = self.trivializations(x);
        let (_, pi_fx, _) = self.trivializations(self.blend.axis_fwd(x));
        induced_fiber_matrix(&self.blend.tail_jac(x), &pi_x, &pi_fx)
    }
}

/// Permute the trailing coordinates so the stable eigenvalues precede the
/// unstable ones, as the splitting machinery assumes. Jordan-coupled rows
/// carry equal eigenvalues and stay adjacent under the stable sort.
/// Returns the permuted germ, its re-analyzed spectral data, and the
/// splitting dimensions (1, k, l).
pub fn sort_for_splitting(
    f: &GermJet,
    s: &crate::spectral::SpectralData,
) -> Result<(GermJet, crate::spectral::SpectralData, (usize, usize, usize))> {
    let n = f.dimension();
    let mut perm: Vec<usize> = vec![0];
    perm.extend((1..n).filter(|&i| s.eigenvalues[i].norm() < 1.0));
    let k = perm.len() - 1;
    perm.extend((1..n).filter(|&i| s.eigenvalues[i].norm() > 1.0));
    let l = n - 1 - k;
    let sorted = if perm.iter().enumerate().all(|(i, &p)| i == p) {
        f.clone()
    } else {
        let mut p_mat = DMatrix::<Complex64>::zeros(n, n);
        for (new, &old) in perm.iter().enumerate() {
            p_mat[(new, old)] = Complex64::new(1.0, 0.0);
        }
        let p_germ = GermJet::linear(p_mat, f.trunc_degree())?;
        GermJet::conjugate(&p_germ, f)?
    };
    let sorted_s = crate::spectral::analyze_linear_part(
        sorted.linear_part(),
        64,
        s.tol,
        s.moduli_margin,
    )?;
    Ok((sorted, sorted_s, (1, k, l)))
}

/// The fiber map induced on trivialized coordinates: pinv(Pi_fx) jac Pi_x.
pub fn induced_fiber_matrix(
    jac: &DMatrix<Complex64>,
    pi_x: &DMatrix<Complex64>,
    pi_fx: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let gram = pi_fx.adjoint() * pi_fx;
    let rhs = pi_fx.adjoint() * jac * pi_x;
    gram.lu().solve(&rhs).expect("trivialization Gram matrix is invertible")
}
