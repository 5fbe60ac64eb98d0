//! Curvature fields and covariant operators on a [`WarpedMetric`].
//!
//! With `ν = a dt` the unit radial covector and `h = f'/(a f)` the mean
//! curvature coefficient of the orbit spheres, an invariant 2-tensor is
//! `T = A ν⊗ν + B (g − ν⊗ν)` and
//!
//! * `∇²u = u_rr ν⊗ν + h u_r (g − ν⊗ν)`,
//! * `ΔT = (ΔA − 6h²(A − B)) ν⊗ν + (ΔB + 2h²(A − B)) (g − ν⊗ν)`,
//! * `div T = (A_r + 3h(A − B)) ν`,
//!
//! where `u_r = u'/a` is the arc-length derivative.
//!
//! Near the poles the warp is handled as `f = S e^v` with the exact profile
//! `S = sin(ct)/c`, `c = π/L`. Quotients such as `(1 − (f'/a)²)/f²` are then
//! formed from derivatives of the smooth even field `v`, whose truncation
//! errors vanish at the poles at the rate the quotients need. Derivatives of
//! even fields use fourth-order central stencils with mirrored ghost nodes;
//! pole values use the exact limits `h u_r → u_rr` and `h²(A − B) → (A − B)_rr / 2`.
//!
//! [`laplacian_scalar`] is the separate second-order finite-volume operator
//! used as an independent reference in the identity checks.

use crate::error::{Error, Result};
use crate::metric::{InvariantSym2Field, RadialField, WarpedMetric, OMEGA3};

/// Curvature fields of a warped metric.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryCache {
    /// Sectional curvature of planes containing the radial direction.
    pub k_rad: RadialField,
    /// Sectional curvature of planes tangent to the orbit spheres.
    pub k_sph: RadialField,
    pub s: RadialField,
    pub r: InvariantSym2Field,
    pub z: InvariantSym2Field,
    /// `K_sph − K_rad`; the traceless Ricci tensor is `(−3φ/2, φ/2)`.
    pub phi: RadialField,
    pub rm_norm_sq: RadialField,
    /// `a f³ ω₃`, the density of `dV` against `dt`.
    pub volume_density: RadialField,
}

impl GeometryCache {
    pub fn z_norm_sq(&self) -> RadialField {
        self.phi.map(|p| 3.0 * p * p)
    }

    pub fn sup_rm(&self) -> f64 {
        self.rm_norm_sq.max_abs().sqrt()
    }
}

/// Mirror index for an even extension about both poles.
#[inline]
fn mirror(k: isize, n: isize) -> usize {
    let k = if k < 0 { -k } else { k };
    let k = if k > n { 2 * n - k } else { k };
    k as usize
}

/// Fourth-order first and second derivatives of an even field.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EvenStencil {
    n: isize,
    dt: f64,
}

impl EvenStencil {
    pub(crate) fn new(metric: &WarpedMetric) -> Self {
        EvenStencil { n: metric.intervals() as isize, dt: metric.spacing() }
    }

    pub(crate) fn d1(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let at = |k: isize| u[mirror(k, n)];
        (0..=n)
            .map(|k| {
                if k == 0 || k == n {
                    0.0
                } else {
                    (-at(k + 2) + 8.0 * at(k + 1) - 8.0 * at(k - 1) + at(k - 2)) / (12.0 * self.dt)
                }
            })
            .collect()
    }

    pub(crate) fn d2(&self, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let at = |k: isize| u[mirror(k, n)];
        let h2 = 12.0 * self.dt * self.dt;
        (0..=n)
            .map(|k| {
                (-at(k + 2) + 16.0 * at(k + 1) - 30.0 * at(k) + 16.0 * at(k - 1) - at(k - 2)) / h2
            })
            .collect()
    }
}

/// Per-metric data shared by the curvature computation and the operators.
pub(crate) struct WarpFrame {
    pub(crate) stencil: EvenStencil,
    pub(crate) n: usize,
    pub(crate) a: Vec<f64>,
    pub(crate) da: Vec<f64>,
    /// `f'/(a f)`, meaningful at interior nodes only.
    pub(crate) h: Vec<f64>,
    pub(crate) k_rad: Vec<f64>,
    pub(crate) k_sph: Vec<f64>,
    pub(crate) volume_density: Vec<f64>,
}

impl WarpFrame {
    pub(crate) fn new(m: &WarpedMetric) -> Self {
        let n = m.intervals();
        let stencil = EvenStencil::new(m);
        let c = std::f64::consts::PI / m.length();
        let a = m.lapse().to_vec();
        let f = m.warp();
        let t: Vec<f64> = m.nodes().collect();
        let prof: Vec<f64> = t.iter().map(|t| (c * t).sin() / c).collect();
        let dprof: Vec<f64> = t.iter().map(|t| (c * t).cos()).collect();

        let v: Vec<f64> = (0..=n)
            .map(|k| if k == 0 || k == n { a[k].ln() } else { (f[k] / prof[k]).ln() })
            .collect();
        let q: Vec<f64> = (0..=n).map(|k| v[k].exp() / a[k]).collect();
        let dv = stencil.d1(&v);
        let d2v = stencil.d2(&v);
        let dq = stencil.d1(&q);
        let d2q = stencil.d2(&q);
        let da = stencil.d1(&a);

        let mut h = vec![f64::NAN; n + 1];
        let mut k_rad = vec![0.0; n + 1];
        let mut k_sph = vec![0.0; n + 1];
        for k in 0..=n {
            if k == 0 || k == n {
                let pole = (c * c - d2q[k] - 2.0 * d2v[k]) / (a[k] * a[k]);
                k_rad[k] = pole;
                k_sph[k] = pole;
                continue;
            }
            h[k] = (dprof[k] / prof[k] + dv[k]) / a[k];
            // x = f'/a
            let x = q[k] * (dprof[k] + prof[k] * dv[k]);
            let dx = dq[k] * (dprof[k] + prof[k] * dv[k])
                + q[k] * (-c * c * prof[k] + dprof[k] * dv[k] + prof[k] * d2v[k]);
            k_sph[k] = (1.0 - x * x) / (f[k] * f[k]);
            k_rad[k] = -dx / (a[k] * f[k]);
        }
        let volume_density = (0..=n).map(|k| a[k] * f[k].powi(3) * OMEGA3).collect();
        WarpFrame { stencil, n, a, da, h, k_rad, k_sph, volume_density }
    }

    fn is_pole(&self, k: usize) -> bool {
        k == 0 || k == self.n
    }

    pub(crate) fn hessian(&self, u: &[f64]) -> InvariantSym2Field {
        let du = self.stencil.d1(u);
        let d2u = self.stencil.d2(u);
        let mut rad = vec![0.0; self.n + 1];
        let mut sph = vec![0.0; self.n + 1];
        for k in 0..=self.n {
            let a = self.a[k];
            let u_rr = d2u[k] / (a * a) - self.da[k] * du[k] / (a * a * a);
            rad[k] = u_rr;
            sph[k] = if self.is_pole(k) { u_rr } else { self.h[k] * du[k] / a };
        }
        InvariantSym2Field::new(RadialField(rad), RadialField(sph))
    }

    pub(crate) fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let hess = self.hessian(u);
        hess.trace().0
    }

    pub(crate) fn rough_laplacian(&self, t: &InvariantSym2Field) -> InvariantSym2Field {
        let lap_a = self.laplacian(&t.rad.0);
        let lap_b = self.laplacian(&t.sph.0);
        let gap: Vec<f64> = t.rad.0.iter().zip(&t.sph.0).map(|(x, y)| x - y).collect();
        let d2gap = self.stencil.d2(&gap);
        let mut rad = vec![0.0; self.n + 1];
        let mut sph = vec![0.0; self.n + 1];
        for k in 0..=self.n {
            let coupling = if self.is_pole(k) {
                0.5 * d2gap[k] / (self.a[k] * self.a[k])
            } else {
                self.h[k] * self.h[k] * gap[k]
            };
            rad[k] = lap_a[k] - 6.0 * coupling;
            sph[k] = lap_b[k] + 2.0 * coupling;
        }
        InvariantSym2Field::new(RadialField(rad), RadialField(sph))
    }

    /// Radial component of `div T`.
    pub(crate) fn divergence(&self, t: &InvariantSym2Field) -> Vec<f64> {
        let d_rad = self.stencil.d1(&t.rad.0);
        (0..=self.n)
            .map(|k| {
                if self.is_pole(k) {
                    0.0
                } else {
                    d_rad[k] / self.a[k] + 3.0 * self.h[k] * (t.rad.0[k] - t.sph.0[k])
                }
            })
            .collect()
    }

    /// Pointwise `|∇T|²` for an invariant 2-tensor.
    pub(crate) fn covariant_derivative_norm_sq(&self, t: &InvariantSym2Field) -> Vec<f64> {
        let d_rad = self.stencil.d1(&t.rad.0);
        let d_sph = self.stencil.d1(&t.sph.0);
        (0..=self.n)
            .map(|k| {
                let a2 = self.a[k] * self.a[k];
                let radial = (d_rad[k] * d_rad[k] + 3.0 * d_sph[k] * d_sph[k]) / a2;
                if self.is_pole(k) {
                    radial
                } else {
                    let gap = t.rad.0[k] - t.sph.0[k];
                    radial + 6.0 * self.h[k] * self.h[k] * gap * gap
                }
            })
            .collect()
    }

    pub(crate) fn integrate(&self, u: &[f64]) -> f64 {
        trapezoid(u, &self.volume_density, self.stencil.dt)
    }
}

fn trapezoid(u: &[f64], density: &[f64], dt: f64) -> f64 {
    let n = u.len() - 1;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * u[k] * density[k];
    }
    acc * dt
}

fn check_len(m: &WarpedMetric, u: &RadialField) -> Result<()> {
    if u.len() != m.n_nodes() {
        return Err(Error::LengthMismatch { expected: m.n_nodes(), got: u.len() });
    }
    Ok(())
}

pub fn compute_geometry(m: &WarpedMetric) -> Result<GeometryCache> {
    geometry_from_frame(&WarpFrame::new(m))
}

pub(crate) fn geometry_from_frame(frame: &WarpFrame) -> Result<GeometryCache> {
    let k_rad = RadialField(frame.k_rad.clone());
    let k_sph = RadialField(frame.k_sph.clone());
    if !(k_rad.is_finite() && k_sph.is_finite()) {
        return Err(Error::NonFinite("sectional curvatures"));
    }
    let s = k_rad.zip_with(&k_sph, |kr, ks| 6.0 * (kr + ks));
    let r = InvariantSym2Field::new(
        k_rad.scale(3.0),
        k_rad.zip_with(&k_sph, |kr, ks| kr + 2.0 * ks),
    );
    let phi = k_sph.sub(&k_rad);
    let z = InvariantSym2Field::new(phi.scale(-1.5), phi.scale(0.5));
    // |Rm|² = 2|z|² + s²/6 with W ≡ 0
    let rm_norm_sq = phi.zip_with(&s, |p, s| 6.0 * p * p + s * s / 6.0);
    Ok(GeometryCache {
        k_rad,
        k_sph,
        s,
        r,
        z,
        phi,
        rm_norm_sq,
        volume_density: RadialField(frame.volume_density.clone()),
    })
}

/// `∫ u dV` by the composite trapezoid rule.
pub fn integrate(m: &WarpedMetric, u: &RadialField) -> Result<f64> {
    check_len(m, u)?;
    let density: Vec<f64> = (0..m.n_nodes())
        .map(|k| m.lapse()[k] * m.warp()[k].powi(3) * OMEGA3)
        .collect();
    Ok(trapezoid(&u.0, &density, m.spacing()))
}

pub fn volume(m: &WarpedMetric) -> f64 {
    integrate(m, &RadialField::constant(m.n_nodes(), 1.0)).expect("matching length")
}

/// Second-order finite-volume scalar Laplacian `(a f³)⁻¹ ((f³/a) u')'`.
pub fn laplacian_scalar(m: &WarpedMetric, u: &RadialField) -> Result<RadialField> {
    check_len(m, u)?;
    u.check_even_parity()?;
    Ok(finite_volume_laplacian(m, u, 1.0))
}

/// Same operator with the flux through the first interior face scaled by
/// `1 + defect`; exists so the identity checks can be shown to catch a bad stencil.
#[doc(hidden)]
pub fn laplacian_scalar_with_defect(m: &WarpedMetric, u: &RadialField, defect: f64) -> Result<RadialField> {
    check_len(m, u)?;
    Ok(finite_volume_laplacian(m, u, 1.0 + defect))
}

fn finite_volume_laplacian(m: &WarpedMetric, u: &RadialField, first_face_scale: f64) -> RadialField {
    let n = m.intervals();
    let dt = m.spacing();
    let (a, f, u) = (m.lapse(), m.warp(), &u.0);
    // flux coefficients f³/a on faces k + ½
    let flux: Vec<f64> = (0..n)
        .map(|k| {
            let fh = 0.5 * (f[k] + f[k + 1]);
            let ah = 0.5 * (a[k] + a[k + 1]);
            let scale = if k == 1 { first_face_scale } else { 1.0 };
            scale * fh.powi(3) / ah
        })
        .collect();
    let half = |k: usize| 0.5 * (f[k] + f[k + 1]);
    let mut out = vec![0.0; n + 1];
    for k in 0..=n {
        // cell average of f³ by Simpson's rule
        let (cell, net) = if k == 0 {
            let quarter = 0.25 * (3.0 * f[0] + f[1]);
            let cell = (4.0 * quarter.powi(3) + half(0).powi(3)) / 12.0;
            (cell, flux[0] * (u[1] - u[0]))
        } else if k == n {
            let quarter = 0.25 * (3.0 * f[n] + f[n - 1]);
            let cell = (4.0 * quarter.powi(3) + half(n - 1).powi(3)) / 12.0;
            (cell, -flux[n - 1] * (u[n] - u[n - 1]))
        } else {
            let cell = (half(k - 1).powi(3) + 4.0 * f[k].powi(3) + half(k).powi(3)) / 6.0;
            (cell, flux[k] * (u[k + 1] - u[k]) - flux[k - 1] * (u[k] - u[k - 1]))
        };
        out[k] = net / (dt * dt * a[k] * cell);
    }
    RadialField(out)
}

pub fn hessian_scalar(m: &WarpedMetric, u: &RadialField) -> Result<InvariantSym2Field> {
    check_len(m, u)?;
    u.check_even_parity()?;
    Ok(WarpFrame::new(m).hessian(&u.0))
}

/// Rough Laplacian `∇ᵖ∇ₚT` of an invariant 2-tensor field.
pub fn rough_laplacian_sym2(m: &WarpedMetric, t: &InvariantSym2Field) -> Result<InvariantSym2Field> {
    check_len(m, &t.rad)?;
    check_len(m, &t.sph)?;
    t.rad.check_even_parity()?;
    t.sph.check_even_parity()?;
    let scale = 1e-8 * (1.0 + t.max_abs());
    t.check_pole_isotropy(scale)?;
    Ok(WarpFrame::new(m).rough_laplacian(t))
}

/// Radial component of the divergence of an invariant 2-tensor field.
pub fn divergence_sym2(m: &WarpedMetric, t: &InvariantSym2Field) -> Result<RadialField> {
    check_len(m, &t.rad)?;
    check_len(m, &t.sph)?;
    Ok(RadialField(WarpFrame::new(m).divergence(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn round(n: usize) -> WarpedMetric {
        WarpedMetric::round(n).unwrap()
    }

    #[test]
    fn round_curvature_is_constant() {
        let g = compute_geometry(&round(64)).unwrap();
        assert!(g.s.sub(&RadialField::constant(65, 12.0)).max_abs() < 1e-9);
        assert!(g.phi.max_abs() < 1e-9);
        assert!(g.z.max_abs() < 1e-9);
        assert!(g.rm_norm_sq.sub(&RadialField::constant(65, 24.0)).max_abs() < 1e-8);
    }

    #[test]
    fn scaled_round_curvature() {
        let rho = 3.0;
        let g = compute_geometry(&WarpedMetric::scaled_round(64, rho).unwrap()).unwrap();
        assert!(g.s.sub(&RadialField::constant(65, 12.0 / (rho * rho))).max_abs() < 1e-9);
    }

    #[test]
    fn traceless_ricci_is_traceless() {
        let m = round(64).perturb(3, 0.2).unwrap();
        let g = compute_geometry(&m).unwrap();
        let tr = g.z.trace();
        assert!(tr.max_abs() <= 1e-10 * (1.0 + g.z.max_abs()));
        assert!(g.z.max_abs() > 1e-3);
        let s_tr = g.r.trace().sub(&g.s);
        assert!(s_tr.max_abs() < 1e-10 * (1.0 + g.s.max_abs()));
        let split = g.z.norm_sq().scale(2.0).add(&g.s.mul(&g.s).scale(1.0 / 6.0));
        assert!(split.sub(&g.rm_norm_sq).max_abs() < 1e-10 * g.rm_norm_sq.max_abs());
    }

    #[test]
    fn perturbed_sphere_curvature_is_regular_near_poles() {
        // errors near the poles must shrink with the grid rather than blow up
        let err = |n: usize| {
            let coarse = compute_geometry(&round(n).perturb(2, 0.05).unwrap()).unwrap();
            let fine = compute_geometry(&round(2 * n).perturb(2, 0.05).unwrap()).unwrap();
            (0..=n)
                .map(|k| (coarse.k_sph.0[k] - fine.k_sph.0[2 * k]).abs()
                    + (coarse.k_rad.0[k] - fine.k_rad.0[2 * k]).abs())
                .fold(0.0, f64::max)
        };
        let e1 = err(32);
        let e2 = err(64);
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn volume_of_round_sphere() {
        for n in [32, 64, 128] {
            let v = volume(&round(n));
            assert!((v / (8.0 * PI * PI / 3.0) - 1.0).abs() < 10.0 * (PI / n as f64).powi(2));
        }
        let m = round(64);
        let s = compute_geometry(&m).unwrap().s;
        let total = integrate(&m, &s).unwrap();
        assert!((total / (32.0 * PI * PI) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn integrate_is_linear() {
        let m = round(40).perturb(2, 0.1).unwrap();
        let u = RadialField::from_fn(&m, f64::cos);
        let w = RadialField::from_fn(&m, |t| (2.0 * t).cos());
        let lhs = integrate(&m, &u.scale(2.0).add(&w.scale(-3.0))).unwrap();
        let rhs = 2.0 * integrate(&m, &u).unwrap() - 3.0 * integrate(&m, &w).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let m = round(32).perturb(2, 0.1).unwrap();
        let lap = laplacian_scalar(&m, &RadialField::constant(33, 4.0)).unwrap();
        assert!(lap.max_abs() < 1e-10);
    }

    #[test]
    fn first_harmonic_eigenvalue() {
        let err = |n: usize| {
            let m = round(n);
            let u = RadialField::from_fn(&m, f64::cos);
            let lap = laplacian_scalar(&m, &u).unwrap();
            lap.add(&u.scale(4.0)).max_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 0.05 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn laplacian_is_linear() {
        let m = round(32);
        let u = RadialField::from_fn(&m, f64::cos);
        let w = RadialField::from_fn(&m, |t| (2.0 * t).cos());
        let lhs = laplacian_scalar(&m, &u.scale(1.5).add(&w.scale(0.5))).unwrap();
        let rhs = laplacian_scalar(&m, &u).unwrap().scale(1.5).add(&laplacian_scalar(&m, &w).unwrap().scale(0.5));
        assert!(lhs.sub(&rhs).max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_rejects_odd_input() {
        let m = round(32);
        let u = RadialField::from_fn(&m, f64::sin);
        assert!(matches!(laplacian_scalar(&m, &u), Err(Error::Parity(_))));
        assert!(hessian_scalar(&m, &u).is_err());
    }

    #[test]
    fn hessian_of_first_harmonic() {
        let m = round(64);
        let u = RadialField::from_fn(&m, f64::cos);
        let hess = hessian_scalar(&m, &u).unwrap();
        assert!(hess.rad.add(&u).max_abs() < 1e-5);
        assert!(hess.sph.add(&u).max_abs() < 1e-5);
        let c = hessian_scalar(&m, &RadialField::constant(65, 2.0)).unwrap();
        assert!(c.max_abs() < 1e-10);
    }

    #[test]
    fn hessian_trace_matches_laplacian() {
        let err = |n: usize| {
            let m = round(n).perturb(2, 0.1).unwrap();
            let u = RadialField::from_fn(&m, |t| (t.cos() + 0.3 * (2.0 * t).cos()).exp());
            let tr = hessian_scalar(&m, &u).unwrap().trace();
            tr.sub(&laplacian_scalar(&m, &u).unwrap()).max_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn rough_laplacian_of_metric_and_conformal_tensor() {
        let m = round(64).perturb(2, 0.1).unwrap();
        let one = RadialField::constant(65, 1.0);
        let g = InvariantSym2Field::conformal(&one);
        assert!(rough_laplacian_sym2(&m, &g).unwrap().max_abs() < 1e-10);

        let err = |n: usize| {
            let m = round(n).perturb(2, 0.1).unwrap();
            let u = RadialField::from_fn(&m, |t| (2.0 * t).cos());
            let lap_t = rough_laplacian_sym2(&m, &InvariantSym2Field::conformal(&u)).unwrap();
            let lap_u = laplacian_scalar(&m, &u).unwrap();
            lap_t.rad.sub(&lap_u).max_abs().max(lap_t.sph.sub(&lap_u).max_abs())
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn rough_laplacian_commutes_with_trace() {
        let err = |n: usize| {
            let m = round(n).perturb(3, 0.1).unwrap();
            let a = RadialField::from_fn(&m, |t| t.cos() + 0.2 * (2.0 * t).cos());
            let b = a.add(&RadialField::from_fn(&m, |t| 0.5 * t.sin().powi(2)));
            let t = InvariantSym2Field::new(a, b);
            let lap = rough_laplacian_sym2(&m, &t).unwrap();
            lap.trace().sub(&laplacian_scalar(&m, &t.trace()).unwrap()).max_abs()
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn rough_laplacian_rejects_anisotropic_pole() {
        let m = round(32);
        let a = RadialField::constant(33, 1.0);
        let b = RadialField::constant(33, 2.0);
        assert!(rough_laplacian_sym2(&m, &InvariantSym2Field::new(a, b)).is_err());
    }

    #[test]
    fn corrupted_stencil_is_detectably_wrong() {
        let m = round(32);
        let u = RadialField::from_fn(&m, f64::cos);
        let good = laplacian_scalar(&m, &u).unwrap();
        let bad = laplacian_scalar_with_defect(&m, &u, 0.05).unwrap();
        assert!(good.sub(&bad).max_abs() > 1e-2);
    }
}
