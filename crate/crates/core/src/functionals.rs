//! Scalar functionals and inequalities evaluated on a warped metric.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::grad_f_from_frame;
use crate::geometry::{compute_geometry, geometry_from_frame, integrate, volume, EvenStencil, WarpFrame};
use crate::metric::{RadialField, WarpedMetric, OMEGA3};

/// Upper bound on the Sobolev constant certified under the small-energy hypothesis.
pub const SOBOLEV_BOUND: f64 = 768.0 * PI * PI;

/// Largest hypothesis parameter for which the Sobolev bound is certified.
pub const SOBOLEV_EPS_MAX: f64 = 1.0 / 196.0;

const YAMABE_MAX_ITERS: usize = 10_000;
const YAMABE_RESTARTS: usize = 5;
const EMPIRICAL_SOBOLEV_SAMPLES: usize = 50;

/// `F(g) = ∫ |Rm|² dV` with the full tensor norm `R_{ijkl}R^{ijkl}`.
pub fn energy_f(m: &WarpedMetric) -> Result<f64> {
    let geo = compute_geometry(m)?;
    integrate(m, &geo.rm_norm_sq)
}

/// `‖z‖²_{L²}`
pub fn z_norm_sq(m: &WarpedMetric) -> Result<f64> {
    let geo = compute_geometry(m)?;
    integrate(m, &geo.z_norm_sq())
}

/// `‖W‖²_{L²}`, identically zero on this ansatz.
pub fn weyl_norm_sq(_m: &WarpedMetric) -> f64 {
    0.0
}

/// Euler characteristic from the Gauss-Bonnet integrand
/// `(8π²)⁻¹ ∫ (s²/24 + |W|² − |z|²/2) dV`.
pub fn gauss_bonnet_chi(m: &WarpedMetric) -> Result<f64> {
    let geo = compute_geometry(m)?;
    let density = geo.s.zip_with(&geo.phi, |s, p| s * s / 24.0 - 1.5 * p * p);
    Ok((integrate(m, &density)? + weyl_norm_sq(m)) / (8.0 * PI * PI))
}

/// `σ₂(g) = (8π²)⁻¹ ∫ (s²/24 − |z|²/2) dV`.
pub fn sigma2(m: &WarpedMetric) -> Result<f64> {
    let geo = compute_geometry(m)?;
    let density = geo.s.zip_with(&geo.phi, |s, p| s * s / 24.0 - 1.5 * p * p);
    Ok(integrate(m, &density)? / (8.0 * PI * PI))
}

/// Quadrature pieces shared by the Yamabe and Sobolev quotients.
struct QuotientData {
    dt: f64,
    /// `ω₃ f³/a` on the faces `k + ½`.
    face: Vec<f64>,
    /// trapezoid weight times `a f³ ω₃` at each node
    weight: Vec<f64>,
    /// cell volumes, positive at the poles as well
    cell: Vec<f64>,
    s: Vec<f64>,
}

impl QuotientData {
    fn new(m: &WarpedMetric) -> Result<Self> {
        let n = m.intervals();
        let dt = m.spacing();
        let (a, f) = (m.lapse(), m.warp());
        let face = (0..n)
            .map(|k| {
                let fh = 0.5 * (f[k] + f[k + 1]);
                OMEGA3 * fh.powi(3) / (0.5 * (a[k] + a[k + 1]))
            })
            .collect();
        let weight = (0..=n)
            .map(|k| {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                w * dt * a[k] * f[k].powi(3) * OMEGA3
            })
            .collect();
        let cell = (0..=n)
            .map(|k| {
                let lo = if k == 0 { 0.0 } else { 0.5 * (f[k - 1] + f[k]) };
                let hi = if k == n { 0.0 } else { 0.5 * (f[k] + f[k + 1]) };
                let len = if k == 0 || k == n { 0.5 * dt } else { dt };
                OMEGA3 * a[k] * len * (lo.powi(3) + 4.0 * f[k].powi(3) + hi.powi(3)) / 6.0
            })
            .collect();
        let s = compute_geometry(m)?.s.0;
        Ok(QuotientData { dt, face, weight, cell, s })
    }

    /// `∫ |∇u|² dV` summed over faces.
    fn dirichlet(&self, u: &[f64]) -> f64 {
        self.face
            .iter()
            .enumerate()
            .map(|(k, c)| c * (u[k + 1] - u[k]).powi(2) / self.dt)
            .sum()
    }

    fn dirichlet_grad(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len() - 1;
        let mut g = vec![0.0; n + 1];
        for k in 0..n {
            let flux = 2.0 * self.face[k] * (u[k + 1] - u[k]) / self.dt;
            g[k] -= flux;
            g[k + 1] += flux;
        }
        g
    }

    fn moment(&self, u: &[f64], p: i32) -> f64 {
        self.weight.iter().zip(u).map(|(w, x)| w * x.powi(p)).sum()
    }

    fn yamabe(&self, u: &[f64]) -> f64 {
        let num = 6.0 * self.dirichlet(u)
            + self.weight.iter().zip(u).zip(&self.s).map(|((w, x), s)| w * s * x * x).sum::<f64>();
        num / self.moment(u, 4).sqrt()
    }

    fn yamabe_grad(&self, u: &[f64]) -> Vec<f64> {
        let num = 6.0 * self.dirichlet(u)
            + self.weight.iter().zip(u).zip(&self.s).map(|((w, x), s)| w * s * x * x).sum::<f64>();
        let den = self.moment(u, 4);
        let dn = self.dirichlet_grad(u);
        (0..u.len())
            .map(|k| {
                let d_num = 6.0 * dn[k] + 2.0 * self.weight[k] * self.s[k] * u[k];
                let d_den = 4.0 * self.weight[k] * u[k].powi(3);
                d_num / den.sqrt() - 0.5 * num * den.powf(-1.5) * d_den
            })
            .collect()
    }

    /// Solves `(K + M) x = r` with `K` the face stiffness and `M` the cell
    /// volumes: an H¹ Riesz map that makes the descent mesh-independent.
    fn h1_precondition(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len() - 1;
        let mut lower = vec![0.0; n + 1];
        let mut diag = self.cell.clone();
        let mut upper = vec![0.0; n + 1];
        for k in 0..n {
            let c = self.face[k] / self.dt;
            diag[k] += c;
            diag[k + 1] += c;
            upper[k] = -c;
            lower[k + 1] = -c;
        }
        thomas(&lower, &diag, &upper, r)
    }

    fn normalize(&self, u: &mut [f64]) {
        let scale = self.moment(u, 4).powf(-0.25);
        u.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Tridiagonal solve without pivoting; the systems used here are diagonally dominant.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for k in 1..n {
        let m = diag[k] - lower[k] * c[k - 1];
        c[k] = upper[k] / m;
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    x
}

/// Yamabe quotient `∫(6|∇u|² + s u²) dV / (∫u⁴ dV)^{1/2}`.
pub fn yamabe_quotient(m: &WarpedMetric, u: &RadialField) -> Result<f64> {
    if u.len() != m.n_nodes() {
        return Err(Error::LengthMismatch { expected: m.n_nodes(), got: u.len() });
    }
    u.check_even_parity()?;
    let data = QuotientData::new(m)?;
    if !(data.moment(&u.0, 4) > 0.0) {
        return Err(Error::Degenerate("Yamabe quotient denominator"));
    }
    Ok(data.yamabe(&u.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct YamabeEstimate {
    pub value: f64,
    pub converged: bool,
    pub minimizer: RadialField,
    pub iterations: usize,
}

fn descend(data: &QuotientData, mut u: Vec<f64>) -> (f64, Vec<f64>, bool, usize) {
    data.normalize(&mut u);
    let mut q = data.yamabe(&u);
    let mut step = 1.0;
    for iter in 0..YAMABE_MAX_ITERS {
        let grad = data.yamabe_grad(&u);
        let dir = data.h1_precondition(&grad);
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if slope <= 1e-24 * (1.0 + q * q) {
            return (q, u, true, iter);
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = u.iter().zip(&dir).map(|(x, d)| x - step * d).collect();
            data.normalize(&mut trial);
            let qt = data.yamabe(&trial);
            if qt.is_finite() && qt <= q - 1e-4 * step * slope {
                let gain = q - qt;
                u = trial;
                q = qt;
                accepted = true;
                step = (step * 2.0).min(1e3);
                if gain <= 1e-14 * q.abs().max(1.0) {
                    return (q, u, true, iter + 1);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no decrease available at any resolvable step: stationary up to roundoff
            return (q, u, true, iter + 1);
        }
    }
    (q, u, false, YAMABE_MAX_ITERS)
}

/// Minimises the Yamabe quotient over radial functions from `u ≡ 1` and
/// [`YAMABE_RESTARTS`] random positive starts; returns the best value found.
pub fn estimate_yamabe(m: &WarpedMetric, seed: u64) -> Result<YamabeEstimate> {
    let data = QuotientData::new(m)?;
    let n = m.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![vec![1.0; n]];
    for _ in 0..YAMABE_RESTARTS {
        starts.push(random_positive_even(m, &mut rng, 0.3).0);
    }
    let mut best: Option<YamabeEstimate> = None;
    for start in starts {
        let (value, u, converged, iterations) = descend(&data, start);
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(YamabeEstimate { value, converged, minimizer: RadialField(u), iterations });
        }
    }
    Ok(best.expect("at least one start"))
}

/// Smooth positive function even about both poles: `1 + Σ c_k cos(kπt/L)`.
pub fn random_positive_even<R: Rng + ?Sized>(m: &WarpedMetric, rng: &mut R, amplitude: f64) -> RadialField {
    let coeffs: Vec<f64> = (1..=4).map(|k| rng.gen_range(-amplitude..amplitude) / k as f64).collect();
    let c = PI / m.length();
    RadialField::from_fn(m, |t| {
        let wave: f64 = coeffs.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * c * t).cos()).sum();
        (wave).exp()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolevCheck {
    /// `‖ôRm‖² ≤ ε χ` and positive Yamabe estimate.
    pub hypothesis_holds: bool,
    /// `768π²` when the hypothesis holds and `ε ≤ 1/196`.
    pub certified_bound: Option<f64>,
    pub concircular_l2sq: f64,
    pub chi: f64,
    pub yamabe: f64,
    /// Largest `‖u‖²_{L⁴} / (‖∇u‖²_{L²} + V^{-1/2}‖u‖²_{L²})` over the test family.
    pub empirical_lower_bound: f64,
    /// The empirical lower bound does not contradict the certified bound.
    pub consistent: bool,
}

pub fn sobolev_hypothesis_check(m: &WarpedMetric, eps: f64, seed: u64) -> Result<SobolevCheck> {
    let chi = gauss_bonnet_chi(m)?;
    let concircular_l2sq = weyl_norm_sq(m) + 2.0 * z_norm_sq(m)?;
    let yamabe = estimate_yamabe(m, seed)?.value;
    let hypothesis_holds = concircular_l2sq <= eps * chi && yamabe > 0.0;
    let certified_bound = (hypothesis_holds && eps <= SOBOLEV_EPS_MAX).then_some(SOBOLEV_BOUND);

    let data = QuotientData::new(m)?;
    let vol = volume(m);
    let sobolev_quotient = |u: &[f64]| {
        data.moment(u, 4).sqrt() / (data.dirichlet(u) + data.moment(u, 2) / vol.sqrt())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut empirical = sobolev_quotient(&vec![1.0; m.n_nodes()]);
    for _ in 1..EMPIRICAL_SOBOLEV_SAMPLES {
        let u = random_positive_even(m, &mut rng, 2.0);
        empirical = empirical.max(sobolev_quotient(&u.0));
    }
    Ok(SobolevCheck {
        hypothesis_holds,
        certified_bound,
        concircular_l2sq,
        chi,
        yamabe,
        empirical_lower_bound: empirical,
        consistent: empirical <= SOBOLEV_BOUND,
    })
}

/// Pieces of the coercivity ratio `‖E‖² / (‖Δr‖² + ‖z‖² + ‖∇z‖²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityParts {
    pub grad_sq: f64,
    pub lap_r_sq: f64,
    pub z_sq: f64,
    pub grad_z_sq: f64,
}

impl CoercivityParts {
    pub fn denominator(&self) -> f64 {
        self.lap_r_sq + self.z_sq + self.grad_z_sq
    }

    pub fn ratio(&self) -> Result<f64> {
        let den = self.denominator();
        if !(den > 1e-14) {
            return Err(Error::Degenerate("coercivity ratio (metric is round)"));
        }
        Ok(self.grad_sq / den)
    }
}

pub fn coercivity_parts(m: &WarpedMetric) -> Result<CoercivityParts> {
    coercivity_from_frame(&WarpFrame::new(m))
}

pub(crate) fn coercivity_from_frame(frame: &WarpFrame) -> Result<CoercivityParts> {
    let geo = geometry_from_frame(frame)?;
    let e = grad_f_from_frame(frame)?;
    let lap_r = frame.rough_laplacian(&geo.r);
    let grad_z = frame.covariant_derivative_norm_sq(&geo.z);
    Ok(CoercivityParts {
        grad_sq: frame.integrate(&e.norm_sq().0),
        lap_r_sq: frame.integrate(&lap_r.norm_sq().0),
        z_sq: frame.integrate(&geo.z.norm_sq().0),
        grad_z_sq: frame.integrate(&grad_z),
    })
}

pub fn coercivity_ratio(m: &WarpedMetric) -> Result<f64> {
    coercivity_parts(m)?.ratio()
}

/// Exponent `α` with `1/α = (1/4 − 1/p) m + 1`; `p = ∞` is allowed.
pub fn sobolev_alpha(m: f64, p: f64) -> Result<f64> {
    if !(p > 4.0) {
        return Err(Error::InvalidArgument(format!("Sobolev exponent p = {p} must exceed 4")));
    }
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("integrability exponent m = {m}")));
    }
    Ok(1.0 / ((0.25 - 1.0 / p) * m + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultSobolev {
    /// `sup |u|`
    pub lhs: f64,
    /// `‖u‖_{L^m}^{1−α} (‖∇u‖_{L^p} + ‖u‖_{L^p})^α`
    pub rhs_factor: f64,
    pub alpha: f64,
}

impl MultSobolev {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs_factor
    }
}

/// Evaluates both sides of the multiplicative Sobolev inequality on a
/// unit-volume metric.
pub fn mult_sobolev_check(metric: &WarpedMetric, u: &RadialField, m_exp: f64, p: f64) -> Result<MultSobolev> {
    let alpha = sobolev_alpha(m_exp, p)?;
    let vol = volume(metric);
    if (vol - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!("metric must have unit volume, has {vol}")));
    }
    if u.len() != metric.n_nodes() {
        return Err(Error::LengthMismatch { expected: metric.n_nodes(), got: u.len() });
    }
    let lp = |field: &RadialField, q: f64| -> Result<f64> {
        if q.is_infinite() {
            return Ok(field.max_abs());
        }
        Ok(integrate(metric, &field.map(|x| x.abs().powf(q)))?.powf(1.0 / q))
    };
    let du = EvenStencil::new(metric).d1(&u.0);
    let grad = RadialField(du.iter().zip(metric.lapse()).map(|(d, a)| d / a).collect());
    let lhs = u.max_abs();
    let low = if m_exp > 0.0 { lp(u, m_exp)?.powf(1.0 - alpha) } else { 1.0 };
    let rhs_factor = low * (lp(&grad, p)? + lp(u, p)?).powf(alpha);
    Ok(MultSobolev { lhs, rhs_factor, alpha })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalReport {
    pub f: f64,
    pub chi: f64,
    pub sigma2: f64,
    pub z_norm_sq: f64,
    pub weyl_norm_sq: f64,
    pub yamabe_estimate: f64,
    pub sobolev_bound_applies: bool,
    /// `None` for a round metric, where the ratio is 0/0.
    pub coercivity_ratio: Option<f64>,
}

/// JSON summary with the external key names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    #[serde(rename = "F")]
    pub f: f64,
    pub chi: f64,
    pub sigma2: f64,
    pub z_l2sq: f64,
    pub weyl_l2sq: f64,
    pub yamabe: f64,
    pub sobolev_hypothesis: bool,
    pub coercivity_ratio: Option<f64>,
}

impl FunctionalReport {
    pub fn evaluate(m: &WarpedMetric, seed: u64) -> Result<Self> {
        let sob = sobolev_hypothesis_check(m, SOBOLEV_EPS_MAX, seed)?;
        let coercivity_ratio = match coercivity_ratio(m) {
            Ok(r) => Some(r),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(FunctionalReport {
            f: energy_f(m)?,
            chi: sob.chi,
            sigma2: sigma2(m)?,
            z_norm_sq: z_norm_sq(m)?,
            weyl_norm_sq: weyl_norm_sq(m),
            yamabe_estimate: sob.yamabe,
            sobolev_bound_applies: sob.certified_bound.is_some(),
            coercivity_ratio,
        })
    }

    pub fn to_json(&self) -> SummaryJson {
        SummaryJson {
            f: self.f,
            chi: self.chi,
            sigma2: self.sigma2,
            z_l2sq: self.z_norm_sq,
            weyl_l2sq: self.weyl_norm_sq,
            yamabe: self.yamabe_estimate,
            sobolev_hypothesis: self.sobolev_bound_applies,
            coercivity_ratio: self.coercivity_ratio,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round(n: usize) -> WarpedMetric {
        WarpedMetric::round(n).unwrap()
    }

    fn round_yamabe() -> f64 {
        8.0 * 6f64.sqrt() * PI
    }

    #[test]
    fn round_energy() {
        let f = energy_f(&round(96)).unwrap();
        assert!((f / (64.0 * PI * PI) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn energy_is_scale_invariant() {
        let m = round(64).perturb(2, 0.1).unwrap();
        let f = energy_f(&m).unwrap();
        for lambda in [0.5, 2.0, 7.0] {
            let fl = energy_f(&m.scaled(lambda)).unwrap();
            assert!((fl / f - 1.0).abs() < 1e-10);
            let chi = gauss_bonnet_chi(&m).unwrap();
            assert!((gauss_bonnet_chi(&m.scaled(lambda)).unwrap() / chi - 1.0).abs() < 1e-10);
            let s2 = sigma2(&m).unwrap();
            assert!((sigma2(&m.scaled(lambda)).unwrap() / s2 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_identity_with_full_norms() {
        let m = round(64).perturb(2, 0.2).unwrap();
        let f = energy_f(&m).unwrap();
        let rhs = 32.0 * PI * PI * gauss_bonnet_chi(&m).unwrap() + 4.0 * z_norm_sq(&m).unwrap();
        assert!((f - rhs).abs() < 1e-10 * f);
    }

    #[test]
    fn euler_characteristic() {
        assert!((gauss_bonnet_chi(&round(128)).unwrap() - 2.0).abs() < 1e-3);
        let scaled = WarpedMetric::scaled_round(128, 3.0).unwrap();
        assert!((gauss_bonnet_chi(&scaled).unwrap() - 2.0).abs() < 1e-3);
        let err = |n: usize| (gauss_bonnet_chi(&round(n).perturb(2, 0.05).unwrap()).unwrap() - 2.0).abs();
        let (e1, e2) = (err(32), err(64));
        assert!(err(64) < 1e-2);
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn sigma2_equals_chi_without_weyl() {
        let m = round(64).perturb(3, 0.1).unwrap();
        assert!((sigma2(&m).unwrap() - gauss_bonnet_chi(&m).unwrap()).abs() < 1e-14);
        assert!((sigma2(&round(96)).unwrap() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn yamabe_quotient_of_constant() {
        let m = round(96);
        let q = yamabe_quotient(&m, &RadialField::constant(97, 1.0)).unwrap();
        assert!((q / round_yamabe() - 1.0).abs() < 1e-4);
        let q3 = yamabe_quotient(&m, &RadialField::constant(97, 3.0)).unwrap();
        assert!((q3 - q).abs() < 1e-10 * q);
        assert!(yamabe_quotient(&m, &RadialField::zeros(97)).is_err());
    }

    #[test]
    fn yamabe_estimate_on_round() {
        let m = round(96);
        let est = estimate_yamabe(&m, 3).unwrap();
        assert!((est.value / round_yamabe() - 1.0).abs() < 1e-2, "{}", est.value);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = random_positive_even(&m, &mut rng, 0.5);
            assert!(yamabe_quotient(&m, &u).unwrap() >= est.value - 1e-9);
        }
    }

    #[test]
    fn yamabe_estimate_beats_the_lower_bound() {
        let m = round(64).perturb(2, 0.05).unwrap();
        let eps = z_norm_sq(&m).unwrap();
        let est = estimate_yamabe(&m, 5).unwrap();
        assert!(est.value > (384.0 * PI * PI - 96.0 * eps).sqrt(), "{} {eps}", est.value);
        assert!(est.value <= yamabe_quotient(&m, &RadialField::constant(65, 1.0)).unwrap() + 1e-12);
    }

    #[test]
    fn sobolev_hypothesis() {
        let check = sobolev_hypothesis_check(&round(64), 1.0 / 196.0, 1).unwrap();
        assert!(check.hypothesis_holds);
        assert_eq!(check.certified_bound, Some(SOBOLEV_BOUND));
        assert!(check.empirical_lower_bound >= 1.0 - 1e-6);
        assert!(check.consistent);

        let big = round(64).perturb(2, 0.4).unwrap();
        let check = sobolev_hypothesis_check(&big, 1.0 / 196.0, 1).unwrap();
        assert!(check.concircular_l2sq > check.chi / 196.0);
        assert!(!check.hypothesis_holds);
        assert_eq!(check.certified_bound, None);
    }

    #[test]
    fn coercivity_degenerate_on_round() {
        assert!(matches!(coercivity_ratio(&round(32)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn coercivity_parts_scale_with_their_weights() {
        let m = round(64).perturb(2, 0.05).unwrap();
        let p = coercivity_parts(&m).unwrap();
        let lambda: f64 = 1.7;
        let q = coercivity_parts(&m.scaled(lambda)).unwrap();
        let rel = |x: f64, y: f64| (x / y - 1.0).abs();
        assert!(rel(q.grad_sq, p.grad_sq * lambda.powi(-4)) < 1e-10);
        assert!(rel(q.lap_r_sq, p.lap_r_sq * lambda.powi(-4)) < 1e-10);
        assert!(rel(q.z_sq, p.z_sq) < 1e-10);
        assert!(rel(q.grad_z_sq, p.grad_z_sq * lambda.powi(-2)) < 1e-10);
        assert!(p.ratio().unwrap() > 0.0);
    }

    #[test]
    fn alpha_values() {
        assert_eq!(sobolev_alpha(2.0, 8.0).unwrap(), 0.8);
        assert_eq!(sobolev_alpha(0.0, 5.0).unwrap(), 1.0);
        assert_eq!(sobolev_alpha(4.0, f64::INFINITY).unwrap(), 0.5);
        assert!(sobolev_alpha(2.0, 4.0).is_err());
        assert!(sobolev_alpha(2.0, 3.0).is_err());
        for m in [0.0, 1.0, 2.0, 4.0] {
            for p in [5.0, 8.0, 16.0] {
                let a = sobolev_alpha(m, p).unwrap();
                assert!(a > 0.0 && a <= 1.0);
                assert!((1.0 / a - ((0.25 - 1.0 / p) * m + 1.0)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mult_sobolev_homogeneity_and_constants() {
        let m = round(96);
        let unit = m.scaled(volume(&m).powf(-0.25));
        let one = RadialField::constant(97, 1.0);
        let r = mult_sobolev_check(&unit, &one, 2.0, 8.0).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12);
        assert!((r.rhs_factor - 1.0).abs() < 1e-10);
        assert_eq!(r.alpha, 0.8);

        let u = RadialField::from_fn(&unit, |t| (t * unit.lapse()[0]).cos().powi(3));
        let base = mult_sobolev_check(&unit, &u, 2.0, 8.0).unwrap();
        let scaled = mult_sobolev_check(&unit, &u.scale(5.0), 2.0, 8.0).unwrap();
        assert!((scaled.lhs / base.lhs - 5.0).abs() < 1e-12);
        assert!((scaled.rhs_factor / base.rhs_factor - 5.0).abs() < 1e-10);

        assert!(mult_sobolev_check(&m, &one, 2.0, 8.0).is_err());
        assert!(mult_sobolev_check(&unit, &one, 2.0, 4.0).is_err());
    }

    #[test]
    fn report_json_keys() {
        let rep = FunctionalReport::evaluate(&round(32), 0).unwrap();
        assert_eq!(rep.coercivity_ratio, None);
        let text = serde_json::to_string(&rep.to_json()).unwrap();
        for key in ["\"F\"", "chi", "sigma2", "z_l2sq", "weyl_l2sq", "yamabe", "sobolev_hypothesis", "coercivity_ratio"] {
            assert!(text.contains(key), "{key} missing from {text}");
        }
        let back: SummaryJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rep.to_json());
    }

    #[test]
    fn sigma2_is_conformally_invariant() {
        let m = round(128);
        let base = sigma2(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let u = random_positive_even(&m, &mut rng, 0.4);
            let changed = sigma2(&m.conformal(&u).unwrap()).unwrap();
            assert!((changed - base).abs() < 1e-3, "{changed} vs {base}");
        }
    }

    #[test]
    fn sigma2_conformal_defect_converges() {
        let defect = |n: usize| {
            let m = round(n).perturb(2, 0.05).unwrap();
            let c = PI / m.length();
            let u = RadialField::from_fn(&m, |t| (0.3 * (2.0 * c * t).cos()).exp());
            (sigma2(&m.conformal(&u).unwrap()).unwrap() - sigma2(&m).unwrap()).abs()
        };
        let (d1, d2) = (defect(48), defect(96));
        assert!((d1 / d2).log2() >= 1.9, "{d1} {d2}");
    }

    #[test]
    fn mult_sobolev_cosine_family_is_stable() {
        let worst = |n: usize| {
            let m = round(n);
            let unit = m.scaled(volume(&m).powf(-0.25));
            let c = PI / unit.length();
            (1..=8)
                .map(|k| {
                    let u = RadialField::from_fn(&unit, |t| (c * t).cos().powi(k));
                    mult_sobolev_check(&unit, &u, 2.0, 8.0).unwrap().ratio()
                })
                .fold(0.0, f64::max)
        };
        let (k1, k2) = (worst(96), worst(192));
        assert!(k1.is_finite() && k1 > 0.0);
        assert!((k1 / k2 - 1.0).abs() < 0.05, "{k1} {k2}");
    }
}
