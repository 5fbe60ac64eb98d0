//! Discretised cohomogeneity-one metrics `a(t)² dt² + f(t)² g_{S³}` on `S⁴`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Volume of the unit three-sphere.
pub const OMEGA3: f64 = 2.0 * PI * PI;

pub const MIN_ROUND_NODES: usize = 16;

/// Relative slack allowed in the pole condition `f'/a = ±1`, in units of `Δt²`.
const REGULARITY_SLACK: f64 = 10.0;

/// Scalar field sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField(pub Vec<f64>);

impl RadialField {
    pub fn constant(n_nodes: usize, value: f64) -> Self {
        RadialField(vec![value; n_nodes])
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self::constant(n_nodes, 0.0)
    }

    pub fn from_fn(metric: &WarpedMetric, mut f: impl FnMut(f64) -> f64) -> Self {
        RadialField(metric.nodes().map(&mut f).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RadialField(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_with(&self, other: &RadialField, f: impl Fn(f64, f64) -> f64) -> Self {
        RadialField(self.0.iter().zip(&other.0).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&self, other: &RadialField) -> Self {
        self.zip_with(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &RadialField) -> Self {
        self.zip_with(other, |x, y| x - y)
    }

    pub fn mul(&self, other: &RadialField) -> Self {
        self.zip_with(other, |x, y| x * y)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Rejects fields whose first derivative at either pole dominates their
    /// local variation, i.e. fields that are visibly not even about the poles.
    pub fn check_even_parity(&self) -> Result<()> {
        let n = self.0.len();
        if n < 3 {
            return Err(Error::LengthMismatch { expected: 3, got: n });
        }
        let floor = 1e-12 * (1.0 + self.max_abs());
        let u = &self.0;
        let ends = [(u[0], u[1], u[2], "left"), (u[n - 1], u[n - 2], u[n - 3], "right")];
        for (u0, u1, u2, side) in ends {
            let one_sided = (-3.0 * u0 + 4.0 * u1 - u2).abs() / 2.0;
            let variation = (u1 - u0).abs() + (u2 - u1).abs();
            if one_sided > 0.4 * variation + floor {
                return Err(Error::Parity(format!(
                    "{side} pole: one-sided slope {one_sided:.3e} against local variation {variation:.3e}"
                )));
            }
        }
        Ok(())
    }
}

/// SO(4)-invariant symmetric 2-tensor field given by its frame components:
/// `rad` along `dt` and `sph` on each of the three sphere directions.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSym2Field {
    pub rad: RadialField,
    pub sph: RadialField,
}

impl InvariantSym2Field {
    pub fn new(rad: RadialField, sph: RadialField) -> Self {
        InvariantSym2Field { rad, sph }
    }

    pub fn zeros(n_nodes: usize) -> Self {
        Self::new(RadialField::zeros(n_nodes), RadialField::zeros(n_nodes))
    }

    /// `u·g`
    pub fn conformal(u: &RadialField) -> Self {
        Self::new(u.clone(), u.clone())
    }

    pub fn trace(&self) -> RadialField {
        self.rad.zip_with(&self.sph, |r, s| r + 3.0 * s)
    }

    /// Pointwise `|T|²`.
    pub fn norm_sq(&self) -> RadialField {
        self.rad.zip_with(&self.sph, |r, s| r * r + 3.0 * s * s)
    }

    /// Pointwise `⟨T, S⟩`.
    pub fn dot(&self, other: &InvariantSym2Field) -> RadialField {
        self.rad
            .mul(&other.rad)
            .add(&self.sph.mul(&other.sph).scale(3.0))
    }

    pub fn add(&self, other: &InvariantSym2Field) -> Self {
        Self::new(self.rad.add(&other.rad), self.sph.add(&other.sph))
    }

    pub fn sub(&self, other: &InvariantSym2Field) -> Self {
        Self::new(self.rad.sub(&other.rad), self.sph.sub(&other.sph))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.rad.scale(c), self.sph.scale(c))
    }

    /// Multiplies both components by a scalar field.
    pub fn mul_field(&self, u: &RadialField) -> Self {
        Self::new(self.rad.mul(u), self.sph.mul(u))
    }

    pub fn max_abs(&self) -> f64 {
        self.rad.max_abs().max(self.sph.max_abs())
    }

    /// Smoothness at the fixed points of the isotropy action requires `rad = sph`.
    pub fn check_pole_isotropy(&self, tol: f64) -> Result<()> {
        let n = self.rad.len();
        for k in [0, n - 1] {
            let gap = (self.rad.0[k] - self.sph.0[k]).abs();
            if gap > tol {
                return Err(Error::Parity(format!(
                    "tensor components differ by {gap:.3e} at pole node {k}"
                )));
            }
        }
        Ok(())
    }
}

/// Metric `a(t)² dt² + f(t)² g_{S³}` on a uniform grid over `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedMetric {
    length: f64,
    a: Vec<f64>,
    f: Vec<f64>,
}

impl WarpedMetric {
    /// Builds and validates a metric from nodal lapse and warp values.
    pub fn new(length: f64, a: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        let m = Self::new_unchecked(length, a, f)?;
        m.validate()?;
        Ok(m)
    }

    /// Shape checks only; used for intermediate states that are validated later.
    pub(crate) fn new_unchecked(length: f64, a: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if a.len() != f.len() {
            return Err(Error::LengthMismatch { expected: a.len(), got: f.len() });
        }
        if a.len() < 5 {
            return Err(Error::InvalidGrid(format!("{} nodes is too few", a.len())));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("interval length {length}")));
        }
        Ok(WarpedMetric { length, a, f })
    }

    /// Unit round sphere: `a ≡ 1`, `f = sin t` on `[0, π]`.
    pub fn round(intervals: usize) -> Result<Self> {
        Self::scaled_round(intervals, 1.0)
    }

    /// Round sphere of radius `rho`: `a ≡ 1`, `f = ρ sin(t/ρ)` on `[0, ρπ]`.
    pub fn scaled_round(intervals: usize, rho: f64) -> Result<Self> {
        if intervals < MIN_ROUND_NODES || !intervals.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "round metric needs an even interval count of at least {MIN_ROUND_NODES}, got {intervals}"
            )));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidArgument(format!("radius {rho}")));
        }
        let length = rho * PI;
        let dt = length / intervals as f64;
        let f = (0..=intervals)
            .map(|k| {
                if k == 0 || k == intervals {
                    0.0
                } else {
                    rho * (k as f64 * dt / rho).sin()
                }
            })
            .collect();
        Self::new(length, vec![1.0; intervals + 1], f)
    }

    /// Number of grid intervals `N`.
    pub fn intervals(&self) -> usize {
        self.a.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.a.len()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.intervals() as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        // exact endpoint
        if k == self.intervals() {
            self.length
        } else {
            k as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|k| self.node(k))
    }

    pub fn lapse(&self) -> &[f64] {
        &self.a
    }

    pub fn warp(&self) -> &[f64] {
        &self.f
    }

    /// Slope `f'/a` at the two poles from the odd extension of `f`.
    pub fn pole_slopes(&self) -> (f64, f64) {
        let n = self.intervals();
        let dt = self.spacing();
        let left = (8.0 * self.f[1] - self.f[2]) / (6.0 * dt) / self.a[0];
        let right = -(8.0 * self.f[n - 1] - self.f[n - 2]) / (6.0 * dt) / self.a[n];
        (left, right)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.intervals();
        if let Some(k) = self.a.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidMetric(format!("lapse {} at node {k}", self.a[k])));
        }
        let f_max = self.f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if self.f[0].abs() > 1e-12 * f_max || self.f[n].abs() > 1e-12 * f_max {
            return Err(Error::InvalidMetric("warp must vanish at both poles".into()));
        }
        if let Some(k) = (1..n).find(|&k| !(self.f[k].is_finite() && self.f[k] > 0.0)) {
            return Err(Error::InvalidMetric(format!("warp {} at interior node {k}", self.f[k])));
        }
        let dt = self.spacing();
        let tol = (REGULARITY_SLACK * dt * dt).max(1e-8);
        let (left, right) = self.pole_slopes();
        if (left - 1.0).abs() > tol || (right + 1.0).abs() > tol {
            return Err(Error::InvalidMetric(format!(
                "pole regularity f'/a = ({left:.6}, {:.6}) instead of (1, -1)",
                -right
            )));
        }
        Ok(())
    }

    /// `λ² g`: both `a` and `f` scale by `λ`.
    pub fn scaled(&self, lambda: f64) -> Self {
        WarpedMetric {
            length: self.length,
            a: self.a.iter().map(|x| lambda * x).collect(),
            f: self.f.iter().map(|x| lambda * x).collect(),
        }
    }

    /// Conformal change `u² g` for a positive radial factor.
    pub fn conformal(&self, u: &RadialField) -> Result<Self> {
        if u.len() != self.n_nodes() {
            return Err(Error::LengthMismatch { expected: self.n_nodes(), got: u.len() });
        }
        if u.0.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidArgument("conformal factor must be positive".into()));
        }
        let a = self.a.iter().zip(&u.0).map(|(a, u)| a * u).collect();
        let f = self.f.iter().zip(&u.0).map(|(f, u)| f * u).collect();
        Self::new(self.length, a, f)
    }

    /// Multiplies `a²` by `1 + ε h_rad` and `f²` by `1 + ε h_sph`.
    pub fn perturbed_by(&self, h: &InvariantSym2Field, eps: f64) -> Result<Self> {
        let n = self.n_nodes();
        if h.rad.len() != n || h.sph.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: h.rad.len() });
        }
        let factor = |x: f64| {
            let q = 1.0 + eps * x;
            if q > 0.0 {
                Ok(q.sqrt())
            } else {
                Err(Error::InvalidMetric(format!("perturbation factor {q} is not positive")))
            }
        };
        let a = self
            .a
            .iter()
            .zip(&h.rad.0)
            .map(|(a, &x)| factor(x).map(|q| a * q))
            .collect::<Result<Vec<_>>>()?;
        let f = self
            .f
            .iter()
            .zip(&h.sph.0)
            .map(|(f, &x)| factor(x).map(|q| f * q))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.length, a, f)
    }

    /// Multiplies the warp by `1 + amplitude·sin²(mode·π t / L)`; the bump is
    /// even about both poles and vanishes there, so pole regularity survives.
    pub fn perturb(&self, mode: u32, amplitude: f64) -> Result<Self> {
        if !(amplitude.abs() < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "perturbation amplitude {amplitude} must satisfy |amplitude| < 0.5"
            )));
        }
        if amplitude == 0.0 || mode == 0 {
            return Ok(self.clone());
        }
        let c = mode as f64 * PI / self.length;
        let f = self
            .f
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                let b = (c * self.node(k)).sin().powi(2);
                f * (1.0 + amplitude * b)
            })
            .collect();
        Self::new(self.length, self.a.clone(), f)
    }

    /// Plain-text snapshot: `N=`, `L=`, `tau=` header lines then `t a f` rows.
    pub fn to_snapshot(&self, tau: f64) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "N={}", self.intervals());
        let _ = writeln!(out, "L={:.16e}", self.length);
        let _ = writeln!(out, "tau={tau:.16e}");
        for k in 0..self.n_nodes() {
            let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", self.node(k), self.a[k], self.f[k]);
        }
        out
    }

    /// Parses a snapshot, returning the metric and its flow time.
    pub fn from_snapshot(text: &str) -> Result<(Self, f64)> {
        let parse_err = |message: String| Error::Parse { context: "snapshot".into(), message };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| parse_err(format!("missing {key} line")))?;
            line.trim()
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| parse_err(format!("expected {key}=..., found {line:?}")))
        };
        let n: usize = header("N")?.parse().map_err(|e| parse_err(format!("N: {e}")))?;
        let length: f64 = header("L")?.parse().map_err(|e| parse_err(format!("L: {e}")))?;
        let tau: f64 = header("tau")?.parse().map_err(|e| parse_err(format!("tau: {e}")))?;
        let mut a = Vec::with_capacity(n + 1);
        let mut f = Vec::with_capacity(n + 1);
        for line in lines {
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|e| parse_err(format!("{x:?}: {e}"))))
                .collect::<Result<_>>()?;
            if cols.len() != 3 {
                return Err(parse_err(format!("row {line:?} does not have three columns")));
            }
            a.push(cols[1]);
            f.push(cols[2]);
        }
        if a.len() != n + 1 {
            return Err(parse_err(format!("expected {} rows, found {}", n + 1, a.len())));
        }
        Ok((Self::new(length, a, f)?, tau))
    }

    pub fn write_snapshot(&self, path: &Path, tau: f64) -> Result<()> {
        std::fs::write(path, self.to_snapshot(tau))?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<(Self, f64)> {
        Self::from_snapshot(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_metric_definition() {
        let m = WarpedMetric::round(64).unwrap();
        assert_eq!(m.intervals(), 64);
        assert!((m.warp()[32] - 1.0).abs() < 1e-15);
        assert!(m.lapse().iter().all(|&a| a == 1.0));
        assert_eq!(m.node(64), PI);
    }

    #[test]
    fn round_metric_rejects_small_or_odd_grids() {
        assert!(WarpedMetric::round(8).is_err());
        assert!(WarpedMetric::round(33).is_err());
        assert!(WarpedMetric::round(16).is_ok());
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let m = WarpedMetric::round(32).unwrap();
        assert_eq!(m.perturb(2, 0.0).unwrap(), m);
    }

    #[test]
    fn perturbation_keeps_pole_conditions() {
        for n in [32, 64, 128] {
            let m = WarpedMetric::round(n).unwrap().perturb(2, 0.05).unwrap();
            let (l, r) = m.pole_slopes();
            let dt = m.spacing();
            assert!((l - 1.0).abs() < dt * dt, "{l}");
            assert!((r + 1.0).abs() < dt * dt, "{r}");
        }
    }

    #[test]
    fn perturbation_rejects_large_amplitude() {
        let m = WarpedMetric::round(32).unwrap();
        assert!(m.perturb(2, 0.5).is_err());
        assert!(m.perturb(2, -0.7).is_err());
    }

    #[test]
    fn rejects_cone_and_bad_values() {
        let m = WarpedMetric::round(32).unwrap();
        let f: Vec<f64> = m.warp().iter().map(|x| 1.2 * x).collect();
        assert!(matches!(
            WarpedMetric::new(m.length(), m.lapse().to_vec(), f),
            Err(Error::InvalidMetric(_))
        ));
        let mut a = m.lapse().to_vec();
        a[5] = -1.0;
        assert!(WarpedMetric::new(m.length(), a, m.warp().to_vec()).is_err());
        let mut f = m.warp().to_vec();
        f[0] = 0.1;
        assert!(WarpedMetric::new(m.length(), m.lapse().to_vec(), f).is_err());
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let m = WarpedMetric::round(48).unwrap().perturb(3, 0.1).unwrap();
        let text = m.to_snapshot(0.125);
        assert!(text.starts_with("N=48\nL="));
        let (back, tau) = WarpedMetric::from_snapshot(&text).unwrap();
        assert_eq!(tau, 0.125);
        assert_eq!(back, m);
    }

    #[test]
    fn snapshot_rejects_truncated_input() {
        let m = WarpedMetric::round(16).unwrap();
        let text = m.to_snapshot(0.0);
        let cut: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(matches!(WarpedMetric::from_snapshot(&cut), Err(Error::Parse { .. })));
        assert!(WarpedMetric::from_snapshot("L=1\nN=2\n").is_err());
    }

    #[test]
    fn parity_check() {
        let m = WarpedMetric::round(64).unwrap();
        assert!(RadialField::from_fn(&m, f64::cos).check_even_parity().is_ok());
        assert!(RadialField::from_fn(&m, |t| 1.0 + t).check_even_parity().is_err());
        assert!(RadialField::from_fn(&m, f64::sin).check_even_parity().is_err());
        assert!(RadialField::constant(65, 3.0).check_even_parity().is_ok());
    }
}
