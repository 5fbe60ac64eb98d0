//! The negative gradient flow `∂g/∂τ = −grad F` on the warped ansatz.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functionals::{coercivity_from_frame, energy_f, gauss_bonnet_chi, CoercivityParts};
use crate::geometry::{geometry_from_frame, integrate, volume, EvenStencil, GeometryCache, WarpFrame};
use crate::metric::{InvariantSym2Field, RadialField, WarpedMetric};

/// `grad F = −2Δr + ∇²s + (s/3)z + 4 z∘z − |z|² g`; the Weyl term is absent
/// because rotationally symmetric metrics are locally conformally flat.
pub fn assemble_grad_f(m: &WarpedMetric) -> Result<InvariantSym2Field> {
    let frame = WarpFrame::new(m);
    grad_f_from_frame(&frame)
}

pub(crate) fn grad_f_from_frame(frame: &WarpFrame) -> Result<InvariantSym2Field> {
    let geo = geometry_from_frame(frame)?;
    let lap_r = frame.rough_laplacian(&geo.r);
    let hess_s = frame.hessian(&geo.s.0);
    let (z_rad, z_sph) = (&geo.z.rad.0, &geo.z.sph.0);
    let n = z_rad.len();
    let mut rad = vec![0.0; n];
    let mut sph = vec![0.0; n];
    for k in 0..n {
        let s = geo.s.0[k];
        let z_sq = z_rad[k] * z_rad[k] + 3.0 * z_sph[k] * z_sph[k];
        rad[k] = -2.0 * lap_r.rad.0[k] + hess_s.rad.0[k] + s / 3.0 * z_rad[k] + 4.0 * z_rad[k] * z_rad[k] - z_sq;
        sph[k] = -2.0 * lap_r.sph.0[k] + hess_s.sph.0[k] + s / 3.0 * z_sph[k] + 4.0 * z_sph[k] * z_sph[k] - z_sq;
    }
    let e = InvariantSym2Field::new(RadialField(rad), RadialField(sph));
    if !(e.rad.is_finite() && e.sph.is_finite()) {
        return Err(Error::NonFinite("grad F"));
    }
    Ok(e)
}

/// `(F(g + εh) − F(g − εh)) / 2ε` with `h` applied to the frame components.
pub fn directional_derivative_f(m: &WarpedMetric, h: &InvariantSym2Field, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step {eps}")));
    }
    let plus = m.perturbed_by(h, eps)?;
    let minus = m.perturbed_by(h, -eps)?;
    Ok((energy_f(&plus)? - energy_f(&minus)?) / (2.0 * eps))
}

/// Relative roundoff allowance in the energy-decrease test.
pub const ENERGY_ROUNDOFF: f64 = 1e-13;

/// Consecutive halvings of one step before giving up.
pub const MAX_HALVINGS: u32 = 40;

const DT_GROWTH: f64 = 1.5;

/// Lapse-one regauging is skipped while `max |a/ā − 1|` stays below this.
const LAPSE_DRIFT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepper {
    /// Heun's method with energy-based step control.
    ExplicitAdaptive,
    /// Explicit Euler with an implicit flat biharmonic stabiliser.
    Imex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GaugePolicy {
    None,
    UnitVolume,
    LapseOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub stepper: Stepper,
    pub dt_init: f64,
    pub dt_max: f64,
    /// Fraction of the predicted first-order energy decrease a step must realise.
    pub safety: f64,
    pub gauge_policy: GaugePolicy,
    pub stop_time: f64,
    pub stop_grad_norm: f64,
    pub max_steps: usize,
    /// `sup |Rm|` treated as a forming singularity.
    pub singular_rm: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            stepper: Stepper::Imex,
            dt_init: 1e-4,
            dt_max: 0.05,
            safety: 0.1,
            gauge_policy: GaugePolicy::UnitVolume,
            stop_time: 10.0,
            stop_grad_norm: 1e-6,
            max_steps: 1_000_000,
            singular_rm: 1e4,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {x}")))
            }
        };
        positive("dt_init", self.dt_init)?;
        positive("dt_max", self.dt_max)?;
        positive("stop_time", self.stop_time)?;
        positive("singular_rm", self.singular_rm)?;
        if !(self.stop_grad_norm >= 0.0) {
            return Err(Error::InvalidArgument(format!("stop_grad_norm {}", self.stop_grad_norm)));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::InvalidArgument(format!("safety {} must lie in (0, 1)", self.safety)));
        }
        if self.dt_init > self.dt_max {
            return Err(Error::InvalidArgument("dt_init exceeds dt_max".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Everything derived from one metric that the flow reads.
#[derive(Debug, Clone)]
pub struct StateCache {
    pub geometry: GeometryCache,
    pub grad: InvariantSym2Field,
    pub energy: f64,
    pub grad_norm_sq: f64,
    pub coercivity: CoercivityParts,
}

impl StateCache {
    fn new(m: &WarpedMetric) -> Result<Self> {
        let frame = WarpFrame::new(m);
        let geometry = geometry_from_frame(&frame)?;
        let grad = grad_f_from_frame(&frame)?;
        let energy = frame.integrate(&geometry.rm_norm_sq.0);
        let grad_norm_sq = frame.integrate(&grad.norm_sq().0);
        let coercivity = coercivity_from_frame(&frame)?;
        Ok(StateCache { geometry, grad, energy, grad_norm_sq, coercivity })
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    metric: WarpedMetric,
    tau: f64,
    /// Step size to attempt next.
    pub dt: f64,
    cache: Option<StateCache>,
}

impl FlowState {
    pub fn new(metric: WarpedMetric, tau: f64, dt: f64) -> Result<Self> {
        metric.validate()?;
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("flow time {tau}")));
        }
        Ok(FlowState { metric, tau, dt, cache: None })
    }

    pub fn metric(&self) -> &WarpedMetric {
        &self.metric
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Geometry, gradient and energy of the current metric, computed on first use.
    pub fn cache(&mut self) -> Result<&StateCache> {
        if self.cache.is_none() {
            self.cache = Some(StateCache::new(&self.metric)?);
        }
        Ok(self.cache.as_ref().expect("filled above"))
    }

    pub fn trace_row(&mut self) -> Result<TraceRow> {
        let tau = self.tau;
        let chi = gauss_bonnet_chi(&self.metric)?;
        let c = self.cache()?;
        let z_l2sq = c.coercivity.z_sq;
        Ok(TraceRow {
            tau,
            energy: c.energy,
            z_l2sq,
            grad_l2sq: c.grad_norm_sq,
            chi,
            s_min: c.geometry.s.min(),
            s_max: c.geometry.s.max(),
            coercivity_ratio: c.coercivity.ratio().unwrap_or(f64::NAN),
        })
    }
}

/// Log-variables `α = ln a` and `v = ln(f/S)` with `S = sin(ct)/c`; both are
/// smooth and even about the poles, where `v = α`.
struct LogState {
    length: f64,
    alpha: Vec<f64>,
    v: Vec<f64>,
}

impl LogState {
    fn from_metric(m: &WarpedMetric) -> Self {
        let n = m.intervals();
        let c = std::f64::consts::PI / m.length();
        let alpha: Vec<f64> = m.lapse().iter().map(|a| a.ln()).collect();
        let v = (0..=n)
            .map(|k| {
                if k == 0 || k == n {
                    alpha[k]
                } else {
                    (m.warp()[k] * c / (c * m.node(k)).sin()).ln()
                }
            })
            .collect();
        LogState { length: m.length(), alpha, v }
    }

    fn to_metric(&self) -> Result<WarpedMetric> {
        let n = self.alpha.len() - 1;
        let c = std::f64::consts::PI / self.length;
        let dt = self.length / n as f64;
        let a = self.alpha.iter().map(|x| x.exp()).collect();
        let f = (0..=n)
            .map(|k| {
                if k == 0 || k == n {
                    0.0
                } else {
                    (c * k as f64 * dt).sin() / c * self.v[k].exp()
                }
            })
            .collect();
        WarpedMetric::new(self.length, a, f)
    }

    /// Adds `dt·(rate_α, rate_v)` and pins the pole values of `v` to `α`.
    fn advanced(&self, dt: f64, rate: &(Vec<f64>, Vec<f64>)) -> Self {
        let n = self.alpha.len() - 1;
        let alpha: Vec<f64> = self.alpha.iter().zip(&rate.0).map(|(x, r)| x + dt * r).collect();
        let mut v: Vec<f64> = self.v.iter().zip(&rate.1).map(|(x, r)| x + dt * r).collect();
        v[0] = alpha[0];
        v[n] = alpha[n];
        LogState { length: self.length, alpha, v }
    }
}

/// `(∂ ln a/∂τ, ∂ ln f/∂τ)` for `∂g/∂τ = −E + L_X g`. The tangential field
/// `X = ξ ∂_t` is fixed by `(aξ)' = a(E_rad − c)/2`, `c` the lapse-weighted mean
/// of `E_rad`, so `a` only rescales uniformly. Without it the discrete
/// diffeomorphism directions carry growth rates of order `Δt⁻⁴`.
fn flow_rate(m: &WarpedMetric, grad: &InvariantSym2Field) -> (Vec<f64>, Vec<f64>) {
    let n = m.intervals();
    let dt = m.spacing();
    let frame = WarpFrame::new(m);
    let a = m.lapse();
    let e = &grad.rad.0;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        num += 0.5 * (a[k] * e[k] + a[k + 1] * e[k + 1]);
        den += 0.5 * (a[k] + a[k + 1]);
    }
    let c = num / den;
    // a ξ by the trapezoid rule; vanishes at both poles up to roundoff
    let mut a_xi = vec![0.0; n + 1];
    for k in 0..n {
        a_xi[k + 1] = a_xi[k] + 0.25 * dt * (a[k] * (e[k] - c) + a[k + 1] * (e[k + 1] - c));
    }
    let alpha = vec![-0.5 * c; n + 1];
    let v = (0..=n)
        .map(|k| {
            if k == 0 || k == n {
                -0.5 * c
            } else {
                // ξ f'/f = (aξ) h
                -0.5 * grad.sph.0[k] + a_xi[k] * frame.h[k]
            }
        })
        .collect();
    (alpha, v)
}

/// Unknowns of the implicit step: a uniform log-scale of the lapse, then the
/// interior values of `v`. The pole values of `v` follow the lapse.
fn reduced_rate(rate: &(Vec<f64>, Vec<f64>)) -> DVector<f64> {
    let n = rate.1.len() - 1;
    DVector::from_iterator(n, std::iter::once(rate.0[0]).chain(rate.1[1..n].iter().copied()))
}

/// Finite-difference Jacobian of [`reduced_rate`].
fn rate_jacobian(m: &WarpedMetric, rate: &DVector<f64>) -> Result<DMatrix<f64>> {
    const EPS: f64 = 1e-7;
    let n = m.intervals();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut a = m.lapse().to_vec();
        let mut f = m.warp().to_vec();
        if j == 0 {
            a.iter_mut().for_each(|x| *x *= EPS.exp());
        } else {
            f[j] *= EPS.exp();
        }
        let probe = WarpedMetric::new_unchecked(m.length(), a, f)?;
        let shifted = reduced_rate(&flow_rate(&probe, &assemble_grad_f(&probe)?));
        jac.set_column(j, &((shifted - rate) / EPS));
    }
    Ok(jac)
}

/// Increment `(I − dt J)⁻¹ dt r`: the stiff part of the flow enters through its
/// frozen linearisation, the remainder explicitly.
fn linearly_implicit(m: &WarpedMetric, rate: &(Vec<f64>, Vec<f64>), dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.intervals();
    let r = reduced_rate(rate);
    let jac = rate_jacobian(m, &r)?;
    let system = DMatrix::identity(n, n) - jac * dt;
    let sol = system.lu().solve(&(r * dt)).ok_or(Error::Degenerate("implicit step matrix"))?;
    let mut v = vec![sol[0]; n + 1];
    v[1..n].copy_from_slice(&sol.as_slice()[1..]);
    Ok((vec![sol[0]; n + 1], v))
}

/// Candidate log-state after one step of size `dt`, with the predicted
/// first-order energy change `dF(δg) = 2⟨E, δg⟩`, `δg = (2δα, 2δv)`.
fn propose(m: &WarpedMetric, grad: &InvariantSym2Field, stepper: Stepper, dt: f64) -> Result<(LogState, f64)> {
    let log = LogState::from_metric(m);
    let k1 = flow_rate(m, grad);
    let delta = match stepper {
        Stepper::Imex => linearly_implicit(m, &k1, dt)?,
        Stepper::ExplicitAdaptive => {
            let mid = log.advanced(dt, &k1).to_metric()?;
            let k2 = flow_rate(&mid, &assemble_grad_f(&mid)?);
            let heun = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| 0.5 * dt * (p + q)).collect::<Vec<_>>();
            (heun(&k1.0, &k2.0), heun(&k1.1, &k2.1))
        }
    };
    let integrand: Vec<f64> = (0..grad.rad.len())
        .map(|k| grad.rad.0[k] * 2.0 * delta.0[k] + 3.0 * grad.sph.0[k] * 2.0 * delta.1[k])
        .collect();
    let predicted = 2.0 * integrate(m, &RadialField(integrand))?;
    Ok((log.advanced(1.0, &delta), predicted))
}

/// One fixed step with no acceptance test or gauge; the building block of [`step`].
pub fn raw_step(m: &WarpedMetric, stepper: Stepper, dt: f64) -> Result<WarpedMetric> {
    let grad = assemble_grad_f(m)?;
    propose(m, &grad, stepper, dt)?.0.to_metric()
}

/// Advances by one accepted step, halving `dt` until the energy decreases
/// by at least `safety` times its first-order prediction.
pub fn step(state: &FlowState, config: &FlowConfig) -> Result<FlowState> {
    step_within(state, config, f64::INFINITY)
}

fn step_within(state: &FlowState, config: &FlowConfig, limit: f64) -> Result<FlowState> {
    let mut state = state.clone();
    let (energy, grad) = {
        let c = state.cache()?;
        (c.energy, c.grad.clone())
    };
    let clamped = state.dt >= limit;
    let mut dt = state.dt.min(limit);
    let slack = ENERGY_ROUNDOFF * energy.abs().max(1.0);
    for halvings in 0..=MAX_HALVINGS {
        if let Some((metric, cache)) = attempt(&state.metric, &grad, energy, slack, config, dt) {
            if cache.geometry.sup_rm() > config.singular_rm {
                return Err(Error::Singularity { tau: state.tau + dt, sup_rm: cache.geometry.sup_rm() });
            }
            let (metric, cache) = apply_gauge(metric, cache, energy + slack, config.gauge_policy);
            let tau = if clamped && halvings == 0 { state.tau + limit } else { state.tau + dt };
            let next_dt = match (halvings, clamped) {
                (0, true) => state.dt,
                (0, false) => (dt * DT_GROWTH).min(config.dt_max),
                _ => dt,
            };
            return Ok(FlowState { metric, tau, dt: next_dt, cache: Some(cache) });
        }
        dt *= 0.5;
    }
    Err(Error::StepUnderflow { tau: state.tau, dt })
}

fn attempt(
    m: &WarpedMetric,
    grad: &InvariantSym2Field,
    energy: f64,
    slack: f64,
    config: &FlowConfig,
    dt: f64,
) -> Option<(WarpedMetric, StateCache)> {
    let (log, predicted) = propose(m, grad, config.stepper, dt).ok()?;
    let metric = log.to_metric().ok()?;
    let cache = StateCache::new(&metric).ok()?;
    let accepted = predicted <= 0.0 && cache.energy - energy <= config.safety * predicted + slack;
    accepted.then_some((metric, cache))
}

/// Applies the gauge unless reparametrisation error would raise `F` above `ceiling`.
fn apply_gauge(m: WarpedMetric, cache: StateCache, ceiling: f64, policy: GaugePolicy) -> (WarpedMetric, StateCache) {
    if policy == GaugePolicy::LapseOne {
        let mean = m.lapse().iter().sum::<f64>() / m.n_nodes() as f64;
        if m.lapse().iter().all(|a| (a / mean - 1.0).abs() < LAPSE_DRIFT) {
            return (m, cache);
        }
    }
    if policy == GaugePolicy::None {
        return (m, cache);
    }
    match maintain_gauge(&m, policy).and_then(|g| StateCache::new(&g).map(|c| (g, c))) {
        Ok((g, c)) if c.energy <= ceiling.max(cache.energy) => (g, c),
        _ => (m, cache),
    }
}

pub fn maintain_gauge(m: &WarpedMetric, policy: GaugePolicy) -> Result<WarpedMetric> {
    match policy {
        GaugePolicy::None => Ok(m.clone()),
        GaugePolicy::UnitVolume => Ok(m.scaled(volume(m).powf(-0.25))),
        GaugePolicy::LapseOne => reparametrize_by_arclength(m),
    }
}

/// Resamples `f` on a uniform grid in the arclength `s = ∫ a dt`, so `a ≡ 1`.
fn reparametrize_by_arclength(m: &WarpedMetric) -> Result<WarpedMetric> {
    let n = m.intervals();
    let dt = m.spacing();
    let a = m.lapse();
    let f = m.warp();
    let da = EvenStencil::new(m).d1(a);
    let mut s = vec![0.0; n + 1];
    for k in 0..n {
        // trapezoid with the Euler-Maclaurin end correction
        s[k + 1] = s[k] + 0.5 * dt * (a[k] + a[k + 1]) - dt * dt / 12.0 * (da[k + 1] - da[k]);
        if !(s[k + 1] > s[k]) {
            return Err(Error::InvalidMetric("arclength is not increasing".into()));
        }
    }
    let total = s[n];
    // odd extension of f across each pole
    let node = |k: isize| -> (f64, f64) {
        if k < 0 {
            (-s[(-k) as usize], -f[(-k) as usize])
        } else if k > n as isize {
            let j = (2 * n as isize - k) as usize;
            (2.0 * total - s[j], -f[j])
        } else {
            (s[k as usize], f[k as usize])
        }
    };
    let ds = total / n as f64;
    let mut g = vec![0.0; n + 1];
    let mut k = 0usize;
    for (j, gj) in g.iter_mut().enumerate().take(n).skip(1) {
        let sigma = j as f64 * ds;
        while k + 1 < n && s[k + 1] <= sigma {
            k += 1;
        }
        let pts: Vec<(f64, f64)> = (k as isize - 1..=k as isize + 2).map(node).collect();
        *gj = pts
            .iter()
            .enumerate()
            .map(|(i, &(xi, yi))| {
                let basis: f64 = pts
                    .iter()
                    .enumerate()
                    .filter(|&(l, _)| l != i)
                    .map(|(_, &(xl, _))| (sigma - xl) / (xi - xl))
                    .product();
                yi * basis
            })
            .sum();
    }
    WarpedMetric::new(total, vec![1.0; n + 1], g).map_err(|e| match e {
        Error::InvalidMetric(msg) => Error::InvalidMetric(format!("lapse-one interpolation failed: {msg}")),
        other => other,
    })
}

pub const TRACE_HEADER: &str = "tau,F,z_l2sq,gradF_l2sq,chi,s_min,s_max,coercivity_ratio";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub tau: f64,
    pub energy: f64,
    pub z_l2sq: f64,
    pub grad_l2sq: f64,
    pub chi: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// NaN where the ratio is 0/0.
    pub coercivity_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
}

impl FlowTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.tau, r.energy, r.z_l2sq, r.grad_l2sq, r.chi, r.s_min, r.s_max, r.coercivity_ratio
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { context: format!("trace line {line}"), message };
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => {}
            other => return Err(parse_err(1, format!("unexpected header {other:?}"))),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let v = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(i + 2, e.to_string()))?;
            if v.len() != 8 {
                return Err(parse_err(i + 2, format!("{} columns instead of 8", v.len())));
            }
            rows.push(TraceRow {
                tau: v[0],
                energy: v[1],
                z_l2sq: v[2],
                grad_l2sq: v[3],
                chi: v[4],
                s_min: v[5],
                s_max: v[6],
                coercivity_ratio: v[7],
            });
        }
        Ok(FlowTrace { rows })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// Largest relative rise of `F` between consecutive rows (0 if monotone).
    pub fn max_energy_rise(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| (w[1].energy - w[0].energy) / w[0].energy.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Time,
    GradNorm,
    MaxSteps,
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub trace: FlowTrace,
    pub state: FlowState,
    pub stop: StopReason,
}

/// A failed run, carrying everything computed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("flow aborted after {} trace rows: {error}", trace.rows.len())]
pub struct FlowAbort {
    #[source]
    pub error: Error,
    pub trace: FlowTrace,
    /// Last accepted state, if any.
    pub state: Option<FlowState>,
}

pub fn run_flow(state: FlowState, config: &FlowConfig) -> std::result::Result<FlowRun, FlowAbort> {
    let mut trace = FlowTrace::default();
    let abort = |error, trace: FlowTrace, state| FlowAbort { error, trace, state };
    if let Err(e) = config.validate() {
        return Err(abort(e, trace, Some(state)));
    }
    let mut state = state;
    state.dt = config.dt_init;
    match state.trace_row() {
        Ok(row) => trace.rows.push(row),
        Err(e) => return Err(abort(e, trace, Some(state))),
    }
    let mut steps = 0usize;
    loop {
        let grad_norm = trace.rows.last().expect("nonempty").grad_l2sq.sqrt();
        let stop = if grad_norm <= config.stop_grad_norm {
            Some(StopReason::GradNorm)
        } else if state.tau >= config.stop_time {
            Some(StopReason::Time)
        } else if steps >= config.max_steps {
            Some(StopReason::MaxSteps)
        } else {
            None
        };
        if let Some(stop) = stop {
            return Ok(FlowRun { trace, state, stop });
        }
        let next = step_within(&state, config, config.stop_time - state.tau)
            .and_then(|mut s| s.trace_row().map(|row| (s, row)));
        match next {
            Ok((s, row)) => {
                state = s;
                trace.rows.push(row);
                steps += 1;
            }
            Err(e) => return Err(abort(e, trace, Some(state))),
        }
    }
}
