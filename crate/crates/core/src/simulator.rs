//! Method-of-lines integration of the delayed system
//!
//!   u_t = u_xx + d1 (u w_x)_x + lambda1 u (r1 - a11 u - a12 v),  w = u(t - tau)
//!   v_t = v_xx + d2 (v z_x)_x + lambda2 v (r2 - a21 u - a22 v),  z = v(t - tau)
//!
//! Diffusion is implicit, the delayed flux and the reaction are explicit.
//! dt is snapped so that tau is an integer number of steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dot, flux_divergence_into, laplacian_into, Field, Ghost};
use crate::linalg::Tridiagonal;
use crate::steady::{h1_check, Basis, ModelParams, SteadyState};

/// Ring buffer of the last m+1 states, so the oldest slot is exactly tau old.
#[derive(Debug, Clone)]
pub struct History {
    dt: f64,
    m: usize,
    slots: Vec<(Vec<f64>, Vec<f64>)>,
    head: usize,
}

impl History {
    /// Constant history equal to (u, v).
    pub fn constant(dt: f64, m: usize, u: &[f64], v: &[f64]) -> Self {
        History {
            dt,
            m,
            slots: vec![(u.to_vec(), v.to_vec()); m + 1],
            head: 0,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> f64 {
        self.m as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn push(&mut self, u: &[f64], v: &[f64]) {
        self.head = (self.head + 1) % self.slots.len();
        let slot = &mut self.slots[self.head];
        slot.0.copy_from_slice(u);
        slot.1.copy_from_slice(v);
    }

    pub fn current(&self) -> (&[f64], &[f64]) {
        let s = &self.slots[self.head];
        (&s.0, &s.1)
    }

    /// State m steps back.
    pub fn lagged(&self) -> (&[f64], &[f64]) {
        let s = &self.slots[(self.head + 1) % self.slots.len()];
        (&s.0, &s.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Second-order IMEX BDF (SBDF2) with an IMEX Euler start step.
    #[default]
    Bdf2,
    CrankNicolson,
    ImexEuler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    /// sin(2 pi (x - a)/(b - a)), i.e. sin(2x) on (0, pi)
    #[default]
    Sin2,
    /// sin(pi (x - a)/(b - a))
    Sin1,
    Flat,
}

impl Perturbation {
    pub fn eval(&self, x: f64, a: f64, b: f64) -> f64 {
        let y = std::f64::consts::PI * (x - a) / (b - a);
        match self {
            Perturbation::Sin2 => (2.0 * y).sin(),
            Perturbation::Sin1 => y.sin(),
            Perturbation::Flat => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub converged: f64,
    pub oscillation: f64,
    pub extinct: f64,
    /// Max-norm above which a run is declared blown up.
    pub blowup: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            converged: 1e-3,
            oscillation: 1e-3,
            extinct: 1e-6,
            blowup: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n: usize,
    pub dt_max: f64,
    pub t_end: f64,
    pub epsilon: f64,
    pub perturbation: Perturbation,
    /// Time between recorded series points.
    pub record_every: f64,
    /// Time between stored field snapshots.
    pub snapshot_every: f64,
    pub transient_fraction: f64,
    pub scheme: TimeScheme,
    pub tolerances: Tolerances,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 128,
            dt_max: 0.002,
            t_end: 400.0,
            epsilon: 0.01,
            perturbation: Perturbation::Sin2,
            record_every: 0.1,
            snapshot_every: 2.0,
            transient_fraction: 0.5,
            scheme: TimeScheme::Bdf2,
            tolerances: Tolerances::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n < 3 {
            return bad("n must be at least 3");
        }
        if !(self.dt_max > 0.0 && self.dt_max.is_finite()) {
            return bad("dt_max must be positive");
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive");
        }
        if !(self.epsilon.is_finite()) {
            return bad("epsilon must be finite");
        }
        if !(self.transient_fraction > 0.0 && self.transient_fraction < 1.0) {
            return bad("transient_fraction must lie in (0, 1)");
        }
        if !(self.record_every > 0.0 && self.snapshot_every > 0.0) {
            return bad("record_every and snapshot_every must be positive");
        }
        Ok(())
    }
}

/// Largest dt <= dt_max with tau = m dt, m integer. For tau = 0, (dt_max, 0).
pub fn snap_dt(tau: f64, dt_max: f64) -> Result<(f64, usize)> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau = {tau} must be nonnegative")));
    }
    if tau == 0.0 {
        return Ok((dt_max, 0));
    }
    let m = (tau / dt_max).ceil() as usize;
    let m = m.max(1);
    Ok((tau / m as f64, m))
}

/// Explicit part: memory flux plus reaction.
#[allow(clippy::too_many_arguments)]
fn explicit_terms(
    p: &ModelParams,
    h: f64,
    r1: &[f64],
    r2: &[f64],
    u: &[f64],
    v: &[f64],
    ul: &[f64],
    vl: &[f64],
    fu: &mut [f64],
    fv: &mut [f64],
) {
    flux_divergence_into(h, u, ul, Ghost::Zero, fu);
    flux_divergence_into(h, v, vl, Ghost::Zero, fv);
    for j in 0..u.len() {
        fu[j] = p.d1 * fu[j] + p.lambda1 * u[j] * (r1[j] - p.a11 * u[j] - p.a12 * v[j]);
        fv[j] = p.d2 * fv[j] + p.lambda2 * v[j] * (r2[j] - p.a21 * u[j] - p.a22 * v[j]);
    }
}

/// Full right-hand side of the delayed system at one instant.
pub fn rhs(
    u: &Field,
    v: &Field,
    u_lag: &Field,
    v_lag: &Field,
    params: &ModelParams,
    basis: &Basis,
    t: f64,
) -> Result<(Field, Field)> {
    let g = *u.grid();
    if [v.grid(), u_lag.grid(), v_lag.grid(), &basis.grid].iter().any(|x| **x != g) {
        return Err(Error::GridMismatch);
    }
    let n = g.n();
    let h = g.h();
    let mut fu = vec![0.0; n];
    let mut fv = vec![0.0; n];
    explicit_terms(
        params,
        h,
        basis.r1.samples.values(),
        basis.r2.samples.values(),
        u.values(),
        v.values(),
        u_lag.values(),
        v_lag.values(),
        &mut fu,
        &mut fv,
    );
    let mut lu = vec![0.0; n];
    let mut lv = vec![0.0; n];
    laplacian_into(h, u.values(), &mut lu);
    laplacian_into(h, v.values(), &mut lv);
    for j in 0..n {
        lu[j] += fu[j];
        lv[j] += fv[j];
    }
    if lu.iter().chain(&lv).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    Ok((Field::new(g, lu)?, Field::new(g, lv)?))
}

fn implicit_solver(n: usize, h: f64, alpha: f64, beta: f64) -> Result<Tridiagonal> {
    // alpha I - beta Laplacian
    let c = beta / (h * h);
    let diag = vec![alpha + 2.0 * c; n];
    let off = vec![-c; n - 1];
    Tridiagonal::factor(&off, &diag, &off)
}

/// Time stepper holding the current state and its delay history.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: ModelParams,
    scheme: TimeScheme,
    h: f64,
    dt: f64,
    r1: Vec<f64>,
    r2: Vec<f64>,
    history: History,
    euler: Tridiagonal,
    main: Tridiagonal,
    prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)>,
    steps: usize,
    fu: Vec<f64>,
    fv: Vec<f64>,
    work_u: Vec<f64>,
    work_v: Vec<f64>,
}

impl Integrator {
    pub fn new(params: &ModelParams, basis: &Basis, history: History, scheme: TimeScheme) -> Result<Self> {
        let n = basis.grid.n();
        let h = basis.grid.h();
        let dt = history.dt();
        if history.current().0.len() != n {
            return Err(Error::GridMismatch);
        }
        let euler = implicit_solver(n, h, 1.0, dt)?;
        let main = match scheme {
            TimeScheme::Bdf2 => implicit_solver(n, h, 1.5, dt)?,
            TimeScheme::CrankNicolson => implicit_solver(n, h, 1.0, 0.5 * dt)?,
            TimeScheme::ImexEuler => euler.clone(),
        };
        Ok(Integrator {
            params: params.clone(),
            scheme,
            h,
            dt,
            r1: basis.r1.samples.values().to_vec(),
            r2: basis.r2.samples.values().to_vec(),
            history,
            euler,
            main,
            prev: None,
            steps: 0,
            fu: vec![0.0; n],
            fv: vec![0.0; n],
            work_u: vec![0.0; n],
            work_v: vec![0.0; n],
        })
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn state(&self) -> (&[f64], &[f64]) {
        self.history.current()
    }

    /// Advances one step and pushes the new state into the history.
    pub fn step(&mut self) {
        let n = self.r1.len();
        let dt = self.dt;
        {
            let (u, v) = self.history.current();
            let (ul, vl) = self.history.lagged();
            explicit_terms(
                &self.params,
                self.h,
                &self.r1,
                &self.r2,
                u,
                v,
                ul,
                vl,
                &mut self.fu,
                &mut self.fv,
            );
        }
        let (u, v) = self.history.current();
        let (bu, bv) = (&mut self.work_u, &mut self.work_v);
        match (self.scheme, &self.prev) {
            (TimeScheme::Bdf2, Some((up, vp, fup, fvp))) => {
                for j in 0..n {
                    bu[j] = 2.0 * u[j] - 0.5 * up[j] + dt * (2.0 * self.fu[j] - fup[j]);
                    bv[j] = 2.0 * v[j] - 0.5 * vp[j] + dt * (2.0 * self.fv[j] - fvp[j]);
                }
                self.main.solve_in_place(bu);
                self.main.solve_in_place(bv);
            }
            (TimeScheme::CrankNicolson, _) => {
                laplacian_into(self.h, u, bu);
                laplacian_into(self.h, v, bv);
                for j in 0..n {
                    bu[j] = u[j] + 0.5 * dt * bu[j] + dt * self.fu[j];
                    bv[j] = v[j] + 0.5 * dt * bv[j] + dt * self.fv[j];
                }
                self.main.solve_in_place(bu);
                self.main.solve_in_place(bv);
            }
            _ => {
                for j in 0..n {
                    bu[j] = u[j] + dt * self.fu[j];
                    bv[j] = v[j] + dt * self.fv[j];
                }
                self.euler.solve_in_place(bu);
                self.euler.solve_in_place(bv);
            }
        }
        if self.scheme == TimeScheme::Bdf2 {
            let slot = self.prev.get_or_insert_with(|| (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]));
            slot.0.copy_from_slice(u);
            slot.1.copy_from_slice(v);
            slot.2.copy_from_slice(&self.fu);
            slot.3.copy_from_slice(&self.fv);
        }
        let (nu, nv) = (std::mem::take(&mut self.work_u), std::mem::take(&mut self.work_v));
        self.history.push(&nu, &nv);
        self.work_u = nu;
        self.work_v = nv;
        self.steps += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    ConvergedToSteadyState,
    SustainedOscillation,
    DecayToBoundary,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub outcome: Outcome,
    /// Peak-to-peak deviation over the post-transient window.
    pub amplitude: f64,
    pub amplitude_early: f64,
    pub amplitude_late: f64,
    pub final_deviation: f64,
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub tau: f64,
    pub dt: f64,
    pub m: usize,
    pub scheme: TimeScheme,
    pub times: Vec<f64>,
    pub l2_u: Vec<f64>,
    pub l2_v: Vec<f64>,
    pub max_u: Vec<f64>,
    pub max_v: Vec<f64>,
    /// ||u - u_s||
    pub deviation: Vec<f64>,
    /// int (u - u_s) dx, a signed signal for period estimates
    pub probe: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
    pub x: Vec<f64>,
    pub classification: Option<Classification>,
    pub negativity_flag: bool,
    pub h1_holds: bool,
}

impl SimulationResult {
    pub fn outcome(&self) -> Option<Outcome> {
        self.classification.map(|c| c.outcome)
    }
}

fn peak_to_peak(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    hi - lo
}

fn mean_peak_spacing(times: &[f64], signal: &[f64]) -> Option<f64> {
    if signal.len() < 3 {
        return None;
    }
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let mut peaks = vec![];
    for i in 1..signal.len() - 1 {
        if signal[i] > mean && signal[i] > signal[i - 1] && signal[i] >= signal[i + 1] {
            peaks.push(times[i]);
        }
    }
    if peaks.len() < 2 {
        return None;
    }
    Some((peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64)
}

/// Classifies a recorded run. The window after the transient is split into
/// an early and a late half; oscillation requires the late amplitude to be at
/// least 0.8 of the early one.
#[allow(clippy::too_many_arguments)]
pub fn classify_outcome(
    times: &[f64],
    deviation: &[f64],
    probe: &[f64],
    l2_u: &[f64],
    l2_v: &[f64],
    transient_fraction: f64,
    tol: &Tolerances,
) -> Classification {
    let empty = Classification {
        outcome: Outcome::Inconclusive,
        amplitude: f64::NAN,
        amplitude_early: f64::NAN,
        amplitude_late: f64::NAN,
        final_deviation: f64::NAN,
        period: None,
    };
    if times.len() < 4 {
        return empty;
    }
    let t0 = times[0];
    let t1 = times[times.len() - 1];
    let cut = t0 + transient_fraction * (t1 - t0);
    let mid = cut + 0.5 * (t1 - cut);
    let start = times.partition_point(|&t| t < cut);
    let split = times.partition_point(|&t| t < mid);
    let window = &deviation[start..];
    let amplitude = peak_to_peak(window);
    let amplitude_early = peak_to_peak(&deviation[start..split]);
    let amplitude_late = peak_to_peak(&deviation[split..]);
    let final_deviation = deviation[deviation.len() - 1];
    let period = mean_peak_spacing(&times[start..], &probe[start..]);

    let last_u = l2_u[l2_u.len() - 1];
    let last_v = l2_v[l2_v.len() - 1];
    let outcome = if last_u < tol.extinct || last_v < tol.extinct {
        Outcome::DecayToBoundary
    } else if amplitude < tol.converged && final_deviation < tol.converged {
        Outcome::ConvergedToSteadyState
    } else if amplitude_late >= 0.8 * amplitude_early && amplitude_late > tol.oscillation && period.is_some() {
        Outcome::SustainedOscillation
    } else {
        Outcome::Inconclusive
    };
    Classification {
        outcome,
        amplitude,
        amplitude_early,
        amplitude_late,
        final_deviation,
        period,
    }
}

/// Integrates from a constant history init * (1 + epsilon rho(x)).
pub fn simulate(params: &ModelParams, basis: &Basis, tau: f64, init: &SteadyState, config: &SimConfig) -> Result<SimulationResult> {
    config.validate()?;
    let grid = basis.grid;
    if *init.u.grid() != grid || *init.v.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let (dt, m) = snap_dt(tau, config.dt_max)?;
    let n = grid.n();
    let h = grid.h();
    let x = grid.nodes();
    let us = init.u.values();
    let vs = init.v.values();
    let rho: Vec<f64> = x.iter().map(|&xi| config.perturbation.eval(xi, grid.a(), grid.b())).collect();
    let u0: Vec<f64> = (0..n).map(|j| us[j] * (1.0 + config.epsilon * rho[j])).collect();
    let v0: Vec<f64> = (0..n).map(|j| vs[j] * (1.0 + config.epsilon * rho[j])).collect();

    let mut integ = Integrator::new(params, basis, History::constant(dt, m, &u0, &v0), config.scheme)?;
    let total = (config.t_end / dt).round() as usize;
    let rec_stride = ((config.record_every / dt).round() as usize).max(1);
    let snap_stride = ((config.snapshot_every / dt).round() as usize).max(1);

    let mut out = SimulationResult {
        tau,
        dt,
        m,
        scheme: config.scheme,
        times: vec![],
        l2_u: vec![],
        l2_v: vec![],
        max_u: vec![],
        max_v: vec![],
        deviation: vec![],
        probe: vec![],
        snapshots: vec![],
        x,
        classification: None,
        negativity_flag: false,
        h1_holds: h1_check(params, init).holds,
    };
    let mut diff = vec![0.0; n];
    let record = |out: &mut SimulationResult, k: usize, u: &[f64], v: &[f64], diff: &mut Vec<f64>| {
        for j in 0..n {
            diff[j] = u[j] - us[j];
        }
        out.times.push(k as f64 * dt);
        out.l2_u.push(dot(h, u, u).sqrt());
        out.l2_v.push(dot(h, v, v).sqrt());
        out.max_u.push(u.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        out.max_v.push(v.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        out.deviation.push(dot(h, diff, diff).sqrt());
        out.probe.push(h * diff.iter().sum::<f64>());
    };
    {
        let (u, v) = integ.state();
        record(&mut out, 0, u, v, &mut diff);
        out.snapshots.push(Snapshot { t: 0.0, u: u.to_vec(), v: v.to_vec() });
    }
    for k in 1..=total {
        integ.step();
        let (u, v) = integ.state();
        let mut worst = 0.0f64;
        let mut finite = true;
        for j in 0..n {
            if !(u[j].is_finite() && v[j].is_finite()) {
                finite = false;
                break;
            }
            worst = worst.max(u[j].abs()).max(v[j].abs());
            if u[j] < 0.0 || v[j] < 0.0 {
                out.negativity_flag = true;
            }
        }
        if !finite || worst > config.tolerances.blowup {
            let t = k as f64 * dt;
            return Err(Error::Blowup { t, partial: Box::new(out) });
        }
        if k % rec_stride == 0 || k == total {
            record(&mut out, k, u, v, &mut diff);
        }
        if k % snap_stride == 0 || k == total {
            out.snapshots.push(Snapshot { t: k as f64 * dt, u: u.to_vec(), v: v.to_vec() });
        }
    }
    out.classification = Some(classify_outcome(
        &out.times,
        &out.deviation,
        &out.probe,
        &out.l2_u,
        &out.l2_v,
        config.transient_fraction,
        &config.tolerances,
    ));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub tau: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Threshold {
    pub value: f64,
    pub bracket: (f64, f64),
    pub probes: Vec<Probe>,
    /// Bracket width after each bisection step.
    pub widths: Vec<f64>,
}

fn probe_outcome(params: &ModelParams, basis: &Basis, tau: f64, init: &SteadyState, config: &SimConfig) -> Result<Outcome> {
    let first = simulate(params, basis, tau, init, config)?.outcome().unwrap_or(Outcome::Inconclusive);
    if first != Outcome::Inconclusive {
        return Ok(first);
    }
    let longer = SimConfig { t_end: 2.0 * config.t_end, ..*config };
    let second = simulate(params, basis, tau, init, &longer)?.outcome().unwrap_or(Outcome::Inconclusive);
    if second == Outcome::Inconclusive {
        return Err(Error::InvalidBracket(format!("probe at tau = {tau} stays inconclusive")));
    }
    Ok(second)
}

/// Bisection for the delay where the steady state loses stability.
///
/// `known` may carry already classified endpoint outcomes to skip reruns.
#[allow(clippy::too_many_arguments)]
pub fn find_hopf_threshold(
    params: &ModelParams,
    basis: &Basis,
    tau_lo: f64,
    tau_hi: f64,
    init: &SteadyState,
    config: &SimConfig,
    width_tol: f64,
    known: &[(f64, Outcome)],
) -> Result<Threshold> {
    if !(tau_lo < tau_hi) || !(width_tol > 0.0) {
        return Err(Error::InvalidBracket(format!("[{tau_lo}, {tau_hi}] with tolerance {width_tol}")));
    }
    let lookup = |tau: f64| known.iter().find(|(t, _)| *t == tau).map(|(_, o)| *o);
    let mut probes = vec![];
    let lo_out = match lookup(tau_lo) {
        Some(o) => o,
        None => probe_outcome(params, basis, tau_lo, init, config)?,
    };
    probes.push(Probe { tau: tau_lo, outcome: lo_out });
    if lo_out != Outcome::ConvergedToSteadyState {
        return Err(Error::InvalidBracket(format!("tau = {tau_lo} gives {lo_out:?}, expected convergence")));
    }
    let hi_out = match lookup(tau_hi) {
        Some(o) => o,
        None => probe_outcome(params, basis, tau_hi, init, config)?,
    };
    probes.push(Probe { tau: tau_hi, outcome: hi_out });
    if hi_out != Outcome::SustainedOscillation {
        return Err(Error::InvalidBracket(format!("tau = {tau_hi} gives {hi_out:?}, expected oscillation")));
    }
    let (mut lo, mut hi) = (tau_lo, tau_hi);
    let mut widths = vec![hi - lo];
    while hi - lo >= width_tol {
        let mid = 0.5 * (lo + hi);
        let o = probe_outcome(params, basis, mid, init, config)?;
        probes.push(Probe { tau: mid, outcome: o });
        match o {
            Outcome::ConvergedToSteadyState => lo = mid,
            Outcome::SustainedOscillation => hi = mid,
            other => {
                return Err(Error::InvalidBracket(format!("probe at tau = {mid} gives {other:?}")));
            }
        }
        widths.push(hi - lo);
    }
    Ok(Threshold {
        value: 0.5 * (lo + hi),
        bracket: (lo, hi),
        probes,
        widths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::ProfileSpec;
    use crate::grid::{laplacian, Grid};
    use crate::steady::leading_state;
    use std::f64::consts::PI;

    fn pure_diffusion() -> ModelParams {
        ModelParams {
            d1: 0.0,
            d2: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
            r1: ProfileSpec::Constant(1.0),
            r2: ProfileSpec::Constant(1.0),
            ..ModelParams::default()
        }
    }

    fn basis(p: &ModelParams, n: usize) -> Basis {
        Basis::new(p, Grid::interval_pi(n).unwrap()).unwrap()
    }

    #[test]
    fn snapped_dt_divides_tau() {
        for tau in [0.3, 4.0, 10.0, 3.3592, 17.0] {
            let (dt, m) = snap_dt(tau, 0.002).unwrap();
            assert!(dt <= 0.002);
            assert!((m as f64 * dt - tau).abs() < 1e-12 * tau);
        }
        assert_eq!(snap_dt(0.0, 0.01).unwrap(), (0.01, 0));
        assert!(snap_dt(-1.0, 0.01).is_err());
    }

    #[test]
    fn history_lag_is_exact() {
        let m = 5;
        let mut hist = History::constant(0.1, m, &[0.0], &[0.0]);
        for k in 1..=20 {
            hist.push(&[k as f64], &[-(k as f64)]);
            let (lu, lv) = hist.lagged();
            let expect = if k >= m { (k - m) as f64 } else { 0.0 };
            assert_eq!(lu[0], expect);
            assert_eq!(lv[0], -expect);
            assert_eq!(hist.current().0[0], k as f64);
        }
        assert_eq!(hist.len(), m + 1);
        assert!((hist.tau() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rhs_of_zero_state_is_zero() {
        let p = ModelParams::default();
        let b = basis(&p, 20);
        let z = Field::zeros(b.grid);
        let (a, c) = rhs(&z, &z, &z, &z, &p, &b, 0.0).unwrap();
        assert_eq!(a.max_abs(), 0.0);
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn rhs_reduces_to_heat_equation() {
        let p = pure_diffusion();
        let b = basis(&p, 30);
        let u = b.grid.sample(|x| x.sin() + 0.2 * (3.0 * x).sin());
        let (a, _) = rhs(&u, &u, &u, &u, &p, &b, 0.0).unwrap();
        assert_eq!(a, laplacian(&u));
    }

    #[test]
    fn zero_state_stays_zero() {
        let p = ModelParams::default();
        let b = basis(&p, 16);
        let z = vec![0.0; 16];
        let mut it = Integrator::new(&p, &b, History::constant(0.01, 3, &z, &z), TimeScheme::Bdf2).unwrap();
        for _ in 0..50 {
            it.step();
        }
        assert!(it.state().0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pure_diffusion_is_dissipative() {
        let p = pure_diffusion();
        let b = basis(&p, 64);
        let u0: Vec<f64> = b.grid.nodes().iter().map(|&x| x * (PI - x) * (1.0 + (5.0 * x).sin())).collect();
        for scheme in [TimeScheme::CrankNicolson, TimeScheme::Bdf2, TimeScheme::ImexEuler] {
            let mut it = Integrator::new(&p, &b, History::constant(0.01, 0, &u0, &u0), scheme).unwrap();
            let mut last = dot(b.grid.h(), &u0, &u0);
            for _ in 0..200 {
                it.step();
                let e = dot(b.grid.h(), it.state().0, it.state().0);
                assert!(e <= last * (1.0 + 1e-14), "{scheme:?}");
                last = e;
            }
        }
    }

    #[test]
    fn classifier_on_synthetic_signals() {
        let tol = Tolerances::default();
        let t: Vec<f64> = (0..4001).map(|k| k as f64 * 0.1).collect();
        let ones = vec![1.0; t.len()];
        let zero = vec![0.0; t.len()];
        let c = classify_outcome(&t, &zero, &zero, &ones, &ones, 0.5, &tol);
        assert_eq!(c.outcome, Outcome::ConvergedToSteadyState);

        let period = 13.0;
        let s: Vec<f64> = t.iter().map(|&x| 0.2 * (2.0 * PI * x / period).sin()).collect();
        let c = classify_outcome(&t, &s, &s, &ones, &ones, 0.5, &tol);
        assert_eq!(c.outcome, Outcome::SustainedOscillation);
        assert!((c.period.unwrap() - period).abs() < 0.02 * period);

        let decay: Vec<f64> = t.iter().map(|&x| 0.1 * (1.0 - x / 100.0).max(0.0)).collect();
        let c = classify_outcome(&t, &decay, &decay, &ones, &ones, 0.5, &tol);
        assert_eq!(c.outcome, Outcome::ConvergedToSteadyState);

        let tiny = vec![1e-9; t.len()];
        let c = classify_outcome(&t, &zero, &zero, &tiny, &ones, 0.5, &tol);
        assert_eq!(c.outcome, Outcome::DecayToBoundary);
    }

    #[test]
    fn steady_start_without_memory_converges() {
        let p = ModelParams { d1: 0.0, d2: 0.0, a12: 0.0, a21: 0.0, ..ModelParams::default() };
        let b = basis(&p, 48);
        let st = crate::steady::solve_steady_state(&p, &b, Default::default()).unwrap().state;
        let cfg = SimConfig { n: 48, t_end: 40.0, dt_max: 0.01, ..SimConfig::default() };
        let r = simulate(&p, &b, 1.0, &st, &cfg).unwrap();
        assert_eq!(r.outcome(), Some(Outcome::ConvergedToSteadyState));
        assert!(!r.negativity_flag);
        let _ = leading_state(0.0, 0.1, &b.eig1, &b.eig2);
    }

    #[test]
    fn bad_bracket_rejected() {
        let p = ModelParams::default();
        let b = basis(&p, 8);
        let st = leading_state(0.1, p.omega, &b.eig1, &b.eig2);
        let cfg = SimConfig { n: 8, ..SimConfig::default() };
        assert!(matches!(
            find_hopf_threshold(&p, &b, 5.0, 4.0, &st, &cfg, 0.25, &[]),
            Err(Error::InvalidBracket(_))
        ));
        let known = [(1.0, Outcome::SustainedOscillation)];
        assert!(matches!(
            find_hopf_threshold(&p, &b, 1.0, 4.0, &st, &cfg, 0.25, &known),
            Err(Error::InvalidBracket(_))
        ));
    }
}
