//! Positive coexistence steady states near the double bifurcation point
//! (lambda1*, lambda2*): expansion coefficients, the first-order correction
//! and a full Newton solve of the discrete elliptic system.

use std::f64::consts::FRAC_PI_4;

use serde::{Deserialize, Serialize};

use crate::bifurcation::{compute_kappas, KappaConvention, KappaSet};
use crate::eigen::{principal_eigen, EigenPair, ProfileSpec, ResourceProfile};
use crate::error::{Error, Result};
use crate::grid::{dot, flux_divergence, flux_divergence_into, inner_product, laplacian_into, max_abs, Field, Ghost, Grid};
use crate::linalg::Banded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub d1: f64,
    pub d2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub omega: f64,
    pub r1: ProfileSpec,
    pub r2: ProfileSpec,
}

impl Default for ModelParams {
    /// Preset Q1 at the point (d1, d2) = (1, 3).
    fn default() -> Self {
        ModelParams {
            d1: 1.0,
            d2: 3.0,
            lambda1: 2.0,
            lambda2: 2.0,
            a11: 0.5,
            a12: 0.5,
            a21: 1.0,
            a22: 1.5,
            omega: FRAC_PI_4,
            r1: ProfileSpec::Cos1,
            r2: ProfileSpec::Sin1,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.d1, self.d2, self.lambda1, self.lambda2, self.a11, self.a12, self.a21, self.a22, self.omega,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        for (name, v) in [("a11", self.a11), ("a12", self.a12), ("a21", self.a21), ("a22", self.a22)] {
            if v <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.lambda1 <= 0.0 || self.lambda2 <= 0.0 {
            return Err(Error::InvalidArgument("lambda1, lambda2 must be positive".into()));
        }
        if !(self.omega > 0.0 && self.omega < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidArgument("omega must lie in (0, pi/2)".into()));
        }
        self.r1.validate()?;
        self.r2.validate()
    }

    pub fn with_point(&self, d1: f64, d2: f64) -> Self {
        ModelParams { d1, d2, ..self.clone() }
    }
}

/// Resource profiles and principal eigenpairs on one grid.
#[derive(Debug, Clone)]
pub struct Basis {
    pub grid: Grid,
    pub r1: ResourceProfile,
    pub r2: ResourceProfile,
    pub eig1: EigenPair,
    pub eig2: EigenPair,
}

impl Basis {
    pub fn new(params: &ModelParams, grid: Grid) -> Result<Self> {
        let r1 = ResourceProfile::new(params.r1.clone(), grid)?;
        let r2 = ResourceProfile::new(params.r2.clone(), grid)?;
        let eig1 = principal_eigen(&r1)?;
        let eig2 = principal_eigen(&r2)?;
        Ok(Basis { grid, r1, r2, eig1, eig2 })
    }

    pub fn kappas(&self, omega: f64, convention: KappaConvention) -> Result<KappaSet> {
        compute_kappas(&self.eig1, &self.eig2, omega, convention)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    Leading,
    FirstOrder,
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub s: f64,
    pub u: Field,
    pub v: Field,
    pub order: Order,
    pub lambda1_prime0: f64,
    pub lambda2_prime0: f64,
    pub w1_prime0: Option<Field>,
    pub w2_prime0: Option<Field>,
    pub newton_residual: Option<f64>,
    /// Max-norm residual before each Newton step and after the last one.
    pub newton_history: Vec<f64>,
    pub positive: bool,
}

/// Strictly positive at every node and not collapsed onto zero. The floor
/// rejects semi-trivial states whose vanishing component underflows to tiny
/// positive values.
fn is_positive(f: &Field) -> bool {
    f.min() > 0.0 && f.max() > POSITIVITY_FLOOR
}

const POSITIVITY_FLOOR: f64 = 1e-6;

pub fn lambda_primes(params: &ModelParams, basis: &Basis, kappas: &KappaSet) -> Result<(f64, f64)> {
    let den1 = inner_product(&basis.r1.samples, &basis.eig1.phi.map(|v| v * v))?;
    let den2 = inner_product(&basis.r2.samples, &basis.eig2.phi.map(|v| v * v))?;
    if den1 <= 0.0 || den2 <= 0.0 {
        return Err(Error::Admissibility("int r phi^2 <= 0".into()));
    }
    let l1 = basis.eig1.lambda_star;
    let l2 = basis.eig2.lambda_star;
    let p1 = (l1 * (params.a11 * kappas.kappa3 + params.a12 * kappas.kappa4) - params.d1 * kappas.kappa1) / den1;
    let p2 = (l2 * (params.a21 * kappas.kappa5 + params.a22 * kappas.kappa6) - params.d2 * kappas.kappa2) / den2;
    Ok((p1, p2))
}

/// First-order inversion of lambda(s) = lambda* + lambda'(0) s.
pub fn s_from_lambda(lambda_target: f64, lambda_star: f64, lambda_prime0: f64) -> Result<f64> {
    if lambda_prime0 == 0.0 {
        return Err(Error::DegenerateExpansion);
    }
    let s = (lambda_target - lambda_star) / lambda_prime0;
    if lambda_target == lambda_star {
        return Ok(0.0);
    }
    if s <= 0.0 {
        return Err(Error::Subcritical { s });
    }
    Ok(s)
}

/// Both amplitude candidates when lambda1 and lambda2 are prescribed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeCandidates {
    pub from_lambda1: f64,
    pub from_lambda2: f64,
    pub mismatch: f64,
}

pub fn amplitude_candidates(params: &ModelParams, basis: &Basis, primes: (f64, f64)) -> Result<AmplitudeCandidates> {
    let s1 = s_from_lambda(params.lambda1, basis.eig1.lambda_star, primes.0)?;
    let s2 = s_from_lambda(params.lambda2, basis.eig2.lambda_star, primes.1)?;
    Ok(AmplitudeCandidates {
        from_lambda1: s1,
        from_lambda2: s2,
        mismatch: s1 - s2,
    })
}

pub fn leading_state(s: f64, omega: f64, eig1: &EigenPair, eig2: &EigenPair) -> SteadyState {
    let u = eig1.phi.scaled(s * omega.cos());
    let v = eig2.phi.scaled(s * omega.sin());
    SteadyState {
        s,
        positive: is_positive(&u) && is_positive(&v),
        u,
        v,
        order: Order::Leading,
        lambda1_prime0: f64::NAN,
        lambda2_prime0: f64::NAN,
        w1_prime0: None,
        w2_prime0: None,
        newton_residual: None,
        newton_history: vec![],
    }
}

/// Output of the bordered correction solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WPrime {
    pub w1: Field,
    pub w2: Field,
    /// Border multipliers; zero when lambda'(0) makes the system solvable.
    pub multipliers: (f64, f64),
    /// ||A w + mu phi - f|| / ||f|| for each species.
    pub relative_residuals: (f64, f64),
}

/// Solves [A phi; phi^T 0][w; mu] = [f; 0] with A = Delta + lambda* r and
/// A phi = 0 up to the eigen solver residual.
fn bordered_solve(eig: &EigenPair, r: &Field, rhs: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    let grid = *eig.phi.grid();
    let n = grid.n();
    let h = grid.h();
    let phi = eig.phi.values();
    let lam = eig.lambda_star;
    let c = 1.0 / (h * h);

    let mut a = Banded::zeros(n, 1, 1);
    for j in 0..n {
        a.add(j, j, -2.0 * c + lam * r.values()[j]);
        if j > 0 {
            a.add(j, j - 1, c);
        }
        if j + 1 < n {
            a.add(j, j + 1, c);
        }
    }
    let pp = dot(h, phi, phi);
    let mu = dot(h, phi, rhs) / pp;
    let mut f: Vec<f64> = rhs.iter().zip(phi).map(|(f, p)| f - mu * p).collect();

    // pin the node with the largest phi; the remaining rows have full rank
    let k = (0..n)
        .max_by(|&i, &j| phi[i].partial_cmp(&phi[j]).unwrap())
        .unwrap_or(0);
    let full = a.clone();
    a.set_identity_row(k);
    f[k] = 0.0;
    a.solve(&mut f)
        .map_err(|_| Error::Singular("bordered system singular beyond deflation".into()))?;
    let proj = dot(h, phi, &f) / pp;
    let w: Vec<f64> = f.iter().zip(phi).map(|(w, p)| w - proj * p).collect();

    let aw = full.matvec(&w);
    let mut res = 0.0;
    for j in 0..n {
        let e = aw[j] + mu * phi[j] - rhs[j];
        res += e * e;
    }
    let rhs_norm = dot(h, rhs, rhs).sqrt();
    let rel = if rhs_norm > 0.0 { (h * res).sqrt() / rhs_norm } else { (h * res).sqrt() };
    Ok((w, mu, rel))
}

pub fn solve_w_prime(params: &ModelParams, basis: &Basis, primes: (f64, f64)) -> Result<WPrime> {
    let (c, s) = (params.omega.cos(), params.omega.sin());
    let phi = &basis.eig1.phi;
    let psi = &basis.eig2.phi;
    let l1 = basis.eig1.lambda_star;
    let l2 = basis.eig2.lambda_star;
    let dphi = flux_divergence(phi, phi)?;
    let dpsi = flux_divergence(psi, psi)?;
    let r1 = basis.r1.samples.values();
    let r2 = basis.r2.samples.values();
    let n = basis.grid.n();
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    for j in 0..n {
        let (p, q) = (phi.values()[j], psi.values()[j]);
        f1[j] = -(params.d1 * c * c * dphi.values()[j] + primes.0 * c * p * r1[j]
            - l1 * c * p * (params.a11 * c * p + params.a12 * s * q));
        f2[j] = -(params.d2 * s * s * dpsi.values()[j] + primes.1 * s * q * r2[j]
            - l2 * s * q * (params.a21 * c * p + params.a22 * s * q));
    }
    let (w1, mu1, res1) = bordered_solve(&basis.eig1, &basis.r1.samples, &f1)?;
    let (w2, mu2, res2) = bordered_solve(&basis.eig2, &basis.r2.samples, &f2)?;
    Ok(WPrime {
        w1: Field::new(basis.grid, w1)?,
        w2: Field::new(basis.grid, w2)?,
        multipliers: (mu1, mu2),
        relative_residuals: (res1, res2),
    })
}

/// u = s (cos(omega) phi + s w1'(0)), v likewise.
pub fn first_order_state(s: f64, params: &ModelParams, basis: &Basis, primes: (f64, f64), wp: &WPrime) -> Result<SteadyState> {
    let lead = leading_state(s, params.omega, &basis.eig1, &basis.eig2);
    let u = lead.u.zip_with(&wp.w1, |a, w| a + s * s * w)?;
    let v = lead.v.zip_with(&wp.w2, |a, w| a + s * s * w)?;
    Ok(SteadyState {
        s,
        positive: is_positive(&u) && is_positive(&v),
        u,
        v,
        order: Order::FirstOrder,
        lambda1_prime0: primes.0,
        lambda2_prime0: primes.1,
        w1_prime0: Some(wp.w1.clone()),
        w2_prime0: Some(wp.w2.clone()),
        newton_residual: None,
        newton_history: vec![],
    })
}

/// Residual of the discrete steady-state system, interleaved (u_j, v_j).
pub fn steady_residual(params: &ModelParams, basis: &Basis, u: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h = basis.grid.h();
    let n = u.len();
    let r1 = basis.r1.samples.values();
    let r2 = basis.r2.samples.values();
    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    laplacian_into(h, u, &mut gu);
    flux_divergence_into(h, u, u, Ghost::Zero, &mut tmp);
    for j in 0..n {
        gu[j] += params.d1 * tmp[j] + params.lambda1 * u[j] * (r1[j] - params.a11 * u[j] - params.a12 * v[j]);
    }
    laplacian_into(h, v, &mut gv);
    flux_divergence_into(h, v, v, Ghost::Zero, &mut tmp);
    for j in 0..n {
        gv[j] += params.d2 * tmp[j] + params.lambda2 * v[j] * (r2[j] - params.a21 * u[j] - params.a22 * v[j]);
    }
    (gu, gv)
}

fn steady_jacobian(params: &ModelParams, basis: &Basis, u: &[f64], v: &[f64]) -> Banded {
    // unknowns interleaved as (u_0, v_0, u_1, v_1, ...); the self flux
    // div(u grad u) equals Laplacian(u^2)/2 with zero ghosts
    let n = u.len();
    let h = basis.grid.h();
    let c = 1.0 / (h * h);
    let r1 = basis.r1.samples.values();
    let r2 = basis.r2.samples.values();
    let mut jac = Banded::zeros(2 * n, 2, 2);
    for j in 0..n {
        let (iu, iv) = (2 * j, 2 * j + 1);
        jac.add(iu, iu, -2.0 * c - 2.0 * c * params.d1 * u[j]
            + params.lambda1 * (r1[j] - 2.0 * params.a11 * u[j] - params.a12 * v[j]));
        jac.add(iu, iv, -params.lambda1 * params.a12 * u[j]);
        jac.add(iv, iv, -2.0 * c - 2.0 * c * params.d2 * v[j]
            + params.lambda2 * (r2[j] - params.a21 * u[j] - 2.0 * params.a22 * v[j]));
        jac.add(iv, iu, -params.lambda2 * params.a21 * v[j]);
        if j > 0 {
            jac.add(iu, iu - 2, c + c * params.d1 * u[j - 1]);
            jac.add(iv, iv - 2, c + c * params.d2 * v[j - 1]);
        }
        if j + 1 < n {
            jac.add(iu, iu + 2, c + c * params.d1 * u[j + 1]);
            jac.add(iv, iv + 2, c + c * params.d2 * v[j + 1]);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-9,
            max_iter: 60,
            max_halvings: 30,
        }
    }
}

fn max_norm2(a: &[f64], b: &[f64]) -> f64 {
    max_abs(a).max(max_abs(b))
}

/// Damped Newton on the discrete elliptic system with lambda1, lambda2 fixed
/// at the values in `params`. Always takes at least one step.
pub fn refine_steady_state(initial: &SteadyState, params: &ModelParams, basis: &Basis, opts: NewtonOptions) -> Result<SteadyState> {
    let n = basis.grid.n();
    let mut u = initial.u.values().to_vec();
    let mut v = initial.v.values().to_vec();
    let (mut gu, mut gv) = steady_residual(params, basis, &u, &v);
    let mut res = max_norm2(&gu, &gv);
    let mut history = vec![res];
    let mut steps = 0;
    while steps == 0 || res > opts.tol {
        if steps >= opts.max_iter || !res.is_finite() {
            return Err(Error::NewtonStalled { residual: res });
        }
        let jac = steady_jacobian(params, basis, &u, &v);
        let mut dz = vec![0.0; 2 * n];
        for j in 0..n {
            dz[2 * j] = -gu[j];
            dz[2 * j + 1] = -gv[j];
        }
        jac.solve(&mut dz)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let un: Vec<f64> = (0..n).map(|j| u[j] + alpha * dz[2 * j]).collect();
            let vn: Vec<f64> = (0..n).map(|j| v[j] + alpha * dz[2 * j + 1]).collect();
            let (gun, gvn) = steady_residual(params, basis, &un, &vn);
            let rn = max_norm2(&gun, &gvn);
            // a converged start may not decrease further; accept roundoff-level steps
            if rn < (1.0 - 1e-4 * alpha) * res || rn <= opts.tol {
                u = un;
                v = vn;
                gu = gun;
                gv = gvn;
                res = rn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(Error::NewtonStalled { residual: res });
        }
        steps += 1;
        history.push(res);
    }
    let u = Field::new(basis.grid, u)?;
    let v = Field::new(basis.grid, v)?;
    Ok(SteadyState {
        s: initial.s,
        positive: is_positive(&u) && is_positive(&v),
        u,
        v,
        order: Order::Refined,
        lambda1_prime0: initial.lambda1_prime0,
        lambda2_prime0: initial.lambda2_prime0,
        w1_prime0: initial.w1_prime0.clone(),
        w2_prime0: initial.w2_prime0.clone(),
        newton_residual: Some(res),
        newton_history: history,
    })
}

/// Everything the steady-state pipeline produces for one parameter set.
#[derive(Debug, Clone)]
pub struct SteadyPipeline {
    pub kappas: KappaSet,
    pub primes: (f64, f64),
    pub amplitudes: AmplitudeCandidates,
    pub w_prime: WPrime,
    pub state: SteadyState,
    /// Continuation stages used before the final Newton solve converged.
    pub continuation_steps: usize,
}

/// Follows positive solutions of `path(theta)` from theta = 0 (where `start`
/// solves the system) to theta = 1. Returns the end state and the number of
/// accepted stages.
fn continue_along(
    start: SteadyState,
    path: impl Fn(f64) -> ModelParams,
    basis: &Basis,
    opts: NewtonOptions,
) -> Result<(SteadyState, usize)> {
    let mut current = start;
    let mut theta = 0.0f64;
    let mut dtheta = 0.05f64;
    let mut stages = 0;
    while theta < 1.0 {
        let next = (theta + dtheta).min(1.0);
        match refine_steady_state(&current, &path(next), basis, opts) {
            Ok(st) if st.positive => {
                current = st;
                theta = next;
                dtheta = (dtheta * 1.5).min(0.25);
                stages += 1;
            }
            _ => {
                dtheta *= 0.5;
                if dtheta < 1e-4 {
                    return Err(Error::NewtonStalled {
                        residual: current.newton_residual.unwrap_or(f64::NAN),
                    });
                }
            }
        }
    }
    Ok((current, stages))
}

/// A positive solution with d1 = d2 = 0 at the target lambdas, from the
/// expansion or from a sine profile.
fn undrifted_state(params: &ModelParams, basis: &Basis, kappas: &KappaSet, opts: NewtonOptions) -> Result<SteadyState> {
    let p0 = params.with_point(0.0, 0.0);
    let mut guesses = vec![];
    if let Ok(primes) = lambda_primes(&p0, basis, kappas) {
        if let Ok(s) = s_from_lambda(p0.lambda1, basis.eig1.lambda_star, primes.0) {
            if let Ok(wp) = solve_w_prime(&p0, basis, primes) {
                if let Ok(g) = first_order_state(s, &p0, basis, primes, &wp) {
                    guesses.push(g);
                }
            }
        }
    }
    let sine = basis.grid.sample(|x| {
        let (a, b) = (basis.grid.a(), basis.grid.b());
        (std::f64::consts::PI * (x - a) / (b - a)).sin()
    });
    for amp in [0.5, 1.0, 0.25, 2.0] {
        let mut g = leading_state(0.0, params.omega, &basis.eig1, &basis.eig2);
        g.u = sine.scaled(amp);
        g.v = sine.scaled(amp);
        guesses.push(g);
    }
    let mut last = Error::NewtonStalled { residual: f64::NAN };
    for g in guesses {
        match refine_steady_state(&g, &p0, basis, opts) {
            Ok(st) if st.positive => return Ok(st),
            Ok(_) => {}
            Err(e) => last = e,
        }
    }
    Err(last)
}

/// Builds the refined positive steady state at the target (lambda1, lambda2).
///
/// Starts from the first-order expansion with s taken from lambda1. If Newton
/// fails from there or lands on a semi-trivial state, two continuations are
/// tried in turn: in (d1, d2) from the undrifted problem, then in theta along
/// lambda_i(theta) = lambda_i* + theta (lambda_i - lambda_i*).
pub fn solve_steady_state(params: &ModelParams, basis: &Basis, opts: NewtonOptions) -> Result<SteadyPipeline> {
    let kappas = basis.kappas(params.omega, KappaConvention::SelfFlux)?;
    let primes = lambda_primes(params, basis, &kappas)?;
    let amplitudes = amplitude_candidates(params, basis, primes)?;
    let w_prime = solve_w_prime(params, basis, primes)?;
    let s = amplitudes.from_lambda1;
    let guess = first_order_state(s, params, basis, primes, &w_prime)?;
    let finish = |state: SteadyState, continuation_steps: usize| {
        let mut state = state;
        state.s = s;
        state.lambda1_prime0 = primes.0;
        state.lambda2_prime0 = primes.1;
        state.w1_prime0 = Some(w_prime.w1.clone());
        state.w2_prime0 = Some(w_prime.w2.clone());
        SteadyPipeline {
            kappas,
            primes,
            amplitudes,
            w_prime: w_prime.clone(),
            state,
            continuation_steps,
        }
    };
    if let Ok(state) = refine_steady_state(&guess, params, basis, opts) {
        if state.positive {
            return Ok(finish(state, 0));
        }
    }

    let in_d = undrifted_state(params, basis, &kappas, opts).and_then(|start| {
        continue_along(start, |t| params.with_point(t * params.d1, t * params.d2), basis, opts)
    });
    if let Ok((state, stages)) = in_d {
        return Ok(finish(state, stages));
    }

    let (l1s, l2s) = (basis.eig1.lambda_star, basis.eig2.lambda_star);
    let at = |theta: f64| ModelParams {
        lambda1: l1s + theta * (params.lambda1 - l1s),
        lambda2: l2s + theta * (params.lambda2 - l2s),
        ..params.clone()
    };
    let t0 = 0.05;
    let p0 = at(t0);
    let pr0 = lambda_primes(&p0, basis, &kappas)?;
    let s0 = s_from_lambda(p0.lambda1, l1s, pr0.0)?;
    let wp0 = solve_w_prime(&p0, basis, pr0)?;
    let start = refine_steady_state(&first_order_state(s0, &p0, basis, pr0, &wp0)?, &p0, basis, opts)?;
    let (state, stages) = continue_along(start, |t| at(t0 + t * (1.0 - t0)), basis, opts)?;
    Ok(finish(state, stages + 1))
}

/// Sufficient condition |d_i| max(state) < 1 from the stability analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H1Check {
    pub u_max: f64,
    pub v_max: f64,
    pub d1_bound: f64,
    pub d2_bound: f64,
    pub holds: bool,
}

pub fn h1_check(params: &ModelParams, state: &SteadyState) -> H1Check {
    let u_max = state.u.max_abs();
    let v_max = state.v.max_abs();
    let d1_bound = 1.0 / u_max;
    let d2_bound = 1.0 / v_max;
    H1Check {
        u_max,
        v_max,
        d1_bound,
        d2_bound,
        holds: params.d1.abs() < d1_bound && params.d2.abs() < d2_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l2_norm;
    use std::f64::consts::PI;

    fn basis(params: &ModelParams, n: usize) -> Basis {
        Basis::new(params, Grid::interval_pi(n).unwrap()).unwrap()
    }

    #[test]
    fn s_from_lambda_cases() {
        assert_eq!(s_from_lambda(1.0, 1.0, 2.0).unwrap(), 0.0);
        assert!((s_from_lambda(2.0, 0.9291, 0.5).unwrap() - 1.0709 / 0.5).abs() < 1e-12);
        assert!(matches!(s_from_lambda(2.0, 1.0, -1.0), Err(Error::Subcritical { .. })));
        assert!(matches!(s_from_lambda(2.0, 1.0, 0.0), Err(Error::DegenerateExpansion)));
    }

    #[test]
    fn lambda_prime_vanishes_without_self_terms() {
        let p = ModelParams { d1: 0.0, a11: 0.0, a12: 0.0, ..ModelParams::default() };
        let b = basis(&p, 100);
        let k = b.kappas(p.omega, KappaConvention::SelfFlux).unwrap();
        let (l1, _) = lambda_primes(&p, &b, &k).unwrap();
        assert_eq!(l1, 0.0);
        let wp = solve_w_prime(&p, &b, (l1, 0.1)).unwrap();
        assert!(wp.w1.max_abs() < 1e-12);
    }

    #[test]
    fn lambda_prime_linear_in_a11() {
        let p = ModelParams { d1: 0.0, a12: 0.0, ..ModelParams::default() };
        let b = basis(&p, 100);
        let k = b.kappas(p.omega, KappaConvention::SelfFlux).unwrap();
        let (x, _) = lambda_primes(&p, &b, &k).unwrap();
        let q = ModelParams { a11: 2.0 * p.a11, ..p.clone() };
        let (y, _) = lambda_primes(&q, &b, &k).unwrap();
        assert!((y - 2.0 * x).abs() < 1e-14);
    }

    #[test]
    fn leading_state_closed_form() {
        let p = ModelParams { r1: ProfileSpec::Constant(1.0), r2: ProfileSpec::Constant(1.0), ..ModelParams::default() };
        let b = basis(&p, 300);
        let st = leading_state(1.0, PI / 4.0, &b.eig1, &b.eig2);
        let c = (0.5f64).sqrt() * (2.0 / PI).sqrt();
        for (j, u) in st.u.values().iter().enumerate() {
            assert!((u - c * b.grid.x(j + 1).sin()).abs() < 1e-5);
        }
        let z = leading_state(0.0, PI / 4.0, &b.eig1, &b.eig2);
        assert_eq!(z.u.max_abs(), 0.0);
        let edge = leading_state(1.0, PI / 2.0, &b.eig1, &b.eig2);
        assert!(edge.u.max_abs() < 1e-15);
    }

    #[test]
    fn w_prime_is_orthogonal_and_solves_system() {
        let p = ModelParams::default();
        let b = basis(&p, 200);
        let k = b.kappas(p.omega, KappaConvention::SelfFlux).unwrap();
        let primes = lambda_primes(&p, &b, &k).unwrap();
        let wp = solve_w_prime(&p, &b, primes).unwrap();
        assert!(inner_product(&b.eig1.phi, &wp.w1).unwrap().abs() < 1e-8);
        assert!(inner_product(&b.eig2.phi, &wp.w2).unwrap().abs() < 1e-8);
        assert!(wp.relative_residuals.0 < 1e-8 && wp.relative_residuals.1 < 1e-8);
        // lambda'(0) is exactly the solvability condition
        assert!(wp.multipliers.0.abs() < 1e-8 && wp.multipliers.1.abs() < 1e-8);
    }

    #[test]
    fn decoupled_logistic_refines() {
        let p = ModelParams { d1: 0.0, d2: 0.0, a12: 0.0, a21: 0.0, ..ModelParams::default() };
        let b = basis(&p, 128);
        let pipe = solve_steady_state(&p, &b, NewtonOptions::default()).unwrap();
        assert!(pipe.state.newton_residual.unwrap() <= 1e-9);
        assert!(pipe.state.positive);
    }

    #[test]
    fn exact_start_barely_moves() {
        let p = ModelParams { d1: 0.0, d2: 0.0, a12: 0.0, a21: 0.0, ..ModelParams::default() };
        let b = basis(&p, 64);
        let st = solve_steady_state(&p, &b, NewtonOptions::default()).unwrap().state;
        let opts = NewtonOptions { tol: 1e-12, ..NewtonOptions::default() };
        let st = refine_steady_state(&st, &p, &b, opts).unwrap();
        let again = refine_steady_state(&st, &p, &b, opts).unwrap();
        assert_eq!(again.newton_history.len(), 2);
        let du = st.u.zip_with(&again.u, |a, b| a - b).unwrap();
        assert!(du.max_abs() < 1e-12);
    }

    #[test]
    fn h1_check_uses_sup_norm() {
        let p = ModelParams { d1: 2.0, d2: 0.1, ..ModelParams::default() };
        let b = basis(&p, 50);
        let st = leading_state(1.0, p.omega, &b.eig1, &b.eig2);
        let c = h1_check(&p, &st);
        assert!((c.u_max - st.u.max()).abs() < 1e-15);
        assert_eq!(c.holds, 2.0 < 1.0 / c.u_max && 0.1 < 1.0 / c.v_max);
        let _ = l2_norm(&st.u);
    }
}
