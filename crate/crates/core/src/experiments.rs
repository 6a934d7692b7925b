//! Preset configurations, suite orchestration and region sweeps.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bifurcation::{
    branch_for, classify_region, compute_ks, hopf_report, region_lines, HopfBranch, HopfReport, KappaConvention,
    KappaSet, RegionLines, RegionReport,
};
use crate::eigen::{extrapolated_eigenvalue, Extrapolated};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::output;
use crate::simulator::{find_hopf_threshold, simulate, Outcome, SimConfig, SimulationResult, Threshold};
use crate::steady::{
    amplitude_candidates, h1_check, lambda_primes, solve_steady_state, AmplitudeCandidates, Basis, H1Check,
    ModelParams, NewtonOptions, SteadyPipeline,
};

/// `|observed - value| <= tol` for the observable called `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub name: String,
    pub value: f64,
    pub tol: f64,
}

impl Target {
    fn new(name: &str, value: f64, tol: f64) -> Self {
        Target {
            name: name.into(),
            value,
            tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Principal eigenvalues of both resource profiles, extrapolated.
    Eigen,
    /// Region lines, point classification and a region map.
    Lines,
    /// Steady state, Hopf data and simulations at each point.
    Dynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub name: String,
    pub d1: f64,
    pub d2: f64,
    #[serde(default)]
    pub taus: Vec<f64>,
    /// Same length as `taus`; `None` where no outcome is claimed.
    #[serde(default)]
    pub expected: Vec<Option<Outcome>>,
    /// Extra runs at the last tau with other perturbation amplitudes.
    #[serde(default)]
    pub epsilon_sweep: Vec<f64>,
    #[serde(default)]
    pub hopf: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub point: String,
    pub bracket: (f64, f64),
    pub width_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub kind: ExperimentKind,
    pub params: ModelParams,
    pub convention: KappaConvention,
    /// Grid for eigenpairs and projection coefficients.
    pub analysis_n: usize,
    #[serde(default)]
    pub points: Vec<PointSpec>,
    #[serde(default)]
    pub threshold: Option<ThresholdSpec>,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub sim: SimConfig,
}

pub fn preset_q1() -> ModelParams {
    ModelParams::default()
}

pub fn preset_q2() -> ModelParams {
    ModelParams {
        a11: 1.0,
        a12: 0.5,
        a21: 0.8,
        a22: 1.0,
        ..ModelParams::default()
    }
}

pub fn preset(name: &str) -> Option<ModelParams> {
    match name.to_ascii_uppercase().as_str() {
        "Q1" => Some(preset_q1()),
        "Q2" => Some(preset_q2()),
        _ => None,
    }
}

fn point(name: &str, d1: f64, d2: f64) -> PointSpec {
    PointSpec {
        name: name.into(),
        d1,
        d2,
        taus: vec![],
        expected: vec![],
        epsilon_sweep: vec![],
        hopf: false,
    }
}

fn runs(mut p: PointSpec, taus: &[(f64, Outcome)]) -> PointSpec {
    p.taus = taus.iter().map(|t| t.0).collect();
    p.expected = taus.iter().map(|t| Some(t.1)).collect();
    p
}

fn hopf_targets(p: &str, tau0: f64) -> Vec<Target> {
    vec![
        Target::new(&format!("{p}.hopf.unit_circle_error"), 0.0, 1e-10),
        Target::new(&format!("{p}.hopf.max_residual"), 0.0, 1e-10),
        Target::new(&format!("{p}.hopf.branch_signs"), 1.0, 0.0),
        Target::new(&format!("{p}.hopf.transversality_sign"), 1.0, 0.0),
        Target::new(&format!("{p}.tau0"), tau0, 1.0),
    ]
}

/// The six reference experiments.
pub fn builtin_suite() -> Vec<ExperimentSpec> {
    use Outcome::*;
    let base = |id: &str, kind, params| ExperimentSpec {
        id: id.into(),
        kind,
        params,
        convention: KappaConvention::Laplacian,
        analysis_n: 1000,
        points: vec![],
        threshold: None,
        targets: vec![],
        sim: SimConfig::default(),
    };

    let mut eigen = base("eigen", ExperimentKind::Eigen, preset_q1());
    eigen.targets = vec![
        Target::new("lambda1_star", 0.9291, 5e-4),
        Target::new("lambda2_star", 0.5403, 5e-4),
    ];

    let line_targets = |l1: (f64, f64), l3: (f64, f64), l5: f64, l6: f64, l6_tol: f64| {
        vec![
            Target::new("l1.slope", l1.0, 0.01),
            Target::new("l1.intercept", l1.1, 0.01),
            Target::new("l3.slope", l3.0, 0.01),
            Target::new("l3.intercept", l3.1, 0.01),
            Target::new("l5.slope", l5, 0.01),
            Target::new("l6.slope", l6, l6_tol),
        ]
    };
    let mut q1 = base("q1-lines", ExperimentKind::Lines, preset_q1());
    q1.points = vec![point("P1", 1.0, -1.0), point("P2", 0.1, 0.5), point("P3", 1.0, 3.0)];
    q1.targets = line_targets((-1.0622, 0.9050), (1.2379, 0.1827), 1.8466, 30.0015, 0.5);
    q1.targets.extend([
        Target::new("P1.region_is_d2", 1.0, 0.0),
        Target::new("P2.region_is_d2", 1.0, 0.0),
        Target::new("P3.hopf_branch_h2h5", 1.0, 0.0),
    ]);
    let mut q2 = base("q2-lines", ExperimentKind::Lines, preset_q2());
    q2.points = vec![point("P4", 2.0, 1.4)];
    q2.targets = line_targets((-1.0622, 1.0101), (0.9903, 0.2249), 0.6155, 0.7387, 0.01);
    q2.targets.push(Target::new("P4.hopf_branch_h3h6", 1.0, 0.0));

    let mut stable = base("p1-p2-stability", ExperimentKind::Dynamics, preset_q1());
    stable.points = vec![
        runs(point("P1", 1.0, -1.0), &[(10.0, ConvergedToSteadyState)]),
        runs(point("P2", 0.1, 0.5), &[(10.0, ConvergedToSteadyState)]),
    ];

    let mut p3 = base("p3-hopf", ExperimentKind::Dynamics, preset_q1());
    let mut pt = runs(point("P3", 1.0, 3.0), &[(4.0, ConvergedToSteadyState), (10.0, SustainedOscillation)]);
    pt.hopf = true;
    pt.epsilon_sweep = vec![0.001, 0.05];
    p3.points = vec![pt];
    p3.threshold = Some(ThresholdSpec {
        point: "P3".into(),
        bracket: (4.0, 10.0),
        width_tol: 0.25,
    });
    p3.targets = hopf_targets("P3", 4.6458);
    p3.targets.push(Target::new("P3.threshold_bracket_ok", 1.0, 0.0));
    p3.targets.push(Target::new("P3.threshold", 4.6458, 1.0));

    let mut p4 = base("p4-hopf", ExperimentKind::Dynamics, preset_q2());
    let mut pt = runs(point("P4", 2.0, 1.4), &[(3.0, ConvergedToSteadyState), (17.0, SustainedOscillation)]);
    pt.hopf = true;
    pt.epsilon_sweep = vec![0.001, 0.05];
    p4.points = vec![pt];
    p4.threshold = Some(ThresholdSpec {
        point: "P4".into(),
        bracket: (3.0, 17.0),
        width_tol: 0.25,
    });
    p4.targets = hopf_targets("P4", 3.3592);
    p4.targets.push(Target::new("P4.threshold_bracket_ok", 1.0, 0.0));
    p4.targets.push(Target::new("P4.threshold", 3.3592, 1.0));

    vec![eigen, q1, q2, stable, p3, p4]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub id: String,
    pub spec: ExperimentSpec,
    pub observables: BTreeMap<String, f64>,
    pub data: serde_json::Value,
    pub checks: Vec<Check>,
    /// Numerical failures met along the way. They do not abort the suite.
    pub errors: Vec<String>,
    /// Wall time per simulation, keyed "<point> tau <tau> eps <epsilon>".
    pub timings: BTreeMap<String, f64>,
    pub seconds: f64,
}

impl ExperimentRecord {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
}

impl Environment {
    fn current() -> Self {
        Environment {
            version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub experiments: Vec<ExperimentRecord>,
    pub environment: Environment,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn failed_checks(&self) -> usize {
        self.experiments.iter().flat_map(|e| &e.checks).filter(|c| !c.pass).count()
    }

    pub fn passed(&self) -> bool {
        self.failed_checks() == 0
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.experiments.iter().flat_map(|e| &e.checks).find(|c| c.name == name)
    }

    pub fn observable(&self, name: &str) -> Option<f64> {
        self.experiments.iter().find_map(|e| e.observables.get(name).copied())
    }
}

/// Shared per-experiment state while running.
struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    dir: &'a Path,
    obs: BTreeMap<String, f64>,
    checks: Vec<Check>,
    errors: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl Ctx<'_> {
    fn obs(&mut self, name: impl Into<String>, v: f64) {
        self.obs.insert(name.into(), v);
    }

    fn flag(&mut self, name: impl Into<String>, b: bool) {
        self.obs(name, if b { 1.0 } else { 0.0 });
    }

    fn error(&mut self, what: &str, e: &Error) {
        self.errors.push(format!("{what}: {e}"));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EigenData {
    r1: Extrapolated,
    r2: Extrapolated,
}

fn run_eigen(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let p = &ctx.spec.params;
    let n = ctx.spec.analysis_n;
    let r1 = extrapolated_eigenvalue(&p.r1, 0.0, std::f64::consts::PI, n)?;
    let r2 = extrapolated_eigenvalue(&p.r2, 0.0, std::f64::consts::PI, n)?;
    ctx.obs("lambda1_star", r1.value);
    ctx.obs("lambda2_star", r2.value);
    let basis = Basis::new(p, Grid::interval_pi(n)?)?;
    output::save_eigen(&ctx.dir.join("eigen_r1.csv"), &basis.eig1.phi)?;
    output::save_eigen(&ctx.dir.join("eigen_r2.csv"), &basis.eig2.phi)?;
    Ok(serde_json::to_value(EigenData { r1, r2 })?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Coefficients {
    kappas: KappaSet,
    ks: crate::bifurcation::KSet,
    lines: RegionLines,
}

fn coefficients(params: &ModelParams, basis: &Basis, convention: KappaConvention) -> Result<Coefficients> {
    let kappas = basis.kappas(params.omega, convention)?;
    let ks = compute_ks(&kappas, params, basis.eig1.lambda_star, basis.eig2.lambda_star)?;
    let lines = region_lines(&kappas, &ks)?;
    Ok(Coefficients { kappas, ks, lines })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct LinesData {
    coefficients: Coefficients,
    /// The same quantities under the other kappa convention, when admissible.
    alternative: Option<Coefficients>,
    points: Vec<RegionReport>,
}

fn other(c: KappaConvention) -> KappaConvention {
    match c {
        KappaConvention::SelfFlux => KappaConvention::Laplacian,
        KappaConvention::Laplacian => KappaConvention::SelfFlux,
    }
}

fn run_lines(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let p = ctx.spec.params.clone();
    let basis = Basis::new(&p, Grid::interval_pi(ctx.spec.analysis_n)?)?;
    let c = coefficients(&p, &basis, ctx.spec.convention)?;
    let alternative = coefficients(&p, &basis, other(ctx.spec.convention)).ok();
    ctx.obs("l1.slope", c.lines.l1.slope);
    ctx.obs("l1.intercept", c.lines.l1.intercept.abs());
    ctx.obs("l3.slope", c.lines.l3.slope);
    ctx.obs("l3.intercept", c.lines.l3.intercept.abs());
    ctx.obs("l5.slope", c.lines.l5.slope);

    let mut points = vec![];
    for pt in &ctx.spec.points {
        let r = classify_region(pt.d1, pt.d2, &c.kappas, &c.ks)?;
        ctx.flag(format!("{}.region_is_d2", pt.name), r.region == Some(crate::bifurcation::Region::D2));
        let branch = branch_for(&r.flags);
        ctx.flag(format!("{}.hopf_branch_h2h5", pt.name), branch == Some(HopfBranch::H2H5));
        ctx.flag(format!("{}.hopf_branch_h3h6", pt.name), branch == Some(HopfBranch::H3H6));
        points.push(r);
    }
    // l6 variant follows the competition hypothesis in force
    let any = classify_region(0.0, 0.0, &c.kappas, &c.ks)?;
    let l6 = if any.flags.h2 {
        c.lines.l6_h2h5
    } else if any.flags.h3 {
        c.lines.l6_h3h6
    } else {
        None
    };
    if let Some(l) = l6 {
        ctx.obs("l6.slope", l.slope);
    }

    let map = sweep_regions(&c.kappas, &c.ks, (-2.0, 2.0), (-2.0, 2.0), (81, 81))?;
    output::save_regions(&ctx.dir.join("regions.csv"), &map)?;
    Ok(serde_json::to_value(LinesData {
        coefficients: c,
        alternative,
        points,
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RunRecord {
    tau: f64,
    epsilon: f64,
    outcome: Option<Outcome>,
    result: Option<SimulationResult>,
    error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SteadySummary {
    s: f64,
    amplitudes: AmplitudeCandidates,
    newton_residual: Option<f64>,
    newton_history: Vec<f64>,
    continuation_steps: usize,
    positive: bool,
    h1: H1Check,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PointData {
    name: String,
    steady: Option<SteadySummary>,
    region: Option<RegionReport>,
    hopf: Option<HopfReport>,
    runs: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct DynamicsData {
    points: Vec<PointData>,
    threshold: Option<Threshold>,
}

fn tag(tau: f64, eps: f64, default_eps: f64) -> String {
    if eps == default_eps {
        format!("tau{tau}")
    } else {
        format!("tau{tau}_eps{eps}")
    }
}

fn hopf_analysis(ctx: &mut Ctx, pt: &PointSpec, region: &mut Option<RegionReport>) -> Result<HopfReport> {
    let p = ctx.spec.params.with_point(pt.d1, pt.d2);
    let basis = Basis::new(&p, Grid::interval_pi(ctx.spec.analysis_n)?)?;
    let c = coefficients(&p, &basis, ctx.spec.convention)?;
    let r = classify_region(pt.d1, pt.d2, &c.kappas, &c.ks)?;
    *region = Some(r);
    let branch = branch_for(&r.flags)
        .ok_or_else(|| Error::Admissibility(format!("{} satisfies neither H2/H5 nor H3/H6", pt.name)))?;
    let primes = lambda_primes(&p, &basis, &c.kappas)?;
    let s = amplitude_candidates(&p, &basis, primes)?.from_lambda1;
    let rep = hopf_report(pt.d1, pt.d2, &c.kappas, &c.ks, branch, s, 5)?;
    let name = &pt.name;
    let pt_ = &rep.point;
    ctx.obs(format!("{name}.hopf.unit_circle_error"), pt_.unit_circle_error);
    ctx.obs(format!("{name}.hopf.max_residual"), pt_.max_residual());
    let signs = match branch {
        HopfBranch::H2H5 => pt_.p1 < 0.0 && pt_.p2 < 0.0,
        HopfBranch::H3H6 => pt_.p1 > 0.0 && pt_.p2 > 0.0,
    };
    ctx.flag(format!("{name}.hopf.branch_signs"), signs);
    ctx.obs(format!("{name}.hopf.transversality_sign"), rep.transversality.sign as f64);
    ctx.obs(format!("{name}.tau0"), rep.tau[0]);
    ctx.obs(format!("{name}.s"), s);
    Ok(rep)
}

fn run_dynamics(ctx: &mut Ctx) -> Result<serde_json::Value> {
    let spec = ctx.spec;
    let mut points = vec![];
    let mut states: BTreeMap<String, (ModelParams, Basis, SteadyPipeline)> = BTreeMap::new();
    for pt in &spec.points {
        if pt.expected.len() != pt.taus.len() {
            return Err(Error::InvalidArgument(format!("{}: expected and taus differ in length", pt.name)));
        }
        let mut data = PointData {
            name: pt.name.clone(),
            steady: None,
            region: None,
            hopf: None,
            runs: vec![],
        };
        if pt.hopf {
            match hopf_analysis(ctx, pt, &mut data.region) {
                Ok(rep) => data.hopf = Some(rep),
                Err(e) => ctx.error(&format!("{} Hopf data", pt.name), &e),
            }
        }
        let p = spec.params.with_point(pt.d1, pt.d2);
        let basis = Basis::new(&p, Grid::interval_pi(spec.sim.n)?)?;
        let pipe = match solve_steady_state(&p, &basis, NewtonOptions::default()) {
            Ok(x) => x,
            Err(e) => {
                ctx.error(&format!("{} steady state", pt.name), &e);
                points.push(data);
                continue;
            }
        };
        data.steady = Some(SteadySummary {
            s: pipe.state.s,
            amplitudes: pipe.amplitudes,
            newton_residual: pipe.state.newton_residual,
            newton_history: pipe.state.newton_history.clone(),
            continuation_steps: pipe.continuation_steps,
            positive: pipe.state.positive,
            h1: h1_check(&p, &pipe.state),
        });

        let last = pt.taus.last().copied();
        let mut jobs: Vec<(f64, f64)> = pt.taus.iter().map(|&t| (t, spec.sim.epsilon)).collect();
        if let Some(t) = last {
            jobs.extend(pt.epsilon_sweep.iter().map(|&e| (t, e)));
        }
        let results: Vec<(f64, f64, Result<SimulationResult>, f64)> = jobs
            .par_iter()
            .map(|&(tau, eps)| {
                let cfg = SimConfig { epsilon: eps, ..spec.sim };
                let t0 = Instant::now();
                let r = simulate(&p, &basis, tau, &pipe.state, &cfg);
                (tau, eps, r, t0.elapsed().as_secs_f64())
            })
            .collect();
        for (tau, eps, r, secs) in results {
            let stem = format!("{}_{}", pt.name, tag(tau, eps, spec.sim.epsilon));
            let (result, error) = match r {
                Ok(res) => (Some(res), None),
                Err(Error::Blowup { t, partial }) => (Some(*partial), Some(format!("solution blew up at t = {t}"))),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(res) = &result {
                output::save_timeseries(&ctx.dir.join(format!("{stem}_timeseries.csv")), res)?;
                output::save_snapshots(&ctx.dir.join(format!("{stem}_snapshots.csv")), res)?;
            }
            ctx.timings.insert(format!("{} tau {tau} eps {eps}", pt.name), secs);
            let outcome = result.as_ref().and_then(|r| r.outcome());
            if let Some(e) = &error {
                ctx.errors.push(format!("{stem}: {e}"));
            }
            if eps == spec.sim.epsilon {
                if let Some(k) = pt.taus.iter().position(|&t| t == tau) {
                    if let Some(exp) = pt.expected[k] {
                        ctx.checks.push(Check {
                            name: format!("{}.tau{tau}.outcome", pt.name),
                            expected: format!("{exp:?}"),
                            observed: match (&outcome, &error) {
                                (Some(o), _) => format!("{o:?}"),
                                (None, Some(e)) => e.clone(),
                                (None, None) => "none".into(),
                            },
                            pass: outcome == Some(exp),
                        });
                    }
                }
            }
            data.runs.push(RunRecord {
                tau,
                epsilon: eps,
                outcome,
                result: result.map(|mut r| {
                    // the series live in the CSV files
                    r.times.clear();
                    r.l2_u.clear();
                    r.l2_v.clear();
                    r.max_u.clear();
                    r.max_v.clear();
                    r.deviation.clear();
                    r.probe.clear();
                    r.x.clear();
                    r
                }),
                error,
            });
        }
        states.insert(pt.name.clone(), (p, basis, pipe));
        points.push(data);
    }

    let mut threshold = None;
    if let Some(th) = &spec.threshold {
        match states.get(&th.point) {
            None => ctx.errors.push(format!("threshold: no steady state for {}", th.point)),
            Some((p, basis, pipe)) => {
                let known: Vec<(f64, Outcome)> = points
                    .iter()
                    .filter(|d| d.name == th.point)
                    .flat_map(|d| &d.runs)
                    .filter(|r| r.epsilon == spec.sim.epsilon)
                    .filter_map(|r| r.outcome.map(|o| (r.tau, o)))
                    .collect();
                let (lo, hi) = th.bracket;
                match find_hopf_threshold(p, basis, lo, hi, &pipe.state, &spec.sim, th.width_tol, &known) {
                    Ok(t) => {
                        ctx.obs(format!("{}.threshold", th.point), t.value);
                        let shrinking = t.widths.windows(2).all(|w| w[1] < w[0]);
                        let inside = t.bracket.0 >= lo && t.bracket.1 <= hi && t.value > lo && t.value < hi;
                        ctx.flag(format!("{}.threshold_bracket_ok", th.point), shrinking && inside);
                        threshold = Some(t);
                    }
                    Err(e) => ctx.error(&format!("{} threshold", th.point), &e),
                }
            }
        }
    }
    Ok(serde_json::to_value(DynamicsData { points, threshold })?)
}

fn run_one(spec: &ExperimentSpec, out_dir: &Path) -> ExperimentRecord {
    let t0 = Instant::now();
    let dir = out_dir.join(&spec.id);
    let mut ctx = Ctx {
        spec,
        dir: &dir,
        obs: BTreeMap::new(),
        checks: vec![],
        errors: vec![],
        timings: BTreeMap::new(),
    };
    let data = std::fs::create_dir_all(&dir).map_err(Error::from).and_then(|_| {
        spec.params.validate()?;
        spec.sim.validate()?;
        match spec.kind {
            ExperimentKind::Eigen => run_eigen(&mut ctx),
            ExperimentKind::Lines => run_lines(&mut ctx),
            ExperimentKind::Dynamics => run_dynamics(&mut ctx),
        }
    });
    let data = data.unwrap_or_else(|e| {
        ctx.error(&spec.id, &e);
        serde_json::Value::Null
    });
    for t in &spec.targets {
        let got = ctx.obs.get(&t.name).copied();
        ctx.checks.push(Check {
            name: t.name.clone(),
            expected: format!("{} +- {}", t.value, t.tol),
            observed: got.map_or("missing".into(), |v| v.to_string()),
            pass: got.is_some_and(|v| (v - t.value).abs() <= t.tol),
        });
    }
    ExperimentRecord {
        id: spec.id.clone(),
        spec: spec.clone(),
        observables: ctx.obs,
        data,
        checks: ctx.checks,
        errors: ctx.errors,
        timings: ctx.timings,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

/// Runs every experiment, writes artifacts under `out_dir/<id>/` and
/// `out_dir/report.json`.
pub fn run_suite(specs: &[ExperimentSpec], out_dir: &Path) -> Result<SuiteReport> {
    let mut seen = std::collections::BTreeSet::new();
    for s in specs {
        if !seen.insert(&s.id) {
            return Err(Error::InvalidArgument(format!("duplicate experiment id {}", s.id)));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let t0 = Instant::now();
    let experiments: Vec<ExperimentRecord> = specs.par_iter().map(|s| run_one(s, out_dir)).collect();
    let report = SuiteReport {
        experiments,
        environment: Environment::current(),
        seconds: t0.elapsed().as_secs_f64(),
    };
    output::save_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

/// Region labels on a `resolution.0 x resolution.1` lattice including the
/// end points of both ranges.
pub fn sweep_regions(
    kappas: &KappaSet,
    ks: &crate::bifurcation::KSet,
    d1_range: (f64, f64),
    d2_range: (f64, f64),
    resolution: (usize, usize),
) -> Result<Vec<RegionReport>> {
    let (n1, n2) = resolution;
    if n1 < 1 || n2 < 1 || (n1 < 2 && n2 < 2) {
        return Err(Error::InvalidArgument(format!("resolution {n1}x{n2} is too coarse")));
    }
    let at = |r: (f64, f64), k: usize, n: usize| {
        if n == 1 {
            r.0
        } else {
            r.0 + (r.1 - r.0) * k as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            out.push(classify_region(at(d1_range, i, n1), at(d2_range, j, n2), kappas, ks)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bifurcation::Region;

    fn q1_coeffs() -> Coefficients {
        let p = preset_q1();
        let basis = Basis::new(&p, Grid::interval_pi(200).unwrap()).unwrap();
        coefficients(&p, &basis, KappaConvention::Laplacian).unwrap()
    }

    #[test]
    fn builtin_suite_shape() {
        let suite = builtin_suite();
        assert_eq!(suite.len(), 6);
        let ids: std::collections::BTreeSet<_> = suite.iter().map(|s| &s.id).collect();
        assert_eq!(ids.len(), 6);
        let q1 = &suite[1];
        assert_eq!(q1.params.omega, std::f64::consts::FRAC_PI_4);
        assert_eq!((q1.params.lambda1, q1.params.lambda2), (2.0, 2.0));
        let p4 = suite.iter().find(|s| s.id == "p4-hopf").unwrap();
        assert!(p4.targets.iter().any(|t| t.name == "P4.threshold" && t.value == 3.3592));
    }

    #[test]
    fn empty_suite_is_success() {
        let dir = std::env::temp_dir().join(format!("memdiff-empty-{}", std::process::id()));
        let r = run_suite(&[], &dir).unwrap();
        assert!(r.experiments.is_empty());
        assert!(r.passed());
        assert!(dir.join("report.json").exists());
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let s = builtin_suite();
        let dup = vec![s[0].clone(), s[0].clone()];
        assert!(run_suite(&dup, Path::new("/nonexistent")).is_err());
    }

    #[test]
    fn box_inside_d2_is_all_d2() {
        let c = q1_coeffs();
        let map = sweep_regions(&c.kappas, &c.ks, (0.0, 0.1), (0.0, 0.1), (2, 2)).unwrap();
        assert_eq!(map.len(), 4);
        assert!(map.iter().all(|r| r.region == Some(Region::D2)));
    }

    #[test]
    fn labels_change_only_at_crossings() {
        let c = q1_coeffs();
        let map = sweep_regions(&c.kappas, &c.ks, (0.0, 0.0), (-3.0, 3.0), (1, 601)).unwrap();
        let crossings: Vec<f64> = [c.lines.l1, c.lines.l2, c.lines.l3, c.lines.l4]
            .iter()
            .map(|l| l.intercept)
            .collect();
        for w in map.windows(2) {
            if w[0].region != w[1].region {
                let (lo, hi) = (w[0].d2, w[1].d2);
                assert!(crossings.iter().any(|&c| c >= lo && c <= hi), "change in ({lo}, {hi})");
            }
        }
    }

    #[test]
    fn coarse_sweep_is_rejected() {
        let c = q1_coeffs();
        assert!(sweep_regions(&c.kappas, &c.ks, (0.0, 1.0), (0.0, 1.0), (1, 1)).is_err());
    }
}
