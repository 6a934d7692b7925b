//! Command-line front end and JSON run configuration.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bifurcation::{branch_for, classify_region, compute_ks, hopf_report, region_lines, KappaConvention};
use crate::eigen::{extrapolated_eigenvalue, principal_eigen, ProfileSpec, ResourceProfile};
use crate::error::{Error, Result};
use crate::experiments::{builtin_suite, preset, run_suite, sweep_regions};
use crate::grid::Grid;
use crate::output::{self, num};
use crate::simulator::{simulate, SimConfig};
use crate::steady::{amplitude_candidates, h1_check, lambda_primes, solve_steady_state, Basis, ModelParams, NewtonOptions};

/// Everything a run needs. Missing keys take the defaults (preset Q1 at
/// (d1, d2) = (1, 3)); unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub simulation: SimConfig,
    pub convention: KappaConvention,
    /// Grid for eigenpairs and projection coefficients.
    pub analysis_n: usize,
    pub tau: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelParams::default(),
            simulation: SimConfig::default(),
            convention: KappaConvention::SelfFlux,
            analysis_n: 1000,
            tau: 10.0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.simulation.validate()?;
        if self.analysis_n < 3 {
            return Err(Error::InvalidArgument("analysis_n must be at least 3".into()));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument("tau must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "memdiff", version, about = "Memory-based diffusion competition model toolkit")]
struct Cli {
    /// JSON run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter preset (Q1 or Q2), applied over the configuration
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Print the resolved configuration as JSON and exit
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Debug, Args)]
struct PointArgs {
    #[arg(long, allow_hyphen_values = true)]
    d1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    d2: Option<f64>,
    /// self-flux or laplacian
    #[arg(long)]
    convention: Option<String>,
    /// Grid size for the analysis
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Principal eigenvalue of one resource profile
    Eigen {
        /// cos1, sin1 or a constant
        #[arg(long, default_value = "cos1")]
        profile: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Eigenfunction CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// kappa, K and lambda'(0) table
    Coeffs(PointArgs),
    /// Region of one point
    Regions(PointArgs),
    /// Positive steady state
    Steady {
        #[command(flatten)]
        point: PointArgs,
        /// CSV with columns x, u, v
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hopf data and critical delays
    Tau {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = 5)]
        n_max: usize,
    },
    /// One simulation
    Simulate {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the builtin experiment suite
    Reproduce {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Region map over a box
    Sweep {
        #[command(flatten)]
        point: PointArgs,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        d1_min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        d1_max: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        d2_min: f64,
        #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
        d2_max: f64,
        #[arg(long, default_value_t = 81)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_convention(s: &str) -> Result<KappaConvention> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| Error::InvalidArgument(format!("unknown convention {s}")))
}

fn parse_profile(s: &str) -> Result<ProfileSpec> {
    match s {
        "cos1" => Ok(ProfileSpec::Cos1),
        "sin1" => Ok(ProfileSpec::Sin1),
        other => other
            .parse::<f64>()
            .map(ProfileSpec::Constant)
            .map_err(|_| Error::InvalidArgument(format!("unknown profile {other}"))),
    }
}

fn resolve(cli: &Cli, point: Option<&PointArgs>) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &cli.preset {
        let p = preset(name).ok_or_else(|| Error::InvalidArgument(format!("unknown preset {name}")))?;
        c.model = p.with_point(c.model.d1, c.model.d2);
        c.convention = KappaConvention::Laplacian;
    }
    if let Some(pa) = point {
        if let Some(d1) = pa.d1 {
            c.model.d1 = d1;
        }
        if let Some(d2) = pa.d2 {
            c.model.d2 = d2;
        }
        if let Some(conv) = &pa.convention {
            c.convention = parse_convention(conv)?;
        }
        if let Some(n) = pa.n {
            c.analysis_n = n;
        }
    }
    c.validate()?;
    Ok(c)
}

fn analysis_basis(c: &RunConfig) -> Result<Basis> {
    Basis::new(&c.model, Grid::interval_pi(c.analysis_n)?)
}

fn execute(cli: &Cli, cmd: &Cmd, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Cmd::Eigen { profile, n, out: path } => {
            let kind = parse_profile(profile)?;
            let e = extrapolated_eigenvalue(&kind, 0.0, std::f64::consts::PI, *n)?;
            writeln!(out, "lambda* = {:.10}", e.value)?;
            writeln!(out, "n = {}: {:.10}", e.n_fine, e.fine)?;
            writeln!(out, "n = {}: {:.10}", e.n_coarse, e.coarse)?;
            if let Some(p) = path {
                let pair = principal_eigen(&ResourceProfile::new(kind, Grid::interval_pi(*n)?)?)?;
                output::save_eigen(p, &pair.phi)?;
            }
        }
        Cmd::Coeffs(pa) => {
            let c = resolve(cli, Some(pa))?;
            let basis = analysis_basis(&c)?;
            let k = basis.kappas(c.model.omega, c.convention)?;
            writeln!(out, "lambda1* = {}", num(basis.eig1.lambda_star))?;
            writeln!(out, "lambda2* = {}", num(basis.eig2.lambda_star))?;
            for (i, v) in [k.kappa1, k.kappa2, k.kappa3, k.kappa4, k.kappa5, k.kappa6, k.kappa7, k.kappa8]
                .iter()
                .enumerate()
            {
                writeln!(out, "kappa{} = {}", i + 1, num(*v))?;
            }
            let ks = compute_ks(&k, &c.model, basis.eig1.lambda_star, basis.eig2.lambda_star)?;
            for (i, v) in [ks.k1, ks.k2, ks.k3, ks.k4].iter().enumerate() {
                writeln!(out, "K{} = {}", i + 1, num(*v))?;
            }
            let (p1, p2) = lambda_primes(&c.model, &basis, &k)?;
            writeln!(out, "lambda1'(0) = {}", num(p1))?;
            writeln!(out, "lambda2'(0) = {}", num(p2))?;
            let lines = region_lines(&k, &ks)?;
            for (name, l) in [("l1", lines.l1), ("l2", lines.l2), ("l3", lines.l3), ("l4", lines.l4), ("l5", lines.l5)] {
                writeln!(out, "{name}: d2 = {:.4} d1 {:+.4}", l.slope, l.intercept)?;
            }
            for (name, l) in [("l6 (H2/H5)", lines.l6_h2h5), ("l6 (H3/H6)", lines.l6_h3h6)] {
                if let Some(l) = l {
                    writeln!(out, "{name}: d2 = {:.4} d1", l.slope)?;
                }
            }
        }
        Cmd::Regions(pa) => {
            let c = resolve(cli, Some(pa))?;
            let basis = analysis_basis(&c)?;
            let k = basis.kappas(c.model.omega, c.convention)?;
            let ks = compute_ks(&k, &c.model, basis.eig1.lambda_star, basis.eig2.lambda_star)?;
            let r = classify_region(c.model.d1, c.model.d2, &k, &ks)?;
            writeln!(out, "{}", r.region.map_or("boundary", |g| g.label()))?;
            let f = r.flags;
            writeln!(out, "H2={} H3={} H5={} H6={}", f.h2 as u8, f.h3 as u8, f.h5 as u8, f.h6 as u8)?;
            if let Some(d) = r.d_star {
                writeln!(out, "d* = {}", num(d))?;
            }
        }
        Cmd::Steady { point, out: path } => {
            let c = resolve(cli, Some(point))?;
            let basis = Basis::new(&c.model, Grid::interval_pi(c.simulation.n)?)?;
            let pipe = solve_steady_state(&c.model, &basis, NewtonOptions::default())?;
            let st = &pipe.state;
            writeln!(out, "s (from lambda1) = {}", num(pipe.amplitudes.from_lambda1))?;
            writeln!(out, "s (from lambda2) = {}", num(pipe.amplitudes.from_lambda2))?;
            writeln!(out, "newton residual = {:e}", st.newton_residual.unwrap_or(f64::NAN))?;
            writeln!(out, "positive = {}", st.positive)?;
            let h1 = h1_check(&c.model, st);
            writeln!(out, "max u = {}, max v = {}, H1 holds = {}", num(h1.u_max), num(h1.v_max), h1.holds)?;
            if let Some(p) = path {
                let mut text = String::from("x,u,v\n");
                for (j, x) in basis.grid.nodes().iter().enumerate() {
                    text += &format!("{},{},{}\n", num(*x), num(st.u.values()[j]), num(st.v.values()[j]));
                }
                if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(d)?;
                }
                std::fs::write(p, text)?;
            }
        }
        Cmd::Tau { point, n_max } => {
            let c = resolve(cli, Some(point))?;
            let basis = analysis_basis(&c)?;
            let k = basis.kappas(c.model.omega, c.convention)?;
            let ks = compute_ks(&k, &c.model, basis.eig1.lambda_star, basis.eig2.lambda_star)?;
            let r = classify_region(c.model.d1, c.model.d2, &k, &ks)?;
            let branch = branch_for(&r.flags).ok_or_else(|| {
                Error::Admissibility(format!(
                    "({}, {}) satisfies neither H2/H5 nor H3/H6",
                    c.model.d1, c.model.d2
                ))
            })?;
            let primes = lambda_primes(&c.model, &basis, &k)?;
            let s = amplitude_candidates(&c.model, &basis, primes)?.from_lambda1;
            let rep = hopf_report(c.model.d1, c.model.d2, &k, &ks, branch, s, *n_max)?;
            let p = rep.point;
            writeln!(out, "branch = {:?}", p.branch)?;
            writeln!(out, "p1 = {}, p2 = {}", num(p.p1), num(p.p2))?;
            writeln!(out, "h = {}, theta = {}", num(p.h), num(p.theta))?;
            writeln!(out, "residuals = {:?}, consistent = {}", p.residuals, p.consistent)?;
            writeln!(out, "s = {}", num(s))?;
            for (i, t) in rep.tau.iter().enumerate() {
                writeln!(out, "tau{i} = {}", num(*t))?;
            }
            writeln!(out, "transversality = {} (sign {})", num(rep.transversality.value), rep.transversality.sign)?;
        }
        Cmd::Simulate {
            point,
            tau,
            t_end,
            out: path,
        } => {
            let mut c = resolve(cli, Some(point))?;
            if let Some(t) = tau {
                c.tau = *t;
            }
            if let Some(t) = t_end {
                c.simulation.t_end = *t;
            }
            c.validate()?;
            let dir = path.clone().unwrap_or_else(|| c.out_dir.clone());
            let basis = Basis::new(&c.model, Grid::interval_pi(c.simulation.n)?)?;
            let pipe = solve_steady_state(&c.model, &basis, NewtonOptions::default())?;
            let res = match simulate(&c.model, &basis, c.tau, &pipe.state, &c.simulation) {
                Ok(r) => r,
                Err(Error::Blowup { t, partial }) => {
                    output::save_timeseries(&dir.join("timeseries.csv"), &partial)?;
                    output::save_snapshots(&dir.join("snapshots.csv"), &partial)?;
                    return Err(Error::Blowup { t, partial });
                }
                Err(e) => return Err(e),
            };
            output::save_timeseries(&dir.join("timeseries.csv"), &res)?;
            output::save_snapshots(&dir.join("snapshots.csv"), &res)?;
            let cl = res.classification.expect("classified");
            writeln!(out, "{:?}", cl.outcome)?;
            writeln!(out, "amplitude = {}", num(cl.amplitude))?;
            if let Some(p) = cl.period {
                writeln!(out, "period = {}", num(p))?;
            }
            if !res.h1_holds {
                writeln!(out, "warning: H1 does not hold at this point")?;
            }
        }
        Cmd::Reproduce { out: path } => {
            let c = resolve(cli, None)?;
            let dir = path.clone().unwrap_or(c.out_dir);
            let report = run_suite(&builtin_suite(), &dir)?;
            for e in &report.experiments {
                for ch in &e.checks {
                    let tag = if ch.pass { "PASS" } else { "FAIL" };
                    writeln!(out, "{tag} {}/{}: expected {}, observed {}", e.id, ch.name, ch.expected, ch.observed)?;
                }
                for err in &e.errors {
                    writeln!(out, "note {}: {err}", e.id)?;
                }
            }
            writeln!(out, "{} failed checks", report.failed_checks())?;
            return Ok(if report.passed() { 0 } else { 4 });
        }
        Cmd::Sweep {
            point,
            d1_min,
            d1_max,
            d2_min,
            d2_max,
            resolution,
            out: path,
        } => {
            let c = resolve(cli, Some(point))?;
            if *resolution < 2 {
                return Err(Error::InvalidArgument("resolution must be at least 2".into()));
            }
            let basis = analysis_basis(&c)?;
            let k = basis.kappas(c.model.omega, c.convention)?;
            let ks = compute_ks(&k, &c.model, basis.eig1.lambda_star, basis.eig2.lambda_star)?;
            let map = sweep_regions(&k, &ks, (*d1_min, *d1_max), (*d2_min, *d2_max), (*resolution, *resolution))?;
            let p = path.clone().unwrap_or_else(|| c.out_dir.join("regions.csv"));
            output::save_regions(&p, &map)?;
            writeln!(out, "{} points written to {}", map.len(), p.display())?;
        }
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs. Returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = if cli.dump_config {
        resolve(&cli, None).and_then(|c| c.to_json()).and_then(|j| {
            writeln!(out, "{j}")?;
            Ok(0)
        })
    } else {
        match &cli.cmd {
            Some(cmd) => execute(&cli, cmd, out),
            None => {
                use clap::CommandFactory;
                let _ = writeln!(err, "{}", Cli::command().render_usage());
                return 2;
            }
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
