use memdiff::eigen::ProfileSpec;
use memdiff::experiments::preset_q1;
use memdiff::grid::Grid;
use memdiff::simulator::{simulate, Outcome, Perturbation, SimConfig, TimeScheme};
use memdiff::steady::{leading_state, solve_steady_state, Basis, ModelParams, NewtonOptions, SteadyState};
use memdiff::Error;

const SCHEMES: [TimeScheme; 3] = [TimeScheme::Bdf2, TimeScheme::CrankNicolson, TimeScheme::ImexEuler];

fn short(n: usize, dt: f64, t_end: f64, scheme: TimeScheme) -> SimConfig {
    SimConfig {
        n,
        dt_max: dt,
        t_end,
        record_every: dt,
        snapshot_every: t_end,
        scheme,
        ..SimConfig::default()
    }
}

#[test]
fn refined_equilibrium_is_preserved() {
    let p = ModelParams { d1: 0.0, d2: 0.0, ..preset_q1() };
    let basis = Basis::new(&p, Grid::interval_pi(64).unwrap()).unwrap();
    let pipe = solve_steady_state(&p, &basis, NewtonOptions::default()).unwrap();
    let res = pipe.state.newton_residual.unwrap();
    for scheme in SCHEMES {
        let cfg = SimConfig { epsilon: 0.0, ..short(64, 0.01, 50.0, scheme) };
        let out = simulate(&p, &basis, 0.0, &pipe.state, &cfg).unwrap();
        let bound = 10.0 * (res + cfg.dt_max * cfg.dt_max * cfg.t_end);
        let worst = out.deviation.iter().cloned().fold(0.0, f64::max);
        assert!(worst <= bound, "{scheme:?}: {worst:e} > {bound:e}");
        assert_eq!(out.outcome(), Some(Outcome::ConvergedToSteadyState));
        assert!(!out.negativity_flag);
    }
}

fn final_field(p: &ModelParams, basis: &Basis, init: &SteadyState, dt: f64, scheme: TimeScheme) -> Vec<f64> {
    let cfg = SimConfig {
        epsilon: 0.0,
        perturbation: Perturbation::Flat,
        ..short(basis.grid.n(), dt, 1.0, scheme)
    };
    let out = simulate(p, basis, 0.5, init, &cfg).unwrap();
    let last = out.snapshots.last().unwrap();
    assert!((last.t - 1.0).abs() < 1e-12);
    last.u.iter().chain(&last.v).copied().collect()
}

fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn observed_order(p: &ModelParams, scheme: TimeScheme, dt: f64) -> f64 {
    let basis = Basis::new(p, Grid::interval_pi(32).unwrap()).unwrap();
    let mut init = leading_state(1.0, p.omega, &basis.eig1, &basis.eig2);
    init.u = basis.grid.sample(|x| 0.6 * x.sin() + 0.3 * (3.0 * x).sin());
    init.v = basis.grid.sample(|x| 0.4 * x.sin() + 0.2 * (2.0 * x).sin());
    let a = final_field(p, &basis, &init, dt, scheme);
    let b = final_field(p, &basis, &init, dt / 2.0, scheme);
    let c = final_field(p, &basis, &init, dt / 4.0, scheme);
    diff(&a, &b) / diff(&b, &c)
}

#[test]
fn second_order_in_pure_diffusion() {
    let p = ModelParams {
        d1: 0.0,
        d2: 0.0,
        lambda1: 1e-12,
        lambda2: 1e-12,
        r1: ProfileSpec::Constant(1.0),
        r2: ProfileSpec::Constant(1.0),
        ..preset_q1()
    };
    for scheme in [TimeScheme::Bdf2, TimeScheme::CrankNicolson] {
        let r = observed_order(&p, scheme, 0.02);
        assert!((r - 4.0).abs() < 0.5, "{scheme:?}: ratio {r}");
    }
    let r = observed_order(&p, TimeScheme::ImexEuler, 0.02);
    assert!((r - 2.0).abs() < 0.3, "ImexEuler: ratio {r}");
}

#[test]
fn first_order_explicit_part_dominates_imex_euler() {
    let p = ModelParams { d1: 0.4, d2: 0.3, ..preset_q1() };
    let r = observed_order(&p, TimeScheme::ImexEuler, 0.02);
    assert!((r - 2.0).abs() < 0.3, "ratio {r}");
    let r = observed_order(&p, TimeScheme::Bdf2, 0.02);
    assert!((r - 4.0).abs() < 0.8, "ratio {r}");
}

#[test]
fn stable_point_converges_at_coarse_resolution() {
    let p = preset_q1().with_point(0.1, 0.5);
    let basis = Basis::new(&p, Grid::interval_pi(48).unwrap()).unwrap();
    let pipe = solve_steady_state(&p, &basis, NewtonOptions::default()).unwrap();
    let cfg = SimConfig {
        n: 48,
        dt_max: 0.01,
        t_end: 150.0,
        ..SimConfig::default()
    };
    let out = simulate(&p, &basis, 2.0, &pipe.state, &cfg).unwrap();
    assert_eq!(out.outcome(), Some(Outcome::ConvergedToSteadyState));
    let t = &out.times;
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(t.len(), out.l2_u.len());
    assert_eq!(t.len(), out.max_v.len());
}

#[test]
fn blowup_carries_partial_result() {
    // strong memory with a large steady state: high modes grow like ln|d v|/tau
    let p = preset_q1().with_point(1.0, 3.0);
    let basis = Basis::new(&p, Grid::interval_pi(48).unwrap()).unwrap();
    let pipe = solve_steady_state(&p, &basis, NewtonOptions::default()).unwrap();
    let cfg = SimConfig {
        n: 48,
        dt_max: 0.005,
        t_end: 400.0,
        ..SimConfig::default()
    };
    match simulate(&p, &basis, 1.0, &pipe.state, &cfg) {
        Err(Error::Blowup { t, partial }) => {
            assert!(t > 0.0 && t < cfg.t_end);
            assert!(!partial.times.is_empty());
            assert!(*partial.times.last().unwrap() <= t);
            assert!(partial.classification.is_none());
        }
        other => panic!("expected blowup, got {:?}", other.map(|r| r.outcome())),
    }
}
