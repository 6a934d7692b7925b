use std::sync::OnceLock;

use memdiff::bifurcation::{compute_ks, region_lines, KSet, KappaConvention, KappaSet, Region};
use memdiff::eigen::{principal_eigen, rayleigh_quotient, ProfileSpec, ResourceProfile};
use memdiff::experiments::{preset_q1, preset_q2};
use memdiff::grid::{boundary_fluxes, flux_divergence, flux_divergence_with, inner_product, integral, laplacian, Field, Ghost, Grid};
use memdiff::simulator::{classify_outcome, History, Outcome, Tolerances};
use memdiff::steady::Basis;
use proptest::prelude::*;

fn field(values: Vec<f64>) -> Field {
    Field::new(Grid::interval_pi(values.len()).unwrap(), values).unwrap()
}

fn pair(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| (prop::collection::vec(-5.0..5.0f64, n), prop::collection::vec(-5.0..5.0f64, n)))
}

fn triple(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
        )
    })
}

fn scale(a: &Field, b: &Field) -> f64 {
    let h = a.grid().h();
    (a.max_abs() * b.max_abs() / (h * h)) * a.grid().n() as f64 * h
}

proptest! {
    #[test]
    fn laplacian_is_self_adjoint((f, g) in pair(3..200)) {
        let (f, g) = (field(f), field(g));
        let a = inner_product(&laplacian(&f), &g).unwrap();
        let b = inner_product(&f, &laplacian(&g)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * scale(&f, &g).max(1e-300));
    }

    #[test]
    fn laplacian_is_negative_semidefinite(f in prop::collection::vec(-5.0..5.0f64, 3..200)) {
        let f = field(f);
        prop_assert!(inner_product(&f, &laplacian(&f)).unwrap() <= 0.0);
    }

    #[test]
    fn flux_operator_is_self_adjoint_in_potential((u, f, g) in triple(3..200)) {
        let (u, f, g) = (field(u), field(f), field(g));
        let a = inner_product(&flux_divergence(&u, &f).unwrap(), &g).unwrap();
        let b = inner_product(&f, &flux_divergence(&u, &g).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * u.max_abs() * scale(&f, &g).max(1e-300));
    }

    #[test]
    fn flux_operator_is_dissipative_for_nonnegative_density((u, f, _g) in triple(3..200)) {
        let (u, f) = (field(u), field(f));
        prop_assert!(inner_product(&f, &flux_divergence(&u, &f).unwrap()).unwrap() <= 1e-12 * u.max_abs() * scale(&f, &f));
    }

    #[test]
    fn flux_divergence_telescopes((u, w) in pair(3..200), unit in any::<bool>()) {
        let (u, w) = (field(u), field(w));
        let ghost = if unit { Ghost::Unit } else { Ghost::Zero };
        let total = integral(&flux_divergence_with(&u, &w, ghost).unwrap());
        let (left, right) = boundary_fluxes(&u, &w, ghost).unwrap();
        let mag = u.max_abs().max(1.0) * w.max_abs().max(1.0) / u.grid().h();
        prop_assert!((total - (right - left)).abs() <= 1e-12 * mag * u.grid().n() as f64);
    }

    #[test]
    fn rayleigh_quotient_is_bounded_by_principal_value(f in prop::collection::vec(-1.0..1.0f64, 40)) {
        static PAIR: OnceLock<(ResourceProfile, f64)> = OnceLock::new();
        let (profile, lambda) = PAIR.get_or_init(|| {
            let p = ResourceProfile::new(ProfileSpec::Cos1, Grid::interval_pi(40).unwrap()).unwrap();
            let l = principal_eigen(&p).unwrap().lambda_star;
            (p, l)
        });
        let f = field(f);
        if let Ok(q) = rayleigh_quotient(profile, &f) {
            prop_assert!(q >= lambda * (1.0 - 1e-12));
        }
    }

    #[test]
    fn lag_lookup_is_exact(m in 0usize..40, steps in 1usize..120, seed in any::<u64>()) {
        let val = |k: usize| (seed.wrapping_mul(k as u64 + 7) % 1000) as f64 / 7.0;
        let mut hist = History::constant(0.1, m, &[val(0)], &[-val(0)]);
        let mut stored = vec![val(0)];
        for k in 1..=steps {
            hist.push(&[val(k)], &[-val(k)]);
            stored.push(val(k));
            let want = stored[k.saturating_sub(m)];
            prop_assert_eq!(hist.lagged().0[0].to_bits(), want.to_bits());
            prop_assert_eq!(hist.lagged().1[0].to_bits(), (-want).to_bits());
        }
    }

    #[test]
    fn synthetic_sine_period_is_recovered(period in 5.0..40.0f64, amp in 0.01..1.0f64) {
        let times: Vec<f64> = (0..8000).map(|k| k as f64 * 0.05).collect();
        let probe: Vec<f64> = times.iter().map(|t| amp * (2.0 * std::f64::consts::PI * t / period).sin()).collect();
        let dev: Vec<f64> = probe.iter().map(|p| p.abs()).collect();
        let ones = vec![1.0; times.len()];
        let c = classify_outcome(&times, &dev, &probe, &ones, &ones, 0.5, &Tolerances::default());
        prop_assert_eq!(c.outcome, Outcome::SustainedOscillation);
        let p = c.period.unwrap();
        prop_assert!((p - period).abs() <= 0.02 * period, "period {} vs {}", p, period);
    }
}

struct Setup {
    kappas: KappaSet,
    ks: KSet,
}

fn setups() -> &'static [Setup] {
    static S: OnceLock<Vec<Setup>> = OnceLock::new();
    S.get_or_init(|| {
        let mut out = vec![];
        for p in [preset_q1(), preset_q2()] {
            let basis = Basis::new(&p, Grid::interval_pi(200).unwrap()).unwrap();
            for conv in [KappaConvention::SelfFlux, KappaConvention::Laplacian] {
                let kappas = basis.kappas(p.omega, conv).unwrap();
                let ks = compute_ks(&kappas, &p, basis.eig1.lambda_star, basis.eig2.lambda_star).unwrap();
                out.push(Setup { kappas, ks });
            }
        }
        out
    })
}

fn between(v: f64, a: f64, b: f64) -> bool {
    v > a.min(b) && v < a.max(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn regions_partition_the_plane(d1 in -10.0..10.0f64, d2 in -10.0..10.0f64, which in 0usize..4) {
        let s = &setups()[which];
        let r = memdiff::bifurcation::classify_region(d1, d2, &s.kappas, &s.ks).unwrap();
        let l = region_lines(&s.kappas, &s.ks).unwrap();
        prop_assert_eq!(r.region.is_none(), r.on_boundary);
        let Some(region) = r.region else { return Ok(()); };
        let in12 = between(d2, l.l1.at(d1), l.l2.at(d1));
        let in34 = between(d2, l.l3.at(d1), l.l4.at(d1));
        let expected = if in12 {
            Region::D2
        } else if in34 {
            Region::D1
        } else if (d2 > l.l1.slope * d1) == (d2 > l.l3.slope * d1) {
            Region::D31
        } else {
            Region::D32
        };
        prop_assert_eq!(region, expected);
        if r.flags.h5 {
            prop_assert_eq!(region, Region::D31);
        }
        if r.flags.h6 {
            prop_assert_eq!(region, Region::D32);
        }
    }
}
