mod common;

use copula_tree::copula::{fit_mle, CopulaSpec, Family, UnitPair};
use copula_tree::stats::median;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Clayton), Just(Family::Frank), Just(Family::Gumbel)]
}

/// τ inside the family's domain, away from the endpoints.
fn family_tau() -> impl Strategy<Value = (Family, f64)> {
    family().prop_flat_map(|f| {
        let lo = if f == Family::Frank { -0.85 } else { 0.02 };
        (Just(f), lo..0.9f64)
    })
}

#[test]
fn tau_round_trip_on_grid() {
    let grid: Vec<f64> = (-16..=-1).map(|i| i as f64 * 0.05).chain((1..=18).map(|i| i as f64 * 0.05)).collect();
    for f in Family::ALL {
        let spec = CopulaSpec::new(f);
        for &tau in grid.iter().filter(|&&t| spec.tau_domain().contains(t)) {
            let back = spec.theta_to_tau(spec.tau_to_theta(tau).unwrap()).unwrap();
            assert!((back - tau).abs() <= 1e-8, "{f} tau {tau}: {back}");
        }
    }
}

#[test]
fn density_integrates_to_one() {
    for f in Family::ALL {
        let spec = CopulaSpec::new(f);
        for tau in [0.1, 0.5, 0.8] {
            let theta = spec.tau_to_theta(tau).unwrap();
            let mass =
                common::graded_unit_square_integral(30, 16, |u, v| spec.log_density(theta, UnitPair::new(u, v).unwrap()).unwrap().exp());
            assert!((mass - 1.0).abs() < 1e-6, "{f} tau {tau}: {mass}");
        }
    }
}

#[test]
fn estimation_error_shrinks_with_n() {
    for f in Family::ALL {
        let spec = CopulaSpec::new(f);
        let theta = spec.tau_to_theta(0.4).unwrap();
        let medians: Vec<f64> = [200, 2000, 20000]
            .iter()
            .map(|&n| {
                let errs: Vec<f64> = (0..20)
                    .map(|s| (fit_mle(&spec, &spec.sample(theta, n, 77 + s).unwrap()).unwrap().tau_hat - 0.4).abs())
                    .collect();
                median(&errs)
            })
            .collect();
        assert!(medians[0] >= medians[1] && medians[1] >= medians[2], "{f}: {medians:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frechet_bounds_on_grid((f, tau) in family_tau()) {
        let spec = CopulaSpec::new(f);
        let theta = spec.tau_to_theta(tau).unwrap();
        for i in 1..=5 {
            for j in 1..=5 {
                let (u, v) = (i as f64 / 6.0, j as f64 / 6.0);
                let c = spec.cdf(theta, u, v).unwrap();
                prop_assert!(c >= (u + v - 1.0).max(0.0) - 1e-12 && c <= u.min(v) + 1e-12, "C({u},{v}) = {c}");
            }
        }
    }

    #[test]
    fn cdf_second_difference_matches_density((f, tau) in family_tau()) {
        let spec = CopulaSpec::new(f);
        let theta = spec.tau_to_theta(tau).unwrap();
        let h = 1e-4;
        for u in [0.25, 0.5, 0.75] {
            for v in [0.25, 0.5, 0.75] {
                let c = |a: f64, b: f64| spec.cdf(theta, a, b).unwrap();
                let fd = (c(u + h, v + h) - c(u + h, v - h) - c(u - h, v + h) + c(u - h, v - h)) / (4.0 * h * h);
                let d = spec.log_density(theta, UnitPair::new(u, v).unwrap()).unwrap().exp();
                prop_assert!((fd - d).abs() < 1e-4 * d.max(1.0), "{f} θ={theta} ({u},{v}): {fd} vs {d}");
            }
        }
    }

    #[test]
    fn h_inverse_inverts_h((f, tau) in family_tau(), u in 0.01..0.99f64, w in 0.01..0.99f64) {
        let spec = CopulaSpec::new(f);
        let theta = spec.tau_to_theta(tau).unwrap();
        let v = spec.h_inverse(theta, u, w).unwrap();
        prop_assert!((spec.h_function(theta, u, v).unwrap() - w).abs() < 1e-8);
    }

    #[test]
    fn tau_increases_with_theta((f, tau) in family_tau(), step in 0.01..0.08f64) {
        let spec = CopulaSpec::new(f);
        let a = spec.tau_to_theta(tau).unwrap();
        let b = spec.tau_to_theta(tau + step).unwrap();
        prop_assert!(b > a);
    }
}
