//! Cross-checks between independent routes to the same conclusion: the
//! analytic integral criterion, the fixed-point iteration, and genealogy
//! simulation must never contradict each other on the fixture set, and the
//! fixed-point iteration must find the minimal solution regardless of the
//! admissible starting profile.

use cmjx_core::criteria::{integral_test, Verdict};
use cmjx_core::genealogy::{estimate_explosion_proxy, total_progeny, dwass_pmf, GenealogyConfig};
use cmjx_core::intensity::{IntensityFamily, IntensityModel};
use cmjx_core::reproduction::{OffspringLaw, ReproductionLaw};
use cmjx_core::smoothing::{geometric_grid, iterate_poisson, Profile, TrivialityVerdict};
use cmjx_core::RngStream;
use rayon::prelude::*;

struct Fixture {
    name: &'static str,
    model: IntensityModel,
    /// Window on which the profile iteration and the proxy run.
    horizon: f64,
}

fn fixtures() -> Vec<Fixture> {
    let mut log_linear = IntensityModel::new(
        1.0,
        IntensityFamily::LogLinear {
            c: 1.0,
            delta: 1.0,
        },
    )
    .unwrap();
    // t·|log t|² is concave near 0, so the numeric convexity probe cannot
    // vouch for it; the sandwich structure holds analytically.
    log_linear.assume_convex_sandwich = true;
    vec![
        Fixture {
            name: "linear",
            model: IntensityModel::new(1.0, IntensityFamily::Linear { c: 1.0 }).unwrap(),
            horizon: 1.0,
        },
        Fixture {
            name: "log_linear",
            model: log_linear,
            horizon: 1.0,
        },
        Fixture {
            name: "delayed",
            model: IntensityModel::new(1.0, IntensityFamily::Delayed { eps: 0.25 }).unwrap(),
            horizon: 0.2,
        },
        Fixture {
            name: "double_exp",
            model: IntensityModel::new(1.0, IntensityFamily::DoubleExp).unwrap(),
            horizon: 0.5,
        },
    ]
}

/// The three routes may individually abstain but must never disagree:
/// an explosive integral verdict forbids a trivial fixed point and demands a
/// clearly positive explosion proxy, and a non-explosive verdict forbids a
/// non-trivial fixed point and bounds the proxy near zero.
#[test]
fn verdict_soundness_matrix() {
    for fx in fixtures() {
        let report = integral_test(&fx.model, 0.5, 1e-10).unwrap();

        let grid = geometric_grid(1e-4, fx.horizon, 256);
        let phi0 = Profile::indicator(grid).unwrap();
        let run = iterate_poisson(&fx.model, &phi0, 20_000, 1e-7, 1e-3).unwrap();
        assert!(run.converged, "{}: profile iteration must converge", fx.name);

        let law = ReproductionLaw::PoissonPp {
            model: fx.model.clone(),
        };
        let cfg = GenealogyConfig {
            horizon: fx.horizon,
            max_gen: 1000,
            pop_cap: 100_000,
            time_grid: vec![],
        };
        let proxy = estimate_explosion_proxy(&law, &cfg, 4_000, 0xC0DE ^ fx.horizon.to_bits())
            .unwrap()
            .p_hat;

        match report.verdict {
            Verdict::Explosive => {
                assert_eq!(
                    run.verdict,
                    TrivialityVerdict::NonTrivial,
                    "{}: integral says explosive but the fixed point is trivial",
                    fx.name
                );
                assert!(
                    proxy > 0.05,
                    "{}: integral says explosive but the proxy is {proxy}",
                    fx.name
                );
            }
            Verdict::NonExplosive => {
                assert_eq!(
                    run.verdict,
                    TrivialityVerdict::Trivial,
                    "{}: integral says non-explosive but the fixed point dips below 1",
                    fx.name
                );
                assert!(
                    proxy < 1e-2,
                    "{}: integral says non-explosive but the proxy is {proxy}",
                    fx.name
                );
            }
            Verdict::Inconclusive => {}
        }
        println!(
            "cross-check {}: integral {:?}, iteration {:?}, proxy {proxy:.3e}",
            fx.name, report.verdict, run.verdict
        );
    }
}

/// Iterating from any profile below the fixed point converges to the same
/// minimal fixed point as iterating from the indicator.
#[test]
fn iteration_finds_the_minimal_fixed_point() {
    let model = IntensityModel::new(1.0, IntensityFamily::Linear { c: 1.0 }).unwrap();
    let grid = geometric_grid(0.5, 2.0, 32);
    let tol = 1e-9;

    let from_zero = iterate_poisson(
        &model,
        &Profile::indicator(grid.clone()).unwrap(),
        50_000,
        tol,
        1e-3,
    )
    .unwrap();
    assert!(from_zero.converged);
    let limit = from_zero.final_profile;

    let half: Vec<f64> = limit.values().iter().map(|v| 0.5 * v).collect();
    let from_half = iterate_poisson(
        &model,
        &Profile::new(grid, half).unwrap(),
        50_000,
        tol,
        1e-3,
    )
    .unwrap();
    assert!(from_half.converged);

    let gap = limit.sup_distance(&from_half.final_profile).unwrap();
    assert!(
        gap <= 10.0 * tol,
        "limits from distinct admissible starts differ by {gap:.3e}"
    );
}

/// Total-progeny frequencies for a critical Poisson offspring law match the
/// exact generating identity within Monte-Carlo error.
#[test]
fn total_progeny_matches_exact_law_for_poisson() {
    let offspring = OffspringLaw::Poisson { mean: 1.0 };
    let samples: u64 = 200_000;
    let cap: u64 = 100_000;
    let root = RngStream::from_seed(0xD1A5);

    let mut counts = [0u64; 8];
    let totals: Vec<u64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.child(i);
            total_progeny(&offspring, cap, &mut rng)
        })
        .collect();
    for n in totals {
        if (n as usize) < counts.len() {
            counts[n as usize] += 1;
        }
    }

    for n in 1..=6u64 {
        let p = dwass_pmf(&offspring, n).unwrap();
        let freq = counts[n as usize] as f64 / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt();
        assert!(
            (freq - p).abs() <= 4.0 * se,
            "total progeny {n}: frequency {freq:.5} vs exact {p:.5} (SE {se:.2e})"
        );
    }
}
