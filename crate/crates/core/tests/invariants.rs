//! Cross-module invariants that are too heavy for per-module unit tests:
//! the no-false-positive batteries and solver competitiveness against the
//! analytic catalog. Run in release mode.

use std::f64::consts::PI;

use pibell_core::catalog;
use pibell_core::optimizer::{canonicalize, cost, solve, Gauge, SolverConfig};
use pibell_core::oracle::{certify, lv_moment_data, random_lv_model};
use pibell_core::sampling::{estimate, sample_rounds};
use pibell_core::scenario::{singlet_data, squeezed_data, AngleSet, Scenario, SqueezedParams};
use rand::SeedableRng;

#[test]
fn catalog_never_fires_on_random_lv_models() {
    // 1000 random mixtures of up to 8 strategies; every catalog entry with a
    // matching scenario must certify "not violated".
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2024);
    let entries: Vec<catalog::CatalogEntry> = vec![
        catalog::singlet_k_family(2).unwrap(),
        catalog::singlet_k_family(3).unwrap(),
        catalog::tura_tight(),
        catalog::turalike_k3(1.0).unwrap(),
        catalog::singlet_halfinteger_j(1).unwrap(),
        catalog::singlet_halfinteger_j(3).unwrap(),
        catalog::singlet_anyj(2).unwrap(),
        catalog::squeezed_spin_j(1).unwrap(),
        catalog::squeezed_spin_j(2).unwrap(),
        catalog::squeezed_alt(1).unwrap(),
        catalog::squeezed_alt(2).unwrap(),
    ];
    for trial in 0..1000 {
        let entry = &entries[trial % entries.len()];
        let n = 4 + trial % 6;
        let scenario = Scenario::new(n, entry.candidate.k(), entry.candidate.two_j()).unwrap();
        let model = random_lv_model(scenario, 8, &mut rng).unwrap();
        let data = lv_moment_data(&model).unwrap();
        let cert = certify(&entry.candidate, &data).unwrap();
        assert!(
            !cert.violated,
            "false positive on trial {trial} ({}): {cert:?}",
            entry.name
        );
    }
}

#[test]
fn estimated_lv_data_stays_classical_at_scale() {
    // R = 1e6 rounds, k = 2, N = 8: the certification tolerance absorbs the
    // residual sampling noise in at least 99 of 100 seeds for every
    // two-setting catalog entry.
    let scenario = Scenario::new(8, 2, 1).unwrap();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
    let model = random_lv_model(scenario, 6, &mut rng).unwrap();
    let entries = [
        catalog::tura_tight(),
        catalog::squeezed_spin_j(1).unwrap(),
        catalog::squeezed_alt(1).unwrap(),
    ];
    let mut clean_seeds = 0usize;
    for seed in 0..100u64 {
        let records = sample_rounds(&model, 1_000_000, seed);
        let data = estimate(&records, scenario).unwrap();
        let fired = entries
            .iter()
            .any(|e| certify(&e.candidate, &data).unwrap().violated);
        if !fired {
            clean_seeds += 1;
        }
    }
    assert!(
        clean_seeds >= 99,
        "only {clean_seeds}/100 seeds stayed classical"
    );
}

#[test]
fn solver_is_competitive_with_the_catalog() {
    // On each catalog data scenario the solver's best cost must not exceed
    // the catalog candidate normalized to the same gauge, within 1e-6 N.
    let n = 8usize;
    let nf = n as f64;
    let config_ball = SolverConfig::default();
    let config_sphere = SolverConfig::with_gauge(Gauge::Sphere);
    let mut checked = 0usize;

    let mut check = |entry: &catalog::CatalogEntry,
                     data: &pibell_core::scenario::QuantumData,
                     gauge: Gauge| {
        let config = match gauge {
            Gauge::Ball => &config_ball,
            Gauge::Sphere => &config_sphere,
        };
        let report = solve(data, config).unwrap();
        let reference = canonicalize(&entry.candidate, gauge);
        let cat_cost = cost(&reference, data).unwrap();
        assert!(
            report.best_cost <= cat_cost + 1e-6 * nf,
            "{} ({gauge:?}): solver {} vs catalog {}",
            entry.name,
            report.best_cost,
            cat_cost
        );
        checked += 1;
    };

    // Singlet data, three settings, both gauges.
    let angles3 = AngleSet::new(vec![PI / 3.0, 0.0, -PI / 3.0]).unwrap();
    let singlet_half = singlet_data(n, 1, &angles3, 0.0).unwrap();
    let k3 = catalog::singlet_k_family(3).unwrap();
    check(&k3, &singlet_half, Gauge::Ball);
    check(&k3, &singlet_half, Gauge::Sphere);

    let anyj = catalog::singlet_anyj(2).unwrap();
    let t = (1.0 / 4.0f64).acos();
    let singlet_j1 = singlet_data(
        n,
        2,
        &AngleSet::new(vec![t, 0.0, -t]).unwrap(),
        0.0,
    )
    .unwrap();
    check(&anyj, &singlet_j1, Gauge::Sphere);

    // Squeezed data at the optimal two-setting angle, ball gauge.
    let (m_x, chi2) = (0.98, 0.272);
    let theta = catalog::tura_optimal_theta(n, nf * m_x / 2.0, nf * chi2 / 4.0);
    let squeezed = squeezed_data(
        n,
        1,
        &SqueezedParams::new(m_x, chi2),
        &AngleSet::new(vec![theta, -theta]).unwrap(),
    )
    .unwrap();
    check(&catalog::tura_tight(), &squeezed, Gauge::Ball);

    // Three-setting squeezed scenario at a = 1.
    let theta3 = 0.8;
    let squeezed3 = squeezed_data(
        n,
        1,
        &SqueezedParams::new(m_x, chi2),
        &catalog::turalike_angles(theta3).unwrap(),
    )
    .unwrap();
    check(&catalog::turalike_k3(1.0).unwrap(), &squeezed3, Gauge::Ball);

    // Stretched j = 1 state against the spin-j squeezing inequalities.
    let mut p = SqueezedParams::new(2.0, 0.0);
    p.sx2 = Some(1.0);
    p.sy2 = Some(0.5);
    let theta_j = catalog::squeezed_alt_optimal_theta(n, nf, 0.0, 1.0, 0.5);
    let stretched = squeezed_data(
        n,
        2,
        &p,
        &AngleSet::new(vec![theta_j, -theta_j]).unwrap(),
    )
    .unwrap();
    check(&catalog::squeezed_alt(2).unwrap(), &stretched, Gauge::Ball);

    assert_eq!(checked, 6);
}
