use wald_liability::fee::construct_violation_menu;
use wald_liability::mechanism::{
    benchmarks, ceiling_conversion, identifiability_check, monotonicity_check, synthesize_monotone,
};
use wald_liability::model::{FirmType, Tariff};
use wald_liability::scenario::Scenario;
use wald_liability::solver::SolverConfig;
use wald_liability::verify::{fee_grid, menu_from_fees, menu_from_synthesis};

fn scenario(name: &str) -> Scenario {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    Scenario::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn reference_scenario_is_reckless_for_every_prior() {
    let s = scenario("P0.json");
    let grid = s.solve_grid(None).unwrap();
    let b = benchmarks(&s.params, &s.types, &grid, &s.solver_config(None)).unwrap();
    assert_eq!(b.types.len(), 9);
    assert!(b.types.iter().all(|t| t.first_best.launch < t.ceiling.launch));
}

#[test]
fn scenario_targets_round_trip_through_the_ceiling_conversion() {
    let s = scenario("P1.json");
    let grid = s.solve_grid(None).unwrap();
    let cfg = s.solver_config(None);
    let report = synthesize_monotone(s.targets.as_ref().unwrap(), &s.params, &grid, &cfg).unwrap();
    assert!(report.verified);
    assert!(report.tariff.is_non_decreasing() && report.tariff.max_value() <= s.params.l());

    let menu = menu_from_synthesis(&report, &s.params).unwrap();
    let (_, conv) = ceiling_conversion(&menu, &s.params, &grid, &cfg).unwrap();
    assert!(conv.max_threshold_gap <= 2.0 * grid.h());
    assert!(conv.max_payoff_gap <= cfg.tol_v);
    assert!(identifiability_check(&menu).is_identifiable());

    // The menu stored in the scenario is the same one.
    let (_, stored) = ceiling_conversion(s.menu.as_ref().unwrap(), &s.params, &grid, &cfg).unwrap();
    assert!(stored.max_threshold_gap <= 1e-9 && stored.max_payoff_gap <= cfg.tol_v);

    let mono = monotonicity_check(&report.tariff, &s.types, &s.params, &grid, &cfg).unwrap();
    assert!(mono.decreasing);
}

#[test]
fn ceiling_and_scenario_tariffs_keep_launch_levels_ordered() {
    let s = scenario("P1.json");
    let grid = s.solve_grid(None).unwrap();
    let cfg = s.solver_config(None);
    let types: Vec<FirmType> = [0.2, 0.3, 0.5, 0.6, 0.8].iter().map(|&t| FirmType::new(t).unwrap()).collect();
    for psi in [Tariff::uniform_ceiling(&s.params), s.tariff.clone().unwrap()] {
        let r = monotonicity_check(&psi, &types, &s.params, &grid, &cfg).unwrap();
        assert!(r.decreasing, "{r:?}");
    }
}

#[test]
fn fee_menu_reverses_the_launch_order() {
    let s = scenario("P1.json");
    let cfg = SolverConfig::for_params(&s.params);
    let cert = construct_violation_menu(&s.params, &fee_grid(&s.params).unwrap(), &cfg).unwrap();
    assert!(cert.menu.reverses_monotonicity());
    assert!(cert.strict_margin > 0.0);
    assert!(cert.menu.safe.fee < cert.menu.damaging.fee);
    let menu = menu_from_fees(&cert.menu, &s.params).unwrap();
    assert!(identifiability_check(&menu).is_identifiable());
}
