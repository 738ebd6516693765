use wald_liability::diffusion::{expected_exit_time, hit_lower_prob, ProductState};
use wald_liability::model::{FirmType, ModelParams, Tariff, ThresholdPolicy};
use wald_liability::simulation::{estimate_policy_value, simulate_exit, SimConfig};
use wald_liability::solver::firm_policy_value;

fn interval() -> ThresholdPolicy {
    ThresholdPolicy::new(-1.0, 1.0, 0.0).unwrap()
}

#[test]
fn plain_euler_bias_shrinks_with_the_step() {
    let f = hit_lower_prob(0.0, -1.0, 1.0, 1.0, 1.0).unwrap();
    let t = expected_exit_time(0.0, -1.0, 1.0, 1.0, 1.0).unwrap();
    let errors: Vec<(f64, f64)> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&dt| {
            let cfg = SimConfig { dt, n_paths: 100_000, seed: 11, bridge_correction: false, ..SimConfig::default() };
            let e = simulate_exit(ProductState::Damaging, &interval(), &cfg, 1.0).unwrap();
            ((e.hit_lower.mean - f).abs(), (e.exit_time.mean - t).abs())
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1].0 < w[0].0 && w[1].1 < w[0].1), "{errors:?}");
}

#[test]
fn bridge_corrected_estimates_cover_the_closed_forms() {
    let cfg = SimConfig { n_paths: 50_000, seed: 5, ..SimConfig::default() };
    for state in [ProductState::Safe, ProductState::Damaging] {
        let mu = state.drift();
        let e = simulate_exit(state, &interval(), &cfg, 1.0).unwrap();
        assert!(e.hit_lower.covers(hit_lower_prob(0.0, -1.0, 1.0, mu, 1.0).unwrap(), 3.0));
        assert!(e.exit_time.covers(expected_exit_time(0.0, -1.0, 1.0, mu, 1.0).unwrap(), 3.0));
        assert_eq!(e.truncated, 0);
    }
}

#[test]
fn identical_seeds_give_identical_estimates() {
    let cfg = SimConfig { n_paths: 10_000, seed: 99, ..SimConfig::default() };
    let a = simulate_exit(ProductState::Safe, &interval(), &cfg, 0.8).unwrap();
    let b = simulate_exit(ProductState::Safe, &interval(), &cfg, 0.8).unwrap();
    assert_eq!(a, b);
    let other = simulate_exit(ProductState::Safe, &interval(), &SimConfig { seed: 100, ..cfg }, 0.8).unwrap();
    assert_ne!(a.exit_time.mean, other.exit_time.mean);
}

#[test]
fn policy_value_estimate_matches_closed_form() {
    let p = ModelParams::new(1.0, 0.05, 1.0, 1.2, 1.2, 2.0).unwrap();
    let theta = FirmType::new(0.4).unwrap();
    let tariff = Tariff::new(vec![-0.5], vec![0.9], vec![], 1.2, 1.2).unwrap();
    let policy = ThresholdPolicy::new(-0.5, 1.5, 0.0).unwrap();
    let cfg = SimConfig { n_paths: 50_000, seed: 3, ..SimConfig::default() };
    let est = estimate_policy_value(theta, &policy, &tariff, &cfg, &p).unwrap();
    let exact = firm_policy_value(theta, &policy, &tariff, &p).unwrap();
    assert!(est.covers(exact, 3.0), "z = {}", est.z_score(exact));
}
