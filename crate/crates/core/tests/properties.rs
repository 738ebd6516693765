use proptest::prelude::*;
use wald_liability::diffusion::{
    evidence_for_belief, exit_stats, expected_exit_time, hit_lower_prob, posterior,
};
use wald_liability::mechanism::{ceiling_thresholds, first_best_thresholds};
use wald_liability::model::{FirmType, ModelParams, RawParams, Tariff, ThresholdPolicy};
use wald_liability::solver::{
    best_threshold_policy, extract_thresholds, firm_launch_payoff, solve_general, SolveGrid,
    SolverConfig, StoppingProblem,
};
use wald_liability::Error;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn p1() -> ModelParams {
    ModelParams::new(1.0, 0.05, 1.0, 1.2, 1.2, 2.0).unwrap()
}

fn interval() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-2.0..-0.1f64, 0.1..2.0f64, 0.05..0.95f64, 0.4..2.0f64)
        .prop_map(|(a, b, u, sigma)| (a + (b - a) * u, a, b, sigma))
}

proptest! {
    #[test]
    fn validation_matches_the_stated_conditions(
        sigma in -0.5..2.0f64,
        c in -0.1..0.2f64,
        pi in 0.1..2.0f64,
        beta in 0.1..2.0f64,
        l in 0.1..3.0f64,
        damage in 0.1..3.0f64,
    ) {
        let raw = RawParams { sigma, c, pi, beta, l, damage };
        let ok = sigma > 0.0 && c > 0.0 && l < damage && l * beta < damage * pi;
        prop_assert_eq!(ModelParams::validate(raw).is_ok(), ok);
    }

    #[test]
    fn tariffs_never_exceed_the_cap(
        mut bps in prop::collection::vec(-3.0..3.0f64, 0..4),
        vals in prop::collection::vec(-1.0..1.5f64, 4),
        default in -1.0..1.5f64,
        x in -5.0..5.0f64,
    ) {
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let values = vals[..bps.len()].to_vec();
        let cap = 1.2;
        match Tariff::new(bps, values.clone(), vec![], default, cap) {
            Ok(t) => prop_assert!(t.eval(x) <= cap),
            Err(e) => {
                let over = values.iter().chain(std::iter::once(&default)).any(|v| *v > cap);
                prop_assert!(over, "rejected a tariff within the cap: {}", e);
            }
        }
    }

    #[test]
    fn posterior_rises_with_evidence_and_inverts(
        theta in 0.01..0.99f64,
        x in -4.0..4.0f64,
        dx in 0.01..1.0f64,
        sigma in 0.4..2.0f64,
    ) {
        let p = posterior(theta, x, sigma);
        // Away from saturation, where beliefs round to 0 or 1.
        prop_assume!(p > 1e-6 && p < 1.0 - 1e-6);
        prop_assert!(posterior(theta, x + dx, sigma) > p);
        prop_assert!(close(evidence_for_belief(theta, p, sigma), x, 1e-8));
        prop_assert_eq!(posterior(theta, 0.0, sigma), theta);
    }

    #[test]
    fn exit_time_identity_holds((x, a, b, sigma) in interval()) {
        let f_g = hit_lower_prob(x, a, b, -1.0, sigma).unwrap();
        let f_b = hit_lower_prob(x, a, b, 1.0, sigma).unwrap();
        let t_g = expected_exit_time(x, a, b, -1.0, sigma).unwrap();
        let t_b = expected_exit_time(x, a, b, 1.0, sigma).unwrap();
        let rhs = (f_g + f_b) * (b - a) - 2.0 * (b - x);
        prop_assert!(close(t_g - t_b, rhs, 1e-9));
        prop_assert!(f_g > f_b);
    }

    #[test]
    fn lower_half_observations((x, a, b, sigma) in interval()) {
        let x = a + (x - a).min(0.5 * (b - a));
        prop_assume!(x > a);
        let pol = ThresholdPolicy::new(a, b, x).unwrap();
        let st = exit_stats(FirmType::new(0.5).unwrap(), &pol, sigma).unwrap();
        prop_assert!(st.f_g + st.f_b >= 1.0 - 1e-12);
        prop_assert!(st.t_b >= st.t_g - 1e-12);
    }

    #[test]
    fn brownian_scaling((x, a, b, sigma) in interval(), s in 0.25..4.0f64) {
        let r = s.sqrt();
        for mu in [-1.0, 1.0] {
            let f = hit_lower_prob(x, a, b, mu, sigma).unwrap();
            let fs = hit_lower_prob(s * x, s * a, s * b, mu, r * sigma).unwrap();
            prop_assert!(close(f, fs, 1e-9));
            let t = expected_exit_time(x, a, b, mu, sigma).unwrap();
            let ts = expected_exit_time(s * x, s * a, s * b, mu, r * sigma).unwrap();
            prop_assert!(close(s * t, ts, 1e-9));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn value_iteration_agrees_with_closed_form(
        theta in 0.05..0.95f64,
        level in 0.0..1.2f64,
        c in 0.03..0.1f64,
    ) {
        let p = ModelParams::new(1.0, c, 1.0, 1.2, 1.2, 2.0).unwrap();
        let grid = SolveGrid::for_priors(1.0, &[theta], None).unwrap();
        let cfg = SolverConfig::for_params(&p);
        let tariff = Tariff::constant(level, p.l()).unwrap();
        let t = FirmType::new(theta).unwrap();
        let vf = solve_general(t, &tariff, &p, &grid, &cfg).unwrap();
        let payoff = firm_launch_payoff(theta, &tariff, &p);
        let problem = StoppingProblem { theta, sigma: 1.0, cost: c, launch_payoff: &payoff };
        let best = best_threshold_policy(&problem, 0.0, &grid, &cfg).unwrap();
        let band = cfg.tol_v + c * grid.dt(1.0);
        prop_assert!((vf.values[grid.zero_index()] - best.value).abs() <= band);
        let th = extract_thresholds(&vf).unwrap();
        if best.policy.is_degenerate() {
            prop_assert!(!(th.launch < 0.0 && 0.0 < th.abandon));
        } else {
            prop_assert!((th.launch - best.policy.launch_at).abs() <= 2.0 * grid.h());
            prop_assert!((th.abandon - best.policy.abandon_at).abs() <= 2.0 * grid.h());
        }
    }
}

#[test]
fn costlier_information_narrows_the_continuation_region() {
    let theta = FirmType::new(0.5).unwrap();
    let grid = SolveGrid::for_priors(1.0, &[0.5], None).unwrap();
    let mut prev: Option<(f64, f64)> = None;
    for c in [0.02, 0.04, 0.08, 0.16] {
        let p = p1().with_cost(c).unwrap();
        let fb = first_best_thresholds(theta, &p, &grid, &SolverConfig::for_params(&p)).unwrap();
        if let Some((lo, hi)) = prev {
            assert!(fb.launch >= lo && fb.abandon <= hi, "c={c}: {fb:?}");
        }
        prev = Some((fb.launch, fb.abandon));
    }
}

#[test]
fn a_higher_cap_delays_launch() {
    let theta = FirmType::new(0.5).unwrap();
    let grid = SolveGrid::for_priors(1.0, &[0.5], None).unwrap();
    let mut prev = f64::INFINITY;
    for l in [1.05, 1.2, 1.4, 1.6] {
        let p = ModelParams::new(1.0, 0.05, 1.0, 1.2, l, 2.0).unwrap();
        let launch = ceiling_thresholds(theta, &p, &grid, &SolverConfig::for_params(&p))
            .unwrap()
            .launch;
        assert!(launch < prev, "l={l}: {launch}");
        prev = launch;
    }
}

#[test]
fn higher_priors_launch_later_under_the_ceiling() {
    let p = p1();
    let thetas = [0.2, 0.4, 0.6, 0.8];
    let grid = SolveGrid::for_priors(1.0, &thetas, None).unwrap();
    let cfg = SolverConfig::for_params(&p);
    let levels: Vec<f64> = thetas
        .iter()
        .map(|&t| ceiling_thresholds(FirmType::new(t).unwrap(), &p, &grid, &cfg).unwrap().launch)
        .collect();
    assert!(levels.windows(2).all(|w| w[1] < w[0]), "{levels:?}");
}

#[test]
fn degenerate_priors_are_trivial() {
    let p = p1();
    let grid = SolveGrid::for_priors(1.0, &[0.5], None).unwrap();
    let cfg = SolverConfig::for_params(&p);
    let ceiling = Tariff::uniform_ceiling(&p);
    let safe = solve_general(FirmType::new(0.0).unwrap(), &ceiling, &p, &grid, &cfg).unwrap();
    assert!(close(safe.values[grid.zero_index()], p.pi(), 1e-12));
    let bad = solve_general(FirmType::new(1.0).unwrap(), &ceiling, &p, &grid, &cfg).unwrap();
    assert_eq!(bad.values[grid.zero_index()], 0.0);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(matches!(
        ModelParams::new(1.0, 0.05, 1.0, 1.2, 2.0, 2.0),
        Err(Error::CapViolation { .. })
    ));
    assert!(matches!(FirmType::new(1.5), Err(Error::InvalidPrior(_))));
    assert!(hit_lower_prob(0.0, 0.5, 1.0, 1.0, 1.0).is_err());
    assert!(Tariff::constant(1.3, 1.2).is_err());
}
