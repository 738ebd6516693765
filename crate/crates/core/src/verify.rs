//! Seeded property suite behind the `verify` subcommand.
//!
//! Every check draws its randomness from its own ChaCha stream, so adding
//! trials to one check never perturbs another, and trials run in parallel
//! without changing the report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;

use crate::diffusion::{
    evidence_for_belief, exit_stats, expected_exit_time, hit_lower_prob, posterior, ProductState,
};
use crate::error::{Error, Result};
use crate::fee::{
    best_abandon_given_launch, construct_violation_menu, fee_policy_value, mimic_payoff_gap,
    FeeCertificate, FeeMenu,
};
use crate::mechanism::{
    benchmarks, ceiling_conversion, identifiability_check, monotonicity_check,
    single_crossing_check, synthesize_monotone, Identifiability, SynthesisReport,
};
use crate::model::{DirectMechanism, FirmType, MenuItem, ModelParams, RawParams, Tariff, ThresholdPolicy};
use crate::scenario::Scenario;
use crate::simulation::{estimate_policy_value, estimate_regulator_value, simulate_exit, SimConfig};
use crate::solver::{
    best_threshold_policy, extract_thresholds, firm_launch_payoff, firm_policy_value,
    optimal_thresholds, regulator_launch_payoff, regulator_policy_value, solve_general, SolveGrid,
    SolverConfig, StoppingProblem,
};

/// Operations the suite must exercise. `run` is recorded by the command
/// line front end that drives the suite.
pub const REQUIRED_OPERATIONS: &[&str] = &[
    "validate_params",
    "tariff_eval",
    "posterior",
    "hit_lower_prob",
    "expected_exit_time",
    "exit_stats",
    "firm_policy_value",
    "regulator_policy_value",
    "best_threshold_policy",
    "solve_general",
    "extract_thresholds",
    "benchmarks",
    "ceiling_conversion",
    "single_crossing_check",
    "monotonicity_check",
    "synthesize_monotone",
    "identifiability_check",
    "fee_policy_value",
    "best_abandon_given_launch",
    "construct_violation_menu",
    "mimic_payoff_gap",
    "simulate_exit",
    "estimate_policy_value",
    "run",
];

/// Default priors when a scenario lists none.
pub const DEFAULT_TYPES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random parameter sets for the solver-equivalence and recklessness checks.
    pub param_sets: usize,
    pub crossing_trials: usize,
    pub random_tariffs: usize,
    /// Largest menu size synthesized; sizes run from 2 up to this.
    pub max_menu_size: usize,
    pub mimic_points: usize,
    pub oracle_instances: usize,
    pub sim_paths: usize,
    /// Standard errors allowed between simulation and closed forms.
    pub oracle_se: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            param_sets: 3,
            crossing_trials: 200,
            random_tariffs: 5,
            max_menu_size: 4,
            mimic_points: 50,
            oracle_instances: 3,
            sim_paths: 20_000,
            oracle_se: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub trials: usize,
    pub failures: usize,
    pub detail: String,
    pub operations: Vec<String>,
}

impl CheckResult {
    fn new(name: &str, ops: &[&str], trials: usize, failures: Vec<String>, summary: String) -> Self {
        let n_fail = failures.len();
        let detail = match failures.first() {
            None => summary,
            Some(first) => format!("{summary}; first failure: {first}"),
        };
        Self {
            name: name.into(),
            passed: n_fail == 0 && trials > 0,
            trials,
            failures: n_fail,
            detail,
            operations: ops.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coverage {
    pub required: Vec<String>,
    pub exercised: Vec<String>,
    pub missing: Vec<String>,
}

impl Coverage {
    fn from_checks(checks: &[CheckResult]) -> Self {
        let exercised: BTreeSet<String> = checks.iter().flat_map(|c| c.operations.iter().cloned()).collect();
        let mut cov = Self {
            required: REQUIRED_OPERATIONS.iter().map(|s| s.to_string()).collect(),
            exercised: exercised.into_iter().collect(),
            missing: Vec::new(),
        };
        cov.refresh();
        cov
    }

    fn refresh(&mut self) {
        self.missing = self
            .required
            .iter()
            .filter(|r| !self.exercised.contains(r))
            .cloned()
            .collect();
    }

    /// Marks an operation exercised outside the suite.
    pub fn record(&mut self, op: &str) {
        if !self.exercised.iter().any(|e| e == op) {
            self.exercised.push(op.to_string());
            self.exercised.sort();
        }
        self.refresh();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub options: SuiteOptions,
    pub params: ModelParams,
    /// Parameters used where the checks need a cap above the profit.
    pub deterrent_params: ModelParams,
    pub types: Vec<f64>,
    pub grid: SolveGrid,
    pub solver: SolverConfig,
    pub sim: SimConfig,
    pub checks: Vec<CheckResult>,
    pub coverage: Coverage,
    pub passed: bool,
}

impl SuiteReport {
    /// Records an operation exercised by the caller and updates the verdict.
    pub fn record_operation(&mut self, op: &str) {
        self.coverage.record(op);
        self.passed = self.checks.iter().all(|c| c.passed) && self.coverage.missing.is_empty();
    }
}

/// Independent generator for trial `index` of check `tag`.
pub fn trial_rng(seed: u64, tag: u32, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(tag) << 32) | u64::from(index));
    rng
}

/// Random validated parameters with `L > beta` and cost-benefit ratio
/// `(l/pi) / (L/beta)` in `[0.2, 0.8]`. Roughly half the draws have
/// `beta > pi`. With `deterrent`, the cap also exceeds the profit by 5%.
pub fn random_params<R: Rng>(rng: &mut R, deterrent: bool) -> ModelParams {
    loop {
        let sigma = rng.gen_range(0.6..1.4);
        let c = rng.gen_range(0.03..0.1);
        let pi = rng.gen_range(0.5..1.5);
        let beta = pi * rng.gen_range(0.5..2.0);
        let damage = beta * rng.gen_range(1.2..3.0);
        let ratio = rng.gen_range(0.2..0.8);
        let l = ratio * pi * damage / beta;
        if deterrent && l < 1.05 * pi {
            continue;
        }
        if let Ok(p) = ModelParams::new(sigma, c, pi, beta, l, damage) {
            return p;
        }
    }
}

/// The same model with the cap raised above the profit when needed, keeping
/// the cost-benefit ordering. Falls back to the largest admissible cap.
pub fn deterrent_variant(params: &ModelParams) -> Result<ModelParams> {
    if params.l() > params.pi() {
        return Ok(*params);
    }
    let ceiling = params.damage().min(params.damage() * params.pi() / params.beta());
    let l = (1.2 * params.pi()).min(0.5 * (params.pi() + ceiling));
    if !(l > params.pi()) {
        return Err(Error::PreconditionViolated(format!(
            "no cap above the profit {} is admissible",
            params.pi()
        )));
    }
    ModelParams::new(params.sigma(), params.c(), params.pi(), params.beta(), l, params.damage())
}

/// Random piecewise-constant tariff with up to three breakpoints in
/// `[-sigma^2, sigma^2]`, values in `[0, l]` and the cap beyond the last
/// breakpoint. One draw in four also carries a point override.
pub fn random_tariff<R: Rng>(rng: &mut R, params: &ModelParams) -> Tariff {
    let s2 = params.sigma() * params.sigma();
    let l = params.l();
    let k = rng.gen_range(0..=3usize);
    let mut breakpoints: Vec<f64> = (0..k).map(|_| rng.gen_range(-s2..s2)).collect();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    let values: Vec<f64> = (0..breakpoints.len()).map(|_| rng.gen_range(0.0..=l)).collect();
    let overrides = if rng.gen_bool(0.25) {
        vec![(rng.gen_range(-s2..0.0), rng.gen_range(0.0..=l))]
    } else {
        Vec::new()
    };
    Tariff::new(breakpoints, values, overrides, l, l).expect("sampled tariff respects the cap")
}

/// Lattice launch level of a prior under the uniform ceiling.
pub fn lattice_ceiling(
    theta: FirmType,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<f64> {
    let vf = solve_general(theta, &Tariff::uniform_ceiling(params), params, grid, cfg)?;
    Ok(extract_thresholds(&vf)?.launch)
}

/// `k` distinct priors with strictly decreasing targets. Priors are drawn
/// from `0.05, 0.10, ..., 0.95` among those whose ceiling continuation
/// region contains the start 0 and is left downward below it. Each target sits 2 to 4 grid steps below its ceiling
/// level and at least 2 steps below the previous target.
///
/// Deeper shading is not always implementable: a large discount that holds
/// back a low prior also draws higher priors into launching at that level.
pub fn random_targets<R: Rng>(
    rng: &mut R,
    k: usize,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<Vec<(FirmType, f64)>> {
    let h = grid.h();
    let mut pool = Vec::new();
    for i in 1..=19 {
        let t = FirmType::new(f64::from(i) * 0.05)?;
        let vf = solve_general(t, &Tariff::uniform_ceiling(params), params, grid, cfg)?;
        let ceiling = extract_thresholds(&vf)?;
        if ceiling.launch < -2.0 * h && ceiling.abandon > 0.0 {
            pool.push((t, ceiling.launch));
        }
    }
    if pool.len() < k {
        return Err(Error::PreconditionViolated(format!(
            "only {} priors continue from the start under the ceiling",
            pool.len()
        )));
    }
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let i = rng.gen_range(0..pool.len());
        chosen.push(pool.swap_remove(i));
    }
    chosen.sort_by(|a, b| a.0.theta().total_cmp(&b.0.theta()));
    let mut out: Vec<(FirmType, f64)> = Vec::with_capacity(k);
    for (t, ceiling) in chosen {
        let mut x = ceiling - rng.gen_range(2.0 * h..4.0 * h);
        if let Some(&(_, prev)) = out.last() {
            x = x.min(prev - rng.gen_range(2.0 * h..3.0 * h));
        }
        out.push((t, x));
    }
    Ok(out)
}

/// Direct mechanism offering each prior its achieved launch level at the
/// synthesized tariff's penalty there.
pub fn menu_from_synthesis(report: &SynthesisReport, params: &ModelParams) -> Result<DirectMechanism> {
    let items = report
        .outcomes
        .iter()
        .map(|o| MenuItem {
            theta: o.theta,
            launch_threshold: o.achieved,
            penalty: report.tariff.eval(o.achieved),
        })
        .collect();
    DirectMechanism::new(items, params)
}

/// The fee menu as a direct mechanism over the two known states.
pub fn menu_from_fees(menu: &FeeMenu, params: &ModelParams) -> Result<DirectMechanism> {
    DirectMechanism::new(
        vec![
            MenuItem { theta: 0.0, launch_threshold: menu.safe.launch_at, penalty: menu.safe.fee },
            MenuItem { theta: 1.0, launch_threshold: menu.damaging.launch_at, penalty: menu.damaging.fee },
        ],
        params,
    )
}

/// A random continuation interval around a start, with a volatility and a
/// product state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitInstance {
    pub x: f64,
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub state: ProductState,
}

impl ExitInstance {
    pub fn policy(&self) -> ThresholdPolicy {
        ThresholdPolicy::new(self.a, self.b, self.x).expect("start lies inside the interval")
    }
}

pub fn random_exit_instance<R: Rng>(rng: &mut R) -> ExitInstance {
    let a = rng.gen_range(-1.5..-0.3);
    let b = rng.gen_range(0.3..1.5);
    let x = a + (b - a) * rng.gen_range(0.1..0.9);
    ExitInstance {
        x,
        a,
        b,
        sigma: rng.gen_range(0.5..1.5),
        state: if rng.gen_bool(0.5) { ProductState::Damaging } else { ProductState::Safe },
    }
}

/// Grid for a fee construction: the safe firm holds out far above the start.
pub fn fee_grid(params: &ModelParams) -> Result<SolveGrid> {
    let s2 = params.sigma() * params.sigma();
    let h = s2 / 20.0;
    SolveGrid::new(-100.0 * h, 800.0 * h, h, params.sigma())
}

fn same_level(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn types_of(thetas: &[f64]) -> Vec<FirmType> {
    thetas.iter().map(|&t| FirmType::new(t).expect("prior in [0, 1]")).collect()
}

fn check_model(scenario: &Scenario) -> CheckResult {
    let mut failures = Vec::new();
    let raw = scenario.params.raw();
    if ModelParams::validate(raw) != Ok(scenario.params) {
        failures.push("scenario parameters do not revalidate".to_string());
    }
    let bad = [
        RawParams { l: raw.damage, ..raw },
        RawParams { sigma: 0.0, ..raw },
        RawParams { l: raw.damage * raw.pi / raw.beta, ..raw },
    ];
    for r in bad {
        if ModelParams::validate(r).is_ok() {
            failures.push(format!("{r:?} validated"));
        }
    }
    let p = &scenario.params;
    let ceiling = Tariff::uniform_ceiling(p);
    let mut trials = bad.len() + 1;
    for x in [-2.0, -0.5, 0.0, 0.5, 2.0] {
        trials += 1;
        if ceiling.eval(x) != p.l() {
            failures.push(format!("ceiling at {x} is {}", ceiling.eval(x)));
        }
        if let Some(t) = &scenario.tariff {
            let v = t.eval(x);
            if !(v <= p.l() && v >= p.subsidy_floor()) {
                failures.push(format!("scenario tariff at {x} is {v}"));
            }
        }
    }
    CheckResult::new(
        "model_core",
        &["validate_params", "tariff_eval"],
        trials,
        failures,
        format!("{trials} validation and tariff probes"),
    )
}

fn check_closed_forms(seed: u64, trials: usize) -> CheckResult {
    let failures: Vec<String> = (0..trials)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = trial_rng(seed, 1, i as u32);
            let inst = random_exit_instance(&mut rng);
            closed_form_trial(&inst, rng.gen_range(0.05..0.95)).err()
        })
        .collect();
    CheckResult::new(
        "closed_forms",
        &["posterior", "hit_lower_prob", "expected_exit_time", "exit_stats"],
        trials,
        failures,
        format!("{trials} random intervals"),
    )
}

fn closed_form_trial(inst: &ExitInstance, theta: f64) -> std::result::Result<(), String> {
    let ExitInstance { x, a, b, sigma, .. } = *inst;
    let run = || -> Result<std::result::Result<(), String>> {
        let f_g = hit_lower_prob(x, a, b, -1.0, sigma)?;
        let f_b = hit_lower_prob(x, a, b, 1.0, sigma)?;
        let t_g = expected_exit_time(x, a, b, -1.0, sigma)?;
        let t_b = expected_exit_time(x, a, b, 1.0, sigma)?;
        let st = exit_stats(FirmType::new(theta)?, &inst.policy(), sigma)?;
        if !(0.0..=1.0).contains(&f_b) || !(0.0..=1.0).contains(&f_g) || f_g <= f_b {
            return Ok(Err(format!("{inst:?}: f_g={f_g}, f_b={f_b}")));
        }
        if !(t_g > 0.0 && t_b > 0.0) {
            return Ok(Err(format!("{inst:?}: non-positive exit time")));
        }
        let identity = (f_g + f_b) * (b - a) - 2.0 * (b - x);
        if !rel_close(t_g - t_b, identity, 1e-9) {
            return Ok(Err(format!("{inst:?}: exit-time identity off by {}", t_g - t_b - identity)));
        }
        if st.f_g != f_g || st.f_b != f_b || st.t_g != t_g || st.t_b != t_b {
            return Ok(Err(format!("{inst:?}: exit_stats disagrees")));
        }
        let p = posterior(theta, x, sigma);
        let back = evidence_for_belief(theta, p, sigma);
        if !rel_close(back, x, 1e-9) || posterior(theta, x + 0.1, sigma) <= p {
            return Ok(Err(format!("{inst:?}: posterior round trip {back}")));
        }
        Ok(Ok(()))
    };
    run().unwrap_or_else(|e| Err(format!("{inst:?}: {e}")))
}

/// Compares value iteration with the closed-form policy search for one
/// prior and constant tariff level.
pub fn solver_equivalence_trial(
    theta: FirmType,
    level: f64,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> std::result::Result<(), String> {
    let tag = format!("theta={} level={level}", theta.theta());
    let run = || -> Result<std::result::Result<(), String>> {
        let tariff = Tariff::constant(level, params.l())?;
        let vf = solve_general(theta, &tariff, params, grid, cfg)?;
        let vi = extract_thresholds(&vf)?;
        let payoff = firm_launch_payoff(theta.theta(), &tariff, params);
        let problem = StoppingProblem {
            theta: theta.theta(),
            sigma: params.sigma(),
            cost: params.c(),
            launch_payoff: &payoff,
        };
        let cf = optimal_thresholds(&problem, grid, cfg)?;
        let slack = 2.0 * grid.h();
        if !same_level(vi.launch, cf.launch, slack) || !same_level(vi.abandon, cf.abandon, slack) {
            return Ok(Err(format!("{tag}: value iteration {vi:?}, closed form {cf:?}")));
        }
        let best = best_threshold_policy(&problem, 0.0, grid, cfg)?;
        let v0 = vf.values[grid.zero_index()];
        let band = cfg.tol_v + params.c() * grid.dt(params.sigma());
        if (best.value - v0).abs() > band {
            return Ok(Err(format!("{tag}: values {v0} and {} differ by more than {band}", best.value)));
        }
        let direct = firm_policy_value(theta, &best.policy, &tariff, params)?;
        if !rel_close(direct, best.value, 1e-12) {
            return Ok(Err(format!("{tag}: policy value {direct} vs search {}", best.value)));
        }
        Ok(Ok(()))
    };
    run().unwrap_or_else(|e| Err(format!("{tag}: {e}")))
}

fn regulator_trial(
    theta: FirmType,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> std::result::Result<(), String> {
    let run = || -> Result<std::result::Result<(), String>> {
        let payoff = regulator_launch_payoff(theta.theta(), params);
        let problem = StoppingProblem {
            theta: theta.theta(),
            sigma: params.sigma(),
            cost: params.c(),
            launch_payoff: &payoff,
        };
        let best = best_threshold_policy(&problem, 0.0, grid, cfg)?;
        let direct = regulator_policy_value(theta, &best.policy, params)?;
        let floor = payoff(0.0).max(0.0);
        if !rel_close(direct, best.value, 1e-12) || best.value < floor - cfg.tie_tol {
            return Ok(Err(format!(
                "theta={}: social value {direct}, search {}, floor {floor}",
                theta.theta(),
                best.value
            )));
        }
        Ok(Ok(()))
    };
    run().unwrap_or_else(|e| Err(format!("theta={}: {e}", theta.theta())))
}

/// Solver equivalence over priors `0, 0.1, ..., 1` and constant tariffs
/// `0`, `l/2` and `l` for one parameter set.
pub fn solver_equivalence_for(
    params: &ModelParams,
    step: Option<f64>,
    cfg: &SolverConfig,
) -> (usize, Vec<String>) {
    let thetas: Vec<f64> = (0..=10).map(|i| f64::from(i) / 10.0).collect();
    let grid = match SolveGrid::for_priors(params.sigma(), &thetas, step) {
        Ok(g) => g,
        Err(e) => return (1, vec![e.to_string()]),
    };
    let levels = [0.0, 0.5 * params.l(), params.l()];
    let cases: Vec<(f64, Option<f64>)> = thetas
        .iter()
        .flat_map(|&t| levels.iter().map(move |&l| (t, Some(l))).chain(std::iter::once((t, None))))
        .collect();
    let failures = cases
        .par_iter()
        .filter_map(|&(t, level)| {
            let theta = FirmType::new(t).expect("prior in [0, 1]");
            match level {
                Some(l) => solver_equivalence_trial(theta, l, params, &grid, cfg).err(),
                None => regulator_trial(theta, params, &grid, cfg).err(),
            }
        })
        .collect();
    (cases.len(), failures)
}

fn check_solver(scenario: &Scenario, step: Option<f64>, cfg: &SolverConfig, opts: &SuiteOptions) -> CheckResult {
    let mut sets = vec![(scenario.params, *cfg)];
    for i in 0..opts.param_sets {
        let p = random_params(&mut trial_rng(opts.seed, 2, i as u32), false);
        sets.push((p, SolverConfig::for_params(&p)));
    }
    let results: Vec<(usize, Vec<String>)> = sets
        .par_iter()
        .map(|(p, c)| solver_equivalence_for(p, step, c))
        .collect();
    let trials = results.iter().map(|r| r.0).sum();
    let failures = results.into_iter().flat_map(|r| r.1).collect();
    CheckResult::new(
        "solver_equivalence",
        &[
            "solve_general",
            "extract_thresholds",
            "best_threshold_policy",
            "firm_policy_value",
            "regulator_policy_value",
        ],
        trials,
        failures,
        format!("{} parameter sets, 11 priors, 3 constant tariffs plus the social problem", sets.len()),
    )
}

/// Smallest `ceiling - first_best` launch margin over the priors, or the
/// failure.
pub fn recklessness_margin(
    params: &ModelParams,
    thetas: &[f64],
    step: Option<f64>,
    cfg: &SolverConfig,
) -> Result<f64> {
    let grid = SolveGrid::for_priors(params.sigma(), thetas, step)?;
    let b = benchmarks(params, &types_of(thetas), &grid, cfg)?;
    Ok(b.types
        .iter()
        .map(|t| t.ceiling.launch - t.first_best.launch)
        .fold(f64::INFINITY, f64::min))
}

fn check_recklessness(
    scenario: &Scenario,
    thetas: &[f64],
    step: Option<f64>,
    cfg: &SolverConfig,
    opts: &SuiteOptions,
) -> CheckResult {
    let mut sets = vec![(scenario.params, *cfg)];
    for i in 0..opts.param_sets {
        let p = random_params(&mut trial_rng(opts.seed, 3, i as u32), false);
        sets.push((p, SolverConfig::for_params(&p)));
    }
    let results: Vec<Result<f64>> = sets
        .par_iter()
        .map(|(p, c)| recklessness_margin(p, thetas, step, c))
        .collect();
    let beta_above = sets.iter().filter(|(p, _)| p.beta() > p.pi()).count();
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    for (r, (p, _)) in results.iter().zip(&sets) {
        match r {
            Ok(m) => worst = worst.min(*m),
            Err(e) => failures.push(format!("{:?}: {e}", p.raw())),
        }
    }
    CheckResult::new(
        "recklessness",
        &["benchmarks"],
        sets.len() * thetas.len(),
        failures,
        format!(
            "{} parameter sets ({beta_above} with beta > pi) x {} priors, smallest margin {worst:.4e}",
            sets.len(),
            thetas.len()
        ),
    )
}

/// One randomized single-crossing trial on a deterrent parameter set.
pub fn single_crossing_trial<R: Rng>(rng: &mut R) -> std::result::Result<(), String> {
    let params = random_params(rng, true);
    let psi = random_tariff(rng, &params);
    let s2 = params.sigma() * params.sigma();
    let x = rng.gen_range(-s2..0.5 * s2);
    let mut t = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
    t.sort_by(f64::total_cmp);
    let tag = format!("{:?} x={x} thetas={t:?}", params.raw());
    let run = || -> Result<std::result::Result<(), String>> {
        let grid = SolveGrid::for_priors(params.sigma(), &t, None)?;
        let cfg = SolverConfig::for_params(&params);
        let v = single_crossing_check(&psi, x, FirmType::new(t[0])?, FirmType::new(t[1])?, &params, &grid, &cfg)?;
        if !v.holds {
            return Ok(Err(format!("{tag}: crossing fails {v:?}")));
        }
        if !(v.b_term < params.pi()) {
            return Ok(Err(format!("{tag}: b term {} not below the profit", v.b_term)));
        }
        Ok(Ok(()))
    };
    run().unwrap_or_else(|e| Err(format!("{tag}: {e}")))
}

fn check_single_crossing(opts: &SuiteOptions) -> CheckResult {
    let failures = (0..opts.crossing_trials)
        .into_par_iter()
        .filter_map(|i| single_crossing_trial(&mut trial_rng(opts.seed, 4, i as u32)).err())
        .collect();
    CheckResult::new(
        "single_crossing",
        &["single_crossing_check"],
        opts.crossing_trials,
        failures,
        format!("{} random tariffs, evidence levels and prior pairs", opts.crossing_trials),
    )
}

/// Synthesizes a random target profile of `k` priors and checks the tariff
/// shape and that every prior hits its target.
pub fn synthesis_trial<R: Rng>(
    rng: &mut R,
    k: usize,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<std::result::Result<SynthesisReport, String>> {
    let targets = random_targets(rng, k, params, grid, cfg)?;
    let report = synthesize_monotone(&targets, params, grid, cfg)?;
    let t = &report.tariff;
    let tag = format!("targets {:?}", targets.iter().map(|(t, x)| (t.theta(), *x)).collect::<Vec<_>>());
    if !report.verified || report.max_deviation > 2.0 * grid.h() {
        return Ok(Err(format!("{tag}: deviation {}", report.max_deviation)));
    }
    if !t.is_non_decreasing() || t.max_value() > params.l() || !t.point_overrides().is_empty() {
        return Ok(Err(format!("{tag}: tariff shape {t:?}")));
    }
    Ok(Ok(report))
}

fn check_synthesis(
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
    opts: &SuiteOptions,
) -> (CheckResult, Vec<SynthesisReport>) {
    let sizes: Vec<usize> = (2..=opts.max_menu_size.max(2)).collect();
    let results: Vec<std::result::Result<SynthesisReport, String>> = sizes
        .par_iter()
        .map(|&k| {
            let mut rng = trial_rng(opts.seed, 5, k as u32);
            synthesis_trial(&mut rng, k, params, grid, cfg).unwrap_or_else(|e| Err(format!("k={k}: {e}")))
        })
        .collect();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => failures.push(e),
        }
    }
    let check = CheckResult::new(
        "synthesis",
        &["synthesize_monotone"],
        sizes.len(),
        failures,
        format!("menu sizes {sizes:?}"),
    );
    (check, reports)
}

fn check_round_trip(
    reports: &[SynthesisReport],
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> (CheckResult, Vec<DirectMechanism>) {
    let mut failures = Vec::new();
    let mut menus = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for rep in reports {
        let mut run = || -> Result<DirectMechanism> {
            let menu = menu_from_synthesis(rep, params)?;
            let (_, conv) = ceiling_conversion(&menu, params, grid, cfg)?;
            worst = (worst.0.max(conv.max_threshold_gap), worst.1.max(conv.max_payoff_gap));
            Ok(menu)
        };
        match run() {
            Ok(m) => menus.push(m),
            Err(e) => failures.push(format!("{} priors: {e}", rep.outcomes.len())),
        }
    }
    let check = CheckResult::new(
        "ceiling_round_trip",
        &["ceiling_conversion"],
        reports.len(),
        failures,
        format!(
            "{} synthesized menus, worst threshold gap {:.3e}, worst payoff gap {:.3e}",
            reports.len(),
            worst.0,
            worst.1
        ),
    );
    (check, menus)
}

fn check_monotonicity(
    params: &ModelParams,
    types: &[FirmType],
    grid: &SolveGrid,
    cfg: &SolverConfig,
    synthesized: &[SynthesisReport],
    opts: &SuiteOptions,
) -> CheckResult {
    let mut failures = Vec::new();
    let mut trials = 0;
    let mut judge = |name: String, psi: &Tariff, types: &[FirmType]| -> bool {
        trials += 1;
        match monotonicity_check(psi, types, params, grid, cfg) {
            Ok(r) if r.decreasing => true,
            Ok(r) => {
                failures.push(format!("{name}: launch level rises by {}", r.worst_increase));
                true
            }
            Err(Error::InadmissibleTariff { .. }) => {
                trials -= 1;
                false
            }
            Err(e) => {
                failures.push(format!("{name}: {e}"));
                true
            }
        }
    };
    judge("ceiling".into(), &Tariff::uniform_ceiling(params), types);
    for (i, rep) in synthesized.iter().enumerate() {
        let ts: Vec<FirmType> = rep
            .outcomes
            .iter()
            .map(|o| FirmType::new(o.theta).expect("prior in [0, 1]"))
            .collect();
        judge(format!("synthesized tariff {i}"), &rep.tariff, &ts);
    }
    let mut rng = trial_rng(opts.seed, 6, 0);
    let mut accepted = 0;
    let mut drawn = 0;
    while accepted < opts.random_tariffs && drawn < 50 * opts.random_tariffs.max(1) {
        drawn += 1;
        let psi = random_tariff(&mut rng, params);
        if judge(format!("random tariff {drawn}"), &psi, types) {
            accepted += 1;
        }
    }
    if accepted < opts.random_tariffs {
        failures.push(format!("only {accepted} admissible random tariffs in {drawn} draws"));
    }
    CheckResult::new(
        "monotonicity",
        &["monotonicity_check"],
        trials,
        failures,
        format!(
            "uniform ceiling, {} synthesized and {accepted} random admissible tariffs ({} inadmissible draws skipped)",
            synthesized.len(),
            drawn - accepted
        ),
    )
}

/// Checks a fee certificate against independent payoff evaluations.
pub fn audit_fee_certificate(
    cert: &FeeCertificate,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> std::result::Result<(), String> {
    let m = &cert.menu;
    let run = || -> Result<std::result::Result<(), String>> {
        if !m.reverses_monotonicity() {
            return Ok(Err(format!("menu {m:?} does not reverse the launch order")));
        }
        if !(cert.indifference_residual >= 0.0 && cert.indifference_residual < cfg.tol_v) {
            return Ok(Err(format!("indifference residual {}", cert.indifference_residual)));
        }
        if !(cert.strict_margin > 0.0) {
            return Ok(Err(format!("damaging margin {}", cert.strict_margin)));
        }
        let safe_own = ThresholdPolicy::new(m.safe.launch_at, f64::INFINITY, 0.0)?;
        let v = fee_policy_value(ProductState::Safe, &safe_own, m.safe.fee, params)?;
        if !rel_close(v, cert.safe_own, 1e-9) {
            return Ok(Err(format!("safe payoff {v} vs certificate {}", cert.safe_own)));
        }
        let (_, v) = best_abandon_given_launch(ProductState::Damaging, m.damaging.launch_at, 0.0, m.damaging.fee, params, grid)?;
        if !rel_close(v.max(0.0), cert.damaging_own, 1e-9) {
            return Ok(Err(format!("damaging payoff {v} vs certificate {}", cert.damaging_own)));
        }
        Ok(Ok(()))
    };
    run().unwrap_or_else(|e| Err(e.to_string()))
}

fn check_fee(params: &ModelParams, cfg: &SolverConfig) -> (CheckResult, Option<FeeCertificate>) {
    let ops = ["construct_violation_menu", "fee_policy_value", "best_abandon_given_launch"];
    let outcome = fee_grid(params).and_then(|g| Ok((construct_violation_menu(params, &g, cfg)?, g)));
    match outcome {
        Ok((cert, grid)) => {
            let failures: Vec<String> = audit_fee_certificate(&cert, params, &grid, cfg).err().into_iter().collect();
            let m = cert.menu;
            let summary = format!(
                "safe item ({:.4}, {:.5}), damaging item ({:.4}, {:.5}), margin {:.4e}",
                m.safe.launch_at, m.safe.fee, m.damaging.launch_at, m.damaging.fee, cert.strict_margin
            );
            (CheckResult::new("fee_counterexample", &ops, 1, failures, summary), Some(cert))
        }
        Err(e) => (CheckResult::new("fee_counterexample", &ops, 1, vec![e.to_string()], String::new()), None),
    }
}

/// Mimic-gap properties at a random lower-half point of `(a, b)`.
pub fn mimic_trial<R: Rng>(
    rng: &mut R,
    a: f64,
    b: f64,
    eta: f64,
    params: &ModelParams,
) -> std::result::Result<(), String> {
    let mid = 0.5 * (a + b);
    let x = mid - (mid - a) * rng.gen_range(0.0..0.999);
    let tag = format!("({a}, {b}) x={x} eta={eta}");
    let run = || -> Result<std::result::Result<(), String>> {
        let g = mimic_payoff_gap(a, b, eta, x, params)?;
        let st = exit_stats(FirmType::new(0.5)?, &ThresholdPolicy::new(a, b, x)?, params.sigma())?;
        if !(g.gap > 0.0 && st.t_b > st.t_g && st.f_g + st.f_b > 1.0) {
            return Ok(Err(format!("{tag}: gap {} with {st:?}", g.gap)));
        }
        if !rel_close(g.gap, g.decomposition, 1e-9) {
            return Ok(Err(format!("{tag}: decomposition {} vs gap {}", g.decomposition, g.gap)));
        }
        Ok(Ok(()))
    };
    run().unwrap_or_else(|e| Err(format!("{tag}: {e}")))
}

fn check_mimic(params: &ModelParams, cert: Option<&FeeCertificate>, opts: &SuiteOptions) -> CheckResult {
    let s2 = params.sigma() * params.sigma();
    let failures = (0..opts.mimic_points)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = trial_rng(opts.seed, 7, i as u32);
            match cert {
                Some(c) if i % 2 == 0 && c.damaging_abandon.is_finite() => {
                    mimic_trial(&mut rng, c.menu.safe.launch_at, c.damaging_abandon, c.menu.safe.fee, params)
                }
                _ => {
                    let a = -rng.gen_range(0.1..2.0) * s2;
                    let b = rng.gen_range(0.1..2.0) * s2;
                    let eta = rng.gen_range(0.0..params.pi());
                    mimic_trial(&mut rng, a, b, eta, params)
                }
            }
            .err()
        })
        .collect();
    CheckResult::new(
        "mimic_gap",
        &["mimic_payoff_gap", "exit_stats"],
        opts.mimic_points,
        failures,
        format!("{} lower-half starts", opts.mimic_points),
    )
}

/// Whether a menu with distinct thresholds yields one cell per item plus
/// the residual cell, each threshold appearing once.
pub fn partition_is_valid(menu: &DirectMechanism) -> std::result::Result<(), String> {
    match identifiability_check(menu) {
        Identifiability::Identifiable { cells } => {
            let levels: Vec<f64> = cells.iter().filter_map(|c| c.launch_threshold).collect();
            let distinct = levels.iter().enumerate().all(|(i, a)| levels[i + 1..].iter().all(|b| a != b));
            let residual = cells.iter().filter(|c| c.theta.is_none()).count();
            if cells.len() == menu.items().len() + 1 && distinct && residual == 1 {
                Ok(())
            } else {
                Err(format!("malformed partition {cells:?}"))
            }
        }
        other => Err(format!("collision {other:?}")),
    }
}

fn check_identifiability(menus: &[DirectMechanism]) -> CheckResult {
    let failures = menus.iter().filter_map(|m| partition_is_valid(m).err()).collect();
    CheckResult::new(
        "identifiability",
        &["identifiability_check"],
        menus.len(),
        failures,
        format!("{} menus", menus.len()),
    )
}

/// Simulated exit frequency and time against the closed forms, within
/// `k` standard errors.
pub fn oracle_trial(inst: &ExitInstance, cfg: &SimConfig, k: f64) -> std::result::Result<(), String> {
    let run = || -> Result<std::result::Result<(), String>> {
        let emp = simulate_exit(inst.state, &inst.policy(), cfg, inst.sigma)?;
        let mu = inst.state.drift();
        let f = hit_lower_prob(inst.x, inst.a, inst.b, mu, inst.sigma)?;
        let t = expected_exit_time(inst.x, inst.a, inst.b, mu, inst.sigma)?;
        if !emp.hit_lower.covers(f, k) || !emp.exit_time.covers(t, k) {
            return Ok(Err(format!(
                "{inst:?}: z-scores {:.2} and {:.2}",
                emp.hit_lower.z_score(f),
                emp.exit_time.z_score(t)
            )));
        }
        Ok(Ok(()))
    };
    run().unwrap_or_else(|e| Err(format!("{inst:?}: {e}")))
}

fn check_oracle(params: &ModelParams, sim: &SimConfig, opts: &SuiteOptions) -> CheckResult {
    let mut failures: Vec<String> = (0..opts.oracle_instances)
        .filter_map(|i| {
            let mut rng = trial_rng(opts.seed, 8, i as u32);
            let inst = random_exit_instance(&mut rng);
            let cfg = SimConfig { seed: rng.gen(), ..*sim };
            oracle_trial(&inst, &cfg, opts.oracle_se).err()
        })
        .collect();
    let s2 = params.sigma() * params.sigma();
    let policy = ThresholdPolicy::new(-0.5 * s2, 0.5 * s2, 0.0).expect("interval straddles 0");
    let theta = FirmType::new(0.5).expect("prior in [0, 1]");
    let ceiling = Tariff::uniform_ceiling(params);
    let values = || -> Result<Option<String>> {
        let firm = estimate_policy_value(theta, &policy, &ceiling, sim, params)?;
        let exact = firm_policy_value(theta, &policy, &ceiling, params)?;
        let social = estimate_regulator_value(theta, &policy, sim, params)?;
        let social_exact = regulator_policy_value(theta, &policy, params)?;
        Ok((!firm.covers(exact, opts.oracle_se) || !social.covers(social_exact, opts.oracle_se)).then(|| {
            format!(
                "policy values: firm z={:.2}, social z={:.2}",
                firm.z_score(exact),
                social.z_score(social_exact)
            )
        }))
    };
    match values() {
        Ok(Some(msg)) => failures.push(msg),
        Ok(None) => {}
        Err(e) => failures.push(format!("policy values: {e}")),
    }
    CheckResult::new(
        "simulation_oracle",
        &["simulate_exit", "estimate_policy_value"],
        opts.oracle_instances + 1,
        failures,
        format!(
            "{} exit instances and one policy value, {} paths each, {} standard errors",
            opts.oracle_instances, sim.n_paths, opts.oracle_se
        ),
    )
}

/// Runs every check on a scenario. `step` and `tol_v` override the
/// scenario's grid step and value tolerance. Deterministic given the
/// inputs and `opts.seed`, regardless of thread count.
pub fn run_suite(
    scenario: &Scenario,
    step: Option<f64>,
    tol_v: Option<f64>,
    opts: &SuiteOptions,
) -> Result<SuiteReport> {
    let params = scenario.params;
    let thetas: Vec<f64> = if scenario.types.is_empty() {
        DEFAULT_TYPES.to_vec()
    } else {
        scenario.types.iter().map(|t| t.theta()).collect()
    };
    let types = types_of(&thetas);
    let grid = scenario.solve_grid(step)?;
    let cfg = scenario.solver_config(tol_v);
    let sim = SimConfig { n_paths: opts.sim_paths, ..scenario.sim_config(opts.seed) };
    sim.validate()?;

    let deterrent = deterrent_variant(&params)?;
    let d_cfg = SolverConfig { ..SolverConfig::for_params(&deterrent) };
    let d_cfg = SolverConfig { tol_v: tol_v.unwrap_or(d_cfg.tol_v), ..d_cfg };
    let mut d_priors = thetas.clone();
    d_priors.extend((1..=19).map(|i| f64::from(i) * 0.05));
    let d_grid = SolveGrid::for_priors(deterrent.sigma(), &d_priors, step)?;

    let mut checks = vec![
        check_model(scenario),
        check_closed_forms(opts.seed, 50),
        check_solver(scenario, step, &cfg, opts),
        check_recklessness(scenario, &thetas, step, &cfg, opts),
        check_single_crossing(opts),
    ];
    let (synthesis, reports) = check_synthesis(&deterrent, &d_grid, &d_cfg, opts);
    let (round_trip, mut menus) = check_round_trip(&reports, &deterrent, &d_grid, &d_cfg);
    checks.push(check_monotonicity(&deterrent, &types, &d_grid, &d_cfg, &reports, opts));
    checks.push(synthesis);
    checks.push(round_trip);
    let (fee, cert) = check_fee(&deterrent, &d_cfg);
    checks.push(fee);
    checks.push(check_mimic(&deterrent, cert.as_ref(), opts));
    if let Some(c) = &cert {
        menus.push(menu_from_fees(&c.menu, &deterrent)?);
    }
    checks.push(check_identifiability(&menus));
    checks.push(check_oracle(&params, &sim, opts));

    let coverage = Coverage::from_checks(&checks);
    let passed = checks.iter().all(|c| c.passed) && coverage.missing.is_empty();
    Ok(SuiteReport {
        options: *opts,
        params,
        deterrent_params: deterrent,
        types: thetas,
        grid,
        solver: cfg,
        sim,
        checks,
        coverage,
        passed,
    })
}
