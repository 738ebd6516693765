//! Benchmarks, tariff construction and structural checks for liability
//! mechanisms.
//!
//! Tariffs are evaluated on the solver lattice: point overrides act at the
//! node they snap to, and "launch at x" values use lattice abandon levels so
//! that closed-form payoffs and value iteration agree to rounding.

use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{exit_stats_between, posterior};
use crate::error::{Error, Result};
use crate::model::{DirectMechanism, FirmType, ModelParams, Tariff, POINT_TOL};
use crate::solver::{
    best_abandon_for_launch, best_continuation_pair, firm_launch_payoff,
    firm_launch_payoff_on_grid, optimal_thresholds, regulator_launch_payoff, solve_general,
    solve_problem, Action, SolveGrid, SolverConfig, StoppingProblem, Thresholds, ValueFunction,
};

/// Social and uniform-ceiling thresholds for one prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeBenchmark {
    pub theta: f64,
    pub first_best: Thresholds,
    pub ceiling: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkThresholds {
    /// Sorted by prior.
    pub types: Vec<TypeBenchmark>,
}

impl BenchmarkThresholds {
    /// Whether both launch-threshold profiles weakly decrease in the prior,
    /// up to `slack`.
    pub fn launch_decreasing(&self, slack: f64) -> bool {
        self.types.windows(2).all(|w| {
            w[1].first_best.launch <= w[0].first_best.launch + slack
                && w[1].ceiling.launch <= w[0].ceiling.launch + slack
        })
    }

    pub fn get(&self, theta: f64) -> Option<&TypeBenchmark> {
        self.types.iter().find(|t| t.theta == theta)
    }
}

fn sorted_types(types: &[FirmType]) -> Vec<FirmType> {
    let mut out = types.to_vec();
    out.sort_by(|a, b| a.theta().total_cmp(&b.theta()));
    out.dedup();
    out
}

/// Ceiling thresholds of one prior under `psi = l`.
pub fn ceiling_thresholds(
    theta: FirmType,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<Thresholds> {
    let ceiling = Tariff::uniform_ceiling(params);
    let payoff = firm_launch_payoff(theta.theta(), &ceiling, params);
    let problem = StoppingProblem {
        theta: theta.theta(),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    optimal_thresholds(&problem, grid, cfg)
}

/// Socially optimal thresholds of one prior.
pub fn first_best_thresholds(
    theta: FirmType,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<Thresholds> {
    let payoff = regulator_launch_payoff(theta.theta(), params);
    let problem = StoppingProblem {
        theta: theta.theta(),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    optimal_thresholds(&problem, grid, cfg)
}

/// First-best and uniform-ceiling thresholds for each prior, checking that
/// the firm under the ceiling launches strictly later (at lower evidence)
/// than the planner would.
///
/// A type fails unless the ceiling launch level exceeds the first-best one
/// by more than `2h`, so equal infinite levels fail too.
pub fn benchmarks(
    params: &ModelParams,
    types: &[FirmType],
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<BenchmarkThresholds> {
    let types = sorted_types(types);
    let tol = 2.0 * grid.h();
    let out = types
        .par_iter()
        .map(|&theta| {
            let first_best = first_best_thresholds(theta, params, grid, cfg)?;
            let ceiling = ceiling_thresholds(theta, params, grid, cfg)?;
            if !(ceiling.launch - first_best.launch > tol) {
                return Err(Error::RecklessnessViolation {
                    theta: theta.theta(),
                    first_best: first_best.launch,
                    ceiling: ceiling.launch,
                });
            }
            Ok(TypeBenchmark {
                theta: theta.theta(),
                first_best,
                ceiling,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkThresholds { types: out })
}

/// Launch and abandon levels of the policy a solved value function
/// prescribes from the node nearest `start`: the edges of the continuation
/// run containing it. If the start itself launches, the launch level is the
/// start and there is no abandon level (`+inf`); symmetrically for abandon.
///
/// Unlike [`extract_thresholds`] this does not require the whole grid to
/// have threshold form, only that the run is left downward by launching and
/// upward by abandoning.
pub fn reached_thresholds(vf: &ValueFunction, start: f64) -> Result<Thresholds> {
    let grid = &vf.grid;
    let acts = &vf.actions;
    let s = grid
        .nearest(start)
        .ok_or_else(|| Error::GridTooSmall(format!("start {start} lies outside the grid")))?;
    match acts[s] {
        Action::Launch => {
            return Ok(Thresholds {
                launch: grid.node(s),
                abandon: f64::INFINITY,
            })
        }
        Action::Abandon => {
            return Ok(Thresholds {
                launch: f64::NEG_INFINITY,
                abandon: grid.node(s),
            })
        }
        Action::Continue => {}
    }
    let mut lo = s;
    while lo > 0 && acts[lo] == Action::Continue {
        lo -= 1;
    }
    let mut hi = s;
    while hi + 1 < acts.len() && acts[hi] == Action::Continue {
        hi += 1;
    }
    if acts[lo] != Action::Launch || acts[hi] != Action::Abandon {
        return Err(Error::NonIntervalRegion(format!(
            "continuation around {} ends with {:?} at {} and {:?} at {}",
            grid.node(s),
            acts[lo],
            grid.node(lo),
            acts[hi],
            grid.node(hi)
        )));
    }
    Ok(Thresholds {
        launch: grid.node(lo),
        abandon: grid.node(hi),
    })
}

/// Per-type outcome of converting a direct mechanism into a tariff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConversionOutcome {
    pub theta: f64,
    pub menu_threshold: f64,
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub achieved_threshold: f64,
    pub menu_payoff: f64,
    pub achieved_payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConversionReport {
    pub start: f64,
    pub outcomes: Vec<ConversionOutcome>,
    pub max_threshold_gap: f64,
    pub max_payoff_gap: f64,
}

/// Payoff of a prior that launches at node `launch` (with the best lattice
/// abandon level) from node `start`, or launches at once if `launch` is not
/// below `start`.
fn menu_payoff(
    theta: f64,
    tariff: &Tariff,
    params: &ModelParams,
    grid: &SolveGrid,
    start: f64,
    launch: f64,
) -> Result<f64> {
    let payoff = firm_launch_payoff_on_grid(theta, tariff, params, grid)?;
    if launch >= start - POINT_TOL {
        return Ok(payoff(start));
    }
    let problem = StoppingProblem {
        theta,
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    Ok(best_abandon_for_launch(&problem, start, launch, grid)?.1)
}

/// Converts a direct mechanism into a tariff that charges the menu penalty
/// at each menu threshold and the cap everywhere else, then checks with
/// value iteration from evidence 0 that every prior still launches at its
/// own threshold and earns its menu payoff.
pub fn ceiling_conversion(
    mechanism: &DirectMechanism,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<(Tariff, ConversionReport)> {
    let mut overrides: Vec<(f64, f64)> = Vec::new();
    for item in mechanism.items() {
        let dup = overrides
            .iter()
            .any(|(x, _)| (x - item.launch_threshold).abs() <= POINT_TOL);
        if !dup {
            overrides.push((item.launch_threshold, item.penalty));
        }
    }
    let tariff = Tariff::new(vec![], vec![], overrides, params.l(), params.l())?;
    let start_idx = grid.zero_index();
    let start = grid.node(start_idx);
    let h = grid.h();

    let outcomes = mechanism
        .items()
        .par_iter()
        .map(|item| {
            let theta = FirmType::new(item.theta)?;
            let node = grid.nearest(item.launch_threshold).ok_or_else(|| {
                Error::GridTooSmall(format!(
                    "menu threshold {} lies outside the grid",
                    item.launch_threshold
                ))
            })?;
            let menu_payoff = menu_payoff(item.theta, &tariff, params, grid, start, grid.node(node))?;
            let vf = solve_general(theta, &tariff, params, grid, cfg)?;
            let achieved_threshold = reached_thresholds(&vf, start)
                .map_err(|e| Error::NotOutcomeEquivalent(e.to_string()))?
                .launch;
            Ok(ConversionOutcome {
                theta: item.theta,
                menu_threshold: item.launch_threshold,
                achieved_threshold,
                menu_payoff,
                achieved_payoff: vf.values[start_idx],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut max_threshold_gap = 0.0f64;
    let mut max_payoff_gap = 0.0f64;
    for o in &outcomes {
        // A menu level at or above the start means launching at once.
        let gap = (o.achieved_threshold - o.menu_threshold.min(start)).abs();
        let pay = (o.achieved_payoff - o.menu_payoff).abs();
        if !(gap <= 2.0 * h) {
            return Err(Error::NotOutcomeEquivalent(format!(
                "prior {} launches at {} instead of {}",
                o.theta, o.achieved_threshold, o.menu_threshold
            )));
        }
        if !(pay < cfg.tol_v) {
            return Err(Error::NotOutcomeEquivalent(format!(
                "prior {} earns {} instead of the menu payoff {}",
                o.theta, o.achieved_payoff, o.menu_payoff
            )));
        }
        max_threshold_gap = max_threshold_gap.max(gap);
        max_payoff_gap = max_payoff_gap.max(pay);
    }
    Ok((
        tariff,
        ConversionReport {
            start,
            outcomes,
            max_threshold_gap,
            max_payoff_gap,
        },
    ))
}

/// Result of comparing continuation with immediate launch for two priors
/// sharing the lower prior's best continuation pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleCrossingVerdict {
    pub x: f64,
    pub theta: f64,
    pub theta_prime: f64,
    pub launch_at: f64,
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub abandon_at: f64,
    /// `f_b (pi - psi(launch)) + psi(x) - c T_b`.
    pub a_term: f64,
    /// `f_g pi - c T_g`.
    pub b_term: f64,
    pub theta_continues: bool,
    pub theta_prime_continues: bool,
    pub holds: bool,
}

/// Checks that if `theta` prefers gathering information at `x` to launching
/// there, so does `theta_prime >= theta`.
///
/// With belief `p`, continuing with a pair `(a, b)` beats launching iff
/// `p (A - B) >= pi - B`, where `A` and `B` are the reported terms. Since `B`
/// is below `pi`, the comparison is monotone in the belief.
pub fn single_crossing_check(
    psi: &Tariff,
    x: f64,
    theta: FirmType,
    theta_prime: FirmType,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<SingleCrossingVerdict> {
    if theta.theta() > theta_prime.theta() {
        return Err(Error::PreconditionViolated(format!(
            "priors must be ordered, got {} > {}",
            theta.theta(),
            theta_prime.theta()
        )));
    }
    let payoff = firm_launch_payoff(theta.theta(), psi, params);
    let problem = StoppingProblem {
        theta: theta.theta(),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    let (pair, _) = best_continuation_pair(&problem, x, grid, cfg)?;
    let st = exit_stats_between(x, pair.launch_at, pair.abandon_at, params.sigma())?;
    let (pi, c) = (params.pi(), params.c());
    let a_term = st.f_b * (pi - psi.eval(pair.launch_at)) + psi.eval(x) - c * st.t_b;
    let b_term = st.f_g * pi - c * st.t_g;
    if !(b_term < pi) {
        return Err(Error::Domain(format!(
            "safe-state continuation value {b_term} is not below the profit {pi}"
        )));
    }
    let continues = |p: f64| p * (a_term - b_term) >= pi - b_term - cfg.tie_tol;
    let p = posterior(theta.theta(), x, params.sigma());
    let p_prime = posterior(theta_prime.theta(), x, params.sigma());
    let theta_continues = continues(p);
    let theta_prime_continues = continues(p_prime);
    Ok(SingleCrossingVerdict {
        x,
        theta: theta.theta(),
        theta_prime: theta_prime.theta(),
        launch_at: pair.launch_at,
        abandon_at: pair.abandon_at,
        a_term,
        b_term,
        theta_continues,
        theta_prime_continues,
        holds: !theta_continues || theta_prime_continues,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeThresholds {
    pub theta: f64,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    /// Sorted by prior.
    pub types: Vec<TypeThresholds>,
    pub decreasing: bool,
    /// Largest increase of the launch level between consecutive priors.
    pub worst_increase: f64,
}

/// Solves every prior under `psi` and checks that launch levels weakly
/// decrease in the prior, with `2h` slack.
pub fn monotonicity_check(
    psi: &Tariff,
    types: &[FirmType],
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<MonotonicityReport> {
    let types = sorted_types(types);
    let solved = types
        .par_iter()
        .map(|&theta| {
            let vf = solve_general(theta, psi, params, grid, cfg)?;
            let thresholds = reached_thresholds(&vf, 0.0).map_err(|e| match e {
                Error::NonIntervalRegion(reason) => Error::InadmissibleTariff {
                    theta: theta.theta(),
                    reason,
                },
                other => other,
            })?;
            Ok(TypeThresholds {
                theta: theta.theta(),
                thresholds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst_increase = f64::NEG_INFINITY;
    for w in solved.windows(2) {
        let (lo, hi) = (w[0].thresholds.launch, w[1].thresholds.launch);
        let inc = if lo == hi { 0.0 } else { hi - lo };
        worst_increase = worst_increase.max(inc);
    }
    if solved.len() < 2 {
        worst_increase = 0.0;
    }
    Ok(MonotonicityReport {
        decreasing: worst_increase <= 2.0 * grid.h(),
        types: solved,
        worst_increase,
    })
}

/// One step of the monotone synthesis: the penalty placed at and below a
/// target level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisStep {
    /// Priors sharing this target.
    pub thetas: Vec<f64>,
    /// Target snapped to the grid.
    pub level: f64,
    pub penalty: f64,
    /// Node above the level where launching is most tempting.
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub binding_level: f64,
    /// Payoff at the binding node from holding out for the level.
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub hold_value: f64,
    /// Payoff from launching at the binding node instead.
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub alternative_value: f64,
    /// `hold_value - alternative_value - tie_tol`: how far past indifference
    /// the level is preferred. Below `tol_v` unless the step is inherited.
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub residual: f64,
    /// The previous penalty already made the level preferred, so none of
    /// the priors needed extra relief.
    pub inherited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisOutcome {
    pub theta: f64,
    pub target: f64,
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub achieved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisReport {
    pub tariff: Tariff,
    pub steps: Vec<SynthesisStep>,
    pub outcomes: Vec<SynthesisOutcome>,
    /// Largest gap between achieved and target launch levels.
    pub max_deviation: f64,
    /// Whether every prior launches within `2h` of its target.
    pub verified: bool,
}

// Non-decreasing step tariff from steps listed by decreasing level.
fn step_tariff(steps: &[(f64, f64)], params: &ModelParams) -> Result<Tariff> {
    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    // Walk upward, keeping only breakpoints where the value changes.
    for (i, &(level, penalty)) in steps.iter().enumerate().rev() {
        let above = if i == 0 { params.l() } else { steps[i - 1].1 };
        if penalty != above {
            breakpoints.push(level);
            values.push(penalty);
        }
    }
    Tariff::new(breakpoints, values, vec![], params.l(), params.l())
}

/// How strongly a prior prefers holding out for `level_idx` over launching
/// at any node above it.
#[derive(Debug, Clone, Copy)]
struct HoldMargin {
    /// `min (hold - launch)` over nodes above the level with a positive
    /// launch payoff; `+inf` if there are none.
    margin: f64,
    node: Option<usize>,
    hold: f64,
    launch: f64,
}

fn hold_margin(
    theta: f64,
    tariff: &Tariff,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
    level_idx: usize,
) -> Result<HoldMargin> {
    let payoff = firm_launch_payoff_on_grid(theta, tariff, params, grid)?;
    let cutoff = grid.node(level_idx) + 0.5 * grid.h();
    let held = |x: f64| if x > cutoff { f64::NEG_INFINITY } else { payoff(x) };
    let problem = StoppingProblem {
        theta,
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &held,
    };
    let vf = solve_problem(&problem, grid, cfg)?;
    let mut out = HoldMargin {
        margin: f64::INFINITY,
        node: None,
        hold: f64::INFINITY,
        launch: f64::NEG_INFINITY,
    };
    for i in level_idx + 1..grid.len() {
        let launch = payoff(grid.node(i));
        if launch > 0.0 && vf.values[i] - launch < out.margin {
            out = HoldMargin {
                margin: vf.values[i] - launch,
                node: Some(i),
                hold: vf.values[i],
                launch,
            };
        }
    }
    Ok(out)
}

/// Builds a non-decreasing step tariff under which each prior launches at
/// its target level.
///
/// Targets must weakly decrease in the prior and lie at or below the
/// prior's ceiling launch level. Working from the lowest prior upward, the
/// penalty at and below each target starts at the previous step's value and
/// is lowered by bisection until holding out for the target beats launching
/// at every higher node by more than `tie_tol`, but by less than
/// `tie_tol + tol_v`. Equal targets share one step, with the lowest penalty
/// any of them needs.
pub fn synthesize_monotone(
    targets: &[(FirmType, f64)],
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<SynthesisReport> {
    if targets.is_empty() {
        return Err(Error::PreconditionViolated("no targets given".into()));
    }
    let mut targets = targets.to_vec();
    targets.sort_by(|a, b| a.0.theta().total_cmp(&b.0.theta()));
    if let Some((t, x)) = targets.iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::PreconditionViolated(format!(
            "target {x} for prior {} is not finite",
            t.theta()
        )));
    }
    for w in targets.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::PreconditionViolated(format!(
                "prior {} has two targets",
                w[0].0.theta()
            )));
        }
        if w[1].1 > w[0].1 + POINT_TOL {
            return Err(Error::PreconditionViolated(format!(
                "targets must decrease in the prior: {} -> {}, {} -> {}",
                w[0].0.theta(),
                w[0].1,
                w[1].0.theta(),
                w[1].1
            )));
        }
    }
    let ceilings = targets
        .par_iter()
        .map(|(t, _)| ceiling_thresholds(*t, params, grid, cfg))
        .collect::<Result<Vec<_>>>()?;
    for ((t, x), ceil) in targets.iter().zip(&ceilings) {
        if *x > ceil.launch + POINT_TOL {
            return Err(Error::PreconditionViolated(format!(
                "target {x} for prior {} lies above its ceiling launch level {}",
                t.theta(),
                ceil.launch
            )));
        }
    }

    // Group priors whose targets share a node.
    let mut groups: Vec<(usize, Vec<f64>)> = Vec::new();
    for (t, x) in &targets {
        let idx = grid
            .nearest(*x)
            .ok_or_else(|| Error::GridTooSmall(format!("target {x} lies outside the grid")))?;
        if idx == 0 || idx + 1 >= grid.len() {
            return Err(Error::GridTooSmall(format!("target {x} sits at the grid edge")));
        }
        match groups.last_mut() {
            Some((last, thetas)) if *last == idx => thetas.push(t.theta()),
            _ => groups.push((idx, vec![t.theta()])),
        }
    }

    let mut placed: Vec<(f64, f64)> = Vec::new();
    let mut steps = Vec::new();
    let mut prev = params.l();
    for (idx, thetas) in &groups {
        let level = grid.node(*idx);
        let tariff_with = |penalty: f64| {
            let mut all = placed.clone();
            all.push((level, penalty));
            step_tariff(&all, params)
        };
        let mut chosen: Option<(f64, HoldMargin, bool)> = None;
        for &theta in thetas {
            let margin = |penalty: f64| -> Result<HoldMargin> {
                hold_margin(theta, &tariff_with(penalty)?, params, grid, cfg, *idx)
            };
            let at_prev = margin(prev)?;
            let (penalty, m, inherited) = if at_prev.margin > cfg.tie_tol {
                (prev, at_prev, true)
            } else {
                let (p, m) = bisect_penalty(&margin, params.subsidy_floor(), prev, cfg, theta)?;
                (p, m, false)
            };
            if chosen.as_ref().map_or(true, |(p, _, _)| penalty < *p) {
                chosen = Some((penalty, m, inherited));
            }
        }
        let (penalty, m, inherited) = chosen.expect("groups are non-empty");
        steps.push(SynthesisStep {
            thetas: thetas.clone(),
            level,
            penalty,
            binding_level: m.node.map_or(f64::NAN, |i| grid.node(i)),
            hold_value: m.hold,
            alternative_value: m.launch,
            residual: m.margin - cfg.tie_tol,
            inherited,
        });
        placed.push((level, penalty));
        prev = penalty;
    }

    let tariff = step_tariff(&placed, params)?;
    let outcomes = targets
        .par_iter()
        .map(|(t, x)| {
            let vf = solve_general(*t, &tariff, params, grid, cfg)?;
            // Targets at or above the start are checked from just above them.
            let start = if *x < 0.0 { 0.0 } else { *x + grid.h() };
            let th = reached_thresholds(&vf, start)?;
            Ok(SynthesisOutcome {
                theta: t.theta(),
                target: *x,
                achieved: th.launch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_deviation = outcomes
        .iter()
        .map(|o| (o.achieved - o.target).abs())
        .fold(0.0, f64::max);
    Ok(SynthesisReport {
        tariff,
        steps,
        outcomes,
        max_deviation,
        verified: max_deviation <= 2.0 * grid.h(),
    })
}

// Largest penalty in [floor, hi] whose hold margin exceeds `tie_tol`, to
// within `tol_v`. The margin falls as the penalty rises.
fn bisect_penalty(
    margin: &dyn Fn(f64) -> Result<HoldMargin>,
    floor: f64,
    hi: f64,
    cfg: &SolverConfig,
    theta: f64,
) -> Result<(f64, HoldMargin)> {
    let goal = cfg.tie_tol;
    let at_floor = margin(floor)?;
    if at_floor.margin <= goal {
        return Err(Error::BisectionFailed(format!(
            "prior {theta} still launches higher up at the subsidy floor {floor}"
        )));
    }
    let at_hi = margin(hi)?;
    if !(at_floor.margin > at_hi.margin) {
        return Err(Error::BisectionFailed(format!(
            "hold margin for prior {theta} does not fall as the penalty rises"
        )));
    }
    let (mut lo, mut lo_m, mut hi) = (floor, at_floor, hi);
    for _ in 0..200 {
        if lo_m.margin - goal < cfg.tol_v {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let m = margin(mid)?;
        if m.margin > goal {
            lo = mid;
            lo_m = m;
        } else {
            hi = mid;
        }
    }
    if lo_m.margin - goal >= cfg.tol_v {
        return Err(Error::BisectionFailed(format!(
            "indifference residual {} for prior {theta} did not fall below {}",
            lo_m.margin - goal,
            cfg.tol_v
        )));
    }
    Ok((lo, lo_m))
}

/// A cell of the observable partition: the priors pooled at one launch level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionCell {
    /// `None` for the residual cell of priors outside the menu.
    pub theta: Option<f64>,
    pub launch_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Identifiability {
    Identifiable { cells: Vec<PartitionCell> },
    Collision { theta_a: f64, theta_b: f64, launch_threshold: f64 },
}

impl Identifiability {
    pub fn is_identifiable(&self) -> bool {
        matches!(self, Identifiability::Identifiable { .. })
    }
}

/// Whether the launch level reveals the prior: one cell per menu item plus
/// a residual cell, or the first pair of priors sharing a level.
pub fn identifiability_check(mechanism: &DirectMechanism) -> Identifiability {
    let items = mechanism.items();
    for (i, a) in items.iter().enumerate() {
        for b in &items[i + 1..] {
            if (a.launch_threshold - b.launch_threshold).abs() <= POINT_TOL {
                return Identifiability::Collision {
                    theta_a: a.theta,
                    theta_b: b.theta,
                    launch_threshold: a.launch_threshold,
                };
            }
        }
    }
    let mut cells = vec![PartitionCell {
        theta: None,
        launch_threshold: None,
    }];
    cells.extend(items.iter().map(|it| PartitionCell {
        theta: Some(it.theta),
        launch_threshold: Some(it.launch_threshold),
    }));
    Identifiability::Identifiable { cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MenuItem;
    use crate::solver::extract_thresholds;

    fn p0() -> ModelParams {
        ModelParams::new(1.0, 0.05, 1.0, 1.2, 0.8, 2.0).unwrap()
    }

    fn p1() -> ModelParams {
        ModelParams::new(1.0, 0.05, 1.0, 1.2, 1.2, 2.0).unwrap()
    }

    fn ft(t: f64) -> FirmType {
        FirmType::new(t).unwrap()
    }

    fn setup(params: &ModelParams, priors: &[f64]) -> (SolveGrid, SolverConfig) {
        let grid = SolveGrid::for_priors(params.sigma(), priors, None).unwrap();
        (grid, SolverConfig::for_params(params))
    }

    // Lattice launch level under the uniform ceiling.
    fn lattice_ceiling(theta: f64, params: &ModelParams, grid: &SolveGrid, cfg: &SolverConfig) -> f64 {
        let vf = solve_general(ft(theta), &Tariff::uniform_ceiling(params), params, grid, cfg).unwrap();
        extract_thresholds(&vf).unwrap().launch
    }

    #[test]
    fn firm_is_reckless_under_the_ceiling() {
        let p = p0();
        let (grid, cfg) = setup(&p, &[0.5]);
        let b = benchmarks(&p, &[ft(0.5)], &grid, &cfg).unwrap();
        let t = b.get(0.5).unwrap();
        assert!(t.first_best.launch < t.ceiling.launch);

        let p = p1();
        let priors = [0.3, 0.5, 0.7];
        let (grid, cfg) = setup(&p, &priors);
        let types: Vec<_> = priors.iter().map(|&t| ft(t)).collect();
        let b = benchmarks(&p, &types, &grid, &cfg).unwrap();
        for t in &b.types {
            assert!(t.first_best.launch < t.ceiling.launch, "{t:?}");
            assert!(t.ceiling.launch.is_finite());
        }
        assert!(b.launch_decreasing(2.0 * grid.h()));
    }

    #[test]
    fn recklessness_with_equal_benefits() {
        let p = ModelParams::new(1.0, 0.05, 1.0, 1.0, 1.2, 2.0).unwrap();
        let (grid, cfg) = setup(&p, &[0.5]);
        let b = benchmarks(&p, &[ft(0.5)], &grid, &cfg).unwrap();
        assert!(b.types[0].first_best.launch < b.types[0].ceiling.launch);
    }

    #[test]
    fn conversion_of_ceiling_menu_is_trivial() {
        let p = p1();
        let (grid, cfg) = setup(&p, &[0.3, 0.7]);
        let menu: Vec<_> = [0.3, 0.7]
            .iter()
            .map(|&t| MenuItem {
                theta: t,
                launch_threshold: lattice_ceiling(t, &p, &grid, &cfg),
                penalty: p.l(),
            })
            .collect();
        let m = DirectMechanism::new(menu, &p).unwrap();
        let (tariff, report) = ceiling_conversion(&m, &p, &grid, &cfg).unwrap();
        assert_eq!(tariff.min_value(), p.l());
        assert!(report.max_threshold_gap <= 2.0 * grid.h());
        assert!(report.max_payoff_gap < cfg.tol_v);
    }

    #[test]
    fn conversion_rejects_non_ic_menu() {
        let p = p1();
        let (grid, cfg) = setup(&p, &[0.5]);
        // Far below the ceiling level with no penalty relief.
        let m = DirectMechanism::new(
            vec![MenuItem { theta: 0.5, launch_threshold: -2.0, penalty: p.l() }],
            &p,
        )
        .unwrap();
        assert!(matches!(
            ceiling_conversion(&m, &p, &grid, &cfg),
            Err(Error::NotOutcomeEquivalent(_))
        ));
    }

    #[test]
    fn single_crossing_examples() {
        let p = p1();
        let (grid, cfg) = setup(&p, &[0.3, 0.7]);
        let l = Tariff::uniform_ceiling(&p);
        let v = single_crossing_check(&l, 0.0, ft(0.5), ft(0.5), &p, &grid, &cfg).unwrap();
        assert!(v.holds && v.theta_continues && v.b_term < p.pi());

        let v = single_crossing_check(&l, 0.0, ft(0.4), ft(0.6), &p, &grid, &cfg).unwrap();
        assert!(v.theta_continues && v.theta_prime_continues && v.holds);

        assert!(single_crossing_check(&l, 0.0, ft(0.6), ft(0.4), &p, &grid, &cfg).is_err());
    }

    #[test]
    fn ceiling_thresholds_decrease() {
        let p = p1();
        let priors = [0.2, 0.4, 0.6, 0.8];
        let (grid, cfg) = setup(&p, &priors);
        let types: Vec<_> = priors.iter().map(|&t| ft(t)).collect();
        let r = monotonicity_check(&Tariff::uniform_ceiling(&p), &types, &p, &grid, &cfg).unwrap();
        assert!(r.decreasing, "{r:?}");
        assert_eq!(r.types.len(), 4);
    }

    #[test]
    fn synthesis_single_type_at_ceiling_is_unchanged() {
        let p = p1();
        let (grid, cfg) = setup(&p, &[0.5]);
        let target = lattice_ceiling(0.5, &p, &grid, &cfg);
        let r = synthesize_monotone(&[(ft(0.5), target)], &p, &grid, &cfg).unwrap();
        assert!(r.tariff.is_constant());
        assert_eq!(r.tariff.max_value(), p.l());
        assert!(r.verified);
        assert!(r.steps[0].inherited);
    }

    #[test]
    fn synthesis_two_types() {
        let p = p1();
        let (grid, cfg) = setup(&p, &[0.3, 0.6]);
        let x3 = lattice_ceiling(0.3, &p, &grid, &cfg) - 0.2;
        let x6 = lattice_ceiling(0.6, &p, &grid, &cfg) - 0.3;
        assert!(x6 < x3);
        let r = synthesize_monotone(&[(ft(0.3), x3), (ft(0.6), x6)], &p, &grid, &cfg).unwrap();
        assert!(r.verified, "{r:?}");
        assert!(r.tariff.is_non_decreasing());
        assert!(r.tariff.max_value() <= p.l());
        assert!(r.tariff.min_value() < p.l());
        for s in &r.steps {
            assert!(!s.inherited);
            assert!(s.residual > 0.0 && s.residual < cfg.tol_v, "{s:?}");
        }
    }

    #[test]
    fn synthesis_then_conversion_round_trip() {
        let p = p1();
        let (grid, cfg) = setup(&p, &[0.3, 0.6]);
        let x3 = lattice_ceiling(0.3, &p, &grid, &cfg) - 0.2;
        let x6 = lattice_ceiling(0.6, &p, &grid, &cfg) - 0.3;
        let r = synthesize_monotone(&[(ft(0.3), x3), (ft(0.6), x6)], &p, &grid, &cfg).unwrap();
        let menu: Vec<_> = r
            .outcomes
            .iter()
            .map(|o| MenuItem {
                theta: o.theta,
                launch_threshold: o.achieved,
                penalty: r.tariff.eval(o.achieved),
            })
            .collect();
        let m = DirectMechanism::new(menu, &p).unwrap();
        let (_, conv) = ceiling_conversion(&m, &p, &grid, &cfg).unwrap();
        assert_eq!(conv.max_threshold_gap, 0.0);
        assert!(conv.max_payoff_gap < cfg.tol_v);

        let types = [ft(0.3), ft(0.6)];
        let mono = monotonicity_check(&r.tariff, &types, &p, &grid, &cfg).unwrap();
        assert!(mono.decreasing);
    }

    #[test]
    fn synthesis_rejects_increasing_targets() {
        let p = p1();
        let (grid, cfg) = setup(&p, &[0.3, 0.6]);
        let r = synthesize_monotone(&[(ft(0.3), -1.5), (ft(0.6), -1.0)], &p, &grid, &cfg);
        assert!(matches!(r, Err(Error::PreconditionViolated(_))));
        let r = synthesize_monotone(&[(ft(0.5), 0.5)], &p, &grid, &cfg);
        assert!(matches!(r, Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn identifiability_cells() {
        let p = p1();
        let m = DirectMechanism::new(
            vec![
                MenuItem { theta: 0.2, launch_threshold: -0.5, penalty: 1.0 },
                MenuItem { theta: 0.7, launch_threshold: -1.0, penalty: 0.5 },
            ],
            &p,
        )
        .unwrap();
        match identifiability_check(&m) {
            Identifiability::Identifiable { cells } => assert_eq!(cells.len(), 3),
            other => panic!("{other:?}"),
        }
        let m = DirectMechanism::new(
            vec![
                MenuItem { theta: 0.2, launch_threshold: -0.5, penalty: 1.0 },
                MenuItem { theta: 0.7, launch_threshold: -0.5, penalty: 1.0 },
            ],
            &p,
        )
        .unwrap();
        assert_eq!(
            identifiability_check(&m),
            Identifiability::Collision { theta_a: 0.2, theta_b: 0.7, launch_threshold: -0.5 }
        );
        let empty = DirectMechanism::new(vec![], &p).unwrap();
        match identifiability_check(&empty) {
            Identifiability::Identifiable { cells } => assert_eq!(cells.len(), 1),
            other => panic!("{other:?}"),
        }
        let clash = DirectMechanism::new(
            vec![
                MenuItem { theta: 0.2, launch_threshold: -0.5, penalty: 0.5 },
                MenuItem { theta: 0.7, launch_threshold: -0.5, penalty: 0.6 },
            ],
            &p,
        );
        assert_eq!(clash, Err(Error::InconsistentMenu(0.2, 0.7)));
    }
}
