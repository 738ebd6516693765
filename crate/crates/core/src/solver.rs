//! Optimal stopping for a single prior: a closed-form search over threshold
//! policies and a value-iteration solver on an evidence grid.
//!
//! Both routes price a launch at evidence `x` through a launch-payoff map
//! `u(x)`, which already averages over the posterior at `x`. Abandoning pays
//! zero and information costs `c` per unit of time.
//!
//! The value-iteration chain is the embedded random walk of the evidence
//! process on a lattice of step `h`: conditional on the product state it
//! moves up with probability `logistic(+-2h / sigma^2)` and each step lasts
//! `h tanh(h / sigma^2)`. With that choice, hitting probabilities, expected
//! exit times and Bayesian beliefs at lattice nodes coincide with the
//! continuous-time ones, so both routes agree on lattice thresholds.

use serde::Serialize;

use crate::diffusion::{exit_stats_between, logistic, posterior};
use crate::error::{Error, Result};
use crate::model::{FirmType, ModelParams, PolicyKind, Tariff, ThresholdPolicy};

/// Evidence lattice `{i h : x_min <= i h <= x_max}`; zero is always a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveGrid {
    x_min: f64,
    x_max: f64,
    h: f64,
    below: usize,
    above: usize,
}

impl SolveGrid {
    pub fn new(x_min: f64, x_max: f64, h: f64, sigma: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("step {h} must be positive")));
        }
        if h > sigma * sigma {
            return Err(Error::InvalidGrid(format!(
                "step {h} exceeds sigma^2 = {}",
                sigma * sigma
            )));
        }
        if !(x_min < 0.0 && 0.0 < x_max && x_min.is_finite() && x_max.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "need x_min < 0 < x_max, got [{x_min}, {x_max}]"
            )));
        }
        let below = (-x_min / h).round();
        let above = (x_max / h).round();
        let tol = 1e-9 * (1.0 + below.max(above));
        if (below - (-x_min / h)).abs() > tol || (above - x_max / h).abs() > tol {
            return Err(Error::InvalidGrid(format!(
                "bounds [{x_min}, {x_max}] are not multiples of the step {h}"
            )));
        }
        Ok(Self::from_counts(below as usize, above as usize, h))
    }

    /// `below` nodes under zero and `above` nodes over it.
    pub fn from_counts(below: usize, above: usize, h: f64) -> Self {
        Self {
            x_min: -(below as f64) * h,
            x_max: above as f64 * h,
            h,
            below,
            above,
        }
    }

    /// Default grid for a set of priors.
    ///
    /// Bounds sit where the extreme interior priors reach beliefs `1e-6` and
    /// `1 - 1e-6`; the step is `sigma^2 / 20` unless overridden.
    pub fn for_priors(sigma: f64, priors: &[f64], step: Option<f64>) -> Result<Self> {
        let h = step.unwrap_or(sigma * sigma / 20.0);
        let interior: Vec<f64> = priors
            .iter()
            .copied()
            .filter(|t| *t > 0.0 && *t < 1.0)
            .collect();
        let tail = (1e6f64).ln();
        let (lo_logit, hi_logit) = interior.iter().fold((0.0f64, 0.0f64), |(lo, hi), &t| {
            let z = (t / (1.0 - t)).ln();
            (lo.min(z), hi.max(z))
        });
        let half = 0.5 * sigma * sigma;
        let x_max = half * (tail - lo_logit);
        let x_min = -half * (tail + hi_logit);
        let above = (x_max / h).ceil().max(1.0) as usize;
        let below = (-x_min / h).ceil().max(1.0) as usize;
        let grid = Self::from_counts(below, above, h);
        Self::new(grid.x_min, grid.x_max, h, sigma)
    }

    /// Same step, bounds scaled by `factor`.
    pub fn widened(&self, factor: f64) -> Self {
        Self::from_counts(
            (self.below as f64 * factor).ceil() as usize,
            (self.above as f64 * factor).ceil() as usize,
            self.h,
        )
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn len(&self) -> usize {
        self.below + self.above + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Index of the zero node.
    pub fn zero_index(&self) -> usize {
        self.below
    }

    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.below as f64) * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Index of the node nearest to `x`, if `x` lies within half a step of the grid.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        let i = (x / self.h).round() + self.below as f64;
        if i < 0.0 || i > (self.len() - 1) as f64 || !i.is_finite() {
            return None;
        }
        Some(i as usize)
    }

    /// Duration of one lattice step for volatility `sigma`.
    pub fn dt(&self, sigma: f64) -> f64 {
        self.h * (self.h / (sigma * sigma)).tanh()
    }
}

/// Numerical tolerances shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Sup-norm stopping tolerance for value iteration and indifference residuals.
    pub tol_v: f64,
    /// Payoff differences below this count as ties.
    pub tie_tol: f64,
    pub max_sweeps: usize,
}

impl SolverConfig {
    pub fn for_params(params: &ModelParams) -> Self {
        Self {
            tol_v: 1e-9 * params.pi(),
            tie_tol: 1e-9 * params.pi(),
            max_sweeps: 2_000_000,
        }
    }
}

/// A single-prior stopping problem with an arbitrary launch payoff.
#[derive(Clone, Copy)]
pub struct StoppingProblem<'a> {
    pub theta: f64,
    pub sigma: f64,
    pub cost: f64,
    pub launch_payoff: &'a dyn Fn(f64) -> f64,
}

impl std::fmt::Debug for StoppingProblem<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StoppingProblem")
            .field("theta", &self.theta)
            .field("sigma", &self.sigma)
            .field("cost", &self.cost)
            .finish_non_exhaustive()
    }
}

/// `pi - p(x) psi(x)` for a prior facing a tariff.
pub fn firm_launch_payoff<'a>(
    theta: f64,
    tariff: &'a Tariff,
    params: &'a ModelParams,
) -> impl Fn(f64) -> f64 + 'a {
    move |x| params.pi() - posterior(theta, x, params.sigma()) * tariff.eval(x)
}

/// `beta - p(x) L`.
pub fn regulator_launch_payoff(theta: f64, params: &ModelParams) -> impl Fn(f64) -> f64 + '_ {
    move |x| params.beta() - posterior(theta, x, params.sigma()) * params.damage()
}

/// Like [`firm_launch_payoff`], but point overrides act at the grid node
/// they are attached to.
pub fn firm_launch_payoff_on_grid<'a>(
    theta: f64,
    tariff: &'a Tariff,
    params: &'a ModelParams,
    grid: &SolveGrid,
) -> Result<impl Fn(f64) -> f64 + 'a> {
    let sampled = GridTariff::sample(tariff, grid)?;
    let params = *params;
    Ok(move |x: f64| params.pi() - posterior(theta, x, params.sigma()) * sampled.eval(x))
}

/// A tariff with point overrides snapped to grid nodes.
#[derive(Debug, Clone)]
pub struct GridTariff<'a> {
    tariff: &'a Tariff,
    grid: SolveGrid,
    snapped: Vec<(usize, f64)>,
}

impl<'a> GridTariff<'a> {
    pub fn sample(tariff: &'a Tariff, grid: &SolveGrid) -> Result<Self> {
        let mut snapped: Vec<(usize, f64)> = Vec::new();
        for &(x, v) in tariff.point_overrides() {
            let i = grid.nearest(x).ok_or_else(|| {
                Error::GridTooSmall(format!("tariff override at {x} lies outside the grid"))
            })?;
            if snapped.iter().any(|(j, _)| *j == i) {
                return Err(Error::InvalidGrid(format!(
                    "two tariff overrides share the grid node {}; refine the step",
                    grid.node(i)
                )));
            }
            snapped.push((i, v));
        }
        Ok(Self {
            tariff,
            grid: *grid,
            snapped,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        if let Some(i) = self.grid.nearest(x) {
            if (self.grid.node(i) - x).abs() <= 1e-9 * self.grid.h() {
                if let Some((_, v)) = self.snapped.iter().find(|(j, _)| *j == i) {
                    return *v;
                }
                // Off-node override keys must not leak into node evaluation.
                return self.tariff_without_overrides(x);
            }
        }
        self.tariff.eval(x)
    }

    fn tariff_without_overrides(&self, x: f64) -> f64 {
        let b = self.tariff.breakpoints();
        let idx = b.partition_point(|&p| p < x);
        self.tariff
            .segment_values()
            .get(idx)
            .copied()
            .unwrap_or(self.tariff.default_value())
    }
}

/// Value of a threshold policy under a launch-payoff map.
///
/// With belief `p` at the start, the value is
/// `(p f_b + (1 - p) f_g) u(launch) - c (p T_b + (1 - p) T_g)`.
pub fn policy_value(problem: &StoppingProblem<'_>, policy: &ThresholdPolicy) -> Result<f64> {
    let p = posterior(problem.theta, policy.start, problem.sigma);
    match policy.kind() {
        PolicyKind::LaunchNow => Ok((problem.launch_payoff)(policy.start)),
        PolicyKind::AbandonNow => Ok(0.0),
        PolicyKind::Continue => pair_value(problem, p, policy.start, policy.launch_at, policy.abandon_at),
    }
}

fn pair_value(problem: &StoppingProblem<'_>, p: f64, s: f64, a: f64, b: f64) -> Result<f64> {
    let st = exit_stats_between(s, a, b, problem.sigma)?;
    let hit = p * st.f_b + (1.0 - p) * st.f_g;
    let time = weighted_time(p, st.t_b, st.t_g);
    let launch = if hit > 0.0 { hit * (problem.launch_payoff)(a) } else { 0.0 };
    Ok(launch - problem.cost * time)
}

fn weighted_time(p: f64, t_b: f64, t_g: f64) -> f64 {
    let mut time = 0.0;
    if p > 0.0 {
        time += p * t_b;
    }
    if p < 1.0 {
        time += (1.0 - p) * t_g;
    }
    time
}

/// Expected firm payoff of a threshold policy under a tariff.
pub fn firm_policy_value(
    theta: FirmType,
    policy: &ThresholdPolicy,
    tariff: &Tariff,
    params: &ModelParams,
) -> Result<f64> {
    let payoff = firm_launch_payoff(theta.theta(), tariff, params);
    let problem = StoppingProblem {
        theta: theta.theta(),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    policy_value(&problem, policy)
}

/// Expected social payoff of a threshold policy.
pub fn regulator_policy_value(
    theta: FirmType,
    policy: &ThresholdPolicy,
    params: &ModelParams,
) -> Result<f64> {
    let payoff = regulator_launch_payoff(theta.theta(), params);
    let problem = StoppingProblem {
        theta: theta.theta(),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    policy_value(&problem, policy)
}

/// Best policy found by [`best_threshold_policy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestPolicy {
    pub policy: ThresholdPolicy,
    pub value: f64,
    /// Same search restricted to lattice thresholds, before refinement.
    pub lattice_policy: ThresholdPolicy,
    pub lattice_value: f64,
}

/// Maximizes the closed-form value over threshold pairs around `start`.
///
/// Candidates are immediate launch, immediate abandonment and every pair of
/// lattice points `start - i h < start < start + j h` inside the grid. Values
/// within `tie_tol` of the maximum are ties, resolved toward the narrowest
/// continuation interval. The winning pair is then polished coordinate-wise
/// by golden-section search to `h / 10`.
pub fn best_threshold_policy(
    problem: &StoppingProblem<'_>,
    start: f64,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<BestPolicy> {
    let (lattice_policy, lattice_value, clipped) = lattice_search(problem, start, grid, cfg, false)?;
    if let Some(side) = clipped {
        return Err(Error::GridTooSmall(format!(
            "optimal {side} threshold for prior {} sits on the grid edge",
            problem.theta
        )));
    }
    let (policy, value) = if lattice_policy.is_degenerate() {
        (lattice_policy, lattice_value)
    } else {
        refine(problem, &lattice_policy, lattice_value, grid.h())?
    };
    Ok(BestPolicy {
        policy,
        value,
        lattice_policy,
        lattice_value,
    })
}

/// Best continuation pair around `start`, ignoring immediate actions.
pub fn best_continuation_pair(
    problem: &StoppingProblem<'_>,
    start: f64,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<(ThresholdPolicy, f64)> {
    let (policy, value, clipped) = lattice_search(problem, start, grid, cfg, true)?;
    if let Some(side) = clipped {
        return Err(Error::GridTooSmall(format!(
            "best continuation {side} threshold for prior {} sits on the grid edge",
            problem.theta
        )));
    }
    Ok((policy, value))
}

/// Best abandon level for a fixed launch level `launch_at < start`.
///
/// Candidates are the grid nodes above `start` and `+inf`; immediate
/// abandonment is not among them. Ties go to the lowest level.
pub fn best_abandon_for_launch(
    problem: &StoppingProblem<'_>,
    start: f64,
    launch_at: f64,
    grid: &SolveGrid,
) -> Result<(f64, f64)> {
    if !(launch_at < start) {
        return Err(Error::Domain(format!(
            "launch level {launch_at} must lie below the start {start}"
        )));
    }
    let eval = |b: f64| {
        policy_value(
            problem,
            &ThresholdPolicy {
                launch_at,
                abandon_at: b,
                start,
            },
        )
    };
    let top = grid.len() - 1;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..=top {
        let b = grid.node(i);
        if b <= start + 1e-9 * grid.h() {
            continue;
        }
        let v = eval(b)?;
        if best.map_or(true, |(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    let unbounded = eval(f64::INFINITY)?;
    match best {
        Some((i, v)) if v >= unbounded => {
            if i == top {
                return Err(Error::GridTooSmall(format!(
                    "best abandon level for prior {} sits on the grid top {}",
                    problem.theta,
                    grid.x_max()
                )));
            }
            Ok((grid.node(i), v))
        }
        _ => Ok((f64::INFINITY, unbounded)),
    }
}

// Exact policy evaluation is accurate to rounding, so the polished value
// function is held to a much tighter Bellman residual than the sweeps.
const POLISH_FACTOR: f64 = 1e-3;

type LatticeResult = (ThresholdPolicy, f64, Option<&'static str>);

fn lattice_search(
    problem: &StoppingProblem<'_>,
    start: f64,
    grid: &SolveGrid,
    cfg: &SolverConfig,
    continuation_only: bool,
) -> Result<LatticeResult> {
    let h = grid.h();
    let slack = 1e-9 * h;
    if !(start >= grid.x_min() - slack && start <= grid.x_max() + slack) {
        return Err(Error::Domain(format!(
            "start {start} lies outside the grid [{}, {}]",
            grid.x_min(),
            grid.x_max()
        )));
    }
    let ia = ((start - grid.x_min()) / h + 1e-9).floor() as usize;
    let jb = ((grid.x_max() - start) / h + 1e-9).floor() as usize;
    let p = posterior(problem.theta, start, problem.sigma);
    let kappa = 2.0 / (problem.sigma * problem.sigma);

    // em[m] = expm1(-kappa m h), decay[i] = exp(-kappa i h).
    let em: Vec<f64> = (0..=ia + jb).map(|m| (-kappa * m as f64 * h).exp_m1()).collect();
    let decay: Vec<f64> = (0..=ia).map(|i| (-kappa * i as f64 * h).exp()).collect();
    let launch: Vec<f64> = (0..=ia)
        .map(|i| (problem.launch_payoff)(start - i as f64 * h))
        .collect();

    let eval = |i: usize, j: usize| -> f64 {
        let u = launch[i];
        if u == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let ratio = em[j] / em[i + j];
        let f_g = ratio;
        let f_b = decay[i] * ratio;
        let (x_a, x_b) = (i as f64 * h, j as f64 * h);
        let t_b = (-x_a * f_b + x_b * (1.0 - f_b)).max(0.0);
        let t_g = (x_a * f_g - x_b * (1.0 - f_g)).max(0.0);
        let hit = p * f_b + (1.0 - p) * f_g;
        hit * u - problem.cost * weighted_time(p, t_b, t_g)
    };

    let launch_now = launch[0];
    let mut best = if continuation_only {
        f64::NEG_INFINITY
    } else {
        launch_now.max(0.0)
    };
    for i in 1..=ia {
        for j in 1..=jb {
            best = best.max(eval(i, j));
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::GridTooSmall(format!(
            "no continuation pair fits around {start}"
        )));
    }
    let cut = best - cfg.tie_tol;

    if !continuation_only {
        if launch_now >= cut && launch_now >= 0.0 {
            return Ok((ThresholdPolicy::launch_now(start), launch_now, None));
        }
        if 0.0 >= cut {
            return Ok((ThresholdPolicy::abandon_now(start), 0.0, None));
        }
    }
    // Narrowest tied pair; among equal widths, the lowest launch point.
    for width in 2..=ia + jb {
        for i in (1..width).rev() {
            let j = width - i;
            if i > ia || j > jb {
                continue;
            }
            let v = eval(i, j);
            if v >= cut {
                let a = start - i as f64 * h;
                let b = start + j as f64 * h;
                let clipped = if i == ia {
                    Some("launch")
                } else if j == jb {
                    Some("abandon")
                } else {
                    None
                };
                let policy = ThresholdPolicy {
                    launch_at: a,
                    abandon_at: b,
                    start,
                };
                return Ok((policy, v, clipped));
            }
        }
    }
    unreachable!("the maximum is attained by some candidate")
}

fn refine(
    problem: &StoppingProblem<'_>,
    lattice: &ThresholdPolicy,
    lattice_value: f64,
    h: f64,
) -> Result<(ThresholdPolicy, f64)> {
    let s = lattice.start;
    let p = posterior(problem.theta, s, problem.sigma);
    let tol_x = h / 10.0;
    let gap = 1e-6 * h;
    let (mut a, mut b, mut best) = (lattice.launch_at, lattice.abandon_at, lattice_value);
    for _ in 0..4 {
        let before = (a, b);
        let lo = a - h;
        let hi = (a + h).min(s - gap);
        let (ca, va) = golden_max(|x| pair_value(problem, p, s, x, b).unwrap_or(f64::NEG_INFINITY), lo, hi, tol_x / 4.0);
        if va > best {
            a = ca;
            best = va;
        }
        let lo = (b - h).max(s + gap);
        let hi = b + h;
        let (cb, vb) = golden_max(|x| pair_value(problem, p, s, a, x).unwrap_or(f64::NEG_INFINITY), lo, hi, tol_x / 4.0);
        if vb > best {
            b = cb;
            best = vb;
        }
        if (a - before.0).abs() < tol_x && (b - before.1).abs() < tol_x {
            break;
        }
    }
    Ok((
        ThresholdPolicy {
            launch_at: a,
            abandon_at: b,
            start: s,
        },
        best,
    ))
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Stationary stopping thresholds: launch when evidence is at or below
/// `launch`, abandon at or above `abandon`, continue in between.
///
/// `launch == +inf` means launching is optimal everywhere on the grid;
/// `abandon == -inf` means abandoning is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub launch: f64,
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub abandon: f64,
}

impl Thresholds {
    /// The threshold policy these thresholds prescribe from `start`.
    pub fn policy_from(&self, start: f64) -> ThresholdPolicy {
        if start <= self.launch {
            ThresholdPolicy::launch_now(start)
        } else if start >= self.abandon {
            ThresholdPolicy::abandon_now(start)
        } else {
            ThresholdPolicy {
                launch_at: self.launch,
                abandon_at: self.abandon,
                start,
            }
        }
    }

    pub fn has_continuation(&self) -> bool {
        self.launch < self.abandon
    }
}

/// Closed-form stationary thresholds of a stopping problem.
///
/// Searches from the zero node; if that node lies in a stopping region, the
/// region's edge is located by bisection over nodes and the search restarts
/// just past it.
pub fn optimal_thresholds(
    problem: &StoppingProblem<'_>,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<Thresholds> {
    let from = |i: usize| best_threshold_policy(problem, grid.node(i), grid, cfg);
    let zero = grid.zero_index();
    let first = from(zero)?;
    let kind_at = |i: usize| -> Result<PolicyKind> { Ok(from(i)?.policy.kind()) };
    let resolved = |best: BestPolicy| Thresholds {
        launch: best.policy.launch_at,
        abandon: best.policy.abandon_at,
    };
    match first.policy.kind() {
        PolicyKind::Continue => Ok(resolved(first)),
        PolicyKind::LaunchNow => {
            let top = grid.len() - 1;
            if kind_at(top)? == PolicyKind::LaunchNow {
                return Ok(Thresholds {
                    launch: f64::INFINITY,
                    abandon: f64::INFINITY,
                });
            }
            // Invariant: launch at lo, not at hi.
            let (mut lo, mut hi) = (zero, top);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if kind_at(mid)? == PolicyKind::LaunchNow {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let next = from(hi)?;
            match next.policy.kind() {
                PolicyKind::Continue => Ok(resolved(next)),
                _ => {
                    let x = payoff_root(problem, grid.node(lo), grid.node(hi));
                    Ok(Thresholds { launch: x, abandon: x })
                }
            }
        }
        PolicyKind::AbandonNow => {
            if kind_at(0)? == PolicyKind::AbandonNow {
                return Ok(Thresholds {
                    launch: f64::NEG_INFINITY,
                    abandon: f64::NEG_INFINITY,
                });
            }
            // Invariant: abandon at hi, not at lo.
            let (mut lo, mut hi) = (0, zero);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if kind_at(mid)? == PolicyKind::AbandonNow {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let prev = from(lo)?;
            match prev.policy.kind() {
                PolicyKind::Continue => Ok(resolved(prev)),
                _ => {
                    let x = payoff_root(problem, grid.node(lo), grid.node(hi));
                    Ok(Thresholds { launch: x, abandon: x })
                }
            }
        }
    }
}

// Crossing of the launch payoff through zero between two nodes.
fn payoff_root(problem: &StoppingProblem<'_>, mut lo: f64, mut hi: f64) -> f64 {
    let u = problem.launch_payoff;
    if !(u(lo) >= 0.0 && u(hi) < 0.0) {
        return 0.5 * (lo + hi);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if u(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Action {
    Launch,
    Abandon,
    Continue,
}

/// Per-node value and optimal action from value iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction {
    pub grid: SolveGrid,
    pub values: Vec<f64>,
    pub actions: Vec<Action>,
    pub sweeps: usize,
    pub residual: f64,
}

impl ValueFunction {
    /// Value at the node nearest `x`.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.grid.nearest(x).map(|i| self.values[i])
    }

    pub fn action_at(&self, x: f64) -> Option<Action> {
        self.grid.nearest(x).map(|i| self.actions[i])
    }
}

/// Value iteration for a prior facing a tariff.
pub fn solve_general(
    theta: FirmType,
    tariff: &Tariff,
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<ValueFunction> {
    let payoff = firm_launch_payoff_on_grid(theta.theta(), tariff, params, grid)?;
    let problem = StoppingProblem {
        theta: theta.theta(),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    solve_problem(&problem, grid, cfg)
}

/// Value iteration for an arbitrary launch payoff. Nodes where the payoff is
/// `-inf` never launch.
pub fn solve_problem(
    problem: &StoppingProblem<'_>,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<ValueFunction> {
    let n = grid.len();
    let h = grid.h();
    let s2 = problem.sigma * problem.sigma;
    let dt = grid.dt(problem.sigma);
    let step_cost = problem.cost * dt;
    let q = logistic(2.0 * h / s2);

    // Padded with one ghost node on each side holding its stopping value.
    let x_at = |k: usize| (k as f64 - 1.0 - grid.below as f64) * h;
    let launch: Vec<f64> = (0..n + 2).map(|k| (problem.launch_payoff)(x_at(k))).collect();
    let stop: Vec<f64> = launch.iter().map(|u| u.max(0.0)).collect();
    let up: Vec<f64> = (0..n + 2)
        .map(|k| {
            let p = posterior(problem.theta, x_at(k), problem.sigma);
            p * q + (1.0 - p) * (1.0 - q)
        })
        .collect();

    let mut w = stop.clone();
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < cfg.max_sweeps {
        residual = 0.0;
        let forward = sweeps % 2 == 0;
        for idx in 0..n {
            let k = if forward { idx + 1 } else { n - idx };
            let cont = -step_cost + up[k] * w[k + 1] + (1.0 - up[k]) * w[k - 1];
            let new = stop[k].max(cont);
            residual = residual.max((new - w[k]).abs());
            w[k] = new;
        }
        sweeps += 1;
        if residual < cfg.tol_v {
            break;
        }
    }
    if residual >= cfg.tol_v {
        return Err(Error::NoConvergence {
            iterations: sweeps,
            residual,
        });
    }

    // Sweep increments understate the remaining error when the chain mixes
    // slowly, so evaluate the greedy policy exactly and re-check it.
    for _ in 0..50 {
        let continuing: Vec<bool> = (0..n + 2)
            .map(|k| {
                (1..=n).contains(&k)
                    && -step_cost + up[k] * w[k + 1] + (1.0 - up[k]) * w[k - 1] > stop[k]
            })
            .collect();
        let mut candidate = stop.clone();
        evaluate_blocks(&continuing, &up, step_cost, &mut candidate);
        let mut worst = 0.0f64;
        for k in 1..=n {
            let cont = -step_cost + up[k] * candidate[k + 1] + (1.0 - up[k]) * candidate[k - 1];
            worst = worst.max(stop[k].max(cont) - candidate[k]);
        }
        let improves = (1..=n).all(|k| candidate[k] >= w[k] - cfg.tol_v);
        if improves {
            w = candidate;
        }
        if improves && worst < POLISH_FACTOR * cfg.tol_v {
            residual = worst.max(0.0);
            break;
        }
        // One more Bellman sweep before re-deriving the policy.
        for k in 1..=n {
            let cont = -step_cost + up[k] * w[k + 1] + (1.0 - up[k]) * w[k - 1];
            w[k] = stop[k].max(cont);
        }
    }

    let mut actions = Vec::with_capacity(n);
    for k in 1..=n {
        let cont = -step_cost + up[k] * w[k + 1] + (1.0 - up[k]) * w[k - 1];
        let action = if cont > stop[k] + cfg.tie_tol {
            Action::Continue
        } else if launch[k] > 0.0 || (launch[k] == 0.0 && launch[k].is_finite()) {
            Action::Launch
        } else {
            Action::Abandon
        };
        actions.push(action);
    }
    // Past an edge where launching is forbidden the ghost value 0 is exact
    // enough; elsewhere an edge that continues means the grid is too short.
    let open_edge = |node: usize, ghost: usize| {
        actions[node] == Action::Continue && launch[ghost] != f64::NEG_INFINITY
    };
    if open_edge(0, 0) || open_edge(n - 1, n + 1) {
        return Err(Error::GridTooSmall(format!(
            "prior {} continues at a grid edge [{}, {}]",
            problem.theta,
            grid.x_min(),
            grid.x_max()
        )));
    }
    Ok(ValueFunction {
        grid: *grid,
        values: w[1..=n].to_vec(),
        actions,
        sweeps,
        residual,
    })
}

// Solves `w_k = -cost + up_k w_{k+1} + (1 - up_k) w_{k-1}` on every maximal
// run of continuing nodes, with the neighbours' current values as boundary data.
fn evaluate_blocks(continuing: &[bool], up: &[f64], step_cost: f64, w: &mut [f64]) {
    let mut k = 0;
    while k < continuing.len() {
        if !continuing[k] {
            k += 1;
            continue;
        }
        let first = k;
        while k < continuing.len() && continuing[k] {
            k += 1;
        }
        let last = k - 1;
        // Thomas algorithm on -(1-up) w_{k-1} + w_k - up w_{k+1} = -cost.
        let m = last - first + 1;
        let mut c_prime = vec![0.0; m];
        let mut d_prime = vec![0.0; m];
        for (idx, node) in (first..=last).enumerate() {
            let lower = -(1.0 - up[node]);
            let upper = -up[node];
            let mut rhs = -step_cost;
            if idx == 0 {
                rhs -= lower * w[node - 1];
            }
            if idx == m - 1 {
                rhs -= upper * w[node + 1];
            }
            let (prev_c, prev_d, sub) = if idx == 0 {
                (0.0, 0.0, 0.0)
            } else {
                (c_prime[idx - 1], d_prime[idx - 1], lower)
            };
            let denom = 1.0 - sub * prev_c;
            c_prime[idx] = if idx == m - 1 { 0.0 } else { upper / denom };
            d_prime[idx] = (rhs - sub * prev_d) / denom;
        }
        let mut next = 0.0;
        for idx in (0..m).rev() {
            let value = d_prime[idx] - c_prime[idx] * next;
            w[first + idx] = value;
            next = value;
        }
    }
}

/// Reads thresholds off a solved value function.
///
/// The action pattern must be `Launch* Continue* Abandon*` in grid order.
/// `launch` is the last launch node (`+inf` if the top node launches) and
/// `abandon` the first abandon node (`-inf` if the bottom node abandons).
pub fn extract_thresholds(vf: &ValueFunction) -> Result<Thresholds> {
    extract_from_actions(&vf.actions, &vf.grid)
}

pub(crate) fn extract_from_actions(actions: &[Action], grid: &SolveGrid) -> Result<Thresholds> {
    let rank = |a: Action| match a {
        Action::Launch => 0,
        Action::Continue => 1,
        Action::Abandon => 2,
    };
    if let Some(w) = actions.windows(2).position(|w| rank(w[0]) > rank(w[1])) {
        return Err(Error::NonIntervalRegion(format!(
            "{:?} at {} followed by {:?} at {}",
            actions[w],
            grid.node(w),
            actions[w + 1],
            grid.node(w + 1)
        )));
    }
    let n = actions.len();
    let last_launch = actions.iter().rposition(|&a| a == Action::Launch);
    let first_abandon = actions.iter().position(|&a| a == Action::Abandon);
    let launch = match last_launch {
        None => f64::NEG_INFINITY,
        Some(i) if i == n - 1 => f64::INFINITY,
        Some(i) => grid.node(i),
    };
    let abandon = match first_abandon {
        None => f64::INFINITY,
        Some(0) => f64::NEG_INFINITY,
        Some(i) => grid.node(i),
    };
    Ok(Thresholds { launch, abandon })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p0() -> ModelParams {
        ModelParams::new(1.0, 0.05, 1.0, 1.2, 0.8, 2.0).unwrap()
    }

    // l > pi so the firm sometimes abandons under the ceiling.
    fn p1() -> ModelParams {
        ModelParams::new(1.0, 0.05, 1.0, 1.2, 1.2, 2.0).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn grid_validation() {
        assert!(SolveGrid::new(-1.0, 1.0, 0.05, 1.0).is_ok());
        assert!(SolveGrid::new(0.0, 1.0, 0.05, 1.0).is_err());
        assert!(SolveGrid::new(-1.0, 1.0, 2.0, 1.0).is_err());
        assert!(SolveGrid::new(-1.0, 1.03, 0.05, 1.0).is_err());
        let g = SolveGrid::new(-1.0, 2.0, 0.05, 1.0).unwrap();
        assert_eq!(g.len(), 61);
        assert_eq!(g.node(g.zero_index()), 0.0);
        assert!(close(g.node(0), -1.0, 1e-12));
        assert_eq!(g.nearest(0.26), Some(g.zero_index() + 5));
        assert_eq!(g.nearest(5.0), None);
    }

    #[test]
    fn default_grid_covers_belief_tails() {
        let g = SolveGrid::for_priors(1.0, &[0.1, 0.9], None).unwrap();
        assert!(posterior(0.1, g.x_max(), 1.0) >= 1.0 - 1e-6);
        assert!(posterior(0.9, g.x_min(), 1.0) <= 1e-6);
    }

    #[test]
    fn firm_value_examples() {
        let params = p0();
        let l = Tariff::uniform_ceiling(&params);
        let pol = ThresholdPolicy::continuation(-1.0, 1.0).unwrap();
        let v = firm_policy_value(FirmType::new(0.0).unwrap(), &pol, &l, &params).unwrap();
        let f_g = (-2f64).exp_m1() / (-4f64).exp_m1();
        let t_g = f_g - (1.0 - f_g);
        assert!(close(v, f_g - 0.05 * t_g, 1e-12));
        assert!(close(v, 0.8427, 1e-4));

        let now = ThresholdPolicy::launch_now(0.0);
        let v0 = firm_policy_value(FirmType::new(0.0).unwrap(), &now, &l, &params).unwrap();
        assert_eq!(v0, 1.0);
        assert!(v0 > v);
        let v1 = firm_policy_value(FirmType::new(1.0).unwrap(), &now, &l, &params).unwrap();
        assert!(close(v1, 0.2, 1e-12));
    }

    #[test]
    fn regulator_value_examples() {
        let params = p0();
        let pol = ThresholdPolicy::continuation(-1.0, 1.0).unwrap();
        let v = regulator_policy_value(FirmType::new(0.0).unwrap(), &pol, &params).unwrap();
        assert!(close(v, 1.0189, 1e-4));
        let v = regulator_policy_value(FirmType::new(1.0).unwrap(), &ThresholdPolicy::abandon_now(0.0), &params)
            .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn launch_payoff_decomposition() {
        let params = p0();
        let l = Tariff::uniform_ceiling(&params);
        for &theta in &[0.1, 0.5, 0.8] {
            let u = firm_launch_payoff(theta, &l, &params);
            let v = regulator_launch_payoff(theta, &params);
            for &x in &[-2.0, -0.3, 0.0, 0.7, 3.0] {
                let lhs = v(x);
                let rhs = params.damage() / params.l() * (u(x) - params.k());
                assert!(close(lhs, rhs, 1e-12), "theta={theta} x={x}");
            }
        }
    }

    #[test]
    fn zero_tariff_launches_immediately() {
        let params = p0();
        let zero = Tariff::constant(0.0, params.l()).unwrap();
        let grid = SolveGrid::for_priors(1.0, &[0.5], None).unwrap();
        let cfg = SolverConfig::for_params(&params);
        let u = firm_launch_payoff(0.5, &zero, &params);
        let problem = StoppingProblem { theta: 0.5, sigma: 1.0, cost: 0.05, launch_payoff: &u };
        let best = best_threshold_policy(&problem, 0.0, &grid, &cfg).unwrap();
        assert_eq!(best.policy.kind(), PolicyKind::LaunchNow);
        assert_eq!(best.value, 1.0);

        let vf = solve_general(FirmType::new(0.5).unwrap(), &zero, &params, &grid, &cfg).unwrap();
        assert!(vf.actions.iter().all(|&a| a == Action::Launch));
        let th = extract_thresholds(&vf).unwrap();
        assert_eq!(th.launch, f64::INFINITY);
    }

    #[test]
    fn ceiling_below_profit_never_pays_for_information() {
        // With l < pi launching always beats abandoning, so evidence has no value.
        let params = p0();
        let l = Tariff::uniform_ceiling(&params);
        let grid = SolveGrid::for_priors(1.0, &[0.5], None).unwrap();
        let cfg = SolverConfig::for_params(&params);
        let u = firm_launch_payoff(0.5, &l, &params);
        let problem = StoppingProblem { theta: 0.5, sigma: 1.0, cost: 0.05, launch_payoff: &u };
        let best = best_threshold_policy(&problem, 0.0, &grid, &cfg).unwrap();
        assert_eq!(best.policy.kind(), PolicyKind::LaunchNow);
        assert!(close(best.value, 0.6, 1e-12));
    }

    #[test]
    fn ceiling_above_profit_gives_interior_pair() {
        let params = p1();
        let l = Tariff::uniform_ceiling(&params);
        let grid = SolveGrid::for_priors(1.0, &[0.5], None).unwrap();
        let cfg = SolverConfig::for_params(&params);
        let u = firm_launch_payoff(0.5, &l, &params);
        let problem = StoppingProblem { theta: 0.5, sigma: 1.0, cost: 0.05, launch_payoff: &u };
        let best = best_threshold_policy(&problem, 0.0, &grid, &cfg).unwrap();
        let pol = best.policy;
        assert_eq!(pol.kind(), PolicyKind::Continue);
        assert!(pol.launch_at < 0.0 && 0.0 < pol.abandon_at);
        assert!(best.value > u(0.0).max(0.0));
        assert!(best.value >= best.lattice_value);
        // The refined value agrees with a direct evaluation.
        let direct = firm_policy_value(FirmType::new(0.5).unwrap(), &pol, &l, &params).unwrap();
        assert!(close(direct, best.value, 1e-12));
    }

    #[test]
    fn value_iteration_matches_closed_form_on_lattice() {
        let params = p1();
        let l = Tariff::uniform_ceiling(&params);
        let grid = SolveGrid::for_priors(1.0, &[0.5], None).unwrap();
        let cfg = SolverConfig::for_params(&params);
        let theta = FirmType::new(0.5).unwrap();
        let vf = solve_general(theta, &l, &params, &grid, &cfg).unwrap();
        let th = extract_thresholds(&vf).unwrap();

        let u = firm_launch_payoff(0.5, &l, &params);
        let problem = StoppingProblem { theta: 0.5, sigma: 1.0, cost: 0.05, launch_payoff: &u };
        let best = best_threshold_policy(&problem, 0.0, &grid, &cfg).unwrap();
        assert!(close(vf.value_at(0.0).unwrap(), best.lattice_value, 1e-10));
        assert!(close(th.launch, best.lattice_policy.launch_at, 1e-9));
        assert!(close(th.abandon, best.lattice_policy.abandon_at, 1e-9));
    }

    #[test]
    fn extract_patterns() {
        use Action::*;
        let grid = SolveGrid::new(-0.3, 0.3, 0.1, 1.0).unwrap();
        let th = extract_from_actions(&[Launch, Launch, Continue, Continue, Continue, Abandon, Abandon], &grid).unwrap();
        assert!(close(th.launch, -0.2, 1e-12));
        assert!(close(th.abandon, 0.2, 1e-12));

        let bad = extract_from_actions(&[Launch, Continue, Abandon, Continue, Abandon, Abandon, Abandon], &grid);
        assert!(matches!(bad, Err(Error::NonIntervalRegion(_))));

        let all = extract_from_actions(&[Launch; 7], &grid).unwrap();
        assert_eq!(all.launch, f64::INFINITY);
        assert_eq!(all.policy_from(0.0).kind(), PolicyKind::LaunchNow);

        let none = extract_from_actions(&[Abandon; 7], &grid).unwrap();
        assert_eq!(none.abandon, f64::NEG_INFINITY);
        assert_eq!(none.policy_from(0.0).kind(), PolicyKind::AbandonNow);
    }

    #[test]
    fn grid_edge_continuation_is_reported() {
        // A deep subsidy just past the bottom edge makes the edge node want to continue.
        let params = p1();
        let t = Tariff::new(vec![-0.5], vec![-5.0], vec![], 1.2, 1.2).unwrap();
        let grid = SolveGrid::new(-0.45, 1.0, 0.05, 1.0).unwrap();
        let cfg = SolverConfig::for_params(&params);
        let r = solve_general(FirmType::new(0.5).unwrap(), &t, &params, &grid, &cfg);
        assert!(matches!(r, Err(Error::GridTooSmall(_))));
    }

    #[test]
    fn overrides_snap_to_nodes() {
        let grid = SolveGrid::new(-1.0, 1.0, 0.05, 1.0).unwrap();
        let t = Tariff::new(vec![], vec![], vec![(-0.5, 0.2)], 1.2, 1.2).unwrap();
        let gt = GridTariff::sample(&t, &grid).unwrap();
        let node = grid.node(grid.nearest(-0.5).unwrap());
        assert_eq!(gt.eval(node), 0.2);
        assert_eq!(gt.eval(node - 0.05), 1.2);
        let clash = Tariff::new(vec![], vec![], vec![(-0.5, 0.2), (-0.49, 0.3)], 1.2, 1.2).unwrap();
        assert!(GridTariff::sample(&clash, &grid).is_err());
    }
}
