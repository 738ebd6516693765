//! Damage-independent launch fees and a menu under which the known-safe
//! firm launches with less evidence than the known-damaging one.
//!
//! Types here know their product state, so beliefs never move and the
//! payoff of launching at `x` with fee `eta` is `pi - eta` in either state.

use serde::Serialize;

use crate::diffusion::{exit_stats_between, ProductState};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ThresholdPolicy};
use crate::solver::{best_abandon_for_launch, policy_value, SolveGrid, SolverConfig, StoppingProblem};

/// Launch threshold and fee offered to one known state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeeItem {
    pub launch_at: f64,
    pub fee: f64,
}

/// Two-item fee menu: one item for the known-safe firm, one for the
/// known-damaging firm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeeMenu {
    pub safe: FeeItem,
    pub damaging: FeeItem,
}

impl FeeMenu {
    /// The safe firm's threshold is strictly below the damaging firm's.
    pub fn reverses_monotonicity(&self) -> bool {
        self.safe.launch_at < self.damaging.launch_at
    }
}

fn check_fee(eta: f64, params: &ModelParams) -> Result<()> {
    if !eta.is_finite() || eta > params.l() {
        return Err(Error::PreconditionViolated(format!(
            "fee {eta} must be finite and at most the cap {}",
            params.l()
        )));
    }
    Ok(())
}

fn state_prior(y: ProductState) -> f64 {
    f64::from(y.y())
}

/// `f^y (pi - eta) - c T^y` for a firm that knows its product state.
pub fn fee_policy_value(
    y: ProductState,
    policy: &ThresholdPolicy,
    eta: f64,
    params: &ModelParams,
) -> Result<f64> {
    check_fee(eta, params)?;
    let surplus = params.pi() - eta;
    let payoff = move |_: f64| surplus;
    let problem = StoppingProblem {
        theta: state_prior(y),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    policy_value(&problem, policy)
}

/// Best abandon level for a known state forced to launch at `launch_at`,
/// starting from `start`. Returns immediate abandonment (value 0) when no
/// abandon level above the start yields a positive payoff.
pub fn best_abandon_given_launch(
    y: ProductState,
    launch_at: f64,
    start: f64,
    eta: f64,
    params: &ModelParams,
    grid: &SolveGrid,
) -> Result<(ThresholdPolicy, f64)> {
    check_fee(eta, params)?;
    let surplus = params.pi() - eta;
    let payoff = move |_: f64| surplus;
    let problem = StoppingProblem {
        theta: state_prior(y),
        sigma: params.sigma(),
        cost: params.c(),
        launch_payoff: &payoff,
    };
    let (b, v) = best_abandon_for_launch(&problem, start, launch_at, grid)?;
    if v > 0.0 {
        Ok((ThresholdPolicy::new(launch_at, b, start)?, v))
    } else {
        Ok((ThresholdPolicy::abandon_now(start), 0.0))
    }
}

/// Payoffs of the same launch/abandon strategy for the two known states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MimicGap {
    pub safe_payoff: f64,
    pub damaging_payoff: f64,
    /// `safe_payoff - damaging_payoff`.
    pub gap: f64,
    /// `(f^g - f^b)(pi - eta) + c (T^b - T^g)`, the same gap regrouped.
    pub decomposition: f64,
}

/// Payoff advantage of the safe state over the damaging one when both
/// launch at `launch_at` and abandon at `abandon_at`, starting from `x` in
/// the lower half of the interval (the midpoint included).
pub fn mimic_payoff_gap(
    launch_at: f64,
    abandon_at: f64,
    eta: f64,
    x: f64,
    params: &ModelParams,
) -> Result<MimicGap> {
    if !(launch_at < x && x <= 0.5 * (launch_at + abandon_at) && abandon_at.is_finite()) {
        return Err(Error::Domain(format!(
            "start {x} must lie in the lower half of ({launch_at}, {abandon_at})"
        )));
    }
    if !(eta < params.pi()) {
        return Err(Error::Domain(format!(
            "fee {eta} must be below the profit {}",
            params.pi()
        )));
    }
    let st = exit_stats_between(x, launch_at, abandon_at, params.sigma())?;
    let (pi, c) = (params.pi(), params.c());
    let safe_payoff = st.f_g * (pi - eta) - c * st.t_g;
    let damaging_payoff = st.f_b * (pi - eta) - c * st.t_b;
    Ok(MimicGap {
        safe_payoff,
        damaging_payoff,
        gap: safe_payoff - damaging_payoff,
        decomposition: (st.f_g - st.f_b) * (pi - eta) + c * (st.t_b - st.t_g),
    })
}

/// One candidate tried while searching for the damaging firm's item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchTrial {
    pub launch_at: f64,
    pub fee: f64,
    #[serde(serialize_with = "crate::report::serialize_extended_f64")]
    pub abandon_at: f64,
    pub value: f64,
    pub accepted: bool,
}

/// How the damaging firm's preference for its own item was established.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum DamagingCase {
    /// Facing the safe item, the damaging firm abandons at once.
    ImmediateAbandon,
    /// It would continue; the safe firm does strictly better with the same
    /// strategy from the damaging item's threshold.
    Mimic { abandon_at: f64, gap: MimicGap },
}

/// Incentive-compatibility certificate for a fee menu, from evidence 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeeCertificate {
    pub menu: FeeMenu,
    /// Damaging firm's abandon level under its own item.
    pub damaging_abandon: f64,
    /// Safe firm's payoffs from its own and the other item.
    pub safe_own: f64,
    pub safe_other: f64,
    /// `safe_own - safe_other`, in `[0, tol_v)`.
    pub indifference_residual: f64,
    /// Damaging firm's payoffs from its own and the other item.
    pub damaging_own: f64,
    pub damaging_other: f64,
    /// `damaging_own - damaging_other`, strictly positive.
    pub strict_margin: f64,
    pub damaging_case: DamagingCase,
    pub trace: Vec<SearchTrial>,
}

// Best payoff of a known state from evidence 0 under one item, including
// abandoning at once.
fn item_value(
    y: ProductState,
    item: &FeeItem,
    params: &ModelParams,
    grid: &SolveGrid,
) -> Result<(ThresholdPolicy, f64)> {
    if item.launch_at >= 0.0 {
        let v = params.pi() - item.fee;
        return Ok(if v > 0.0 {
            (ThresholdPolicy::launch_now(0.0), v)
        } else {
            (ThresholdPolicy::abandon_now(0.0), 0.0)
        });
    }
    best_abandon_given_launch(y, item.launch_at, 0.0, item.fee, params, grid)
}

const MAX_HALVINGS: usize = 20;

/// Builds a two-item menu where the known-safe firm launches at a lower
/// evidence level than the known-damaging firm, and certifies that each
/// firm prefers its own item when starting from evidence 0.
///
/// The damaging item's threshold is searched over `-d, -d/2, ...` with
/// `d = sigma^2 / 4`, trying fees `pi/2` then `0`; the first candidate whose
/// best abandon level exceeds the threshold's distance from 0 with a
/// positive payoff is kept. The safe item sits at 1.5 times that threshold,
/// with its fee bisected to make the safe firm indifferent.
pub fn construct_violation_menu(
    params: &ModelParams,
    grid: &SolveGrid,
    cfg: &SolverConfig,
) -> Result<FeeCertificate> {
    if !(params.l() > params.pi()) {
        return Err(Error::PreconditionViolated(format!(
            "fee deterrence needs l > pi, got l={} and pi={}",
            params.l(),
            params.pi()
        )));
    }
    let (pi, sigma) = (params.pi(), params.sigma());
    let mut trace = Vec::new();

    // Step 1: the damaging firm's item.
    let mut found = None;
    let mut x1 = -0.25 * sigma * sigma;
    'search: for _ in 0..MAX_HALVINGS {
        for fee in [0.5 * pi, 0.0] {
            let (policy, value) =
                best_abandon_given_launch(ProductState::Damaging, x1, 0.0, fee, params, grid)?;
            let accepted = value > 0.0 && policy.abandon_at.is_finite() && policy.abandon_at > -x1;
            trace.push(SearchTrial {
                launch_at: x1,
                fee,
                abandon_at: policy.abandon_at,
                value,
                accepted,
            });
            if accepted {
                found = Some((FeeItem { launch_at: x1, fee }, policy.abandon_at, value));
                break 'search;
            }
        }
        x1 *= 0.5;
    }
    let (damaging, damaging_abandon, damaging_own) = found.ok_or_else(|| Error::ConstructionFailed {
        step: 1,
        reason: format!(
            "no threshold down to {x1} gives the damaging firm a positive payoff with a far abandon level"
        ),
    })?;

    // Step 2: the safe firm's item, made indifferent by bisection on its fee.
    let x0 = 1.5 * damaging.launch_at;
    let (_, safe_other) = item_value(ProductState::Safe, &damaging, params, grid)?;
    let safe_gain = |fee: f64| -> Result<f64> {
        let (_, v) = item_value(ProductState::Safe, &FeeItem { launch_at: x0, fee }, params, grid)?;
        Ok(v - safe_other)
    };
    let (mut lo, mut hi) = (params.subsidy_floor(), damaging.fee);
    if !(safe_gain(lo)? > 0.0 && safe_gain(hi)? < 0.0) {
        return Err(Error::ConstructionFailed {
            step: 2,
            reason: "safe firm's indifference fee is not bracketed".into(),
        });
    }
    let mut gain_lo = safe_gain(lo)?;
    for _ in 0..200 {
        if gain_lo < cfg.tol_v {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let g = safe_gain(mid)?;
        if g >= 0.0 {
            lo = mid;
            gain_lo = g;
        } else {
            hi = mid;
        }
    }
    if !(gain_lo >= 0.0 && gain_lo < cfg.tol_v) {
        return Err(Error::ConstructionFailed {
            step: 2,
            reason: format!("indifference residual {gain_lo} did not fall below {}", cfg.tol_v),
        });
    }
    let safe = FeeItem { launch_at: x0, fee: lo };
    let menu = FeeMenu { safe, damaging };

    // Step 3: the damaging firm strictly prefers its own item.
    let (deviation, damaging_other) = item_value(ProductState::Damaging, &safe, params, grid)?;
    let damaging_case = if deviation.is_degenerate() {
        DamagingCase::ImmediateAbandon
    } else {
        let gap = mimic_payoff_gap(x0, deviation.abandon_at, safe.fee, damaging.launch_at, params)
            .map_err(|e| Error::ConstructionFailed {
                step: 3,
                reason: e.to_string(),
            })?;
        if !(gap.gap > 0.0) {
            return Err(Error::ConstructionFailed {
                step: 3,
                reason: format!("mimicking gap {} is not positive", gap.gap),
            });
        }
        DamagingCase::Mimic {
            abandon_at: deviation.abandon_at,
            gap,
        }
    };
    let strict_margin = damaging_own - damaging_other;
    if !(strict_margin > 0.0) || !menu.reverses_monotonicity() {
        return Err(Error::ConstructionFailed {
            step: 3,
            reason: format!("damaging firm's preference margin {strict_margin} is not positive"),
        });
    }
    Ok(FeeCertificate {
        menu,
        damaging_abandon,
        safe_own: safe_other + gain_lo,
        safe_other,
        indifference_residual: gain_lo,
        damaging_own,
        damaging_other,
        strict_margin,
        damaging_case,
        trace,
    })
}
