//! Closed-form belief and first-passage analytics for the evidence process
//! `X_t = (2y - 1) t + sigma B_t`.
//!
//! Hitting probabilities come from the scale function
//! `s(z) = exp(-2 mu z / sigma^2)`, and expected exit times from optional
//! sampling applied to `X` itself: `E[X_tau] - x = mu E[tau]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FirmType, ThresholdPolicy};

/// The product's true state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProductState {
    /// `y = 0`, evidence drifts down.
    Safe,
    /// `y = 1`, evidence drifts up.
    Damaging,
}

impl ProductState {
    pub fn drift(self) -> f64 {
        match self {
            ProductState::Safe => -1.0,
            ProductState::Damaging => 1.0,
        }
    }

    pub fn from_y(y: u8) -> Result<Self> {
        match y {
            0 => Ok(ProductState::Safe),
            1 => Ok(ProductState::Damaging),
            other => Err(Error::Domain(format!("product state must be 0 or 1, got {other}"))),
        }
    }

    pub fn y(self) -> u8 {
        match self {
            ProductState::Safe => 0,
            ProductState::Damaging => 1,
        }
    }
}

/// Conditional exit statistics of a continuation interval.
///
/// `f_*` is the probability of reaching the launch (lower) boundary first and
/// `t_*` the expected exit time; `g` is conditional on a safe product and
/// `b` on a damaging one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitStats {
    pub f_g: f64,
    pub f_b: f64,
    pub t_g: f64,
    pub t_b: f64,
}

/// Posterior probability of damage after observing evidence `x`.
pub fn posterior(theta: f64, x: f64, sigma: f64) -> f64 {
    if theta <= 0.0 || theta >= 1.0 || x == 0.0 {
        return theta;
    }
    let w = logit(theta) + 2.0 * x / (sigma * sigma);
    logistic(w)
}

/// Evidence level at which a prior `theta` turns into belief `p`.
pub fn evidence_for_belief(theta: f64, p: f64, sigma: f64) -> f64 {
    0.5 * sigma * sigma * (logit(p) - logit(theta))
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn logistic(w: f64) -> f64 {
    if w >= 0.0 {
        1.0 / (1.0 + (-w).exp())
    } else {
        let e = w.exp();
        e / (1.0 + e)
    }
}

fn check_interval(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("volatility must be positive, got {sigma}")));
    }
    if mu == 0.0 || !mu.is_finite() {
        return Err(Error::Domain(format!("drift must be finite and nonzero, got {mu}")));
    }
    if !(a.is_finite() && a < x && x < b) || x.is_nan() || b.is_nan() {
        return Err(Error::Domain(format!(
            "start {x} must lie strictly inside ({a}, {b})"
        )));
    }
    Ok(())
}

/// Probability that the process started at `x` with drift `mu` reaches `a`
/// before `b`. `b` may be `+inf`.
pub fn hit_lower_prob(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_interval(x, a, b, mu, sigma)?;
    Ok(hit_lower_unchecked(x, a, b, mu, sigma))
}

pub(crate) fn hit_lower_unchecked(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> f64 {
    let kappa = 2.0 * mu / (sigma * sigma);
    if b == f64::INFINITY {
        return if kappa > 0.0 {
            (-kappa * (x - a)).exp()
        } else {
            1.0
        };
    }
    // Both branches keep every exponent non-positive.
    if kappa > 0.0 {
        (-kappa * (x - a)).exp() * (-kappa * (b - x)).exp_m1() / (-kappa * (b - a)).exp_m1()
    } else {
        (kappa * (b - x)).exp_m1() / (kappa * (b - a)).exp_m1()
    }
}

/// Expected time for the process started at `x` with drift `mu` to leave
/// `(a, b)`. Infinite when `b = +inf` and the drift points away from `a`.
pub fn expected_exit_time(x: f64, a: f64, b: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_interval(x, a, b, mu, sigma)?;
    let f = hit_lower_unchecked(x, a, b, mu, sigma);
    Ok(exit_time_from_prob(x, a, b, mu, f))
}

pub(crate) fn exit_time_from_prob(x: f64, a: f64, b: f64, mu: f64, f: f64) -> f64 {
    if b == f64::INFINITY {
        return if mu < 0.0 { (x - a) / -mu } else { f64::INFINITY };
    }
    // E[X_tau] - x = (a - x) f + (b - x)(1 - f); clamp rounding noise.
    (((a - x) * f + (b - x) * (1.0 - f)) / mu).max(0.0)
}

/// Exit statistics of a non-degenerate threshold policy.
///
/// The prior does not enter: the statistics are conditional on the product state.
pub fn exit_stats(_theta: FirmType, policy: &ThresholdPolicy, sigma: f64) -> Result<ExitStats> {
    if policy.is_degenerate() {
        return Err(Error::Domain("exit statistics need a continuation interval".into()));
    }
    exit_stats_between(policy.start, policy.launch_at, policy.abandon_at, sigma)
}

pub(crate) fn exit_stats_between(x: f64, a: f64, b: f64, sigma: f64) -> Result<ExitStats> {
    let f_g = hit_lower_prob(x, a, b, -1.0, sigma)?;
    let f_b = hit_lower_prob(x, a, b, 1.0, sigma)?;
    Ok(ExitStats {
        f_g,
        f_b,
        t_g: exit_time_from_prob(x, a, b, -1.0, f_g),
        t_b: exit_time_from_prob(x, a, b, 1.0, f_b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn posterior_examples() {
        assert_eq!(posterior(0.5, 0.0, 1.0), 0.5);
        assert_eq!(posterior(0.3, 0.0, 2.0), 0.3);
        assert!(close(posterior(0.5, 3f64.ln() / 2.0, 1.0), 0.75, 1e-14));
        assert_eq!(posterior(1.0, -5.0, 1.0), 1.0);
        assert_eq!(posterior(0.0, 5.0, 1.0), 0.0);
    }

    #[test]
    fn posterior_saturates_without_nan() {
        let p = posterior(0.5, 1e4, 0.1);
        assert!(p <= 1.0 && p > 0.999);
        let p = posterior(0.5, -1e4, 0.1);
        assert!((0.0..1e-10).contains(&p));
    }

    #[test]
    fn evidence_for_belief_inverts_posterior() {
        let x = evidence_for_belief(0.2, 0.9, 1.3);
        assert!(close(posterior(0.2, x, 1.3), 0.9, 1e-12));
    }

    // (1 - e^-2) / (e^2 - e^-2) from the scale function.
    #[test]
    fn hit_lower_symmetric_interval() {
        let expected = (1.0 - (-2f64).exp()) / (2f64.exp() - (-2f64).exp());
        let up = hit_lower_prob(0.0, -1.0, 1.0, 1.0, 1.0).unwrap();
        let down = hit_lower_prob(0.0, -1.0, 1.0, -1.0, 1.0).unwrap();
        assert!(close(up, expected, 1e-15));
        assert!(close(up, 0.1192, 1e-4));
        assert!(close(down, 0.8808, 1e-4));
        assert!(close(up + down, 1.0, 1e-14));
    }

    #[test]
    fn hit_lower_boundary_continuity() {
        let near = hit_lower_prob(-1.0 + 1e-9, -1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(close(near, 1.0, 1e-8));
        let near = hit_lower_prob(1.0 - 1e-9, -1.0, 1.0, -1.0, 1.0).unwrap();
        assert!(close(near, 0.0, 1e-8));
    }

    #[test]
    fn hit_lower_extreme_kappa_is_finite() {
        let f = hit_lower_prob(0.0, -50.0, 50.0, 1.0, 0.2).unwrap();
        assert!(f.is_finite() && f >= 0.0);
        let f = hit_lower_prob(0.0, -50.0, 50.0, -1.0, 0.2).unwrap();
        assert!(close(f, 1.0, 1e-12));
    }

    #[test]
    fn outside_interval_is_domain_error() {
        assert!(matches!(hit_lower_prob(1.5, -1.0, 1.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(hit_lower_prob(-1.0, -1.0, 1.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(expected_exit_time(0.0, -1.0, 1.0, 0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn exit_time_symmetric_interval() {
        let t_b = expected_exit_time(0.0, -1.0, 1.0, 1.0, 1.0).unwrap();
        let t_g = expected_exit_time(0.0, -1.0, 1.0, -1.0, 1.0).unwrap();
        let f_b = hit_lower_prob(0.0, -1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(close(t_b, -f_b + (1.0 - f_b), 1e-14));
        assert!(close(t_b, 0.7616, 1e-4));
        assert!(close(t_g, t_b, 1e-14));
    }

    #[test]
    fn lower_half_start_takes_longer_when_damaging() {
        let t_b = expected_exit_time(-0.9, -1.0, 1.0, 1.0, 1.0).unwrap();
        let t_g = expected_exit_time(-0.9, -1.0, 1.0, -1.0, 1.0).unwrap();
        assert!(t_b > t_g);
    }

    #[test]
    fn unbounded_upper_boundary() {
        let f = hit_lower_prob(0.0, -1.0, f64::INFINITY, -1.0, 1.0).unwrap();
        assert_eq!(f, 1.0);
        let t = expected_exit_time(0.0, -1.0, f64::INFINITY, -1.0, 1.0).unwrap();
        assert!(close(t, 1.0, 1e-15));
        let f = hit_lower_prob(0.0, -1.0, f64::INFINITY, 1.0, 1.0).unwrap();
        assert!(close(f, (-2f64).exp(), 1e-15));
        let t = expected_exit_time(0.0, -1.0, f64::INFINITY, 1.0, 1.0).unwrap();
        assert!(t.is_infinite());
    }

    #[test]
    fn exit_stats_bundle() {
        let policy = ThresholdPolicy::continuation(-1.0, 1.0).unwrap();
        let s = exit_stats(FirmType::new(0.4).unwrap(), &policy, 1.0).unwrap();
        assert!(close(s.f_g, 0.8808, 1e-4));
        assert!(close(s.f_b, 0.1192, 1e-4));
        assert!(close(s.t_g, 0.7616, 1e-4));
        assert!(close(s.t_b, 0.7616, 1e-4));
        assert!(close(s.f_g + s.f_b, 1.0, 1e-14));

        let lower = ThresholdPolicy::new(-1.0, 1.0, -0.5).unwrap();
        let s = exit_stats(FirmType::new(0.4).unwrap(), &lower, 1.0).unwrap();
        assert!(s.f_g + s.f_b > 1.0);

        assert!(exit_stats(FirmType::new(0.4).unwrap(), &ThresholdPolicy::launch_now(0.0), 1.0).is_err());
    }
}
