//! Model primitives: economic parameters, priors, tariffs, threshold
//! policies and direct mechanisms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two evidence levels closer than this are treated as the same point.
/// Used for tariff point overrides and for comparing menu thresholds.
pub const POINT_TOL: f64 = 1e-9;

/// Unvalidated parameter tuple, as read from a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub sigma: f64,
    pub c: f64,
    pub pi: f64,
    pub beta: f64,
    pub l: f64,
    #[serde(rename = "L")]
    pub damage: f64,
}

/// Validated model parameters.
///
/// Holds the signal volatility, the information cost rate, the firm's launch
/// profit, the social launch benefit, the liability cap and the social
/// damage. Construction goes through [`ModelParams::validate`], which
/// enforces positivity, `l < L` and the ordered cost-benefit ratios
/// `l / pi < L / beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    sigma: f64,
    c: f64,
    pi: f64,
    beta: f64,
    l: f64,
    #[serde(rename = "L")]
    damage: f64,
    k: f64,
}

impl ModelParams {
    pub fn validate(raw: RawParams) -> Result<Self> {
        for (name, value) in [
            ("sigma", raw.sigma),
            ("c", raw.c),
            ("pi", raw.pi),
            ("beta", raw.beta),
            ("l", raw.l),
            ("L", raw.damage),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveParam { name, value });
            }
        }
        if raw.l >= raw.damage {
            return Err(Error::CapViolation {
                l: raw.l,
                damage: raw.damage,
            });
        }
        // Cross-multiplied form of l/pi < L/beta.
        if raw.l * raw.beta >= raw.damage * raw.pi {
            return Err(Error::AssumptionViolation {
                firm_ratio: raw.l / raw.pi,
                social_ratio: raw.damage / raw.beta,
            });
        }
        let k = raw.pi - raw.beta * raw.l / raw.damage;
        if !(k > 0.0) {
            return Err(Error::AssumptionViolation {
                firm_ratio: raw.l / raw.pi,
                social_ratio: raw.damage / raw.beta,
            });
        }
        Ok(Self {
            sigma: raw.sigma,
            c: raw.c,
            pi: raw.pi,
            beta: raw.beta,
            l: raw.l,
            damage: raw.damage,
            k,
        })
    }

    pub fn new(sigma: f64, c: f64, pi: f64, beta: f64, l: f64, damage: f64) -> Result<Self> {
        Self::validate(RawParams {
            sigma,
            c,
            pi,
            beta,
            l,
            damage,
        })
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            sigma: self.sigma,
            c: self.c,
            pi: self.pi,
            beta: self.beta,
            l: self.l,
            damage: self.damage,
        }
    }

    /// Signal volatility.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    /// Running cost of information acquisition.
    pub fn c(&self) -> f64 {
        self.c
    }
    /// Firm profit from launching a safe product.
    pub fn pi(&self) -> f64 {
        self.pi
    }
    /// Social benefit from launching a safe product.
    pub fn beta(&self) -> f64 {
        self.beta
    }
    /// Liability cap.
    pub fn l(&self) -> f64 {
        self.l
    }
    /// Social damage.
    pub fn damage(&self) -> f64 {
        self.damage
    }
    /// `pi - beta * l / L`, strictly positive for valid parameters.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// Lower bound on subsidies used to bracket penalty searches.
    pub fn subsidy_floor(&self) -> f64 {
        -10.0 * self.pi
    }

    /// Copy with a different running cost.
    pub fn with_cost(&self, c: f64) -> Result<Self> {
        Self::validate(RawParams { c, ..self.raw() })
    }
}

/// A firm's prior probability that its product is damaging.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FirmType(f64);

impl FirmType {
    pub fn new(theta: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&theta) {
            Ok(Self(theta))
        } else {
            Err(Error::InvalidPrior(theta))
        }
    }

    pub fn theta(self) -> f64 {
        self.0
    }

    pub fn is_degenerate(self) -> bool {
        self.0 == 0.0 || self.0 == 1.0
    }
}

impl TryFrom<f64> for FirmType {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<FirmType> for f64 {
    fn from(t: FirmType) -> f64 {
        t.0
    }
}

/// Piecewise-constant penalty schedule with isolated point overrides.
///
/// With breakpoints `b_0 < ... < b_{m-1}`, `segment_values[0]` applies on
/// `(-inf, b_0]`, `segment_values[i]` on `(b_{i-1}, b_i]`, and
/// `default_value` on `(b_{m-1}, inf)`. Point overrides win over segments.
/// Every stored value is at most the liability cap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tariff {
    breakpoints: Vec<f64>,
    segment_values: Vec<f64>,
    point_overrides: Vec<(f64, f64)>,
    default_value: f64,
    cap: f64,
}

impl Tariff {
    pub fn new(
        breakpoints: Vec<f64>,
        segment_values: Vec<f64>,
        mut point_overrides: Vec<(f64, f64)>,
        default_value: f64,
        cap: f64,
    ) -> Result<Self> {
        if !cap.is_finite() {
            return Err(Error::InvalidTariff(format!("cap {cap} is not finite")));
        }
        if breakpoints.len() != segment_values.len() {
            return Err(Error::InvalidTariff(format!(
                "{} breakpoints but {} segment values",
                breakpoints.len(),
                segment_values.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidTariff("non-finite breakpoint".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidTariff(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        point_overrides.sort_by(|a, b| a.0.total_cmp(&b.0));
        if point_overrides.iter().any(|(x, _)| !x.is_finite()) {
            return Err(Error::InvalidTariff("non-finite override location".into()));
        }
        if point_overrides
            .windows(2)
            .any(|w| w[1].0 - w[0].0 <= POINT_TOL)
        {
            return Err(Error::InvalidTariff(
                "override locations must be distinct".into(),
            ));
        }
        let values = segment_values
            .iter()
            .chain(point_overrides.iter().map(|(_, v)| v))
            .chain(std::iter::once(&default_value));
        for &v in values {
            if !v.is_finite() {
                return Err(Error::InvalidTariff(format!("non-finite penalty {v}")));
            }
            if v > cap {
                return Err(Error::InvalidTariff(format!(
                    "penalty {v} exceeds the liability cap {cap}"
                )));
            }
        }
        Ok(Self {
            breakpoints,
            segment_values,
            point_overrides,
            default_value,
            cap,
        })
    }

    /// `psi(x) = level` everywhere.
    pub fn constant(level: f64, cap: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), Vec::new(), level, cap)
    }

    /// The uniform ceiling tariff `psi = l`.
    pub fn uniform_ceiling(params: &ModelParams) -> Self {
        Self::constant(params.l(), params.l()).expect("cap is a valid level")
    }

    pub fn eval(&self, x: f64) -> f64 {
        if let Some(v) = self.override_at(x) {
            return v;
        }
        let idx = self.breakpoints.partition_point(|&b| b < x);
        self.segment_values
            .get(idx)
            .copied()
            .unwrap_or(self.default_value)
    }

    fn override_at(&self, x: f64) -> Option<f64> {
        let idx = self
            .point_overrides
            .partition_point(|(p, _)| *p < x - POINT_TOL);
        self.point_overrides
            .get(idx)
            .filter(|(p, _)| (p - x).abs() <= POINT_TOL)
            .map(|(_, v)| *v)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }
    pub fn segment_values(&self) -> &[f64] {
        &self.segment_values
    }
    pub fn point_overrides(&self) -> &[(f64, f64)] {
        &self.point_overrides
    }
    pub fn default_value(&self) -> f64 {
        self.default_value
    }
    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn is_constant(&self) -> bool {
        self.point_overrides.is_empty()
            && self.segment_values.iter().all(|&v| v == self.default_value)
    }

    /// Smallest value the tariff takes anywhere.
    pub fn min_value(&self) -> f64 {
        self.segment_values
            .iter()
            .chain(self.point_overrides.iter().map(|(_, v)| v))
            .fold(self.default_value, |m, &v| m.min(v))
    }

    /// Largest value the tariff takes anywhere.
    pub fn max_value(&self) -> f64 {
        self.segment_values
            .iter()
            .chain(self.point_overrides.iter().map(|(_, v)| v))
            .fold(self.default_value, |m, &v| m.max(v))
    }

    /// Whether `x -> psi(x)` is non-decreasing, overrides included.
    pub fn is_non_decreasing(&self) -> bool {
        let mut levels: Vec<f64> = self.segment_values.clone();
        levels.push(self.default_value);
        if levels.windows(2).any(|w| w[0] > w[1]) {
            return false;
        }
        // An override must sit between the left and right limits at its point.
        self.point_overrides.iter().all(|&(x, v)| {
            let left = self.eval_without_overrides(x - 2.0 * POINT_TOL);
            let right = self.eval_without_overrides(x + 2.0 * POINT_TOL);
            left <= v && v <= right
        })
    }

    fn eval_without_overrides(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b < x);
        self.segment_values
            .get(idx)
            .copied()
            .unwrap_or(self.default_value)
    }
}

/// Launch below `launch_at`, abandon above `abandon_at`, starting at `start`.
///
/// `launch_at == start` means launch immediately; `abandon_at == start`
/// means abandon immediately. `abandon_at` may be `+inf` (never abandon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdPolicy {
    pub launch_at: f64,
    pub abandon_at: f64,
    pub start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    LaunchNow,
    AbandonNow,
    Continue,
}

impl ThresholdPolicy {
    pub fn new(launch_at: f64, abandon_at: f64, start: f64) -> Result<Self> {
        if launch_at.is_nan() || abandon_at.is_nan() || !start.is_finite() {
            return Err(Error::InvalidPolicy("NaN or non-finite start".into()));
        }
        if !(launch_at <= start && start <= abandon_at) {
            return Err(Error::InvalidPolicy(format!(
                "need launch {launch_at} <= start {start} <= abandon {abandon_at}"
            )));
        }
        if launch_at == abandon_at {
            return Err(Error::InvalidPolicy(
                "launch and abandon thresholds coincide".into(),
            ));
        }
        Ok(Self {
            launch_at,
            abandon_at,
            start,
        })
    }

    pub fn continuation(launch_at: f64, abandon_at: f64) -> Result<Self> {
        Self::new(launch_at, abandon_at, 0.0)
    }

    pub fn launch_now(start: f64) -> Self {
        Self {
            launch_at: start,
            abandon_at: f64::INFINITY,
            start,
        }
    }

    pub fn abandon_now(start: f64) -> Self {
        Self {
            launch_at: f64::NEG_INFINITY,
            abandon_at: start,
            start,
        }
    }

    pub fn kind(&self) -> PolicyKind {
        if self.launch_at == self.start {
            PolicyKind::LaunchNow
        } else if self.abandon_at == self.start {
            PolicyKind::AbandonNow
        } else {
            PolicyKind::Continue
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.kind() != PolicyKind::Continue
    }

    /// Length of the continuation interval; zero for immediate actions.
    pub fn width(&self) -> f64 {
        match self.kind() {
            PolicyKind::Continue => self.abandon_at - self.launch_at,
            _ => 0.0,
        }
    }
}

/// One item of a direct mechanism: a prior, the launch threshold it is
/// assigned and the penalty it pays if damage occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenuItem {
    pub theta: f64,
    pub launch_threshold: f64,
    pub penalty: f64,
}

/// Reduced-form direct liability mechanism: type -> (launch threshold, penalty).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectMechanism {
    menu: Vec<MenuItem>,
}

impl DirectMechanism {
    pub fn new(mut menu: Vec<MenuItem>, params: &ModelParams) -> Result<Self> {
        for item in &menu {
            FirmType::new(item.theta)?;
            if !item.launch_threshold.is_finite() || !item.penalty.is_finite() {
                return Err(Error::PreconditionViolated(format!(
                    "menu item for prior {} has a non-finite entry",
                    item.theta
                )));
            }
            if item.penalty > params.l() {
                return Err(Error::PreconditionViolated(format!(
                    "penalty {} for prior {} exceeds the cap {}",
                    item.penalty,
                    item.theta,
                    params.l()
                )));
            }
        }
        menu.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        if let Some(w) = menu.windows(2).find(|w| w[0].theta == w[1].theta) {
            return Err(Error::PreconditionViolated(format!(
                "prior {} listed twice",
                w[0].theta
            )));
        }
        for (i, a) in menu.iter().enumerate() {
            for b in &menu[i + 1..] {
                if (a.launch_threshold - b.launch_threshold).abs() <= POINT_TOL
                    && a.penalty != b.penalty
                {
                    return Err(Error::InconsistentMenu(a.theta, b.theta));
                }
            }
        }
        Ok(Self { menu })
    }

    /// Items sorted by prior.
    pub fn items(&self) -> &[MenuItem] {
        &self.menu
    }

    pub fn is_empty(&self) -> bool {
        self.menu.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(beta: f64, l: f64, damage: f64) -> RawParams {
        RawParams {
            sigma: 1.0,
            c: 0.05,
            pi: 1.0,
            beta,
            l,
            damage,
        }
    }

    #[test]
    fn reference_params_validate_with_k() {
        let p = ModelParams::validate(raw(1.2, 0.8, 2.0)).unwrap();
        assert!((p.k() - 0.52).abs() < 1e-12);
    }

    #[test]
    fn cap_above_damage_rejected() {
        assert!(matches!(
            ModelParams::validate(raw(1.2, 2.5, 2.0)),
            Err(Error::CapViolation { .. })
        ));
        assert!(matches!(
            ModelParams::validate(raw(1.2, 2.0, 2.0)),
            Err(Error::CapViolation { .. })
        ));
        // l = 0.8 < L = 1 respects the cap; the tuple fails the ratio ordering instead.
        assert!(matches!(
            ModelParams::validate(raw(2.0, 0.8, 1.0)),
            Err(Error::AssumptionViolation { .. })
        ));
    }

    #[test]
    fn ratio_assumption_enforced() {
        assert!(matches!(
            ModelParams::validate(raw(4.0, 0.8, 2.0)),
            Err(Error::AssumptionViolation { .. })
        ));
    }

    #[test]
    fn non_positive_rejected() {
        let mut r = raw(1.2, 0.8, 2.0);
        r.sigma = 0.0;
        assert!(matches!(
            ModelParams::validate(r),
            Err(Error::NonPositiveParam { name: "sigma", .. })
        ));
        r.sigma = f64::NAN;
        assert!(ModelParams::validate(r).is_err());
    }

    #[test]
    fn prior_bounds() {
        assert!(FirmType::new(0.0).is_ok());
        assert!(FirmType::new(1.0).is_ok());
        assert!(FirmType::new(1.0001).is_err());
        assert!(FirmType::new(-0.1).is_err());
        assert!(FirmType::new(f64::NAN).is_err());
    }

    #[test]
    fn tariff_constant_and_override() {
        let uniform = Tariff::constant(0.8, 0.8).unwrap();
        assert_eq!(uniform.eval(0.3), 0.8);

        let ceiling = Tariff::new(vec![], vec![], vec![(-0.5, 0.2)], 0.8, 0.8).unwrap();
        assert_eq!(ceiling.eval(-0.5), 0.2);
        assert_eq!(ceiling.eval(-0.5001), 0.8);
    }

    #[test]
    fn tariff_segments_are_right_closed() {
        let t = Tariff::new(vec![-1.0, 0.0], vec![0.1, 0.4], vec![], 0.8, 0.8).unwrap();
        assert_eq!(t.eval(-2.0), 0.1);
        assert_eq!(t.eval(-1.0), 0.1);
        assert_eq!(t.eval(-0.5), 0.4);
        assert_eq!(t.eval(0.0), 0.4);
        assert_eq!(t.eval(1e-12), 0.8);
        assert!(t.is_non_decreasing());
    }

    #[test]
    fn tariff_rejects_values_above_cap() {
        assert!(Tariff::constant(0.9, 0.8).is_err());
        assert!(Tariff::new(vec![0.0], vec![0.9], vec![], 0.1, 0.8).is_err());
        assert!(Tariff::new(vec![], vec![], vec![(0.0, 1.0)], 0.1, 0.8).is_err());
    }

    #[test]
    fn tariff_rejects_bad_breakpoints() {
        assert!(Tariff::new(vec![0.0, 0.0], vec![0.1, 0.2], vec![], 0.3, 0.8).is_err());
        assert!(Tariff::new(vec![0.0], vec![], vec![], 0.3, 0.8).is_err());
        assert!(Tariff::new(vec![], vec![], vec![(0.0, 0.1), (0.0, 0.2)], 0.3, 0.8).is_err());
    }

    #[test]
    fn monotonicity_with_overrides() {
        let t = Tariff::new(vec![0.0], vec![0.2], vec![(-1.0, 0.1)], 0.8, 0.8).unwrap();
        assert!(!t.is_non_decreasing());
        let t = Tariff::new(vec![0.0], vec![0.2], vec![(0.0, 0.5)], 0.8, 0.8).unwrap();
        assert!(t.is_non_decreasing());
    }

    #[test]
    fn policy_kinds() {
        assert_eq!(ThresholdPolicy::launch_now(0.0).kind(), PolicyKind::LaunchNow);
        assert_eq!(ThresholdPolicy::abandon_now(0.0).kind(), PolicyKind::AbandonNow);
        let p = ThresholdPolicy::continuation(-1.0, 1.0).unwrap();
        assert_eq!(p.kind(), PolicyKind::Continue);
        assert_eq!(p.width(), 2.0);
        assert!(ThresholdPolicy::new(0.5, 1.0, 0.0).is_err());
        assert!(ThresholdPolicy::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn menu_equal_thresholds_need_equal_penalties() {
        let p = ModelParams::validate(raw(1.2, 0.8, 2.0)).unwrap();
        let menu = vec![
            MenuItem { theta: 0.3, launch_threshold: -0.4, penalty: 0.5 },
            MenuItem { theta: 0.6, launch_threshold: -0.4, penalty: 0.6 },
        ];
        assert_eq!(
            DirectMechanism::new(menu, &p),
            Err(Error::InconsistentMenu(0.3, 0.6))
        );
        let menu = vec![
            MenuItem { theta: 0.6, launch_threshold: -0.4, penalty: 0.5 },
            MenuItem { theta: 0.3, launch_threshold: -0.4, penalty: 0.5 },
        ];
        let m = DirectMechanism::new(menu, &p).unwrap();
        assert_eq!(m.items()[0].theta, 0.3);
    }

    #[test]
    fn menu_penalty_capped() {
        let p = ModelParams::validate(raw(1.2, 0.8, 2.0)).unwrap();
        let menu = vec![MenuItem { theta: 0.3, launch_threshold: -0.4, penalty: 0.81 }];
        assert!(DirectMechanism::new(menu, &p).is_err());
    }
}
