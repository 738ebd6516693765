//! JSON scenario files and the small text formats accepted on the command
//! line.
//!
//! ```json
//! {
//!   "params": {"sigma": 1, "c": 0.05, "pi": 1, "beta": 1.2, "l": 1.2, "L": 2},
//!   "types": [0.3, 0.5, 0.7],
//!   "tariff": {"breakpoints": [-1.0], "values": [0.9], "overrides": [[-0.5, 0.2]], "default": 1.2},
//!   "targets": [{"theta": 0.3, "launch": -0.5}],
//!   "menu": [{"theta": 0.3, "launch_threshold": -0.5, "penalty": 1.0}],
//!   "grid": {"step": 0.05},
//!   "solver": {"tol_v": 1e-9},
//!   "sim": {"dt": 0.001, "n_paths": 100000}
//! }
//! ```
//!
//! Only `params` is required.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DirectMechanism, FirmType, MenuItem, ModelParams, RawParams, Tariff};
use crate::simulation::SimConfig;
use crate::solver::{SolveGrid, SolverConfig};

/// Tariff as written in a scenario. The cap is taken from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSpec {
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default)]
    pub overrides: Vec<(f64, f64)>,
    pub default: f64,
}

impl TariffSpec {
    pub fn build(&self, cap: f64) -> Result<Tariff> {
        Tariff::new(
            self.breakpoints.clone(),
            self.values.clone(),
            self.overrides.clone(),
            self.default,
            cap,
        )
    }

    pub fn from_tariff(t: &Tariff) -> Self {
        Self {
            breakpoints: t.breakpoints().to_vec(),
            values: t.segment_values().to_vec(),
            overrides: t.point_overrides().to_vec(),
            default: t.default_value(),
        }
    }
}

/// Parses a standalone tariff document and validates it against `cap`.
pub fn parse_tariff(json: &str, cap: f64) -> Result<Tariff> {
    let spec: TariffSpec = serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
    spec.build(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub theta: f64,
    pub launch: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub step: Option<f64>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub tol_v: Option<f64>,
    pub tie_tol: Option<f64>,
    pub max_sweeps: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: Option<f64>,
    pub n_paths: Option<usize>,
    pub max_time: Option<f64>,
    pub bridge_correction: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    params: RawParams,
    #[serde(default)]
    types: Vec<f64>,
    tariff: Option<TariffSpec>,
    targets: Option<Vec<TargetSpec>>,
    menu: Option<Vec<MenuItem>>,
    #[serde(default)]
    grid: GridSpec,
    #[serde(default)]
    solver: SolverSpec,
    #[serde(default)]
    sim: SimSpec,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ModelParams,
    pub types: Vec<FirmType>,
    pub tariff: Option<Tariff>,
    pub targets: Option<Vec<(FirmType, f64)>>,
    pub menu: Option<DirectMechanism>,
    pub grid: GridSpec,
    pub solver: SolverSpec,
    pub sim: SimSpec,
}

impl Scenario {
    pub fn from_json(json: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))?;
        let params = ModelParams::validate(file.params)?;
        let types = file
            .types
            .iter()
            .map(|&t| FirmType::new(t))
            .collect::<Result<Vec<_>>>()?;
        let tariff = file.tariff.map(|t| t.build(params.l())).transpose()?;
        let targets = file
            .targets
            .map(|ts| {
                ts.iter()
                    .map(|t| {
                        if !t.launch.is_finite() {
                            return Err(Error::Parse(format!("target for {} is not finite", t.theta)));
                        }
                        Ok((FirmType::new(t.theta)?, t.launch))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        let menu = file
            .menu
            .map(|m| DirectMechanism::new(m, &params))
            .transpose()?;
        for (name, v) in [
            ("grid.step", file.grid.step),
            ("grid.x_min", file.grid.x_min),
            ("grid.x_max", file.grid.x_max),
            ("solver.tol_v", file.solver.tol_v),
            ("solver.tie_tol", file.solver.tie_tol),
            ("sim.dt", file.sim.dt),
            ("sim.max_time", file.sim.max_time),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(Error::Parse(format!("{name} must be finite")));
                }
            }
        }
        Ok(Self {
            params,
            types,
            tariff,
            targets,
            menu,
            grid: file.grid,
            solver: file.solver,
            sim: file.sim,
        })
    }

    /// Priors of the scenario, plus target and menu priors, sorted and
    /// deduplicated.
    pub fn all_priors(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.types.iter().map(|t| t.theta()).collect();
        if let Some(ts) = &self.targets {
            out.extend(ts.iter().map(|(t, _)| t.theta()));
        }
        if let Some(m) = &self.menu {
            out.extend(m.items().iter().map(|i| i.theta));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    /// Grid from the scenario, with `step` overriding the file's step.
    pub fn solve_grid(&self, step: Option<f64>) -> Result<SolveGrid> {
        let step = step.or(self.grid.step);
        let sigma = self.params.sigma();
        match (self.grid.x_min, self.grid.x_max) {
            (Some(lo), Some(hi)) => {
                let h = step.unwrap_or(sigma * sigma / 20.0);
                let below = (-lo / h).ceil();
                let above = (hi / h).ceil();
                if !(below >= 1.0 && above >= 1.0) {
                    return Err(Error::InvalidGrid(format!("bounds [{lo}, {hi}] must straddle 0")));
                }
                SolveGrid::new(-below * h, above * h, h, sigma)
            }
            (None, None) => SolveGrid::for_priors(sigma, &self.all_priors(), step),
            _ => Err(Error::InvalidGrid("give both grid bounds or neither".into())),
        }
    }

    /// Solver settings from the scenario, with `tol_v` overriding the file.
    pub fn solver_config(&self, tol_v: Option<f64>) -> SolverConfig {
        let mut cfg = SolverConfig::for_params(&self.params);
        if let Some(t) = tol_v.or(self.solver.tol_v) {
            cfg.tol_v = t;
        }
        if let Some(t) = self.solver.tie_tol {
            cfg.tie_tol = t;
        }
        if let Some(m) = self.solver.max_sweeps {
            cfg.max_sweeps = m;
        }
        cfg
    }

    pub fn sim_config(&self, seed: u64) -> SimConfig {
        let d = SimConfig::default();
        SimConfig {
            dt: self.sim.dt.unwrap_or(d.dt),
            n_paths: self.sim.n_paths.unwrap_or(d.n_paths),
            seed,
            max_time: self.sim.max_time.unwrap_or(d.max_time),
            bridge_correction: self.sim.bridge_correction.unwrap_or(d.bridge_correction),
        }
    }
}

/// Evenly spaced values `start:stop:count`, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

pub const MAX_SWEEP_POINTS: usize = 10_000;

impl SweepRange {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(Error::Parse(format!("range `{text}` is not start:stop:count")));
        };
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("`{s}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("`{s}` is not finite")))
            }
        };
        let (start, stop) = (num(a)?, num(b)?);
        let count: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("`{n}` is not a point count")))?;
        if count == 0 || count > MAX_SWEEP_POINTS {
            return Err(Error::Parse(format!(
                "point count must be in 1..={MAX_SWEEP_POINTS}, got {count}"
            )));
        }
        if count == 1 && start != stop {
            return Err(Error::Parse("a single point needs start == stop".into()));
        }
        Ok(Self { start, stop, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.stop
                } else {
                    // Interpolating keeps points finite even when stop - start overflows.
                    let t = i as f64 / last;
                    self.start * (1.0 - t) + self.stop * t
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P0: &str = r#"{"params": {"sigma": 1, "c": 0.05, "pi": 1, "beta": 1.2, "l": 0.8, "L": 2}}"#;

    #[test]
    fn minimal_scenario() {
        let s = Scenario::from_json(P0).unwrap();
        assert_eq!(s.params.l(), 0.8);
        assert!(s.types.is_empty() && s.tariff.is_none());
        let g = s.solve_grid(None).unwrap();
        assert_eq!(g.h(), 0.05);
    }

    #[test]
    fn full_scenario() {
        let json = r#"{
            "params": {"sigma": 1, "c": 0.05, "pi": 1, "beta": 1.2, "l": 1.2, "L": 2},
            "types": [0.3, 0.7],
            "tariff": {"breakpoints": [-1.0], "values": [0.9], "overrides": [[-0.5, 0.2]], "default": 1.2},
            "targets": [{"theta": 0.3, "launch": -0.5}],
            "menu": [{"theta": 0.3, "launch_threshold": -0.5, "penalty": 1.0}],
            "grid": {"step": 0.025},
            "solver": {"tol_v": 1e-8},
            "sim": {"n_paths": 2000}
        }"#;
        let s = Scenario::from_json(json).unwrap();
        assert_eq!(s.tariff.as_ref().unwrap().eval(-0.5), 0.2);
        assert_eq!(s.tariff.as_ref().unwrap().eval(-2.0), 0.9);
        assert_eq!(s.solve_grid(None).unwrap().h(), 0.025);
        assert_eq!(s.solve_grid(Some(0.05)).unwrap().h(), 0.05);
        assert_eq!(s.solver_config(None).tol_v, 1e-8);
        assert_eq!(s.sim_config(3).n_paths, 2000);
        assert_eq!(s.all_priors(), vec![0.3, 0.7]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(Scenario::from_json("{"), Err(Error::Parse(_))));
        assert!(matches!(Scenario::from_json("{}"), Err(Error::Parse(_))));
        let unknown = r#"{"params": {"sigma": 1, "c": 0.05, "pi": 1, "beta": 1.2, "l": 0.8, "L": 2}, "extra": 1}"#;
        assert!(matches!(Scenario::from_json(unknown), Err(Error::Parse(_))));
        let cap = r#"{"params": {"sigma": 1, "c": 0.05, "pi": 1, "beta": 1.2, "l": 2.5, "L": 2}}"#;
        assert!(matches!(Scenario::from_json(cap), Err(Error::CapViolation { .. })));
        let prior = r#"{"params": {"sigma": 1, "c": 0.05, "pi": 1, "beta": 1.2, "l": 0.8, "L": 2}, "types": [1.5]}"#;
        assert!(matches!(Scenario::from_json(prior), Err(Error::InvalidPrior(_))));
    }

    #[test]
    fn standalone_tariff() {
        let t = parse_tariff(r#"{"default": 0.8}"#, 0.8).unwrap();
        assert!(t.is_constant());
        assert!(parse_tariff(r#"{"default": 0.9}"#, 0.8).is_err());
        assert!(parse_tariff(r#"{"breakpoints": [1, 0], "values": [0, 0], "default": 0}"#, 1.0).is_err());
    }

    #[test]
    fn sweep_ranges() {
        let r = SweepRange::parse("0.1:0.5:5").unwrap();
        let v = r.values();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[4], 0.5);
        assert!((v[2] - 0.3).abs() < 1e-15);
        assert_eq!(SweepRange::parse("2:2:1").unwrap().values(), vec![2.0]);
        for bad in ["", "1:2", "1:2:0", "a:2:3", "1:2:3:4", "1:inf:3", "1:2:-1", "0:1:1"] {
            assert!(SweepRange::parse(bad).is_err(), "{bad}");
        }
        let wide = SweepRange::parse("-1e308:1e308:5").unwrap().values();
        assert!(wide.iter().all(|v| v.is_finite()), "{wide:?}");
    }
}
