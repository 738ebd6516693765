use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use wald_liability::diffusion::{exit_stats, ProductState};
use wald_liability::fee::construct_violation_menu;
use wald_liability::mechanism::{
    benchmarks, ceiling_conversion, ceiling_thresholds, first_best_thresholds, identifiability_check,
    reached_thresholds, synthesize_monotone,
};
use wald_liability::model::{FirmType, ModelParams, RawParams, Tariff};
use wald_liability::report::csv_number;
use wald_liability::scenario::{Scenario, SweepRange, TariffSpec};
use wald_liability::simulation::{
    estimate_policy_value, simulate_exit, stats_csv, Estimate, SimConfig, StatRow,
};
use wald_liability::solver::{firm_policy_value, solve_general, Action, SolveGrid, SolverConfig};
use wald_liability::verify::{fee_grid, menu_from_fees, run_suite, SuiteOptions, DEFAULT_TYPES};
use wald_liability::Error;

use crate::output::{emit, json, read_file, CliError};
use crate::{Cli, Command, TariffChoice};

/// Reference model used when no scenario file is given.
pub const REFERENCE_SCENARIO: &str =
    r#"{"params": {"sigma": 1.0, "c": 0.05, "pi": 1.0, "beta": 1.2, "l": 0.8, "L": 2.0}}"#;

/// Everything a report depends on besides its own results.
#[derive(Debug, Serialize)]
struct Settings {
    command: &'static str,
    scenario: Option<String>,
    seed: u64,
    params: ModelParams,
    types: Vec<f64>,
    grid: SolveGrid,
    solver: SolverConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    sim: Option<SimConfig>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    settings: &'a Settings,
    report: T,
}

struct Context<'a> {
    cli: &'a Cli,
    scenario: Scenario,
    types: Vec<FirmType>,
}

impl Context<'_> {
    fn grid(&self) -> Result<SolveGrid, CliError> {
        Ok(self.scenario.solve_grid(self.cli.grid_step)?)
    }

    fn solver(&self) -> SolverConfig {
        self.scenario.solver_config(self.cli.tol_v)
    }

    fn settings(&self, command: &'static str, grid: SolveGrid, sim: Option<SimConfig>) -> Settings {
        Settings {
            command,
            scenario: self.cli.scenario.as_ref().map(|p| p.display().to_string()),
            seed: self.cli.seed,
            params: self.scenario.params,
            types: self.types.iter().map(|t| t.theta()).collect(),
            grid,
            solver: self.solver(),
            sim,
        }
    }

    fn out(&self) -> Option<&Path> {
        self.cli.out.as_deref()
    }

    fn emit_json<T: Serialize>(&self, settings: &Settings, report: T) -> Result<(), CliError> {
        let name = format!("{}.json", settings.command);
        emit(self.out(), &name, &json(&Envelope { settings, report }))
    }

    /// CSV goes to `<command>.csv`, with the settings beside it when writing
    /// to a directory.
    fn emit_csv(&self, settings: &Settings, csv: &str) -> Result<(), CliError> {
        emit(self.out(), &format!("{}.csv", settings.command), csv)?;
        if self.out().is_some() {
            emit(self.out(), &format!("{}.settings.json", settings.command), &json(settings))?;
        }
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let text = match &cli.scenario {
        Some(path) => read_file(path)?,
        None => REFERENCE_SCENARIO.to_string(),
    };
    let scenario = Scenario::from_json(&text)?;
    if let Some(step) = cli.grid_step {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidGrid(format!("grid step {step} must be positive")).into());
        }
    }
    if let Some(tol) = cli.tol_v {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("value tolerance {tol} must be positive")).into());
        }
    }
    let types = if scenario.types.is_empty() {
        DEFAULT_TYPES.iter().map(|&t| FirmType::new(t)).collect::<Result<Vec<_>, _>>()?
    } else {
        scenario.types.clone()
    };
    let ctx = Context { cli, scenario, types };
    match &cli.command {
        Command::Benchmarks => run_benchmarks(&ctx),
        Command::Solve { tariff } => run_solve(&ctx, *tariff),
        Command::Synthesize => run_synthesize(&ctx),
        Command::Convert => run_convert(&ctx),
        Command::Counterexample => run_counterexample(&ctx),
        Command::Verify { crossing_trials, param_sets, sim_paths } => {
            let opts = SuiteOptions {
                seed: cli.seed,
                crossing_trials: *crossing_trials,
                param_sets: *param_sets,
                sim_paths: *sim_paths,
                ..SuiteOptions::default()
            };
            run_verify(&ctx, &opts)
        }
        Command::Simulate => run_simulate(&ctx),
        Command::Sweep { param, range } => run_sweep(&ctx, param, range),
    }
}

fn run_benchmarks(ctx: &Context) -> Result<(), CliError> {
    let grid = ctx.grid()?;
    let b = benchmarks(&ctx.scenario.params, &ctx.types, &grid, &ctx.solver())?;
    let mut csv = String::from("theta,first_best_launch,first_best_abandon,ceiling_launch,ceiling_abandon\n");
    for t in &b.types {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_number(t.theta),
            csv_number(t.first_best.launch),
            csv_number(t.first_best.abandon),
            csv_number(t.ceiling.launch),
            csv_number(t.ceiling.abandon)
        ));
    }
    ctx.emit_csv(&ctx.settings("benchmarks", grid, None), &csv)
}

fn chosen_tariff(ctx: &Context, choice: TariffChoice) -> Result<Tariff, CliError> {
    let params = &ctx.scenario.params;
    match choice {
        TariffChoice::Zero => Ok(Tariff::constant(0.0, params.l())?),
        TariffChoice::Ceiling => Ok(Tariff::uniform_ceiling(params)),
        TariffChoice::Scenario => ctx
            .scenario
            .tariff
            .clone()
            .ok_or_else(|| CliError::Usage("the scenario has no `tariff`; pass --tariff zero or ceiling".into())),
    }
}

fn action_name(a: Action) -> &'static str {
    match a {
        Action::Launch => "launch",
        Action::Abandon => "abandon",
        Action::Continue => "continue",
    }
}

fn run_solve(ctx: &Context, choice: TariffChoice) -> Result<(), CliError> {
    let tariff = chosen_tariff(ctx, choice)?;
    let grid = ctx.grid()?;
    let cfg = ctx.solver();
    let params = &ctx.scenario.params;
    let rows = ctx
        .types
        .par_iter()
        .map(|&theta| {
            let vf = solve_general(theta, &tariff, params, &grid, &cfg)?;
            let th = reached_thresholds(&vf, 0.0)?;
            let zero = grid.zero_index();
            Ok(format!(
                "{},{},{},{},{},{},{}\n",
                csv_number(theta.theta()),
                action_name(vf.actions[zero]),
                csv_number(th.launch),
                csv_number(th.abandon),
                csv_number(vf.values[zero]),
                vf.sweeps,
                csv_number(vf.residual)
            ))
        })
        .collect::<Result<Vec<String>, Error>>()?;
    let mut csv = String::from("theta,action,launch,abandon,value,sweeps,residual\n");
    csv.extend(rows);
    ctx.emit_csv(&ctx.settings("solve", grid, None), &csv)
}

fn run_synthesize(ctx: &Context) -> Result<(), CliError> {
    let targets = ctx
        .scenario
        .targets
        .as_ref()
        .ok_or_else(|| CliError::Usage("the scenario has no `targets`".into()))?;
    let grid = ctx.grid()?;
    let report = synthesize_monotone(targets, &ctx.scenario.params, &grid, &ctx.solver())?;
    let verified = report.verified;
    let deviation = report.max_deviation;
    ctx.emit_json(&ctx.settings("synthesize", grid, None), &report)?;
    if verified {
        Ok(())
    } else {
        Err(CliError::Violation(format!(
            "synthesized tariff misses a target by {deviation}"
        )))
    }
}

#[derive(Serialize)]
struct ConversionOutput {
    tariff: TariffSpec,
    conversion: wald_liability::mechanism::ConversionReport,
}

fn run_convert(ctx: &Context) -> Result<(), CliError> {
    let menu = ctx
        .scenario
        .menu
        .as_ref()
        .ok_or_else(|| CliError::Usage("the scenario has no `menu`".into()))?;
    let grid = ctx.grid()?;
    let (tariff, conversion) = ceiling_conversion(menu, &ctx.scenario.params, &grid, &ctx.solver())?;
    let out = ConversionOutput { tariff: TariffSpec::from_tariff(&tariff), conversion };
    ctx.emit_json(&ctx.settings("convert", grid, None), &out)
}

#[derive(Serialize)]
struct CounterexampleOutput {
    certificate: wald_liability::fee::FeeCertificate,
    reverses_monotonicity: bool,
    partition: wald_liability::mechanism::Identifiability,
}

fn run_counterexample(ctx: &Context) -> Result<(), CliError> {
    let params = &ctx.scenario.params;
    let grid = match ctx.cli.grid_step {
        Some(h) => SolveGrid::new(-100.0 * h, 800.0 * h, h, params.sigma())?,
        None => fee_grid(params)?,
    };
    let certificate = construct_violation_menu(params, &grid, &ctx.solver())?;
    let partition = identifiability_check(&menu_from_fees(&certificate.menu, params)?);
    let out = CounterexampleOutput {
        reverses_monotonicity: certificate.menu.reverses_monotonicity(),
        certificate,
        partition,
    };
    ctx.emit_json(&ctx.settings("counterexample", grid, None), &out)
}

fn run_verify(ctx: &Context, opts: &SuiteOptions) -> Result<(), CliError> {
    let mut report = run_suite(&ctx.scenario, ctx.cli.grid_step, ctx.cli.tol_v, opts)?;
    report.record_operation("run");
    let settings = ctx.settings("verify", report.grid, Some(report.sim));
    ctx.emit_json(&settings, &report)?;
    if report.passed {
        return Ok(());
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Err(CliError::Violation(format!(
        "failed checks: [{}]; unexercised operations: [{}]",
        failed.join(", "),
        report.coverage.missing.join(", ")
    )))
}

fn exact(mean: f64) -> Estimate {
    Estimate { mean, se: 0.0, n: 0 }
}

fn run_simulate(ctx: &Context) -> Result<(), CliError> {
    let params = &ctx.scenario.params;
    let tariff = ctx.scenario.tariff.clone().unwrap_or_else(|| Tariff::uniform_ceiling(params));
    let grid = ctx.grid()?;
    let cfg = ctx.solver();
    let sim = ctx.scenario.sim_config(ctx.cli.seed);
    sim.validate_against(&grid, params.sigma())?;
    let mut rows = Vec::new();
    for (i, &theta) in ctx.types.iter().enumerate() {
        let vf = solve_general(theta, &tariff, params, &grid, &cfg)?;
        let policy = reached_thresholds(&vf, 0.0)?.policy_from(0.0);
        let base = sim.seed.wrapping_add(3 * i as u64);
        let mut row = |name: String, estimate: Estimate, seed: u64| {
            rows.push(StatRow { name: format!("theta_{}_{name}", theta.theta()), estimate, seed, dt: sim.dt });
        };
        let run = SimConfig { seed: base, ..sim };
        row("value".into(), estimate_policy_value(theta, &policy, &tariff, &run, params)?, base);
        row("value_exact".into(), exact(firm_policy_value(theta, &policy, &tariff, params)?), base);
        if policy.is_degenerate() {
            continue;
        }
        let st = exit_stats(theta, &policy, params.sigma())?;
        for (k, state) in [ProductState::Safe, ProductState::Damaging].into_iter().enumerate() {
            let seed = base + 1 + k as u64;
            let emp = simulate_exit(state, &policy, &SimConfig { seed, ..sim }, params.sigma())?;
            let (label, f, t) = match state {
                ProductState::Safe => ("safe", st.f_g, st.t_g),
                ProductState::Damaging => ("damaging", st.f_b, st.t_b),
            };
            row(format!("{label}_hit_lower"), emp.hit_lower, seed);
            row(format!("{label}_hit_lower_exact"), exact(f), seed);
            row(format!("{label}_exit_time"), emp.exit_time, seed);
            row(format!("{label}_exit_time_exact"), exact(t), seed);
        }
    }
    ctx.emit_csv(&ctx.settings("simulate", grid, Some(sim)), &stats_csv(&rows))
}

fn with_param(raw: RawParams, name: &str, value: f64) -> Result<RawParams, CliError> {
    let mut raw = raw;
    match name {
        "sigma" => raw.sigma = value,
        "c" => raw.c = value,
        "pi" => raw.pi = value,
        "beta" => raw.beta = value,
        "l" => raw.l = value,
        "L" => raw.damage = value,
        other => {
            return Err(CliError::Usage(format!(
                "unknown parameter `{other}`; expected one of sigma, c, pi, beta, l, L"
            )))
        }
    }
    Ok(raw)
}

fn run_sweep(ctx: &Context, param: &str, range: &str) -> Result<(), CliError> {
    let range = SweepRange::parse(range)?;
    let base = ctx.scenario.params.raw();
    let points = range
        .values()
        .into_iter()
        .map(|v| {
            let mut s = ctx.scenario.clone();
            s.params = ModelParams::validate(with_param(base, param, v)?)?;
            Ok((v, s))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let tol_v = ctx.cli.tol_v;
    let step = ctx.cli.grid_step;
    let blocks = points
        .par_iter()
        .map(|(v, s)| {
            let grid = s.solve_grid(step)?;
            let cfg = s.solver_config(tol_v);
            let mut block = String::new();
            for &theta in &ctx.types {
                let fb = first_best_thresholds(theta, &s.params, &grid, &cfg)?;
                let ce = ceiling_thresholds(theta, &s.params, &grid, &cfg)?;
                block.push_str(&format!(
                    "{param},{},{},{},{},{},{}\n",
                    csv_number(*v),
                    csv_number(theta.theta()),
                    csv_number(fb.launch),
                    csv_number(fb.abandon),
                    csv_number(ce.launch),
                    csv_number(ce.abandon)
                ));
            }
            Ok(block)
        })
        .collect::<Result<Vec<String>, Error>>()?;
    let mut csv = String::from("param,value,theta,first_best_launch,first_best_abandon,ceiling_launch,ceiling_abandon\n");
    csv.extend(blocks);
    ctx.emit_csv(&ctx.settings("sweep", ctx.grid()?, None), &csv)
}
