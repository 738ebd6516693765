//! Monte Carlo ground truth for exit statistics and policy values.
//!
//! Paths follow exact Gaussian increments on a fixed time step. By default a
//! step that ends inside the interval still counts as an exit with the
//! Brownian-bridge crossing probability `exp(-2 d0 d1 / (sigma^2 dt))`, which
//! removes the discrete-monitoring bias of the hitting probabilities. With
//! the bridge check disabled the simulator is plain Euler with first-crossing
//! detection.
//!
//! Paths are split into fixed-size batches, each driven by its own ChaCha8
//! stream seeded from the master seed and the batch index, so results are
//! bit-identical regardless of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{posterior, ProductState};
use crate::error::{Error, Result};
use crate::model::{FirmType, ModelParams, PolicyKind, Tariff, ThresholdPolicy};
use crate::report::csv_number;
use crate::solver::SolveGrid;

const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub max_time: f64,
    pub bridge_correction: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_paths: 100_000,
            seed: 0,
            max_time: 1_000.0,
            bridge_correction: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("time step {} must be positive", self.dt)));
        }
        if self.n_paths < 1_000 {
            return Err(Error::InvalidConfig(format!(
                "{} paths is below the 1000-path minimum",
                self.n_paths
            )));
        }
        if !(self.max_time > self.dt) {
            return Err(Error::InvalidConfig("horizon must exceed one step".into()));
        }
        Ok(())
    }

    /// Also requires the time step to be no coarser than one lattice step of `grid`.
    pub fn validate_against(&self, grid: &SolveGrid, sigma: f64) -> Result<()> {
        self.validate()?;
        let limit = grid.h() * grid.h() / (sigma * sigma);
        if self.dt > limit {
            return Err(Error::InvalidConfig(format!(
                "time step {} exceeds h^2/sigma^2 = {limit}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Whether `target` lies within `k` standard errors of the mean.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }

    pub fn z_score(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target) / self.se
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.n += other.n;
    }

    fn estimate(&self) -> Estimate {
        if self.n == 0 {
            return Estimate { mean: f64::NAN, se: f64::NAN, n: 0 };
        }
        let n = self.n as f64;
        let var = if self.n > 1 { (self.m2 / (n - 1.0)).max(0.0) } else { 0.0 };
        Estimate { mean: self.mean, se: (var / n).sqrt(), n: self.n }
    }
}

/// Empirical exit statistics for one product state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalExit {
    /// Frequency of leaving through the launch (lower) boundary.
    pub hit_lower: Estimate,
    pub exit_time: Estimate,
    pub truncated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Exit {
    Lower(f64),
    Upper(f64),
    Truncated,
}

fn batch_rng(seed: u64, batch: usize) -> ChaCha8Rng {
    // splitmix64 of (seed, batch)
    let mut z = seed ^ (batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn run_path(
    rng: &mut ChaCha8Rng,
    drift: f64,
    policy: &ThresholdPolicy,
    sigma: f64,
    cfg: &SimConfig,
) -> Exit {
    let (a, b) = (policy.launch_at, policy.abandon_at);
    let vol = sigma * cfg.dt.sqrt();
    let bridge_scale = -2.0 / (sigma * sigma * cfg.dt);
    let mut x = policy.start;
    let mut t = 0.0;
    while t < cfg.max_time {
        let z: f64 = rng.sample(StandardNormal);
        let next = x + drift * cfg.dt + vol * z;
        if next <= a {
            return Exit::Lower(t + cfg.dt * (x - a) / (x - next));
        }
        if next >= b {
            return Exit::Upper(t + cfg.dt * (b - x) / (next - x));
        }
        if cfg.bridge_correction {
            let ea = bridge_scale * (x - a) * (next - a);
            let eb = bridge_scale * (b - x) * (b - next);
            if ea > -40.0 || eb > -40.0 {
                let (pa, pb) = (ea.exp(), eb.exp());
                let u: f64 = rng.gen();
                if u < pa {
                    return Exit::Lower(t + 0.5 * cfg.dt);
                }
                if u < pa + pb {
                    return Exit::Upper(t + 0.5 * cfg.dt);
                }
            }
        }
        x = next;
        t += cfg.dt;
    }
    Exit::Truncated
}

fn check_truncation(truncated: usize, paths: usize) -> Result<()> {
    if truncated * 1000 > paths {
        return Err(Error::TruncationExceeded { truncated, paths });
    }
    Ok(())
}

fn batches(n_paths: usize) -> Vec<(usize, usize)> {
    (0..n_paths.div_ceil(BATCH))
        .map(|b| (b, BATCH.min(n_paths - b * BATCH)))
        .collect()
}

/// Simulates exits from a continuation interval for a known product state.
pub fn simulate_exit(
    state: ProductState,
    policy: &ThresholdPolicy,
    cfg: &SimConfig,
    sigma: f64,
) -> Result<EmpiricalExit> {
    cfg.validate()?;
    if policy.is_degenerate() {
        return Err(Error::Domain("simulation needs a continuation interval".into()));
    }
    let drift = state.drift();
    let parts: Vec<(Moments, Moments, usize)> = batches(cfg.n_paths)
        .into_par_iter()
        .map(|(batch, size)| {
            let mut rng = batch_rng(cfg.seed, batch);
            let (mut hit, mut time, mut truncated) = (Moments::default(), Moments::default(), 0);
            for _ in 0..size {
                match run_path(&mut rng, drift, policy, sigma, cfg) {
                    Exit::Lower(t) => {
                        hit.push(1.0);
                        time.push(t);
                    }
                    Exit::Upper(t) => {
                        hit.push(0.0);
                        time.push(t);
                    }
                    Exit::Truncated => truncated += 1,
                }
            }
            (hit, time, truncated)
        })
        .collect();
    let (mut hit, mut time, mut truncated) = (Moments::default(), Moments::default(), 0);
    for (h, t, n) in &parts {
        hit.merge(h);
        time.merge(t);
        truncated += n;
    }
    check_truncation(truncated, cfg.n_paths)?;
    Ok(EmpiricalExit {
        hit_lower: hit.estimate(),
        exit_time: time.estimate(),
        truncated,
    })
}

/// Average realized payoff `d (gain - y loss(X_tau)) - c tau`, with `y`
/// drawn from the belief at the start.
fn estimate_value(
    theta: f64,
    policy: &ThresholdPolicy,
    gain: f64,
    loss: &(dyn Fn(f64) -> f64 + Sync),
    cost: f64,
    sigma: f64,
    cfg: &SimConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    let p = posterior(theta, policy.start, sigma);
    let parts: Vec<(Moments, usize)> = batches(cfg.n_paths)
        .into_par_iter()
        .map(|(batch, size)| {
            let mut rng = batch_rng(cfg.seed, batch);
            let mut m = Moments::default();
            let mut truncated = 0;
            for _ in 0..size {
                let u: f64 = rng.gen();
                let damaging = u < p;
                let y = if damaging { 1.0 } else { 0.0 };
                let payoff = match policy.kind() {
                    PolicyKind::LaunchNow => gain - y * loss(policy.start),
                    PolicyKind::AbandonNow => 0.0,
                    PolicyKind::Continue => {
                        let drift = if damaging { 1.0 } else { -1.0 };
                        match run_path(&mut rng, drift, policy, sigma, cfg) {
                            Exit::Lower(t) => gain - y * loss(policy.launch_at) - cost * t,
                            Exit::Upper(t) => -cost * t,
                            Exit::Truncated => {
                                truncated += 1;
                                continue;
                            }
                        }
                    }
                };
                m.push(payoff);
            }
            (m, truncated)
        })
        .collect();
    let mut total = Moments::default();
    let mut truncated = 0;
    for (m, n) in &parts {
        total.merge(m);
        truncated += n;
    }
    check_truncation(truncated, cfg.n_paths)?;
    Ok(total.estimate())
}

/// Monte Carlo estimate of the firm's payoff from a threshold policy.
pub fn estimate_policy_value(
    theta: FirmType,
    policy: &ThresholdPolicy,
    tariff: &Tariff,
    cfg: &SimConfig,
    params: &ModelParams,
) -> Result<Estimate> {
    let loss = |x: f64| tariff.eval(x);
    estimate_value(theta.theta(), policy, params.pi(), &loss, params.c(), params.sigma(), cfg)
}

/// Monte Carlo estimate of the social payoff from a threshold policy.
pub fn estimate_regulator_value(
    theta: FirmType,
    policy: &ThresholdPolicy,
    cfg: &SimConfig,
    params: &ModelParams,
) -> Result<Estimate> {
    let damage = params.damage();
    let loss = move |_: f64| damage;
    estimate_value(theta.theta(), policy, params.beta(), &loss, params.c(), params.sigma(), cfg)
}

/// One named statistic for CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatRow {
    pub name: String,
    pub estimate: Estimate,
    pub seed: u64,
    pub dt: f64,
}

pub const CSV_HEADER: &str = "name,estimate,se,n,seed,dt";

/// Renders rows as CSV with a header line; every line ends with a newline.
pub fn stats_csv(rows: &[StatRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name,
            csv_number(r.estimate.mean),
            csv_number(r.estimate.se),
            r.estimate.n,
            r.seed,
            csv_number(r.dt)
        ));
    }
    out
}
