//! Grid sweeps computing the configured density routes side by side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::critical::{CriticalOptions, CriticalPipeline, SeedForm};
use crate::error::{Result, SpectralError};
use crate::family::{CoefficientFamily, NonCriticalFamily};
use crate::levinson::Window;
use crate::noncritical::{NonCriticalOptions, NonCriticalPipeline};
use crate::resolvent::{resolvent_density, OracleOptions};
use crate::stabilized::{rho_stabilized_schedule, StabilizedModel};

/// Which routes a sweep computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSet {
    pub formula: bool,
    pub stabilized: bool,
    pub resolvent: bool,
}

impl RouteSet {
    pub const ALL: RouteSet = RouteSet { formula: true, stabilized: true, resolvent: true };
    pub const FORMULA: RouteSet = RouteSet { formula: true, stabilized: false, resolvent: false };
    pub const STABILIZED: RouteSet = RouteSet { formula: false, stabilized: true, resolvent: false };
}

/// One stabilized value, or the reason it is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizedCell {
    pub n: usize,
    pub value: Option<f64>,
    /// `ok`, `OutsideBand`, or the tag of the failure.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub rho_formula: Option<f64>,
    pub rho_formula_unc: Option<f64>,
    pub rho_stabilized: Vec<StabilizedCell>,
    pub rho_resolvent: Option<f64>,
    pub rho_resolvent_unc: Option<f64>,
    pub delta_oracle_rel: Option<f64>,
    pub delta_stabilized_final: Option<f64>,
    pub trend_flag: Option<bool>,
    /// `ok`, or `route:Tag` entries joined by `;`.
    pub status: String,
}

/// Deltas derived from a row's stored values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowDeltas {
    pub delta_oracle_rel: Option<f64>,
    pub delta_stabilized_final: Option<f64>,
    pub trend_flag: Option<bool>,
}

fn rel(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs()
}

impl SweepRow {
    /// The stabilized deltas are taken against the formula value, or against
    /// the oracle when no formula value exists.
    pub fn recompute_deltas(&self) -> RowDeltas {
        let delta_oracle_rel = match (self.rho_formula, self.rho_resolvent) {
            (Some(f), Some(r)) => Some(rel(f, r)),
            _ => None,
        };
        let reference = self.rho_formula.or(self.rho_resolvent);
        let values: Vec<f64> = self.rho_stabilized.iter().filter_map(|c| c.value).collect();
        let (delta_stabilized_final, trend_flag) = match reference {
            Some(r) if !values.is_empty() => {
                let deltas: Vec<f64> = values.iter().map(|v| rel(*v, r)).collect();
                let trend = (deltas.len() >= 2).then(|| deltas.windows(2).all(|w| w[1] <= w[0]));
                (deltas.last().copied(), trend)
            }
            _ => (None, None),
        };
        RowDeltas { delta_oracle_rel, delta_stabilized_final, trend_flag }
    }

    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

/// Outcome of one tolerance comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: usize,
    pub failed_rows: usize,
    pub max_delta_oracle: Option<f64>,
    pub median_delta_oracle: Option<f64>,
    pub max_delta_stabilized_final: Option<f64>,
    pub median_delta_stabilized_final: Option<f64>,
    /// Share of rows with a trend flag whose flag is set.
    pub trend_fraction: Option<f64>,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub routes: RouteSet,
    pub n_schedule: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub summary: SweepSummary,
}

enum Formula<'a> {
    Critical(CriticalPipeline<'a>),
    NonCritical(NonCriticalPipeline<'a, NonCriticalFamily>),
}

impl Formula<'_> {
    fn evaluate(&self, lambda: f64) -> Result<(f64, f64)> {
        let r = match self {
            Formula::Critical(p) => p.evaluate(lambda)?.result,
            Formula::NonCritical(p) => p.evaluate(lambda)?.result,
        };
        Ok((r.value, r.uncertainty))
    }
}

/// Options of the critical pipeline described by `config`.
pub fn critical_options(config: &RunConfig) -> CriticalOptions {
    let (lo, hi) = config.window;
    CriticalOptions {
        window: Window::Interval { lo, hi },
        n0: config.n0,
        seeds: config.n_seed_schedule.clone(),
        seed_form: if config.test_hooks.corrupt_seed { SeedForm::Degenerate } else { SeedForm::Refined },
        ..CriticalOptions::default()
    }
}

pub fn noncritical_options(config: &RunConfig) -> NonCriticalOptions {
    NonCriticalOptions { seeds: config.n_seed_schedule.clone(), ..NonCriticalOptions::default() }
}

fn build_formula(config: &RunConfig) -> Result<Formula<'_>> {
    match &config.family {
        CoefficientFamily::Critical(f) => Ok(Formula::Critical(CriticalPipeline::new(f, critical_options(config))?)),
        CoefficientFamily::NonCritical(f) => {
            Ok(Formula::NonCritical(NonCriticalPipeline::new(f, noncritical_options(config))?))
        }
        CoefficientFamily::Explicit(_) => Err(SpectralError::WrongFamily { expected: "critical or non-critical" }),
    }
}

/// Runs `f` on a pool of `jobs` workers, or on the global pool when `None`.
pub(crate) fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(SpectralError::InvalidArgument("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SpectralError::InvalidArgument(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

fn check(name: &str, value: f64, tolerance: f64, passed: bool) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), value, tolerance, passed }
}

fn summarize(config: &RunConfig, routes: RouteSet, rows: &[SweepRow]) -> SweepSummary {
    let t = &config.tolerances;
    let oracle: Vec<f64> = rows.iter().filter_map(|r| r.delta_oracle_rel).collect();
    let finals: Vec<f64> = rows.iter().filter_map(|r| r.delta_stabilized_final).collect();
    let flags: Vec<bool> = rows.iter().filter_map(|r| r.trend_flag).collect();
    let failed_rows = rows.iter().filter(|r| r.failed()).count();
    let max_of = |v: &[f64]| v.iter().copied().reduce(f64::max);
    let trend_fraction =
        (!flags.is_empty()).then(|| flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64);

    let mut checks = vec![check("row_failures", failed_rows as f64, 0.0, failed_rows == 0)];
    if routes.formula && routes.resolvent {
        let worst = if oracle.len() == rows.len() { max_of(&oracle).unwrap_or(0.0) } else { f64::INFINITY };
        checks.push(check("formula_vs_oracle", worst, t.formula_vs_oracle, worst <= t.formula_vs_oracle));
    }
    if routes.stabilized && (routes.formula || routes.resolvent) {
        let worst = max_of(&finals).unwrap_or(f64::INFINITY);
        checks.push(check("stabilized_final", worst, t.stabilized_final, worst <= t.stabilized_final));
        if let Some(share) = trend_fraction {
            checks.push(check("trend_fraction", share, t.trend_fraction, share >= t.trend_fraction));
        }
    }
    SweepSummary {
        rows: rows.len(),
        failed_rows,
        max_delta_oracle: max_of(&oracle),
        median_delta_oracle: median(oracle),
        max_delta_stabilized_final: max_of(&finals),
        median_delta_stabilized_final: median(finals),
        trend_fraction,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn sweep_point(
    config: &RunConfig,
    routes: RouteSet,
    formula: Option<&Formula<'_>>,
    schedule: &[usize],
    oracle: &OracleOptions,
    lambda: f64,
) -> SweepRow {
    let family = &config.family;
    let mut errors: Vec<String> = Vec::new();
    let (mut rho_formula, mut rho_formula_unc) = (None, None);
    if let Some(f) = formula {
        match f.evaluate(lambda) {
            Ok((v, u)) => {
                rho_formula = Some(v);
                rho_formula_unc = Some(u);
            }
            Err(e) => errors.push(format!("formula:{}", e.tag())),
        }
    }
    let mut rho_stabilized = Vec::new();
    if routes.stabilized {
        let inside: Vec<usize> = schedule
            .iter()
            .copied()
            .filter(|&n| StabilizedModel::new(family, n).map(|m| m.contains_with_margin(lambda, config.margin)).unwrap_or(true))
            .collect();
        let mut computed = rho_stabilized_schedule(family, &inside, lambda).into_iter();
        for &n in schedule {
            let cell = if inside.contains(&n) {
                match computed.next().expect("one result per computed index") {
                    Ok(r) => StabilizedCell { n, value: Some(r.value), status: "ok".into() },
                    Err(e) => {
                        errors.push(format!("stabilized_{n}:{}", e.tag()));
                        StabilizedCell { n, value: None, status: e.tag().into() }
                    }
                }
            } else {
                StabilizedCell { n, value: None, status: "OutsideBand".into() }
            };
            rho_stabilized.push(cell);
        }
    }
    let (mut rho_resolvent, mut rho_resolvent_unc) = (None, None);
    if routes.resolvent {
        match resolvent_density(family, lambda, oracle) {
            Ok(r) => {
                rho_resolvent = Some(r.density.value);
                rho_resolvent_unc = Some(r.density.uncertainty);
            }
            Err(e) => errors.push(format!("resolvent:{}", e.tag())),
        }
    }
    let mut row = SweepRow {
        lambda,
        rho_formula,
        rho_formula_unc,
        rho_stabilized,
        rho_resolvent,
        rho_resolvent_unc,
        delta_oracle_rel: None,
        delta_stabilized_final: None,
        trend_flag: None,
        status: if errors.is_empty() { "ok".into() } else { errors.join(";") },
    };
    let d = row.recompute_deltas();
    row.delta_oracle_rel = d.delta_oracle_rel;
    row.delta_stabilized_final = d.delta_stabilized_final;
    row.trend_flag = d.trend_flag;
    row
}

/// Computes the selected routes at every grid point. Failures at one point
/// are recorded in that row; errors are returned only when a route cannot
/// be set up at all.
pub fn run_density_sweep(config: &RunConfig, routes: RouteSet, jobs: Option<usize>) -> Result<ComparisonReport> {
    let formula = if routes.formula { Some(build_formula(config)?) } else { None };
    let schedule = if routes.stabilized { config.resolve_n_schedule()? } else { Vec::new() };
    let mut eps = config.eps_schedule.clone();
    eps.reverse();
    let oracle = OracleOptions { eps, ..OracleOptions::default() };
    let grid = config.grid();
    let mut rows: Vec<SweepRow> = with_pool(jobs, || {
        grid.par_iter()
            .map(|&lambda| sweep_point(config, routes, formula.as_ref(), &schedule, &oracle, lambda))
            .collect()
    })?;
    rows.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let summary = summarize(config, routes, &rows);
    Ok(ComparisonReport { routes, n_schedule: schedule, rows, summary })
}
