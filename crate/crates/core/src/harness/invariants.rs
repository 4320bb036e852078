//! Module-level invariant checks run over a configured grid.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::sweep::{critical_options, noncritical_options, with_pool};
use crate::critical::CriticalPipeline;
use crate::error::Result;
use crate::family::{CoefficientFamily, CriticalFamily, JacobiCoefficients, NonCriticalFamily};
use crate::levinson::chain_at;
use crate::noncritical::{mu_pm, NonCriticalPipeline};
use crate::stabilized::{z_branch, StabilizedModel};

/// Start indices of the decomposition windows `[n, 2n]`.
pub const DECOMPOSITION_STARTS: [usize; 2] = [1000, 10_000];

/// Indices probed by the branch-continuity checks of the non-critical family.
pub const MU_BRANCH_INDICES: [usize; 3] = [16, 256, 4096];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantEntry {
    pub name: String,
    /// Absent for checks that span the whole grid.
    pub lambda: Option<f64>,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub entries: Vec<InvariantEntry>,
    pub passed: bool,
}

impl InvariantReport {
    pub fn entries_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a InvariantEntry> + 'a {
        self.entries.iter().filter(move |e| e.name == name)
    }

    /// Whether every entry with this name passed; `None` when there is none.
    pub fn all_passed(&self, name: &str) -> Option<bool> {
        let mut it = self.entries_named(name).peekable();
        it.peek()?;
        Some(it.all(|e| e.passed))
    }
}

fn upper(name: &str, lambda: Option<f64>, value: f64, tolerance: f64, detail: String) -> InvariantEntry {
    InvariantEntry { name: name.into(), lambda, value, tolerance, passed: value <= tolerance, detail }
}

fn flag(name: &str, lambda: f64, ok: bool, detail: String) -> InvariantEntry {
    InvariantEntry {
        name: name.into(),
        lambda: Some(lambda),
        value: if ok { 1.0 } else { 0.0 },
        tolerance: 1.0,
        passed: ok,
        detail,
    }
}

fn failure(name: &str, lambda: Option<f64>, tolerance: f64, err: impl std::fmt::Display) -> InvariantEntry {
    InvariantEntry {
        name: name.into(),
        lambda,
        value: f64::INFINITY,
        tolerance,
        passed: false,
        detail: format!("not computed: {err}"),
    }
}

/// About `count` distinct, roughly log-spaced integers in `[lo, hi]`.
pub fn log_sample(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp().round() as usize)
        .collect();
    out[0] = lo;
    *out.last_mut().unwrap() = hi;
    out.dedup();
    out
}

/// Largest angle between consecutive values, `|arg(v_{k+1} / v_k)|`. A sign
/// flip of a square root branch shows up as a jump near `pi`.
pub fn max_branch_jump(values: &[Complex64]) -> f64 {
    values.windows(2).map(|w| (w[1] * w[0].conj()).arg().abs()).fold(0.0, f64::max)
}

fn branch_entry(name: String, values: &[Complex64], tolerance: f64) -> InvariantEntry {
    let jump = max_branch_jump(values);
    upper(&name, None, jump, tolerance, format!("{} grid points", values.len()))
}

fn z_branch_entries(config: &RunConfig, family: &dyn JacobiCoefficients, grid: &[f64]) -> Vec<InvariantEntry> {
    let tol = config.tolerances.branch_jump;
    let schedule = match config.resolve_n_schedule() {
        Ok(s) => s,
        Err(e) => return vec![failure("branch_z", None, tol, e)],
    };
    schedule
        .iter()
        .filter_map(|&n| {
            let model = StabilizedModel::new(family, n).ok()?;
            let values: Vec<Complex64> = grid
                .iter()
                .filter(|&&l| model.contains(l))
                .map(|&l| z_branch(Complex64::new(l, 0.0), model.a_n, model.b_n).z)
                .collect();
            (values.len() >= 2).then(|| branch_entry(format!("branch_z_n{n}"), &values, tol))
        })
        .collect()
}

fn critical_point(config: &RunConfig, p: &CriticalPipeline<'_>, lambda: f64) -> Vec<InvariantEntry> {
    let t = &config.tolerances;
    let mut out = Vec::new();
    match p.wronskian_identity_check(lambda, &log_sample(2, 100_000, 24)) {
        Ok(w) => {
            let devs: Vec<String> = w.per_seed.iter().map(|s| format!("{}:{:e}", s.seed, s.deviation)).collect();
            out.push(upper("wronskian_constancy", Some(lambda), w.constancy, t.wronskian_constancy, format!(
                "{} indices in [2, {}]",
                w.sample_indices.len(),
                w.sample_indices.last().copied().unwrap_or(0)
            )));
            out.push(upper("wronskian_identity", Some(lambda), w.deviation, t.wronskian_identity, devs.join(" ")));
            out.push(flag("wronskian_trend", lambda, w.deviation_decreasing, devs.join(" ")));
            out.push(flag("wronskian_sign", lambda, w.sign_ok, format!("W = {:e}", w.extrapolated.im)));
        }
        Err(e) => out.push(failure("wronskian_identity", Some(lambda), t.wronskian_identity, e)),
    }
    match p.decomposition_check(lambda, &DECOMPOSITION_STARTS, None) {
        Ok(d) => {
            let (first, last) = (d.entries[0].max_error, d.entries[1].max_error);
            let detail = format!("n=1000: {first:e}, n=10000: {last:e}");
            out.push(upper("decomposition", Some(lambda), last, t.decomposition, detail.clone()));
            out.push(flag("decomposition_trend", lambda, last < first, detail));
        }
        Err(e) => out.push(failure("decomposition", Some(lambda), t.decomposition, e)),
    }
    match p.method_agreement(lambda, p.seeds()[0]) {
        Ok(m) => {
            let tol = t.method_agreement.min(m.tail_bound);
            out.push(upper("method_agreement", Some(lambda), m.max_deviation, tol, format!(
                "tail bound {:e}, {} Neumann terms",
                m.tail_bound, m.terms_used
            )));
        }
        Err(e) => out.push(failure("method_agreement", Some(lambda), t.method_agreement, e)),
    }
    out
}

fn critical_suite(config: &RunConfig, family: &CriticalFamily, grid: &[f64]) -> Vec<InvariantEntry> {
    let t = &config.tolerances;
    let p = match CriticalPipeline::new(family, critical_options(config)) {
        Ok(p) => p,
        Err(e) => return vec![failure("pipeline_setup", None, 0.0, e)],
    };
    let mut out: Vec<InvariantEntry> = grid.par_iter().flat_map_iter(|&l| critical_point(config, &p, l)).collect();
    for n in [p.n0(), p.seeds()[0]] {
        let values: Result<Vec<Complex64>> =
            grid.iter().map(|&l| chain_at(family, n, Complex64::new(l, 0.0)).map(|q| q.sqrt_chi)).collect();
        out.push(match values {
            Ok(v) => branch_entry(format!("branch_sqrt_chi_n{n}"), &v, t.branch_jump),
            Err(e) => failure(&format!("branch_sqrt_chi_n{n}"), None, t.branch_jump, e),
        });
    }
    out.extend(z_branch_entries(config, family, grid));
    out
}

fn noncritical_point(
    config: &RunConfig,
    p: &NonCriticalPipeline<'_, NonCriticalFamily>,
    lambda: f64,
) -> Vec<InvariantEntry> {
    let t = &config.tolerances;
    let mut out = Vec::new();
    match p.m(lambda) {
        Ok(m) => out.push(upper("m_stabilization", Some(lambda), m.drift, t.m_stabilization, format!(
            "L = {}, horizon = {}, M = {:e}",
            m.stabilization_index, m.horizon, m.m
        ))),
        Err(e) => out.push(failure("m_stabilization", Some(lambda), t.m_stabilization, e)),
    }
    match p.wronskian_check(lambda) {
        Ok(w) => {
            let devs: Vec<String> = w.per_seed.iter().map(|(s, _, d)| format!("{s}:{d:e}")).collect();
            out.push(upper("wronskian_identity", Some(lambda), w.extrapolated_deviation, t.wronskian_identity, devs.join(" ")));
            out.push(flag("wronskian_trend", lambda, w.deviation_decreasing, devs.join(" ")));
        }
        Err(e) => out.push(failure("wronskian_identity", Some(lambda), t.wronskian_identity, e)),
    }
    match p.decomposition_check(lambda, &DECOMPOSITION_STARTS) {
        Ok(d) => {
            let (first, last) = (d[0].1, d[1].1);
            let detail = format!("n=1000: {first:e}, n=10000: {last:e}");
            out.push(upper("decomposition", Some(lambda), last, t.decomposition, detail.clone()));
            out.push(flag("decomposition_trend", lambda, last < first, detail));
        }
        Err(e) => out.push(failure("decomposition", Some(lambda), t.decomposition, e)),
    }
    out
}

fn noncritical_suite(config: &RunConfig, family: &NonCriticalFamily, grid: &[f64]) -> Vec<InvariantEntry> {
    let t = &config.tolerances;
    let p = match NonCriticalPipeline::new(family, noncritical_options(config)) {
        Ok(p) => p,
        Err(e) => return vec![failure("pipeline_setup", None, 0.0, e)],
    };
    let mut out: Vec<InvariantEntry> = grid.par_iter().flat_map_iter(|&l| noncritical_point(config, &p, l)).collect();
    for n in MU_BRANCH_INDICES {
        let values: Vec<Complex64> = grid.iter().map(|&l| mu_pm(family, n, Complex64::new(l, 0.0)).1).collect();
        out.push(branch_entry(format!("branch_mu_minus_n{n}"), &values, t.branch_jump));
    }
    out.extend(z_branch_entries(config, family, grid));
    out
}

/// Runs every check that applies to the configured family. Failures,
/// including checks that could not be computed, are report entries.
pub fn run_invariant_suite(config: &RunConfig, jobs: Option<usize>) -> Result<InvariantReport> {
    let grid = config.grid();
    let entries = with_pool(jobs, || match &config.family {
        CoefficientFamily::Critical(f) => critical_suite(config, f, &grid),
        CoefficientFamily::NonCritical(f) => noncritical_suite(config, f, &grid),
        CoefficientFamily::Explicit(f) => z_branch_entries(config, f, &grid),
    })?;
    Ok(InvariantReport { passed: entries.iter().all(|e| e.passed), entries })
}
