//! Run configuration: dotted-key TOML text parsed and checked into a
//! [`RunConfig`].

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

use crate::critical::{pick_subsequence, SubsequenceRule};
use crate::error::SpectralError;
use crate::family::{
    CoefficientFamily, CriticalFamily, ExplicitFamily, FamilyKind, NonCriticalFamily, Perturbation, TailRule,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("configuration rejected: {0}")]
    Rejected(#[from] SpectralError),
}

impl ConfigError {
    fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Rejected(SpectralError::InvalidArgument(msg.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

/// Stabilization indices: listed explicitly, or chosen by the subsequence
/// rule of the critical family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NSchedule {
    Explicit { n: Vec<usize> },
    Subsequence { count: usize, rule: SubsequenceRule },
}

/// Pass thresholds of the sweep and of the invariant suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative gap between the formula route and the resolvent oracle.
    pub formula_vs_oracle: f64,
    /// Relative gap between the last stabilized value and the reference.
    pub stabilized_final: f64,
    /// Smallest share of rows whose stabilized deltas are nonincreasing.
    pub trend_fraction: f64,
    pub wronskian_constancy: f64,
    pub wronskian_identity: f64,
    /// Envelope-normalized decomposition error at the last start index.
    pub decomposition: f64,
    pub m_stabilization: f64,
    pub method_agreement: f64,
    /// Largest angle between branch values at adjacent grid points.
    pub branch_jump: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            formula_vs_oracle: 1e-2,
            stabilized_final: 1e-2,
            trend_fraction: 0.8,
            wronskian_constancy: 1e-10,
            wronskian_identity: 1e-3,
            decomposition: 5e-2,
            m_stabilization: 1e-14,
            method_agreement: 1e-10,
            branch_jump: std::f64::consts::FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct TestHooks {
    /// Seed the critical traces with `(1, 1)` instead of the refined
    /// direction.
    pub corrupt_seed: bool,
}

/// A checked run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: CoefficientFamily,
    pub window: (f64, f64),
    pub grid_points: usize,
    pub n_schedule: NSchedule,
    /// Imaginary shifts of the resolvent oracle, increasing.
    pub eps_schedule: Vec<f64>,
    pub n_seed_schedule: Vec<usize>,
    /// Stabilized cells need `lambda` this fraction of the band width inside
    /// the band.
    pub margin: f64,
    /// Fixed starting index of the critical chain; searched when absent.
    pub n0: Option<usize>,
    pub tolerances: Tolerances,
    pub output: OutputSpec,
    pub test_hooks: TestHooks,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    kind: FamilyKind,
    alpha: Option<f64>,
    p: Option<Perturbation>,
    q: Option<Perturbation>,
    beta: Option<f64>,
    d: Option<f64>,
    a: Option<Vec<f64>>,
    b: Option<Vec<f64>>,
    tail: Option<TailRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSubsequence {
    count: usize,
    n1: Option<usize>,
    tolerance: Option<f64>,
    ceiling: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSchedule {
    n: Option<Vec<usize>>,
    subsequence: Option<RawSubsequence>,
    eps: Option<Vec<f64>>,
    n_seed: Option<Vec<usize>>,
    margin: Option<f64>,
    n0: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    family: RawFamily,
    window: [f64; 2],
    grid_points: usize,
    #[serde(default)]
    schedule: RawSchedule,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    output: OutputSpec,
    #[serde(default)]
    test_hooks: TestHooks,
}

fn require<T>(value: Option<T>, key: &str, kind: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::Parse(format!("family.{key} is required for kind = \"{kind}\"")))
}

fn forbid<T>(value: &Option<T>, key: &str, kind: &str) -> Result<(), ConfigError> {
    match value {
        Some(_) => Err(ConfigError::Parse(format!("family.{key} does not apply to kind = \"{kind}\""))),
        None => Ok(()),
    }
}

fn build_family(raw: RawFamily) -> Result<CoefficientFamily, ConfigError> {
    let family: CoefficientFamily = match raw.kind {
        FamilyKind::Critical => {
            for (v, k) in [(&raw.beta, "beta"), (&raw.d, "d")] {
                forbid(v, k, "critical")?;
            }
            forbid(&raw.a, "a", "critical")?;
            forbid(&raw.b, "b", "critical")?;
            forbid(&raw.tail, "tail", "critical")?;
            CriticalFamily::with_perturbations(
                require(raw.alpha, "alpha", "critical")?,
                raw.p.unwrap_or_default(),
                raw.q.unwrap_or_default(),
            )
            .into()
        }
        FamilyKind::NonCritical => {
            forbid(&raw.alpha, "alpha", "non_critical")?;
            forbid(&raw.p, "p", "non_critical")?;
            forbid(&raw.q, "q", "non_critical")?;
            forbid(&raw.a, "a", "non_critical")?;
            forbid(&raw.b, "b", "non_critical")?;
            forbid(&raw.tail, "tail", "non_critical")?;
            NonCriticalFamily::new(require(raw.beta, "beta", "non_critical")?, require(raw.d, "d", "non_critical")?)
                .into()
        }
        FamilyKind::Explicit => {
            for (v, k) in [(&raw.alpha, "alpha"), (&raw.beta, "beta"), (&raw.d, "d")] {
                forbid(v, k, "explicit")?;
            }
            forbid(&raw.p, "p", "explicit")?;
            forbid(&raw.q, "q", "explicit")?;
            ExplicitFamily {
                a: raw.a.unwrap_or_default(),
                b: raw.b.unwrap_or_default(),
                tail: require(raw.tail, "tail", "explicit")?,
            }
            .into()
        }
    };
    family.validate()?;
    if let CoefficientFamily::Explicit(f) = &family {
        if let Some((i, v)) = f.a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(SpectralError::NonPositiveEntry { n: i + 1, value: *v }.into());
        }
        let tail_ok = match f.tail {
            TailRule::Constant { a, .. } => a > 0.0,
            TailRule::PowerLaw { a_scale, .. } => a_scale > 0.0,
        };
        if !tail_ok {
            return Err(ConfigError::invalid("explicit tail must have positive off-diagonal entries"));
        }
    }
    Ok(family)
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

fn default_seeds(family: &CoefficientFamily) -> Vec<usize> {
    match family {
        CoefficientFamily::NonCritical(_) => vec![4096, 8192, 16_384],
        _ => vec![32_768, 65_536, 131_072],
    }
}

/// Oracle shifts `h, 2h, 4h`; the non-critical families grow faster, so the
/// oracle can afford a larger base shift there.
fn default_eps(family: &CoefficientFamily) -> Vec<f64> {
    let h = match family {
        CoefficientFamily::NonCritical(_) => 1e-2,
        _ => 1e-3,
    };
    vec![h, 2.0 * h, 4.0 * h]
}

/// Parses configuration text and checks it structurally.
pub fn validate_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
    let family = build_family(raw.family)?;

    let [lo, hi] = raw.window;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(ConfigError::invalid(format!("window [{lo}, {hi}] must be finite with lo < hi")));
    }
    if family.kind() == FamilyKind::Critical && hi >= 0.0 {
        return Err(SpectralError::HypothesisViolation {
            condition: "critical window inside r < |lambda| < R on the negative axis",
            detail: format!("window [{lo}, {hi}] touches or crosses 0"),
        }
        .into());
    }
    if raw.grid_points < 2 {
        return Err(ConfigError::invalid(format!("grid_points = {} must be at least 2", raw.grid_points)));
    }

    let s = raw.schedule;
    let n_schedule = match (s.n, s.subsequence) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Parse("give either schedule.n or schedule.subsequence, not both".into()))
        }
        (Some(n), None) => {
            if n.is_empty() || n[0] == 0 || !strictly_increasing(&n) {
                return Err(ConfigError::invalid("schedule.n must be nonempty, positive and strictly increasing"));
            }
            NSchedule::Explicit { n }
        }
        (None, Some(sub)) => {
            if family.kind() != FamilyKind::Critical {
                return Err(ConfigError::invalid("schedule.subsequence needs a critical family"));
            }
            if sub.count == 0 {
                return Err(ConfigError::invalid("schedule.subsequence.count must be positive"));
            }
            let d = SubsequenceRule::default();
            let rule = SubsequenceRule {
                n1: sub.n1.unwrap_or(d.n1),
                tolerance: sub.tolerance.unwrap_or(d.tolerance),
                ceiling: sub.ceiling.unwrap_or(d.ceiling),
            };
            if rule.n1 == 0 || !(rule.tolerance > 0.0) {
                return Err(ConfigError::invalid("schedule.subsequence needs n1 >= 1 and tolerance > 0"));
            }
            NSchedule::Subsequence { count: sub.count, rule }
        }
        (None, None) => NSchedule::Explicit { n: vec![1000, 4000, 16_000, 64_000] },
    };

    let eps_schedule = s.eps.unwrap_or_else(|| default_eps(&family));
    if eps_schedule.is_empty() || eps_schedule.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(ConfigError::invalid("schedule.eps must be nonempty with positive finite entries"));
    }
    if !strictly_increasing(&eps_schedule) {
        return Err(ConfigError::invalid("schedule.eps must be strictly increasing"));
    }
    let n_seed_schedule = s.n_seed.unwrap_or_else(|| default_seeds(&family));
    if n_seed_schedule.len() < 2 || n_seed_schedule[0] < 3 || !strictly_increasing(&n_seed_schedule) {
        return Err(ConfigError::invalid(
            "schedule.n_seed needs at least two strictly increasing entries, all >= 3",
        ));
    }
    let margin = s.margin.unwrap_or(0.01);
    if !(0.0..0.5).contains(&margin) {
        return Err(ConfigError::invalid(format!("schedule.margin = {margin} must lie in [0, 0.5)")));
    }
    if let Some(n0) = s.n0 {
        if family.kind() != FamilyKind::Critical || n0 < 2 {
            return Err(ConfigError::invalid("schedule.n0 needs a critical family and a value >= 2"));
        }
    }
    let t = raw.tolerances;
    let tol_values = [
        t.formula_vs_oracle,
        t.stabilized_final,
        t.wronskian_constancy,
        t.wronskian_identity,
        t.decomposition,
        t.m_stabilization,
        t.method_agreement,
        t.branch_jump,
    ];
    if tol_values.iter().any(|v| !(*v > 0.0)) || !(0.0..=1.0).contains(&t.trend_fraction) {
        return Err(ConfigError::invalid("tolerances must be positive; trend_fraction must lie in [0, 1]"));
    }
    if raw.test_hooks.corrupt_seed && family.kind() != FamilyKind::Critical {
        return Err(ConfigError::invalid("test_hooks.corrupt_seed applies to critical families only"));
    }

    Ok(RunConfig {
        family,
        window: (lo, hi),
        grid_points: raw.grid_points,
        n_schedule,
        eps_schedule,
        n_seed_schedule,
        margin,
        n0: s.n0,
        tolerances: t,
        output: raw.output,
        test_hooks: raw.test_hooks,
    })
}

impl RunConfig {
    /// `grid_points` equally spaced values covering the window.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.window;
        let last = self.grid_points - 1;
        (0..self.grid_points)
            .map(|k| if k == last { hi } else { lo + (hi - lo) * k as f64 / last as f64 })
            .collect()
    }

    /// The stabilization indices, running the subsequence rule if configured.
    pub fn resolve_n_schedule(&self) -> crate::error::Result<Vec<usize>> {
        match &self.n_schedule {
            NSchedule::Explicit { n } => Ok(n.clone()),
            NSchedule::Subsequence { count, rule } => pick_subsequence(self.family.as_critical()?, *count, rule),
        }
    }
}
