//! Coefficient families generating the Jacobi entries `(a_n, b_n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpectralError};

/// Source of Jacobi entries, indexed from 1.
///
/// Implementations must be pure: the same index always gives the same entry.
pub trait JacobiCoefficients: Sync {
    /// Off-diagonal entry `a_n`, `n >= 1`.
    fn a(&self, n: usize) -> f64;
    /// Diagonal entry `b_n`, `n >= 1`.
    fn b(&self, n: usize) -> f64;

    /// `a_{n-1}` with the convention `a_0 = 1`.
    fn a_prev(&self, n: usize) -> f64 {
        if n <= 1 {
            1.0
        } else {
            self.a(n - 1)
        }
    }
}

impl<T: JacobiCoefficients + ?Sized> JacobiCoefficients for &T {
    fn a(&self, n: usize) -> f64 {
        (**self).a(n)
    }
    fn b(&self, n: usize) -> f64 {
        (**self).b(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPair {
    pub n: usize,
    pub a: f64,
    pub b: f64,
}

/// Decaying correction added to the critical entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    #[default]
    Zero,
    /// `coeff * n^(-exponent)`
    Power { coeff: f64, exponent: f64 },
    /// `values[n-1]` for `n <= values.len()`, zero afterwards.
    Table { values: Vec<f64> },
}

impl Perturbation {
    #[inline]
    pub fn at(&self, n: usize) -> f64 {
        match self {
            Perturbation::Zero => 0.0,
            Perturbation::Power { coeff, exponent } => coeff * (n as f64).powf(-exponent),
            Perturbation::Table { values } => values.get(n - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Perturbation::Zero => true,
            Perturbation::Power { coeff, .. } => *coeff == 0.0,
            Perturbation::Table { values } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Decay exponent of a power rule; tables decay arbitrarily fast.
    pub fn decay_exponent(&self) -> f64 {
        match self {
            Perturbation::Power { coeff, exponent } if *coeff != 0.0 => *exponent,
            _ => f64::INFINITY,
        }
    }
}

/// `a_n = n^alpha + p_n`, `b_n = -2 n^alpha + q_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalFamily {
    pub alpha: f64,
    #[serde(default)]
    pub p: Perturbation,
    #[serde(default)]
    pub q: Perturbation,
}

impl CriticalFamily {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, p: Perturbation::Zero, q: Perturbation::Zero }
    }

    pub fn with_perturbations(alpha: f64, p: Perturbation, q: Perturbation) -> Self {
        Self { alpha, p, q }
    }

    pub fn is_unperturbed(&self) -> bool {
        self.p.is_zero() && self.q.is_zero()
    }

    /// Checks `0 < alpha < 1` and summability of `p_n / n^(alpha/2)` and
    /// `q_n / n^(alpha/2)`, which for a power rule means `s > 1 - alpha/2`.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(SpectralError::HypothesisViolation {
                condition: "0 < alpha < 1",
                detail: format!("alpha = {}", self.alpha),
            });
        }
        let threshold = 1.0 - self.alpha / 2.0;
        for (name, pert) in [("p", &self.p), ("q", &self.q)] {
            if let Perturbation::Power { coeff, exponent } = pert {
                if *coeff != 0.0 && !(*exponent > threshold) {
                    return Err(SpectralError::HypothesisViolation {
                        condition: "perturbation / n^(alpha/2) summable",
                        detail: format!(
                            "{name}_n = {coeff} n^-{exponent}: need exponent > 1 - alpha/2 = {threshold}"
                        ),
                    });
                }
            }
            if let Perturbation::Table { values } = pert {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(SpectralError::InvalidArgument(format!("{name} table has non-finite entries")));
                }
            }
        }
        Ok(())
    }
}

impl JacobiCoefficients for CriticalFamily {
    #[inline]
    fn a(&self, n: usize) -> f64 {
        (n as f64).powf(self.alpha) + self.p.at(n)
    }
    #[inline]
    fn b(&self, n: usize) -> f64 {
        -2.0 * (n as f64).powf(self.alpha) + self.q.at(n)
    }
}

/// `a_n = n^beta`, `b_n = 2 d a_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonCriticalFamily {
    pub beta: f64,
    pub d: f64,
}

impl NonCriticalFamily {
    pub fn new(beta: f64, d: f64) -> Self {
        Self { beta, d }
    }

    /// Rejects `|d| >= 1` and exponents for which `1/a_n` does not tend to
    /// zero or `sum 1/a_n` converges.
    pub fn validate(&self) -> Result<()> {
        if !self.d.is_finite() || self.d.abs() >= 1.0 {
            let hint = if self.d.abs() == 1.0 {
                "this is the critical case; use a critical family (d = -1 maps to it)"
            } else {
                "a dominating main diagonal gives discrete spectrum; not supported"
            };
            return Err(SpectralError::CriticalParameter { d: self.d, hint });
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(SpectralError::HypothesisViolation {
                condition: "1/a_n -> 0 and sum 1/a_n = infinity",
                detail: format!("a_n = n^{} needs 0 < beta <= 1", self.beta),
            });
        }
        Ok(())
    }
}

impl JacobiCoefficients for NonCriticalFamily {
    #[inline]
    fn a(&self, n: usize) -> f64 {
        (n as f64).powf(self.beta)
    }
    #[inline]
    fn b(&self, n: usize) -> f64 {
        2.0 * self.d * (n as f64).powf(self.beta)
    }
}

/// Entries after the explicit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailRule {
    Constant { a: f64, b: f64 },
    /// `a_n = a_scale n^a_exponent`, `b_n = b_scale n^b_exponent`.
    PowerLaw { a_scale: f64, a_exponent: f64, b_scale: f64, b_exponent: f64 },
}

/// Finite tables of `a_n` and `b_n` (from `n = 1`) followed by a tail rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitFamily {
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
    pub tail: TailRule,
}

impl ExplicitFamily {
    /// The free matrix `a_n = 1`, `b_n = 0`.
    pub fn free() -> Self {
        Self { a: vec![], b: vec![], tail: TailRule::Constant { a: 1.0, b: 0.0 } }
    }

    /// Free tail with a prescribed head of the diagonal.
    pub fn free_with_diagonal(b: Vec<f64>) -> Self {
        Self { a: vec![], b, tail: TailRule::Constant { a: 1.0, b: 0.0 } }
    }

    fn tail_a(&self, n: usize) -> f64 {
        match self.tail {
            TailRule::Constant { a, .. } => a,
            TailRule::PowerLaw { a_scale, a_exponent, .. } => a_scale * (n as f64).powf(a_exponent),
        }
    }

    fn tail_b(&self, n: usize) -> f64 {
        match self.tail {
            TailRule::Constant { b, .. } => b,
            TailRule::PowerLaw { b_scale, b_exponent, .. } => b_scale * (n as f64).powf(b_exponent),
        }
    }
}

impl JacobiCoefficients for ExplicitFamily {
    #[inline]
    fn a(&self, n: usize) -> f64 {
        match self.a.get(n - 1) {
            Some(v) => *v,
            None => self.tail_a(n),
        }
    }
    #[inline]
    fn b(&self, n: usize) -> f64 {
        match self.b.get(n - 1) {
            Some(v) => *v,
            None => self.tail_b(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Critical,
    NonCritical,
    Explicit,
}

/// Any of the supported coefficient rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientFamily {
    Critical(CriticalFamily),
    NonCritical(NonCriticalFamily),
    Explicit(ExplicitFamily),
}

impl CoefficientFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            CoefficientFamily::Critical(_) => FamilyKind::Critical,
            CoefficientFamily::NonCritical(_) => FamilyKind::NonCritical,
            CoefficientFamily::Explicit(_) => FamilyKind::Explicit,
        }
    }

    pub fn as_critical(&self) -> Result<&CriticalFamily> {
        match self {
            CoefficientFamily::Critical(f) => Ok(f),
            _ => Err(SpectralError::WrongFamily { expected: "critical" }),
        }
    }

    pub fn as_noncritical(&self) -> Result<&NonCriticalFamily> {
        match self {
            CoefficientFamily::NonCritical(f) => Ok(f),
            _ => Err(SpectralError::WrongFamily { expected: "non-critical" }),
        }
    }

    /// Structural hypothesis checks of the rule (no numerics).
    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientFamily::Critical(f) => f.validate(),
            CoefficientFamily::NonCritical(f) => f.validate(),
            CoefficientFamily::Explicit(_) => Ok(()),
        }
    }

    /// Verifies `a_n > 0` for `1 <= n <= horizon`.
    pub fn check_positive(&self, horizon: usize) -> Result<()> {
        for n in 1..=horizon {
            let a = self.a(n);
            if !(a > 0.0) {
                return Err(SpectralError::NonPositiveEntry { n, value: a });
            }
        }
        Ok(())
    }
}

impl JacobiCoefficients for CoefficientFamily {
    #[inline]
    fn a(&self, n: usize) -> f64 {
        match self {
            CoefficientFamily::Critical(f) => f.a(n),
            CoefficientFamily::NonCritical(f) => f.a(n),
            CoefficientFamily::Explicit(f) => f.a(n),
        }
    }
    #[inline]
    fn b(&self, n: usize) -> f64 {
        match self {
            CoefficientFamily::Critical(f) => f.b(n),
            CoefficientFamily::NonCritical(f) => f.b(n),
            CoefficientFamily::Explicit(f) => f.b(n),
        }
    }
}

impl From<CriticalFamily> for CoefficientFamily {
    fn from(f: CriticalFamily) -> Self {
        CoefficientFamily::Critical(f)
    }
}

impl From<NonCriticalFamily> for CoefficientFamily {
    fn from(f: NonCriticalFamily) -> Self {
        CoefficientFamily::NonCritical(f)
    }
}

impl From<ExplicitFamily> for CoefficientFamily {
    fn from(f: ExplicitFamily) -> Self {
        CoefficientFamily::Explicit(f)
    }
}

/// The checked entry pair at index `n`.
pub fn coeffs<C: JacobiCoefficients + ?Sized>(family: &C, n: usize) -> Result<CoefficientPair> {
    if n == 0 {
        return Err(SpectralError::InvalidArgument("coefficient index starts at 1".into()));
    }
    let a = family.a(n);
    if !(a > 0.0) {
        return Err(SpectralError::NonPositiveEntry { n, value: a });
    }
    Ok(CoefficientPair { n, a, b: family.b(n) })
}

/// What the partial sums of `1/a_n` suggest about the Carleman condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CarlemanEvidence {
    /// The last dyadic block contributed at least as much as the one before
    /// it, as for `a_n` growing no faster than `n`.
    Growing,
    /// Dyadic block contributions are shrinking; the series may converge.
    PossiblyConvergent,
    /// Horizon too short to compare two dyadic blocks.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlemanReport {
    pub horizon: usize,
    pub partial_sum: f64,
    /// Sum of `1/a_n` over `(horizon/2, horizon]`.
    pub last_block: f64,
    /// Sum of `1/a_n` over `(horizon/4, horizon/2]`.
    pub previous_block: f64,
    pub evidence: CarlemanEvidence,
}

/// Partial sum of `1/a_n` up to `horizon` with a growth indicator.
///
/// Divergence of an infinite series is never decided here; the indicator only
/// compares the last two dyadic blocks of terms.
pub fn carleman_divergence_check<C: JacobiCoefficients + ?Sized>(family: &C, horizon: usize) -> CarlemanReport {
    let horizon = horizon.max(1);
    let half = horizon / 2;
    let quarter = horizon / 4;
    let mut total = 0.0;
    let mut last_block = 0.0;
    let mut previous_block = 0.0;
    for n in 1..=horizon {
        let term = 1.0 / family.a(n);
        total += term;
        if n > half {
            last_block += term;
        } else if n > quarter {
            previous_block += term;
        }
    }
    let evidence = if horizon < 4 {
        CarlemanEvidence::Inconclusive
    } else if last_block >= previous_block * (1.0 - 1e-9) {
        CarlemanEvidence::Growing
    } else {
        CarlemanEvidence::PossiblyConvergent
    };
    CarlemanReport { horizon, partial_sum: total, last_block, previous_block, evidence }
}
