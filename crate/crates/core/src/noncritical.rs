//! Density of Jacobi matrices whose transfer matrices tend to an elliptic
//! limit with eigenvalues `-d +- i sqrt(1 - d^2)`, `|d| < 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::critical::{propagate, u0_minus_of, SolutionTrace, TraceMethod};
use crate::density::{DensityResult, Route};
use crate::error::{Result, SpectralError};
use crate::extrapolate::richardson;
use crate::family::{JacobiCoefficients, NonCriticalFamily};
use crate::logspace::{CompensatedSum, LogProduct};
use crate::recurrence::orthopoly_real;
use crate::stabilized::unit_root;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Elliptic,
    Hyperbolic,
    Parabolic,
}

/// Position of a real `lambda` relative to `b_n -+ 2 sqrt(a_{n-1} a_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticInfo {
    pub n: usize,
    pub lambda_minus_edge: f64,
    pub lambda_plus_edge: f64,
    pub regime: Regime,
}

pub fn elliptic_info<C: JacobiCoefficients + ?Sized>(family: &C, n: usize, lambda: f64) -> EllipticInfo {
    let half = 2.0 * (family.a_prev(n) * family.a(n)).sqrt();
    let b = family.b(n);
    let (lo, hi) = (b - half, b + half);
    let regime = if lambda > lo && lambda < hi {
        Regime::Elliptic
    } else if lambda == lo || lambda == hi {
        Regime::Parabolic
    } else {
        Regime::Hyperbolic
    };
    EllipticInfo { n, lambda_minus_edge: lo, lambda_plus_edge: hi, regime }
}

/// Eigenvalues `(mu+, mu-)` of the transfer matrix at `n >= 2`, with
/// `sqrt(a_n/a_{n-1}) mu-` in the closed lower half of the unit disk and
/// `mu+ = (a_{n-1}/a_n) / mu-`.
pub fn mu_pm<C: JacobiCoefficients + ?Sized>(family: &C, n: usize, lambda: Complex64) -> (Complex64, Complex64) {
    let ratio = family.a_prev(n) / family.a(n);
    let root = ratio.sqrt();
    let w = (lambda - family.b(n)) / (2.0 * family.a(n));
    let minus = unit_root(w / root).z * root;
    (minus.inv() * ratio, minus)
}

/// `M(lambda)` and the index from which the partial products stop changing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MEstimate {
    pub m: f64,
    /// First index `L` with the elliptic regime holding on `[L, horizon]`.
    pub stabilization_index: usize,
    pub horizon: usize,
    /// Largest relative change of `sqrt(a_n) prod |mu-_l|` over `[L, horizon]`.
    pub drift: f64,
}

/// Default cap on the elliptic-onset scan.
pub const ONSET_CEILING: usize = 1 << 24;

/// Scans for the elliptic onset and verifies it up to `max(16 L, 4096)`.
pub fn m_of<C: JacobiCoefficients + ?Sized>(family: &C, lambda: f64) -> Result<MEstimate> {
    m_of_with(family, lambda, ONSET_CEILING)
}

pub fn m_of_with<C: JacobiCoefficients + ?Sized>(family: &C, lambda: f64, ceiling: usize) -> Result<MEstimate> {
    let horizon_of = |l: usize| (16 * l).max(4096);
    let mut onset = 2usize;
    let mut n = 2usize;
    while n <= horizon_of(onset) {
        if elliptic_info(family, n, lambda).regime != Regime::Elliptic {
            onset = n + 1;
            if onset > ceiling {
                return Err(SpectralError::NoStabilization { ceiling });
            }
        }
        n += 1;
    }
    let horizon = horizon_of(onset);
    let lam = Complex64::new(lambda, 0.0);
    let mut sum = CompensatedSum::new();
    let mut reference = 0.0;
    let mut drift = 0.0f64;
    for l in 2..=horizon {
        add_log_modulus(&mut sum, family, l, lam);
        if l >= onset {
            let partial = 0.5 * family.a(l).ln() + sum.value();
            if l == onset {
                reference = partial;
            }
            drift = drift.max((partial - reference).exp_m1().abs());
        }
    }
    Ok(MEstimate { m: reference.exp(), stabilization_index: onset, horizon, drift })
}

/// Adds `ln |mu-_l|` to `sum`. In the elliptic regime the factor is split as
/// `sqrt(a_{l-1}/a_l) z` with `|z| = 1` up to rounding, so the `ln a` parts
/// cancel exactly across consecutive indices and `|z|^2 - 1` is formed with
/// fused multiply-adds.
fn add_log_modulus<C: JacobiCoefficients + ?Sized>(sum: &mut CompensatedSum, family: &C, l: usize, lambda: Complex64) {
    let (a_prev, a) = (family.a_prev(l), family.a(l));
    let root = (a_prev / a).sqrt();
    let w = (lambda - family.b(l)) / (2.0 * a);
    let z = unit_root(w / root).z;
    sum.add(0.5 * a_prev.ln());
    sum.add(-0.5 * a.ln());
    let excess = z.im.mul_add(z.im, z.re.mul_add(z.re, -1.0));
    sum.add(0.5 * excess.ln_1p());
}

/// The decaying solution over `1 ..= n_max`, seeded with
/// `prod_{l=2}^{N-1} mu-_l * (1, mu-_N)` at `N = n_seed`.
pub fn u_minus_noncritical<C: JacobiCoefficients + ?Sized>(
    family: &C,
    lambda: Complex64,
    n_max: usize,
    n_seed: usize,
) -> Result<SolutionTrace> {
    if n_seed < 3 || n_max < n_seed {
        return Err(SpectralError::InvalidArgument(format!(
            "need 3 <= N_seed <= n_max, got N_seed = {n_seed}, n_max = {n_max}"
        )));
    }
    let mut prod = LogProduct::new();
    for l in 2..n_seed {
        prod.push(mu_pm(family, l, lambda).1);
    }
    let (plus, minus) = mu_pm(family, n_seed, lambda);
    let gap = (plus - minus).norm();
    if gap < 1e-8 {
        return Err(SpectralError::SeedDegenerate { n: n_seed, gap });
    }
    let values = propagate(family, lambda, n_seed, Complex64::new(1.0, 0.0), minus, prod.value(), n_max);
    Ok(SolutionTrace {
        lambda,
        start: 1,
        values,
        seed_index: n_seed,
        method: TraceMethod::BackwardRecurrence,
        n0: 2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCriticalOptions {
    /// Increasing seeds; doubled together until the smallest is `>= 8 L`.
    pub seeds: Vec<usize>,
    /// Refuse `|lambda|` above this value.
    pub max_abs_lambda: f64,
    pub onset_ceiling: usize,
}

impl Default for NonCriticalOptions {
    fn default() -> Self {
        Self { seeds: vec![4096, 8192, 16_384], max_abs_lambda: 1e3, onset_ceiling: ONSET_CEILING }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonCriticalInputs {
    pub m: f64,
    pub z_limit: Complex64,
    pub u0_minus: Complex64,
    pub psi: Complex64,
    pub stabilization_index: usize,
    pub u0_sq_uncertainty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCriticalEvaluation {
    pub result: DensityResult,
    pub inputs: NonCriticalInputs,
    /// The density through `Psi`.
    pub alternative: f64,
    pub seeds: Vec<usize>,
    pub m: MEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonCriticalWronskian {
    pub lambda: f64,
    pub expected: Complex64,
    /// `(seed, W, relative deviation)`.
    pub per_seed: Vec<(usize, Complex64, f64)>,
    pub extrapolated_deviation: f64,
    pub deviation_decreasing: bool,
}

/// Non-critical pipeline over a family with limit ratio `b_n/a_n -> 2d`.
#[derive(Debug, Clone)]
pub struct NonCriticalPipeline<'a, C: ?Sized> {
    family: &'a C,
    d: f64,
    options: NonCriticalOptions,
    seed_exponents: [f64; 2],
}

impl<'a> NonCriticalPipeline<'a, NonCriticalFamily> {
    pub fn new(family: &'a NonCriticalFamily, options: NonCriticalOptions) -> Result<Self> {
        family.validate()?;
        let pipeline = Self::for_family(family, family.d, options)?;
        Ok(pipeline.with_seed_exponents(seed_error_orders(family)))
    }
}

/// Orders in `1/N_seed` of the seed error for `a_n = n^beta, b_n = 2d a_n`.
/// The amplitude correction sums the `O(n^(-beta-1))` increments of
/// `(lambda - b_n)/(2 a_n)` over the tail, giving `N^(-beta)`; that term is
/// absent when `d = 0`, leaving the `1/N` and `1/N^2` orders.
pub fn seed_error_orders(family: &NonCriticalFamily) -> [f64; 2] {
    if family.d != 0.0 && family.beta < 1.0 {
        [family.beta, 1.0]
    } else {
        [1.0, 2.0]
    }
}

impl<'a, C: JacobiCoefficients + ?Sized> NonCriticalPipeline<'a, C> {
    /// Any family with bounded-variation ratios and the stated limit `d`.
    pub fn for_family(family: &'a C, d: f64, options: NonCriticalOptions) -> Result<Self> {
        if !(d.abs() < 1.0) {
            return Err(SpectralError::CriticalParameter {
                d,
                hint: "the formula needs |d| < 1; d = +-1 is the critical case",
            });
        }
        if options.seeds.is_empty() || options.seeds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpectralError::InvalidArgument("seed schedule must be nonempty and strictly increasing".into()));
        }
        Ok(Self { family, d, options, seed_exponents: [1.0, 2.0] })
    }

    /// Richardson orders used across the seed schedule; `[1, 2]` unless set.
    pub fn with_seed_exponents(mut self, orders: [f64; 2]) -> Self {
        self.seed_exponents = orders;
        self
    }

    pub fn seed_exponents(&self) -> [f64; 2] {
        self.seed_exponents
    }

    pub fn z_limit(&self) -> Complex64 {
        Complex64::new(-self.d, -(1.0 - self.d * self.d).sqrt())
    }

    fn check_lambda(&self, lambda: f64) -> Result<()> {
        let cap = self.options.max_abs_lambda;
        if !(lambda.abs() <= cap) {
            return Err(SpectralError::OutsideBand { lambda, lower: -cap, upper: cap });
        }
        Ok(())
    }

    /// Seeds for `lambda`, lifted so the smallest is at least `8 L`.
    pub fn seeds_for(&self, onset: usize) -> Vec<usize> {
        let mut seeds = self.options.seeds.clone();
        while seeds[0] < 8 * onset {
            seeds.iter_mut().for_each(|s| *s *= 2);
        }
        seeds
    }

    pub fn m(&self, lambda: f64) -> Result<MEstimate> {
        self.check_lambda(lambda)?;
        m_of_with(self.family, lambda, self.options.onset_ceiling)
    }

    pub fn evaluate(&self, lambda: f64) -> Result<NonCriticalEvaluation> {
        let m = self.m(lambda)?;
        let seeds = self.seeds_for(m.stabilization_index);
        let lam = Complex64::new(lambda, 0.0);
        let mut sq = Vec::with_capacity(seeds.len());
        let mut last = Complex64::new(0.0, 0.0);
        for &s in &seeds {
            let trace = u_minus_noncritical(self.family, lam, s, s)?;
            last = u0_minus_of(&trace, self.family)?;
            sq.push(last.norm_sqr());
        }
        let steps: Vec<f64> = seeds.iter().map(|&s| 1.0 / s as f64).collect();
        let ext = richardson(&steps, &sq, &self.seed_exponents)?;
        if !(ext.value > 0.0) || last.norm() == 0.0 {
            return Err(SpectralError::InvalidArgument(format!("u0 vanishes at lambda = {lambda}")));
        }
        let u0 = last * (ext.value.sqrt() / last.norm());
        let root = (1.0 - self.d * self.d).sqrt();
        let psi = u0 / (Complex64::new(0.0, 2.0 * root) * m.m * m.m);
        let value = root * m.m * m.m / (PI * ext.value);
        let alternative = 1.0 / (4.0 * PI * root * psi.norm_sqr() * m.m * m.m);
        Ok(NonCriticalEvaluation {
            result: DensityResult {
                lambda,
                value,
                route: Route::NonCriticalFormula,
                uncertainty: value * ext.uncertainty / ext.value,
            },
            inputs: NonCriticalInputs {
                m: m.m,
                z_limit: self.z_limit(),
                u0_minus: u0,
                psi,
                stabilization_index: m.stabilization_index,
                u0_sq_uncertainty: ext.uncertainty,
            },
            alternative,
            seeds,
            m,
        })
    }

    /// `W{u+, u-}` at index 10 for each seed against `-2i sqrt(1-d^2) M^2`.
    pub fn wronskian_check(&self, lambda: f64) -> Result<NonCriticalWronskian> {
        let m = self.m(lambda)?;
        let seeds = self.seeds_for(m.stabilization_index);
        let scale = 2.0 * (1.0 - self.d * self.d).sqrt() * m.m * m.m;
        let expected = Complex64::new(0.0, -scale);
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &s in &seeds {
            let trace = u_minus_noncritical(self.family, Complex64::new(lambda, 0.0), s, s)?;
            let w = trace.wronskian_with_conj(self.family, 10);
            per_seed.push((s, w, (w - expected).norm() / scale));
        }
        let steps: Vec<f64> = seeds.iter().map(|&s| 1.0 / s as f64).collect();
        let ims: Vec<f64> = per_seed.iter().map(|p| p.1.im).collect();
        let ext = richardson(&steps, &ims, &self.seed_exponents)?;
        Ok(NonCriticalWronskian {
            lambda,
            expected,
            deviation_decreasing: per_seed.windows(2).all(|w| w[1].2 < w[0].2),
            per_seed,
            extrapolated_deviation: (ext.value + scale).abs() / scale,
        })
    }

    /// Envelope-normalized `max |P_n - 2 Re(Psi u+_n)|` over `[n, 2n]`, the
    /// envelope being `2 |Psi| M / sqrt(a_n)`.
    pub fn decomposition_check(&self, lambda: f64, starts: &[usize]) -> Result<Vec<(usize, f64)>> {
        let m = self.m(lambda)?;
        let seed = *self.seeds_for(m.stabilization_index).last().unwrap();
        let top = starts.iter().copied().max().unwrap_or(1) * 2;
        let trace = u_minus_noncritical(self.family, Complex64::new(lambda, 0.0), top.max(seed) + 1, seed)?;
        let u0 = u0_minus_of(&trace, self.family)?;
        let root = (1.0 - self.d * self.d).sqrt();
        let psi = u0 / (Complex64::new(0.0, 2.0 * root) * m.m * m.m);
        let p = orthopoly_real(self.family, lambda, top);
        Ok(starts
            .iter()
            .map(|&n| {
                let worst = (n.max(1)..=2 * n)
                    .map(|k| {
                        let approx = 2.0 * (psi * trace.value(k).conj()).re;
                        let envelope = 2.0 * psi.norm() * m.m / self.family.a(k).sqrt();
                        (p[k - 1] - approx).abs() / envelope
                    })
                    .fold(0.0, f64::max);
                (n, worst)
            })
            .collect())
    }
}

/// Density at one `lambda` with the default settings.
pub fn rho_noncritical(family: &NonCriticalFamily, lambda: f64) -> Result<DensityResult> {
    Ok(NonCriticalPipeline::new(family, NonCriticalOptions::default())?.evaluate(lambda)?.result)
}
