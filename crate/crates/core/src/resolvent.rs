//! Independent reference density from the smoothed resolvent of a truncated
//! matrix, `m(lambda + i eps) = ((T - lambda - i eps)^{-1})_{11}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::{DensityResult, Route, WeylRoute, WeylValue};
use crate::error::{Result, SpectralError};
use crate::extrapolate::richardson;
use crate::family::JacobiCoefficients;

/// Linear solver for the shifted tridiagonal system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResolventSolver {
    /// Bottom-up elimination keeping one pivot; constant memory. The pivots
    /// satisfy `Im w_k <= -eps`, so none of them can vanish.
    #[default]
    Streaming,
    /// Full LU with partial pivoting on the band; memory linear in the
    /// truncation.
    PivotedLu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventOptions {
    pub initial_trunc: usize,
    /// Relative change of `m` between successive doublings that stops the loop.
    pub rel_tol: f64,
    pub max_trunc: usize,
    pub solver: ResolventSolver,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self { initial_trunc: 1024, rel_tol: 1e-3, max_trunc: 1 << 27, solver: ResolventSolver::Streaming }
    }
}

/// Smoothed density settings: the shifts (largest first) and the truncation
/// loop used at each shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub eps: Vec<f64>,
    pub resolvent: ResolventOptions,
}

impl OracleOptions {
    /// Shifts `4h, 2h, h`, second-order extrapolation.
    pub fn with_base(h: f64) -> Self {
        Self { eps: vec![4.0 * h, 2.0 * h, h], resolvent: ResolventOptions::default() }
    }
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self::with_base(1e-3)
    }
}

/// `x` solving `A x = rhs` for tridiagonal `A` given by `sub` (length n-1),
/// `diag` (n) and `sup` (n-1), by Gaussian elimination with partial pivoting.
pub fn solve_tridiagonal_pivoted(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    if n == 0 || sub.len() + 1 != n || sup.len() + 1 != n || rhs.len() != n {
        return Err(SpectralError::InvalidArgument("tridiagonal band lengths do not match".into()));
    }
    let mut d = diag.to_vec();
    let mut du = sup.to_vec();
    let mut dl = sub.to_vec();
    let mut du2 = vec![Complex64::new(0.0, 0.0); n.saturating_sub(2)];
    let mut b = rhs.to_vec();
    for i in 0..n.saturating_sub(1) {
        if d[i].norm() >= dl[i].norm() {
            if d[i].norm() == 0.0 {
                return Err(SpectralError::SingularSystem { row: i + 1 });
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] = b[i + 1] - fact * b[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let bi = b[i];
            b[i] = b[i + 1];
            b[i + 1] = bi - fact * b[i + 1];
        }
        dl[i] = Complex64::new(0.0, 0.0);
    }
    if d[n - 1].norm() == 0.0 {
        return Err(SpectralError::SingularSystem { row: n });
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    Ok(x)
}

/// `((T_K - z)^{-1})_{11}` for the `K x K` truncation at fixed `K`.
pub fn m_truncated<C: JacobiCoefficients + ?Sized>(
    family: &C,
    z: Complex64,
    trunc: usize,
    solver: ResolventSolver,
) -> Result<Complex64> {
    if trunc == 0 {
        return Err(SpectralError::InvalidArgument("truncation must be positive".into()));
    }
    match solver {
        ResolventSolver::Streaming => {
            let tiny = 1e-300;
            let mut w = family.b(trunc) - z;
            for k in (1..trunc).rev() {
                if w.norm() < tiny {
                    return Err(SpectralError::SingularSystem { row: k + 1 });
                }
                let a = family.a(k);
                w = family.b(k) - z - a * a / w;
            }
            if w.norm() < tiny {
                return Err(SpectralError::SingularSystem { row: 1 });
            }
            Ok(w.inv())
        }
        ResolventSolver::PivotedLu => {
            let diag: Vec<Complex64> = (1..=trunc).map(|k| family.b(k) - z).collect();
            let off: Vec<Complex64> = (1..trunc).map(|k| Complex64::new(family.a(k), 0.0)).collect();
            let mut rhs = vec![Complex64::new(0.0, 0.0); trunc];
            rhs[0] = Complex64::new(1.0, 0.0);
            Ok(solve_tridiagonal_pivoted(&off, &diag, &off, &rhs)?[0])
        }
    }
}

/// Converged smoothed Weyl value and the truncation that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventEvaluation {
    pub weyl: WeylValue,
    pub trunc: usize,
}

/// `m(lambda + i eps)` with the truncation doubled from `trunc` until the
/// relative change drops below `options.rel_tol`.
pub fn resolvent_m<C: JacobiCoefficients + ?Sized>(
    family: &C,
    lambda: f64,
    eps: f64,
    trunc: usize,
    options: &ResolventOptions,
) -> Result<ResolventEvaluation> {
    if !(eps > 0.0) {
        return Err(SpectralError::InvalidArgument(format!("shift eps must be positive, got {eps}")));
    }
    if trunc < 100 {
        return Err(SpectralError::InvalidArgument(format!("truncation must be at least 100, got {trunc}")));
    }
    let z = Complex64::new(lambda, eps);
    let mut k = trunc;
    let mut m_old = m_truncated(family, z, k, options.solver)?;
    loop {
        if k > options.max_trunc / 2 {
            return Err(SpectralError::NoConvergence { ceiling: options.max_trunc });
        }
        k *= 2;
        let m_new = m_truncated(family, z, k, options.solver)?;
        if (m_new - m_old).norm() < options.rel_tol * m_new.norm() {
            return Ok(ResolventEvaluation { weyl: WeylValue { m: m_new, route: WeylRoute::Resolvent }, trunc: k });
        }
        m_old = m_new;
    }
}

/// One smoothed sample of the reference density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSample {
    pub eps: f64,
    pub smoothed: f64,
    pub trunc: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub density: DensityResult,
    pub samples: Vec<OracleSample>,
}

/// Reference density: `Im m(lambda + i eps)/pi` extrapolated to `eps -> 0`
/// over the configured shifts.
pub fn resolvent_density<C: JacobiCoefficients + ?Sized>(
    family: &C,
    lambda: f64,
    options: &OracleOptions,
) -> Result<OracleResult> {
    if options.eps.is_empty() {
        return Err(SpectralError::InvalidArgument("oracle needs at least one shift".into()));
    }
    let mut samples = Vec::with_capacity(options.eps.len());
    for &eps in &options.eps {
        let eval = resolvent_m(family, lambda, eps, options.resolvent.initial_trunc, &options.resolvent)?;
        samples.push(OracleSample { eps, smoothed: eval.weyl.density(), trunc: eval.trunc });
    }
    let steps: Vec<f64> = samples.iter().map(|s| s.eps).collect();
    let values: Vec<f64> = samples.iter().map(|s| s.smoothed).collect();
    let exponents: Vec<f64> = (1..samples.len()).map(|k| k as f64).collect();
    let e = richardson(&steps, &values, &exponents)?;
    Ok(OracleResult {
        density: DensityResult { lambda, value: e.value, route: Route::Resolvent, uncertainty: e.uncertainty },
        samples,
    })
}
