//! Scalars of the diagonalizing substitution chain for the critical family and
//! the backward solver for discrete Volterra systems in L-diagonal form.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpectralError};
use crate::family::{CriticalFamily, JacobiCoefficients};

/// Square root with the cut on the negative real axis approached from above:
/// a negative real `x` (either sign of zero imaginary part) maps to `i sqrt(-x)`.
#[inline]
pub fn sqrt_upper(z: Complex64) -> Complex64 {
    if z.im == 0.0 && z.re < 0.0 {
        Complex64::new(0.0, (-z.re).sqrt())
    } else {
        z.sqrt()
    }
}

/// Chain scalars at one `(n, lambda)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainQuantities {
    pub n: usize,
    pub lambda: Complex64,
    /// `d_n = (lambda - b_n)/(2 a_n)`
    pub d: Complex64,
    /// `d_{n-1}`
    pub d_prev: Complex64,
    pub c: Complex64,
    pub chi: Complex64,
    pub sqrt_chi: Complex64,
    pub g_plus: Complex64,
    pub g_minus: Complex64,
    pub eta_minus: Complex64,
    pub h_plus: Complex64,
    pub h_minus: Complex64,
}

/// Pieces shared by the two forms of `sqrt(chi_n)`.
struct ChiParts {
    num: Complex64,
    den: Complex64,
    sqrt_lambda: Complex64,
    inner: Complex64,
    n_half_alpha: f64,
}

fn chi_parts(alpha: f64, n: usize, lambda: Complex64) -> ChiParts {
    let nf = n as f64;
    let na = nf.powf(alpha);
    let x = lambda / na;
    ChiParts {
        num: x + x * x / 4.0 + alpha / nf,
        den: 1.0 + x / 2.0,
        sqrt_lambda: sqrt_upper(lambda),
        inner: 1.0 + x / 4.0 + alpha / (lambda * nf.powf(1.0 - alpha)),
        n_half_alpha: nf.powf(alpha / 2.0),
    }
}

impl ChainQuantities {
    /// `sqrt(chi_n)` as `sqrt(numerator)/denominator`, the other closed form.
    pub fn sqrt_chi_direct(&self, alpha: f64) -> Complex64 {
        let p = chi_parts(alpha, self.n, self.lambda);
        sqrt_upper(p.num) / p.den
    }
}

/// All chain scalars at index `n >= 2`, on one square-root branch: `sqrt(lambda)`
/// is taken on the upper side of the cut and the inner root is principal.
pub fn chain_at(family: &CriticalFamily, n: usize, lambda: Complex64) -> Result<ChainQuantities> {
    if n < 2 {
        return Err(SpectralError::InvalidArgument("chain scalars need n >= 2".into()));
    }
    let alpha = family.alpha;
    let (a_n, b_n) = (family.a(n), family.b(n));
    let (a_p, b_p) = (family.a(n - 1), family.b(n - 1));
    let shift = lambda - b_n;
    let shift_prev = lambda - b_p;
    if shift.norm() == 0.0 {
        return Err(SpectralError::PoleHit { n });
    }
    if shift_prev.norm() == 0.0 || lambda.norm() == 0.0 {
        return Err(SpectralError::PoleHit { n: n - 1 });
    }
    if a_n == 0.0 || a_p == 0.0 {
        return Err(SpectralError::PoleHit { n });
    }
    let parts = chi_parts(alpha, n, lambda);
    if parts.den.norm() == 0.0 {
        return Err(SpectralError::PoleHit { n });
    }
    let nf = n as f64;
    let d = shift / (2.0 * a_n);
    let d_prev = shift_prev / (2.0 * a_p);
    let c = 1.0 - 4.0 * a_p * a_p / (shift_prev * shift);
    let chi = parts.num / (parts.den * parts.den);
    let root_term = parts.sqrt_lambda / parts.n_half_alpha * parts.inner.sqrt();
    let sqrt_chi = root_term / parts.den;
    let quarter = alpha / (4.0 * nf);
    let g_plus = sqrt_chi + quarter;
    let g_minus = -sqrt_chi + quarter;
    let eta_minus = 1.0 + lambda / (2.0 * nf.powf(alpha)) + quarter - root_term;
    Ok(ChainQuantities {
        n,
        lambda,
        d,
        d_prev,
        c,
        chi,
        sqrt_chi,
        g_plus,
        g_minus,
        eta_minus,
        h_plus: d_prev * (1.0 + g_plus),
        h_minus: d_prev * (1.0 + g_minus),
    })
}

/// `|eta^-_n|^2 = 1 - alpha/(2n) + alpha lambda/(4 n^(1+alpha)) + alpha^2/(16 n^2)`,
/// valid for real `lambda < 0` where the inner square root is real.
pub fn eta_minus_norm_sqr(alpha: f64, n: usize, lambda: f64) -> f64 {
    1.0 + eta_minus_norm_sqr_offset(alpha, n, lambda)
}

/// `|eta^-_n|^2 - 1`, kept separate for `ln_1p`.
pub fn eta_minus_norm_sqr_offset(alpha: f64, n: usize, lambda: f64) -> f64 {
    let nf = n as f64;
    -alpha / (2.0 * nf) + alpha * lambda / (4.0 * nf.powf(1.0 + alpha)) + alpha * alpha / (16.0 * nf * nf)
}

/// Whether the inner root of `eta^-_n` is real and positive at real `lambda`,
/// i.e. the closed form of `|eta^-_n|^2` applies.
pub fn closed_form_applies(alpha: f64, n: usize, lambda: f64) -> bool {
    let nf = n as f64;
    let inner = 1.0 + lambda / (4.0 * nf.powf(alpha)) + alpha / (lambda * nf.powf(1.0 - alpha));
    lambda < 0.0 && inner >= 0.0
}

/// Zeros `(lambda^-_n, lambda^+_n)` of `chi_n` and its pole `-2 n^alpha`.
pub fn chi_roots_and_pole(alpha: f64, n: usize) -> (f64, f64, f64) {
    let na = (n as f64).powf(alpha);
    let s = (1.0 - alpha / n as f64).sqrt();
    (2.0 * na * (-1.0 - s), 2.0 * na * (-1.0 + s), -2.0 * na)
}

/// Region of spectral parameters on which the chain is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    /// Real segment `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
    /// `[re_lo, re_hi] x [im_lo, im_hi]`.
    Rectangle { re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64 },
}

impl Window {
    /// Deterministic sample of the window: `boundary` points on the boundary
    /// and `interior` points inside.
    pub fn sample(&self, boundary: usize, interior: usize) -> Vec<Complex64> {
        match *self {
            Window::Interval { lo, hi } => {
                let total = (boundary + interior).max(2);
                (0..total)
                    .map(|k| Complex64::new(lo + (hi - lo) * k as f64 / (total - 1) as f64, 0.0))
                    .collect()
            }
            Window::Rectangle { re_lo, re_hi, im_lo, im_hi } => {
                let w = re_hi - re_lo;
                let h = im_hi - im_lo;
                let perimeter = 2.0 * (w + h);
                let mut out = Vec::with_capacity(boundary + interior);
                for k in 0..boundary {
                    let mut s = perimeter * k as f64 / boundary as f64;
                    let p = if s < w {
                        Complex64::new(re_lo + s, im_lo)
                    } else if {
                        s -= w;
                        s < h
                    } {
                        Complex64::new(re_hi, im_lo + s)
                    } else if {
                        s -= h;
                        s < w
                    } {
                        Complex64::new(re_hi - s, im_hi)
                    } else {
                        s -= w;
                        Complex64::new(re_lo, im_hi - s)
                    };
                    out.push(p);
                }
                let cols = ((interior as f64 * w / h.max(1e-300)).sqrt().ceil() as usize).clamp(1, interior.max(1));
                let rows = interior.div_ceil(cols).max(1);
                for i in 0..rows {
                    for j in 0..cols {
                        if out.len() >= boundary + interior {
                            break;
                        }
                        let x = re_lo + w * (j as f64 + 0.5) / cols as f64;
                        let y = im_lo + h * (i as f64 + 0.5) / rows as f64;
                        out.push(Complex64::new(x, y));
                    }
                }
                out
            }
        }
    }

    pub fn contains(&self, lambda: Complex64) -> bool {
        match *self {
            Window::Interval { lo, hi } => lambda.im == 0.0 && lambda.re >= lo && lambda.re <= hi,
            Window::Rectangle { re_lo, re_hi, im_lo, im_hi } => {
                lambda.re >= re_lo && lambda.re <= re_hi && lambda.im >= im_lo && lambda.im <= im_hi
            }
        }
    }
}

/// Settings of the starting-index search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N0Options {
    pub boundary_points: usize,
    pub interior_points: usize,
    /// Logarithmically spaced indices checked in `[N0, 8 N0]`.
    pub index_samples: usize,
    pub ceiling: usize,
}

impl Default for N0Options {
    fn default() -> Self {
        Self { boundary_points: 64, interior_points: 32, index_samples: 16, ceiling: 1 << 30 }
    }
}

fn log_indices(start: usize, count: usize) -> Vec<usize> {
    let count = count.max(2);
    let mut out: Vec<usize> = (0..count)
        .map(|j| (start as f64 * 8f64.powf(j as f64 / (count - 1) as f64)).round() as usize)
        .collect();
    out[0] = start;
    *out.last_mut().unwrap() = 8 * start;
    out.dedup();
    out
}

fn admissible(family: &CriticalFamily, window: &Window, grid: &[Complex64], n0: usize, samples: usize) -> bool {
    for n in log_indices(n0, samples) {
        let (lm, lp, pole) = chi_roots_and_pole(family.alpha, n);
        for edge in [lm, lp, pole] {
            if window.contains(Complex64::new(edge, 0.0)) {
                return false;
            }
        }
        for &lambda in grid {
            let q = match chain_at(family, n, lambda) {
                Ok(q) => q,
                Err(_) => return false,
            };
            if q.eta_minus.norm() < 0.5
                || q.g_plus.norm() > 0.5
                || q.g_minus.norm() > 0.5
                || q.sqrt_chi.re < -1e-12
                || q.d_prev.norm() < 0.25
            {
                return false;
            }
        }
    }
    true
}

/// Smallest power of two `N0` at which the chain conditions hold on the
/// window sample for all sampled `n` in `[N0, 8 N0]`.
pub fn select_n0(family: &CriticalFamily, window: &Window, options: &N0Options) -> Result<usize> {
    let grid = window.sample(options.boundary_points, options.interior_points);
    let mut n0 = 2usize;
    while n0 <= options.ceiling {
        if admissible(family, window, &grid, n0, options.index_samples) {
            return Ok(n0);
        }
        n0 *= 2;
    }
    Err(SpectralError::NoAdmissibleN0 { ceiling: options.ceiling })
}

pub type Mat2 = [[Complex64; 2]; 2];

/// Induced max-norm of a 2x2 matrix.
pub fn mat_norm(m: &Mat2) -> f64 {
    (m[0][0].norm() + m[0][1].norm()).max(m[1][0].norm() + m[1][1].norm())
}

/// `x_{n+1} = (diag(lambda_n, 1/lambda_n) + R_n) x_n` from index `start` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalSystem {
    pub lam_seq: Vec<Complex64>,
    pub rem_seq: Vec<Mat2>,
    pub start: usize,
    /// Bound `C` with `prod_{l=p}^q |lambda_l| >= 1/C`; estimated if absent.
    pub c_constant: Option<f64>,
}

impl DiagonalSystem {
    /// `sum |lambda_k| ||R_k||` over the stored range.
    pub fn remainder_mass(&self) -> f64 {
        self.lam_seq.iter().zip(&self.rem_seq).map(|(l, r)| l.norm() * mat_norm(r)).sum()
    }

    /// `2 / min_{p<=q} prod |lambda_l|`, floored at `2`.
    pub fn estimate_c(&self) -> f64 {
        let mut best = 0.0f64;
        let mut run = 0.0f64;
        for l in &self.lam_seq {
            let x = l.norm().ln();
            run = x.min(run + x);
            best = best.min(run);
        }
        2.0 * (-best).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraSolution {
    pub start: usize,
    /// Normalized decaying solution at `start ..= n_max`.
    pub values: Vec<[Complex64; 2]>,
    /// `exp(S_n) - 1` at each stored index.
    pub tail_bounds: Vec<f64>,
    pub terms_used: usize,
    pub c_constant: f64,
}

impl VolterraSolution {
    pub fn at(&self, n: usize) -> [Complex64; 2] {
        self.values[n - self.start]
    }

    pub fn tail_bound_at(&self, n: usize) -> f64 {
        self.tail_bounds[n - self.start]
    }

    /// Bound at the first index, the largest one.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bounds.first().copied().unwrap_or(0.0)
    }
}

/// Exact solution of the truncated equation
/// `x_n = e_- - sum_{k>=n} diag(prod_{l=n}^k lambda_l^-2, 1) lambda_k R_k x_k`
/// with `R_k = 0` beyond `n_max`, by backward substitution.
pub fn volterra_solve(system: &DiagonalSystem, n_max: usize) -> Result<VolterraSolution> {
    let start = system.start;
    if n_max < start {
        return Err(SpectralError::InvalidArgument("n_max precedes the start index".into()));
    }
    let len = n_max - start + 1;
    if system.lam_seq.len() < len || system.rem_seq.len() < len {
        return Err(SpectralError::InvalidArgument(format!(
            "system data covers {} indices, {} needed",
            system.lam_seq.len().min(system.rem_seq.len()),
            len
        )));
    }
    if let Some(i) = system.lam_seq[..len].iter().position(|l| l.norm() == 0.0) {
        return Err(SpectralError::ZeroLambda { index: start + i });
    }
    let c = system.c_constant.unwrap_or_else(|| {
        DiagonalSystem { lam_seq: system.lam_seq[..len].to_vec(), rem_seq: vec![], start, c_constant: None }
            .estimate_c()
    });
    let weight = c * c + 1.0;
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut values = vec![[zero, zero]; len];
    let mut bounds = vec![0.0; len];
    let mut carry = [zero, zero];
    let mut mass = 0.0;
    for i in (0..len).rev() {
        let lam = system.lam_seq[i];
        let r = &system.rem_seq[i];
        let damp = (lam * lam).inv();
        // (I + D lam R) x = e_- - D carry, D = diag(damp, 1)
        let m = [
            [one + damp * lam * r[0][0], damp * lam * r[0][1]],
            [lam * r[1][0], one + lam * r[1][1]],
        ];
        let rhs = [-damp * carry[0], one - carry[1]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det.norm() == 0.0 {
            return Err(SpectralError::InvalidArgument(format!(
                "local Volterra block is singular at index {}",
                start + i
            )));
        }
        let x = [
            (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
            (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
        ];
        let rx = [r[0][0] * x[0] + r[0][1] * x[1], r[1][0] * x[0] + r[1][1] * x[1]];
        carry = [damp * (lam * rx[0] + carry[0]), lam * rx[1] + carry[1]];
        values[i] = x;
        mass += weight * lam.norm() * mat_norm(r);
        bounds[i] = mass.exp_m1();
    }
    Ok(VolterraSolution { start, values, tail_bounds: bounds, terms_used: len, c_constant: c })
}
