//! Orthogonal polynomials of the first and second kind, transfer matrices and
//! Wronskians.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::family::JacobiCoefficients;
use crate::logspace::LogComplex;

/// Values `P_n(lambda)` and `Q_n(lambda)` at one index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyPair {
    pub n: usize,
    pub p: Complex64,
    pub q: Complex64,
}

/// How [`orthopoly`] keeps values inside the floating point range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleMode {
    Plain,
    /// Renormalize the running pair whenever `max(|P_n|, |Q_n|)` exceeds the
    /// threshold and track the logarithm of the removed factor.
    Scaled { threshold: f64 },
}

impl Default for ScaleMode {
    fn default() -> Self {
        ScaleMode::Scaled { threshold: 1e100 }
    }
}

/// `P_n` and `Q_n` for `n = 1 ..= n_max + 1`, stored as mantissas with a
/// per-index log-scale shared by both kinds.
#[derive(Debug, Clone)]
pub struct PolySequence {
    pub lambda: Complex64,
    p: Vec<Complex64>,
    q: Vec<Complex64>,
    log_scale: Vec<f64>,
}

impl PolySequence {
    /// Largest stored index.
    pub fn last_index(&self) -> usize {
        self.p.len()
    }

    /// Unscaled pair; may overflow to infinity for long runs off the spectrum.
    pub fn pair(&self, n: usize) -> PolyPair {
        let s = self.log_scale[n - 1].exp();
        PolyPair { n, p: self.p[n - 1] * s, q: self.q[n - 1] * s }
    }

    pub fn p(&self, n: usize) -> Complex64 {
        self.p[n - 1] * self.log_scale[n - 1].exp()
    }

    pub fn q(&self, n: usize) -> Complex64 {
        self.q[n - 1] * self.log_scale[n - 1].exp()
    }

    /// `(mantissa, log_scale)` with `P_n = mantissa * exp(log_scale)`.
    pub fn p_scaled(&self, n: usize) -> (Complex64, f64) {
        (self.p[n - 1], self.log_scale[n - 1])
    }

    pub fn q_scaled(&self, n: usize) -> (Complex64, f64) {
        (self.q[n - 1], self.log_scale[n - 1])
    }

    pub fn p_log(&self, n: usize) -> LogComplex {
        let l = LogComplex::from_complex(self.p[n - 1]);
        LogComplex::new(l.log_abs + self.log_scale[n - 1], l.arg)
    }

    pub fn log_scale(&self, n: usize) -> f64 {
        self.log_scale[n - 1]
    }

    /// `W{P, Q}` at index `n` (needs `n + 1` stored), computed from the
    /// mantissas so that rescaling does not destroy it.
    pub fn wronskian_pq<C: JacobiCoefficients + ?Sized>(&self, family: &C, n: usize) -> Complex64 {
        let cross = self.p[n - 1] * self.q[n] - self.p[n] * self.q[n - 1];
        cross * family.a(n) * (self.log_scale[n - 1] + self.log_scale[n]).exp()
    }
}

/// `P_1 = 1`, `P_2 = (lambda - b_1)/a_1`, `Q_1 = 0`, `Q_2 = 1/a_1`, then the
/// three-term recurrence, up to index `n_max + 1`.
pub fn orthopoly<C: JacobiCoefficients + ?Sized>(
    family: &C,
    lambda: Complex64,
    n_max: usize,
    mode: ScaleMode,
) -> PolySequence {
    let n_max = n_max.max(1);
    let len = n_max + 1;
    let mut p = Vec::with_capacity(len);
    let mut q = Vec::with_capacity(len);
    let mut log_scale = Vec::with_capacity(len);

    let a1 = family.a(1);
    let mut p_prev = Complex64::new(1.0, 0.0);
    let mut q_prev = Complex64::new(0.0, 0.0);
    let mut p_cur = (lambda - family.b(1)) / a1;
    let mut q_cur = Complex64::new(1.0 / a1, 0.0);
    let mut scale = 0.0;
    p.push(p_prev);
    q.push(q_prev);
    log_scale.push(0.0);
    p.push(p_cur);
    q.push(q_cur);
    log_scale.push(0.0);

    let mut a_prev = a1;
    for n in 2..len {
        let a_n = family.a(n);
        let shift = lambda - family.b(n);
        let p_next = (shift * p_cur - p_prev * a_prev) / a_n;
        let q_next = (shift * q_cur - q_prev * a_prev) / a_n;
        p_prev = p_cur;
        q_prev = q_cur;
        p_cur = p_next;
        q_cur = q_next;
        if let ScaleMode::Scaled { threshold } = mode {
            let size = p_cur.norm().max(q_cur.norm());
            if size > threshold {
                let inv = 1.0 / size;
                p_prev *= inv;
                q_prev *= inv;
                p_cur *= inv;
                q_cur *= inv;
                scale += size.ln();
            }
        }
        p.push(p_cur);
        q.push(q_cur);
        log_scale.push(scale);
        a_prev = a_n;
    }
    PolySequence { lambda, p, q, log_scale }
}

/// First-kind polynomials only, for real `lambda`, without scaling.
///
/// This is the hot path of stabilized sweeps along the spectrum, where the
/// values stay bounded.
pub fn orthopoly_real<C: JacobiCoefficients + ?Sized>(family: &C, lambda: f64, n_max: usize) -> Vec<f64> {
    let n_max = n_max.max(1);
    let mut out = Vec::with_capacity(n_max + 1);
    let a1 = family.a(1);
    let mut prev = 1.0;
    let mut cur = (lambda - family.b(1)) / a1;
    out.push(prev);
    out.push(cur);
    let mut a_prev = a1;
    for n in 2..=n_max {
        let a_n = family.a(n);
        let next = ((lambda - family.b(n)) * cur - a_prev * prev) / a_n;
        prev = cur;
        cur = next;
        out.push(cur);
        a_prev = a_n;
    }
    out
}

/// 2x2 matrix advancing `(u_{n-1}, u_n)` to `(u_n, u_{n+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub m: [[Complex64; 2]; 2],
}

impl TransferMatrix {
    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn det(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `self * other`.
    pub fn mul(&self, other: &TransferMatrix) -> TransferMatrix {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        TransferMatrix { m }
    }
}

/// `B_n(lambda) = (0, 1; -a_{n-1}/a_n, (lambda - b_n)/a_n)`.
pub fn transfer_matrix<C: JacobiCoefficients + ?Sized>(family: &C, n: usize, lambda: Complex64) -> TransferMatrix {
    let a_n = family.a(n);
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    TransferMatrix {
        m: [
            [zero, one],
            [Complex64::new(-family.a_prev(n) / a_n, 0.0), (lambda - family.b(n)) / a_n],
        ],
    }
}

/// `W{u, v} = a_n (u_n v_{n+1} - u_{n+1} v_n)`.
#[inline]
pub fn wronskian(u_n: Complex64, u_next: Complex64, v_n: Complex64, v_next: Complex64, a_n: f64) -> Complex64 {
    (u_n * v_next - u_next * v_n) * a_n
}

/// Relative residual of the eigenvector equation at index `n` for the triple
/// `(u_{n-1}, u_n, u_{n+1})`.
pub fn recurrence_residual<C: JacobiCoefficients + ?Sized>(
    family: &C,
    n: usize,
    lambda: Complex64,
    u: [Complex64; 3],
) -> f64 {
    let left = u[0] * family.a_prev(n);
    let mid = u[1] * (family.b(n) - lambda);
    let right = u[2] * family.a(n);
    let scale = left.norm() + mid.norm() + right.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (left + mid + right).norm() / scale
}
