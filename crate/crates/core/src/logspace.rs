//! Complex numbers as (log-magnitude, unwrapped phase) pairs and compensated
//! accumulators for long products.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// A nonzero complex number stored as `exp(log_abs + i*arg)`.
///
/// `arg` is not reduced to (-pi, pi]; along a sequence it carries the
/// accumulated, unwrapped phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogComplex {
    pub log_abs: f64,
    pub arg: f64,
}

impl LogComplex {
    pub const ONE: LogComplex = LogComplex { log_abs: 0.0, arg: 0.0 };

    pub fn new(log_abs: f64, arg: f64) -> Self {
        Self { log_abs, arg }
    }

    /// Principal logarithm of `z`. Zero maps to `log_abs = -inf`.
    pub fn from_complex(z: Complex64) -> Self {
        Self { log_abs: z.norm().ln(), arg: z.arg() }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::from_polar(self.log_abs.exp(), self.arg)
    }

    pub fn abs(self) -> f64 {
        self.log_abs.exp()
    }

    /// The complex logarithm `log_abs + i*arg`.
    pub fn ln(self) -> Complex64 {
        Complex64::new(self.log_abs, self.arg)
    }

    pub fn mul(self, other: LogComplex) -> Self {
        Self { log_abs: self.log_abs + other.log_abs, arg: self.arg + other.arg }
    }

    pub fn div(self, other: LogComplex) -> Self {
        Self { log_abs: self.log_abs - other.log_abs, arg: self.arg - other.arg }
    }

    pub fn conj(self) -> Self {
        Self { log_abs: self.log_abs, arg: -self.arg }
    }

    pub fn powf(self, k: f64) -> Self {
        Self { log_abs: k * self.log_abs, arg: k * self.arg }
    }

    pub fn scale(self, factor: Complex64) -> Self {
        self.mul(LogComplex::from_complex(factor))
    }

    /// `self / reference` as an ordinary complex number; accurate whenever the
    /// two magnitudes are comparable, even if each alone would overflow.
    pub fn relative_to(self, reference: LogComplex) -> Complex64 {
        self.div(reference).to_complex()
    }
}

/// Running product of complex factors, kept as compensated sums of
/// `ln|factor|` and `arg(factor)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogProduct {
    log_abs: CompensatedSum,
    arg: CompensatedSum,
}

impl LogProduct {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, factor: Complex64) {
        self.log_abs.add(factor.norm().ln());
        self.arg.add(factor.arg());
    }

    /// Multiply by a factor given directly in logarithmic form.
    pub fn push_log(&mut self, log_abs: f64, arg: f64) {
        self.log_abs.add(log_abs);
        self.arg.add(arg);
    }

    pub fn value(&self) -> LogComplex {
        LogComplex { log_abs: self.log_abs.value(), arg: self.arg.value() }
    }
}

/// Converts a stream of complex values, each known only up to a common real
/// log-scale, into `LogComplex` with a continuous phase.
#[derive(Debug, Clone, Default)]
pub struct PhaseTracker {
    previous: Option<Complex64>,
    phase: CompensatedSum,
}

impl PhaseTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start the phase at `arg` (already unwrapped) for the value `value`.
    pub fn anchored(value: Complex64, arg: f64) -> Self {
        let mut phase = CompensatedSum::new();
        phase.add(arg);
        Self { previous: Some(value), phase }
    }

    /// `value * exp(log_scale)` is the next element of the sequence.
    pub fn next(&mut self, value: Complex64, log_scale: f64) -> LogComplex {
        match self.previous {
            None => self.phase.add(value.arg()),
            Some(prev) => self.phase.add((value / prev).arg()),
        }
        self.previous = Some(value);
        LogComplex { log_abs: value.norm().ln() + log_scale, arg: self.phase.value() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        s.add(1e100);
        s.add(1.0);
        s.add(-1e100);
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn round_trip() {
        let z = Complex64::new(-3.0, 4.0);
        let l = LogComplex::from_complex(z);
        assert!((l.to_complex() - z).norm() < 1e-15 * 5.0);
        assert!((l.abs() - 5.0).abs() < 1e-15 * 5.0);
    }

    #[test]
    fn product_does_not_overflow() {
        let mut p = LogProduct::new();
        for _ in 0..2000 {
            p.push(Complex64::new(0.0, 10.0));
        }
        let v = p.value();
        assert!((v.log_abs - 2000.0 * 10f64.ln()).abs() < 1e-9);
        assert!((v.arg - 1000.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn phase_tracker_unwraps_rotation() {
        let mut t = PhaseTracker::new();
        let step = 0.9 * PI;
        let mut last = LogComplex::ONE;
        for k in 0..50 {
            let z = Complex64::from_polar(1.0, step * k as f64);
            last = t.next(z, 0.0);
        }
        assert!((last.arg - 49.0 * step).abs() < 1e-10);
    }

    #[test]
    fn relative_to_handles_huge_magnitudes() {
        let a = LogComplex::new(2000.0, 0.3);
        let b = LogComplex::new(2000.0 + 2f64.ln(), 0.3);
        let r = b.relative_to(a);
        assert!((r - Complex64::new(2.0, 0.0)).norm() < 1e-12);
    }
}
