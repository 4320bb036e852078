//! Result records shared by all density routes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Which computation produced a density value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "route", rename_all = "snake_case")]
pub enum Route {
    CriticalFormula,
    NonCriticalFormula,
    /// Frozen-tail matrix at index `n`.
    Stabilized { n: usize },
    /// Smoothed resolvent, extrapolated in the imaginary shift.
    Resolvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub lambda: f64,
    pub value: f64,
    pub route: Route,
    /// Extrapolation spread; zero for closed-form routes.
    pub uncertainty: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeylRoute {
    PhiTheta,
    Resolvent,
}

/// A value of the Weyl function `m(lambda)` with its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylValue {
    pub m: Complex64,
    pub route: WeylRoute,
}

impl WeylValue {
    /// `Im m / pi`.
    pub fn density(&self) -> f64 {
        self.m.im / std::f64::consts::PI
    }
}
