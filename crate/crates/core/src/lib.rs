//! Spectral densities of unbounded Jacobi matrices.

pub mod critical;
pub mod density;
pub mod error;
pub mod extrapolate;
pub mod family;
pub mod harness;
pub mod levinson;
pub mod logspace;
pub mod noncritical;
pub mod recurrence;
pub mod resolvent;
pub mod stabilized;

pub use critical::{rho_critical, CriticalOptions, CriticalPipeline, SolutionTrace};
pub use density::{DensityResult, Route, WeylRoute, WeylValue};
pub use error::{Result, SpectralError};
pub use family::{
    carleman_divergence_check, coeffs, CoefficientFamily, CoefficientPair, CriticalFamily, ExplicitFamily,
    FamilyKind, JacobiCoefficients, NonCriticalFamily, Perturbation, TailRule,
};
pub use logspace::LogComplex;
pub use noncritical::{rho_noncritical, NonCriticalOptions, NonCriticalPipeline};
pub use num_complex::Complex64;
