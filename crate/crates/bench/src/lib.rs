//! Fixtures shared by the benchmark targets.

use jacobi_density::{CriticalFamily, NonCriticalFamily};

/// The reference critical family, `a_n = sqrt(n)`, `b_n = -2 sqrt(n)`.
pub fn reference_critical() -> CriticalFamily {
    CriticalFamily::new(0.5)
}

/// `a_n = sqrt(n)`, `b_n = 0`.
pub fn reference_noncritical() -> NonCriticalFamily {
    NonCriticalFamily::new(0.5, 0.0)
}
