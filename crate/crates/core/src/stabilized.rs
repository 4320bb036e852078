//! The stabilized matrix whose entries are frozen at `(a_N, b_N)` from row `N`
//! on, its density on the band, and the boundary coefficients of its Weyl
//! function.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::density::{DensityResult, Route, WeylRoute, WeylValue};
use crate::error::{Result, SpectralError};
use crate::family::JacobiCoefficients;
use crate::logspace::LogComplex;
use crate::recurrence::{orthopoly, orthopoly_real, ScaleMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchRegime {
    OnBand,
    OffBand,
}

/// Decaying characteristic root of a constant-coefficient recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchValue {
    pub z: Complex64,
    pub regime: BranchRegime,
}

/// Root of `z + 1/z = 2w` that is the boundary value from the upper half
/// plane: `w - i sqrt(1 - w^2)` for real `|w| <= 1`, otherwise the root inside
/// the unit disk, selected by comparing the two magnitudes.
pub fn unit_root(w: Complex64) -> BranchValue {
    if w.im == 0.0 && w.re.abs() <= 1.0 {
        let s = ((1.0 - w.re) * (1.0 + w.re)).sqrt();
        return BranchValue { z: Complex64::new(w.re, -s), regime: BranchRegime::OnBand };
    }
    let s = ((w - 1.0) * (w + 1.0)).sqrt();
    let r1 = w + s;
    let r2 = w - s;
    let big = if r1.norm() >= r2.norm() { r1 } else { r2 };
    BranchValue { z: big.inv(), regime: BranchRegime::OffBand }
}

/// `z_N(lambda)` for the constant tail `(a, b)`.
pub fn z_branch(lambda: Complex64, a: f64, b: f64) -> BranchValue {
    unit_root((lambda - b) / (2.0 * a))
}

/// Parameters of the frozen tail at index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizedModel {
    pub n: usize,
    pub a_n: f64,
    pub b_n: f64,
    /// Open band `(b_N - 2a_N, b_N + 2a_N)`.
    pub band: (f64, f64),
}

impl StabilizedModel {
    pub fn new<C: JacobiCoefficients + ?Sized>(family: &C, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SpectralError::InvalidArgument("stabilization index starts at 1".into()));
        }
        let a_n = family.a(n);
        if !(a_n > 0.0) {
            return Err(SpectralError::NonPositiveEntry { n, value: a_n });
        }
        let b_n = family.b(n);
        Ok(Self { n, a_n, b_n, band: (b_n - 2.0 * a_n, b_n + 2.0 * a_n) })
    }

    pub fn width(&self) -> f64 {
        self.band.1 - self.band.0
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.band.0 && lambda < self.band.1
    }

    /// Inside the band and at least `margin * width` away from both edges.
    pub fn contains_with_margin(&self, lambda: f64, margin: f64) -> bool {
        let gap = margin * self.width();
        lambda > self.band.0 + gap && lambda < self.band.1 - gap
    }

    fn check(&self, lambda: f64) -> Result<()> {
        if self.contains(lambda) {
            Ok(())
        } else {
            Err(SpectralError::OutsideBand { lambda, lower: self.band.0, upper: self.band.1 })
        }
    }
}

/// Entries of a family frozen from index `n` on.
#[derive(Debug, Clone, Copy)]
pub struct Frozen<'a, C: ?Sized> {
    pub base: &'a C,
    pub n: usize,
}

impl<'a, C: JacobiCoefficients + ?Sized> JacobiCoefficients for Frozen<'a, C> {
    fn a(&self, k: usize) -> f64 {
        self.base.a(k.min(self.n))
    }
    fn b(&self, k: usize) -> f64 {
        self.base.b(k.min(self.n))
    }
}

/// Density from `P_N`, `P_{N+1}` of the original family.
fn density_from_polys(model: &StabilizedModel, lambda: f64, p_n: f64, p_next: f64) -> f64 {
    let w = (lambda - model.b_n) / (2.0 * model.a_n);
    let s = ((1.0 - w) * (1.0 + w)).sqrt();
    let denom = Complex64::new(p_next - w * p_n, s * p_n).norm_sqr();
    s / (PI * model.a_n * denom)
}

/// Density of the stabilized matrix at `lambda` inside its band.
pub fn rho_stabilized<C: JacobiCoefficients + ?Sized>(family: &C, n: usize, lambda: f64) -> Result<DensityResult> {
    let model = StabilizedModel::new(family, n)?;
    model.check(lambda)?;
    let p = orthopoly_real(family, lambda, n);
    Ok(DensityResult {
        lambda,
        value: density_from_polys(&model, lambda, p[n - 1], p[n]),
        route: Route::Stabilized { n },
        uncertainty: 0.0,
    })
}

/// [`rho_stabilized`] at several indices sharing one polynomial run.
pub fn rho_stabilized_schedule<C: JacobiCoefficients + ?Sized>(
    family: &C,
    schedule: &[usize],
    lambda: f64,
) -> Vec<Result<DensityResult>> {
    let top = schedule.iter().copied().max().unwrap_or(1).max(1);
    let p = orthopoly_real(family, lambda, top);
    schedule
        .iter()
        .map(|&n| {
            let model = StabilizedModel::new(family, n)?;
            model.check(lambda)?;
            Ok(DensityResult {
                lambda,
                value: density_from_polys(&model, lambda, p[n - 1], p[n]),
                route: Route::Stabilized { n },
                uncertainty: 0.0,
            })
        })
        .collect()
}

/// Boundary coefficients of the stabilized Weyl solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiTheta {
    pub phi: LogComplex,
    pub theta: LogComplex,
    pub z: Complex64,
    pub a_n: f64,
}

impl PhiTheta {
    /// `Phi conj(Theta) - conj(Phi) Theta`.
    pub fn cross(&self) -> Complex64 {
        let phi = self.phi.to_complex();
        let theta = self.theta.to_complex();
        phi * theta.conj() - phi.conj() * theta
    }

    /// The value the cross term must equal: `1/(a_N (z - 1/z))`.
    pub fn cross_expected(&self) -> Complex64 {
        (self.a_n * (self.z - self.z.inv())).inv()
    }

    /// `1 / (2 pi i a_N (z - 1/z) |Phi|^2)`, real on the band.
    pub fn density(&self) -> f64 {
        let denom = Complex64::new(0.0, 2.0 * PI) * self.a_n * (self.z - self.z.inv());
        let v = denom.inv() * (-2.0 * self.phi.log_abs).exp();
        v.re
    }
}

/// `Phi_N = (P_N z^{N+1} - P_{N+1} z^N)/(z - 1/z)` and `Theta_N` likewise with
/// `Q`, for `lambda` in the closed upper half plane.
pub fn phi_theta<C: JacobiCoefficients + ?Sized>(family: &C, n: usize, lambda: Complex64) -> Result<PhiTheta> {
    let model = StabilizedModel::new(family, n)?;
    let z = z_branch(lambda, model.a_n, model.b_n).z;
    let gap = z - z.inv();
    if gap.norm() <= 1e-14 {
        return Err(SpectralError::BandEdge);
    }
    let seq = orthopoly(family, lambda, n, ScaleMode::default());
    let (pm, ps) = seq.p_scaled(n);
    let (pm1, ps1) = seq.p_scaled(n + 1);
    let (qm, _) = seq.q_scaled(n);
    let (qm1, _) = seq.q_scaled(n + 1);
    let ratio = (ps1 - ps).exp();
    let p_comb = pm * z - pm1 * ratio;
    let q_comb = qm * z - qm1 * ratio;
    if p_comb.norm() <= 1e-15 * (pm.norm() + (pm1 * ratio).norm()) {
        return Err(SpectralError::ZeroPhi);
    }
    let common = LogComplex::from_complex(z).powf(n as f64).mul(LogComplex::new(ps, 0.0));
    let inv_gap = LogComplex::from_complex(gap.inv());
    let phi = LogComplex::from_complex(p_comb).mul(common).mul(inv_gap);
    let theta = if q_comb.norm() == 0.0 {
        LogComplex::new(f64::NEG_INFINITY, 0.0)
    } else {
        LogComplex::from_complex(q_comb).mul(common).mul(inv_gap)
    };
    Ok(PhiTheta { phi, theta, z, a_n: model.a_n })
}

/// `m_N = -Theta_N / Phi_N`.
pub fn weyl_m_stabilized<C: JacobiCoefficients + ?Sized>(family: &C, n: usize, lambda: Complex64) -> Result<WeylValue> {
    let pt = phi_theta(family, n, lambda)?;
    let m = -pt.theta.div(pt.phi).to_complex();
    Ok(WeylValue { m, route: WeylRoute::PhiTheta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{CriticalFamily, ExplicitFamily};
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn free_density(x: f64) -> f64 {
        (4.0 - x * x).sqrt() / (2.0 * PI)
    }

    #[test]
    fn branch_examples() {
        assert_eq!(z_branch(c(0.0), 1.0, 0.0).z, Complex64::new(0.0, -1.0));
        let edge = z_branch(c(2.0), 1.0, 0.0);
        assert_eq!(edge.z, c(1.0));
        assert_eq!(edge.regime, BranchRegime::OnBand);
        let off = z_branch(c(3.0), 1.0, 0.0);
        assert_eq!(off.regime, BranchRegime::OffBand);
        assert!((off.z - c((3.0 - 5f64.sqrt()) / 2.0)).norm() < 1e-15);
        let below = z_branch(c(-3.0), 1.0, 0.0);
        assert!((below.z - c(-(3.0 - 5f64.sqrt()) / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn free_matrix_density() {
        let f = ExplicitFamily::free();
        let r = rho_stabilized(&f, 1, 0.0).unwrap();
        assert!((r.value - 1.0 / PI).abs() < 1e-15);
        for n in [1usize, 2, 7, 50] {
            for k in 0..=100 {
                let x = -1.9 + 3.8 * k as f64 / 100.0;
                let r = rho_stabilized(&f, n, x).unwrap();
                assert!((r.value - free_density(x)).abs() < 1e-12);
            }
        }
        let near = rho_stabilized(&f, 1, 2.0 - 1e-12).unwrap();
        assert!(near.value < 1e-5);
        assert!(matches!(rho_stabilized(&f, 1, 2.0), Err(SpectralError::OutsideBand { .. })));
    }

    #[test]
    fn rank_one_density() {
        let f = ExplicitFamily::free_with_diagonal(vec![1.0]);
        let r = rho_stabilized(&f, 2, 0.0).unwrap();
        assert!((r.value - 1.0 / (2.0 * PI)).abs() < 1e-15);
        for k in 0..=100 {
            let x = -1.9 + 3.8 * k as f64 / 100.0;
            let exact = (4.0 - x * x).sqrt() / (2.0 * PI * (2.0 - x));
            assert!((rho_stabilized(&f, 2, x).unwrap().value - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_theta_free_example() {
        let f = ExplicitFamily::free();
        let pt = phi_theta(&f, 1, c(0.0)).unwrap();
        assert!((pt.phi.abs().powi(2) - 0.25).abs() < 1e-15);
        assert!((pt.phi.to_complex() - Complex64::new(0.0, -0.5)).norm() < 1e-15);
        let m = weyl_m_stabilized(&f, 1, c(0.0)).unwrap();
        assert!((m.m - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(matches!(phi_theta(&f, 1, c(2.0)), Err(SpectralError::BandEdge)));
    }

    #[test]
    fn free_weyl_function_off_axis() {
        // m(l) = (-l + sqrt(l^2 - 4))/2 with Im m > 0 for Im l > 0
        let f = ExplicitFamily::free();
        let l = Complex64::new(0.7, 0.4);
        let m = weyl_m_stabilized(&f, 3, l).unwrap().m;
        let mut exact = (-l + (l * l - 4.0).sqrt()) / 2.0;
        if exact.im < 0.0 {
            exact = (-l - (l * l - 4.0).sqrt()) / 2.0;
        }
        assert!((m - exact).norm() < 1e-13, "{m} vs {exact}");
    }

    #[test]
    fn large_index_powers_do_not_underflow() {
        let f = ExplicitFamily::free();
        let l = Complex64::new(0.3, 0.5);
        let m_small = weyl_m_stabilized(&f, 5, l).unwrap().m;
        let m_big = weyl_m_stabilized(&f, 20_000, l).unwrap().m;
        assert!((m_small - m_big).norm() < 1e-10);
    }

    #[test]
    fn routes_agree_on_critical_band() {
        let f = CriticalFamily::new(0.5);
        let n = 400;
        let model = StabilizedModel::new(&f, n).unwrap();
        for k in 1..100 {
            let x = model.band.0 + model.width() * k as f64 / 100.0;
            let rho = rho_stabilized(&f, n, x).unwrap().value;
            let pt = phi_theta(&f, n, c(x)).unwrap();
            let m = weyl_m_stabilized(&f, n, c(x)).unwrap();
            // m carries an absolute rounding error of order 1e-13 |m|, which
            // dominates deep in the band where the density is tiny.
            let floor = 1e-12 * m.m.norm();
            assert!(m.m.im >= -floor, "{x}: {}", m.m);
            assert!((pt.density() - rho).abs() <= 1e-10 * rho + f64::MIN_POSITIVE, "{x}: {} vs {rho}", pt.density());
            assert!((m.density() - rho).abs() <= 1e-10 * rho + floor, "{x}: {} vs {rho}", m.density());
            let size = (pt.phi.log_abs + pt.theta.log_abs).exp();
            if size.is_finite() {
                let cross = pt.cross();
                let expected = pt.cross_expected();
                assert!((cross - expected).norm() <= 1e-10 * expected.norm() + 1e-12 * size);
            }
        }
    }

    #[test]
    fn schedule_matches_single_calls() {
        let f = CriticalFamily::new(0.5);
        let sched = [1000usize, 4000, 16000];
        let rows = rho_stabilized_schedule(&f, &sched, -1.0);
        for (n, r) in sched.iter().zip(rows) {
            assert_eq!(r.unwrap().value, rho_stabilized(&f, *n, -1.0).unwrap().value);
        }
        let out = rho_stabilized_schedule(&f, &[1, 1000], -10.0);
        assert!(matches!(out[0], Err(SpectralError::OutsideBand { .. })));
    }

    #[test]
    fn frozen_family_matches_model() {
        let f = CriticalFamily::new(0.5);
        let fr = Frozen { base: &f, n: 10 };
        assert_eq!(fr.a(5), f.a(5));
        assert_eq!(fr.a(1000), f.a(10));
        assert_eq!(fr.b(1000), f.b(10));
    }

    proptest! {
        #[test]
        fn root_lies_in_closed_disk(re in -5.0..5.0f64, im in 0.0..3.0f64) {
            let b = unit_root(Complex64::new(re, im));
            prop_assert!(b.z.norm() <= 1.0 + 1e-12);
            let w = Complex64::new(re, im);
            prop_assert!((b.z + b.z.inv() - w * 2.0).norm() <= 1e-9 * (1.0 + w.norm()));
            if im == 0.0 && re.abs() <= 1.0 {
                prop_assert!((b.z.norm() - 1.0).abs() <= 1e-12);
                prop_assert!(b.z.im <= 0.0);
            } else {
                prop_assert!(b.z.norm() < 1.0);
            }
        }

        #[test]
        fn branch_is_continuous_along_band(a in 0.5..5.0f64, b in -3.0..3.0f64) {
            let lo = b - 2.0 * a;
            let width = 4.0 * a;
            let mut prev = z_branch(c(lo - 0.2 * width), a, b).z;
            let steps = 140;
            for k in 1..=steps {
                let x = lo - 0.2 * width + 1.4 * width * k as f64 / steps as f64;
                let z = z_branch(c(x), a, b).z;
                let jump = (z / prev).arg().abs();
                prop_assert!(jump < std::f64::consts::FRAC_PI_2);
                prev = z;
            }
        }
    }
}
