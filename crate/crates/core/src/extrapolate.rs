//! Richardson extrapolation with arbitrary error exponents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

use crate::error::{Result, SpectralError};

/// Extrapolated value and the spread of the last two extrapolants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolated<T> {
    pub value: T,
    pub uncertainty: f64,
}

/// Eliminates the error terms `h^p` for each `p` in `exponents`, in order.
///
/// `steps` and `values` are paired samples `f(h_i)`. The elimination is exact
/// for geometric step sequences and approximate otherwise. At most
/// `steps.len() - 1` exponents are used.
pub fn richardson(steps: &[f64], values: &[f64], exponents: &[f64]) -> Result<Extrapolated<f64>> {
    let (value, previous) = eliminate(steps, values, exponents)?;
    Ok(Extrapolated { value, uncertainty: (value - previous).abs() })
}

/// Complex version of [`richardson`]; the uncertainty is a modulus.
pub fn richardson_complex(
    steps: &[f64],
    values: &[Complex64],
    exponents: &[f64],
) -> Result<Extrapolated<Complex64>> {
    let (value, previous) = eliminate(steps, values, exponents)?;
    Ok(Extrapolated { value, uncertainty: (value - previous).norm() })
}

/// Returns the final extrapolant and the best extrapolant one level below it.
fn eliminate<T>(steps: &[f64], values: &[T], exponents: &[f64]) -> Result<(T, T)>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    if steps.len() != values.len() || steps.is_empty() {
        return Err(SpectralError::InvalidArgument(
            "richardson needs matching, nonempty step and value lists".into(),
        ));
    }
    if steps.iter().any(|h| !(*h > 0.0)) {
        return Err(SpectralError::InvalidArgument("richardson steps must be positive".into()));
    }
    let levels = exponents.len().min(steps.len() - 1);
    let mut row: Vec<T> = values.to_vec();
    let mut previous = *row.last().unwrap();
    for &p in &exponents[..levels] {
        previous = *row.last().unwrap();
        let next: Vec<T> = (0..row.len() - 1)
            .map(|i| {
                let hc = steps[i].powf(p);
                let hf = steps[i + 1].powf(p);
                (row[i + 1] * hc - row[i] * hf) * (1.0 / (hc - hf))
            })
            .collect();
        row = next;
    }
    Ok((*row.last().unwrap(), previous))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_point_order_two_matches_closed_weights() {
        // f(h) = 1 + 2h + 3h^2 sampled at 4h, 2h, h
        let h = 1e-3;
        let f = |x: f64| 1.0 + 2.0 * x + 3.0 * x * x;
        let steps = [4.0 * h, 2.0 * h, h];
        let vals = steps.map(f);
        let e = richardson(&steps, &vals, &[1.0, 2.0]).unwrap();
        assert!((e.value - 1.0).abs() < 1e-13);
        let r1a = 2.0 * vals[1] - vals[0];
        let r1b = 2.0 * vals[2] - vals[1];
        assert!((e.value - (4.0 * r1b - r1a) / 3.0).abs() < 1e-15);
        assert!((e.uncertainty - (e.value - r1b).abs()).abs() < 1e-15);
    }

    #[test]
    fn fractional_exponents_are_eliminated() {
        let f = |n: f64| 5.0 + 0.7 * n.powf(-0.5) - 0.2 / n;
        let ns = [1000.0, 2000.0, 4000.0];
        let steps = ns.map(|n| 1.0 / n);
        let vals = ns.map(f);
        let e = richardson(&steps, &vals, &[0.5, 1.0]).unwrap();
        assert!((e.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_is_returned_unchanged() {
        let e = richardson(&[0.1], &[3.0], &[1.0]).unwrap();
        assert_eq!(e.value, 3.0);
        assert_eq!(e.uncertainty, 0.0);
    }

    #[test]
    fn rejects_mismatched_input() {
        assert!(richardson(&[0.1, 0.2], &[1.0], &[1.0]).is_err());
        assert!(richardson(&[0.0, 0.2], &[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn exact_on_polynomials_in_h(c0 in -10.0..10.0f64, c1 in -10.0..10.0f64, c2 in -10.0..10.0f64, h in 1e-4..1e-1f64) {
            let f = |x: f64| c0 + c1 * x + c2 * x * x;
            let steps = [4.0 * h, 2.0 * h, h];
            let vals = steps.map(f);
            let e = richardson(&steps, &vals, &[1.0, 2.0]).unwrap();
            prop_assert!((e.value - c0).abs() <= 1e-9 * (1.0 + c0.abs() + c1.abs() + c2.abs()));
        }

        #[test]
        fn constants_are_fixed_points(c in -1e6..1e6f64, r in 1.5..4.0f64) {
            let steps = [1.0, 1.0 / r, 1.0 / (r * r)];
            let e = richardson(&steps, &[c, c, c], &[0.5, 1.0]).unwrap();
            prop_assert!((e.value - c).abs() <= 1e-12 * c.abs().max(1.0));
            prop_assert!(e.uncertainty <= 1e-12 * c.abs().max(1.0));
        }
    }
}
