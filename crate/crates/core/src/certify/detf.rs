//! The determinant of M for the Hessian recipe as an explicit polynomial
//! `f(κ, p, γ)`, and its γ-derivative `f_γ = Aγ + B`.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use super::coeffs::{c_coefficients, assemble_matrix};
use super::numeric::Real;
use crate::params::{ParamSet, SweepPoint, WeightRecipe};

/// `f(κ, p, γ)` with `a = 1 - γ` and the constant `b` supplied by the caller
/// (so interval callers can pass an enclosure of `2√2`).
pub fn det_f_generic<T: Real>(kappa: T, p: T, gamma: T, b: T) -> T {
    let one = T::cst(1.0);
    let two = T::cst(2.0);
    let a = one - gamma;
    let bm2 = b - two;
    let first = (two + bm2 * kappa)
        * (two * (one - gamma) + (two * gamma - (one + gamma) * bm2) * kappa + (two + gamma) * bm2 * kappa.sqr())
        * ((p - two) * (one - kappa) + one);
    let inner = (b - T::cst(4.0)) * (p - two - gamma) * (one - kappa) + two * (b - a) * kappa;
    first - T::cst(0.25) * kappa.sqr() * inner.sqr()
}

/// `f(0, p, γ) = 4(1 - γ)(p - 1)`.
pub fn det_f_at_zero<T: Real>(p: T, gamma: T) -> T {
    T::cst(4.0) * (T::cst(1.0) - gamma) * (p - T::cst(1.0))
}

/// `f(1, p, γ) = b² - (b - a)² = a(2b - a)`.
pub fn det_f_at_one<T: Real>(gamma: T, b: T) -> T {
    let a = T::cst(1.0) - gamma;
    a * (T::cst(2.0) * b - a)
}

/// `f(κ, p, γ)` in `f64`, using the closed edge forms at `κ ∈ {0, 1}`.
pub fn det_f(kappa: f64, p: f64, gamma: f64) -> f64 {
    let b = 2.0 * SQRT_2;
    if kappa == 0.0 {
        det_f_at_zero(p, gamma)
    } else if kappa == 1.0 {
        det_f_at_one(gamma, b)
    } else {
        det_f_generic(kappa, p, gamma, b)
    }
}

/// `∂f/∂γ` as displayed (with `a = 1 - γ` inside).
pub fn f_gamma_generic<T: Real>(kappa: T, p: T, gamma: T, b: T) -> T {
    let one = T::cst(1.0);
    let two = T::cst(2.0);
    let four = T::cst(4.0);
    let a = one - gamma;
    let ik = one - kappa;
    let first = -(ik * ((p - two) * ik + one) * ((b - two) * kappa + two).sqr());
    let second = T::cst(0.5)
        * kappa.sqr()
        * (ik * (b - four) - two * kappa)
        * ((b - four) * (p - two - gamma) * ik + two * (b - a) * kappa);
    first + second
}

pub fn f_gamma(kappa: f64, p: f64, gamma: f64) -> f64 {
    f_gamma_generic(kappa, p, gamma, 2.0 * SQRT_2)
}

/// `A(κ) = -½ κ² (2κ + (4 - b)(1 - κ))²`.
pub fn coef_a_generic<T: Real>(kappa: T, b: T) -> T {
    let one = T::cst(1.0);
    -(T::cst(0.5) * kappa.sqr() * (T::cst(2.0) * kappa + (T::cst(4.0) - b) * (one - kappa)).sqr())
}

pub fn coef_a(kappa: f64) -> f64 {
    coef_a_generic(kappa, 2.0 * SQRT_2)
}

/// `B(κ, p)`: since `f_γ` is affine in γ, `B = f_γ(κ, p, 0)`.
pub fn coef_b(kappa: f64, p: f64) -> f64 {
    f_gamma(kappa, p, 0.0)
}

/// Everything known about `det M` at one `(κ, p, γ)` for the Hessian recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetDiagnostics {
    pub kappa: f64,
    pub p: f64,
    pub gamma: f64,
    pub f_value: f64,
    /// `det` of the assembled matrix, for comparison with `f_value`.
    pub det_matrix: f64,
    pub f_gamma: f64,
    pub a: f64,
    pub b: f64,
}

pub fn det_diagnostics(kappa: f64, p: f64, gamma: f64) -> DetDiagnostics {
    let params = ParamSet::hessian(p, gamma, 0.0);
    let pt = SweepPoint::from_kappa(kappa, &params);
    let c = c_coefficients(&WeightRecipe::hessian(p, gamma), &params, &pt);
    DetDiagnostics {
        kappa,
        p,
        gamma,
        f_value: det_f(kappa, p, gamma),
        det_matrix: assemble_matrix(&c, &pt).det(),
        f_gamma: f_gamma(kappa, p, gamma),
        a: coef_a(kappa),
        b: coef_b(kappa, p),
    }
}

/// Magnitude of the terms that cancel in `f`, used to scale comparisons.
pub fn det_f_scale(kappa: f64, p: f64, gamma: f64) -> f64 {
    let b = 2.0 * SQRT_2;
    let abs = |v: f64| v.abs();
    let first = abs(2.0 + (b - 2.0) * kappa)
        * (abs(2.0 * (1.0 - gamma)) + abs(2.0 * gamma - (1.0 + gamma) * (b - 2.0)) + abs((2.0 + gamma) * (b - 2.0)))
        * (abs(p - 2.0) + 1.0);
    let inner = abs((b - 4.0) * (p - 2.0 - gamma)) + abs(2.0 * (b - 1.0 + gamma));
    first + 0.25 * inner * inner
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::numeric::Interval;
    use proptest::prelude::*;

    #[test]
    fn edge_values() {
        assert_eq!(det_f(0.0, 3.0, 0.0), 8.0);
        assert_eq!(det_f(1.0, 12.0, 0.0), 4.0 * SQRT_2 - 1.0);
        assert_eq!(det_f(0.0, 3.0, 1.0), 0.0);
        assert_eq!(det_f(1.0, 3.0, 1.0), 0.0);
        // f_gamma at kappa = 0 is B = -4(p - 1), with A(0) = 0
        assert_eq!(coef_a(0.0), 0.0);
        assert_eq!(f_gamma(0.0, 3.0, 0.4), -8.0);
    }

    #[test]
    fn edge_forms_match_the_general_formula() {
        let b = 2.0 * SQRT_2;
        for &(p, g) in &[(3.0, 0.0), (17.5, -0.6), (40.0, 0.9)] {
            let z = det_f_generic(0.0, p, g, b);
            assert!((z - det_f_at_zero(p, g)).abs() <= 1e-13 * z.abs().max(1.0));
            let o = det_f_generic(1.0, p, g, b);
            assert!((o - det_f_at_one(g, b)).abs() <= 1e-13 * o.abs().max(1.0));
        }
    }

    #[test]
    fn interval_enclosure_of_edge_zero_is_exact() {
        let b = Interval::sqrt_of(8.0);
        let v = det_f_at_one(Interval::point(1.0), b);
        assert_eq!(v, Interval::point(0.0));
    }

    proptest! {
        #[test]
        fn polynomial_equals_matrix_determinant(kappa in 0.0f64..1.0, p in 1.5f64..200.0, gamma in -0.999f64..1.5) {
            let d = det_diagnostics(kappa, p, gamma);
            let scale = det_f_scale(kappa, p, gamma);
            prop_assert!((d.f_value - d.det_matrix).abs() <= 1e-12 * scale,
                "f = {}, det = {}, scale = {scale}", d.f_value, d.det_matrix);
        }

        #[test]
        fn gamma_derivative_is_affine_and_matches_differences(
            kappa in 0.0f64..1.0, p in 3.0f64..40.0, gamma in -0.9f64..0.9,
        ) {
            let a = coef_a(kappa);
            prop_assert!(a <= 0.0);
            let fg = f_gamma(kappa, p, gamma);
            let affine = a * gamma + coef_b(kappa, p);
            let scale = det_f_scale(kappa, p, gamma);
            prop_assert!((fg - affine).abs() <= 1e-12 * scale);
            let h = 1e-4;
            let fd = (det_f_generic(kappa, p, gamma + h, 2.0 * SQRT_2)
                - det_f_generic(kappa, p, gamma - h, 2.0 * SQRT_2)) / (2.0 * h);
            // f is quadratic in gamma, so the central difference is exact up to rounding
            prop_assert!((fd - fg).abs() <= 1e-7 * scale, "fd {fd} vs {fg}");
        }
    }
}
