//! The coefficients c1..c4 of the weighted sum and the 2x2 matrix of the
//! quadratic form in `(Δ_T u, Δ∞ᴺu)`.

use serde::{Deserialize, Serialize};

use super::numeric::Real;
use crate::params::{ParamSet, SweepPoint, WeightRecipe};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CCoeffs<T = f64> {
    pub c1: T,
    pub c2: T,
    pub c3: T,
    pub c4: T,
}

/// Generic form of the coefficient formulas; `theta` is passed separately so
/// callers holding an exact `theta` do not recompute `1 - kappa`.
pub fn c_coefficients_generic<T: Real>(w: [T; 4], p: T, gamma: T, s: T, kappa: T, theta: T) -> CCoeffs<T> {
    let [w1, w2, w3, w4] = w;
    let two = T::cst(2.0);
    let four = T::cst(4.0);
    CCoeffs {
        c1: w1 + w3 * kappa,
        c2: (w1 * (p - two + s) + w3 * (p - four + s) * kappa) * theta,
        c3: w2 + w4 * kappa,
        c4: (w2 * (p - two + s - gamma) + w4 * (p - four + s - gamma) * kappa) * theta,
    }
}

pub fn c_coefficients(w: &WeightRecipe, params: &ParamSet, pt: &SweepPoint) -> CCoeffs {
    c_coefficients_generic(w.weights(), params.p, params.gamma, params.s, pt.kappa, pt.theta)
}

/// `M = [[m11, m12], [m12, m22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadMatrix<T = f64> {
    pub m11: T,
    pub m12: T,
    pub m22: T,
}

impl<T: Real> CCoeffs<T> {
    pub fn matrix(&self, p_theta: T) -> QuadMatrix<T> {
        let CCoeffs { c1, c2, c3, c4 } = *self;
        let two = T::cst(2.0);
        QuadMatrix {
            m11: c3,
            m12: T::cst(0.5) * (c3 * p_theta + (c3 + c4) - (two * c1 + c2)),
            m22: (c3 + c4) * p_theta,
        }
    }

    /// `[2c1 + c2, c3, det M]`, the three quantities that must stay positive.
    pub fn conditions(&self, p_theta: T) -> [T; 3] {
        [
            T::cst(2.0) * self.c1 + self.c2,
            self.c3,
            self.matrix(p_theta).det(),
        ]
    }
}

pub fn assemble_matrix(c: &CCoeffs, pt: &SweepPoint) -> QuadMatrix {
    c.matrix(pt.p_theta)
}

impl<T: Real> QuadMatrix<T> {
    pub fn det(&self) -> T {
        self.m11 * self.m22 - self.m12.sqr()
    }

    pub fn quad_form(&self, x: [T; 2]) -> T {
        self.m11 * x[0].sqr() + T::cst(2.0) * self.m12 * x[0] * x[1] + self.m22 * x[1].sqr()
    }
}

impl QuadMatrix<f64> {
    /// Smallest eigenvalue from the 2x2 closed form.
    pub fn lambda_min(&self) -> f64 {
        let half_tr = 0.5 * (self.m11 + self.m22);
        let half_diff = 0.5 * (self.m11 - self.m22);
        half_tr - half_diff.hypot(self.m12)
    }
}

/// Names of the three conditions, in the order of [`CCoeffs::conditions`].
pub const CONDITION_NAMES: [&str; 3] = ["2c1+c2", "c3", "det(M)"];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hessian_at(p: f64, gamma: f64, kappa: f64) -> (CCoeffs, QuadMatrix, SweepPoint) {
        let params = ParamSet::hessian(p, gamma, 0.0);
        let w = WeightRecipe::hessian(p, gamma);
        let pt = SweepPoint::from_kappa(kappa, &params);
        let c = c_coefficients(&w, &params, &pt);
        (c, assemble_matrix(&c, &pt), pt)
    }

    #[test]
    fn hessian_recipe_at_kappa_zero() {
        let (c, m, _) = hessian_at(3.0, 0.0, 0.0);
        assert_eq!((c.c1, c.c2, c.c3, c.c4), (3.0, 0.0, 2.0, 0.0));
        assert_eq!((m.m11, m.m12, m.m22), (2.0, 0.0, 4.0));
        assert_eq!(m.det(), 8.0);
        // f(0, p, gamma) = 4 (1 - gamma)(p - 1)
        assert_eq!(m.det(), 4.0 * (1.0 - 0.0) * (3.0 - 1.0));
    }

    #[test]
    fn hessian_recipe_at_kappa_one() {
        let (c, m, _) = hessian_at(7.0, 0.0, 1.0);
        assert_eq!((c.c2, c.c4), (0.0, 0.0));
        let expected = 4.0 * 2f64.sqrt() - 1.0;
        assert!((m.det() - expected).abs() < 1e-13, "{}", m.det());
    }

    #[test]
    fn zero_weights_give_zero_matrix() {
        let params = ParamSet::new(4.0, 0.2, 0.0, 0.0);
        let pt = SweepPoint::from_kappa(0.3, &params);
        let c = c_coefficients(&WeightRecipe::custom(0.0, 0.0, 0.0, 0.0), &params, &pt);
        let m = assemble_matrix(&c, &pt);
        assert_eq!((m.m11, m.m12, m.m22, m.det()), (0.0, 0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn two_c1_plus_c2_hessian_form(p in 3.0f64..40.0, gamma in -0.99f64..0.99, kappa in 0.0f64..1.0) {
            let (c, _, _) = hessian_at(p, gamma, kappa);
            let w = WeightRecipe::hessian(p, gamma);
            let oracle = 2.0 * (w.w1 + w.w3 * kappa * kappa);
            let scale = 2.0 * (w.w1.abs() + w.w3.abs());
            prop_assert!((2.0 * c.c1 + c.c2 - oracle).abs() <= 1e-14 * scale);
        }

        #[test]
        fn quadratic_form_above_lambda_min(
            p in 3.0f64..40.0, gamma in -0.95f64..0.95, kappa in 0.0f64..1.0,
            x in -10.0f64..10.0, y in -10.0f64..10.0,
        ) {
            let (_, m, _) = hessian_at(p, gamma, kappa);
            let q = m.quad_form([x, y]);
            let bound = m.lambda_min() * (x * x + y * y);
            let scale = (m.m11.abs() + m.m12.abs() + m.m22.abs()) * (x * x + y * y);
            prop_assert!(q >= bound - 1e-12 * scale);
        }
    }
}
