//! Exponents, weights and the per-point sweep variables.

use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use crate::certify::roots::{admissible_s, Branch};
use crate::error::{Error, Result};

/// Exponents `(p, gamma, s)` and the regularization `epsilon`.
///
/// Serializes to `{"p": .., "gamma": .., "s": .., "epsilon": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub p: f64,
    pub gamma: f64,
    pub s: f64,
    pub epsilon: f64,
}

impl ParamSet {
    pub fn new(p: f64, gamma: f64, s: f64, epsilon: f64) -> Self {
        Self { p, gamma, s, epsilon }
    }

    /// Parameters for the Hessian estimate, where `s = 2 - p`.
    pub fn hessian(p: f64, gamma: f64, epsilon: f64) -> Self {
        Self::new(p, gamma, 2.0 - p, epsilon)
    }

    /// Checks the invariants every computation relies on:
    /// finite values, `p > 1`, `gamma > -1`, `epsilon >= 0`.
    pub fn check_basic(&self) -> Result<()> {
        for (name, v) in [
            ("p", self.p),
            ("gamma", self.gamma),
            ("s", self.s),
            ("epsilon", self.epsilon),
        ] {
            if !v.is_finite() {
                return Err(Error::Param(format!("{name} must be finite (got {v})")));
            }
        }
        if !(self.p > 1.0) {
            return Err(Error::Param(format!("p > 1 violated (p = {})", self.p)));
        }
        if !(self.gamma > -1.0) {
            return Err(Error::Param(format!(
                "gamma > -1 violated (gamma = {})",
                self.gamma
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Param(format!(
                "epsilon >= 0 violated (epsilon = {})",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Rejects the degenerate exponent `s = gamma - p`, where `p + s - gamma`
    /// vanishes in the cylinder estimate.
    pub fn check_estimator_exponent(&self) -> Result<()> {
        if self.s == self.gamma - self.p {
            return Err(Error::Param(format!(
                "s != gamma - p violated (s = {}, gamma - p = {})",
                self.s,
                self.gamma - self.p
            )));
        }
        Ok(())
    }

    pub fn require_positive_epsilon(&self) -> Result<()> {
        if self.epsilon > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositiveEpsilon(self.epsilon))
        }
    }
}

/// What a parameter set is about to be used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Hessian estimate: `3 <= p <= 40` and `-1 < gamma < 1`.
    Thm11,
    /// Nonlinear gradient estimate: one of the two admissible `s` branches.
    GeneralS,
    /// Running the regularized solver: `p > 1`, `gamma > -1`, `epsilon > 0`.
    Solver,
}

/// Returns the parameters unchanged if they are in range for `purpose`.
pub fn validate_params(params: ParamSet, purpose: Purpose) -> Result<ParamSet> {
    params.check_basic()?;
    match purpose {
        Purpose::Thm11 => {
            let ParamSet { p, gamma, .. } = params;
            if !(p >= 3.0) {
                return Err(Error::Param(format!("3 <= p violated (p = {p})")));
            }
            if !(p <= 40.0) {
                return Err(Error::Param(format!("p <= 40 violated (p = {p})")));
            }
            if !(gamma < 1.0) {
                return Err(Error::Param(format!("gamma < 1 violated (gamma = {gamma})")));
            }
        }
        Purpose::GeneralS => {
            if admissible_s(params.p, params.gamma, params.s) == Branch::Inadmissible {
                let ParamSet { p, gamma, s, .. } = params;
                let lower = (gamma + 1.0 - p).max(-2.0 - gamma);
                return Err(Error::Param(format!(
                    "s > max{{gamma + 1 - p, -2 - gamma}} = {lower} violated and the \
                     second branch -2 - gamma >= s > max{{gamma + 1 - p, \
                     2p - 4 - gamma - 2 sqrt(2(p - 1)(p - 2 - gamma))}} fails (s = {s})"
                )));
            }
        }
        Purpose::Solver => params.require_positive_epsilon()?,
    }
    Ok(params)
}

/// Weights of the four divergence structures in the weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRecipe {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    /// Shorthand `1 - gamma`.
    pub a: f64,
    /// Shorthand `2 sqrt(2)`.
    pub b: f64,
    /// Slack added above the lower root when `w1` is selected for general `s`.
    pub eta: f64,
}

impl WeightRecipe {
    /// Weights for the Hessian estimate (`s = 2 - p`):
    /// `w1 = p - gamma`, `w2 = 2`, `w3 = 1 - p`, `w4 = 2(sqrt 2 - 1)`.
    pub fn hessian(p: f64, gamma: f64) -> Self {
        Self {
            w1: p - gamma,
            w2: 2.0,
            w3: 1.0 - p,
            w4: 2.0 * (SQRT_2 - 1.0),
            a: 1.0 - gamma,
            b: 2.0 * SQRT_2,
            eta: 0.0,
        }
    }

    /// Weights for general `s`: `w2 = p + s`, `w3 = w4 = 0`.
    pub fn general_s(w1: f64, p: f64, gamma: f64, s: f64, eta: f64) -> Self {
        Self {
            w1,
            w2: p + s,
            w3: 0.0,
            w4: 0.0,
            a: 1.0 - gamma,
            b: 2.0 * SQRT_2,
            eta,
        }
    }

    pub fn custom(w1: f64, w2: f64, w3: f64, w4: f64) -> Self {
        Self {
            w1,
            w2,
            w3,
            w4,
            a: f64::NAN,
            b: 2.0 * SQRT_2,
            eta: 0.0,
        }
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.w1, self.w2, self.w3, self.w4]
    }

    pub fn is_finite(&self) -> bool {
        self.weights().iter().all(|w| w.is_finite())
    }
}

/// One point of the regularization sweep.
///
/// `kappa = eps / (|Du|^2 + eps)` and `theta = 1 - kappa`; the three
/// affine functions of `theta` appear throughout the coefficient algebra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub kappa: f64,
    pub theta: f64,
    /// `(p - 2) theta + 1`
    pub p_theta: f64,
    /// `1 + s theta`
    pub s_theta: f64,
    /// `1 + gamma theta`
    pub k_theta: f64,
}

impl SweepPoint {
    pub fn from_kappa(kappa: f64, params: &ParamSet) -> Self {
        Self::build(kappa, 1.0 - kappa, params)
    }

    pub fn from_theta(theta: f64, params: &ParamSet) -> Self {
        Self::build(1.0 - theta, theta, params)
    }

    fn build(kappa: f64, theta: f64, params: &ParamSet) -> Self {
        Self {
            kappa,
            theta,
            p_theta: (params.p - 2.0) * theta + 1.0,
            s_theta: 1.0 + params.s * theta,
            k_theta: 1.0 + params.gamma * theta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hessian_range() {
        assert!(validate_params(ParamSet::hessian(3.0, 0.0, 0.0), Purpose::Thm11).is_ok());
        assert!(validate_params(ParamSet::hessian(40.0, 0.99, 0.0), Purpose::Thm11).is_ok());
        let err = validate_params(ParamSet::hessian(41.0, 0.0, 0.0), Purpose::Thm11)
            .unwrap_err()
            .to_string();
        assert!(err.contains("p <= 40"), "{err}");
        let err = validate_params(ParamSet::hessian(3.0, 1.0, 0.0), Purpose::Thm11)
            .unwrap_err()
            .to_string();
        assert!(err.contains("gamma < 1"), "{err}");
        let err = validate_params(ParamSet::hessian(2.5, 0.0, 0.0), Purpose::Thm11)
            .unwrap_err()
            .to_string();
        assert!(err.contains("3 <= p"), "{err}");
    }

    #[test]
    fn general_s_and_solver() {
        let ok = ParamSet::new(2.0, 0.0, 0.0, 0.0);
        assert_eq!(validate_params(ok, Purpose::GeneralS).unwrap(), ok);
        assert!(validate_params(ParamSet::new(10.0, 0.0, -8.0, 0.0), Purpose::GeneralS).is_err());

        assert!(validate_params(ParamSet::new(1.5, -0.5, 0.0, 1e-3), Purpose::Solver).is_ok());
        assert!(matches!(
            validate_params(ParamSet::new(1.5, -0.5, 0.0, 0.0), Purpose::Solver),
            Err(Error::NonPositiveEpsilon(_))
        ));
        let err = validate_params(ParamSet::new(1.0, 0.0, 0.0, 1.0), Purpose::Solver)
            .unwrap_err()
            .to_string();
        assert!(err.contains("p > 1"));
        let err = validate_params(ParamSet::new(2.0, -1.0, 0.0, 1.0), Purpose::Solver)
            .unwrap_err()
            .to_string();
        assert!(err.contains("gamma > -1"));
    }

    #[test]
    fn excluded_exponent() {
        let p = ParamSet::new(3.0, 0.5, 0.5 - 3.0, 1e-2);
        assert!(p.check_estimator_exponent().is_err());
        assert!(ParamSet::new(3.0, 0.5, 0.0, 1e-2).check_estimator_exponent().is_ok());
    }

    #[test]
    fn sweep_endpoints() {
        let params = ParamSet::new(7.5, 0.3, -1.25, 0.0);
        let at_theta1 = SweepPoint::from_kappa(0.0, &params);
        assert_eq!(at_theta1.theta, 1.0);
        assert_eq!(at_theta1.p_theta, params.p - 1.0);
        assert_eq!(at_theta1.s_theta, 1.0 + params.s);
        assert_eq!(at_theta1.k_theta, 1.0 + params.gamma);
        let at_theta0 = SweepPoint::from_kappa(1.0, &params);
        assert_eq!(at_theta0.theta, 0.0);
        assert_eq!(
            (at_theta0.p_theta, at_theta0.s_theta, at_theta0.k_theta),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn hessian_recipe_values() {
        let w = WeightRecipe::hessian(5.0, 0.25);
        assert_eq!(w.w1, 4.75);
        assert_eq!(w.w2, 2.0);
        assert_eq!(w.w3, -4.0);
        assert_eq!(w.w4, 2.0 * (SQRT_2 - 1.0));
        assert_eq!(w.b - 2.0, w.w4);
    }

    #[test]
    fn params_json_keys() {
        let p = ParamSet::new(3.0, 0.5, -1.0, 0.01);
        let v: serde_json::Value = serde_json::to_value(p).unwrap();
        for key in ["p", "gamma", "s", "epsilon"] {
            assert!(v.get(key).is_some());
        }
        let back: ParamSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }
}
