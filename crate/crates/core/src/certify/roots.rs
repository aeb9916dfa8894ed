//! Root window for `w1` when `w2 = p + s` and `w3 = w4 = 0`, the admissible
//! branches for `s`, and the weight selection built on them.

use serde::{Deserialize, Serialize};

use super::sweep::{certify, Verdict};
use crate::error::{Error, Result};
use crate::params::{ParamSet, WeightRecipe};

/// Roots `(w1⁻(θ), w1⁺(θ))` of `det M(θ)` viewed as a quadratic in `w1`.
pub fn w1_bounds(theta: f64, p: f64, gamma: f64, s: f64) -> Result<(f64, f64)> {
    let pt = (p - 2.0) * theta + 1.0;
    let st = 1.0 + s * theta;
    let kt = 1.0 + gamma * theta;
    let inner = pt + st - kt;
    if !(inner > 0.0) || !(pt > 0.0) {
        return Err(Error::Inadmissible { p, gamma, s });
    }
    let scale = (p + s) / (pt + st);
    let (ri, rp) = (inner.sqrt(), pt.sqrt());
    Ok((scale * (ri - rp).powi(2), scale * (ri + rp).powi(2)))
}

/// `sup_θ w1⁻ = (√(p-1+s-γ) - √(p-1))²`.
pub fn sup_w1_minus(p: f64, gamma: f64, s: f64) -> f64 {
    ((p - 1.0 + s - gamma).sqrt() - (p - 1.0).sqrt()).powi(2)
}

/// `inf_θ w1⁺ = min{2(p+s), (√(p-1+s-γ) + √(p-1))²}`.
pub fn inf_w1_plus(p: f64, gamma: f64, s: f64) -> f64 {
    (2.0 * (p + s)).min(((p - 1.0 + s - gamma).sqrt() + (p - 1.0).sqrt()).powi(2))
}

/// Closed-form extremes of the root functions, with a numerical cross-check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootAnalysis {
    pub p: f64,
    pub gamma: f64,
    pub s: f64,
    pub sup_w1_minus: f64,
    pub inf_w1_plus: f64,
    /// Stationary point used when `(p-2+s-2γ)(p-2-s) > 0`.
    pub theta1: Option<f64>,
    /// Stationary point used when `(p-2+s-2γ)(p-2-s) < 0`.
    pub theta2: Option<f64>,
    pub numeric_sup_w1_minus: f64,
    pub numeric_inf_w1_plus: f64,
    /// Both closed forms agree with the numerical extremes to `1e-8` relative
    /// (absolute below magnitude 1).
    pub consistent: bool,
}

impl RootAnalysis {
    pub fn gap(&self) -> f64 {
        self.inf_w1_plus - self.sup_w1_minus
    }
}

fn stationary_theta(p: f64, gamma: f64, s: f64) -> f64 {
    4.0 * (p - 2.0 - gamma) / ((p - 2.0 - s).powi(2) - 4.0 * (p - 2.0 - gamma) * (p - 2.0))
}

/// Golden-section refinement of a maximum of `f` in `[lo, hi]`.
fn refine_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut best = f(lo).max(f(hi));
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        let (fa, fb) = (f(a), f(b));
        best = best.max(fa).max(fb);
        if fa >= fb {
            hi = b;
        } else {
            lo = a;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    best
}

/// Dense sampling plus golden-section refinement of `max_θ f(θ)` on `[0, 1]`.
pub fn numeric_max_over_theta(f: impl Fn(f64) -> f64) -> f64 {
    const N: usize = 2000;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..=N {
        let v = f(k as f64 / N as f64);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let lo = best_k.saturating_sub(1) as f64 / N as f64;
    let hi = (best_k + 1).min(N) as f64 / N as f64;
    best.max(refine_max(&f, lo, hi))
}

pub fn extremal_bounds(p: f64, gamma: f64, s: f64) -> Result<RootAnalysis> {
    if !(s > gamma + 1.0 - p) || !(p > 1.0) || !(gamma > -1.0) {
        return Err(Error::Inadmissible { p, gamma, s });
    }
    let sup_m = sup_w1_minus(p, gamma, s);
    let inf_p = inf_w1_plus(p, gamma, s);
    let sign = (p - 2.0 + s - 2.0 * gamma) * (p - 2.0 - s);
    let th = stationary_theta(p, gamma, s);
    let th = th.is_finite().then_some(th);
    let (theta1, theta2) = if sign > 0.0 {
        (th, None)
    } else if sign < 0.0 {
        (None, th)
    } else {
        (None, None)
    };

    let minus = |t: f64| w1_bounds(t, p, gamma, s).map(|r| r.0).unwrap_or(f64::NEG_INFINITY);
    let plus = |t: f64| w1_bounds(t, p, gamma, s).map(|r| -r.1).unwrap_or(f64::NEG_INFINITY);
    let num_sup = numeric_max_over_theta(minus);
    let num_inf = -numeric_max_over_theta(plus);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1.0);
    Ok(RootAnalysis {
        p,
        gamma,
        s,
        sup_w1_minus: sup_m,
        inf_w1_plus: inf_p,
        theta1,
        theta2,
        numeric_sup_w1_minus: num_sup,
        numeric_inf_w1_plus: num_inf,
        consistent: close(sup_m, num_sup) && close(inf_p, num_inf),
    })
}

/// Which admissible range for `s` a triple falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `s > max{γ + 1 - p, -2 - γ}`
    OptimalBranch,
    /// `-2 - γ >= s > max{γ + 1 - p, 2p - 4 - γ - 2√(2(p-1)(p-2-γ))}`
    SecondBranch,
    Inadmissible,
}

pub fn admissible_s(p: f64, gamma: f64, s: f64) -> Branch {
    if !(p > 1.0 && gamma > -1.0 && s.is_finite()) {
        return Branch::Inadmissible;
    }
    let floor = gamma + 1.0 - p;
    if s > floor.max(-2.0 - gamma) {
        return Branch::OptimalBranch;
    }
    let disc = 2.0 * (p - 1.0) * (p - 2.0 - gamma);
    if s <= -2.0 - gamma && disc >= 0.0 {
        let second = 2.0 * p - 4.0 - gamma - 2.0 * disc.sqrt();
        if s > floor.max(second) {
            return Branch::SecondBranch;
        }
    }
    Branch::Inadmissible
}

/// The window condition `2(p+s) > (√(p-1+s-γ) - √(p-1))²`, meaningful when
/// `s > γ + 1 - p`.
pub fn restriction_s(p: f64, gamma: f64, s: f64) -> bool {
    2.0 * (p + s) > sup_w1_minus(p, gamma, s)
}

/// Margin asked of the certifier when accepting a general-`s` weight choice.
pub const SELECTION_MARGIN: f64 = 1e-12;

/// `w1 = sup w1⁻ + η` with `η = ½ min(gap, 1)`, halved until the certifier
/// accepts (at most 40 halvings).
pub fn select_weights_general_s(p: f64, gamma: f64, s: f64) -> Result<WeightRecipe> {
    if admissible_s(p, gamma, s) == Branch::Inadmissible {
        return Err(Error::Inadmissible { p, gamma, s });
    }
    let ra = extremal_bounds(p, gamma, s)?;
    let params = ParamSet::new(p, gamma, s, 0.0);
    let mut eta = 0.5 * ra.gap().min(1.0);
    for _ in 0..=40 {
        let w = WeightRecipe::general_s(ra.sup_w1_minus + eta, p, gamma, s, eta);
        let cert = certify(&w, &params, SELECTION_MARGIN)?;
        if cert.verdict == Verdict::Accept {
            return Ok(w);
        }
        eta *= 0.5;
    }
    Err(Error::WeightSelection(format!(
        "no eta accepted for (p, gamma, s) = ({p}, {gamma}, {s})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::coeffs::c_coefficients;
    use crate::params::SweepPoint;
    use proptest::prelude::*;

    #[test]
    fn window_endpoints() {
        let (m, pl) = w1_bounds(1.0, 3.0, 0.0, 0.0).unwrap();
        assert_eq!(m, 0.0);
        assert!((pl - 8.0).abs() < 1e-14);
        let (m, pl) = w1_bounds(0.0, 5.0, 0.3, -1.0).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(pl, 2.0 * (5.0 - 1.0));
    }

    #[test]
    fn extremes_for_simple_cases() {
        let ra = extremal_bounds(3.0, 0.0, 0.0).unwrap();
        assert_eq!(ra.sup_w1_minus, 0.0);
        assert_eq!(ra.inf_w1_plus, 6.0);
        assert!(ra.consistent, "{ra:?}");

        assert!(restriction_s(10.0, 0.0, -3.0));
        let lhs = (6f64.sqrt() - 3.0).powi(2);
        assert!((sup_w1_minus(10.0, 0.0, -3.0) - lhs).abs() < 1e-15);
        assert!((lhs - 0.303).abs() < 1e-3);
    }

    #[test]
    fn s_equal_gamma_gives_flat_lower_root() {
        let (p, g) = (6.0, 0.4);
        let ra = extremal_bounds(p, g, g).unwrap();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let (m, _) = w1_bounds(t, p, g, g).unwrap();
            assert!((m - ra.sup_w1_minus).abs() < 1e-12, "theta {t}: {m}");
        }
    }

    #[test]
    fn branch_examples() {
        assert_eq!(admissible_s(2.0, 0.0, 0.0), Branch::OptimalBranch);
        assert_eq!(admissible_s(10.0, 0.0, -3.0), Branch::SecondBranch);
        assert_eq!(admissible_s(10.0, 0.0, -8.0), Branch::Inadmissible);
    }

    #[test]
    fn weight_selection() {
        let w = select_weights_general_s(3.0, 0.0, 0.0).unwrap();
        assert_eq!(w.eta, 0.5);
        assert_eq!(w.w1, 0.5);
        assert_eq!((w.w2, w.w3, w.w4), (3.0, 0.0, 0.0));
        let w = select_weights_general_s(2.0, 0.0, 0.0).unwrap();
        assert_eq!(w.w1, w.eta);
        assert_eq!(w.w2, 2.0);
        assert!(select_weights_general_s(10.0, 0.0, -8.0).is_err());
        assert!(select_weights_general_s(10.0, 0.0, -3.0).is_ok());
    }

    proptest! {
        #[test]
        fn determinant_sign_matches_window(
            p in 1.1f64..30.0, gamma in -0.95f64..3.0, u in 0.0f64..1.0,
            theta in 0.0f64..1.0, v in 0.0f64..1.0,
        ) {
            let s_lo = gamma + 1.0 - p;
            let s = s_lo + 1e-3 + u * 10.0;
            let (lo, hi) = w1_bounds(theta, p, gamma, s).unwrap();
            let w1 = v * 1.5 * hi;
            let params = ParamSet::new(p, gamma, s, 0.0);
            let pt = SweepPoint::from_theta(theta, &params);
            let w = WeightRecipe::general_s(w1, p, gamma, s, 0.0);
            let det = c_coefficients(&w, &params, &pt).matrix(pt.p_theta).det();
            // skip points within rounding distance of a root
            let gap = (w1 - lo).abs().min((w1 - hi).abs());
            prop_assume!(gap > 1e-9 * hi.max(1.0));
            prop_assert_eq!(det > 0.0, lo < w1 && w1 < hi, "det {} window ({}, {}) w1 {}", det, lo, hi, w1);
        }

        #[test]
        fn branches_agree_with_restriction(p in 1.01f64..50.0, gamma in -0.99f64..5.0, u in 0.0f64..1.0) {
            let s = gamma + 1.0 - p + 1e-9 + u * 20.0;
            let admissible = admissible_s(p, gamma, s) != Branch::Inadmissible;
            prop_assert_eq!(admissible, restriction_s(p, gamma, s));
        }
    }
}
