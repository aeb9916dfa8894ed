//! Rigorous adaptive sweep over κ ∈ [0, 1] bounding
//! `min{2c1 + c2, c3, det M}` from below.

use serde::{Deserialize, Serialize};

use super::coeffs::{c_coefficients_generic, CONDITION_NAMES};
use super::numeric::{Dual, Interval, Poly, Real};
use crate::error::{Error, Result};
use crate::params::{ParamSet, WeightRecipe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Per-cell Lipschitz bounds of the condition polynomials in κ.
    LipschitzSweep,
    /// Outward-rounded interval evaluation with a mean-value form.
    IntervalSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub method: Method,
    pub max_depth: u32,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            method: Method::LipschitzSweep,
            max_depth: 40,
        }
    }
}

/// One verified κ-cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub lower_bound: f64,
}

/// A point where a condition is provably below the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub kappa: f64,
    pub condition: String,
    /// Rigorous upper bound of the condition at `kappa`.
    pub upper_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub params: ParamSet,
    pub weights: WeightRecipe,
    pub target_margin: f64,
    /// Smallest verified lower bound over the cells that were closed.
    pub margin_c: f64,
    pub method: Method,
    pub verdict: Verdict,
    pub cells: Vec<Cell>,
    pub witness: Option<Witness>,
    /// κ-interval that could not be decided at the depth limit.
    pub undecided: Option<[f64; 2]>,
    pub lambda_note: String,
}

impl Certificate {
    /// Midpoint of the cell carrying the smallest lower bound.
    pub fn argmin_kappa(&self) -> Option<f64> {
        self.cells
            .iter()
            .min_by(|a, b| a.lower_bound.total_cmp(&b.lower_bound))
            .map(|c| 0.5 * (c.kappa_lo + c.kappa_hi))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn point_weights(w: &WeightRecipe) -> [Interval; 4] {
    w.weights().map(Interval::point)
}

/// The three condition polynomials in κ with interval coefficients.
pub fn condition_polys(w: &WeightRecipe, params: &ParamSet) -> [Poly<Interval>; 3] {
    let wi = point_weights(w).map(Poly::constant);
    let k = Poly::<Interval>::x();
    let theta = Poly::cst(1.0) - k;
    let c = c_coefficients_generic(
        wi,
        Poly::cst(params.p),
        Poly::cst(params.gamma),
        Poly::cst(params.s),
        k,
        theta,
    );
    let p_theta = (Poly::cst(params.p) - Poly::cst(2.0)) * theta + Poly::cst(1.0);
    c.conditions(p_theta)
}

/// Conditions evaluated with an arbitrary scalar type.
fn conditions_at<T: Real>(w: [T; 4], params: &ParamSet, kappa: T) -> [T; 3] {
    let theta = T::cst(1.0) - kappa;
    let (p, g, s) = (T::cst(params.p), T::cst(params.gamma), T::cst(params.s));
    let c = c_coefficients_generic(w, p, g, s, kappa, theta);
    let p_theta = (p - T::cst(2.0)) * theta + T::cst(1.0);
    c.conditions(p_theta)
}

/// Rigorous enclosures of the conditions at a single κ.
fn conditions_point(w: &WeightRecipe, params: &ParamSet, kappa: f64) -> [Interval; 3] {
    conditions_at(point_weights(w), params, Interval::point(kappa))
}

/// Lower bounds of the three conditions on `[lo, hi]` in interval mode.
fn interval_cell_bounds(w: &WeightRecipe, params: &ParamSet, lo: f64, hi: f64) -> [f64; 3] {
    type D = Dual<Interval, 1>;
    let wd = point_weights(w).map(D::constant);
    let cell = Interval::new(lo, hi);
    let whole = conditions_at(wd, params, D::var(cell, 0));
    let m = 0.5 * lo + 0.5 * hi;
    let r = (Interval::point(hi) - Interval::point(m))
        .hi
        .max((Interval::point(m) - Interval::point(lo)).hi);
    let at_mid = conditions_point(w, params, m);
    let mut out = [0.0; 3];
    for k in 0..3 {
        let deriv = whole[k].d[0];
        out[k] = if deriv.lo >= 0.0 {
            conditions_point(w, params, lo)[k].lo
        } else if deriv.hi <= 0.0 {
            conditions_point(w, params, hi)[k].lo
        } else {
            let mv = (Interval::point(at_mid[k].lo) - Interval::point(deriv.mag()) * Interval::point(r)).lo;
            mv.max(whole[k].val.lo)
        };
    }
    out
}

/// Certifies `min{2c1 + c2, c3, det M} >= target_margin` over κ ∈ [0, 1]
/// with the default options.
pub fn certify(w: &WeightRecipe, params: &ParamSet, target_margin: f64) -> Result<Certificate> {
    certify_with(w, params, target_margin, &CertifyOptions::default())
}

pub fn certify_with(
    w: &WeightRecipe,
    params: &ParamSet,
    target_margin: f64,
    opts: &CertifyOptions,
) -> Result<Certificate> {
    if !w.is_finite() {
        return Err(Error::Param(format!("weights must be finite (got {:?})", w.weights())));
    }
    if !(target_margin > 0.0) || !target_margin.is_finite() {
        return Err(Error::Param(format!(
            "target margin > 0 violated (target = {target_margin})"
        )));
    }
    for (name, v) in [("p", params.p), ("gamma", params.gamma), ("s", params.s)] {
        if !v.is_finite() {
            return Err(Error::Param(format!("{name} must be finite (got {v})")));
        }
    }

    let polys = condition_polys(w, params);
    let cell_bounds = |lo: f64, hi: f64| -> [f64; 3] {
        match opts.method {
            Method::LipschitzSweep => polys.each_ref().map(|p| p.lower_bound_on(lo, hi)),
            Method::IntervalSweep => interval_cell_bounds(w, params, lo, hi),
        }
    };

    let mut cells = Vec::new();
    let mut witness = None;
    let mut undecided = None;
    // depth-first, left to right, so cells come out sorted
    let mut stack = vec![(0.0f64, 1.0f64, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let bounds = cell_bounds(lo, hi);
        let lb = bounds.iter().copied().fold(f64::INFINITY, f64::min);
        if lb >= target_margin {
            cells.push(Cell {
                kappa_lo: lo,
                kappa_hi: hi,
                lower_bound: lb,
            });
            continue;
        }
        let mid = 0.5 * lo + 0.5 * hi;
        for probe in [lo, mid, hi] {
            let vals = conditions_point(w, params, probe);
            if let Some(k) = (0..3).find(|&k| vals[k].hi < target_margin) {
                witness = Some(Witness {
                    kappa: probe,
                    condition: CONDITION_NAMES[k].to_string(),
                    upper_bound: vals[k].hi,
                });
                break;
            }
        }
        if witness.is_some() {
            break;
        }
        if depth >= opts.max_depth || !(mid > lo && mid < hi) {
            undecided = Some([lo, hi]);
            break;
        }
        stack.push((mid, hi, depth + 1));
        stack.push((lo, mid, depth + 1));
    }

    let verdict = if witness.is_some() {
        Verdict::Reject
    } else if undecided.is_some() {
        Verdict::Inconclusive
    } else {
        Verdict::Accept
    };
    let margin_c = match (&witness, verdict) {
        (Some(wit), _) => wit.upper_bound.min(cells.iter().map(|c| c.lower_bound).fold(f64::INFINITY, f64::min)),
        _ => cells.iter().map(|c| c.lower_bound).fold(f64::INFINITY, f64::min),
    };
    let lambda_note = match verdict {
        Verdict::Accept => format!(
            "margin_c = {margin_c:e} > 0 over the whole sweep, so the quadratic form is uniformly \
             positive definite and a positive lambda exists"
        ),
        Verdict::Reject => "a condition is provably below the target; no uniform lambda is certified".into(),
        Verdict::Inconclusive => "depth limit reached before the sweep was decided".into(),
    };
    Ok(Certificate {
        params: *params,
        weights: *w,
        target_margin,
        margin_c,
        method: opts.method,
        verdict,
        cells,
        witness,
        undecided,
        lambda_note,
    })
}

/// Plain-float conditions, for sampling checks.
pub fn conditions_f64(w: &WeightRecipe, params: &ParamSet, kappa: f64) -> [f64; 3] {
    conditions_at(w.weights(), params, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hessian(p: f64, gamma: f64) -> (WeightRecipe, ParamSet) {
        (WeightRecipe::hessian(p, gamma), ParamSet::hessian(p, gamma, 0.0))
    }

    fn assert_covering(cert: &Certificate) {
        assert_eq!(cert.cells.first().unwrap().kappa_lo, 0.0);
        assert_eq!(cert.cells.last().unwrap().kappa_hi, 1.0);
        for pair in cert.cells.windows(2) {
            assert_eq!(pair[0].kappa_hi, pair[1].kappa_lo);
        }
    }

    #[test]
    fn accepts_inside_the_range_in_both_modes() {
        let (w, params) = hessian(3.0, 0.0);
        for method in [Method::LipschitzSweep, Method::IntervalSweep] {
            let opts = CertifyOptions { method, max_depth: 40 };
            let cert = certify_with(&w, &params, 1e-3, &opts).unwrap();
            assert_eq!(cert.verdict, Verdict::Accept, "{method:?}");
            assert!(cert.margin_c >= 1e-3);
            assert_covering(&cert);
        }
    }

    #[test]
    fn rejects_at_gamma_one() {
        let (w, params) = hessian(3.0, 1.0);
        let cert = certify(&w, &params, 1e-3).unwrap();
        assert_eq!(cert.verdict, Verdict::Reject);
        let wit = cert.witness.unwrap();
        assert!(wit.upper_bound < 1e-3);
    }

    #[test]
    fn rejects_for_large_p() {
        let (w, params) = hessian(150.0, 0.0);
        let cert = certify(&w, &params, 1e-6).unwrap();
        assert_eq!(cert.verdict, Verdict::Reject);
        let wit = cert.witness.unwrap();
        assert_eq!(wit.condition, "det(M)");
        assert!(wit.upper_bound < 0.0);
    }

    #[test]
    fn inconclusive_is_distinct() {
        // target just below the true minimum: a shallow sweep cannot decide
        let (w, params) = hessian(10.0, 0.5);
        let exact_min = (0..=10_000)
            .map(|k| conditions_f64(&w, &params, k as f64 / 1e4).into_iter().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min);
        let opts = CertifyOptions {
            method: Method::LipschitzSweep,
            max_depth: 3,
        };
        let cert = certify_with(&w, &params, exact_min * 0.999, &opts).unwrap();
        assert_eq!(cert.verdict, Verdict::Inconclusive);
        assert!(cert.undecided.is_some());
    }

    #[test]
    fn rejects_bad_input() {
        let (w, params) = hessian(3.0, 0.0);
        assert!(certify(&w, &params, 0.0).is_err());
        assert!(certify(&WeightRecipe::custom(f64::NAN, 1.0, 0.0, 0.0), &params, 1e-3).is_err());
    }

    #[test]
    fn accepted_margins_hold_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(p, g) in &[(3.0, 0.0), (20.0, -0.9), (40.0, 0.95), (12.5, 0.5)] {
            let (w, params) = hessian(p, g);
            let cert = certify(&w, &params, 1e-4).unwrap();
            assert_eq!(cert.verdict, Verdict::Accept);
            for _ in 0..20_000 {
                let k: f64 = rng.gen();
                let m = conditions_f64(&w, &params, k).into_iter().fold(f64::INFINITY, f64::min);
                assert!(m >= cert.margin_c, "kappa {k}: {m} < {}", cert.margin_c);
            }
        }
    }

    #[test]
    fn json_fields() {
        let (w, params) = hessian(3.0, 0.0);
        let v: serde_json::Value = serde_json::from_str(&certify(&w, &params, 1e-3).unwrap().to_json().unwrap()).unwrap();
        for key in ["params", "weights", "cells", "margin_c", "method", "verdict"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "lipschitz_sweep");
        assert_eq!(v["verdict"], "accept");
    }
}
