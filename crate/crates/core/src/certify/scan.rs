//! Parameter-region scans, landscapes of `f` and `f_γ` over `(κ, p)`, a 2-D
//! branch-and-bound that certifies their signs on a whole slice, and the
//! search for a large-p point where the Hessian recipe breaks down.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detf::{coef_a, det_f, det_f_at_one, det_f_at_zero, det_f_generic, det_f_scale, f_gamma, f_gamma_generic};
use super::numeric::{Dual, Interval, Real};
use super::roots::{admissible_s, select_weights_general_s, Branch};
use super::sweep::{certify, Verdict};
use crate::error::{Error, Result};
use crate::params::{ParamSet, WeightRecipe};

/// How weights (and `s`) are chosen at each scanned `(p, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SPolicy {
    /// `s = 2 - p` with the Hessian weight recipe.
    Hessian,
    /// Fixed `s` with weights from the root window.
    GeneralS { s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionVerdict {
    Accept,
    Reject,
    Inconclusive,
    /// `s` outside both admissible branches (general-s policy only).
    Inadmissible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub p: f64,
    pub gamma: f64,
    pub kappa_min_location: f64,
    pub min_value: f64,
    pub verdict: RegionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub policy: SPolicy,
    pub target_margin: f64,
    pub rows: Vec<RegionRow>,
}

impl RegionMap {
    pub fn all_accepted(&self) -> bool {
        self.rows.iter().all(|r| r.verdict == RegionVerdict::Accept)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "p,gamma,kappa_min_location,min_value,verdict")?;
        for r in &self.rows {
            let v = match r.verdict {
                RegionVerdict::Accept => "accept",
                RegionVerdict::Reject => "reject",
                RegionVerdict::Inconclusive => "inconclusive",
                RegionVerdict::Inadmissible => "inadmissible",
            };
            writeln!(w, "{},{},{},{},{}", r.p, r.gamma, r.kappa_min_location, r.min_value, v)?;
        }
        Ok(())
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                if k + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite()) || r[1] < r[0] {
        return Err(Error::Param(format!("{name} range {r:?} must be finite and ordered")));
    }
    Ok(())
}

fn scan_point(p: f64, gamma: f64, policy: SPolicy, target: f64) -> Result<RegionRow> {
    let (w, params) = match policy {
        SPolicy::Hessian => (WeightRecipe::hessian(p, gamma), ParamSet::hessian(p, gamma, 0.0)),
        SPolicy::GeneralS { s } => {
            if admissible_s(p, gamma, s) == Branch::Inadmissible {
                return Ok(RegionRow {
                    p,
                    gamma,
                    kappa_min_location: f64::NAN,
                    min_value: f64::NAN,
                    verdict: RegionVerdict::Inadmissible,
                });
            }
            match select_weights_general_s(p, gamma, s) {
                Ok(w) => (w, ParamSet::new(p, gamma, s, 0.0)),
                Err(Error::WeightSelection(_)) => {
                    return Ok(RegionRow {
                        p,
                        gamma,
                        kappa_min_location: f64::NAN,
                        min_value: f64::NAN,
                        verdict: RegionVerdict::Inconclusive,
                    })
                }
                Err(e) => return Err(e),
            }
        }
    };
    let cert = certify(&w, &params, target)?;
    let (kappa_min_location, verdict) = match cert.verdict {
        Verdict::Accept => (cert.argmin_kappa().unwrap_or(f64::NAN), RegionVerdict::Accept),
        Verdict::Reject => (
            cert.witness.as_ref().map_or(f64::NAN, |w| w.kappa),
            RegionVerdict::Reject,
        ),
        Verdict::Inconclusive => (
            cert.undecided.map_or(f64::NAN, |u| 0.5 * (u[0] + u[1])),
            RegionVerdict::Inconclusive,
        ),
    };
    Ok(RegionRow {
        p,
        gamma,
        kappa_min_location,
        min_value: cert.margin_c,
        verdict,
    })
}

/// Certifies every point of a `resolution[0] x resolution[1]` grid over
/// `p_range x gamma_range`. Rows are ordered by `p`, then `γ`.
pub fn scan_region(
    p_range: [f64; 2],
    gamma_range: [f64; 2],
    policy: SPolicy,
    resolution: [usize; 2],
    target_margin: f64,
) -> Result<RegionMap> {
    check_range("p", p_range)?;
    check_range("gamma", gamma_range)?;
    if resolution.contains(&0) {
        return Err(Error::Param(format!("resolution >= 1 violated (resolution = {resolution:?})")));
    }
    let ps = linspace(p_range[0], p_range[1], resolution[0]);
    let gs = linspace(gamma_range[0], gamma_range[1], resolution[1]);
    let points: Vec<(f64, f64)> = ps.iter().flat_map(|&p| gs.iter().map(move |&g| (p, g))).collect();
    let rows = points
        .par_iter()
        .map(|&(p, g)| scan_point(p, g, policy, target_margin))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionMap {
        policy,
        target_margin,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Landscapes over (κ, p) at fixed γ.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeKind {
    /// `f(κ, p, γ)`
    F,
    /// `f_γ(κ, p, γ)`
    FGamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub kind: LandscapeKind,
    pub gamma: f64,
    pub kappas: Vec<f64>,
    pub ps: Vec<f64>,
    /// `values[i][j]` at `(kappas[j], ps[i])`.
    pub values: Vec<Vec<f64>>,
}

impl Landscape {
    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Gnuplot `nonuniform matrix` text layout: the first row is the column
    /// count followed by the κ values; each further row is `p` then values.
    pub fn write_gnuplot(&self, w: &mut impl Write) -> Result<()> {
        let mut head = vec![self.kappas.len().to_string()];
        head.extend(self.kappas.iter().map(|k| k.to_string()));
        writeln!(w, "{}", head.join(" "))?;
        for (p, row) in self.ps.iter().zip(&self.values) {
            let mut line = vec![p.to_string()];
            line.extend(row.iter().map(|v| v.to_string()));
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

pub fn landscape(
    kind: LandscapeKind,
    gamma: f64,
    kappa_n: usize,
    p_range: [f64; 2],
    p_n: usize,
) -> Result<Landscape> {
    check_range("p", p_range)?;
    if kappa_n < 2 || p_n == 0 {
        return Err(Error::Param(format!(
            "kappa_n >= 2 and p_n >= 1 violated (kappa_n = {kappa_n}, p_n = {p_n})"
        )));
    }
    let kappas = linspace(0.0, 1.0, kappa_n);
    let ps = linspace(p_range[0], p_range[1], p_n);
    let values = ps
        .iter()
        .map(|&p| {
            kappas
                .iter()
                .map(|&k| match kind {
                    LandscapeKind::F => det_f(k, p, gamma),
                    LandscapeKind::FGamma => f_gamma(k, p, gamma),
                })
                .collect()
        })
        .collect();
    Ok(Landscape {
        kind,
        gamma,
        kappas,
        ps,
        values,
    })
}

// ---------------------------------------------------------------------------
// 2-D certification of a sign over [0,1] x p_range.

/// Result of certifying `f(·,·,γ) >= 0` or `f_γ(·,·,γ) <= 0` on a slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCertificate {
    pub kind: LandscapeKind,
    pub gamma: f64,
    pub p_range: [f64; 2],
    pub verdict: Verdict,
    /// For `F`: smallest certified lower bound of `f`. For `FGamma`: largest
    /// certified upper bound of `f_γ`.
    pub bound: f64,
    pub boxes: usize,
    /// `(κ, p)` where the sign provably fails, on rejection.
    pub witness: Option<[f64; 2]>,
}

type D2 = Dual<Interval, 2>;

fn b_enclosure() -> Interval {
    Interval::sqrt_of(8.0)
}

/// The signed quantity that must be `>= 0`: `f` or `-f_γ`.
fn signed_value(kind: LandscapeKind, k: Interval, p: Interval, gamma: f64) -> Interval {
    let b = b_enclosure();
    let g = Interval::point(gamma);
    match kind {
        LandscapeKind::F if k.lo == k.hi && k.lo == 0.0 => det_f_at_zero(p, g),
        LandscapeKind::F if k.lo == k.hi && k.lo == 1.0 => det_f_at_one(g, b),
        LandscapeKind::F => det_f_generic(k, p, g, b),
        LandscapeKind::FGamma => -f_gamma_generic(k, p, g, b),
    }
}

fn signed_dual(kind: LandscapeKind, k: Interval, p: Interval, gamma: f64) -> D2 {
    let b = D2::constant(b_enclosure());
    let g = D2::cst(gamma);
    let (kd, pd) = (D2::var(k, 0), D2::var(p, 1));
    match kind {
        LandscapeKind::F => det_f_generic(kd, pd, g, b),
        LandscapeKind::FGamma => -f_gamma_generic(kd, pd, g, b),
    }
}

fn radius(i: Interval) -> f64 {
    let m = i.mid();
    (Interval::point(i.hi) - Interval::point(m))
        .hi
        .max((Interval::point(m) - Interval::point(i.lo)).hi)
}

fn box_lower(kind: LandscapeKind, k: Interval, p: Interval, gamma: f64, budget: u32) -> f64 {
    let whole = signed_dual(kind, k, p, gamma);
    let (dk, dp) = (whole.d[0], whole.d[1]);
    // the minimum sits on a face when a partial has a fixed sign
    let mut k2 = k;
    let mut p2 = p;
    if k.lo < k.hi {
        if dk.lo >= 0.0 {
            k2 = Interval::point(k.lo);
        } else if dk.hi <= 0.0 {
            k2 = Interval::point(k.hi);
        }
    }
    if p.lo < p.hi {
        if dp.lo >= 0.0 {
            p2 = Interval::point(p.lo);
        } else if dp.hi <= 0.0 {
            p2 = Interval::point(p.hi);
        }
    }
    if (k2 != k || p2 != p) && budget > 0 {
        if k2.lo == k2.hi && p2.lo == p2.hi {
            return signed_value(kind, k2, p2, gamma).lo;
        }
        return box_lower(kind, k2, p2, gamma, budget - 1);
    }
    if k.lo == k.hi && (k.lo == 0.0 || k.lo == 1.0) {
        return signed_value(kind, k, p, gamma).lo;
    }
    let natural = whole.val.lo;
    let at_mid = signed_value(kind, Interval::point(k.mid()), Interval::point(p.mid()), gamma).lo;
    let spread = Interval::point(dk.mag()) * Interval::point(radius(k))
        + Interval::point(dp.mag()) * Interval::point(radius(p));
    natural.max((Interval::point(at_mid) - spread).lo)
}

/// Branch-and-bound certification that `f(κ, p, γ) >= 0` (kind `F`) or
/// `f_γ(κ, p, γ) <= 0` (kind `FGamma`) for all `κ ∈ [0, 1]`, `p ∈ p_range`.
pub fn certify_slice(kind: LandscapeKind, gamma: f64, p_range: [f64; 2], max_depth: u32) -> Result<SliceCertificate> {
    check_range("p", p_range)?;
    let p_span = (p_range[1] - p_range[0]).max(f64::MIN_POSITIVE);
    let mut stack = vec![(Interval::new(0.0, 1.0), Interval::new(p_range[0], p_range[1]), 0u32)];
    let mut bound = f64::INFINITY;
    let mut boxes = 0usize;
    let mut verdict = Verdict::Accept;
    let mut witness = None;
    while let Some((k, p, depth)) = stack.pop() {
        let lb = box_lower(kind, k, p, gamma, 4);
        if lb >= 0.0 {
            bound = bound.min(lb);
            boxes += 1;
            continue;
        }
        let (km, pm) = (k.mid(), p.mid());
        if signed_value(kind, Interval::point(km), Interval::point(pm), gamma).hi < 0.0 {
            verdict = Verdict::Reject;
            witness = Some([km, pm]);
            break;
        }
        if depth >= max_depth {
            verdict = Verdict::Inconclusive;
            break;
        }
        if k.width() >= p.width() / p_span {
            stack.push((Interval::new(km, k.hi), p, depth + 1));
            stack.push((Interval::new(k.lo, km), p, depth + 1));
        } else {
            stack.push((k, Interval::new(pm, p.hi), depth + 1));
            stack.push((k, Interval::new(p.lo, pm), depth + 1));
        }
    }
    let bound = match kind {
        LandscapeKind::F => bound,
        LandscapeKind::FGamma => -bound,
    };
    Ok(SliceCertificate {
        kind,
        gamma,
        p_range,
        verdict,
        bound,
        boxes,
        witness,
    })
}

// ---------------------------------------------------------------------------

/// Sampled check that `f` is nonincreasing in γ, together with `A <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub pairs_checked: usize,
    pub violations: usize,
    pub max_a: f64,
}

pub fn check_gamma_monotonicity(p_range: [f64; 2], p_n: usize, kappa_n: usize, gammas: &[f64]) -> Result<MonotonicityReport> {
    check_range("p", p_range)?;
    let mut sorted = gammas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let kappas = linspace(0.0, 1.0, kappa_n);
    let max_a = kappas.iter().map(|&k| coef_a(k)).fold(f64::NEG_INFINITY, f64::max);
    let mut pairs = 0;
    let mut violations = 0;
    for p in linspace(p_range[0], p_range[1], p_n) {
        for &k in &kappas {
            for g in sorted.windows(2) {
                pairs += 1;
                let (lo, hi) = (det_f(k, p, g[0]), det_f(k, p, g[1]));
                // f_γ <= 0 and f is quadratic in γ with A <= 0, so a decrease is exact
                // up to rounding of the terms
                if hi > lo + 1e-13 * det_f_scale(k, p, g[0]).max(det_f_scale(k, p, g[1])) {
                    violations += 1;
                }
            }
        }
    }
    Ok(MonotonicityReport {
        pairs_checked: pairs,
        violations,
        max_a,
    })
}

/// A point where the Hessian recipe's determinant is provably negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemarkWitness {
    pub p: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// Rigorous upper bound of `f(κ, p, γ)`; negative.
    pub det_upper_bound: f64,
}

/// Walks `p` upward from `p_range[0]` in steps of `p_step` and returns the
/// first point where sampled `min_κ f < 0` is confirmed by interval arithmetic.
pub fn first_negative_det(gamma: f64, p_range: [f64; 2], p_step: f64, kappa_samples: usize) -> Result<Option<RemarkWitness>> {
    check_range("p", p_range)?;
    if !(p_step > 0.0) || kappa_samples < 2 {
        return Err(Error::Param("p_step > 0 and at least two kappa samples required".into()));
    }
    let kappas = linspace(0.0, 1.0, kappa_samples);
    let steps = ((p_range[1] - p_range[0]) / p_step).floor() as usize;
    for i in 0..=steps {
        let p = p_range[0] + i as f64 * p_step;
        let (kappa, v) = kappas
            .iter()
            .map(|&k| (k, det_f(k, p, gamma)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty sample");
        if v < 0.0 {
            let enc = det_f_generic(
                Interval::point(kappa),
                Interval::point(p),
                Interval::point(gamma),
                b_enclosure(),
            );
            if enc.hi < 0.0 {
                return Ok(Some(RemarkWitness {
                    p,
                    gamma,
                    kappa,
                    det_upper_bound: enc.hi,
                }));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        assert!(linspace(0.0, 1.0, 0).is_empty());
        assert_eq!(linspace(2.0, 5.0, 1), vec![2.0]);
        let v = linspace(3.0, 40.0, 75);
        assert_eq!(v[0], 3.0);
        assert_eq!(v[74], 40.0);
        assert!((v[1] - 3.5).abs() < 1e-14);
    }

    #[test]
    fn zero_resolution_is_rejected() {
        let e = scan_region([3.0, 40.0], [0.0, 0.5], SPolicy::Hessian, [0, 4], 1e-4).unwrap_err();
        assert!(e.to_string().contains("resolution >= 1"));
        assert!(landscape(LandscapeKind::F, 1.0, 0, [3.0, 40.0], 5).is_err());
    }

    #[test]
    fn small_hessian_scan() {
        let m = scan_region([3.0, 40.0], [-0.9, 0.9], SPolicy::Hessian, [4, 3], 1e-4).unwrap();
        assert_eq!(m.rows.len(), 12);
        assert!(m.all_accepted());
        let mut csv = Vec::new();
        m.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("p,gamma,kappa_min_location,min_value,verdict\n"));
        assert_eq!(text.lines().count(), 13);
    }

    #[test]
    fn general_s_scan_marks_inadmissible() {
        let m = scan_region([10.0, 10.0], [0.0, 0.0], SPolicy::GeneralS { s: -8.0 }, [1, 1], 1e-9).unwrap();
        assert_eq!(m.rows[0].verdict, RegionVerdict::Inadmissible);
        let m = scan_region([10.0, 10.0], [0.0, 0.0], SPolicy::GeneralS { s: -3.0 }, [1, 1], 1e-9).unwrap();
        assert_eq!(m.rows[0].verdict, RegionVerdict::Accept);
    }

    #[test]
    fn landscapes_have_the_expected_signs() {
        let f1 = landscape(LandscapeKind::F, 1.0, 41, [3.0, 40.0], 38).unwrap();
        assert!(f1.min() >= 0.0);
        let fg = landscape(LandscapeKind::FGamma, -1.0, 41, [3.0, 40.0], 38).unwrap();
        assert!(fg.max() <= 0.0);
        let mut out = Vec::new();
        fg.write_gnuplot(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 39);
        assert!(text.starts_with("41 0 0.025"));
    }

    #[test]
    fn slice_certificates_on_a_short_range() {
        let c = certify_slice(LandscapeKind::F, 1.0, [3.0, 6.0], 40).unwrap();
        assert_eq!(c.verdict, Verdict::Accept, "{c:?}");
        assert!(c.bound >= 0.0);
        let c = certify_slice(LandscapeKind::FGamma, -1.0, [3.0, 6.0], 40).unwrap();
        assert_eq!(c.verdict, Verdict::Accept, "{c:?}");
        assert!(c.bound <= 0.0);
        // f(·, ·, 1.2) dips below zero near kappa = 0
        let c = certify_slice(LandscapeKind::F, 1.2, [3.0, 6.0], 40).unwrap();
        assert_eq!(c.verdict, Verdict::Reject);
    }

    #[test]
    fn monotone_in_gamma() {
        let r = check_gamma_monotonicity([3.0, 40.0], 8, 21, &[-0.99, -0.5, 0.0, 0.5, 1.0]).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.max_a <= 0.0);
        assert!(r.pairs_checked > 0);
    }

    #[test]
    fn finds_negative_determinant_for_large_p() {
        let w = first_negative_det(0.0, [40.0, 200.0], 0.5, 2001).unwrap().unwrap();
        assert!(w.p > 110.0 && w.p < 125.0, "{w:?}");
        assert!(w.det_upper_bound < 0.0);
        assert!(det_f(w.kappa, w.p, w.gamma) < 0.0);
        assert!(first_negative_det(0.0, [3.0, 40.0], 0.5, 2001).unwrap().is_none());
    }
}
