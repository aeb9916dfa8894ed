//! Integrals over parabolic cylinders `B_r(x0) x [t0, t0 + r²)` of solver
//! trajectories, the estimate ratios built from them, and pointwise checks of
//! the time-derivative bound.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff_ops::{d1, derive_all, gradient, Axis, DerivedFields};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, ParabolicCylinder, ScalarField};
use crate::params::{validate_params, ParamSet, Purpose};
use crate::solver::SpaceTimeField;

/// Nodes kept clear between the doubled ball and the grid edge.
pub const CYLINDER_MARGIN_NODES: usize = 2;

/// Derived quantities that can be integrated. `exponent` `a` enters as
/// `(|Du|² + ε)^{a/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrand {
    One,
    GradNormSq,
    HessNormSq,
    RegPower { exponent: f64 },
    /// `(|Du|² + ε)^{a/2} |Du|²`
    RegPowerGradSq { exponent: f64 },
    /// `|ln(|Du|² + ε)|`
    AbsLogReg,
    /// `|D((|Du|² + ε)^{a/4} Du)|²`, by differencing the vector field
    NonlinearGradSq { exponent: f64 },
    /// `u_t²` by centred differences between stored slices
    TimeDerivativeSq,
}

fn rho2(d: &DerivedFields, k: usize) -> f64 {
    d.grad_norm.data[k].powi(2) + d.epsilon
}

fn pow_half(r2: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else {
        r2.powf(0.5 * a)
    }
}

/// `|D V|²` for `V = (|Du|² + ε)^{a/4} Du`.
fn nonlinear_grad_sq(d: &DerivedFields, a: f64) -> ScalarField {
    let g = d.grid;
    let comp = |c: &ScalarField| ScalarField {
        grid: g,
        data: (0..g.len()).map(|k| pow_half(rho2(d, k), 0.5 * a) * c.data[k]).collect(),
    };
    let (vx, vy) = (comp(&d.grad.x), comp(&d.grad.y));
    let (dvx, dvy) = (gradient(&vx, &g).expect("same grid"), gradient(&vy, &g).expect("same grid"));
    ScalarField {
        grid: g,
        data: (0..g.len())
            .map(|k| dvx.x.data[k].powi(2) + dvx.y.data[k].powi(2) + dvy.x.data[k].powi(2) + dvy.y.data[k].powi(2))
            .collect(),
    }
}

/// Centred `u_t` at slice `k`, one-sided at the ends.
pub fn time_derivative(traj: &SpaceTimeField, k: usize) -> ScalarField {
    let n = traj.len();
    let (a, b) = if n < 2 {
        return ScalarField::zeros(traj.grid);
    } else if k == 0 {
        (0, 1)
    } else if k + 1 == n {
        (n - 2, n - 1)
    } else {
        (k - 1, k + 1)
    };
    let dt = traj.times[b] - traj.times[a];
    traj.slices[b].zip_map(&traj.slices[a], |x, y| (x - y) / dt)
}

/// Per-slice derived fields, computed on demand.
struct SliceCache<'a> {
    traj: &'a SpaceTimeField,
    params: ParamSet,
    derived: Vec<Option<DerivedFields>>,
}

impl<'a> SliceCache<'a> {
    fn new(traj: &'a SpaceTimeField, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::NonPositiveEpsilon(epsilon));
        }
        Ok(Self {
            traj,
            params: ParamSet::new(2.0, 0.0, 0.0, epsilon),
            derived: vec![None; traj.len()],
        })
    }

    fn prepare(&mut self, ks: &[usize]) -> Result<()> {
        let todo: Vec<usize> = ks.iter().copied().filter(|&k| self.derived[k].is_none()).collect();
        let traj = self.traj;
        let params = self.params;
        let done: Vec<(usize, DerivedFields)> = todo
            .par_iter()
            .map(|&k| derive_all(&traj.slices[k], &traj.grid, &params).map(|d| (k, d)))
            .collect::<Result<_>>()?;
        for (k, d) in done {
            self.derived[k] = Some(d);
        }
        Ok(())
    }

    fn get(&self, k: usize) -> &DerivedFields {
        self.derived[k].as_ref().expect("slice prepared")
    }

    fn field(&self, k: usize, integrand: Integrand) -> ScalarField {
        let g = self.traj.grid;
        let map = |f: &dyn Fn(usize) -> f64| ScalarField {
            grid: g,
            data: (0..g.len()).map(f).collect(),
        };
        match integrand {
            Integrand::One => map(&|_| 1.0),
            Integrand::TimeDerivativeSq => time_derivative(self.traj, k).map(|v| v * v),
            Integrand::GradNormSq => {
                let d = self.get(k);
                map(&|i| d.grad_norm.data[i].powi(2))
            }
            Integrand::HessNormSq => self.get(k).hess_norm_sq.clone(),
            Integrand::RegPower { exponent } => {
                let d = self.get(k);
                map(&|i| pow_half(rho2(d, i), exponent))
            }
            Integrand::RegPowerGradSq { exponent } => {
                let d = self.get(k);
                map(&|i| pow_half(rho2(d, i), exponent) * d.grad_norm.data[i].powi(2))
            }
            Integrand::AbsLogReg => {
                let d = self.get(k);
                map(&|i| rho2(d, i).ln().abs())
            }
            Integrand::NonlinearGradSq { exponent } => nonlinear_grad_sq(self.get(k), exponent),
        }
    }

    fn needs_derived(integrand: Integrand) -> bool {
        !matches!(integrand, Integrand::One | Integrand::TimeDerivativeSq)
    }

    /// Slices in `[t0, t0 + r²)` with their quadrature weights.
    fn time_layers(&self, cyl: &ParabolicCylinder) -> Vec<(usize, f64)> {
        time_layers(&self.traj.times, cyl)
    }

    fn integrate(&mut self, cyl: &ParabolicCylinder, integrand: Integrand) -> Result<f64> {
        let layers = self.time_layers(cyl);
        let nodes = ball_nodes(&self.traj.grid, cyl);
        if layers.is_empty() || nodes.is_empty() {
            return Err(Error::Cylinder(format!(
                "empty cylinder ({} slices, {} nodes)",
                layers.len(),
                nodes.len()
            )));
        }
        if Self::needs_derived(integrand) {
            let ks: Vec<usize> = layers.iter().map(|l| l.0).collect();
            self.prepare(&ks)?;
        }
        let area = self.traj.grid.cell_area();
        let this = &*self;
        let per_slice: Vec<f64> = layers
            .par_iter()
            .map(|&(k, w)| {
                let f = this.field(k, integrand);
                let s: f64 = nodes.iter().map(|&i| f.data[i]).sum();
                s * area * w
            })
            .collect();
        Ok(per_slice.iter().sum())
    }

    /// `∫_{B_r(x0)} f(·, t0)`.
    fn integrate_ball_at_start(&mut self, cyl: &ParabolicCylinder, integrand: Integrand) -> Result<f64> {
        let k = slice_at(&self.traj.times, cyl.t0)
            .ok_or_else(|| Error::Cylinder(format!("no stored slice at t0 = {}", cyl.t0)))?;
        let nodes = ball_nodes(&self.traj.grid, cyl);
        if nodes.is_empty() {
            return Err(Error::Cylinder("empty ball".into()));
        }
        if Self::needs_derived(integrand) {
            self.prepare(&[k])?;
        }
        let f = self.field(k, integrand);
        Ok(nodes.iter().map(|&i| f.data[i]).sum::<f64>() * self.traj.grid.cell_area())
    }
}

fn time_tol(times: &[f64]) -> f64 {
    1e-9 * (1.0 + times.last().map_or(0.0, |t| t.abs()))
}

fn slice_at(times: &[f64], t: f64) -> Option<usize> {
    let tol = time_tol(times);
    times.iter().position(|&s| (s - t).abs() <= tol)
}

fn time_layers(times: &[f64], cyl: &ParabolicCylinder) -> Vec<(usize, f64)> {
    let tol = time_tol(times);
    let end = cyl.t0 + cyl.duration();
    let mut out = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        if t < cyl.t0 - tol || t >= end - tol {
            continue;
        }
        let step = match times.get(k + 1) {
            Some(&next) => next - t,
            None if k > 0 => t - times[k - 1],
            None => end - t,
        };
        out.push((k, (t + step).min(end) - t));
    }
    out
}

fn ball_nodes(g: &Grid2D, cyl: &ParabolicCylinder) -> Vec<usize> {
    let mut out = Vec::new();
    for j in 0..g.ny {
        for i in 0..g.nx {
            if cyl.contains_point(g.x(i), g.y(j)) {
                out.push(g.idx(i, j));
            }
        }
    }
    out
}

/// Midpoint-rule integral over the cylinder. `epsilon` regularizes the
/// derived quantities.
pub fn cylinder_integral(
    traj: &SpaceTimeField,
    cyl: &ParabolicCylinder,
    integrand: Integrand,
    epsilon: f64,
) -> Result<f64> {
    let (t_first, t_last) = (traj.times[0], *traj.times.last().expect("nonempty"));
    cyl.check_inside(&traj.grid, t_first, t_last, 0)?;
    SliceCache::new(traj, epsilon)?.integrate(cyl, integrand)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Hessian,
    NonlinearGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateMetadata {
    pub kind: EstimateKind,
    pub params: ParamSet,
    pub r: f64,
    pub cylinder: ParabolicCylinder,
    pub grid: Grid2D,
    pub epsilon: f64,
    /// Parameters were outside the proven range and the override was given.
    pub override_range: bool,
    /// The trace comes from a preset, not from a limit solution, so the
    /// constant in the estimate is not the one the bound speaks of.
    pub manufactured_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub lhs: f64,
    pub rhs_main: f64,
    pub rhs_log: f64,
    pub ratio: f64,
    /// `rhs_log / (rhs_main + rhs_log)`
    pub log_share: f64,
    pub metadata: EstimateMetadata,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

fn prepare_cylinder(traj: &SpaceTimeField, cyl: &ParabolicCylinder) -> Result<()> {
    let (t_first, t_last) = (traj.times[0], *traj.times.last().expect("nonempty"));
    cyl.doubled()
        .check_inside(&traj.grid, t_first, t_last, CYLINDER_MARGIN_NODES)?;
    if slice_at(&traj.times, cyl.t0).is_none() {
        return Err(Error::Cylinder(format!("no stored slice at t0 = {}", cyl.t0)));
    }
    Ok(())
}

/// `rhs_main` and `rhs_log` for exponent `a = p - 2 + s`.
fn rhs_terms(cache: &mut SliceCache, cyl: &ParabolicCylinder, params: &ParamSet) -> Result<(f64, f64)> {
    let big = cyl.doubled();
    let a = params.p - 2.0 + params.s;
    let b = params.p + params.s - params.gamma;
    let inv_r2 = 1.0 / (cyl.r * cyl.r);
    let main = inv_r2
        * (cache.integrate(&big, Integrand::RegPowerGradSq { exponent: a })?
            + cache.integrate(&big, Integrand::RegPower { exponent: b })?);
    let log = params.epsilon
        * (inv_r2 * cache.integrate(&big, Integrand::AbsLogReg)?
            + cache.integrate_ball_at_start(&big, Integrand::AbsLogReg)?);
    Ok((main, log))
}

fn build_report(
    kind: EstimateKind,
    traj: &SpaceTimeField,
    cyl: &ParabolicCylinder,
    params: &ParamSet,
    lhs_integrand: Integrand,
    override_range: bool,
) -> Result<EstimateReport> {
    prepare_cylinder(traj, cyl)?;
    let mut cache = SliceCache::new(traj, params.epsilon)?;
    let lhs = cache.integrate(cyl, lhs_integrand)?;
    let (rhs_main, rhs_log) = rhs_terms(&mut cache, cyl, params)?;
    let rhs = rhs_main + rhs_log;
    Ok(EstimateReport {
        lhs,
        rhs_main,
        rhs_log,
        ratio: ratio(lhs, rhs),
        log_share: ratio(rhs_log, rhs),
        metadata: EstimateMetadata {
            kind,
            params: *params,
            r: cyl.r,
            cylinder: *cyl,
            grid: traj.grid,
            epsilon: params.epsilon,
            override_range,
            manufactured_boundary: true,
        },
    })
}

/// `∫_{Q_r} |D²u|²` against the right-hand side with `s = 2 - p`.
///
/// `params.s` is ignored. Outside `3 <= p <= 40`, `gamma < 1` the call fails
/// unless `override_range` is set.
pub fn hessian_estimate_report(
    traj: &SpaceTimeField,
    cyl: &ParabolicCylinder,
    params: &ParamSet,
    override_range: bool,
) -> Result<EstimateReport> {
    let params = ParamSet::hessian(params.p, params.gamma, params.epsilon);
    params.require_positive_epsilon()?;
    let out_of_range = validate_params(params, Purpose::Thm11).is_err();
    if out_of_range && !override_range {
        validate_params(params, Purpose::Thm11)?;
    }
    build_report(
        EstimateKind::Hessian,
        traj,
        cyl,
        &params,
        Integrand::HessNormSq,
        out_of_range,
    )
}

/// `∫_{Q_r} |D((|Du|² + ε)^{(p-2+s)/4} Du)|²` against its right-hand side.
pub fn nonlinear_gradient_estimate_report(
    traj: &SpaceTimeField,
    cyl: &ParabolicCylinder,
    params: &ParamSet,
    override_range: bool,
) -> Result<EstimateReport> {
    params.check_basic()?;
    params.require_positive_epsilon()?;
    params.check_estimator_exponent()?;
    let out_of_range = validate_params(*params, Purpose::GeneralS).is_err();
    if out_of_range && !override_range {
        validate_params(*params, Purpose::GeneralS)?;
    }
    let a = params.p - 2.0 + params.s;
    build_report(
        EstimateKind::NonlinearGradient,
        traj,
        cyl,
        params,
        Integrand::NonlinearGradSq { exponent: a },
        out_of_range,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDerivativeMode {
    /// `3 <= p <= 40`, `0 <= gamma < 1`
    RangeI,
    /// `1 < p < 9 gamma + 10`
    RangeIi,
}

impl TimeDerivativeMode {
    pub fn check(&self, p: f64, gamma: f64) -> Result<()> {
        let fail = |s: String| Err(Error::Param(s));
        match self {
            TimeDerivativeMode::RangeI => {
                if !(p >= 3.0) {
                    return fail(format!("3 <= p violated (p = {p})"));
                }
                if !(p <= 40.0) {
                    return fail(format!("p <= 40 violated (p = {p})"));
                }
                if !(gamma >= 0.0) {
                    return fail(format!("0 <= gamma violated (gamma = {gamma})"));
                }
                if !(gamma < 1.0) {
                    return fail(format!("gamma < 1 violated (gamma = {gamma})"));
                }
            }
            TimeDerivativeMode::RangeIi => {
                if !(p > 1.0) {
                    return fail(format!("p > 1 violated (p = {p})"));
                }
                if !(p < 9.0 * gamma + 10.0) {
                    return fail(format!("p < 9 gamma + 10 violated (p = {p}, gamma = {gamma})"));
                }
            }
        }
        Ok(())
    }
}

/// Constant in `|u_t| <= c |D((|Du|² + ε)^{γ/2} Du)|`:
/// `sqrt 2 + |p - 2 - γ| / min(1, 1 + γ)`.
pub fn flux_route_constant(p: f64, gamma: f64) -> f64 {
    std::f64::consts::SQRT_2 + (p - 2.0 - gamma).abs() / (1.0 + gamma).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDerivativeReport {
    pub mode: TimeDerivativeMode,
    pub params: ParamSet,
    pub override_range: bool,
    /// Interior space-time nodes checked.
    pub nodes: usize,
    /// Nodes where `|u_t| <= (p+2)(|Du|²+ε)^{γ/2}|D²u| + τ`.
    pub satisfied: usize,
    pub fraction: f64,
    /// Largest `|u_t| - bound` over the checked nodes.
    pub worst_excess: f64,
    /// For range ii: the same count for `|u_t| <= c |D((|Du|²+ε)^{γ/2}Du)| + τ`.
    pub flux_route_fraction: Option<f64>,
    pub ut_sq_integral: Option<f64>,
    /// `∫|u_t|²` over the matching estimate's right-hand side.
    pub ut_ratio: Option<f64>,
}

/// `sqrt(u_xxx² + u_xxy² + u_xyy² + u_yyy²)` from differenced second derivatives.
fn third_derivative_proxy(d: &DerivedFields) -> ScalarField {
    let (a, b) = (d1(&d.hess.xx, Axis::X), d1(&d.hess.xx, Axis::Y));
    let (c, e) = (d1(&d.hess.yy, Axis::X), d1(&d.hess.yy, Axis::Y));
    ScalarField {
        grid: d.grid,
        data: (0..d.grid.len())
            .map(|k| (a.data[k].powi(2) + b.data[k].powi(2) + c.data[k].powi(2) + e.data[k].powi(2)).sqrt())
            .collect(),
    }
}

/// Pointwise check on every interior node of every slice with neighbours on
/// both sides. With a cylinder, also integrates `u_t²` over it.
pub fn time_derivative_check(
    traj: &SpaceTimeField,
    params: &ParamSet,
    mode: TimeDerivativeMode,
    cyl: Option<&ParabolicCylinder>,
    override_range: bool,
) -> Result<TimeDerivativeReport> {
    params.check_basic()?;
    params.require_positive_epsilon()?;
    let out_of_range = mode.check(params.p, params.gamma).is_err();
    if out_of_range && !override_range {
        mode.check(params.p, params.gamma)?;
    }
    let g = traj.grid;
    let h2 = g.hx * g.hx + g.hy * g.hy;
    let (p, gamma) = (params.p, params.gamma);
    let c_flux = flux_route_constant(p, gamma);
    let mut cache = SliceCache::new(traj, params.epsilon)?;
    let inner: Vec<usize> = (1..traj.len().saturating_sub(1)).collect();
    cache.prepare(&inner)?;
    let per: Vec<(usize, usize, usize, f64)> = inner
        .par_iter()
        .map(|&k| {
            let d = cache.get(k);
            let ut = time_derivative(traj, k);
            let dt = 0.5 * (traj.times[k + 1] - traj.times[k - 1]);
            let d3 = third_derivative_proxy(d);
            let flux = if mode == TimeDerivativeMode::RangeIi {
                Some(nonlinear_grad_sq(d, 2.0 * gamma))
            } else {
                None
            };
            let (mut n, mut ok, mut ok_flux, mut worst) = (0, 0, 0, f64::NEG_INFINITY);
            for j in 2..g.ny - 2 {
                for i in 2..g.nx - 2 {
                    let q = g.idx(i, j);
                    let tau = 10.0 * (h2 + dt) * (1.0 + d3.data[q]);
                    let r2 = rho2(d, q);
                    let bound = (p + 2.0) * pow_half(r2, gamma) * d.hess_norm_sq.data[q].sqrt();
                    let v = ut.data[q].abs();
                    n += 1;
                    if v <= bound + tau {
                        ok += 1;
                    }
                    worst = worst.max(v - bound);
                    if let Some(f) = &flux {
                        if v <= c_flux * f.data[q].sqrt() + tau {
                            ok_flux += 1;
                        }
                    }
                }
            }
            (n, ok, ok_flux, worst)
        })
        .collect();
    let nodes: usize = per.iter().map(|x| x.0).sum();
    let satisfied: usize = per.iter().map(|x| x.1).sum();
    let satisfied_flux: usize = per.iter().map(|x| x.2).sum();
    let worst_excess = per.iter().map(|x| x.3).fold(f64::NEG_INFINITY, f64::max);
    let frac = |m: usize| if nodes == 0 { 1.0 } else { m as f64 / nodes as f64 };

    let (ut_sq_integral, ut_ratio) = match cyl {
        None => (None, None),
        Some(cyl) => {
            prepare_cylinder(traj, cyl)?;
            let ut2 = cache.integrate(cyl, Integrand::TimeDerivativeSq)?;
            let den = match mode {
                TimeDerivativeMode::RangeI => {
                    // |u_t|² <= (p+2)² sup ρ^{2γ} |D²u|², then the Hessian bound
                    let hp = ParamSet::hessian(p, gamma, params.epsilon);
                    let (m, l) = rhs_terms(&mut cache, cyl, &hp)?;
                    let sup = sup_reg_power(&mut cache, cyl, 2.0 * gamma)?;
                    (p + 2.0).powi(2) * sup * (m + l)
                }
                TimeDerivativeMode::RangeIi => {
                    let sp = ParamSet::new(p, gamma, 2.0 * gamma + 2.0 - p, params.epsilon);
                    let (m, l) = rhs_terms(&mut cache, cyl, &sp)?;
                    c_flux * c_flux * (m + l)
                }
            };
            (Some(ut2), Some(ratio(ut2, den)))
        }
    };

    Ok(TimeDerivativeReport {
        mode,
        params: *params,
        override_range: out_of_range,
        nodes,
        satisfied,
        fraction: frac(satisfied),
        worst_excess,
        flux_route_fraction: (mode == TimeDerivativeMode::RangeIi).then(|| frac(satisfied_flux)),
        ut_sq_integral,
        ut_ratio,
    })
}

fn sup_reg_power(cache: &mut SliceCache, cyl: &ParabolicCylinder, a: f64) -> Result<f64> {
    let layers = cache.time_layers(cyl);
    let ks: Vec<usize> = layers.iter().map(|l| l.0).collect();
    cache.prepare(&ks)?;
    let nodes = ball_nodes(&cache.traj.grid, cyl);
    let mut sup = 0.0f64;
    for k in ks {
        let d = cache.get(k);
        for &i in &nodes {
            sup = sup.max(pow_half(rho2(d, i), a));
        }
    }
    Ok(sup)
}

/// Appends one JSON object per line.
pub fn append_jsonl<T: Serialize>(w: &mut impl Write, rows: &[T]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// `epsilon,h,ratio,log_share` rows for plotting.
pub fn write_ratio_csv(w: &mut impl Write, reports: &[EstimateReport]) -> Result<()> {
    writeln!(w, "epsilon,h,ratio,log_share")?;
    for r in reports {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e}",
            r.metadata.epsilon, r.metadata.grid.hx, r.ratio, r.log_share
        )?;
    }
    Ok(())
}
