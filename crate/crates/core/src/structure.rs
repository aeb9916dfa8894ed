//! Discrete checks of the pointwise identities: the planar fundamental
//! equality, the two hidden divergence structures, and the equality between
//! the coefficient side and the divergence side of the weighted sum.

use serde::{Deserialize, Serialize};

use crate::certify::coeffs::c_coefficients_generic;
use crate::diff_ops::{derive_all, divergence, interior_norms, DerivedFields};
use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField, VectorField2};
use crate::params::{ParamSet, WeightRecipe};
use crate::presets::{grid_on, Preset};

/// Nodes this close to the edge are left out of every residual norm: the
/// fluxes there come from one-sided stencils, and a centred divergence of
/// those loses an order.
pub const RESIDUAL_COLLAR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    pub max: f64,
    pub l2: f64,
}

/// Norms over interior nodes where the normalized quantities are defined.
pub fn residual_norms(f: &ScalarField, d: &DerivedFields) -> ResidualNorms {
    let (max, l2) = interior_norms(f, RESIDUAL_COLLAR, |k| d.normalized_defined[k]);
    ResidualNorms { max, l2 }
}

fn rho_pow(d: &DerivedFields, k: usize, alpha: f64) -> f64 {
    let q = d.grad_norm.data[k];
    let r2 = q * q + d.epsilon;
    if alpha == 0.0 {
        1.0
    } else {
        r2.powf(0.5 * alpha)
    }
}

fn node_map(grid: Grid2D, f: impl Fn(usize) -> f64) -> ScalarField {
    ScalarField {
        grid,
        data: (0..grid.len()).map(f).collect(),
    }
}

/// `|D²u|² - 2|D_T|Du||² - (Δ_T u)² - (Δ∞ᴺu)²` with `|D|Du||²` taken from the
/// finite-difference gradient of `sqrt(|Du|² + ε)` (divided by θ).
///
/// At nodes where the gradient vanishes the regularized quotients are used
/// throughout.
pub fn fundamental_equality_residual(d: &DerivedFields) -> ScalarField {
    node_map(d.grid, |k| {
        let p = d.point(k);
        let fd = d.fd_grad_of_norm_sq_reg.data[k];
        let grad_norm_sq = if p.normalized_defined { fd / p.theta } else { fd };
        let dt = grad_norm_sq - p.norm_inf_lap * p.norm_inf_lap;
        p.hess_norm_sq - 2.0 * dt - p.lap_t * p.lap_t - p.norm_inf_lap * p.norm_inf_lap
    })
}

/// The same expression built purely from the algebraic derived quantities;
/// zero up to rounding wherever the gradient is nonzero.
pub fn fundamental_equality_kernel(d: &DerivedFields) -> ScalarField {
    node_map(d.grid, |k| {
        let p = d.point(k);
        p.hess_norm_sq - 2.0 * p.dt_norm_sq - p.lap_t * p.lap_t - p.norm_inf_lap * p.norm_inf_lap
    })
}

/// The expression with every normalized quantity replaced by its regularized
/// quotient. Equals `2κ(u_xy² - u_xx u_yy)`, so `|·| <= κ |D²u|²`.
pub fn regularized_mismatch(d: &DerivedFields) -> ScalarField {
    node_map(d.grid, |k| {
        let p = d.point(k);
        let reg = p.norm_inf_lap_reg;
        let dt = p.grad_of_norm_sq_reg - reg * reg;
        let lt = p.lap - reg;
        p.hess_norm_sq - 2.0 * dt - lt * lt - reg * reg
    })
}

/// Both sides of the first divergence structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Gd1 {
    pub alpha: f64,
    /// `ρ^α(|D²u|² - (Δu)² + α(|D²uDu|²/ρ² - Δu Δ∞u/ρ²))`, `ρ² = |Du|² + ε`
    pub lhs: ScalarField,
    /// `ρ^α(D²uDu - Δu Du)`
    pub flux: VectorField2,
    pub divergence: ScalarField,
    pub residual: ScalarField,
}

pub fn gd1_flux(d: &DerivedFields, alpha: f64) -> VectorField2 {
    let g = d.grid;
    let comp = |x: bool| {
        node_map(g, |k| {
            let p = d.point(k);
            let (hg, gc) = if x {
                (p.uxx * p.ux + p.uxy * p.uy, p.ux)
            } else {
                (p.uxy * p.ux + p.uyy * p.uy, p.uy)
            };
            rho_pow(d, k, alpha) * (hg - p.lap * gc)
        })
    };
    VectorField2 {
        x: comp(true),
        y: comp(false),
    }
}

pub fn gd1_residual(d: &DerivedFields, alpha: f64) -> Result<Gd1> {
    if !(d.epsilon > 0.0) {
        return Err(Error::NonPositiveEpsilon(d.epsilon));
    }
    let lhs = node_map(d.grid, |k| {
        let p = d.point(k);
        rho_pow(d, k, alpha)
            * (p.hess_norm_sq - p.lap * p.lap + alpha * (p.grad_of_norm_sq_reg - p.lap * p.norm_inf_lap_reg))
    });
    let flux = gd1_flux(d, alpha);
    let div = divergence(&flux, &d.grid)?;
    let residual = lhs.zip_map(&div, |a, b| a - b);
    Ok(Gd1 {
        alpha,
        lhs,
        flux,
        divergence: div,
        residual,
    })
}

/// Which form of the time term the second structure takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gd2Branch {
    /// `((|Du|² + ε)^{(β+2)/2})_t / (β + 2)`, for `β ≠ -2`.
    Power,
    /// `½ (ln(|Du|² + ε))_t`, for `β = -2`.
    Log,
}

impl Gd2Branch {
    pub fn for_beta(beta: f64) -> Self {
        if beta == -2.0 {
            Gd2Branch::Log
        } else {
            Gd2Branch::Power
        }
    }
}

/// Three consecutive time slices, equally spaced by `dt`.
#[derive(Debug, Clone, Copy)]
pub struct TimeSlices<'a> {
    pub prev: &'a ScalarField,
    pub mid: &'a ScalarField,
    pub next: &'a ScalarField,
    pub dt: f64,
}

impl TimeSlices<'_> {
    fn check(&self) -> Result<()> {
        self.mid.check_same_grid(self.prev)?;
        self.mid.check_same_grid(self.next)?;
        if !(self.dt > 0.0) {
            return Err(Error::Param(format!("slice spacing dt > 0 violated (dt = {})", self.dt)));
        }
        Ok(())
    }

    /// Centred time difference at the middle slice.
    pub fn u_t(&self) -> ScalarField {
        let dt = self.dt;
        self.next.zip_map(self.prev, |a, b| (a - b) / (2.0 * dt))
    }
}

/// Stencil-derived fields of the three slices.
struct SliceDerived {
    prev: DerivedFields,
    mid: DerivedFields,
    next: DerivedFields,
    u_t: ScalarField,
    dt: f64,
}

impl SliceDerived {
    fn new(s: &TimeSlices, eps: f64) -> Result<Self> {
        s.check()?;
        let params = ParamSet::new(2.0, 0.0, 0.0, eps);
        let g = s.mid.grid;
        Ok(Self {
            prev: derive_all(s.prev, &g, &params)?,
            mid: derive_all(s.mid, &g, &params)?,
            next: derive_all(s.next, &g, &params)?,
            u_t: s.u_t(),
            dt: s.dt,
        })
    }

    fn flux(&self, beta: f64) -> VectorField2 {
        let d = &self.mid;
        let comp = |x: bool| {
            node_map(d.grid, |k| {
                let gc = if x { d.grad.x.data[k] } else { d.grad.y.data[k] };
                self.u_t.data[k] * rho_pow(d, k, beta) * gc
            })
        };
        VectorField2 {
            x: comp(true),
            y: comp(false),
        }
    }

    fn time_term(&self, beta: f64, branch: Gd2Branch) -> ScalarField {
        let eps = self.mid.epsilon;
        let r2 = |d: &DerivedFields, k: usize| d.grad_norm.data[k].powi(2) + eps;
        let dt = self.dt;
        node_map(self.mid.grid, |k| {
            let (a, b) = (r2(&self.next, k), r2(&self.prev, k));
            match branch {
                Gd2Branch::Power => {
                    let e = 0.5 * (beta + 2.0);
                    (a.powf(e) - b.powf(e)) / (2.0 * dt * (beta + 2.0))
                }
                Gd2Branch::Log => 0.5 * (a.ln() - b.ln()) / (2.0 * dt),
            }
        })
    }

    /// `div(u_t ρ^β Du) - time term`.
    fn divergence_side(&self, beta: f64, branch: Gd2Branch) -> Result<(ScalarField, VectorField2, ScalarField)> {
        let flux = self.flux(beta);
        let div = divergence(&flux, &self.mid.grid)?;
        let tt = self.time_term(beta, branch);
        Ok((div.zip_map(&tt, |a, b| a - b), flux, tt))
    }
}

fn check_branch(beta: f64, branch: Gd2Branch) -> Result<()> {
    let want = Gd2Branch::for_beta(beta);
    if branch != want {
        return Err(Error::Branch {
            beta,
            reason: format!("{branch:?} form requested but beta selects the {want:?} form"),
        });
    }
    Ok(())
}

/// Both sides of the second divergence structure at the middle slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Gd2 {
    pub beta: f64,
    /// `u_t ρ^β (Δu + β Δ∞u / ρ²)`
    pub lhs: ScalarField,
    /// `u_t ρ^β Du`
    pub flux: VectorField2,
    pub time_term: ScalarField,
    /// `div(flux) - time term`
    pub rhs: ScalarField,
    pub residual: ScalarField,
    /// Mask and epsilon carried for norms.
    pub derived_mid: DerivedFields,
}

pub fn gd2_residual(slices: &TimeSlices, beta: f64, eps: f64, branch: Gd2Branch) -> Result<Gd2> {
    if !(eps > 0.0) {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    check_branch(beta, branch)?;
    let sd = SliceDerived::new(slices, eps)?;
    let (rhs, flux, time_term) = sd.divergence_side(beta, branch)?;
    let d = &sd.mid;
    let lhs = node_map(d.grid, |k| {
        let p = d.point(k);
        sd.u_t.data[k] * rho_pow(d, k, beta) * (p.lap + beta * p.norm_inf_lap_reg)
    });
    let residual = lhs.zip_map(&rhs, |a, b| a - b);
    Ok(Gd2 {
        beta,
        lhs,
        flux,
        time_term,
        rhs,
        residual,
        derived_mid: sd.mid,
    })
}

/// `(|Du|² + ε)^{γ/2} (Δu + (p - 2) Δ∞u / (|Du|² + ε))` from derived fields.
pub fn equation_rhs(d: &DerivedFields, params: &ParamSet) -> ScalarField {
    node_map(d.grid, |k| {
        let p = d.point(k);
        rho_pow(d, k, params.gamma) * (p.lap + (params.p - 2.0) * p.norm_inf_lap_reg)
    })
}

/// Relative size of `u_t - rhs` above which slices are not treated as a solution.
pub const EQUATION_TOL: f64 = 5e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct StructureSumReport {
    pub params: ParamSet,
    pub weights: WeightRecipe,
    /// Left side of the key equality (uses the equation to replace `u_t`).
    pub s_coefficient_side: ScalarField,
    /// `w1 GD1(p-2+s) + w2 GD2(p-2+s) + ε w3 GD1(p-4+s) + ε w4 GD2(p-4+s)`
    pub s_divergence_side: ScalarField,
    pub residual: ScalarField,
    pub residual_norms: ResidualNorms,
    /// Fluxes before divergence: GD1 at `p-2+s`, GD1 at `p-4+s`, GD2 at
    /// `p-2+s`, GD2 at `p-4+s`.
    pub flux_fields: [VectorField2; 4],
    /// `max |u_t - rhs|` over the interior.
    pub equation_residual_max: f64,
    pub is_solution: bool,
}

pub fn weighted_sum_report(slices: &TimeSlices, w: &WeightRecipe, params: &ParamSet) -> Result<StructureSumReport> {
    params.check_basic()?;
    params.require_positive_epsilon()?;
    let eps = params.epsilon;
    let sd = SliceDerived::new(slices, eps)?;
    let d = &sd.mid;
    let (p, gamma, s) = (params.p, params.gamma, params.s);
    let a_main = p - 2.0 + s;
    let a_eps = p - 4.0 + s;

    let coef = node_map(d.grid, |k| {
        let pt = d.point(k);
        let c = c_coefficients_generic(w.weights(), p, gamma, s, pt.kappa, pt.theta);
        let p_theta = (p - 2.0) * pt.theta + 1.0;
        let (lt, ni) = (pt.lap_t, pt.norm_inf_lap);
        rho_pow(d, k, a_main)
            * (c.c1 * pt.hess_norm_sq
                + c.c2 * pt.dt_norm_sq
                + (c.c3 - c.c1) * lt * lt
                + ((c.c3 + c.c4) * p_theta - c.c1) * ni * ni
                + (c.c3 * p_theta + (c.c3 + c.c4) - (2.0 * c.c1 + c.c2)) * lt * ni)
    });

    let g1_main = gd1_residual(d, a_main)?;
    let g1_eps = gd1_residual(d, a_eps)?;
    let b_main = a_main - gamma;
    let b_eps = a_eps - gamma;
    let (g2_main, f2_main, _) = sd.divergence_side(b_main, Gd2Branch::for_beta(b_main))?;
    let (g2_eps, f2_eps, _) = sd.divergence_side(b_eps, Gd2Branch::for_beta(b_eps))?;
    let div_side = node_map(d.grid, |k| {
        w.w1 * g1_main.divergence.data[k]
            + w.w2 * g2_main.data[k]
            + eps * w.w3 * g1_eps.divergence.data[k]
            + eps * w.w4 * g2_eps.data[k]
    });
    let residual = coef.zip_map(&div_side, |a, b| a - b);
    let residual_norms = residual_norms(&residual, d);

    let rhs = equation_rhs(d, params);
    let eq_res = sd.u_t.zip_map(&rhs, |a, b| a - b);
    let (eq_max, _) = interior_norms(&eq_res, RESIDUAL_COLLAR, |_| true);
    let (rhs_max, _) = interior_norms(&rhs, RESIDUAL_COLLAR, |_| true);
    Ok(StructureSumReport {
        params: *params,
        weights: *w,
        s_coefficient_side: coef,
        s_divergence_side: div_side,
        residual,
        residual_norms,
        flux_fields: [g1_main.flux, g1_eps.flux, f2_main, f2_eps],
        equation_residual_max: eq_max,
        is_solution: eq_max <= EQUATION_TOL * (1.0 + rhs_max),
    })
}

// ---------------------------------------------------------------------------
// Convergence studies on manufactured fields.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    Fundamental,
    Gd1,
    Gd2,
}

/// JSON record for one refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub identity: IdentityKind,
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub epsilon: f64,
    pub grid: Grid2D,
    pub max_residual: f64,
    pub l2_residual: f64,
    /// Observed order of the max residual against the previous level.
    pub order_estimate: Option<f64>,
}

/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn observed_order(h_coarse: f64, e_coarse: f64, h_fine: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// Time at which the middle slice of a manufactured `e^{-t} u(x)` sits.
pub const MANUFACTURED_T: f64 = 0.5;

/// Runs one identity on the preset's identity window for each grid size in
/// `levels` (nodes per side). `exponent` is α for GD1 and β for GD2.
/// GD2 uses `e^{-t} u(x)` sampled at `t = 0.5 ± h`.
pub fn identity_check(
    kind: IdentityKind,
    preset: Preset,
    epsilon: f64,
    exponent: f64,
    levels: &[usize],
) -> Result<Vec<ResidualReport>> {
    if !(epsilon > 0.0) {
        return Err(Error::NonPositiveEpsilon(epsilon));
    }
    let f = preset.function();
    let mut out: Vec<ResidualReport> = Vec::with_capacity(levels.len());
    for &n in levels {
        let g = grid_on(preset.identity_window(), n)?;
        let params = ParamSet::new(2.0, 0.0, 0.0, epsilon);
        let (norms, alpha, beta) = match kind {
            IdentityKind::Fundamental => {
                let d = derive_all(&g.sample(|x, y| f(x, y)), &g, &params)?;
                (residual_norms(&fundamental_equality_residual(&d), &d), None, None)
            }
            IdentityKind::Gd1 => {
                let d = derive_all(&g.sample(|x, y| f(x, y)), &g, &params)?;
                let r = gd1_residual(&d, exponent)?;
                (residual_norms(&r.residual, &d), Some(exponent), None)
            }
            IdentityKind::Gd2 => {
                let dt = g.hx;
                let at = |t: f64| g.sample(|x, y| (-t).exp() * f(x, y));
                let (a, b, c) = (at(MANUFACTURED_T - dt), at(MANUFACTURED_T), at(MANUFACTURED_T + dt));
                let slices = TimeSlices {
                    prev: &a,
                    mid: &b,
                    next: &c,
                    dt,
                };
                let r = gd2_residual(&slices, exponent, epsilon, Gd2Branch::for_beta(exponent))?;
                (residual_norms(&r.residual, &r.derived_mid), None, Some(exponent))
            }
        };
        let order_estimate = out
            .last()
            .map(|prev| observed_order(prev.grid.hx, prev.max_residual, g.hx, norms.max));
        out.push(ResidualReport {
            identity: kind,
            preset,
            alpha,
            beta,
            epsilon,
            grid: g,
            max_residual: norms.max,
            l2_residual: norms.l2,
            order_estimate,
        });
    }
    Ok(out)
}
