//! Finite-difference derivatives and the pointwise second-order quantities
//! built from them.
//!
//! Interior nodes use centred differences (the mixed derivative is the
//! 4-point cross stencil); edge nodes use one-sided second-order formulas.
//! Every stencil is exact on quadratics.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField, SymMatrixField2, VectorField2};
use crate::params::ParamSet;

/// Below this θ the gradient counts as numerically zero.
pub const THETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

fn check_grid(u: &ScalarField, g: &Grid2D) -> Result<()> {
    g.validate()?;
    if u.grid.shape() != g.shape() {
        return Err(Error::Shape {
            expected: g.shape(),
            got: u.grid.shape(),
        });
    }
    Ok(())
}

/// Stride, count and spacing of the lines along `axis`.
fn axis_layout(g: &Grid2D, axis: Axis) -> (usize, usize, f64) {
    match axis {
        Axis::X => (1, g.nx, g.hx),
        Axis::Y => (g.nx, g.ny, g.hy),
    }
}

/// First derivative along one axis.
pub fn d1(u: &ScalarField, axis: Axis) -> ScalarField {
    let g = u.grid;
    let (stride, n, h) = axis_layout(&g, axis);
    let v = &u.data;
    let data = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let k = (idx / stride) % n;
            let at = |o: isize| v[(idx as isize + o * stride as isize) as usize];
            if k == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if k + 1 == n {
                (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
            } else {
                (at(1) - at(-1)) / (2.0 * h)
            }
        })
        .collect();
    ScalarField { grid: g, data }
}

/// Second derivative along one axis.
pub fn d2(u: &ScalarField, axis: Axis) -> ScalarField {
    let g = u.grid;
    let (stride, n, h) = axis_layout(&g, axis);
    let v = &u.data;
    let h2 = h * h;
    let data = (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let k = (idx / stride) % n;
            let at = |o: isize| v[(idx as isize + o * stride as isize) as usize];
            if k == 0 {
                if n >= 4 {
                    (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2
                } else {
                    (at(0) - 2.0 * at(1) + at(2)) / h2
                }
            } else if k + 1 == n {
                if n >= 4 {
                    (2.0 * at(0) - 5.0 * at(-1) + 4.0 * at(-2) - at(-3)) / h2
                } else {
                    (at(0) - 2.0 * at(-1) + at(-2)) / h2
                }
            } else {
                (at(1) - 2.0 * at(0) + at(-1)) / h2
            }
        })
        .collect();
    ScalarField { grid: g, data }
}

pub fn gradient(u: &ScalarField, g: &Grid2D) -> Result<VectorField2> {
    check_grid(u, g)?;
    Ok(VectorField2 {
        x: d1(u, Axis::X),
        y: d1(u, Axis::Y),
    })
}

/// The mixed entry is `D_y(D_x u)`, which is the cross stencil in the interior.
pub fn hessian(u: &ScalarField, g: &Grid2D) -> Result<SymMatrixField2> {
    check_grid(u, g)?;
    Ok(SymMatrixField2 {
        xx: d2(u, Axis::X),
        xy: d1(&d1(u, Axis::X), Axis::Y),
        yy: d2(u, Axis::Y),
    })
}

/// Discrete divergence built from the same first-derivative operator.
pub fn divergence(f: &VectorField2, g: &Grid2D) -> Result<ScalarField> {
    check_grid(&f.x, g)?;
    check_grid(&f.y, g)?;
    let a = d1(&f.x, Axis::X);
    let b = d1(&f.y, Axis::Y);
    Ok(a.zip_map(&b, |p, q| p + q))
}

/// Derivatives at one interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeDerivs {
    pub ux: f64,
    pub uy: f64,
    pub uxx: f64,
    pub uxy: f64,
    pub uyy: f64,
}

/// Centred stencils at interior node `(i, j)`; matches [`gradient`] and
/// [`hessian`] there.
#[inline]
pub fn node_derivs(u: &[f64], g: &Grid2D, i: usize, j: usize) -> NodeDerivs {
    let nx = g.nx;
    let c = j * nx + i;
    let (e, w, n, s) = (u[c + 1], u[c - 1], u[c + nx], u[c - nx]);
    let (ne, nw, se, sw) = (u[c + nx + 1], u[c + nx - 1], u[c - nx + 1], u[c - nx - 1]);
    let uc = u[c];
    // identical to d1_y(d1_x u): ((ne - nw) - (se - sw)) / (2hx 2hy)
    let ddx_n = (ne - nw) / (2.0 * g.hx);
    let ddx_s = (se - sw) / (2.0 * g.hx);
    NodeDerivs {
        ux: (e - w) / (2.0 * g.hx),
        uy: (n - s) / (2.0 * g.hy),
        uxx: (e - 2.0 * uc + w) / (g.hx * g.hx),
        uxy: (ddx_n - ddx_s) / (2.0 * g.hy),
        uyy: (n - 2.0 * uc + s) / (g.hy * g.hy),
    }
}

/// The derived quantities at one point, from its first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointDerived {
    pub ux: f64,
    pub uy: f64,
    pub uxx: f64,
    pub uxy: f64,
    pub uyy: f64,
    pub lap: f64,
    /// `<Du, D²u Du>`
    pub inf_lap: f64,
    /// `Δ∞u / (|Du|² + ε)`
    pub norm_inf_lap_reg: f64,
    pub grad_norm: f64,
    /// `|D²u Du|² / (|Du|² + ε)`
    pub grad_of_norm_sq_reg: f64,
    /// `Δ∞ᴺu`; the regularized quotient where the gradient vanishes.
    pub norm_inf_lap: f64,
    /// `|D|Du||²`; the regularized quotient where the gradient vanishes.
    pub grad_of_norm_sq: f64,
    pub dt_norm_sq: f64,
    pub lap_t: f64,
    pub theta: f64,
    pub kappa: f64,
    pub hess_norm_sq: f64,
    /// `θ > THETA_FLOOR`
    pub normalized_defined: bool,
}

impl PointDerived {
    pub fn new(eps: f64, ux: f64, uy: f64, uxx: f64, uxy: f64, uyy: f64) -> Self {
        let q = ux * ux + uy * uy;
        let rho2 = q + eps;
        let theta = q / rho2;
        let kappa = eps / rho2;
        let hgx = uxx * ux + uxy * uy;
        let hgy = uxy * ux + uyy * uy;
        let hg2 = hgx * hgx + hgy * hgy;
        let inf_lap = ux * hgx + uy * hgy;
        let norm_inf_lap_reg = inf_lap / rho2;
        let grad_of_norm_sq_reg = hg2 / rho2;
        let lap = uxx + uyy;
        let normalized_defined = theta > THETA_FLOOR;
        // (g⊥ · Hg)² = |Hg|²|g|² - (g · Hg)², nonnegative by construction
        let perp = -uy * hgx + ux * hgy;
        let (norm_inf_lap, grad_of_norm_sq, dt_norm_sq) = if normalized_defined {
            (norm_inf_lap_reg / theta, grad_of_norm_sq_reg / theta, perp * perp / (q * q))
        } else {
            let reg_dt = (perp * perp + eps * hg2) / (rho2 * rho2);
            (norm_inf_lap_reg, grad_of_norm_sq_reg, reg_dt)
        };
        Self {
            ux,
            uy,
            uxx,
            uxy,
            uyy,
            lap,
            inf_lap,
            norm_inf_lap_reg,
            grad_norm: q.sqrt(),
            grad_of_norm_sq_reg,
            norm_inf_lap,
            grad_of_norm_sq,
            dt_norm_sq,
            lap_t: lap - norm_inf_lap,
            theta,
            kappa,
            hess_norm_sq: uxx * uxx + 2.0 * uxy * uxy + uyy * uyy,
            normalized_defined,
        }
    }
}

/// All pointwise second-order quantities of a discrete field.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedFields {
    pub grid: Grid2D,
    pub epsilon: f64,
    pub grad: VectorField2,
    pub hess: SymMatrixField2,
    pub lap: ScalarField,
    pub inf_lap: ScalarField,
    pub norm_inf_lap_reg: ScalarField,
    pub grad_norm: ScalarField,
    pub grad_of_norm_sq_reg: ScalarField,
    pub norm_inf_lap: ScalarField,
    pub grad_of_norm_sq: ScalarField,
    pub dt_norm_sq: ScalarField,
    pub lap_t: ScalarField,
    pub theta: ScalarField,
    pub kappa: ScalarField,
    pub hess_norm_sq: ScalarField,
    pub normalized_defined: Vec<bool>,
    /// `|D_h sqrt(|Du|² + ε)|²` with the first-derivative stencil applied to
    /// the regularized gradient norm; a second-order approximation of
    /// `grad_of_norm_sq_reg` that is independent of the algebraic one.
    pub fd_grad_of_norm_sq_reg: ScalarField,
}

impl DerivedFields {
    /// Builds every field from given derivative fields (from stencils or
    /// from closed forms).
    pub fn from_derivatives(grid: Grid2D, eps: f64, grad: VectorField2, hess: SymMatrixField2) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::NonPositiveEpsilon(eps));
        }
        for f in [&grad.x, &grad.y, &hess.xx, &hess.xy, &hess.yy] {
            check_grid(f, &grid)?;
        }
        let pts: Vec<PointDerived> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                PointDerived::new(
                    eps,
                    grad.x.data[k],
                    grad.y.data[k],
                    hess.xx.data[k],
                    hess.xy.data[k],
                    hess.yy.data[k],
                )
            })
            .collect();
        let field = |f: fn(&PointDerived) -> f64| ScalarField {
            grid,
            data: pts.iter().map(f).collect(),
        };
        let rho = ScalarField {
            grid,
            data: pts.iter().map(|p| (p.grad_norm * p.grad_norm + eps).sqrt()).collect(),
        };
        let (rx, ry) = (d1(&rho, Axis::X), d1(&rho, Axis::Y));
        let fd = rx.zip_map(&ry, |a, b| a * a + b * b);
        Ok(Self {
            grid,
            epsilon: eps,
            lap: field(|p| p.lap),
            inf_lap: field(|p| p.inf_lap),
            norm_inf_lap_reg: field(|p| p.norm_inf_lap_reg),
            grad_norm: field(|p| p.grad_norm),
            grad_of_norm_sq_reg: field(|p| p.grad_of_norm_sq_reg),
            norm_inf_lap: field(|p| p.norm_inf_lap),
            grad_of_norm_sq: field(|p| p.grad_of_norm_sq),
            dt_norm_sq: field(|p| p.dt_norm_sq),
            lap_t: field(|p| p.lap_t),
            theta: field(|p| p.theta),
            kappa: field(|p| p.kappa),
            hess_norm_sq: field(|p| p.hess_norm_sq),
            normalized_defined: pts.iter().map(|p| p.normalized_defined).collect(),
            fd_grad_of_norm_sq_reg: fd,
            grad,
            hess,
        })
    }

    pub fn point(&self, k: usize) -> PointDerived {
        PointDerived::new(
            self.epsilon,
            self.grad.x.data[k],
            self.grad.y.data[k],
            self.hess.xx.data[k],
            self.hess.xy.data[k],
            self.hess.yy.data[k],
        )
    }

    pub const CSV_COLUMNS: [&'static str; 16] = [
        "grad_x",
        "grad_y",
        "hess_xx",
        "hess_xy",
        "hess_yy",
        "lap",
        "inf_lap",
        "norm_inf_lap_reg",
        "grad_norm",
        "grad_of_norm_sq_reg",
        "dT_norm_sq",
        "lap_T",
        "norm_inf_lap",
        "theta",
        "kappa",
        "normalized_defined",
    ];

    /// Multi-column CSV: `x,y` then [`Self::CSV_COLUMNS`].
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "x,y,{}", Self::CSV_COLUMNS.join(","))?;
        let g = &self.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                let vals = [
                    self.grad.x.data[k],
                    self.grad.y.data[k],
                    self.hess.xx.data[k],
                    self.hess.xy.data[k],
                    self.hess.yy.data[k],
                    self.lap.data[k],
                    self.inf_lap.data[k],
                    self.norm_inf_lap_reg.data[k],
                    self.grad_norm.data[k],
                    self.grad_of_norm_sq_reg.data[k],
                    self.dt_norm_sq.data[k],
                    self.lap_t.data[k],
                    self.norm_inf_lap.data[k],
                    self.theta.data[k],
                    self.kappa.data[k],
                ];
                let mut line = format!("{},{}", g.x(i), g.y(j));
                for v in vals {
                    line.push(',');
                    line.push_str(&v.to_string());
                }
                line.push_str(if self.normalized_defined[k] { ",1" } else { ",0" });
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

/// Stencil derivatives of `u` and every derived field.
pub fn derive_all(u: &ScalarField, g: &Grid2D, params: &ParamSet) -> Result<DerivedFields> {
    params.require_positive_epsilon()?;
    let grad = gradient(u, g)?;
    let hess = hessian(u, g)?;
    DerivedFields::from_derivatives(*g, params.epsilon, grad, hess)
}

/// Largest absolute value over nodes at least `collar` nodes from the edge.
pub fn interior_max_abs(f: &ScalarField, collar: usize) -> f64 {
    interior_norms(f, collar, |_| true).0
}

/// `(max |f|, sqrt(h_x h_y Σ f²))` over interior nodes passing `keep`.
pub fn interior_norms(f: &ScalarField, collar: usize, keep: impl Fn(usize) -> bool) -> (f64, f64) {
    let g = &f.grid;
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for j in collar..g.ny.saturating_sub(collar) {
        for i in collar..g.nx.saturating_sub(collar) {
            let k = g.idx(i, j);
            if keep(k) {
                let v = f.data[k];
                max = max.max(v.abs());
                sum += v * v;
            }
        }
    }
    (max, (sum * g.cell_area()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid2D {
        Grid2D::new(n, n, [-0.7, 1.3], [-0.4, 1.6]).unwrap()
    }

    fn max_err(f: &ScalarField, exact: impl Fn(f64, f64) -> f64, collar: usize) -> f64 {
        let e = f.grid.sample(exact);
        interior_max_abs(&f.zip_map(&e, |a, b| a - b), collar)
    }

    #[test]
    fn exact_on_linear_and_quadratic() {
        let g = grid(9);
        let u = g.sample(|x, _| x);
        let du = gradient(&u, &g).unwrap();
        assert!(max_err(&du.x, |_, _| 1.0, 0) < 1e-13);
        assert!(max_err(&du.y, |_, _| 0.0, 0) < 1e-13);

        let bowl = g.sample(|x, y| 0.5 * (x * x + y * y));
        let du = gradient(&bowl, &g).unwrap();
        assert!(max_err(&du.x, |x, _| x, 0) < 1e-13);
        assert!(max_err(&du.y, |_, y| y, 0) < 1e-13);

        let saddle = g.sample(|x, y| 0.5 * (x * x - y * y));
        let h = hessian(&saddle, &g).unwrap();
        assert!(max_err(&h.xx, |_, _| 1.0, 0) < 1e-11);
        assert!(max_err(&h.yy, |_, _| -1.0, 0) < 1e-11);
        assert!(max_err(&h.xy, |_, _| 0.0, 0) < 1e-11);

        let xy = g.sample(|x, y| x * y);
        let h = hessian(&xy, &g).unwrap();
        assert!(max_err(&h.xy, |_, _| 1.0, 0) < 1e-12);
    }

    #[test]
    fn node_stencil_matches_field_operators() {
        let g = grid(7);
        let u = g.sample(|x, y| (1.3 * x).sin() * (0.7 * y).cos() + x * x * y);
        let du = gradient(&u, &g).unwrap();
        let h = hessian(&u, &g).unwrap();
        for (i, j) in [(1, 1), (3, 2), (5, 5)] {
            let k = g.idx(i, j);
            let n = node_derivs(&u.data, &g, i, j);
            assert!((n.ux - du.x.data[k]).abs() < 1e-14);
            assert!((n.uy - du.y.data[k]).abs() < 1e-14);
            assert!((n.uxx - h.xx.data[k]).abs() < 1e-12);
            assert!((n.uxy - h.xy.data[k]).abs() < 1e-12);
            assert!((n.uyy - h.yy.data[k]).abs() < 1e-12);
        }
    }

    /// Halving h reduces the interior error by about 4.
    #[test]
    fn second_order_convergence() {
        let errs: Vec<(f64, f64)> = [17, 33]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let u = g.sample(|x, y| x.sin() * y.sin());
                let du = gradient(&u, &g).unwrap();
                let h = hessian(&u, &g).unwrap();
                (
                    max_err(&du.x, |x, y| x.cos() * y.sin(), 1),
                    max_err(&h.xy, |x, y| x.cos() * y.cos(), 1),
                )
            })
            .collect();
        let r1 = errs[0].0 / errs[1].0;
        let r2 = errs[0].1 / errs[1].1;
        assert!((3.5..4.5).contains(&r1), "{r1}");
        assert!((3.5..4.5).contains(&r2), "{r2}");
        // sin x alone, including the boundary rows
        let e: Vec<f64> = [17, 33]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let du = gradient(&g.sample(|x, _| x.sin()), &g).unwrap();
                max_err(&du.x, |x, _| x.cos(), 0)
            })
            .collect();
        assert!(e[0] / e[1] > 3.0, "{e:?}");
    }

    #[test]
    fn divergence_of_linear_flux() {
        let g = grid(6);
        let f = VectorField2 {
            x: g.sample(|x, y| 2.0 * x + y),
            y: g.sample(|x, y| x - 3.0 * y),
        };
        let d = divergence(&f, &g).unwrap();
        assert!(max_err(&d, |_, _| -1.0, 0) < 1e-12);
    }

    #[test]
    fn rejects_mismatch_and_zero_eps() {
        let g = grid(5);
        let other = grid(6);
        let u = g.sample(|x, _| x);
        assert!(matches!(gradient(&u, &other), Err(Error::Shape { .. })));
        assert!(derive_all(&u, &g, &ParamSet::new(3.0, 0.0, -1.0, 0.0)).is_err());
    }

    #[test]
    fn saddle_limit_values() {
        // Du = (x, -y), D²u = diag(1, -1)
        let (x, y) = (0.6, -0.3);
        let d = PointDerived::new(1e-300, x, -y, 1.0, 0.0, -1.0);
        let q = (x * x - y * y) / (x * x + y * y);
        assert!((d.norm_inf_lap - q).abs() < 1e-14);
        assert!((d.grad_of_norm_sq - 1.0).abs() < 1e-14);
        assert!((d.dt_norm_sq - (1.0 - q * q)).abs() < 1e-14);
        assert!((d.lap_t + q).abs() < 1e-14);
    }

    #[test]
    fn bowl_limit_values() {
        let d = PointDerived::new(1e-300, 0.4, 0.9, 1.0, 0.0, 1.0);
        assert!((d.norm_inf_lap - 1.0).abs() < 1e-14);
        assert!((d.lap_t - 1.0).abs() < 1e-14);
        assert!(d.dt_norm_sq.abs() < 1e-28);
    }

    #[test]
    fn constant_field() {
        let g = grid(5);
        let u = g.sample(|_, _| 2.5);
        let d = derive_all(&u, &g, &ParamSet::new(3.0, 0.0, -1.0, 1e-2)).unwrap();
        for k in 0..g.len() {
            assert_eq!(d.theta.data[k], 0.0);
            assert_eq!(d.kappa.data[k], 1.0);
            assert!(!d.normalized_defined[k]);
            for f in [&d.lap, &d.inf_lap, &d.dt_norm_sq, &d.lap_t, &d.grad_norm] {
                assert!(f.data[k].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_shape() {
        let g = grid(4);
        let u = g.sample(|x, y| x * y);
        let d = derive_all(&u, &g, &ParamSet::new(3.0, 0.0, -1.0, 1e-2)).unwrap();
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header.len(), 18);
        assert_eq!(header[12], "dT_norm_sq");
        assert_eq!(lines.count(), 16);
    }

    proptest! {
        #[test]
        fn pointwise_invariants(
            eps in 1e-6f64..1.0,
            ux in -3.0f64..3.0, uy in -3.0f64..3.0,
            uxx in -5.0f64..5.0, uxy in -5.0f64..5.0, uyy in -5.0f64..5.0,
        ) {
            let d = PointDerived::new(eps, ux, uy, uxx, uxy, uyy);
            prop_assert!(d.dt_norm_sq >= 0.0);
            prop_assert!((d.theta + d.kappa - 1.0).abs() < 1e-15);
            let scale = d.hess_norm_sq + 1.0;
            if d.theta > 1e-6 {
                // splitting of the Laplacian
                prop_assert!((d.lap - (d.lap_t + d.norm_inf_lap_reg / d.theta)).abs() <= 1e-12 * scale);
                // regularized quotients scale by theta
                prop_assert!((d.grad_of_norm_sq_reg - d.theta * d.grad_of_norm_sq).abs() <= 1e-12 * scale);
                prop_assert!((d.norm_inf_lap_reg - d.theta * d.norm_inf_lap).abs() <= 1e-12 * scale);
                // orthogonal split of |D|Du||²
                let split = d.dt_norm_sq + d.norm_inf_lap * d.norm_inf_lap;
                prop_assert!((d.grad_of_norm_sq - split).abs() <= 1e-10 * scale * (1.0 + 1.0 / d.theta));
            }
            // regularized variant θ|D|Du||² >= θ²(Δ∞ᴺu)²
            prop_assert!(d.grad_of_norm_sq_reg >= d.norm_inf_lap_reg * d.norm_inf_lap_reg - 1e-12 * scale);
        }
    }
}
