//! Explicit finite-difference solver for the regularized equation on a
//! rectangle with Dirichlet data.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff_ops::node_derivs;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::params::{validate_params, ParamSet, Purpose};
use crate::presets::{grid_on, Preset};

/// Dirichlet trace `g(x, y, t)`.
pub type BoundaryFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Problem {
    pub grid: Grid2D,
    pub params: ParamSet,
    pub initial: ScalarField,
    pub boundary: BoundaryFn,
    pub t_end: f64,
    /// Spacing of stored slices. Steps are shortened to land on each one.
    pub slice_dt: f64,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .field("t_end", &self.t_end)
            .field("slice_dt", &self.slice_dt)
            .finish_non_exhaustive()
    }
}

impl Problem {
    /// Initial data from `initial` and a time-independent trace from `boundary`.
    pub fn from_presets(
        grid: Grid2D,
        params: ParamSet,
        initial: Preset,
        boundary: Preset,
        t_end: f64,
        slice_dt: f64,
    ) -> Self {
        let f = initial.function();
        let b = boundary.function();
        Self {
            grid,
            params,
            initial: grid.sample(|x, y| f(x, y)),
            boundary: Arc::new(move |x, y, _| b(x, y)),
            t_end,
            slice_dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_params(self.params, Purpose::Solver)?;
        self.grid.validate()?;
        if self.initial.grid.shape() != self.grid.shape() {
            return Err(Error::Shape {
                expected: self.grid.shape(),
                got: self.initial.grid.shape(),
            });
        }
        if !self.initial.all_finite() {
            return Err(Error::Param("initial data must be finite".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Param(format!("t_end > 0 violated (t_end = {})", self.t_end)));
        }
        if !(self.slice_dt > 0.0 && self.slice_dt <= self.t_end) {
            return Err(Error::Param(format!(
                "0 < slice_dt <= t_end violated (slice_dt = {})",
                self.slice_dt
            )));
        }
        let g = self.grid;
        let scale = 1.0 + self.initial.min_max().1.abs().max(self.initial.min_max().0.abs());
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.is_boundary(i, j) {
                    let b = (self.boundary)(g.x(i), g.y(j), 0.0);
                    if (b - self.initial.at(i, j)).abs() > 1e-9 * scale {
                        return Err(Error::Param(format!(
                            "initial data must match the boundary trace at t = 0 (node ({i}, {j}))"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A problem as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub params: ParamSet,
    /// Nodes per side.
    pub n: usize,
    /// `[[x0, x1], [y0, y1]]`; defaults to the initial preset's domain.
    #[serde(default)]
    pub domain: Option<[[f64; 2]; 2]>,
    pub initial: Preset,
    /// Defaults to the initial preset.
    #[serde(default)]
    pub boundary: Option<Preset>,
    pub t_end: f64,
    /// Defaults to `t_end / 40`.
    #[serde(default)]
    pub slice_dt: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety: f64,
}

fn default_safety() -> f64 {
    0.9
}

impl ProblemConfig {
    pub fn domain(&self) -> [[f64; 2]; 2] {
        self.domain.unwrap_or_else(|| self.initial.default_domain())
    }

    pub fn build(&self) -> Result<Problem> {
        let grid = grid_on(self.domain(), self.n)?;
        let p = Problem::from_presets(
            grid,
            self.params,
            self.initial,
            self.boundary.unwrap_or(self.initial),
            self.t_end,
            self.slice_dt.unwrap_or(self.t_end / 40.0),
        );
        p.validate()?;
        Ok(p)
    }
}

#[inline]
fn rho_gamma(r2: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        r2.powf(0.5 * gamma)
    }
}

/// Fills interior rows of `out` with the right-hand side and returns the
/// largest `(|Du|² + ε)^{γ/2}` seen.
fn rhs_into(u: &[f64], g: &Grid2D, params: &ParamSet, out: &mut [f64]) -> f64 {
    let (nx, ny) = (g.nx, g.ny);
    let (pm2, gamma, eps) = (params.p - 2.0, params.gamma, params.epsilon);
    out.par_chunks_mut(nx)
        .enumerate()
        .map(|(j, row)| {
            let mut dmax = 0.0f64;
            if j == 0 || j + 1 == ny {
                row.fill(0.0);
                return dmax;
            }
            row[0] = 0.0;
            row[nx - 1] = 0.0;
            for (i, slot) in row.iter_mut().enumerate().take(nx - 1).skip(1) {
                let d = node_derivs(u, g, i, j);
                let r2 = d.ux * d.ux + d.uy * d.uy + eps;
                let lap = d.uxx + d.uyy;
                let inf = d.ux * d.ux * d.uxx + 2.0 * d.ux * d.uy * d.uxy + d.uy * d.uy * d.uyy;
                let pre = rho_gamma(r2, gamma);
                *slot = pre * (lap + pm2 * (inf / r2));
                dmax = dmax.max(pre);
            }
            dmax
        })
        .reduce(|| 0.0, f64::max)
}

/// `(|Du|² + ε)^{γ/2}(Δu + (p - 2) Δ∞u / (|Du|² + ε))` at interior nodes;
/// zero on the boundary.
pub fn rhs(u: &ScalarField, params: &ParamSet, g: &Grid2D) -> Result<ScalarField> {
    params.require_positive_epsilon()?;
    if u.grid.shape() != g.shape() {
        return Err(Error::Shape {
            expected: g.shape(),
            got: u.grid.shape(),
        });
    }
    let mut out = vec![0.0; g.len()];
    rhs_into(&u.data, g, params, &mut out);
    Ok(ScalarField { grid: *g, data: out })
}

fn dt_from_coefficient(coef_max: f64, params: &ParamSet, g: &Grid2D, safety: f64) -> f64 {
    let d = if params.gamma >= 0.0 {
        coef_max
    } else {
        params.epsilon.powf(0.5 * params.gamma)
    };
    let d = d.max(f64::MIN_POSITIVE) * (params.p - 1.0).max(1.0);
    safety / (2.0 * d * (1.0 / (g.hx * g.hx) + 1.0 / (g.hy * g.hy)))
}

/// Largest explicit step allowed by the diffusion bound at the current data.
pub fn stable_dt(u: &ScalarField, params: &ParamSet, g: &Grid2D, safety: f64) -> Result<f64> {
    params.require_positive_epsilon()?;
    let mut coef_max = 0.0f64;
    if params.gamma >= 0.0 {
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let d = node_derivs(&u.data, g, i, j);
                coef_max = coef_max.max(rho_gamma(d.ux * d.ux + d.uy * d.uy + params.epsilon, params.gamma));
            }
        }
    }
    Ok(dt_from_coefficient(coef_max, params, g, safety))
}

/// Stored slices, with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: Grid2D,
    pub times: Vec<f64>,
    pub slices: Vec<ScalarField>,
}

impl SpaceTimeField {
    pub fn new(times: Vec<f64>, slices: Vec<ScalarField>) -> Result<Self> {
        let grid = slices
            .first()
            .map(|s| s.grid)
            .ok_or_else(|| Error::Format("trajectory has no slices".into()))?;
        if times.len() != slices.len() {
            return Err(Error::Format(format!("{} times for {} slices", times.len(), slices.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("slice times must be strictly increasing".into()));
        }
        if let Some(s) = slices.iter().find(|s| s.grid.shape() != grid.shape()) {
            return Err(Error::Shape {
                expected: grid.shape(),
                got: s.grid.shape(),
            });
        }
        Ok(Self { grid, times, slices })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write(&self, w: &mut impl std::io::Write) -> Result<()> {
        crate::io::write_trajectory(w, &self.times, &self.slices)
    }

    pub fn read(r: &mut impl std::io::Read) -> Result<Self> {
        let (t, s) = crate::io::read_trajectory(r)?;
        Self::new(t, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// `[min, max]` of initial and boundary data seen during the run.
    pub data_range: [f64; 2],
    /// `[min, max]` of the solution over all steps.
    pub solution_range: [f64; 2],
    /// Largest excursion outside `data_range`, zero if none.
    pub max_overshoot: f64,
    pub max_principle_ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: SpaceTimeField,
    pub stats: SolveStats,
}

/// Overshoot below this (relative to the data range) counts as rounding.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-12;

fn impose_boundary(u: &mut [f64], g: &Grid2D, b: &BoundaryFn, t: f64, range: &mut [f64; 2]) {
    let mut put = |i: usize, j: usize| {
        let v = b(g.x(i), g.y(j), t);
        u[g.idx(i, j)] = v;
        range[0] = range[0].min(v);
        range[1] = range[1].max(v);
    };
    for i in 0..g.nx {
        put(i, 0);
        put(i, g.ny - 1);
    }
    for j in 1..g.ny - 1 {
        put(0, j);
        put(g.nx - 1, j);
    }
}

/// Forward Euler with the step recomputed from the current data each step.
pub fn solve(prob: &Problem, safety: f64) -> Result<Solution> {
    prob.validate()?;
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::Param(format!("0 < safety <= 1 violated (safety = {safety})")));
    }
    let g = prob.grid;
    let params = prob.params;
    let mut u = prob.initial.data.clone();
    let mut data_range = [f64::INFINITY, f64::NEG_INFINITY];
    for &v in &u {
        data_range[0] = data_range[0].min(v);
        data_range[1] = data_range[1].max(v);
    }
    impose_boundary(&mut u, &g, &prob.boundary, 0.0, &mut data_range);
    let mut sol_range = data_range;

    let n_slices = (prob.t_end / prob.slice_dt - 1e-9).ceil() as usize;
    let slice_time = |k: usize| {
        if k >= n_slices {
            prob.t_end
        } else {
            k as f64 * prob.slice_dt
        }
    };
    let mut times = vec![0.0];
    let mut slices = vec![ScalarField { grid: g, data: u.clone() }];
    let mut next_slice = 1;

    let mut f = vec![0.0; g.len()];
    let (mut t, mut steps) = (0.0f64, 0usize);
    let (mut min_dt, mut max_dt) = (f64::INFINITY, 0.0f64);
    let mut overshoot = 0.0f64;
    while next_slice <= n_slices {
        let target = slice_time(next_slice);
        let coef_max = rhs_into(&u, &g, &params, &mut f);
        let dt_stable = dt_from_coefficient(coef_max, &params, &g, safety);
        let remaining = target - t;
        // land exactly on the slice; avoid a sliver step right after it
        let (dt, lands) = if dt_stable >= remaining {
            (remaining, true)
        } else if dt_stable * 1.5 > remaining {
            (0.5 * remaining, false)
        } else {
            (dt_stable, false)
        };
        u.par_iter_mut().zip(f.par_iter()).for_each(|(ui, fi)| *ui += dt * fi);
        steps += 1;
        t = if lands { target } else { t + dt };
        min_dt = min_dt.min(dt);
        max_dt = max_dt.max(dt);
        impose_boundary(&mut u, &g, &prob.boundary, t, &mut data_range);

        let (lo, hi) = u
            .par_iter()
            .fold(|| (f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
            .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |x, y| (x.0.min(y.0), x.1.max(y.1)));
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::BlowUp { step: steps, time: t });
        }
        sol_range = [sol_range[0].min(lo), sol_range[1].max(hi)];
        overshoot = overshoot.max(data_range[0] - lo).max(hi - data_range[1]);

        if lands {
            times.push(t);
            slices.push(ScalarField { grid: g, data: u.clone() });
            next_slice += 1;
        }
    }
    let tol = MAX_PRINCIPLE_TOL * (1.0 + data_range[1] - data_range[0]);
    Ok(Solution {
        field: SpaceTimeField::new(times, slices)?,
        stats: SolveStats {
            steps,
            min_dt,
            max_dt,
            data_range,
            solution_range: sol_range,
            max_overshoot: overshoot.max(0.0),
            max_principle_ok: overshoot <= tol,
        },
    })
}
