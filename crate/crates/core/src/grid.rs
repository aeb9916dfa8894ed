//! Uniform rectangular grids, node fields, and parabolic cylinders.
//!
//! Fields store values row-major: node `(i, j)` with `i` along x and `j`
//! along y lives at `j * nx + i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform node-centred grid on `[origin, extent]`.
///
/// `nx`, `ny` count nodes (so `nx - 1` cells along x).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub origin: [f64; 2],
    pub extent: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, x_range: [f64; 2], y_range: [f64; 2]) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        let [x0, x1] = x_range;
        let [y0, y1] = y_range;
        if !(x1 > x0 && y1 > y0) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Grid(format!(
                "empty or non-finite rectangle [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Self {
            nx,
            ny,
            hx: (x1 - x0) / (nx - 1) as f64,
            hy: (y1 - y0) / (ny - 1) as f64,
            origin: [x0, y0],
            extent: [x1, y1],
        })
    }

    /// A square grid with `n` nodes per side.
    pub fn square(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(n, n, [lo, hi], [lo, hi])
    }

    /// Checks the invariants of a grid built by hand (e.g. deserialized).
    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.ny < 3 {
            return Err(Error::GridTooSmall {
                nx: self.nx,
                ny: self.ny,
            });
        }
        if !(self.hx > 0.0 && self.hy > 0.0) || !self.hx.is_finite() || !self.hy.is_finite() {
            return Err(Error::Grid(format!(
                "spacings must be positive (hx = {}, hy = {})",
                self.hx, self.hy
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin[1] + j as f64 * self.hy
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// True when the node is at least `collar` nodes away from every edge.
    #[inline]
    pub fn in_interior(&self, i: usize, j: usize, collar: usize) -> bool {
        i >= collar && j >= collar && i + collar < self.nx && j + collar < self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Samples a closed-form function at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut data = Vec::with_capacity(self.len());
        for j in 0..self.ny {
            let y = self.y(j);
            for i in 0..self.nx {
                data.push(f(self.x(i), y));
            }
        }
        ScalarField::from_vec(*self, data).expect("sample produces a full field")
    }
}

/// One value per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_vec(grid: Grid2D, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Format(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.nx,
                grid.ny,
                data.len()
            )));
        }
        Ok(Self { grid, data })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.idx(i, j)]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid.shape(), other.grid.shape());
        Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid.shape() != other.grid.shape() {
            return Err(Error::Shape {
                expected: self.grid.shape(),
                got: other.grid.shape(),
            });
        }
        Ok(())
    }
}

/// Two components per node (e.g. `Du`).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2 {
    pub x: ScalarField,
    pub y: ScalarField,
}

/// The three independent entries of a symmetric 2x2 matrix per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrixField2 {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

/// `Q_r(x0, t0) = B_r(x0) x [t0, t0 + r^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCylinder {
    pub x0: [f64; 2],
    pub t0: f64,
    pub r: f64,
}

impl ParabolicCylinder {
    pub fn new(x0: [f64; 2], t0: f64, r: f64) -> Self {
        Self { x0, t0, r }
    }

    /// The concentric cylinder with twice the radius (and four times the duration).
    pub fn doubled(&self) -> Self {
        Self {
            r: 2.0 * self.r,
            ..*self
        }
    }

    pub fn duration(&self) -> f64 {
        self.r * self.r
    }

    /// Node-centre-in-open-ball test.
    #[inline]
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        let dx = x - self.x0[0];
        let dy = y - self.x0[1];
        dx * dx + dy * dy < self.r * self.r
    }

    /// Checks that the ball sits inside the grid rectangle with `margin_nodes`
    /// nodes to spare and the time window inside `[t_first, t_last]`.
    pub fn check_inside(
        &self,
        grid: &Grid2D,
        t_first: f64,
        t_last: f64,
        margin_nodes: usize,
    ) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::Cylinder(format!("radius must be positive (r = {})", self.r)));
        }
        let mx = margin_nodes as f64 * grid.hx;
        let my = margin_nodes as f64 * grid.hy;
        let [cx, cy] = self.x0;
        if cx - self.r < grid.origin[0] + mx
            || cx + self.r > grid.extent[0] - mx
            || cy - self.r < grid.origin[1] + my
            || cy + self.r > grid.extent[1] - my
        {
            return Err(Error::Cylinder(format!(
                "ball of radius {} around ({cx}, {cy}) leaves the grid (margin {margin_nodes} nodes)",
                self.r
            )));
        }
        let tol = 1e-9 * (1.0 + t_last.abs());
        if self.t0 < t_first - tol || self.t0 + self.duration() > t_last + tol {
            return Err(Error::Cylinder(format!(
                "time window [{}, {}) leaves the solved window [{t_first}, {t_last}]",
                self.t0,
                self.t0 + self.duration()
            )));
        }
        Ok(())
    }

    /// Largest cylinder around `x0` whose double fits in the grid with a
    /// two-node margin and in the time window after a burn-in of `r^2`.
    ///
    /// `t0` is the first entry of `times` at or after `times[0] + r^2`.
    pub fn fit(grid: &Grid2D, x0: [f64; 2], times: &[f64]) -> Result<Self> {
        let (t_first, t_last) = match (times.first(), times.last()) {
            (Some(&a), Some(&b)) if b > a => (a, b),
            _ => return Err(Error::Cylinder("need at least two time slices".into())),
        };
        let margin_x = 2.0 * grid.hx;
        let margin_y = 2.0 * grid.hy;
        let space = [
            x0[0] - grid.origin[0] - margin_x,
            grid.extent[0] - margin_x - x0[0],
            x0[1] - grid.origin[1] - margin_y,
            grid.extent[1] - margin_y - x0[1],
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        if !(space > 0.0) {
            return Err(Error::Cylinder("centre too close to the boundary".into()));
        }
        // burn-in r^2 plus the doubled cylinder's 4 r^2
        let mut r = (0.5 * space).min(((t_last - t_first) / 5.0).sqrt());
        for _ in 0..64 {
            let start = t_first + r * r;
            let tol = 1e-9 * (1.0 + t_last.abs());
            if let Some(&t0) = times.iter().find(|&&t| t >= start - tol) {
                if t0 + 4.0 * r * r <= t_last + tol {
                    return Ok(Self { x0, t0, r });
                }
            }
            r *= 0.95;
        }
        Err(Error::Cylinder("no cylinder fits the stored slices".into()))
    }
}
