//! Named closed-form fields used as initial data, boundary traces and
//! manufactured inputs.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::Grid2D;

pub type SpaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Preset {
    /// `u = x`
    Linear,
    /// `u = (x² + y²) / 2`
    QuadraticBowl,
    /// `u = (x² - y²) / 2`
    Saddle,
    /// `u = sin x sin y`
    SineMode,
    /// A few low Fourier modes with seeded random amplitudes and phases.
    RandomSmooth { seed: u64 },
}

impl Preset {
    pub const FIXED: [Preset; 4] = [Preset::Linear, Preset::QuadraticBowl, Preset::Saddle, Preset::SineMode];

    pub fn function(&self) -> SpaceFn {
        match *self {
            Preset::Linear => Arc::new(|x, _| x),
            Preset::QuadraticBowl => Arc::new(|x, y| 0.5 * (x * x + y * y)),
            Preset::Saddle => Arc::new(|x, y| 0.5 * (x * x - y * y)),
            Preset::SineMode => Arc::new(|x: f64, y: f64| x.sin() * y.sin()),
            Preset::RandomSmooth { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let modes: Vec<[f64; 5]> = (0..4)
                    .map(|_| {
                        let m = rng.gen_range(1..=3) as f64;
                        let n = rng.gen_range(1..=3) as f64;
                        let a = rng.gen_range(-1.0..1.0) / (m * m + n * n);
                        [a, m, n, rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)]
                    })
                    .collect();
                Arc::new(move |x, y| {
                    modes
                        .iter()
                        .map(|&[a, m, n, px, py]| a * (m * x + px).sin() * (n * y + py).sin())
                        .sum()
                })
            }
        }
    }

    /// The rectangle the preset is usually solved on.
    pub fn default_domain(&self) -> [[f64; 2]; 2] {
        match self {
            Preset::SineMode => [[0.0, PI], [0.0, PI]],
            Preset::QuadraticBowl | Preset::Saddle => [[-1.0, 1.0], [-1.0, 1.0]],
            Preset::Linear | Preset::RandomSmooth { .. } => [[0.0, 1.0], [0.0, 1.0]],
        }
    }

    /// A window on which the gradient stays away from zero.
    pub fn identity_window(&self) -> [[f64; 2]; 2] {
        match self {
            Preset::SineMode => [[0.2, 1.2], [0.2, 1.2]],
            _ => [[0.25, 1.25], [0.25, 1.25]],
        }
    }

    pub fn name(&self) -> String {
        match self {
            Preset::Linear => "linear".into(),
            Preset::QuadraticBowl => "quadratic_bowl".into(),
            Preset::Saddle => "saddle".into(),
            Preset::SineMode => "sine_mode".into(),
            Preset::RandomSmooth { seed } => format!("random_smooth({seed})"),
        }
    }
}

/// Square grid with `n` nodes per side on a rectangle.
pub fn grid_on(domain: [[f64; 2]; 2], n: usize) -> Result<Grid2D> {
    Grid2D::new(n, n, domain[0], domain[1])
}
