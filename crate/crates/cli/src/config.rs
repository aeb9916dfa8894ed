//! Per-command JSON configs. Every run is determined by its config plus the
//! seed; configs round-trip through serde.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use pparab_core::certify::{LandscapeKind, Method, SPolicy};
use pparab_core::estimator::TimeDerivativeMode;
use pparab_core::structure::IdentityKind;
use pparab_core::{ParabolicCylinder, ParamSet, Preset, ProblemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    /// Fixed Hessian weights, `s = 2 - p`.
    Thm11,
    /// `w1` chosen inside the root window for the given `s`.
    GeneralS,
    Custom { weights: [f64; 4] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub recipe: Recipe,
    pub p: f64,
    pub gamma: f64,
    /// Required for `general_s` and `custom`; ignored by `thm11`.
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub epsilon: f64,
    /// Defaults to `1e-4`, or the selection margin for `general_s`.
    #[serde(default)]
    pub target_margin: Option<f64>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_depth")]
    pub max_depth: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_method() -> Method {
    Method::LipschitzSweep
}

fn default_depth() -> u32 {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub p_range: [f64; 2],
    pub gamma_range: [f64; 2],
    pub resolution: [usize; 2],
    #[serde(default = "default_policy")]
    pub policy: SPolicy,
    #[serde(default = "default_margin")]
    pub target_margin: f64,
}

fn default_policy() -> SPolicy {
    SPolicy::Hessian
}

fn default_margin() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    pub kind: LandscapeKind,
    pub gamma: f64,
    pub p_range: [f64; 2],
    pub kappa_n: usize,
    pub p_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub kind: LandscapeKind,
    pub gamma: f64,
    pub p_range: [f64; 2],
    #[serde(default = "default_slice_depth")]
    pub max_depth: u32,
}

fn default_slice_depth() -> u32 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default)]
    pub region: Option<RegionSpec>,
    #[serde(default)]
    pub landscapes: Vec<LandscapeSpec>,
    #[serde(default)]
    pub slices: Vec<SliceSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    pub identity: IdentityKind,
    pub preset: Preset,
    #[serde(default = "default_identity_eps")]
    pub epsilon: f64,
    /// α for the first structure, β for the second.
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_identity_eps() -> f64 {
    1e-2
}

fn default_exponent() -> f64 {
    1.0
}

fn default_levels() -> Vec<usize> {
    vec![33, 65, 129]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Solve this problem first. Exactly one of `problem` and `trajectory`.
    #[serde(default)]
    pub problem: Option<ProblemConfig>,
    /// A trajectory written by `solve`.
    #[serde(default)]
    pub trajectory: Option<PathBuf>,
    /// Defaults to the problem's parameters.
    #[serde(default)]
    pub params: Option<ParamSet>,
    #[serde(default = "default_true")]
    pub hessian: bool,
    /// Exponents for the nonlinear gradient report.
    #[serde(default)]
    pub s_values: Vec<f64>,
    /// Defaults to the largest cylinder fitting around `center`.
    #[serde(default)]
    pub cylinder: Option<ParabolicCylinder>,
    /// Defaults to the centre of the grid.
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub time_derivative: Vec<TimeDerivativeMode>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_true() -> bool {
    true
}

fn reseed(p: &mut Preset, seed: u64) {
    if let Preset::RandomSmooth { seed: s } = p {
        *s = seed;
    }
}

fn reseed_problem(p: &mut ProblemConfig, seed: u64) {
    reseed(&mut p.initial, seed);
    if let Some(b) = p.boundary.as_mut() {
        reseed(b, seed);
    }
}

/// Applies the effective seed to every seeded preset in a config.
pub trait Seeded {
    fn seed_slot(&mut self) -> &mut Option<u64>;
    fn apply_seed(&mut self, _seed: u64) {}

    /// `--seed` wins over the config's own seed.
    fn resolve_seed(&mut self, flag: Option<u64>) {
        if let Some(s) = flag {
            *self.seed_slot() = Some(s);
        }
        if let Some(s) = *self.seed_slot() {
            self.apply_seed(s);
        }
    }
}

impl Seeded for CertifyConfig {
    fn seed_slot(&mut self) -> &mut Option<u64> {
        &mut self.seed
    }
}

impl Seeded for ScanConfig {
    fn seed_slot(&mut self) -> &mut Option<u64> {
        &mut self.seed
    }
}

impl Seeded for IdentityConfig {
    fn seed_slot(&mut self) -> &mut Option<u64> {
        &mut self.seed
    }
    fn apply_seed(&mut self, seed: u64) {
        reseed(&mut self.preset, seed);
    }
}

impl Seeded for SolveConfig {
    fn seed_slot(&mut self) -> &mut Option<u64> {
        &mut self.seed
    }
    fn apply_seed(&mut self, seed: u64) {
        reseed_problem(&mut self.problem, seed);
    }
}

impl Seeded for EstimateConfig {
    fn seed_slot(&mut self) -> &mut Option<u64> {
        &mut self.seed
    }
    fn apply_seed(&mut self, seed: u64) {
        if let Some(p) = self.problem.as_mut() {
            reseed_problem(p, seed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip<T: Serialize + for<'de> Deserialize<'de> + PartialEq + std::fmt::Debug>(text: &str) -> T {
        let a: T = serde_json::from_str(text).unwrap();
        let b: T = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        a
    }

    #[test]
    fn configs_round_trip() {
        let c: CertifyConfig = round_trip(r#"{"recipe":"thm11","p":3,"gamma":0}"#);
        assert_eq!(c.max_depth, 40);
        let c: CertifyConfig = round_trip(r#"{"recipe":{"custom":{"weights":[1,2,3,4]}},"p":3,"gamma":0,"s":0}"#);
        assert_eq!(c.recipe, Recipe::Custom { weights: [1.0, 2.0, 3.0, 4.0] });
        let s: ScanConfig = round_trip(
            r#"{"region":{"p_range":[3,40],"gamma_range":[-0.9,0.9],"resolution":[4,3]},
                "landscapes":[{"kind":"f","gamma":1,"p_range":[3,40],"kappa_n":11,"p_n":5}],
                "slices":[{"kind":"f_gamma","gamma":-1,"p_range":[3,40]}]}"#,
        );
        assert_eq!(s.slices[0].max_depth, 60);
        let i: IdentityConfig = round_trip(r#"{"identity":"gd2","preset":{"name":"saddle"}}"#);
        assert_eq!(i.levels, vec![33, 65, 129]);
        let _: SolveConfig = round_trip(
            r#"{"problem":{"params":{"p":2,"gamma":0,"s":0,"epsilon":0.01},"n":17,
                "initial":{"name":"sine_mode"},"t_end":0.1}}"#,
        );
        let _: EstimateConfig = round_trip(r#"{"trajectory":"t.ppt","params":{"p":3,"gamma":0,"s":-1,"epsilon":0.01}}"#);
        assert!(serde_json::from_str::<CertifyConfig>(r#"{"recipe":"thm11","p":3,"gamma":0,"x":1}"#).is_err());
    }

    #[test]
    fn seed_flag_overrides_presets() {
        let mut c: SolveConfig = serde_json::from_str(
            r#"{"problem":{"params":{"p":2,"gamma":0,"s":0,"epsilon":0.01},"n":17,
                "initial":{"name":"random_smooth","seed":1},"t_end":0.1},"seed":5}"#,
        )
        .unwrap();
        c.resolve_seed(None);
        assert_eq!(c.problem.initial, Preset::RandomSmooth { seed: 5 });
        c.resolve_seed(Some(9));
        assert_eq!(c.seed, Some(9));
        assert_eq!(c.problem.initial, Preset::RandomSmooth { seed: 9 });
    }
}
