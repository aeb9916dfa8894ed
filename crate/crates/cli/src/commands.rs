//! One function per subcommand. Each returns a status and the files to
//! write; nothing touches the disk until the run has finished.

use std::fs::File;
use std::io::BufReader;

use serde::Serialize;

use pparab_core::certify::roots::SELECTION_MARGIN;
use pparab_core::certify::{
    certify_slice, certify_with, landscape, scan_region, select_weights_general_s, Certificate, CertifyOptions,
    LandscapeKind, RegionVerdict, Verdict,
};
use pparab_core::estimator::{
    append_jsonl, hessian_estimate_report, nonlinear_gradient_estimate_report, time_derivative_check,
    write_ratio_csv,
};
use pparab_core::io::write_field_csv;
use pparab_core::structure::identity_check;
use pparab_core::{
    solve, validate_params, Error, ParabolicCylinder, ParamSet, Purpose, SpaceTimeField, WeightRecipe,
};

use crate::config::{CertifyConfig, EstimateConfig, IdentityConfig, Recipe, ScanConfig, SolveConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Accept,
    Reject,
    Inconclusive,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Accept => 0,
            Status::Reject => 1,
            Status::Inconclusive => 2,
        }
    }

    fn worst(self, other: Status) -> Status {
        use Status::*;
        match (self, other) {
            (Reject, _) | (_, Reject) => Reject,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Accept,
        }
    }
}

impl From<Verdict> for Status {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Accept => Status::Accept,
            Verdict::Reject => Status::Reject,
            Verdict::Inconclusive => Status::Inconclusive,
        }
    }
}

pub struct Output {
    pub status: Status,
    /// `(file name, contents)` written under `--out`.
    pub files: Vec<(String, Vec<u8>)>,
    /// One-line summary for stdout.
    pub summary: String,
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_vec_pretty(v).map_err(Error::from)?;
    s.push(b'\n');
    Ok(s)
}

/// A proven-range check that rejects instead of failing.
fn range_reject(reason: String) -> Output {
    Output {
        status: Status::Reject,
        files: Vec::new(),
        summary: format!("reject: outside the proven range ({reason}); pass --override-range to probe anyway"),
    }
}

pub fn certify(cfg: &CertifyConfig, override_range: bool) -> Result<Output, CliError> {
    let s = |what: &str| cfg.s.ok_or_else(|| CliError::Usage(format!("recipe {what} needs `s`")));
    let (w, params, default_margin) = match cfg.recipe {
        Recipe::Thm11 => {
            let params = ParamSet::hessian(cfg.p, cfg.gamma, cfg.epsilon);
            if !override_range {
                if let Err(e) = validate_params(params, Purpose::Thm11) {
                    return Ok(range_reject(e.to_string()));
                }
            }
            (WeightRecipe::hessian(cfg.p, cfg.gamma), params, 1e-4)
        }
        Recipe::GeneralS => {
            let params = ParamSet::new(cfg.p, cfg.gamma, s("general_s")?, cfg.epsilon);
            if !override_range {
                if let Err(e) = validate_params(params, Purpose::GeneralS) {
                    return Ok(range_reject(e.to_string()));
                }
            }
            match select_weights_general_s(params.p, params.gamma, params.s) {
                Ok(w) => (w, params, SELECTION_MARGIN),
                Err(e @ Error::Inadmissible { .. }) => return Ok(range_reject(e.to_string())),
                Err(Error::WeightSelection(msg)) => {
                    return Ok(Output {
                        status: Status::Inconclusive,
                        files: Vec::new(),
                        summary: format!("inconclusive: {msg}"),
                    })
                }
                Err(e) => return Err(e.into()),
            }
        }
        Recipe::Custom { weights: [w1, w2, w3, w4] } => (
            WeightRecipe::custom(w1, w2, w3, w4),
            ParamSet::new(cfg.p, cfg.gamma, s("custom")?, cfg.epsilon),
            1e-4,
        ),
    };
    params.check_basic()?;
    let opts = CertifyOptions {
        method: cfg.method,
        max_depth: cfg.max_depth,
    };
    let cert: Certificate = certify_with(&w, &params, cfg.target_margin.unwrap_or(default_margin), &opts)?;
    let summary = match (&cert.witness, cert.undecided) {
        (Some(wit), _) => format!(
            "reject: {} <= {:e} at kappa* = {}",
            wit.condition, wit.upper_bound, wit.kappa
        ),
        (None, Some(u)) => format!("inconclusive: kappa in [{}, {}] undecided", u[0], u[1]),
        (None, None) => format!(
            "accept: margin_c = {:e} at kappa ~ {}",
            cert.margin_c,
            cert.argmin_kappa().unwrap_or(f64::NAN)
        ),
    };
    Ok(Output {
        status: cert.verdict.into(),
        files: vec![("certificate.json".into(), cert.to_json()?.into_bytes())],
        summary,
    })
}

fn kind_name(k: LandscapeKind) -> &'static str {
    match k {
        LandscapeKind::F => "f",
        LandscapeKind::FGamma => "f_gamma",
    }
}

#[derive(Serialize)]
struct LandscapeSummary {
    file: String,
    kind: LandscapeKind,
    gamma: f64,
    min: f64,
    max: f64,
}

pub fn scan(cfg: &ScanConfig) -> Result<Output, CliError> {
    if cfg.region.is_none() && cfg.landscapes.is_empty() && cfg.slices.is_empty() {
        return Err(CliError::Usage("scan config has no region, landscapes or slices".into()));
    }
    let mut files = Vec::new();
    let mut status = Status::Accept;
    let mut parts = Vec::new();
    if let Some(r) = &cfg.region {
        let map = scan_region(r.p_range, r.gamma_range, r.policy, r.resolution, r.target_margin)?;
        let mut csv = Vec::new();
        map.write_csv(&mut csv)?;
        files.push(("region.csv".into(), csv));
        files.push(("region.json".into(), json_bytes(&map)?));
        let count = |v: RegionVerdict| map.rows.iter().filter(|r| r.verdict == v).count();
        let (acc, rej, inc, inad) = (
            count(RegionVerdict::Accept),
            count(RegionVerdict::Reject),
            count(RegionVerdict::Inconclusive),
            count(RegionVerdict::Inadmissible),
        );
        if rej + inad > 0 {
            status = status.worst(Status::Reject);
        } else if inc > 0 {
            status = status.worst(Status::Inconclusive);
        }
        parts.push(format!(
            "region: {acc} accept, {rej} reject, {inc} inconclusive, {inad} inadmissible"
        ));
    }
    let mut summaries = Vec::new();
    for (i, l) in cfg.landscapes.iter().enumerate() {
        let land = landscape(l.kind, l.gamma, l.kappa_n, l.p_range, l.p_n)?;
        let name = format!("landscape_{i}_{}.dat", kind_name(l.kind));
        let mut buf = Vec::new();
        land.write_gnuplot(&mut buf)?;
        files.push((name.clone(), buf));
        parts.push(format!(
            "{} at gamma = {}: min {:e}, max {:e}",
            kind_name(l.kind),
            l.gamma,
            land.min(),
            land.max()
        ));
        summaries.push(LandscapeSummary {
            file: name,
            kind: l.kind,
            gamma: l.gamma,
            min: land.min(),
            max: land.max(),
        });
    }
    if !summaries.is_empty() {
        files.push(("landscapes.json".into(), json_bytes(&summaries)?));
    }
    let mut slices = Vec::new();
    for s in &cfg.slices {
        let c = certify_slice(s.kind, s.gamma, s.p_range, s.max_depth)?;
        status = status.worst(c.verdict.into());
        parts.push(format!("{} slice at gamma = {}: {:?}", kind_name(s.kind), s.gamma, c.verdict));
        slices.push(c);
    }
    if !slices.is_empty() {
        files.push(("slices.json".into(), json_bytes(&slices)?));
    }
    Ok(Output {
        status,
        files,
        summary: parts.join("; "),
    })
}

pub fn identity(cfg: &IdentityConfig) -> Result<Output, CliError> {
    if cfg.levels.is_empty() {
        return Err(CliError::Usage("levels must not be empty".into()));
    }
    let reports = identity_check(cfg.identity, cfg.preset, cfg.epsilon, cfg.exponent, &cfg.levels)?;
    let mut buf = Vec::new();
    append_jsonl(&mut buf, &reports)?;
    let summary = reports
        .iter()
        .map(|r| match r.order_estimate {
            Some(o) => format!("n={}: {:.3e} (order {:.2})", r.grid.nx, r.max_residual, o),
            None => format!("n={}: {:.3e}", r.grid.nx, r.max_residual),
        })
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Output {
        status: Status::Accept,
        files: vec![("identity.jsonl".into(), buf)],
        summary,
    })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    stats: &'a pparab_core::solver::SolveStats,
    grid: pparab_core::Grid2D,
    times: &'a [f64],
    trajectory: &'a str,
}

pub fn solve_cmd(cfg: &SolveConfig) -> Result<Output, CliError> {
    let prob = cfg.problem.build()?;
    let sol = solve(&prob, cfg.problem.safety)?;
    let mut traj = Vec::new();
    sol.field.write(&mut traj)?;
    let mut last = Vec::new();
    write_field_csv(&mut last, sol.field.slices.last().expect("at least one slice"))?;
    let meta = SolveSummary {
        stats: &sol.stats,
        grid: prob.grid,
        times: &sol.field.times,
        trajectory: "trajectory.ppt",
    };
    Ok(Output {
        status: Status::Accept,
        files: vec![
            ("trajectory.ppt".into(), traj),
            ("final.csv".into(), last),
            ("solve.json".into(), json_bytes(&meta)?),
        ],
        summary: format!(
            "{} steps, {} slices, max principle {}",
            sol.stats.steps,
            sol.field.len(),
            if sol.stats.max_principle_ok { "held" } else { "VIOLATED" }
        ),
    })
}

pub fn estimate(cfg: &EstimateConfig, override_range: bool) -> Result<Output, CliError> {
    let (traj, params) = match (&cfg.problem, &cfg.trajectory) {
        (Some(p), None) => {
            let prob = p.build()?;
            (solve(&prob, p.safety)?.field, cfg.params.unwrap_or(p.params))
        }
        (None, Some(path)) => {
            let mut r = BufReader::new(File::open(path)?);
            let traj = SpaceTimeField::read(&mut r)?;
            let params = cfg
                .params
                .ok_or_else(|| CliError::Usage("`params` is required with `trajectory`".into()))?;
            (traj, params)
        }
        _ => return Err(CliError::Usage("give exactly one of `problem` and `trajectory`".into())),
    };
    let g = traj.grid;
    let cyl = match cfg.cylinder {
        Some(c) => c,
        None => {
            let centre = cfg.center.unwrap_or([
                0.5 * (g.origin[0] + g.extent[0]),
                0.5 * (g.origin[1] + g.extent[1]),
            ]);
            ParabolicCylinder::fit(&g, centre, &traj.times)?
        }
    };
    let mut reports = Vec::new();
    if cfg.hessian {
        reports.push(hessian_estimate_report(&traj, &cyl, &params, override_range)?);
    }
    for &s in &cfg.s_values {
        let p = ParamSet { s, ..params };
        reports.push(nonlinear_gradient_estimate_report(&traj, &cyl, &p, override_range)?);
    }
    let mut tds = Vec::new();
    for &mode in &cfg.time_derivative {
        tds.push(time_derivative_check(&traj, &params, mode, Some(&cyl), override_range)?);
    }
    if reports.is_empty() && tds.is_empty() {
        return Err(CliError::Usage("nothing to estimate".into()));
    }
    let mut files = Vec::new();
    let mut parts: Vec<String> = reports
        .iter()
        .map(|r| format!("{:?} ratio {:.4e}", r.metadata.kind, r.ratio))
        .collect();
    parts.extend(tds.iter().map(|t| format!("{:?} bound held at {:.4}% of nodes", t.mode, 100.0 * t.fraction)));
    if !reports.is_empty() {
        let mut jl = Vec::new();
        append_jsonl(&mut jl, &reports)?;
        files.push(("estimate.jsonl".into(), jl));
        let mut csv = Vec::new();
        write_ratio_csv(&mut csv, &reports)?;
        files.push(("ratios.csv".into(), csv));
    }
    if !tds.is_empty() {
        let mut jl = Vec::new();
        append_jsonl(&mut jl, &tds)?;
        files.push(("time_derivative.jsonl".into(), jl));
    }
    Ok(Output {
        status: Status::Accept,
        files,
        summary: parts.join("; "),
    })
}
