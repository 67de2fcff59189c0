//! Scenario configuration: JSON schema, validation and round-trip I/O.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ProblemData;
use crate::diagnostics::DiagnosticsOptions;
use crate::error::{ConfigIssue, Error, Result};
use crate::fixed_point::FixedPointOptions;
use crate::grid::{Extent, FaceTag, Grid};
use crate::profiles::Jet;

/// Spatial dimension entering the exponent condition.
pub const EXPONENT_DIMENSION: f64 = 3.0;

/// Relative tolerance of the face compatibility conditions.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

/// Largest `|div B0|` accepted at the nodes.
pub const DIVERGENCE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "Extent::unit")]
    pub extent: Extent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSpec {
    pub horizon: f64,
    pub dt: f64,
    pub window: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    /// Write a field dump every `cadence` time levels; 0 writes only the final state.
    pub cadence: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridSpec,
    #[serde(flatten)]
    pub problem: ProblemData,
    pub time: TimeSpec,
    /// Exponents of the monitored norms.
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub fixed_point: FixedPointOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsOptions,
    #[serde(default)]
    pub output: OutputSpec,
    /// Accept exponents violating the exponent condition, with a warning.
    #[serde(default)]
    pub override_exponent_check: bool,
}

/// `q > d` and `max{2q/(q−1), 2q/(2q−d)} < p`; `None` when satisfied.
pub fn exponent_condition(p: f64, q: f64, d: f64) -> Option<String> {
    if !(q > d) {
        return Some(format!("q = {q} must exceed d = {d}"));
    }
    let a = 2.0 * q / (q - 1.0);
    let b = 2.0 * q / (2.0 * q - d);
    if !(a.max(b) < p) {
        return Some(format!("max{{2q/(q-1), 2q/(2q-d)}} = max{{{a:.4}, {b:.4}}} must be < p = {p} (d = {d})"));
    }
    None
}

impl ScenarioConfig {
    pub fn base_grid(&self) -> Result<Grid> {
        Grid::new(self.grid.nx, self.grid.ny, self.grid.extent)
    }

    pub fn steps(&self) -> usize {
        (self.time.horizon / self.time.dt).round() as usize
    }

    /// Fixed-point options with the configured norm exponents.
    pub fn fixed_point_options(&self) -> FixedPointOptions {
        FixedPointOptions { p: self.p, q: self.q, ..self.fixed_point.clone() }
    }

    pub fn diagnostics_options(&self) -> DiagnosticsOptions {
        DiagnosticsOptions { p: self.p, q: self.q, ..self.diagnostics.clone() }
    }

    /// Every problem found, or the warnings that remain once all checks pass.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut issues = Vec::new();
        let mut warnings = Vec::new();
        let mut bad = |msg: String| issues.push(ConfigIssue::InvalidParameter(msg));

        if self.name.trim().is_empty() {
            bad("name must not be empty".into());
        }
        let grid = match self.base_grid() {
            Ok(g) if self.grid.nx >= 4 && self.grid.ny >= 4 => Some(g),
            Ok(_) => {
                bad(format!("grid needs at least 4 cells per direction, got {}x{}", self.grid.nx, self.grid.ny));
                None
            }
            Err(e) => {
                bad(e.to_string());
                None
            }
        };
        if let Err(e) = self.problem.material.validate() {
            bad(format!("material: {e}"));
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.dt.is_finite()) {
            bad(format!("dt = {} must be positive", t.dt));
        } else {
            if !(t.horizon > 0.0 && t.horizon.is_finite()) {
                bad(format!("horizon = {} must be positive", t.horizon));
            } else if ((t.horizon / t.dt) - (t.horizon / t.dt).round()).abs() > 1e-6 {
                bad(format!("horizon {} is not a multiple of dt {}", t.horizon, t.dt));
            }
            if !(t.window >= t.dt) {
                bad(format!("window {} is shorter than dt {}", t.window, t.dt));
            }
        }
        let fp = &self.fixed_point;
        if !(fp.tol > 0.0) {
            bad(format!("fixed_point.tol = {} must be positive", fp.tol));
        }
        if fp.max_iter == 0 {
            bad("fixed_point.max_iter must be at least 1".into());
        }
        if !(fp.radius_factor >= 1.0) {
            bad(format!("fixed_point.radius_factor = {} must be >= 1", fp.radius_factor));
        }
        if !(fp.solver.tol > 0.0) || fp.solver.max_iter == 0 {
            bad("fixed_point.solver needs tol > 0 and max_iter >= 1".into());
        }
        for (name, r) in [("rho", fp.radii.rho), ("u", fp.radii.u), ("theta", fp.radii.theta), ("b", fp.radii.b), ("r0", fp.radii.r0)] {
            if let Some(r) = r {
                if !(r > 0.0) {
                    bad(format!("fixed_point.radii.{name} = {r} must be positive"));
                }
            }
        }
        if !(self.problem.boundary.inflow_threshold > 0.0) {
            bad(format!("boundary.inflow_threshold = {} must be positive", self.problem.boundary.inflow_threshold));
        }

        let mut profile_issues = Vec::new();
        let pd = &self.problem;
        pd.initial.rho.validate("initial.rho", &mut profile_issues);
        pd.initial.u.validate("initial.u", &mut profile_issues);
        pd.initial.theta.validate("initial.theta", &mut profile_issues);
        pd.initial.b.validate("initial.b", &mut profile_issues);
        pd.boundary.rho.validate("boundary.rho", &mut profile_issues);
        pd.boundary.u.validate("boundary.u", &mut profile_issues);
        pd.boundary.theta.validate("boundary.theta", &mut profile_issues);
        pd.boundary.b.validate("boundary.b", &mut profile_issues);
        pd.potential.validate("potential", &mut profile_issues);
        if let Some(e) = &pd.exact {
            e.rho.validate("exact.rho", &mut profile_issues);
            e.u.validate("exact.u", &mut profile_issues);
            e.theta.validate("exact.theta", &mut profile_issues);
            e.b.validate("exact.b", &mut profile_issues);
        }
        let profiles_ok = profile_issues.is_empty();
        issues.extend(profile_issues.into_iter().map(ConfigIssue::InvalidParameter));

        if let Some(p) = exponent_condition(self.p, self.q, EXPONENT_DIMENSION) {
            if self.override_exponent_check {
                warnings.push(format!("exponent condition overridden: {p}"));
            } else {
                issues.push(ConfigIssue::ExponentConditionViolated { p: self.p, q: self.q, detail: p });
            }
        }
        if 1.0 - 2.0 / self.p + 1.0 / self.q < 0.0 {
            warnings.push(format!("boundary-trace condition 1 - 2/p + 1/q >= 0 fails for p={}, q={}", self.p, self.q));
        }

        if let (Some(grid), true) = (grid, profiles_ok) {
            self.check_data(&grid, &mut issues);
        }
        if issues.is_empty() {
            Ok(warnings)
        } else {
            Err(Error::InvalidConfig(issues))
        }
    }

    fn check_data(&self, base: &Grid, issues: &mut Vec<ConfigIssue>) {
        let pd = &self.problem;
        let t0 = 0.0;
        let grid = match pd.classify(base, t0) {
            Ok(g) => g,
            Err(e) => {
                issues.push(ConfigIssue::InvalidParameter(format!("inflow classification: {e}")));
                return;
            }
        };
        let init = pd.initial_state(base, t0);
        let mut positive = |name: &str, min: f64| {
            if !(min > 0.0) {
                issues.push(ConfigIssue::InvalidParameter(format!("{name} must be positive (min {min:.3e})")));
            }
        };
        positive("initial density", init.rho.min());
        positive("initial temperature", init.theta.min());
        let nodes = grid.boundary();
        let steps = self.steps().max(1);
        let mut rho_b_min = f64::INFINITY;
        let mut theta_b_min = f64::INFINITY;
        for n in 0..=steps {
            let t = n as f64 * self.time.dt;
            for b in nodes {
                let (x, y) = (grid.x(b.i), grid.y(b.j));
                theta_b_min = theta_b_min.min(pd.boundary.theta.eval(t, x, y));
                if b.tag == FaceTag::Inflow {
                    rho_b_min = rho_b_min.min(pd.boundary.rho.eval(t, x, y));
                }
            }
        }
        if rho_b_min.is_finite() {
            positive("inflow density", rho_b_min);
        }
        positive("boundary temperature", theta_b_min);

        let mut compat = |condition: &str, mismatches: Vec<f64>| {
            let bad: Vec<f64> = mismatches.into_iter().filter(|&m| m > COMPATIBILITY_TOL).collect();
            if !bad.is_empty() {
                let max = bad.iter().copied().fold(0.0, f64::max);
                issues.push(ConfigIssue::CompatibilityViolated { condition: condition.into(), faces: bad.len(), max_mismatch: max });
            }
        };
        let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
        let at = |b: &crate::grid::BoundaryNode| (grid.x(b.i), grid.y(b.j));
        compat(
            "rho0 = rho_B(0) on inflow faces",
            nodes.iter().filter(|b| b.tag == FaceTag::Inflow).map(|b| rel(init.rho.values()[b.node], pd.boundary.rho.eval(t0, at(b).0, at(b).1))).collect(),
        );
        compat(
            "u0 = u_B(0) on the boundary",
            nodes
                .iter()
                .map(|b| {
                    let ub = pd.boundary.u.eval(t0, at(b).0, at(b).1);
                    let u0 = init.u.at(b.node);
                    (0..3).map(|c| rel(u0[c], ub[c])).fold(0.0, f64::max)
                })
                .collect(),
        );
        compat(
            "theta0 = theta_B(0) on the boundary",
            nodes.iter().map(|b| rel(init.theta.values()[b.node], pd.boundary.theta.eval(t0, at(b).0, at(b).1))).collect(),
        );
        compat(
            "B0 x n = b1(0) on the boundary",
            nodes
                .iter()
                .map(|b| {
                    let bb = pd.boundary.b.eval(t0, at(b).0, at(b).1);
                    let b0 = init.b.at(b.node);
                    b.sides
                        .iter()
                        .flat_map(|s| (0..3).filter(move |&c| c != s.normal_axis()))
                        .map(|c| rel(b0[c], bb[c]))
                        .fold(0.0, f64::max)
                })
                .collect(),
        );
        let div = (0..base.len())
            .map(|k| {
                let (x, y) = base.point(k);
                let bx = Jet::of_profile(pd.initial.b.component(0), t0, x, y);
                let by = Jet::of_profile(pd.initial.b.component(1), t0, x, y);
                (bx.x + by.y).abs()
            })
            .fold(0.0, f64::max);
        if div > DIVERGENCE_TOL {
            issues.push(ConfigIssue::InvalidParameter(format!("initial magnetic field is not divergence-free (max |div B0| = {div:.3e})")));
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<ScenarioConfig> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Parse and validate; returns the config and any warnings.
pub fn load_config(path: &Path) -> Result<(ScenarioConfig, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    let config = ScenarioConfig::from_json(&text)?;
    let warnings = config.validate()?;
    Ok((config, warnings))
}

pub fn write_config(config: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config.to_json()? + "\n")?;
    Ok(())
}
