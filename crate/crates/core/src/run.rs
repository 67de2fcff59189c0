//! Scenario runs: fixed-point advance, diagnostics, report and dumps, and
//! grid-refinement studies against an exact solution.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::diagnostics::{run_diagnostics, DiagnosticsReport};
use crate::dump;
use crate::error::{Error, Result};
use crate::field::{State, Trajectory};
use crate::fixed_point::{run_fixed_point, IterateRecord, WindowRecord};
use crate::grid::Grid;
use crate::norms::discrete_norm;

/// L² errors of the four fields against the exact solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FieldErrors {
    pub rho: f64,
    pub u: f64,
    pub theta: f64,
    pub b: f64,
}

impl FieldErrors {
    pub fn between(grid: &Grid, a: &State, b: &State) -> FieldErrors {
        let ds = |x: &crate::ScalarField, y: &crate::ScalarField| discrete_norm(grid, &x.zip_map(y, |p, q| p - q), 2.0, 0);
        let dv = |x: &crate::VectorField, y: &crate::VectorField| {
            discrete_norm(grid, &x.zip_map(y, |p, q| [p[0] - q[0], p[1] - q[1], p[2] - q[2]]), 2.0, 0)
        };
        FieldErrors { rho: ds(&a.rho, &b.rho), u: dv(&a.u, &b.u), theta: ds(&a.theta, &b.theta), b: dv(&a.b, &b.b) }
    }

    fn get(&self, field: usize) -> f64 {
        [self.rho, self.u, self.theta, self.b][field]
    }
}

/// The JSON run report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub converged: bool,
    pub final_time: f64,
    pub iterations: usize,
    pub shrinks: usize,
    pub iterates: Vec<IterateRecord>,
    pub windows: Vec<WindowRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsReport>,
    /// Errors at the final time, when the scenario has an exact solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_errors: Option<FieldErrors>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub success: bool,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory: Option<Trajectory>,
    pub base_grid: Grid,
}

impl RunOutcome {
    /// Converged and every mandatory diagnostic passed.
    pub fn success(&self) -> bool {
        self.report.success
    }
}

/// Directory for outputs: explicit argument, then the config, then `OPENMHD_OUT`.
pub fn output_dir(explicit: Option<&Path>, config: &ScenarioConfig) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output.directory.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("OPENMHD_OUT").map(PathBuf::from))
}

/// Validate, advance to the horizon, run the diagnostics and, with `out`,
/// write `report.json` and the field dumps. Failures of the advance itself
/// are recorded in the report rather than returned.
pub fn run_scenario(config: &ScenarioConfig, out: Option<&Path>) -> Result<RunOutcome> {
    let warnings = config.validate()?;
    let grid = config.base_grid()?;
    let problem = &config.problem;
    let start = problem.initial_state(&grid, 0.0);
    let opts = config.fixed_point_options();
    let t = &config.time;

    let mut report = RunReport {
        scenario: config.name.clone(),
        converged: false,
        final_time: 0.0,
        iterations: 0,
        shrinks: 0,
        iterates: Vec::new(),
        windows: Vec::new(),
        diagnostics: None,
        exact_errors: None,
        warnings,
        error: None,
        success: false,
    };
    let trajectory = match run_fixed_point(problem, &grid, start, t.horizon, t.dt, t.window, &opts) {
        Ok((trajectory, fp)) => {
            report.converged = fp.converged;
            report.final_time = fp.final_time;
            report.iterations = fp.iterations;
            report.shrinks = fp.shrinks;
            report.iterates = fp.iterates;
            report.windows = fp.windows;
            Some(trajectory)
        }
        Err(e) => {
            report.error = Some(e.to_string());
            None
        }
    };
    if let Some(traj) = trajectory.as_ref().filter(|tr| tr.len() >= 2) {
        match run_diagnostics(problem, &grid, &traj.states, &config.diagnostics_options()) {
            Ok(d) => report.diagnostics = Some(d),
            Err(e) => report.error = Some(format!("diagnostics: {e}")),
        }
        let last = traj.last();
        report.exact_errors = problem.exact_state(&grid, last.time).map(|ex| FieldErrors::between(&grid, last, &ex));
    }
    report.success = report.converged && report.error.is_none() && report.diagnostics.as_ref().is_some_and(|d| d.mandatory_pass());

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), report.to_json()? + "\n")?;
        if let Some(traj) = &trajectory {
            let cadence = config.output.cadence;
            let last = traj.len() - 1;
            for (level, state) in traj.states.iter().enumerate() {
                if level == last || (cadence > 0 && level % cadence == 0) {
                    dump::write_state(dir, &grid, state, level)?;
                }
            }
        }
    }
    Ok(RunOutcome { report, trajectory, base_grid: grid })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub dt: f64,
    pub converged: bool,
    pub errors: FieldErrors,
    /// Observed orders against the next coarser level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orders: Option<FieldErrors>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub scenario: String,
    pub levels: Vec<RefinementLevel>,
}

impl ConvergenceTable {
    pub fn render(&self) -> String {
        let mut out = format!("{:>6} {:>10} {:>10} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6} {:>11} {:>6}\n", "nx", "h", "dt", "err_rho", "ord", "err_u", "ord", "err_theta", "ord", "err_b", "ord");
        for l in &self.levels {
            out += &format!("{:>6} {:>10.4e} {:>10.4e}", l.nx, l.h, l.dt);
            for f in 0..4 {
                let ord = l.orders.map(|o| o.get(f)).filter(|o| o.is_finite()).map_or_else(|| "-".into(), |o| format!("{o:.2}"));
                out += &format!(" {:>11.4e} {:>6}", l.errors.get(f), ord);
            }
            out.push('\n');
        }
        out
    }
}

/// Refinement study ending at the configured resolution: level `k` of `n`
/// uses `2^(n-1-k)` times the configured grid spacing and time step. Errors
/// are measured at the horizon against the exact solution.
pub fn convergence_study(config: &ScenarioConfig, levels: usize) -> Result<ConvergenceTable> {
    if levels < 2 {
        return Err(Error::InvalidParameter("a refinement study needs at least 2 levels".into()));
    }
    if config.problem.exact.is_none() {
        return Err(Error::InvalidParameter(format!("scenario {} has no exact solution", config.name)));
    }
    let coarsest = 1usize << (levels - 1);
    if config.grid.nx % coarsest != 0 || config.grid.ny % coarsest != 0 || config.grid.nx / coarsest < 4 || config.grid.ny / coarsest < 4 {
        return Err(Error::InvalidParameter(format!("{}x{} cannot be coarsened {} times", config.grid.nx, config.grid.ny, levels - 1)));
    }
    let mut rows: Vec<RefinementLevel> = Vec::with_capacity(levels);
    for k in 0..levels {
        let f = 1usize << (levels - 1 - k);
        let mut cfg = config.clone();
        cfg.grid.nx /= f;
        cfg.grid.ny /= f;
        cfg.time.dt *= f as f64;
        let outcome = run_scenario(&cfg, None)?;
        let errors = outcome.report.exact_errors.ok_or_else(|| Error::InvalidParameter(format!("level {k} produced no trajectory")))?;
        let orders = rows.last().map(|prev| {
            let o = |a: f64, b: f64| (a / b).log2();
            FieldErrors { rho: o(prev.errors.rho, errors.rho), u: o(prev.errors.u, errors.u), theta: o(prev.errors.theta, errors.theta), b: o(prev.errors.b, errors.b) }
        });
        let grid = outcome.base_grid;
        rows.push(RefinementLevel { nx: cfg.grid.nx, ny: cfg.grid.ny, h: grid.hx.max(grid.hy), dt: cfg.time.dt, converged: outcome.report.converged, errors, orders });
    }
    Ok(ConvergenceTable { scenario: config.name.clone(), levels: rows })
}
