//! Checks run on a computed trajectory: density envelope, temperature minimum,
//! divergence of the magnetic field, mass balance, positivity and the a-priori
//! density estimates.

use serde::{Deserialize, Serialize};

use crate::data::ProblemData;
use crate::error::{Error, Result};
use crate::field::{ScalarField, State};
use crate::grid::{dot, Grid};
use crate::ops;
use crate::transport::{
    check_gradient_estimate, check_lp_estimate, cumulative_div_integral, density_minmax_bounds, div_sup_per_level, DensityBounds,
    DensityProblem, EstimateEntry,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Advisory checks are reported but do not affect the exit status.
    pub mandatory: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckEntry {
    fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64, pass: bool) -> Self {
        CheckEntry { name: name.into(), lhs, rhs, tolerance, pass, mandatory: true, note: None }
    }

    fn from_estimate(e: EstimateEntry) -> Self {
        CheckEntry { name: e.name, lhs: e.lhs, rhs: e.rhs, tolerance: e.tolerance, pass: e.pass, mandatory: true, note: e.note }
    }

    fn failed(name: &str, err: &Error) -> Self {
        CheckEntry { name: name.into(), lhs: f64::NAN, rhs: f64::NAN, tolerance: 0.0, pass: false, mandatory: true, note: Some(err.to_string()) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Series {
    pub times: Vec<f64>,
    pub rho_min: Vec<f64>,
    pub rho_max: Vec<f64>,
    pub rho_lower: Vec<f64>,
    pub rho_upper: Vec<f64>,
    pub theta_min: Vec<f64>,
    pub theta_bound: Vec<f64>,
    pub div_b_max: Vec<f64>,
    /// Per-step mass-balance residual (zero on the first level).
    pub mass_residual: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<CheckEntry>,
    pub series: Series,
}

impl DiagnosticsReport {
    pub fn mandatory_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.mandatory).all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsOptions {
    /// Scale of the data variation entering `tol_h = 5 (h + dt) · scale`.
    pub lipschitz_scale: f64,
    /// Overrides the temperature-minimum tolerance (otherwise `tol_h`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature_tol: Option<f64>,
    /// Overrides the density-envelope tolerance (otherwise `tol_h`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_tol: Option<f64>,
    /// `max|div B|` may grow by this many grid spacings.
    pub div_b_factor: f64,
    /// Mass-balance tolerance per unit time, relative to `(h + dt)·max|ρu|`.
    pub mass_factor: f64,
    /// Relative slack of the `L^p` and gradient estimates.
    pub estimate_tol: f64,
    /// Relative mismatch accepted by the advisory boundary identity.
    pub identity_tol: f64,
    pub p: f64,
    pub q: f64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            lipschitz_scale: 1.0,
            temperature_tol: None,
            density_tol: None,
            div_b_factor: 10.0,
            mass_factor: 20.0,
            estimate_tol: 1e-9,
            identity_tol: 0.25,
            p: 4.0,
            q: 4.0,
        }
    }
}

/// `ρ` within `[lower·(1 − tol), upper·(1 + tol)]` at every node and level.
pub fn check_density_minmax(states: &[State], bounds: &DensityBounds, tol_h: f64) -> CheckEntry {
    let mut worst = f64::NEG_INFINITY;
    for (n, s) in states.iter().enumerate() {
        let lo = bounds.lower[n];
        let hi = bounds.upper[n];
        worst = worst.max((lo - s.rho.min()) / lo).max((s.rho.max() - hi) / hi);
    }
    CheckEntry::new("density_minmax", worst, tol_h, tol_h, worst <= tol_h)
}

/// Lower bound of the temperature minimum principle on every level.
///
/// `bound(τ) = min{ min θ0 · e^{−A(0,τ)/cv}, min_{s ≤ τ} min θ_B(s) · e^{−A(s,τ)/cv} }`
/// with `A(s,τ)` the rectangle-rule integral of `‖div u‖∞` over `(s, τ)`.
pub fn temperature_bounds(times: &[f64], theta0_min: f64, theta_b_min: &[f64], div_sup: &[f64], cv: f64) -> Vec<f64> {
    let acc = cumulative_div_integral(times, div_sup);
    let mut out = Vec::with_capacity(times.len());
    for n in 0..times.len() {
        let decay = |s: usize| (-(acc[n] - acc[s]) / cv).exp();
        let mut bound = theta0_min * decay(0);
        for s in 0..=n {
            bound = bound.min(theta_b_min[s] * decay(s));
        }
        out.push(bound);
    }
    out
}

pub fn check_temperature_minimum(states: &[State], bounds: &[f64], tol: f64) -> CheckEntry {
    let worst = states.iter().zip(bounds).map(|(s, b)| b - s.theta.min()).fold(f64::NEG_INFINITY, f64::max);
    CheckEntry::new("temperature_minimum", worst, tol, tol, worst <= tol)
}

pub fn check_divergence_b(grid: &Grid, states: &[State], tol: f64) -> (CheckEntry, Vec<f64>) {
    let series: Vec<f64> = states.iter().map(|s| ops::divergence(grid, &s.b).max_abs()).collect();
    let lhs = series.iter().copied().fold(0.0, f64::max);
    let rhs = series[0] + tol;
    (CheckEntry::new("divergence_b", lhs, rhs, tol, lhs <= rhs), series)
}

/// Outward flux `∮ ρ u·n` with each side of a corner weighted separately.
fn boundary_flux(grid: &Grid, s: &State) -> f64 {
    let mut flux = 0.0;
    for b in grid.boundary() {
        let u = s.u.at(b.node);
        for &side in &b.sides {
            flux += grid.side_weight(b, side) * s.rho.values()[b.node] * dot(u, side.normal());
        }
    }
    flux
}

fn integral(grid: &Grid, f: &ScalarField) -> f64 {
    f.values().iter().enumerate().map(|(k, v)| grid.weight(k) * v).sum()
}

/// Per-step `|Δ∫ρ + dt·∮ρu·n − dt·∫f| / dt` with trapezoidal time averages.
pub fn mass_balance_series(grid: &Grid, states: &[State], forcing: Option<&[ScalarField]>) -> Vec<f64> {
    let mass: Vec<f64> = states.iter().map(|s| integral(grid, &s.rho)).collect();
    let flux: Vec<f64> = states.iter().map(|s| boundary_flux(grid, s)).collect();
    let source: Vec<f64> = match forcing {
        Some(f) => f.iter().map(|f| integral(grid, f)).collect(),
        None => vec![0.0; states.len()],
    };
    let mut out = vec![0.0];
    for n in 1..states.len() {
        let dt = states[n].time - states[n - 1].time;
        let r = mass[n] - mass[n - 1] + 0.5 * dt * (flux[n] + flux[n - 1]) - 0.5 * dt * (source[n] + source[n - 1]);
        out.push(r.abs() / dt);
    }
    out
}

pub fn check_mass_balance(grid: &Grid, states: &[State], forcing: Option<&[ScalarField]>, tol: f64) -> (CheckEntry, Vec<f64>) {
    let series = mass_balance_series(grid, states, forcing);
    let lhs = series.iter().copied().fold(0.0, f64::max);
    (CheckEntry::new("mass_balance", lhs, tol, tol, lhs <= tol), series)
}

pub fn positivity_scan(states: &[State]) -> CheckEntry {
    let rho = states.iter().map(|s| s.rho.min()).fold(f64::INFINITY, f64::min);
    let theta = states.iter().map(|s| s.theta.min()).fold(f64::INFINITY, f64::min);
    let lhs = rho.min(theta);
    CheckEntry::new("positivity", lhs, 0.0, 0.0, lhs > 0.0)
}

/// Density problem matching a computed trajectory, for the envelope and estimate monitors.
pub fn density_problem_of(problem: &ProblemData, base: &Grid, states: &[State]) -> Result<DensityProblem> {
    let t0 = states[0].time;
    let grid = problem.classify(base, t0)?;
    let times: Vec<f64> = states.iter().map(|s| s.time).collect();
    let rho_b = times
        .iter()
        .map(|&t| grid.boundary().iter().map(|b| problem.boundary.rho.eval(t, grid.x(b.i), grid.y(b.j))).collect())
        .collect();
    let forcing = if problem.has_forcing() {
        Some(times.iter().map(|&t| problem.forcing_fields(&grid, t).expect("forcing enabled").rho).collect())
    } else {
        None
    };
    Ok(DensityProblem { velocity: states.iter().map(|s| s.u.clone()).collect(), rho0: states[0].rho.clone(), rho_b, forcing, grid, times })
}

/// `5 (h + dt) · scale`.
pub fn default_tolerance(grid: &Grid, dt: f64, scale: f64) -> f64 {
    5.0 * (grid.hx.max(grid.hy) + dt) * scale
}

/// All checks on one trajectory.
pub fn run_diagnostics(problem: &ProblemData, base: &Grid, states: &[State], opts: &DiagnosticsOptions) -> Result<DiagnosticsReport> {
    if states.len() < 2 {
        return Err(Error::EmptyTrajectory);
    }
    let dt = states[1].time - states[0].time;
    let tol_h = default_tolerance(base, dt, opts.lipschitz_scale);
    let density = density_problem_of(problem, base, states)?;
    let grid = &density.grid;
    let times = density.times.clone();
    let rho: Vec<ScalarField> = states.iter().map(|s| s.rho.clone()).collect();
    let div_sup = div_sup_per_level(grid, &density.velocity);
    let mut checks = Vec::new();

    let bounds = density_minmax_bounds(&density, &div_sup);
    checks.push(check_density_minmax(states, &bounds, opts.density_tol.unwrap_or(tol_h)));

    let theta_b_min: Vec<f64> = times
        .iter()
        .map(|&t| grid.boundary().iter().map(|b| problem.boundary.theta.eval(t, grid.x(b.i), grid.y(b.j))).fold(f64::INFINITY, f64::min))
        .collect();
    let theta_bound = temperature_bounds(&times, states[0].theta.min(), &theta_b_min, &div_sup, problem.material.cv);
    checks.push(check_temperature_minimum(states, &theta_bound, opts.temperature_tol.unwrap_or(tol_h)));

    let h = base.hx.max(base.hy);
    let (div_check, div_b) = check_divergence_b(grid, states, opts.div_b_factor * h);
    checks.push(div_check);

    let flux_scale = states.iter().map(|s| s.rho.max_abs() * s.u.max_norm()).fold(0.0, f64::max).max(1.0);
    let (mass_check, mass) = check_mass_balance(grid, states, density.forcing.as_deref(), opts.mass_factor * (h + dt) * flux_scale);
    checks.push(mass_check);

    checks.push(positivity_scan(states));

    match check_lp_estimate(&density, &rho, opts.p, opts.estimate_tol) {
        Ok((lp, linf)) => {
            checks.push(CheckEntry::from_estimate(lp));
            checks.push(CheckEntry::from_estimate(linf));
        }
        Err(e) => checks.push(CheckEntry::failed("density_lp_estimate", &e)),
    }
    match check_gradient_estimate(&density, &rho, opts.p, opts.q, problem.boundary.inflow_threshold, opts.estimate_tol) {
        Ok((grad, identity)) => {
            checks.push(CheckEntry::from_estimate(grad));
            let rel = identity.relative();
            let mut entry = CheckEntry::new("density_boundary_identity", rel, opts.identity_tol, opts.identity_tol, rel <= opts.identity_tol);
            entry.mandatory = false;
            if grid.inflow_nodes().next().is_none() {
                entry.note = Some("no inflow faces".into());
            }
            checks.push(entry);
        }
        Err(e) => checks.push(CheckEntry::failed("density_gradient_estimate", &e)),
    }

    let series = Series {
        times,
        rho_min: states.iter().map(|s| s.rho.min()).collect(),
        rho_max: states.iter().map(|s| s.rho.max()).collect(),
        rho_lower: bounds.lower,
        rho_upper: bounds.upper,
        theta_min: states.iter().map(|s| s.theta.min()).collect(),
        theta_bound,
        div_b_max: div_b,
        mass_residual: mass,
    };
    Ok(DiagnosticsReport { checks, series })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;

    fn constant_states(grid: &Grid, n: usize, dt: f64) -> Vec<State> {
        (0..n)
            .map(|k| State {
                time: k as f64 * dt,
                rho: ScalarField::constant(grid, 1.0),
                u: VectorField::zeros(grid),
                theta: ScalarField::constant(grid, 1.0),
                b: VectorField::constant(grid, [0.3, 0.2, 0.1]),
            })
            .collect()
    }

    fn flat_bounds(n: usize) -> DensityBounds {
        DensityBounds { times: vec![0.0; n], lower: vec![1.0; n], upper: vec![1.0; n], m: 1.0, big_m: 1.0 }
    }

    #[test]
    fn minmax_examples() {
        let g = Grid::unit_square(8).unwrap();
        let mut s = constant_states(&g, 4, 0.1);
        assert!(check_density_minmax(&s, &flat_bounds(4), 0.0).pass);
        s[2].rho.values_mut()[10] = 1.5;
        assert!(!check_density_minmax(&s, &flat_bounds(4), 0.01).pass);
    }

    #[test]
    fn temperature_bound_examples() {
        let times = [0.0, 0.1, 0.2];
        assert_eq!(temperature_bounds(&times, 1.0, &[1.0; 3], &[0.0; 3], 1.0), vec![1.0; 3]);
        let b = temperature_bounds(&times, 1.0, &[5.0; 3], &[1.0; 3], 2.0);
        assert!((b[2] - (-0.1f64).exp()).abs() < 1e-15);
        let g = Grid::unit_square(4).unwrap();
        let mut s = constant_states(&g, 3, 0.1);
        assert!(check_temperature_minimum(&s, &[1.0; 3], 0.0).pass);
        s[1].theta.values_mut()[3] = -0.5;
        assert!(!check_temperature_minimum(&s, &[1.0; 3], 0.0).pass);
        assert!(!positivity_scan(&s).pass);
    }

    #[test]
    fn divergence_examples() {
        let g = Grid::unit_square(8).unwrap();
        let mut s = constant_states(&g, 3, 0.1);
        assert!(check_divergence_b(&g, &s, 1e-12).0.pass);
        s[2].b = VectorField::from_fn(&g, |x, _| [x, 0.0, 0.0]);
        assert!(!check_divergence_b(&g, &s, 0.5).0.pass);
    }

    #[test]
    fn mass_balance_of_rest_state_is_zero() {
        let g = Grid::unit_square(8).unwrap();
        let s = constant_states(&g, 5, 0.1);
        let (entry, series) = check_mass_balance(&g, &s, None, 0.0);
        assert!(entry.pass && series.iter().all(|&r| r == 0.0));
        assert!(positivity_scan(&s).pass);
    }
}
