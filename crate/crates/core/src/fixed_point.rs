//! Picard iteration of the coupled map over time windows.
//!
//! One sweep solves the four linear subproblems against a frozen iterate:
//! density from the velocity, temperature and magnetic field from the frozen
//! fields, velocity from all of them. Iterates are compared in the lower
//! topology `L∞L²` (density) plus `L²H¹` (velocity, temperature, field). A
//! window whose iteration stops contracting, leaves the ball or runs out of
//! iterations is halved and restarted from its initial state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ProblemData, WindowData};
use crate::error::{Error, Result};
use crate::field::{ScalarField, State, Trajectory, VectorField};
use crate::grid::Grid;
use crate::norms::{aggregate_in_time, discrete_norm, Components, TimeAggregation};
use crate::parabolic::{solve_induction, solve_momentum, solve_temperature, SolverOptions, StepCoefficients};
use crate::sparse::SolveStats;
use crate::transport::{solve_continuity, DensityProblem};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrdering {
    /// Every subproblem sees only the input iterate.
    #[default]
    Jacobi,
    /// Density, then field, then temperature, then velocity, each using the fresh results.
    GaussSeidel,
}

/// Optional fixed radii; missing ones are set from the first sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BallRadii {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
}

/// Smooth perturbation of the starting iterate, vanishing on the boundary and at the window start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub seed: u64,
    pub amplitude: f64,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn default_modes() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_shrinks: usize,
    pub ordering: SweepOrdering,
    pub solver: SolverOptions,
    /// Time exponent of the ball norms.
    pub p: f64,
    /// Space exponent of the ball norms.
    pub q: f64,
    pub radii: BallRadii,
    /// Radii not fixed in `radii` are this factor times the first sweep's norms.
    pub radius_factor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-8,
            max_iter: 30,
            max_shrinks: 6,
            ordering: SweepOrdering::Jacobi,
            solver: SolverOptions::default(),
            p: 4.0,
            q: 4.0,
            radii: BallRadii::default(),
            radius_factor: 2.0,
            perturbation: None,
        }
    }
}

/// The closed ball the iteration must stay in over one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallSpec {
    pub k_rho: f64,
    pub k_u: f64,
    pub k_theta: f64,
    pub k_b: f64,
    /// Density floor.
    pub r0: f64,
    pub window: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallNorms {
    pub rho: f64,
    pub u: f64,
    pub theta: f64,
    pub b: f64,
    pub rho_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BallMembership {
    pub rho: bool,
    pub u: bool,
    pub theta: bool,
    pub b: bool,
    pub floor: bool,
}

impl BallMembership {
    pub fn all(&self) -> bool {
        self.rho && self.u && self.theta && self.b && self.floor
    }
}

fn check_sampling(a: &[State], b: &[State]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if a.len() != b.len() {
        return Err(Error::MismatchedSampling(format!("{} vs {} levels", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if (x.time - y.time).abs() > 1e-12 * (1.0 + x.time.abs()) {
            return Err(Error::MismatchedSampling(format!("levels at t={} and t={}", x.time, y.time)));
        }
        if x.rho.shape() != y.rho.shape() {
            return Err(Error::MismatchedSampling("different grids".into()));
        }
    }
    Ok(())
}

/// `‖δρ‖_{L∞L²} + ‖δu‖_{L²H¹} + ‖δθ‖_{L²H¹} + ‖δB‖_{L²H¹}`.
pub fn lower_topology_distance(grid: &Grid, a: &[State], b: &[State]) -> Result<f64> {
    check_sampling(a, b)?;
    let times: Vec<f64> = a.iter().map(|s| s.time).collect();
    let mut rho = Vec::with_capacity(a.len());
    let (mut u, mut theta, mut mag) = (Vec::new(), Vec::new(), Vec::new());
    for (x, y) in a.iter().zip(b) {
        rho.push(discrete_norm(grid, &x.rho.zip_map(&y.rho, |p, q| p - q), 2.0, 0));
        u.push(discrete_norm(grid, &x.u.zip_map(&y.u, sub3), 2.0, 1));
        theta.push(discrete_norm(grid, &x.theta.zip_map(&y.theta, |p, q| p - q), 2.0, 1));
        mag.push(discrete_norm(grid, &x.b.zip_map(&y.b, sub3), 2.0, 1));
    }
    let sup = aggregate_in_time(&times, &rho, f64::INFINITY, TimeAggregation::SupTime)?;
    let l2 = |v: &[f64]| aggregate_in_time(&times, v, 2.0, TimeAggregation::LpTime);
    Ok(sup + l2(&u)? + l2(&theta)? + l2(&mag)?)
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// `L^p W^{2,q}` plus `‖∂t f‖_{L^p L^q}` (backward differences) of a field sequence.
fn parabolic_norm<F: Components>(grid: &Grid, times: &[f64], fields: &[F], p: f64, q: f64, rate: impl Fn(&F, &F, f64) -> F) -> Result<f64> {
    let space: Vec<f64> = fields.iter().map(|f| discrete_norm(grid, f, q, 2)).collect();
    let mut dt_norm = vec![0.0; fields.len()];
    for n in 1..fields.len() {
        dt_norm[n] = discrete_norm(grid, &rate(&fields[n], &fields[n - 1], times[n] - times[n - 1]), q, 0);
    }
    Ok(aggregate_in_time(times, &space, p, TimeAggregation::LpTime)? + aggregate_in_time(times, &dt_norm, p, TimeAggregation::LpTime)?)
}

/// Solution-space norms of an iterate.
pub fn ball_norms(grid: &Grid, states: &[State], p: f64, q: f64) -> Result<BallNorms> {
    if states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let times: Vec<f64> = states.iter().map(|s| s.time).collect();
    let rho: Vec<f64> = states.iter().map(|s| discrete_norm(grid, &s.rho, q, 1)).collect();
    let scalar_rate = |a: &ScalarField, b: &ScalarField, dt: f64| a.zip_map(b, |x, y| (x - y) / dt);
    let vector_rate = |a: &VectorField, b: &VectorField, dt: f64| a.zip_map(b, |x, y| sub3(x, y).map(|d| d / dt));
    let us: Vec<VectorField> = states.iter().map(|s| s.u.clone()).collect();
    let ths: Vec<ScalarField> = states.iter().map(|s| s.theta.clone()).collect();
    let bs: Vec<VectorField> = states.iter().map(|s| s.b.clone()).collect();
    Ok(BallNorms {
        rho: aggregate_in_time(&times, &rho, f64::INFINITY, TimeAggregation::SupTime)?,
        u: parabolic_norm(grid, &times, &us, p, q, vector_rate)?,
        theta: parabolic_norm(grid, &times, &ths, p, q, scalar_rate)?,
        b: parabolic_norm(grid, &times, &bs, p, q, vector_rate)?,
        rho_min: states.iter().map(|s| s.rho.min()).fold(f64::INFINITY, f64::min),
    })
}

pub fn check_ball_membership(grid: &Grid, states: &[State], ball: &BallSpec, p: f64, q: f64) -> Result<(BallMembership, BallNorms)> {
    let norms = ball_norms(grid, states, p, q)?;
    Ok((
        BallMembership {
            rho: norms.rho <= ball.k_rho,
            u: norms.u <= ball.k_u,
            theta: norms.theta <= ball.k_theta,
            b: norms.b <= ball.k_b,
            floor: norms.rho_min >= ball.r0,
        },
        norms,
    ))
}

/// Largest relative residuals and total iterations of the linear solves in one sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SweepResiduals {
    pub momentum: f64,
    pub temperature: f64,
    pub induction: f64,
    pub linear_iterations: usize,
}

impl SweepResiduals {
    fn add(slot: &mut f64, iterations: &mut usize, stats: &SolveStats) {
        *slot = slot.max(stats.residual);
        *iterations += stats.iterations;
    }
}

fn march_temperature(
    window: &WindowData,
    problem: &ProblemData,
    rho: &[ScalarField],
    velocity: &[VectorField],
    b: &[VectorField],
    theta0: &ScalarField,
    opts: &SolverOptions,
) -> Result<(Vec<ScalarField>, f64, usize)> {
    let dt = window.dt();
    let mut out = vec![theta0.clone()];
    let (mut res, mut its) = (0.0, 0);
    for n in 0..window.steps() {
        let coeffs = StepCoefficients { rho: &rho[n + 1], velocity: &velocity[n + 1], theta: &out[n], b: &b[n + 1], potential: &window.potential[n + 1] };
        let forcing = window.forcing(n + 1).map(|f| &f.theta);
        let (theta, stats) = solve_temperature(&window.grid, &problem.material, &coeffs, &out[n], &window.theta_b[n + 1], forcing, dt, opts)?;
        SweepResiduals::add(&mut res, &mut its, &stats);
        out.push(theta);
    }
    Ok((out, res, its))
}

fn march_induction(window: &WindowData, problem: &ProblemData, velocity: &[VectorField], b0: &VectorField, opts: &SolverOptions) -> Result<(Vec<VectorField>, f64, usize)> {
    let dt = window.dt();
    let mut out = vec![b0.clone()];
    let (mut res, mut its) = (0.0, 0);
    for n in 0..window.steps() {
        let forcing = window.forcing(n + 1).map(|f| &f.b);
        let (b, stats) = solve_induction(&window.grid, &problem.material, &velocity[n + 1], &out[n], &window.b_b[n + 1], forcing, dt, opts)?;
        SweepResiduals::add(&mut res, &mut its, &stats);
        out.push(b);
    }
    Ok((out, res, its))
}

fn march_momentum(
    window: &WindowData,
    problem: &ProblemData,
    rho: &[ScalarField],
    velocity: &[VectorField],
    theta: &[ScalarField],
    b: &[VectorField],
    opts: &SolverOptions,
) -> Result<(Vec<VectorField>, f64, usize)> {
    let dt = window.dt();
    let mut out = vec![velocity[0].clone()];
    let (mut res, mut its) = (0.0, 0);
    for n in 0..window.steps() {
        let coeffs = StepCoefficients { rho: &rho[n + 1], velocity: &velocity[n + 1], theta: &theta[n + 1], b: &b[n + 1], potential: &window.potential[n + 1] };
        let forcing = window.forcing(n + 1).map(|f| &f.u);
        let (u, stats) = solve_momentum(&window.grid, &problem.material, &coeffs, &out[n], &window.u_b[n + 1], forcing, dt, opts)?;
        SweepResiduals::add(&mut res, &mut its, &stats);
        out.push(u);
    }
    Ok((out, res, its))
}

/// One application of the coupled map to a window iterate.
///
/// With `floor` set, a density below it is reported as `DensityFloorViolated`.
pub fn picard_step(
    window: &WindowData,
    problem: &ProblemData,
    iterate: &[State],
    ordering: SweepOrdering,
    solver: &SolverOptions,
    floor: Option<f64>,
) -> Result<(Vec<State>, SweepResiduals)> {
    if iterate.len() != window.times.len() {
        return Err(Error::MismatchedSampling(format!("{} iterate levels for {} window levels", iterate.len(), window.times.len())));
    }
    let rho_in: Vec<ScalarField> = iterate.iter().map(|s| s.rho.clone()).collect();
    let u_in: Vec<VectorField> = iterate.iter().map(|s| s.u.clone()).collect();
    let theta_in: Vec<ScalarField> = iterate.iter().map(|s| s.theta.clone()).collect();
    let b_in: Vec<VectorField> = iterate.iter().map(|s| s.b.clone()).collect();

    let density = DensityProblem::from_window(window, u_in.clone(), rho_in[0].clone());
    let rho = solve_continuity(&density)?;
    if let Some(r0) = floor {
        let min = rho.iter().map(|r| r.min()).fold(f64::INFINITY, f64::min);
        if min < r0 {
            return Err(Error::DensityFloorViolated { min, floor: r0 });
        }
    }

    let (theta, b, u, residuals) = match ordering {
        SweepOrdering::Jacobi => {
            let ((t, m), v) = rayon::join(
                || {
                    rayon::join(
                        || march_temperature(window, problem, &rho_in, &u_in, &b_in, &theta_in[0], solver),
                        || march_induction(window, problem, &u_in, &b_in[0], solver),
                    )
                },
                || march_momentum(window, problem, &rho_in, &u_in, &theta_in, &b_in, solver),
            );
            let (t, m, v) = (t?, m?, v?);
            let r = SweepResiduals { momentum: v.1, temperature: t.1, induction: m.1, linear_iterations: t.2 + m.2 + v.2 };
            (t.0, m.0, v.0, r)
        }
        SweepOrdering::GaussSeidel => {
            let m = march_induction(window, problem, &u_in, &b_in[0], solver)?;
            let t = march_temperature(window, problem, &rho, &u_in, &m.0, &theta_in[0], solver)?;
            let v = march_momentum(window, problem, &rho, &u_in, &t.0, &m.0, solver)?;
            let r = SweepResiduals { momentum: v.1, temperature: t.1, induction: m.1, linear_iterations: t.2 + m.2 + v.2 };
            (t.0, m.0, v.0, r)
        }
    };
    let states = (0..window.times.len())
        .map(|n| State { time: window.times[n], rho: rho[n].clone(), u: u[n].clone(), theta: theta[n].clone(), b: b[n].clone() })
        .collect();
    Ok((states, residuals))
}

/// Constant extension of `start` over the window, optionally perturbed.
pub fn initial_iterate(grid: &Grid, start: &State, times: &[f64], perturbation: Option<&Perturbation>) -> Vec<State> {
    let mut states = Trajectory::constant_extension(start, times).states;
    let Some(p) = perturbation else { return states };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let e = grid.extent;
    let mut bump = |modes: usize| -> Vec<(f64, f64, f64)> {
        (0..modes).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(1..=3) as f64, rng.random_range(1..=3) as f64)).collect()
    };
    let shapes: Vec<Vec<(f64, f64, f64)>> = (0..8).map(|_| bump(p.modes)).collect();
    let eval = |s: &[(f64, f64, f64)], x: f64, y: f64| -> f64 {
        let (sx, sy) = ((x - e.x0) / e.width(), (y - e.y0) / e.height());
        s.iter().map(|&(a, k, l)| a * (std::f64::consts::PI * k * sx).sin() * (std::f64::consts::PI * l * sy).sin()).sum::<f64>() / p.modes.max(1) as f64
    };
    let (t0, t1) = (times[0], times[times.len() - 1]);
    for state in states.iter_mut().skip(1) {
        let w = p.amplitude * (state.time - t0) / (t1 - t0);
        for k in 0..grid.len() {
            let (x, y) = grid.point(k);
            let r = &mut state.rho.values_mut()[k];
            *r *= 1.0 + w * eval(&shapes[0], x, y);
            state.theta.values_mut()[k] *= 1.0 + w * eval(&shapes[1], x, y);
            let du = [w * eval(&shapes[2], x, y), w * eval(&shapes[3], x, y), w * eval(&shapes[4], x, y)];
            let db = [w * eval(&shapes[5], x, y), w * eval(&shapes[6], x, y), w * eval(&shapes[7], x, y)];
            let (u, b) = (state.u.at(k), state.b.at(k));
            state.u.set(k, [u[0] + du[0], u[1] + du[1], u[2] + du[2]]);
            state.b.set(k, [b[0] + db[0], b[1] + db[1], b[2] + db[2]]);
        }
    }
    states
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WindowOutcome {
    Converged,
    Shrunk,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterateRecord {
    pub window: usize,
    pub iterate: usize,
    pub distance: f64,
    /// `distance / previous distance`, from the second iterate on.
    pub ratio: Option<f64>,
    pub ball: BallMembership,
    pub norms: BallNorms,
    pub residuals: SweepResiduals,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRecord {
    pub start: f64,
    pub length: f64,
    pub steps: usize,
    pub outcome: WindowOutcome,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ball: Option<BallSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub converged: bool,
    pub final_time: f64,
    pub iterations: usize,
    pub shrinks: usize,
    pub iterates: Vec<IterateRecord>,
    pub windows: Vec<WindowRecord>,
}

impl FixedPointReport {
    /// `NoConvergence` unless every window converged up to the horizon.
    pub fn status(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NoConvergence { shrinks: self.shrinks })
        }
    }

    /// Contraction ratios recorded in one window.
    pub fn ratios(&self, window: usize) -> Vec<f64> {
        self.iterates.iter().filter(|r| r.window == window).filter_map(|r| r.ratio).collect()
    }

    pub fn converged_windows(&self) -> impl Iterator<Item = (usize, &WindowRecord)> {
        self.windows.iter().enumerate().filter(|(_, w)| w.outcome == WindowOutcome::Converged)
    }
}

enum WindowResult {
    Converged { states: Vec<State>, iterations: usize, ball: BallSpec },
    Failed { reason: String, iterations: usize, ball: Option<BallSpec> },
}

fn make_ball(first: &BallNorms, start: &State, window: (f64, f64), opts: &FixedPointOptions) -> BallSpec {
    let f = opts.radius_factor;
    let r = &opts.radii;
    // floor against zero norms (e.g. a state at rest) so the ball is never degenerate
    let radius = |fixed: Option<f64>, norm: f64| fixed.unwrap_or((f * norm).max(1e-12));
    BallSpec {
        k_rho: radius(r.rho, first.rho),
        k_u: radius(r.u, first.u),
        k_theta: radius(r.theta, first.theta),
        k_b: radius(r.b, first.b),
        r0: r.r0.unwrap_or(0.5 * start.rho.min()),
        window,
    }
}

fn iterate_window(
    grid: &Grid,
    window: &WindowData,
    problem: &ProblemData,
    start: &State,
    opts: &FixedPointOptions,
    index: usize,
    records: &mut Vec<IterateRecord>,
) -> Result<WindowResult> {
    let times = &window.times;
    let span = (times[0], times[times.len() - 1]);
    let mut iterate = initial_iterate(grid, start, times, opts.perturbation.as_ref());
    let floor = opts.radii.r0.unwrap_or(0.5 * start.rho.min());
    let mut previous: Option<f64> = None;
    let mut growing = 0;
    let mut ball: Option<BallSpec> = None;
    for k in 1..=opts.max_iter {
        let (next, residuals) = match picard_step(window, problem, &iterate, opts.ordering, &opts.solver, Some(floor)) {
            Ok(v) => v,
            Err(Error::DensityFloorViolated { min, floor }) => {
                return Ok(WindowResult::Failed { reason: format!("density {min:.4e} below floor {floor:.4e}"), iterations: k, ball });
            }
            Err(e @ (Error::LinearSolveDiverged { .. } | Error::NonPositiveDensityCoefficient { .. })) => {
                return Ok(WindowResult::Failed { reason: e.to_string(), iterations: k, ball });
            }
            Err(e) => return Err(e),
        };
        if next.iter().any(|s| !s.is_finite()) {
            return Ok(WindowResult::Failed { reason: "non-finite iterate".into(), iterations: k, ball });
        }
        let distance = lower_topology_distance(grid, &next, &iterate)?;
        let ratio = previous.map(|d| if d > 0.0 { distance / d } else { 0.0 });
        let norms = ball_norms(grid, &next, opts.p, opts.q)?;
        let spec = *ball.get_or_insert_with(|| make_ball(&norms, start, span, opts));
        let membership = BallMembership {
            rho: norms.rho <= spec.k_rho,
            u: norms.u <= spec.k_u,
            theta: norms.theta <= spec.k_theta,
            b: norms.b <= spec.k_b,
            floor: norms.rho_min >= spec.r0,
        };
        records.push(IterateRecord { window: index, iterate: k, distance, ratio, ball: membership, norms, residuals });
        if distance <= opts.tol {
            return Ok(WindowResult::Converged { states: next, iterations: k, ball: spec });
        }
        if !membership.all() {
            return Ok(WindowResult::Failed { reason: "iterate left the ball".into(), iterations: k, ball });
        }
        growing = if ratio.is_some_and(|r| r >= 1.0) { growing + 1 } else { 0 };
        if growing >= 2 {
            return Ok(WindowResult::Failed { reason: "contraction ratio >= 1 on two consecutive iterates".into(), iterations: k, ball });
        }
        previous = Some(distance);
        iterate = next;
    }
    Ok(WindowResult::Failed { reason: format!("no convergence within {} iterates", opts.max_iter), iterations: opts.max_iter, ball })
}

/// Advance `start` to `horizon` in windows of at most `window` with step `dt`.
pub fn run_fixed_point(
    problem: &ProblemData,
    grid: &Grid,
    start: State,
    horizon: f64,
    dt: f64,
    window: f64,
    opts: &FixedPointOptions,
) -> Result<(Trajectory, FixedPointReport)> {
    if !(dt > 0.0) || !(window > 0.0) || !(horizon > start.time) {
        return Err(Error::InvalidParameter(format!("need dt > 0, window > 0 and horizon > start (dt={dt}, window={window}, horizon={horizon})")));
    }
    let mut trajectory = Trajectory::new(vec![start])?;
    let mut report = FixedPointReport { converged: false, final_time: trajectory.last().time, iterations: 0, shrinks: 0, iterates: Vec::new(), windows: Vec::new() };
    let eps = 1e-9 * dt;
    let mut length = window;
    loop {
        let t0 = trajectory.last().time;
        let remaining = horizon - t0;
        if remaining <= eps {
            report.converged = true;
            break;
        }
        let steps = ((length.min(remaining) + eps) / dt).floor() as usize;
        if steps == 0 {
            report.windows.push(WindowRecord { start: t0, length, steps: 0, outcome: WindowOutcome::Failed, iterations: 0, reason: Some("window shorter than one time step".into()), ball: None });
            break;
        }
        let data = WindowData::build(problem, grid, t0, dt, steps)?;
        let index = report.windows.len();
        let result = iterate_window(grid, &data, problem, trajectory.last(), opts, index, &mut report.iterates)?;
        let span = steps as f64 * dt;
        match result {
            WindowResult::Converged { states, iterations, ball } => {
                report.iterations += iterations;
                report.windows.push(WindowRecord { start: t0, length: span, steps, outcome: WindowOutcome::Converged, iterations, reason: None, ball: Some(ball) });
                trajectory.extend(Trajectory::new(states)?);
            }
            WindowResult::Failed { reason, iterations, ball } => {
                report.iterations += iterations;
                let exhausted = report.shrinks >= opts.max_shrinks;
                let outcome = if exhausted { WindowOutcome::Failed } else { WindowOutcome::Shrunk };
                report.windows.push(WindowRecord { start: t0, length: span, steps, outcome, iterations, reason: Some(reason), ball });
                if exhausted {
                    break;
                }
                report.shrinks += 1;
                length = 0.5 * span;
            }
        }
    }
    report.final_time = trajectory.last().time;
    Ok((trajectory, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::MaterialParams;
    use crate::data::{BoundaryData, InitialData};
    use crate::profiles::{Profile, VectorProfile};

    fn stationary() -> ProblemData {
        let b = VectorProfile::constant([0.3, 0.2, 0.1]);
        ProblemData {
            material: MaterialParams::default(),
            initial: InitialData { rho: Profile::constant(1.0), u: VectorProfile::constant([0.0; 3]), theta: Profile::constant(1.0), b: b.clone() },
            boundary: BoundaryData { rho: Profile::constant(1.0), u: VectorProfile::constant([0.0; 3]), theta: Profile::constant(1.0), b, inflow_threshold: 0.5 },
            potential: Profile::constant(0.0),
            exact: None,
        }
    }

    fn random_state(grid: &Grid, t: f64, seed: f64) -> State {
        State {
            time: t,
            rho: ScalarField::from_fn(grid, |x, y| 1.0 + 0.1 * (seed * x + y).sin()),
            u: VectorField::from_fn(grid, |x, y| [(seed * y).cos(), x * y, 0.1 * seed]),
            theta: ScalarField::from_fn(grid, |x, _| 1.0 + seed * x),
            b: VectorField::from_fn(grid, |x, y| [x, seed * y, 0.0]),
        }
    }

    #[test]
    fn distance_examples() {
        let g = Grid::unit_square(8).unwrap();
        let a: Vec<State> = (0..4).map(|n| random_state(&g, 0.1 * n as f64, 1.0)).collect();
        assert_eq!(lower_topology_distance(&g, &a, &a).unwrap(), 0.0);
        let shifted: Vec<State> = a.iter().map(|s| State { rho: s.rho.map(|r| r + 0.25), ..s.clone() }).collect();
        assert!((lower_topology_distance(&g, &a, &shifted).unwrap() - 0.25).abs() < 1e-14);
        let short = &a[..3];
        assert!(matches!(lower_topology_distance(&g, &a, short), Err(Error::MismatchedSampling(_))));
    }

    #[test]
    fn distance_satisfies_triangle_inequality() {
        let g = Grid::unit_square(6).unwrap();
        let make = |seed: f64| -> Vec<State> { (0..3).map(|n| random_state(&g, 0.05 * n as f64, seed)).collect() };
        for (sa, sb, sc) in [(1.0, 2.0, 3.0), (0.3, -1.2, 2.5), (4.0, 4.1, -0.7)] {
            let (a, b, c) = (make(sa), make(sb), make(sc));
            let ab = lower_topology_distance(&g, &a, &b).unwrap();
            let bc = lower_topology_distance(&g, &b, &c).unwrap();
            let ac = lower_topology_distance(&g, &a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12 * (ab + bc));
        }
    }

    #[test]
    fn stationary_state_is_a_fixed_point() {
        let g = Grid::unit_square(8).unwrap();
        let p = stationary();
        let window = WindowData::build(&p, &g, 0.0, 0.01, 5).unwrap();
        let start = p.initial_state(&g, 0.0);
        let iterate = initial_iterate(&g, &start, &window.times, None);
        let (next, _) = picard_step(&window, &p, &iterate, SweepOrdering::Jacobi, &SolverOptions::default(), None).unwrap();
        assert!(lower_topology_distance(&g, &next, &iterate).unwrap() < 1e-9);

        let (traj, report) = run_fixed_point(&p, &g, start, 0.05, 0.01, 0.05, &FixedPointOptions::default()).unwrap();
        assert!(report.converged && report.iterations <= 2);
        assert!(report.status().is_ok());
        assert_eq!(traj.len(), 6);
    }

    #[test]
    fn ball_membership_examples() {
        let g = Grid::unit_square(8).unwrap();
        let p = stationary();
        let start = p.initial_state(&g, 0.0);
        let states = initial_iterate(&g, &start, &[0.0, 0.1, 0.2], None);
        let huge = BallSpec { k_rho: 1e9, k_u: 1e9, k_theta: 1e9, k_b: 1e9, r0: 0.5, window: (0.0, 0.2) };
        let (m, _) = check_ball_membership(&g, &states, &huge, 4.0, 4.0).unwrap();
        assert!(m.all());
        let mut dipped = states.clone();
        dipped[2].rho.values_mut()[30] = 0.25;
        let (m, _) = check_ball_membership(&g, &dipped, &huge, 4.0, 4.0).unwrap();
        assert!(!m.floor && m.u);
        let tiny = BallSpec { k_rho: 0.5, ..huge };
        assert!(!check_ball_membership(&g, &states, &tiny, 4.0, 4.0).unwrap().0.rho);
    }

    #[test]
    fn perturbation_respects_initial_and_boundary_values() {
        let g = Grid::unit_square(8).unwrap();
        let p = stationary();
        let start = p.initial_state(&g, 0.0);
        let times = [0.0, 0.05, 0.1];
        let pert = Perturbation { seed: 7, amplitude: 0.2, modes: 3 };
        let a = initial_iterate(&g, &start, &times, Some(&pert));
        let b = initial_iterate(&g, &start, &times, Some(&pert));
        assert_eq!(a, b);
        assert_eq!(a[0], start);
        for bnd in g.boundary() {
            assert!((a[2].u.at(bnd.node)[0]).abs() < 1e-14);
        }
        assert!(lower_topology_distance(&g, &a, &initial_iterate(&g, &start, &times, None)).unwrap() > 1e-3);
    }
}
