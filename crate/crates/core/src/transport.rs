//! Linear continuity equation `∂t ρ + v·∇ρ + ρ div v = f` with frozen velocity
//! and density prescribed on inflow faces.
//!
//! The primary scheme is semi-Lagrangian: each node is traced back along an
//! RK2 (midpoint) characteristic, the previous density is interpolated
//! bilinearly at the foot, and the compression factor `exp(−∫ div v)` is
//! applied with the midpoint rule. Characteristics that leave the domain pick
//! up the inflow trace at the crossing point and crossing time. A first-order
//! explicit upwind scheme is kept as an independent cross-check.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::WindowData;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::{dot, FaceTag, Grid, Side};
use crate::norms::discrete_seminorm;
use crate::ops::{self, interpolate, interpolate_vector, Axis};

/// Sub-stepping starts when `max|v|·dt / min(h)` exceeds this.
pub const CFL_SUBSTEP: f64 = 2.0;

/// Relative mismatch allowed between `ρ0` and `ρ_B(t0)` on inflow faces.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct DensityProblem {
    /// Grid whose face tags mark where `rho_b` is prescribed.
    pub grid: Grid,
    pub times: Vec<f64>,
    /// Frozen velocity on every level.
    pub velocity: Vec<VectorField>,
    pub rho0: ScalarField,
    /// Boundary density per level, indexed by boundary slot; read on inflow faces only.
    pub rho_b: Vec<Vec<f64>>,
    pub forcing: Option<Vec<ScalarField>>,
}

impl DensityProblem {
    pub fn from_window(window: &WindowData, velocity: Vec<VectorField>, rho0: ScalarField) -> Self {
        DensityProblem {
            grid: window.grid.clone(),
            times: window.times.clone(),
            velocity,
            rho0,
            rho_b: window.rho_b.clone(),
            forcing: window.forcing.as_ref().map(|f| f.iter().map(|l| l.rho.clone()).collect()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let levels = self.times.len();
        if levels < 2 {
            return Err(Error::EmptyTrajectory);
        }
        if self.velocity.len() != levels || self.rho_b.len() != levels {
            return Err(Error::MismatchedSampling(format!(
                "{levels} times, {} velocity levels, {} boundary levels",
                self.velocity.len(),
                self.rho_b.len()
            )));
        }
        if let Some(f) = &self.forcing {
            if f.len() != levels {
                return Err(Error::MismatchedSampling(format!("{} forcing levels for {levels} times", f.len())));
            }
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("time levels must increase strictly".into()));
        }
        if !self.rho0.matches(&self.grid) || self.velocity.iter().any(|v| !v.matches(&self.grid)) {
            return Err(Error::ShapeMismatch("density problem fields do not match the grid".into()));
        }
        if !(self.rho0.min() > 0.0) || !self.rho0.is_finite() {
            return Err(Error::NonPositiveData(format!("initial density min {:.3e}", self.rho0.min())));
        }
        let inflow: Vec<usize> = self.inflow_slots().collect();
        for level in &self.rho_b {
            if let Some(&s) = inflow.iter().find(|&&s| !(level[s] > 0.0)) {
                return Err(Error::NonPositiveData(format!("inflow density {:.3e} at boundary slot {s}", level[s])));
            }
        }
        for &s in &inflow {
            let node = self.grid.boundary()[s].node;
            let (a, b) = (self.rho0.values()[node], self.rho_b[0][s]);
            if (a - b).abs() > COMPATIBILITY_TOL * (1.0 + b.abs()) {
                return Err(Error::NonPositiveData(format!(
                    "initial density {a} differs from inflow density {b} at boundary slot {s}"
                )));
            }
        }
        Ok(())
    }

    pub fn inflow_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.grid.boundary().iter().enumerate().filter(|(_, b)| b.tag == FaceTag::Inflow).map(|(s, _)| s)
    }

    fn level_of(&self, t: f64) -> Result<(usize, f64)> {
        let n = self.times.len();
        let (t0, t1) = (self.times[0], self.times[n - 1]);
        let eps = 1e-9 * (t1 - t0).abs().max(1e-300);
        if t < t0 - eps || t > t1 + eps {
            return Err(Error::VelocityNotInterpolable { time: t, start: t0, end: t1 });
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let w = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        Ok((k, w))
    }
}

/// Velocity trajectory with linear interpolation in time and bilinear in space.
pub struct VelocityHistory<'a> {
    pub grid: &'a Grid,
    pub times: &'a [f64],
    pub fields: &'a [VectorField],
}

impl VelocityHistory<'_> {
    pub fn sample(&self, t: f64, x: f64, y: f64) -> Result<[f64; 3]> {
        let n = self.times.len();
        let (t0, t1) = (self.times[0], self.times[n - 1]);
        let eps = 1e-9 * (t1 - t0).abs().max(1e-300);
        if n == 0 || t < t0 - eps || t > t1 + eps {
            return Err(Error::VelocityNotInterpolable { time: t, start: t0, end: t1 });
        }
        if n == 1 {
            return Ok(interpolate_vector(self.grid, &self.fields[0], x, y));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let w = ((t - self.times[k]) / (self.times[k + 1] - self.times[k])).clamp(0.0, 1.0);
        let a = interpolate_vector(self.grid, &self.fields[k], x, y);
        if w == 0.0 {
            return Ok(a);
        }
        let b = interpolate_vector(self.grid, &self.fields[k + 1], x, y);
        Ok([0, 1, 2].map(|c| (1.0 - w) * a[c] + w * b[c]))
    }

    pub fn max_speed(&self) -> f64 {
        self.fields.iter().map(|v| v.max_norm()).fold(0.0, f64::max)
    }
}

/// Where a backward characteristic ends after one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Foot {
    Interior { x: f64, y: f64 },
    /// The path left the domain through `side` at `(x, y)` at time `time`.
    Boundary { side: Side, x: f64, y: f64, time: f64 },
}

/// One explicit midpoint step of `dX/ds = v(s, X)` backward from `(t, x)` over `dt`.
pub fn backtrack_characteristic(grid: &Grid, v: &VelocityHistory, x: f64, y: f64, t: f64, dt: f64) -> Result<Foot> {
    Ok(trace(grid, v, x, y, t, dt)?.0)
}

/// Foot plus the midpoint of the path (used for the compression integral).
fn trace(grid: &Grid, v: &VelocityHistory, x: f64, y: f64, t: f64, dt: f64) -> Result<(Foot, (f64, f64))> {
    let k1 = v.sample(t, x, y)?;
    let (xm, ym) = (x - 0.5 * dt * k1[0], y - 0.5 * dt * k1[1]);
    let k2 = v.sample(t - 0.5 * dt, xm, ym)?;
    let (fx, fy) = (x - dt * k2[0], y - dt * k2[1]);
    let eps = 1e-12 * grid.min_spacing();
    if grid.contains(fx, fy, eps) {
        return Ok((Foot::Interior { x: fx, y: fy }, (xm, ym)));
    }
    let e = &grid.extent;
    let (dx, dy) = (fx - x, fy - y);
    let mut best: Option<(f64, Side)> = None;
    let mut consider = |s: f64, side: Side| {
        if (0.0..=1.0).contains(&s) && best.is_none_or(|(b, _)| s < b) {
            best = Some((s, side));
        }
    };
    if fx < e.x0 && dx != 0.0 {
        consider((e.x0 - x) / dx, Side::Left);
    }
    if fx > e.x1 && dx != 0.0 {
        consider((e.x1 - x) / dx, Side::Right);
    }
    if fy < e.y0 && dy != 0.0 {
        consider((e.y0 - y) / dy, Side::Bottom);
    }
    if fy > e.y1 && dy != 0.0 {
        consider((e.y1 - y) / dy, Side::Top);
    }
    let (s, side) = best.unwrap_or((0.0, Side::Left));
    let cx = (x + s * dx).clamp(e.x0, e.x1);
    let cy = (y + s * dy).clamp(e.y0, e.y1);
    Ok((Foot::Boundary { side, x: cx, y: cy, time: t - s * dt }, (0.5 * (x + cx), 0.5 * (y + cy))))
}

/// Boundary slots bracketing a point on one side, with the linear weight of the second.
fn face_segment(grid: &Grid, side: Side, x: f64, y: f64) -> (usize, usize, f64) {
    let (coord, n) = match side {
        Side::Left | Side::Right => ((y - grid.extent.y0) / grid.hy, grid.ny),
        Side::Bottom | Side::Top => ((x - grid.extent.x0) / grid.hx, grid.nx),
    };
    let a = (coord.floor().max(0.0) as usize).min(n - 1);
    let w = (coord - a as f64).clamp(0.0, 1.0);
    let node = |k: usize| match side {
        Side::Left => grid.idx(0, k),
        Side::Right => grid.idx(grid.nx, k),
        Side::Bottom => grid.idx(k, 0),
        Side::Top => grid.idx(k, grid.ny),
    };
    let slot = |node: usize| grid.slot(node).expect("boundary node");
    (slot(node(a)), slot(node(a + 1)), w)
}

struct StepContext<'a> {
    problem: &'a DensityProblem,
    history: VelocityHistory<'a>,
    div: Vec<Vec<f64>>,
    slot_of: Vec<Option<usize>>,
}

impl StepContext<'_> {
    fn div_at(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let (k, w) = self.problem.level_of(t)?;
        let g = &self.problem.grid;
        let a = interpolate(g, &self.div[k], x, y);
        Ok(if w == 0.0 { a } else { (1.0 - w) * a + w * interpolate(g, &self.div[k + 1], x, y) })
    }

    fn forcing_at(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        let Some(f) = &self.problem.forcing else { return Ok(0.0) };
        let (k, w) = self.problem.level_of(t)?;
        let g = &self.problem.grid;
        let a = interpolate(g, f[k].values(), x, y);
        Ok(if w == 0.0 { a } else { (1.0 - w) * a + w * interpolate(g, f[k + 1].values(), x, y) })
    }

    fn rho_b_at(&self, t: f64, slot: usize) -> Result<f64> {
        let (k, w) = self.problem.level_of(t)?;
        let b = &self.problem.rho_b;
        Ok((1.0 - w) * b[k][slot] + w * b[k + 1][slot])
    }

    fn inflow_density(&self, side: Side, x: f64, y: f64, t: f64) -> Result<Option<f64>> {
        let g = &self.problem.grid;
        let (sa, sb, w) = face_segment(g, side, x, y);
        let ia = g.boundary()[sa].tag == FaceTag::Inflow;
        let ib = g.boundary()[sb].tag == FaceTag::Inflow;
        Ok(match (ia, ib) {
            (true, true) => Some((1.0 - w) * self.rho_b_at(t, sa)? + w * self.rho_b_at(t, sb)?),
            (true, false) => Some(self.rho_b_at(t, sa)?),
            (false, true) => Some(self.rho_b_at(t, sb)?),
            (false, false) => None,
        })
    }

    /// Density at node `k` and time `tb` from the density `prev` at `tb − dt`.
    fn node_update(&self, k: usize, prev: &[f64], tb: f64, dt: f64) -> Result<f64> {
        let g = &self.problem.grid;
        if let Some(slot) = self.slot_of[k] {
            if g.boundary()[slot].tag == FaceTag::Inflow {
                return self.rho_b_at(tb, slot);
            }
        }
        let (x, y) = g.point(k);
        let (foot, (xm, ym)) = trace(g, &self.history, x, y, tb, dt)?;
        let (base, span, tm) = match foot {
            Foot::Interior { x: fx, y: fy } => (interpolate(g, prev, fx, fy), dt, tb - 0.5 * dt),
            Foot::Boundary { side, x: cx, y: cy, time } => match self.inflow_density(side, cx, cy, time)? {
                Some(rb) => (rb, tb - time, 0.5 * (tb + time)),
                None => {
                    let vc = self.history.sample(time, cx, cy)?;
                    let un = dot(vc, side.normal());
                    if un < -1e-8 * (1.0 + vc[0].abs() + vc[1].abs()) {
                        return Err(Error::CharacteristicEntersThroughNonInflow { x, y, side, tag: g.tag(g.nearest_on_side(side, cx, cy).node).unwrap_or(FaceTag::Wall) });
                    }
                    // grazing path on a wall: stay on the boundary
                    (interpolate(g, prev, cx, cy), dt, tb - 0.5 * dt)
                }
            },
        };
        let decay = (-span * self.div_at(tm, xm, ym)?).exp();
        let source = span * self.forcing_at(tm, xm, ym)? * decay.sqrt();
        Ok(base * decay + source)
    }
}

fn node_slots(grid: &Grid) -> Vec<Option<usize>> {
    (0..grid.len()).map(|k| grid.slot(k)).collect()
}

/// Number of equal sub-steps used for one step of length `dt`.
pub fn substeps(grid: &Grid, max_speed: f64, dt: f64) -> usize {
    let cfl = max_speed * dt / grid.min_spacing();
    if cfl > CFL_SUBSTEP {
        (cfl / CFL_SUBSTEP).ceil() as usize
    } else {
        1
    }
}

/// Semi-Lagrangian solve; returns the density on every level of the problem.
pub fn solve_continuity(problem: &DensityProblem) -> Result<Vec<ScalarField>> {
    problem.validate()?;
    let grid = &problem.grid;
    let ctx = StepContext {
        problem,
        history: VelocityHistory { grid, times: &problem.times, fields: &problem.velocity },
        div: problem.velocity.iter().map(|v| ops::divergence(grid, v).into_vec()).collect(),
        slot_of: node_slots(grid),
    };
    let mut out = Vec::with_capacity(problem.times.len());
    out.push(problem.rho0.clone());
    let mut current = problem.rho0.values().to_vec();
    for n in 0..problem.times.len() - 1 {
        let (ta, tb) = (problem.times[n], problem.times[n + 1]);
        let speed = problem.velocity[n].max_norm().max(problem.velocity[n + 1].max_norm());
        let m = substeps(grid, speed, tb - ta);
        let sub = (tb - ta) / m as f64;
        for s in 1..=m {
            let t = if s == m { tb } else { ta + s as f64 * sub };
            let next: Result<Vec<f64>> =
                (0..grid.len()).into_par_iter().with_min_len(64).map(|k| ctx.node_update(k, &current, t, sub)).collect();
            current = next?;
        }
        out.push(ScalarField::from_vec(grid, current.clone())?);
    }
    Ok(out)
}

/// Explicit first-order upwind solve, sub-stepped to a Courant number of 1/2.
pub fn solve_continuity_upwind(problem: &DensityProblem) -> Result<Vec<ScalarField>> {
    problem.validate()?;
    let grid = &problem.grid;
    let slot_of = node_slots(grid);
    let divs: Vec<Vec<f64>> = problem.velocity.iter().map(|v| ops::divergence(grid, v).into_vec()).collect();
    let mut out = vec![problem.rho0.clone()];
    let mut rho = problem.rho0.values().to_vec();
    let (ni, nx, ny) = (grid.ni(), grid.nx, grid.ny);
    for n in 0..problem.times.len() - 1 {
        let (ta, tb) = (problem.times[n], problem.times[n + 1]);
        let dt = tb - ta;
        let vmax = problem.velocity[n].max_norm().max(problem.velocity[n + 1].max_norm());
        let dmax = divs[n].iter().chain(&divs[n + 1]).fold(0.0f64, |m, d| m.max(d.abs()));
        let rate = vmax / grid.min_spacing() + dmax;
        let m = ((rate * dt / 0.5).ceil() as usize).max(1);
        let sub = dt / m as f64;
        for s in 0..m {
            let t = ta + s as f64 * sub;
            let w = (t - ta) / dt;
            let t_next = ta + (s + 1) as f64 * sub;
            let w_next = (t_next - ta) / dt;
            let next: Vec<f64> = (0..grid.len())
                .map(|k| {
                    if let Some(slot) = slot_of[k] {
                        if grid.boundary()[slot].tag == FaceTag::Inflow {
                            return (1.0 - w_next) * problem.rho_b[n][slot] + w_next * problem.rho_b[n + 1][slot];
                        }
                    }
                    let (i, j) = grid.ij(k);
                    let v = [0, 1].map(|c| (1.0 - w) * problem.velocity[n].component(c)[k] + w * problem.velocity[n + 1].component(c)[k]);
                    let div = (1.0 - w) * divs[n][k] + w * divs[n + 1][k];
                    let upwind = |vel: f64, p: usize, last: usize, stride: usize, h: f64| -> f64 {
                        let back = vel > 0.0 && p > 0 || p == last;
                        if vel == 0.0 {
                            0.0
                        } else if back {
                            vel * (rho[k] - rho[k - stride]) / h
                        } else {
                            vel * (rho[k + stride] - rho[k]) / h
                        }
                    };
                    let adv = upwind(v[0], i, nx, 1, grid.hx) + upwind(v[1], j, ny, ni, grid.hy);
                    let f = problem.forcing.as_ref().map_or(0.0, |f| (1.0 - w) * f[n].values()[k] + w * f[n + 1].values()[k]);
                    rho[k] - sub * (adv + rho[k] * div - f)
                })
                .collect();
            rho = next;
        }
        out.push(ScalarField::from_vec(grid, rho.clone())?);
    }
    Ok(out)
}

/// `max_x |div v|` on every level.
pub fn div_sup_per_level(grid: &Grid, velocity: &[VectorField]) -> Vec<f64> {
    velocity.iter().map(|v| ops::divergence(grid, v).max_abs()).collect()
}

/// Cumulative `∫_0^{t_n} ‖div v‖_∞`, each step using the larger of its two end levels.
pub fn cumulative_div_integral(times: &[f64], div_sup: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; times.len()];
    for n in 1..times.len() {
        acc[n] = acc[n - 1] + (times[n] - times[n - 1]) * div_sup[n - 1].max(div_sup[n]);
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityBounds {
    pub times: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `min{min ρ0, min ρ_B}` and `max{max ρ0, max ρ_B}`.
    pub m: f64,
    pub big_m: f64,
}

/// Streamline envelope `m·exp(−∫‖div v‖∞) ≤ ρ ≤ M·exp(∫‖div v‖∞)`.
pub fn density_minmax_bounds(problem: &DensityProblem, div_sup: &[f64]) -> DensityBounds {
    let mut m = problem.rho0.min();
    let mut big_m = problem.rho0.max();
    for s in problem.inflow_slots() {
        for level in &problem.rho_b {
            m = m.min(level[s]);
            big_m = big_m.max(level[s]);
        }
    }
    let acc = cumulative_div_integral(&problem.times, div_sup);
    DensityBounds {
        times: problem.times.clone(),
        lower: acc.iter().map(|a| m * (-a).exp()).collect(),
        upper: acc.iter().map(|a| big_m * a.exp()).collect(),
        m,
        big_m,
    }
}

/// One inequality `lhs ≤ factor·rhs·(1 + tolerance)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateEntry {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EstimateEntry {
    fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        EstimateEntry { name: name.into(), lhs, rhs, ratio, tolerance, pass: lhs <= rhs * (1.0 + tolerance), note: None }
    }
}

fn boundary_normal_speed(problem: &DensityProblem, level: usize, slot: usize) -> f64 {
    let b = &problem.grid.boundary()[slot];
    dot(problem.velocity[level].at(b.node), b.normal())
}

/// The `L^p` estimate of the density and its `p → ∞` variant.
pub fn check_lp_estimate(problem: &DensityProblem, rho: &[ScalarField], p: f64, tol: f64) -> Result<(EstimateEntry, EstimateEntry)> {
    if rho.len() != problem.times.len() {
        return Err(Error::MismatchedSampling(format!("{} density levels for {} times", rho.len(), problem.times.len())));
    }
    let grid = &problem.grid;
    let times = &problem.times;
    let levels = times.len();
    let lp = |f: &[f64]| -> f64 { (0..f.len()).map(|k| grid.weight(k) * f[k].abs().powf(p)).sum::<f64>().powf(1.0 / p) };
    let div_sup = div_sup_per_level(grid, &problem.velocity);
    let growth = cumulative_div_integral(times, &div_sup)[levels - 1].exp();
    let nb = grid.boundary().len();

    let mut boundary = 0.0;
    let mut boundary_sup = 0.0f64;
    for n in 1..levels {
        let dt = times[n] - times[n - 1];
        for s in 0..nb {
            let un = boundary_normal_speed(problem, n, s);
            if un < 0.0 {
                let w = grid.boundary_weight(&grid.boundary()[s]);
                boundary += dt * w * problem.rho_b[n][s].abs().powf(p) * (-un);
                boundary_sup = boundary_sup.max(problem.rho_b[n][s].abs());
            }
        }
    }
    for s in 0..nb {
        if boundary_normal_speed(problem, 0, s) < 0.0 {
            boundary_sup = boundary_sup.max(problem.rho_b[0][s].abs());
        }
    }
    let (mut k1_p, mut k1_inf) = (0.0, 0.0);
    if let Some(f) = &problem.forcing {
        for n in 1..levels {
            let dt = times[n] - times[n - 1];
            k1_p += dt * lp(f[n].values());
            k1_inf += dt * f[n].max_abs();
        }
    }
    let lhs_p = rho.iter().map(|r| lp(r.values())).fold(0.0, f64::max);
    let rhs_p = (lp(problem.rho0.values()) + boundary.powf(1.0 / p) + k1_p) * growth;
    let lhs_inf = rho.iter().map(|r| r.max_abs()).fold(0.0, f64::max);
    let rhs_inf = (problem.rho0.max_abs() + boundary_sup + k1_inf) * growth;
    Ok((EstimateEntry::new("density_lp_estimate", lhs_p, rhs_p, tol), EstimateEntry::new("density_linf_estimate", lhs_inf, rhs_inf, tol)))
}

/// Hidden constant of the gradient estimate. Calibrated on the built-in
/// scenarios: with 1 the largest observed `lhs/rhs` is 0.36 (joule-box).
pub const GRADIENT_ESTIMATE_CONSTANT: f64 = 1.0;

/// Normal-derivative reconstruction on inflow faces compared with one-sided
/// differences of the computed density.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryIdentity {
    /// `‖∂n ρ − reconstruction‖` in `L^q(0,T; L^q(Γ_in))`.
    pub mismatch: f64,
    /// `‖reconstruction‖` in the same norm.
    pub reference: f64,
    /// Largest pointwise mismatch over levels after the first.
    pub max_mismatch: f64,
}

impl BoundaryIdentity {
    pub fn relative(&self) -> f64 {
        if self.reference > 0.0 {
            self.mismatch / self.reference
        } else {
            self.mismatch
        }
    }
}

/// Neighbouring boundary slots of `slot` along its own side.
fn side_neighbours(grid: &Grid, slot: usize) -> (Option<usize>, Option<usize>, f64) {
    let b = &grid.boundary()[slot];
    let side = b.side;
    let (k, n, h) = match side {
        Side::Left | Side::Right => (b.j, grid.ny, grid.hy),
        Side::Bottom | Side::Top => (b.i, grid.nx, grid.hx),
    };
    let node = |k: usize| match side {
        Side::Left => grid.idx(0, k),
        Side::Right => grid.idx(grid.nx, k),
        Side::Bottom => grid.idx(k, 0),
        Side::Top => grid.idx(k, grid.ny),
    };
    let find = |node: usize| grid.slot(node);
    let prev = if k > 0 { find(node(k - 1)) } else { None };
    let next = if k < n { find(node(k + 1)) } else { None };
    (prev, next, h)
}

/// Derivative of a boundary trace along the side of `slot`, in the direction of increasing x or y.
pub(crate) fn tangential_derivative(grid: &Grid, trace: &[f64], slot: usize) -> f64 {
    match side_neighbours(grid, slot) {
        (Some(a), Some(b), h) => (trace[b] - trace[a]) / (2.0 * h),
        (None, Some(b), h) => (trace[b] - trace[slot]) / h,
        (Some(a), None, h) => (trace[slot] - trace[a]) / h,
        (None, None, _) => 0.0,
    }
}

fn tangent(side: Side) -> [f64; 3] {
    match side {
        Side::Left | Side::Right => [0.0, 1.0, 0.0],
        Side::Bottom | Side::Top => [1.0, 0.0, 0.0],
    }
}

/// The higher-order density estimate, with its boundary-trace identity.
///
/// `p` only enters the annotation of the boundary-trace exponent condition.
pub fn check_gradient_estimate(
    problem: &DensityProblem,
    rho: &[ScalarField],
    p: f64,
    q: f64,
    threshold: f64,
    tol: f64,
) -> Result<(EstimateEntry, BoundaryIdentity)> {
    if rho.len() != problem.times.len() {
        return Err(Error::MismatchedSampling(format!("{} density levels for {} times", rho.len(), problem.times.len())));
    }
    let grid = &problem.grid;
    let times = &problem.times;
    let levels = times.len();
    let inflow: Vec<usize> = problem.inflow_slots().collect();
    for n in 0..levels {
        for &s in &inflow {
            let speed = -boundary_normal_speed(problem, n, s);
            if speed < threshold * (1.0 - 1e-9) {
                return Err(Error::InflowSpeedBelowThreshold { speed, threshold });
            }
        }
    }
    let lhs = rho.iter().map(|r| discrete_seminorm(grid, r, q, 1).powf(q)).fold(0.0, f64::max);

    let divs: Vec<ScalarField> = problem.velocity.iter().map(|v| ops::divergence(grid, v)).collect();
    let div_sup: Vec<f64> = divs.iter().map(|d| d.max_abs()).collect();
    let mut exponent = cumulative_div_integral(times, &div_sup)[levels - 1];
    let mut source = 0.0;
    for n in 1..levels {
        let dt = times[n] - times[n - 1];
        let v = &problem.velocity[n];
        exponent += dt * discrete_seminorm(grid, v, f64::INFINITY, 1);
        source += dt * discrete_seminorm(grid, v, q, 2) * rho[n].max_abs();
    }

    let (mut vn_sup, mut v_sup, mut rb_sup) = (0.0f64, 0.0f64, 0.0f64);
    let (mut rb_q, mut rbt_q, mut rb_w1q, mut div_q) = (0.0, 0.0, 0.0, 0.0);
    let (mut mis_q, mut ref_q, mut mis_max) = (0.0, 0.0, 0.0f64);
    for n in 0..levels {
        for &s in &inflow {
            let b = &grid.boundary()[s];
            let v = problem.velocity[n].at(b.node);
            vn_sup = vn_sup.max(dot(v, b.normal()).abs());
            v_sup = v_sup.max(v[0].abs().max(v[1].abs()).max(v[2].abs()));
            rb_sup = rb_sup.max(problem.rho_b[n][s].abs());
        }
    }
    for n in 1..levels {
        let dt = times[n] - times[n - 1];
        let gx = ops::partial(grid, rho[n].values(), Axis::X);
        let gy = ops::partial(grid, rho[n].values(), Axis::Y);
        for &s in &inflow {
            let b = &grid.boundary()[s];
            let w = grid.boundary_weight(b);
            let rb = problem.rho_b[n][s];
            let rbt = (problem.rho_b[n][s] - problem.rho_b[n - 1][s]) / dt;
            let rbs = tangential_derivative(grid, &problem.rho_b[n], s);
            let dv = divs[n].values()[b.node];
            rb_q += dt * w * rb.abs().powf(q);
            rbt_q += dt * w * rbt.abs().powf(q);
            rb_w1q += dt * w * (rb.abs().powf(q) + rbs.abs().powf(q));
            div_q += dt * w * dv.abs().powf(q);
            if !b.is_corner() {
                let v = problem.velocity[n].at(b.node);
                let normal = b.normal();
                let vn = dot(v, normal);
                let recon = -(rbt + dot(v, tangent(b.side)) * rbs + rb * dv) / vn;
                let measured = normal[0] * gx[b.node] + normal[1] * gy[b.node];
                let d = measured - recon;
                mis_q += dt * w * d.abs().powf(q);
                ref_q += dt * w * recon.abs().powf(q);
                mis_max = mis_max.max(d.abs());
            }
        }
    }
    let braces = discrete_seminorm(grid, &problem.rho0, q, 1).powf(q)
        + vn_sup * rb_q
        + rbt_q
        + v_sup.powf(q) * rb_w1q
        + div_q * rb_sup.powf(q);
    // y ≤ a + ∫ b·y + ∫ c·y^{1-1/q} closed by Gronwall–Perov: the source enters additively in y^{1/q}
    let rhs = GRADIENT_ESTIMATE_CONSTANT * exponent.exp() * (braces.powf(1.0 / q) + source).powf(q);
    let mut entry = EstimateEntry::new("density_gradient_estimate", lhs, rhs, tol);
    if 1.0 - 2.0 / p + 1.0 / q < 0.0 {
        entry.note = Some(format!("boundary-trace condition 1 - 2/p + 1/q >= 0 fails for p={p}, q={q}"));
    }
    let identity = BoundaryIdentity { mismatch: mis_q.powf(1.0 / q), reference: ref_q.powf(1.0 / q), max_mismatch: mis_max };
    Ok((entry, identity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Extent;

    fn uniform_velocity(grid: &Grid, v: [f64; 3], levels: usize) -> Vec<VectorField> {
        vec![VectorField::constant(grid, v); levels]
    }

    fn times(dt: f64, steps: usize) -> Vec<f64> {
        (0..=steps).map(|n| n as f64 * dt).collect()
    }

    fn translation_problem(n: usize, dt: f64, horizon: f64, rho0: impl Fn(f64) -> f64) -> DensityProblem {
        let base = Grid::unit_square(n).unwrap();
        let grid = base.classify_boundary(|_, _| [1.0, 0.0, 0.0], 0.5).unwrap();
        let steps = (horizon / dt).round() as usize;
        let ts = times(dt, steps);
        let rho_b = ts.iter().map(|&t| grid.boundary().iter().map(|_| 1.0 + t).collect()).collect();
        DensityProblem {
            velocity: uniform_velocity(&grid, [1.0, 0.0, 0.0], ts.len()),
            rho0: ScalarField::from_fn(&grid, |x, _| rho0(x)),
            grid,
            times: ts,
            rho_b,
            forcing: None,
        }
    }

    #[test]
    fn zero_velocity_is_a_stationary_characteristic() {
        let g = Grid::unit_square(8).unwrap();
        let v = uniform_velocity(&g, [0.0; 3], 2);
        let h = VelocityHistory { grid: &g, times: &[0.0, 0.1], fields: &v };
        assert_eq!(backtrack_characteristic(&g, &h, 0.3, 0.6, 0.1, 0.1).unwrap(), Foot::Interior { x: 0.3, y: 0.6 });
    }

    #[test]
    fn uniform_translation_moves_the_foot() {
        let g = Grid::unit_square(8).unwrap();
        let v = uniform_velocity(&g, [1.0, 0.0, 0.0], 2);
        let h = VelocityHistory { grid: &g, times: &[0.0, 0.1], fields: &v };
        match backtrack_characteristic(&g, &h, 0.5, 0.5, 0.1, 0.1).unwrap() {
            Foot::Interior { x, y } => assert!((x - 0.4).abs() < 1e-14 && (y - 0.5).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
        match backtrack_characteristic(&g, &h, 0.05, 0.5, 0.1, 0.1).unwrap() {
            Foot::Boundary { side, time, x, .. } => {
                assert_eq!(side, Side::Left);
                assert!((time - 0.05).abs() < 1e-14 && x.abs() < 1e-15);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(backtrack_characteristic(&g, &h, 0.5, 0.5, 0.3, 0.1), Err(Error::VelocityNotInterpolable { .. })));
    }

    #[test]
    fn density_is_constant_without_flow() {
        let g = Grid::unit_square(8).unwrap();
        let ts = times(0.01, 5);
        let p = DensityProblem {
            velocity: uniform_velocity(&g, [0.0; 3], ts.len()),
            rho0: ScalarField::from_fn(&g, |x, y| 1.0 + x * y),
            rho_b: vec![vec![1.0; g.boundary().len()]; ts.len()],
            grid: g,
            times: ts,
            forcing: None,
        };
        let rho = solve_continuity(&p).unwrap();
        for r in &rho {
            assert_eq!(r, &p.rho0);
        }
    }

    #[test]
    fn uniform_divergence_decays_exponentially() {
        let g = Grid::unit_square(16).unwrap();
        let alpha = 1.0;
        let v = VectorField::from_fn(&g, |x, y| [0.5 * alpha * (x - 0.5), 0.5 * alpha * (y - 0.5), 0.0]);
        let ts = times(0.01, 20);
        let p = DensityProblem {
            velocity: vec![v; ts.len()],
            rho0: ScalarField::constant(&g, 2.0),
            rho_b: vec![vec![2.0; g.boundary().len()]; ts.len()],
            grid: g.classify_boundary(|x, y| [0.5 * (x - 0.5), 0.5 * (y - 0.5), 0.0], 0.1).unwrap(),
            times: ts.clone(),
            forcing: None,
        };
        let rho = solve_continuity(&p).unwrap();
        for (r, t) in rho.iter().zip(&ts) {
            let want = 2.0 * (-alpha * t).exp();
            assert!((r.max() - want).abs() < 1e-12 && (r.min() - want).abs() < 1e-12);
        }
        let bounds = density_minmax_bounds(&p, &div_sup_per_level(&p.grid, &p.velocity));
        for (r, lo) in rho.iter().zip(&bounds.lower) {
            assert!((r.min() - lo).abs() < 1e-12);
        }
        let (lp, linf) = check_lp_estimate(&p, &rho, 4.0, 1e-12).unwrap();
        assert!(lp.pass && linf.pass);
        assert!((lp.lhs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_emission_matches_transport_solution() {
        let p = translation_problem(32, 1e-3, 0.4, |_| 1.0);
        let rho = solve_continuity(&p).unwrap();
        let last = rho.last().unwrap();
        let t = 0.4;
        let h = 1.0 / 32.0;
        for k in 0..p.grid.len() {
            let (x, _) = p.grid.point(k);
            if (x - t).abs() > 0.15 {
                let want = 1.0 + (t - x).max(0.0);
                assert!((last.values()[k] - want).abs() < 2.0 * (h + 1e-3), "x={x}: {} vs {want}", last.values()[k]);
            }
        }
    }

    #[test]
    fn upwind_oracle_agrees_with_characteristics() {
        let p = translation_problem(32, 2e-3, 0.3, |x| 1.0 - x + 0.5 * x * x);
        let sl = solve_continuity(&p).unwrap();
        let up = solve_continuity_upwind(&p).unwrap();
        let diff = sl.last().unwrap().zip_map(up.last().unwrap(), |a, b| a - b).max_abs();
        assert!(diff < 0.02, "{diff}");
    }

    #[test]
    fn positivity_and_envelope_hold_in_a_compressing_swirl() {
        let g = Grid::new(12, 10, Extent { x0: 0.0, x1: 1.0, y0: 0.0, y1: 0.8 }).unwrap();
        let field = |x: f64, y: f64| {
            let s = (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y / 0.8).sin();
            [s * (y - 0.4), -s * (x - 0.5) - 0.3 * s, 0.0]
        };
        let ts = times(0.02, 10);
        let p = DensityProblem {
            velocity: vec![VectorField::from_fn(&g, field); ts.len()],
            rho0: ScalarField::from_fn(&g, |x, y| 1.0 + 0.3 * x - 0.2 * y),
            rho_b: vec![vec![1.0; g.boundary().len()]; ts.len()],
            grid: g,
            times: ts,
            forcing: None,
        };
        let rho = solve_continuity(&p).unwrap();
        let bounds = density_minmax_bounds(&p, &div_sup_per_level(&p.grid, &p.velocity));
        for (n, r) in rho.iter().enumerate() {
            assert!(r.min() > 0.0);
            assert!(r.min() >= bounds.lower[n] * (1.0 - 1e-12));
            assert!(r.max() <= bounds.upper[n] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn large_steps_are_substepped() {
        let g = Grid::unit_square(8).unwrap();
        assert_eq!(substeps(&g, 1.0, 0.1), 1);
        assert_eq!(substeps(&g, 1.0, 0.5), 2);
        let p = translation_problem(16, 0.25, 0.5, |_| 1.0);
        let rho = solve_continuity(&p).unwrap();
        assert!(rho.last().unwrap().is_finite());
    }

    #[test]
    fn gradient_monitor_and_boundary_identity() {
        let p = translation_problem(32, 1e-3, 0.3, |x| 1.0 - x + 0.5 * x * x);
        let rho = solve_continuity(&p).unwrap();
        let (entry, identity) = check_gradient_estimate(&p, &rho, 4.0, 4.0, 0.5, 0.0).unwrap();
        assert!(entry.pass, "{entry:?}");
        // ∂n ρ = −∂x ρ = 1 on the left edge
        assert!(identity.relative() < 0.05, "{identity:?}");
        let corrupted: Vec<ScalarField> = rho.iter().map(|r| r.map(|v| 10.0 * v - 9.0)).collect();
        let (bad, _) = check_gradient_estimate(&p, &corrupted, 4.0, 4.0, 0.5, 0.0).unwrap();
        assert!(!bad.pass);
        assert!(matches!(check_gradient_estimate(&p, &rho, 4.0, 4.0, 2.0, 0.0), Err(Error::InflowSpeedBelowThreshold { .. })));
    }

    #[test]
    fn lp_monitor_flags_scaled_density() {
        let p = translation_problem(16, 2e-3, 0.2, |_| 1.0);
        let rho = solve_continuity(&p).unwrap();
        let (lp, linf) = check_lp_estimate(&p, &rho, 4.0, 0.0).unwrap();
        assert!(lp.pass && linf.pass);
        let scaled: Vec<ScalarField> = rho.iter().map(|r| r.scaled(10.0)).collect();
        let (lp, linf) = check_lp_estimate(&p, &scaled, 4.0, 0.0).unwrap();
        assert!(!lp.pass && !linf.pass);
    }

    #[test]
    fn inconsistent_data_is_rejected() {
        let mut p = translation_problem(8, 0.01, 0.05, |_| 1.0);
        p.rho0 = ScalarField::constant(&p.grid, 2.0);
        assert!(matches!(solve_continuity(&p), Err(Error::NonPositiveData(_))));
        let mut p = translation_problem(8, 0.01, 0.05, |_| 1.0);
        p.rho0.values_mut()[40] = -1.0;
        assert!(solve_continuity(&p).is_err());
    }

    #[test]
    fn outflow_entry_is_an_error() {
        // velocity enters through the right edge, but no edge is tagged inflow
        let base = Grid::unit_square(8).unwrap();
        let grid = base.with_tags(&base.boundary().iter().map(|b| (FaceTag::Outflow, b.side)).collect::<Vec<_>>()).unwrap();
        let ts = times(0.05, 2);
        let p = DensityProblem {
            velocity: uniform_velocity(&grid, [-1.0, 0.0, 0.0], ts.len()),
            rho0: ScalarField::constant(&grid, 1.0),
            rho_b: vec![vec![1.0; grid.boundary().len()]; ts.len()],
            grid,
            times: ts,
            forcing: None,
        };
        assert!(matches!(solve_continuity(&p), Err(Error::CharacteristicEntersThroughNonInflow { .. })));
    }
}
