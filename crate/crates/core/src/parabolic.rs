//! Backward-Euler solves of the three linearized parabolic subproblems.
//!
//! Every solve freezes its coefficients at the new time level, assembles one
//! sparse system (unknowns component-major), solves it with `solve_sparse` and
//! writes the Dirichlet traces back exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{dissipation_of, joule_heating, lorentz_force, MaterialParams};
use crate::error::{Error, Result};
use crate::field::{cross, ScalarField, VectorField};
use crate::grid::{Grid, Side};
use crate::ops::{self, Axis};
use crate::sparse::{solve_sparse, CsrMatrix, Layout, SolveStats, SparseSystem};
use crate::transport::tangential_derivative;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    /// First-order upwind; monotone.
    #[default]
    Upwind,
    /// Second-order central differences.
    Central,
}

/// Closure for the normal component of the magnetic field on the boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalClosure {
    /// `∂n B·n = 0`.
    #[default]
    Neumann,
    /// `div B = 0` on the boundary node.
    DivergenceFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub drift: DriftScheme,
    pub normal_closure: NormalClosure,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { drift: DriftScheme::Upwind, normal_closure: NormalClosure::Neumann, tol: 1e-11, max_iter: 4000 }
    }
}

/// Frozen fields for one step, all taken at the new time level.
#[derive(Clone, Copy, Debug)]
pub struct StepCoefficients<'a> {
    pub rho: &'a ScalarField,
    pub velocity: &'a VectorField,
    pub theta: &'a ScalarField,
    pub b: &'a VectorField,
    pub potential: &'a ScalarField,
}

impl StepCoefficients<'_> {
    fn check(&self, grid: &Grid) -> Result<()> {
        let ok = self.rho.matches(grid)
            && self.velocity.matches(grid)
            && self.theta.matches(grid)
            && self.b.matches(grid)
            && self.potential.matches(grid);
        if !ok {
            return Err(Error::ShapeMismatch("frozen coefficients do not match the grid".into()));
        }
        let min = self.rho.min();
        if !(min > 0.0) {
            return Err(Error::NonPositiveDensityCoefficient { min });
        }
        Ok(())
    }
}

type Row = Vec<(usize, f64)>;

fn check_trace<T>(grid: &Grid, trace: &[T]) -> Result<()> {
    if trace.len() != grid.boundary().len() {
        return Err(Error::ShapeMismatch(format!("{} trace values for {} boundary nodes", trace.len(), grid.boundary().len())));
    }
    Ok(())
}

/// Adds `v·∇` acting on the unknown block starting at `base`.
fn push_drift(grid: &Grid, row: &mut Row, base: usize, k: usize, v: [f64; 3], scheme: DriftScheme) {
    let ni = grid.ni();
    for (vel, stride, h) in [(v[0], 1, grid.hx), (v[1], ni, grid.hy)] {
        if vel == 0.0 {
            continue;
        }
        match scheme {
            DriftScheme::Upwind if vel > 0.0 => {
                row.push((base + k, vel / h));
                row.push((base + k - stride, -vel / h));
            }
            DriftScheme::Upwind => {
                row.push((base + k + stride, vel / h));
                row.push((base + k, -vel / h));
            }
            DriftScheme::Central => {
                row.push((base + k + stride, 0.5 * vel / h));
                row.push((base + k - stride, -0.5 * vel / h));
            }
        }
    }
}

/// Adds `−a·Δ` on the block starting at `base`.
fn push_laplacian(grid: &Grid, row: &mut Row, base: usize, k: usize, a: f64) {
    let ni = grid.ni();
    let (cx, cy) = (a / (grid.hx * grid.hx), a / (grid.hy * grid.hy));
    row.push((base + k, 2.0 * (cx + cy)));
    row.push((base + k + 1, -cx));
    row.push((base + k - 1, -cx));
    row.push((base + k + ni, -cy));
    row.push((base + k - ni, -cy));
}

fn push_second(grid: &Grid, row: &mut Row, base: usize, k: usize, axis: Axis, a: f64) {
    let (stride, h) = match axis {
        Axis::X => (1, grid.hx),
        Axis::Y => (grid.ni(), grid.hy),
    };
    let c = a / (h * h);
    row.push((base + k + stride, c));
    row.push((base + k - stride, c));
    row.push((base + k, -2.0 * c));
}

fn push_mixed(grid: &Grid, row: &mut Row, base: usize, k: usize, a: f64) {
    let ni = grid.ni();
    let c = a / (4.0 * grid.hx * grid.hy);
    row.push((base + k + 1 + ni, c));
    row.push((base + k - 1 - ni, c));
    row.push((base + k + 1 - ni, -c));
    row.push((base + k - 1 + ni, -c));
}

/// Interior rows come from `interior(node)`; each boundary node gets identity rows.
fn assemble<F>(grid: &Grid, components: usize, rhs: Vec<f64>, guess: Vec<f64>, boundary_rows: F, interior: impl Fn(usize) -> Vec<Row> + Sync) -> SparseSystem
where
    F: Fn(usize, usize) -> Vec<Row> + Sync,
{
    let layout = Layout { components, nodes: grid.len() };
    let per_node: Vec<Vec<Row>> = (0..grid.len())
        .into_par_iter()
        .with_min_len(64)
        .map(|k| match grid.slot(k) {
            Some(slot) => boundary_rows(k, slot),
            None => interior(k),
        })
        .collect();
    let mut rows = vec![Vec::new(); layout.len()];
    for (k, node_rows) in per_node.into_iter().enumerate() {
        for (c, r) in node_rows.into_iter().enumerate() {
            rows[layout.index(c, k)] = r;
        }
    }
    SparseSystem { matrix: CsrMatrix::from_rows(layout.len(), rows), rhs, layout, guess: Some(guess) }
}

fn flatten(v: &VectorField) -> Vec<f64> {
    v.components().iter().flat_map(|c| c.iter().copied()).collect()
}

fn unflatten(grid: &Grid, x: &[f64]) -> Result<VectorField> {
    let n = grid.len();
    Ok(VectorField::from_components(
        ScalarField::from_vec(grid, x[..n].to_vec())?,
        ScalarField::from_vec(grid, x[n..2 * n].to_vec())?,
        ScalarField::from_vec(grid, x[2 * n..].to_vec())?,
    ))
}

/// `∂t u + v·∇u − (1/ρ) div S(u) = (1/ρ) curl B × B − ∇θ − θ∇log ρ + ∇G + f`
/// after one backward-Euler step, with `u = u_B` on the boundary.
#[allow(clippy::too_many_arguments)]
pub fn assemble_momentum(
    grid: &Grid,
    params: &MaterialParams,
    coeffs: &StepCoefficients,
    u_prev: &VectorField,
    u_b: &[[f64; 3]],
    forcing: Option<&VectorField>,
    dt: f64,
    opts: &SolverOptions,
) -> Result<SparseSystem> {
    coeffs.check(grid)?;
    check_trace(grid, u_b)?;
    let n = grid.len();
    let lorentz = lorentz_force(grid, coeffs.b);
    let grad_theta = ops::gradient(grid, coeffs.theta);
    let log_rho = coeffs.rho.map(f64::ln);
    let grad_log_rho = ops::gradient(grid, &log_rho);
    let grad_g = ops::gradient(grid, coeffs.potential);
    let mut rhs = vec![0.0; 3 * n];
    for c in 0..3 {
        for k in 0..n {
            let value = match grid.slot(k) {
                Some(slot) => u_b[slot][c],
                None => {
                    let r = coeffs.rho.values()[k];
                    let th = coeffs.theta.values()[k];
                    u_prev.component(c)[k] / dt + lorentz.component(c)[k] / r - grad_theta.component(c)[k]
                        - th * grad_log_rho.component(c)[k]
                        + grad_g.component(c)[k]
                        + forcing.map_or(0.0, |f| f.component(c)[k])
                }
            };
            rhs[c * n + k] = value;
        }
    }
    let mu = params.mu;
    let bulk = params.mu / 3.0 + params.lambda;
    let interior = |k: usize| -> Vec<Row> {
        let inv_rho = 1.0 / coeffs.rho.values()[k];
        let v = coeffs.velocity.at(k);
        (0..3)
            .map(|c| {
                let base = c * n;
                let mut row = vec![(base + k, 1.0 / dt)];
                push_drift(grid, &mut row, base, k, v, opts.drift);
                push_laplacian(grid, &mut row, base, k, mu * inv_rho);
                // −(1/ρ)(μ/3 + λ) ∂_c div u
                let a = -bulk * inv_rho;
                match c {
                    0 => {
                        push_second(grid, &mut row, 0, k, Axis::X, a);
                        push_mixed(grid, &mut row, n, k, a);
                    }
                    1 => {
                        push_mixed(grid, &mut row, 0, k, a);
                        push_second(grid, &mut row, n, k, Axis::Y, a);
                    }
                    _ => {}
                }
                row
            })
            .collect()
    };
    let boundary = |k: usize, _| (0..3).map(|c| vec![(c * n + k, 1.0)]).collect();
    Ok(assemble(grid, 3, rhs, flatten(u_prev), boundary, interior))
}

fn overwrite_vector(grid: &Grid, x: &mut [f64], trace: &[[f64; 3]], components: impl Fn(usize) -> Vec<usize>) {
    let n = grid.len();
    for (slot, b) in grid.boundary().iter().enumerate() {
        for c in components(slot) {
            x[c * n + b.node] = trace[slot][c];
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn solve_momentum(
    grid: &Grid,
    params: &MaterialParams,
    coeffs: &StepCoefficients,
    u_prev: &VectorField,
    u_b: &[[f64; 3]],
    forcing: Option<&VectorField>,
    dt: f64,
    opts: &SolverOptions,
) -> Result<(VectorField, SolveStats)> {
    let system = assemble_momentum(grid, params, coeffs, u_prev, u_b, forcing, dt, opts)?;
    let (mut x, stats) = solve_sparse(&system, opts.tol, opts.max_iter)?;
    overwrite_vector(grid, &mut x, u_b, |_| vec![0, 1, 2]);
    Ok((unflatten(grid, &x)?, stats))
}

/// `∂t θ + v·∇θ − κ/(ρ c_v) Δθ + θ div v / c_v = (S(v):D(v) + ξ|curl B|²)/(ρ c_v) + f`
/// after one backward-Euler step, with `θ = θ_B` on the boundary.
#[allow(clippy::too_many_arguments)]
pub fn assemble_temperature(
    grid: &Grid,
    params: &MaterialParams,
    coeffs: &StepCoefficients,
    theta_prev: &ScalarField,
    theta_b: &[f64],
    forcing: Option<&ScalarField>,
    dt: f64,
    opts: &SolverOptions,
) -> Result<SparseSystem> {
    coeffs.check(grid)?;
    check_trace(grid, theta_b)?;
    let div = ops::divergence(grid, coeffs.velocity);
    let heating = dissipation_of(grid, coeffs.velocity, params).zip_map(&joule_heating(grid, coeffs.b, params), |a, b| a + b);
    let rhs = (0..grid.len())
        .map(|k| match grid.slot(k) {
            Some(slot) => theta_b[slot],
            None => {
                theta_prev.values()[k] / dt
                    + heating.values()[k] / (coeffs.rho.values()[k] * params.cv)
                    + forcing.map_or(0.0, |f| f.values()[k])
            }
        })
        .collect();
    let interior = |k: usize| -> Vec<Row> {
        let mut row = vec![(k, 1.0 / dt + div.values()[k] / params.cv)];
        push_drift(grid, &mut row, 0, k, coeffs.velocity.at(k), opts.drift);
        push_laplacian(grid, &mut row, 0, k, params.kappa / (coeffs.rho.values()[k] * params.cv));
        vec![row]
    };
    let boundary = |k: usize, _| vec![vec![(k, 1.0)]];
    Ok(assemble(grid, 1, rhs, theta_prev.values().to_vec(), boundary, interior))
}

#[allow(clippy::too_many_arguments)]
pub fn solve_temperature(
    grid: &Grid,
    params: &MaterialParams,
    coeffs: &StepCoefficients,
    theta_prev: &ScalarField,
    theta_b: &[f64],
    forcing: Option<&ScalarField>,
    dt: f64,
    opts: &SolverOptions,
) -> Result<(ScalarField, SolveStats)> {
    let system = assemble_temperature(grid, params, coeffs, theta_prev, theta_b, forcing, dt, opts)?;
    let (mut x, stats) = solve_sparse(&system, opts.tol, opts.max_iter)?;
    for (slot, b) in grid.boundary().iter().enumerate() {
        x[b.node] = theta_b[slot];
    }
    Ok((ScalarField::from_vec(grid, x)?, stats))
}

/// Components of a boundary node fixed by the tangential trace; corners fix all three.
fn tangential_components(grid: &Grid, slot: usize) -> Vec<usize> {
    let b = &grid.boundary()[slot];
    if b.is_corner() {
        vec![0, 1, 2]
    } else {
        let a = b.side.normal_axis();
        (0..3).filter(|&c| c != a).collect()
    }
}

/// `∂t B − ξΔB = curl(v × B_prev) + f` after one backward-Euler step.
///
/// Tangential components are set from the tangential part of `b_b`; the
/// normal component is closed by `opts.normal_closure`.
#[allow(clippy::too_many_arguments)]
pub fn assemble_induction(
    grid: &Grid,
    params: &MaterialParams,
    velocity: &VectorField,
    b_prev: &VectorField,
    b_b: &[[f64; 3]],
    forcing: Option<&VectorField>,
    dt: f64,
    opts: &SolverOptions,
) -> Result<SparseSystem> {
    if !velocity.matches(grid) || !b_prev.matches(grid) {
        return Err(Error::ShapeMismatch("induction fields do not match the grid".into()));
    }
    check_trace(grid, b_b)?;
    let n = grid.len();
    let ni = grid.ni();
    let coupling = ops::curl(grid, &velocity.zip_map(b_prev, cross));
    // tangential derivative of the tangential trace, for the divergence-free closure
    let component_trace = |c: usize| -> Vec<f64> { b_b.iter().map(|v| v[c]).collect() };
    let traces = [component_trace(0), component_trace(1)];
    let mut rhs = vec![0.0; 3 * n];
    for c in 0..3 {
        for k in 0..n {
            rhs[c * n + k] = b_prev.component(c)[k] / dt + coupling.component(c)[k] + forcing.map_or(0.0, |f| f.component(c)[k]);
        }
    }
    for (slot, b) in grid.boundary().iter().enumerate() {
        let fixed = tangential_components(grid, slot);
        for c in 0..3 {
            rhs[c * n + b.node] = if fixed.contains(&c) {
                b_b[slot][c]
            } else {
                match opts.normal_closure {
                    NormalClosure::Neumann => 0.0,
                    NormalClosure::DivergenceFree => {
                        -tangential_derivative(grid, &traces[1 - b.side.normal_axis()], slot)
                    }
                }
            };
        }
    }
    let interior = |k: usize| -> Vec<Row> {
        (0..3)
            .map(|c| {
                let mut row = vec![(c * n + k, 1.0 / dt)];
                push_laplacian(grid, &mut row, c * n, k, params.xi);
                row
            })
            .collect()
    };
    let boundary = |k: usize, slot: usize| -> Vec<Row> {
        let b = &grid.boundary()[slot];
        let fixed = tangential_components(grid, slot);
        let a = b.side.normal_axis();
        (0..3)
            .map(|c| {
                if fixed.contains(&c) {
                    return vec![(c * n + k, 1.0)];
                }
                // one-sided second-order stencil into the domain
                let (stride, h) = if a == 0 { (1isize, grid.hx) } else { (ni as isize, grid.hy) };
                let inward = match b.side {
                    Side::Left | Side::Bottom => stride,
                    Side::Right | Side::Top => -stride,
                };
                let at = |m: isize| (c * n) as isize + k as isize + m * inward;
                match opts.normal_closure {
                    NormalClosure::Neumann => vec![(at(0) as usize, 3.0), (at(1) as usize, -4.0), (at(2) as usize, 1.0)],
                    NormalClosure::DivergenceFree => {
                        // ∂_a B_a along +axis; inward points along +axis on left/bottom
                        let sign = if inward > 0 { 1.0 } else { -1.0 };
                        let w = sign / (2.0 * h);
                        vec![(at(0) as usize, -3.0 * w), (at(1) as usize, 4.0 * w), (at(2) as usize, -w)]
                    }
                }
            })
            .collect()
    };
    Ok(assemble(grid, 3, rhs, flatten(b_prev), boundary, interior))
}

#[allow(clippy::too_many_arguments)]
pub fn solve_induction(
    grid: &Grid,
    params: &MaterialParams,
    velocity: &VectorField,
    b_prev: &VectorField,
    b_b: &[[f64; 3]],
    forcing: Option<&VectorField>,
    dt: f64,
    opts: &SolverOptions,
) -> Result<(VectorField, SolveStats)> {
    let system = assemble_induction(grid, params, velocity, b_prev, b_b, forcing, dt, opts)?;
    let (mut x, stats) = solve_sparse(&system, opts.tol, opts.max_iter)?;
    overwrite_vector(grid, &mut x, b_b, |slot| tangential_components(grid, slot));
    Ok((unflatten(grid, &x)?, stats))
}
