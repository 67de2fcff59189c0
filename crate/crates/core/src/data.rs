//! Initial and boundary data, the external potential, manufactured forcing,
//! and their sampling onto the levels of one time window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constitutive::{frobenius, stress_at, MaterialParams};
use crate::error::Result;
use crate::field::{cross, ScalarField, State, VectorField};
use crate::grid::Grid;
use crate::ops::symmetric_part;
use crate::profiles::{Jet, Profile, VectorProfile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub rho: Profile,
    pub u: VectorProfile,
    pub theta: Profile,
    pub b: VectorProfile,
}

/// Boundary traces. `b` is a full vector field on the boundary; only its
/// tangential part `n × (b × n)` is imposed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub rho: Profile,
    pub u: VectorProfile,
    pub theta: Profile,
    pub b: VectorProfile,
    /// Minimal inward speed `c` on inflow faces.
    pub inflow_threshold: f64,
}

/// A reference solution. With `forcing` set, the residual of the full system
/// at this solution is added as a source to every equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub rho: Profile,
    pub u: VectorProfile,
    pub theta: Profile,
    pub b: VectorProfile,
    #[serde(default = "default_true")]
    pub forcing: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemData {
    pub material: MaterialParams,
    pub initial: InitialData,
    pub boundary: BoundaryData,
    /// External potential `G`; the momentum equation carries `+∇G`.
    pub potential: Profile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactSolution>,
}

impl ProblemData {
    pub fn initial_state(&self, grid: &Grid, time: f64) -> State {
        let i = &self.initial;
        State {
            time,
            rho: ScalarField::from_fn(grid, |x, y| i.rho.eval(time, x, y)),
            u: VectorField::from_fn(grid, |x, y| i.u.eval(time, x, y)),
            theta: ScalarField::from_fn(grid, |x, y| i.theta.eval(time, x, y)),
            b: VectorField::from_fn(grid, |x, y| i.b.eval(time, x, y)),
        }
    }

    pub fn exact_state(&self, grid: &Grid, time: f64) -> Option<State> {
        self.exact.as_ref().map(|e| State {
            time,
            rho: ScalarField::from_fn(grid, |x, y| e.rho.eval(time, x, y)),
            u: VectorField::from_fn(grid, |x, y| e.u.eval(time, x, y)),
            theta: ScalarField::from_fn(grid, |x, y| e.theta.eval(time, x, y)),
            b: VectorField::from_fn(grid, |x, y| e.b.eval(time, x, y)),
        })
    }

    /// Grid with face tags from `u_B(t)`.
    pub fn classify(&self, grid: &Grid, time: f64) -> Result<Grid> {
        grid.classify_boundary(|x, y| self.boundary.u.eval(time, x, y), self.boundary.inflow_threshold)
    }

    pub fn has_forcing(&self) -> bool {
        self.exact.as_ref().is_some_and(|e| e.forcing)
    }

    /// Residual of the full system at the exact solution, at one point.
    pub fn forcing_at(&self, t: f64, x: f64, y: f64) -> Option<PointForcing> {
        let e = self.exact.as_ref().filter(|e| e.forcing)?;
        Some(manufactured_forcing(e, &self.potential, &self.material, t, x, y))
    }

    pub fn forcing_fields(&self, grid: &Grid, t: f64) -> Option<Forcing> {
        if !self.has_forcing() {
            return None;
        }
        let pts: Vec<PointForcing> = (0..grid.len())
            .into_par_iter()
            .with_min_len(64)
            .map(|k| {
                let (x, y) = grid.point(k);
                self.forcing_at(t, x, y).expect("forcing enabled")
            })
            .collect();
        let n = grid.len();
        let mut rho = vec![0.0; n];
        let mut theta = vec![0.0; n];
        let mut u = VectorField::zeros(grid);
        let mut b = VectorField::zeros(grid);
        for (k, p) in pts.iter().enumerate() {
            rho[k] = p.rho;
            theta[k] = p.theta;
            u.set(k, p.u);
            b.set(k, p.b);
        }
        Some(Forcing {
            rho: ScalarField::from_vec(grid, rho).expect("grid length"),
            u,
            theta: ScalarField::from_vec(grid, theta).expect("grid length"),
            b,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointForcing {
    pub rho: f64,
    pub u: [f64; 3],
    pub theta: f64,
    pub b: [f64; 3],
}

/// Source terms for the four equations on one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct Forcing {
    pub rho: ScalarField,
    pub u: VectorField,
    pub theta: ScalarField,
    pub b: VectorField,
}

fn vector_jets(p: &VectorProfile, t: f64, x: f64, y: f64) -> [Jet; 3] {
    [0, 1, 2].map(|c| Jet::of_profile(p.component(c), t, x, y))
}

fn curl_of(j: &[Jet; 3]) -> [f64; 3] {
    [j[2].y, -j[2].x, j[1].x - j[0].y]
}

fn manufactured_forcing(e: &ExactSolution, g: &Profile, m: &MaterialParams, t: f64, x: f64, y: f64) -> PointForcing {
    let r = Jet::of_profile(&e.rho, t, x, y);
    let u = vector_jets(&e.u, t, x, y);
    let th = Jet::of_profile(&e.theta, t, x, y);
    let bj = vector_jets(&e.b, t, x, y);
    let gj = Jet::of_profile(g, t, x, y);
    let uv = [u[0].v, u[1].v, u[2].v];
    let bv = [bj[0].v, bj[1].v, bj[2].v];
    let div_u = u[0].x + u[1].y;
    let advect = |j: &Jet| uv[0] * j.x + uv[1] * j.y;

    let f_rho = r.t + advect(&r) + r.v * div_u;

    let curl_b = curl_of(&bj);
    let lorentz = cross(curl_b, bv);
    let grad_div = [u[0].xx + u[1].xy, u[0].xy + u[1].yy, 0.0];
    let grad_th = th.grad();
    let grad_r = r.grad();
    let grad_g = gj.grad();
    let mut f_u = [0.0; 3];
    for c in 0..3 {
        let visc = m.mu * u[c].laplacian() + (m.mu / 3.0 + m.lambda) * grad_div[c];
        f_u[c] = u[c].t + advect(&u[c]) - (visc + lorentz[c]) / r.v + grad_th[c] + th.v * grad_r[c] / r.v - grad_g[c];
    }

    let mut gu = [[0.0; 3]; 3];
    for c in 0..3 {
        gu[c][0] = u[c].x;
        gu[c][1] = u[c].y;
    }
    let diss = frobenius(stress_at(gu, m), symmetric_part(gu));
    let joule = m.xi * (curl_b[0].powi(2) + curl_b[1].powi(2) + curl_b[2].powi(2));
    let rcv = r.v * m.cv;
    let f_theta = th.t + advect(&th) - m.kappa / rcv * th.laplacian() - (diss + joule) / rcv + th.v * div_u / m.cv;

    // curl(u × B) through the product rule on w = u × B
    let ux = [u[0].x, u[1].x, u[2].x];
    let uy = [u[0].y, u[1].y, u[2].y];
    let bx = [bj[0].x, bj[1].x, bj[2].x];
    let by = [bj[0].y, bj[1].y, bj[2].y];
    let wx = add(cross(ux, bv), cross(uv, bx));
    let wy = add(cross(uy, bv), cross(uv, by));
    let curl_w = [wy[2], -wx[2], wx[1] - wy[0]];
    let mut f_b = [0.0; 3];
    for c in 0..3 {
        f_b[c] = bj[c].t - m.xi * bj[c].laplacian() - curl_w[c];
    }
    PointForcing { rho: f_rho, u: f_u, theta: f_theta, b: f_b }
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// Everything the subproblem solvers need on the levels of one window.
#[derive(Clone, Debug)]
pub struct WindowData {
    /// Grid with face tags frozen for this window.
    pub grid: Grid,
    pub times: Vec<f64>,
    /// Boundary traces per level, indexed by boundary slot.
    pub rho_b: Vec<Vec<f64>>,
    pub u_b: Vec<Vec<[f64; 3]>>,
    pub theta_b: Vec<Vec<f64>>,
    pub b_b: Vec<Vec<[f64; 3]>>,
    pub potential: Vec<ScalarField>,
    pub forcing: Option<Vec<Forcing>>,
}

impl WindowData {
    pub fn build(problem: &ProblemData, base: &Grid, t0: f64, dt: f64, steps: usize) -> Result<WindowData> {
        let grid = problem.classify(base, t0)?;
        let times: Vec<f64> = (0..=steps).map(|n| t0 + n as f64 * dt).collect();
        let bd = &problem.boundary;
        let trace = |f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<Vec<f64>> {
            times
                .iter()
                .map(|&t| grid.boundary().iter().map(|b| f(t, grid.x(b.i), grid.y(b.j))).collect())
                .collect()
        };
        let vtrace = |p: &VectorProfile| -> Vec<Vec<[f64; 3]>> {
            times
                .iter()
                .map(|&t| grid.boundary().iter().map(|b| p.eval(t, grid.x(b.i), grid.y(b.j))).collect())
                .collect()
        };
        let rho_b = trace(&|t, x, y| bd.rho.eval(t, x, y));
        let theta_b = trace(&|t, x, y| bd.theta.eval(t, x, y));
        let u_b = vtrace(&bd.u);
        let b_b = vtrace(&bd.b);
        let potential = times.iter().map(|&t| ScalarField::from_fn(&grid, |x, y| problem.potential.eval(t, x, y))).collect();
        let forcing = if problem.has_forcing() {
            Some(times.iter().map(|&t| problem.forcing_fields(&grid, t).expect("forcing enabled")).collect())
        } else {
            None
        };
        Ok(WindowData { grid, times, rho_b, u_b, theta_b, b_b, potential, forcing })
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn forcing(&self, level: usize) -> Option<&Forcing> {
        self.forcing.as_ref().map(|f| &f[level])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(rho: Profile, u: VectorProfile, theta: Profile, b: VectorProfile) -> ExactSolution {
        ExactSolution { rho, u, theta, b, forcing: true }
    }

    fn problem(e: ExactSolution, g: Profile) -> ProblemData {
        ProblemData {
            material: MaterialParams::default(),
            initial: InitialData { rho: e.rho.clone(), u: e.u.clone(), theta: e.theta.clone(), b: e.b.clone() },
            boundary: BoundaryData { rho: e.rho.clone(), u: e.u.clone(), theta: e.theta.clone(), b: e.b.clone(), inflow_threshold: 0.5 },
            potential: g,
            exact: Some(e),
        }
    }

    #[test]
    fn rest_state_has_no_forcing() {
        let p = problem(
            exact(Profile::constant(1.0), VectorProfile::constant([0.0; 3]), Profile::constant(2.0), VectorProfile::constant([0.1, 0.2, 0.3])),
            Profile::constant(0.0),
        );
        let f = p.forcing_at(0.3, 0.4, 0.7).unwrap();
        assert!(f.rho.abs() < 1e-12 && f.theta.abs() < 1e-12);
        assert!(f.u.iter().chain(&f.b).all(|v| v.abs() < 1e-9), "{f:?}");
    }

    #[test]
    fn balanced_expansion_needs_only_heat_forcing() {
        // u = (x − ½, y − ½)/2, ρ = e^{−t}, G = |x − c|²/8: momentum and mass balance exactly
        let u = VectorProfile::new(Profile::affine(-0.25, 0.0, 0.5, 0.0), Profile::affine(-0.25, 0.0, 0.0, 0.5), Profile::constant(0.0));
        let p = problem(
            exact(Profile::Exp { amp: 1.0, rate: -1.0 }, u, Profile::constant(1.0), VectorProfile::constant([0.0; 3])),
            Profile::Paraboloid { amp: 0.125, xc: 0.5, yc: 0.5 },
        );
        let f = p.forcing_at(0.1, 0.2, 0.9).unwrap();
        assert!(f.rho.abs() < 1e-10, "{}", f.rho);
        assert!(f.u.iter().all(|v| v.abs() < 1e-9), "{:?}", f.u);
        // θ equation: S:D = μα²/3 with α = 1, divided by ρ, minus θ div u
        let rho = (-0.1f64).exp();
        let want = -(1.0 / 3.0) / rho + 1.0;
        assert!((f.theta - want).abs() < 1e-9, "{} vs {want}", f.theta);
    }

    #[test]
    fn window_traces_follow_the_loop() {
        let g = Grid::unit_square(4).unwrap();
        let p = problem(
            exact(Profile::affine(1.0, 1.0, 0.0, 0.0), VectorProfile::constant([1.0, 0.0, 0.0]), Profile::constant(1.0), VectorProfile::constant([0.0; 3])),
            Profile::constant(0.0),
        );
        let w = WindowData::build(&p, &g, 0.5, 0.1, 3).unwrap();
        assert_eq!(w.times.len(), 4);
        assert_eq!(w.rho_b[2].len(), g.boundary().len());
        assert!((w.rho_b[2][0] - 1.7).abs() < 1e-14);
        assert!(w.grid.inflow_nodes().count() == 5);
        assert!(w.forcing.is_some());
    }
}
