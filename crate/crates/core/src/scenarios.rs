//! Built-in scenarios.

use std::f64::consts::PI;

use crate::config::{GridSpec, OutputSpec, ScenarioConfig, TimeSpec};
use crate::constitutive::MaterialParams;
use crate::data::{BoundaryData, ExactSolution, InitialData, ProblemData};
use crate::diagnostics::DiagnosticsOptions;
use crate::error::{Error, Result};
use crate::fixed_point::FixedPointOptions;
use crate::grid::Extent;
use crate::parabolic::NormalClosure;
use crate::profiles::{Profile, VectorProfile};

/// Names of the built-ins, sorted.
pub fn scenario_names() -> Vec<&'static str> {
    let mut names = vec!["inflow-channel", "joule-box", "manufactured-full", "stationary", "translation-inflow", "uniform-divergence"];
    names.sort_unstable();
    names
}

/// Every built-in, sorted by name.
pub fn scenario_library() -> Vec<ScenarioConfig> {
    scenario_names().into_iter().map(|n| scenario(n).expect("built-in")).collect()
}

pub fn scenario(name: &str) -> Result<ScenarioConfig> {
    match name {
        "stationary" => Ok(stationary()),
        "uniform-divergence" => Ok(uniform_divergence()),
        "translation-inflow" => Ok(translation_inflow()),
        "joule-box" => Ok(joule_box()),
        "inflow-channel" => Ok(inflow_channel()),
        "manufactured-full" => Ok(manufactured_full()),
        _ => Err(Error::UnknownScenario(name.to_string())),
    }
}

fn c(v: f64) -> Profile {
    Profile::constant(v)
}

fn sin(amp: f64, kx: f64, px: f64, ky: f64, py: f64) -> Profile {
    Profile::Sin { amp, kx, ky, px, py }
}

/// `1 + t`
fn growth() -> Profile {
    Profile::affine(1.0, 1.0, 0.0, 0.0)
}

fn base(name: &str, n: usize, problem: ProblemData, time: TimeSpec) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        grid: GridSpec { nx: n, ny: n, extent: Extent::unit() },
        problem,
        time,
        p: 4.0,
        q: 4.0,
        fixed_point: FixedPointOptions::default(),
        diagnostics: DiagnosticsOptions::default(),
        output: OutputSpec::default(),
        override_exponent_check: false,
    }
}

fn at_rest(rho: Profile, theta: Profile, b: VectorProfile) -> ProblemData {
    ProblemData {
        material: MaterialParams::default(),
        initial: InitialData { rho: rho.clone(), u: VectorProfile::constant([0.0; 3]), theta: theta.clone(), b: b.clone() },
        boundary: BoundaryData { rho, u: VectorProfile::constant([0.0; 3]), theta, b, inflow_threshold: 0.5 },
        potential: c(0.0),
        exact: None,
    }
}

fn from_exact(exact: ExactSolution, potential: Profile, inflow_threshold: f64) -> ProblemData {
    ProblemData {
        material: MaterialParams::default(),
        initial: InitialData { rho: exact.rho.clone(), u: exact.u.clone(), theta: exact.theta.clone(), b: exact.b.clone() },
        boundary: BoundaryData {
            rho: exact.rho.clone(),
            u: exact.u.clone(),
            theta: exact.theta.clone(),
            b: exact.b.clone(),
            inflow_threshold,
        },
        potential,
        exact: Some(exact),
    }
}

/// Uniform state at rest in a closed box with a constant field.
fn stationary() -> ScenarioConfig {
    let b = VectorProfile::constant([0.3, 0.2, 0.1]);
    let mut cfg = base("stationary", 32, at_rest(c(1.0), c(1.0), b), TimeSpec { horizon: 0.1, dt: 0.01, window: 0.1 });
    cfg.diagnostics.temperature_tol = Some(0.0);
    cfg
}

/// Linear expansion `u = (x − ½, y − ½)/2` with `div u = 1`; the density
/// `e^{−t}` sits exactly on the lower envelope.
fn uniform_divergence() -> ScenarioConfig {
    let exact = ExactSolution {
        rho: Profile::Exp { amp: 1.0, rate: -1.0 },
        u: VectorProfile::new(Profile::affine(-0.25, 0.0, 0.5, 0.0), Profile::affine(-0.25, 0.0, 0.0, 0.5), c(0.0)),
        theta: c(1.0),
        b: VectorProfile::constant([0.0; 3]),
        forcing: true,
    };
    // balances the convective acceleration u·∇u = (x − ½, y − ½)/4
    let potential = Profile::Paraboloid { amp: 0.125, xc: 0.5, yc: 0.5 };
    base("uniform-divergence", 32, from_exact(exact, potential, 0.5), TimeSpec { horizon: 0.2, dt: 0.005, window: 0.05 })
}

/// Unit drift to the right; density `1 + t` enters on the left over the
/// initial profile `1 − x + x²/2`.
fn translation_inflow() -> ScenarioConfig {
    let s_plus = Profile::PositivePart { inner: Box::new(Profile::affine(0.0, -1.0, 1.0, 0.0)) };
    let rho = Profile::sum(vec![Profile::affine(1.0, 1.0, -1.0, 0.0), Profile::product(vec![c(0.5), s_plus.clone(), s_plus])]);
    let exact = ExactSolution {
        rho: rho.clone(),
        u: VectorProfile::constant([1.0, 0.0, 0.0]),
        theta: c(1e-6),
        b: VectorProfile::constant([0.0; 3]),
        forcing: false,
    };
    let mut problem = from_exact(exact, c(0.0), 0.5);
    problem.boundary.rho = growth();
    base("translation-inflow", 32, problem, TimeSpec { horizon: 0.5, dt: 1e-3, window: 0.1 })
}

/// Closed box at rest threaded by `B = (0, x/2, 0)`; the Lorentz force
/// drives a flow and the current heats the fluid.
fn joule_box() -> ScenarioConfig {
    let b = VectorProfile::new(c(0.0), Profile::affine(0.0, 0.0, 0.5, 0.0), c(0.0));
    base("joule-box", 32, at_rest(c(1.0), c(1.0), b), TimeSpec { horizon: 0.1, dt: 1e-3, window: 0.05 })
}

/// Channel with unit inflow on the left edge, a density bump carried in,
/// a temperature ramp and a sheared vertical field. The initial density
/// matches the inflow data to first order at the inflow edge. Dissipation is
/// weak enough that a window of 0.5 does not contract.
fn inflow_channel() -> ScenarioConfig {
    let u = VectorProfile::constant([1.0, 0.0, 0.0]);
    let theta = Profile::affine(1.0, 0.0, 0.2, 0.0);
    let b = VectorProfile::new(c(0.0), Profile::affine(1.0, 0.0, 0.5, 0.0), c(0.0));
    let problem = ProblemData {
        material: MaterialParams { mu: 0.1, lambda: 0.0, kappa: 0.1, cv: 1.0, xi: 0.1 },
        initial: InitialData { rho: Profile::sum(vec![c(1.0), Profile::product(vec![sin(0.3, 0.0, 0.5, 1.0, 0.0), Profile::affine(1.0, 0.0, -1.0, 0.0)])]), u: u.clone(), theta: theta.clone(), b: b.clone() },
        boundary: BoundaryData {
            rho: Profile::sum(vec![c(1.0), Profile::product(vec![sin(0.3, 0.0, 0.5, 1.0, 0.0), growth()])]),
            u,
            theta,
            b,
            inflow_threshold: 0.5,
        },
        potential: c(0.0),
        exact: None,
    };
    base("inflow-channel", 32, problem, TimeSpec { horizon: 0.1, dt: 1e-3, window: 0.05 })
}

/// Forced smooth solution exercising every coupling term: an expanding flow
/// plus a swirl vanishing to second order at the walls, a heated interior
/// and a divergence-free field.
fn manufactured_full() -> ScenarioConfig {
    let a = 0.05 * PI;
    let swirl_x = Profile::product(vec![Profile::sum(vec![sin(a, 0.0, 0.5, 2.0, 0.0), sin(-a, 2.0, 0.5, 2.0, 0.0)]), growth()]);
    let swirl_y = Profile::product(vec![Profile::sum(vec![sin(-a, 2.0, 0.0, 0.0, 0.5), sin(a, 2.0, 0.0, 2.0, 0.5)]), growth()]);
    let u = VectorProfile::new(
        Profile::sum(vec![Profile::affine(-0.25, 0.0, 0.5, 0.0), swirl_x]),
        Profile::sum(vec![Profile::affine(-0.25, 0.0, 0.0, 0.5), swirl_y]),
        c(0.0),
    );
    let theta = Profile::sum(vec![c(1.0), Profile::product(vec![sin(0.2, 1.0, 0.0, 1.0, 0.0), Profile::affine(0.0, 1.0, 0.0, 0.0)])]);
    let b = VectorProfile::new(
        Profile::product(vec![sin(-0.1 * PI, 1.0, 0.0, 1.0, 0.5), growth()]),
        Profile::sum(vec![c(1.0), Profile::product(vec![sin(0.1 * PI, 1.0, 0.5, 1.0, 0.0), growth()])]),
        c(0.0),
    );
    let exact = ExactSolution { rho: Profile::Exp { amp: 1.0, rate: -1.0 }, u, theta, b, forcing: true };
    let mut problem = from_exact(exact, c(0.0), 0.5);
    problem.boundary.theta = c(1.0);
    let mut cfg = base("manufactured-full", 32, problem, TimeSpec { horizon: 0.1, dt: 0.005, window: 0.05 });
    cfg.fixed_point.solver.normal_closure = NormalClosure::DivergenceFree;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::Jet;

    #[test]
    fn listing_is_sorted_and_complete() {
        let names = scenario_names();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names.len(), 6);
        assert!(matches!(scenario(""), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn builtins_validate() {
        for cfg in scenario_library() {
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", cfg.name));
        }
    }

    #[test]
    fn manufactured_density_is_unforced() {
        let cfg = scenario("manufactured-full").unwrap();
        for &(t, x, y) in &[(0.0, 0.3, 0.7), (0.05, 0.1, 0.2), (0.1, 0.8, 0.45)] {
            let f = cfg.problem.forcing_at(t, x, y).unwrap();
            assert!(f.rho.abs() < 1e-8, "{}", f.rho);
            let e = cfg.problem.exact.as_ref().unwrap();
            let bx = Jet::of_profile(e.b.component(0), t, x, y);
            let by = Jet::of_profile(e.b.component(1), t, x, y);
            assert!((bx.x + by.y).abs() < 1e-8);
        }
    }

    #[test]
    fn manufactured_swirl_vanishes_on_the_boundary() {
        let cfg = scenario("manufactured-full").unwrap();
        let u = &cfg.problem.initial.u;
        for s in [0.0, 0.3, 0.77, 1.0] {
            for (x, y) in [(0.0, s), (1.0, s), (s, 0.0), (s, 1.0)] {
                let v = u.eval(0.05, x, y);
                assert!((v[0] - (x - 0.5) / 2.0).abs() < 1e-12 && (v[1] - (y - 0.5) / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_profile_has_the_expected_pieces() {
        let cfg = scenario("translation-inflow").unwrap();
        let rho = &cfg.problem.exact.as_ref().unwrap().rho;
        assert!((rho.eval(0.3, 0.1, 0.5) - 1.2).abs() < 1e-14);
        let s: f64 = 0.4;
        assert!((rho.eval(0.3, 0.7, 0.5) - (1.0 - s + s * s / 2.0)).abs() < 1e-14);
    }
}
