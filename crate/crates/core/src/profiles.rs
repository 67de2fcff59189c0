//! Named analytic function families `f(t, x, y)` used for initial data,
//! boundary traces, potentials and manufactured solutions.
//!
//! Derivatives are taken with fourth-order central differences, which is
//! accurate to about `1e-10` for the smooth families here.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `c + ct·t + cx·x + cy·y`
    Affine {
        #[serde(default)]
        c: f64,
        #[serde(default)]
        ct: f64,
        #[serde(default)]
        cx: f64,
        #[serde(default)]
        cy: f64,
    },
    /// `amp · sin(π(kx·x + px)) · sin(π(ky·y + py))`; phases are in units of π,
    /// so `ky = 0, py = 0.5` turns the y factor into 1.
    Sin {
        amp: f64,
        #[serde(default)]
        kx: f64,
        #[serde(default)]
        ky: f64,
        #[serde(default)]
        px: f64,
        #[serde(default)]
        py: f64,
    },
    /// `amp · exp(rate·t)`
    Exp {
        amp: f64,
        rate: f64,
    },
    /// `amp · ((x − xc)² + (y − yc)²)`
    Paraboloid {
        amp: f64,
        xc: f64,
        yc: f64,
    },
    Sum {
        terms: Vec<Profile>,
    },
    Product {
        factors: Vec<Profile>,
    },
    /// `max(inner, 0)`
    PositivePart {
        inner: Box<Profile>,
    },
    /// Time-independent bilinear table on a tensor lattice, `values[j·len(xs) + i]`.
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Profile {
    pub fn constant(value: f64) -> Self {
        Profile::Constant { value }
    }

    pub fn affine(c: f64, ct: f64, cx: f64, cy: f64) -> Self {
        Profile::Affine { c, ct, cx, cy }
    }

    pub fn sin(amp: f64, kx: f64, ky: f64) -> Self {
        Profile::Sin { amp, kx, ky, px: 0.0, py: 0.0 }
    }

    /// `amp · sin(kx·π·x)` with no y dependence.
    pub fn sin_x(amp: f64, kx: f64) -> Self {
        Profile::Sin { amp, kx, ky: 0.0, px: 0.0, py: 0.5 }
    }

    pub fn sum(terms: Vec<Profile>) -> Self {
        Profile::Sum { terms }
    }

    pub fn product(factors: Vec<Profile>) -> Self {
        Profile::Product { factors }
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Affine { c, ct, cx, cy } => c + ct * t + cx * x + cy * y,
            Profile::Sin { amp, kx, ky, px, py } => amp * (PI * (kx * x + px)).sin() * (PI * (ky * y + py)).sin(),
            Profile::Exp { amp, rate } => amp * (rate * t).exp(),
            Profile::Paraboloid { amp, xc, yc } => amp * ((x - xc).powi(2) + (y - yc).powi(2)),
            Profile::Sum { terms } => terms.iter().map(|p| p.eval(t, x, y)).sum(),
            Profile::Product { factors } => factors.iter().map(|p| p.eval(t, x, y)).product(),
            Profile::PositivePart { inner } => inner.eval(t, x, y).max(0.0),
            Profile::Tabulated { xs, ys, values } => tabulated(xs, ys, values, x, y),
        }
    }

    /// True when the profile has no time dependence.
    pub fn is_steady(&self) -> bool {
        match self {
            Profile::Affine { ct, .. } => *ct == 0.0,
            Profile::Exp { rate, .. } => *rate == 0.0,
            Profile::Sum { terms } => terms.iter().all(Profile::is_steady),
            Profile::Product { factors } => factors.iter().all(Profile::is_steady),
            Profile::PositivePart { inner } => inner.is_steady(),
            _ => true,
        }
    }

    pub fn validate(&self, path: &str, issues: &mut Vec<String>) {
        match self {
            Profile::Sum { terms } if terms.is_empty() => issues.push(format!("{path}: empty sum")),
            Profile::Product { factors } if factors.is_empty() => issues.push(format!("{path}: empty product")),
            Profile::Sum { terms } => {
                for (k, p) in terms.iter().enumerate() {
                    p.validate(&format!("{path}.terms[{k}]"), issues);
                }
            }
            Profile::Product { factors } => {
                for (k, p) in factors.iter().enumerate() {
                    p.validate(&format!("{path}.factors[{k}]"), issues);
                }
            }
            Profile::PositivePart { inner } => inner.validate(&format!("{path}.inner"), issues),
            Profile::Tabulated { xs, ys, values } => {
                let sorted = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1] > w[0]);
                if !sorted(xs) || !sorted(ys) {
                    issues.push(format!("{path}: table axes need at least two strictly increasing entries"));
                } else if values.len() != xs.len() * ys.len() {
                    issues.push(format!("{path}: table has {} values for a {}x{} lattice", values.len(), xs.len(), ys.len()));
                }
            }
            _ => {}
        }
        if !self.params_finite() {
            issues.push(format!("{path}: non-finite parameter"));
        }
    }

    fn params_finite(&self) -> bool {
        match self {
            Profile::Constant { value } => value.is_finite(),
            Profile::Affine { c, ct, cx, cy } => [c, ct, cx, cy].iter().all(|v| v.is_finite()),
            Profile::Sin { amp, kx, ky, px, py } => [amp, kx, ky, px, py].iter().all(|v| v.is_finite()),
            Profile::Exp { amp, rate } => amp.is_finite() && rate.is_finite(),
            Profile::Paraboloid { amp, xc, yc } => [amp, xc, yc].iter().all(|v| v.is_finite()),
            Profile::Sum { terms } => terms.iter().all(Profile::params_finite),
            Profile::Product { factors } => factors.iter().all(Profile::params_finite),
            Profile::PositivePart { inner } => inner.params_finite(),
            Profile::Tabulated { xs, ys, values } => xs.iter().chain(ys).chain(values).all(|v| v.is_finite()),
        }
    }
}

fn tabulated(xs: &[f64], ys: &[f64], values: &[f64], x: f64, y: f64) -> f64 {
    let cell = |axis: &[f64], v: f64| {
        let k = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
        let f = ((v - axis[k]) / (axis[k + 1] - axis[k])).clamp(0.0, 1.0);
        (k, f)
    };
    let (i, fx) = cell(xs, x);
    let (j, fy) = cell(ys, y);
    let n = xs.len();
    let at = |i: usize, j: usize| values[j * n + i];
    (1.0 - fy) * ((1.0 - fx) * at(i, j) + fx * at(i + 1, j)) + fy * ((1.0 - fx) * at(i, j + 1) + fx * at(i + 1, j + 1))
}

/// Three scalar profiles forming a vector field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorProfile {
    pub x: Profile,
    pub y: Profile,
    pub z: Profile,
}

impl VectorProfile {
    pub fn new(x: Profile, y: Profile, z: Profile) -> Self {
        VectorProfile { x, y, z }
    }

    pub fn constant(v: [f64; 3]) -> Self {
        VectorProfile::new(Profile::constant(v[0]), Profile::constant(v[1]), Profile::constant(v[2]))
    }

    pub fn eval(&self, t: f64, x: f64, y: f64) -> [f64; 3] {
        [self.x.eval(t, x, y), self.y.eval(t, x, y), self.z.eval(t, x, y)]
    }

    pub fn component(&self, c: usize) -> &Profile {
        match c {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }

    pub fn is_steady(&self) -> bool {
        self.x.is_steady() && self.y.is_steady() && self.z.is_steady()
    }

    pub fn validate(&self, path: &str, issues: &mut Vec<String>) {
        self.x.validate(&format!("{path}.x"), issues);
        self.y.validate(&format!("{path}.y"), issues);
        self.z.validate(&format!("{path}.z"), issues);
    }
}

/// Finite-difference step for profile derivatives.
pub const FD_STEP: f64 = 1e-3;

/// Fourth-order central first derivative of `g` at `s`.
pub fn d1<F: Fn(f64) -> f64>(g: F, s: f64) -> f64 {
    let h = FD_STEP;
    (g(s - 2.0 * h) - 8.0 * g(s - h) + 8.0 * g(s + h) - g(s + 2.0 * h)) / (12.0 * h)
}

/// Fourth-order central second derivative of `g` at `s`.
pub fn d2<F: Fn(f64) -> f64>(g: F, s: f64) -> f64 {
    let h = FD_STEP;
    (-g(s - 2.0 * h) + 16.0 * g(s - h) - 30.0 * g(s) + 16.0 * g(s + h) - g(s + 2.0 * h)) / (12.0 * h * h)
}

/// Value and derivatives of a scalar function of `(t, x, y)` at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub yy: f64,
    pub xy: f64,
}

impl Jet {
    pub fn of<F: Fn(f64, f64, f64) -> f64>(f: F, t: f64, x: f64, y: f64) -> Jet {
        let dxy = d1(|b| d1(|a| f(t, a, b), x), y);
        Jet {
            v: f(t, x, y),
            t: d1(|s| f(s, x, y), t),
            x: d1(|a| f(t, a, y), x),
            y: d1(|b| f(t, x, b), y),
            xx: d2(|a| f(t, a, y), x),
            yy: d2(|b| f(t, x, b), y),
            xy: dxy,
        }
    }

    pub fn of_profile(p: &Profile, t: f64, x: f64, y: f64) -> Jet {
        Jet::of(|t, x, y| p.eval(t, x, y), t, x, y)
    }

    pub fn grad(&self) -> [f64; 3] {
        [self.x, self.y, 0.0]
    }

    pub fn laplacian(&self) -> f64 {
        self.xx + self.yy
    }
}

pub fn parse_profile(json: &str) -> Result<Profile> {
    serde_json::from_str(json).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_evaluate() {
        assert_eq!(Profile::constant(2.5).eval(1.0, 0.3, 0.4), 2.5);
        assert!((Profile::affine(1.0, 1.0, -2.0, 0.5).eval(0.5, 0.25, 2.0) - 2.0).abs() < 1e-15);
        assert!((Profile::sin(2.0, 1.0, 1.0).eval(0.0, 0.5, 0.5) - 2.0).abs() < 1e-15);
        assert!((Profile::sin_x(1.0, 1.0).eval(0.0, 0.5, 0.123) - 1.0).abs() < 1e-15);
        let kink = Profile::PositivePart { inner: Box::new(Profile::affine(0.0, 1.0, -1.0, 0.0)) };
        assert_eq!(kink.eval(0.2, 0.5, 0.0), 0.0);
        assert!((kink.eval(0.5, 0.2, 0.0) - 0.3).abs() < 1e-15);
        let p = Profile::product(vec![Profile::Exp { amp: 2.0, rate: -1.0 }, Profile::Paraboloid { amp: 1.0, xc: 0.5, yc: 0.5 }]);
        assert!((p.eval(1.0, 1.0, 0.5) - 2.0 * (-1.0f64).exp() * 0.25).abs() < 1e-15);
    }

    #[test]
    fn table_is_bilinear() {
        let t = Profile::Tabulated { xs: vec![0.0, 1.0, 2.0], ys: vec![0.0, 1.0], values: vec![0.0, 1.0, 2.0, 1.0, 2.0, 3.0] };
        assert!((t.eval(0.0, 1.5, 0.5) - 2.0).abs() < 1e-15);
        assert!((t.eval(0.0, 9.0, 9.0) - 3.0).abs() < 1e-15);
        let mut issues = Vec::new();
        Profile::Tabulated { xs: vec![0.0], ys: vec![0.0, 1.0], values: vec![] }.validate("p", &mut issues);
        assert_eq!(issues.len(), 1);
    }

    #[test]
    fn jets_match_analytic_derivatives() {
        let p = Profile::product(vec![Profile::sin(1.0, 1.0, 2.0), Profile::Exp { amp: 1.0, rate: -0.5 }]);
        let (t, x, y) = (0.3, 0.27, 0.61);
        let j = Jet::of_profile(&p, t, x, y);
        let (sx, cx) = (PI * x).sin_cos();
        let (sy, cy) = (2.0 * PI * y).sin_cos();
        let e = (-0.5 * t).exp();
        assert!((j.t + 0.5 * sx * sy * e).abs() < 1e-10);
        assert!((j.x - PI * cx * sy * e).abs() < 1e-9);
        assert!((j.y - 2.0 * PI * sx * cy * e).abs() < 1e-9);
        assert!((j.xx + PI * PI * sx * sy * e).abs() < 1e-6);
        assert!((j.xy - 2.0 * PI * PI * cx * cy * e).abs() < 1e-6);
    }

    #[test]
    fn profiles_round_trip_through_json() {
        let p = Profile::sum(vec![Profile::constant(1.0), Profile::sin(0.2, 1.0, 1.0)]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(parse_profile(&s).unwrap(), p);
        assert!(parse_profile(r#"{"kind":"nope"}"#).is_err());
    }
}
