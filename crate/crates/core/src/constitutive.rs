//! Pointwise constitutive laws: ideal-gas pressure, Newtonian stress,
//! dissipation, Lorentz force, Joule heating and Fourier heat flux.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{cross, ScalarField, TensorField, VectorField};
use crate::grid::Grid;
use crate::ops;

/// Dimension used in the deviatoric factor `2/d` of the stress tensor.
pub const EFFECTIVE_DIMENSION: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Shear viscosity.
    pub mu: f64,
    /// Bulk viscosity.
    pub lambda: f64,
    /// Heat conductivity.
    pub kappa: f64,
    /// Specific heat at constant volume.
    pub cv: f64,
    /// Magnetic resistivity.
    pub xi: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams { mu: 1.0, lambda: 0.0, kappa: 1.0, cv: 1.0, xi: 1.0 }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        for (name, v, strict) in [
            ("mu", self.mu, true),
            ("lambda", self.lambda, false),
            ("kappa", self.kappa, true),
            ("cv", self.cv, true),
            ("xi", self.xi, true),
        ] {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if !ok {
                bad.push(format!("{name} = {v} (must be {} 0)", if strict { ">" } else { ">=" }));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(bad.join(", ")))
        }
    }
}

/// `p = ρθ`.
pub fn pressure(rho: &ScalarField, theta: &ScalarField) -> ScalarField {
    rho.zip_map(theta, |r, t| r * t)
}

/// `S = μ(2D − (2/3) div u I) + λ div u I` from a velocity gradient `∇u`.
pub fn stress_at(grad_u: [[f64; 3]; 3], params: &MaterialParams) -> [[f64; 3]; 3] {
    let div = grad_u[0][0] + grad_u[1][1] + grad_u[2][2];
    let d = ops::symmetric_part(grad_u);
    let iso = (params.lambda - 2.0 * params.mu / EFFECTIVE_DIMENSION) * div;
    let mut s = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] = 2.0 * params.mu * d[i][j];
        }
        s[i][i] += iso;
    }
    s
}

pub fn stress(grad_u: &TensorField, params: &MaterialParams) -> TensorField {
    grad_u.map(|g| stress_at(g, params))
}

#[inline]
pub fn frobenius(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// `S : D` pointwise.
pub fn viscous_dissipation(s: &TensorField, d: &TensorField) -> ScalarField {
    assert_eq!(s.shape(), d.shape());
    let data = s.values().iter().zip(d.values()).map(|(&a, &b)| frobenius(a, b)).collect();
    ScalarField::with_shape(s.shape(), data)
}

/// `S(u) : D(u)` computed directly from the velocity field.
pub fn dissipation_of(grid: &Grid, u: &VectorField, params: &MaterialParams) -> ScalarField {
    let g = ops::grad_vector(grid, u);
    let data = g.values().iter().map(|&gk| frobenius(stress_at(gk, params), ops::symmetric_part(gk))).collect();
    ScalarField::with_shape(u.shape(), data)
}

/// `curl B × B`.
pub fn lorentz_force(grid: &Grid, b: &VectorField) -> VectorField {
    let c = ops::curl(grid, b);
    c.zip_map(b, cross)
}

/// `ξ |curl B|²`.
pub fn joule_heating(grid: &Grid, b: &VectorField, params: &MaterialParams) -> ScalarField {
    let c = ops::curl(grid, b);
    let data = (0..c.len())
        .map(|k| {
            let v = c.at(k);
            params.xi * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
        })
        .collect();
    ScalarField::with_shape(b.shape(), data)
}

/// `q = −κ ∇θ`.
pub fn heat_flux(grid: &Grid, theta: &ScalarField, params: &MaterialParams) -> VectorField {
    ops::gradient(grid, theta).scaled(-params.kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::norm3;
    use proptest::prelude::*;

    const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    fn params(mu: f64, lambda: f64) -> MaterialParams {
        MaterialParams { mu, lambda, ..Default::default() }
    }

    fn interior(grid: &Grid) -> Vec<usize> {
        (0..grid.len()).filter(|&k| {
            let (i, j) = grid.ij(k);
            grid.is_interior(i, j)
        }).collect()
    }

    #[test]
    fn pressure_is_pointwise_product() {
        let g = Grid::unit_square(4).unwrap();
        let p = pressure(&ScalarField::constant(&g, 2.0), &ScalarField::constant(&g, 3.0));
        assert!(p.values().iter().all(|&v| v == 6.0));
        let p0 = pressure(&ScalarField::zeros(&g), &ScalarField::constant(&g, 3.0));
        assert!(p0.values().iter().all(|&v| v == 0.0));
        let px = pressure(&ScalarField::from_fn(&g, |x, _| x), &ScalarField::from_fn(&g, |x, _| x));
        for k in 0..g.len() {
            let (x, _) = g.point(k);
            assert!((px.values()[k] - x * x).abs() < 1e-15);
        }
    }

    #[test]
    fn stress_of_identity_gradient() {
        let s = stress_at(IDENTITY, &params(1.0, 0.0));
        assert!(s.iter().flatten().all(|v| v.abs() < 1e-15));
        let s = stress_at(IDENTITY, &params(0.0, 1.0));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 3.0 } else { 0.0 };
                assert!((s[i][j] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stress_of_rotation_vanishes() {
        let w = [[0.0, 2.0, -1.0], [-2.0, 0.0, 0.5], [1.0, -0.5, 0.0]];
        let s = stress_at(w, &params(1.3, 0.7));
        assert!(s.iter().flatten().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn dissipation_examples() {
        let g = Grid::unit_square(4).unwrap();
        let p = params(1.0, 0.0);
        let zero = TensorField::constant(&g, [[0.0; 3]; 3]);
        assert!(viscous_dissipation(&stress(&zero, &p), &zero).values().iter().all(|&v| v == 0.0));

        let shear = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]];
        let s = stress_at(shear, &p);
        assert!((frobenius(s, ops::symmetric_part(shear)) - 4.0).abs() < 1e-14);
        let s = stress_at(IDENTITY, &p);
        assert!(frobenius(s, IDENTITY).abs() < 1e-14);
    }

    #[test]
    fn lorentz_force_of_linear_field() {
        let g = Grid::unit_square(8).unwrap();
        let b = VectorField::from_fn(&g, |x, _| [0.0, x, 0.0]);
        let f = lorentz_force(&g, &b);
        for k in 0..g.len() {
            let (x, _) = g.point(k);
            let fk = f.at(k);
            assert!((fk[0] + x).abs() < 1e-12 && fk[1].abs() < 1e-12 && fk[2].abs() < 1e-12);
        }
        let uniform = lorentz_force(&g, &VectorField::constant(&g, [0.3, -1.0, 2.0]));
        assert!(uniform.max_norm() < 1e-12);
        assert_eq!(lorentz_force(&g, &VectorField::zeros(&g)).max_norm(), 0.0);
    }

    #[test]
    fn joule_heating_examples() {
        let g = Grid::unit_square(8).unwrap();
        let b = VectorField::from_fn(&g, |x, _| [0.0, x, 0.0]);
        let one = joule_heating(&g, &b, &MaterialParams::default());
        for k in interior(&g) {
            assert!((one.values()[k] - 1.0).abs() < 1e-12);
        }
        let two = joule_heating(&g, &b, &MaterialParams { xi: 2.0, ..Default::default() });
        for k in 0..g.len() {
            assert!((two.values()[k] - 2.0 * one.values()[k]).abs() < 1e-12);
        }
        assert!(joule_heating(&g, &VectorField::constant(&g, [1.0, 2.0, 3.0]), &MaterialParams::default()).max_abs() < 1e-12);
    }

    #[test]
    fn heat_flux_examples() {
        let g = Grid::unit_square(8).unwrap();
        let p = MaterialParams::default();
        assert!(heat_flux(&g, &ScalarField::constant(&g, 4.0), &p).max_norm() < 1e-12);
        let q = heat_flux(&g, &ScalarField::from_fn(&g, |x, _| x), &p);
        for k in 0..g.len() {
            let v = q.at(k);
            assert!((v[0] + 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        }
        assert!(MaterialParams { kappa: 0.0, ..p }.validate().is_err());
        assert!(MaterialParams { lambda: -1.0, ..p }.validate().is_err());
        assert!(p.validate().is_ok());
    }

    fn matrix() -> impl Strategy<Value = [[f64; 3]; 3]> {
        prop::array::uniform3(prop::array::uniform3(-10.0..10.0f64))
    }

    proptest! {
        #[test]
        fn dissipation_is_nonnegative(g in matrix(), mu in 1e-3..10.0f64, lambda in 0.0..10.0f64) {
            let p = params(mu, lambda);
            let sd = frobenius(stress_at(g, &p), ops::symmetric_part(g));
            let scale = 1.0 + (mu + lambda) * g.iter().flatten().map(|v| v * v).sum::<f64>();
            prop_assert!(sd >= -1e-13 * scale);
        }

        #[test]
        fn shear_part_is_traceless(g in matrix(), mu in 1e-3..10.0f64) {
            let s = stress_at(g, &params(mu, 0.0));
            let tr = s[0][0] + s[1][1] + s[2][2];
            prop_assert!(tr.abs() <= 1e-12 * (1.0 + mu * g.iter().flatten().map(|v| v.abs()).sum::<f64>()));
        }

        #[test]
        fn lorentz_force_is_orthogonal_to_b(c in prop::array::uniform3(-5.0..5.0f64), b in prop::array::uniform3(-5.0..5.0f64)) {
            let f = cross(c, b);
            let dot = f[0] * b[0] + f[1] * b[1] + f[2] * b[2];
            prop_assert!(dot.abs() <= 1e-12 * (1.0 + norm3(c) * norm3(b) * norm3(b)));
        }

        #[test]
        fn pressure_is_bilinear(a in 0.1..5.0f64, b in 0.1..5.0f64, r in 0.1..3.0f64, t in 0.1..3.0f64) {
            let g = Grid::unit_square(4).unwrap();
            let base = pressure(&ScalarField::constant(&g, r), &ScalarField::constant(&g, t));
            let scaled = pressure(&ScalarField::constant(&g, a * r), &ScalarField::constant(&g, b * t));
            for k in 0..g.len() {
                prop_assert!((scaled.values()[k] - a * b * base.values()[k]).abs() <= 1e-12 * scaled.values()[k].abs());
            }
        }
    }
}
