//! Finite-difference operators and interpolation on the node grid.
//!
//! Second-order central differences in the interior, second-order one-sided
//! differences on boundary nodes. Vector fields carry three components and
//! every derivative in z is zero.

use crate::field::{ScalarField, TensorField, VectorField};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// First derivative of a node array along one axis.
pub fn partial(grid: &Grid, f: &[f64], axis: Axis) -> Vec<f64> {
    debug_assert_eq!(f.len(), grid.len());
    let ni = grid.ni();
    let (n, h, stride) = match axis {
        Axis::X => (grid.nx, grid.hx, 1),
        Axis::Y => (grid.ny, grid.hy, ni),
    };
    let mut out = vec![0.0; f.len()];
    let inv2h = 0.5 / h;
    for k in 0..f.len() {
        let (i, j) = grid.ij(k);
        let p = if axis == Axis::X { i } else { j };
        out[k] = if p == 0 {
            (-3.0 * f[k] + 4.0 * f[k + stride] - f[k + 2 * stride]) * inv2h
        } else if p == n {
            (3.0 * f[k] - 4.0 * f[k - stride] + f[k - 2 * stride]) * inv2h
        } else {
            (f[k + stride] - f[k - stride]) * inv2h
        };
    }
    out
}

/// Second derivative of a node array along one axis.
pub fn partial2(grid: &Grid, f: &[f64], axis: Axis) -> Vec<f64> {
    debug_assert_eq!(f.len(), grid.len());
    let ni = grid.ni();
    let (n, h, stride) = match axis {
        Axis::X => (grid.nx, grid.hx, 1),
        Axis::Y => (grid.ny, grid.hy, ni),
    };
    let inv = 1.0 / (h * h);
    let mut out = vec![0.0; f.len()];
    for k in 0..f.len() {
        let (i, j) = grid.ij(k);
        let p = if axis == Axis::X { i } else { j };
        out[k] = if p == 0 {
            (2.0 * f[k] - 5.0 * f[k + stride] + 4.0 * f[k + 2 * stride] - f[k + 3 * stride]) * inv
        } else if p == n {
            (2.0 * f[k] - 5.0 * f[k - stride] + 4.0 * f[k - 2 * stride] - f[k - 3 * stride]) * inv
        } else {
            (f[k + stride] - 2.0 * f[k] + f[k - stride]) * inv
        };
    }
    out
}

pub fn gradient(grid: &Grid, f: &ScalarField) -> VectorField {
    let dx = partial(grid, f.values(), Axis::X);
    let dy = partial(grid, f.values(), Axis::Y);
    VectorField::from_raw(f.shape(), [dx, dy, vec![0.0; grid.len()]])
}

pub fn divergence(grid: &Grid, v: &VectorField) -> ScalarField {
    let dx = partial(grid, v.component(0), Axis::X);
    let dy = partial(grid, v.component(1), Axis::Y);
    ScalarField::with_shape(v.shape(), dx.iter().zip(&dy).map(|(a, b)| a + b).collect())
}

/// `curl v = (∂y vz, -∂x vz, ∂x vy - ∂y vx)` since `∂z ≡ 0`.
pub fn curl(grid: &Grid, v: &VectorField) -> VectorField {
    let dz_dy = partial(grid, v.component(2), Axis::Y);
    let dz_dx = partial(grid, v.component(2), Axis::X);
    let dy_dx = partial(grid, v.component(1), Axis::X);
    let dx_dy = partial(grid, v.component(0), Axis::Y);
    let n = grid.len();
    let mut cx = vec![0.0; n];
    let mut cy = vec![0.0; n];
    let mut cz = vec![0.0; n];
    for k in 0..n {
        cx[k] = dz_dy[k];
        cy[k] = -dz_dx[k];
        cz[k] = dy_dx[k] - dx_dy[k];
    }
    VectorField::from_raw(v.shape(), [cx, cy, cz])
}

pub fn laplacian(grid: &Grid, f: &ScalarField) -> ScalarField {
    ScalarField::with_shape(f.shape(), laplacian_raw(grid, f.values()))
}

pub(crate) fn laplacian_raw(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let a = partial2(grid, f, Axis::X);
    let b = partial2(grid, f, Axis::Y);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

pub fn vector_laplacian(grid: &Grid, v: &VectorField) -> VectorField {
    VectorField::from_raw(v.shape(), [0, 1, 2].map(|c| laplacian_raw(grid, v.component(c))))
}

/// Velocity gradient `G[i][j] = ∂_j v_i` (third column zero).
pub fn grad_vector(grid: &Grid, v: &VectorField) -> TensorField {
    let n = grid.len();
    let mut d = Vec::with_capacity(6);
    for c in 0..3 {
        d.push(partial(grid, v.component(c), Axis::X));
        d.push(partial(grid, v.component(c), Axis::Y));
    }
    let data = (0..n)
        .map(|k| {
            let mut g = [[0.0; 3]; 3];
            for c in 0..3 {
                g[c][0] = d[2 * c][k];
                g[c][1] = d[2 * c + 1][k];
            }
            g
        })
        .collect();
    TensorField::from_vec(v.shape(), data)
}

/// Symmetric part `D = (∇v + ∇vᵀ)/2`.
pub fn sym_grad(grid: &Grid, v: &VectorField) -> TensorField {
    grad_vector(grid, v).map(symmetric_part)
}

pub fn symmetric_part(g: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut d = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = 0.5 * (g[i][j] + g[j][i]);
        }
    }
    d
}

/// Location of a point in cell coordinates, clamped into the grid.
#[derive(Clone, Copy, Debug)]
pub struct CellLocation {
    pub i: usize,
    pub j: usize,
    pub fx: f64,
    pub fy: f64,
}

pub fn locate(grid: &Grid, x: f64, y: f64) -> CellLocation {
    let sx = ((x - grid.extent.x0) / grid.hx).clamp(0.0, grid.nx as f64);
    let sy = ((y - grid.extent.y0) / grid.hy).clamp(0.0, grid.ny as f64);
    let i = (sx.floor() as usize).min(grid.nx - 1);
    let j = (sy.floor() as usize).min(grid.ny - 1);
    CellLocation { i, j, fx: sx - i as f64, fy: sy - j as f64 }
}

/// Bilinear interpolation of a node array; points outside are clamped to the boundary.
pub fn interpolate(grid: &Grid, f: &[f64], x: f64, y: f64) -> f64 {
    let loc = locate(grid, x, y);
    interpolate_at(grid, f, loc)
}

#[inline]
pub fn interpolate_at(grid: &Grid, f: &[f64], loc: CellLocation) -> f64 {
    let k = grid.idx(loc.i, loc.j);
    let ni = grid.ni();
    let (fx, fy) = (loc.fx, loc.fy);
    (1.0 - fy) * ((1.0 - fx) * f[k] + fx * f[k + 1]) + fy * ((1.0 - fx) * f[k + ni] + fx * f[k + ni + 1])
}

pub fn interpolate_vector(grid: &Grid, v: &VectorField, x: f64, y: f64) -> [f64; 3] {
    let loc = locate(grid, x, y);
    [0, 1, 2].map(|c| interpolate_at(grid, v.component(c), loc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Extent;

    fn interior(grid: &Grid) -> impl Iterator<Item = usize> + '_ {
        (0..grid.len()).filter(move |&k| {
            let (i, j) = grid.ij(k);
            grid.is_interior(i, j)
        })
    }

    #[test]
    fn gradient_of_x_is_unit() {
        let g = Grid::new(10, 7, Extent { x0: 0.0, x1: 1.0, y0: -1.0, y1: 0.5 }).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| x);
        let grad = gradient(&g, &f);
        for k in 0..g.len() {
            assert!((grad.at(k)[0] - 1.0).abs() < 1e-12);
            assert!(grad.at(k)[1].abs() < 1e-12);
            assert_eq!(grad.at(k)[2], 0.0);
        }
    }

    #[test]
    fn curl_of_shear_flow() {
        let g = Grid::unit_square(8).unwrap();
        let v = VectorField::from_fn(&g, |_, y| [y, 0.0, 0.0]);
        let c = curl(&g, &v);
        for k in interior(&g) {
            let ck = c.at(k);
            assert!(ck[0].abs() < 1e-12 && ck[1].abs() < 1e-12);
            assert!((ck[2] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_x_squared() {
        let g = Grid::new(10, 10, Extent::unit()).unwrap();
        assert!((g.hx - 0.1).abs() < 1e-15);
        let f = ScalarField::from_fn(&g, |x, _| x * x);
        let lap = laplacian(&g, &f);
        // one-sided boundary stencils are exact for quadratics too
        for k in 0..g.len() {
            assert!((lap.values()[k] - 2.0).abs() < 1e-9, "k={k}: {}", lap.values()[k]);
        }
    }

    #[test]
    fn affine_fields_are_reproduced_everywhere() {
        let g = Grid::new(6, 9, Extent { x0: 0.3, x1: 1.1, y0: 0.0, y1: 2.0 }).unwrap();
        let v = VectorField::from_fn(&g, |x, y| [2.0 * x - y, 0.5 * x + 3.0 * y, -x]);
        let d = divergence(&g, &v);
        let gv = grad_vector(&g, &v);
        for k in 0..g.len() {
            assert!((d.values()[k] - 5.0).abs() < 1e-12);
            let t = gv.at(k);
            assert!((t[0][0] - 2.0).abs() < 1e-12 && (t[0][1] + 1.0).abs() < 1e-12);
            assert!((t[1][0] - 0.5).abs() < 1e-12 && (t[1][1] - 3.0).abs() < 1e-12);
            assert!((t[2][0] + 1.0).abs() < 1e-12 && t[2][1].abs() < 1e-12);
        }
    }

    #[test]
    fn central_derivative_is_second_order() {
        let errs: Vec<f64> = [16, 32]
            .iter()
            .map(|&n| {
                let g = Grid::unit_square(n).unwrap();
                let f = ScalarField::from_fn(&g, |x, y| (2.0 * x).sin() * y.cos());
                let d = partial(&g, f.values(), Axis::X);
                (0..g.len())
                    .map(|k| {
                        let (x, y) = g.point(k);
                        (d[k] - 2.0 * (2.0 * x).cos() * y.cos()).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn bilinear_interpolation_is_exact_for_bilinear_functions() {
        let g = Grid::new(5, 4, Extent { x0: -1.0, x1: 1.0, y0: 0.0, y1: 3.0 }).unwrap();
        let f = ScalarField::from_fn(&g, |x, y| 1.0 + 2.0 * x - y + 0.5 * x * y);
        for &(x, y) in &[(0.13, 0.77), (-0.99, 2.95), (1.0, 3.0), (-1.0, 0.0)] {
            let want = 1.0 + 2.0 * x - y + 0.5 * x * y;
            assert!((interpolate(&g, f.values(), x, y) - want).abs() < 1e-12);
        }
        // clamped outside
        let inside = interpolate(&g, f.values(), 1.0, 1.0);
        assert!((interpolate(&g, f.values(), 5.0, 1.0) - inside).abs() < 1e-12);
    }
}
