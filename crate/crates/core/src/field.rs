//! Node-valued scalar, vector and tensor fields and the `State` snapshot.

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub ni: usize,
    pub nj: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.ni * self.nj
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    shape: Shape,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        ScalarField { shape: grid.shape(), data: vec![value; grid.len()] }
    }

    pub fn from_fn<F: FnMut(f64, f64) -> f64>(grid: &Grid, mut f: F) -> Self {
        let data = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        ScalarField { shape: grid.shape(), data }
    }

    pub fn from_vec(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("{} values for {} nodes", data.len(), grid.len())));
        }
        Ok(ScalarField { shape: grid.shape(), data })
    }

    pub(crate) fn with_shape(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), data.len());
        ScalarField { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.shape.ni + i]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        ScalarField { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> Self {
        assert_eq!(self.shape, other.shape, "field shapes differ");
        ScalarField { shape: self.shape, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.shape == grid.shape()
    }
}

/// Three-component vector field on a 2D grid; derivatives in z vanish.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    shape: Shape,
    comps: [Vec<f64>; 3],
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, [0.0; 3])
    }

    pub fn constant(grid: &Grid, v: [f64; 3]) -> Self {
        let n = grid.len();
        VectorField { shape: grid.shape(), comps: [vec![v[0]; n], vec![v[1]; n], vec![v[2]; n]] }
    }

    pub fn from_fn<F: FnMut(f64, f64) -> [f64; 3]>(grid: &Grid, mut f: F) -> Self {
        let n = grid.len();
        let mut comps = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for k in 0..n {
            let (x, y) = grid.point(k);
            let v = f(x, y);
            for c in 0..3 {
                comps[c][k] = v[c];
            }
        }
        VectorField { shape: grid.shape(), comps }
    }

    pub fn from_components(x: ScalarField, y: ScalarField, z: ScalarField) -> Self {
        assert!(x.shape == y.shape && y.shape == z.shape, "component shapes differ");
        VectorField { shape: x.shape, comps: [x.data, y.data, z.data] }
    }

    pub(crate) fn from_raw(shape: Shape, comps: [Vec<f64>; 3]) -> Self {
        VectorField { shape, comps }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn component_field(&self, c: usize) -> ScalarField {
        ScalarField { shape: self.shape, data: self.comps[c].clone() }
    }

    pub fn components(&self) -> [&[f64]; 3] {
        [&self.comps[0], &self.comps[1], &self.comps[2]]
    }

    #[inline]
    pub fn at(&self, k: usize) -> [f64; 3] {
        [self.comps[0][k], self.comps[1][k], self.comps[2][k]]
    }

    #[inline]
    pub fn set(&mut self, k: usize, v: [f64; 3]) {
        for c in 0..3 {
            self.comps[c][k] = v[c];
        }
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.len()).map(|k| norm3(self.at(k))).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn scaled(&self, a: f64) -> Self {
        VectorField {
            shape: self.shape,
            comps: [0, 1, 2].map(|c| self.comps[c].iter().map(|v| a * v).collect()),
        }
    }

    pub fn zip_map<F: Fn([f64; 3], [f64; 3]) -> [f64; 3]>(&self, other: &VectorField, f: F) -> Self {
        assert_eq!(self.shape, other.shape, "field shapes differ");
        let mut out = self.clone();
        for k in 0..self.len() {
            out.set(k, f(self.at(k), other.at(k)));
        }
        out
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.shape == grid.shape()
    }
}

/// Per-node 3×3 tensors, `t[k][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    shape: Shape,
    data: Vec<[[f64; 3]; 3]>,
}

impl TensorField {
    pub fn from_vec(shape: Shape, data: Vec<[[f64; 3]; 3]>) -> Self {
        assert_eq!(shape.len(), data.len());
        TensorField { shape, data }
    }

    pub fn constant(grid: &Grid, t: [[f64; 3]; 3]) -> Self {
        TensorField { shape: grid.shape(), data: vec![t; grid.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[[[f64; 3]; 3]] {
        &self.data
    }

    pub fn at(&self, k: usize) -> [[f64; 3]; 3] {
        self.data[k]
    }

    pub fn map<F: Fn([[f64; 3]; 3]) -> [[f64; 3]; 3]>(&self, f: F) -> Self {
        TensorField { shape: self.shape, data: self.data.iter().map(|&t| f(t)).collect() }
    }
}

#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Snapshot of the four unknowns at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub time: f64,
    pub rho: ScalarField,
    pub u: VectorField,
    pub theta: ScalarField,
    pub b: VectorField,
}

impl State {
    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.u.is_finite() && self.theta.is_finite() && self.b.is_finite()
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.rho.matches(grid) && self.u.matches(grid) && self.theta.matches(grid) && self.b.matches(grid)
    }
}

/// Time-ordered sequence of states sharing one grid and a uniform step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn new(states: Vec<State>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        Ok(Trajectory { states })
    }

    /// Constant-in-time extension of `initial` onto the given time levels.
    pub fn constant_extension(initial: &State, times: &[f64]) -> Self {
        let states = times
            .iter()
            .map(|&t| State { time: t, ..initial.clone() })
            .collect();
        Trajectory { states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.time).collect()
    }

    pub fn first(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn rho(&self) -> Vec<ScalarField> {
        self.states.iter().map(|s| s.rho.clone()).collect()
    }

    pub fn velocity(&self) -> Vec<VectorField> {
        self.states.iter().map(|s| s.u.clone()).collect()
    }

    /// Append `other`, dropping its first state when it duplicates our last time.
    pub fn extend(&mut self, other: Trajectory) {
        let skip = match (self.states.last(), other.states.first()) {
            (Some(a), Some(b)) if (a.time - b.time).abs() <= 1e-12 * (1.0 + a.time.abs()) => 1,
            _ => 0,
        };
        self.states.extend(other.states.into_iter().skip(skip));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_product_is_right_handed() {
        assert_eq!(cross([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), [0.0, 0.0, 1.0]);
        assert_eq!(cross([0.0, 0.0, 1.0], [0.0, 2.0, 0.0]), [-2.0, 0.0, 0.0]);
    }

    #[test]
    fn extend_skips_the_shared_level() {
        let g = Grid::unit_square(4).unwrap();
        let s = State {
            time: 0.0,
            rho: ScalarField::constant(&g, 1.0),
            u: VectorField::zeros(&g),
            theta: ScalarField::constant(&g, 1.0),
            b: VectorField::zeros(&g),
        };
        let mut a = Trajectory::constant_extension(&s, &[0.0, 0.1]);
        a.extend(Trajectory::constant_extension(&s, &[0.1, 0.2, 0.3]));
        assert_eq!(a.times(), vec![0.0, 0.1, 0.2, 0.3]);
    }

    #[test]
    fn from_vec_checks_length() {
        let g = Grid::unit_square(4).unwrap();
        assert!(ScalarField::from_vec(&g, vec![0.0; 3]).is_err());
        assert!(ScalarField::from_vec(&g, vec![0.0; 25]).is_ok());
    }
}
