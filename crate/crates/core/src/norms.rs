//! Discrete Lebesgue/Sobolev norms and their space-time aggregates.
//!
//! Space integrals use the trapezoidal node weights (the midpoint rule on dual
//! cells); time integrals use the right-endpoint rectangle rule over the levels
//! after the first. `W^{k,q}` norms sum the `q`-th powers of the function and of
//! all its partial derivatives up to order `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ScalarField, State, VectorField};
use crate::grid::Grid;
use crate::ops::{partial, partial2, Axis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeAggregation {
    SupTime,
    LpTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSelector {
    Rho,
    U,
    Theta,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    /// Time exponent; `f64::INFINITY` for the sup norm.
    pub p: f64,
    /// Space exponent; `f64::INFINITY` for the max norm.
    pub q: f64,
    pub field: FieldSelector,
    pub aggregation: TimeAggregation,
    /// Highest derivative order included (0, 1 or 2).
    pub order: u8,
}

impl NormSpec {
    pub fn space(q: f64, order: u8) -> Self {
        NormSpec { p: f64::INFINITY, q, field: FieldSelector::Rho, aggregation: TimeAggregation::SupTime, order }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) || !(self.q > 1.0) {
            return Err(Error::InvalidNormSpec(format!("exponents must lie in (1, inf], got p={}, q={}", self.p, self.q)));
        }
        if self.order > 2 {
            return Err(Error::InvalidNormSpec(format!("derivative order {} > 2", self.order)));
        }
        Ok(())
    }
}

/// Anything that can be viewed as a list of scalar component arrays.
pub trait Components {
    fn component_slices(&self) -> Vec<&[f64]>;
}

impl Components for ScalarField {
    fn component_slices(&self) -> Vec<&[f64]> {
        vec![self.values()]
    }
}

impl Components for VectorField {
    fn component_slices(&self) -> Vec<&[f64]> {
        self.components().to_vec()
    }
}

impl Components for Vec<f64> {
    fn component_slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
}

/// Accumulates `∫|g|^q` (or `max|g|` when `q = ∞`) over node arrays.
struct Accumulator {
    q: f64,
    acc: f64,
}

impl Accumulator {
    fn new(q: f64) -> Self {
        Accumulator { q, acc: 0.0 }
    }

    fn add(&mut self, grid: &Grid, g: &[f64]) {
        if self.q.is_infinite() {
            self.acc = g.iter().fold(self.acc, |m, v| m.max(v.abs()));
        } else if self.q == 2.0 {
            self.acc += g.iter().enumerate().map(|(k, v)| grid.weight(k) * v * v).sum::<f64>();
        } else {
            self.acc += g.iter().enumerate().map(|(k, v)| grid.weight(k) * v.abs().powf(self.q)).sum::<f64>();
        }
    }

    fn finish(&self) -> f64 {
        if self.q.is_infinite() {
            self.acc
        } else if self.q == 2.0 {
            self.acc.sqrt()
        } else {
            self.acc.powf(1.0 / self.q)
        }
    }
}

fn derivative_terms(grid: &Grid, f: &[f64], order: u8, include_lower: bool) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    if include_lower {
        out.push(f.to_vec());
    }
    if order >= 1 {
        let dx = partial(grid, f, Axis::X);
        let dy = partial(grid, f, Axis::Y);
        if order >= 2 {
            out.push(partial2(grid, f, Axis::X));
            out.push(partial2(grid, f, Axis::Y));
            // both mixed derivatives ∂xy and ∂yx
            let dxy = partial(grid, &dx, Axis::Y);
            out.push(dxy.clone());
            out.push(dxy);
        }
        if include_lower || order == 1 {
            out.push(dx);
            out.push(dy);
        }
    }
    out
}

/// `‖f‖_{W^{order,q}}` of a scalar or vector field.
pub fn discrete_norm<F: Components + ?Sized>(grid: &Grid, field: &F, q: f64, order: u8) -> f64 {
    let mut acc = Accumulator::new(q);
    for comp in field.component_slices() {
        for term in derivative_terms(grid, comp, order, true) {
            acc.add(grid, &term);
        }
    }
    acc.finish()
}

/// Seminorm `|f|_{W^{order,q}}`: only derivatives of exactly the given order.
pub fn discrete_seminorm<F: Components + ?Sized>(grid: &Grid, field: &F, q: f64, order: u8) -> f64 {
    if order == 0 {
        return discrete_norm(grid, field, q, 0);
    }
    let mut acc = Accumulator::new(q);
    for comp in field.component_slices() {
        for term in derivative_terms(grid, comp, order, false) {
            acc.add(grid, &term);
        }
    }
    acc.finish()
}

/// Aggregate per-level values `g_n` over time levels `times`.
pub fn aggregate_in_time(times: &[f64], values: &[f64], p: f64, aggregation: TimeAggregation) -> Result<f64> {
    if values.is_empty() || times.len() != values.len() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(match aggregation {
        TimeAggregation::SupTime => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        TimeAggregation::LpTime => {
            if p.is_infinite() {
                values[1..].iter().fold(0.0, |m, v| m.max(v.abs()))
            } else {
                let s: f64 = (1..values.len()).map(|n| (times[n] - times[n - 1]) * values[n].abs().powf(p)).sum();
                s.powf(1.0 / p)
            }
        }
    })
}

/// Space-time norm of a sequence of fields sampled at `times`.
pub fn discrete_space_time_norm<F: Components>(grid: &Grid, times: &[f64], fields: &[F], spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    if fields.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if fields.len() != times.len() {
        return Err(Error::MismatchedSampling(format!("{} fields for {} times", fields.len(), times.len())));
    }
    let per_level: Vec<f64> = fields.iter().map(|f| discrete_norm(grid, f, spec.q, spec.order)).collect();
    aggregate_in_time(times, &per_level, spec.p, spec.aggregation)
}

/// Space-time norm of one field of a state trajectory, selected by `spec.field`.
pub fn trajectory_norm(grid: &Grid, states: &[State], spec: &NormSpec) -> Result<f64> {
    spec.validate()?;
    if states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let times: Vec<f64> = states.iter().map(|s| s.time).collect();
    let per_level: Vec<f64> = states
        .iter()
        .map(|s| match spec.field {
            FieldSelector::Rho => discrete_norm(grid, &s.rho, spec.q, spec.order),
            FieldSelector::U => discrete_norm(grid, &s.u, spec.q, spec.order),
            FieldSelector::Theta => discrete_norm(grid, &s.theta, spec.q, spec.order),
            FieldSelector::B => discrete_norm(grid, &s.b, spec.q, spec.order),
        })
        .collect();
    aggregate_in_time(&times, &per_level, spec.p, spec.aggregation)
}
