//! Torus arithmetic, periodic potentials and the characteristic flow
//! `x' = v, v' = -grad W(x)` on the unit torus.

mod flow;
mod potential;

pub use flow::{energy, flow, flow_derivative_bound, flow_in_place, FlowConfig, FlowMethod};
pub use potential::{potential_bounds, CosineTerm, Potential, PotentialBounds};

use serde::{Deserialize, Serialize};

/// Canonical representative of `y mod 1`, always in `[0, 1)`.
#[inline]
pub fn wrap_scalar(y: f64) -> f64 {
    let r = y - y.floor();
    // y = -1e-18 gives r = 1.0 after rounding
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Wraps every coordinate of `y` onto the unit torus.
pub fn wrap(y: &[f64]) -> TorusPoint {
    TorusPoint(y.iter().map(|&c| wrap_scalar(c)).collect())
}

/// Signed shortest displacement from `a` to `b` on the circle, in `[-1/2, 1/2)`.
#[inline]
pub fn torus_delta(a: f64, b: f64) -> f64 {
    let d = wrap_scalar(b - a);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

/// A point of the unit torus with coordinates in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    pub fn new(coords: &[f64]) -> Self {
        wrap(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// A phase-space point `(x, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: TorusPoint,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: &[f64], v: &[f64]) -> Self {
        assert_eq!(x.len(), v.len(), "position and velocity dimensions differ");
        PhasePoint {
            x: TorusPoint::new(x),
            v: v.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }
}
