use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial probability measures shared by the grid solver and the particle
/// simulator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// The equilibrium `nu = nu_x ⊗ nu_v`.
    Equilibrium,
    /// Point mass at `(x, v)`; on a grid it becomes the mass of one cell.
    Delta { x: Vec<f64>, v: Vec<f64> },
    /// Uniform in the periodic box `prod (x_lo_i, x_hi_i)` times `nu_v`,
    /// optionally conditioned on the velocity box `[v_lo, v_hi]`.
    Box {
        x_lo: Vec<f64>,
        x_hi: Vec<f64>,
        #[serde(default)]
        v_lo: Option<Vec<f64>>,
        #[serde(default)]
        v_hi: Option<Vec<f64>>,
    },
    /// `(1 + amplitude cos(2 pi mode . x)) nu`.
    Cosine { amplitude: f64, mode: Vec<i64> },
}

impl InitialData {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InitialData::Equilibrium => {}
            InitialData::Delta { x, v } => {
                if x.len() != dim || v.len() != dim {
                    return Err(Error::config(format!("delta initial data needs {dim}-dimensional x and v")));
                }
            }
            InitialData::Box { x_lo, x_hi, v_lo, v_hi } => {
                if x_lo.len() != dim || x_hi.len() != dim {
                    return Err(Error::config(format!("initial box needs {dim} bounds per side")));
                }
                if x_lo.iter().zip(x_hi).any(|(l, h)| !(h > l) || h - l > 1.0) {
                    return Err(Error::config("initial box needs 0 < x_hi - x_lo <= 1"));
                }
                match (v_lo, v_hi) {
                    (None, None) => {}
                    (Some(l), Some(h)) => {
                        if l.len() != dim || h.len() != dim || l.iter().zip(h).any(|(a, b)| a > b) {
                            return Err(Error::config("initial velocity box needs v_lo <= v_hi per coordinate"));
                        }
                    }
                    _ => return Err(Error::config("give both v_lo and v_hi or neither")),
                }
            }
            InitialData::Cosine { amplitude, mode } => {
                if mode.len() != dim {
                    return Err(Error::config(format!("cosine mode needs {dim} components")));
                }
                if !(amplitude.abs() <= 1.0) {
                    return Err(Error::config("cosine amplitude must lie in [-1, 1]"));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn velocity_window(&self) -> Option<(&[f64], &[f64])> {
        match self {
            InitialData::Box {
                v_lo: Some(l),
                v_hi: Some(h),
                ..
            } => Some((l, h)),
            _ => None,
        }
    }
}

/// Length of `(a, b) ∩ (lo, hi)` on the circle, with `0 <= hi - lo <= 1`.
pub(crate) fn periodic_overlap(a: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    let shift = lo.floor();
    let (lo, hi) = (lo - shift, hi - shift);
    for k in [-1.0, 0.0, 1.0] {
        total += ((hi + k).min(b) - (lo + k).max(a)).max(0.0);
    }
    total
}
