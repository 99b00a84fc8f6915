//! Velocity spaces and the velocity law `nu_v` carried by each of them.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The velocity space `V`. Balls and boxes carry the uniform law,
/// discrete sets their weights, and `Full` (all of `R^d`) the standard
/// Maxwellian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpace {
    /// Open ball of the given radius centred at the origin.
    Ball { radius: f64 },
    /// Open box `prod_i (lo_i, hi_i)`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Discrete {
        velocities: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Full,
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        d => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

impl VelocitySpace {
    /// The two-speed Goldstein-Taylor set `{-1, +1}` with equal weights.
    pub fn goldstein_taylor() -> Self {
        VelocitySpace::Discrete {
            velocities: vec![vec![-1.0], vec![1.0]],
            weights: vec![0.5, 0.5],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            VelocitySpace::Ball { radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::config("velocity ball radius must be positive"));
                }
            }
            VelocitySpace::Box { lo, hi } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::config(format!("velocity box needs {dim} bounds per side")));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l < h) || !l.is_finite() || !h.is_finite()) {
                    return Err(Error::config("velocity box requires lo < hi in every coordinate"));
                }
            }
            VelocitySpace::Discrete { velocities, weights } => {
                if velocities.is_empty() || velocities.len() != weights.len() {
                    return Err(Error::config("discrete velocities and weights must be nonempty and of equal length"));
                }
                if velocities.iter().any(|v| v.len() != dim) {
                    return Err(Error::config(format!("every discrete velocity needs {dim} components")));
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::config("discrete velocity weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::config(format!("discrete velocity weights sum to {total}, expected 1")));
                }
            }
            VelocitySpace::Full => {}
        }
        Ok(())
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, VelocitySpace::Full)
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, VelocitySpace::Discrete { .. })
    }

    /// Lebesgue measure `|V|` for balls and boxes.
    pub fn volume(&self, dim: usize) -> Option<f64> {
        match self {
            VelocitySpace::Ball { radius } => Some(unit_ball_volume(dim) * radius.powi(dim as i32)),
            VelocitySpace::Box { lo, hi } => Some(lo.iter().zip(hi).map(|(l, h)| h - l).product()),
            _ => None,
        }
    }

    /// Largest speed in `V` (infinite for `Full`).
    pub fn max_speed(&self) -> f64 {
        match self {
            VelocitySpace::Ball { radius } => *radius,
            VelocitySpace::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            VelocitySpace::Discrete { velocities, .. } => velocities
                .iter()
                .map(|v| v.iter().map(|c| c * c).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
            VelocitySpace::Full => f64::INFINITY,
        }
    }

    /// Closest point of the closure of `V` (continuous spaces only).
    pub fn project(&self, v: &mut [f64], v_max: f64) {
        match self {
            VelocitySpace::Ball { radius } => project_ball(v, *radius),
            VelocitySpace::Full => project_ball(v, v_max),
            VelocitySpace::Box { lo, hi } => {
                for ((c, l), h) in v.iter_mut().zip(lo).zip(hi) {
                    *c = c.clamp(*l, *h);
                }
            }
            VelocitySpace::Discrete { .. } => {}
        }
    }

    /// Velocity sample set for the control search: a tensor grid with
    /// `n_per_axis` points per axis (endpoints included) restricted to the
    /// closure of `V`, or every point of a discrete set. `Full` is truncated
    /// to the ball of radius `v_max`.
    pub fn sample_grid(&self, dim: usize, n_per_axis: usize, v_max: f64) -> Vec<Vec<f64>> {
        let axes: Vec<(f64, f64)> = match self {
            VelocitySpace::Discrete { velocities, .. } => return velocities.clone(),
            VelocitySpace::Ball { radius } => vec![(-radius, *radius); dim],
            VelocitySpace::Full => vec![(-v_max, v_max); dim],
            VelocitySpace::Box { lo, hi } => lo.iter().copied().zip(hi.iter().copied()).collect(),
        };
        let n = n_per_axis.max(1);
        let coord = |(l, h): (f64, f64), i: usize| {
            if n == 1 {
                0.5 * (l + h)
            } else {
                l + (h - l) * i as f64 / (n - 1) as f64
            }
        };
        let radius = match self {
            VelocitySpace::Ball { radius } => Some(*radius),
            VelocitySpace::Full => Some(v_max),
            _ => None,
        };
        let total = n.pow(dim as u32);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let v: Vec<f64> = axes
                .iter()
                .map(|&ax| {
                    let i = rem % n;
                    rem /= n;
                    coord(ax, i)
                })
                .collect();
            match radius {
                Some(r) if v.iter().map(|c| c * c).sum::<f64>().sqrt() > r * (1.0 + 1e-12) => {}
                _ => out.push(v),
            }
        }
        out
    }

    /// Draws one velocity from the law `nu_v` on `V`.
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        match self {
            VelocitySpace::Ball { radius } => loop {
                let v: Vec<f64> = (0..dim).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect();
                if v.iter().map(|c| c * c).sum::<f64>() < radius * radius {
                    return v;
                }
            },
            VelocitySpace::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            VelocitySpace::Discrete { velocities, weights } => {
                velocities[sample_index(weights, rng.random::<f64>())].clone()
            }
            VelocitySpace::Full => (0..dim).map(|_| StandardNormal.sample(rng)).collect(),
        }
    }

    /// Density of `nu_v` with respect to Lebesgue measure (continuous spaces).
    pub fn density(&self, v: &[f64], dim: usize) -> f64 {
        match self {
            VelocitySpace::Full => maxwellian(v),
            VelocitySpace::Ball { radius } => {
                if v.iter().map(|c| c * c).sum::<f64>() < radius * radius {
                    1.0 / self.volume(dim).unwrap()
                } else {
                    0.0
                }
            }
            VelocitySpace::Box { lo, hi } => {
                let inside = v.iter().zip(lo.iter().zip(hi)).all(|(c, (l, h))| l < c && c < h);
                if inside {
                    1.0 / self.volume(dim).unwrap()
                } else {
                    0.0
                }
            }
            VelocitySpace::Discrete { .. } => f64::NAN,
        }
    }
}

/// Standard Maxwellian `(2 pi)^{-d/2} exp(-|v|^2/2)`.
pub fn maxwellian(v: &[f64]) -> f64 {
    let s2: f64 = v.iter().map(|c| c * c).sum();
    (2.0 * PI).powf(-(v.len() as f64) / 2.0) * (-0.5 * s2).exp()
}

fn project_ball(v: &mut [f64], r: f64) {
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n > r {
        v.iter_mut().for_each(|c| *c *= r / n);
    }
}

/// Index drawn from a discrete distribution given a uniform `u` in `[0, 1)`.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let target = u * total;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
