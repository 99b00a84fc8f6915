use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_scalar, Potential};
use crate::initial::{periodic_overlap, InitialData};
use crate::problem::{Kernel, ScatterProblem};
use crate::velocity::{maxwellian, VelocitySpace};

/// Largest number of phase-space cells a grid may have.
pub const MAX_CELLS: usize = 1 << 24;

/// Phase-space grid: `n_x` cells per spatial axis and a velocity quadrature
/// whose weights `q` sum to 1. Cell `(i, j)` has measure `dx^d q_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub dim: usize,
    pub n_x: usize,
    pub dx: f64,
    pub velocities: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    /// Velocity cell widths per axis (continuous velocity spaces only).
    pub dv: Option<Vec<f64>>,
}

impl GridShape {
    pub fn n_v(&self) -> usize {
        self.velocities.len()
    }

    /// Number of spatial cells, `n_x^d`.
    pub fn cells_x(&self) -> usize {
        self.n_x.pow(self.dim as u32)
    }

    pub fn len(&self) -> usize {
        self.cells_x() * self.n_v()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    /// Centre of spatial cell `i` (axis 0 varies fastest).
    pub fn x_center(&self, i: usize) -> Vec<f64> {
        let mut rem = i;
        (0..self.dim)
            .map(|_| {
                let c = rem % self.n_x;
                rem /= self.n_x;
                (c as f64 + 0.5) * self.dx
            })
            .collect()
    }

    /// Index of the spatial cell containing `x`.
    pub fn x_cell(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for &c in x {
            let k = ((wrap_scalar(c) / self.dx).floor() as usize).min(self.n_x - 1);
            idx += k * stride;
            stride *= self.n_x;
        }
        idx
    }

    /// Index of the velocity node closest to `v`.
    pub fn nearest_velocity(&self, v: &[f64]) -> usize {
        let dist = |w: &Vec<f64>| w.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let mut best = 0;
        for j in 1..self.n_v() {
            if dist(&self.velocities[j]) < dist(&self.velocities[best]) {
                best = j;
            }
        }
        best
    }
}

/// Grid-density on phase space, stored velocity-major: the values for
/// velocity `j` are the contiguous block `values[j * cells_x ..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDensity {
    pub shape: Arc<GridShape>,
    pub time: f64,
    pub values: Vec<f64>,
}

impl PhaseDensity {
    pub fn zeros(shape: Arc<GridShape>) -> Self {
        let n = shape.len();
        PhaseDensity {
            shape,
            time: 0.0,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(shape: Arc<GridShape>, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                shape.len()
            )));
        }
        Ok(PhaseDensity {
            shape,
            time: 0.0,
            values,
        })
    }

    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.shape.cells_x();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.shape.cells_x() + i]
    }

    /// Mass of each cell, `f dx^d q_j`.
    pub fn cell_masses(&self) -> Vec<f64> {
        let n = self.shape.cells_x();
        let vol = self.shape.x_volume();
        self.values
            .iter()
            .enumerate()
            .map(|(k, f)| f * vol * self.shape.q[k / n])
            .collect()
    }

    pub fn mass(&self) -> f64 {
        let vol = self.shape.x_volume();
        (0..self.shape.n_v())
            .map(|j| self.slice(j).iter().sum::<f64>() * self.shape.q[j])
            .sum::<f64>()
            * vol
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `rho(x) = sum_j q_j f(x, v_j)`.
    pub fn spatial_density(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.shape.cells_x()];
        for j in 0..self.shape.n_v() {
            let q = self.shape.q[j];
            for (r, f) in rho.iter_mut().zip(self.slice(j)) {
                *r += q * f;
            }
        }
        rho
    }

    /// Mass carried by each velocity node.
    pub fn velocity_marginal(&self) -> Vec<f64> {
        let vol = self.shape.x_volume();
        (0..self.shape.n_v())
            .map(|j| self.slice(j).iter().sum::<f64>() * self.shape.q[j] * vol)
            .collect()
    }

    pub fn same_grid(&self, other: &PhaseDensity) -> bool {
        Arc::ptr_eq(&self.shape, &other.shape) || self.shape == other.shape
    }

    /// `a self + b other`.
    pub fn combine(&self, a: f64, other: &PhaseDensity, b: f64) -> Result<PhaseDensity> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch("densities live on different grids".into()));
        }
        Ok(PhaseDensity {
            shape: self.shape.clone(),
            time: self.time,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
        })
    }
}

/// The discrete equilibrium: `nu_x` is the density of `e^{-W}/Z` on the
/// spatial cells and `nu_v` the density of the velocity law relative to `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub nu_x: Vec<f64>,
    pub nu_v: Vec<f64>,
}

impl Equilibrium {
    pub fn density(&self, shape: &Arc<GridShape>) -> PhaseDensity {
        let mut values = Vec::with_capacity(shape.len());
        for &nv in &self.nu_v {
            values.extend(self.nu_x.iter().map(|nx| nx * nv));
        }
        PhaseDensity {
            shape: shape.clone(),
            time: 0.0,
            values,
        }
    }
}

/// Stationary law of a column-stochastic matrix (lazy power iteration).
pub fn stationary_distribution(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|j| 0.5 * pi[j] + 0.5 * (0..n).map(|k| rows[j][k] * pi[k]).sum::<f64>())
            .collect();
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-16 {
            break;
        }
    }
    let total: f64 = pi.iter().sum();
    pi.iter().map(|p| p / total).collect()
}

pub(crate) struct BuiltGrid {
    pub shape: Arc<GridShape>,
    pub equilibrium: Equilibrium,
}

fn default_v_max(w: &Potential) -> f64 {
    let osc = match w {
        Potential::Zero => 0.0,
        Potential::CosineSum { terms } => 2.0 * terms.iter().map(|t| t.a.abs()).sum::<f64>(),
    };
    6.0 + (2.0 * osc).sqrt()
}

pub(crate) fn build_grid(problem: &ScatterProblem, n_x: usize, n_v: Option<usize>, v_max: Option<f64>) -> Result<BuiltGrid> {
    let d = problem.dim;
    if n_x < 2 {
        return Err(Error::config("need at least 2 spatial cells per axis"));
    }
    let dx = 1.0 / n_x as f64;
    let (velocities, q, nu_v, dv) = match &problem.velocity {
        VelocitySpace::Discrete { velocities, weights } => {
            let n = velocities.len();
            let law = match &problem.kernel {
                Kernel::Equilibrium => weights.clone(),
                Kernel::Matrix { rows } => stationary_distribution(rows),
            };
            (
                velocities.clone(),
                vec![1.0 / n as f64; n],
                law.iter().map(|w| w * n as f64).collect::<Vec<f64>>(),
                None,
            )
        }
        space => {
            let n_v = n_v.ok_or_else(|| Error::config("continuous velocity spaces need n_v"))?;
            if n_v == 0 {
                return Err(Error::config("n_v must be positive"));
            }
            let axes: Vec<(f64, f64)> = match space {
                VelocitySpace::Ball { radius } => vec![(-radius, *radius); d],
                VelocitySpace::Box { lo, hi } => lo.iter().copied().zip(hi.iter().copied()).collect(),
                _ => {
                    let vm = v_max.unwrap_or_else(|| default_v_max(&problem.potential));
                    if !(vm > 0.0) {
                        return Err(Error::config("v_max must be positive"));
                    }
                    vec![(-vm, vm); d]
                }
            };
            let widths: Vec<f64> = axes.iter().map(|(l, h)| (h - l) / n_v as f64).collect();
            let mut nodes = Vec::new();
            for idx in 0..n_v.pow(d as u32) {
                let mut rem = idx;
                let v: Vec<f64> = axes
                    .iter()
                    .zip(&widths)
                    .map(|(&(l, _), w)| {
                        let c = rem % n_v;
                        rem /= n_v;
                        l + (c as f64 + 0.5) * w
                    })
                    .collect();
                let keep = match space {
                    VelocitySpace::Ball { radius } => v.iter().map(|c| c * c).sum::<f64>() < radius * radius,
                    _ => true,
                };
                if keep {
                    nodes.push(v);
                }
            }
            if nodes.is_empty() {
                return Err(Error::config("velocity grid has no nodes inside V"));
            }
            if !problem.potential.is_zero() && !(d == 1 && *space == VelocitySpace::Full) {
                return Err(Error::config(
                    "grids with a nonzero potential are limited to d = 1 and V = R (Maxwellian)",
                ));
            }
            let n = nodes.len();
            let q = vec![1.0 / n as f64; n];
            let nu: Vec<f64> = if *space == VelocitySpace::Full {
                let m: Vec<f64> = nodes.iter().map(|v| maxwellian(v)).collect();
                let total: f64 = m.iter().sum();
                m.iter().map(|x| x / total * n as f64).collect()
            } else {
                vec![1.0; n]
            };
            (nodes, q, nu, Some(widths))
        }
    };
    let cells = n_x.checked_pow(d as u32).and_then(|c| c.checked_mul(velocities.len()));
    match cells {
        Some(c) if c <= MAX_CELLS => {}
        _ => return Err(Error::config(format!("grid exceeds the size guard of {MAX_CELLS} cells"))),
    }
    let shape = Arc::new(GridShape {
        dim: d,
        n_x,
        dx,
        velocities,
        q,
        dv,
    });
    let weights: Vec<f64> = (0..shape.cells_x())
        .map(|i| (-problem.potential.value(&shape.x_center(i))).exp())
        .collect();
    let z: f64 = weights.iter().sum::<f64>() * shape.x_volume();
    Ok(BuiltGrid {
        equilibrium: Equilibrium {
            nu_x: weights.iter().map(|w| w / z).collect(),
            nu_v,
        },
        shape,
    })
}

/// Projects initial data onto the grid (a probability density).
pub(crate) fn initial_density(init: &InitialData, shape: &Arc<GridShape>, eq: &Equilibrium) -> Result<PhaseDensity> {
    init.validate(shape.dim)?;
    let mut f = match init {
        InitialData::Equilibrium => eq.density(shape),
        InitialData::Delta { x, v } => {
            let mut f = PhaseDensity::zeros(shape.clone());
            let i = shape.x_cell(x);
            let j = shape.nearest_velocity(v);
            f.values[j * shape.cells_x() + i] = 1.0 / (shape.x_volume() * shape.q[j]);
            f
        }
        InitialData::Cosine { amplitude, mode } => {
            let mut f = eq.density(shape);
            let n = shape.cells_x();
            for i in 0..n {
                let x = shape.x_center(i);
                let phase: f64 = x.iter().zip(mode).map(|(a, &k)| a * k as f64).sum();
                let factor = 1.0 + amplitude * (2.0 * std::f64::consts::PI * phase).cos();
                for j in 0..shape.n_v() {
                    f.values[j * n + i] *= factor;
                }
            }
            f
        }
        InitialData::Box { x_lo, x_hi, .. } => {
            let n = shape.cells_x();
            let xw: Vec<f64> = (0..n)
                .map(|i| {
                    let c = shape.x_center(i);
                    c.iter()
                        .zip(x_lo.iter().zip(x_hi))
                        .map(|(&ci, (&l, &h))| {
                            periodic_overlap(ci - 0.5 * shape.dx, ci + 0.5 * shape.dx, l, h) / shape.dx
                        })
                        .product()
                })
                .collect();
            let vw: Vec<f64> = (0..shape.n_v())
                .map(|j| {
                    let base = eq.nu_v[j];
                    match init.velocity_window() {
                        None => base,
                        Some((lo, hi)) => {
                            let v = &shape.velocities[j];
                            let frac: f64 = match &shape.dv {
                                None => {
                                    if v.iter().zip(lo.iter().zip(hi)).all(|(c, (l, h))| l <= c && c <= h) {
                                        1.0
                                    } else {
                                        0.0
                                    }
                                }
                                Some(dv) => v
                                    .iter()
                                    .zip(dv)
                                    .zip(lo.iter().zip(hi))
                                    .map(|((c, w), (l, h))| {
                                        ((c + 0.5 * w).min(*h) - (c - 0.5 * w).max(*l)).max(0.0) / w
                                    })
                                    .product(),
                            };
                            base * frac
                        }
                    }
                })
                .collect();
            let mut values = Vec::with_capacity(shape.len());
            for w in &vw {
                values.extend(xw.iter().map(|x| x * w));
            }
            PhaseDensity {
                shape: shape.clone(),
                time: 0.0,
                values,
            }
        }
    };
    let m = f.mass();
    if !(m > 0.0) {
        return Err(Error::config("initial data has no mass on this grid"));
    }
    f.values.iter_mut().for_each(|v| *v /= m);
    Ok(f)
}
