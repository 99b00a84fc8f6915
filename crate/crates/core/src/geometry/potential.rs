use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// One term `a cos(2 pi (k.x + phi))` of a cosine-sum potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub a: f64,
    pub k: Vec<i64>,
    #[serde(default)]
    pub phi: f64,
}

impl CosineTerm {
    fn phase(&self, x: &[f64]) -> f64 {
        let kx: f64 = self.k.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
        TWO_PI * (kx + self.phi)
    }

    fn k_norm(&self) -> f64 {
        self.k.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt()
    }
}

/// A smooth 1-periodic potential `W` on the torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    #[default]
    Zero,
    CosineSum { terms: Vec<CosineTerm> },
}

impl Potential {
    /// `a cos(2 pi x)` in one dimension.
    pub fn cosine_1d(a: f64) -> Self {
        Potential::CosineSum {
            terms: vec![CosineTerm {
                a,
                k: vec![1],
                phi: 0.0,
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Potential::Zero => true,
            Potential::CosineSum { terms } => terms.iter().all(|t| t.a == 0.0),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if let Potential::CosineSum { terms } = self {
            for (i, t) in terms.iter().enumerate() {
                if t.k.len() != dim {
                    return Err(Error::config(format!(
                        "potential term {i}: wave vector has {} entries, expected {dim}",
                        t.k.len()
                    )));
                }
                if !t.a.is_finite() || !t.phi.is_finite() {
                    return Err(Error::config(format!("potential term {i}: non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::CosineSum { terms } => terms.iter().map(|t| t.a * t.phase(x).cos()).sum(),
        }
    }

    /// Writes `grad W(x)` into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        if let Potential::CosineSum { terms } = self {
            for t in terms {
                let s = -t.a * TWO_PI * t.phase(x).sin();
                for (g, &k) in out.iter_mut().zip(&t.k) {
                    *g += s * k as f64;
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(x, &mut g);
        g
    }

    /// Row-major `d x d` Hessian.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut h = vec![0.0; d * d];
        if let Potential::CosineSum { terms } = self {
            for t in terms {
                let c = -t.a * TWO_PI * TWO_PI * t.phase(x).cos();
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] += c * (t.k[i] * t.k[j]) as f64;
                    }
                }
            }
        }
        h
    }

    /// Analytic majorants of `sup|grad W|`, `sup||Hess W||` and of the
    /// third-derivative norm, from the triangle inequality over terms.
    pub fn analytic_majorants(&self) -> [f64; 3] {
        match self {
            Potential::Zero => [0.0; 3],
            Potential::CosineSum { terms } => terms.iter().fold([0.0; 3], |acc, t| {
                let a = t.a.abs();
                let kn = t.k_norm();
                [
                    acc[0] + a * TWO_PI * kn,
                    acc[1] + a * (TWO_PI * kn).powi(2),
                    acc[2] + a * (TWO_PI * kn).powi(3),
                ]
            }),
        }
    }
}

/// Largest absolute eigenvalue of a symmetric matrix (exact for d <= 2,
/// Frobenius norm above).
fn sym_operator_norm(h: &[f64], d: usize) -> f64 {
    match d {
        1 => h[0].abs(),
        2 => {
            let (a, b, c) = (h[0], h[1], h[3]);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            (mean + rad).abs().max((mean - rad).abs())
        }
        _ => h.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

/// Certified bounds on a potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialBounds {
    /// `G >= sup |grad W|`
    pub grad_sup: f64,
    /// `H >= sup ||Hess W||`
    pub hess_sup: f64,
    /// `Z = integral of exp(-W)` over the unit torus.
    pub partition: f64,
    pub grad_grid_max: f64,
    pub hess_grid_max: f64,
    pub grid_points_per_axis: usize,
}

fn points_per_axis(dim: usize) -> usize {
    match dim {
        0 | 1 => 4096,
        2 => 256,
        d => ((1u64 << 18) as f64).powf(1.0 / d as f64).floor().max(8.0) as usize,
    }
}

/// Computes `(G, H, Z)` for `W`.
///
/// `G` and `H` are the smaller of the analytic majorant and the dense-grid
/// maximum inflated by a Lipschitz correction (half the grid diagonal times
/// the next-derivative majorant), so both remain upper bounds. `Z` uses the
/// periodic trapezoid rule, which converges spectrally for trigonometric `W`.
pub fn potential_bounds(w: &Potential, dim: usize) -> PotentialBounds {
    let n = points_per_axis(dim);
    if w.is_zero() {
        return PotentialBounds {
            grad_sup: 0.0,
            hess_sup: 0.0,
            partition: 1.0,
            grad_grid_max: 0.0,
            hess_grid_max: 0.0,
            grid_points_per_axis: n,
        };
    }
    let total = n.pow(dim as u32);
    let h = 1.0 / n as f64;
    let mut x = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let (mut gmax, mut hmax, mut zsum) = (0.0f64, 0.0f64, 0.0f64);
    for idx in 0..total {
        let mut rem = idx;
        for xi in x.iter_mut() {
            *xi = (rem % n) as f64 * h;
            rem /= n;
        }
        w.gradient_into(&x, &mut grad);
        gmax = gmax.max(grad.iter().map(|g| g * g).sum::<f64>().sqrt());
        hmax = hmax.max(sym_operator_norm(&w.hessian(&x), dim));
        zsum += (-w.value(&x)).exp();
    }
    let [g_an, h_an, t_an] = w.analytic_majorants();
    let half_diag = 0.5 * h * (dim as f64).sqrt();
    PotentialBounds {
        grad_sup: g_an.min(gmax + h_an * half_diag),
        hess_sup: h_an.min(hmax + t_an * half_diag),
        partition: zsum / total as f64,
        grad_grid_max: gmax,
        hess_grid_max: hmax,
        grid_points_per_axis: n,
    }
}
