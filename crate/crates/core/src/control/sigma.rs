use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{torus_delta, wrap_scalar};

fn one() -> f64 {
    1.0
}

/// A bump of the given height supported on the torus ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "one")]
    pub height: f64,
}

/// The jump rate `sigma(x) >= 0`, continuous on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaField {
    Constant {
        value: f64,
    },
    /// Sum of `height * exp(1 - 1/(1 - s^2))`, `s = dist(x, center) / radius`.
    SmoothBump { bumps: Vec<Bump> },
    /// Smoothed indicator of the periodic box `prod_i (lo_i, hi_i)`; each edge
    /// is replaced by a C-infinity step of the given width centred on it.
    MollifiedIndicator {
        lo: Vec<f64>,
        hi: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        height: f64,
    },
}

/// `exp(1 - 1/(1 - s^2))` on `|s| < 1`, zero outside; equals 1 at `s = 0`.
#[inline]
pub fn bump_profile(s: f64) -> f64 {
    let s2 = s * s;
    if s2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s2)).exp()
    }
}

/// Smooth monotone step from 0 (u <= 0) to 1 (u >= 1), symmetric about 1/2.
#[inline]
pub fn smooth_step(u: f64) -> f64 {
    let f = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        let a = f(u);
        a / (a + f(1.0 - u))
    }
}

fn mollified_factor(x: f64, lo: f64, hi: f64, width: f64) -> f64 {
    let len = hi - lo;
    let y = wrap_scalar(x - lo + 0.5 * width);
    if y < width {
        smooth_step(y / width)
    } else if y <= len {
        1.0
    } else if y < len + width {
        smooth_step((len + width - y) / width)
    } else {
        0.0
    }
}

/// Dense-grid summary of a field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaGridStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub lipschitz: f64,
    pub points_per_axis: usize,
}

impl SigmaField {
    pub fn constant(value: f64) -> Self {
        SigmaField::Constant { value }
    }

    pub fn bump_1d(center: f64, radius: f64, height: f64) -> Self {
        SigmaField::SmoothBump {
            bumps: vec![Bump {
                center: vec![center],
                radius,
                height,
            }],
        }
    }

    pub fn indicator_1d(lo: f64, hi: f64, width: f64) -> Self {
        SigmaField::MollifiedIndicator {
            lo: vec![lo],
            hi: vec![hi],
            width,
            height: 1.0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            SigmaField::Constant { value } => {
                if !(*value >= 0.0 && value.is_finite()) {
                    return Err(Error::config("constant jump rate must be finite and nonnegative"));
                }
            }
            SigmaField::SmoothBump { bumps } => {
                for (i, b) in bumps.iter().enumerate() {
                    if b.center.len() != dim {
                        return Err(Error::config(format!("bump {i}: center needs {dim} coordinates")));
                    }
                    if !(b.radius > 0.0 && b.radius <= 0.5) {
                        return Err(Error::config(format!("bump {i}: radius must lie in (0, 1/2]")));
                    }
                    if !(b.height >= 0.0 && b.height.is_finite()) {
                        return Err(Error::config(format!("bump {i}: height must be finite and nonnegative")));
                    }
                }
            }
            SigmaField::MollifiedIndicator { lo, hi, width, height } => {
                if lo.len() != dim || hi.len() != dim {
                    return Err(Error::config(format!("indicator box needs {dim} bounds per side")));
                }
                if !(*width > 0.0) {
                    return Err(Error::config("mollification width must be positive"));
                }
                for (l, h) in lo.iter().zip(hi) {
                    if !(h > l) || h - l + width > 1.0 {
                        return Err(Error::config(
                            "indicator box needs 0 < hi - lo and hi - lo + width <= 1 in every coordinate",
                        ));
                    }
                }
                if !(*height >= 0.0 && height.is_finite()) {
                    return Err(Error::config("indicator height must be finite and nonnegative"));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            SigmaField::Constant { value } => *value,
            SigmaField::SmoothBump { bumps } => bumps
                .iter()
                .map(|b| {
                    let d2: f64 = x.iter().zip(&b.center).map(|(&a, &c)| torus_delta(c, a).powi(2)).sum();
                    b.height * bump_profile(d2.sqrt() / b.radius)
                })
                .sum(),
            SigmaField::MollifiedIndicator { lo, hi, width, height } => {
                height
                    * x.iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(&xi, (&l, &h))| mollified_factor(xi, l, h, *width))
                        .product::<f64>()
            }
        }
    }

    /// Certified upper bound on `sup sigma`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            SigmaField::Constant { value } => *value,
            SigmaField::SmoothBump { bumps } => bumps.iter().map(|b| b.height).sum(),
            SigmaField::MollifiedIndicator { height, .. } => *height,
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            SigmaField::Constant { value } => Some(*value),
            _ => None,
        }
    }

    /// `c * sigma`.
    pub fn scaled(&self, c: f64) -> Self {
        match self.clone() {
            SigmaField::Constant { value } => SigmaField::Constant { value: c * value },
            SigmaField::SmoothBump { mut bumps } => {
                bumps.iter_mut().for_each(|b| b.height *= c);
                SigmaField::SmoothBump { bumps }
            }
            SigmaField::MollifiedIndicator { lo, hi, width, height } => SigmaField::MollifiedIndicator {
                lo,
                hi,
                width,
                height: c * height,
            },
        }
    }

    /// Samples the field on a dense tensor grid: extrema, mean (the torus
    /// integral) and a finite-difference Lipschitz estimate.
    pub fn grid_stats(&self, dim: usize) -> SigmaGridStats {
        let n = match dim {
            1 => 8192,
            2 => 512,
            d => ((1u64 << 18) as f64).powf(1.0 / d as f64).floor().max(8.0) as usize,
        };
        let h = 1.0 / n as f64;
        let total = n.pow(dim as u32);
        let mut x = vec![0.0; dim];
        let (mut min, mut max, mut sum, mut lip) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0f64);
        for idx in 0..total {
            let mut rem = idx;
            for xi in x.iter_mut() {
                *xi = (rem % n) as f64 * h;
                rem /= n;
            }
            let s = self.value(&x);
            min = min.min(s);
            max = max.max(s);
            sum += s;
            for i in 0..dim {
                let saved = x[i];
                x[i] = wrap_scalar(saved + h);
                lip = lip.max((self.value(&x) - s).abs() / h);
                x[i] = saved;
            }
        }
        SigmaGridStats {
            min,
            max,
            mean: sum / total as f64,
            lipschitz: lip,
            points_per_axis: n,
        }
    }

    /// Checks nonnegativity and the sup-norm majorant on the dense grid.
    pub fn check_invariants(&self, dim: usize) -> Result<SigmaGridStats> {
        let stats = self.grid_stats(dim);
        if stats.min < 0.0 {
            return Err(Error::domain(format!("jump rate takes negative value {}", stats.min)));
        }
        if stats.max > self.sup_norm() * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "grid maximum {} exceeds the certified sup norm {}",
                stats.max,
                self.sup_norm()
            )));
        }
        Ok(stats)
    }
}
