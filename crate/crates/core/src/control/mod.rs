//! The geometric control condition: how much jump rate every characteristic
//! accumulates over a time window, and the time-averaged strip constants.

mod sigma;

pub use sigma::{bump_profile, smooth_step, Bump, SigmaField, SigmaGridStats};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{flow_derivative_bound, flow_in_place, potential_bounds, wrap_scalar, FlowConfig, PhasePoint, Potential};
use crate::velocity::VelocitySpace;

/// Composite Simpson approximation of `int_0^T sigma(Phi^X_t(p0)) dt` with
/// `n_quad` subintervals (rounded up to an even number, at least 2).
pub fn line_integral(
    sigma: &SigmaField,
    w: &Potential,
    p0: &PhasePoint,
    horizon: f64,
    n_quad: usize,
    flow_cfg: &FlowConfig,
) -> f64 {
    let n = (n_quad.max(2) + 1) & !1;
    let h = horizon / n as f64;
    let mut x = p0.x.coords().to_vec();
    let mut v = p0.v.clone();
    let mut acc = w.gradient(&x);
    let start = x.clone();
    let mut sum = 0.0;
    let mut buf = x.clone();
    for i in 0..=n {
        if i > 0 {
            match flow_cfg.method {
                // exact straight line, no accumulated stepping error
                crate::geometry::FlowMethod::ExactFree => {
                    let t = i as f64 * h;
                    for ((xi, s), vi) in x.iter_mut().zip(&start).zip(&v) {
                        *xi = s + vi * t;
                    }
                }
                crate::geometry::FlowMethod::VelocityVerlet => {
                    flow_in_place(w, &mut x, &mut v, &mut acc, h, flow_cfg);
                }
            }
        }
        for (b, xi) in buf.iter_mut().zip(&x) {
            *b = wrap_scalar(*xi);
        }
        let weight = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += weight * sigma.value(&buf);
    }
    sum * h / 3.0
}

/// Sampling resolution for the control search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GccGrid {
    /// Position samples per axis (`i / n_x`).
    pub n_x: usize,
    /// Velocity samples per axis, endpoints included (ignored for discrete `V`).
    pub n_v: usize,
    /// Truncation radius when `V = R^d`; defaults to `4(1+G) + 5 G T`.
    pub v_max: Option<f64>,
    pub n_quad: usize,
    pub threshold: f64,
    /// Golden-section polish around the grid argmin.
    pub refine: bool,
    /// Integrator step for `W != 0`; defaults to the flow default.
    pub flow_dt: Option<f64>,
}

impl Default for GccGrid {
    fn default() -> Self {
        GccGrid {
            n_x: 256,
            n_v: 41,
            v_max: None,
            n_quad: 256,
            threshold: 1e-6,
            refine: true,
            flow_dt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub n_x_per_axis: usize,
    pub n_x_total: usize,
    pub n_v: usize,
    pub n_points: usize,
    pub n_quad: usize,
}

/// Outcome of the control search at one horizon `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GccReport {
    pub t: f64,
    /// Estimated infimum of the line integral (grid minimum, possibly refined).
    pub kappa_hat: f64,
    pub grid_min: f64,
    pub argmin_point: PhasePoint,
    pub satisfied: bool,
    pub threshold: f64,
    pub refined: bool,
    pub sample_counts: SampleCounts,
    /// Velocity truncation radius used when `V = R^d`.
    pub v_truncation: Option<f64>,
    /// `t * integral(sigma)`, the large-speed limit when `V = R^d`.
    pub equidistribution_proxy: Option<f64>,
    /// First-order bound on the gap between `kappa_hat` and the true infimum
    /// from sampling alone.
    pub lipschitz_error_hint: f64,
    /// `t * ||sigma||_inf`, an upper bound for `kappa_hat`.
    pub upper_bound: f64,
}

/// One evaluated sample of the search grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GccSample {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub integral: f64,
}

/// The pieces of a problem the control search needs.
#[derive(Clone, Copy, Debug)]
pub struct ControlGeometry<'a> {
    pub dim: usize,
    pub sigma: &'a SigmaField,
    pub potential: &'a Potential,
    pub velocity: &'a VelocitySpace,
}

struct Scan {
    xs: Vec<Vec<f64>>,
    vs: Vec<Vec<f64>>,
    values: Vec<f64>,
    flow: FlowConfig,
    v_max: Option<f64>,
    h_v: f64,
}

impl<'a> ControlGeometry<'a> {
    fn flow_config(&self, grid: &GccGrid) -> FlowConfig {
        let mut cfg = FlowConfig::default_for(self.potential, self.dim);
        if let Some(dt) = grid.flow_dt {
            cfg.dt = dt;
        }
        cfg
    }

    fn default_v_max(&self, horizon: f64) -> f64 {
        let g = potential_bounds(self.potential, self.dim).grad_sup;
        4.0 * (1.0 + g) + 5.0 * g * horizon
    }

    fn scan(&self, horizon: f64, grid: &GccGrid) -> Result<Scan> {
        if !(horizon > 0.0) {
            return Err(Error::config(format!("control horizon must be positive, got {horizon}")));
        }
        if grid.n_x == 0 || grid.n_quad < 2 {
            return Err(Error::config("empty control grid (n_x = 0 or n_quad < 2)"));
        }
        let d = self.dim;
        let total_x = grid.n_x.pow(d as u32);
        let xs: Vec<Vec<f64>> = (0..total_x)
            .map(|idx| {
                let mut rem = idx;
                (0..d)
                    .map(|_| {
                        let i = rem % grid.n_x;
                        rem /= grid.n_x;
                        i as f64 / grid.n_x as f64
                    })
                    .collect()
            })
            .collect();
        let v_max = match self.velocity {
            VelocitySpace::Full => Some(grid.v_max.unwrap_or_else(|| self.default_v_max(horizon))),
            _ => None,
        };
        let vs = self.velocity.sample_grid(d, grid.n_v, v_max.unwrap_or(0.0));
        if vs.is_empty() || xs.is_empty() {
            return Err(Error::config("empty control grid"));
        }
        let h_v = match self.velocity {
            VelocitySpace::Discrete { .. } => 0.0,
            VelocitySpace::Ball { radius } => 2.0 * radius / (grid.n_v.max(2) - 1) as f64,
            VelocitySpace::Full => 2.0 * v_max.unwrap() / (grid.n_v.max(2) - 1) as f64,
            VelocitySpace::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| (h - l) / (grid.n_v.max(2) - 1) as f64)
                .fold(0.0, f64::max),
        };
        let flow = self.flow_config(grid);
        flow.validate(self.potential)?;
        let nv = vs.len();
        let values: Vec<f64> = (0..xs.len() * nv)
            .into_par_iter()
            .map(|k| {
                let p = PhasePoint::new(&xs[k / nv], &vs[k % nv]);
                line_integral(self.sigma, self.potential, &p, horizon, grid.n_quad, &flow)
            })
            .collect();
        Ok(Scan {
            xs,
            vs,
            values,
            flow,
            v_max,
            h_v,
        })
    }

    /// Golden-section polish, one coordinate at a time, around `start`.
    fn refine(&self, horizon: f64, grid: &GccGrid, scan: &Scan, start: PhasePoint, start_val: f64) -> (PhasePoint, f64) {
        let d = self.dim;
        let eval = |x: &[f64], v: &[f64]| {
            line_integral(self.sigma, self.potential, &PhasePoint::new(x, v), horizon, grid.n_quad, &scan.flow)
        };
        let mut x = start.x.coords().to_vec();
        let mut v = start.v.clone();
        let mut best = start_val;
        let h_x = 1.0 / grid.n_x as f64;
        let v_cap = scan.v_max.unwrap_or(f64::INFINITY);
        let n_coords = if self.velocity.is_discrete() { d } else { 2 * d };
        const INV_PHI: f64 = 0.618_033_988_749_894_8;
        for _sweep in 0..2 {
            for c in 0..n_coords {
                let (centre, half) = if c < d { (x[c], h_x) } else { (v[c - d], scan.h_v) };
                if half == 0.0 {
                    continue;
                }
                let f = |s: f64| {
                    let mut xx = x.clone();
                    let mut vv = v.clone();
                    if c < d {
                        xx[c] = s;
                    } else {
                        vv[c - d] = s;
                        self.velocity.project(&mut vv, v_cap);
                    }
                    (eval(&xx, &vv), xx, vv)
                };
                let (mut a, mut b) = (centre - half, centre + half);
                let mut c1 = b - INV_PHI * (b - a);
                let mut c2 = a + INV_PHI * (b - a);
                let mut f1 = f(c1);
                let mut f2 = f(c2);
                for _ in 0..30 {
                    if f1.0 <= f2.0 {
                        b = c2;
                        c2 = c1;
                        f2 = f1;
                        c1 = b - INV_PHI * (b - a);
                        f1 = f(c1);
                    } else {
                        a = c1;
                        c1 = c2;
                        f1 = f2;
                        c2 = a + INV_PHI * (b - a);
                        f2 = f(c2);
                    }
                }
                let cand = if f1.0 <= f2.0 { f1 } else { f2 };
                if cand.0 < best {
                    best = cand.0;
                    x = cand.1;
                    v = cand.2;
                }
            }
        }
        (PhasePoint::new(&x, &v), best)
    }

    fn report_from_scan(&self, horizon: f64, grid: &GccGrid, scan: &Scan) -> GccReport {
        let nv = scan.vs.len();
        // first index wins ties so the argmin does not depend on scheduling
        let (imin, &grid_min) = scan
            .values
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (i, v)| match acc {
                Some((_, best)) if best <= v => acc,
                _ => Some((i, v)),
            })
            .expect("nonempty scan");
        let grid_arg = PhasePoint::new(&scan.xs[imin / nv], &scan.vs[imin % nv]);
        let (argmin_point, kappa_hat, refined) = if grid.refine && grid_min > 0.0 {
            let (p, val) = self.refine(horizon, grid, scan, grid_arg.clone(), grid_min);
            if val < grid_min {
                (p, val, true)
            } else {
                (grid_arg, grid_min, false)
            }
        } else {
            (grid_arg, grid_min, false)
        };
        let stats = self.sigma.grid_stats(self.dim);
        let d = self.dim as f64;
        let h_x = 1.0 / grid.n_x as f64;
        let spread = flow_derivative_bound(self.potential, self.dim, horizon);
        let lipschitz_error_hint = horizon * stats.lipschitz * 0.5 * d.sqrt() * (h_x + horizon * scan.h_v * spread);
        GccReport {
            t: horizon,
            kappa_hat,
            grid_min,
            argmin_point,
            satisfied: kappa_hat > grid.threshold,
            threshold: grid.threshold,
            refined,
            sample_counts: SampleCounts {
                n_x_per_axis: grid.n_x,
                n_x_total: scan.xs.len(),
                n_v: nv,
                n_points: scan.values.len(),
                n_quad: (grid.n_quad.max(2) + 1) & !1,
            },
            v_truncation: scan.v_max,
            equidistribution_proxy: scan.v_max.map(|_| horizon * stats.mean),
            lipschitz_error_hint,
            upper_bound: horizon * self.sigma.sup_norm(),
        }
    }

    /// Estimates `kappa = inf_{(x,v)} int_0^T sigma(Phi^X_t(x,v)) dt`.
    pub fn gcc_kappa(&self, horizon: f64, grid: &GccGrid) -> Result<GccReport> {
        let scan = self.scan(horizon, grid)?;
        Ok(self.report_from_scan(horizon, grid, &scan))
    }

    /// Like [`gcc_kappa`](Self::gcc_kappa) but also returns every grid sample.
    pub fn gcc_kappa_with_samples(&self, horizon: f64, grid: &GccGrid) -> Result<(GccReport, Vec<GccSample>)> {
        let scan = self.scan(horizon, grid)?;
        let report = self.report_from_scan(horizon, grid, &scan);
        let nv = scan.vs.len();
        let samples = scan
            .values
            .iter()
            .enumerate()
            .map(|(k, &integral)| GccSample {
                x: scan.xs[k / nv].clone(),
                v: scan.vs[k % nv].clone(),
                integral,
            })
            .collect();
        Ok((report, samples))
    }

    /// Time-averaged strip constants over the horizons in `horizons`:
    /// `C- = max_T min (1/T) int`, `C+ = min_T max (1/T) int`.
    pub fn spectral_constants(&self, horizons: &[f64], grid: &GccGrid) -> Result<SpectralConstants> {
        if horizons.is_empty() {
            return Err(Error::config("spectral constants need at least one horizon"));
        }
        if horizons.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("horizons must be strictly increasing"));
        }
        let mut per_horizon = Vec::with_capacity(horizons.len());
        for &t in horizons {
            let scan = self.scan(t, grid)?;
            let report = self.report_from_scan(t, grid, &scan);
            let max = scan.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            per_horizon.push(HorizonAverages {
                t,
                min_average: report.kappa_hat / t,
                max_average: max / t,
            });
        }
        let c_minus = per_horizon.iter().map(|h| h.min_average).fold(f64::NEG_INFINITY, f64::max);
        let c_plus = per_horizon.iter().map(|h| h.max_average).fold(f64::INFINITY, f64::min);
        Ok(SpectralConstants {
            c_minus,
            c_plus,
            per_horizon,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonAverages {
    pub t: f64,
    pub min_average: f64,
    pub max_average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    pub c_minus: f64,
    pub c_plus: f64,
    pub per_horizon: Vec<HorizonAverages>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free() -> FlowConfig {
        FlowConfig::default_for(&Potential::Zero, 1)
    }

    #[test]
    fn constant_integrand_is_exact() {
        let s = SigmaField::constant(0.7);
        let p = PhasePoint::new(&[0.3], &[0.4]);
        let v = line_integral(&s, &Potential::Zero, &p, 2.5, 10, &free());
        assert!((v - 1.75).abs() < 1e-12);
    }

    #[test]
    fn stationary_point_outside_support() {
        let s = SigmaField::indicator_1d(0.0, 0.5, 0.05);
        let p = PhasePoint::new(&[0.75], &[0.0]);
        assert_eq!(line_integral(&s, &Potential::Zero, &p, 3.0, 64, &free()), 0.0);
    }

    #[test]
    fn odd_quadrature_count_rounds_up() {
        let s = SigmaField::bump_1d(0.5, 0.2, 1.0);
        let p = PhasePoint::new(&[0.0], &[1.0]);
        let a = line_integral(&s, &Potential::Zero, &p, 1.0, 127, &free());
        let b = line_integral(&s, &Potential::Zero, &p, 1.0, 128, &free());
        assert_eq!(a, b);
    }

    #[test]
    fn empty_grid_is_config_error() {
        let s = SigmaField::constant(1.0);
        let v = VelocitySpace::Ball { radius: 1.0 };
        let g = ControlGeometry {
            dim: 1,
            sigma: &s,
            potential: &Potential::Zero,
            velocity: &v,
        };
        let grid = GccGrid {
            n_x: 0,
            ..GccGrid::default()
        };
        assert!(matches!(g.gcc_kappa(1.0, &grid), Err(Error::Config(_))));
    }

    #[test]
    fn horizons_must_increase() {
        let s = SigmaField::constant(1.0);
        let v = VelocitySpace::Ball { radius: 1.0 };
        let g = ControlGeometry {
            dim: 1,
            sigma: &s,
            potential: &Potential::Zero,
            velocity: &v,
        };
        assert!(g.spectral_constants(&[], &GccGrid::default()).is_err());
        assert!(g.spectral_constants(&[2.0, 1.0], &GccGrid::default()).is_err());
    }
}
