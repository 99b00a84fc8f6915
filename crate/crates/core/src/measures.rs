//! Total-variation distances, decay fits and envelope checks.
//!
//! Total variation is the supremum over test functions with `|phi| <= 1`,
//! i.e. the `L^1` distance of densities; disjoint probabilities sit at
//! distance 2.

use serde::{Deserialize, Serialize};

use crate::certificate::{decay_envelope, RateCertificate};
use crate::error::{Error, Result};
use crate::particles::ParticleEnsemble;
use crate::solver::{GridShape, PhaseDensity};

/// `sum |f - g| dx^d q_j`.
pub fn tv_grid(f: &PhaseDensity, g: &PhaseDensity) -> Result<f64> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch("total variation of densities on different grids".into()));
    }
    let n = f.shape.cells_x();
    let vol = f.shape.x_volume();
    let mut total = 0.0;
    for (j, q) in f.shape.q.iter().enumerate() {
        let s: f64 = f.values[j * n..(j + 1) * n]
            .iter()
            .zip(&g.values[j * n..(j + 1) * n])
            .map(|(a, b)| (a - b).abs())
            .sum();
        total += s * q;
    }
    Ok(total * vol)
}

/// Masses of the positive and negative parts of `f - g`.
pub fn jordan_parts(f: &PhaseDensity, g: &PhaseDensity) -> Result<(f64, f64)> {
    if !f.same_grid(g) {
        return Err(Error::GridMismatch("Jordan decomposition on different grids".into()));
    }
    let n = f.shape.cells_x();
    let vol = f.shape.x_volume();
    let (mut pos, mut neg) = (0.0, 0.0);
    for (k, (a, b)) in f.values.iter().zip(&g.values).enumerate() {
        let m = (a - b) * vol * f.shape.q[k / n];
        if m > 0.0 {
            pos += m;
        } else {
            neg -= m;
        }
    }
    Ok((pos, neg))
}

/// Coarse bins for comparing particles with a grid: `x_bins` per spatial
/// axis (dividing `n_x`) and, for the velocity, either one bin per grid
/// node (`None`), a single bin (`Some(1)`), or for one-dimensional
/// continuous grids `Some(k)` groups of consecutive nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binning {
    pub x_bins: usize,
    #[serde(default)]
    pub v_bins: Option<usize>,
}

impl Binning {
    pub fn grid(shape: &GridShape) -> Self {
        Binning {
            x_bins: shape.n_x,
            v_bins: None,
        }
    }

    fn check(&self, shape: &GridShape) -> Result<(usize, usize)> {
        if self.x_bins == 0 || shape.n_x % self.x_bins != 0 {
            return Err(Error::GridMismatch(format!(
                "{} x-bins do not divide {} grid cells",
                self.x_bins, shape.n_x
            )));
        }
        let nv = shape.n_v();
        let v_bins = match self.v_bins {
            None => nv,
            Some(1) => 1,
            Some(k) => {
                if shape.dim != 1 || shape.dv.is_none() || k == 0 || nv % k != 0 {
                    return Err(Error::GridMismatch(format!(
                        "{k} velocity bins are incompatible with this velocity grid"
                    )));
                }
                k
            }
        };
        Ok((self.x_bins, v_bins))
    }

    pub fn count(&self, shape: &GridShape) -> Result<usize> {
        let (xb, vb) = self.check(shape)?;
        Ok(xb.pow(shape.dim as u32) * vb)
    }
}

fn bin_of_cell(shape: &GridShape, x_bins: usize, v_bins: usize, i: usize, j: usize) -> usize {
    let per = shape.n_x / x_bins;
    let mut rem = i;
    let mut bin = 0;
    let mut stride = 1;
    for _ in 0..shape.dim {
        bin += (rem % shape.n_x) / per * stride;
        rem /= shape.n_x;
        stride *= x_bins;
    }
    let vb = j * v_bins / shape.n_v();
    bin + vb * stride
}

/// Probability of each bin under a grid density.
pub fn bin_density(f: &PhaseDensity, binning: &Binning) -> Result<Vec<f64>> {
    let (xb, vb) = binning.check(&f.shape)?;
    let mut out = vec![0.0; binning.count(&f.shape)?];
    let n = f.shape.cells_x();
    for (k, m) in f.cell_masses().into_iter().enumerate() {
        out[bin_of_cell(&f.shape, xb, vb, k % n, k / n)] += m;
    }
    Ok(out)
}

/// Empirical probability of each bin.
pub fn bin_ensemble(ensemble: &ParticleEnsemble, shape: &GridShape, binning: &Binning) -> Result<Vec<f64>> {
    let (xb, vb) = binning.check(shape)?;
    if ensemble.dim != shape.dim {
        return Err(Error::GridMismatch("ensemble and grid dimensions differ".into()));
    }
    let mut counts = vec![0u64; binning.count(shape)?];
    for p in &ensemble.particles {
        let i = shape.x_cell(&p.x);
        let j = shape.nearest_velocity(&p.v);
        counts[bin_of_cell(shape, xb, vb, i, j)] += 1;
    }
    let n = ensemble.len().max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTv {
    pub tv: f64,
    pub bins: usize,
    pub x_bins: usize,
    pub n_particles: usize,
}

/// Histograms the ensemble and compares it with the binned reference.
pub fn tv_empirical(ensemble: &ParticleEnsemble, reference: &PhaseDensity, binning: &Binning) -> Result<EmpiricalTv> {
    let p = bin_ensemble(ensemble, &reference.shape, binning)?;
    let r = bin_density(reference, binning)?;
    Ok(EmpiricalTv {
        tv: p.iter().zip(&r).map(|(a, b)| (a - b).abs()).sum(),
        bins: p.len(),
        x_bins: binning.x_bins,
        n_particles: ensemble.len(),
    })
}

/// Distance between two histogrammed ensembles.
pub fn tv_ensembles(a: &ParticleEnsemble, b: &ParticleEnsemble, shape: &GridShape, binning: &Binning) -> Result<f64> {
    let p = bin_ensemble(a, shape, binning)?;
    let r = bin_ensemble(b, shape, binning)?;
    Ok(p.iter().zip(&r).map(|(x, y)| (x - y).abs()).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub tv_values: Vec<f64>,
    pub fitted_lambda: f64,
    pub fit_window: (f64, f64),
    /// RMS of the log-residuals over the points used.
    pub residual: f64,
    pub points_used: usize,
}

/// Least-squares fit of `log tv` against `t` on the window, using points
/// with `tv > 10 noise_floor`.
pub fn fit_decay(times: &[f64], tv: &[f64], window: (f64, f64), noise_floor: f64) -> Result<DecayCurve> {
    if times.len() != tv.len() {
        return Err(Error::Fit("times and values differ in length".into()));
    }
    let in_window: Vec<(f64, f64)> = times
        .iter()
        .zip(tv)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, v)| (*t, *v))
        .collect();
    if noise_floor <= 0.0 && in_window.iter().any(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Fit("nonpositive total variation inside the fit window".into()));
    }
    let pts: Vec<(f64, f64)> = in_window
        .into_iter()
        .filter(|(_, v)| *v > 10.0 * noise_floor && v.is_finite())
        .map(|(t, v)| (t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "{} usable points in [{}, {}], need at least 3",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all fit points share one time".into()));
    }
    let slope = sxy / sxx;
    let residual = (pts.iter().map(|p| (p.1 - ym - slope * (p.0 - tm)).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayCurve {
        times: times.to_vec(),
        tv_values: tv.to_vec(),
        fitted_lambda: -slope,
        fit_window: window,
        residual,
        points_used: pts.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOutcome {
    pub passed: bool,
    /// Smallest `envelope(t) - tv(t)` over the checked times.
    pub worst_margin: f64,
    pub points_checked: usize,
}

/// Checks `tv(t) <= exp(-lambda (t - t_star)) tv0 + tolerance` for every
/// sampled `t >= t_star`.
pub fn envelope_check(
    times: &[f64],
    tv: &[f64],
    cert: &RateCertificate,
    tv0: f64,
    tolerance: f64,
) -> Result<EnvelopeOutcome> {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for (&t, &v) in times.iter().zip(tv) {
        if t >= cert.t_star * (1.0 - 1e-12) {
            worst = worst.min(decay_envelope(cert.lambda, cert.t_star, tv0, t) - v);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::domain("no curve points at or beyond t_star"));
    }
    Ok(EnvelopeOutcome {
        passed: worst >= -tolerance,
        worst_margin: worst,
        points_checked: count,
    })
}
