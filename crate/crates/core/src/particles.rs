//! Monte Carlo simulation of the jump process behind the equation: flight
//! along the characteristic flow, jumps at rate `sigma(x)` realised by
//! thinning against `sup sigma`, post-jump velocities drawn from the kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{flow_in_place, wrap_scalar, FlowConfig, Potential};
use crate::initial::InitialData;
use crate::problem::{Kernel, ScatterProblem};
use crate::velocity::{sample_index, VelocitySpace};

const PURPOSE_INITIAL: u64 = 0x1;
const PURPOSE_SIMULATE: u64 = 0x2;
const MAX_REJECTIONS: usize = 1_000_000;

/// Independent generator for `(seed, purpose, index)`; the index selects a
/// ChaCha stream so each particle draws the same numbers whatever the
/// thread layout.
pub fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Position in `[0, 1)^d`.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub jumps: u64,
    pub first_jump: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub seed: u64,
    pub time: f64,
    pub particles: Vec<Particle>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Fraction of particles that have not jumped yet.
    pub fn survival_fraction(&self) -> f64 {
        self.particles.iter().filter(|p| p.jumps == 0).count() as f64 / self.len().max(1) as f64
    }

    /// `hist[k]` = number of particles with exactly `k` jumps.
    pub fn jump_histogram(&self) -> Vec<u64> {
        let max = self.particles.iter().map(|p| p.jumps).max().unwrap_or(0) as usize;
        let mut hist = vec![0u64; max + 1];
        for p in &self.particles {
            hist[p.jumps as usize] += 1;
        }
        hist
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_particles: usize,
    pub seed: u64,
    /// Flight integrator; defaults to the problem's default flow.
    #[serde(default)]
    pub flow: Option<FlowConfig>,
}

/// `x` from `e^{-W}/Z`, `v` from `nu_v`.
fn sample_x_equilibrium<R: Rng + ?Sized>(w: &Potential, dim: usize, cdf: Option<&[f64]>, rng: &mut R) -> Vec<f64> {
    if w.is_zero() {
        return (0..dim).map(|_| rng.random::<f64>()).collect();
    }
    if let Some(cdf) = cdf {
        // piecewise-linear inverse of the tabulated distribution function
        let u = rng.random::<f64>();
        let n = cdf.len() - 1;
        let k = cdf.partition_point(|&c| c <= u).clamp(1, n);
        let (c0, c1) = (cdf[k - 1], cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        return vec![wrap_scalar((k as f64 - 1.0 + frac) / n as f64)];
    }
    let w_min = match w {
        Potential::CosineSum { terms } => -terms.iter().map(|t| t.a.abs()).sum::<f64>(),
        Potential::Zero => 0.0,
    };
    loop {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        if rng.random::<f64>() < (-(w.value(&x) - w_min)).exp() {
            return x;
        }
    }
}

fn equilibrium_cdf(w: &Potential, dim: usize) -> Option<Vec<f64>> {
    if dim != 1 || w.is_zero() {
        return None;
    }
    let n = 4096;
    let dens: Vec<f64> = (0..=n).map(|i| (-w.value(&[i as f64 / n as f64])).exp()).collect();
    let mut cdf = vec![0.0; n + 1];
    for i in 0..n {
        cdf[i + 1] = cdf[i] + 0.5 * (dens[i] + dens[i + 1]);
    }
    let total = cdf[n];
    cdf.iter_mut().for_each(|c| *c /= total);
    Some(cdf)
}

fn kernel_law(problem: &ScatterProblem) -> Option<Vec<f64>> {
    match (&problem.kernel, &problem.velocity) {
        (Kernel::Equilibrium, VelocitySpace::Discrete { weights, .. }) => Some(weights.clone()),
        (Kernel::Matrix { rows }, _) => Some(crate::solver::stationary_distribution(rows)),
        _ => None,
    }
}

fn sample_velocity<R: Rng + ?Sized>(problem: &ScatterProblem, law: Option<&[f64]>, rng: &mut R) -> Vec<f64> {
    match (&problem.velocity, law) {
        (VelocitySpace::Discrete { velocities, .. }, Some(w)) => velocities[sample_index(w, rng.random::<f64>())].clone(),
        (space, _) => space.sample(problem.dim, rng),
    }
}

/// Draws `n` particles from the equilibrium `nu`.
pub fn sample_equilibrium(problem: &ScatterProblem, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    sample_initial(problem, &InitialData::Equilibrium, n, seed)
}

/// Draws `n` particles from the given initial law.
pub fn sample_initial(problem: &ScatterProblem, init: &InitialData, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    problem.validate()?;
    init.validate(problem.dim)?;
    let d = problem.dim;
    let cdf = equilibrium_cdf(&problem.potential, d);
    let law = kernel_law(problem);
    let particles = (0..n as u64)
        .into_par_iter()
        .map(|idx| {
            let mut rng = stream_rng(seed, PURPOSE_INITIAL, idx);
            let (x, v) = match init {
                InitialData::Equilibrium => (
                    sample_x_equilibrium(&problem.potential, d, cdf.as_deref(), &mut rng),
                    sample_velocity(problem, law.as_deref(), &mut rng),
                ),
                InitialData::Delta { x, v } => (x.iter().map(|c| wrap_scalar(*c)).collect(), v.clone()),
                InitialData::Box { x_lo, x_hi, .. } => {
                    let x = x_lo
                        .iter()
                        .zip(x_hi)
                        .map(|(l, h)| wrap_scalar(l + (h - l) * rng.random::<f64>()))
                        .collect();
                    let v = match init.velocity_window() {
                        None => sample_velocity(problem, law.as_deref(), &mut rng),
                        Some((lo, hi)) => {
                            let mut found = None;
                            for _ in 0..MAX_REJECTIONS {
                                let v = sample_velocity(problem, law.as_deref(), &mut rng);
                                if v.iter().zip(lo.iter().zip(hi)).all(|(c, (l, h))| l <= c && c <= h) {
                                    found = Some(v);
                                    break;
                                }
                            }
                            found.ok_or_else(|| Error::config("initial velocity window carries (almost) no mass"))?
                        }
                    };
                    (x, v)
                }
                InitialData::Cosine { amplitude, mode } => {
                    let x = loop {
                        let x = sample_x_equilibrium(&problem.potential, d, cdf.as_deref(), &mut rng);
                        let phase: f64 = x.iter().zip(mode).map(|(a, &k)| a * k as f64).sum();
                        let accept = (1.0 + amplitude * (2.0 * std::f64::consts::PI * phase).cos())
                            / (1.0 + amplitude.abs());
                        if rng.random::<f64>() < accept {
                            break x;
                        }
                    };
                    (x, sample_velocity(problem, law.as_deref(), &mut rng))
                }
            };
            Ok(Particle {
                x,
                v,
                jumps: 0,
                first_jump: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ParticleEnsemble {
        dim: d,
        seed,
        time: 0.0,
        particles,
    })
}

struct Walker<'a> {
    problem: &'a ScatterProblem,
    flow: FlowConfig,
    sup: f64,
    law: Option<&'a [f64]>,
}

impl Walker<'_> {
    fn fly(&self, x: &mut [f64], v: &mut [f64], acc: &mut [f64], t: f64) {
        flow_in_place(&self.problem.potential, x, v, acc, t, &self.flow);
    }

    fn jump(&self, v: &mut Vec<f64>, rng: &mut ChaCha8Rng) {
        match (&self.problem.kernel, &self.problem.velocity) {
            (Kernel::Matrix { rows }, VelocitySpace::Discrete { velocities, .. }) => {
                let k = velocities.iter().position(|w| w == v).unwrap_or(0);
                let column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                *v = velocities[sample_index(&column, rng.random::<f64>())].clone();
            }
            _ => *v = sample_velocity(self.problem, self.law, rng),
        }
    }

    /// Runs one particle through all snapshot times.
    fn walk(&self, start: &Particle, t0: f64, times: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<Particle>> {
        let exp = if self.sup > 0.0 { Some(Exp::new(self.sup).unwrap()) } else { None };
        let mut x = start.x.clone();
        let mut v = start.v.clone();
        let mut acc = self.problem.potential.gradient(&x);
        let mut jumps = start.jumps;
        let mut first_jump = start.first_jump;
        let mut now = t0;
        let mut next = exp.map(|e| now + e.sample(rng)).unwrap_or(f64::INFINITY);
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            while next <= t {
                self.fly(&mut x, &mut v, &mut acc, next - now);
                now = next;
                let here: Vec<f64> = x.iter().map(|c| wrap_scalar(*c)).collect();
                let s = self.problem.sigma.value(&here);
                if s > self.sup * (1.0 + 1e-12) {
                    return Err(Error::MajorantViolation {
                        x: here,
                        value: s,
                        sup_norm: self.sup,
                    });
                }
                if rng.random::<f64>() * self.sup < s {
                    self.jump(&mut v, rng);
                    jumps += 1;
                    first_jump.get_or_insert(now);
                }
                next = now + exp.unwrap().sample(rng);
            }
            self.fly(&mut x, &mut v, &mut acc, t - now);
            now = t;
            x.iter_mut().for_each(|c| *c = wrap_scalar(*c));
            acc = self.problem.potential.gradient(&x);
            out.push(Particle {
                x: x.clone(),
                v: v.clone(),
                jumps,
                first_jump,
            });
        }
        Ok(out)
    }
}

/// Evolves the ensemble and returns one ensemble per snapshot time.
///
/// Each particle uses its own random stream, so the result depends only on
/// `(seed, particle index)` and not on how the work is scheduled.
pub fn simulate(
    problem: &ScatterProblem,
    ensemble: &ParticleEnsemble,
    snapshot_times: &[f64],
    cfg: &McConfig,
) -> Result<Vec<ParticleEnsemble>> {
    problem.validate()?;
    if ensemble.dim != problem.dim {
        return Err(Error::config("ensemble dimension does not match the problem"));
    }
    if snapshot_times.iter().any(|&t| !(t >= ensemble.time)) || snapshot_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("snapshot times must be sorted and not precede the ensemble time"));
    }
    let flow = cfg.flow.unwrap_or_else(|| problem.default_flow());
    flow.validate(&problem.potential)?;
    let law = kernel_law(problem);
    let walker = Walker {
        problem,
        flow,
        sup: problem.sigma.sup_norm(),
        law: law.as_deref(),
    };
    let per_particle: Vec<Vec<Particle>> = ensemble
        .particles
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let mut rng = stream_rng(cfg.seed, PURPOSE_SIMULATE, idx as u64);
            walker.walk(p, ensemble.time, snapshot_times, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(snapshot_times
        .iter()
        .enumerate()
        .map(|(k, &t)| ParticleEnsemble {
            dim: ensemble.dim,
            seed: cfg.seed,
            time: t,
            particles: per_particle.iter().map(|traj| traj[k].clone()).collect(),
        })
        .collect())
}
