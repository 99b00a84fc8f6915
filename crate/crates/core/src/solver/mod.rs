//! Transport-relaxation splitting on a phase-space grid.
//!
//! One step of length `dt` is `T(dt/2) C(dt) T(dt/2)`. The relaxation `C`
//! is solved exactly per spatial cell. The transport `T` shifts each
//! velocity slice along `x`, exactly when the shift is a whole number of
//! cells and by linear interpolation otherwise; with a potential (d = 1)
//! it is itself split as `X(h/2) V(h) X(h/2)`.

mod grid;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{stationary_distribution, Equilibrium, GridShape, PhaseDensity, MAX_CELLS};

use crate::certificate::RateCertificate;
use crate::error::{Error, Result};
use crate::geometry::potential_bounds;
use crate::initial::InitialData;
use crate::problem::{Kernel, ScatterProblem};
use crate::velocity::VelocitySpace;

const CHUNK: usize = 4096;
/// Grids smaller than this are stepped on the calling thread.
const PARALLEL_MIN: usize = 1 << 15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Cells per spatial axis.
    pub n_x: usize,
    /// Cells per velocity axis (continuous velocity spaces).
    #[serde(default)]
    pub n_v: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Velocity truncation for `V = R^d`.
    #[serde(default)]
    pub v_max: Option<f64>,
}

impl SolverConfig {
    pub fn new(n_x: usize, n_v: Option<usize>) -> Self {
        SolverConfig {
            n_x,
            n_v,
            dt: None,
            v_max: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }
}

/// Periodic shift by `k + theta` cells: `out[i] = (1-theta) in[i-k] + theta in[i-k-1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Shift {
    k: i64,
    theta: f64,
}

impl Shift {
    fn new(cells: f64) -> Self {
        let r = cells.round();
        if (cells - r).abs() < 1e-9 {
            Shift { k: r as i64, theta: 0.0 }
        } else {
            let k = cells.floor();
            Shift {
                k: k as i64,
                theta: cells - k,
            }
        }
    }

    fn is_exact(&self) -> bool {
        self.theta == 0.0
    }

    fn apply_periodic(&self, input: &[f64], out: &mut [f64]) {
        let n = input.len() as i64;
        let k = self.k.rem_euclid(n) as usize;
        let n = n as usize;
        if self.is_exact() {
            out[k..].copy_from_slice(&input[..n - k]);
            out[..k].copy_from_slice(&input[n - k..]);
            return;
        }
        let (a, b) = (1.0 - self.theta, self.theta);
        for (i, o) in out.iter_mut().enumerate() {
            let src = (i + n - k) % n;
            let src2 = (src + n - 1) % n;
            *o = a * input[src] + b * input[src2];
        }
    }
}

/// Per-slice scratch for shifting along one axis.
fn shift_axis(slice: &mut [f64], n: usize, stride: usize, shift: Shift, line: &mut [f64], out: &mut [f64]) {
    if shift.is_exact() && shift.k.rem_euclid(n as i64) == 0 {
        return;
    }
    if stride == 1 {
        for chunk in slice.chunks_mut(n) {
            shift.apply_periodic(chunk, out);
            chunk.copy_from_slice(out);
        }
        return;
    }
    let block = n * stride;
    for base in (0..slice.len()).step_by(block) {
        for off in 0..stride {
            for (c, l) in line.iter_mut().enumerate() {
                *l = slice[base + off + c * stride];
            }
            shift.apply_periodic(line, out);
            for (c, o) in out.iter().enumerate() {
                slice[base + off + c * stride] = *o;
            }
        }
    }
}

/// `exp(s (P - I))` by uniformization, row-major.
fn relaxation_matrix(rows: &[Vec<f64>], s: f64) -> Vec<f64> {
    let n = rows.len();
    let mut result = vec![0.0; n * n];
    let mut power: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    let mut weight = (-s).exp();
    let mut cumulative = 0.0;
    for m in 0..10_000 {
        for (r, p) in result.iter_mut().zip(&power) {
            *r += weight * p;
        }
        cumulative += weight;
        if 1.0 - cumulative < 1e-17 || (m as f64 > s && weight < 1e-300) {
            break;
        }
        let mut next = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                next[j * n + k] = (0..n).map(|l| rows[j][l] * power[l * n + k]).sum();
            }
        }
        power = next;
        weight *= s / (m + 1) as f64;
    }
    result
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: f64,
    pub mass: f64,
    /// `mass(t) / mass(0) - 1`
    pub mass_drift: f64,
    pub min: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub snapshots: Vec<PhaseDensity>,
    pub records: Vec<SnapshotRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuhamelOutcome {
    pub t: f64,
    /// Smallest value of `f_t - exp(-t sup sigma) g_t` over all cells.
    pub margin: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Mass of the transport-only solution `g_t`.
    pub transported_mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionOutcome {
    pub t: f64,
    pub tv_initial: f64,
    pub tv_final: f64,
    pub ratio: f64,
    /// `1 - alpha`
    pub bound: f64,
    pub passed: bool,
}

pub struct KineticSolver {
    problem: ScatterProblem,
    shape: Arc<GridShape>,
    equilibrium: Equilibrium,
    dt: f64,
    /// `x_shifts[j][axis]` for one transport sub-step.
    x_shifts: Vec<Vec<Shift>>,
    /// Velocity shifts per spatial cell for one `V` sub-step (potential only).
    v_shifts: Option<Vec<Shift>>,
    decay: Vec<f64>,
    gain: Vec<f64>,
    /// Per-cell relaxation matrices for matrix kernels.
    matrices: Option<Vec<f64>>,
}

impl KineticSolver {
    pub fn new(problem: &ScatterProblem, cfg: &SolverConfig) -> Result<Self> {
        problem.validate()?;
        let built = grid::build_grid(problem, cfg.n_x, cfg.n_v, cfg.v_max)?;
        let shape = built.shape;
        let dx = shape.dx;
        let speed = |v: &Vec<f64>| v.iter().map(|c| c * c).sum::<f64>().sqrt();
        let node_speed = shape.velocities.iter().map(speed).fold(0.0, f64::max);
        let has_potential = !problem.potential.is_zero();
        let dt = match cfg.dt {
            Some(dt) => dt,
            None => {
                if problem.velocity.is_discrete() {
                    if node_speed > 0.0 {
                        2.0 * dx / node_speed
                    } else {
                        dx
                    }
                } else {
                    let bound = match &problem.velocity {
                        VelocitySpace::Full => node_speed,
                        v => v.max_speed(),
                    };
                    let mut dt = dx / bound.max(1e-300);
                    if has_potential {
                        let dv = shape.dv.as_ref().unwrap()[0];
                        let g = potential_bounds(&problem.potential, 1).grad_sup;
                        dt = dt.min(dv / g.max(1e-300));
                    }
                    dt
                }
            }
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("time step must be positive and finite"));
        }
        let sub = if has_potential { 0.25 * dt } else { 0.5 * dt };
        let x_shifts: Vec<Vec<Shift>> = shape
            .velocities
            .iter()
            .map(|v| v.iter().map(|c| Shift::new(c * sub / dx)).collect())
            .collect();
        let interpolating = x_shifts.iter().flatten().any(|s| !s.is_exact());
        if interpolating {
            let courant = node_speed * dt / dx;
            if courant > 1.0 + 1e-12 {
                return Err(Error::Cfl { axis: "x", courant });
            }
        }
        let v_shifts = if has_potential {
            let dv = shape.dv.as_ref().unwrap()[0];
            let shifts: Vec<Shift> = (0..shape.cells_x())
                .map(|i| Shift::new(-problem.potential.gradient(&shape.x_center(i))[0] * 0.5 * dt / dv))
                .collect();
            let courant = (0..shape.cells_x())
                .map(|i| problem.potential.gradient(&shape.x_center(i))[0].abs() * dt / dv)
                .fold(0.0, f64::max);
            if courant > 1.0 + 1e-12 {
                return Err(Error::Cfl { axis: "v", courant });
            }
            Some(shifts)
        } else {
            None
        };
        let sigma: Vec<f64> = (0..shape.cells_x()).map(|i| problem.sigma.value(&shape.x_center(i))).collect();
        let decay: Vec<f64> = sigma.iter().map(|s| (-s * dt).exp()).collect();
        let gain: Vec<f64> = sigma.iter().map(|s| -(-s * dt).exp_m1()).collect();
        let matrices = match &problem.kernel {
            Kernel::Equilibrium => None,
            Kernel::Matrix { rows } => {
                let nv = rows.len();
                if shape.cells_x() * nv * nv > MAX_CELLS {
                    return Err(Error::config("relaxation matrices exceed the size guard"));
                }
                Some(sigma.iter().flat_map(|s| relaxation_matrix(rows, s * dt)).collect())
            }
        };
        Ok(KineticSolver {
            problem: problem.clone(),
            shape,
            equilibrium: built.equilibrium,
            dt,
            x_shifts,
            v_shifts,
            decay,
            gain,
            matrices,
        })
    }

    pub fn shape(&self) -> &Arc<GridShape> {
        &self.shape
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn problem(&self) -> &ScatterProblem {
        &self.problem
    }

    pub fn equilibrium(&self) -> &Equilibrium {
        &self.equilibrium
    }

    pub fn equilibrium_density(&self) -> PhaseDensity {
        self.equilibrium.density(&self.shape)
    }

    /// Whether every transport shift moves whole cells.
    pub fn exact_transport(&self) -> bool {
        self.v_shifts.is_none() && self.x_shifts.iter().flatten().all(|s| s.is_exact())
    }

    pub fn initial(&self, init: &InitialData) -> Result<PhaseDensity> {
        grid::initial_density(init, &self.shape, &self.equilibrium)
    }

    fn check(&self, f: &PhaseDensity) -> Result<()> {
        if !Arc::ptr_eq(&f.shape, &self.shape) && *f.shape != *self.shape {
            return Err(Error::GridMismatch("density does not live on the solver grid".into()));
        }
        Ok(())
    }

    fn parallel(&self) -> bool {
        self.shape.len() >= PARALLEL_MIN
    }

    /// Applies `op` to every velocity slice.
    fn for_each_slice<F>(&self, values: &mut [f64], op: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let n = self.shape.cells_x();
        if self.parallel() {
            values.par_chunks_mut(n).enumerate().for_each(|(j, s)| op(j, s));
        } else {
            values.chunks_mut(n).enumerate().for_each(|(j, s)| op(j, s));
        }
    }

    fn shift_x(&self, values: &mut [f64]) {
        let n = self.shape.n_x;
        let d = self.shape.dim;
        self.for_each_slice(values, |j, slice| {
            let mut line = vec![0.0; n];
            let mut out = vec![0.0; n];
            let mut stride = 1;
            for a in 0..d {
                shift_axis(slice, n, stride, self.x_shifts[j][a], &mut line, &mut out);
                stride *= n;
            }
        });
    }

    fn shift_v(&self, values: &mut [f64], shifts: &[Shift]) {
        let n = self.shape.cells_x();
        let nv = self.shape.n_v();
        let column = |i: usize| {
                let s = shifts[i];
                let mut col = vec![0.0; nv];
                for j in 0..nv {
                    let m = values[j * n + i];
                    let t0 = (j as i64 + s.k).clamp(0, nv as i64 - 1) as usize;
                    let t1 = (j as i64 + s.k + 1).clamp(0, nv as i64 - 1) as usize;
                    col[t0] += (1.0 - s.theta) * m;
                    if s.theta != 0.0 {
                        col[t1] += s.theta * m;
                    }
                }
                col
        };
        let columns: Vec<Vec<f64>> = if self.parallel() {
            (0..n).into_par_iter().map(column).collect()
        } else {
            (0..n).map(column).collect()
        };
        for (i, col) in columns.iter().enumerate() {
            for (j, c) in col.iter().enumerate() {
                values[j * n + i] = *c;
            }
        }
    }

    fn transport(&self, values: &mut [f64]) {
        match &self.v_shifts {
            None => self.shift_x(values),
            Some(vs) => {
                self.shift_x(values);
                self.shift_v(values, vs);
                self.shift_x(values);
            }
        }
    }

    fn collide(&self, values: &mut [f64]) {
        let n = self.shape.cells_x();
        let nv = self.shape.n_v();
        if let Some(mats) = &self.matrices {
            let old = values.to_vec();
            self.for_each_slice(values, |j, slice| {
                for (i, out) in slice.iter_mut().enumerate() {
                    let m = &mats[i * nv * nv + j * nv..i * nv * nv + (j + 1) * nv];
                    *out = (0..nv).map(|k| m[k] * old[k * n + i]).sum();
                }
            });
            return;
        }
        let q = &self.shape.q;
        let rho: Vec<f64> = {
            let vals: &[f64] = values;
            let chunk = |c: usize| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(n);
                let mut acc = vec![0.0; hi - lo];
                for (j, qj) in q.iter().enumerate() {
                    for (a, f) in acc.iter_mut().zip(&vals[j * n + lo..j * n + hi]) {
                        *a += qj * f;
                    }
                }
                acc
            };
            if self.parallel() {
                (0..n.div_ceil(CHUNK)).into_par_iter().flat_map_iter(chunk).collect()
            } else {
                (0..n.div_ceil(CHUNK)).flat_map(chunk).collect()
            }
        };
        let nu = &self.equilibrium.nu_v;
        self.for_each_slice(values, |j, slice| {
            let nj = nu[j];
            for (((f, a), b), r) in slice.iter_mut().zip(&self.decay).zip(&self.gain).zip(&rho) {
                *f = a * *f + b * nj * r;
            }
        });
    }

    fn advance(&self, f: &mut PhaseDensity, steps: usize, collide: bool) {
        for _ in 0..steps {
            self.transport(&mut f.values);
            if collide {
                self.collide(&mut f.values);
            }
            self.transport(&mut f.values);
        }
        f.time += steps as f64 * self.dt;
    }

    /// Number of steps that reach time `t` (rounded to the nearest step).
    pub fn steps_for(&self, t: f64) -> usize {
        (t / self.dt).round().max(0.0) as usize
    }

    pub fn step(&self, f: &PhaseDensity) -> Result<PhaseDensity> {
        self.check(f)?;
        let mut g = f.clone();
        self.advance(&mut g, 1, true);
        Ok(g)
    }

    /// Evolves `f` in place by `steps` steps.
    pub fn evolve(&self, f: &mut PhaseDensity, steps: usize) -> Result<()> {
        self.check(f)?;
        self.advance(f, steps, true);
        Ok(())
    }

    /// Runs to `t_end`, calling `visit` at each snapshot time (rounded to
    /// the step grid). Snapshot times must be sorted and lie in `[0, t_end]`.
    pub fn run_visit<F>(&self, f0: &PhaseDensity, t_end: f64, snapshot_times: &[f64], mut visit: F) -> Result<()>
    where
        F: FnMut(&PhaseDensity, SnapshotRecord) -> Result<()>,
    {
        self.check(f0)?;
        if !(t_end >= 0.0) {
            return Err(Error::domain("t_end must be nonnegative"));
        }
        if snapshot_times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
            return Err(Error::domain("snapshot times must lie in [0, t_end]"));
        }
        if snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("snapshot times must be sorted"));
        }
        let m0 = f0.mass();
        let mut f = f0.clone();
        let mut done = 0;
        for &t in snapshot_times {
            let target = self.steps_for(t);
            self.advance(&mut f, target.saturating_sub(done), true);
            done = done.max(target);
            let mass = f.mass();
            let record = SnapshotRecord {
                t: f.time,
                mass,
                mass_drift: mass / m0 - 1.0,
                min: f.min(),
            };
            visit(&f, record)?;
        }
        Ok(())
    }

    pub fn run(&self, f0: &PhaseDensity, t_end: f64, snapshot_times: &[f64]) -> Result<RunOutput> {
        let mut out = RunOutput {
            snapshots: Vec::new(),
            records: Vec::new(),
        };
        self.run_visit(f0, t_end, snapshot_times, |f, r| {
            out.snapshots.push(f.clone());
            out.records.push(r);
            Ok(())
        })?;
        Ok(out)
    }

    /// `min f / nu` over cells where the discrete equilibrium is positive.
    pub fn minorization_ratio(&self, f: &PhaseDensity) -> Result<f64> {
        self.check(f)?;
        let n = self.shape.cells_x();
        let mut ratio = f64::INFINITY;
        for (j, nv) in self.equilibrium.nu_v.iter().enumerate() {
            for (i, nx) in self.equilibrium.nu_x.iter().enumerate() {
                let e = nv * nx;
                if e > 0.0 {
                    ratio = ratio.min(f.values[j * n + i] / e);
                }
            }
        }
        Ok(ratio)
    }

    /// Compares `f_t` with `exp(-t sup sigma)` times the transport-only
    /// evolution of `f0`.
    pub fn duhamel_lower_bound_check(&self, f0: &PhaseDensity, t: f64) -> Result<DuhamelOutcome> {
        self.check(f0)?;
        let steps = self.steps_for(t);
        let mut f = f0.clone();
        let mut g = f0.clone();
        self.advance(&mut f, steps, true);
        self.advance(&mut g, steps, false);
        let t = f.time - f0.time;
        let factor = (-t * self.problem.sigma.sup_norm()).exp();
        let margin = f
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| a - factor * b)
            .fold(f64::INFINITY, f64::min);
        let tolerance = 1e-12 * g.values.iter().copied().fold(0.0, f64::max);
        Ok(DuhamelOutcome {
            t,
            margin,
            tolerance,
            passed: margin >= -tolerance,
            transported_mass: g.mass(),
        })
    }

    /// Evolves both densities to `cert.t_star` and compares total variations.
    pub fn contraction_check(
        &self,
        mu1: &PhaseDensity,
        mu2: &PhaseDensity,
        cert: &RateCertificate,
        tolerance: f64,
    ) -> Result<ContractionOutcome> {
        self.check(mu1)?;
        self.check(mu2)?;
        let tv_initial = crate::measures::tv_grid(mu1, mu2)?;
        if tv_initial == 0.0 {
            return Err(Error::UndefinedRatio("the two initial densities coincide".into()));
        }
        let steps = self.steps_for(cert.t_star);
        let mut a = mu1.clone();
        let mut b = mu2.clone();
        self.advance(&mut a, steps, true);
        self.advance(&mut b, steps, true);
        let tv_final = crate::measures::tv_grid(&a, &b)?;
        let ratio = tv_final / tv_initial;
        let bound = 1.0 - cert.alpha;
        Ok(ContractionOutcome {
            t: a.time - mu1.time,
            tv_initial,
            tv_final,
            ratio,
            bound,
            passed: ratio <= bound + tolerance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::SigmaField;

    fn gt(sigma: SigmaField) -> ScatterProblem {
        ScatterProblem {
            dim: 1,
            velocity: VelocitySpace::goldstein_taylor(),
            sigma,
            potential: Default::default(),
            kernel: Kernel::Equilibrium,
        }
    }

    #[test]
    fn shift_matches_definition() {
        let input = [1.0, 2.0, 3.0, 4.0];
        let mut out = [0.0; 4];
        Shift::new(1.0).apply_periodic(&input, &mut out);
        assert_eq!(out, [4.0, 1.0, 2.0, 3.0]);
        Shift::new(-1.0).apply_periodic(&input, &mut out);
        assert_eq!(out, [2.0, 3.0, 4.0, 1.0]);
        Shift::new(0.25).apply_periodic(&input, &mut out);
        assert_eq!(out, [0.75 * 1.0 + 0.25 * 4.0, 0.75 * 2.0 + 0.25, 0.75 * 3.0 + 0.5, 0.75 * 4.0 + 0.75]);
        Shift::new(5.0).apply_periodic(&input, &mut out);
        assert_eq!(out, [4.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn uniformization_is_stochastic() {
        let rows = vec![vec![0.1, 0.6], vec![0.9, 0.4]];
        let m = relaxation_matrix(&rows, 0.7);
        for k in 0..2 {
            assert!((m[k] + m[2 + k] - 1.0).abs() < 1e-15);
        }
        let id = relaxation_matrix(&rows, 0.0);
        assert_eq!(id, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn goldstein_taylor_free_transport_is_exact() {
        let p = gt(SigmaField::constant(0.0));
        let s = KineticSolver::new(&p, &SolverConfig::new(32, None)).unwrap();
        assert!(s.exact_transport());
        let f0 = s
            .initial(&InitialData::Box {
                x_lo: vec![0.25],
                x_hi: vec![0.5],
                v_lo: Some(vec![1.0]),
                v_hi: Some(vec![1.0]),
            })
            .unwrap();
        // one period of the flow returns every cell to itself
        let mut f = f0.clone();
        s.evolve(&mut f, s.steps_for(1.0)).unwrap();
        assert_eq!(f.values, f0.values);
    }

    #[test]
    fn cfl_violation_is_reported() {
        let p = ScatterProblem {
            dim: 1,
            velocity: VelocitySpace::Ball { radius: 1.0 },
            sigma: SigmaField::constant(1.0),
            potential: Default::default(),
            kernel: Kernel::Equilibrium,
        };
        let err = KineticSolver::new(&p, &SolverConfig::new(64, Some(16)).with_dt(0.05));
        assert!(matches!(err, Err(Error::Cfl { axis: "x", .. })));
    }
}
