use serde::{Deserialize, Serialize};

use super::{potential_bounds, wrap_scalar, PhasePoint, Potential, TorusPoint};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMethod {
    /// Straight lines `x + v t`; only valid for `W = 0`.
    ExactFree,
    VelocityVerlet,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub method: FlowMethod,
}

impl FlowConfig {
    /// Exact flow for `W = 0`, otherwise velocity-Verlet with
    /// `dt = 1e-3 min(1, 1/(1+G))`.
    pub fn default_for(w: &Potential, dim: usize) -> Self {
        if w.is_zero() {
            return FlowConfig {
                dt: 1e-3,
                method: FlowMethod::ExactFree,
            };
        }
        let g = potential_bounds(w, dim).grad_sup;
        FlowConfig {
            dt: 1e-3 * (1.0f64).min(1.0 / (1.0 + g)),
            method: FlowMethod::VelocityVerlet,
        }
    }

    pub fn validate(&self, w: &Potential) -> Result<()> {
        if self.method == FlowMethod::ExactFree && !w.is_zero() {
            return Err(Error::config("exact free flow requested with a nonzero potential"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("flow step must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

fn verlet_step(w: &Potential, x: &mut [f64], v: &mut [f64], acc: &mut [f64], h: f64) {
    for (vi, ai) in v.iter_mut().zip(acc.iter()) {
        *vi -= 0.5 * h * ai;
    }
    for (xi, vi) in x.iter_mut().zip(v.iter()) {
        *xi += h * vi;
    }
    w.gradient_into(x, acc);
    for (vi, ai) in v.iter_mut().zip(acc.iter()) {
        *vi -= 0.5 * h * ai;
    }
}

/// Advances `(x, v)` by time `t` (either sign). `x` is left unwrapped so
/// callers can accumulate displacement; wrap it when a torus point is needed.
///
/// Velocity-Verlet takes `floor(|t|/dt)` full steps with half of the
/// remainder before and after them. `acc` must hold `grad W(x)` on entry
/// and holds it again on exit.
pub fn flow_in_place(w: &Potential, x: &mut [f64], v: &mut [f64], acc: &mut [f64], t: f64, cfg: &FlowConfig) {
    if t == 0.0 {
        return;
    }
    match cfg.method {
        FlowMethod::ExactFree => {
            for (xi, vi) in x.iter_mut().zip(v.iter()) {
                *xi += vi * t;
            }
        }
        FlowMethod::VelocityVerlet => {
            let steps = (t.abs() / cfg.dt).floor();
            let h = cfg.dt.copysign(t);
            // the remainder is split around the full steps so that flowing
            // back by -t retraces the same sub-steps
            let half_rest = 0.5 * (t - steps * h);
            if half_rest != 0.0 {
                verlet_step(w, x, v, acc, half_rest);
            }
            for _ in 0..steps as u64 {
                verlet_step(w, x, v, acc, h);
            }
            if half_rest != 0.0 {
                verlet_step(w, x, v, acc, half_rest);
            }
        }
    }
}

/// The characteristic flow `Phi_t(start)`.
pub fn flow(w: &Potential, start: &PhasePoint, t: f64, cfg: &FlowConfig) -> Result<PhasePoint> {
    cfg.validate(w)?;
    let mut x = start.x.coords().to_vec();
    let mut v = start.v.clone();
    let mut acc = w.gradient(&x);
    flow_in_place(w, &mut x, &mut v, &mut acc, t, cfg);
    x.iter_mut().for_each(|c| *c = wrap_scalar(*c));
    Ok(PhasePoint {
        x: TorusPoint::new(&x),
        v,
    })
}

/// Gronwall bound `exp(t_max (1 + H))` on the velocity derivative of the
/// position flow over `|t| <= t_max`.
pub fn flow_derivative_bound(w: &Potential, dim: usize, t_max: f64) -> f64 {
    let h = potential_bounds(w, dim).hess_sup;
    (t_max * (1.0 + h)).exp()
}

/// Hamiltonian `|v|^2 / 2 + W(x)`.
pub fn energy(w: &Potential, p: &PhasePoint) -> f64 {
    0.5 * p.v.iter().map(|v| v * v).sum::<f64>() + w.value(p.x.coords())
}
