//! Explicit constants of the Doeblin argument: spreading time and mass,
//! the minorization constant `alpha`, and the resulting decay rate
//! `lambda = -log(1 - alpha) / t_star` with `t_star = 2T + T_*`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::control::{GccReport, SpectralConstants};
use crate::error::{Error, Result};
use crate::geometry::{potential_bounds, Potential, PotentialBounds};
use crate::problem::{Kernel, ScatterProblem};
use crate::velocity::{unit_ball_volume, VelocitySpace};

/// Decreasing, strictly positive radial lower bound `M(|v|)` on the kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    /// `c (2 pi)^{-d/2} exp(-s^2/2)` with `0 < c <= 1`.
    Maxwellian { c: f64 },
}

impl RadialProfile {
    pub fn value(&self, s: f64, dim: usize) -> f64 {
        match self {
            RadialProfile::Maxwellian { c } => c * (2.0 * PI).powf(-(dim as f64) / 2.0) * (-0.5 * s * s).exp(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            RadialProfile::Maxwellian { c } => {
                if !(*c > 0.0 && *c <= 1.0) {
                    return Err(Error::config("Maxwellian profile needs 0 < c <= 1"));
                }
            }
        }
        let mut prev = f64::INFINITY;
        for i in 0..=400 {
            let m = self.value(i as f64 * 0.05, dim);
            if !(m > 0.0) || m > prev {
                return Err(Error::domain("radial profile must be positive and nonincreasing"));
            }
            prev = m;
        }
        Ok(())
    }
}

/// Which lower bound on the kernel the spreading estimate uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegimeSpec {
    /// `W = 0` and `p(v, v') >= gamma 1_{B(v0, r0)}(v)`.
    R1 { gamma: f64, v0: Vec<f64>, r0: f64 },
    /// `V = R^d` and `p(v, v') >= M(|v|)`.
    R2 { profile: RadialProfile },
}

/// Which displayed form of the minorization constant to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `alpha = beta kappa^2 exp(-t_star sigma_sup)`
    LemmaForm,
    /// `alpha = beta gamma^2 kappa^2 exp(-t_star sigma_sup)`
    TheoremForm,
}

impl Variant {
    pub fn default_for(regime: &RegimeSpec) -> Self {
        match regime {
            RegimeSpec::R1 { .. } => Variant::TheoremForm,
            RegimeSpec::R2 { .. } => Variant::LemmaForm,
        }
    }
}

/// Spreading time and mass of the transported velocity law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spreading {
    pub t_star: f64,
    pub beta: f64,
}

/// `T_* = 2 / r0`, `beta = gamma (r0/2)^d`.
///
/// The mass bound `gamma (r0 - 1/t)^d >= gamma (r0/2)^d` needs `t >= 2/r0`;
/// the alternative `r0 / 2` is available from [`stated_r1_spread_time`].
pub fn spreading_r1(gamma: f64, r0: f64, dim: usize) -> Result<Spreading> {
    if !(gamma > 0.0) || !(r0 > 0.0) || dim == 0 {
        return Err(Error::domain(format!(
            "R1 spreading needs gamma > 0, r0 > 0, d >= 1 (got {gamma}, {r0}, {dim})"
        )));
    }
    Ok(Spreading {
        t_star: 2.0 / r0,
        beta: gamma * (0.5 * r0).powi(dim as i32),
    })
}

pub fn stated_r1_spread_time(r0: f64) -> f64 {
    0.5 * r0
}

/// R2 spreading constants with both exponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadingR2 {
    pub t_star: f64,
    /// `Z exp(-(T+1)(1+H)) M(4(1+G) + 5 G T)`
    pub beta: f64,
    /// Same with exponent `(T + 1/2)`.
    pub beta_half_exponent: f64,
    pub bounds: PotentialBounds,
    /// `4(1+G) + 5 G T`
    pub speed_radius: f64,
}

pub fn spreading_r2(w: &Potential, dim: usize, horizon: f64, profile: &RadialProfile) -> Result<SpreadingR2> {
    if !(horizon > 0.0) {
        return Err(Error::domain(format!("R2 spreading needs T > 0, got {horizon}")));
    }
    let bounds = potential_bounds(w, dim);
    let (g, h, z) = (bounds.grad_sup, bounds.hess_sup, bounds.partition);
    let speed_radius = 4.0 * (1.0 + g) + 5.0 * g * horizon;
    let m = profile.value(speed_radius, dim);
    Ok(SpreadingR2 {
        t_star: 0.5,
        beta: z * (-(horizon + 1.0) * (1.0 + h)).exp() * m,
        beta_half_exponent: z * (-(horizon + 0.5) * (1.0 + h)).exp() * m,
        bounds,
        speed_radius,
    })
}

/// Doeblin minorization constant.
pub fn doeblin_alpha(beta: f64, kappa: f64, t_star: f64, sigma_sup: f64, variant: Variant, gamma: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    if !(kappa >= 0.0) || !(t_star > 0.0) || !(sigma_sup >= 0.0) {
        return Err(Error::domain(format!(
            "need kappa >= 0, t_star > 0, sigma_sup >= 0 (got {kappa}, {t_star}, {sigma_sup})"
        )));
    }
    let mut alpha = beta * kappa * kappa * (-t_star * sigma_sup).exp();
    if variant == Variant::TheoremForm {
        if !(gamma > 0.0) {
            return Err(Error::domain(format!("theorem form needs gamma > 0, got {gamma}")));
        }
        alpha *= gamma * gamma;
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InconsistentInputs(format!(
            "minorization constant {alpha} outside [0, 1); kappa cannot exceed T * sigma_sup"
        )));
    }
    Ok(alpha)
}

/// `lambda = -log(1 - alpha) / t_star`.
pub fn rate_lambda(alpha: f64, t_star: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(t_star > 0.0) {
        return Err(Error::domain(format!("t_star must be positive, got {t_star}")));
    }
    Ok(-(-alpha).ln_1p() / t_star)
}

/// `exp(-lambda (t - t_star)) tv0`; only claimed as a bound for `t >= t_star`.
pub fn decay_envelope(lambda: f64, t_star: f64, tv0: f64, t: f64) -> f64 {
    (-lambda * (t - t_star)).exp() * tv0
}

/// Diagnostic values kept alongside the headline constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateMetadata {
    /// R1: the spreading time `r0 / 2` as printed alongside the lemma.
    pub spread_time_stated: Option<f64>,
    /// R2: `beta` with exponent `(T + 1/2)` in place of `(T + 1)`.
    pub beta_half_exponent: Option<f64>,
    pub potential_bounds: Option<PotentialBounds>,
    pub gcc_grid_min: f64,
    pub gcc_lipschitz_error_hint: f64,
}

/// All constants of the quantitative rate, reproducible from the stored fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateCertificate {
    #[serde(flatten)]
    pub regime: RegimeSpec,
    pub variant: Variant,
    /// Control horizon.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub kappa: f64,
    /// Spreading time `T_*` (or `T_***`).
    #[serde(rename = "T_star")]
    pub spread_time: f64,
    pub beta: f64,
    /// `2T + T_*`
    pub t_star: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub sigma_sup: f64,
    pub c_minus: Option<f64>,
    pub c_plus: Option<f64>,
    pub alpha_lemma_form: f64,
    pub lambda_lemma_form: f64,
    /// Only defined when the regime carries `gamma` (R1).
    pub alpha_theorem_form: Option<f64>,
    pub lambda_theorem_form: Option<f64>,
    /// `lambda <= C+`; `None` when `C+` is unknown. Flagged, never enforced.
    pub lambda_below_c_plus: Option<bool>,
    pub metadata: CertificateMetadata,
}

impl RateCertificate {
    /// Recomputes `lambda` from the stored `alpha` and `t_star`.
    pub fn recomputed_lambda(&self) -> Result<f64> {
        rate_lambda(self.alpha, self.t_star)
    }

    pub fn envelope(&self, tv0: f64, t: f64) -> f64 {
        decay_envelope(self.lambda, self.t_star, tv0, t)
    }
}

/// Lebesgue measure of `B(v0, r0) ∩ V` (exact in one dimension, tensor
/// quadrature otherwise).
fn ball_intersection_volume(v0: &[f64], r0: f64, velocity: &VelocitySpace, dim: usize) -> f64 {
    if dim == 1 {
        let (lo, hi) = match velocity {
            VelocitySpace::Ball { radius } => (-radius, *radius),
            VelocitySpace::Box { lo, hi } => (lo[0], hi[0]),
            _ => return 0.0,
        };
        return ((v0[0] + r0).min(hi) - (v0[0] - r0).max(lo)).max(0.0);
    }
    let n: usize = if dim == 2 { 400 } else { 48 };
    let h = 2.0 * r0 / n as f64;
    let cell = h.powi(dim as i32);
    let total = n.pow(dim as u32);
    let mut count = 0usize;
    let mut v = vec![0.0; dim];
    for idx in 0..total {
        let mut rem = idx;
        for (c, centre) in v.iter_mut().zip(v0) {
            *c = centre - r0 + (rem % n) as f64 * h + 0.5 * h;
            rem /= n;
        }
        let in_ball = v.iter().zip(v0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() < r0 * r0;
        if in_ball && velocity.density(&v, dim) > 0.0 {
            count += 1;
        }
    }
    count as f64 * cell
}

fn check_regime(problem: &ScatterProblem, regime: &RegimeSpec) -> Result<()> {
    let d = problem.dim;
    if problem.kernel != Kernel::Equilibrium {
        return Err(Error::config("certificates are built for the equilibrium kernel p(v, v') = nu_v(v)"));
    }
    match regime {
        RegimeSpec::R1 { gamma, v0, r0 } => {
            if !problem.potential.is_zero() {
                return Err(Error::config("regime R1 requires W = 0"));
            }
            if v0.len() != d {
                return Err(Error::config(format!("R1 centre v0 needs {d} components")));
            }
            let vol = problem.velocity.volume(d).ok_or_else(|| {
                Error::config("regime R1 needs a bounded continuous velocity space (ball or box)")
            })?;
            // the uniform kernel 1/|V| must dominate gamma on B(v0, r0)
            if *gamma > (1.0 / vol) * (1.0 + 1e-12) {
                return Err(Error::InconsistentInputs(format!(
                    "gamma = {gamma} exceeds the kernel density 1/|V| = {}",
                    1.0 / vol
                )));
            }
            let ball = unit_ball_volume(d) * r0.powi(d as i32);
            let inside = ball_intersection_volume(v0, *r0, &problem.velocity, d);
            if inside < ball * (1.0 - 1e-3) {
                return Err(Error::InconsistentInputs(format!(
                    "B(v0, r0) is not contained in V (|B ∩ V| = {inside}, |B| = {ball})"
                )));
            }
            if gamma * inside > 1.0 + 1e-12 {
                return Err(Error::InconsistentInputs("gamma |B(v0, r0) ∩ V| exceeds 1".into()));
            }
        }
        RegimeSpec::R2 { profile } => {
            if problem.velocity != VelocitySpace::Full {
                return Err(Error::config("regime R2 requires V = R^d with the Maxwellian law"));
            }
            profile.validate(d)?;
        }
    }
    Ok(())
}

/// Assembles spreading constants, minorization constant and rate.
///
/// Refuses (with the argmin trajectory) when the control report is not
/// satisfied. `spectral` supplies `C-`/`C+` for the consistency flag.
pub fn build_certificate(
    problem: &ScatterProblem,
    gcc: &GccReport,
    regime: &RegimeSpec,
    variant: Option<Variant>,
    spectral: Option<&SpectralConstants>,
) -> Result<RateCertificate> {
    problem.validate()?;
    if !gcc.satisfied {
        return Err(Error::GccNotSatisfied {
            kappa_hat: gcc.kappa_hat,
            threshold: gcc.threshold,
            x: gcc.argmin_point.x.coords().to_vec(),
            v: gcc.argmin_point.v.clone(),
        });
    }
    check_regime(problem, regime)?;
    let variant = variant.unwrap_or_else(|| Variant::default_for(regime));
    let horizon = gcc.t;
    let kappa = gcc.kappa_hat;
    let sigma_sup = problem.sigma.sup_norm();

    let (spread, gamma, stated, beta_half, bounds) = match regime {
        RegimeSpec::R1 { gamma, r0, .. } => {
            let s = spreading_r1(*gamma, *r0, problem.dim)?;
            (s, Some(*gamma), Some(stated_r1_spread_time(*r0)), None, None)
        }
        RegimeSpec::R2 { profile } => {
            let s = spreading_r2(&problem.potential, problem.dim, horizon, profile)?;
            (
                Spreading {
                    t_star: s.t_star,
                    beta: s.beta,
                },
                None,
                None,
                Some(s.beta_half_exponent),
                Some(s.bounds),
            )
        }
    };
    if variant == Variant::TheoremForm && gamma.is_none() {
        return Err(Error::config("the theorem form needs gamma, which only regime R1 provides"));
    }
    let t_star = 2.0 * horizon + spread.t_star;
    let alpha_lemma_form = doeblin_alpha(spread.beta, kappa, t_star, sigma_sup, Variant::LemmaForm, 1.0)?;
    let lambda_lemma_form = rate_lambda(alpha_lemma_form, t_star)?;
    let (alpha_theorem_form, lambda_theorem_form) = match gamma {
        Some(g) => {
            let a = doeblin_alpha(spread.beta, kappa, t_star, sigma_sup, Variant::TheoremForm, g)?;
            (Some(a), Some(rate_lambda(a, t_star)?))
        }
        None => (None, None),
    };
    let (alpha, lambda) = match variant {
        Variant::LemmaForm => (alpha_lemma_form, lambda_lemma_form),
        Variant::TheoremForm => (alpha_theorem_form.unwrap(), lambda_theorem_form.unwrap()),
    };
    let c_plus = spectral.map(|s| s.c_plus);
    Ok(RateCertificate {
        regime: regime.clone(),
        variant,
        horizon,
        kappa,
        spread_time: spread.t_star,
        beta: spread.beta,
        t_star,
        alpha,
        lambda,
        sigma_sup,
        c_minus: spectral.map(|s| s.c_minus),
        c_plus,
        alpha_lemma_form,
        lambda_lemma_form,
        alpha_theorem_form,
        lambda_theorem_form,
        lambda_below_c_plus: c_plus.map(|c| lambda <= c),
        metadata: CertificateMetadata {
            spread_time_stated: stated,
            beta_half_exponent: beta_half,
            potential_bounds: bounds,
            gcc_grid_min: gcc.grid_min,
            gcc_lipschitz_error_hint: gcc.lipschitz_error_hint,
        },
    })
}
