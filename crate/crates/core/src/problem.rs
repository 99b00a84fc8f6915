use serde::{Deserialize, Serialize};

use crate::control::{ControlGeometry, SigmaField};
use crate::error::{Error, Result};
use crate::geometry::{FlowConfig, Potential};
use crate::velocity::VelocitySpace;

/// Scattering kernel `p(v, v')`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `p(v, v') = nu_v(v)`: the post-jump velocity is drawn from the
    /// velocity law regardless of the pre-jump one.
    #[default]
    Equilibrium,
    /// Discrete velocity sets only: `rows[j][k]` is the probability of the
    /// post-jump velocity `j` given pre-jump velocity `k` (columns sum to 1).
    Matrix { rows: Vec<Vec<f64>> },
}

impl Kernel {
    pub fn validate(&self, velocity: &VelocitySpace) -> Result<()> {
        if let Kernel::Matrix { rows } = self {
            let n = match velocity {
                VelocitySpace::Discrete { velocities, .. } => velocities.len(),
                _ => return Err(Error::config("matrix kernels need a discrete velocity space")),
            };
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::config(format!("kernel matrix must be {n} x {n}")));
            }
            if rows.iter().flatten().any(|&p| !(p >= 0.0)) {
                return Err(Error::config("kernel matrix entries must be nonnegative"));
            }
            for k in 0..n {
                let col: f64 = rows.iter().map(|r| r[k]).sum();
                if (col - 1.0).abs() > 1e-12 {
                    return Err(Error::config(format!("kernel matrix column {k} sums to {col}, expected 1")));
                }
            }
        }
        Ok(())
    }
}

/// A full problem instance: dimension, jump rate, potential, velocity
/// space and kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterProblem {
    pub dim: usize,
    pub velocity: VelocitySpace,
    pub sigma: SigmaField,
    #[serde(default)]
    pub potential: Potential,
    #[serde(default)]
    pub kernel: Kernel,
}

impl ScatterProblem {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        self.velocity.validate(self.dim)?;
        self.sigma.validate(self.dim)?;
        self.potential.validate(self.dim)?;
        self.kernel.validate(&self.velocity)?;
        if !self.potential.is_zero() && self.velocity.is_discrete() {
            return Err(Error::config("a nonzero potential needs a continuous velocity space"));
        }
        Ok(())
    }

    pub fn control(&self) -> ControlGeometry<'_> {
        ControlGeometry {
            dim: self.dim,
            sigma: &self.sigma,
            potential: &self.potential,
            velocity: &self.velocity,
        }
    }

    pub fn default_flow(&self) -> FlowConfig {
        FlowConfig::default_for(&self.potential, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let p: ScatterProblem = serde_json::from_str(
            r#"{"dim":1,"velocity":{"kind":"ball","radius":1},"sigma":{"kind":"constant","value":1}}"#,
        )
        .unwrap();
        p.validate().unwrap();
        assert_eq!(p.potential, Potential::Zero);
        assert_eq!(p.kernel, Kernel::Equilibrium);
    }

    #[test]
    fn matrix_kernel_checks() {
        let v = VelocitySpace::goldstein_taylor();
        assert!(Kernel::Matrix {
            rows: vec![vec![0.2, 0.5], vec![0.8, 0.5]]
        }
        .validate(&v)
        .is_ok());
        assert!(Kernel::Matrix {
            rows: vec![vec![0.2, 0.5], vec![0.7, 0.5]]
        }
        .validate(&v)
        .is_err());
        assert!(Kernel::Matrix { rows: vec![vec![1.0]] }
            .validate(&VelocitySpace::Ball { radius: 1.0 })
            .is_err());
    }
}
