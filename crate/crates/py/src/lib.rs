//! Python bindings: problems built from JSON, the control search, rate
//! certificates and the closed-form constants.

use kinrelax::certificate::{self, RegimeSpec, Variant};
use kinrelax::control::GccGrid;
use kinrelax::geometry::{self, Potential};
use kinrelax::ScatterProblem;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn lib_err(e: kinrelax::Error) -> PyErr {
    match e {
        kinrelax::Error::Config(_) | kinrelax::Error::Domain(_) | kinrelax::Error::InconsistentInputs(_) => {
            value_err(e)
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A scattering problem parsed from the same JSON as the CLI's `problem` field.
#[pyclass(frozen)]
struct Problem {
    inner: ScatterProblem,
}

#[pymethods]
impl Problem {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ScatterProblem = serde_json::from_str(text).map_err(value_err)?;
        inner.validate().map_err(lib_err)?;
        Ok(Problem { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn sigma(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.dim {
            return Err(value_err("point dimension does not match the problem"));
        }
        Ok(self.inner.sigma.value(&x))
    }

    /// Returns `(kappa_hat, satisfied, x, v)` of the weakest sampled trajectory.
    #[pyo3(signature = (horizon, n_x=256, n_v=41, n_quad=256))]
    fn gcc_kappa(&self, py: Python<'_>, horizon: f64, n_x: usize, n_v: usize, n_quad: usize)
        -> PyResult<(f64, bool, Vec<f64>, Vec<f64>)> {
        let grid = GccGrid {
            n_x,
            n_v,
            n_quad,
            ..GccGrid::default()
        };
        let r = py
            .detach(|| self.inner.control().gcc_kappa(horizon, &grid))
            .map_err(lib_err)?;
        Ok((r.kappa_hat, r.satisfied, r.argmin_point.x.coords().to_vec(), r.argmin_point.v))
    }

    /// Certificate JSON; `regime` uses the CLI's `regime` syntax.
    #[pyo3(signature = (horizon, regime, variant=None))]
    fn certificate(&self, py: Python<'_>, horizon: f64, regime: &str, variant: Option<&str>) -> PyResult<String> {
        let regime: RegimeSpec = serde_json::from_str(regime).map_err(value_err)?;
        let variant = variant
            .map(|v| serde_json::from_value::<Variant>(serde_json::Value::String(v.into())).map_err(value_err))
            .transpose()?;
        let cert = py
            .detach(|| {
                let gcc = self.inner.control().gcc_kappa(horizon, &GccGrid::default())?;
                certificate::build_certificate(&self.inner, &gcc, &regime, variant, None)
            })
            .map_err(lib_err)?;
        serde_json::to_string(&cert).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("Problem(dim={})", self.inner.dim)
    }
}

/// `(T_star, beta)` for a kernel bounded below by `gamma` on a ball of radius `r0`.
#[pyfunction]
fn spreading_r1(gamma: f64, r0: f64, dim: usize) -> PyResult<(f64, f64)> {
    let s = certificate::spreading_r1(gamma, r0, dim).map_err(lib_err)?;
    Ok((s.t_star, s.beta))
}

#[pyfunction]
#[pyo3(signature = (beta, kappa, t_star, sigma_sup, variant="theorem_form", gamma=1.0))]
fn doeblin_alpha(beta: f64, kappa: f64, t_star: f64, sigma_sup: f64, variant: &str, gamma: f64) -> PyResult<f64> {
    let variant: Variant = serde_json::from_value(serde_json::Value::String(variant.into())).map_err(value_err)?;
    certificate::doeblin_alpha(beta, kappa, t_star, sigma_sup, variant, gamma).map_err(lib_err)
}

#[pyfunction]
fn rate_lambda(alpha: f64, t_star: f64) -> PyResult<f64> {
    certificate::rate_lambda(alpha, t_star).map_err(lib_err)
}

#[pyfunction]
fn decay_envelope(lambda: f64, t_star: f64, tv0: f64, t: f64) -> f64 {
    certificate::decay_envelope(lambda, t_star, tv0, t)
}

/// `(G, H, Z)` for `W = a cos(2 pi x)`.
#[pyfunction]
fn cosine_potential_bounds(a: f64) -> (f64, f64, f64) {
    let b = geometry::potential_bounds(&Potential::cosine_1d(a), 1);
    (b.grad_sup, b.hess_sup, b.partition)
}

#[pymodule]
fn kinrelax_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_function(wrap_pyfunction!(spreading_r1, m)?)?;
    m.add_function(wrap_pyfunction!(doeblin_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(rate_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(decay_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_potential_bounds, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
