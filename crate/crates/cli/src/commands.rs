//! One function per subcommand. Each writes its artifacts and a manifest and
//! returns the process exit code.

use kinrelax::certificate::{build_certificate, RateCertificate};
use kinrelax::control::{GccReport, SpectralConstants};
use kinrelax::measures::{envelope_check, fit_decay, tv_grid, DecayCurve, EnvelopeOutcome};
use kinrelax::particles::{sample_initial, simulate, McConfig};
use kinrelax::solver::{KineticSolver, PhaseDensity};
use kinrelax::{Error, InitialData};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{axis_columns, fmt_f64, Csv, OutDir};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_GCC: u8 = 3;

/// A library error tagged with the module that raised it.
#[derive(Debug)]
pub struct Failure {
    pub module: &'static str,
    pub error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self.error {
            Error::GccNotSatisfied { .. } => EXIT_GCC,
            Error::Cfl { .. } | Error::MajorantViolation { .. } | Error::UndefinedRatio(_) | Error::Fit(_) => {
                EXIT_NUMERICAL
            }
            _ => EXIT_CONFIG,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.module, self.error)
    }
}

fn tag(module: &'static str) -> impl Fn(Error) -> Failure {
    move |error| Failure { module, error }
}

fn io(e: std::io::Error) -> Failure {
    Failure {
        module: "output",
        error: Error::Io(e),
    }
}

type Outcome = Result<u8, Failure>;

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: serde_json::Value,
    artifacts: &'a [String],
}

fn finish(out: &mut OutDir, command: &str, cfg: &RunConfig, t_end: Option<f64>) -> Result<(), Failure> {
    let mut artifacts = out.files().to_vec();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.resolved(t_end),
        artifacts: &artifacts,
    };
    out.json("manifest.json", &manifest).map_err(io)
}

fn run_gcc(cfg: &RunConfig, out: &mut OutDir) -> Result<GccReport, Failure> {
    let control = cfg.problem.control();
    let (report, samples) = control
        .gcc_kappa_with_samples(cfg.horizon, &cfg.gcc)
        .map_err(tag("control"))?;
    out.json("gcc_report.json", &report).map_err(io)?;
    if cfg.gcc_samples {
        let d = cfg.problem.dim;
        let mut header = axis_columns("x", d);
        header.extend(axis_columns("v", d));
        header.push("integral".into());
        let mut csv = Csv::new(&header);
        for s in &samples {
            let row: Vec<f64> = s.x.iter().chain(&s.v).copied().chain([s.integral]).collect();
            csv.floats(&row);
        }
        out.csv("gcc_samples.csv", &csv).map_err(io)?;
    }
    println!(
        "kappa_hat = {} at x = {:?}, v = {:?} ({})",
        fmt_f64(report.kappa_hat),
        report.argmin_point.x.coords(),
        report.argmin_point.v,
        if report.satisfied { "satisfied" } else { "NOT satisfied" }
    );
    Ok(report)
}

pub fn gcc(cfg: &RunConfig, out: &mut OutDir) -> Outcome {
    let report = run_gcc(cfg, out)?;
    finish(out, "gcc", cfg, None)?;
    Ok(if report.satisfied { EXIT_OK } else { EXIT_GCC })
}

struct Certified {
    gcc: GccReport,
    spectral: SpectralConstants,
    cert: RateCertificate,
}

fn run_cert(cfg: &RunConfig, out: &mut OutDir) -> Result<Certified, Failure> {
    let regime = cfg
        .regime
        .as_ref()
        .ok_or_else(|| tag("config")(Error::Config("a `regime` is required to build a certificate".into())))?;
    let gcc = run_gcc(cfg, out)?;
    let spectral = cfg
        .problem
        .control()
        .spectral_constants(&cfg.spectral_horizons(), &cfg.gcc)
        .map_err(tag("control"))?;
    let cert =
        build_certificate(&cfg.problem, &gcc, regime, cfg.variant, Some(&spectral)).map_err(tag("certificate"))?;
    out.json("certificate.json", &cert).map_err(io)?;
    println!(
        "alpha = {}, lambda = {}, t_star = {}",
        fmt_f64(cert.alpha),
        fmt_f64(cert.lambda),
        fmt_f64(cert.t_star)
    );
    Ok(Certified { gcc, spectral, cert })
}

pub fn cert(cfg: &RunConfig, out: &mut OutDir) -> Outcome {
    match run_cert(cfg, out) {
        Ok(_) => {
            finish(out, "cert", cfg, None)?;
            Ok(EXIT_OK)
        }
        Err(f) if f.exit_code() == EXIT_GCC => {
            // the control report already explains the refusal
            finish(out, "cert", cfg, None)?;
            Err(f)
        }
        Err(f) => Err(f),
    }
}

#[derive(Clone, Copy, Debug)]
struct Row {
    t: f64,
    tv: f64,
    mass: f64,
    mass_drift: f64,
    min_ratio: f64,
}

/// Record times `0, h, 2h, ...` and `t_end`, merged with `extra`.
fn merged_times(t_end: f64, every: f64, extra: &[f64]) -> Vec<f64> {
    let n = (t_end / every + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * every).filter(|t| *t <= t_end).collect();
    times.push(t_end);
    times.extend(extra.iter().copied().filter(|t| *t <= t_end));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Runs the grid solver, writing the time series and any snapshots.
fn run_series(
    cfg: &RunConfig,
    solver: &KineticSolver,
    t_end: f64,
    snapshots: &[f64],
    out: &mut OutDir,
) -> Result<Vec<Row>, Failure> {
    let f0 = solver.initial(&cfg.initial).map_err(tag("solver"))?;
    let nu = solver.equilibrium_density();
    let times = merged_times(t_end, cfg.record_every_for(t_end), snapshots);
    let mut rows = Vec::with_capacity(times.len());
    let mut grids: Vec<(f64, PhaseDensity)> = Vec::new();
    let mut k = 0;
    solver
        .run_visit(&f0, t_end, &times, |f, rec| {
            let t = times[k];
            k += 1;
            rows.push(Row {
                t: rec.t,
                tv: tv_grid(f, &nu)?,
                mass: rec.mass,
                mass_drift: rec.mass_drift,
                min_ratio: solver.minorization_ratio(f)?,
            });
            if snapshots.contains(&t) {
                grids.push((t, f.clone()));
            }
            Ok(())
        })
        .map_err(tag("solver"))?;
    let mut csv = Csv::with_columns(&["t", "tv", "mass", "min_ratio"]);
    for r in &rows {
        csv.floats(&[r.t, r.tv, r.mass, r.min_ratio]);
    }
    out.csv("timeseries.csv", &csv).map_err(io)?;
    for (n, (t, g)) in grids.iter().enumerate() {
        out.grid(&format!("snap_{n:04}"), g, *t).map_err(io)?;
    }
    Ok(rows)
}

pub fn solve(cfg: &RunConfig, out: &mut OutDir) -> Outcome {
    let solver = KineticSolver::new(&cfg.problem, &cfg.solver_config()).map_err(tag("solver"))?;
    let t_end = cfg.t_end_or(1.0);
    let snapshots = cfg.snapshot_times_for(t_end);
    if snapshots.iter().any(|t| !(0.0..=t_end).contains(t)) {
        return Err(tag("config")(Error::Config("snapshot_times must lie in [0, t_end]".into())));
    }
    let rows = run_series(cfg, &solver, t_end, &snapshots, out)?;
    let last = rows.last().expect("at least one record");
    println!(
        "t = {}: tv = {}, mass drift = {}",
        fmt_f64(last.t),
        fmt_f64(last.tv),
        fmt_f64(last.mass_drift)
    );
    finish(out, "solve", cfg, Some(t_end))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct McSnapshot {
    t: f64,
    survival_fraction: f64,
    mean_jumps: f64,
    jump_histogram: Vec<u64>,
}

#[derive(Serialize)]
struct McSummary {
    n_particles: usize,
    seed: u64,
    snapshots: Vec<McSnapshot>,
}

pub fn mc(cfg: &RunConfig, out: &mut OutDir) -> Outcome {
    let t_end = cfg.t_end_or(1.0);
    let times = cfg.mc_times_for(t_end);
    let n = cfg.mc.n_particles;
    let e0 = sample_initial(&cfg.problem, &cfg.initial, n, cfg.seed).map_err(tag("particles"))?;
    let run = McConfig {
        n_particles: n,
        seed: cfg.seed,
        flow: cfg.mc.flow,
    };
    let snaps = simulate(&cfg.problem, &e0, &times, &run).map_err(tag("particles"))?;
    let d = cfg.problem.dim;
    let mut summary = McSummary {
        n_particles: n,
        seed: cfg.seed,
        snapshots: Vec::new(),
    };
    for (k, e) in snaps.iter().enumerate() {
        if cfg.mc.write_particles {
            let mut header = vec!["particle".to_string()];
            header.extend(axis_columns("x", d));
            header.extend(axis_columns("v", d));
            header.push("jumps".into());
            let mut csv = Csv::new(&header);
            for (i, p) in e.particles.iter().enumerate() {
                let mut row = vec![i.to_string()];
                row.extend(p.x.iter().chain(&p.v).map(|c| fmt_f64(*c)));
                row.push(p.jumps.to_string());
                csv.row(&row);
            }
            out.csv(&format!("particles_{k:04}.csv"), &csv).map_err(io)?;
        }
        let total: u64 = e.particles.iter().map(|p| p.jumps).sum();
        summary.snapshots.push(McSnapshot {
            t: e.time,
            survival_fraction: e.survival_fraction(),
            mean_jumps: total as f64 / n as f64,
            jump_histogram: e.jump_histogram(),
        });
        println!("t = {}: survival fraction = {}", fmt_f64(e.time), fmt_f64(e.survival_fraction()));
    }
    out.json("mc_summary.json", &summary).map_err(io)?;
    finish(out, "mc", cfg, Some(t_end))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FitSummary {
    fitted_lambda: f64,
    fit_window: (f64, f64),
    residual: f64,
    points_used: usize,
    noise_floor: f64,
    lambda_certificate: Option<f64>,
}

/// Largest mass drift along the run, never below machine epsilon.
fn noise_floor(cfg: &RunConfig, rows: &[Row]) -> f64 {
    cfg.fit.noise_floor.unwrap_or_else(|| {
        rows.iter()
            .map(|r| r.mass_drift.abs())
            .fold(f64::EPSILON, f64::max)
    })
}

fn write_fit(cfg: &RunConfig, rows: &[Row], window: (f64, f64), cert: Option<&RateCertificate>, out: &mut OutDir)
    -> Result<DecayCurve, Failure> {
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let tv: Vec<f64> = rows.iter().map(|r| r.tv).collect();
    let floor = noise_floor(cfg, rows);
    let curve = fit_decay(&times, &tv, window, floor).map_err(tag("measures"))?;
    // the fitted line passes through the window means in log space
    let used: Vec<(f64, f64)> = times
        .iter()
        .zip(&tv)
        .filter(|(t, v)| **t >= window.0 && **t <= window.1 && **v > 10.0 * floor)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    let tm = used.iter().map(|p| p.0).sum::<f64>() / used.len() as f64;
    let ym = used.iter().map(|p| p.1).sum::<f64>() / used.len() as f64;
    let mut csv = Csv::with_columns(&["t", "tv", "fitted"]);
    for (t, v) in times.iter().zip(&tv) {
        let fitted = if *t >= window.0 && *t <= window.1 {
            (ym - curve.fitted_lambda * (t - tm)).exp()
        } else {
            f64::NAN
        };
        csv.floats(&[*t, *v, fitted]);
    }
    out.csv("decay_curve.csv", &csv).map_err(io)?;
    let summary = FitSummary {
        fitted_lambda: curve.fitted_lambda,
        fit_window: curve.fit_window,
        residual: curve.residual,
        points_used: curve.points_used,
        noise_floor: floor,
        lambda_certificate: cert.map(|c| c.lambda),
    };
    out.json("fit_summary.json", &summary).map_err(io)?;
    println!("fitted lambda = {} from {} points", fmt_f64(curve.fitted_lambda), curve.points_used);
    Ok(curve)
}

pub fn fit(cfg: &RunConfig, out: &mut OutDir) -> Outcome {
    let certified = match cfg.regime {
        Some(_) => Some(run_cert(cfg, out)?),
        None => None,
    };
    let cert = certified.as_ref().map(|c| &c.cert);
    let t_end = cfg.t_end_or(cert.map_or(1.0, |c| c.t_star + 5.0 / c.lambda));
    let solver = KineticSolver::new(&cfg.problem, &cfg.solver_config()).map_err(tag("solver"))?;
    let rows = run_series(cfg, &solver, t_end, &[], out)?;
    let window = cfg.fit.window.unwrap_or((cert.map_or(0.0, |c| c.t_star), t_end));
    write_fit(cfg, &rows, window, cert, out)?;
    finish(out, "fit", cfg, Some(t_end))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MinorizationCheck {
    x: Vec<f64>,
    v: Vec<f64>,
    t: f64,
    ratio: f64,
    threshold: f64,
    passed: bool,
}

#[derive(Serialize)]
struct FitCheck {
    fitted_lambda: Option<f64>,
    error: Option<String>,
    above_certificate: bool,
    /// Only meaningful for a constant rate.
    below_c_plus: Option<bool>,
}

#[derive(Serialize)]
struct Report {
    lambda: f64,
    alpha: f64,
    t_star: f64,
    kappa: f64,
    c_plus: f64,
    t_end: f64,
    tv0: f64,
    envelope: EnvelopeOutcome,
    minorization: MinorizationCheck,
    fit: FitCheck,
    passed: bool,
}

pub fn report(cfg: &RunConfig, out: &mut OutDir) -> Outcome {
    let Certified { gcc, spectral, cert } = run_cert(cfg, out)?;
    let t_end = cfg.t_end_or(cert.t_star + 5.0 / cert.lambda);
    let solver = KineticSolver::new(&cfg.problem, &cfg.solver_config()).map_err(tag("solver"))?;
    let rows = run_series(cfg, &solver, t_end, &[], out)?;
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let tv: Vec<f64> = rows.iter().map(|r| r.tv).collect();
    let tv0 = tv[0];
    let envelope =
        envelope_check(&times, &tv, &cert, tv0, cfg.report.envelope_tolerance).map_err(tag("measures"))?;

    let fit = match write_fit(cfg, &rows, (cert.t_star, t_end), Some(&cert), out) {
        Ok(c) => FitCheck {
            fitted_lambda: Some(c.fitted_lambda),
            error: None,
            above_certificate: c.fitted_lambda >= cert.lambda,
            below_c_plus: cfg
                .problem
                .sigma
                .is_constant()
                .map(|_| c.fitted_lambda <= spectral.c_plus + cfg.report.fit_margin),
        },
        Err(f) => FitCheck {
            fitted_lambda: None,
            error: Some(f.to_string()),
            above_certificate: false,
            below_c_plus: None,
        },
    };

    let grid = cfg.report.minorization_solver.clone().unwrap_or_else(|| cfg.solver_config());
    let small = KineticSolver::new(&cfg.problem, &grid).map_err(tag("solver"))?;
    let x = gcc.argmin_point.x.coords().to_vec();
    let v = gcc.argmin_point.v.clone();
    let mut f = small
        .initial(&InitialData::Delta { x: x.clone(), v: v.clone() })
        .map_err(tag("solver"))?;
    small.evolve(&mut f, small.steps_for(cert.t_star)).map_err(tag("solver"))?;
    let ratio = small.minorization_ratio(&f).map_err(tag("solver"))?;
    let threshold = cfg.report.minorization_slack * cert.alpha;
    let minorization = MinorizationCheck {
        x,
        v,
        t: f.time,
        ratio,
        threshold,
        passed: ratio >= threshold,
    };

    let passed = envelope.passed && minorization.passed;
    let report = Report {
        lambda: cert.lambda,
        alpha: cert.alpha,
        t_star: cert.t_star,
        kappa: cert.kappa,
        c_plus: spectral.c_plus,
        t_end,
        tv0,
        envelope,
        minorization,
        fit,
        passed,
    };
    out.json("report.json", &report).map_err(io)?;
    println!(
        "envelope {} (worst margin {}), minorization {} (ratio {} vs {})",
        if report.envelope.passed { "PASS" } else { "FAIL" },
        fmt_f64(report.envelope.worst_margin),
        if report.minorization.passed { "PASS" } else { "FAIL" },
        fmt_f64(report.minorization.ratio),
        fmt_f64(report.minorization.threshold)
    );
    finish(out, "report", cfg, Some(t_end))?;
    Ok(if passed { EXIT_OK } else { EXIT_NUMERICAL })
}
