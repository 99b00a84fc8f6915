//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned
//! below. Exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use kinrelax::certificate::{build_certificate, spreading_r2, RadialProfile, RegimeSpec};
use kinrelax::control::{line_integral, GccGrid, SigmaField};
use kinrelax::geometry::{energy, flow, potential_bounds, FlowConfig, PhasePoint, Potential};
use kinrelax::measures::{tv_empirical, Binning};
use kinrelax::particles::{sample_equilibrium, sample_initial, simulate, McConfig};
use kinrelax::solver::{KineticSolver, PhaseDensity, SolverConfig};
use kinrelax::velocity::{maxwellian, VelocitySpace};
use kinrelax::{InitialData, Kernel, ScatterProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

// Reference values evaluated beforehand at 40 significant digits.
const R1_LAMBDA: f64 = 0.000_286_345_782_859_492_713_104_8;
const R2_BETA: f64 = 1.155_204_603_759_763_532_167e-25;

const TOL_KAPPA: f64 = 1e-10;
const TOL_SPECTRAL: f64 = 1e-6;
const TOL_FAIL_KAPPA: f64 = 1e-8;
const TOL_REL_CERT: f64 = 1e-12;
const MINORIZATION_SLACK: f64 = 0.5;
const TOL_CONTRACTION: f64 = 1e-3;
const FIT_MARGIN: f64 = 0.05;
const P_MIN: f64 = 0.01;
const SE_COUNT: f64 = 3.0;
const TOL_ENERGY: f64 = 1e-4;
const TOL_FREE: f64 = 1e-14;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(config_dir().join(name)).unwrap()).unwrap()
}

fn problem_of(cfg: &Value) -> ScatterProblem {
    serde_json::from_value(cfg["problem"].clone()).unwrap()
}

fn run_cli(sub: &str, config: &Path, out: &Path, workers: usize) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_kinrelax"))
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg(workers.to_string())
        .output()
        .unwrap()
        .status
        .code()
        .unwrap_or(-1)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn ball(sigma: SigmaField) -> ScatterProblem {
    ScatterProblem {
        dim: 1,
        velocity: VelocitySpace::Ball { radius: 1.0 },
        sigma,
        potential: Potential::Zero,
        kernel: Kernel::Equilibrium,
    }
}

fn r1_certificate() -> (ScatterProblem, kinrelax::control::GccReport, kinrelax::certificate::RateCertificate) {
    let cfg = shipped("r1_uniform.json");
    let p = problem_of(&cfg);
    let regime: RegimeSpec = serde_json::from_value(cfg["regime"].clone()).unwrap();
    let t = cfg["horizon"].as_f64().unwrap();
    let gcc = p.control().gcc_kappa(t, &GccGrid::default()).unwrap();
    let cert = build_certificate(&p, &gcc, &regime, None, None).unwrap();
    (p, gcc, cert)
}

fn c1_constant_rate() -> Verdict {
    let mut worst_k: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for s in [0.5, 1.0, 2.0] {
        let p = ball(SigmaField::constant(s));
        for t in [1.0, 2.0] {
            let r = p.control().gcc_kappa(t, &GccGrid::default()).unwrap();
            worst_k = worst_k.max((r.kappa_hat - s * t).abs());
        }
        let sc = p.control().spectral_constants(&[1.0, 2.0], &GccGrid::default()).unwrap();
        worst_c = worst_c.max((sc.c_minus - s).abs()).max((sc.c_plus - s).abs());
    }
    verdict(
        worst_k <= TOL_KAPPA && worst_c <= TOL_SPECTRAL,
        format!("max |kappa - s T| = {worst_k:.1e} (tol {TOL_KAPPA:.0e}), max |C -/+ - s| = {worst_c:.1e} (tol {TOL_SPECTRAL:.0e})"),
    )
}

fn c2_gcc_failure(tmp: &Path) -> Verdict {
    let out = tmp.join("c2");
    let code = run_cli("gcc", &config_dir().join("mollified_fail.json"), &out, 1);
    let kappa = read_json(&out.join("gcc_report.json"))["kappa_hat"].as_f64().unwrap();
    verdict(
        code == 3 && kappa < TOL_FAIL_KAPPA,
        format!("exit code {code} (want 3), kappa_hat = {kappa:.1e} (want < {TOL_FAIL_KAPPA:.0e})"),
    )
}

fn c3_r1_certificate() -> Verdict {
    let (_, _, cert) = r1_certificate();
    let (gamma, t_star): (f64, f64) = (0.5, 2.0 * 1.0 + 2.0 / 1.0);
    let beta = gamma * 0.5f64.powi(1);
    let closed = -(1.0 - beta * gamma * gamma * cert.kappa.powi(2) * (-t_star).exp()).ln() / t_star;
    let rel_ref = (cert.lambda - R1_LAMBDA).abs() / R1_LAMBDA;
    let rel_closed = (cert.lambda - closed).abs() / closed;
    verdict(
        rel_ref <= TOL_REL_CERT && rel_closed <= TOL_REL_CERT && cert.t_star == t_star,
        format!(
            "lambda = {:.16e}, rel. error {rel_ref:.1e} vs reference, {rel_closed:.1e} vs closed form (tol {TOL_REL_CERT:.0e})",
            cert.lambda
        ),
    )
}

fn c4_r2_mass() -> Verdict {
    let w = Potential::cosine_1d(0.1);
    let t = 1.0;
    let s = spreading_r2(&w, 1, t, &RadialProfile::Maxwellian { c: 1.0 }).unwrap();
    let b = potential_bounds(&w, 1);
    let (g, h, z) = (b.grad_sup, b.hess_sup, b.partition);
    let formula = z * (-(t + 1.0) * (1.0 + h)).exp() * maxwellian(&[4.0 * (1.0 + g) + 5.0 * g * t]);
    let rel_formula = (s.beta - formula).abs() / formula;
    let rel_ref = (s.beta - R2_BETA).abs() / R2_BETA;
    let ratio = s.beta_half_exponent / s.beta;
    let rel_ratio = (ratio - ((1.0 + h) / 2.0).exp()).abs() / ratio;
    verdict(
        rel_formula <= TOL_REL_CERT && rel_ref <= TOL_REL_CERT && rel_ratio <= TOL_REL_CERT,
        format!(
            "beta = {:.15e}; rel. error {rel_formula:.1e} vs formula, {rel_ref:.1e} vs reference; half-exponent factor error {rel_ratio:.1e}",
            s.beta
        ),
    )
}

fn c5_minorization() -> Verdict {
    let (p, gcc, cert) = r1_certificate();
    let s = KineticSolver::new(&p, &SolverConfig::new(256, Some(64))).unwrap();
    let x = gcc.argmin_point.x.coords().to_vec();
    let v = gcc.argmin_point.v.clone();
    let mut f = s.initial(&InitialData::Delta { x: x.clone(), v: v.clone() }).unwrap();
    s.evolve(&mut f, s.steps_for(cert.t_star)).unwrap();
    let ratio = s.minorization_ratio(&f).unwrap();
    let threshold = MINORIZATION_SLACK * cert.alpha;
    verdict(
        ratio >= threshold,
        format!("start ({x:?}, {v:?}), ratio at t* = {ratio:.4} >= {MINORIZATION_SLACK} alpha = {threshold:.3e}"),
    )
}

/// Two random probability densities on complementary random cell sets.
fn disjoint_pair(s: &KineticSolver, seed: u64) -> (PhaseDensity, PhaseDensity) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = s.shape().len();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let w = rng.random::<f64>();
        if rng.random::<bool>() {
            a[k] = w;
        } else {
            b[k] = w;
        }
    }
    let norm = |values: Vec<f64>| {
        let mut f = PhaseDensity::from_values(s.shape().clone(), values).unwrap();
        let m = f.mass();
        f.values.iter_mut().for_each(|v| *v /= m);
        f
    };
    (norm(a), norm(b))
}

fn c6_contraction() -> Verdict {
    let (p, _, cert) = r1_certificate();
    let s = KineticSolver::new(&p, &SolverConfig::new(256, Some(64))).unwrap();
    let mut worst: f64 = 0.0;
    let mut all = true;
    for seed in 0..20 {
        let (a, b) = disjoint_pair(&s, 1000 + seed);
        let out = s.contraction_check(&a, &b, &cert, TOL_CONTRACTION).unwrap();
        all &= out.passed && (out.tv_initial - 2.0).abs() < 1e-12;
        worst = worst.max(out.ratio);
    }
    verdict(
        all,
        format!(
            "20 pairs, largest TV ratio {worst:.4} <= 1 - alpha + {TOL_CONTRACTION:.0e} = {:.6}",
            1.0 - cert.alpha + TOL_CONTRACTION
        ),
    )
}

fn c7_envelope(tmp: &Path) -> Verdict {
    let out = tmp.join("c7");
    let code = run_cli("report", &config_dir().join("r1_uniform.json"), &out, 4);
    let r = read_json(&out.join("report.json"));
    let env_ok = r["envelope"]["passed"].as_bool() == Some(true);
    let fitted = r["fit"]["fitted_lambda"].as_f64().unwrap_or(f64::NAN);
    let lambda = r["lambda"].as_f64().unwrap();
    let c_plus = r["c_plus"].as_f64().unwrap();
    let t_end = r["t_end"].as_f64().unwrap();
    let t_star = r["t_star"].as_f64().unwrap();
    let horizon_ok = (t_end - (t_star + 5.0 / lambda)).abs() <= 1e-9 * t_end;
    verdict(
        code == 0 && env_ok && horizon_ok && fitted >= lambda && fitted <= c_plus + FIT_MARGIN,
        format!(
            "report exit {code}; envelope on [t*, t* + 5/lambda] = [{t_star}, {t_end:.1}] worst margin {:.3e} over {} points; fitted {fitted:.4} in [{lambda:.3e}, C+ + {FIT_MARGIN} = {:.2}]",
            r["envelope"]["worst_margin"].as_f64().unwrap(),
            r["envelope"]["points_checked"],
            c_plus + FIT_MARGIN
        ),
    )
}

fn c8_duhamel() -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["gt_bump.json", "box_bump.json", "r1_uniform.json"] {
        let cfg = shipped(name);
        let p = problem_of(&cfg);
        let init: InitialData = serde_json::from_value(cfg["initial"].clone()).unwrap();
        let n_v = cfg["solver"]["n_v"].as_u64().map(|n| n as usize);
        let t = cfg["horizon"].as_f64().unwrap();
        let mut margins = Vec::new();
        for n in [256, 512] {
            let s = KineticSolver::new(&p, &SolverConfig::new(n, n_v)).unwrap();
            let out = s.duhamel_lower_bound_check(&s.initial(&init).unwrap(), t).unwrap();
            ok &= out.passed;
            margins.push(out.margin);
        }
        lines.push(format!("{name} {:.1e}/{:.1e}", margins[0], margins[1]));
    }
    verdict(ok, format!("min margins at 256/512 cells: {}", lines.join(", ")))
}

fn c9_jump_law() -> Verdict {
    let n = 100_000;
    let t = 1.0;
    let p = ball(SigmaField::constant(1.0));
    let e0 = sample_equilibrium(&p, n, 2024).unwrap();
    let run = McConfig {
        n_particles: n,
        seed: 2025,
        flow: None,
    };
    let e = simulate(&p, &e0, &[t], &run).unwrap().pop().unwrap();
    let pois = Poisson::new(t).unwrap();
    let hist = e.jump_histogram();
    let k_max = 6;
    let mut counts = vec![0u64; k_max + 1];
    for (k, &c) in hist.iter().enumerate() {
        counts[k.min(k_max)] += c;
    }
    let mut probs: Vec<f64> = (0..k_max as u64).map(|k| pois.pmf(k)).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    let stat: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &q)| (c as f64 - q * n as f64).powi(2) / (q * n as f64))
        .sum();
    let p_value = 1.0 - ChiSquared::new(k_max as f64).unwrap().cdf(stat);
    let cfg = FlowConfig::default_for(&Potential::Zero, 1);
    let expected = e0
        .particles
        .iter()
        .map(|q| (-line_integral(&p.sigma, &p.potential, &PhasePoint::new(&q.x, &q.v), t, 256, &cfg)).exp())
        .sum::<f64>()
        / n as f64;
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    let got = e.survival_fraction();
    verdict(
        p_value > P_MIN && (got - expected).abs() <= SE_COUNT * se,
        format!(
            "chi-square p = {p_value:.3} (> {P_MIN}); zero-jump fraction {got:.5} vs {expected:.5} ({:.2} SE)",
            (got - expected).abs() / se
        ),
    )
}

fn c10_agreement() -> Verdict {
    let cfg = shipped("gt_bump.json");
    let p = problem_of(&cfg);
    let init: InitialData = serde_json::from_value(cfg["initial"].clone()).unwrap();
    let n = cfg["mc"]["n_particles"].as_u64().unwrap() as usize;
    let seed = cfg["seed"].as_u64().unwrap();
    let s = KineticSolver::new(&p, &SolverConfig::new(cfg["solver"]["n_x"].as_u64().unwrap() as usize, None)).unwrap();
    let times = [1.0, 2.0, 4.0];
    let grid = s.run(&s.initial(&init).unwrap(), 4.0, &times).unwrap();
    let e0 = sample_initial(&p, &init, n, seed).unwrap();
    let run = McConfig {
        n_particles: n,
        seed,
        flow: None,
    };
    let ens = simulate(&p, &e0, &times, &run).unwrap();
    let binning = Binning {
        x_bins: 16,
        v_bins: None,
    };
    let bound = 5.0 / (n as f64).sqrt() + 2.0 * s.shape().dx;
    let tvs: Vec<f64> = grid
        .snapshots
        .iter()
        .zip(&ens)
        .map(|(f, e)| tv_empirical(e, f, &binning).unwrap().tv)
        .collect();
    verdict(
        tvs.iter().all(|tv| *tv <= bound),
        format!(
            "N = {n}, 16 x-bins x 2 velocities: TV at t = 1, 2, 4: {:.4}, {:.4}, {:.4} (bound {bound:.4})",
            tvs[0], tvs[1], tvs[2]
        ),
    )
}

fn c11_flow() -> Verdict {
    let w = Potential::cosine_1d(0.1);
    let cfg = FlowConfig::default_for(&w, 1);
    let mut drift: f64 = 0.0;
    for &(x, v) in &[(0.0, 0.0), (0.25, 0.5), (0.6, -2.0), (0.49, 1e-3), (0.1, 3.0)] {
        let p0 = PhasePoint::new(&[x], &[v]);
        let e0 = energy(&w, &p0);
        let mut p = p0;
        for _ in 0..100 {
            p = flow(&w, &p, 1.0, &cfg).unwrap();
            drift = drift.max((energy(&w, &p) - e0).abs());
        }
    }
    let free = FlowConfig::default_for(&Potential::Zero, 1);
    let mut free_err: f64 = 0.0;
    for &(x, v, t) in &[(0.1, 0.25, 3.0), (0.9, -1.75, 10.0), (0.5, 0.5, 100.0)] {
        let p = flow(&Potential::Zero, &PhasePoint::new(&[x], &[v]), t, &free).unwrap();
        let want = (x + v * t).rem_euclid(1.0);
        free_err = free_err.max(kinrelax::geometry::torus_delta(want, p.x.coords()[0]).abs());
    }
    verdict(
        drift <= TOL_ENERGY && free_err <= TOL_FREE,
        format!("energy drift over t = 100: {drift:.2e} (tol {TOL_ENERGY:.0e}); free flow error {free_err:.1e}"),
    )
}

/// Writes a shipped config with some top-level fields replaced.
fn variant(tmp: &Path, name: &str, patch: Value) -> PathBuf {
    let mut cfg = shipped(name);
    for (k, v) in patch.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let p = tmp.join(format!("det_{name}"));
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn c12_determinism(tmp: &Path) -> Verdict {
    let gt = config_dir().join("gt_bump.json");
    let gt_mc = variant(
        tmp,
        "gt_bump.json",
        serde_json::json!({"mc": {"n_particles": 20000, "times": [1.0, 4.0], "write_particles": true}}),
    );
    let r1 = config_dir().join("r1_uniform.json");
    let r1_short = variant(tmp, "r1_uniform.json", serde_json::json!({"t_end": 40.0}));
    let r2_mc = config_dir().join("r2_cosine.json");
    let runs: [(&str, &Path); 7] = [
        ("gcc", &gt),
        ("cert", &r1),
        ("solve", &gt),
        ("mc", &gt_mc),
        ("mc", &r2_mc),
        ("fit", &r1_short),
        ("report", &r1_short),
    ];
    let mut files = 0;
    let mut bad = Vec::new();
    for (k, (sub, cfg)) in runs.iter().enumerate() {
        let mut outs = Vec::new();
        for (rep, workers) in [(0, 1), (1, 1), (2, 4)] {
            let out = tmp.join(format!("c12_{k}_{rep}"));
            let code = run_cli(sub, cfg, &out, workers);
            if code != 0 {
                bad.push(format!("{sub} exited {code}"));
            }
            outs.push(dir_bytes(&out));
        }
        files += outs[0].len();
        if outs[0] != outs[1] || outs[0] != outs[2] {
            bad.push(format!("{sub} on {}", cfg.file_name().unwrap().to_string_lossy()));
        }
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} runs x (2 reruns at 1 worker + 1 at 4 workers), {files} artifacts byte-identical", runs.len())
        } else {
            format!("differences or failures: {}", bad.join("; "))
        },
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;
    let criteria: Vec<(&str, Option<Duration>, Check)> = vec![
        ("constant-rate control constants", Some(Duration::from_secs(5)), Box::new(c1_constant_rate)),
        ("control failure detection", Some(Duration::from_secs(5)), Box::new(|| c2_gcc_failure(t))),
        ("rate certificate, bounded velocities", None, Box::new(c3_r1_certificate)),
        ("spreading mass with potential", None, Box::new(c4_r2_mass)),
        ("minorization on the grid", Some(Duration::from_secs(60)), Box::new(c5_minorization)),
        ("Doeblin contraction", Some(Duration::from_secs(300)), Box::new(c6_contraction)),
        ("decay envelope and fitted rate", None, Box::new(|| c7_envelope(t))),
        ("Duhamel lower bound", None, Box::new(c8_duhamel)),
        ("jump process law", None, Box::new(c9_jump_law)),
        ("solver and simulator agreement", None, Box::new(c10_agreement)),
        ("flow quality", None, Box::new(c11_flow)),
        ("determinism of CLI artifacts", None, Box::new(|| c12_determinism(t))),
    ];
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let passed = v.passed && in_time;
        if !passed {
            failed += 1;
        }
        let timing = match limit {
            Some(l) => format!("{:.1}s, limit {}s", took.as_secs_f64(), l.as_secs()),
            None => format!("{:.1}s", took.as_secs_f64()),
        };
        println!(
            "{} {:>2}. {name}: {} [{timing}]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
