use kinrelax::certificate::{build_certificate, RegimeSpec};
use kinrelax::control::{GccGrid, SigmaField};
use kinrelax::geometry::Potential;
use kinrelax::measures::tv_grid;
use kinrelax::solver::{KineticSolver, PhaseDensity, SolverConfig};
use kinrelax::velocity::VelocitySpace;
use kinrelax::{Error, InitialData, Kernel, ScatterProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gt(sigma: SigmaField) -> ScatterProblem {
    ScatterProblem {
        dim: 1,
        velocity: VelocitySpace::goldstein_taylor(),
        sigma,
        potential: Potential::Zero,
        kernel: Kernel::Equilibrium,
    }
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

fn only_right_movers() -> InitialData {
    InitialData::Box {
        x_lo: vec![0.0],
        x_hi: vec![1.0],
        v_lo: Some(vec![1.0]),
        v_hi: Some(vec![1.0]),
    }
}

fn random_density(s: &KineticSolver, seed: u64) -> PhaseDensity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> = (0..s.shape().len()).map(|_| rng.random::<f64>()).collect();
    let mut f = PhaseDensity::from_values(s.shape().clone(), values).unwrap();
    let m = f.mass();
    f.values.iter_mut().for_each(|v| *v /= m);
    f
}

#[test]
fn velocity_imbalance_relaxes_like_the_scalar_ode() {
    // (m+ - m-)' = -sigma (m+ - m-) for spatially uniform data
    let s = KineticSolver::new(&gt(SigmaField::constant(1.0)), &SolverConfig::new(64, None)).unwrap();
    let f0 = s.initial(&only_right_movers()).unwrap();
    let out = s.run(&f0, 3.0, &[0.0, 0.5, 1.0, 3.0]).unwrap();
    for f in &out.snapshots {
        let m = f.velocity_marginal();
        let expected = (-f.time).exp();
        assert!((m[1] - m[0] - expected).abs() < 1e-13, "t = {}: {} vs {expected}", f.time, m[1] - m[0]);
    }
}

#[test]
fn equilibrium_is_a_fixed_point() {
    for p in [gt(SigmaField::bump_1d(0.5, 0.3, 2.0)), ball(SigmaField::bump_1d(0.2, 0.2, 1.0))] {
        let cfg = SolverConfig::new(64, Some(16));
        let s = KineticSolver::new(&p, &cfg).unwrap();
        let nu = s.equilibrium_density();
        assert!((nu.mass() - 1.0).abs() < 1e-12);
        let one = s.step(&nu).unwrap();
        assert!(tv_grid(&one, &nu).unwrap() <= 1e-10);
        let ten = s.run(&nu, 10.0, &[10.0]).unwrap();
        assert!(tv_grid(&ten.snapshots[0], &nu).unwrap() <= 1e-10);
    }
}

#[test]
fn equilibrium_with_potential_is_nearly_fixed() {
    let p = ScatterProblem {
        dim: 1,
        velocity: VelocitySpace::Full,
        sigma: SigmaField::constant(1.0),
        potential: Potential::cosine_1d(0.1),
        kernel: Kernel::Equilibrium,
    };
    let mut change = Vec::new();
    for n in [64, 128] {
        let s = KineticSolver::new(&p, &SolverConfig::new(n, Some(n))).unwrap();
        let nu = s.equilibrium_density();
        assert!((nu.mass() - 1.0).abs() < 1e-12);
        let one = s.step(&nu).unwrap();
        let d = tv_grid(&one, &nu).unwrap();
        assert!(d <= 5.0 * s.dt() * s.shape().dx, "{d}");
        change.push(d);
    }
    assert!(change[1] < change[0]);
}

#[test]
fn free_transport_matches_inverse_flow_bit_exactly() {
    let s = KineticSolver::new(&gt(SigmaField::constant(0.0)), &SolverConfig::new(128, None)).unwrap();
    let f0 = s
        .initial(&InitialData::Cosine {
            amplitude: 0.7,
            mode: vec![3],
        })
        .unwrap();
    let mut f = f0.clone();
    let steps = 20;
    s.evolve(&mut f, steps).unwrap();
    // each step moves +-1 velocities by 2 cells
    let n = 128;
    for i in 0..n {
        assert_eq!(f.get(i, 1), f0.get((i + n - 2 * steps) % n, 1));
        assert_eq!(f.get(i, 0), f0.get((i + 2 * steps) % n, 0));
    }
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    // large enough to step in parallel
    let p = ball(SigmaField::bump_1d(0.4, 0.3, 1.5));
    let s = KineticSolver::new(&p, &SolverConfig::new(512, Some(128))).unwrap();
    let f0 = s
        .initial(&InitialData::Delta {
            x: vec![0.1],
            v: vec![0.3],
        })
        .unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| s.run(&f0, 0.25, &[0.1, 0.25]).unwrap())
    };
    let a = run(1);
    let b = run(4);
    for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
        assert_eq!(x.values, y.values);
    }
    assert_eq!(a.records, b.records);
    assert!(s.run(&f0, 0.0, &[0.0]).unwrap().snapshots[0].values == f0.values);
}

#[test]
fn duhamel_bound_trivial_cases() {
    let s = KineticSolver::new(&gt(SigmaField::constant(0.0)), &SolverConfig::new(64, None)).unwrap();
    let f0 = s.initial(&only_right_movers()).unwrap();
    let out = s.duhamel_lower_bound_check(&f0, 1.0).unwrap();
    assert_eq!(out.margin, 0.0);
    assert!(out.passed);

    let sigma0 = 0.8;
    let s = KineticSolver::new(&ball(SigmaField::constant(sigma0)), &SolverConfig::new(64, Some(16))).unwrap();
    let nu = s.equilibrium_density();
    let out = s.duhamel_lower_bound_check(&nu, 2.0).unwrap();
    let expected = (1.0 - (-sigma0 * out.t).exp()) * nu.min();
    assert!((out.margin - expected).abs() < 1e-12, "{} vs {expected}", out.margin);
    assert!((out.transported_mass - 1.0).abs() < 1e-12);
}

#[test]
fn duhamel_bound_bump_is_sign_stable_under_refinement() {
    for n in [256, 512] {
        let s = KineticSolver::new(&gt(SigmaField::bump_1d(0.5, 0.25, 1.0)), &SolverConfig::new(n, None)).unwrap();
        let f0 = s
            .initial(&InitialData::Box {
                x_lo: vec![0.1],
                x_hi: vec![0.3],
                v_lo: None,
                v_hi: None,
            })
            .unwrap();
        let out = s.duhamel_lower_bound_check(&f0, 2.0).unwrap();
        assert!(out.margin >= 0.0, "n = {n}: margin {}", out.margin);
    }
}

#[test]
fn minorization_ratio_examples() {
    let p = ball(SigmaField::constant(1.0));
    let s = KineticSolver::new(&p, &SolverConfig::new(64, Some(16))).unwrap();
    let nu = s.equilibrium_density();
    assert!((s.minorization_ratio(&nu).unwrap() - 1.0).abs() < 1e-12);
    let h = s
        .initial(&InitialData::Delta {
            x: vec![0.5],
            v: vec![0.5],
        })
        .unwrap();
    let mix = nu.combine(0.3, &h, 0.7).unwrap();
    assert!(s.minorization_ratio(&mix).unwrap() >= 0.3 - 1e-12);
}

#[test]
fn minorization_after_t_star_converges_with_the_grid() {
    let p = ball(SigmaField::constant(1.0));
    let gcc = p.control().gcc_kappa(1.0, &GccGrid::default()).unwrap();
    let regime = RegimeSpec::R1 {
        gamma: 0.5,
        v0: vec![0.0],
        r0: 1.0,
    };
    let cert = build_certificate(&p, &gcc, &regime, None, None).unwrap();
    let ratio = |n: usize, nv: usize| {
        let s = KineticSolver::new(&p, &SolverConfig::new(n, Some(nv))).unwrap();
        let mut f = s
            .initial(&InitialData::Delta {
                x: vec![0.3],
                v: vec![0.9],
            })
            .unwrap();
        s.evolve(&mut f, s.steps_for(cert.t_star)).unwrap();
        s.minorization_ratio(&f).unwrap()
    };
    let coarse = ratio(128, 32);
    let fine = ratio(256, 64);
    assert!(fine >= 0.5 * cert.alpha);
    assert!((coarse - fine).abs() < 0.05 * fine, "{coarse} vs {fine}");
}

#[test]
fn contraction_examples() {
    let p = ball(SigmaField::constant(1.0));
    let gcc = p.control().gcc_kappa(1.0, &GccGrid::default()).unwrap();
    let regime = RegimeSpec::R1 {
        gamma: 0.5,
        v0: vec![0.0],
        r0: 1.0,
    };
    let cert = build_certificate(&p, &gcc, &regime, None, None).unwrap();
    let s = KineticSolver::new(&p, &SolverConfig::new(64, Some(16))).unwrap();
    let a = s
        .initial(&InitialData::Box {
            x_lo: vec![0.0],
            x_hi: vec![0.5],
            v_lo: None,
            v_hi: None,
        })
        .unwrap();
    let b = s
        .initial(&InitialData::Box {
            x_lo: vec![0.5],
            x_hi: vec![1.0],
            v_lo: None,
            v_hi: None,
        })
        .unwrap();
    assert!(matches!(s.contraction_check(&a, &a, &cert, 1e-3), Err(Error::UndefinedRatio(_))));
    let out = s.contraction_check(&a, &b, &cert, 1e-3).unwrap();
    assert!((out.tv_initial - 2.0).abs() < 1e-12);
    assert!(out.passed, "{out:?}");
}

#[test]
fn matrix_kernel_conserves_mass_and_reaches_its_stationary_law() {
    let mut p = gt(SigmaField::constant(1.0));
    p.kernel = Kernel::Matrix {
        rows: vec![vec![0.7, 0.4], vec![0.3, 0.6]],
    };
    let s = KineticSolver::new(&p, &SolverConfig::new(32, None)).unwrap();
    let f0 = s.initial(&only_right_movers()).unwrap();
    let out = s.run(&f0, 50.0, &[50.0]).unwrap();
    let m = out.snapshots[0].velocity_marginal();
    // stationary law of the column-stochastic matrix: (4/7, 3/7)
    assert!((m[0] - 4.0 / 7.0).abs() < 1e-10, "{m:?}");
    assert!(out.records[0].mass_drift.abs() < 1e-12);
    let nu = s.equilibrium_density();
    assert!(tv_grid(&s.step(&nu).unwrap(), &nu).unwrap() < 1e-12);
}

#[test]
fn two_dimensional_discrete_grid() {
    let p = ScatterProblem {
        dim: 2,
        velocity: VelocitySpace::Discrete {
            velocities: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            weights: vec![0.25; 4],
        },
        sigma: SigmaField::SmoothBump {
            bumps: vec![kinrelax::control::Bump {
                center: vec![0.5, 0.5],
                radius: 0.3,
                height: 1.0,
            }],
        },
        potential: Potential::Zero,
        kernel: Kernel::Equilibrium,
    };
    let s = KineticSolver::new(&p, &SolverConfig::new(32, None)).unwrap();
    assert!(s.exact_transport());
    let f0 = s
        .initial(&InitialData::Delta {
            x: vec![0.1, 0.2],
            v: vec![1.0, 0.0],
        })
        .unwrap();
    let out = s.run(&f0, 2.0, &[1.0, 2.0]).unwrap();
    for r in &out.records {
        assert!(r.mass_drift.abs() < 1e-12);
        assert!(r.min >= 0.0);
    }
    let too_big = KineticSolver::new(&p, &SolverConfig::new(4096, None));
    assert!(matches!(too_big, Err(Error::Config(_))));
}

#[test]
fn grid_refinement_shrinks_trajectory_differences() {
    let p = ball(SigmaField::bump_1d(0.5, 0.3, 1.0));
    let curve = |n: usize| {
        let s = KineticSolver::new(&p, &SolverConfig::new(n, Some(n / 4))).unwrap();
        let f0 = s
            .initial(&InitialData::Cosine {
                amplitude: 0.9,
                mode: vec![1],
            })
            .unwrap();
        let nu = s.equilibrium_density();
        let out = s.run(&f0, 2.0, &[0.5, 1.0, 1.5, 2.0]).unwrap();
        out.snapshots.iter().map(|f| tv_grid(f, &nu).unwrap()).collect::<Vec<f64>>()
    };
    let (a, b, c) = (curve(64), curve(128), curve(256));
    let d1 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let d2 = b.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d2 < 0.75 * d1, "{d1} then {d2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_conserves_mass_and_positivity(seed in any::<u64>(), n in 16usize..64, nv in 2usize..12) {
        let p = ball(SigmaField::bump_1d(0.3, 0.25, 2.0));
        let s = KineticSolver::new(&p, &SolverConfig::new(n, Some(nv))).unwrap();
        let f = random_density(&s, seed);
        let g = s.step(&f).unwrap();
        prop_assert!((g.mass() - f.mass()).abs() <= 1e-12 * f.mass());
        prop_assert!(g.min() >= 0.0);
    }

    #[test]
    fn step_is_an_l1_contraction(seed in any::<u64>()) {
        let p = gt(SigmaField::bump_1d(0.6, 0.2, 3.0));
        let s = KineticSolver::new(&p, &SolverConfig::new(32, None)).unwrap();
        let f = random_density(&s, seed);
        let g = random_density(&s, seed.wrapping_add(1));
        let before = tv_grid(&f, &g).unwrap();
        let after = tv_grid(&s.step(&f).unwrap(), &s.step(&g).unwrap()).unwrap();
        prop_assert!(after <= before * (1.0 + 1e-12));
    }
}
