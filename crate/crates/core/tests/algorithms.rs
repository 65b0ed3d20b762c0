use ivbandit::algorithms::*;
use ivbandit::design::{
    e_design, pair_differences, r_min, round_design, xy_design, Design, RoundingParams,
};
use ivbandit::instances::*;
use ivbandit::numerics::{sigma_min, vector_from, Matrix, Vector};
use ivbandit::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn theta_of(rec: &PhaseRecord) -> Vector {
    match &rec.estimate {
        Estimate::Theta(t) => vector_from(t),
        other => panic!("expected a θ estimate, got {other:?}"),
    }
}

fn check_theta_phase_invariants(trace: &RunTrace, targets: &[Vector]) {
    for rec in trace
        .phases
        .iter()
        .filter(|p| p.kind == PhaseKind::ThetaPhase)
    {
        let theta = theta_of(rec);
        let top = rec
            .active_set
            .iter()
            .copied()
            .max_by(|&a, &b| targets[a].dot(&theta).total_cmp(&targets[b].dot(&theta)))
            .unwrap();
        assert!(
            rec.survivors.contains(&top),
            "phase {} dropped its empirical argmax",
            rec.k
        );
        assert!(rec.survivors.iter().all(|s| rec.active_set.contains(s)));
    }
    assert_eq!(
        trace.total_samples,
        trace.phases.iter().map(|p| p.samples).sum::<u64>()
    );
}

#[test]
fn cpeg_trace_reproduces_its_sample_formula() {
    let instances = [
        make_interpolation(4, vector_from(&[0.5, 0.583, 0.67, 0.75]), 0.8, 0.4).unwrap(),
        make_jump_around(
            6,
            vector_from(&[1.0, -0.95, 0.45, 0.45, 0.95, 0.45]),
            0.275f64.sqrt(),
        )
        .unwrap(),
    ];
    for inst in &instances {
        let params = AlgoParams::for_instance(inst, 0.1).unwrap();
        let res = run_cpeg(inst, &params, rng(3), 3).unwrap();
        assert!(res.correct);
        let n_targets = inst.targets().len();
        for (i, rec) in res.trace.phases.iter().enumerate() {
            assert_eq!(rec.k, i + 1);
            assert_eq!(rec.zeta, 0.5f64.powi(rec.k as i32));
            let design = Design::from_weights(rec.design.clone(), rec.objective).unwrap();
            let r = r_min(&design, params.omega);
            assert_eq!(
                cpeg_phase_samples(&params, rec.objective, rec.k, n_targets, r),
                rec.samples
            );
        }
        check_theta_phase_invariants(&res.trace, inst.targets());
    }
}

/// Standard transductive elimination: least squares of `y` on `z`, no instrument
/// machinery, written against the public building blocks only.
fn reference_elimination(
    inst: &ProblemInstance,
    params: &AlgoParams,
    seed: u64,
) -> Vec<(Vec<usize>, u64, Vector)> {
    let mut env = Simulator::new(inst, rng(seed), params.sampling);
    let identity = Matrix::identity(inst.dim(), inst.dim());
    let mut active: Vec<usize> = (0..inst.targets().len()).collect();
    let mut out = Vec::new();
    let mut k = 1;
    while active.len() > 1 {
        let zeta = 0.5f64.powi(k as i32);
        let dirs = pair_differences(inst.targets(), &active);
        let design = xy_design(&dirs, inst.arms(), &identity, &params.solver).unwrap();
        let r = r_min(&design, params.omega);
        let n = cpeg_phase_samples(params, design.objective_value, k, inst.targets().len(), r);
        let counts = round_design(
            &design,
            n,
            &RoundingParams {
                omega: params.omega,
                r_of_omega: r,
            },
        )
        .unwrap();
        let m = env.pull(&counts);
        let theta = m.ztz.clone().lu().solve(&m.zty).unwrap();
        let survivors = eliminate(&active, &theta, inst.targets(), zeta);
        out.push((survivors.clone(), n, theta));
        active = survivors;
        k += 1;
    }
    out
}

#[test]
fn identity_gamma_reduces_to_standard_elimination() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let arms = vec![
        vector_from(&[1.0, 0.0]),
        vector_from(&[0.0, 1.0]),
        vector_from(&[s, s]),
    ];
    let targets = vec![
        vector_from(&[1.0, 0.0]),
        vector_from(&[0.0, 1.0]),
        vector_from(&[0.9, 0.4]),
    ];
    let noise = NoiseSpec {
        kind: NoiseKind::GaussianExogenous {
            sigma_eps: 1.0,
            rho: 0.0,
        },
        sigma_eta_sq: 0.25,
        l_eta: 0.25,
    };
    let inst = ProblemInstance::new(
        arms,
        targets,
        Matrix::identity(2, 2),
        vector_from(&[1.0, 0.2]),
        noise,
        None,
    )
    .unwrap();
    let params = AlgoParams::for_instance(&inst, 0.05).unwrap();
    for seed in 0..3 {
        let res = run_cpeg(&inst, &params, rng(seed), seed).unwrap();
        let reference = reference_elimination(&inst, &params, seed);
        assert_eq!(res.trace.phases.len(), reference.len());
        for (rec, (survivors, n, theta)) in res.trace.phases.iter().zip(&reference) {
            assert_eq!(&rec.survivors, survivors);
            assert_eq!(rec.samples, *n);
            assert!((theta_of(rec) - theta).amax() < 1e-9);
        }
    }
}

#[test]
fn gamma_doubling_satisfies_growth_properties() {
    let inst = make_interpolation(3, vector_from(&[1.0, 0.6, 0.0]), 0.8, 0.4).unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let (lambda_e, kappa0) = e_design(inst.arms(), &params.solver).unwrap();
    let setup = CpeugSetup::new(
        lambda_e,
        kappa0,
        sigma_min(inst.gamma()),
        params.bounds.l_eta,
    );
    let mut env = Simulator::new(&inst, rng(8), params.sampling);
    let prev = inst.gamma().clone() * 0.95 + Matrix::from_element(3, 3, 0.05 / 3.0);
    let ge = gamma_estimator(
        &mut env,
        &[0, 1, 2],
        Some(&prev),
        5e-4,
        0.1,
        &params,
        &setup,
        &RunTrace::default(),
    )
    .unwrap();
    assert!(
        ge.steps.len() >= 2,
        "only {} doubling rounds",
        ge.steps.len()
    );
    assert!(ge.stop <= 5e-4);
    for w in ge.steps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        assert_eq!(b.ell, a.ell + 1);
        assert!(b.n1 >= b.n0_target, "property 1 at ell {}", b.ell);
        let lhs = (b.n0_target + b.n1) as f64 / 2.0;
        assert!(
            lhs <= (a.n0_target + a.n1) as f64,
            "property 2 at ell {}",
            b.ell
        );
        assert!(b.n0 >= a.n0);
    }
    assert!(ge.steps[0].n1 >= ge.steps[0].n0_target);
}

#[test]
fn cpeug_trace_structure() {
    let inst = make_interpolation(4, vector_from(&[0.5, 0.583, 0.67, 0.75]), 0.99, 0.4).unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let res = run_cpeug(&inst, &params, rng(5), 5).unwrap();
    assert!(res.correct);
    let phases = &res.trace.phases;
    assert_eq!(phases[0].kind, PhaseKind::WarmUp);
    for pair in phases[1..].chunks(2) {
        let (g, t) = (&pair[0], &pair[1]);
        assert_eq!(
            (g.kind, t.kind),
            (PhaseKind::GammaPhase, PhaseKind::ThetaPhase)
        );
        assert_eq!(g.k, t.k);
        let threshold = if g.k == 1 { 1.0 } else { g.zeta };
        let last = g.doubling.last().unwrap();
        assert!(
            last.stop <= threshold,
            "stop {} above {threshold}",
            last.stop
        );
        assert_eq!(g.objective, last.stop);
    }
    check_theta_phase_invariants(&res.trace, inst.targets());
}

#[test]
fn single_target_is_trivial_everywhere() {
    let noise = NoiseSpec {
        kind: NoiseKind::GaussianExogenous {
            sigma_eps: 1.0,
            rho: 0.3,
        },
        sigma_eta_sq: 1.0,
        l_eta: 1.0,
    };
    let inst = ProblemInstance::new(
        vec![vector_from(&[1.0, 0.0]), vector_from(&[0.0, 1.0])],
        vec![vector_from(&[0.3, 0.7])],
        Matrix::identity(2, 2),
        vector_from(&[1.0, -1.0]),
        noise,
        None,
    )
    .unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    for res in [
        run_cpeg(&inst, &params, rng(1), 1).unwrap(),
        run_cpeug(&inst, &params, rng(1), 1).unwrap(),
        run_static_baseline(&inst, StaticKind::Uniform, &params, rng(1), 1).unwrap(),
    ] {
        assert!(res.correct);
        assert_eq!(res.total_samples, 0);
    }
}

#[test]
fn caps_abort_with_partial_trace() {
    let inst = make_interpolation(4, vector_from(&[0.5, 0.583, 0.67, 0.75]), 0.7, 0.4).unwrap();
    let mut params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    params.max_phases = 2;
    match run_cpeg(&inst, &params, rng(1), 1) {
        Err(Error::CapExceeded { partial, .. }) => {
            assert_eq!(partial.phases.len(), 2);
            assert_eq!(
                partial.total_samples,
                partial.phases.iter().map(|p| p.samples).sum::<u64>()
            );
        }
        other => panic!("expected a cap, got {other:?}"),
    }
    params.max_phases = 40;
    params.max_total_samples = 1000;
    assert!(matches!(
        run_cpeg(&inst, &params, rng(1), 1),
        Err(Error::CapExceeded { .. })
    ));
}

fn mean_samples(f: impl Fn(u64) -> TrialResult, trials: u64) -> f64 {
    (0..trials).map(|s| f(s).total_samples as f64).sum::<f64>() / trials as f64
}

#[test]
fn se_and_cpeg_overlap_on_standard_bandit() {
    let inst = make_interpolation(4, vector_from(&[0.5, 0.583, 0.67, 0.75]), 1.0, 0.4).unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let cpeg = mean_samples(|s| run_cpeg(&inst, &params, rng(s), s).unwrap(), 10);
    let se = mean_samples(
        |s| run_static_baseline(&inst, StaticKind::Se, &params, rng(s), s).unwrap(),
        10,
    );
    let ratio = se / cpeg;
    assert!((0.5..=2.0).contains(&ratio), "SE/CPEG = {ratio}");
}

#[test]
fn uniform_costs_more_than_cpeg_on_jump_around() {
    let inst = make_jump_around(
        6,
        vector_from(&[1.0, -0.95, 0.45, 0.45, 0.95, 0.45]),
        0.275f64.sqrt(),
    )
    .unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let cpeg = mean_samples(|s| run_cpeg(&inst, &params, rng(s), s).unwrap(), 10);
    let uniform = mean_samples(
        |s| run_static_baseline(&inst, StaticKind::Uniform, &params, rng(s), s).unwrap(),
        10,
    );
    assert!(
        uniform >= 1.5 * cpeg,
        "uniform {uniform:e} vs cpeg {cpeg:e}"
    );
}

#[test]
fn plugin_recommendation_is_six_gamma_good() {
    let inst = make_interpolation(4, vector_from(&[0.5, 0.583, 0.67, 0.75]), 0.9, 0.4).unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let trials = 100;
    let mut good = 0;
    for seed in 0..trials {
        let mut r = rng(seed);
        let offline =
            collect_offline(&inst, &Design::uniform(4), 10_000, 1.0, &mut r, &params).unwrap();
        let gamma_hat = ivbandit::estimators::fit_gamma_ols(&offline).unwrap();
        let res = run_cpeg_plugin(&inst, &gamma_hat, &offline, &params, &mut r, seed).unwrap();
        assert!(res.gamma_slack > 0.0);
        good += usize::from(res.good);
    }
    assert!(
        good as f64 >= (1.0 - params.delta) * trials as f64,
        "{good}/{trials}"
    );
}

#[test]
fn warm_up_bounds_bracket_sigma_min() {
    let inst = make_interpolation(3, vector_from(&[1.0, 0.5, 0.0]), 0.6, 0.4).unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let truth = sigma_min(inst.gamma());
    let est = estimate_lambda_min(&inst, &params, rng(4)).unwrap();
    assert!(est.lcb > est.ucb / 2.0);
    assert!(
        est.lcb <= truth && truth <= est.ucb,
        "{} {truth} {}",
        est.lcb,
        est.ucb
    );
    assert!(est.rounds >= 1 && est.samples > 0);
}
