use rand::Rng;

use super::{
    check_budget, check_phase, eliminate, finish, sample_count, theta_record, with_trace,
    AlgoParams, Environment, RunTrace, Simulator, TrialResult,
};
use crate::design::{pair_differences, r_min, round_design, xy_design, RoundingParams};
use crate::error::Result;
use crate::estimators::estimate_theta_psi;
use crate::instances::ProblemInstance;
use crate::numerics::Matrix;

/// `⌈2(1+ω) 4^k ρ L_ν ln(4k²|W|/δ)⌉ ∨ r`.
pub fn cpeg_phase_samples(
    params: &AlgoParams,
    rho: f64,
    k: usize,
    n_targets: usize,
    r: u64,
) -> u64 {
    let kf = k as f64;
    let raw = 2.0
        * (1.0 + params.omega)
        * 4f64.powi(k as i32)
        * rho
        * params.bounds.l_nu
        * (4.0 * kf * kf * n_targets as f64 / params.delta).ln();
    sample_count(raw, r)
}

/// Elimination with known `Γ` and the oracle estimator.
pub fn run_cpeg<R: Rng>(
    instance: &ProblemInstance,
    params: &AlgoParams,
    rng: R,
    seed: u64,
) -> Result<TrialResult> {
    let mut env = Simulator::new(instance, rng, params.sampling);
    let (recommended, trace) = run_cpeg_with_env(&mut env, instance.gamma(), params)?;
    finish("cpeg", instance, recommended, trace, seed)
}

pub fn run_cpeg_with_env(
    env: &mut dyn Environment,
    gamma: &Matrix,
    params: &AlgoParams,
) -> Result<(usize, RunTrace)> {
    params.validate()?;
    let mut trace = RunTrace::new("cpeg");
    let n_targets = env.targets().len();
    let mut active: Vec<usize> = (0..n_targets).collect();
    let mut k = 1;
    while active.len() > 1 {
        check_phase(k, params, &trace)?;
        let zeta = 0.5f64.powi(k as i32);
        let dirs = pair_differences(env.targets(), &active);
        let design = with_trace(xy_design(&dirs, env.arms(), gamma, &params.solver), &trace)?;
        let rho = design.objective_value;
        let r = r_min(&design, params.omega);
        let n = cpeg_phase_samples(params, rho, k, n_targets, r);
        check_budget(env, n, params, &trace)?;
        let counts = round_design(
            &design,
            n,
            &RoundingParams {
                omega: params.omega,
                r_of_omega: r,
            },
        )?;
        let data = env.pull(&counts);
        let theta = estimate_theta_psi(&data, gamma)?;
        let survivors = eliminate(&active, &theta, env.targets(), zeta);
        trace.push(theta_record(
            k, zeta, &active, &survivors, &design, rho, n, &theta,
        ));
        active = survivors;
        k += 1;
    }
    Ok((active[0], trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::NoiseBounds;
    use crate::instances::make_interpolation;
    use crate::numerics::vector_from;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_target_returns_immediately() {
        let inst = crate::instances::ProblemInstance::new(
            vec![vector_from(&[1.0, 0.0]), vector_from(&[0.0, 1.0])],
            vec![vector_from(&[1.0, 1.0])],
            Matrix::identity(2, 2),
            vector_from(&[1.0, 0.5]),
            crate::instances::NoiseSpec {
                kind: crate::instances::NoiseKind::GaussianExogenous {
                    sigma_eps: 1.0,
                    rho: 0.5,
                },
                sigma_eta_sq: 1.0,
                l_eta: 1.0,
            },
            None,
        )
        .unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        let res = run_cpeg(&inst, &params, ChaCha8Rng::seed_from_u64(0), 0).unwrap();
        assert_eq!(res.total_samples, 0);
        assert!(res.correct);
        assert!(res.trace.phases.is_empty());
    }

    #[test]
    fn logged_samples_reproduce_formula() {
        let inst = make_interpolation(4, vector_from(&[0.5, 0.583, 0.67, 0.75]), 0.9, 0.4).unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        let res = run_cpeg(&inst, &params, ChaCha8Rng::seed_from_u64(7), 7).unwrap();
        let mut total = 0;
        for p in &res.trace.phases {
            let r = r_min(
                &crate::design::Design::from_weights(p.design.clone(), p.objective).unwrap(),
                params.omega,
            );
            assert_eq!(
                p.samples,
                cpeg_phase_samples(&params, p.objective, p.k, 4, r)
            );
            assert!((p.zeta - 0.5f64.powi(p.k as i32)).abs() < 1e-15);
            total += p.samples;
        }
        assert_eq!(total, res.total_samples);
    }

    #[test]
    fn bounds_helper_matches_compliance_formula() {
        let inst = make_interpolation(2, vector_from(&[1.0, 0.0]), 1.0, 0.4).unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        assert_eq!(params.bounds, NoiseBounds::new(10.0, 4.0, 1.0).unwrap());
    }
}
