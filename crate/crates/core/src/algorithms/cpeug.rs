use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_budget, check_phase, eliminate, finish, gamma_estimate, sample_count, theta_record,
    with_trace, AlgoParams, Environment, Estimate, PhaseKind, PhaseRecord, RunTrace, Simulator,
    TrialResult,
};
use crate::design::{
    e_design, pair_differences, r_min, round_design, xy_design, Design, RoundingParams,
};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_theta_psi, fit_gamma_ols, gamma_error_term, log_bar_theoretical, Moments, WidthContext,
};
use crate::instances::ProblemInstance;
use crate::numerics::{extreme_singular_values, sigma_min, Matrix, Vector};

/// Quantities fixed for a whole CPEUG run.
#[derive(Debug, Clone, PartialEq)]
pub struct CpeugSetup {
    pub lambda_e: Design,
    pub kappa0: f64,
    pub gamma_min: f64,
    /// `M = 32 L_η / (γ_min² κ₀) ∨ 1`.
    pub m: f64,
}

impl CpeugSetup {
    pub fn new(lambda_e: Design, kappa0: f64, gamma_min: f64, l_eta: f64) -> Self {
        let m = (32.0 * l_eta / (gamma_min * gamma_min * kappa0)).max(1.0);
        Self {
            lambda_e,
            kappa0,
            gamma_min,
            m,
        }
    }
}

/// One iteration of the Γ-estimator's doubling loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingStep {
    pub ell: usize,
    /// Total E-design rows held after this iteration.
    pub n0: u64,
    /// Fresh XY-design rows drawn in this iteration.
    pub n1: u64,
    /// The formula's E-design target for this iteration (zero in the first branch).
    pub n0_target: u64,
    pub stop: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    pub gamma_hat: Matrix,
    pub samples: u64,
    pub ell: usize,
    pub stop: f64,
    pub steps: Vec<DoublingStep>,
    /// Design used for the XY rows (the E-design in the first branch).
    pub design: Design,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub theta: Vector,
    pub samples: u64,
    pub design: Design,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMinEstimate {
    pub lcb: f64,
    pub ucb: f64,
    pub samples: u64,
    pub rounds: usize,
    pub design: Design,
}

fn doubled(base: u64, exp: usize) -> u64 {
    base.saturating_mul(1u64.checked_shl(exp as u32).unwrap_or(u64::MAX))
}

/// `max_{w,w'} ‖w − w'‖_{Ā(Z,Γ̂)⁻¹} B √(L_η logbar(Z, δ))`; infinite while `Γ̂` is singular.
fn stop_value(
    dirs: &[Vector],
    data: &Moments,
    gamma_hat: &Matrix,
    delta: f64,
    ctx: &WidthContext,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for y in dirs {
        match gamma_error_term(y, &data.ztz, data.rows, gamma_hat, delta, ctx) {
            Ok(v) => worst = worst.max(v),
            Err(Error::SingularDesign(_)) | Err(Error::NotPsd) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(worst)
}

fn ols_or_none(data: &Moments) -> Result<Option<Matrix>> {
    match fit_gamma_ols(data) {
        Ok(g) => Ok(Some(g)),
        Err(Error::SingularDesign(_)) | Err(Error::NotPsd) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Doubling-trick first-stage estimate of `Γ` for the active set.
#[allow(clippy::too_many_arguments)]
pub fn gamma_estimator(
    env: &mut dyn Environment,
    active: &[usize],
    gamma_prev: Option<&Matrix>,
    zeta: f64,
    delta: f64,
    params: &AlgoParams,
    setup: &CpeugSetup,
    trace: &RunTrace,
) -> Result<GammaEstimate> {
    let d = env.dim() as f64;
    let l_z = env.l_z();
    let ctx = params.width_context(l_z);
    let dirs = pair_differences(env.targets(), active);
    let r_e = r_min(&setup.lambda_e, params.omega);
    let e_round = RoundingParams {
        omega: params.omega,
        r_of_omega: r_e,
    };
    let two_over_kappa = (2.0 / setup.kappa0).ceil() as u64;
    let start = env.used();
    let mut steps = Vec::new();

    let Some(gamma_prev) = gamma_prev else {
        let base = r_e.max(two_over_kappa);
        let mut data = Moments::zeros(env.dim());
        let mut ell = 1;
        loop {
            check_phase(ell, params, trace)?;
            let n = doubled(base, ell - 1);
            check_budget(env, n, params, trace)?;
            data.merge(&env.pull(&round_design(&setup.lambda_e, n, &e_round)?));
            let delta_ell = delta / (4.0 * (ell * ell) as f64);
            let gamma_hat = ols_or_none(&data)?;
            let stop = match &gamma_hat {
                Some(g) => stop_value(&dirs, &data, g, delta_ell, &ctx)?,
                None => f64::INFINITY,
            };
            steps.push(DoublingStep {
                ell,
                n0: data.rows,
                n1: 0,
                n0_target: 0,
                stop,
                delta: delta_ell,
            });
            if let (Some(g), true) = (gamma_hat, stop <= 1.0) {
                return Ok(GammaEstimate {
                    gamma_hat: g,
                    samples: env.used() - start,
                    ell,
                    stop,
                    steps,
                    design: setup.lambda_e.clone(),
                });
            }
            ell += 1;
        }
    };

    let design = with_trace(
        xy_design(&dirs, env.arms(), gamma_prev, &params.solver),
        trace,
    )?;
    let r = r_min(&design, params.omega);
    let xy_round = RoundingParams {
        omega: params.omega,
        r_of_omega: r,
    };
    let (g, m) = (params.g, setup.m);
    let six_d = d * 6f64.ln();
    let n_prime_raw =
        4.0 * g * d * m * (1.0 + 2.0 * m * (d + l_z * l_z) + 2.0 * m * 2.0 * g * d * m).ln()
            + 8.0 * m * (2f64.ln() + six_d - delta.ln());
    let n_prime = (if n_prime_raw.is_finite() {
        n_prime_raw.floor() as u64
    } else {
        u64::MAX
    })
    .max(r);

    let mut e_data = Moments::zeros(env.dim());
    let mut e_counts = vec![0u64; env.arms().len()];
    let mut ell = 1;
    loop {
        check_phase(ell, params, trace)?;
        let n1 = doubled(n_prime, ell);
        check_budget(env, n1, params, trace)?;
        let xy_data = env.pull(&round_design(&design, n1, &xy_round)?);

        let delta_ell = delta / (4.0 * (ell * ell) as f64);
        let n0_raw = 2.0 * g * d * m * (m * (d + n1 as f64 + l_z * l_z)).ln()
            + 4.0 * m * (2f64.ln() + six_d - delta_ell.ln());
        let n0 = sample_count(n0_raw, r_e).max(two_over_kappa);
        let target = round_design(&setup.lambda_e, n0, &e_round)?;
        let top_up: Vec<u64> = target
            .iter()
            .zip(&e_counts)
            .map(|(&t, &c)| t.saturating_sub(c))
            .collect();
        check_budget(env, top_up.iter().sum(), params, trace)?;
        e_data.merge(&env.pull(&top_up));
        for (c, t) in e_counts.iter_mut().zip(&top_up) {
            *c += t;
        }

        let mut union = e_data.clone();
        union.merge(&xy_data);
        let gamma_hat = ols_or_none(&union)?;
        let stop = match &gamma_hat {
            Some(gh) => stop_value(&dirs, &union, gh, delta_ell, &ctx)?,
            None => f64::INFINITY,
        };
        steps.push(DoublingStep {
            ell,
            n0: e_data.rows,
            n1,
            n0_target: n0,
            stop,
            delta: delta_ell,
        });
        if let (Some(gh), true) = (gamma_hat, stop <= zeta) {
            return Ok(GammaEstimate {
                gamma_hat: gh,
                samples: env.used() - start,
                ell,
                stop,
                steps,
                design,
            });
        }
        ell += 1;
    }
}

/// Designs under `Γ̂`, draws fresh rounds and returns the two-sample 2SLS estimate.
pub fn theta_estimator(
    env: &mut dyn Environment,
    active: &[usize],
    delta: f64,
    zeta: f64,
    gamma_hat: &Matrix,
    params: &AlgoParams,
    trace: &RunTrace,
) -> Result<ThetaEstimate> {
    let dirs = pair_differences(env.targets(), active);
    let design = with_trace(
        xy_design(&dirs, env.arms(), gamma_hat, &params.solver),
        trace,
    )?;
    let rho = design.objective_value;
    let r = r_min(&design, params.omega);
    let raw = 2.0
        * (1.0 + params.omega)
        * rho
        * params.bounds.l_nu
        * (4.0 * active.len() as f64 / delta).ln()
        / (zeta * zeta);
    let n = sample_count(raw, r);
    check_budget(env, n, params, trace)?;
    let data = env.pull(&round_design(
        &design,
        n,
        &RoundingParams {
            omega: params.omega,
            r_of_omega: r,
        },
    )?);
    let theta = estimate_theta_psi(&data, gamma_hat)?;
    Ok(ThetaEstimate {
        theta,
        samples: n,
        design,
        rho,
    })
}

/// High-probability lower bound on `σ_min(Γ)` from doubling E-design batches.
pub fn estimate_lambda_min<R: Rng>(
    instance: &ProblemInstance,
    params: &AlgoParams,
    rng: R,
) -> Result<LambdaMinEstimate> {
    let mut env = Simulator::new(instance, rng, params.sampling);
    estimate_lambda_min_with_env(&mut env, params, &RunTrace::new("lambda_min"))
}

pub fn estimate_lambda_min_with_env(
    env: &mut dyn Environment,
    params: &AlgoParams,
    trace: &RunTrace,
) -> Result<LambdaMinEstimate> {
    params.validate()?;
    let d = env.dim();
    // The confidence bounds assume ‖z‖ ≤ 1; rescale instruments when needed.
    let scale = env
        .arms()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(1.0);
    let scaled: Vec<Vector> = env.arms().iter().map(|z| z / scale).collect();
    let (lambda_e, _) = e_design(&scaled, &params.solver)?;
    let r = r_min(&lambda_e, params.omega);
    let base = round_design(
        &lambda_e,
        r,
        &RoundingParams {
            omega: params.omega,
            r_of_omega: r,
        },
    )?;
    let start = env.used();
    let mut data = Moments::zeros(d);
    let mut j = 1;
    loop {
        check_phase(j, params, trace)?;
        let counts: Vec<u64> = if j == 1 {
            base.clone()
        } else {
            base.iter().map(|&m| doubled(m, j - 2)).collect()
        };
        check_budget(env, counts.iter().sum(), params, trace)?;
        data.merge(&env.pull(&counts));
        let t = data.rows as f64;
        let v = &data.ztz / (scale * scale);
        let sigma_v = sigma_min(&v);
        let psi_scaled = if sigma_v > 0.0 {
            log_bar_theoretical(d as f64, t, sigma_v, params.delta, 1.0) / (sigma_v / t)
        } else {
            f64::INFINITY
        };
        let width = (psi_scaled / t).sqrt();
        let center = match ols_or_none(&data)? {
            Some(g) => extreme_singular_values(&(g * scale)).0,
            None => 0.0,
        };
        let (lcb, ucb) = (center - width, center + width);
        if lcb > ucb / 2.0 {
            return Ok(LambdaMinEstimate {
                lcb: lcb / scale,
                ucb: ucb / scale,
                samples: env.used() - start,
                rounds: j,
                design: lambda_e,
            });
        }
        j += 1;
    }
}

/// Elimination with unknown `Γ`: alternate Γ-estimation, θ-estimation and elimination.
pub fn run_cpeug<R: Rng>(
    instance: &ProblemInstance,
    params: &AlgoParams,
    rng: R,
    seed: u64,
) -> Result<TrialResult> {
    let mut env = Simulator::new(instance, rng, params.sampling);
    let (recommended, trace) = run_cpeug_with_env(&mut env, params)?;
    finish("cpeug", instance, recommended, trace, seed)
}

pub fn run_cpeug_with_env(
    env: &mut dyn Environment,
    params: &AlgoParams,
) -> Result<(usize, RunTrace)> {
    params.validate()?;
    let mut trace = RunTrace::new("cpeug");
    let n_targets = env.targets().len();
    let mut active: Vec<usize> = (0..n_targets).collect();
    if active.len() == 1 {
        return Ok((0, trace));
    }

    let (lambda_e, kappa0) = e_design(env.arms(), &params.solver)?;
    let gamma_min = match params.gamma_min {
        Some(g) => g,
        None => {
            let est = estimate_lambda_min_with_env(env, params, &trace)?;
            trace.push(PhaseRecord {
                k: 0,
                zeta: 1.0,
                kind: PhaseKind::WarmUp,
                active_set: active.clone(),
                survivors: active.clone(),
                design: est.design.weights.clone(),
                objective: est.lcb,
                samples: est.samples,
                estimate: Estimate::Scalar(est.lcb),
                doubling: Vec::new(),
            });
            est.lcb
        }
    };
    let setup = CpeugSetup::new(lambda_e, kappa0, gamma_min, params.bounds.l_eta);

    let mut gamma_prev: Option<Matrix> = None;
    let mut zeta = 1.0;
    let mut k = 1;
    while active.len() > 1 {
        check_phase(k, params, &trace)?;
        let delta_k = params.delta / (k * k) as f64;
        let ge = gamma_estimator(
            env,
            &active,
            gamma_prev.as_ref(),
            zeta,
            delta_k,
            params,
            &setup,
            &trace,
        )?;
        trace.push(PhaseRecord {
            k,
            zeta,
            kind: PhaseKind::GammaPhase,
            active_set: active.clone(),
            survivors: active.clone(),
            design: ge.design.weights.clone(),
            objective: ge.stop,
            samples: ge.samples,
            estimate: gamma_estimate(&ge.gamma_hat),
            doubling: ge.steps,
        });
        let te = theta_estimator(env, &active, delta_k, zeta, &ge.gamma_hat, params, &trace)?;
        let survivors = eliminate(&active, &te.theta, env.targets(), zeta);
        trace.push(theta_record(
            k, zeta, &active, &survivors, &te.design, te.rho, te.samples, &te.theta,
        ));
        active = survivors;
        gamma_prev = Some(ge.gamma_hat);
        k += 1;
        zeta = 0.5f64.powi(k as i32);
    }
    Ok((active[0], trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_compliance, make_interpolation, NoiseKind, NoiseSpec};
    use crate::numerics::vector_from;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_first_branch_stops_immediately() {
        // Γ = I compliance: η ≡ 0, so OLS recovers Γ exactly on the first batch.
        let inst = make_interpolation(3, vector_from(&[1.0, 0.5, 0.0]), 1.0, 0.4).unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        let (lambda_e, kappa0) = e_design(inst.arms(), &params.solver).unwrap();
        let setup = CpeugSetup::new(lambda_e, kappa0, 1.0, 4.0);
        let mut env = Simulator::new(&inst, ChaCha8Rng::seed_from_u64(1), params.sampling);
        let ge = gamma_estimator(
            &mut env,
            &[0, 1, 2],
            None,
            1.0,
            0.1,
            &params,
            &setup,
            &RunTrace::default(),
        )
        .unwrap();
        assert!((ge.gamma_hat - Matrix::identity(3, 3)).amax() < 1e-12);
        assert!(ge.stop <= 1.0);
    }

    #[test]
    fn theta_estimator_noiseless_and_scaling() {
        let inst = make_interpolation(2, vector_from(&[1.0, 0.25]), 1.0, 0.4).unwrap();
        let mut params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        params.omega = 1.0;
        let mut env = Simulator::new(&inst, ChaCha8Rng::seed_from_u64(2), params.sampling);
        let t = RunTrace::default();
        let big = theta_estimator(
            &mut env,
            &[0, 1],
            0.1,
            0.5,
            &Matrix::identity(2, 2),
            &params,
            &t,
        )
        .unwrap();
        let small = theta_estimator(
            &mut env,
            &[0, 1],
            0.1,
            0.25,
            &Matrix::identity(2, 2),
            &params,
            &t,
        )
        .unwrap();
        let ratio = small.samples as f64 / big.samples as f64;
        assert!((ratio - 4.0).abs() < 0.01, "ratio {ratio}");
        // outcome noise is 0.4·ηᵀv with η ≡ 0, so the estimate is exact
        assert!((big.theta - vector_from(&[1.0, 0.25])).amax() < 1e-12);
    }

    #[test]
    fn lambda_min_noiseless_terminates() {
        let inst = make_interpolation(3, vector_from(&[1.0, 0.5, 0.0]), 1.0, 0.4).unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        let est = estimate_lambda_min(&inst, &params, ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(est.lcb > 0.5 && est.lcb <= 1.0);
        assert!(est.rounds > 1);
    }

    #[test]
    fn cpeug_single_target() {
        let inst = make_compliance(
            &Matrix::identity(1, 1),
            vector_from(&[1.0]),
            NoiseSpec::compliance(NoiseKind::ComplianceCategorical {
                sigma_eps: 0.5,
                coupling: 0.5,
            }),
        )
        .unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        let res = run_cpeug(&inst, &params, ChaCha8Rng::seed_from_u64(0), 0).unwrap();
        assert_eq!(res.total_samples, 0);
        assert!(res.correct);
    }
}
