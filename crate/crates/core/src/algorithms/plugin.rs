use rand::Rng;

use super::{
    check_budget, check_phase, eliminate, empirical_best, finish, sample_count, theta_record,
    with_trace, AlgoParams, Environment, RunTrace, Simulator, TrialResult,
};
use crate::design::{pair_differences, r_min, round_design, xy_design, Design, RoundingParams};
use crate::error::{Error, Result};
use crate::estimators::{estimate_theta_psi, gamma_error_term, Moments, WidthContext};
use crate::instances::ProblemInstance;
use crate::numerics::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct PluginResult {
    pub trial: TrialResult,
    /// `γ`, the first-stage slack; the recommendation is `6γ`-good with high probability.
    pub gamma_slack: f64,
    /// Whether the recommendation's true gap is at most `6γ`.
    pub good: bool,
}

/// Offline first-stage data: `t` rounds under `design`.
pub fn collect_offline<R: Rng>(
    instance: &ProblemInstance,
    design: &Design,
    t: u64,
    omega: f64,
    rng: R,
    params: &AlgoParams,
) -> Result<Moments> {
    let r = r_min(design, omega);
    let counts = round_design(
        design,
        t,
        &RoundingParams {
            omega,
            r_of_omega: r,
        },
    )?;
    let mut env = Simulator::new(instance, rng, params.sampling);
    Ok(env.pull(&counts))
}

/// `γ = max_{w,w'} ‖w − w'‖_{Ā(Z_T,Γ̂)⁻¹} B √(L_η logbar(Z_T, δ))`.
pub fn plugin_slack(
    targets: &[Vector],
    offline: &Moments,
    gamma_hat: &Matrix,
    delta: f64,
    ctx: &WidthContext,
) -> Result<f64> {
    let all: Vec<usize> = (0..targets.len()).collect();
    let mut worst: f64 = 0.0;
    for y in pair_differences(targets, &all) {
        worst = worst.max(gamma_error_term(
            &y,
            &offline.ztz,
            offline.rows,
            gamma_hat,
            delta,
            ctx,
        )?);
    }
    Ok(worst)
}

/// Elimination with a fixed first-stage estimate `Γ̂` fit offline.
pub fn run_cpeg_plugin<R: Rng>(
    instance: &ProblemInstance,
    gamma_hat: &Matrix,
    offline: &Moments,
    params: &AlgoParams,
    rng: R,
    seed: u64,
) -> Result<PluginResult> {
    params.validate()?;
    if offline.rows == 0 {
        return Err(Error::BadParam("offline data is empty".into()));
    }
    let mut env = Simulator::new(instance, rng, params.sampling);
    let (recommended, gamma, trace) = plugin_loop(&mut env, gamma_hat, offline, params)?;
    let gap = instance.best_arm()?.gaps[recommended];
    Ok(PluginResult {
        trial: finish("cpeg_plugin", instance, recommended, trace, seed)?,
        gamma_slack: gamma,
        good: gap <= 6.0 * gamma,
    })
}

fn plugin_loop(
    env: &mut dyn Environment,
    gamma_hat: &Matrix,
    offline: &Moments,
    params: &AlgoParams,
) -> Result<(usize, f64, RunTrace)> {
    let ctx = params.width_context(env.l_z());
    let gamma = plugin_slack(env.targets(), offline, gamma_hat, params.delta, &ctx)?;
    let mut trace = RunTrace::new("cpeg_plugin");
    let n_targets = env.targets().len();
    let mut active: Vec<usize> = (0..n_targets).collect();
    let mut last_theta: Option<Vector> = None;
    let mut k = 1;
    while active.len() > 1 {
        check_phase(k, params, &trace)?;
        let zeta = 0.5f64.powi(k as i32);
        let dirs = pair_differences(env.targets(), &active);
        let design = with_trace(
            xy_design(&dirs, env.arms(), gamma_hat, &params.solver),
            &trace,
        )?;
        let rho = design.objective_value;
        let r = r_min(&design, params.omega);
        let kf = k as f64;
        let inv_sq = (1.0 / (zeta * zeta)).min(1.0 / (gamma * gamma));
        let raw = 2.0
            * (1.0 + params.omega)
            * inv_sq
            * rho
            * params.bounds.l_nu
            * (4.0 * kf * kf * n_targets as f64 / params.delta).ln();
        let n = sample_count(raw, r);
        check_budget(env, n, params, &trace)?;
        let data = env.pull(&round_design(
            &design,
            n,
            &RoundingParams {
                omega: params.omega,
                r_of_omega: r,
            },
        )?);
        let theta = estimate_theta_psi(&data, gamma_hat)?;
        let survivors = eliminate(&active, &theta, env.targets(), zeta + gamma);
        trace.push(theta_record(
            k, zeta, &active, &survivors, &design, rho, n, &theta,
        ));
        active = survivors;

        let values: Vec<f64> = active
            .iter()
            .map(|&i| env.targets()[i].dot(&theta))
            .collect();
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        last_theta = Some(theta);
        if !(spread > 4.0 * gamma || zeta > gamma) {
            break;
        }
        k += 1;
    }
    let recommended = match &last_theta {
        Some(t) => empirical_best(&active, t, env.targets()),
        None => active[0],
    };
    Ok((recommended, gamma, trace))
}
