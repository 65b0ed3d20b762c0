use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_budget, check_phase, eliminate, finish, sample_count, theta_record, AlgoParams,
    Environment, RunTrace, Simulator, TrialResult,
};
use crate::design::{
    pair_differences, r_min, round_design, xy_design, xy_objective, Design, RoundingParams,
};
use crate::error::{Error, Result};
use crate::estimators::{a_bar, estimate_theta_psi, Moments};
use crate::instances::ProblemInstance;
use crate::numerics::{inverse_general, Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommender {
    /// Per-treatment sample means of the outcome.
    Ols,
    /// `Γ⁻¹ μ̂` from the per-instrument outcome means.
    Iv,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UcbTrace {
    /// Recommended evaluation arm after each round.
    pub recommendations: Vec<u32>,
    pub pulls: Vec<u64>,
}

impl UcbTrace {
    pub fn final_recommendation(&self) -> usize {
        self.recommendations.last().copied().unwrap_or(0) as usize
    }
}

fn argmax_or_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] || (values[best].is_nan() && !v.is_nan()) {
            best = i;
        }
    }
    best
}

/// UCB1 on the instruments' outcome means, recording a recommendation every round.
pub fn run_ucb_baseline<R: Rng>(
    instance: &ProblemInstance,
    horizon: u64,
    recommender: Recommender,
    rng: R,
) -> Result<UcbTrace> {
    if !instance.is_compliance() {
        return Err(Error::BadParam(
            "UCB baselines need a compliance instance".into(),
        ));
    }
    let d = instance.dim();
    let gamma_inv = inverse_general(instance.gamma())?;
    let mut env = Simulator::new(instance, rng, Default::default());
    let mut pulls = vec![0u64; d];
    let mut sum_z = vec![0.0; d];
    let mut treated = vec![0u64; d];
    let mut sum_x = vec![0.0; d];
    let mut recs = Vec::with_capacity(horizon as usize);

    for t in 1..=horizon {
        let i = if (t as usize) <= d {
            t as usize - 1
        } else {
            let log_t = (t as f64).ln();
            let index: Vec<f64> = (0..d)
                .map(|i| sum_z[i] / pulls[i] as f64 + (2.0 * log_t / pulls[i] as f64).sqrt())
                .collect();
            argmax_or_first(&index)
        };
        let obs = env.pull_one(i);
        pulls[i] += 1;
        sum_z[i] += obs.y;
        let j = argmax_or_first(obs.x.as_slice());
        treated[j] += 1;
        sum_x[j] += obs.y;

        let estimate: Vec<f64> = match recommender {
            Recommender::Ols => (0..d)
                .map(|j| {
                    if treated[j] > 0 {
                        sum_x[j] / treated[j] as f64
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect(),
            Recommender::Iv => {
                let mu = Vector::from_fn(d, |i, _| {
                    if pulls[i] > 0 {
                        sum_z[i] / pulls[i] as f64
                    } else {
                        0.0
                    }
                });
                (&gamma_inv * mu).iter().copied().collect()
            }
        };
        recs.push(argmax_or_first(&estimate) as u32);
    }
    Ok(UcbTrace {
        recommendations: recs,
        pulls,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticKind {
    /// Design for the comparisons against the true best arm (simulation only).
    Oracle,
    /// XY design over all pairs of evaluation arms.
    Xy,
    Uniform,
    /// Uniform over the instruments of the surviving arms (requires `Z = W`).
    Se,
}

/// The fixed design of a static baseline; for `Se` the design on the given active set.
pub fn static_design(
    instance: &ProblemInstance,
    kind: StaticKind,
    active: &[usize],
    params: &AlgoParams,
) -> Result<Design> {
    let n = instance.arms().len();
    match kind {
        StaticKind::Uniform => Ok(Design::uniform(n)),
        StaticKind::Xy => {
            let all: Vec<usize> = (0..instance.targets().len()).collect();
            let dirs = pair_differences(instance.targets(), &all);
            xy_design(&dirs, instance.arms(), instance.gamma(), &params.solver)
        }
        StaticKind::Oracle => {
            let best = instance.best_arm()?.index;
            let dirs: Vec<Vector> = instance
                .targets()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != best)
                .map(|(_, w)| &instance.targets()[best] - w)
                .collect();
            xy_design(&dirs, instance.arms(), instance.gamma(), &params.solver)
        }
        StaticKind::Se => {
            if instance.arms().len() != instance.targets().len()
                || instance
                    .arms()
                    .iter()
                    .zip(instance.targets())
                    .any(|(z, w)| z != w)
            {
                return Err(Error::BadParam("SE needs Z = W, matched by index".into()));
            }
            Ok(Design::uniform_on(n, active))
        }
    }
}

/// `max_y yᵀA⁺y`, infinite when some direction leaves the range of `A`.
fn pinv_objective(dirs: &[Vector], a: &Matrix) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let Ok(pinv) = a.clone().pseudo_inverse(1e-12 * scale) else {
        return f64::INFINITY;
    };
    let proj = a * &pinv;
    let mut worst: f64 = 0.0;
    for y in dirs {
        if (y - &proj * y).norm() > 1e-8 * y.norm().max(1.0) {
            return f64::INFINITY;
        }
        worst = worst.max(y.dot(&(&pinv * y)));
    }
    worst
}

/// Phased elimination with a prescribed design and the known-Γ estimator.
pub fn run_static_baseline<R: Rng>(
    instance: &ProblemInstance,
    kind: StaticKind,
    params: &AlgoParams,
    rng: R,
    seed: u64,
) -> Result<TrialResult> {
    params.validate()?;
    let name = match kind {
        StaticKind::Oracle => "static_oracle",
        StaticKind::Xy => "static_xy",
        StaticKind::Uniform => "static_uniform",
        StaticKind::Se => "se",
    };
    let mut trace = RunTrace::new(name);
    let n_targets = instance.targets().len();
    let mut active: Vec<usize> = (0..n_targets).collect();
    let best = instance.best_arm()?.index;
    let gamma = instance.gamma();
    let fixed = match kind {
        StaticKind::Se => None,
        _ => Some(static_design(instance, kind, &active, params)?),
    };
    let mut env = Simulator::new(instance, rng, params.sampling);
    let mut k = 1;
    while active.len() > 1 {
        check_phase(k, params, &trace)?;
        let zeta = 0.5f64.powi(k as i32);
        let design = match &fixed {
            Some(d) => d.clone(),
            None => static_design(instance, kind, &active, params)?,
        };
        let dirs = if kind == StaticKind::Oracle && active.contains(&best) {
            active
                .iter()
                .filter(|&&i| i != best)
                .map(|&i| &instance.targets()[best] - &instance.targets()[i])
                .collect()
        } else {
            pair_differences(instance.targets(), &active)
        };
        let rho = if kind == StaticKind::Se {
            let counts: Vec<u64> = design.weights.iter().map(|&w| u64::from(w > 0.0)).collect();
            let gram = Moments::gram(instance.arms(), &counts);
            pinv_objective(&dirs, &(a_bar(&gram, gamma) / design.support_size as f64))
        } else {
            xy_objective(&dirs, instance.arms(), gamma, &design.weights)?
        };
        let r = r_min(&design, params.omega);
        let kf = k as f64;
        let raw = 2.0
            * (1.0 + params.omega)
            * rho
            * params.bounds.l_nu
            * (4.0 * kf * kf * n_targets as f64 / params.delta).ln()
            / (zeta * zeta);
        let n = sample_count(raw, r);
        check_budget(&env, n, params, &trace)?;
        let data = env.pull(&round_design(
            &design,
            n,
            &RoundingParams {
                omega: params.omega,
                r_of_omega: r,
            },
        )?);
        let theta = estimate_theta_psi(&data, gamma)?;
        let survivors = eliminate(&active, &theta, instance.targets(), zeta);
        trace.push(theta_record(
            k, zeta, &active, &survivors, &design, rho, n, &theta,
        ));
        active = survivors;
        k += 1;
    }
    finish(name, instance, active[0], trace, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::make_interpolation;
    use crate::numerics::vector_from;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ucb_identity_two_arms() {
        let inst = make_interpolation(2, vector_from(&[1.0, 0.0]), 1.0, 0.4).unwrap();
        for rec in [Recommender::Ols, Recommender::Iv] {
            let t = run_ucb_baseline(&inst, 200, rec, ChaCha8Rng::seed_from_u64(4)).unwrap();
            assert_eq!(t.recommendations.len(), 200);
            assert_eq!(t.final_recommendation(), 0);
            assert_eq!(t.pulls.iter().sum::<u64>(), 200);
        }
    }

    #[test]
    fn se_on_interpolation_spans_active_pairs() {
        let inst = make_interpolation(4, vector_from(&[0.5, 0.583, 0.67, 0.75]), 0.8, 0.4).unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        let res = run_static_baseline(
            &inst,
            StaticKind::Se,
            &params,
            ChaCha8Rng::seed_from_u64(9),
            9,
        )
        .unwrap();
        assert!(res.correct);
        assert!(res.trace.phases.iter().all(|p| p.objective.is_finite()));
    }

    #[test]
    fn static_kinds_run() {
        let inst = make_interpolation(3, vector_from(&[1.0, 0.5, 0.0]), 0.9, 0.4).unwrap();
        let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
        for kind in [StaticKind::Oracle, StaticKind::Xy, StaticKind::Uniform] {
            let res =
                run_static_baseline(&inst, kind, &params, ChaCha8Rng::seed_from_u64(1), 1).unwrap();
            assert!(res.correct, "{kind:?}");
            assert_eq!(
                res.total_samples,
                res.trace.phases.iter().map(|p| p.samples).sum::<u64>()
            );
        }
    }
}
