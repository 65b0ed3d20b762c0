use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    collect_offline, run_cpeg, run_cpeg_plugin, run_cpeug, run_static_baseline, run_ucb_baseline,
    AlgoParams, Recommender, RunTrace, StaticKind, TrialResult,
};
use crate::design::{e_design, Design};
use crate::error::{Error, Result};
use crate::estimators::fit_gamma_ols;
use crate::instances::ProblemInstance;

use super::config::{AlgorithmKind, AlgorithmSpec, ExperimentConfig, OfflineDesign};

/// One line of `results.csv`. `recommended` is empty when the trial did not finish.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub algorithm: String,
    pub trial: usize,
    pub seed: u64,
    pub samples: u64,
    pub correct: bool,
    pub recommended: Option<usize>,
    pub wall_ms: u64,
}

/// Per-trial data that does not fit the CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialDetail {
    pub trace: Option<RunTrace>,
    /// `(t, correct after t rounds)` checkpoints for the UCB baselines.
    pub curve: Option<Vec<(u64, bool)>>,
    /// A safety cap stopped the trial.
    pub capped: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    /// Parallel to `rows`.
    pub details: Vec<TrialDetail>,
}

impl ResultsTable {
    pub fn from_rows(rows: Vec<ResultRow>) -> Self {
        let details = vec![TrialDetail::default(); rows.len()];
        Self { rows, details }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(state, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one trial; stable across platforms, releases and thread counts.
pub fn trial_seed(master_seed: u64, algorithm: &str, instance_id: &str, trial: usize) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master_seed.to_le_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, algorithm.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, instance_id.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, &(trial as u64).to_le_bytes());
    splitmix64(h)
}

/// Evenly spaced checkpoints `1 ≤ t ≤ horizon`, always ending at the horizon.
fn checkpoints(horizon: u64, points: usize) -> Vec<u64> {
    let p = points as u64;
    let mut ts: Vec<u64> = (1..=p).map(|i| (i * horizon).div_ceil(p).max(1)).collect();
    ts.dedup();
    ts
}

struct Outcome {
    recommended: Option<usize>,
    correct: bool,
    samples: u64,
    detail: TrialDetail,
}

fn from_trial(res: Result<TrialResult>) -> Outcome {
    match res {
        Ok(t) => Outcome {
            recommended: Some(t.recommended),
            correct: t.correct,
            samples: t.total_samples,
            detail: TrialDetail {
                trace: Some(t.trace),
                ..Default::default()
            },
        },
        Err(Error::CapExceeded { reason, partial }) => Outcome {
            recommended: None,
            correct: false,
            samples: partial.total_samples,
            detail: TrialDetail {
                trace: Some(*partial),
                capped: true,
                failure: Some(reason),
                ..Default::default()
            },
        },
        Err(e) => Outcome {
            recommended: None,
            correct: false,
            samples: 0,
            detail: TrialDetail {
                failure: Some(e.to_string()),
                ..Default::default()
            },
        },
    }
}

fn run_plugin(
    instance: &ProblemInstance,
    spec: &AlgorithmSpec,
    params: &AlgoParams,
    mut rng: ChaCha8Rng,
    seed: u64,
) -> Result<TrialResult> {
    let design = match spec.offline_design.unwrap_or_default() {
        OfflineDesign::Uniform => Design::uniform(instance.arms().len()),
        OfflineDesign::E => e_design(instance.arms(), &params.solver)?.0,
    };
    let offline = collect_offline(
        instance,
        &design,
        spec.offline_rounds(),
        params.omega,
        &mut rng,
        params,
    )?;
    let gamma_hat = fit_gamma_ols(&offline)?;
    Ok(run_cpeg_plugin(instance, &gamma_hat, &offline, params, &mut rng, seed)?.trial)
}

fn run_one(
    instance: &ProblemInstance,
    best: usize,
    spec: &AlgorithmSpec,
    params: &AlgoParams,
    seed: u64,
    curve_points: usize,
) -> Outcome {
    let rng = ChaCha8Rng::seed_from_u64(seed);
    let static_kind = |kind| {
        from_trial(run_static_baseline(
            instance,
            kind,
            params,
            rng.clone(),
            seed,
        ))
    };
    match spec.name {
        AlgorithmKind::Cpeg => from_trial(run_cpeg(instance, params, rng, seed)),
        AlgorithmKind::Cpeug => from_trial(run_cpeug(instance, params, rng, seed)),
        AlgorithmKind::CpegPlugin => from_trial(run_plugin(instance, spec, params, rng, seed)),
        AlgorithmKind::StaticOracle => static_kind(StaticKind::Oracle),
        AlgorithmKind::StaticXy => static_kind(StaticKind::Xy),
        AlgorithmKind::StaticUniform => static_kind(StaticKind::Uniform),
        AlgorithmKind::Se => static_kind(StaticKind::Se),
        AlgorithmKind::UcbOls | AlgorithmKind::UcbIv => {
            let rec = if spec.name == AlgorithmKind::UcbOls {
                Recommender::Ols
            } else {
                Recommender::Iv
            };
            let horizon = spec.horizon();
            match run_ucb_baseline(instance, horizon, rec, rng) {
                Ok(t) => {
                    let final_rec = t.final_recommendation();
                    let curve = checkpoints(horizon, curve_points)
                        .into_iter()
                        .map(|s| (s, t.recommendations[(s - 1) as usize] as usize == best))
                        .collect();
                    Outcome {
                        recommended: Some(final_rec),
                        correct: final_rec == best,
                        samples: horizon,
                        detail: TrialDetail {
                            curve: Some(curve),
                            ..Default::default()
                        },
                    }
                }
                Err(e) => from_trial(Err(e)),
            }
        }
    }
}

/// Runs every (instance, algorithm, trial) combination. Rows come out in that order
/// whatever the number of workers; per-trial errors become flagged rows.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let instances = config.build_instances()?;
    let mut bests = Vec::with_capacity(instances.len());
    let mut params = Vec::with_capacity(instances.len());
    for (_, inst) in &instances {
        bests.push(inst.best_arm()?.index);
        params.push(
            config
                .algorithms
                .iter()
                .map(|a| a.params(inst, config.log_mode))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let labels: Vec<String> = config.algorithms.iter().map(|a| a.label()).collect();

    let mut jobs = Vec::new();
    for i in 0..instances.len() {
        for a in 0..config.algorithms.len() {
            for t in 0..config.trials {
                jobs.push((i, a, t));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(ResultRow, TrialDetail)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, a, trial)| {
                let (id, inst) = &instances[i];
                let seed = trial_seed(config.master_seed, &labels[a], id, trial);
                let start = Instant::now();
                let out = run_one(
                    inst,
                    bests[i],
                    &config.algorithms[a],
                    &params[i][a],
                    seed,
                    config.curve_points,
                );
                let wall_ms = if config.timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                };
                if let Some(f) = &out.detail.failure {
                    log::warn!("{} on {id}, trial {trial}: {f}", labels[a]);
                }
                let row = ResultRow {
                    instance_id: id.clone(),
                    algorithm: labels[a].clone(),
                    trial,
                    seed,
                    samples: out.samples,
                    correct: out.correct,
                    recommended: out.recommended,
                    wall_ms,
                };
                (row, out.detail)
            })
            .collect()
    });
    let (rows, details) = results.into_iter().unzip();
    Ok(ResultsTable { rows, details })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_stable_and_distinct() {
        let a = trial_seed(1, "cpeg", "x", 0);
        assert_eq!(a, trial_seed(1, "cpeg", "x", 0));
        let others = [
            trial_seed(2, "cpeg", "x", 0),
            trial_seed(1, "cpeug", "x", 0),
            trial_seed(1, "cpeg", "y", 0),
            trial_seed(1, "cpeg", "x", 1),
            trial_seed(1, "cpe", "gx", 0),
        ];
        assert!(others.iter().all(|&s| s != a));
    }

    #[test]
    fn checkpoints_cover_the_horizon() {
        assert_eq!(checkpoints(10, 5), vec![2, 4, 6, 8, 10]);
        assert_eq!(checkpoints(3, 10), vec![1, 2, 3]);
        assert_eq!(checkpoints(30_000, 60).last(), Some(&30_000));
    }
}
