//! Adaptive elimination algorithms and their baselines.
//!
//! Every algorithm talks to the world through [`Environment`], which only hands out
//! sufficient statistics of the rounds it was asked for. Known-Γ algorithms receive `Γ`
//! as an explicit argument; the unknown-Γ algorithm never sees it.

mod baselines;
mod cpeg;
mod cpeug;
mod plugin;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::design::{Design, SolverOptions};
use crate::error::{Error, Result};
use crate::estimators::{LogBarMode, Moments, NoiseBounds, WidthContext};
use crate::instances::{Observation, ProblemInstance, SamplingMode};
use crate::numerics::{matrix_to_rows, Matrix, Vector};

pub use baselines::{
    run_static_baseline, run_ucb_baseline, static_design, Recommender, StaticKind, UcbTrace,
};
pub use cpeg::{cpeg_phase_samples, run_cpeg, run_cpeg_with_env};
pub use cpeug::{
    estimate_lambda_min, estimate_lambda_min_with_env, gamma_estimator, run_cpeug,
    run_cpeug_with_env, theta_estimator, CpeugSetup, DoublingStep, GammaEstimate,
    LambdaMinEstimate, ThetaEstimate,
};
pub use plugin::{collect_offline, plugin_slack, run_cpeg_plugin, PluginResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoParams {
    pub delta: f64,
    pub omega: f64,
    pub bounds: NoiseBounds,
    /// Lower bound on `λ_min(Γ)`; estimated with a warm-up when absent.
    pub gamma_min: Option<f64>,
    pub g: f64,
    pub log_mode: LogBarMode,
    pub max_phases: usize,
    pub max_total_samples: u64,
    pub solver: SolverOptions,
    pub sampling: SamplingMode,
}

impl AlgoParams {
    pub const DEFAULT_G: f64 = 144.0;
    pub const DEFAULT_MAX_PHASES: usize = 40;
    pub const DEFAULT_MAX_SAMPLES: u64 = 10_000_000_000_000;

    pub fn new(delta: f64, bounds: NoiseBounds) -> Self {
        Self {
            delta,
            omega: 1.0,
            bounds,
            gamma_min: None,
            g: Self::DEFAULT_G,
            log_mode: LogBarMode::Practical,
            max_phases: Self::DEFAULT_MAX_PHASES,
            max_total_samples: Self::DEFAULT_MAX_SAMPLES,
            solver: SolverOptions::default(),
            sampling: SamplingMode::default(),
        }
    }

    /// Tight bounds for a simulated instance: `L_η = σ_η²`, `B = ‖θ‖₂` and
    /// `L_ν = 2(L_η B² + 1)`.
    pub fn for_instance(instance: &ProblemInstance, delta: f64) -> Result<Self> {
        let l_eta = instance.noise().l_eta;
        let b = instance.theta().norm();
        Ok(Self::new(delta, NoiseBounds::for_theta(l_eta, b)?))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::BadDelta(self.delta));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::BadParam(format!(
                "omega must lie in (0, 1], got {}",
                self.omega
            )));
        }
        if !(self.g >= 1.0) {
            return Err(Error::BadParam(format!(
                "g must be at least 1, got {}",
                self.g
            )));
        }
        if self.max_phases == 0 || self.max_total_samples == 0 {
            return Err(Error::BadParam("safety caps must be positive".into()));
        }
        if let Some(gm) = self.gamma_min {
            if !(gm > 0.0 && gm.is_finite()) {
                return Err(Error::BadParam(format!(
                    "gamma_min must be positive, got {gm}"
                )));
            }
        }
        self.bounds.validate()?;
        self.solver.validate()
    }

    pub fn width_context(&self, l_z: f64) -> WidthContext {
        WidthContext {
            bounds: self.bounds,
            l_z,
            mode: self.log_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    ThetaPhase,
    GammaPhase,
    WarmUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Estimate {
    Theta(Vec<f64>),
    Gamma(Vec<Vec<f64>>),
    Scalar(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub k: usize,
    pub zeta: f64,
    pub kind: PhaseKind,
    /// Active evaluation arms at the start of the phase.
    pub active_set: Vec<usize>,
    /// Survivors after the phase's elimination step.
    pub survivors: Vec<usize>,
    pub design: Vec<f64>,
    /// `ρ(W_k)` for θ phases, the final stopping statistic for Γ phases, the LCB for the
    /// warm-up.
    pub objective: f64,
    #[serde(rename = "N")]
    pub samples: u64,
    pub estimate: Estimate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub doubling: Vec<DoublingStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: String,
    pub phases: Vec<PhaseRecord>,
    pub total_samples: u64,
}

impl RunTrace {
    pub fn new(algorithm: &str) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, record: PhaseRecord) {
        self.total_samples += record.samples;
        self.phases.push(record);
    }

    /// One JSON object per phase, newline-terminated.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.phases {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub algorithm: String,
    pub recommended: usize,
    pub correct: bool,
    pub total_samples: u64,
    pub trace: RunTrace,
    pub seed: u64,
}

/// Source of rounds for an algorithm.
pub trait Environment {
    fn dim(&self) -> usize;
    fn arms(&self) -> &[Vector];
    fn targets(&self) -> &[Vector];
    /// Bound on `‖z‖₂` over the instruments.
    fn l_z(&self) -> f64;
    /// Plays instrument `i` exactly `counts[i]` times and returns the statistics.
    fn pull(&mut self, counts: &[u64]) -> Moments;
    fn pull_one(&mut self, z_index: usize) -> Observation;
    /// Rounds played so far.
    fn used(&self) -> u64;
}

/// Environment backed by a simulated instance.
pub struct Simulator<'a, R: Rng> {
    instance: &'a ProblemInstance,
    rng: R,
    mode: SamplingMode,
    used: u64,
}

impl<'a, R: Rng> Simulator<'a, R> {
    pub fn new(instance: &'a ProblemInstance, rng: R, mode: SamplingMode) -> Self {
        Self {
            instance,
            rng,
            mode,
            used: 0,
        }
    }

    pub fn instance(&self) -> &ProblemInstance {
        self.instance
    }

    pub fn into_rng(self) -> R {
        self.rng
    }
}

impl<R: Rng> Environment for Simulator<'_, R> {
    fn dim(&self) -> usize {
        self.instance.dim()
    }

    fn arms(&self) -> &[Vector] {
        self.instance.arms()
    }

    fn targets(&self) -> &[Vector] {
        self.instance.targets()
    }

    fn l_z(&self) -> f64 {
        self.instance.l_z()
    }

    fn pull(&mut self, counts: &[u64]) -> Moments {
        let mut m = Moments::zeros(self.dim());
        for (i, &n) in counts.iter().enumerate() {
            if n > 0 {
                let batch = self.instance.sample_batch(i, n, &mut self.rng, self.mode);
                m.absorb(&self.instance.arms()[i], &batch);
            }
        }
        self.used += m.rows;
        m
    }

    fn pull_one(&mut self, z_index: usize) -> Observation {
        self.used += 1;
        self.instance.sample_round(z_index, &mut self.rng)
    }

    fn used(&self) -> u64 {
        self.used
    }
}

/// Drops every arm that some active arm beats by more than `threshold` under `theta_hat`.
pub fn eliminate(
    active: &[usize],
    theta_hat: &Vector,
    targets: &[Vector],
    threshold: f64,
) -> Vec<usize> {
    let values: Vec<f64> = active.iter().map(|&i| targets[i].dot(theta_hat)).collect();
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    active
        .iter()
        .zip(&values)
        .filter(|&(_, &v)| !(top - v > threshold))
        .map(|(&i, _)| i)
        .collect()
}

/// Active arm with the largest estimated value, lowest index on ties.
pub fn empirical_best(active: &[usize], theta_hat: &Vector, targets: &[Vector]) -> usize {
    let mut best = active[0];
    for &i in active {
        if targets[i].dot(theta_hat) > targets[best].dot(theta_hat) {
            best = i;
        }
    }
    best
}

/// `⌈raw⌉ ∨ r`, saturating.
pub(crate) fn sample_count(raw: f64, r: u64) -> u64 {
    let n = if raw.is_finite() {
        raw.ceil().max(0.0) as u64
    } else {
        u64::MAX
    };
    n.max(r)
}

pub(crate) fn check_budget(
    env: &dyn Environment,
    extra: u64,
    params: &AlgoParams,
    trace: &RunTrace,
) -> Result<()> {
    if env.used().saturating_add(extra) > params.max_total_samples {
        return Err(Error::CapExceeded {
            reason: format!(
                "next batch of {extra} samples would exceed the budget of {}",
                params.max_total_samples
            ),
            partial: Box::new(trace.clone()),
        });
    }
    Ok(())
}

pub(crate) fn check_phase(k: usize, params: &AlgoParams, trace: &RunTrace) -> Result<()> {
    if k > params.max_phases {
        return Err(Error::CapExceeded {
            reason: format!("phase limit {} reached", params.max_phases),
            partial: Box::new(trace.clone()),
        });
    }
    Ok(())
}

/// Attaches the partial trace when a lower-level error interrupts a run.
pub(crate) fn with_trace<T>(res: Result<T>, trace: &RunTrace) -> Result<T> {
    res.map_err(|e| match e {
        Error::CapExceeded { reason, .. } => Error::CapExceeded {
            reason,
            partial: Box::new(trace.clone()),
        },
        other => other,
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn theta_record(
    k: usize,
    zeta: f64,
    active: &[usize],
    survivors: &[usize],
    design: &Design,
    objective: f64,
    samples: u64,
    theta: &Vector,
) -> PhaseRecord {
    PhaseRecord {
        k,
        zeta,
        kind: PhaseKind::ThetaPhase,
        active_set: active.to_vec(),
        survivors: survivors.to_vec(),
        design: design.weights.clone(),
        objective,
        samples,
        estimate: Estimate::Theta(theta.iter().copied().collect()),
        doubling: Vec::new(),
    }
}

pub(crate) fn gamma_estimate(m: &Matrix) -> Estimate {
    Estimate::Gamma(matrix_to_rows(m))
}

pub(crate) fn finish(
    algorithm: &str,
    instance: &ProblemInstance,
    recommended: usize,
    trace: RunTrace,
    seed: u64,
) -> Result<TrialResult> {
    let best = instance.best_arm()?;
    Ok(TrialResult {
        algorithm: algorithm.to_string(),
        recommended,
        correct: recommended == best.index,
        total_samples: trace.total_samples,
        trace,
        seed,
    })
}
