use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgoParams;
use crate::design::SolverOptions;
use crate::error::{Error, Result};
use crate::estimators::{LogBarMode, NoiseBounds};
use crate::instances::{
    make_compliance, make_interpolation, make_jump_around, NoiseKind, NoiseSpec, ProblemInstance,
    SamplingMode, COMPLIANCE_SIGMA_ETA_SQ, INTERPOLATION_NOISE_SCALE,
};
use crate::numerics::{matrix_from_rows, vector_from, Vector};

use super::presets;

pub const DEFAULT_HORIZON: u64 = 30_000;
pub const DEFAULT_OFFLINE_ROUNDS: u64 = 100_000;
pub const DEFAULT_CURVE_POINTS: usize = 50;

fn default_noise_scale() -> f64 {
    INTERPOLATION_NOISE_SCALE
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

fn default_trials() -> usize {
    1
}

fn default_curve_points() -> usize {
    DEFAULT_CURVE_POINTS
}

fn default_true() -> bool {
    true
}

/// An instance description as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Location model on `d` ordered levels.
    JumpAround {
        id: Option<String>,
        theta: Vec<f64>,
        sigma_u_sq: f64,
    },
    /// `Γ = (1−ε)/d·11ᵀ + εI` with unit-direction outcome noise.
    Interpolation {
        id: Option<String>,
        theta: Vec<f64>,
        eps: f64,
        #[serde(default = "default_noise_scale")]
        noise_scale: f64,
    },
    /// Compliance instance from a column-stochastic table, `table[i][j] = P(x = e_i | z = e_j)`.
    Compliance {
        id: Option<String>,
        table: Vec<Vec<f64>>,
        theta: Vec<f64>,
        noise: NoiseKind,
        sigma_eta_sq: Option<f64>,
        l_eta: Option<f64>,
    },
    General {
        id: Option<String>,
        arms: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        /// Row-stochastic convention: `E[x | z] = Γᵀz`.
        gamma: Vec<Vec<f64>>,
        theta: Vec<f64>,
        noise: NoiseSpec,
        l_z: Option<f64>,
    },
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl InstanceSpec {
    fn explicit_id(&self) -> Option<&str> {
        match self {
            InstanceSpec::JumpAround { id, .. }
            | InstanceSpec::Interpolation { id, .. }
            | InstanceSpec::Compliance { id, .. }
            | InstanceSpec::General { id, .. } => id.as_deref(),
        }
    }

    pub fn id(&self, index: usize) -> String {
        if let Some(id) = self.explicit_id() {
            return id.to_string();
        }
        match self {
            InstanceSpec::JumpAround { theta, .. } => format!("jump_around-d{}", theta.len()),
            InstanceSpec::Interpolation { theta, eps, .. } => {
                format!("interpolation-d{}-eps{}", theta.len(), fmt_num(*eps))
            }
            InstanceSpec::Compliance { .. } => format!("compliance-{index}"),
            InstanceSpec::General { .. } => format!("general-{index}"),
        }
    }

    /// Interpolation parameter, if this is an interpolation instance.
    pub fn eps(&self) -> Option<f64> {
        match self {
            InstanceSpec::Interpolation { eps, .. } => Some(*eps),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        match self {
            InstanceSpec::JumpAround {
                theta, sigma_u_sq, ..
            } => {
                if !(*sigma_u_sq > 0.0) {
                    return Err(Error::Validation(format!(
                        "sigma_u_sq must be positive, got {sigma_u_sq}"
                    )));
                }
                make_jump_around(theta.len(), vector_from(theta), sigma_u_sq.sqrt())
            }
            InstanceSpec::Interpolation {
                theta,
                eps,
                noise_scale,
                ..
            } => make_interpolation(theta.len(), vector_from(theta), *eps, *noise_scale),
            InstanceSpec::Compliance {
                table,
                theta,
                noise,
                sigma_eta_sq,
                l_eta,
                ..
            } => {
                let sigma = sigma_eta_sq.unwrap_or(COMPLIANCE_SIGMA_ETA_SQ);
                let spec = NoiseSpec {
                    kind: *noise,
                    sigma_eta_sq: sigma,
                    l_eta: l_eta.unwrap_or(sigma),
                };
                make_compliance(&matrix_from_rows(table)?, vector_from(theta), spec)
            }
            InstanceSpec::General {
                arms,
                targets,
                gamma,
                theta,
                noise,
                l_z,
                ..
            } => {
                let to_vecs = |rows: &[Vec<f64>]| {
                    rows.iter().map(|r| vector_from(r)).collect::<Vec<Vector>>()
                };
                ProblemInstance::new(
                    to_vecs(arms),
                    to_vecs(targets),
                    matrix_from_rows(gamma)?,
                    vector_from(theta),
                    *noise,
                    *l_z,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[default]
    Cpeg,
    Cpeug,
    CpegPlugin,
    StaticOracle,
    StaticXy,
    StaticUniform,
    Se,
    UcbOls,
    UcbIv,
}

impl AlgorithmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Cpeg => "cpeg",
            AlgorithmKind::Cpeug => "cpeug",
            AlgorithmKind::CpegPlugin => "cpeg_plugin",
            AlgorithmKind::StaticOracle => "static_oracle",
            AlgorithmKind::StaticXy => "static_xy",
            AlgorithmKind::StaticUniform => "static_uniform",
            AlgorithmKind::Se => "se",
            AlgorithmKind::UcbOls => "ucb_ols",
            AlgorithmKind::UcbIv => "ucb_iv",
        }
    }

    /// Fixed-budget baselines that report a recommendation after every round.
    pub fn is_ucb(self) -> bool {
        matches!(self, AlgorithmKind::UcbOls | AlgorithmKind::UcbIv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OfflineDesign {
    #[default]
    Uniform,
    E,
}

/// One algorithm entry; unset fields fall back to values derived from the instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: AlgorithmKind,
    /// Name used in the output files; defaults to `name`.
    pub label: Option<String>,
    pub delta: Option<f64>,
    pub omega: Option<f64>,
    pub g: Option<f64>,
    pub gamma_min: Option<f64>,
    pub log_mode: Option<LogBarMode>,
    pub l_nu: Option<f64>,
    pub l_eta: Option<f64>,
    pub theta_norm_bound: Option<f64>,
    pub max_phases: Option<usize>,
    pub max_total_samples: Option<u64>,
    pub sampling: Option<SamplingMode>,
    pub solver: Option<SolverOptions>,
    /// Rounds per trial for the UCB baselines.
    pub horizon: Option<u64>,
    /// First-stage rows collected offline for the plug-in algorithm.
    pub offline_rounds: Option<u64>,
    pub offline_design: Option<OfflineDesign>,
}

pub const DEFAULT_DELTA: f64 = 0.1;

impl AlgorithmSpec {
    pub fn new(name: AlgorithmKind) -> Self {
        Self {
            name,
            ..Default::default()
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.name.as_str().to_string())
    }

    pub fn horizon(&self) -> u64 {
        self.horizon.unwrap_or(DEFAULT_HORIZON)
    }

    pub fn offline_rounds(&self) -> u64 {
        self.offline_rounds.unwrap_or(DEFAULT_OFFLINE_ROUNDS)
    }

    /// Parameters for running on `instance`, with the experiment-wide log mode as fallback.
    pub fn params(&self, instance: &ProblemInstance, log_mode: LogBarMode) -> Result<AlgoParams> {
        let mut p = AlgoParams::for_instance(instance, self.delta.unwrap_or(DEFAULT_DELTA))?;
        if self.l_nu.is_some() || self.l_eta.is_some() || self.theta_norm_bound.is_some() {
            let l_eta = self.l_eta.unwrap_or(p.bounds.l_eta);
            let b = self.theta_norm_bound.unwrap_or(p.bounds.theta_norm_bound);
            p.bounds = match self.l_nu {
                Some(l_nu) if self.theta_norm_bound.is_none() => {
                    NoiseBounds::from_nu_eta(l_nu, l_eta)?
                }
                Some(l_nu) => NoiseBounds::new(l_nu, l_eta, b)?,
                None => NoiseBounds::for_theta(l_eta, b)?,
            };
        }
        if let Some(v) = self.omega {
            p.omega = v;
        }
        if let Some(v) = self.g {
            p.g = v;
        }
        p.gamma_min = self.gamma_min;
        p.log_mode = self.log_mode.unwrap_or(log_mode);
        if let Some(v) = self.max_phases {
            p.max_phases = v;
        }
        if let Some(v) = self.max_total_samples {
            p.max_total_samples = v;
        }
        if let Some(v) = self.sampling {
            p.sampling = v;
        }
        if let Some(v) = self.solver {
            p.solver = v;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub log_mode: LogBarMode,
    #[serde(default = "default_true")]
    pub emit_svg: bool,
    #[serde(default)]
    pub emit_traces: bool,
    /// Record wall-clock time per trial; off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
    /// Checkpoints on the success-versus-horizon curve of the UCB baselines.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    #[serde(rename = "instance")]
    pub instances: Vec<InstanceSpec>,
    #[serde(rename = "algorithm")]
    pub algorithms: Vec<AlgorithmSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn instance_ids(&self) -> Vec<String> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, s)| s.id(i))
            .collect()
    }

    /// Builds every instance, failing on the first invalid one.
    pub fn build_instances(&self) -> Result<Vec<(String, ProblemInstance)>> {
        self.instances
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let id = s.id(i);
                s.build()
                    .map(|inst| (id.clone(), inst))
                    .map_err(|e| Error::Validation(format!("instance {id}: {e}")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        if self.instances.is_empty() {
            return Err(Error::Validation(
                "at least one [[instance]] is required".into(),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Validation(
                "at least one [[algorithm]] is required".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::Validation("workers must be positive".into()));
        }
        if self.curve_points == 0 {
            return Err(Error::Validation("curve_points must be positive".into()));
        }
        let ids = self.instance_ids();
        if ids.iter().collect::<HashSet<_>>().len() != ids.len() {
            return Err(Error::Validation(format!(
                "duplicate instance ids in {ids:?}"
            )));
        }
        let labels: Vec<String> = self.algorithms.iter().map(|a| a.label()).collect();
        if labels.iter().collect::<HashSet<_>>().len() != labels.len() {
            return Err(Error::Validation(format!(
                "duplicate algorithm labels in {labels:?}"
            )));
        }
        for (id, inst) in self.build_instances()? {
            inst.best_arm()
                .map_err(|e| Error::Validation(format!("instance {id}: {e}")))?;
            for algo in &self.algorithms {
                let ctx = |e: Error| Error::Validation(format!("{} on {id}: {e}", algo.label()));
                algo.params(&inst, self.log_mode).map_err(ctx)?;
                if algo.name.is_ucb() {
                    if !inst.is_compliance() {
                        return Err(ctx(Error::BadParam(
                            "UCB baselines need a compliance instance".into(),
                        )));
                    }
                    if algo.horizon() == 0 {
                        return Err(ctx(Error::BadParam("horizon must be positive".into())));
                    }
                }
                if algo.name == AlgorithmKind::Se
                    && (inst.arms().len() != inst.targets().len()
                        || inst.arms().iter().zip(inst.targets()).any(|(z, w)| z != w))
                {
                    return Err(ctx(Error::BadParam("SE needs Z = W".into())));
                }
                if algo.name == AlgorithmKind::CpegPlugin && algo.offline_rounds() == 0 {
                    return Err(ctx(Error::BadParam(
                        "offline_rounds must be positive".into(),
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Loads a config file, or a built-in preset when `path` names one
/// (`motivating`, `presets/motivating` and `presets/motivating.toml` all work).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return ExperimentConfig::from_toml(&text, &path.display().to_string());
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default();
    match presets::preset_source(stem) {
        Some(text) => ExperimentConfig::from_toml(text, &format!("preset {stem}")),
        None => Err(Error::Validation(format!(
            "{} is neither a file nor a preset (known: {})",
            path.display(),
            presets::PRESET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
trials = 3
master_seed = 7

[[instance]]
kind = "interpolation"
theta = [0.5, 0.583, 0.67, 0.75]
eps = 0.9

[[algorithm]]
name = "cpeg"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, "test").unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.outputs, PathBuf::from("out"));
        assert_eq!(
            cfg.instance_ids(),
            vec!["interpolation-d4-eps0.9".to_string()]
        );
        let inst = &cfg.build_instances().unwrap()[0].1;
        let p = cfg.algorithms[0].params(inst, cfg.log_mode).unwrap();
        assert_eq!(p.delta, DEFAULT_DELTA);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("master_seed = 7", "master_sed = 7");
        let err = ExperimentConfig::from_toml(&bad, "test").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("master_sed"));

        let bad = MINIMAL.replace("eps = 0.9", "eps = 0.9\nepsilon = 1");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad, "t"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let bad = MINIMAL.replace("trials = 3", "trials = \"three\"");
        let msg = ExperimentConfig::from_toml(&bad, "test")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn validation_errors() {
        let zero = MINIMAL.replace("trials = 3", "trials = 0");
        assert!(matches!(
            ExperimentConfig::from_toml(&zero, "t"),
            Err(Error::Validation(_))
        ));

        let tie = MINIMAL.replace("[0.5, 0.583, 0.67, 0.75]", "[0.75, 0.583, 0.67, 0.75]");
        assert!(ExperimentConfig::from_toml(&tie, "t")
            .unwrap_err()
            .is_validation());

        let eps = MINIMAL.replace("eps = 0.9", "eps = 1.5");
        assert!(ExperimentConfig::from_toml(&eps, "t")
            .unwrap_err()
            .is_validation());

        let delta = format!("{MINIMAL}delta = 1.5\n");
        assert!(ExperimentConfig::from_toml(&delta, "t")
            .unwrap_err()
            .is_validation());

        let general = r#"
[[instance]]
kind = "general"
arms = [[1.0, 0.0], [0.0, 1.0]]
targets = [[1.0, 0.0], [0.0, 1.0]]
gamma = [[1.0, 0.0], [0.0, 1.0]]
theta = [1.0, 0.0]
noise = { kind = { kind = "gaussian_exogenous", sigma_eps = 1.0, rho = 0.5 }, sigma_eta_sq = 1.0, l_eta = 1.0 }

[[algorithm]]
name = "ucb_iv"
"#;
        let err = ExperimentConfig::from_toml(general, "t").unwrap_err();
        assert!(
            err.is_validation() && err.to_string().contains("compliance"),
            "{err}"
        );
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL, "test").unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap(), "again").unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn overrides_reach_the_parameters() {
        let text = format!("{MINIMAL}delta = 0.05\ng = 8.0\nlog_mode = \"theoretical\"\nl_nu = 10.0\nl_eta = 4.0\n");
        let cfg = ExperimentConfig::from_toml(&text, "t").unwrap();
        let inst = &cfg.build_instances().unwrap()[0].1;
        let p = cfg.algorithms[0].params(inst, cfg.log_mode).unwrap();
        assert_eq!(
            (p.delta, p.g, p.log_mode),
            (0.05, 8.0, LogBarMode::Theoretical)
        );
        assert_eq!(p.bounds.l_nu, 10.0);
        assert!((p.bounds.theta_norm_bound - 1.0).abs() < 1e-12);
    }
}
