use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use ivbandit::algorithms::{estimate_lambda_min, AlgoParams};
use ivbandit::design::{e_design, pair_differences, rho_star, xy_design, SolverOptions};
use ivbandit::harness::{
    emit_plots, load_config, run_experiment, summarize, write_outputs, ExperimentConfig, PlotKind,
    PRESET_NAMES,
};
use ivbandit::instances::ProblemInstance;
use ivbandit::numerics::sigma_min;
use ivbandit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ivbandit",
    version,
    about = "Confounded pure-exploration bandit laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Selection {
    /// Preset name or config file.
    #[arg(long)]
    preset: PathBuf,
    /// Pick the interpolation instance with this ε.
    #[arg(long)]
    eps: Option<f64>,
    /// Pick an instance by id.
    #[arg(long)]
    instance: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Xy,
    E,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment and write its outputs.
    Run {
        /// Config file or preset name.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Write one JSONL trace per trial.
        #[arg(long)]
        traces: bool,
        /// Skip the SVG figures.
        #[arg(long)]
        no_svg: bool,
        /// Record wall-clock time per trial.
        #[arg(long)]
        timing: bool,
    },
    /// Print an optimal design as JSON.
    Design {
        #[command(flatten)]
        sel: Selection,
        #[arg(long, value_enum)]
        what: What,
    },
    /// Print the hardness ρ*(γ) of an instance.
    RhoStar {
        #[command(flatten)]
        sel: Selection,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
    },
    /// Estimate a lower confidence bound on σ_min(Γ) by simulation.
    LambdaMin {
        #[command(flatten)]
        sel: Selection,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

fn select(sel: &Selection) -> Result<ProblemInstance> {
    let cfg = load_config(&sel.preset)?;
    let ids = cfg.instance_ids();
    let index = match (&sel.instance, sel.eps) {
        (Some(id), _) => ids.iter().position(|i| i == id),
        (None, Some(eps)) => cfg
            .instances
            .iter()
            .position(|s| s.eps().is_some_and(|e| (e - eps).abs() < 1e-12)),
        (None, None) => Some(0),
    }
    .ok_or_else(|| Error::Validation(format!("no matching instance among {ids:?}")))?;
    cfg.instances[index].build()
}

fn run(mut cfg: ExperimentConfig, out: Option<PathBuf>, traces: bool, no_svg: bool) -> Result<()> {
    if let Some(out) = out {
        cfg.outputs = out;
    }
    cfg.emit_traces |= traces;
    cfg.emit_svg &= !no_svg;
    let table = run_experiment(&cfg)?;
    let mut files = write_outputs(&table, &cfg.outputs, cfg.emit_traces)?;
    if cfg.emit_svg {
        for kind in [PlotKind::SamplesBar, PlotKind::SuccessVsHorizon] {
            match emit_plots(&table, &cfg.outputs, kind) {
                Ok(p) => files.push(p),
                Err(Error::EmptySelection(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    for (key, e) in summarize(&table) {
        println!(
            "{key}: success {:.3} over {} trials, samples {:.4e} ± {:.2e}{}",
            e.success_rate,
            e.n,
            e.mean_samples,
            e.std_samples,
            if e.capped.is_empty() {
                String::new()
            } else {
                format!(", {} capped", e.capped.len())
            }
        );
    }
    let written = files
        .iter()
        .filter(|p| p.extension().is_some_and(|x| x != "jsonl"))
        .count();
    println!("wrote {} files to {}", written, cfg.outputs.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            trials,
            seed,
            out,
            workers,
            traces,
            no_svg,
            timing,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            cfg.timing |= timing;
            run(cfg, out, traces, no_svg)
        }
        Command::Design { sel, what } => {
            let inst = select(&sel)?;
            let opts = SolverOptions::default();
            let design = match what {
                What::Xy => {
                    let all: Vec<usize> = (0..inst.targets().len()).collect();
                    xy_design(
                        &pair_differences(inst.targets(), &all),
                        inst.arms(),
                        inst.gamma(),
                        &opts,
                    )?
                }
                What::E => e_design(inst.arms(), &opts)?.0,
            };
            let out = json!({
                "weights": design.weights,
                "objective": design.objective_value,
                "support": design.support_size,
            });
            println!("{out}");
            Ok(())
        }
        Command::RhoStar { sel, gamma } => {
            if !(gamma >= 0.0) {
                return Err(Error::Validation(format!(
                    "gamma must be nonnegative, got {gamma}"
                )));
            }
            let inst = select(&sel)?;
            println!("{}", rho_star(&inst, gamma, &SolverOptions::default())?);
            Ok(())
        }
        Command::LambdaMin { sel, seed, delta } => {
            let inst = select(&sel)?;
            let params = AlgoParams::for_instance(&inst, delta)?;
            params.validate()?;
            let est = estimate_lambda_min(&inst, &params, ChaCha8Rng::seed_from_u64(seed))?;
            let out = json!({
                "lcb": est.lcb,
                "ucb": est.ucb,
                "sigma_min": sigma_min(inst.gamma()),
                "samples": est.samples,
                "rounds": est.rounds,
            });
            println!("{out}");
            Ok(())
        }
        Command::Presets {
            action: PresetAction::List,
        } => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
