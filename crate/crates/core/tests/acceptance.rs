//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to stderr,
//! bypassing the test harness capture, and then asserts the same condition.

use std::io::Write;
use std::time::{Duration, Instant};

use ivbandit::algorithms::{estimate_lambda_min, AlgoParams, Environment, Simulator};
use ivbandit::design::*;
use ivbandit::estimators::*;
use ivbandit::harness::*;
use ivbandit::instances::*;
use ivbandit::numerics::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {id:02} {verdict}: {name} ({detail})"
    );
    assert!(pass, "criterion {id} failed: {detail}");
}

fn within(limit_secs: u64, start: Instant) -> (bool, f64) {
    let elapsed = start.elapsed();
    (
        elapsed <= Duration::from_secs(limit_secs),
        elapsed.as_secs_f64(),
    )
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const EXP2_THETA: [f64; 4] = [0.5, 0.583, 0.67, 0.75];

#[test]
fn criterion_01_confounding_failure() {
    let start = Instant::now();
    let mut cfg = preset("motivating").unwrap();
    cfg.trials = 100;
    assert!(cfg
        .algorithms
        .iter()
        .filter(|a| a.name.is_ucb())
        .all(|a| a.horizon() == 30_000));
    let summary = summarize(&run_experiment(&cfg).unwrap());
    let (ols, iv, cpeg) = (
        summary["ucb_ols"].success_rate,
        summary["ucb_iv"].success_rate,
        summary["cpeg"].success_rate,
    );
    let (fast, secs) = within(300, start);
    let pass = ols <= 0.10 && cpeg >= 0.85 && ols < iv && iv < cpeg && fast;
    report(
        1,
        "confounding breaks UCB-OLS, CPEG succeeds, UCB-IV in between",
        pass,
        format!("ols {ols:.2}, iv {iv:.2}, cpeg {cpeg:.2}, {secs:.1}s"),
    );
}

#[test]
fn criterion_02_delta_pac() {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_toml(
        r#"
trials = 200
master_seed = 2

[[instance]]
kind = "interpolation"
theta = [0.5, 0.583, 0.67, 0.75]
eps = 1.0

[[algorithm]]
name = "cpeg"
delta = 0.1
"#,
        "delta-pac",
    )
    .unwrap();
    let table = run_experiment(&cfg).unwrap();
    let errors = table.rows.iter().filter(|r| !r.correct).count();
    let rate = errors as f64 / 200.0;
    let bound = 0.1 + 2.0 * (0.09f64 / 200.0).sqrt();
    let (fast, secs) = within(120, start);
    report(
        2,
        "CPEG error rate on the standard bandit",
        rate <= bound && fast,
        format!("{errors}/200 errors, bound {bound:.3}, {secs:.1}s"),
    );
}

#[test]
fn criterion_03_cpeug_correctness() {
    let start = Instant::now();
    let mut cfg = preset("exp1-unknown").unwrap();
    cfg.algorithms.retain(|a| a.name == AlgorithmKind::Cpeug);
    cfg.trials = 50;
    assert_eq!(cfg.log_mode, LogBarMode::Practical);
    assert_eq!(cfg.algorithms[0].delta.unwrap_or(0.1), 0.1);
    let summary = summarize(&run_experiment(&cfg).unwrap());
    let entry = &summary["cpeug"];
    let (fast, secs) = within(1200, start);
    let pass =
        entry.success_rate >= 0.9 && entry.capped.is_empty() && entry.failed.is_empty() && fast;
    report(
        3,
        "CPEUG success with unknown Γ",
        pass,
        format!(
            "success {:.2}, {} capped, {} failed, mean samples {:.3e}, {secs:.1}s",
            entry.success_rate,
            entry.capped.len(),
            entry.failed.len(),
            entry.mean_samples
        ),
    );
}

fn random_gamma(d: usize, r: &mut ChaCha8Rng) -> Matrix {
    let mut g = Matrix::from_fn(
        d,
        d,
        |i, j| if i == j { 1.0 } else { 0.3 * r.random::<f64>() },
    );
    for mut row in g.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    g
}

fn random_vectors(n: usize, d: usize, r: &mut ChaCha8Rng) -> Vec<Vector> {
    (0..n)
        .map(|_| Vector::from_fn(d, |_, _| r.random_range(-1.0..1.0)))
        .collect()
}

/// Every point of the simplex over `n` coordinates at resolution `1/steps`.
fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(
        left: usize,
        slots: usize,
        steps: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&c| c as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(left - c, slots - 1, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(steps, n, steps, &mut Vec::new(), &mut out);
    out
}

fn info_matrix(vectors: &[Vector], weights: &[f64]) -> Matrix {
    let d = vectors[0].len();
    vectors
        .iter()
        .zip(weights)
        .fold(Matrix::zeros(d, d), |acc, (v, &w)| {
            acc + v * v.transpose() * w
        })
}

fn brute_xy(dirs: &[Vector], arms: &[Vector], gamma: &Matrix, grid: &[Vec<f64>]) -> f64 {
    let meas: Vec<Vector> = arms.iter().map(|z| gamma.transpose() * z).collect();
    let mut best = f64::INFINITY;
    for w in grid {
        let a = info_matrix(&meas, w);
        if a.symmetric_eigenvalues().min() <= 1e-12 {
            continue;
        }
        let Some(inv) = a.try_inverse() else { continue };
        let worst = dirs.iter().map(|y| y.dot(&(&inv * y))).fold(0.0, f64::max);
        best = best.min(worst);
    }
    best
}

fn brute_e(arms: &[Vector], grid: &[Vec<f64>]) -> f64 {
    grid.iter()
        .map(|w| info_matrix(arms, w).symmetric_eigenvalues().min())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_04_design_solvers_match_grid() {
    let start = Instant::now();
    let mut r = rng(4);
    let opts = SolverOptions::default();
    let mut worst_xy: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    for case in 0..20 {
        let d = if case % 2 == 0 { 2 } else { 3 };
        let n_arms = if d == 3 { 3 } else { 2 + case % 4 / 2 };
        let arms = random_vectors(n_arms, d, &mut r);
        let targets = random_vectors(4, d, &mut r);
        let gamma = random_gamma(d, &mut r);
        let all: Vec<usize> = (0..targets.len()).collect();
        let dirs = pair_differences(&targets, &all);
        let grid = simplex_grid(n_arms, 100);

        let xy = xy_design(&dirs, &arms, &gamma, &opts)
            .unwrap()
            .objective_value;
        let brute = brute_xy(&dirs, &arms, &gamma, &grid);
        worst_xy = worst_xy.max((xy - brute).abs() / brute);

        let (_, kappa) = e_design(&arms, &opts).unwrap();
        let brute = brute_e(&arms, &grid);
        worst_e = worst_e.max((kappa - brute).abs() / brute);
    }
    let (fast, secs) = within(60, start);
    report(
        4,
        "XY and E solvers agree with a 0.01 simplex grid",
        worst_xy <= 0.01 && worst_e <= 0.01 && fast,
        format!("max relative gap xy {worst_xy:.2e}, e {worst_e:.2e}, {secs:.1}s"),
    );
}

#[test]
fn criterion_05_rho_star_scaling() {
    let opts = SolverOptions::default();
    let rho = |eps: f64| {
        let inst = make_interpolation(4, vector_from(&EXP2_THETA), eps, 0.4).unwrap();
        rho_star(&inst, 0.0, &opts).unwrap()
    };
    let ratios: Vec<f64> = [0.8, 0.4].iter().map(|&e| rho(e / 2.0) / rho(e)).collect();
    report(
        5,
        "hardness grows like 1/ε² on interpolation instances",
        ratios.iter().all(|q| (2.0..=8.0).contains(q)),
        format!(
            "ρ*(0.4)/ρ*(0.8) = {:.3}, ρ*(0.2)/ρ*(0.4) = {:.3}",
            ratios[0], ratios[1]
        ),
    );
}

fn random_compliance(d: usize, r: &mut ChaCha8Rng) -> ProblemInstance {
    let mut table = Matrix::from_fn(d, d, |i, j| if i == j { 2.0 } else { r.random::<f64>() });
    for mut col in table.column_iter_mut() {
        let s = col.sum();
        col /= s;
    }
    let theta = Vector::from_fn(d, |_, _| r.random_range(-1.0..1.0));
    let noise = NoiseSpec::compliance(NoiseKind::ComplianceCategorical {
        sigma_eps: 1.0,
        coupling: 0.5,
    });
    make_compliance(&table, theta, noise).unwrap()
}

#[test]
fn criterion_06_rho_star_bound() {
    let mut r = rng(6);
    let opts = SolverOptions::default();
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let d = 2 + case % 5;
        let inst = random_compliance(d, &mut r);
        let theta = inst.theta();
        let best = theta.argmax().0;
        let gap = (0..d)
            .filter(|&i| i != best)
            .map(|i| theta[best] - theta[i])
            .fold(f64::INFINITY, f64::min);
        let bound = d as f64 / (sigma_min(inst.gamma()).powi(2) * gap * gap);
        worst = worst.max(rho_star(&inst, 0.0, &opts).unwrap() / bound);
    }
    report(
        6,
        "ρ* ≤ d / (σ_min(Γ)² Δ_min²)",
        worst <= 1.0,
        format!(
            "largest ρ*/bound over 20 instances {worst:.3}; against 2d/(σ_min² Δ_min²) it is {:.3}",
            worst / 2.0
        ),
    );
}

#[test]
fn criterion_07_confidence_interval_coverage() {
    let start = Instant::now();
    let inst = make_jump_around(3, vector_from(&[0.8, -0.3, 0.4]), 0.5).unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let delta = 0.1;
    let sigma_nu_sq = sigma_nu_bound(&params.bounds, true);
    let ctx = WidthContext {
        bounds: params.bounds,
        l_z: inst.l_z(),
        mode: LogBarMode::Theoretical,
    };
    let gamma = inst.gamma().clone();
    let w = vector_from(&[1.0, -1.0, 0.0]);
    let truth = w.dot(inst.theta());
    let reps = 2000;
    let (mut oracle_hits, mut p2sls_hits) = (0, 0);
    let mut sim = Simulator::new(&inst, rng(7), params.sampling);
    for _ in 0..reps {
        let data = sim.pull(&[150, 150, 150]);
        let theta = estimate_theta_psi(&data, &gamma).unwrap();
        let width = oracle_ci_width(&w, &data.ztz, &gamma, sigma_nu_sq, delta).unwrap();
        oracle_hits += usize::from((w.dot(&theta) - truth).abs() <= width);

        let stage1 = sim.pull(&[300, 300, 300]);
        let stage2 = sim.pull(&[150, 150, 150]);
        let (theta, gamma_hat) = estimate_theta_p2sls(&stage1, &stage2).unwrap();
        let width = p2sls_ci_width(
            &w,
            (&stage1.ztz, stage1.rows),
            &stage2.ztz,
            &gamma_hat,
            delta,
            &ctx,
        )
        .unwrap();
        p2sls_hits += usize::from((w.dot(&theta) - truth).abs() <= width);
    }
    let oracle = oracle_hits as f64 / reps as f64;
    let p2sls = p2sls_hits as f64 / reps as f64;
    let (fast, secs) = within(120, start);
    report(
        7,
        "oracle and P-2SLS intervals cover wᵀθ",
        oracle >= 1.0 - delta && p2sls >= 1.0 - delta && fast,
        format!("oracle {oracle:.4}, p2sls {p2sls:.4} over {reps} replications, {secs:.1}s"),
    );
}

#[test]
fn criterion_08_rounding_guarantee() {
    let mut r = rng(8);
    let omega = 1.0;
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for case in 0..50 {
        let d = 2 + case % 4;
        let arms: Vec<Vector> = (0..d).map(|i| basis(d, i)).collect();
        let targets = random_vectors(4, d, &mut r);
        let gamma = random_gamma(d, &mut r);
        let raw: Vec<f64> = (0..d).map(|_| r.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let design =
            Design::from_weights(raw.iter().map(|x| x / total).collect(), f64::NAN).unwrap();
        let rr = r_min(&design, omega);
        let counts = round_design(
            &design,
            10 * rr,
            &RoundingParams {
                omega,
                r_of_omega: rr,
            },
        )
        .unwrap();
        let n = counts.iter().sum::<u64>() as f64;
        let xi: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
        let all: Vec<usize> = (0..targets.len()).collect();
        for y in pair_differences(&targets, &all) {
            let dirs = [y];
            let cont = xy_objective(&dirs, &arms, &gamma, &design.weights).unwrap();
            let disc = xy_objective(&dirs, &arms, &gamma, &xi).unwrap();
            worst = worst.max(disc / cont);
            pairs += 1;
        }
    }
    report(
        8,
        "rounded designs lose at most a factor 1+ω",
        worst <= 1.0 + omega,
        format!("largest ratio {worst:.4} over {pairs} pairs"),
    );
}

#[test]
fn criterion_09_warm_up_bounds() {
    let start = Instant::now();
    let inst = make_jump_around(3, vector_from(&[0.8, -0.3, 0.4]), 0.5).unwrap();
    let params = AlgoParams::for_instance(&inst, 0.1).unwrap();
    let truth = sigma_min(inst.gamma());
    let trials = 200;
    let mut inside = 0;
    for seed in 0..trials {
        let est = estimate_lambda_min(&inst, &params, rng(9_000 + seed)).unwrap();
        inside += usize::from(est.lcb > truth / 2.0 && est.lcb <= truth);
    }
    let rate = inside as f64 / trials as f64;
    let (_, secs) = within(u64::MAX, start);
    report(
        9,
        "warm-up lower bound lands in (σ_min/2, σ_min]",
        rate >= 0.85,
        format!("{inside}/{trials} inside, σ_min {truth:.4}, {secs:.1}s"),
    );
}

#[test]
fn criterion_10_sherman_morrison() {
    let mut worst: f64 = 0.0;
    for eps in [0.1, 0.5, 0.9] {
        for d in [2, 4, 8] {
            let inv = inverse_general(&interpolation_gamma(d, eps)).unwrap();
            let closed =
                (Matrix::identity(d, d) - Matrix::from_element(d, d, (1.0 - eps) / d as f64)) / eps;
            worst = worst.max((inv - closed).amax());
        }
    }
    report(
        10,
        "interpolation Γ⁻¹ matches its closed form",
        worst <= 1e-8,
        format!("largest entry error {worst:.2e}"),
    );
}

#[test]
fn criterion_11_comparative_ordering() {
    let mut cfg = preset("exp1-known").unwrap();
    cfg.trials = 50;
    let summary = summarize(&run_experiment(&cfg).unwrap());
    let mean = |k: &str| summary[k].mean_samples;
    let (cpeg, uniform, oracle) = (mean("cpeg"), mean("static_uniform"), mean("static_oracle"));
    let ratio = cpeg / oracle;
    let pass = cpeg <= uniform && (0.5..=2.0).contains(&ratio);
    report(
        11,
        "CPEG beats uniform allocation and tracks the oracle design",
        pass,
        format!(
            "cpeg {cpeg:.3e}, uniform {uniform:.3e}, oracle {oracle:.3e}, cpeg/oracle {ratio:.2}"
        ),
    );
}

#[test]
fn criterion_12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut rows = 0;
    for name in ["exp2", "motivating"] {
        let mut cfg = preset(name).unwrap();
        cfg.trials = 6;
        let mut bytes = Vec::new();
        for workers in [1, 4] {
            cfg.workers = Some(workers);
            let out = dir.path().join(format!("{name}-{workers}"));
            let table = run_experiment(&cfg).unwrap();
            rows += table.rows.len();
            write_outputs(&table, &out, false).unwrap();
            bytes.push(std::fs::read(out.join("results.csv")).unwrap());
        }
        identical &= bytes[0] == bytes[1];
    }
    report(
        12,
        "results.csv is byte-identical across worker counts",
        identical,
        format!("{rows} rows compared across two presets"),
    );
}
