//! Allocation designs over the instrument set: the minimax XY design, the E-optimal
//! design, integer rounding, and the hardness quantity ρ*(γ).
//!
//! Both solvers are Frank–Wolfe with step `2/(t+2)` started from the uniform design.
//! The best iterate is kept and a duality gap is tracked, so the solver stops as soon as
//! its objective is certified to be within `rel_tol` of the optimum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::ProblemInstance;
use crate::numerics::{
    extreme_singular_values, symmetric_eigen, symmetrize, Matrix, PsdFactor, Vector,
};

/// Jitter added once when the uniform design does not give an invertible matrix.
pub const INIT_JITTER: f64 = 1e-10;

/// Eigenvalues this close to the smallest one share the E-design supergradient.
pub const EIGEN_MULTIPLICITY_TOL: f64 = 1e-8;

/// Softmax temperature, relative to the current objective, for the XY search direction.
const SMOOTHING: f64 = 1e-3;
const DUAL_EVERY: usize = 50;
const DUAL_STEPS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub weights: Vec<f64>,
    pub objective_value: f64,
    pub support_size: usize,
}

impl Design {
    /// A design with the given weights; `objective_value` is left for the caller.
    pub fn from_weights(weights: Vec<f64>, objective_value: f64) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::BadParam("design weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadParam(format!("design weights sum to {total}")));
        }
        let support_size = weights.iter().filter(|&&w| w > 0.0).count();
        Ok(Self {
            weights,
            objective_value,
            support_size,
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
            objective_value: f64::NAN,
            support_size: n,
        }
    }

    /// Uniform over `indices` out of `n` arms.
    pub fn uniform_on(n: usize, indices: &[usize]) -> Self {
        let mut weights = vec![0.0; n];
        for &i in indices {
            weights[i] = 1.0 / indices.len() as f64;
        }
        Self {
            weights,
            objective_value: f64::NAN,
            support_size: indices.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub clip: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            rel_tol: 1e-6,
            clip: 1e-5,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.rel_tol > 0.0) || !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::BadParam(format!("invalid solver options {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingParams {
    pub omega: f64,
    pub r_of_omega: u64,
}

impl RoundingParams {
    pub fn for_design(design: &Design, omega: f64) -> Self {
        Self {
            omega,
            r_of_omega: r_min(design, omega),
        }
    }
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    /// Objective of the best iterate after each step (nonincreasing for XY, nondecreasing
    /// for E).
    pub best_objective: Vec<f64>,
    /// Certified bound on the optimum at termination (lower for XY, upper for E).
    pub bound: f64,
    pub iterations: usize,
}

/// `Γᵀz` for every instrument.
pub fn measurement_vectors(arms: &[Vector], gamma: &Matrix) -> Vec<Vector> {
    let gt = gamma.transpose();
    arms.iter().map(|z| &gt * z).collect()
}

fn information(meas: &[Vector], weights: &[f64]) -> Matrix {
    let d = meas[0].len();
    let mut a = Matrix::zeros(d, d);
    for (v, &w) in meas.iter().zip(weights) {
        if w > 0.0 {
            a += v * v.transpose() * w;
        }
    }
    symmetrize(&a)
}

fn add_jitter(a: &mut Matrix, jitter: f64) {
    for i in 0..a.nrows() {
        a[(i, i)] += jitter;
    }
}

/// `max_y ‖y‖²_{A(λ,Γ)⁻¹}` for a fixed design.
pub fn xy_objective(
    dirs: &[Vector],
    arms: &[Vector],
    gamma: &Matrix,
    weights: &[f64],
) -> Result<f64> {
    let meas = measurement_vectors(arms, gamma);
    let f = PsdFactor::new(&information(&meas, weights))
        .map_err(|_| Error::SingularDesign("design information matrix is not invertible".into()))?;
    let (smin, _) = extreme_singular_values(&information(&meas, weights));
    if smin <= 1e-14 {
        return Err(Error::SingularDesign(
            "design information matrix is singular".into(),
        ));
    }
    let mut best: f64 = 0.0;
    for y in dirs {
        best = best.max(f.inv_quad(y)?);
    }
    Ok(best)
}

/// Unordered differences `w_i − w_j`, `i < j`, over the given index set.
pub fn pair_differences(targets: &[Vector], active: &[usize]) -> Vec<Vector> {
    let mut out = Vec::new();
    for (a, &i) in active.iter().enumerate() {
        for &j in &active[a + 1..] {
            out.push(&targets[i] - &targets[j]);
        }
    }
    out
}

fn validate_inputs(
    dirs: &[Vector],
    arms: &[Vector],
    gamma: &Matrix,
    opts: &SolverOptions,
) -> Result<usize> {
    opts.validate()?;
    if dirs.is_empty() {
        return Err(Error::BadParam(
            "design needs at least one direction".into(),
        ));
    }
    if arms.is_empty() {
        return Err(Error::BadParam("design needs at least one arm".into()));
    }
    let d = gamma.nrows();
    if gamma.ncols() != d || arms.iter().chain(dirs).any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch(
            "design inputs disagree on dimension".into(),
        ));
    }
    Ok(d)
}

fn clip_weights(weights: &[f64], clip: f64) -> Vec<f64> {
    let mut w: Vec<f64> = weights
        .iter()
        .map(|&x| if x <= clip { 0.0 } else { x })
        .collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

/// Minimax design `argmin_λ max_y ‖y‖²_{A(λ,Γ)⁻¹}` with `A(λ,Γ) = Σ λ_z Γᵀzzᵀ Γ`.
pub fn xy_design(
    dirs: &[Vector],
    arms: &[Vector],
    gamma: &Matrix,
    opts: &SolverOptions,
) -> Result<Design> {
    xy_design_traced(dirs, arms, gamma, opts).map(|(d, _)| d)
}

pub fn xy_design_traced(
    dirs: &[Vector],
    arms: &[Vector],
    gamma: &Matrix,
    opts: &SolverOptions,
) -> Result<(Design, SolveTrace)> {
    let d = validate_inputs(dirs, arms, gamma, opts)?;
    let meas = measurement_vectors(arms, gamma);
    let n = arms.len();
    let mut weights = vec![1.0 / n as f64; n];

    let a0 = information(&meas, &weights);
    let (smin, smax) = extreme_singular_values(&a0);
    let jitter = if smin <= INIT_JITTER * smax.max(1.0) {
        // Rank-deficient: every direction must still lie in the range of A.
        let (vals, vecs) = symmetric_eigen(&a0);
        for y in dirs {
            let mut outside = 0.0;
            for (k, &ev) in vals.iter().enumerate() {
                if ev <= INIT_JITTER * smax.max(1.0) {
                    outside += vecs.column(k).dot(y).powi(2);
                }
            }
            if outside.sqrt() > 1e-8 * y.norm().max(1.0) {
                return Err(Error::DegenerateSpan(
                    "a direction is not spanned by the measurement vectors".into(),
                ));
            }
        }
        INIT_JITTER
    } else {
        0.0
    };

    let mut trace = SolveTrace::default();
    let mut best_weights = weights.clone();
    let mut best_value = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut solved = vec![Vector::zeros(d); dirs.len()];
    let mut values = vec![0.0; dirs.len()];
    let mut corr = Matrix::zeros(dirs.len(), n);

    for t in 1..=opts.max_iters {
        let mut a = information(&meas, &weights);
        add_jitter(&mut a, jitter);
        let f = PsdFactor::new(&a)
            .map_err(|_| Error::DegenerateSpan("information matrix lost rank".into()))?;
        let mut top = 0;
        for (k, y) in dirs.iter().enumerate() {
            solved[k] = f.solve(y)?;
            values[k] = y.dot(&solved[k]);
            if values[k] > values[top] {
                top = k;
            }
        }
        let value = values[top];
        if value < best_value {
            best_value = value;
            best_weights.clone_from(&weights);
        }

        for (k, u) in solved.iter().enumerate() {
            for (z, v) in meas.iter().enumerate() {
                corr[(k, z)] = u.dot(v).powi(2);
            }
        }
        // Any mixture of the directions linearises to a valid lower bound.
        lower = lower.max(2.0 * value - corr.row(top).max());
        if t % DUAL_EVERY == 0 || t == opts.max_iters {
            lower = lower.max(dual_lower_bound(&values, &corr));
        }

        trace.best_objective.push(best_value);
        trace.iterations = t;
        if best_value - lower <= opts.rel_tol * best_value {
            break;
        }

        let scale = SMOOTHING * value.max(f64::MIN_POSITIVE);
        let p: Vec<f64> = values
            .iter()
            .map(|&v| ((v - value) / scale).exp())
            .collect();
        let dir: Vec<f64> = (0..n)
            .map(|z| p.iter().enumerate().map(|(k, pk)| pk * corr[(k, z)]).sum())
            .collect();
        let zstar = argmax(&dir);
        let step = 2.0 / (t as f64 + 2.0);
        for (z, w) in weights.iter_mut().enumerate() {
            *w *= 1.0 - step;
            if z == zstar {
                *w += step;
            }
        }
    }
    lower = lower.max(dual_lower_bound(&values, &corr));
    trace.bound = lower;

    let clipped = clip_weights(&best_weights, opts.clip);
    let design = match xy_objective(dirs, arms, gamma, &clipped) {
        Ok(v) if jitter == 0.0 => Design::from_weights(clipped, v)?,
        _ => Design::from_weights(best_weights, best_value)?,
    };
    Ok((design, trace))
}

/// Best lower bound `2Σ p_y f_y − max_z Σ p_y (yᵀA⁻¹a_z)²` over mixtures `p`, found by
/// exponentiated-gradient ascent. Every `p` gives a valid bound, so early stopping only
/// loosens it.
fn dual_lower_bound(values: &[f64], corr: &Matrix) -> f64 {
    let m = values.len();
    let top = values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut logp = vec![0.0; m];
    let mut best = f64::NEG_INFINITY;
    let mut p = vec![1.0 / m as f64; m];
    for it in 0..DUAL_STEPS {
        let shift = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logp.iter().map(|l| (l - shift).exp()).sum();
        for (pk, l) in p.iter_mut().zip(&logp) {
            *pk = (l - shift).exp() / total;
        }
        let mix: Vec<f64> = (0..corr.ncols())
            .map(|z| p.iter().enumerate().map(|(k, pk)| pk * corr[(k, z)]).sum())
            .collect();
        let zstar = argmax(&mix);
        let mean: f64 = p.iter().zip(values).map(|(a, b)| a * b).sum();
        best = best.max(2.0 * mean - mix[zstar]);
        let eta = 2.0 / ((it + 1) as f64).sqrt();
        for (k, l) in logp.iter_mut().enumerate() {
            *l += eta * (2.0 * values[k] - corr[(k, zstar)]) / top;
        }
    }
    best
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// E-optimal design `argmax_λ σ_min(Σ λ_z zzᵀ)`; also returns `κ₀`, the optimal value.
pub fn e_design(arms: &[Vector], opts: &SolverOptions) -> Result<(Design, f64)> {
    e_design_traced(arms, opts).map(|(d, k, _)| (d, k))
}

pub fn e_design_traced(arms: &[Vector], opts: &SolverOptions) -> Result<(Design, f64, SolveTrace)> {
    opts.validate()?;
    if arms.is_empty() {
        return Err(Error::BadParam("design needs at least one arm".into()));
    }
    let d = arms[0].len();
    if arms.iter().any(|z| z.len() != d) {
        return Err(Error::DimensionMismatch(
            "arms disagree on dimension".into(),
        ));
    }
    let n = arms.len();
    let mut weights = vec![1.0 / n as f64; n];
    let v0 = information(arms, &weights);
    let (smin, smax) = extreme_singular_values(&v0);
    if smin <= INIT_JITTER * smax.max(1.0) {
        return Err(Error::DegenerateSpan(
            "instruments do not span the space".into(),
        ));
    }

    let mut trace = SolveTrace::default();
    let mut best_weights = weights.clone();
    let mut best_value = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut grad = vec![0.0; n];

    for t in 1..=opts.max_iters {
        let v = information(arms, &weights);
        let (vals, vecs) = symmetric_eigen(&v);
        let value = vals[0];
        if value > best_value {
            best_value = value;
            best_weights.clone_from(&weights);
        }
        let tol = EIGEN_MULTIPLICITY_TOL * vals[vals.len() - 1].abs().max(1.0);
        let bottom: Vec<usize> = (0..vals.len())
            .filter(|&k| vals[k] - value <= tol)
            .collect();
        for (z, g) in grad.iter_mut().enumerate() {
            *g = bottom
                .iter()
                .map(|&k| vecs.column(k).dot(&arms[z]).powi(2))
                .sum::<f64>()
                / bottom.len() as f64;
        }
        upper = upper.min(grad.iter().cloned().fold(0.0, f64::max));

        trace.best_objective.push(best_value);
        trace.iterations = t;
        if upper - best_value <= opts.rel_tol * best_value {
            break;
        }

        let zstar = argmax(&grad);
        let step = 2.0 / (t as f64 + 2.0);
        for (z, w) in weights.iter_mut().enumerate() {
            *w *= 1.0 - step;
            if z == zstar {
                *w += step;
            }
        }
    }
    trace.bound = upper;

    let clipped = clip_weights(&best_weights, opts.clip);
    let clipped_value = symmetric_eigen(&information(arms, &clipped)).0[0];
    let (weights, value) = if clipped_value > 0.0 {
        (clipped, clipped_value)
    } else {
        (best_weights, best_value)
    };
    Ok((Design::from_weights(weights, value)?, value, trace))
}

/// `r(ω) = ⌈2p/ω⌉` with `p` the design's support size.
pub fn r_min(design: &Design, omega: f64) -> u64 {
    (2.0 * design.support_size as f64 / omega).ceil() as u64
}

/// Integer apportionment of `n` samples to the design's support.
pub fn round_design(design: &Design, n: u64, params: &RoundingParams) -> Result<Vec<u64>> {
    if n < params.r_of_omega {
        return Err(Error::TooFewSamples {
            needed: params.r_of_omega,
            got: n,
        });
    }
    let p = design.support_size as u64;
    if n < p {
        return Err(Error::TooFewSamples { needed: p, got: n });
    }
    let lam = &design.weights;
    let base = n as f64 - p as f64 / 2.0;
    let mut counts: Vec<u64> = lam
        .iter()
        .map(|&l| {
            if l > 0.0 {
                ((base * l).ceil() as u64).max(1)
            } else {
                0
            }
        })
        .collect();
    let ratio = |c: u64, l: f64| c as f64 / l;
    let mut total: u64 = counts.iter().sum();
    while total > n {
        let mut pick: Option<usize> = None;
        for (i, (&c, &l)) in counts.iter().zip(lam).enumerate() {
            if l > 0.0 && c > 1 && pick.is_none_or(|j| ratio(c, l) > ratio(counts[j], lam[j])) {
                pick = Some(i);
            }
        }
        let i = pick.expect("n ≥ p leaves a decrementable arm");
        counts[i] -= 1;
        total -= 1;
    }
    while total < n {
        let mut pick: Option<usize> = None;
        for (i, (&c, &l)) in counts.iter().zip(lam).enumerate() {
            if l > 0.0 && pick.is_none_or(|j| ratio(c, l) < ratio(counts[j], lam[j])) {
                pick = Some(i);
            }
        }
        let i = pick.expect("design has support");
        counts[i] += 1;
        total += 1;
    }
    Ok(counts)
}

/// Gap-normalised directions `(w* − w)/max(⟨w* − w, θ⟩, γ)` over `w ≠ w*`.
pub fn normalized_gap_directions(
    targets: &[Vector],
    best: usize,
    theta: &Vector,
    gamma_floor: f64,
) -> Vec<Vector> {
    targets
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, w)| {
            let diff = &targets[best] - w;
            let scale = diff.dot(theta).max(gamma_floor);
            diff / scale
        })
        .collect()
}

/// `ρ*(γ) = min_λ max_{w≠w*} ‖w* − w‖²_{A(λ,Γ)⁻¹} / (⟨w* − w, θ⟩² ∨ γ²)`, with its design.
pub fn rho_star_design(
    instance: &ProblemInstance,
    gamma_floor: f64,
    opts: &SolverOptions,
) -> Result<Design> {
    if !(gamma_floor >= 0.0) {
        return Err(Error::BadParam(format!(
            "gamma floor must be nonnegative, got {gamma_floor}"
        )));
    }
    let best = instance.best_arm()?;
    if instance.targets().len() == 1 {
        return Design::from_weights(
            vec![1.0 / instance.arms().len() as f64; instance.arms().len()],
            0.0,
        );
    }
    let dirs = normalized_gap_directions(
        instance.targets(),
        best.index,
        instance.theta(),
        gamma_floor,
    );
    xy_design(&dirs, instance.arms(), instance.gamma(), opts)
}

pub fn rho_star(instance: &ProblemInstance, gamma_floor: f64, opts: &SolverOptions) -> Result<f64> {
    rho_star_design(instance, gamma_floor, opts).map(|d| d.objective_value)
}

/// Diagnostic floor `σ²ρ* ln(1/δ)/2` with `σ² = vᵀΣv`, `v = [θ; 1]`.
pub fn oracle_lower_bound_samples(
    instance: &ProblemInstance,
    sigma: &Matrix,
    delta: f64,
    opts: &SolverOptions,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 0.05) {
        return Err(Error::BadDelta(delta));
    }
    let d = instance.dim();
    if sigma.nrows() != d + 1 || sigma.ncols() != d + 1 {
        return Err(Error::DimensionMismatch(format!(
            "noise covariance must be {0}x{0}",
            d + 1
        )));
    }
    let mut v = Vector::from_element(d + 1, 1.0);
    v.rows_mut(0, d).copy_from(instance.theta());
    let s2 = v.dot(&(sigma * &v));
    let rho = rho_star(instance, 0.0, opts)?;
    Ok(s2 * rho * (1.0 / delta).ln() / 2.0)
}
