//! Confounded structural-equation environments.
//!
//! Every instance follows `x = Γᵀz + η`, `y = xᵀθ + ε`. Internally `Γ` is stored in
//! that structural orientation, so for compliance instances row `z` of `Γ` is the
//! distribution of the chosen treatment given encouragement `z`. The column-stochastic
//! compliance table `C(i, j) = P(x = e_i | z = e_j)` is `Γᵀ`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numerics::{basis, extreme_singular_values, Matrix, Vector};

/// Default σ_η² for compliance instances: `‖η‖₂ ≤ 2`, hence 2²-sub-Gaussian.
pub const COMPLIANCE_SIGMA_ETA_SQ: f64 = 4.0;

/// Default outcome-noise scale of the interpolation instance.
pub const INTERPOLATION_NOISE_SCALE: f64 = 0.4;

/// Gap below which two evaluation arms are considered tied.
pub const TIE_TOL: f64 = 1e-12;

/// Smallest singular value of `Γ` accepted as invertible.
pub const GAMMA_INVERTIBLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    /// Categorical treatment choice; `ε = coupling·⟨η, s⟩ + σ_ε ξ` with `s` a fixed
    /// alternating-sign unit vector and `ξ ~ N(0, 1)`.
    ComplianceCategorical { sigma_eps: f64, coupling: f64 },
    /// Location model: `u ~ N(0, σ_u²)`, the user picks the level nearest to `I + u`,
    /// and the outcome noise is `u` itself.
    JumpAround { sigma_u: f64 },
    /// `ε = noise_scale·⟨η, v⟩` with `v` uniform on the unit sphere.
    InterpolationUnitNoise { noise_scale: f64 },
    /// `η ~ N(0, σ_η² I)`, `ε = σ_ε(ρ η₁/σ_η + √(1-ρ²) ξ)`.
    GaussianExogenous { sigma_eps: f64, rho: f64 },
}

impl NoiseKind {
    pub fn is_compliance(&self) -> bool {
        !matches!(self, NoiseKind::GaussianExogenous { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma_eta_sq: f64,
    pub l_eta: f64,
}

impl NoiseSpec {
    pub fn compliance(kind: NoiseKind) -> Self {
        Self {
            kind,
            sigma_eta_sq: COMPLIANCE_SIGMA_ETA_SQ,
            l_eta: COMPLIANCE_SIGMA_ETA_SQ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::BadParam(format!("{name} must be positive, got {v}")))
            }
        };
        positive("sigma_eta_sq", self.sigma_eta_sq)?;
        positive("l_eta", self.l_eta)?;
        if self.l_eta < self.sigma_eta_sq {
            return Err(Error::BadParam(format!(
                "l_eta ({}) must be at least sigma_eta_sq ({})",
                self.l_eta, self.sigma_eta_sq
            )));
        }
        match self.kind {
            NoiseKind::ComplianceCategorical {
                sigma_eps,
                coupling,
            } => {
                positive("sigma_eps", sigma_eps)?;
                if !coupling.is_finite() || coupling < 0.0 {
                    return Err(Error::BadParam(format!(
                        "coupling must be nonnegative, got {coupling}"
                    )));
                }
            }
            NoiseKind::JumpAround { sigma_u } => positive("sigma_u", sigma_u)?,
            NoiseKind::InterpolationUnitNoise { noise_scale } => {
                positive("noise_scale", noise_scale)?
            }
            NoiseKind::GaussianExogenous { sigma_eps, rho } => {
                positive("sigma_eps", sigma_eps)?;
                if !(-1.0..=1.0).contains(&rho) {
                    return Err(Error::BadParam(format!(
                        "rho must lie in [-1, 1], got {rho}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One round of the structural model.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub z_index: usize,
    pub z: Vector,
    pub x: Vector,
    pub y: f64,
}

/// Sums over `n` independent rounds that all used the same instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmBatch {
    pub n: u64,
    pub sum_x: Vector,
    pub sum_y: f64,
}

impl ArmBatch {
    pub fn empty(d: usize) -> Self {
        Self {
            n: 0,
            sum_x: Vector::zeros(d),
            sum_y: 0.0,
        }
    }
}

/// How `sample_batch` produces its sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Simulate every round individually.
    Exact,
    /// Treatment counts are always drawn exactly (multinomial); within a treatment
    /// cell of at least `exact_below` rounds the outcome-noise sum is drawn from the
    /// Gaussian with the cell's exact conditional mean and variance.
    Aggregated { exact_below: u64 },
}

impl Default for SamplingMode {
    fn default() -> Self {
        SamplingMode::Aggregated { exact_below: 256 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BestArm {
    pub index: usize,
    /// `⟨w* − w, θ⟩` for every evaluation arm.
    pub gaps: Vec<f64>,
    /// Smallest positive gap, infinite when there is a single arm.
    pub min_gap: f64,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    arms: Vec<Vector>,
    targets: Vec<Vector>,
    gamma: Matrix,
    theta: Vector,
    noise: NoiseSpec,
    l_z: f64,
    /// Cumulative rows of `Γ` for categorical sampling (compliance kinds only).
    cumulative: Option<Vec<Vec<f64>>>,
    /// Fixed direction `s` of the categorical coupling.
    coupling_dir: Vector,
}

fn alternating_unit(d: usize) -> Vector {
    let scale = 1.0 / (d as f64).sqrt();
    Vector::from_fn(d, |i, _| if i % 2 == 0 { scale } else { -scale })
}

fn standard_normal() -> Normal {
    Normal::standard()
}

impl ProblemInstance {
    /// General constructor. `l_z` defaults to `max ‖z‖₂`.
    pub fn new(
        arms: Vec<Vector>,
        targets: Vec<Vector>,
        gamma: Matrix,
        theta: Vector,
        noise: NoiseSpec,
        l_z: Option<f64>,
    ) -> Result<Self> {
        if arms.is_empty() || targets.is_empty() {
            return Err(Error::BadParam(
                "measurement and evaluation sets must be nonempty".into(),
            ));
        }
        let d = theta.len();
        if d == 0 {
            return Err(Error::BadParam("dimension must be positive".into()));
        }
        if gamma.nrows() != d || gamma.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "gamma is {}x{}, theta has dimension {d}",
                gamma.nrows(),
                gamma.ncols()
            )));
        }
        for v in arms.iter().chain(targets.iter()) {
            if v.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "vector of dimension {} in a dimension-{d} instance",
                    v.len()
                )));
            }
        }
        let all_finite = gamma.iter().chain(theta.iter()).all(|v| v.is_finite())
            && arms
                .iter()
                .chain(targets.iter())
                .all(|v| v.iter().all(|x| x.is_finite()));
        if !all_finite {
            return Err(Error::BadParam("non-finite entry in instance".into()));
        }
        noise.validate()?;
        let (smin, _) = extreme_singular_values(&gamma);
        if smin <= GAMMA_INVERTIBLE_TOL {
            return Err(Error::BadParam(format!(
                "gamma must be invertible (sigma_min = {smin:.3e})"
            )));
        }
        let max_norm = arms.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let l_z = match l_z {
            Some(l) if l + 1e-12 < max_norm => {
                return Err(Error::BadParam(format!(
                    "l_z = {l} is below max arm norm {max_norm}"
                )))
            }
            Some(l) => l,
            None => max_norm,
        };

        let cumulative = if noise.kind.is_compliance() {
            let is_basis = |set: &[Vector]| {
                set.len() == d && set.iter().enumerate().all(|(i, v)| *v == basis(d, i))
            };
            if !is_basis(&arms) || !is_basis(&targets) {
                return Err(Error::BadParam(
                    "compliance instances need Z = W = {e_1, ..., e_d}".into(),
                ));
            }
            let mut rows = Vec::with_capacity(d);
            for i in 0..d {
                let row = gamma.row(i);
                if row.iter().any(|&p| p < -1e-12) || (row.sum() - 1.0).abs() > 1e-9 {
                    return Err(Error::NotStochastic(format!(
                        "treatment distribution for instrument {i} sums to {}",
                        row.sum()
                    )));
                }
                let mut acc = 0.0;
                rows.push(
                    row.iter()
                        .map(|&p| {
                            acc += p.max(0.0);
                            acc
                        })
                        .collect(),
                );
            }
            Some(rows)
        } else {
            None
        };

        Ok(Self {
            arms,
            targets,
            gamma,
            theta,
            noise,
            l_z,
            cumulative,
            coupling_dir: alternating_unit(d),
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Measurement vectors (instruments) `Z`.
    pub fn arms(&self) -> &[Vector] {
        &self.arms
    }

    /// Evaluation vectors `W`.
    pub fn targets(&self) -> &[Vector] {
        &self.targets
    }

    pub fn gamma(&self) -> &Matrix {
        &self.gamma
    }

    pub fn theta(&self) -> &Vector {
        &self.theta
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn l_z(&self) -> f64 {
        self.l_z
    }

    pub fn is_compliance(&self) -> bool {
        self.cumulative.is_some()
    }

    /// Column-stochastic table `C(i, j) = P(x = e_i | z = e_j)`, i.e. `Γᵀ`.
    pub fn compliance_table(&self) -> Matrix {
        self.gamma.transpose()
    }

    /// Reduced-form means `E[y | z] = zᵀΓθ` for each instrument.
    pub fn reduced_form_means(&self) -> Vec<f64> {
        let gt = &self.gamma * &self.theta;
        self.arms.iter().map(|z| z.dot(&gt)).collect()
    }

    pub fn best_arm(&self) -> Result<BestArm> {
        let values: Vec<f64> = self.targets.iter().map(|w| w.dot(&self.theta)).collect();
        let mut index = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[index] {
                index = i;
            }
        }
        let top = values[index];
        for (i, &v) in values.iter().enumerate() {
            if i != index && (top - v).abs() <= TIE_TOL {
                return Err(Error::TieAtTop(index.min(i), index.max(i)));
            }
        }
        let gaps: Vec<f64> = values.iter().map(|v| top - v).collect();
        let min_gap = gaps
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != index)
            .map(|(_, &g)| g)
            .fold(f64::INFINITY, f64::min);
        Ok(BestArm {
            index,
            gaps,
            min_gap,
        })
    }

    fn draw_treatment<R: Rng + ?Sized>(&self, z_index: usize, rng: &mut R) -> usize {
        let row = &self.cumulative.as_ref().expect("compliance instance")[z_index];
        let u: f64 = rng.random::<f64>() * row[row.len() - 1];
        row.iter().position(|&c| u < c).unwrap_or(row.len() - 1)
    }

    /// Compliance noise `η = e_j − Γᵀz` for treatment `j` under instrument `z_index`.
    fn compliance_eta(&self, z_index: usize, j: usize) -> Vector {
        let mut eta = -self.gamma.row(z_index).transpose();
        eta[j] += 1.0;
        eta
    }

    /// One draw from the structural model.
    pub fn sample_round<R: Rng + ?Sized>(&self, z_index: usize, rng: &mut R) -> Observation {
        let d = self.dim();
        let z = self.arms[z_index].clone();
        let (x, eps) = match self.noise.kind {
            NoiseKind::JumpAround { sigma_u } => {
                let u = sigma_u * rng.sample::<f64, _>(StandardNormal);
                let j = nearest_level(z_index, u, d);
                (basis(d, j), u)
            }
            NoiseKind::ComplianceCategorical {
                sigma_eps,
                coupling,
            } => {
                let j = self.draw_treatment(z_index, rng);
                let eta = self.compliance_eta(z_index, j);
                let xi: f64 = rng.sample(StandardNormal);
                (
                    basis(d, j),
                    coupling * eta.dot(&self.coupling_dir) + sigma_eps * xi,
                )
            }
            NoiseKind::InterpolationUnitNoise { noise_scale } => {
                let j = self.draw_treatment(z_index, rng);
                let eta = self.compliance_eta(z_index, j);
                let v = unit_sphere(d, rng);
                (basis(d, j), noise_scale * eta.dot(&v))
            }
            NoiseKind::GaussianExogenous { sigma_eps, rho } => {
                let sigma_eta = self.noise.sigma_eta_sq.sqrt();
                let eta =
                    Vector::from_fn(d, |_, _| sigma_eta * rng.sample::<f64, _>(StandardNormal));
                let xi: f64 = rng.sample(StandardNormal);
                let eps = sigma_eps * (rho * eta[0] / sigma_eta + (1.0 - rho * rho).sqrt() * xi);
                (self.gamma.transpose() * &z + eta, eps)
            }
        };
        let y = x.dot(&self.theta) + eps;
        Observation { z_index, z, x, y }
    }

    /// Sums of `x` and `y` over `n` independent rounds with instrument `z_index`.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        z_index: usize,
        n: u64,
        rng: &mut R,
        mode: SamplingMode,
    ) -> ArmBatch {
        let d = self.dim();
        let mut batch = ArmBatch::empty(d);
        if n == 0 {
            return batch;
        }
        let exact_below = match mode {
            SamplingMode::Exact => {
                for _ in 0..n {
                    let obs = self.sample_round(z_index, rng);
                    batch.sum_x += obs.x;
                    batch.sum_y += obs.y;
                }
                batch.n = n;
                return batch;
            }
            SamplingMode::Aggregated { exact_below } => exact_below,
        };
        batch.n = n;

        if let NoiseKind::GaussianExogenous { sigma_eps, rho } = self.noise.kind {
            // Sums of jointly Gaussian rounds are Gaussian: this is exact for any n.
            let nf = n as f64;
            let sigma_eta = self.noise.sigma_eta_sq.sqrt();
            let s_eta = Vector::from_fn(d, |_, _| {
                sigma_eta * nf.sqrt() * rng.sample::<f64, _>(StandardNormal)
            });
            let xi: f64 = rng.sample(StandardNormal);
            let s_eps = sigma_eps
                * (rho * s_eta[0] / sigma_eta + (1.0 - rho * rho).sqrt() * nf.sqrt() * xi);
            batch.sum_x = self.gamma.transpose() * &self.arms[z_index] * nf + s_eta;
            batch.sum_y = batch.sum_x.dot(&self.theta) + s_eps;
            return batch;
        }

        let counts = self.treatment_counts(z_index, n, rng);
        for (j, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            batch.sum_x[j] += c as f64;
            batch.sum_y +=
                c as f64 * self.theta[j] + self.cell_noise_sum(z_index, j, c, exact_below, rng);
        }
        batch
    }

    /// Multinomial treatment counts for `n` rounds of instrument `z_index`.
    pub fn treatment_counts<R: Rng + ?Sized>(
        &self,
        z_index: usize,
        n: u64,
        rng: &mut R,
    ) -> Vec<u64> {
        let d = self.dim();
        let row = self.gamma.row(z_index);
        let mut counts = vec![0u64; d];
        let mut remaining = n;
        let mut mass = row.iter().map(|p| p.max(0.0)).sum::<f64>();
        for j in 0..d {
            if remaining == 0 {
                break;
            }
            let p = row[j].max(0.0);
            if j == d - 1 || mass <= p {
                counts[j] = remaining;
                break;
            }
            let q = (p / mass).clamp(0.0, 1.0);
            let c = Binomial::new(remaining, q)
                .map(|b| b.sample(rng))
                .unwrap_or(0);
            counts[j] = c;
            remaining -= c;
            mass -= p;
        }
        counts
    }

    /// Sum of the outcome noise over `c` rounds whose instrument was `z_index` and whose
    /// treatment was `j`.
    fn cell_noise_sum<R: Rng + ?Sized>(
        &self,
        z_index: usize,
        j: usize,
        c: u64,
        exact_below: u64,
        rng: &mut R,
    ) -> f64 {
        let d = self.dim();
        let cf = c as f64;
        match self.noise.kind {
            NoiseKind::ComplianceCategorical {
                sigma_eps,
                coupling,
            } => {
                let eta = self.compliance_eta(z_index, j);
                let xi: f64 = rng.sample(StandardNormal);
                cf * coupling * eta.dot(&self.coupling_dir) + sigma_eps * cf.sqrt() * xi
            }
            NoiseKind::InterpolationUnitNoise { noise_scale } => {
                let eta = self.compliance_eta(z_index, j);
                if c < exact_below {
                    (0..c)
                        .map(|_| noise_scale * eta.dot(&unit_sphere(d, rng)))
                        .sum()
                } else {
                    let var = noise_scale * noise_scale * eta.norm_squared() / d as f64;
                    (cf * var).sqrt() * rng.sample::<f64, _>(StandardNormal)
                }
            }
            NoiseKind::JumpAround { sigma_u } => {
                let (lo, hi) = level_interval(z_index, j, d);
                let cell = TruncatedNormal::new(lo / sigma_u, hi / sigma_u);
                if c < exact_below {
                    (0..c).map(|_| sigma_u * cell.draw(rng)).sum()
                } else {
                    let (m, v) = cell.moments();
                    sigma_u * (cf * m + (cf * v).sqrt() * rng.sample::<f64, _>(StandardNormal))
                }
            }
            NoiseKind::GaussianExogenous { .. } => {
                unreachable!("handled by the joint Gaussian path")
            }
        }
    }
}

/// Level chosen by a user encouraged toward `i` with preference shock `u`: the nearest
/// index to `i + u`, ties to the lower index, clamped to the valid range.
pub fn nearest_level(i: usize, u: f64, d: usize) -> usize {
    let pos = i as f64 + u;
    let j = (pos - 0.5).ceil();
    j.clamp(0.0, (d - 1) as f64) as usize
}

/// Values of `u` that send encouragement `i` to level `j`, as a half-open interval.
fn level_interval(i: usize, j: usize, d: usize) -> (f64, f64) {
    let offset = j as f64 - i as f64;
    let lo = if j == 0 {
        f64::NEG_INFINITY
    } else {
        offset - 0.5
    };
    let hi = if j == d - 1 {
        f64::INFINITY
    } else {
        offset + 0.5
    };
    (lo, hi)
}

fn unit_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    loop {
        let g = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 1e-300 {
            return g / norm;
        }
    }
}

/// Standard normal restricted to `(a, b]`. Works in the lower tail (flipping the sign
/// when the interval sits above zero) so that CDF differences stay accurate.
#[derive(Debug, Clone, Copy)]
struct TruncatedNormal {
    a: f64,
    b: f64,
    flipped: bool,
}

impl TruncatedNormal {
    fn new(a: f64, b: f64) -> Self {
        if a > 0.0 {
            Self {
                a: -b,
                b: -a,
                flipped: true,
            }
        } else {
            Self {
                a,
                b,
                flipped: false,
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let n = standard_normal();
        let pa = n.cdf(self.a);
        let pb = n.cdf(self.b);
        let u: f64 = rng.random();
        let p = (pa + u * (pb - pa)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        let x = n.inverse_cdf(p).clamp(self.a, self.b);
        if self.flipped {
            -x
        } else {
            x
        }
    }

    /// Mean and variance.
    fn moments(&self) -> (f64, f64) {
        let n = standard_normal();
        let phi = |x: f64| if x.is_finite() { n.pdf(x) } else { 0.0 };
        let xphi = |x: f64| if x.is_finite() { x * n.pdf(x) } else { 0.0 };
        let mass = n.cdf(self.b) - n.cdf(self.a);
        if mass <= 0.0 {
            return (0.0, 0.0);
        }
        let mean = (phi(self.a) - phi(self.b)) / mass;
        let var = (1.0 + (xphi(self.a) - xphi(self.b)) / mass - mean * mean).max(0.0);
        (if self.flipped { -mean } else { mean }, var)
    }
}

/// Column-stochastic table `C(j, i) = P(level j | encouragement i)` of the location model.
pub fn jump_around_table(d: usize, sigma_u: f64) -> Matrix {
    let n = standard_normal();
    Matrix::from_fn(d, d, |j, i| {
        let (lo, hi) = level_interval(i, j, d);
        let upper = if hi.is_finite() {
            n.cdf(hi / sigma_u)
        } else {
            1.0
        };
        let lower = if lo.is_finite() {
            n.cdf(lo / sigma_u)
        } else {
            0.0
        };
        upper - lower
    })
}

/// `Γ = (1−ε)/d · 11ᵀ + ε I`.
pub fn interpolation_gamma(d: usize, eps: f64) -> Matrix {
    Matrix::from_element(d, d, (1.0 - eps) / d as f64) + Matrix::identity(d, d) * eps
}

fn basis_set(d: usize) -> Vec<Vector> {
    (0..d).map(|i| basis(d, i)).collect()
}

/// Compliance instance from a column-stochastic table `C(i, j) = P(x = e_i | z = e_j)`.
pub fn make_compliance(table: &Matrix, theta: Vector, noise: NoiseSpec) -> Result<ProblemInstance> {
    let d = theta.len();
    if table.nrows() != d || table.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "compliance table is {}x{}, theta has dimension {d}",
            table.nrows(),
            table.ncols()
        )));
    }
    if matches!(noise.kind, NoiseKind::JumpAround { .. }) {
        return Err(Error::BadParam(
            "jump-around instances are built with make_jump_around".into(),
        ));
    }
    if !noise.kind.is_compliance() {
        return Err(Error::BadParam(
            "compliance instances need a compliance noise kind".into(),
        ));
    }
    for j in 0..d {
        let col = table.column(j);
        if col.iter().any(|&p| p < 0.0) {
            return Err(Error::NotStochastic(format!(
                "negative entry in column {j}"
            )));
        }
        if (col.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::NotStochastic(format!(
                "column {j} sums to {}",
                col.sum()
            )));
        }
    }
    ProblemInstance::new(
        basis_set(d),
        basis_set(d),
        table.transpose(),
        theta,
        noise,
        None,
    )
}

pub fn make_jump_around(d: usize, theta: Vector, sigma_u: f64) -> Result<ProblemInstance> {
    if d < 2 {
        return Err(Error::BadParam(format!(
            "jump-around needs d >= 2, got {d}"
        )));
    }
    if !(sigma_u.is_finite() && sigma_u > 0.0) {
        return Err(Error::BadParam(format!(
            "sigma_u must be positive, got {sigma_u}"
        )));
    }
    if theta.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "theta has dimension {}, expected {d}",
            theta.len()
        )));
    }
    let table = jump_around_table(d, sigma_u);
    ProblemInstance::new(
        basis_set(d),
        basis_set(d),
        table.transpose(),
        theta,
        NoiseSpec::compliance(NoiseKind::JumpAround { sigma_u }),
        None,
    )
}

pub fn make_interpolation(
    d: usize,
    theta: Vector,
    eps: f64,
    noise_scale: f64,
) -> Result<ProblemInstance> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::BadParam(format!(
            "eps must lie in (0, 1], got {eps}"
        )));
    }
    if d == 0 || theta.len() != d {
        return Err(Error::BadParam(format!(
            "theta has dimension {}, expected {d}",
            theta.len()
        )));
    }
    let gamma = interpolation_gamma(d, eps);
    make_compliance(
        &gamma.transpose(),
        theta,
        NoiseSpec::compliance(NoiseKind::InterpolationUnitNoise { noise_scale }),
    )
}
