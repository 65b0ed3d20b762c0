//! Least-squares and instrumental-variable estimators with finite-time confidence widths.
//!
//! Estimators consume [`Moments`], the sufficient statistics `(ZᵀZ, ZᵀX, ZᵀY, T)` of a
//! dataset. A row-level [`Dataset`] reduces to them with [`Dataset::moments`]; the
//! algorithms accumulate moments directly from batched samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{ArmBatch, Observation};
use crate::numerics::{
    extreme_singular_values, solve_general, symmetrize, Matrix, PsdFactor, Vector,
};

/// Smallest singular value below which a design matrix is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-10;

/// Row-level data `(Z, X, Y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub z: Matrix,
    pub x: Matrix,
    pub y: Vector,
}

impl Dataset {
    pub fn new(z: Matrix, x: Matrix, y: Vector) -> Result<Self> {
        let t = z.nrows();
        if t == 0 || x.nrows() != t || y.len() != t || x.ncols() != z.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Z is {}x{}, X is {}x{}, Y has {} entries",
                z.nrows(),
                z.ncols(),
                x.nrows(),
                x.ncols(),
                y.len()
            )));
        }
        Ok(Self { z, x, y })
    }

    pub fn from_observations(obs: &[Observation]) -> Result<Self> {
        let first = obs
            .first()
            .ok_or_else(|| Error::DimensionMismatch("empty dataset".into()))?;
        let d = first.z.len();
        let z = Matrix::from_fn(obs.len(), d, |r, c| obs[r].z[c]);
        let x = Matrix::from_fn(obs.len(), d, |r, c| obs[r].x[c]);
        let y = Vector::from_iterator(obs.len(), obs.iter().map(|o| o.y));
        Self::new(z, x, y)
    }

    pub fn rows(&self) -> usize {
        self.z.nrows()
    }

    pub fn moments(&self) -> Moments {
        Moments {
            ztz: self.z.transpose() * &self.z,
            ztx: self.z.transpose() * &self.x,
            zty: self.z.transpose() * &self.y,
            rows: self.rows() as u64,
        }
    }
}

/// Sufficient statistics of a dataset for every estimator in this module.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub ztz: Matrix,
    pub ztx: Matrix,
    pub zty: Vector,
    pub rows: u64,
}

impl Moments {
    pub fn zeros(d: usize) -> Self {
        Self {
            ztz: Matrix::zeros(d, d),
            ztx: Matrix::zeros(d, d),
            zty: Vector::zeros(d),
            rows: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.zty.len()
    }

    pub fn push(&mut self, obs: &Observation) {
        self.ztz += &obs.z * obs.z.transpose();
        self.ztx += &obs.z * obs.x.transpose();
        self.zty += &obs.z * obs.y;
        self.rows += 1;
    }

    /// Adds `batch.n` rows that all used instrument `z`.
    pub fn absorb(&mut self, z: &Vector, batch: &ArmBatch) {
        if batch.n == 0 {
            return;
        }
        self.ztz += z * z.transpose() * batch.n as f64;
        self.ztx += z * batch.sum_x.transpose();
        self.zty += z * batch.sum_y;
        self.rows += batch.n;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.ztz += &other.ztz;
        self.ztx += &other.ztx;
        self.zty += &other.zty;
        self.rows += other.rows;
    }

    /// Gram matrix `ZᵀZ` for `counts[i]` rows of instrument `arms[i]`.
    pub fn gram(arms: &[Vector], counts: &[u64]) -> Matrix {
        let d = arms.first().map_or(0, |z| z.len());
        let mut g = Matrix::zeros(d, d);
        for (z, &n) in arms.iter().zip(counts) {
            if n > 0 {
                g += z * z.transpose() * n as f64;
            }
        }
        g
    }
}

fn require_invertible(m: &Matrix, what: &str) -> Result<()> {
    let (smin, _) = extreme_singular_values(m);
    if smin <= SINGULAR_TOL {
        return Err(Error::SingularDesign(format!(
            "{what} has smallest singular value {smin:.3e}"
        )));
    }
    Ok(())
}

/// First-stage least squares `Γ̂ = (ZᵀZ)⁻¹ZᵀX`.
pub fn fit_gamma_ols(m: &Moments) -> Result<Matrix> {
    require_invertible(&m.ztz, "ZᵀZ")?;
    let f = PsdFactor::new(&m.ztz)?;
    let d = m.dim();
    let mut gamma = Matrix::zeros(d, d);
    for j in 0..d {
        let col = f.solve(&m.ztx.column(j).into_owned())?;
        gamma.set_column(j, &col);
    }
    Ok(gamma)
}

/// Ψ-IV estimate, computed in the normal-equation form `(ΨᵀZᵀZΨ)⁻¹ΨᵀZᵀY`, which equals
/// `(ZᵀZΨ)⁻¹ZᵀY` whenever `ZᵀZΨ` is square and invertible.
///
/// When the pulled arms do not span the space the minimum-norm solution is returned;
/// it is unbiased for every direction in the span of `ΨᵀZᵀZΨ`.
pub fn estimate_theta_psi(m: &Moments, psi: &Matrix) -> Result<Vector> {
    let a = a_bar(&m.ztz, psi);
    let rhs = psi.transpose() * &m.zty;
    if require_invertible(&a, "ΨᵀZᵀZΨ").is_ok() {
        return PsdFactor::new(&a)?.solve(&rhs);
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let pinv = a
        .pseudo_inverse(1e-12 * scale)
        .map_err(|e| Error::SingularDesign(e.to_string()))?;
    Ok(pinv * rhs)
}

/// Standard 2SLS `(ZᵀX)⁻¹ZᵀY`.
pub fn estimate_theta_2sls(m: &Moments) -> Result<Vector> {
    solve_general(&m.ztx, &m.zty)
}

/// Two-sample 2SLS: first stage on `stage1`, second stage on `stage2`.
pub fn estimate_theta_p2sls(stage1: &Moments, stage2: &Moments) -> Result<(Vector, Matrix)> {
    let gamma_hat = fit_gamma_ols(stage1)?;
    let theta = estimate_theta_psi(stage2, &gamma_hat)?;
    Ok((theta, gamma_hat))
}

/// `Ā(Z, Γ) = ΓᵀZᵀZΓ`, given `ZᵀZ`.
pub fn a_bar(ztz: &Matrix, gamma: &Matrix) -> Matrix {
    symmetrize(&(gamma.transpose() * ztz * gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBounds {
    /// `L_ν ≥ σ_ν²`.
    pub l_nu: f64,
    /// `L_η ≥ σ_η²`.
    pub l_eta: f64,
    /// `B ≥ ‖θ‖₂`.
    pub theta_norm_bound: f64,
}

impl NoiseBounds {
    pub fn new(l_nu: f64, l_eta: f64, theta_norm_bound: f64) -> Result<Self> {
        let b = Self {
            l_nu,
            l_eta,
            theta_norm_bound,
        };
        b.validate()?;
        Ok(b)
    }

    /// Derives `B` from `L_ν = 2(L_η B² + 1)`.
    pub fn from_nu_eta(l_nu: f64, l_eta: f64) -> Result<Self> {
        if !(l_nu > 2.0) {
            return Err(Error::BadParam(format!(
                "l_nu must exceed 2 to imply a norm bound, got {l_nu}"
            )));
        }
        Self::new(l_nu, l_eta, ((l_nu / 2.0 - 1.0) / l_eta).sqrt())
    }

    /// Tight bounds for a known instance: `L_η = σ_η²`, `B = ‖θ‖₂`, `L_ν = 2(L_η B² + 1)`.
    pub fn for_theta(l_eta: f64, theta_norm: f64) -> Result<Self> {
        Self::new(
            2.0 * (l_eta * theta_norm * theta_norm + 1.0),
            l_eta,
            theta_norm,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.l_nu)
            || !ok(self.l_eta)
            || !(self.theta_norm_bound.is_finite() && self.theta_norm_bound >= 0.0)
        {
            return Err(Error::BadParam(format!("invalid noise bounds {self:?}")));
        }
        let implied = 2.0 * (self.l_eta * self.theta_norm_bound.powi(2) + 1.0);
        if self.l_nu + 1e-12 < implied {
            log::warn!(
                "l_nu = {} is below 2(l_eta·B² + 1) = {implied}; confidence widths may undercover",
                self.l_nu
            );
        }
        Ok(())
    }
}

/// `σ_ν² = 2(σ_η²‖θ‖² + 1)` with the bounds substituted; compliance fixes `σ_η² = 4`.
pub fn sigma_nu_bound(bounds: &NoiseBounds, compliance: bool) -> f64 {
    let b2 = bounds.theta_norm_bound.powi(2);
    let eta = if compliance { 4.0 } else { bounds.l_eta };
    2.0 * (eta * b2 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBarMode {
    Theoretical,
    #[default]
    Practical,
}

/// The `log` factor of the first-stage confidence width, for a design with Gram matrix
/// `ztz` built from `rows` instruments of norm at most `l_z`.
pub fn log_bar(ztz: &Matrix, rows: u64, delta: f64, l_z: f64, mode: LogBarMode) -> f64 {
    let d = ztz.nrows() as f64;
    match mode {
        LogBarMode::Practical => 4.0 * d - delta.ln(),
        LogBarMode::Theoretical => {
            let (smin, _) = extreme_singular_values(ztz);
            log_bar_theoretical(d, rows as f64, smin, delta, l_z)
        }
    }
}

/// Theoretical `log` factor from its scalar ingredients.
pub fn log_bar_theoretical(d: f64, rows: f64, sigma_min_gram: f64, delta: f64, l_z: f64) -> f64 {
    let m = sigma_min_gram.min(2.0);
    if m <= 0.0 {
        return f64::INFINITY;
    }
    let first = 8.0 * d * (1.0 + 2.0 * rows * l_z * l_z / (d * m)).ln();
    let l2 = (4.0 / m).log2();
    let second = 16.0 * (2f64.ln() + d * 6f64.ln() - delta.ln() + 2.0 * l2.ln());
    first + second
}

/// Half-width `√(2σ_ν²‖w‖²_{Ā⁻¹} ln(2/δ))` of the known-Γ interval.
pub fn oracle_ci_width(
    w: &Vector,
    ztz: &Matrix,
    gamma: &Matrix,
    sigma_nu_sq: f64,
    delta: f64,
) -> Result<f64> {
    let a = a_bar(ztz, gamma);
    require_invertible(&a, "Ā(Z, Γ)")?;
    let q = PsdFactor::new(&a)?.inv_quad(w)?;
    Ok((2.0 * sigma_nu_sq * q * (2.0 / delta).ln()).sqrt())
}

/// Context needed to evaluate first-stage widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WidthContext {
    pub bounds: NoiseBounds,
    pub l_z: f64,
    pub mode: LogBarMode,
}

/// `‖w‖_{Ā(Z₁,Γ̂)⁻¹} · B · √(L_η logbar(Z₁, δ))`: the Γ-approximation part of the P-2SLS
/// width, also the summand of the Γ-estimator stopping rule.
pub fn gamma_error_term(
    w: &Vector,
    stage1_gram: &Matrix,
    stage1_rows: u64,
    gamma_hat: &Matrix,
    delta: f64,
    ctx: &WidthContext,
) -> Result<f64> {
    let a1 = a_bar(stage1_gram, gamma_hat);
    require_invertible(&a1, "Ā(Z₁, Γ̂)")?;
    let q1 = PsdFactor::new(&a1)?.inv_quad(w)?;
    let lb = log_bar(stage1_gram, stage1_rows, delta, ctx.l_z, ctx.mode);
    Ok(q1.sqrt() * ctx.bounds.theta_norm_bound * (ctx.bounds.l_eta * lb).sqrt())
}

/// Two-sample 2SLS half-width: sampling error of stage 2 plus first-stage error of stage 1.
pub fn p2sls_ci_width(
    w: &Vector,
    stage1: (&Matrix, u64),
    stage2_gram: &Matrix,
    gamma_hat: &Matrix,
    delta: f64,
    ctx: &WidthContext,
) -> Result<f64> {
    let a2 = a_bar(stage2_gram, gamma_hat);
    require_invertible(&a2, "Ā(Z₂, Γ̂)")?;
    let q2 = PsdFactor::new(&a2)?.inv_quad(w)?;
    let sampling = (q2 * 2.0 * ctx.bounds.l_nu * (4.0 / delta).ln()).sqrt();
    let first = if ctx.bounds.theta_norm_bound == 0.0 {
        0.0
    } else {
        gamma_error_term(w, stage1.0, stage1.1, gamma_hat, delta / 4.0, ctx)?
    };
    Ok(sampling + first)
}
