//! Small dense linear-algebra kernel shared by the estimators, design solvers and
//! algorithms. All matrices here are tiny (d ≤ ~100), so everything is direct.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry allowed before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Jitter added (once) when a Cholesky factorization fails, as a fraction of the mean
/// diagonal entry.
pub const JITTER_SCALE: f64 = 1e-12;

fn check_square(a: &Matrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn is_symmetric(a: &Matrix, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let scale = a.amax().max(1.0);
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[(i, j)] - a[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// `(A + Aᵀ)/2`, used to clean up round-off in products such as `ΓᵀVΓ`.
pub fn symmetrize(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

/// Cholesky factor of a symmetric PSD matrix with a one-shot jitter fallback.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    chol: Cholesky<f64, Dyn>,
    jittered: bool,
}

impl PsdFactor {
    pub fn new(a: &Matrix) -> Result<Self> {
        check_square(a, "psd factor")?;
        if !is_symmetric(a, SYMMETRY_TOL) {
            return Err(Error::NotPsd);
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPsd);
        }
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(Self {
                chol,
                jittered: false,
            });
        }
        let d = a.nrows().max(1) as f64;
        let jitter = JITTER_SCALE * a.trace().abs() / d;
        if jitter > 0.0 {
            let mut shifted = a.clone();
            for i in 0..a.nrows() {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(Self {
                    chol,
                    jittered: true,
                });
            }
        }
        Err(Error::NotPsd)
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Whether the jitter fallback was needed.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn solve(&self, b: &Vector) -> Result<Vector> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "rhs has length {}, matrix is {}x{}",
                b.len(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(self.chol.solve(b))
    }

    /// `vᵀ A⁻¹ v`, computed as `‖L⁻¹ v‖²` so it is never negative.
    pub fn inv_quad(&self, v: &Vector) -> Result<f64> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector has length {}, matrix is {}x{}",
                v.len(),
                self.dim(),
                self.dim()
            )));
        }
        let y = self
            .chol
            .l_dirty()
            .solve_lower_triangular(v)
            .ok_or(Error::NotPsd)?;
        Ok(y.norm_squared())
    }

    pub fn inverse(&self) -> Matrix {
        self.chol.inverse()
    }
}

/// Solves `A x = b` for symmetric PSD `A`, with one step of iterative refinement.
pub fn solve_psd(a: &Matrix, b: &Vector) -> Result<Vector> {
    check_square(a, "solve_psd")?;
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve_psd: rhs has length {}, matrix is {}x{}",
            b.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    let factor = PsdFactor::new(a)?;
    let mut x = factor.solve(b)?;
    let residual = b - a * &x;
    x += factor.solve(&residual)?;
    Ok(x)
}

/// `vᵀ A⁻¹ v` for symmetric positive-definite `A`.
pub fn mahalanobis_sq(v: &Vector, a: &Matrix) -> Result<f64> {
    check_square(a, "mahalanobis_sq")?;
    PsdFactor::new(a)?.inv_quad(v)
}

/// Eigenvalues in ascending order with the matching eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(a.nrows(), order.len());
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Smallest and largest singular values via the eigenvalues of `AᵀA` (or `AAᵀ`,
/// whichever is smaller).
pub fn extreme_singular_values(a: &Matrix) -> (f64, f64) {
    if a.is_empty() {
        return (0.0, 0.0);
    }
    let gram = if a.nrows() >= a.ncols() {
        a.transpose() * a
    } else {
        a * a.transpose()
    };
    let (values, _) = symmetric_eigen(&gram);
    let lo = values.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let hi = values.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    // A wide matrix has a nontrivial kernel, so its smallest singular value is zero.
    let lo = if a.nrows() != a.ncols() && a.nrows() < a.ncols() {
        0.0
    } else {
        lo
    };
    (lo, hi)
}

pub fn sigma_min(a: &Matrix) -> f64 {
    extreme_singular_values(a).0
}

/// Solves a general square system by LU with partial pivoting.
pub fn solve_general(a: &Matrix, b: &Vector) -> Result<Vector> {
    check_square(a, "solve_general")?;
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve_general: rhs has length {}, matrix is {}x{}",
            b.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    let (lo, _) = extreme_singular_values(a);
    if lo <= 1e-12 {
        return Err(Error::SingularDesign(format!(
            "smallest singular value {lo:.3e}"
        )));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularDesign("LU solve failed".into()))
}

pub fn inverse_general(a: &Matrix) -> Result<Matrix> {
    check_square(a, "inverse_general")?;
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularDesign("matrix is not invertible".into()))
}

pub fn vector_from(values: &[f64]) -> Vector {
    Vector::from_column_slice(values)
}

/// Builds a matrix from row slices. Rows must have equal length.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// The `i`-th standard basis vector of length `d`.
pub fn basis(d: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(d);
    v[i] = 1.0;
    v
}
