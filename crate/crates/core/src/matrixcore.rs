//! Dense symmetric matrix utilities.
//!
//! Every covariance in the crate is a [`SymmetricPSDMatrix`]. Symmetry is
//! imposed at construction by replacing `M` with `(M + M^T) / 2`, so
//! repeated updates in the optimizers cannot drift away from symmetry.
//! Dimensions are small (`<= 16` in practice) and all algorithms are dense.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative tolerance on negative eigenvalues accepted as PSD.
const PSD_REL_TOL: f64 = 1e-10;

/// Default eigenvalue floor used by [`project_psd`] callers.
pub const DEFAULT_PSD_FLOOR: f64 = 1e-8;

/// Smallest Frobenius norm accepted by [`make_direction`].
const ZERO_DIRECTION_NORM: f64 = 1e-14;

/// `(M + M^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Frobenius inner product `tr(A^T B)`.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn square_dim(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::InvalidArgument("matrix must be non-empty".into()));
    }
    Ok(m.nrows())
}

/// A symmetric positive semi-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricPSDMatrix {
    entries: DMatrix<f64>,
}

impl SymmetricPSDMatrix {
    /// Symmetrizes `m` and checks that its spectrum is nonnegative up to
    /// `1e-10` times the largest eigenvalue.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        square_dim(&m)?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let entries = symmetrize(&m);
        let eig = entries.clone().symmetric_eigenvalues();
        let max = eig.iter().cloned().fold(0.0_f64, f64::max);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_REL_TOL * max.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {min:e} is negative"
            )));
        }
        Ok(Self { entries })
    }

    /// Like [`SymmetricPSDMatrix::new`] but additionally requires the
    /// smallest eigenvalue to be at least `floor`.
    pub fn new_positive_definite(m: DMatrix<f64>, floor: f64) -> Result<Self> {
        let s = Self::new(m)?;
        let min = s.min_eigenvalue();
        if min < floor || min <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {min:e} is below the floor {floor:e}"
            )));
        }
        Ok(s)
    }

    /// Builds a matrix from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("matrix must be non-empty".into()));
        }
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
            diag,
        )))
    }

    /// Wraps a matrix already known to be symmetric PSD. Only symmetrizes.
    pub(crate) fn from_symmetric_unchecked(m: DMatrix<f64>) -> Self {
        Self {
            entries: symmetrize(&m),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.entries.row(i).iter().cloned().collect())
            .collect()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `c * S` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "PSD matrices can only be scaled by a nonnegative factor, got {c}"
            )));
        }
        Ok(Self {
            entries: &self.entries * c,
        })
    }

    /// Sum of two PSD matrices of the same dimension.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self::from_symmetric_unchecked(&self.entries + &other.entries))
    }
}

/// A symmetric matrix of unit Frobenius norm, used as the direction of
/// matrix directional derivatives `tr(grad F * V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDirection {
    entries: DMatrix<f64>,
}

impl SymmetricDirection {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `tr(A V)` for symmetric `A`.
    pub fn contract(&self, a: &DMatrix<f64>) -> f64 {
        frobenius_inner(a, &self.entries)
    }

    /// Normalized symmetric direction with i.i.d. standard normal entries
    /// in the upper triangle.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let z: f64 = rng.sample(StandardNormal);
                m[(i, j)] = z;
                m[(j, i)] = z;
            }
        }
        make_direction(&m).expect("a Gaussian matrix is nonzero almost surely")
    }

    /// Unit direction along the symmetric basis element `E_ij + E_ji`.
    pub fn coordinate(dim: usize, i: usize, j: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, j)] = 1.0;
        m[(j, i)] = 1.0;
        make_direction(&m).expect("coordinate direction is nonzero")
    }
}

/// Lower-triangular factor `L` with `L L^T = S`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// `log |S| = 2 sum_i log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|x| x.ln()).sum::<f64>()
    }

    /// `S^{-1}` via two triangular solves against the identity.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut linv = DMatrix::zeros(n, n);
        for col in 0..n {
            for i in col..n {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for k in col..i {
                    s -= self.lower[(i, k)] * linv[(k, col)];
                }
                linv[(i, col)] = s / self.lower[(i, i)];
            }
        }
        symmetrize(&(linv.transpose() * &linv))
    }
}

/// Cholesky factorization of a strictly positive definite matrix.
pub fn cholesky(s: &SymmetricPSDMatrix) -> Result<CholeskyFactor> {
    cholesky_dense(s.as_matrix()).map(|lower| CholeskyFactor { lower })
}

pub(crate) fn cholesky_dense(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {j} is {d:e}"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Returns `(S^{-1}, log |S|)`.
pub fn inverse_and_logdet(s: &SymmetricPSDMatrix) -> Result<(SymmetricPSDMatrix, f64)> {
    let chol = cholesky(s)?;
    Ok((
        SymmetricPSDMatrix::from_symmetric_unchecked(chol.inverse()),
        chol.log_det(),
    ))
}

/// Nearest (Frobenius) symmetric matrix whose eigenvalues are at least
/// `floor`. Matrices already above the floor are returned unchanged.
pub fn project_psd(m: &DMatrix<f64>, floor: f64) -> SymmetricPSDMatrix {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return SymmetricPSDMatrix { entries: sym };
    }
    let clipped = eig.eigenvalues.map(|l| l.max(floor));
    let v = &eig.eigenvectors;
    let rebuilt = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    SymmetricPSDMatrix::from_symmetric_unchecked(rebuilt)
}

/// `(M + M^T) / (2 ||(M + M^T)/2||_F)`.
pub fn make_direction(m: &DMatrix<f64>) -> Result<SymmetricDirection> {
    square_dim(m)?;
    let sym = symmetrize(m);
    let norm = sym.norm();
    if !(norm >= ZERO_DIRECTION_NORM) {
        return Err(Error::ZeroDirection(norm));
    }
    Ok(SymmetricDirection {
        entries: sym / norm,
    })
}
