//! Functions of real symmetric positive-definite matrices.
//!
//! Everything here works in the eigenbasis of the input: with
//! `C = U diag(c) Uᵀ`, the square root and inverse square root are
//! `U diag(c^{±1/2}) Uᵀ`, and the Sylvester equation
//! `X C^{1/2} + C^{1/2} X = R` decouples into `X̃ᵢⱼ = R̃ᵢⱼ / (sᵢ + sⱼ)` with
//! `sᵢ = √cᵢ` and `R̃ = Uᵀ R U`. The eigendecomposition is computed once when
//! an [`SpdMatrix`] is built and reused by every derivative routine.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest eigenvalue an [`SpdMatrix`] may have.
///
/// An 8-element array at 0.2λ spacing has λ_min ≈ 1.08e-6, which has to pass.
pub const CONDITIONING_FLOOR: f64 = 1e-12;

/// Relative tolerance on `‖A − Aᵀ‖_max / max(1, ‖A‖_max)`.
const SYMMETRY_TOL: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::contract(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if !(asym <= SYMMETRY_TOL * scale) {
        return Err(Error::contract(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Real symmetric matrix, possibly indefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates symmetry and stores the exactly-symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        Ok(Self(symmetrize(m)))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DMatrix::zeros(dim, dim))
    }

    /// Symmetrizes `m` without validating it. Only for matrices that are
    /// symmetric by construction up to rounding.
    pub(crate) fn from_symmetric_parts(m: DMatrix<f64>) -> Self {
        Self(symmetrize(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// Real symmetric positive-definite matrix together with its
/// eigendecomposition (eigenvalues ascending).
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpdMatrix {
    /// Validates symmetry and definiteness. Fails with
    /// [`Error::IllConditionedCoupling`] when the smallest eigenvalue is below
    /// [`CONDITIONING_FLOOR`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&m)?;
        let matrix = symmetrize(m);
        let (eigenvalues, eigenvectors) = sorted_eigen(&matrix)?;
        let min_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_eigenvalue >= CONDITIONING_FLOOR) {
            return Err(Error::IllConditionedCoupling { min_eigenvalue });
        }
        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            eigenvalues: DVector::from_element(dim, 1.0),
            eigenvectors: DMatrix::identity(dim, dim),
        }
    }

    /// Builds `U diag(values) Uᵀ` directly from a known decomposition.
    fn from_eigen(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let matrix = symmetrize(reconstruct(&vectors, &values));
        Self {
            matrix,
            eigenvalues: values,
            eigenvectors: vectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, one per column, matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_eigen(self.eigenvalues.map(f), self.eigenvectors.clone())
    }

    /// Solves `X·C^{1/2} + C^{1/2}·X = rhs` for this matrix `C`.
    fn solve_sqrt_sylvester(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let mut tilde = u.transpose() * rhs * u;
        let s = self.eigenvalues.map(f64::sqrt);
        for j in 0..tilde.ncols() {
            for i in 0..tilde.nrows() {
                tilde[(i, j)] /= s[i] + s[j];
            }
        }
        u * tilde * u.transpose()
    }

    fn check_dim(&self, other: &SymMatrix, what: &str) -> Result<()> {
        if other.dim() != self.dim() {
            return Err(Error::contract(format!(
                "{what} is {0}x{0}, expected {1}x{1}",
                other.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Ascending eigenpairs. nalgebra's symmetric QR iteration leaves residuals
/// near 1e-9 on sinc-type matrices, which the finite-difference checks of the
/// derivatives can see, so the decomposition goes through faer.
fn sorted_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let evd = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)])
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::contract(format!("eigendecomposition failed: {e:?}")))?;
    let (s, u) = (evd.S().column_vector(), evd.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| s[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| u[(r, order[c])]);
    Ok((values, vectors))
}

fn reconstruct(vectors: &DMatrix<f64>, values: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= values[j];
    }
    scaled * vectors.transpose()
}

/// Principal square root `S` with `S·S = C`.
pub fn spd_sqrt(c: &SpdMatrix) -> SpdMatrix {
    c.map_spectrum(f64::sqrt)
}

/// Inverse principal square root `W` with `W·C·W = I`.
pub fn spd_inv_sqrt(c: &SpdMatrix) -> SpdMatrix {
    c.map_spectrum(|v| 1.0 / v.sqrt())
}

/// Solves `A·X + X·B = Q` for positive-definite `A` and `B`.
///
/// Both matrices are diagonalized; in the joint eigenbasis the equation is
/// entrywise, `X̃ᵢⱼ = Q̃ᵢⱼ / (αᵢ + βⱼ)`, and the denominators are positive.
pub fn solve_sylvester(a: &SpdMatrix, b: &SpdMatrix, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.nrows() != a.dim() || q.ncols() != b.dim() {
        return Err(Error::contract(format!(
            "sylvester: A is {0}x{0}, B is {1}x{1}, but Q is {2}x{3}",
            a.dim(),
            b.dim(),
            q.nrows(),
            q.ncols()
        )));
    }
    let (u, v) = (&a.eigenvectors, &b.eigenvectors);
    let mut tilde = u.transpose() * q * v;
    for j in 0..tilde.ncols() {
        for i in 0..tilde.nrows() {
            tilde[(i, j)] /= a.eigenvalues[i] + b.eigenvalues[j];
        }
    }
    Ok(u * tilde * v.transpose())
}

/// Directional derivative of `C^{1/2}` along `dc`: the solution of
/// `D·C^{1/2} + C^{1/2}·D = dC`.
pub fn d_sqrt(c: &SpdMatrix, dc: &SymMatrix) -> Result<SymMatrix> {
    c.check_dim(dc, "dC")?;
    Ok(SymMatrix::from_symmetric_parts(c.solve_sqrt_sylvester(dc.as_matrix())))
}

/// Directional derivative of `C^{-1/2}` along `dc`: the solution of
/// `D·C^{1/2} + C^{1/2}·D = −C^{-1/2}·dC·C^{-1/2}`.
pub fn d_inv_sqrt(c: &SpdMatrix, dc: &SymMatrix) -> Result<SymMatrix> {
    c.check_dim(dc, "dC")?;
    let w = spd_inv_sqrt(c);
    Ok(d_inv_sqrt_with(c, w.as_matrix(), dc))
}

fn d_inv_sqrt_with(c: &SpdMatrix, w: &DMatrix<f64>, dc: &SymMatrix) -> SymMatrix {
    let rhs = -(w * dc.as_matrix() * w);
    SymMatrix::from_symmetric_parts(c.solve_sqrt_sylvester(&rhs))
}

/// First and second directional derivatives of `C^{-1/2}` along a path with
/// velocity `dc` and acceleration `d2c`.
#[derive(Debug, Clone)]
pub struct InvSqrtDerivs {
    pub first: SymMatrix,
    pub second: SymMatrix,
}

/// Computes both derivatives of `C^{-1/2}` with three Sylvester solves that
/// share one eigendecomposition.
///
/// The second derivative solves
/// `D₂·C^{1/2} + C^{1/2}·D₂ = −W·d²C·W − W·dC·D₁ − D₁·dC·W − S₁·D₁ − D₁·S₁`
/// where `W = C^{-1/2}`, `D₁` is the first derivative of `W` and `S₁` that of
/// `C^{1/2}`.
pub fn inv_sqrt_derivs(c: &SpdMatrix, dc: &SymMatrix, d2c: &SymMatrix) -> Result<InvSqrtDerivs> {
    c.check_dim(dc, "dC")?;
    c.check_dim(d2c, "d2C")?;
    let w = spd_inv_sqrt(c);
    let w = w.as_matrix();
    let d1 = d_inv_sqrt_with(c, w, dc);
    let s1 = c.solve_sqrt_sylvester(dc.as_matrix());
    let (d1m, dcm) = (d1.as_matrix(), dc.as_matrix());

    let w_dc_d1 = w * dcm * d1m;
    let s1_d1 = &s1 * d1m;
    let rhs = -(w * d2c.as_matrix() * w) - &w_dc_d1 - w_dc_d1.transpose() - &s1_d1
        - s1_d1.transpose();
    let second = SymMatrix::from_symmetric_parts(c.solve_sqrt_sylvester(&rhs));
    Ok(InvSqrtDerivs { first: d1, second })
}

/// Second directional derivative of `C^{-1/2}`; see [`inv_sqrt_derivs`].
pub fn d2_inv_sqrt(c: &SpdMatrix, dc: &SymMatrix, d2c: &SymMatrix) -> Result<SymMatrix> {
    Ok(inv_sqrt_derivs(c, dc, d2c)?.second)
}
