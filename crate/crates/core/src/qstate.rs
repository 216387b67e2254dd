//! Two-qubit states and the dense complex linear algebra behind them.
//!
//! Basis ordering is `{|00⟩, |01⟩, |10⟩, |11⟩}` with the signal photon as the
//! first tensor factor and the idler as the second.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// General dense complex matrix.
pub type ComplexMatrix = DMatrix<C64>;

/// Frobenius bound on `‖ρ − ρ†‖`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Bound on `|Tr ρ − 1|`.
pub const TRACE_TOL: f64 = 1e-12;
/// Eigenvalues down to `-PSD_TOL` are treated as numerical zeros and clamped.
pub const PSD_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of two single-qubit operators.
pub fn tensor2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Entrywise comparison: `max |aᵢⱼ − bᵢⱼ| ≤ tol` and equal shapes.
pub fn approx_eq(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= tol)
}

pub fn pauli_x() -> Matrix2<C64> {
    Matrix2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Matrix2<C64> {
    Matrix2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Matrix2<C64> {
    Matrix2::new(ONE, ZERO, ZERO, -ONE)
}

fn hermitian_part(m: &Matrix4<C64>) -> Matrix4<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn hermitian_eigen(m: &Matrix4<C64>) -> (Vector4<f64>, Matrix4<C64>) {
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector4::from_iterator(order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = Matrix4::zeros();
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Eigenvalues below this fraction of the largest are rounding noise.
const EIGEN_NOISE: f64 = 1e-14;

/// PSD square root of a Hermitian matrix. Eigenvalues in `[-PSD_TOL, 0)` are
/// clamped, as are positive ones at rounding-noise level.
pub fn psd_sqrt(m: &Matrix4<C64>) -> Result<Matrix4<C64>> {
    let (values, vectors) = hermitian_eigen(m);
    if values[0] < -PSD_TOL {
        return Err(Error::NotPositive {
            min_eigenvalue: values[0],
        });
    }
    let floor = EIGEN_NOISE * values[3].max(0.0);
    let roots = Matrix4::from_diagonal(&values.map(|v| C64::new(if v > floor { v.sqrt() } else { 0.0 }, 0.0)));
    Ok(vectors * roots * vectors.adjoint())
}

fn validate(m: &Matrix4<C64>) -> Result<()> {
    let deviation = (m - m.adjoint()).norm();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let trace = m.trace();
    if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
        return Err(Error::BadTrace { trace: trace.re });
    }
    let (values, _) = hermitian_eigen(m);
    if values[0] < -PSD_TOL {
        return Err(Error::NotPositive {
            min_eigenvalue: values[0],
        });
    }
    Ok(())
}

/// A normalised state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Ket(DVector<C64>);

impl Ket {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalised { norm });
        }
        Ok(Ket(v))
    }

    /// Normalises `amplitudes` rather than rejecting them.
    pub fn normalised(amplitudes: Vec<C64>) -> Result<Self> {
        let v = DVector::from_vec(amplitudes);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::NotNormalised { norm });
        }
        Ok(Ket(v / C64::new(norm, 0.0)))
    }

    fn qubit(a: C64, b: C64) -> Self {
        Ket(DVector::from_vec(vec![a, b]))
    }

    pub fn zero() -> Self {
        Self::qubit(ONE, ZERO)
    }

    pub fn one() -> Self {
        Self::qubit(ZERO, ONE)
    }

    pub fn plus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(h, 0.0), C64::new(h, 0.0))
    }

    pub fn minus() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(h, 0.0), C64::new(-h, 0.0))
    }

    pub fn plus_i() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(h, 0.0), C64::new(0.0, h))
    }

    pub fn minus_i() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::qubit(C64::new(h, 0.0), C64::new(0.0, -h))
    }

    /// Computational basis state of two qubits, `index` in `0..4`.
    pub fn basis2(index: usize) -> Self {
        let mut v = DVector::zeros(4);
        v[index] = ONE;
        Ket(v)
    }

    /// `(|00⟩ + |11⟩)/√2`.
    pub fn phi_plus() -> Self {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Ket(DVector::from_vec(vec![h, ZERO, ZERO, h]))
    }

    pub fn tensor(&self, other: &Ket) -> Ket {
        Ket(self.0.kronecker(&other.0))
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|ψ⟩⟨ψ|` as a general matrix.
    pub fn projector(&self) -> ComplexMatrix {
        &self.0 * self.0.adjoint()
    }
}

/// A validated two-qubit density matrix: Hermitian, unit trace, PSD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReImMatrix", into = "ReImMatrix")]
pub struct DensityMatrix(Matrix4<C64>);

impl DensityMatrix {
    pub fn new(matrix: Matrix4<C64>) -> Result<Self> {
        validate(&matrix)?;
        Ok(DensityMatrix(matrix))
    }

    pub fn from_matrix(matrix: &ComplexMatrix) -> Result<Self> {
        if matrix.shape() != (4, 4) {
            return Err(Error::Shape {
                expected: "4x4",
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        Self::new(Matrix4::from_fn(|i, j| matrix[(i, j)]))
    }

    /// Symmetrises and renormalises before validating. For matrices that are
    /// physical up to rounding, such as products `L·L†`.
    pub fn from_unnormalised(matrix: &Matrix4<C64>) -> Result<Self> {
        let h = hermitian_part(matrix);
        let trace = h.trace().re;
        if trace <= 0.0 || !trace.is_finite() {
            return Err(Error::BadTrace { trace });
        }
        Self::new(h / C64::new(trace, 0.0))
    }

    pub fn from_ket(ket: &Ket) -> Result<Self> {
        if ket.dim() != 4 {
            return Err(Error::Shape {
                expected: "4x1",
                rows: ket.dim(),
                cols: 1,
            });
        }
        Self::from_matrix(&ket.projector())
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Matrix4::identity() * C64::new(0.25, 0.0))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn to_complex_matrix(&self) -> ComplexMatrix {
        DMatrix::from_fn(4, 4, |i, j| self.0[(i, j)])
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vector4<f64> {
        hermitian_eigen(&self.0).0
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ|ρᵢⱼ|² for Hermitian ρ
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn matrix_sqrt(&self) -> Result<ComplexMatrix> {
        let root = psd_sqrt(&self.0)?;
        Ok(DMatrix::from_fn(4, 4, |i, j| root[(i, j)]))
    }

    /// Root fidelity `Tr √(√ρ σ √ρ)`, evaluated as the trace norm of `√ρ·√σ`.
    pub fn fidelity(&self, other: &DensityMatrix) -> Result<f64> {
        let product = psd_sqrt(&self.0)? * psd_sqrt(&other.0)?;
        let f: f64 = product.singular_values().iter().sum();
        Ok(f.min(1.0))
    }

    /// `Tr(Πρ)` for a Hermitian operator `Π`.
    pub fn expectation(&self, op: &Matrix4<C64>) -> f64 {
        (op * self.0).trace().re
    }

    /// `U ρ U†` for a unitary `U`.
    pub fn evolve(&self, unitary: &Matrix4<C64>) -> Result<DensityMatrix> {
        Self::from_unnormalised(&(unitary * self.0 * unitary.adjoint()))
    }
}

/// Free-function form of [`DensityMatrix::purity`].
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.purity()
}

/// Free-function form of [`DensityMatrix::fidelity`].
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    a.fidelity(b)
}

/// Free-function form of [`DensityMatrix::matrix_sqrt`].
pub fn matrix_sqrt(rho: &DensityMatrix) -> Result<ComplexMatrix> {
    rho.matrix_sqrt()
}

/// Random full-rank state from the Ginibre ensemble (`G G† / Tr`).
pub fn random_density_matrix<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    random_density_matrix_rank(rng, 4)
}

/// Random state of at most the given rank (1 gives a random pure state).
pub fn random_density_matrix_rank<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> DensityMatrix {
    let rank = rank.clamp(1, 4);
    let g = DMatrix::<C64>::from_fn(4, rank, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let m = &g * g.adjoint();
    let m4 = Matrix4::from_fn(|i, j| m[(i, j)]);
    DensityMatrix::from_unnormalised(&m4).expect("Ginibre product is PSD")
}

#[derive(Serialize, Deserialize)]
struct ReImMatrix {
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

impl From<DensityMatrix> for ReImMatrix {
    fn from(rho: DensityMatrix) -> Self {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = rho.0[(i, j)].re;
                im[i][j] = rho.0[(i, j)].im;
            }
        }
        ReImMatrix { re, im }
    }
}

impl TryFrom<ReImMatrix> for DensityMatrix {
    type Error = Error;

    fn try_from(m: ReImMatrix) -> Result<Self> {
        DensityMatrix::new(Matrix4::from_fn(|i, j| C64::new(m.re[i][j], m.im[i][j])))
    }
}
