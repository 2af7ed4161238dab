//! Dense complex operators on the initial space ℂⁿ and density states.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Tolerance used when validating user-supplied states and Hamiltonians.
pub const VALIDATION_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// A square complex matrix acting on ℂⁿ.
#[derive(Clone, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl Operator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid(
                "operator",
                format!(
                    "expected a non-empty square matrix, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("operator", "non-finite entry"));
        }
        Ok(Operator(matrix))
    }

    /// Wraps a matrix that is known to be square and finite.
    pub(crate) fn from_matrix_unchecked(matrix: DMatrix<C64>) -> Self {
        debug_assert_eq!(matrix.nrows(), matrix.ncols());
        Operator(matrix)
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Operator(DMatrix::from_fn(n, n, |i, j| if i == j { diag[i] } else { ZERO }))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    /// Row-major construction; panics on ragged input.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("operator", "rows are not square"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Builds a matrix from sparse `(row, col, re, im)` entries. Repeated
    /// coordinates are summed.
    pub fn from_sparse(dim: usize, entries: &[(usize, usize, f64, f64)]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        let mut m = DMatrix::zeros(dim, dim);
        for &(r, c, re, im) in entries {
            if r >= dim || c >= dim {
                return Err(Error::invalid(
                    "operator",
                    format!("entry ({r}, {c}) outside a {dim}x{dim} matrix"),
                ));
            }
            m[(r, c)] += C64::new(re, im);
        }
        Self::new(m)
    }

    /// Outer product |u⟩⟨v|.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        let n = u.len();
        assert_eq!(n, v.len());
        Operator(DMatrix::from_fn(n, n, |i, j| u[i] * v[j].conj()))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Operator(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, z: C64) -> Self {
        Operator(&self.0 * z)
    }

    pub fn scale_re(&self, x: f64) -> Self {
        Operator(self.0.map(|z| z * x))
    }

    /// [self, other] = self·other − other·self
    pub fn commutator(&self, other: &Operator) -> Self {
        Operator(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// {self, other} = self·other + other·self
    pub fn anticommutator(&self, other: &Operator) -> Self {
        Operator(&self.0 * &other.0 + &other.0 * &self.0)
    }

    /// trace(self · other), the pairing that turns a density matrix into a
    /// functional on observables.
    pub fn trace_product(&self, other: &Operator) -> C64 {
        let n = self.dim();
        let mut acc = ZERO;
        for i in 0..n {
            for k in 0..n {
                acc += self.0[(i, k)] * other.0[(k, i)];
            }
        }
        acc
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// max |A − A*| entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// (A + A*)/2, computed so that the result is exactly Hermitian.
    pub fn hermitian_part(&self) -> Self {
        let n = self.dim();
        let mut m = self.0.clone();
        for i in 0..n {
            m[(i, i)] = C64::new(self.0[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let z = (self.0[(i, j)] + self.0[(j, i)].conj()) * 0.5;
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        Operator(m)
    }

    /// Eigen-decomposition of the Hermitian part: ascending eigenvalues and
    /// the matching orthonormal eigenvectors as columns.
    pub fn eigh(&self) -> (Vec<f64>, DMatrix<C64>) {
        let eig = self.hermitian_part().0.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let n = self.dim();
        let vectors = DMatrix::from_fn(n, order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
        (values, vectors)
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim() == 2 {
            // closed form; this sits on the per-step monitoring path
            let a = self.0[(0, 0)].re;
            let d = self.0[(1, 1)].re;
            let b = (self.0[(0, 1)] + self.0[(1, 0)].conj()) * 0.5;
            let mean = 0.5 * (a + d);
            let half_gap = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            return mean - half_gap;
        }
        self.hermitian_part()
            .0
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Applies a real function to a Hermitian operator through its spectrum.
    pub fn hermitian_function(&self, f: impl Fn(f64) -> C64) -> Self {
        let (values, vectors) = self.eigh();
        let n = self.dim();
        let diag = DMatrix::from_fn(n, n, |i, j| if i == j { f(values[i]) } else { ZERO });
        Operator(&vectors * diag * vectors.adjoint())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn check_dim(&self, expected: usize, context: &'static str) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
                context,
            });
        }
        Ok(())
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<C64> {
        let n = self.dim();
        (0..n * n).map(|k| self.0[(k / n, k % n)]).collect()
    }

    pub fn from_row_major(dim: usize, data: &[C64]) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::invalid(
                "operator",
                format!("expected {} entries, got {}", dim * dim, data.len()),
            ));
        }
        Self::new(DMatrix::from_fn(dim, dim, |i, j| data[i * dim + j]))
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator{}", self.0)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&Operator> for &Operator {
            type Output = Operator;
            fn $method(self, rhs: &Operator) -> Operator {
                Operator(&self.0 $op &rhs.0)
            }
        }
        impl $trait<Operator> for Operator {
            type Output = Operator;
            fn $method(self, rhs: Operator) -> Operator {
                Operator(self.0 $op rhs.0)
            }
        }
        impl $trait<&Operator> for Operator {
            type Output = Operator;
            fn $method(self, rhs: &Operator) -> Operator {
                Operator(self.0 $op &rhs.0)
            }
        }
        impl $trait<Operator> for &Operator {
            type Output = Operator;
            fn $method(self, rhs: Operator) -> Operator {
                Operator(&self.0 $op rhs.0)
            }
        }
    };
}

binop!(Add, add, +);
binop!(Sub, sub, -);
binop!(Mul, mul, *);

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-self.0)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, z: C64) -> Operator {
        self.scale(z)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, x: f64) -> Operator {
        self.scale_re(x)
    }
}

impl Mul<C64> for Operator {
    type Output = Operator;
    fn mul(self, z: C64) -> Operator {
        Operator(self.0 * z)
    }
}

impl Mul<f64> for Operator {
    type Output = Operator;
    fn mul(self, x: f64) -> Operator {
        Operator(self.0 * C64::new(x, 0.0))
    }
}

/// A density matrix: Hermitian, positive, unit trace (all to
/// [`VALIDATION_TOL`]).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityState(Operator);

impl DensityState {
    pub fn new(op: Operator) -> Result<Self> {
        Self::with_tolerance(op, VALIDATION_TOL)
    }

    pub fn with_tolerance(op: Operator, tol: f64) -> Result<Self> {
        let defect = op.hermiticity_defect();
        if defect > tol {
            return Err(Error::invalid("rho0", format!("not Hermitian (defect {defect:.3e})")));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > tol {
            return Err(Error::invalid("rho0", format!("trace {tr} differs from 1")));
        }
        let min_eig = op.min_eigenvalue();
        if min_eig < -tol {
            return Err(Error::invalid("rho0", format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(DensityState(op))
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalized) nonzero vector.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(Error::invalid("rho0", "zero or non-finite state vector"));
        }
        let s = 1.0 / norm2.sqrt();
        let v: Vec<C64> = psi.iter().map(|z| z * s).collect();
        Self::new(Operator::outer(&v, &v))
    }

    /// The basis projector |k⟩⟨k|.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::invalid("rho0", format!("basis index {k} out of range")));
        }
        let mut v = vec![ZERO; dim];
        v[k] = ONE;
        Self::pure(&v)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityState(Operator::identity(dim).scale_re(1.0 / dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn op(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    /// ⟨X⟩ = trace(ρX).
    pub fn expect(&self, x: &Operator) -> C64 {
        self.0.trace_product(x)
    }
}

/// Qubit operators in the basis (|g⟩, |e⟩) with σ⁻|e⟩ = |g⟩.
pub mod qubit {
    use super::*;

    pub fn sigma_minus() -> Operator {
        Operator::from_rows(&[vec![ZERO, ONE], vec![ZERO, ZERO]]).unwrap()
    }

    pub fn sigma_plus() -> Operator {
        sigma_minus().adjoint()
    }

    /// |e⟩⟨e| − |g⟩⟨g|
    pub fn sigma_z() -> Operator {
        Operator::from_real_diagonal(&[-1.0, 1.0])
    }

    pub fn sigma_x() -> Operator {
        Operator::from_rows(&[vec![ZERO, ONE], vec![ONE, ZERO]]).unwrap()
    }

    pub fn sigma_y() -> Operator {
        Operator::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]).unwrap()
    }

    pub fn ground() -> DensityState {
        DensityState::basis(2, 0).unwrap()
    }

    pub fn excited() -> DensityState {
        DensityState::basis(2, 1).unwrap()
    }
}
