//! Dense complex linear algebra and adaptive ODE integration.
//!
//! Everything downstream (models, Lax flow, propagation) works on small dense
//! square matrices, so a thin newtype over `nalgebra::DMatrix<Complex64>` is
//! all that is needed here.

mod ode;
mod tableau;

pub use ode::{integrate, integrate_with_stats, OdeOutcome, OdeSettings};

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Relative Hermiticity tolerance applied to inputs of [`hermitian_eigs`].
pub const HERMITIAN_RTOL: f64 = 1e-13;

/// Square complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(n >= 1, "matrix dimension must be at least 1");
        Self(DMatrix::from_fn(n, n, f))
    }

    /// Builds from row-major rows. Panics on ragged or non-square input.
    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "rows must form a square matrix");
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "rows must form a square matrix");
        Self::from_fn(n, |i, j| C64::new(rows[i][j], 0.0))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            m.0[(i, i)] = C64::new(*d, 0.0);
        }
        m
    }

    pub fn from_nalgebra(m: DMatrix<C64>) -> Self {
        assert!(m.is_square() && m.nrows() >= 1, "matrix must be square");
        Self(m)
    }

    pub fn as_nalgebra(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: C64) {
        self.0[(i, j)] = value;
    }

    /// Sets `(i, j)` to `value` and `(j, i)` to its conjugate.
    pub fn set_hermitian_pair(&mut self, i: usize, j: usize, value: C64) {
        self.0[(i, j)] = value;
        self.0[(j, i)] = value.conj();
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// `self + s * other`, in place.
    pub fn axpy(&mut self, s: C64, other: &Self) {
        self.0.zip_apply(&other.0, |a, b| *a += s * b);
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()))
    }

    /// max |M - M^dagger|.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.dim();
        let mut dev = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_deviation() <= HERMITIAN_RTOL * self.max_abs()
    }

    /// Entrywise squared moduli, row-major.
    pub fn abs_sq_rows(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.0[(i, j)].norm_sqr()).collect())
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.0[(i, j)]).collect()).collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim()).map(|i| self.0[(i, i)]).collect()
    }

    /// Column `j` as a vector.
    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.dim()).map(|i| self.0[(i, j)]).collect()
    }

    /// max |U^dagger U - I|.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.adjoint() * self.clone();
        prod.max_abs_diff(&Self::identity(self.dim()))
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim(), self.dim())?;
        for i in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|j| {
                    let z = self.0[(i, j)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl Add for ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 - rhs.0)
    }
}

impl<'a> Sub<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> Self {
        Self(self.0 * rhs.0)
    }
}

impl<'a> Mul<&'a ComplexMatrix> for &'a ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> Self {
        Self(-self.0)
    }
}

/// `AB - BA`.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(&(a * b) - &(b * a))
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, matched to `values`.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, i: usize) -> Vec<C64> {
        self.vectors.column(i)
    }

    /// `sum_i lambda_i v_i v_i^dagger`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n = self.values.len();
        let v = &self.vectors;
        ComplexMatrix::from_fn(n, |r, c| {
            (0..n)
                .map(|k| v.get(r, k) * v.get(c, k).conj() * self.values[k])
                .sum()
        })
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigs(m: &ComplexMatrix) -> Result<HermitianEigen> {
    let deviation = m.hermitian_deviation();
    if deviation > HERMITIAN_RTOL * m.max_abs() {
        return Err(Error::NotHermitian { deviation });
    }
    let n = m.dim();
    let diagonal = (0..n).all(|r| (0..n).all(|c| r == c || m.0[(r, c)] == C64::new(0.0, 0.0)));
    if diagonal {
        // exact: the solver would perturb the entries by round-off
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| m.0[(a, a)].re.total_cmp(&m.0[(b, b)].re));
        let values = order.iter().map(|&k| m.0[(k, k)].re).collect();
        let vectors = ComplexMatrix::from_fn(n, |r, c| {
            if r == order[c] {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        return Ok(HermitianEigen { values, vectors });
    }
    // symmetrize so the solver only sees round-off-free Hermitian input
    let sym = (m.0.clone() + m.0.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn pauli() -> [ComplexMatrix; 3] {
        [
            ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]),
            ComplexMatrix::from_rows(&[vec![c(0.0), -I], vec![I, c(0.0)]]),
            ComplexMatrix::from_real_diagonal(&[1.0, -1.0]),
        ]
    }

    #[test]
    fn eigs_of_diagonal_are_sorted_with_basis_vectors() {
        let e = hermitian_eigs(&ComplexMatrix::from_real_diagonal(&[1.0, -1.0])).unwrap();
        assert_eq!(e.values, vec![-1.0, 1.0]);
        assert!((e.vectors.get(1, 0).norm() - 1.0).abs() < 1e-15);
        assert!((e.vectors.get(0, 1).norm() - 1.0).abs() < 1e-15);

        let e = hermitian_eigs(&ComplexMatrix::from_real_diagonal(&[1.0, 0.0, -1.0])).unwrap();
        assert_eq!(e.values, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn eigs_of_sigma_x() {
        let [sx, _, _] = pauli();
        let e = hermitian_eigs(&sx).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vector(0);
        // (1, -1)/sqrt2 up to a global phase
        let overlap = inner(&[c(h), c(-h)], &v0).norm();
        assert!((overlap - 1.0).abs() < 1e-14);
        let overlap = inner(&[c(h), c(h)], &e.vector(1)).norm();
        assert!((overlap - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigs_reject_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]);
        match hermitian_eigs(&m) {
            Err(Error::NotHermitian { deviation }) => assert!((deviation - 0.5).abs() < 1e-15),
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn eigs_residual_orthonormality_and_reconstruction() {
        let m = ComplexMatrix::from_fn(5, |i, j| {
            let (i, j) = (i as f64, j as f64);
            if i == j {
                c(i * 0.7 - 1.0)
            } else if i < j {
                C64::new((i + 2.0 * j).sin(), (i * j).cos())
            } else {
                C64::new((j + 2.0 * i).sin(), -(i * j).cos())
            }
        });
        let e = hermitian_eigs(&m).unwrap();
        let scale = m.max_abs();
        for k in 0..5 {
            let v = e.vector(k);
            for r in 0..5 {
                let mv: C64 = (0..5).map(|c| m.get(r, c) * v[c]).sum();
                assert!((mv - v[r] * e.values[k]).norm() <= 1e-12 * scale);
            }
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(e.vectors.unitarity_defect() < 1e-12);
        assert!(e.reconstruct().max_abs_diff(&m) < 1e-11 * scale);
    }

    #[test]
    fn commutator_pauli_algebra() {
        let [sx, sy, sz] = pauli();
        let comm = commutator(&sx, &sy).unwrap();
        assert!(comm.max_abs_diff(&sz.scale(C64::new(0.0, 2.0))) < 1e-15);
        assert_eq!(commutator(&sx, &sx).unwrap().max_abs(), 0.0);
        let d1 = ComplexMatrix::from_real_diagonal(&[1.5, -0.25]);
        let d2 = ComplexMatrix::from_real_diagonal(&[3.0, 7.0]);
        assert_eq!(commutator(&d1, &d2).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn commutator_dimension_mismatch() {
        let err = commutator(&ComplexMatrix::zeros(2), &ComplexMatrix::zeros(3)).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { left: 2, right: 3 });
    }
}
