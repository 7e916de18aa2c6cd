use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64, I};

/// Spin matrices of the k-dimensional irreducible su(2) representation.
///
/// The reference basis is ordered by descending magnetic number, so row `r`
/// carries `m = (k-1)/2 - r`.
#[derive(Debug, Clone)]
pub struct SpinRep {
    pub k: usize,
    pub x: ComplexMatrix,
    pub y: ComplexMatrix,
    pub z: ComplexMatrix,
}

impl SpinRep {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "spin representation dimension must be >= 2, got {k}"
            )));
        }
        let z = ComplexMatrix::from_real_diagonal(&magnetic_numbers(k));
        let mut raise = ComplexMatrix::zeros(k);
        // T+ |m-1> = a+(m) |m>: row r (m) column r+1 (m-1)
        for r in 0..k - 1 {
            let m = spin_j(k) - r as f64;
            raise.set(r, r + 1, C64::new(ladder_plus(k, m), 0.0));
        }
        let lower = raise.adjoint();
        let x = (&raise + &lower).scale_real(0.5);
        let y = (&raise - &lower).scale(-I * 0.5);
        Ok(Self { k, x, y, z })
    }

    pub fn j(&self) -> f64 {
        spin_j(self.k)
    }

    /// `v1 X + v2 Y + v3 Z`.
    pub fn combine(&self, v: [f64; 3]) -> ComplexMatrix {
        let mut m = self.x.scale_real(v[0]);
        m.axpy(C64::new(v[1], 0.0), &self.y);
        m.axpy(C64::new(v[2], 0.0), &self.z);
        m
    }

    /// Coefficients of `m` along (X, Y, Z) under the trace inner product.
    pub fn decompose(&self, m: &ComplexMatrix) -> [f64; 3] {
        let norm = casimir_trace(self.k);
        [&self.x, &self.y, &self.z].map(|s| ((m * s).trace().re) / norm)
    }

    /// Ladder of eigenvalues of any unit-norm combination: `-j, ..., j`.
    pub fn ladder(&self) -> Vec<f64> {
        let j = self.j();
        (0..self.k).map(|r| r as f64 - j).collect()
    }
}

pub fn spin_j(k: usize) -> f64 {
    (k as f64 - 1.0) / 2.0
}

/// Diagonal of Z in the reference basis, descending.
pub fn magnetic_numbers(k: usize) -> Vec<f64> {
    let j = spin_j(k);
    (0..k).map(|r| j - r as f64).collect()
}

/// `a+(k, m) = sqrt((j + m)(j - m + 1))`, the amplitude linking `m - 1` to `m`.
pub fn ladder_plus(k: usize, m: f64) -> f64 {
    let j = spin_j(k);
    ((j + m) * (j - m + 1.0)).max(0.0).sqrt()
}

/// `a-(k, m) = sqrt((j - m)(j + m + 1))`, the amplitude linking `m + 1` to `m`.
pub fn ladder_minus(k: usize, m: f64) -> f64 {
    let j = spin_j(k);
    ((j - m) * (j + m + 1.0)).max(0.0).sqrt()
}

/// `Tr(X^2) = Tr(Y^2) = Tr(Z^2) = j(j+1)(2j+1)/3`.
fn casimir_trace(k: usize) -> f64 {
    let j = spin_j(k);
    j * (j + 1.0) * (2.0 * j + 1.0) / 3.0
}
