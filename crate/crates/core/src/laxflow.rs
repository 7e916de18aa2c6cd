//! Spin-family scattering matrices from the Lax equation `i dV/dt = [V, H]`.
//!
//! The Lax matrix `V = v1 X + v2 Y + v3 Z` keeps its spectrum along the flow
//! and its eigenvectors are carried by the evolution operator, so transition
//! probabilities follow from traces of eigenprojectors of the asymptotic
//! `V` against those of `-Z`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{AffineModel, Family, SpinRep};
use crate::numerics::{self, ComplexMatrix, OdeSettings, C64, I};

/// Entries below zero by at most this much are clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-12;

/// Transition-probability matrix; entry `(i, j)` is the probability of `j -> i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScatterMatrix {
    rows: Vec<Vec<f64>>,
}

impl ScatterMatrix {
    pub fn from_rows(mut rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("scatter matrix must be square and non-empty".into()));
        }
        for x in rows.iter_mut().flatten() {
            if !x.is_finite() || *x < -NEGATIVE_CLAMP {
                return Err(Error::InvalidParameter(format!("invalid probability {x}")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// 0-based entry.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|j| self.rows.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Largest deviation of any row or column sum from one.
    pub fn stochastic_defect(&self) -> f64 {
        self.row_sums()
            .into_iter()
            .chain(self.col_sums())
            .fold(0.0_f64, |m, s| m.max((s - 1.0).abs()))
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.stochastic_defect() <= tol
            && self.rows.iter().flatten().all(|x| (0.0..=1.0 + tol).contains(x))
    }

    /// Matrix product `self * other`.
    pub fn product(&self, other: &ScatterMatrix) -> ScatterMatrix {
        let n = self.dim();
        assert_eq!(n, other.dim(), "scatter matrix dimensions differ");
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.rows[i][k] * other.rows[k][j]).sum())
                    .collect()
            })
            .collect();
        ScatterMatrix { rows }
    }

    pub fn max_abs_diff(&self, other: &ScatterMatrix) -> f64 {
        assert_eq!(self.dim(), other.dim(), "scatter matrix dimensions differ");
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `S'[i][j] = S[perm[i]][perm[j]]`.
    pub fn permuted(&self, perm: &[usize]) -> ScatterMatrix {
        let n = self.dim();
        assert_eq!(perm.len(), n);
        ScatterMatrix {
            rows: (0..n)
                .map(|i| (0..n).map(|j| self.rows[perm[i]][perm[j]]).collect())
                .collect(),
        }
    }

    pub fn transpose(&self) -> ScatterMatrix {
        let n = self.dim();
        ScatterMatrix {
            rows: (0..n).map(|i| (0..n).map(|j| self.rows[j][i]).collect()).collect(),
        }
    }
}

/// Bloch coefficients of `V` along `(X, Y, Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl BlochVector {
    pub fn new(v1: f64, v2: f64, v3: f64) -> Self {
        Self { v1, v2, v3 }
    }

    pub fn norm(&self) -> f64 {
        (self.v1 * self.v1 + self.v2 * self.v2 + self.v3 * self.v3).sqrt()
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.v1, self.v2, self.v3]
    }

    /// Rotation about the 3-axis by `phi`.
    pub fn rotated_azimuth(&self, phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self::new(self.v1 * c - self.v2 * s, self.v1 * s + self.v2 * c, self.v3)
    }
}

/// Landau-Zener survival probability `u = exp(-pi delta^2 / a)`.
pub fn survival(delta: f64, a: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("slope must be positive, got {a}")));
    }
    Ok((-PI * delta * delta / a).exp())
}

/// Two-level matrix `[[u, v], [v, u]]`.
pub fn lz_closed_form(delta: f64, a: f64) -> Result<ScatterMatrix> {
    let u = survival(delta, a)?;
    let v = 1.0 - u;
    ScatterMatrix::from_rows(vec![vec![u, v], vec![v, u]])
}

/// Asymptotic `v3 = 1 - 2u` of the Lax flow started from `(0, 0, 1)`.
pub fn asymptotic_v3(delta: f64, a: f64) -> Result<f64> {
    Ok(1.0 - 2.0 * survival(delta, a)?)
}

/// Spin representation in the basis order of `model`.
pub fn model_spin_rep(model: &AffineModel) -> Result<SpinRep> {
    let k = match model.family() {
        Family::Lz2 | Family::Spin | Family::Adjoint3 => model.spin_k().expect("spin family"),
        other => {
            return Err(Error::Unsupported(format!(
                "Lax flow needs an su(2) family, got {other}"
            )))
        }
    };
    let rep = SpinRep::new(k)?;
    match model.spin_order() {
        None => Ok(rep),
        Some(order) => {
            let permute =
                |m: &ComplexMatrix| ComplexMatrix::from_fn(k, |i, j| m.get(order[i], order[j]));
            Ok(SpinRep {
                k,
                x: permute(&rep.x),
                y: permute(&rep.y),
                z: permute(&rep.z),
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaxEvolution {
    pub v: ComplexMatrix,
    pub bloch: BlochVector,
    /// Max eigenvalue shift between `V(t0)` and `V(t1)`.
    pub spectral_drift: f64,
}

/// Integrates `i dV/dt = [V, H(t)]` from `t0` to `t1`.
pub fn evolve_lax(
    model: &AffineModel,
    v0: BlochVector,
    t0: f64,
    t1: f64,
    settings: &OdeSettings,
) -> Result<LaxEvolution> {
    if !(t0 < t1) {
        return Err(Error::InvalidParameter(format!("need t0 < t1, got [{t0}, {t1}]")));
    }
    let rep = model_spin_rep(model)?;
    let v_start = rep.combine(v0.as_array());
    let eps = model.eps();
    let rhs = |t: f64, v: &ComplexMatrix| {
        let h = model.hamiltonian_at(t, eps);
        (&(v * &h) - &(&h * v)).scale(-I)
    };
    let v = numerics::integrate(rhs, &v_start, t0, t1, settings)?;
    let before = numerics::hermitian_eigs(&v_start)?.values;
    // the integrator leaves O(rtol) anti-Hermitian noise
    let v_sym = (&v + &v.adjoint()).scale_real(0.5);
    let after = numerics::hermitian_eigs(&v_sym)?.values;
    let spectral_drift = before
        .iter()
        .zip(&after)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let [v1, v2, v3] = rep.decompose(&v);
    Ok(LaxEvolution {
        v,
        bloch: BlochVector::new(v1, v2, v3),
        spectral_drift,
    })
}

/// `prod_{a != i} (M - lambda_a) / (lambda_i - lambda_a)`.
pub fn lagrange_projector(m: &ComplexMatrix, ladder: &[f64], i: usize) -> Result<ComplexMatrix> {
    let n = m.dim();
    if ladder.len() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: ladder.len(),
        });
    }
    if i >= n {
        return Err(Error::InvalidParameter(format!("ladder index {i} out of range")));
    }
    let mut sorted = ladder.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(format!("repeated ladder values in {ladder:?}")));
    }
    let spectrum = numerics::hermitian_eigs(m)?.values;
    let mismatch = spectrum
        .iter()
        .zip(&sorted)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()));
    if mismatch > 1e-8 {
        return Err(Error::SpectrumMismatch(format!(
            "spectrum {spectrum:?} differs from ladder {sorted:?} by {mismatch:e}"
        )));
    }
    Ok(projector_unchecked(m, ladder, i))
}

fn projector_unchecked(m: &ComplexMatrix, ladder: &[f64], i: usize) -> ComplexMatrix {
    let n = m.dim();
    let mut p = ComplexMatrix::identity(n);
    for (a, &lambda) in ladder.iter().enumerate() {
        if a == i {
            continue;
        }
        let mut factor = m.clone();
        factor.axpy(C64::new(-lambda, 0.0), &ComplexMatrix::identity(n));
        p = (&p * &factor).scale_real(1.0 / (ladder[i] - lambda));
    }
    p
}

/// Scattering matrix from projector traces for a given asymptotic Bloch vector.
///
/// Rows and columns are ordered by descending diabatic slope.
pub fn smatrix_from_bloch(k: usize, v_inf: BlochVector) -> Result<ScatterMatrix> {
    let rep = SpinRep::new(k)?;
    let ladder = rep.ladder();
    let v = rep.combine(v_inf.as_array());
    let minus_z = rep.z.scale_real(-1.0);
    let left: Vec<ComplexMatrix> = (0..k)
        .map(|i| lagrange_projector(&v, &ladder, i))
        .collect::<Result<_>>()?;
    let right: Vec<ComplexMatrix> = (0..k)
        .map(|j| lagrange_projector(&minus_z, &ladder, j))
        .collect::<Result<_>>()?;
    let rows = left
        .iter()
        .map(|p| right.iter().map(|q| (p * q).trace().re).collect())
        .collect();
    ScatterMatrix::from_rows(rows)
}

/// Exact scattering matrix of the k-dimensional spin family.
pub fn smatrix_spin(k: usize, delta: f64, a: f64) -> Result<ScatterMatrix> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    let v3 = asymptotic_v3(delta, a)?;
    let v1 = (1.0 - v3 * v3).max(0.0).sqrt();
    smatrix_from_bloch(k, BlochVector::new(v1, 0.0, v3))
}

/// Scattering matrix of any su(2) catalog model, in the model's basis order.
pub fn smatrix_for_model(model: &AffineModel) -> Result<ScatterMatrix> {
    let k = model_spin_rep(model)?.k;
    let s = smatrix_spin(k, model.delta(), model.slope())?;
    Ok(match model.spin_order() {
        Some(order) => s.permuted(order),
        None => s,
    })
}

/// `C(N-1, j-1) u^(N-j) v^(j-1)`: first-row entries of the spin family.
pub fn first_row_element(n: usize, delta: f64, a: f64, j: usize) -> Result<f64> {
    if n < 2 || j < 1 || j > n {
        return Err(Error::InvalidParameter(format!(
            "need N >= 2 and 1 <= j <= N, got N = {n}, j = {j}"
        )));
    }
    let u = survival(delta, a)?;
    let v = 1.0 - u;
    Ok(binomial(n - 1, j - 1) * u.powi((n - j) as i32) * v.powi((j - 1) as i32))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelDescriptor};
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_cases() {
        assert_eq!(lz_closed_form(0.0, 1.0).unwrap(), ScatterMatrix::identity(2));
        let half = (2f64.ln() / PI).sqrt();
        let s = lz_closed_form(half, 1.0).unwrap();
        assert_abs_diff_eq!(s.get(0, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.get(0, 1), 0.5, epsilon = 1e-15);
        let s = lz_closed_form(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(s.get(0, 0), 0.043213918263772250, epsilon = 1e-15);
        assert!(lz_closed_form(1.0, 0.0).is_err());
        assert!(lz_closed_form(1.0, -1.0).is_err());
    }

    #[test]
    fn asymptotic_v3_cases() {
        assert_eq!(asymptotic_v3(0.0, 1.0).unwrap(), -1.0);
        let half = (2f64.ln() / PI).sqrt();
        assert_abs_diff_eq!(asymptotic_v3(half, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(asymptotic_v3(1.0, 1e-6).unwrap(), 1.0, epsilon = 1e-15);
        assert!(asymptotic_v3(1.0, 0.0).is_err());
    }

    #[test]
    fn projector_simple_cases() {
        let m = ComplexMatrix::from_real_diagonal(&[0.5, -0.5]);
        let p = lagrange_projector(&m, &[-0.5, 0.5], 1).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[1.0, 0.0])) < 1e-15);
        let m = ComplexMatrix::from_real_diagonal(&[1.0, 0.0, -1.0]);
        let p = lagrange_projector(&m, &[-1.0, 0.0, 1.0], 1).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::from_real_diagonal(&[0.0, 1.0, 0.0])) < 1e-15);
    }

    #[test]
    fn spin_half_projector_is_rank_one_bloch_form() {
        let rep = SpinRep::new(2).unwrap();
        let v = BlochVector::new(0.36, -0.48, 0.8);
        let m = rep.combine(v.as_array());
        let p = lagrange_projector(&m, &[-0.5, 0.5], 1).unwrap();
        let mut expected = ComplexMatrix::identity(2).scale_real(0.5);
        expected = &expected + &m;
        assert!(p.max_abs_diff(&expected) < 1e-15);
        assert!(p.max_abs_diff(&(&p * &p)) < 1e-10);
    }

    #[test]
    fn projector_errors() {
        let m = ComplexMatrix::from_real_diagonal(&[1.0, 0.0, -1.0]);
        assert!(matches!(
            lagrange_projector(&m, &[-1.0, 0.0, 2.0], 0),
            Err(Error::SpectrumMismatch(_))
        ));
        assert!(lagrange_projector(&m, &[-1.0, 1.0, 1.0], 0).is_err());
        assert!(lagrange_projector(&m, &[-1.0, 1.0], 0).is_err());
    }

    #[test]
    fn projectors_complete_and_idempotent() {
        let rep = SpinRep::new(5).unwrap();
        let v = rep.combine([0.6, 0.0, 0.8]);
        let ladder = rep.ladder();
        let mut sum = ComplexMatrix::zeros(5);
        for i in 0..5 {
            let p = lagrange_projector(&v, &ladder, i).unwrap();
            assert!(p.max_abs_diff(&(&p * &p)) < 1e-10);
            sum = &sum + &p;
        }
        assert!(sum.max_abs_diff(&ComplexMatrix::identity(5)) < 1e-10);
    }

    #[test]
    fn spin_half_equals_closed_form() {
        for (d, a) in [(0.3, 1.0), (1.0, 1.0), (0.7, 0.2)] {
            let s = smatrix_spin(2, d, a).unwrap();
            assert!(s.max_abs_diff(&lz_closed_form(d, a).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_gives_identity() {
        for k in 2..=7 {
            let s = smatrix_spin(k, 0.0, 1.0).unwrap();
            assert!(s.max_abs_diff(&ScatterMatrix::identity(k)) < 1e-12);
        }
    }

    #[test]
    fn first_row_examples() {
        let (d, a) = (0.6, 1.1);
        let u = survival(d, a).unwrap();
        let v = 1.0 - u;
        assert_abs_diff_eq!(first_row_element(4, d, a, 1).unwrap(), u.powi(3), epsilon = 1e-15);
        assert_abs_diff_eq!(first_row_element(4, d, a, 2).unwrap(), 3.0 * u * u * v, epsilon = 1e-15);
        assert_abs_diff_eq!(first_row_element(3, d, a, 3).unwrap(), v * v, epsilon = 1e-15);
        assert!(first_row_element(3, d, a, 0).is_err());
        assert!(first_row_element(3, d, a, 4).is_err());
        assert!(first_row_element(1, d, a, 1).is_err());
    }

    #[test]
    fn adjoint_model_uses_permuted_order() {
        let m = build_model(&ModelDescriptor::scalar("adjoint3", 0.5, 1.0, None)).unwrap();
        let s = smatrix_for_model(&m).unwrap();
        let u = survival(0.5, 1.0).unwrap();
        let v = 1.0 - u;
        let printed_corrected = [
            [u * u, v * v, 2.0 * u * v],
            [v * v, u * u, 2.0 * u * v],
            [2.0 * u * v, 2.0 * u * v, (1.0 - 2.0 * u).powi(2)],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(s.get(i, j), printed_corrected[i][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn lax_flow_with_no_coupling_is_static() {
        let m = build_model(&ModelDescriptor::scalar("lz2", 0.0, 1.0, None)).unwrap();
        let s = OdeSettings::default();
        let out = evolve_lax(&m, BlochVector::new(0.0, 0.0, 1.0), -5.0, 5.0, &s).unwrap();
        let rep = SpinRep::new(2).unwrap();
        assert!(out.v.max_abs_diff(&rep.z) < 1e-14);
        assert!(evolve_lax(&m, BlochVector::new(0.0, 0.0, 1.0), 1.0, 1.0, &s).is_err());
        let bt = build_model(&ModelDescriptor::scalar("bowtie3", 0.1, 1.0, Some(1.0))).unwrap();
        assert!(matches!(
            evolve_lax(&bt, BlochVector::new(0.0, 0.0, 1.0), -1.0, 1.0, &s),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn scatter_matrix_validation() {
        assert!(ScatterMatrix::from_rows(vec![vec![1.0, 0.0]]).is_err());
        assert!(ScatterMatrix::from_rows(vec![vec![-0.1]]).is_err());
        let s = ScatterMatrix::from_rows(vec![vec![1.0 + 0.0, -1e-14], vec![0.0, 1.0]]).unwrap();
        assert_eq!(s.get(0, 1), 0.0);
    }
}
