//! Direct propagation of `i du/dt = H(t, eps) u` over a finite horizon.
//!
//! Transition probabilities are read off in the diabatic basis,
//! `S_ij = |U_ij(T, -T)|^2`. Amplitudes carry non-convergent `t^2` phases;
//! their moduli converge like `1/T`, which is what the error estimate and
//! [`extrapolate`] work with.

use std::f64::consts::SQRT_2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::laxflow::ScatterMatrix;
use crate::models::{AffineModel, ModelDescriptor};
use crate::numerics::{self, inner, ComplexMatrix, OdeSettings, C64, I};

/// Spread over horizons above which a result is flagged as unconverged.
pub const CONVERGENCE_FLAG: f64 = 0.1;

/// Gap below which two eigenvalues count as degenerate for tracking.
pub const DEGENERACY_GAP: f64 = 1e-10;

/// Evolution operator `U(T, -T)`.
pub fn propagate(model: &AffineModel, eps: f64, horizon: f64, settings: &OdeSettings) -> Result<ComplexMatrix> {
    propagate_between(model, eps, -horizon, horizon, settings)
}

/// Unitarity bound enforced by the propagators, in units of `rtol`.
pub const UNITARITY_FACTOR: f64 = 10.0;

const MAX_TIGHTENINGS: usize = 4;
/// Local tolerances are not tightened past this.
const TOLERANCE_FLOOR: f64 = 1e-15;

/// Interaction picture about the diagonal of `H`: `U(t, t_ref) = D(t) W(t)`
/// with `D = diag(exp(-i phi_k(t)))` known in closed form, so the integrator
/// only follows the slow coupling dynamics `i dW/dt = V(t) W`.
struct Frame {
    diag: Vec<f64>,
    slopes: Vec<f64>,
    couplings: Vec<(usize, usize, C64)>,
    t_ref: f64,
}

impl Frame {
    fn new(model: &AffineModel, eps: f64, t_ref: f64) -> Self {
        let a = model.a_matrix(eps);
        let n = model.dim();
        let mut couplings = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && a.get(i, j) != C64::new(0.0, 0.0) {
                    couplings.push((i, j, a.get(i, j)));
                }
            }
        }
        Self {
            diag: (0..n).map(|i| a.get(i, i).re).collect(),
            slopes: model.slopes().to_vec(),
            couplings,
            t_ref,
        }
    }

    fn phase(&self, k: usize, t: f64) -> f64 {
        let dt = t - self.t_ref;
        self.diag[k] * dt + 0.5 * self.slopes[k] * dt * (t + self.t_ref)
    }

    fn rhs(&self, t: f64, w: &ComplexMatrix) -> ComplexMatrix {
        let n = self.diag.len();
        let mut v = ComplexMatrix::zeros(n);
        for &(i, j, aij) in &self.couplings {
            let theta = self.phase(i, t) - self.phase(j, t);
            v.set(i, j, aij * C64::from_polar(1.0, theta));
        }
        (&v * w).scale(-I)
    }

    /// `D(t) W`.
    fn to_lab(&self, t: f64, w: &ComplexMatrix) -> ComplexMatrix {
        let n = self.diag.len();
        ComplexMatrix::from_fn(n, |i, j| C64::from_polar(1.0, -self.phase(i, t)) * w.get(i, j))
    }
}

/// Interaction-picture operators `W(c, t0)` at increasing-distance checkpoints
/// `c` (all on the same side of `t0`).
///
/// Local errors accumulate over the ~`T^2` steps of a long horizon, so the
/// local tolerance is tightened (and the run repeated) until the final
/// operator satisfies `max |W^dagger W - I| <= 10 rtol`. If the floor is
/// reached the last run is returned and callers see the defect.
fn checkpoints(
    frame: &Frame,
    checkpoints: &[f64],
    settings: &OdeSettings,
) -> Result<Vec<ComplexMatrix>> {
    settings.validate()?;
    let n = frame.diag.len();
    let target = UNITARITY_FACTOR * settings.rtol;
    let mut local = *settings;
    let mut attempt = 0;
    loop {
        let mut out = Vec::with_capacity(checkpoints.len());
        let mut w = ComplexMatrix::identity(n);
        let mut t = frame.t_ref;
        for &c in checkpoints {
            if c != t {
                w = numerics::integrate(|s, y| frame.rhs(s, y), &w, t, c, &local)?;
                t = c;
            }
            out.push(w.clone());
        }
        let defect = w.unitarity_defect();
        attempt += 1;
        if defect <= target || attempt > MAX_TIGHTENINGS || local.rtol <= TOLERANCE_FLOOR {
            return Ok(out);
        }
        let factor = (0.5 * target / defect).clamp(1e-3, 0.5);
        local.rtol = (local.rtol * factor).max(TOLERANCE_FLOOR);
        local.atol = (local.atol * factor).max(TOLERANCE_FLOOR * 1e-2);
    }
}

fn check_interval(eps: f64, t0: f64, t1: f64) -> Result<()> {
    if !(t0.is_finite() && t1.is_finite()) || t0 == t1 {
        return Err(Error::InvalidParameter(format!("bad propagation interval [{t0}, {t1}]")));
    }
    if !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must be finite, got {eps}")));
    }
    Ok(())
}

/// Evolution operator `U(t1, t0)`; `t1 < t0` runs backwards.
pub fn propagate_between(
    model: &AffineModel,
    eps: f64,
    t0: f64,
    t1: f64,
    settings: &OdeSettings,
) -> Result<ComplexMatrix> {
    check_interval(eps, t0, t1)?;
    let frame = Frame::new(model, eps, t0);
    let w = checkpoints(&frame, &[t1], settings)?.pop().expect("one checkpoint");
    Ok(frame.to_lab(t1, &w))
}

/// `300 max(1, |eps|, delta^2 / min |slope|)`.
pub fn default_horizon(model: &AffineModel, eps: f64) -> f64 {
    let d2 = model
        .descriptor()
        .delta
        .values()
        .iter()
        .fold(0.0_f64, |m, d| m.max(d * d));
    let min_slope = model
        .slopes()
        .iter()
        .map(|s| s.abs())
        .filter(|s| *s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let ratio = if min_slope.is_finite() { d2 / min_slope } else { 0.0 };
    300.0 * 1f64.max(eps.abs()).max(ratio)
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub s: ScatterMatrix,
    pub horizon: f64,
    /// Max entrywise spread of `S` over horizons `T/2, T/sqrt2, T`.
    pub error_estimate: f64,
    /// Worst `max |U^dagger U - I|` over the horizons.
    pub unitarity_defect: f64,
    pub flagged: bool,
    /// `(T, S(T))` for each horizon, increasing.
    pub horizons: Vec<(f64, ScatterMatrix)>,
}

#[derive(Serialize)]
struct OracleJson<'a> {
    family: &'a str,
    params: &'a ModelDescriptor,
    #[serde(rename = "T")]
    horizon: f64,
    rtol: f64,
    matrix: &'a ScatterMatrix,
    error_estimate: f64,
    unitarity_defect: f64,
}

impl OracleResult {
    pub fn to_json(&self, model: &AffineModel, eps: f64, settings: &OdeSettings) -> String {
        let mut params = model.descriptor().clone();
        if model.family().has_partner() || eps != 0.0 {
            params.eps = Some(eps);
        }
        serde_json::to_string(&OracleJson {
            family: model.family().name(),
            params: &params,
            horizon: self.horizon,
            rtol: settings.rtol,
            matrix: &self.s,
            error_estimate: self.error_estimate,
            unitarity_defect: self.unitarity_defect,
        })
        .expect("oracle serialization cannot fail")
    }
}

fn probabilities(u: &ComplexMatrix) -> Result<ScatterMatrix> {
    ScatterMatrix::from_rows(u.abs_sq_rows())
}

pub fn numeric_smatrix(
    model: &AffineModel,
    eps: f64,
    horizon: f64,
    settings: &OdeSettings,
) -> Result<OracleResult> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    settings.validate()?;
    check_interval(eps, -horizon, horizon)?;
    // one run from -T through every horizon: U(T', -T') = U(T', -T) U(-T', -T)^dagger,
    // and the diagonal frame factors drop out of the moduli
    let horizons = [horizon / 2.0, horizon / SQRT_2, horizon];
    let frame = Frame::new(model, eps, -horizon);
    let marks = [-horizons[1], -horizons[0], horizons[0], horizons[1], horizons[2]];
    let w = checkpoints(&frame, &marks, settings)?;
    let w_start = |i: usize| if i == 2 { ComplexMatrix::identity(model.dim()) } else { w[1 - i].clone() };
    let runs: Vec<(f64, ComplexMatrix)> = (0..3)
        .map(|i| (horizons[i], &w[2 + i] * &w_start(i).adjoint()))
        .collect();
    let unitarity_defect = runs
        .iter()
        .map(|(_, u)| u.unitarity_defect())
        .fold(0.0_f64, f64::max);
    let series: Vec<(f64, ScatterMatrix)> = runs
        .iter()
        .map(|(t, u)| probabilities(u).map(|s| (*t, s)))
        .collect::<Result<_>>()?;
    let s = series.last().expect("three horizons").1.clone();
    let error_estimate = series
        .iter()
        .flat_map(|(_, a)| series.iter().map(move |(_, b)| a.max_abs_diff(b)))
        .fold(0.0_f64, f64::max);
    Ok(OracleResult {
        s,
        horizon,
        error_estimate,
        unitarity_defect,
        flagged: error_estimate > CONVERGENCE_FLAG,
        horizons: series,
    })
}

/// Survival probability `|<psi|U(T, -T)|psi>|^2` of a normalized state.
pub fn state_survival(
    model: &AffineModel,
    eps: f64,
    horizon: f64,
    psi: &[C64],
    settings: &OdeSettings,
) -> Result<f64> {
    if psi.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            left: model.dim(),
            right: psi.len(),
        });
    }
    let norm = inner(psi, psi).re.sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter("state must be nonzero".into()));
    }
    let u = propagate(model, eps, horizon, settings)?;
    let n = model.dim();
    let evolved: Vec<C64> = (0..n)
        .map(|i| (0..n).map(|j| u.get(i, j) * psi[j]).sum())
        .collect();
    Ok(inner(psi, &evolved).norm_sqr() / (norm * norm).powi(2))
}

/// `(1, -1, 0, ..., 0) / sqrt2`: a null vector of bow-tie Hamiltonians at `eps = 0`.
pub fn bowtie_dark_state(k: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); k];
    v[0] = C64::new(1.0 / SQRT_2, 0.0);
    v[1] = C64::new(-1.0 / SQRT_2, 0.0);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub s: ScatterMatrix,
    pub radius: f64,
    /// Whether the successive differences shrank; otherwise `s` is the
    /// largest-horizon value.
    pub monotone: bool,
}

/// Entrywise least-squares fit `S(T) = S_inf + c / T`.
///
/// The radius is the largest fit residual. When successive differences do
/// not shrink, the largest-horizon matrix is returned with the radius widened
/// to the full spread of the sequence.
pub fn extrapolate(results: &[(f64, ScatterMatrix)]) -> Result<Extrapolation> {
    if results.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "extrapolation needs at least 3 horizons, got {}",
            results.len()
        )));
    }
    if results.windows(2).any(|w| !(w[0].0 < w[1].0) || w[0].0 <= 0.0) {
        return Err(Error::InvalidParameter("horizons must be positive and increasing".into()));
    }
    let n = results[0].1.dim();
    if results.iter().any(|(_, s)| s.dim() != n) {
        return Err(Error::InvalidParameter("scatter matrices differ in dimension".into()));
    }
    let last = &results.last().expect("non-empty").1;
    let steps: Vec<f64> = results.windows(2).map(|w| w[0].1.max_abs_diff(&w[1].1)).collect();
    let monotone = steps.windows(2).all(|w| w[1] <= w[0]);
    if !monotone {
        let spread = results
            .iter()
            .map(|(_, s)| s.max_abs_diff(last))
            .fold(0.0_f64, f64::max);
        return Ok(Extrapolation {
            s: last.clone(),
            radius: spread,
            monotone,
        });
    }
    let x: Vec<f64> = results.iter().map(|(t, _)| 1.0 / t).collect();
    let m = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|xi| (xi - mean_x).powi(2)).sum();
    let mut rows = vec![vec![0.0; n]; n];
    let mut radius = 0.0_f64;
    for (i, row) in rows.iter_mut().enumerate() {
        for (j, out) in row.iter_mut().enumerate() {
            let y: Vec<f64> = results.iter().map(|(_, s)| s.get(i, j)).collect();
            // centred on y[0] so a constant sequence is reproduced exactly
            let mean_y = y[0] + y.iter().map(|yi| yi - y[0]).sum::<f64>() / m;
            let sxy: f64 = x.iter().zip(&y).map(|(xi, yi)| (xi - mean_x) * (yi - mean_y)).sum();
            let slope = sxy / sxx;
            let intercept = mean_y - slope * mean_x;
            for (xi, yi) in x.iter().zip(&y) {
                radius = radius.max((intercept + slope * xi - yi).abs());
            }
            *out = intercept.clamp(0.0, 1.0);
        }
    }
    Ok(Extrapolation {
        s: ScatterMatrix::from_rows(rows)?,
        radius,
        monotone,
    })
}

/// Eigenvalue curves of `H(t, eps)` tracked by eigenvector overlap.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub t: Vec<f64>,
    /// `curves[p][l]`: energy of curve `l` at grid point `p`.
    pub curves: Vec<Vec<f64>>,
    /// Grid points with (near-)degenerate eigenvalues; tracking there is
    /// only defined up to exchange within the degenerate cluster.
    pub flagged: Vec<usize>,
}

impl Spectrum {
    /// CSV with header `t,e1,...,ek`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let k = self.curves.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for l in 1..=k {
            out.push_str(&format!(",e{l}"));
        }
        out.push('\n');
        for (t, row) in self.t.iter().zip(&self.curves) {
            out.push_str(&format!("{t:.16e}"));
            for e in row {
                out.push_str(&format!(",{e:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn adiabatic_spectrum(model: &AffineModel, eps: f64, t_grid: &[f64]) -> Result<Spectrum> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !t.is_finite()) || !eps.is_finite() {
        return Err(Error::InvalidParameter("spectrum grid must be finite and non-empty".into()));
    }
    let k = model.dim();
    let mut curves = Vec::with_capacity(t_grid.len());
    let mut flagged = Vec::new();
    // eigenvectors of the last non-degenerate point, in curve order; curve
    // l starts on the adiabatic state closest to diabatic state l
    let mut reference: Vec<Vec<C64>> = (0..k)
        .map(|l| {
            let mut e = vec![C64::new(0.0, 0.0); k];
            e[l] = C64::new(1.0, 0.0);
            e
        })
        .collect();
    for (p, &t) in t_grid.iter().enumerate() {
        let eig = numerics::hermitian_eigs(&model.hamiltonian_at(t, eps))?;
        let degenerate = eig.values.windows(2).any(|w| w[1] - w[0] < DEGENERACY_GAP);
        let vectors: Vec<Vec<C64>> = (0..k).map(|i| eig.vector(i)).collect();
        // inside a degenerate cluster the values coincide, so only the
        // reference vectors must not be refreshed there
        let assignment = match_by_overlap(&reference, &vectors);
        if degenerate {
            flagged.push(p);
        } else {
            reference = assignment.iter().map(|&i| vectors[i].clone()).collect();
        }
        curves.push(assignment.iter().map(|&i| eig.values[i]).collect());
    }
    Ok(Spectrum {
        t: t_grid.to_vec(),
        curves,
        flagged,
    })
}

/// Greedy maximal-overlap assignment: `result[curve] = eigen index`.
fn match_by_overlap(prev: &[Vec<C64>], next: &[Vec<C64>]) -> Vec<usize> {
    let k = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(k * k);
    for (c, p) in prev.iter().enumerate() {
        for (i, v) in next.iter().enumerate() {
            pairs.push((inner(p, v).norm_sqr(), c, i));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut result = vec![usize::MAX; k];
    let mut used = vec![false; k];
    for (_, c, i) in pairs {
        if result[c] == usize::MAX && !used[i] {
            result[c] = i;
            used[i] = true;
        }
    }
    result
}

/// Evenly spaced grid with `steps + 1` points.
pub fn linear_grid(start: f64, stop: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![start];
    }
    (0..=steps)
        .map(|i| start + (stop - start) * i as f64 / steps as f64)
        .collect()
}
