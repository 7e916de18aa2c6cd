//! Zero-curvature check `dH/deps - dE/dt + i[E, H] = 0` for model pairs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::AffineModel;
use crate::numerics::{commutator, ComplexMatrix, I};

/// Grid verdict threshold on the max entrywise residual.
pub const PASS_THRESHOLD: f64 = 1e-10;

/// Closest admissible distance of `eps` to the partner pole at zero.
pub const POLE_GUARD: f64 = 1e-8;

pub const DEFAULT_T_GRID: [f64; 5] = [-10.0, -1.0, 0.0, 1.0, 10.0];
pub const DEFAULT_EPS_GRID: [f64; 6] = [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0];

/// How `dH/deps` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsDerivative {
    /// From the model's exact eps-linear part.
    Exact,
    /// Central difference with the given step.
    CentralDifference(f64),
}

/// Residual matrix at one `(t, eps)` point.
pub fn curvature_residual(
    model: &AffineModel,
    t: f64,
    eps: f64,
    derivative: EpsDerivative,
) -> Result<ComplexMatrix> {
    let partner = model
        .partner()
        .ok_or_else(|| Error::MissingPartner(model.family().name().to_string()))?;
    if partner.has_pole() && eps.abs() < POLE_GUARD {
        return Err(Error::SingularPartner { eps });
    }
    let d_eps_h = match derivative {
        EpsDerivative::Exact => model.d_eps_hamiltonian().clone(),
        EpsDerivative::CentralDifference(step) => {
            if !(step > 0.0 && step <= 1e-3 * eps.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "difference step must lie in (0, 1e-3 |eps|], got {step}"
                )));
            }
            let up = model.hamiltonian_at(t, eps + step);
            let down = model.hamiltonian_at(t, eps - step);
            (&up - &down).scale_real(0.5 / step)
        }
    };
    let h = model.hamiltonian_at(t, eps);
    let e = partner.at(t, eps)?;
    let mut r = &d_eps_h - partner.d_t();
    r.axpy(I, &commutator(&e, &h)?);
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct WorstPoint {
    pub t: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct CurvatureReport {
    pub family: String,
    pub max_residual: f64,
    pub worst_point: WorstPoint,
    pub residual: ComplexMatrix,
    pub pass: bool,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    family: &'a str,
    max_residual: f64,
    worst_point: &'a WorstPoint,
    pass: bool,
}

impl CurvatureReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ReportJson {
            family: &self.family,
            max_residual: self.max_residual,
            worst_point: &self.worst_point,
            pass: self.pass,
        })
        .expect("report serialization cannot fail")
    }
}

/// Max residual over a `(t, eps)` grid using exact eps-derivatives.
pub fn verify_pair(model: &AffineModel, t_grid: &[f64], eps_grid: &[f64]) -> Result<CurvatureReport> {
    verify_pair_with(model, t_grid, eps_grid, EpsDerivative::Exact)
}

pub fn verify_pair_with(
    model: &AffineModel,
    t_grid: &[f64],
    eps_grid: &[f64],
    derivative: EpsDerivative,
) -> Result<CurvatureReport> {
    if t_grid.is_empty() || eps_grid.is_empty() {
        return Err(Error::InvalidParameter("empty curvature grid".into()));
    }
    let mut worst: Option<(f64, f64, f64, ComplexMatrix)> = None;
    for &eps in eps_grid {
        for &t in t_grid {
            let r = curvature_residual(model, t, eps, derivative)?;
            let norm = r.max_abs();
            if worst.as_ref().is_none_or(|w| norm > w.0) {
                worst = Some((norm, t, eps, r));
            }
        }
    }
    let (max_residual, t, eps, residual) = worst.expect("grid is non-empty");
    Ok(CurvatureReport {
        family: model.family().name().to_string(),
        max_residual,
        worst_point: WorstPoint { t, eps },
        residual,
        pass: max_residual <= PASS_THRESHOLD,
    })
}

pub fn verify_default(model: &AffineModel) -> Result<CurvatureReport> {
    verify_pair(model, &DEFAULT_T_GRID, &DEFAULT_EPS_GRID)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        build_model, build_su3six_variant, ModelDescriptor, Partner, Su3SixPartner,
    };

    fn bowtie3() -> AffineModel {
        build_model(&ModelDescriptor::scalar("bowtie3", 0.37, 0.81, Some(1.3))).unwrap()
    }

    #[test]
    fn bowtie3_pair_is_flat() {
        let m = bowtie3();
        for (t, e) in [(0.3, 1.7), (-4.1, -0.6), (9.0, 2.2)] {
            let r = curvature_residual(&m, t, e, EpsDerivative::Exact).unwrap();
            assert!(r.max_abs() <= 1e-12, "{}", r.max_abs());
            let rd = curvature_residual(&m, t, e, EpsDerivative::CentralDifference(1e-4 * e.abs()))
                .unwrap();
            assert!(rd.max_abs() <= 1e-9);
        }
        assert!(verify_default(&m).unwrap().pass);
    }

    #[test]
    fn eps_independent_model_with_zero_partner_is_flat() {
        let lz = build_model(&ModelDescriptor::scalar("lz2", 0.8, 1.0, None))
            .unwrap()
            .with_partner(Some(Partner::zero(2)));
        let r = curvature_residual(&lz, 2.5, 0.7, EpsDerivative::Exact).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn zeroed_partner_fails_at_dh_scale() {
        let m = bowtie3();
        let broken = m.clone().with_partner(Some(Partner::zero(3)));
        let report = verify_default(&broken).unwrap();
        assert!(!report.pass);
        assert!((report.max_residual - m.d_eps_hamiltonian().max_abs()).abs() < 1e-15);
    }

    #[test]
    fn su3six_ambiguous_entry() {
        let (d, a, e) = (0.3, 0.7, 1.1);
        let ok = build_su3six_variant(d, a, e, Su3SixPartner::AmbiguousEntry { b: a });
        assert!(curvature_residual(&ok, 0.4, e, EpsDerivative::Exact).unwrap().max_abs() <= 1e-12);
        let bad = build_su3six_variant(d, a, e, Su3SixPartner::AmbiguousEntry { b: 1.9 });
        let r = verify_default(&bad).unwrap();
        assert!(r.max_residual > 1e-3);
        let printed = build_su3six_variant(d, a, e, Su3SixPartner::AsPrinted { b: a });
        assert!(!verify_default(&printed).unwrap().pass);
    }

    #[test]
    fn missing_partner_and_pole() {
        let lz = build_model(&ModelDescriptor::scalar("lz2", 1.0, 1.0, None)).unwrap();
        assert!(matches!(
            curvature_residual(&lz, 0.0, 1.0, EpsDerivative::Exact),
            Err(Error::MissingPartner(_))
        ));
        assert!(matches!(
            curvature_residual(&bowtie3(), 0.0, 0.0, EpsDerivative::Exact),
            Err(Error::SingularPartner { .. })
        ));
        assert!(curvature_residual(&bowtie3(), 0.0, 1.0, EpsDerivative::CentralDifference(0.1)).is_err());
    }

    #[test]
    fn report_json_shape() {
        let r = verify_default(&bowtie3()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["family"], "bowtie3");
        assert_eq!(v["pass"], true);
        assert!(v["worst_point"]["t"].is_number());
        assert!(v["worst_point"]["eps"].is_number());
    }

    #[test]
    fn shipped_pairs_pass() {
        let models = [
            build_model(&ModelDescriptor::scalar("su3six", 0.2, 0.4, Some(1.0))).unwrap(),
            build_model(&ModelDescriptor::scalar("su3adj8", 0.2, 0.4, Some(1.0))).unwrap(),
            build_model(&ModelDescriptor::bowtie_n(vec![0.3, 0.1, 0.5], vec![0.4, -0.9, 1.3], 1.0))
                .unwrap(),
        ];
        for m in &models {
            let r = verify_default(m).unwrap();
            assert!(r.pass, "{}: {}", r.family, r.max_residual);
            assert!(r.residual.hermitian_deviation() <= 1e-12);
        }
    }
}
