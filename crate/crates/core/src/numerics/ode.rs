//! Adaptive embedded Runge-Kutta integration of matrix-valued ODEs.
//!
//! Two schemes are available: Dormand-Prince 5(4) and DOP853. Both use a
//! proportional-integral step controller and reject/retry steps whose
//! scaled local error exceeds one.

use serde::{Deserialize, Serialize};

use super::tableau;
use super::{ComplexMatrix, C64};
use crate::error::{Error, Result};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
/// Integral gain of the PI controller.
const PI_BETA: f64 = 0.04;
/// Steps shorter than this fraction of the interval abort the integration.
const UNDERFLOW_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeSettings {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// 5 selects Dormand-Prince 5(4); anything above selects DOP853.
    pub order: u32,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            order: 8,
        }
    }
}

impl OdeSettings {
    pub fn new(rtol: f64, atol: f64) -> Result<Self> {
        let s = Self {
            rtol,
            atol,
            ..Self::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_rtol(rtol: f64) -> Result<Self> {
        Self::new(rtol, (rtol * 1e-2).max(1e-300))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, tol) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(tol > 0.0 && tol <= 1e-2) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1e-2], got {tol}"
                )));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "max_step must be positive, got {}",
                self.max_step
            )));
        }
        if self.order < 5 {
            return Err(Error::InvalidParameter(format!(
                "method order must be at least 5, got {}",
                self.order
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OdeOutcome {
    pub y: ComplexMatrix,
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `dy/dt = rhs(t, y)` from `t0` to `t1` (either direction).
pub fn integrate<F>(
    rhs: F,
    y0: &ComplexMatrix,
    t0: f64,
    t1: f64,
    settings: &OdeSettings,
) -> Result<ComplexMatrix>
where
    F: Fn(f64, &ComplexMatrix) -> ComplexMatrix,
{
    integrate_with_stats(rhs, y0, t0, t1, settings).map(|o| o.y)
}

pub fn integrate_with_stats<F>(
    rhs: F,
    y0: &ComplexMatrix,
    t0: f64,
    t1: f64,
    settings: &OdeSettings,
) -> Result<OdeOutcome>
where
    F: Fn(f64, &ComplexMatrix) -> ComplexMatrix,
{
    settings.validate()?;
    if !(t0.is_finite() && t1.is_finite()) || t0 == t1 {
        return Err(Error::InvalidParameter(format!(
            "integration interval [{t0}, {t1}] must be finite and non-empty"
        )));
    }
    let scheme = if settings.order <= 5 {
        Scheme::dopri5()
    } else {
        Scheme::dop853()
    };
    scheme.run(&rhs, y0, t0, t1, settings)
}

struct Scheme {
    stages: usize,
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Error weights; `err3` is only present for DOP853.
    err5: Vec<f64>,
    err3: Option<Vec<f64>>,
    /// Order used in the step-size exponent.
    error_order: f64,
}

impl Scheme {
    fn dopri5() -> Self {
        let b = vec![
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
            0.0,
        ];
        let b_hat = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        Self {
            stages: 7,
            c: vec![0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0],
            a: vec![
                vec![],
                vec![0.2],
                vec![3.0 / 40.0, 9.0 / 40.0],
                vec![44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
                vec![19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
                vec![
                    9017.0 / 3168.0,
                    -355.0 / 33.0,
                    46732.0 / 5247.0,
                    49.0 / 176.0,
                    -5103.0 / 18656.0,
                ],
                vec![
                    35.0 / 384.0,
                    0.0,
                    500.0 / 1113.0,
                    125.0 / 192.0,
                    -2187.0 / 6784.0,
                    11.0 / 84.0,
                ],
            ],
            err5: b.iter().zip(b_hat.iter()).map(|(x, y)| x - y).collect(),
            b,
            err3: None,
            error_order: 5.0,
        }
    }

    fn dop853() -> Self {
        let n = tableau::STAGES;
        Self {
            stages: n,
            c: tableau::C.to_vec(),
            a: (0..n).map(|i| tableau::A[i][..i].to_vec()).collect(),
            b: tableau::B.to_vec(),
            err5: tableau::E5.to_vec(),
            err3: Some(tableau::E3.to_vec()),
            error_order: 8.0,
        }
    }

    fn run<F>(
        &self,
        rhs: &F,
        y0: &ComplexMatrix,
        t0: f64,
        t1: f64,
        s: &OdeSettings,
    ) -> Result<OdeOutcome>
    where
        F: Fn(f64, &ComplexMatrix) -> ComplexMatrix,
    {
        let direction = (t1 - t0).signum();
        let span = (t1 - t0).abs();
        let min_step = UNDERFLOW_FRACTION * span;
        let exponent = -1.0 / self.error_order;

        let mut t = t0;
        let mut y = y0.clone();
        let mut f = rhs(t, &y);
        let mut h_abs = self.initial_step(rhs, &y, &f, t, direction, s).min(s.max_step);
        let mut prev_err = 1e-4_f64;
        let mut accepted = 0usize;
        let mut rejected = 0usize;
        let mut k: Vec<ComplexMatrix> = Vec::with_capacity(self.stages);

        while (t1 - t) * direction > 0.0 {
            if h_abs < min_step {
                return Err(Error::Divergence { last_t: t });
            }
            let remaining = (t1 - t).abs();
            let last = h_abs >= remaining;
            let h = if last { remaining } else { h_abs } * direction;

            k.clear();
            k.push(f.clone());
            for i in 1..self.stages {
                let mut yi = y.clone();
                for (j, aij) in self.a[i].iter().enumerate() {
                    if *aij != 0.0 {
                        yi.axpy(C64::new(h * aij, 0.0), &k[j]);
                    }
                }
                k.push(rhs(t + self.c[i] * h, &yi));
            }
            let mut y_new = y.clone();
            for (j, bj) in self.b.iter().enumerate() {
                if *bj != 0.0 {
                    y_new.axpy(C64::new(h * bj, 0.0), &k[j]);
                }
            }
            let err = self.error_norm(&k, h, &y, &y_new, s);

            if err <= 1.0 {
                let t_new = if last { t1 } else { t + h };
                let f_new = rhs(t_new, &y_new);
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(exponent + 0.75 * PI_BETA) * prev_err.powf(PI_BETA))
                        .clamp(MIN_FACTOR, MAX_FACTOR)
                };
                prev_err = err.max(1e-4);
                t = t_new;
                y = y_new;
                f = f_new;
                accepted += 1;
                h_abs = (h.abs() * factor).min(s.max_step);
            } else {
                rejected += 1;
                h_abs = h.abs() * (SAFETY * err.powf(exponent)).max(MIN_FACTOR);
            }
        }
        Ok(OdeOutcome {
            y,
            accepted,
            rejected,
        })
    }

    fn error_norm(
        &self,
        k: &[ComplexMatrix],
        h: f64,
        y: &ComplexMatrix,
        y_new: &ComplexMatrix,
        s: &OdeSettings,
    ) -> f64 {
        let ya = y.as_nalgebra();
        let yb = y_new.as_nalgebra();
        let count = ya.len() as f64;
        let mut sum5 = 0.0;
        let mut sum3 = 0.0;
        for idx in 0..ya.len() {
            let scale = s.atol + s.rtol * ya[idx].norm().max(yb[idx].norm());
            let mut e5 = C64::new(0.0, 0.0);
            let mut e3 = C64::new(0.0, 0.0);
            for (j, kj) in k.iter().enumerate() {
                let kv = kj.as_nalgebra()[idx];
                e5 += kv * self.err5[j];
                if let Some(w3) = &self.err3 {
                    e3 += kv * w3[j];
                }
            }
            sum5 += (e5 / scale).norm_sqr();
            sum3 += (e3 / scale).norm_sqr();
        }
        match self.err3 {
            None => h.abs() * (sum5 / count).sqrt(),
            Some(_) => {
                if sum5 == 0.0 && sum3 == 0.0 {
                    return 0.0;
                }
                let denom = sum5 + 0.01 * sum3;
                h.abs() * sum5 / (denom * count).sqrt()
            }
        }
    }

    fn initial_step<F>(
        &self,
        rhs: &F,
        y: &ComplexMatrix,
        f: &ComplexMatrix,
        t: f64,
        direction: f64,
        s: &OdeSettings,
    ) -> f64
    where
        F: Fn(f64, &ComplexMatrix) -> ComplexMatrix,
    {
        let rms = |m: &ComplexMatrix| {
            let a = m.as_nalgebra();
            let ys = y.as_nalgebra();
            let sum: f64 = a
                .iter()
                .zip(ys.iter())
                .map(|(v, yv)| (v.norm() / (s.atol + s.rtol * yv.norm())).powi(2))
                .sum();
            (sum / a.len() as f64).sqrt()
        };
        let d0 = rms(y);
        let d1 = rms(f);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let mut y1 = y.clone();
        y1.axpy(C64::new(h0 * direction, 0.0), f);
        let f1 = rhs(t + h0 * direction, &y1);
        let d2 = rms(&(&f1 - f)) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / (self.error_order + 1.0))
        };
        (100.0 * h0).min(h1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::I;

    fn scalar(x: f64) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&[x])
    }

    #[test]
    fn exponential_decay() {
        for order in [5, 8] {
            let s = OdeSettings {
                order,
                ..OdeSettings::new(1e-10, 1e-12).unwrap()
            };
            let y = integrate(|_, y| y.scale_real(-1.0), &scalar(1.0), 0.0, 1.0, &s).unwrap();
            let expected = (-1.0_f64).exp();
            assert!((y.get(0, 0).re - expected).abs() < 1e-9, "order {order}");
        }
    }

    #[test]
    fn pure_phase_rotation() {
        let gen = ComplexMatrix::from_real_diagonal(&[1.0, 2.0]).scale(-I);
        let y0 = ComplexMatrix::from_real_diagonal(&[1.0, 1.0]);
        let s = OdeSettings::new(1e-10, 1e-12).unwrap();
        let y = integrate(|_, y| &gen * y, &y0, 0.0, std::f64::consts::PI, &s).unwrap();
        assert!((y.get(0, 0) - C64::new(-1.0, 0.0)).norm() < 1e-8);
        assert!((y.get(1, 1) - C64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn backward_integration_and_reversibility() {
        let h = ComplexMatrix::from_real_rows(&[vec![0.3, 1.0], vec![1.0, -0.3]]);
        let s = OdeSettings::new(1e-10, 1e-12).unwrap();
        let rhs = |t: f64, u: &ComplexMatrix| {
            let ht = &h + &ComplexMatrix::from_real_diagonal(&[t, -t]);
            (&ht * u).scale(-I)
        };
        let u0 = ComplexMatrix::identity(2);
        let u1 = integrate(rhs, &u0, -3.0, 2.0, &s).unwrap();
        assert!(u1.unitarity_defect() < 10.0 * s.rtol);
        let back = integrate(rhs, &u1, 2.0, -3.0, &s).unwrap();
        assert!(back.max_abs_diff(&u0) < 20.0 * s.rtol);
    }

    #[test]
    fn rejects_bad_settings_and_interval() {
        assert!(OdeSettings::new(0.0, 1e-12).is_err());
        assert!(OdeSettings::new(0.1, 1e-12).is_err());
        let s = OdeSettings::default();
        assert!(integrate(|_, y| y.clone(), &scalar(1.0), 1.0, 1.0, &s).is_err());
    }

    #[test]
    fn underflow_reports_last_time() {
        let s = OdeSettings::new(1e-10, 1e-12).unwrap();
        // blows up at t = 1
        let r = integrate(
            |t, y| y.scale_real(1.0 / (1.0 - t).powi(2)),
            &scalar(1.0),
            0.0,
            2.0,
            &s,
        );
        match r {
            Err(Error::Divergence { last_t }) => assert!(last_t > 0.9 && last_t < 1.0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
