//! Hamiltonian families of the form `H(t, eps) = A(eps) + t B`.
//!
//! Every catalog entry is affine in `eps` as well, so `A(eps) = A0 + eps A1`
//! and the eps-derivative of `H` is the constant matrix `A1`. Zero-curvature
//! partners are stored as `E(t, eps) = E_c + eps E_lin + E_inv / eps + t E_t`,
//! which covers every partner in the catalog exactly.

mod descriptor;
pub mod spin;

pub use descriptor::{ModelDescriptor, ParamValue};
pub use spin::SpinRep;

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64, I};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Lz2,
    Spin,
    Adjoint3,
    Bowtie3,
    BowtieN,
    Su3Six,
    Su3Adj8,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Lz2,
        Family::Spin,
        Family::Adjoint3,
        Family::Bowtie3,
        Family::BowtieN,
        Family::Su3Six,
        Family::Su3Adj8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Lz2 => "lz2",
            Family::Spin => "spin",
            Family::Adjoint3 => "adjoint3",
            Family::Bowtie3 => "bowtie3",
            Family::BowtieN => "bowtieN",
            Family::Su3Six => "su3six",
            Family::Su3Adj8 => "su3adj8",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Family::name).join(", ")
    }

    /// Families with a zero-curvature partner.
    pub fn has_partner(self) -> bool {
        matches!(
            self,
            Family::Bowtie3 | Family::BowtieN | Family::Su3Six | Family::Su3Adj8
        )
    }

    /// Families built from a spin representation of su(2).
    pub fn is_spin_like(self) -> bool {
        matches!(self, Family::Lz2 | Family::Spin | Family::Adjoint3)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFamily {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// Zero-curvature partner `E(t, eps) = E_c + eps E_lin + E_inv / eps + t E_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partner {
    pub constant: ComplexMatrix,
    pub eps_linear: ComplexMatrix,
    pub eps_inverse: ComplexMatrix,
    pub time: ComplexMatrix,
}

impl Partner {
    pub fn zero(n: usize) -> Self {
        Self {
            constant: ComplexMatrix::zeros(n),
            eps_linear: ComplexMatrix::zeros(n),
            eps_inverse: ComplexMatrix::zeros(n),
            time: ComplexMatrix::zeros(n),
        }
    }

    pub fn has_pole(&self) -> bool {
        self.eps_inverse.max_abs() > 0.0
    }

    pub fn at(&self, t: f64, eps: f64) -> Result<ComplexMatrix> {
        if self.has_pole() && eps == 0.0 {
            return Err(Error::SingularPartner { eps });
        }
        let mut e = self.constant.clone();
        e.axpy(C64::new(eps, 0.0), &self.eps_linear);
        if self.has_pole() {
            e.axpy(C64::new(1.0 / eps, 0.0), &self.eps_inverse);
        }
        e.axpy(C64::new(t, 0.0), &self.time);
        Ok(e)
    }

    /// `dE/dt`, exact.
    pub fn d_t(&self) -> &ComplexMatrix {
        &self.time
    }

    /// `dE/deps` at `eps`, exact.
    pub fn d_eps(&self, eps: f64) -> Result<ComplexMatrix> {
        if self.has_pole() && eps == 0.0 {
            return Err(Error::SingularPartner { eps });
        }
        let mut d = self.eps_linear.clone();
        if self.has_pole() {
            d.axpy(C64::new(-1.0 / (eps * eps), 0.0), &self.eps_inverse);
        }
        Ok(d)
    }
}

/// Variants of the six-dimensional partner, used to check the ambiguous
/// printed entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Su3SixPartner {
    /// Valid zero-curvature partner.
    Corrected,
    /// Corrected partner except entry (5, 2) set to `-delta / b`.
    AmbiguousEntry { b: f64 },
    /// Every entry as printed: `K` at (4, 5) and `-delta / b` at (5, 2).
    AsPrinted { b: f64 },
}

#[derive(Debug, Clone)]
pub struct AffineModel {
    descriptor: ModelDescriptor,
    family: Family,
    a_const: ComplexMatrix,
    a_eps: ComplexMatrix,
    slopes: Vec<f64>,
    partner: Option<Partner>,
    spin_order: Option<Vec<usize>>,
}

impl AffineModel {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn descriptor(&self) -> &ModelDescriptor {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.slopes.len()
    }

    /// Working `eps` of the descriptor (0 for families without one).
    pub fn eps(&self) -> f64 {
        self.descriptor.eps.unwrap_or(0.0)
    }

    pub fn a_matrix(&self, eps: f64) -> ComplexMatrix {
        let mut a = self.a_const.clone();
        a.axpy(C64::new(eps, 0.0), &self.a_eps);
        a
    }

    pub fn a_const(&self) -> &ComplexMatrix {
        &self.a_const
    }

    /// `dH/deps`, exact.
    pub fn d_eps_hamiltonian(&self) -> &ComplexMatrix {
        &self.a_eps
    }

    pub fn b_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_real_diagonal(&self.slopes)
    }

    /// Diabatic slopes, the diagonal of `B`.
    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn hamiltonian_at(&self, t: f64, eps: f64) -> ComplexMatrix {
        let mut h = self.a_matrix(eps);
        for (i, s) in self.slopes.iter().enumerate() {
            let d = h.get(i, i);
            h.set(i, i, d + C64::new(t * s, 0.0));
        }
        h
    }

    pub fn partner(&self) -> Option<&Partner> {
        self.partner.as_ref()
    }

    pub fn partner_at(&self, t: f64, eps: f64) -> Result<ComplexMatrix> {
        self.partner
            .as_ref()
            .ok_or_else(|| Error::MissingPartner(self.family.name().to_string()))?
            .at(t, eps)
    }

    /// Replaces the partner; used to probe broken or alternative pairs.
    pub fn with_partner(mut self, partner: Option<Partner>) -> Self {
        self.partner = partner;
        self
    }

    /// For `adjoint3`, `spin_order()[i]` is the descending-m index of basis
    /// state `i`.
    pub fn spin_order(&self) -> Option<&[usize]> {
        self.spin_order.as_deref()
    }

    pub fn delta(&self) -> f64 {
        self.descriptor.delta.first()
    }

    pub fn slope(&self) -> f64 {
        self.descriptor.slope.first()
    }

    /// Spin dimension for the su(2) families.
    pub fn spin_k(&self) -> Option<usize> {
        match self.family {
            Family::Lz2 => Some(2),
            Family::Adjoint3 => Some(3),
            Family::Spin => Some(self.dim()),
            _ => None,
        }
    }
}

/// Free-function form of [`AffineModel::hamiltonian_at`].
pub fn hamiltonian_at(model: &AffineModel, t: f64, eps: f64) -> ComplexMatrix {
    model.hamiltonian_at(t, eps)
}

pub fn build_model(descriptor: &ModelDescriptor) -> Result<AffineModel> {
    let family: Family = descriptor.family.parse()?;
    let delta = &descriptor.delta;
    let slope = &descriptor.slope;
    if !delta.values().iter().chain(slope.values().iter()).all(|x| x.is_finite()) {
        return Err(Error::InvalidParameter("parameters must be finite".into()));
    }
    if let Some(eps) = descriptor.eps {
        if !eps.is_finite() {
            return Err(Error::InvalidParameter("eps must be finite".into()));
        }
        if eps == 0.0 && family.has_partner() {
            return Err(Error::SingularPartner { eps });
        }
    }
    if descriptor.k.is_some() && !matches!(family, Family::Spin | Family::BowtieN) {
        let expected = match family {
            Family::Lz2 => 2,
            Family::Adjoint3 | Family::Bowtie3 => 3,
            Family::Su3Six => 6,
            _ => 8,
        };
        if descriptor.k != Some(expected) {
            return Err(Error::InvalidParameter(format!(
                "family {family} has dimension {expected}, got k = {:?}",
                descriptor.k
            )));
        }
    }
    let eps_default = descriptor.eps.unwrap_or(1.0);

    let mut model = match family {
        Family::BowtieN => {
            let slopes = slope.values();
            let n = slopes.len();
            if let Some(k) = descriptor.k {
                if k != n + 2 {
                    return Err(Error::InvalidParameter(format!(
                        "bowtieN with k = {k} needs {} slopes, got {n}",
                        k.saturating_sub(2)
                    )));
                }
            }
            let deltas = delta.broadcast(n)?;
            bowtie(&deltas, &slopes)?
        }
        _ => {
            let d = delta.scalar("delta")?;
            let a = slope.scalar("slope")?;
            if !(a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "slope must be positive for family {family}, got {a}"
                )));
            }
            match family {
                Family::Lz2 => spin_family(2, d, a)?,
                Family::Spin => {
                    let k = descriptor.k.ok_or_else(|| {
                        Error::InvalidParameter("family spin requires k".into())
                    })?;
                    spin_family(k, d, a)?
                }
                Family::Adjoint3 => adjoint3(d, a),
                Family::Bowtie3 => bowtie(&[d], &[a])?,
                Family::Su3Six => su3six(d, a, Su3SixPartner::Corrected),
                Family::Su3Adj8 => su3adj8(d, a),
                Family::BowtieN => unreachable!(),
            }
        }
    };
    model.family = family;
    model.descriptor = descriptor.clone();
    if family.has_partner() && descriptor.eps.is_none() {
        model.descriptor.eps = Some(eps_default);
    }
    Ok(model)
}

fn raw(
    a_const: ComplexMatrix,
    a_eps: ComplexMatrix,
    slopes: Vec<f64>,
    partner: Option<Partner>,
) -> AffineModel {
    AffineModel {
        descriptor: ModelDescriptor::default(),
        family: Family::Lz2,
        a_const,
        a_eps,
        slopes,
        partner,
        spin_order: None,
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// `H = 2 (a t Z + delta X)` in the k-dimensional representation.
fn spin_family(k: usize, delta: f64, a: f64) -> Result<AffineModel> {
    let rep = SpinRep::new(k)?;
    let slopes = spin::magnetic_numbers(k).iter().map(|m| 2.0 * a * m).collect();
    Ok(raw(
        rep.x.scale_real(2.0 * delta),
        ComplexMatrix::zeros(k),
        slopes,
        None,
    ))
}

/// Spin-1 model in the (m = +1, m = -1, m = 0) order.
fn adjoint3(delta: f64, a: f64) -> AffineModel {
    let c = SQRT_2 * delta;
    let a_const = ComplexMatrix::from_real_rows(&[
        vec![0.0, 0.0, c],
        vec![0.0, 0.0, c],
        vec![c, c, 0.0],
    ]);
    let mut m = raw(a_const, ComplexMatrix::zeros(3), vec![2.0 * a, -2.0 * a, 0.0], None);
    m.spin_order = Some(vec![0, 2, 1]);
    m
}

/// Generalized bow-tie model: two flat levels at `+-eps`, `slopes.len()`
/// sloped levels, each coupled to both flat levels.
fn bowtie(deltas: &[f64], slopes: &[f64]) -> Result<AffineModel> {
    if slopes.is_empty() {
        return Err(Error::InvalidParameter("bow-tie model needs at least one slope".into()));
    }
    if deltas.len() != slopes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} couplings for {} slopes",
            deltas.len(),
            slopes.len()
        )));
    }
    if slopes.contains(&0.0) {
        return Err(Error::InvalidParameter("bow-tie slopes must be nonzero".into()));
    }
    if slopes.windows(2).any(|w| !(w[0].abs() < w[1].abs())) {
        return Err(Error::InvalidParameter(format!(
            "bow-tie slopes must satisfy |a_1| < |a_2| < ..., got {slopes:?}"
        )));
    }
    let k = slopes.len() + 2;
    let mut a_const = ComplexMatrix::zeros(k);
    let mut a_eps = ComplexMatrix::zeros(k);
    a_eps.set(0, 0, real(1.0));
    a_eps.set(1, 1, real(-1.0));
    let mut all_slopes = vec![0.0, 0.0];
    all_slopes.extend_from_slice(slopes);

    let mut e = Partner::zero(k);
    e.time.set(0, 0, real(1.0));
    e.time.set(1, 1, real(-1.0));
    let h_inv: f64 = -deltas.iter().zip(slopes).map(|(d, a)| d * d / a).sum::<f64>();
    e.eps_inverse.set_hermitian_pair(0, 1, real(h_inv));
    for (i, (d, a)) in deltas.iter().zip(slopes).enumerate() {
        let s = 2 + i;
        a_const.set_hermitian_pair(0, s, real(*d));
        a_const.set_hermitian_pair(1, s, real(*d));
        e.constant.set_hermitian_pair(0, s, real(-d / a));
        e.constant.set_hermitian_pair(1, s, real(d / a));
        e.eps_inverse.set(s, s, real(h_inv));
        e.eps_linear.set(s, s, real(1.0 / a));
    }
    Ok(raw(a_const, a_eps, all_slopes, Some(e)))
}

/// Six-dimensional su(3) bow-tie model.
fn su3six(delta: f64, a: f64, variant: Su3SixPartner) -> AffineModel {
    let r2d = SQRT_2 * delta;
    let mut a_const = ComplexMatrix::zeros(6);
    // 1-based couplings from the level diagram
    for (i, j, v) in [
        (1, 4, r2d),
        (2, 4, delta),
        (2, 5, delta),
        (3, 5, r2d),
        (4, 6, r2d),
        (5, 6, r2d),
    ] {
        a_const.set_hermitian_pair(i - 1, j - 1, real(v));
    }
    let a_eps = ComplexMatrix::from_real_diagonal(&[2.0, 0.0, -2.0, 1.0, -1.0, 0.0]);
    let slopes = vec![0.0, 0.0, 0.0, a, a, 2.0 * a];
    let partner = su3six_partner(delta, a, variant);
    raw(a_const, a_eps, slopes, Some(partner))
}

/// Partner of the six-dimensional model in one of its variants.
pub fn su3six_partner(delta: f64, a: f64, variant: Su3SixPartner) -> Partner {
    let c = delta / a;
    let q = delta * delta / a;
    let mut e = Partner::zero(6);
    e.time = ComplexMatrix::from_real_diagonal(&[2.0, 0.0, -2.0, 1.0, -1.0, 0.0]);
    for (i, j, v) in [
        (1, 4, -SQRT_2 * c),
        (2, 4, c),
        (2, 5, -c),
        (3, 5, SQRT_2 * c),
        (4, 6, -SQRT_2 * c),
        (5, 6, SQRT_2 * c),
    ] {
        e.constant.set_hermitian_pair(i - 1, j - 1, real(v));
    }
    e.eps_linear = ComplexMatrix::from_real_diagonal(&[0.0, 0.0, 0.0, 1.0 / a, 1.0 / a, 2.0 / a]);
    // K = -sqrt2 q / eps on the flat block, L = -q / eps + eps / a
    e.eps_inverse.set_hermitian_pair(0, 1, real(-SQRT_2 * q));
    e.eps_inverse.set_hermitian_pair(1, 2, real(-SQRT_2 * q));
    e.eps_inverse.set_hermitian_pair(3, 4, real(-q));
    for (s, v) in [(3, -q), (4, -q), (5, -2.0 * q)] {
        e.eps_inverse.set(s, s, real(v));
    }
    match variant {
        Su3SixPartner::Corrected => {}
        Su3SixPartner::AmbiguousEntry { b } => {
            e.constant.set(4, 1, real(-delta / b));
        }
        Su3SixPartner::AsPrinted { b } => {
            e.constant.set(4, 1, real(-delta / b));
            e.eps_inverse.set_hermitian_pair(3, 4, real(-SQRT_2 * q));
        }
    }
    e
}

/// Six-dimensional model with an explicit partner variant.
pub fn build_su3six_variant(delta: f64, a: f64, eps: f64, variant: Su3SixPartner) -> AffineModel {
    let mut m = su3six(delta, a, variant);
    m.family = Family::Su3Six;
    m.descriptor = ModelDescriptor {
        family: Family::Su3Six.name().into(),
        k: None,
        delta: ParamValue::Scalar(delta),
        slope: ParamValue::Scalar(a),
        eps: Some(eps),
    };
    m
}

/// Eight-dimensional model: the 3-level bow-tie in the adjoint of su(3).
///
/// Basis: two Cartan directions, then root vectors with diabatic energies
/// `-2eps, 2eps, -bt-eps, eps-bt, bt-eps, bt+eps`.
fn su3adj8(delta: f64, b: f64) -> AffineModel {
    let s32 = 1.5_f64.sqrt();
    let r2 = SQRT_2;
    let d = delta;
    let mut a_const = ComplexMatrix::zeros(8);
    for (i, j, v) in [
        (1, 6, -I * s32 * d),
        (1, 7, -I * s32 * d),
        (2, 5, I * r2 * d),
        (2, 6, I * d / r2),
        (2, 7, I * d / r2),
        (2, 8, I * r2 * d),
        (3, 5, real(d)),
        (3, 7, real(d)),
        (4, 6, real(-d)),
        (4, 8, real(-d)),
    ] {
        a_const.set_hermitian_pair(i - 1, j - 1, v);
    }
    let a_eps = ComplexMatrix::from_real_diagonal(&[0.0, 0.0, -2.0, 2.0, -1.0, 1.0, -1.0, 1.0]);
    let slopes = vec![0.0, 0.0, 0.0, 0.0, -b, -b, b, b];

    let c = d / b;
    let q = d * d / b;
    let mut e = Partner::zero(8);
    e.time = ComplexMatrix::from_real_diagonal(&[0.0, 0.0, -2.0, 2.0, -1.0, 1.0, -1.0, 1.0]);
    for (i, j, v) in [
        (1, 6, I * s32 * c),
        (1, 7, I * s32 * c),
        (2, 5, I * r2 * c),
        (2, 6, -I * c / r2),
        (2, 7, -I * c / r2),
        (2, 8, I * r2 * c),
        (3, 5, real(-c)),
        (3, 7, real(c)),
        (4, 6, real(-c)),
        (4, 8, real(c)),
    ] {
        e.constant.set_hermitian_pair(i - 1, j - 1, v);
    }
    e.eps_linear = ComplexMatrix::from_real_diagonal(&[
        0.0,
        0.0,
        0.0,
        0.0,
        -1.0 / b,
        -1.0 / b,
        1.0 / b,
        1.0 / b,
    ]);
    for (i, j, v) in [
        (1, 3, I * s32 * q),
        (1, 4, I * s32 * q),
        (2, 3, I * q / r2),
        (2, 4, I * q / r2),
        (5, 6, real(-q)),
        (7, 8, real(q)),
    ] {
        e.eps_inverse.set_hermitian_pair(i - 1, j - 1, v);
    }
    for (s, v) in [(5, q), (6, q), (7, -q), (8, -q)] {
        e.eps_inverse.set(s - 1, s - 1, real(v));
    }
    raw(a_const, a_eps, slopes, Some(e))
}
