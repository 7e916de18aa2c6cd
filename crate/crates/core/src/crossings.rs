//! Scattering by path deformation.
//!
//! Zero curvature makes the evolution operator path independent, so the
//! physical path at fixed `eps` can be replaced by a detour far out in the
//! `(t, eps)` plane: up in `eps` at `t = -R`, across at large `eps`, and back
//! down at `t = R`. For `R -> inf` the diabatic levels of the generator meet
//! only at isolated points, each an elementary Landau-Zener problem, and the
//! long stretches between them dephase everything except exactly degenerate
//! levels. The total matrix is the product of the local ones.
//!
//! Locations are given in units of `R`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laxflow::ScatterMatrix;
use crate::models::{AffineModel, Family};
use crate::numerics::{inner, ComplexMatrix, C64};

/// Height of the standard path in units of `R` times the largest slope
/// parameter; any value above the highest crossing works.
pub const STANDARD_K: f64 = 4.0;

/// Off-diagonal entries at or below this magnitude count as uncoupled.
pub const COUPLING_THRESHOLD: f64 = 1e-12;

/// Crossings closer than this (in path parameter and scaled energy) coincide.
const COINCIDENCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossingKind {
    TwoLevel,
    ThreeLevel,
    Trivial,
}

/// One localized crossing along a deformed path.
///
/// Two-level events list their levels in ascending order. Three-level events
/// list the two sloped levels first (the one rising relative to the flat
/// level first) and the flat level last. When the flat role is carried by a
/// superposition of exactly degenerate levels, all of them are listed after
/// the sloped pair and `flat_mix` gives the normalized amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub index: usize,
    #[serde(rename = "t_over_R")]
    pub t_over_r: f64,
    #[serde(rename = "eps_over_R")]
    pub eps_over_r: f64,
    /// 1-based diabatic indices.
    pub levels: Vec<usize>,
    pub delta_eff: f64,
    pub slope_eff: f64,
    pub kind: CrossingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_mix: Option<Vec<C64>>,
}

impl CrossingEvent {
    /// The kind follows from the level count and whether `delta_eff` vanishes.
    pub fn new(
        index: usize,
        location: (f64, f64),
        levels: Vec<usize>,
        delta_eff: f64,
        slope_eff: f64,
    ) -> Result<Self> {
        if !(delta_eff >= 0.0 && delta_eff.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad effective coupling {delta_eff}")));
        }
        if !(slope_eff > 0.0 && slope_eff.is_finite()) {
            return Err(Error::InvalidParameter(format!("bad effective slope {slope_eff}")));
        }
        let kind = match (levels.len(), delta_eff == 0.0) {
            (2 | 3, true) => CrossingKind::Trivial,
            (2, false) => CrossingKind::TwoLevel,
            (3, false) => CrossingKind::ThreeLevel,
            (n, _) => {
                return Err(Error::InvalidParameter(format!(
                    "a crossing involves 2 or 3 levels, got {n}"
                )))
            }
        };
        let event = Self {
            index,
            t_over_r: location.0,
            eps_over_r: location.1,
            levels,
            delta_eff,
            slope_eff,
            kind,
            flat_mix: None,
        };
        event.check_levels(usize::MAX)?;
        Ok(event)
    }

    /// Three-level event whose flat role is the superposition `mix` of `group`.
    pub fn with_flat_mix(
        index: usize,
        location: (f64, f64),
        sloped: [usize; 2],
        group: Vec<usize>,
        mix: Vec<C64>,
        delta_eff: f64,
        slope_eff: f64,
    ) -> Result<Self> {
        if group.len() != mix.len() || group.is_empty() {
            return Err(Error::InvalidParameter("flat mix must weight every group level".into()));
        }
        let norm = inner(&mix, &mix).re.sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("flat mix must be nonzero".into()));
        }
        let mut event = Self::new(
            index,
            location,
            vec![sloped[0], sloped[1], group[0]],
            delta_eff,
            slope_eff,
        )?;
        event.levels.extend_from_slice(&group[1..]);
        event.flat_mix = Some(mix.iter().map(|z| z / norm).collect());
        event.check_levels(usize::MAX)?;
        Ok(event)
    }

    /// `pi delta_eff^2 / slope_eff`.
    pub fn exponent(&self) -> f64 {
        PI * self.delta_eff * self.delta_eff / self.slope_eff
    }

    /// Diabatic survival probability of the elementary problem.
    pub fn survival(&self) -> f64 {
        (-self.exponent()).exp()
    }

    fn check_levels(&self, k: usize) -> Result<()> {
        let mut seen = self.levels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.levels.len() || seen.first() == Some(&0) || seen.last().is_some_and(|&l| l > k) {
            return Err(Error::InvalidParameter(format!(
                "malformed level list {:?} for dimension {k}",
                self.levels
            )));
        }
        Ok(())
    }
}

/// Straight segment between two `(t/R, eps/R)` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: [f64; 2],
    pub end: [f64; 2],
}

/// Piecewise-straight detour replacing the physical path.
///
/// It starts at `(t, eps) = (-R, 0)` and ends at `(R, 0)`; the physical
/// `eps` is negligible on the `R` scale and the rays `|t| > R` at fixed
/// `eps` carry no crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub segments: Vec<Segment>,
}

impl PathSpec {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("invalid path: {msg}")));
        let (Some(first), Some(last)) = (segments.first(), segments.last()) else {
            return bad("no segments");
        };
        if !(first.start[0] < 0.0 && first.start[1] == 0.0) {
            return bad("must start at negative t on the eps = 0 axis");
        }
        if !(last.end[0] > 0.0 && last.end[1] == 0.0) {
            return bad("must end at positive t on the eps = 0 axis");
        }
        for s in &segments {
            if s.start.iter().chain(&s.end).any(|x| !x.is_finite()) || s.start == s.end {
                return bad("segments must be finite and non-degenerate");
            }
        }
        if segments.windows(2).any(|w| w[0].end != w[1].start) {
            return bad("segments must connect");
        }
        Ok(Self { segments })
    }

    /// Up at `t = -R` to `eps = height R`, across, and back down at `t = R`.
    /// A negative height detours through negative `eps`.
    pub fn standard(height: f64) -> Result<Self> {
        Self::new(vec![
            Segment { start: [-1.0, 0.0], end: [-1.0, height] },
            Segment { start: [-1.0, height], end: [1.0, height] },
            Segment { start: [1.0, height], end: [1.0, 0.0] },
        ])
    }

    /// Standard path of height `K max|slope parameter|` on the side of the
    /// model's `eps`.
    pub fn for_model(model: &AffineModel) -> Result<Self> {
        let eps = model.eps();
        if eps == 0.0 {
            return Err(Error::SingularPartner { eps });
        }
        let scale = model
            .descriptor()
            .slope
            .values()
            .iter()
            .fold(0.0_f64, |m, a| m.max(a.abs()));
        Self::standard(STANDARD_K * scale * eps.signum())
    }
}

fn require_nonzero_eps(eps_sign: f64) -> Result<()> {
    if eps_sign == 0.0 || eps_sign.is_nan() {
        return Err(Error::SingularPartner { eps: 0.0 });
    }
    Ok(())
}

/// Three-level bow-tie: `(2,3)` at `t = -R`, then `(1,3)` at `t = R`;
/// levels 1 and 2 trade places for `eps < 0`.
pub fn schedule_bowtie3(delta: f64, a: f64, eps_sign: f64) -> Result<Vec<CrossingEvent>> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("slope must be positive, got {a}")));
    }
    require_nonzero_eps(eps_sign)?;
    let (first, second, height) = if eps_sign > 0.0 { (2, 1, a) } else { (1, 2, -a) };
    let d = (delta / a).abs();
    let s = 1.0 / a / 2.0;
    Ok(vec![
        CrossingEvent::new(1, (-1.0, height), vec![first, 3], d, s)?,
        CrossingEvent::new(2, (1.0, height), vec![second, 3], d, s)?,
    ])
}

/// General bow-tie, `eps > 0`: crossings at `eps_i = |a_i| R`, first upward
/// at `t = -R`, then downward at `t = R`.
pub fn schedule_bowtie_n(deltas: &[f64], slopes: &[f64], eps_sign: f64) -> Result<Vec<CrossingEvent>> {
    require_nonzero_eps(eps_sign)?;
    if eps_sign < 0.0 {
        return Err(Error::Unsupported(
            "the tabulated bow-tie schedule covers eps > 0 only".into(),
        ));
    }
    if slopes.is_empty() || deltas.len() != slopes.len() {
        return Err(Error::InvalidParameter(format!(
            "{} couplings for {} slopes",
            deltas.len(),
            slopes.len()
        )));
    }
    if slopes.iter().any(|a| *a == 0.0 || !a.is_finite()) {
        return Err(Error::InvalidParameter("slopes must be finite and nonzero".into()));
    }
    if slopes.windows(2).any(|w| !(w[0].abs() < w[1].abs())) {
        return Err(Error::InvalidParameter(format!(
            "slopes must have strictly increasing magnitudes, got {slopes:?}"
        )));
    }
    let pair = |flat: usize, i: usize| {
        let mut l = vec![flat, i + 3];
        l.sort_unstable();
        l
    };
    let mut events = Vec::with_capacity(2 * slopes.len());
    let order = (0..slopes.len()).chain((0..slopes.len()).rev());
    for (n, i) in order.enumerate() {
        let a = slopes[i];
        let up = n < slopes.len();
        // up: p-levels meet level 2, n-levels level 1; down: the reverse
        let flat = if (a > 0.0) == up { 2 } else { 1 };
        events.push(CrossingEvent::new(
            n + 1,
            (if up { -1.0 } else { 1.0 }, a.abs()),
            pair(flat, i),
            (deltas[i] / a).abs(),
            1.0 / a.abs() / 2.0,
        )?);
    }
    Ok(events)
}

/// The seven crossings of the six-dimensional su(3) bow-tie (`eps > 0`).
pub fn schedule_su3six(delta: f64, a: f64, eps_sign: f64) -> Result<Vec<CrossingEvent>> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("slope must be positive, got {a}")));
    }
    if !(eps_sign > 0.0) {
        return Err(Error::Unsupported(
            "the six-level crossing table covers eps > 0 only".into(),
        ));
    }
    let two = (delta / a).abs();
    let three = SQRT_2 * two;
    let half = 1.0 / a / 2.0;
    let rows: [(f64, f64, &[usize], f64, f64); 7] = [
        (-1.0, a, &[2, 4], two, half),
        (-1.0, a, &[6, 3, 5], three, 1.0 / a),
        (-1.0, 3.0 * a, &[3, 4], 0.0, half),
        (0.0, STANDARD_K * a, &[2, 6], 0.0, a),
        (1.0, 3.0 * a, &[1, 5], 0.0, half),
        (1.0, a, &[2, 5], two, half),
        (1.0, a, &[1, 6, 4], three, 1.0 / a),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (t, e, levels, d, s))| CrossingEvent::new(i + 1, (*t, *e), levels.to_vec(), *d, *s))
        .collect()
}

/// Three-level block in (rising, falling, flat) order.
fn three_level_block(u: f64) -> [[f64; 3]; 3] {
    let v = 1.0 - u;
    let x = 2.0 * u * v;
    [
        [u * u, v * v, x],
        [v * v, u * u, x],
        [x, x, (1.0 - 2.0 * u).powi(2)],
    ]
}

/// Embedded local matrix of one event.
///
/// For a mixed flat role this is the response to a single diabatic input
/// state; coherences between degenerate levels are only tracked by
/// [`compose`].
pub fn local_smatrix(event: &CrossingEvent, k: usize) -> Result<ScatterMatrix> {
    event.check_levels(k)?;
    let mut rows = ScatterMatrix::identity(k).rows().to_vec();
    let idx: Vec<usize> = event.levels.iter().map(|l| l - 1).collect();
    let u = event.survival();
    let v = 1.0 - u;
    match event.kind {
        CrossingKind::Trivial => {}
        CrossingKind::TwoLevel => {
            let (i, j) = (idx[0], idx[1]);
            rows[i][i] = u;
            rows[j][j] = u;
            rows[i][j] = v;
            rows[j][i] = v;
        }
        CrossingKind::ThreeLevel => {
            let block = three_level_block(u);
            match &event.flat_mix {
                None => {
                    for (r, &i) in idx.iter().enumerate() {
                        for (c, &j) in idx.iter().enumerate() {
                            rows[i][j] = block[r][c];
                        }
                    }
                }
                Some(mix) => {
                    let group = &idx[2..];
                    let w: Vec<f64> = mix.iter().map(|z| z.norm_sqr()).collect();
                    let bright = C64::new(2.0 * u - 1.0, 0.0);
                    for (r, &i) in idx[..2].iter().enumerate() {
                        for (c, &j) in idx[..2].iter().enumerate() {
                            rows[i][j] = block[r][c];
                        }
                        for (g, &j) in group.iter().enumerate() {
                            rows[i][j] = block[r][2] * w[g];
                            rows[j][i] = block[2][r] * w[g];
                        }
                    }
                    // amplitude within the group: dark part untouched, bright scaled
                    for (g, &i) in group.iter().enumerate() {
                        for (h, &j) in group.iter().enumerate() {
                            let delta = if g == h { 1.0 } else { 0.0 };
                            let amp = C64::new(delta, 0.0) + (bright - 1.0) * mix[g] * mix[h].conj();
                            rows[i][j] = amp.norm_sqr();
                        }
                    }
                }
            }
        }
    }
    ScatterMatrix::from_rows(rows)
}

/// Total matrix of a schedule, latest event leftmost.
///
/// Plain schedules multiply the local matrices. When an event's flat role
/// is a superposition of degenerate levels, those levels never dephase, so
/// each input state is followed as a density matrix that keeps coherences
/// inside such groups and only populations elsewhere.
pub fn compose(schedule: &[CrossingEvent], k: usize) -> Result<ScatterMatrix> {
    for e in schedule {
        e.check_levels(k)?;
    }
    let groups = coherent_groups(schedule, k);
    if groups.iter().all(|g| g.len() == 1) {
        let mut total = ScatterMatrix::identity(k);
        for e in schedule {
            total = local_smatrix(e, k)?.product(&total);
        }
        return Ok(total);
    }
    let mut columns = Vec::with_capacity(k);
    for j in 0..k {
        let mut rho = ComplexMatrix::zeros(k);
        rho.set(j, j, C64::new(1.0, 0.0));
        for e in schedule {
            apply_coherent(&mut rho, e, &groups)?;
        }
        columns.push(rho.diagonal().iter().map(|z| z.re).collect::<Vec<f64>>());
    }
    let rows = (0..k).map(|i| (0..k).map(|j| columns[j][i]).collect()).collect();
    ScatterMatrix::from_rows(rows)
}

/// Partition of `0..k` into sets of levels tied together by mixed events.
fn coherent_groups(schedule: &[CrossingEvent], k: usize) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..k).collect();
    for e in schedule.iter().filter(|e| e.flat_mix.is_some()) {
        let members: Vec<usize> = e.levels[2..].iter().map(|l| l - 1).collect();
        let target = label[members[0]];
        for m in members {
            let old = label[m];
            for l in label.iter_mut().filter(|l| **l == old) {
                *l = target;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for root in 0..k {
        let g: Vec<usize> = (0..k).filter(|&i| label[i] == root).collect();
        if !g.is_empty() {
            groups.push(g);
        }
    }
    groups
}

fn apply_coherent(rho: &mut ComplexMatrix, e: &CrossingEvent, groups: &[Vec<usize>]) -> Result<()> {
    let group_of = |level: usize| groups.iter().find(|g| g.contains(&level)).expect("partition");
    let idx: Vec<usize> = e.levels.iter().map(|l| l - 1).collect();
    let u = e.survival();
    let v = 1.0 - u;
    let pop = |rho: &ComplexMatrix, i: usize| rho.get(i, i).re;
    let sloped_singletons = |n: usize| idx[..n].iter().all(|&i| group_of(i).len() == 1);
    match e.kind {
        CrossingKind::Trivial => Ok(()),
        CrossingKind::TwoLevel => {
            if !sloped_singletons(2) {
                return Err(Error::Unsupported(format!(
                    "two-level crossing {:?} touches coherent degenerate levels",
                    e.levels
                )));
            }
            let (i, j) = (idx[0], idx[1]);
            let (pi, pj) = (pop(rho, i), pop(rho, j));
            rho.set(i, i, C64::new(u * pi + v * pj, 0.0));
            rho.set(j, j, C64::new(v * pi + u * pj, 0.0));
            Ok(())
        }
        CrossingKind::ThreeLevel => {
            if !sloped_singletons(2) {
                return Err(Error::Unsupported(format!(
                    "sloped levels of crossing {:?} must not be degenerate partners",
                    e.levels
                )));
            }
            let k = rho.dim();
            let mut b = vec![C64::new(0.0, 0.0); k];
            match &e.flat_mix {
                None => b[idx[2]] = C64::new(1.0, 0.0),
                Some(mix) => {
                    for (&i, z) in idx[2..].iter().zip(mix) {
                        b[i] = *z;
                    }
                }
            }
            let group = group_of(idx[2]);
            if idx[2..].iter().any(|i| !group.contains(i)) {
                return Err(Error::Unsupported("flat mix spans unrelated levels".into()));
            }
            // projectors on the group: P onto the bright vector, Q = 1_G - P
            let p = ComplexMatrix::from_fn(k, |r, c| b[r] * b[c].conj());
            let mut q = ComplexMatrix::zeros(k);
            for &g in group {
                q.set(g, g, C64::new(1.0, 0.0));
            }
            q = &q - &p;
            let n_bright = (&p * &*rho).trace().re;
            let (pp, pm) = (pop(rho, idx[0]), pop(rho, idx[1]));
            let x = 2.0 * u * v;
            let new_bright = (1.0 - 2.0 * u).powi(2) * n_bright + x * (pp + pm);
            let new_plus = u * u * pp + v * v * pm + x * n_bright;
            let new_minus = v * v * pp + u * u * pm + x * n_bright;
            let amp = C64::new(2.0 * u - 1.0, 0.0);
            let mut block = &(&q * &*rho) * &q;
            let cross = &(&(&p * &*rho) * &q) + &(&(&q * &*rho) * &p);
            block.axpy(amp, &cross);
            block.axpy(C64::new(new_bright, 0.0), &p);
            for &r in group {
                for &c in group {
                    rho.set(r, c, block.get(r, c));
                }
            }
            rho.set(idx[0], idx[0], C64::new(new_plus, 0.0));
            rho.set(idx[1], idx[1], C64::new(new_minus, 0.0));
            Ok(())
        }
    }
}

/// Schedule export: ordered events as a JSON array.
pub fn schedule_to_json(schedule: &[CrossingEvent]) -> String {
    serde_json::to_string(schedule).expect("schedule serialization cannot fail")
}

/// Leading-order `(t, eps)`-scaling parts of the model, with `R = 1`.
struct Scaled {
    /// Diagonals of `dH/deps`, `B`, `dE/deps` (linear part) and `dE/dt`.
    h_eps: Vec<f64>,
    h_t: Vec<f64>,
    e_eps: Vec<f64>,
    e_t: Vec<f64>,
    /// `R`-independent couplings of `H` and `E`.
    h_c: ComplexMatrix,
    e_c: ComplexMatrix,
    /// Levels with identical diagonals of `H` and `E` everywhere.
    degenerate: Vec<Vec<usize>>,
}

impl Scaled {
    fn new(model: &AffineModel) -> Result<Self> {
        let partner = model
            .partner()
            .ok_or_else(|| Error::MissingPartner(model.family().name().to_string()))?;
        let k = model.dim();
        for (name, m) in [
            ("dH/deps", model.d_eps_hamiltonian()),
            ("dE/deps", &partner.eps_linear),
            ("dE/dt", &partner.time),
        ] {
            let off = (0..k)
                .flat_map(|i| (0..k).map(move |j| (i, j)))
                .filter(|(i, j)| i != j)
                .fold(0.0_f64, |acc, (i, j)| acc.max(m.get(i, j).norm()));
            if off > COUPLING_THRESHOLD {
                return Err(Error::Unsupported(format!(
                    "{name} has off-diagonal entries; crossings do not separate"
                )));
            }
        }
        let diag = |m: &ComplexMatrix| (0..k).map(|i| m.get(i, i).re).collect::<Vec<f64>>();
        let signature = |i: usize| {
            [
                model.a_const().get(i, i).re,
                model.d_eps_hamiltonian().get(i, i).re,
                model.slopes()[i],
                partner.constant.get(i, i).re,
                partner.eps_linear.get(i, i).re,
                partner.eps_inverse.get(i, i).re,
                partner.time.get(i, i).re,
            ]
        };
        let mut degenerate: Vec<Vec<usize>> = Vec::new();
        for i in 0..k {
            match degenerate.iter_mut().find(|g| signature(g[0]) == signature(i)) {
                Some(g) => g.push(i),
                None => degenerate.push(vec![i]),
            }
        }
        Ok(Self {
            h_eps: diag(model.d_eps_hamiltonian()),
            h_t: model.slopes().to_vec(),
            e_eps: diag(&partner.eps_linear),
            e_t: diag(&partner.time),
            h_c: model.a_const().clone(),
            e_c: partner.constant.clone(),
            degenerate,
        })
    }

    /// Diabatic energy of `|dt| H + |deps| E` at scaled point `(t, eps)`.
    fn energy(&self, l: usize, dir: [f64; 2], p: [f64; 2]) -> f64 {
        dir[0].abs() * (p[1] * self.h_eps[l] + p[0] * self.h_t[l])
            + dir[1].abs() * (p[1] * self.e_eps[l] + p[0] * self.e_t[l])
    }

    /// Rate of [`Scaled::energy`] along the unit direction.
    fn rate(&self, l: usize, dir: [f64; 2]) -> f64 {
        dir[0].abs() * (dir[1] * self.h_eps[l] + dir[0] * self.h_t[l])
            + dir[1].abs() * (dir[1] * self.e_eps[l] + dir[0] * self.e_t[l])
    }

    /// Coupling of the segment generator `dt H + deps E` between `i` and `j`.
    fn coupling(&self, i: usize, j: usize, dir: [f64; 2]) -> C64 {
        self.h_c.get(i, j) * dir[0] + self.e_c.get(i, j) * dir[1]
    }

    fn group_of(&self, l: usize) -> &[usize] {
        self.degenerate.iter().find(|g| g.contains(&l)).expect("partition")
    }
}

struct Cluster {
    tau: f64,
    energy: f64,
    levels: Vec<usize>,
    pairs: Vec<(usize, usize)>,
}

/// Crossing schedule read off the diabatic levels of the path generator.
///
/// Works in the `R -> inf` limit: only the parts of `H` and `E` growing with
/// `R` set the diabatic energies, and only the `R`-independent off-diagonal
/// parts couple at a crossing. Coincident crossings are grouped; coupled
/// components of two levels are Landau-Zener crossings, components of three
/// must have the symmetric shape of the spin-1 problem. Persistently
/// degenerate levels coupled to a crossing through one common vector enter
/// as that bright superposition.
pub fn derive_schedule_generic(model: &AffineModel, path: &PathSpec) -> Result<Vec<CrossingEvent>> {
    let scaled = Scaled::new(model)?;
    let k = model.dim();
    let mut events = Vec::new();
    for seg in &path.segments {
        let d = [seg.end[0] - seg.start[0], seg.end[1] - seg.start[1]];
        let len = d[0].hypot(d[1]);
        let dir = [d[0] / len, d[1] / len];
        let at = |tau: f64| [seg.start[0] + tau * d[0], seg.start[1] + tau * d[1]];
        let p0: Vec<f64> = (0..k).map(|l| scaled.energy(l, dir, seg.start)).collect();
        let p1: Vec<f64> = (0..k).map(|l| scaled.energy(l, dir, seg.end)).collect();

        let mut crossings: Vec<(f64, f64, usize, usize)> = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                let (g0, g1) = (p0[i] - p0[j], p1[i] - p1[j]);
                if g0 * g1 < 0.0 {
                    let tau = g0 / (g0 - g1);
                    if tau > COINCIDENCE && tau < 1.0 - COINCIDENCE {
                        let energy = p0[i] + tau * (p1[i] - p0[i]);
                        crossings.push((tau, energy, i, j));
                    }
                }
            }
        }
        let mut clusters: Vec<Cluster> = Vec::new();
        for (tau, energy, i, j) in crossings {
            let found = clusters
                .iter_mut()
                .find(|c| (c.tau - tau).abs() < COINCIDENCE && (c.energy - energy).abs() < COINCIDENCE);
            let c = match found {
                Some(c) => c,
                None => {
                    clusters.push(Cluster { tau, energy, levels: Vec::new(), pairs: Vec::new() });
                    clusters.last_mut().expect("just pushed")
                }
            };
            c.pairs.push((i, j));
            for l in [i, j] {
                if !c.levels.contains(&l) {
                    c.levels.push(l);
                }
            }
        }
        clusters.sort_by(|a, b| {
            a.tau
                .total_cmp(&b.tau)
                .then(a.energy.total_cmp(&b.energy))
        });
        for c in &mut clusters {
            c.levels.sort_unstable();
            let point = at(c.tau);
            let mut found = cluster_events(&scaled, c, dir, (point[0], point[1]))?;
            found.sort_by_key(|e| *e.levels.iter().min().expect("non-empty"));
            events.extend(found);
        }
    }
    for (i, e) in events.iter_mut().enumerate() {
        e.index = i + 1;
    }
    Ok(events)
}

/// A level or a bright superposition of degenerate levels.
struct Node {
    members: Vec<usize>,
    mix: Vec<C64>,
}

fn cluster_events(
    scaled: &Scaled,
    cluster: &Cluster,
    dir: [f64; 2],
    location: (f64, f64),
) -> Result<Vec<CrossingEvent>> {
    let levels = &cluster.levels;
    let mut nodes: Vec<Node> = Vec::new();
    let mut handled: Vec<usize> = Vec::new();
    for &l in levels {
        if handled.contains(&l) {
            continue;
        }
        let group: Vec<usize> = scaled
            .group_of(l)
            .iter()
            .copied()
            .filter(|g| levels.contains(g))
            .collect();
        handled.extend(&group);
        if group.len() == 1 {
            nodes.push(Node { members: group, mix: vec![C64::new(1.0, 0.0)] });
            continue;
        }
        for &a in &group {
            for &b in &group {
                if a != b && scaled.coupling(a, b, dir).norm() > COUPLING_THRESHOLD {
                    return Err(Error::Unsupported("degenerate levels couple to each other".into()));
                }
            }
        }
        let mut bright: Option<Vec<C64>> = None;
        for &x in levels.iter().filter(|x| !group.contains(x)) {
            let vx: Vec<C64> = group.iter().map(|&g| scaled.coupling(g, x, dir)).collect();
            let nx = inner(&vx, &vx).re.sqrt();
            if nx <= COUPLING_THRESHOLD {
                continue;
            }
            match &bright {
                None => bright = Some(vx.iter().map(|z| z / nx).collect()),
                Some(b) => {
                    if (inner(b, &vx).norm() - nx).abs() > COINCIDENCE * nx {
                        return Err(Error::Unsupported(format!(
                            "degenerate levels {:?} couple through independent channels",
                            group.iter().map(|g| g + 1).collect::<Vec<_>>()
                        )));
                    }
                }
            }
        }
        // uncoupled degenerate levels pass straight through
        if let Some(mix) = bright {
            nodes.push(Node { members: group, mix });
        }
    }
    let node_coupling = |a: &Node, b: &Node| -> f64 {
        let v: Vec<C64> = a
            .members
            .iter()
            .map(|&i| {
                b.members
                    .iter()
                    .zip(&b.mix)
                    .map(|(&j, w)| scaled.coupling(i, j, dir) * w)
                    .sum::<C64>()
            })
            .collect();
        inner(&a.mix, &v).norm()
    };
    let n = nodes.len();
    let mut component: Vec<usize> = (0..n).collect();
    for a in 0..n {
        for b in a + 1..n {
            if node_coupling(&nodes[a], &nodes[b]) > COUPLING_THRESHOLD {
                let (old, new) = (component[b], component[a]);
                for c in component.iter_mut().filter(|c| **c == old) {
                    *c = new;
                }
            }
        }
    }
    let rate = |node: &Node| scaled.rate(node.members[0], dir);
    let mut events = Vec::new();
    let mut comp_ids: Vec<usize> = component.clone();
    comp_ids.sort_unstable();
    comp_ids.dedup();
    for id in comp_ids {
        let members: Vec<&Node> = (0..n).filter(|&i| component[i] == id).map(|i| &nodes[i]).collect();
        match members.len() {
            1 => {}
            2 => {
                if members.iter().any(|m| m.members.len() > 1) {
                    return Err(Error::Unsupported(
                        "two-level crossing with a degenerate superposition".into(),
                    ));
                }
                let (a, b) = (members[0], members[1]);
                let mut lv = vec![a.members[0] + 1, b.members[0] + 1];
                lv.sort_unstable();
                events.push(CrossingEvent::new(
                    0,
                    location,
                    lv,
                    node_coupling(a, b),
                    (rate(a) - rate(b)).abs() / 2.0,
                )?);
            }
            3 => events.push(three_level_event(&members, &node_coupling, &rate, location)?),
            m => {
                return Err(Error::Unsupported(format!(
                    "{m} mutually coupled levels cross at {location:?}"
                )))
            }
        }
    }
    // uncoupled crossings between ordinary levels in different components
    for &(i, j) in &cluster.pairs {
        let node_index = |l: usize| nodes.iter().position(|nd| nd.members == [l]);
        let (Some(a), Some(b)) = (node_index(i), node_index(j)) else {
            continue;
        };
        if component[a] != component[b] {
            events.push(CrossingEvent::new(
                0,
                location,
                vec![i + 1, j + 1],
                0.0,
                (rate(&nodes[a]) - rate(&nodes[b])).abs() / 2.0,
            )?);
        }
    }
    Ok(events)
}

fn three_level_event(
    members: &[&Node],
    coupling: &dyn Fn(&Node, &Node) -> f64,
    rate: &dyn Fn(&Node) -> f64,
    location: (f64, f64),
) -> Result<CrossingEvent> {
    let unsupported = |why: &str| Err(Error::Unsupported(format!("three-level crossing at {location:?}: {why}")));
    let Some(f) = (0..3).find(|&f| {
        (0..3)
            .filter(|&o| o != f)
            .all(|o| coupling(members[f], members[o]) > COUPLING_THRESHOLD)
    }) else {
        return unsupported("no level couples to both others");
    };
    let others: Vec<usize> = (0..3).filter(|&o| o != f).collect();
    let (a, b) = (members[others[0]], members[others[1]]);
    let flat = members[f];
    if coupling(a, b) > COUPLING_THRESHOLD {
        return unsupported("sloped levels couple directly");
    }
    if a.members.len() > 1 || b.members.len() > 1 {
        return unsupported("sloped role taken by degenerate levels");
    }
    let (ca, cb) = (coupling(a, flat), coupling(b, flat));
    if (ca - cb).abs() > COINCIDENCE * ca.max(cb) {
        return unsupported("unequal couplings");
    }
    let (ra, rb) = (rate(a) - rate(flat), rate(b) - rate(flat));
    if (ra + rb).abs() > COINCIDENCE * ra.abs().max(rb.abs()) || ra == 0.0 {
        return unsupported("asymmetric slopes");
    }
    let (plus, minus) = if ra > 0.0 { (a, b) } else { (b, a) };
    let sloped = [plus.members[0] + 1, minus.members[0] + 1];
    if flat.members.len() == 1 {
        CrossingEvent::new(0, location, vec![sloped[0], sloped[1], flat.members[0] + 1], ca, ra.abs())
    } else {
        CrossingEvent::with_flat_mix(
            0,
            location,
            sloped,
            flat.members.iter().map(|m| m + 1).collect(),
            flat.mix.clone(),
            ca,
            ra.abs(),
        )
    }
}

/// Schedule for any partner family: the tabulated one where it exists,
/// the derived one otherwise. The flag reports whether a table was used.
pub fn schedule_for_model(model: &AffineModel) -> Result<(Vec<CrossingEvent>, bool)> {
    let eps = model.eps();
    let d = model.descriptor();
    match model.family() {
        Family::Bowtie3 => Ok((schedule_bowtie3(model.delta(), model.slope(), eps)?, true)),
        Family::BowtieN if eps > 0.0 => {
            let slopes = d.slope.values();
            let deltas = d.delta.broadcast(slopes.len())?;
            Ok((schedule_bowtie_n(&deltas, &slopes, eps)?, true))
        }
        Family::Su3Six if eps > 0.0 => Ok((schedule_su3six(model.delta(), model.slope(), eps)?, true)),
        f if f.has_partner() => Ok((derive_schedule_generic(model, &PathSpec::for_model(model)?)?, false)),
        f => Err(Error::Unsupported(format!("family {f} has no crossing schedule"))),
    }
}

/// Composed scattering matrix of a partner family.
pub fn smatrix_crossings(model: &AffineModel) -> Result<ScatterMatrix> {
    let (schedule, _) = schedule_for_model(model)?;
    compose(&schedule, model.dim())
}
