//! Objective priors as unnormalized log-densities.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::family::transform::Transform;
use crate::family::{product_grid, CoordMap, FamilyModel, Interval, ParameterSpace};
use crate::numeric::quadrature::{integrate_vec, legendre, QuadOptions};

/// Shape of a log-prior, before the additive offset.
pub type LogShape = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;
/// A function of one parameter block.
pub type BlockFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Jeffreys,
    Gml,
    MomentMatching,
    HartiganMl,
    ReferenceOrthogonal,
    ReferenceCompact,
    HaarLeft,
    HaarRight,
    Uniform,
    Custom,
}

impl Construction {
    pub const ALL: [Construction; 10] = [
        Construction::Jeffreys,
        Construction::Gml,
        Construction::MomentMatching,
        Construction::HartiganMl,
        Construction::ReferenceOrthogonal,
        Construction::ReferenceCompact,
        Construction::HaarLeft,
        Construction::HaarRight,
        Construction::Uniform,
        Construction::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Construction::Jeffreys => "jeffreys",
            Construction::Gml => "gml",
            Construction::MomentMatching => "moment_matching",
            Construction::HartiganMl => "hartigan_ml",
            Construction::ReferenceOrthogonal => "reference_orthogonal",
            Construction::ReferenceCompact => "reference_compact",
            Construction::HaarLeft => "haar_left",
            Construction::HaarRight => "haar_right",
            Construction::Uniform => "uniform",
            Construction::Custom => "custom",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Construction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        match s.as_str() {
            "flat" => return Ok(Construction::Uniform),
            "right_haar" => return Ok(Construction::HaarRight),
            "left_haar" => return Ok(Construction::HaarLeft),
            _ => {}
        }
        Construction::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown prior construction `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propriety {
    Unknown,
    Yes,
    No,
}

/// Serializable description of a prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorDescriptor {
    pub construction: String,
    pub family_id: String,
    #[serde(default)]
    pub anchor: Option<Vec<f64>>,
    #[serde(default)]
    pub params: Value,
}

/// Unnormalized log-prior with construction metadata.
#[derive(Clone)]
pub struct PriorDensity {
    shape: LogShape,
    log_offset: f64,
    space: ParameterSpace,
    construction: Construction,
    anchor: Vec<f64>,
    proper: Propriety,
    descriptor: PriorDescriptor,
}

impl fmt::Debug for PriorDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PriorDensity")
            .field("construction", &self.construction)
            .field("family", &self.descriptor.family_id)
            .field("anchor", &self.anchor)
            .finish()
    }
}

impl PriorDensity {
    /// Build a prior, pinning log π(anchor) = 0.
    pub fn new(
        shape: LogShape,
        space: ParameterSpace,
        construction: Construction,
        anchor: Vec<f64>,
        family_id: &str,
        params: Value,
    ) -> Result<Self> {
        space.check(&anchor)?;
        let at_anchor = shape(&anchor)?;
        if !at_anchor.is_finite() {
            return Err(Error::Domain(format!("log-prior not finite at the anchor {anchor:?}")));
        }
        Ok(PriorDensity {
            shape,
            log_offset: -at_anchor,
            proper: known_propriety(family_id, construction),
            descriptor: PriorDescriptor {
                construction: construction.as_str().into(),
                family_id: family_id.into(),
                anchor: Some(anchor.clone()),
                params,
            },
            space,
            construction,
            anchor,
        })
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        self.space.check(theta)?;
        let v = (self.shape)(theta)? + self.log_offset;
        if !v.is_finite() {
            return Err(Error::Domain(format!("log-prior not finite at {theta:?}")));
        }
        Ok(v)
    }

    /// Evaluate without the interior check (for callers that already validated θ).
    pub fn log_density_unchecked(&self, theta: &[f64]) -> Result<f64> {
        Ok((self.shape)(theta)? + self.log_offset)
    }

    /// The same prior multiplied by the positive constant `c`.
    pub fn scaled(&self, c: f64) -> PriorDensity {
        assert!(c > 0.0, "scale factor must be positive");
        let mut p = self.clone();
        p.log_offset += c.ln();
        p
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }
    pub fn construction(&self) -> Construction {
        self.construction
    }
    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }
    pub fn proper(&self) -> Propriety {
        self.proper
    }
    pub fn descriptor(&self) -> &PriorDescriptor {
        &self.descriptor
    }
    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    fn with_params(mut self, params: Value) -> Self {
        self.descriptor.params = params;
        self
    }

    /// (θ, log π(θ)) on a grid.
    pub fn tabulate(&self, grid: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, f64)>> {
        grid.iter().map(|t| Ok((t.clone(), self.log_density(t)?))).collect()
    }
}

/// Standard deviation of log a − log b over `grid`; zero iff the priors are proportional there.
pub fn log_difference_spread(a: &PriorDensity, b: &PriorDensity, grid: &[Vec<f64>]) -> Result<f64> {
    let d: Vec<f64> = grid.iter().map(|t| Ok(a.log_density(t)? - b.log_density(t)?)).collect::<Result<_>>()?;
    Ok(std_dev(&d))
}

pub fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Closed-form propriety facts for catalog families.
fn known_propriety(family_id: &str, c: Construction) -> Propriety {
    use Construction::*;
    match (family_id, c) {
        ("binomial", Jeffreys | Gml | Uniform) => Propriety::Yes,
        ("binomial", MomentMatching | HartiganMl) => Propriety::No,
        ("poisson" | "exp_scale" | "halfnormal_scale" | "normal_known_var" | "logistic_location", _) => Propriety::No,
        ("bvn_rho", Uniform) => Propriety::Yes,
        _ => Propriety::Unknown,
    }
}

fn require_scalar(family: &FamilyModel, what: &str) -> Result<()> {
    if family.dim() != 1 {
        return Err(Error::Precondition(format!("{what} needs a scalar parameter; `{}` has {}", family.id(), family.dim())));
    }
    Ok(())
}

/// Jeffreys: log π = ½ log det I(θ).
pub fn jeffreys(family: &FamilyModel) -> Result<PriorDensity> {
    let f = family.clone();
    let shape: LogShape = Arc::new(move |t: &[f64]| Ok(0.5 * f.log_det_fisher(t)?));
    PriorDensity::new(shape, family.space().clone(), Construction::Jeffreys, family.anchor(), &family.id(), json!({}))
}

/// Hartigan's maximum-likelihood prior π = I(θ).
pub fn hartigan_ml_prior(family: &FamilyModel) -> Result<PriorDensity> {
    require_scalar(family, "hartigan_ml_prior")?;
    let f = family.clone();
    let shape: LogShape = Arc::new(move |t: &[f64]| Ok(f.fisher_information(t)?[(0, 0)].ln()));
    PriorDensity::new(shape, family.space().clone(), Construction::HartiganMl, family.anchor(), &family.id(), json!({}))
}

/// Flat prior.
pub fn uniform(family: &FamilyModel) -> Result<PriorDensity> {
    PriorDensity::new(Arc::new(|_| Ok(0.0)), family.space().clone(), Construction::Uniform, family.anchor(), &family.id(), json!({}))
}

/// ∫_{a}^{b} f(t) dt along a scalar coordinate, integrated in the coordinate's
/// unconstrained variable so endpoint behaviour like 1/t stays smooth.
fn coordinate_integral<F>(f: F, a: f64, b: f64, coord: CoordMap, noise: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    let (va, vb) = (coord.to_real(a), coord.to_real(b));
    let mut failure: Option<Error> = None;
    let opts = QuadOptions { abs_tol: 1e-11, rel_tol: 1e-11, noise, initial_pieces: 2, ..QuadOptions::default() };
    let r = integrate_vec(
        |v, out| {
            if failure.is_some() {
                return;
            }
            let t = coord.from_real(v);
            match f(t) {
                Ok(y) => out[0] = y * coord.log_jacobian(v).exp(),
                Err(e) => failure = Some(e),
            }
        },
        va.min(vb),
        va.max(vb),
        1,
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let r = r.map_err(|e| Error::Integration(format!("prior integral over [{a}, {b}]: {e}")))?;
    Ok(if vb >= va { r.values[0] } else { -r.values[0] })
}

fn integral_prior<F>(family: &FamilyModel, anchor: Option<f64>, c: Construction, integrand: F) -> Result<PriorDensity>
where
    F: Fn(&FamilyModel, f64) -> Result<f64> + Send + Sync + 'static,
{
    let t0 = anchor.unwrap_or(family.anchor()[0]);
    family.check_point(&[t0])?;
    let coord = family.space().coord(0);
    let f = family.clone();
    let noise = if family.has_exact_g3() { 0.0 } else { 1e-7 };
    let shape: LogShape = Arc::new(move |t: &[f64]| coordinate_integral(|s| integrand(&f, s), t0, t[0], coord, noise));
    PriorDensity::new(shape, family.space().clone(), c, vec![t0], &family.id(), json!({}))
}

/// GML (chi-square divergence) prior: log π(θ) = ∫_{θ₀}^{θ} (2g₃ − I′)/(4I) dt.
pub fn gml_prior(family: &FamilyModel, anchor: Option<f64>) -> Result<PriorDensity> {
    require_scalar(family, "gml_prior")?;
    integral_prior(family, anchor, Construction::Gml, |f, t| {
        let i = f.fisher_information(&[t])?[(0, 0)];
        let di = f.fisher_derivative(t)?;
        let g3 = f.g3(&[t])?;
        Ok((2.0 * g3 - di) / (4.0 * i))
    })
}

/// Moment-matching prior: log π(θ) = ½ ∫_{θ₀}^{θ} g₃/I dt.
///
/// With g₃ = −E[ℓ‴] the posterior-mean shift is −g₃/(2I²) + π′/(Iπ), which
/// vanishes for this sign; it gives I^{1/2} for a canonical parameter and the
/// Haldane prior for a binomial proportion.
pub fn moment_matching_prior(family: &FamilyModel, anchor: Option<f64>) -> Result<PriorDensity> {
    require_scalar(family, "moment_matching_prior")?;
    integral_prior(family, anchor, Construction::MomentMatching, |f, t| {
        let i = f.fisher_information(&[t])?[(0, 0)];
        let g3 = f.g3(&[t])?;
        Ok(0.5 * g3 / i)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaarSide {
    Left,
    Right,
}

/// Left (σ⁻²) or right (σ⁻¹) Haar prior for the normal location–scale family.
pub fn haar_location_scale(family: &FamilyModel, side: HaarSide) -> Result<PriorDensity> {
    if family.id() != "normal" {
        return Err(Error::Precondition(format!("Haar priors need the location–scale family, not `{}`", family.id())));
    }
    let power = match side {
        HaarSide::Left => 2.0,
        HaarSide::Right => 1.0,
    };
    let shape: LogShape = Arc::new(move |t: &[f64]| Ok(-power * t[1].ln()));
    let c = match side {
        HaarSide::Left => Construction::HaarLeft,
        HaarSide::Right => Construction::HaarRight,
    };
    PriorDensity::new(shape, family.space().clone(), c, family.anchor(), &family.id(), json!({}))
}

/// π = Π (θⱼ − lowerⱼ)^{powersⱼ}; coordinates on ℝ must have power 0.
pub fn power_law(family: &FamilyModel, powers: &[f64]) -> Result<PriorDensity> {
    if powers.len() != family.dim() {
        return Err(Error::Config(format!("power law needs {} powers, got {}", family.dim(), powers.len())));
    }
    let lowers: Vec<f64> = family.space().boxes().iter().map(|b| b.lower).collect();
    for (j, (&p, &lo)) in powers.iter().zip(&lowers).enumerate() {
        if p != 0.0 && !lo.is_finite() {
            return Err(Error::Config(format!("coordinate {j} is unbounded below; its power must be 0")));
        }
    }
    let pw = powers.to_vec();
    let shape: LogShape = Arc::new(move |t: &[f64]| {
        Ok(t.iter().zip(&pw).zip(&lowers).filter(|((_, p), _)| **p != 0.0).map(|((x, p), lo)| p * (x - lo).ln()).sum())
    });
    PriorDensity::new(shape, family.space().clone(), Construction::Custom, family.anchor(), &family.id(), json!({ "powers": powers }))
}

/// Arbitrary log-prior supplied as a closure.
pub fn custom(family: &FamilyModel, name: &str, shape: LogShape) -> Result<PriorDensity> {
    PriorDensity::new(shape, family.space().clone(), Construction::Custom, family.anchor(), &family.id(), json!({ "name": name }))
}

// ----------------------------------------------------------------------------

/// θ = (θ₁, θ₂) split with θ₁ the interest coordinate.
#[derive(Clone)]
pub struct TwoGroupSpec {
    pub family: FamilyModel,
    pub interest_index: usize,
    pub orthogonal: bool,
    pub factorization: Option<Factorization>,
}

/// I₁₁ = h₁₁(θ₁)h₁₂(θ₂) and |I₂₂| = h₂₁(θ₁)h₂₂(θ₂).
#[derive(Clone)]
pub struct Factorization {
    pub h11: BlockFn,
    pub h12: BlockFn,
    pub h21: BlockFn,
    pub h22: BlockFn,
}

impl TwoGroupSpec {
    pub fn new(family: &FamilyModel, interest_index: usize) -> Self {
        TwoGroupSpec { family: family.clone(), interest_index, orthogonal: true, factorization: None }
    }
}

fn split(theta: &[f64], r: usize) -> (Vec<f64>, Vec<f64>) {
    let rest = theta.iter().enumerate().filter(|(j, _)| *j != r).map(|(_, v)| *v).collect();
    (vec![theta[r]], rest)
}

fn assemble(r: usize, t1: &[f64], t2: &[f64]) -> Vec<f64> {
    let mut v = t2.to_vec();
    v.insert(r, t1[0]);
    v
}

/// I₁₁ and |I₂₂| at θ, with θ₁ = θ_r.
/// (log I_rr, log |I₂₂|), in logs so that many nuisance coordinates cannot overflow.
fn log_blocks(family: &FamilyModel, theta: &[f64], r: usize) -> Result<(f64, f64)> {
    if let Some(diag) = family.def().exact_fisher_diagonal(theta) {
        family.check_point(theta)?;
        let det22: f64 = diag.iter().enumerate().filter(|(j, _)| *j != r).map(|(_, v)| v.ln()).sum();
        return Ok((diag[r].ln(), det22));
    }
    let m = family.fisher_information(theta)?;
    let rest: Vec<usize> = (0..m.nrows()).filter(|&j| j != r).collect();
    let i22 = nalgebra::DMatrix::from_fn(rest.len(), rest.len(), |a, b| m[(rest[a], rest[b])]);
    Ok((m[(r, r)].ln(), i22.determinant().ln()))
}

/// Largest |I_rs|/(I_rr I_ss)^{1/2}, s ≠ r, over the grid.
pub fn max_orthogonality_defect(family: &FamilyModel, r: usize, grid: &[Vec<f64>]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in grid {
        if family.def().exact_fisher_diagonal(t).is_some() {
            continue;
        }
        let m = family.fisher_information(t)?;
        for s in 0..m.nrows() {
            if s != r {
                worst = worst.max(m[(r, s)].abs() / (m[(r, r)] * m[(s, s)]).sqrt());
            }
        }
    }
    Ok(worst)
}

/// Pieces of the orthogonal two-group reference prior.
#[derive(Debug, Clone)]
pub struct ReferenceParts {
    /// h₁₁^{1/2}(θ₁) h₂₂^{1/2}(θ₂)
    pub joint: PriorDensity,
    /// h₁₁^{1/2}(θ₁): the factor carrying the interest parameter.
    pub interest_factor: PriorDensity,
    /// h₂₂^{1/2}(θ₂)
    pub nuisance_factor: PriorDensity,
}

/// Two-group reference prior h₁₁^{1/2}(θ₁)h₂₂^{1/2}(θ₂) for orthogonal parameters.
pub fn reference_orthogonal(spec: &TwoGroupSpec) -> Result<PriorDensity> {
    Ok(reference_orthogonal_parts(spec)?.joint)
}

pub fn reference_orthogonal_parts(spec: &TwoGroupSpec) -> Result<ReferenceParts> {
    let family = spec.family.with_interest(spec.interest_index)?;
    let r = spec.interest_index;
    if family.dim() < 2 {
        return Err(Error::Precondition("two-group reference prior needs at least two parameters".into()));
    }
    let grid = family.diagnostic_grid();
    let defect = max_orthogonality_defect(&family, r, &grid)?;
    if defect >= 1e-8 {
        return Err(Error::Precondition(format!(
            "interest coordinate {r} of `{}` is not orthogonal to the rest: |I₁₂|/(I₁₁I₂₂)^{{1/2}} reaches {defect:.3e}",
            family.id()
        )));
    }
    if !spec.orthogonal {
        return Err(Error::Precondition("orthogonality was not asserted for this split".into()));
    }
    let anchor = family.anchor();
    let (a1, a2) = split(&anchor, r);
    let (h11, h22): (BlockFn, BlockFn) = match &spec.factorization {
        Some(fz) => {
            for t in &grid {
                let (t1, t2) = split(t, r);
                let (i11, d22) = log_blocks(&family, t, r)?;
                let e1 = (i11 - ((fz.h11)(&t1) * (fz.h12)(&t2)).ln()).abs();
                let e2 = (d22 - ((fz.h21)(&t1) * (fz.h22)(&t2)).ln()).abs();
                if !(e1 <= 1e-8 && e2 <= 1e-8) {
                    return Err(Error::Factorization(format!("supplied factorization does not reproduce I at {t:?}")));
                }
            }
            let (f11, f22) = (fz.h11.clone(), fz.h22.clone());
            let l11: BlockFn = Arc::new(move |t: &[f64]| f11(t).ln());
            let l22: BlockFn = Arc::new(move |t: &[f64]| f22(t).ln());
            (l11, l22)
        }
        None => detect_factorization(&family, r, &grid, &a1, &a2)?,
    };
    let space = family.space().clone();
    let id = family.id();
    let (h11a, h22a) = (h11.clone(), h22.clone());
    let joint: LogShape = Arc::new(move |t: &[f64]| {
        let (t1, t2) = split(t, r);
        Ok(0.5 * h11a(&t1) + 0.5 * h22a(&t2))
    });
    let interest: LogShape = Arc::new(move |t: &[f64]| Ok(0.5 * h11(&[t[r]])));
    let nuisance: LogShape = Arc::new(move |t: &[f64]| Ok(0.5 * h22(&split(t, r).1)));
    let params = json!({ "interest_index": r });
    Ok(ReferenceParts {
        joint: PriorDensity::new(joint, space.clone(), Construction::ReferenceOrthogonal, anchor.clone(), &id, params.clone())?,
        interest_factor: PriorDensity::new(interest, space.clone(), Construction::ReferenceOrthogonal, anchor.clone(), &id, params.clone())?,
        nuisance_factor: PriorDensity::new(nuisance, space, Construction::ReferenceOrthogonal, anchor, &id, params)?,
    })
}

fn detect_factorization(
    family: &FamilyModel,
    r: usize,
    grid: &[Vec<f64>],
    a1: &[f64],
    a2: &[f64],
) -> Result<(BlockFn, BlockFn)> {
    let mut t1s: Vec<f64> = grid.iter().map(|t| t[r]).collect();
    t1s.sort_by(f64::total_cmp);
    t1s.dedup();
    let t1s: Vec<f64> = t1s.iter().step_by((t1s.len() / 5).max(1)).copied().collect();
    let t2s: Vec<Vec<f64>> = grid.iter().step_by((grid.len() / 7).max(1)).map(|t| split(t, r).1).collect();
    let base1 = log_blocks(family, &assemble(r, a1, a2), r)?;
    for &t1 in &t1s {
        let c1 = log_blocks(family, &assemble(r, &[t1], a2), r)?;
        for t2 in &t2s {
            let c2 = log_blocks(family, &assemble(r, a1, t2), r)?;
            let both = log_blocks(family, &assemble(r, &[t1], t2), r)?;
            let d11 = both.0 - c1.0 - c2.0 + base1.0;
            let d22 = both.1 - c1.1 - c2.1 + base1.1;
            if !(d11.abs() <= 1e-8) {
                return Err(Error::Factorization(format!("I₁₁ does not factor: additivity defect {d11:.3e} at θ₁ = {t1}, θ₂ = {t2:?}")));
            }
            if !(d22.abs() <= 1e-8) {
                return Err(Error::Factorization(format!("|I₂₂| does not factor: additivity defect {d22:.3e} at θ₁ = {t1}, θ₂ = {t2:?}")));
            }
        }
    }
    let (f1, f2) = (family.clone(), family.clone());
    let (s2, s1) = (a2.to_vec(), a1.to_vec());
    let h11: BlockFn = Arc::new(move |t1: &[f64]| log_blocks(&f1, &assemble(r, t1, &s2), r).map(|b| b.0).unwrap_or(f64::NAN));
    let h22: BlockFn = Arc::new(move |t2: &[f64]| log_blocks(&f2, &assemble(r, &s1, t2), r).map(|b| b.1).unwrap_or(f64::NAN));
    Ok((h11, h22))
}

// ----------------------------------------------------------------------------

/// Closed box [lower, upper] per coordinate.
pub type CompactBox = Vec<Interval>;

/// [−i, i] for real coordinates and [1/i, i] (shifted) for half-lines, i = 2, 4, 8, 16.
pub fn default_compacts(space: &ParameterSpace) -> Vec<CompactBox> {
    [2.0f64, 4.0, 8.0, 16.0]
        .iter()
        .map(|&i| {
            space
                .boxes()
                .iter()
                .map(|b| match b.coord() {
                    CoordMap::Real => Interval::new(-i, i),
                    CoordMap::Lower(a) => Interval::new(a + 1.0 / i, a + i),
                    CoordMap::Upper(c) => Interval::new(c - i, c - 1.0 / i),
                    CoordMap::Bounded(..) => {
                        let m = b.coord();
                        Interval::new(m.from_real(-i), m.from_real(i))
                    }
                })
                .collect()
        })
        .collect()
}

const SLICE_TOL: f64 = 1e-9;
const STABILITY_TOL: f64 = 1e-3;

/// Normalized-conditional slice integrals on [lo, hi] of the nuisance coordinate s:
/// returns (log Z, log ψ) with Z = ∫|I₂₂|^{1/2} and log ψ = Z⁻¹∫|I₂₂|^{1/2} log I₁₁.₂^{1/2}.
fn slice_integrals(family: &FamilyModel, t1: f64, r: usize, s: usize, slice: Interval) -> Result<(f64, f64)> {
    let coord = family.space().coord(s);
    let (va, vb) = (coord.to_real(slice.lower), coord.to_real(slice.upper));
    let eval = |n: usize| -> Result<(f64, f64)> {
        let rule = legendre(n);
        let half = 0.5 * (vb - va);
        let mid = 0.5 * (va + vb);
        let mut z = 0.0;
        let mut w = 0.0;
        for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let v = mid + half * x;
            let t2 = coord.from_real(v);
            let mut th = vec![0.0; 2];
            th[r] = t1;
            th[s] = t2;
            let m = family.fisher_information(&th)?;
            let root = m[(s, s)].sqrt() * coord.log_jacobian(v).exp();
            let schur = crate::family::schur_complement(&m, r)?;
            z += wt * half * root;
            w += wt * half * root * 0.5 * schur.ln();
        }
        Ok((z, w / z))
    };
    let mut n = 64;
    let mut prev = eval(n)?;
    loop {
        n *= 2;
        let cur = eval(n)?;
        if (cur.0 - prev.0).abs() <= SLICE_TOL * cur.0.abs() && (cur.1 - prev.1).abs() <= SLICE_TOL * cur.1.abs().max(1.0) {
            return Ok((cur.0.ln(), cur.1));
        }
        if n >= 8192 {
            return Err(Error::Integration(format!(
                "slice integral at θ₁ = {t1} over [{}, {}] did not settle with {n} Gauss–Legendre points",
                slice.lower, slice.upper
            )));
        }
        prev = cur;
    }
}

/// log π_K(θ) = log ψ_K(θ₁) + log φ_K(θ₂|θ₁), with φ_K the normalized |I₂₂|^{1/2} on K's slice.
fn compact_log_prior(family: &FamilyModel, theta: &[f64], r: usize, s: usize, k: &CompactBox) -> Result<f64> {
    let (log_z, log_psi) = slice_integrals(family, theta[r], r, s, k[s])?;
    let m = family.fisher_information(theta)?;
    Ok(log_psi - log_z + 0.5 * m[(s, s)].ln())
}

/// Two-group reference prior as the limit over an increasing sequence of compacts.
pub fn reference_compact(family: &FamilyModel, interest_index: usize, compacts: Option<Vec<CompactBox>>) -> Result<PriorDensity> {
    if family.dim() != 2 {
        return Err(Error::Precondition(format!("reference_compact needs two parameters; `{}` has {}", family.id(), family.dim())));
    }
    if interest_index > 1 {
        return Err(Error::Precondition(format!("interest index {interest_index} out of range")));
    }
    let family = family.with_interest(interest_index)?;
    let (r, s) = (interest_index, 1 - interest_index);
    let compacts = compacts.unwrap_or_else(|| default_compacts(family.space()));
    validate_compacts(family.space(), &compacts)?;
    let anchor = family.anchor();
    // reference points: a 5×5 interior grid of the smallest compact
    let first = &compacts[0];
    let axes: Vec<Vec<f64>> = first
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let c = family.space().coord(j);
            let (va, vb) = (c.to_real(b.lower), c.to_real(b.upper));
            (1..=5).map(|q| c.from_real(va + (vb - va) * q as f64 / 6.0)).collect()
        })
        .collect();
    let probe = product_grid(&axes);
    let mut deltas: Vec<Vec<f64>> = Vec::new();
    for k in &compacts {
        let base = compact_log_prior(&family, &anchor, r, s, k)?;
        let d = probe.iter().map(|t| Ok(compact_log_prior(&family, t, r, s, k)? - base)).collect::<Result<Vec<f64>>>()?;
        deltas.push(d);
    }
    let changes: Vec<f64> = deltas
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let last = changes.last().copied().unwrap_or(0.0);
    if last > STABILITY_TOL {
        return Err(Error::NonConvergence(format!(
            "reference-prior log-differences still move by {last:.3e} between the last two compacts (sequence {changes:?})"
        )));
    }
    let kfinal = compacts.last().expect("at least one compact").clone();
    let f = family.clone();
    let kk = kfinal.clone();
    let shape: LogShape = Arc::new(move |t: &[f64]| compact_log_prior(&f, t, r, s, &kk));
    let boxes: Vec<Vec<[f64; 2]>> = compacts.iter().map(|k| k.iter().map(|b| [b.lower, b.upper]).collect()).collect();
    Ok(PriorDensity::new(shape, family.space().clone(), Construction::ReferenceCompact, anchor, &family.id(), json!({}))?
        .with_params(json!({ "interest_index": r, "compacts": boxes, "stabilization": changes })))
}

fn validate_compacts(space: &ParameterSpace, compacts: &[CompactBox]) -> Result<()> {
    if compacts.len() < 2 {
        return Err(Error::Precondition("need at least two compacts to judge stabilization".into()));
    }
    for (i, k) in compacts.iter().enumerate() {
        if k.len() != space.dim() {
            return Err(Error::Precondition(format!("compact {i} has the wrong dimension")));
        }
        for (b, sb) in k.iter().zip(space.boxes()) {
            if !(b.lower < b.upper) || !sb.contains(b.lower) || !sb.contains(b.upper) {
                return Err(Error::Precondition(format!("compact {i} is not a box strictly inside the space")));
            }
        }
        if i > 0 {
            let prev = &compacts[i - 1];
            let grows = k.iter().zip(prev).all(|(a, p)| a.lower <= p.lower && a.upper >= p.upper)
                && k.iter().zip(prev).any(|(a, p)| a.lower < p.lower || a.upper > p.upper);
            if !grows {
                return Err(Error::Precondition(format!("compact {i} does not strictly contain compact {}", i - 1)));
            }
        }
    }
    Ok(())
}

// ----------------------------------------------------------------------------

/// Push a prior on θ forward to φ: log π_new(φ) = log π(θ(φ)) + power·log|det ∂θ/∂φ|.
pub fn reparameterize(prior: &PriorDensity, t: &Transform, jacobian_power: f64) -> Result<PriorDensity> {
    let target = t.target_space.clone();
    let per = if target.dim() == 1 { 33 } else { 7 };
    let grid = target.grid(per);
    let mut prev: Option<f64> = None;
    let mut sign: Option<bool> = None;
    for phi in &grid {
        let theta = t.to_original(phi);
        if !prior.space().contains(&theta) {
            return Err(Error::Precondition(format!("transform `{}` maps {phi:?} outside the prior's space", t.name)));
        }
        let back = (t.forward)(&theta);
        for (a, b) in back.iter().zip(phi) {
            if (a - b).abs() > 1e-10 * b.abs().max(1.0) {
                return Err(Error::Precondition(format!("forward∘inverse ≠ id at {phi:?} (got {back:?})")));
            }
        }
        if phi.len() == 1 {
            if let Some(p) = prev {
                let up = theta[0] > p;
                if theta[0] == p || sign.is_some_and(|s| s != up) {
                    return Err(Error::Precondition(format!("transform `{}` is not monotone near φ = {}", t.name, phi[0])));
                }
                sign = Some(up);
            }
            prev = Some(theta[0]);
        }
    }
    let base = prior.clone();
    let tt = t.clone();
    let shape: LogShape = Arc::new(move |phi: &[f64]| {
        let theta = tt.to_original(phi);
        Ok(base.log_density_unchecked(&theta)? + jacobian_power * tt.log_abs_jacobian(phi)?)
    });
    let anchor = (t.forward)(prior.anchor());
    let mut params = prior.descriptor().params.clone();
    if let Value::Object(m) = &mut params {
        m.insert("transform".into(), json!(t.name));
        m.insert("jacobian_power".into(), json!(jacobian_power));
    }
    let out = PriorDensity::new(shape, target, prior.construction(), anchor, &prior.descriptor().family_id, params)?;
    Ok(out)
}

// ----------------------------------------------------------------------------

/// Build a prior from its serialized descriptor.
pub fn from_descriptor(family: &FamilyModel, d: &PriorDescriptor) -> Result<PriorDensity> {
    let c: Construction = d.construction.parse()?;
    let scalar_anchor = d.anchor.as_ref().and_then(|a| a.first().copied());
    let interest = d.params.get("interest_index").and_then(Value::as_u64).map(|v| v as usize).unwrap_or(family.interest_index());
    match c {
        Construction::Jeffreys => jeffreys(family),
        Construction::Gml => gml_prior(family, scalar_anchor),
        Construction::MomentMatching => moment_matching_prior(family, scalar_anchor),
        Construction::HartiganMl => hartigan_ml_prior(family),
        Construction::Uniform => uniform(family),
        Construction::HaarLeft => haar_location_scale(family, HaarSide::Left),
        Construction::HaarRight => haar_location_scale(family, HaarSide::Right),
        Construction::ReferenceOrthogonal => reference_orthogonal(&TwoGroupSpec::new(family, interest)),
        Construction::ReferenceCompact => reference_compact(family, interest, None),
        Construction::Custom => {
            let powers: Vec<f64> = d
                .params
                .get("powers")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .ok_or_else(|| Error::Config("custom prior needs params.powers (one exponent per coordinate)".into()))?;
            power_law(family, &powers)
        }
    }
}
