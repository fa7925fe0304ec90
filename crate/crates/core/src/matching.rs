//! Probability-matching residuals and verdicts.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{unit_orders, FamilyModel, ParameterSpace};
use crate::numeric::diff;
use crate::priors::{max_orthogonality_defect, Construction, PriorDensity};

/// A verdict holds when max |residual|/scale stays below this.
pub const THRESHOLD: f64 = 1e-4;

/// Round-off level assumed for closed-form quantities.
pub(crate) const EXACT_NOISE: f64 = 1e-13;
/// Accuracy level of quantities that pass through quadrature.
pub(crate) const QUAD_NOISE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Matches,
    Fails,
    NoSecondOrderExists,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Matches => "matches",
            Verdict::Fails => "fails",
            Verdict::NoSecondOrderExists => "no_second_order_exists",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingOrder {
    First,
    Second,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingReport {
    pub prior: String,
    pub family: String,
    /// which residual: first_order, second_order, existence, nuisance_first_order, orthogonal_second_order
    pub check: String,
    pub order: MatchingOrder,
    pub verdict: Verdict,
    pub max_scaled_residual: f64,
    pub grid: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub scale: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl MatchingReport {
    fn build(prior: &str, family: &FamilyModel, check: &str, order: MatchingOrder, grid: &[Vec<f64>], rs: Vec<(f64, f64)>, failing: Verdict) -> Self {
        let (residuals, scale): (Vec<f64>, Vec<f64>) = rs.into_iter().unzip();
        let max_scaled_residual = residuals
            .iter()
            .zip(&scale)
            .map(|(r, s)| if *s > 0.0 { r.abs() / s } else if *r == 0.0 { 0.0 } else { f64::INFINITY })
            .fold(0.0, f64::max);
        let verdict = if max_scaled_residual < THRESHOLD { Verdict::Matches } else { failing };
        MatchingReport {
            prior: prior.into(),
            family: family.id(),
            check: check.into(),
            order,
            verdict,
            max_scaled_residual,
            grid: grid.to_vec(),
            residuals,
            scale,
            note: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns θ₀…θ_{d−1}, residual, scale, scaled.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.grid.first().map_or(0, Vec::len);
        let mut header: Vec<String> = (0..d).map(|j| format!("theta_{j}")).collect();
        header.extend(["residual", "scale", "scaled"].map(String::from));
        out.write_record(&header)?;
        for ((t, r), s) in self.grid.iter().zip(&self.residuals).zip(&self.scale) {
            let mut row: Vec<String> = t.iter().map(|v| format!("{v:.16e}")).collect();
            row.push(format!("{r:.16e}"));
            row.push(format!("{s:.16e}"));
            row.push(format!("{:.16e}", if *s > 0.0 { r.abs() / s } else { 0.0 }));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// 33 points per coordinate through each coordinate's natural map.
pub fn default_grid(space: &ParameterSpace) -> Vec<Vec<f64>> {
    space.grid(33)
}

/// |dθ_j/dv| at θ for the coordinate's unconstrained variable v: the length over
/// which θ_j changes appreciably (1 on ℝ, θ on (0,∞), p(1−p) on (0,1)).
pub fn length_scale(space: &ParameterSpace, theta: &[f64], j: usize) -> f64 {
    let c = space.coord(j);
    c.log_jacobian(c.to_real(theta[j])).exp()
}

/// Derivative of f along coordinate j with a step sized to the noise level of f.
fn coord_deriv<F>(f: F, space: &ParameterSpace, theta: &[f64], j: usize, order: usize, noise: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let along = |t: f64| {
        let mut p = theta.to_vec();
        p[j] = t;
        f(&p)
    };
    diff::scaled_derivative(along, theta[j], order, length_scale(space, theta, j), noise)
}

pub(crate) fn prior_noise(prior: &PriorDensity, family: &FamilyModel) -> f64 {
    match prior.construction() {
        Construction::Uniform | Construction::HaarLeft | Construction::HaarRight | Construction::Custom => EXACT_NOISE,
        Construction::Jeffreys | Construction::HartiganMl | Construction::ReferenceOrthogonal if family.has_exact_fisher() => EXACT_NOISE,
        _ => QUAD_NOISE,
    }
}

fn fisher_noise(family: &FamilyModel) -> f64 {
    if family.has_exact_fisher() { EXACT_NOISE } else { QUAD_NOISE }
}

fn g3_noise(family: &FamilyModel) -> f64 {
    if family.has_exact_g3() { EXACT_NOISE } else { QUAD_NOISE }
}

fn check_grid(family: &FamilyModel, grid: &[Vec<f64>]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config("empty evaluation grid".into()));
    }
    for t in grid {
        family.check_point(t)?;
    }
    Ok(())
}

fn scalar_only(family: &FamilyModel, what: &str) -> Result<()> {
    if family.dim() != 1 {
        return Err(Error::Precondition(format!("{what} needs a scalar parameter; `{}` has {}", family.id(), family.dim())));
    }
    Ok(())
}

fn prior_tag(prior: &PriorDensity) -> String {
    prior.construction().as_str().into()
}

fn par_points<F>(grid: &[Vec<f64>], f: F) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&[f64]) -> Result<(f64, f64)> + Sync,
{
    grid.par_iter().map(|t| f(t)).collect()
}

fn info(family: &FamilyModel, t: &[f64]) -> Result<f64> {
    Ok(family.fisher_information(t)?[(0, 0)])
}

/// Residual of d/dθ[π I^{−1/2}] = 0, computed as π I^{−1/2}·(log π − ½ log I)′.
pub fn first_order_residual(prior: &PriorDensity, family: &FamilyModel, grid: &[Vec<f64>]) -> Result<MatchingReport> {
    scalar_only(family, "first_order_residual")?;
    check_grid(family, grid)?;
    let space = family.space();
    let (np, ni) = (prior_noise(prior, family), fisher_noise(family));
    let rs = par_points(grid, |t| {
        let lp = prior.log_density(t)?;
        let li = info(family, t)?.ln();
        let base = (lp - 0.5 * li).exp();
        let a = coord_deriv(|p| prior.log_density(p), space, t, 0, 1, np)?;
        let b = -0.5 * coord_deriv(|p| Ok(info(family, p)?.ln()), space, t, 0, 1, ni)?;
        let len = length_scale(space, t, 0);
        let scale = base * a.abs().max(b.abs()).max(1.0 / len);
        Ok((base * (a + b), scale))
    })?;
    Ok(MatchingReport::build(&prior_tag(prior), family, "first_order", MatchingOrder::First, grid, rs, Verdict::Fails))
}

/// Residual of (1/3) d/dθ[π I⁻² g₃] + d²/dθ²[π I⁻¹] = 0.
pub fn second_order_residual(prior: &PriorDensity, family: &FamilyModel, grid: &[Vec<f64>]) -> Result<MatchingReport> {
    scalar_only(family, "second_order_residual")?;
    check_grid(family, grid)?;
    let space = family.space();
    let np = prior_noise(prior, family);
    let nab = np.max(fisher_noise(family));
    let ng = g3_noise(family);
    let a_fn = |p: &[f64]| Ok(prior.log_density(p)? - 2.0 * info(family, p)?.ln());
    let b_fn = |p: &[f64]| Ok(prior.log_density(p)? - info(family, p)?.ln());
    let rs = par_points(grid, |t| {
        let a = a_fn(t)?;
        let b = b_fn(t)?;
        let g3 = family.g3(t)?;
        let da = coord_deriv(a_fn, space, t, 0, 1, nab)?;
        let dg3 = coord_deriv(|p| family.g3(p), space, t, 0, 1, ng)?;
        let db = coord_deriv(b_fn, space, t, 0, 1, nab)?;
        let d2b = coord_deriv(b_fn, space, t, 0, 2, nab)?;
        let (ea, eb) = (a.exp(), b.exp());
        let terms = [ea * dg3 / 3.0, ea * g3 * da / 3.0, eb * d2b, eb * db * db];
        let len = length_scale(space, t, 0);
        let scale = terms.iter().map(|v| v.abs()).fold(eb / (len * len), f64::max);
        Ok((terms.iter().sum(), scale))
    })?;
    Ok(MatchingReport::build(&prior_tag(prior), family, "second_order", MatchingOrder::Second, grid, rs, Verdict::Fails))
}

/// Constancy of (1/6) E[(∂ℓ)³]/I^{3/2}: a second-order matching prior exists iff it is constant.
pub fn second_order_existence(family: &FamilyModel, grid: &[Vec<f64>]) -> Result<MatchingReport> {
    scalar_only(family, "second_order_existence")?;
    check_grid(family, grid)?;
    let q: Vec<f64> = grid
        .par_iter()
        .map(|t| Ok(family.score_cube_expectation(t)? / (6.0 * info(family, t)?.powf(1.5))))
        .collect::<Result<_>>()?;
    let mean = q.iter().sum::<f64>() / q.len() as f64;
    let scale = mean.abs().max(1.0);
    let rs = q.iter().map(|v| (v - mean, scale)).collect();
    let mut r = MatchingReport::build("jeffreys", family, "existence", MatchingOrder::Second, grid, rs, Verdict::NoSecondOrderExists);
    r.note = Some(format!("functional mean {mean:.12e}"));
    Ok(r)
}

/// I^{j r}/(I^{rr})^{1/2} for every j.
fn matching_weights(family: &FamilyModel, t: &[f64], r: usize) -> Result<Vec<f64>> {
    let inv = invert(&family.fisher_information(t)?, t)?;
    let d = inv[(r, r)].sqrt();
    Ok((0..inv.nrows()).map(|j| inv[(j, r)] / d).collect())
}

fn invert(m: &DMatrix<f64>, t: &[f64]) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Conditioning(format!("Fisher information at {t:?} is not invertible")))
}

/// Residual of Σ_j ∂_j{π I^{j1}(I^{11})^{−1/2}} = 0 with θ₁ the family's interest coordinate.
pub fn nuisance_first_order_residual(prior: &PriorDensity, family: &FamilyModel, grid: &[Vec<f64>]) -> Result<MatchingReport> {
    let d = family.dim();
    if d < 2 {
        return Err(Error::Precondition("nuisance_first_order_residual needs at least two parameters".into()));
    }
    check_grid(family, grid)?;
    let r = family.interest_index();
    let space = family.space();
    let (np, ni) = (prior_noise(prior, family), fisher_noise(family));
    let rs = par_points(grid, |t| {
        let pi = prior.log_density(t)?.exp();
        let w = matching_weights(family, t, r)?;
        let mut total = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..d {
            let dw = coord_deriv(|p| Ok(matching_weights(family, p, r)?[j]), space, t, j, 1, ni)?;
            let dlp = coord_deriv(|p| prior.log_density(p), space, t, j, 1, np)?;
            let (t1, t2) = (pi * dw, pi * w[j] * dlp);
            total += t1 + t2;
            scale = scale.max(t1.abs()).max(t2.abs()).max(pi * w[j].abs() / length_scale(space, t, j));
        }
        Ok((total, scale))
    })?;
    Ok(MatchingReport::build(&prior_tag(prior), family, "nuisance_first_order", MatchingOrder::First, grid, rs, Verdict::Fails))
}

/// Residual of the orthogonal-case second-order equation for a prior I₁₁^{1/2}·h:
/// Σ_{s,u} ∂_u{I₁₁^{−1/2} I^{su} E(∂³ℓ/∂θ₁²∂θ_s) h} + (h/6) ∂₁{I₁₁^{−3/2} E((∂ℓ/∂θ₁)³)}.
pub fn orthogonal_second_order_residual<H>(h: H, family: &FamilyModel, grid: &[Vec<f64>]) -> Result<MatchingReport>
where
    H: Fn(&[f64]) -> f64 + Sync,
{
    orthogonal_second_order_impl("h", &h, family, grid)
}

/// As [`orthogonal_second_order_residual`], with h = π/I₁₁^{1/2} read off a prior.
pub fn orthogonal_second_order_for_prior(prior: &PriorDensity, family: &FamilyModel, grid: &[Vec<f64>]) -> Result<MatchingReport> {
    let r = family.interest_index();
    let h = |t: &[f64]| {
        let lp = prior.log_density(t).unwrap_or(f64::NAN);
        let i11 = family.fisher_information(t).map(|m| m[(r, r)]).unwrap_or(f64::NAN);
        (lp - 0.5 * i11.ln()).exp()
    };
    let mut rep = orthogonal_second_order_impl(&prior_tag(prior), &h, family, grid)?;
    let first = nuisance_first_order_residual(prior, family, grid)?;
    if first.verdict != Verdict::Matches {
        rep.verdict = Verdict::Fails;
        rep.note = Some(format!("prior is not first-order matching (scaled residual {:.3e})", first.max_scaled_residual));
    }
    Ok(rep)
}

fn orthogonal_second_order_impl(tag: &str, h: &(dyn Fn(&[f64]) -> f64 + Sync), family: &FamilyModel, grid: &[Vec<f64>]) -> Result<MatchingReport> {
    let d = family.dim();
    if d < 2 {
        return Err(Error::Precondition("orthogonal_second_order_residual needs at least two parameters".into()));
    }
    check_grid(family, grid)?;
    let r = family.interest_index();
    let defect = max_orthogonality_defect(family, r, grid)?;
    if defect >= 1e-8 {
        return Err(Error::Precondition(format!("interest coordinate {r} is not orthogonal to the nuisance block (defect {defect:.3e})")));
    }
    let nuisance: Vec<usize> = (0..d).filter(|&j| j != r).collect();
    let space = family.space();
    let noise = QUAD_NOISE;
    let mixed: Vec<Vec<usize>> = nuisance.iter().map(|&s| unit_orders(d, &[r, r, s])).collect();
    // F_u(θ) = Σ_s I₁₁^{−1/2} I^{su} E(ℓ_{11s}) h
    let flux = |p: &[f64], u: usize| -> Result<f64> {
        let m = family.fisher_information(p)?;
        let inv = invert(&m, p)?;
        let e = family.expected_partials(p, &mixed)?;
        let sum: f64 = nuisance.iter().zip(&e).map(|(&s, es)| inv[(s, u)] * es).sum();
        Ok(sum * h(p) / m[(r, r)].sqrt())
    };
    let skew = |p: &[f64]| -> Result<f64> {
        let i11 = family.fisher_information(p)?[(r, r)];
        Ok(family.score_cube_expectation(p)? / i11.powf(1.5))
    };
    let rs = par_points(grid, |t| {
        let hv = h(t);
        if !hv.is_finite() {
            return Err(Error::Domain(format!("h is not finite at {t:?}")));
        }
        let mut total = 0.0;
        let mut scale: f64 = 0.0;
        for &u in &nuisance {
            let du = coord_deriv(|p| flux(p, u), space, t, u, 1, noise)?;
            total += du;
            scale = scale.max(du.abs()).max(flux(t, u)?.abs() / length_scale(space, t, u));
        }
        let second = hv / 6.0 * coord_deriv(skew, space, t, r, 1, noise)?;
        total += second;
        scale = scale.max(second.abs()).max((hv * skew(t)?).abs() / length_scale(space, t, r));
        Ok((total, scale))
    })?;
    Ok(MatchingReport::build(tag, family, "orthogonal_second_order", MatchingOrder::Second, grid, rs, Verdict::Fails))
}
