//! Exact one-dimensional posteriors on adaptive grids, and the asymptotic
//! expansion of the standardized posterior around the MLE.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{CoordMap, FamilyModel};
use crate::matching::prior_noise;
use crate::numeric::diff;
use crate::numeric::optimize::maximize;
use crate::numeric::quadrature::legendre;
use crate::numeric::special::std_normal_pdf;
use crate::priors::PriorDensity;

/// i.i.d. observations from one family.
#[derive(Debug, Clone, Serialize)]
pub struct DataSample {
    pub family_id: String,
    pub observations: Vec<Vec<f64>>,
}

impl DataSample {
    pub fn new(family: &FamilyModel, observations: Vec<Vec<f64>>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Domain("a data sample needs at least one observation".into()));
        }
        if let Some(x) = observations.iter().find(|x| !family.def().in_support(x)) {
            return Err(Error::Domain(format!("observation {x:?} is outside the support of {}", family.id())));
        }
        Ok(DataSample { family_id: family.id(), observations })
    }

    /// Scalar observations, one per entry.
    pub fn scalar(family: &FamilyModel, xs: &[f64]) -> Result<Self> {
        Self::new(family, xs.iter().map(|&x| vec![x]).collect())
    }

    pub fn simulate(family: &FamilyModel, theta: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Self> {
        family.check_point(theta)?;
        Self::new(family, (0..n).map(|_| family.sample(theta, rng)).collect())
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    fn check_family(&self, family: &FamilyModel) -> Result<()> {
        if self.family_id != family.id() {
            return Err(Error::Precondition(format!("data from `{}` used with family `{}`", self.family_id, family.id())));
        }
        Ok(())
    }
}

fn require_scalar(family: &FamilyModel) -> Result<()> {
    if family.dim() != 1 {
        return Err(Error::Precondition(format!("{} has {} parameters; a scalar family is required", family.id(), family.dim())));
    }
    Ok(())
}

/// Σᵢ ∂^orders log f(xᵢ|θ).
fn summed_partial(family: &FamilyModel, data: &DataSample, theta: &[f64], orders: &[usize]) -> Result<f64> {
    let mut s = 0.0;
    for x in &data.observations {
        s += family.partial(x, theta, orders)?.value;
    }
    Ok(s)
}

/// Starting point strictly inside the space: the family's guess, else its anchor.
fn interior_start(family: &FamilyModel, guess: Vec<f64>) -> Vec<f64> {
    if family.check_point(&guess).is_ok() { guess } else { family.anchor() }
}

/// Maximum likelihood estimate of a scalar parameter.
///
/// The search runs in the unconstrained coordinate and is then polished by
/// Newton steps on the summed analytic (or finite-difference) score.
pub fn mle(family: &FamilyModel, data: &DataSample) -> Result<f64> {
    require_scalar(family)?;
    data.check_family(family)?;
    let coord = family.space().coord(0);
    let kernel = family.loglik_kernel(&data.observations);
    let start = interior_start(family, family.initial_guess(&data.observations))[0];
    let f = |v: f64| {
        let t = coord.from_real(v);
        let l = kernel(&[t]);
        if l.is_finite() { l } else { f64::NEG_INFINITY }
    };
    let m = maximize(f, coord.to_real(start), 0.5, 200)?;
    let mut theta = coord.from_real(m.x);
    if family.check_point(&[theta]).is_err() {
        return Err(Error::BoundaryMle(format!("likelihood maximized at the edge of the space (θ ≈ {theta:e})")));
    }
    let n = data.n() as f64;
    let length = crate::matching::length_scale(family.space(), &[theta], 0);
    let mut was_converged = false;
    for _ in 0..200 {
        let d1 = summed_partial(family, data, &[theta], &[1])?;
        let d2 = summed_partial(family, data, &[theta], &[2])?;
        if !(d2 < 0.0) {
            return Err(Error::Optimization(format!("log-likelihood not concave at θ = {theta}")));
        }
        let mut step = -d1 / d2;
        let mut next = theta + step;
        let mut halvings = 0;
        while !family.space().contains(&[next]) && halvings < 60 {
            step *= 0.5;
            next = theta + step;
            halvings += 1;
        }
        let converged = d1.abs() < 1e-8 * n * (-d2 / n).sqrt();
        theta = next;
        if family.check_point(&[theta]).is_err() {
            return Err(Error::BoundaryMle(format!("Newton iterates reached the edge of the space (θ ≈ {theta:e})")));
        }
        // one extra step once the score is small buys full precision
        if converged && (was_converged || step.abs() <= 1e-12 * length) {
            return Ok(theta);
        }
        was_converged = converged;
    }
    Err(Error::Optimization("Newton polish did not converge in 200 iterations".into()))
}

/// a_k = n⁻¹ ℓ_n^{(k)}(θ̂) and the prior's log-derivatives at θ̂.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpansionCoefficients {
    pub n: usize,
    pub mle: f64,
    /// a₁ … a₄.
    pub a: [f64; 4],
    pub i_hat: f64,
    /// π′/π at θ̂.
    pub prior_d1: f64,
    /// π″/π at θ̂.
    pub prior_d2: f64,
}

pub fn expansion_coefficients(family: &FamilyModel, data: &DataSample, prior: &PriorDensity) -> Result<ExpansionCoefficients> {
    let theta = mle(family, data)?;
    coefficients_at(family, data, prior, theta)
}

/// Coefficients at a supplied interior stationary point.
pub fn coefficients_at(family: &FamilyModel, data: &DataSample, prior: &PriorDensity, theta: f64) -> Result<ExpansionCoefficients> {
    require_scalar(family)?;
    data.check_family(family)?;
    family.check_point(&[theta])?;
    let n = data.n() as f64;
    let mut a = [0.0; 4];
    for (k, slot) in a.iter_mut().enumerate() {
        *slot = summed_partial(family, data, &[theta], &[k + 1])? / n;
    }
    let i_hat = -a[1];
    if !(i_hat > 0.0) {
        return Err(Error::Conditioning(format!("observed information {i_hat} is not positive at θ̂ = {theta}")));
    }
    if a[0].abs() >= 1e-6 * a[1].abs().max(1.0) {
        return Err(Error::Precondition(format!("score a₁ = {:e} does not vanish at θ = {theta}", a[0])));
    }
    let lp = |t: f64| prior.log_density(&[t]);
    let length = crate::matching::length_scale(family.space(), &[theta], 0);
    let noise = prior_noise(prior, family);
    let l1 = diff::scaled_derivative(lp, theta, 1, length, noise)?;
    let l2 = diff::scaled_derivative(lp, theta, 2, length, noise)?;
    Ok(ExpansionCoefficients { n: data.n(), mle: theta, a, i_hat, prior_d1: l1, prior_d2: l2 + l1 * l1 })
}

/// γ₁(t) and γ₂(t) of the standardized posterior expansion.
pub fn expansion_terms(c: &ExpansionCoefficients, t: f64) -> (f64, f64) {
    let [_, _, a3, a4] = c.a;
    let i = c.i_hat;
    let (p1, p2) = (c.prior_d1, c.prior_d2);
    let g1 = a3 * t.powi(3) / (6.0 * i.powf(1.5)) + t * p1 / i.sqrt();
    let g2 = a4 * t.powi(4) / (24.0 * i * i) + a3 * a3 * t.powi(6) / (72.0 * i.powi(3)) + t * t * p2 / (2.0 * i)
        + a3 * t.powi(4) * p1 / (6.0 * i * i)
        - a4 / (8.0 * i * i)
        - 15.0 * a3 * a3 / (72.0 * i.powi(3))
        - p2 / (2.0 * i)
        - a3 * p1 / (2.0 * i * i);
    (g1, g2)
}

/// Density of T = √n(θ − θ̂)Î^{1/2} truncated after the order-`order` term.
/// Tails may go negative; nothing is clamped.
pub fn expansion_density(c: &ExpansionCoefficients, t: f64, order: usize) -> Result<f64> {
    if order > 2 {
        return Err(Error::Domain(format!("expansion order {order} not available (0, 1 or 2)")));
    }
    let (g1, g2) = expansion_terms(c, t);
    let n = c.n as f64;
    let mut bracket = 1.0;
    if order >= 1 {
        bracket += g1 / n.sqrt();
    }
    if order >= 2 {
        bracket += g2 / n;
    }
    Ok(std_normal_pdf(t) * bracket)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeanExpansion {
    pub mean: f64,
    /// n⁻¹(a₃/(2Î²) + π′/(Îπ)).
    pub correction: f64,
    /// (nÎ)⁻¹.
    pub variance: f64,
}

pub fn posterior_mean_expansion(c: &ExpansionCoefficients) -> MeanExpansion {
    let n = c.n as f64;
    let i = c.i_hat;
    let correction = (c.a[2] / (2.0 * i * i) + c.prior_d1 / i) / n;
    MeanExpansion { mean: c.mle + correction, correction, variance: 1.0 / (n * i) }
}

// ----------------------------------------------------------------------------
// Multiparameter expansion (order n^{-1/2}), density only.

/// Ingredients of the first-order multiparameter expansion for W = √n(θ − θ̂).
#[derive(Debug, Clone, Serialize)]
pub struct MultiExpansion {
    pub n: usize,
    pub mle: Vec<f64>,
    /// Observed per-unit information.
    pub info: Vec<Vec<f64>>,
    /// a_{jrs}, flattened row-major over (j, r, s).
    pub a3: Vec<f64>,
    pub grad_log_prior: Vec<f64>,
}

impl MultiExpansion {
    /// φ_p(w; 0, Î⁻¹)·[1 + n^{-1/2}{Σ w_j ∂_j log π + (1/6)Σ w_j w_r w_s a_{jrs}}].
    pub fn density(&self, w: &[f64]) -> Result<f64> {
        let p = self.mle.len();
        if w.len() != p {
            return Err(Error::Domain(format!("w has length {}, expected {p}", w.len())));
        }
        let info = DMatrix::from_fn(p, p, |i, j| self.info[i][j]);
        let wv = DVector::from_column_slice(w);
        let quad = (wv.transpose() * &info * &wv)[(0, 0)];
        let det = info.determinant();
        let base = (-0.5 * quad).exp() * det.sqrt() / (2.0 * std::f64::consts::PI).powf(p as f64 / 2.0);
        let mut lin: f64 = w.iter().zip(&self.grad_log_prior).map(|(a, b)| a * b).sum();
        for j in 0..p {
            for r in 0..p {
                for s in 0..p {
                    lin += w[j] * w[r] * w[s] * self.a3[(j * p + r) * p + s] / 6.0;
                }
            }
        }
        Ok(base * (1.0 + lin / (self.n as f64).sqrt()))
    }
}

fn orders_of(p: usize, coords: &[usize]) -> Vec<usize> {
    crate::family::unit_orders(p, coords)
}

/// Joint MLE by damped Newton on summed partials.
pub fn mle_multi(family: &FamilyModel, data: &DataSample) -> Result<Vec<f64>> {
    data.check_family(family)?;
    let p = family.dim();
    let kernel = family.loglik_kernel(&data.observations);
    let mut theta = interior_start(family, family.initial_guess(&data.observations));
    let n = data.n() as f64;
    for _ in 0..200 {
        let mut g = DVector::zeros(p);
        let mut h = DMatrix::zeros(p, p);
        for j in 0..p {
            g[j] = summed_partial(family, data, &theta, &orders_of(p, &[j]))?;
            for r in 0..=j {
                let v = summed_partial(family, data, &theta, &orders_of(p, &[j, r]))?;
                h[(j, r)] = v;
                h[(r, j)] = v;
            }
        }
        let neg = -&h;
        let chol = neg
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Optimization(format!("log-likelihood not concave at θ = {theta:?}")))?;
        let step = chol.solve(&g);
        let dec = g.dot(&step);
        if dec.sqrt() < 1e-8 * n.sqrt() {
            return Ok(theta);
        }
        let l0 = kernel(&theta);
        let mut scale = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            if family.space().contains(&cand) && kernel(&cand) >= l0 - 1e-12 * l0.abs() {
                theta = cand;
                break;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                return Err(Error::Optimization("line search failed".into()));
            }
        }
        if family.check_point(&theta).is_err() {
            return Err(Error::BoundaryMle(format!("Newton iterates reached the edge of the space at {theta:?}")));
        }
    }
    Err(Error::Optimization("joint MLE did not converge in 200 iterations".into()))
}

pub fn multi_expansion(family: &FamilyModel, data: &DataSample, prior: &PriorDensity) -> Result<MultiExpansion> {
    let theta = mle_multi(family, data)?;
    let p = family.dim();
    let n = data.n() as f64;
    let mut info = vec![vec![0.0; p]; p];
    for j in 0..p {
        for r in 0..p {
            info[j][r] = -summed_partial(family, data, &theta, &orders_of(p, &[j, r]))? / n;
        }
    }
    let mut a3 = vec![0.0; p * p * p];
    for j in 0..p {
        for r in 0..p {
            for s in 0..p {
                a3[(j * p + r) * p + s] = summed_partial(family, data, &theta, &orders_of(p, &[j, r, s]))? / n;
            }
        }
    }
    let noise = prior_noise(prior, family);
    let mut grad = vec![0.0; p];
    for (j, slot) in grad.iter_mut().enumerate() {
        let along = |t: f64| {
            let mut q = theta.clone();
            q[j] = t;
            prior.log_density(&q)
        };
        let length = crate::matching::length_scale(family.space(), &theta, j);
        *slot = diff::scaled_derivative(along, theta[j], 1, length, noise)?;
    }
    Ok(MultiExpansion { n: data.n(), mle: theta, info, a3, grad_log_prior: grad })
}

// ----------------------------------------------------------------------------
// Exact posterior on a grid.

/// Unnormalized log density of a scalar parameter; −∞ outside its support.
pub type LogDensity1d = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The coordinate in which the grid is uniform. On ℝ a sinh stretch around the
/// mode keeps resolution in the bulk while reaching algebraic tails.
#[derive(Debug, Clone, Copy)]
enum Chart {
    Sinh { center: f64, scale: f64 },
    Map(CoordMap),
}

impl Chart {
    fn theta(&self, v: f64) -> f64 {
        match *self {
            Chart::Sinh { center, scale } => center + scale * v.sinh(),
            Chart::Map(c) => c.from_real(v),
        }
    }
    fn v(&self, theta: f64) -> f64 {
        match *self {
            Chart::Sinh { center, scale } => ((theta - center) / scale).asinh(),
            Chart::Map(c) => c.to_real(theta),
        }
    }
    fn log_jacobian(&self, v: f64) -> f64 {
        match *self {
            Chart::Sinh { scale, .. } => scale.ln() + v.cosh().ln(),
            Chart::Map(c) => c.log_jacobian(v),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridOptions {
    pub cells: usize,
    pub max_cells: usize,
    /// Initial half-width of the grid in posterior standard deviations.
    pub span_sd: f64,
    /// Required drop of the log density at the grid ends.
    pub drop_nats: f64,
    pub max_extensions: usize,
    /// Refinement stops once the 0.95-quantile moves less than this many sd.
    pub quantile_tol: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { cells: 256, max_cells: 32768, span_sd: 12.0, drop_nats: 30.0, max_extensions: 5, quantile_tol: 1e-6 }
    }
}

const NODES: usize = 5;

/// A normalized scalar posterior tabulated on a grid of cell edges.
#[derive(Clone)]
pub struct PosteriorGrid {
    /// θ at the cell edges, increasing.
    pub grid: Vec<f64>,
    /// Unnormalized log posterior density (in θ) at the edges.
    pub log_post: Vec<f64>,
    pub log_normalizer: f64,
    /// P(θ ≤ grid[k]).
    pub cdf: Vec<f64>,
    /// Curvature-based posterior standard deviation at the mode.
    pub scale: f64,
    chart: Chart,
    v: Vec<f64>,
    /// Peak of g(v) = log f(θ(v)) + log|θ′(v)|.
    peak: f64,
    /// ∫ exp(g − peak) dv.
    mass: f64,
    logf: LogDensity1d,
    node_theta: Vec<f64>,
    node_weight: Vec<f64>,
}

impl std::fmt::Debug for PosteriorGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PosteriorGrid")
            .field("cells", &(self.grid.len() - 1))
            .field("range", &(self.grid[0], self.grid[self.grid.len() - 1]))
            .field("log_normalizer", &self.log_normalizer)
            .field("scale", &self.scale)
            .finish()
    }
}

fn finite_or_neg_inf(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY { f64::NEG_INFINITY } else { x }
}

/// Curvature standard deviation of `g` at its maximum `x`, refined twice
/// with a step matched to the previous estimate.
fn curvature_sd<F: Fn(f64) -> f64>(g: &F, x: f64, initial: f64) -> f64 {
    let mut s = initial;
    for _ in 0..3 {
        let h = 0.05 * s;
        let d2 = (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
        if d2 < 0.0 && d2.is_finite() {
            s = (-d2).sqrt().recip();
        } else {
            break;
        }
    }
    s
}

impl PosteriorGrid {
    /// Tabulate exp(logf) on `coord`, starting the mode search from `start`.
    pub fn from_log_density(coord: CoordMap, logf: LogDensity1d, start: f64, opts: GridOptions) -> Result<Self> {
        let f = {
            let logf = logf.clone();
            move |t: f64| finite_or_neg_inf(logf(t))
        };
        if !f(start).is_finite() {
            return Err(Error::Domain(format!("log posterior not finite at the starting point {start}")));
        }
        let chart = match coord {
            CoordMap::Real => {
                let m = maximize(&f, start, 0.1 * start.abs().max(1.0), 400).map_err(improper)?;
                let s = curvature_sd(&f, m.x, 1e-3 * m.x.abs().max(1.0));
                Chart::Sinh { center: m.x, scale: s }
            }
            c => Chart::Map(c),
        };
        let g = move |v: f64| {
            let t = chart.theta(v);
            finite_or_neg_inf(f(t) + chart.log_jacobian(v))
        };
        let v0 = match chart {
            Chart::Sinh { .. } => 0.0,
            Chart::Map(c) => c.to_real(start),
        };
        let m = maximize(&g, v0, 0.25, 400).map_err(improper)?;
        let (vstar, peak) = (m.x, m.value);
        let sv = curvature_sd(&g, vstar, 1e-2).min(50.0);
        let scale = sv * chart.log_jacobian(vstar).exp();

        let half = match chart {
            Chart::Sinh { .. } => opts.span_sd.asinh(),
            Chart::Map(_) => opts.span_sd * sv,
        };
        let lo = extend_end(&g, vstar, -half, peak, sv, opts)?;
        let hi = extend_end(&g, vstar, half, peak, sv, opts)?;

        let mut cells = opts.cells.max(16);
        let mut current = Self::build(chart, &g, &logf, lo, hi, cells, peak, scale)?;
        while cells < opts.max_cells {
            cells *= 2;
            let finer = Self::build(chart, &g, &logf, lo, hi, cells, peak, scale)?;
            let mut moved: f64 = 0.0;
            for q in [0.025, 0.975] {
                moved = moved.max((finer.quantile(q)? - current.quantile(q)?).abs());
            }
            current = finer;
            if moved < opts.quantile_tol * scale {
                break;
            }
        }
        current.normalization_check()?;
        Ok(current)
    }

    #[allow(clippy::too_many_arguments)]
    fn build<G: Fn(f64) -> f64>(
        chart: Chart,
        g: &G,
        logf: &LogDensity1d,
        lo: f64,
        hi: f64,
        cells: usize,
        peak: f64,
        scale: f64,
    ) -> Result<Self> {
        let rule = legendre(NODES);
        let width = (hi - lo) / cells as f64;
        let v: Vec<f64> = (0..=cells).map(|k| lo + width * k as f64).collect();
        let mut node_theta = Vec::with_capacity(cells * NODES);
        let mut node_weight = Vec::with_capacity(cells * NODES);
        let mut cum = Vec::with_capacity(cells + 1);
        cum.push(0.0);
        let mut total = 0.0;
        for k in 0..cells {
            let mid = v[k] + 0.5 * width;
            let mut cell = 0.0;
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let vv = mid + 0.5 * width * x;
                let m = w * 0.5 * width * (g(vv) - peak).exp();
                node_theta.push(chart.theta(vv));
                node_weight.push(m);
                cell += m;
            }
            total += cell;
            cum.push(total);
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Integration("posterior mass is zero or not finite on the grid".into()));
        }
        node_weight.iter_mut().for_each(|w| *w /= total);
        let cdf: Vec<f64> = cum.iter().map(|c| c / total).collect();
        let grid: Vec<f64> = v.iter().map(|&x| chart.theta(x)).collect();
        let log_post: Vec<f64> = grid.iter().map(|&t| finite_or_neg_inf(logf(t))).collect();
        Ok(PosteriorGrid {
            grid,
            log_post,
            log_normalizer: peak + total.ln(),
            cdf,
            scale,
            chart,
            v,
            peak,
            mass: total,
            logf: logf.clone(),
            node_theta,
            node_weight,
        })
    }

    fn g(&self, v: f64) -> f64 {
        finite_or_neg_inf((self.logf)(self.chart.theta(v)) + self.chart.log_jacobian(v))
    }

    /// Trapezoid rule in the grid coordinate; must reproduce unit mass.
    pub fn trapezoid_mass(&self) -> f64 {
        let w = self.v[1] - self.v[0];
        let vals: Vec<f64> = self.v.iter().map(|&v| (self.g(v) - self.peak).exp()).collect();
        let inner: f64 = vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[vals.len() - 1]);
        inner * w / self.mass
    }

    fn normalization_check(&self) -> Result<()> {
        let t = self.trapezoid_mass();
        if (t - 1.0).abs() > 1e-6 {
            return Err(Error::Integration(format!("trapezoid mass {t} differs from 1 by more than 1e-6")));
        }
        Ok(())
    }

    /// Normalized posterior density at θ.
    pub fn density(&self, theta: f64) -> f64 {
        (finite_or_neg_inf((self.logf)(theta)) - self.log_normalizer).exp()
    }

    fn cell_of(&self, v: f64) -> Option<usize> {
        let n = self.v.len() - 1;
        if !(v > self.v[0]) {
            return None;
        }
        if v >= self.v[n] {
            return Some(n);
        }
        Some(((v - self.v[0]) / (self.v[1] - self.v[0])).floor().min((n - 1) as f64) as usize)
    }

    /// Mass of [v_k, v] relative to the total, for v inside cell k.
    fn partial_mass(&self, k: usize, v: f64) -> f64 {
        legendre(NODES).integrate(self.v[k], v, |u| (self.g(u) - self.peak).exp()) / self.mass
    }

    pub fn cdf_at(&self, theta: f64) -> f64 {
        let v = self.chart.v(theta);
        match self.cell_of(v) {
            None => 0.0,
            Some(k) if k + 1 >= self.v.len() => 1.0,
            Some(k) => (self.cdf[k] + self.partial_mass(k, v)).clamp(0.0, 1.0),
        }
    }

    /// θ with P(θ ≤ q) = α.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("quantile level {alpha} outside (0, 1)")));
        }
        let k = self.cdf.partition_point(|&c| c <= alpha).clamp(1, self.cdf.len() - 1) - 1;
        let (mut a, mut b) = (self.v[k], self.v[k + 1]);
        let target = alpha - self.cdf[k];
        let mut x = a + (b - a) * (target / (self.cdf[k + 1] - self.cdf[k]).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
        for _ in 0..100 {
            let r = self.partial_mass(k, x) - target;
            if r > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let dens = (self.g(x) - self.peak).exp() / self.mass;
            let newton = x - r / dens;
            let next = if dens > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) || b - a <= 1e-15 * (1.0 + x.abs()) {
                x = next;
                break;
            }
            x = next;
        }
        Ok(self.chart.theta(x))
    }

    pub fn mean(&self) -> f64 {
        self.node_theta.iter().zip(&self.node_weight).map(|(t, w)| t * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.node_theta.iter().zip(&self.node_weight).map(|(t, w)| w * (t - m).powi(2)).sum()
    }

    /// E[h(θ)] under the tabulated posterior.
    pub fn expectation<H: Fn(f64) -> f64>(&self, h: H) -> f64 {
        self.node_theta.iter().zip(&self.node_weight).map(|(&t, w)| w * h(t)).sum()
    }

    /// Maximizer of the density in θ.
    pub fn mode(&self) -> Result<f64> {
        let f = |t: f64| finite_or_neg_inf((self.logf)(t));
        let k = (0..self.grid.len()).max_by(|&i, &j| self.log_post[i].total_cmp(&self.log_post[j])).unwrap_or(0);
        let start = self.grid[k.clamp(1, self.grid.len() - 2)];
        let m = maximize(f, start, 0.1 * self.scale, 400)?;
        // Newton polish on central differences; the bracket search alone stalls near 1e-6 relative.
        let mut x = m.x;
        let h = 1e-3 * self.scale;
        for _ in 0..8 {
            let (fm, f0, fp) = (f(x - h), f(x), f(x + h));
            // five-point slope; the three-point one is biased by h²f'''/6, which moves the root
            let d1 = (8.0 * (f(x + 0.5 * h) - f(x - 0.5 * h)) - (fp - fm)) / (6.0 * h);
            let d2 = (fp - 2.0 * f0 + fm) / (h * h);
            if !(d2 < 0.0) || !d1.is_finite() {
                break;
            }
            let step = (-d1 / d2).clamp(-h, h);
            let next = x + step;
            if !f(next).is_finite() {
                break;
            }
            x = next;
            if step.abs() < 1e-12 * self.scale.max(x.abs() * 1e-3) {
                break;
            }
        }
        Ok(x)
    }

    pub fn cells(&self) -> usize {
        self.grid.len() - 1
    }

    /// Rows θ, density, cdf at every grid edge.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "density", "cdf"])?;
        for (k, &t) in self.grid.iter().enumerate() {
            let d = (self.log_post[k] - self.log_normalizer).exp();
            w.write_record([format!("{t:.16e}"), format!("{d:.16e}"), format!("{:.16e}", self.cdf[k])])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn improper(e: Error) -> Error {
    match e {
        Error::BoundaryMle(m) => Error::ImproperPosterior(format!("log posterior has no interior maximum: {m}")),
        other => other,
    }
}

/// Push one end of the grid outward until the log density has dropped by
/// `drop_nats` and the tail beyond it is negligible by a slope bound.
fn extend_end<G: Fn(f64) -> f64>(g: &G, vstar: f64, offset: f64, peak: f64, sv: f64, opts: GridOptions) -> Result<f64> {
    let bulk = (2.0 * std::f64::consts::PI).sqrt() * sv;
    let dir = offset.signum();
    let mut dist = offset.abs();
    for attempt in 0..=opts.max_extensions {
        // beyond |v| = 700 the charts overflow
        let end = (vstar + dir * dist).clamp(-700.0, 700.0);
        let ge = g(end) - peak;
        if ge == f64::NEG_INFINITY {
            return Ok(end);
        }
        if ge <= -opts.drop_nats {
            let h = 1e-4 * dist.max(1.0);
            let outward = (g(end + dir * h) - g(end - dir * h)) / (2.0 * h);
            // tail mass ≤ e^{g_e}/|g′| for a density decaying at least exponentially
            if outward < 0.0 && ge.exp() / (-outward) < 1e-6 * bulk {
                return Ok(end);
            }
        }
        if attempt == opts.max_extensions {
            break;
        }
        dist *= 2.0;
    }
    Err(Error::ImproperPosterior(format!(
        "log posterior still within {} nats of its maximum (or too heavy-tailed) after {} extensions",
        opts.drop_nats, opts.max_extensions
    )))
}

/// Exact posterior of a scalar parameter under `prior` given `data`.
pub fn exact_posterior(family: &FamilyModel, prior: &PriorDensity, data: &DataSample) -> Result<PosteriorGrid> {
    exact_posterior_with(family, prior, data, GridOptions::default())
}

pub fn exact_posterior_with(family: &FamilyModel, prior: &PriorDensity, data: &DataSample, opts: GridOptions) -> Result<PosteriorGrid> {
    require_scalar(family)?;
    data.check_family(family)?;
    let kernel = family.loglik_kernel(&data.observations);
    let space = family.space().clone();
    let prior = prior.clone();
    let logf: LogDensity1d = Arc::new(move |t: f64| {
        if !space.contains(&[t]) {
            return f64::NEG_INFINITY;
        }
        match prior.log_density_unchecked(&[t]) {
            Ok(lp) => kernel(&[t]) + lp,
            Err(_) => f64::NEG_INFINITY,
        }
    });
    let start = interior_start(family, family.initial_guess(&data.observations))[0];
    let start = if logf(start).is_finite() { start } else { family.anchor()[0] };
    PosteriorGrid::from_log_density(family.space().coord(0), logf, start, opts)
}

/// One row of an expansion-versus-exact comparison in the standardized variable t.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComparisonRow {
    pub t: f64,
    pub exact: f64,
    pub order0: f64,
    pub order1: f64,
    pub order2: f64,
}

/// Exact standardized posterior density of T = √n(θ − θ̂)Î^{1/2} at t.
pub fn standardized_exact(post: &PosteriorGrid, c: &ExpansionCoefficients, t: f64) -> f64 {
    let s = 1.0 / (c.n as f64 * c.i_hat).sqrt();
    post.density(c.mle + t * s) * s
}

pub fn expansion_comparison(post: &PosteriorGrid, c: &ExpansionCoefficients, ts: &[f64]) -> Result<Vec<ComparisonRow>> {
    ts.iter()
        .map(|&t| {
            Ok(ComparisonRow {
                t,
                exact: standardized_exact(post, c, t),
                order0: expansion_density(c, t, 0)?,
                order1: expansion_density(c, t, 1)?,
                order2: expansion_density(c, t, 2)?,
            })
        })
        .collect()
}

/// sup over `ts` of |expansion(order) − exact|.
pub fn expansion_sup_error(rows: &[ComparisonRow], order: usize) -> f64 {
    rows.iter()
        .map(|r| {
            let approx = match order {
                0 => r.order0,
                1 => r.order1,
                _ => r.order2,
            };
            (approx - r.exact).abs()
        })
        .fold(0.0, f64::max)
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "exact", "order0", "order1", "order2"])?;
    for r in rows {
        w.write_record([r.t, r.exact, r.order0, r.order1, r.order2].map(|x| format!("{x:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Equally spaced t values on [lo, hi].
pub fn t_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64).collect()
}
