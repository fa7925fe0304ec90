//! Built-in families, addressable by string id.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::{FamilyDef, FamilyModel, Interval, LoglikKernel, ObservationKind, ParameterSpace, Support};
use crate::error::{Error, Result};
use crate::numeric::jet::{self, Jet};
use crate::numeric::special::{digamma, ln_gamma, tetragamma, trigamma};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Catalog ids in listing order.
pub const IDS: &[&str] = &[
    "binomial",
    "poisson",
    "exp_family_expc",
    "normal_known_var",
    "normal",
    "logistic_location",
    "exp_scale",
    "halfnormal_scale",
    "bvn_rho",
    "noncentrality",
    "noncentrality_orth",
    "fieller_creasy",
    "fieller_creasy_orth",
    "neyman_scott",
    "random_effects",
    "gamma_mean",
];

/// Family parameters that are fixed rather than estimated (trial count, cell sizes).
pub type Settings = BTreeMap<String, f64>;

fn setting(settings: &Settings, key: &str, default: f64) -> f64 {
    settings.get(key).copied().unwrap_or(default)
}

fn positive_int(settings: &Settings, key: &str, default: u64, min: u64) -> Result<u64> {
    let v = setting(settings, key, default as f64);
    if v.fract() != 0.0 || v < min as f64 {
        return Err(Error::Config(format!("setting `{key}` must be an integer ≥ {min}, got {v}")));
    }
    Ok(v as u64)
}

/// Build a catalog family with default settings.
pub fn family(id: &str) -> Result<FamilyModel> {
    build(id, &Settings::new())
}

/// Build a catalog family; `settings` may hold `m` (binomial trials),
/// `n_cells`/`k` (Neyman–Scott) or `n` (random-effects group size).
pub fn build(id: &str, settings: &Settings) -> Result<FamilyModel> {
    Ok(match id {
        "binomial" => FamilyModel::new(Binomial::new(positive_int(settings, "m", 1, 1)?)),
        "poisson" => FamilyModel::new(Poisson::new()),
        "exp_family_expc" => FamilyModel::new(PoissonCanonical::new()),
        "normal_known_var" => FamilyModel::new(NormalKnownVariance::new()),
        "normal" => FamilyModel::new(NormalLocationScale::new()),
        "logistic_location" => FamilyModel::new(SymmetricLocation::logistic()),
        "exp_scale" => FamilyModel::new(ExponentialScale::new()),
        "halfnormal_scale" => FamilyModel::new(ScaleFamily::half_normal()),
        "bvn_rho" => FamilyModel::new(BivariateNormalCorrelation::new()),
        "noncentrality" => FamilyModel::new(Noncentrality::new(false)),
        "noncentrality_orth" => FamilyModel::new(Noncentrality::new(true)),
        "fieller_creasy" => FamilyModel::new(FiellerCreasy::new(false)),
        "fieller_creasy_orth" => FamilyModel::new(FiellerCreasy::new(true)),
        "neyman_scott" => FamilyModel::new(NeymanScott::new(
            positive_int(settings, "n_cells", 2, 1)? as usize,
            positive_int(settings, "k", 2, 2)? as usize,
        )),
        "random_effects" => FamilyModel::new(RandomEffects::new(positive_int(settings, "n", 3, 2)? as usize)),
        "gamma_mean" => FamilyModel::new(GammaMean::new()),
        other => return Err(Error::UnknownFamily(other.to_string())),
    })
}

fn space(boxes: Vec<Interval>) -> ParameterSpace {
    ParameterSpace::new(boxes).expect("catalog spaces are valid")
}

fn scalar_order(orders: &[usize]) -> usize {
    orders[0]
}

/// k! as f64.
fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// d^k/dt^k log t.
fn dlog(t: f64, k: usize) -> f64 {
    if k == 0 {
        return t.ln();
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * factorial(k - 1) / t.powi(k as i32)
}

/// d^k/dt^k t^{-1}.
fn dinv(t: f64, k: usize) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * factorial(k) / t.powi(k as i32 + 1)
}

fn mean(data: &[Vec<f64>]) -> f64 {
    data.iter().map(|x| x[0]).sum::<f64>() / data.len().max(1) as f64
}

fn normal(rng: &mut dyn RngCore) -> f64 {
    StandardNormal.sample(rng)
}

fn is_count(x: f64) -> bool {
    x >= 0.0 && x.fract() == 0.0 && x.is_finite()
}

// ----------------------------------------------------------------------------

pub struct Binomial {
    m: u64,
    space: ParameterSpace,
}

impl Binomial {
    pub fn new(m: u64) -> Self {
        Binomial { m, space: space(vec![Interval::unit()]) }
    }
    fn ln_choose(&self, x: f64) -> f64 {
        let m = self.m as f64;
        ln_gamma(m + 1.0) - ln_gamma(x + 1.0) - ln_gamma(m - x + 1.0)
    }
}

impl FamilyDef for Binomial {
    fn id(&self) -> String {
        "binomial".into()
    }
    fn description(&self) -> String {
        format!("Binomial(m = {}, p)", self.m)
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["p".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Discrete
    }
    fn support(&self, _theta: &[f64]) -> Support {
        Support::Finite((0..=self.m).map(|k| k as f64).collect())
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && is_count(x[0]) && x[0] <= self.m as f64
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (x, p, m) = (x[0], theta[0], self.m as f64);
        let a = if x > 0.0 { x * p.ln() } else { 0.0 };
        let b = if x < m { (m - x) * (-p).ln_1p() } else { 0.0 };
        self.ln_choose(x) + a + b
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let d = rand_distr::Binomial::new(self.m, theta[0]).expect("p in (0,1)");
        vec![d.sample(rng) as f64]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.5]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        let k = scalar_order(orders);
        if k == 0 {
            return Some(self.log_density(x, theta));
        }
        let (x, p, m) = (x[0], theta[0], self.m as f64);
        // d^k/dp^k log(1−p) = −(k−1)!/(1−p)^k
        Some(x * dlog(p, k) - (m - x) * factorial(k - 1) / (1.0 - p).powi(k as i32))
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let p = theta[0];
        Some(DMatrix::from_element(1, 1, self.m as f64 / (p * (1.0 - p))))
    }
    fn exact_g3(&self, theta: &[f64]) -> Option<f64> {
        let (p, m) = (theta[0], self.m as f64);
        Some(-2.0 * m / (p * p) + 2.0 * m / ((1.0 - p) * (1.0 - p)))
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        vec![(mean(data) / self.m as f64).clamp(1e-6, 1.0 - 1e-6)]
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        let s: f64 = data.iter().map(|x| x[0]).sum();
        let f = data.len() as f64 * self.m as f64 - s;
        let c: f64 = data.iter().map(|x| self.ln_choose(x[0])).sum();
        Some(Box::new(move |t: &[f64]| {
            let p = t[0];
            let a = if s > 0.0 { s * p.ln() } else { 0.0 };
            let b = if f > 0.0 { f * (-p).ln_1p() } else { 0.0 };
            c + a + b
        }))
    }
}

// ----------------------------------------------------------------------------

pub struct Poisson {
    space: ParameterSpace,
}

impl Poisson {
    pub fn new() -> Self {
        Poisson { space: space(vec![Interval::positive()]) }
    }
}

impl Default for Poisson {
    fn default() -> Self {
        Self::new()
    }
}

fn poisson_sample(lambda: f64, rng: &mut dyn RngCore) -> f64 {
    rand_distr::Poisson::new(lambda).expect("positive rate").sample(rng)
}

fn count_kernel(data: &[Vec<f64>]) -> (f64, f64, f64) {
    let s: f64 = data.iter().map(|x| x[0]).sum();
    let c: f64 = data.iter().map(|x| ln_gamma(x[0] + 1.0)).sum();
    (s, data.len() as f64, c)
}

impl FamilyDef for Poisson {
    fn id(&self) -> String {
        "poisson".into()
    }
    fn description(&self) -> String {
        "Poisson(λ)".into()
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["lambda".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Discrete
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Lattice { start: 0.0, mode: theta[0] }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && is_count(x[0])
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (x, l) = (x[0], theta[0]);
        let a = if x > 0.0 { x * l.ln() } else { 0.0 };
        a - l - ln_gamma(x + 1.0)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![poisson_sample(theta[0], rng)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        let k = scalar_order(orders);
        let (x, l) = (x[0], theta[0]);
        Some(match k {
            0 => self.log_density(&[x], theta),
            1 => x / l - 1.0,
            _ => x * dlog(l, k),
        })
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 1.0 / theta[0]))
    }
    fn exact_g3(&self, theta: &[f64]) -> Option<f64> {
        Some(-2.0 / (theta[0] * theta[0]))
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        vec![mean(data).max(1e-3)]
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        let (s, n, c) = count_kernel(data);
        Some(Box::new(move |t: &[f64]| {
            let a = if s > 0.0 { s * t[0].ln() } else { 0.0 };
            a - n * t[0] - c
        }))
    }
}

/// Poisson in its canonical parameter θ = log λ, so I(θ) = e^θ.
pub struct PoissonCanonical {
    space: ParameterSpace,
}

impl PoissonCanonical {
    pub fn new() -> Self {
        PoissonCanonical { space: space(vec![Interval::real()]) }
    }
}

impl Default for PoissonCanonical {
    fn default() -> Self {
        Self::new()
    }
}

impl FamilyDef for PoissonCanonical {
    fn id(&self) -> String {
        "exp_family_expc".into()
    }
    fn description(&self) -> String {
        "Poisson in canonical parameter θ = log λ (I(θ) = exp(θ))".into()
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Discrete
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Lattice { start: 0.0, mode: theta[0].exp() }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && is_count(x[0])
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        x[0] * theta[0] - theta[0].exp() - ln_gamma(x[0] + 1.0)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![poisson_sample(theta[0].exp(), rng)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        Some(match scalar_order(orders) {
            0 => self.log_density(x, theta),
            1 => x[0] - theta[0].exp(),
            _ => -theta[0].exp(),
        })
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, theta[0].exp()))
    }
    fn exact_g3(&self, theta: &[f64]) -> Option<f64> {
        Some(theta[0].exp())
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        vec![mean(data).max(1e-3).ln()]
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        let (s, n, c) = count_kernel(data);
        Some(Box::new(move |t: &[f64]| s * t[0] - n * t[0].exp() - c))
    }
}

// ----------------------------------------------------------------------------

pub struct NormalKnownVariance {
    space: ParameterSpace,
}

impl NormalKnownVariance {
    pub fn new() -> Self {
        NormalKnownVariance { space: space(vec![Interval::real()]) }
    }
}

impl Default for NormalKnownVariance {
    fn default() -> Self {
        Self::new()
    }
}

fn sums(data: &[Vec<f64>]) -> (f64, f64, f64) {
    let n = data.len() as f64;
    let xbar = mean(data);
    let ss: f64 = data.iter().map(|x| (x[0] - xbar).powi(2)).sum();
    (n, xbar, ss)
}

impl FamilyDef for NormalKnownVariance {
    fn id(&self) -> String {
        "normal_known_var".into()
    }
    fn description(&self) -> String {
        "N(θ, 1)".into()
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Gaussian { mean: vec![theta[0]], cov: DMatrix::identity(1, 1) }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0].is_finite()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        -0.5 * LN_2PI - 0.5 * (x[0] - theta[0]).powi(2)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![theta[0] + normal(rng)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        Some(match scalar_order(orders) {
            0 => self.log_density(x, theta),
            1 => x[0] - theta[0],
            2 => -1.0,
            _ => 0.0,
        })
    }
    fn exact_fisher(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(1, 1))
    }
    fn exact_g3(&self, _theta: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        vec![mean(data)]
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        let (n, xbar, ss) = sums(data);
        Some(Box::new(move |t: &[f64]| -0.5 * n * LN_2PI - 0.5 * (ss + n * (xbar - t[0]).powi(2))))
    }
}

/// N(μ, σ²) parameterised by (μ, σ).
pub struct NormalLocationScale {
    space: ParameterSpace,
}

impl NormalLocationScale {
    pub fn new() -> Self {
        NormalLocationScale { space: space(vec![Interval::real(), Interval::positive()]) }
    }
}

impl Default for NormalLocationScale {
    fn default() -> Self {
        Self::new()
    }
}

/// ∂_μ^a ∂_σ^b of −log σ − r²/(2σ²), r = x − μ.
fn normal_ls_partial(r: f64, sigma: f64, a: usize, b: usize) -> f64 {
    let quad = match a {
        0 => -0.5 * r * r,
        1 => r,
        2 => -1.0,
        _ => 0.0,
    };
    // ∂_σ^b σ^{-2} = (−2)(−3)…(−1−b) σ^{−2−b}
    let mut coef = 1.0;
    for i in 0..b {
        coef *= -(2.0 + i as f64);
    }
    let mut v = quad * coef * sigma.powi(-2 - b as i32);
    if a == 0 {
        v += if b == 0 { -sigma.ln() } else { -dlog(sigma, b) };
    }
    v
}

impl FamilyDef for NormalLocationScale {
    fn id(&self) -> String {
        "normal".into()
    }
    fn description(&self) -> String {
        "N(μ, σ²) location–scale in (μ, σ)".into()
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["mu".into(), "sigma".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Gaussian { mean: vec![theta[0]], cov: DMatrix::from_element(1, 1, theta[1] * theta[1]) }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0].is_finite()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        -0.5 * LN_2PI + normal_ls_partial(x[0] - theta[0], theta[1], 0, 0)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![theta[0] + theta[1] * normal(rng)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        if orders == [0, 0] {
            return Some(self.log_density(x, theta));
        }
        Some(normal_ls_partial(x[0] - theta[0], theta[1], orders[0], orders[1]))
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let s2 = theta[1] * theta[1];
        Some(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0 / s2, 2.0 / s2])))
    }
    fn exact_g3(&self, theta: &[f64]) -> Option<f64> {
        // interest μ: third μ-derivative vanishes
        let _ = theta;
        Some(0.0)
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let (n, xbar, ss) = sums(data);
        vec![xbar, (ss / n).sqrt().max(1e-6)]
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        let (n, xbar, ss) = sums(data);
        Some(Box::new(move |t: &[f64]| {
            -0.5 * n * LN_2PI - n * t[1].ln() - (ss + n * (xbar - t[0]).powi(2)) / (2.0 * t[1] * t[1])
        }))
    }
}

// ----------------------------------------------------------------------------

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type DerivFn = Arc<dyn Fn(f64, usize) -> Option<f64> + Send + Sync>;
type DrawFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// Location family f(x − θ) with a symmetric standard density f.
pub struct SymmetricLocation {
    id: String,
    log_f: ScalarFn,
    /// k-th derivative of log f, when known.
    dlog_f: Option<DerivFn>,
    draw: DrawFn,
    spread: f64,
    fisher: Option<f64>,
    space: ParameterSpace,
}

impl SymmetricLocation {
    /// A custom symmetric location family; `spread` is a rough scale of f.
    pub fn new(id: &str, log_f: ScalarFn, draw: DrawFn, spread: f64) -> Self {
        SymmetricLocation {
            id: id.into(),
            log_f,
            dlog_f: None,
            draw,
            spread,
            fisher: None,
            space: space(vec![Interval::real()]),
        }
    }

    /// Standard logistic errors: I = 1/3.
    pub fn logistic() -> Self {
        let log_f: ScalarFn = Arc::new(|z: f64| {
            let a = z.abs();
            -a - 2.0 * (-a).exp().ln_1p()
        });
        let dlog_f: DerivFn = Arc::new(|z: f64, k: usize| {
            let s = super::logistic(z);
            let q = s * (1.0 - s);
            match k {
                1 => Some(1.0 - 2.0 * s),
                2 => Some(-2.0 * q),
                3 => Some(-2.0 * q * (1.0 - 2.0 * s)),
                4 => Some(-2.0 * q * ((1.0 - 2.0 * s).powi(2) - 2.0 * q)),
                _ => None,
            }
        });
        let draw: DrawFn = Arc::new(|rng: &mut dyn RngCore| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            (u / (1.0 - u)).ln()
        });
        SymmetricLocation {
            id: "logistic_location".into(),
            log_f,
            dlog_f: Some(dlog_f),
            draw,
            spread: 1.8,
            fisher: Some(1.0 / 3.0),
            space: space(vec![Interval::real()]),
        }
    }
}

impl FamilyDef for SymmetricLocation {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn description(&self) -> String {
        format!("symmetric location family `{}`", self.id)
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Interval { lower: f64::NEG_INFINITY, upper: f64::INFINITY, center: theta[0], scale: self.spread }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0].is_finite()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        (self.log_f)(x[0] - theta[0])
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![theta[0] + (self.draw)(rng)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        let k = scalar_order(orders);
        if k == 0 {
            return Some(self.log_density(x, theta));
        }
        let d = self.dlog_f.as_ref()?(x[0] - theta[0], k)?;
        Some(if k % 2 == 1 { -d } else { d })
    }
    fn exact_fisher(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        self.fisher.map(|v| DMatrix::from_element(1, 1, v))
    }
    fn exact_g3(&self, _theta: &[f64]) -> Option<f64> {
        self.fisher.map(|_| 0.0)
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let mut xs: Vec<f64> = data.iter().map(|x| x[0]).collect();
        xs.sort_by(f64::total_cmp);
        vec![xs.get(xs.len() / 2).copied().unwrap_or(0.0)]
    }
}

// ----------------------------------------------------------------------------

/// Exponential with mean θ: f = θ⁻¹ exp(−x/θ).
pub struct ExponentialScale {
    space: ParameterSpace,
}

impl ExponentialScale {
    pub fn new() -> Self {
        ExponentialScale { space: space(vec![Interval::positive()]) }
    }
}

impl Default for ExponentialScale {
    fn default() -> Self {
        Self::new()
    }
}

impl FamilyDef for ExponentialScale {
    fn id(&self) -> String {
        "exp_scale".into()
    }
    fn description(&self) -> String {
        "exponential with scale θ".into()
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Interval { lower: 0.0, upper: f64::INFINITY, center: theta[0], scale: theta[0] }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0] > 0.0 && x[0].is_finite()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        -theta[0].ln() - x[0] / theta[0]
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let e: f64 = Exp1.sample(rng);
        vec![theta[0] * e.max(f64::MIN_POSITIVE)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        let k = scalar_order(orders);
        if k == 0 {
            return Some(self.log_density(x, theta));
        }
        Some(-dlog(theta[0], k) - x[0] * dinv(theta[0], k))
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_element(1, 1, 1.0 / (theta[0] * theta[0])))
    }
    fn exact_g3(&self, theta: &[f64]) -> Option<f64> {
        Some(-4.0 / theta[0].powi(3))
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        vec![mean(data).max(1e-8)]
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        let n = data.len() as f64;
        let s: f64 = data.iter().map(|x| x[0]).sum();
        Some(Box::new(move |t: &[f64]| -n * t[0].ln() - s / t[0]))
    }
}

/// Scale family θ⁻¹ f₀(x/θ) on (0, ∞) with user-supplied log f₀.
pub struct ScaleFamily {
    id: String,
    log_f0: ScalarFn,
    draw: DrawFn,
    center: f64,
    spread: f64,
    space: ParameterSpace,
}

impl ScaleFamily {
    pub fn new(id: &str, log_f0: ScalarFn, draw: DrawFn, center: f64, spread: f64) -> Self {
        ScaleFamily { id: id.into(), log_f0, draw, center, spread, space: space(vec![Interval::positive()]) }
    }

    /// Half-normal base density √(2/π) exp(−y²/2).
    pub fn half_normal() -> Self {
        let c = (2.0 / PI).sqrt().ln();
        ScaleFamily::new(
            "halfnormal_scale",
            Arc::new(move |y: f64| c - 0.5 * y * y),
            Arc::new(|rng: &mut dyn RngCore| normal(rng).abs().max(f64::MIN_POSITIVE)),
            0.8,
            0.6,
        )
    }
}

impl FamilyDef for ScaleFamily {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn description(&self) -> String {
        format!("scale family `{}`", self.id)
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        Support::Interval { lower: 0.0, upper: f64::INFINITY, center: self.center * theta[0], scale: self.spread * theta[0] }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0] > 0.0 && x[0].is_finite()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        (self.log_f0)(x[0] / theta[0]) - theta[0].ln()
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        vec![theta[0] * (self.draw)(rng)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![1.0]
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        vec![(mean(data) / self.center).max(1e-8)]
    }
}

// ----------------------------------------------------------------------------

/// Standard bivariate normal with unknown correlation ρ.
pub struct BivariateNormalCorrelation {
    space: ParameterSpace,
}

impl BivariateNormalCorrelation {
    pub fn new() -> Self {
        BivariateNormalCorrelation { space: space(vec![Interval::new(-1.0, 1.0)]) }
    }
}

impl Default for BivariateNormalCorrelation {
    fn default() -> Self {
        Self::new()
    }
}

impl FamilyDef for BivariateNormalCorrelation {
    fn id(&self) -> String {
        "bvn_rho".into()
    }
    fn description(&self) -> String {
        "bivariate normal, unit variances, correlation ρ".into()
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["rho".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        let r = theta[0];
        Support::Gaussian { mean: vec![0.0, 0.0], cov: DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]) }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 2 && x.iter().all(|v| v.is_finite())
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let r = theta[0];
        let d = 1.0 - r * r;
        -LN_2PI - 0.5 * d.ln() - (x[0] * x[0] - 2.0 * r * x[0] * x[1] + x[1] * x[1]) / (2.0 * d)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let r = theta[0];
        let z1 = normal(rng);
        let z2 = normal(rng);
        vec![z1, r * z1 + (1.0 - r * r).sqrt() * z2]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let r = theta[0];
        Some(DMatrix::from_element(1, 1, (1.0 + r * r) / (1.0 - r * r).powi(2)))
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        if orders[0] > jet::ORDER {
            return None;
        }
        let r = &Jet::variables(theta)[0];
        let d = (r.square() * -1.0) + 1.0;
        let q = (r * (-2.0 * x[0] * x[1])) + (x[0] * x[0] + x[1] * x[1]);
        let lf = d.ln() * -0.5 - (q / (d * 2.0));
        Some(lf.partial(orders) + if orders[0] == 0 { -LN_2PI } else { 0.0 })
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let n = data.len() as f64;
        let sxy: f64 = data.iter().map(|x| x[0] * x[1]).sum::<f64>() / n;
        vec![sxy.clamp(-0.99, 0.99)]
    }
}

// ----------------------------------------------------------------------------

/// X ~ N(θσ, σ²) in (θ, σ), or in the orthogonal (θ, φ) with φ = σ(θ²+2)^{1/2}.
pub struct Noncentrality {
    orthogonal: bool,
    space: ParameterSpace,
}

impl Noncentrality {
    pub fn new(orthogonal: bool) -> Self {
        Noncentrality { orthogonal, space: space(vec![Interval::real(), Interval::positive()]) }
    }
    fn sigma(&self, theta: &[f64]) -> f64 {
        if self.orthogonal {
            theta[1] / (theta[0] * theta[0] + 2.0).sqrt()
        } else {
            theta[1]
        }
    }
}

impl FamilyDef for Noncentrality {
    fn id(&self) -> String {
        if self.orthogonal { "noncentrality_orth" } else { "noncentrality" }.into()
    }
    fn description(&self) -> String {
        if self.orthogonal {
            "N(θσ, σ²) with θ = μ/σ, parameterised by (θ, φ = σ(θ²+2)^{1/2})".into()
        } else {
            "N(θσ, σ²) with θ = μ/σ, parameterised by (θ, σ)".into()
        }
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into(), if self.orthogonal { "phi" } else { "sigma" }.into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        let s = self.sigma(theta);
        Support::Gaussian { mean: vec![theta[0] * s], cov: DMatrix::from_element(1, 1, s * s) }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0].is_finite()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let s = self.sigma(theta);
        -0.5 * LN_2PI - s.ln() - 0.5 * (x[0] / s - theta[0]).powi(2)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let s = self.sigma(theta);
        vec![s * (theta[0] + normal(rng))]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let (t, s) = (theta[0], theta[1]);
        Some(if self.orthogonal {
            let q = t * t + 2.0;
            DMatrix::from_row_slice(2, 2, &[2.0 / q, 0.0, 0.0, q / (s * s)])
        } else {
            DMatrix::from_row_slice(2, 2, &[1.0, t / s, t / s, (t * t + 2.0) / (s * s)])
        })
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        if orders.iter().sum::<usize>() > jet::ORDER {
            return None;
        }
        let v = Jet::variables(theta);
        let s = if self.orthogonal { &v[1] / (v[0].square() + 2.0).sqrt() } else { v[1].clone() };
        let z = Jet::constant(2, x[0]) / s.clone() - &v[0];
        let lf = -s.ln() - z.square() * 0.5;
        Some(lf.partial(orders) + if orders.iter().all(|&k| k == 0) { -0.5 * LN_2PI } else { 0.0 })
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let (n, xbar, ss) = sums(data);
        let s = (ss / n).sqrt().max(1e-6);
        let t = xbar / s;
        vec![t, if self.orthogonal { s * (t * t + 2.0).sqrt() } else { s }]
    }
}

/// X₁ ~ N(θμ, 1), X₂ ~ N(μ, 1), in (θ, μ) or orthogonal (θ, φ = μ(1+θ²)^{1/2}).
pub struct FiellerCreasy {
    orthogonal: bool,
    space: ParameterSpace,
}

impl FiellerCreasy {
    pub fn new(orthogonal: bool) -> Self {
        FiellerCreasy { orthogonal, space: space(vec![Interval::real(), Interval::positive()]) }
    }
    fn mu(&self, theta: &[f64]) -> f64 {
        if self.orthogonal {
            theta[1] / (1.0 + theta[0] * theta[0]).sqrt()
        } else {
            theta[1]
        }
    }
}

impl FamilyDef for FiellerCreasy {
    fn id(&self) -> String {
        if self.orthogonal { "fieller_creasy_orth" } else { "fieller_creasy" }.into()
    }
    fn description(&self) -> String {
        if self.orthogonal {
            "ratio of normal means, (θ, φ = μ(1+θ²)^{1/2})".into()
        } else {
            "ratio of normal means: X₁ ~ N(θμ, 1), X₂ ~ N(μ, 1)".into()
        }
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["theta".into(), if self.orthogonal { "phi" } else { "mu" }.into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        let m = self.mu(theta);
        Support::Gaussian { mean: vec![theta[0] * m, m], cov: DMatrix::identity(2, 2) }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 2 && x.iter().all(|v| v.is_finite())
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let m = self.mu(theta);
        -LN_2PI - 0.5 * (x[0] - theta[0] * m).powi(2) - 0.5 * (x[1] - m).powi(2)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let m = self.mu(theta);
        vec![theta[0] * m + normal(rng), m + normal(rng)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0, 1.0]
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let (t, v) = (theta[0], theta[1]);
        Some(if self.orthogonal {
            DMatrix::from_row_slice(2, 2, &[v * v / (1.0 + t * t).powi(2), 0.0, 0.0, 1.0])
        } else {
            DMatrix::from_row_slice(2, 2, &[v * v, v * t, v * t, 1.0 + t * t])
        })
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        if orders.iter().sum::<usize>() > jet::ORDER {
            return None;
        }
        let v = Jet::variables(theta);
        let m = if self.orthogonal { &v[1] / (v[0].square() + 1.0).sqrt() } else { v[1].clone() };
        let r1 = (&v[0] * &m) * -1.0 + x[0];
        let r2 = &m * -1.0 + x[1];
        let lf = (r1.square() + r2.square()) * -0.5;
        Some(lf.partial(orders) + if orders.iter().all(|&k| k == 0) { -LN_2PI } else { 0.0 })
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let n = data.len() as f64;
        let m1 = data.iter().map(|x| x[0]).sum::<f64>() / n;
        let m2 = (data.iter().map(|x| x[1]).sum::<f64>() / n).max(1e-3);
        let t = m1 / m2;
        vec![t, if self.orthogonal { m2 * (1.0 + t * t).sqrt() } else { m2 }]
    }
}

// ----------------------------------------------------------------------------

/// n cells of k replicates, X_ij ~ N(θ_i, σ²). Parameters (θ₁…θₙ, σ²), interest σ².
/// One observation is the whole n·k array (cell-major).
pub struct NeymanScott {
    n: usize,
    k: usize,
    space: ParameterSpace,
}

impl NeymanScott {
    pub fn new(n: usize, k: usize) -> Self {
        let mut boxes = vec![Interval::real(); n];
        boxes.push(Interval::positive());
        NeymanScott { n, k, space: space(boxes) }
    }
    pub fn cells(&self) -> usize {
        self.n
    }
    pub fn per_cell(&self) -> usize {
        self.k
    }
}

/// Within-cell sum of squares Σ_i Σ_j (x_ij − x̄_i)² for a cell-major array.
pub fn within_cell_ss(x: &[f64], k: usize) -> f64 {
    x.chunks(k)
        .map(|c| {
            let m = c.iter().sum::<f64>() / k as f64;
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        })
        .sum()
}

impl FamilyDef for NeymanScott {
    fn id(&self) -> String {
        "neyman_scott".into()
    }
    fn description(&self) -> String {
        format!("Neyman–Scott: {} cells × {} replicates, N(θᵢ, σ²)", self.n, self.k)
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (1..=self.n).map(|i| format!("theta{i}")).collect();
        v.push("sigma2".into());
        v
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        let s2 = theta[self.n];
        let mean = (0..self.n * self.k).map(|j| theta[j / self.k]).collect();
        Support::Gaussian { mean, cov: DMatrix::identity(self.n * self.k, self.n * self.k) * s2 }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == self.n * self.k && x.iter().all(|v| v.is_finite())
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let s2 = theta[self.n];
        let q: f64 = x.iter().enumerate().map(|(j, v)| (v - theta[j / self.k]).powi(2)).sum();
        let nk = (self.n * self.k) as f64;
        -0.5 * nk * (LN_2PI + s2.ln()) - q / (2.0 * s2)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let s = theta[self.n].sqrt();
        (0..self.n * self.k).map(|j| theta[j / self.k] + s * normal(rng)).collect()
    }
    fn anchor(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n];
        a.push(1.0);
        a
    }
    fn interest_index(&self) -> usize {
        self.n
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        let (n, k) = (self.n, self.k);
        let b = orders[n];
        let s2 = theta[n];
        let cells: Vec<usize> = (0..n).filter(|&i| orders[i] > 0).collect();
        if cells.len() > 1 {
            return Some(0.0);
        }
        if cells.is_empty() {
            if b == 0 {
                return Some(self.log_density(x, theta));
            }
            let q: f64 = x.iter().enumerate().map(|(j, v)| (v - theta[j / k]).powi(2)).sum();
            let nk = (n * k) as f64;
            return Some(-0.5 * nk * dlog(s2, b) - 0.5 * q * dinv(s2, b));
        }
        let i = cells[0];
        let a = orders[i];
        let cell = &x[i * k..(i + 1) * k];
        let poly = match a {
            1 => cell.iter().map(|v| v - theta[i]).sum::<f64>(),
            2 => -(k as f64),
            _ => 0.0,
        };
        Some(poly * dinv(s2, b))
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        self.exact_fisher_diagonal(theta).map(|d| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)))
    }
    fn exact_fisher_diagonal(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let s2 = theta[self.n];
        let mut d = vec![self.k as f64 / s2; self.n];
        d.push((self.n * self.k) as f64 / (2.0 * s2 * s2));
        Some(d)
    }
    fn exact_g3(&self, theta: &[f64]) -> Option<f64> {
        let s2 = theta[self.n];
        // −E[∂³ℓ/∂(σ²)³] = nk/σ⁶ − 3·nk σ²/σ⁸ = −2nk/σ⁶
        Some(-2.0 * (self.n * self.k) as f64 / s2.powi(3))
    }
    /// σ² on its usual 7 points crossed with three cell-mean patterns
    /// (all zero, alternating ±1, a ramp); a full product grid would be 7^{n+1}.
    fn diagnostic_grid(&self) -> Vec<Vec<f64>> {
        if self.n <= 2 {
            return self.space.grid(7);
        }
        let n = self.n;
        let patterns: [Vec<f64>; 3] = [
            vec![0.0; n],
            (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(),
            (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect(),
        ];
        let mut out = Vec::new();
        for s2 in self.space.coord(n).grid(7) {
            for p in &patterns {
                let mut t = p.clone();
                t.push(s2);
                out.push(t);
            }
        }
        out
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let x = &data[0];
        let mut g: Vec<f64> = x.chunks(self.k).map(|c| c.iter().sum::<f64>() / self.k as f64).collect();
        g.push((within_cell_ss(x, self.k) / (self.n * self.k) as f64).max(1e-8));
        g
    }
}

// ----------------------------------------------------------------------------

/// One group of the balanced one-way random-effects model, parameters (m, r, u):
/// r = σ⁻², u = σ²/(nσ²_α + σ²).
pub struct RandomEffects {
    n: usize,
    space: ParameterSpace,
}

impl RandomEffects {
    pub fn new(n: usize) -> Self {
        RandomEffects { n, space: space(vec![Interval::real(), Interval::positive(), Interval::unit()]) }
    }
}

impl FamilyDef for RandomEffects {
    fn id(&self) -> String {
        "random_effects".into()
    }
    fn description(&self) -> String {
        format!("one-way random effects, group size {}, parameters (m, r, u)", self.n)
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["m".into(), "r".into(), "u".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        let (m, r, u) = (theta[0], theta[1], theta[2]);
        let n = self.n;
        let between = (1.0 - u) / (n as f64 * u * r);
        let cov = DMatrix::from_fn(n, n, |i, j| between + if i == j { 1.0 / r } else { 0.0 });
        Support::Gaussian { mean: vec![m; n], cov }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == self.n && x.iter().all(|v| v.is_finite())
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (m, r, u) = (theta[0], theta[1], theta[2]);
        let n = self.n as f64;
        let ybar = x.iter().sum::<f64>() / n;
        let within: f64 = x.iter().map(|v| (v - ybar).powi(2)).sum();
        -0.5 * n * LN_2PI + 0.5 * n * r.ln() + 0.5 * u.ln() - 0.5 * r * (n * u * (ybar - m).powi(2) + within)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let (m, r, u) = (theta[0], theta[1], theta[2]);
        let sa = ((1.0 - u) / (self.n as f64 * u * r)).sqrt();
        let se = (1.0 / r).sqrt();
        let alpha = sa * normal(rng);
        (0..self.n).map(|_| m + alpha + se * normal(rng)).collect()
    }
    fn anchor(&self) -> Vec<f64> {
        vec![0.0, 1.0, 0.5]
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let (r, u) = (theta[1], theta[2]);
        let n = self.n as f64;
        let ru = 0.5 / (r * u);
        Some(DMatrix::from_row_slice(
            3,
            3,
            &[n * r * u, 0.0, 0.0, 0.0, n / (2.0 * r * r), ru, 0.0, ru, 1.0 / (2.0 * u * u)],
        ))
    }
}

// ----------------------------------------------------------------------------

/// Gamma with mean μ and shape λ: f = (λ/μ)^λ y^{λ−1} e^{−λy/μ} / Γ(λ).
pub struct GammaMean {
    space: ParameterSpace,
}

impl GammaMean {
    pub fn new() -> Self {
        GammaMean { space: space(vec![Interval::positive(), Interval::positive()]) }
    }
}

impl Default for GammaMean {
    fn default() -> Self {
        Self::new()
    }
}

impl FamilyDef for GammaMean {
    fn id(&self) -> String {
        "gamma_mean".into()
    }
    fn description(&self) -> String {
        "gamma with mean μ and shape λ".into()
    }
    fn space(&self) -> &ParameterSpace {
        &self.space
    }
    fn param_names(&self) -> Vec<String> {
        vec!["mu".into(), "lambda".into()]
    }
    fn kind(&self) -> ObservationKind {
        ObservationKind::Continuous
    }
    fn support(&self, theta: &[f64]) -> Support {
        let (mu, l) = (theta[0], theta[1]);
        Support::Interval { lower: 0.0, upper: f64::INFINITY, center: mu, scale: mu / l.sqrt() }
    }
    fn in_support(&self, x: &[f64]) -> bool {
        x.len() == 1 && x[0] > 0.0 && x[0].is_finite()
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        let (y, mu, l) = (x[0], theta[0], theta[1]);
        l * (l / mu).ln() + (l - 1.0) * y.ln() - l * y / mu - ln_gamma(l)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let (mu, l) = (theta[0], theta[1]);
        let d = rand_distr::Gamma::new(l, mu / l).expect("positive shape and scale");
        vec![d.sample(rng).max(f64::MIN_POSITIVE)]
    }
    fn anchor(&self) -> Vec<f64> {
        vec![1.0, 1.0]
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        let (y, mu, l) = (x[0], theta[0], theta[1]);
        Some(match (orders[0], orders[1]) {
            (0, 0) => self.log_density(x, theta),
            (1, 0) => -l / mu + l * y / (mu * mu),
            (2, 0) => l / (mu * mu) - 2.0 * l * y / mu.powi(3),
            (3, 0) => -2.0 * l / mu.powi(3) + 6.0 * l * y / mu.powi(4),
            (0, 1) => l.ln() + 1.0 - mu.ln() + y.ln() - y / mu - digamma(l),
            (0, 2) => 1.0 / l - trigamma(l),
            (0, 3) => -1.0 / (l * l) - tetragamma(l),
            (1, 1) => -1.0 / mu + y / (mu * mu),
            (2, 1) => 1.0 / (mu * mu) - 2.0 * y / mu.powi(3),
            (1, 2) => 0.0,
            _ => return None,
        })
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let (mu, l) = (theta[0], theta[1]);
        Some(DMatrix::from_row_slice(2, 2, &[l / (mu * mu), 0.0, 0.0, trigamma(l) - 1.0 / l]))
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        let (n, xbar, ss) = sums(data);
        let var = (ss / n).max(1e-12);
        vec![xbar.max(1e-8), (xbar * xbar / var).max(1e-3)]
    }
}
