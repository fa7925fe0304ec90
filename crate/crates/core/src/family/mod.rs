//! Parametric families: densities, derivative bundles, expectations and
//! Fisher information.

pub mod catalog;
mod expectation;
pub mod transform;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::diff::{self, Estimate};

/// Evaluation points closer than this to a finite endpoint are rejected.
pub const BOUNDARY_MARGIN: f64 = 1e-8;

/// Open interval (lower, upper); either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }
    pub fn real() -> Self {
        Interval::new(f64::NEG_INFINITY, f64::INFINITY)
    }
    pub fn positive() -> Self {
        Interval::new(0.0, f64::INFINITY)
    }
    pub fn unit() -> Self {
        Interval::new(0.0, 1.0)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    /// Distance from `x` to the nearer endpoint (infinite for ℝ).
    pub fn distance_to_boundary(&self, x: f64) -> f64 {
        (x - self.lower).min(self.upper - x)
    }

    pub fn coord(&self) -> CoordMap {
        match (self.lower.is_finite(), self.upper.is_finite()) {
            (false, false) => CoordMap::Real,
            (true, false) => CoordMap::Lower(self.lower),
            (false, true) => CoordMap::Upper(self.upper),
            (true, true) => CoordMap::Bounded(self.lower, self.upper),
        }
    }
}

/// Smooth bijection between an interval and ℝ (log, logit, or identity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordMap {
    Real,
    Lower(f64),
    Upper(f64),
    Bounded(f64, f64),
}

impl CoordMap {
    pub fn to_real(&self, x: f64) -> f64 {
        match *self {
            CoordMap::Real => x,
            CoordMap::Lower(a) => (x - a).ln(),
            CoordMap::Upper(b) => -(b - x).ln(),
            CoordMap::Bounded(a, b) => {
                let p = (x - a) / (b - a);
                p.ln() - (-p).ln_1p()
            }
        }
    }

    pub fn from_real(&self, v: f64) -> f64 {
        match *self {
            CoordMap::Real => v,
            CoordMap::Lower(a) => a + v.exp(),
            CoordMap::Upper(b) => b - (-v).exp(),
            CoordMap::Bounded(a, b) => a + (b - a) * logistic(v),
        }
    }

    /// log |dx/dv| at v.
    pub fn log_jacobian(&self, v: f64) -> f64 {
        match *self {
            CoordMap::Real => 0.0,
            CoordMap::Lower(_) => v,
            CoordMap::Upper(_) => -v,
            CoordMap::Bounded(a, b) => (b - a).ln() - softplus(v) - softplus(-v),
        }
    }

    /// Equally spaced points in the transformed coordinate, mapped back.
    pub fn grid(&self, points: usize) -> Vec<f64> {
        let (lo, hi, center) = match *self {
            CoordMap::Real => (-4.0, 4.0, 0.0),
            CoordMap::Bounded(..) => (-4.0, 4.0, 0.0),
            CoordMap::Lower(a) | CoordMap::Upper(a) => (-2.0, 2.0, a),
        };
        (0..points)
            .map(|i| {
                let z = if points == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
                match *self {
                    CoordMap::Real => center + z,
                    _ => self.from_real(z),
                }
            })
            .collect()
    }
}

pub fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Product of open intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSpace {
    boxes: Vec<Interval>,
}

impl ParameterSpace {
    pub fn new(boxes: Vec<Interval>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::Precondition("parameter space needs at least one coordinate".into()));
        }
        for (j, b) in boxes.iter().enumerate() {
            if !(b.lower < b.upper) {
                return Err(Error::Precondition(format!("coordinate {j}: lower {} is not below upper {}", b.lower, b.upper)));
            }
        }
        Ok(ParameterSpace { boxes })
    }

    pub fn dim(&self) -> usize {
        self.boxes.len()
    }

    pub fn boxes(&self) -> &[Interval] {
        &self.boxes
    }

    pub fn coord(&self, j: usize) -> CoordMap {
        self.boxes[j].coord()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim() && theta.iter().zip(&self.boxes).all(|(&t, b)| b.contains(t))
    }

    /// Reject points outside the space (no margin; for closed-form evaluations).
    pub fn check_inside(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Domain(format!("expected {} coordinates, got {}", self.dim(), theta.len())));
        }
        for (j, (&t, b)) in theta.iter().zip(&self.boxes).enumerate() {
            if !t.is_finite() || !b.contains(t) {
                return Err(Error::Domain(format!("coordinate {j} = {t} lies outside ({}, {})", b.lower, b.upper)));
            }
        }
        Ok(())
    }

    /// Reject points outside the space or within [`BOUNDARY_MARGIN`] of it.
    pub fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Domain(format!("expected {} coordinates, got {}", self.dim(), theta.len())));
        }
        for (j, (&t, b)) in theta.iter().zip(&self.boxes).enumerate() {
            if !t.is_finite() || !b.contains(t) {
                return Err(Error::Domain(format!("coordinate {j} = {t} lies outside ({}, {})", b.lower, b.upper)));
            }
            if b.distance_to_boundary(t) < BOUNDARY_MARGIN {
                return Err(Error::BoundaryProximity(format!(
                    "coordinate {j} = {t} is within {BOUNDARY_MARGIN:e} of the boundary of ({}, {})",
                    b.lower, b.upper
                )));
            }
        }
        Ok(())
    }

    /// Product grid with `per_coord` points in each coordinate.
    pub fn grid(&self, per_coord: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self.boxes.iter().map(|b| b.coord().grid(per_coord)).collect();
        product_grid(&axes)
    }
}

/// Cartesian product of coordinate axes, last coordinate varying fastest.
pub fn product_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Discrete,
    Continuous,
}

/// Sample space of one observation at a given θ.
#[derive(Debug, Clone)]
pub enum Support {
    /// Finitely many scalar outcomes.
    Finite(Vec<f64>),
    /// start, start+1, …; `mode` locates the bulk so the tail rule can kick in.
    Lattice { start: f64, mode: f64 },
    /// Scalar interval with a location/scale hint for the quadrature map.
    Interval { lower: f64, upper: f64, center: f64, scale: f64 },
    /// Vector observation that is exactly N(mean, cov) under θ.
    Gaussian { mean: Vec<f64>, cov: DMatrix<f64> },
}

/// Log-likelihood specialised to one data set (typically via sufficient statistics).
pub type LoglikKernel = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// What a family must provide. Everything downstream goes through [`FamilyModel`].
pub trait FamilyDef: Send + Sync {
    fn id(&self) -> String;
    fn description(&self) -> String;
    fn space(&self) -> &ParameterSpace;
    fn param_names(&self) -> Vec<String>;
    fn kind(&self) -> ObservationKind;
    fn support(&self, theta: &[f64]) -> Support;
    fn in_support(&self, x: &[f64]) -> bool;
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64;
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
    fn anchor(&self) -> Vec<f64>;

    /// ∂^{orders} log f(x|θ), when known in closed form.
    fn analytic_partial(&self, _x: &[f64], _theta: &[f64], _orders: &[usize]) -> Option<f64> {
        None
    }
    fn exact_fisher(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    fn exact_g3(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
    /// Diagonal of I(θ) when I is known to be diagonal; lets huge families skip dense algebra.
    fn exact_fisher_diagonal(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }
    fn interest_index(&self) -> usize {
        0
    }
    fn initial_guess(&self, _data: &[Vec<f64>]) -> Vec<f64> {
        self.anchor()
    }
    fn loglik_kernel(&self, _data: &[Vec<f64>]) -> Option<LoglikKernel> {
        None
    }
    fn diagnostic_grid(&self) -> Vec<Vec<f64>> {
        let per = if self.space().dim() == 1 { 33 } else { 7 };
        self.space().grid(per)
    }
}

struct WithInterest {
    inner: Arc<dyn FamilyDef>,
    interest: usize,
}

impl FamilyDef for WithInterest {
    fn id(&self) -> String {
        self.inner.id()
    }
    fn description(&self) -> String {
        self.inner.description()
    }
    fn space(&self) -> &ParameterSpace {
        self.inner.space()
    }
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names()
    }
    fn kind(&self) -> ObservationKind {
        self.inner.kind()
    }
    fn support(&self, theta: &[f64]) -> Support {
        self.inner.support(theta)
    }
    fn in_support(&self, x: &[f64]) -> bool {
        self.inner.in_support(x)
    }
    fn log_density(&self, x: &[f64], theta: &[f64]) -> f64 {
        self.inner.log_density(x, theta)
    }
    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.inner.sample(theta, rng)
    }
    fn anchor(&self) -> Vec<f64> {
        self.inner.anchor()
    }
    fn analytic_partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Option<f64> {
        self.inner.analytic_partial(x, theta, orders)
    }
    fn exact_fisher(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        self.inner.exact_fisher(theta)
    }
    fn exact_g3(&self, theta: &[f64]) -> Option<f64> {
        if self.interest == self.inner.interest_index() {
            self.inner.exact_g3(theta)
        } else {
            None
        }
    }
    fn exact_fisher_diagonal(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self.inner.exact_fisher_diagonal(theta)
    }
    fn interest_index(&self) -> usize {
        self.interest
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        self.inner.initial_guess(data)
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        self.inner.loglik_kernel(data)
    }
    fn diagnostic_grid(&self) -> Vec<Vec<f64>> {
        self.inner.diagnostic_grid()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMethod {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialEntry {
    /// Derivative order in each coordinate.
    pub orders: Vec<usize>,
    pub value: f64,
    pub error: f64,
}

/// Log-density derivatives at one observation.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeBundle {
    pub point: Vec<f64>,
    pub method: DerivativeMethod,
    pub entries: Vec<PartialEntry>,
}

impl DerivativeBundle {
    pub fn get(&self, orders: &[usize]) -> Option<&PartialEntry> {
        self.entries.iter().find(|e| e.orders == orders)
    }

    /// d^k ℓ/dθ^k for a scalar parameter.
    pub fn scalar(&self, k: usize) -> Option<f64> {
        self.get(&[k]).map(|e| e.value)
    }
}

/// A parametric family with checked evaluation, derivative and expectation operations.
#[derive(Clone)]
pub struct FamilyModel {
    def: Arc<dyn FamilyDef>,
}

impl std::fmt::Debug for FamilyModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FamilyModel").field("id", &self.id()).field("dim", &self.dim()).finish()
    }
}

impl FamilyModel {
    pub fn new<D: FamilyDef + 'static>(def: D) -> Self {
        FamilyModel { def: Arc::new(def) }
    }

    pub fn def(&self) -> &dyn FamilyDef {
        self.def.as_ref()
    }

    pub fn id(&self) -> String {
        self.def.id()
    }
    pub fn description(&self) -> String {
        self.def.description()
    }
    pub fn space(&self) -> &ParameterSpace {
        self.def.space()
    }
    pub fn dim(&self) -> usize {
        self.space().dim()
    }
    pub fn param_names(&self) -> Vec<String> {
        self.def.param_names()
    }
    pub fn kind(&self) -> ObservationKind {
        self.def.kind()
    }
    pub fn anchor(&self) -> Vec<f64> {
        self.def.anchor()
    }
    pub fn interest_index(&self) -> usize {
        self.def.interest_index()
    }
    pub fn diagnostic_grid(&self) -> Vec<Vec<f64>> {
        self.def.diagnostic_grid()
    }

    /// Same family with a different parameter of interest.
    pub fn with_interest(&self, interest: usize) -> Result<FamilyModel> {
        if interest >= self.dim() {
            return Err(Error::Precondition(format!("interest index {interest} out of range for dimension {}", self.dim())));
        }
        Ok(FamilyModel { def: Arc::new(WithInterest { inner: self.def.clone(), interest }) })
    }

    pub fn has_exact_fisher(&self) -> bool {
        self.def.exact_fisher(&self.anchor()).is_some()
    }
    pub fn has_exact_g3(&self) -> bool {
        self.def.exact_g3(&self.anchor()).is_some()
    }

    pub fn check_point(&self, theta: &[f64]) -> Result<()> {
        self.space().check(theta)
    }

    pub fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.def.sample(theta, rng)
    }

    pub fn log_density(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check_point(theta)?;
        if !self.def.in_support(x) {
            return Err(Error::Domain(format!("observation {x:?} is outside the support of {}", self.id())));
        }
        let v = self.def.log_density(x, theta);
        if !v.is_finite() {
            return Err(Error::Domain(format!("log-density not finite at x = {x:?}, θ = {theta:?}")));
        }
        Ok(v)
    }

    /// ∂^{orders} log f(x|θ): analytic when available, else finite differences.
    pub fn partial(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> Result<Estimate> {
        if orders.len() != self.dim() {
            return Err(Error::Precondition(format!("orders {orders:?} do not match dimension {}", self.dim())));
        }
        if let Some(v) = self.def.analytic_partial(x, theta, orders) {
            return Ok(Estimate { value: v, error: 0.0 });
        }
        self.fd_partial(|t| Ok(self.def.log_density(x, t)), theta, orders)
    }

    /// Finite-difference mixed partial of `f` with the boundary-proximity check.
    pub fn fd_partial<F: Fn(&[f64]) -> Result<f64>>(&self, f: F, theta: &[f64], orders: &[usize]) -> Result<Estimate> {
        let steps = diff::default_steps(theta, orders);
        for (j, b) in self.space().boxes().iter().enumerate() {
            if orders[j] == 0 {
                continue;
            }
            let need = diff::reach(orders[j]) * steps[j];
            if b.distance_to_boundary(theta[j]) <= need {
                return Err(Error::BoundaryProximity(format!(
                    "coordinate {j} = {} is closer than {need:e} to the boundary; finite differences need 4 steps",
                    theta[j]
                )));
            }
        }
        diff::partial(f, theta, orders, &steps)
    }

    fn uses_analytic(&self, x: &[f64], theta: &[f64], orders: &[usize]) -> bool {
        self.def.analytic_partial(x, theta, orders).is_some()
    }

    /// Derivative bundle up to `order` (1..=4). Scalar θ: d^iℓ/dθ^i. Vector θ:
    /// gradient, Hessian (i ≤ j), and for order ≥ 3 the entries ∂³/∂θ_r²∂θ_s
    /// where r is the interest coordinate.
    pub fn derivatives(&self, x: &[f64], theta: &[f64], order: usize) -> Result<DerivativeBundle> {
        if !(1..=4).contains(&order) {
            return Err(Error::Precondition(format!("derivative order {order} must be in 1..=4")));
        }
        self.check_point(theta)?;
        if !self.def.in_support(x) {
            return Err(Error::Domain(format!("observation {x:?} is outside the support of {}", self.id())));
        }
        let d = self.dim();
        let mut wanted: Vec<Vec<usize>> = Vec::new();
        if d == 1 {
            for k in 1..=order {
                wanted.push(vec![k]);
            }
        } else {
            for i in 0..d {
                wanted.push(unit_orders(d, &[i]));
            }
            if order >= 2 {
                for i in 0..d {
                    for j in i..d {
                        wanted.push(unit_orders(d, &[i, j]));
                    }
                }
            }
            if order >= 3 {
                let r = self.interest_index();
                for s in 0..d {
                    wanted.push(unit_orders(d, &[r, r, s]));
                }
            }
            if order >= 4 {
                let r = self.interest_index();
                wanted.push(unit_orders(d, &[r, r, r, r]));
            }
        }
        let mut entries = Vec::with_capacity(wanted.len());
        let mut analytic = true;
        for o in wanted {
            analytic &= self.uses_analytic(x, theta, &o);
            let e = self.partial(x, theta, &o)?;
            entries.push(PartialEntry { orders: o, value: e.value, error: e.error });
        }
        Ok(DerivativeBundle {
            point: theta.to_vec(),
            method: if analytic { DerivativeMethod::Analytic } else { DerivativeMethod::FiniteDifference },
            entries,
        })
    }

    /// E_θ[g(X)] for a vector-valued g of length `dim`.
    pub fn expect<G>(&self, theta: &[f64], dim: usize, g: G) -> Result<Vec<f64>>
    where
        G: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        self.expect_with_noise(theta, dim, 0.0, g)
    }

    /// As [`FamilyModel::expect`], for an integrand with the given relative noise level.
    pub fn expect_with_noise<G>(&self, theta: &[f64], dim: usize, noise: f64, g: G) -> Result<Vec<f64>>
    where
        G: FnMut(&[f64], &mut [f64]) -> Result<()>,
    {
        self.check_point(theta)?;
        expectation::expect(self.def.as_ref(), theta, dim, noise, g)
    }

    /// Relative round-off noise of the log-density partials `orders` at θ:
    /// zero when analytic, about ε^{2/(k+2)} for a finite difference of order k.
    pub fn partial_noise(&self, theta: &[f64], orders: &[Vec<usize>]) -> f64 {
        let probe = expectation::support_probe(&self.def.support(theta));
        orders
            .iter()
            .filter(|o| self.def.analytic_partial(&probe, theta, o).is_none())
            .map(|o| {
                let k: usize = o.iter().sum();
                10.0 * f64::EPSILON.powf(2.0 / (k as f64 + 2.0))
            })
            .fold(0.0, f64::max)
    }

    /// E_θ[∂^{o} log f] for each multi-index in `orders`.
    pub fn expected_partials(&self, theta: &[f64], orders: &[Vec<usize>]) -> Result<Vec<f64>> {
        let noise = self.partial_noise(theta, orders);
        self.expect_with_noise(theta, orders.len(), noise, |x, out| {
            for (k, o) in orders.iter().enumerate() {
                out[k] = self.partial(x, theta, o)?.value;
            }
            Ok(())
        })
    }

    /// Fisher information, from the closed form when the catalog has one.
    pub fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.space().check_inside(theta)?;
        if let Some(m) = self.def.exact_fisher(theta) {
            return Ok(m);
        }
        self.check_point(theta)?;
        self.fisher_information_numeric(theta)
    }

    /// Fisher information as E[−∂²ℓ] from the expectation engine.
    pub fn fisher_information_numeric(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut idx = Vec::new();
        for i in 0..d {
            for j in i..d {
                idx.push(unit_orders(d, &[i, j]));
            }
        }
        let vals = self.expected_partials(theta, &idx)?;
        let mut m = DMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                m[(i, j)] = -vals[k];
                m[(j, i)] = -vals[k];
                k += 1;
            }
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::Conditioning(format!(
                "numerical Fisher information at θ = {theta:?} is not positive definite: {:?}",
                m.as_slice()
            )));
        }
        Ok(m)
    }

    /// log det I(θ); uses the diagonal fast path when available.
    pub fn log_det_fisher(&self, theta: &[f64]) -> Result<f64> {
        self.space().check_inside(theta)?;
        if let Some(diag) = self.def.exact_fisher_diagonal(theta) {
            return Ok(diag.iter().map(|v| v.ln()).sum());
        }
        let m = self.fisher_information(theta)?;
        let ch = m.clone().cholesky().ok_or_else(|| {
            Error::Conditioning(format!("Fisher information at θ = {theta:?} is not positive definite"))
        })?;
        Ok(2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
    }

    /// Schur complement I₁₁.₂ for the interest coordinate.
    pub fn fisher_schur(&self, theta: &[f64]) -> Result<f64> {
        let d = self.dim();
        if d < 2 {
            return Err(Error::Precondition("Schur complement needs at least two parameters".into()));
        }
        let r = self.interest_index();
        if let Some(diag) = self.def.exact_fisher_diagonal(theta) {
            self.check_point(theta)?;
            return Ok(diag[r]);
        }
        let m = self.fisher_information(theta)?;
        schur_complement(&m, r)
    }

    /// g₃ = E[−∂³ℓ/∂θ_r³] for the interest coordinate r.
    pub fn g3(&self, theta: &[f64]) -> Result<f64> {
        self.check_point(theta)?;
        if let Some(v) = self.def.exact_g3(theta) {
            return Ok(v);
        }
        self.g3_numeric(theta)
    }

    pub fn g3_numeric(&self, theta: &[f64]) -> Result<f64> {
        let r = self.interest_index();
        let o = unit_orders(self.dim(), &[r, r, r]);
        Ok(-self.expected_partials(theta, &[o])?[0])
    }

    /// E[(∂ℓ/∂θ_r)³] for the interest coordinate r.
    pub fn score_cube_expectation(&self, theta: &[f64]) -> Result<f64> {
        let r = self.interest_index();
        let o = unit_orders(self.dim(), &[r]);
        let noise = 3.0 * self.partial_noise(theta, std::slice::from_ref(&o));
        let v = self.expect_with_noise(theta, 1, noise, |x, out| {
            let s = self.partial(x, theta, &o)?.value;
            out[0] = s * s * s;
            Ok(())
        })?;
        Ok(v[0])
    }

    /// dI/dθ for a scalar family, by central differences of the Fisher information.
    pub fn fisher_derivative(&self, theta: f64) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::Precondition("fisher_derivative needs a scalar parameter".into()));
        }
        let e = self.fd_partial(|t| Ok(self.fisher_information(t)?[(0, 0)]), &[theta], &[1])?;
        Ok(e.value)
    }

    /// Log-likelihood of a data set.
    pub fn log_likelihood(&self, data: &[Vec<f64>], theta: &[f64]) -> Result<f64> {
        self.check_point(theta)?;
        let mut s = 0.0;
        for x in data {
            s += self.log_density(x, theta)?;
        }
        Ok(s)
    }

    /// A fast log-likelihood closure for a fixed data set; θ is not checked.
    pub fn loglik_kernel(&self, data: &[Vec<f64>]) -> LoglikKernel {
        if let Some(k) = self.def.loglik_kernel(data) {
            return k;
        }
        let def = self.def.clone();
        let data = data.to_vec();
        Box::new(move |theta: &[f64]| data.iter().map(|x| def.log_density(x, theta)).sum())
    }

    pub fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        self.def.initial_guess(data)
    }
}

/// Multi-index with the given coordinates incremented by one each.
pub fn unit_orders(dim: usize, coords: &[usize]) -> Vec<usize> {
    let mut o = vec![0; dim];
    for &c in coords {
        o[c] += 1;
    }
    o
}

/// I_rr − I_r,rest I_rest,rest⁻¹ I_rest,r.
pub fn schur_complement(m: &DMatrix<f64>, r: usize) -> Result<f64> {
    let d = m.nrows();
    let rest: Vec<usize> = (0..d).filter(|&j| j != r).collect();
    let i22 = DMatrix::from_fn(rest.len(), rest.len(), |a, b| m[(rest[a], rest[b])]);
    let i21 = DMatrix::from_fn(rest.len(), 1, |a, _| m[(rest[a], r)]);
    let ch = i22
        .cholesky()
        .ok_or_else(|| Error::Conditioning("nuisance block of the Fisher information is singular".into()))?;
    let sol = ch.solve(&i21);
    let s = m[(r, r)] - (i21.transpose() * sol)[(0, 0)];
    if !(s > 0.0) {
        return Err(Error::Conditioning(format!("Schur complement {s} is not positive")));
    }
    Ok(s)
}
