//! Coordinate changes θ = inverse(φ) and families re-expressed in φ.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;

use super::{logistic, FamilyDef, FamilyModel, LoglikKernel, ObservationKind, ParameterSpace, Support};
use crate::error::{Error, Result};
use crate::numeric::diff;

pub type VecMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// θ′(φ), θ″(φ), θ‴(φ), θ⁗(φ) for a scalar transform.
pub type InverseDerivs = Arc<dyn Fn(f64) -> [f64; 4] + Send + Sync>;

/// A smooth bijection between the original θ-space and a new φ-space.
#[derive(Clone)]
pub struct Transform {
    pub name: String,
    /// θ ↦ φ
    pub forward: VecMap,
    /// φ ↦ θ
    pub inverse: VecMap,
    pub target_space: ParameterSpace,
    pub inverse_derivs: Option<InverseDerivs>,
}

impl Transform {
    pub fn new(name: &str, forward: VecMap, inverse: VecMap, target_space: ParameterSpace) -> Self {
        Transform { name: name.into(), forward, inverse, target_space, inverse_derivs: None }
    }

    pub fn identity(space: ParameterSpace) -> Self {
        Transform::new("identity", Arc::new(|t: &[f64]| t.to_vec()), Arc::new(|t: &[f64]| t.to_vec()), space)
            .with_inverse_derivs(Arc::new(|_| [1.0, 0.0, 0.0, 0.0]))
    }

    /// p ∈ (0,1) ↦ logit p.
    pub fn logit() -> Self {
        Transform::new(
            "logit",
            Arc::new(|t: &[f64]| vec![t[0].ln() - (-t[0]).ln_1p()]),
            Arc::new(|f: &[f64]| vec![logistic(f[0])]),
            ParameterSpace::new(vec![super::Interval::real()]).expect("valid"),
        )
        .with_inverse_derivs(Arc::new(|f: f64| {
            let p = logistic(f);
            let q = p * (1.0 - p);
            let t2 = q * (1.0 - 2.0 * p);
            [q, t2, q * (1.0 - 6.0 * q), t2 * (1.0 - 12.0 * q)]
        }))
    }

    /// logit p ↦ p (the inverse of [`Transform::logit`]).
    pub fn logistic() -> Self {
        Transform::new(
            "logistic",
            Arc::new(|f: &[f64]| vec![logistic(f[0])]),
            Arc::new(|t: &[f64]| vec![t[0].ln() - (-t[0]).ln_1p()]),
            ParameterSpace::new(vec![super::Interval::unit()]).expect("valid"),
        )
        .with_inverse_derivs(Arc::new(|p: f64| {
            let q = 1.0 - p;
            [
                1.0 / p + 1.0 / q,
                -1.0 / (p * p) + 1.0 / (q * q),
                2.0 / p.powi(3) + 2.0 / q.powi(3),
                -6.0 / p.powi(4) + 6.0 / q.powi(4),
            ]
        }))
    }

    /// λ > 0 ↦ log λ.
    pub fn log() -> Self {
        Transform::new(
            "log",
            Arc::new(|t: &[f64]| vec![t[0].ln()]),
            Arc::new(|f: &[f64]| vec![f[0].exp()]),
            ParameterSpace::new(vec![super::Interval::real()]).expect("valid"),
        )
        .with_inverse_derivs(Arc::new(|f: f64| {
            let e = f.exp();
            [e; 4]
        }))
    }

    /// log λ ↦ λ (the inverse of [`Transform::log`]).
    pub fn exp() -> Self {
        Transform::new(
            "exp",
            Arc::new(|t: &[f64]| vec![t[0].exp()]),
            Arc::new(|f: &[f64]| vec![f[0].ln()]),
            ParameterSpace::new(vec![super::Interval::positive()]).expect("valid"),
        )
        .with_inverse_derivs(Arc::new(|f: f64| [1.0 / f, -1.0 / (f * f), 2.0 / f.powi(3), -6.0 / f.powi(4)]))
    }

    pub fn with_inverse_derivs(mut self, d: InverseDerivs) -> Self {
        self.inverse_derivs = Some(d);
        self
    }

    pub fn to_original(&self, phi: &[f64]) -> Vec<f64> {
        (self.inverse)(phi)
    }

    /// log |det ∂θ/∂φ| at φ.
    pub fn log_abs_jacobian(&self, phi: &[f64]) -> Result<f64> {
        let d = phi.len();
        if d == 1 {
            if let Some(dd) = &self.inverse_derivs {
                return Ok(dd(phi[0])[0].abs().ln());
            }
        }
        let mut jac = DMatrix::zeros(d, d);
        for c in 0..d {
            let mut orders = vec![0; d];
            orders[c] = 1;
            let steps = diff::default_steps(phi, &orders);
            for r in 0..d {
                let e = diff::partial(|p: &[f64]| Ok((self.inverse)(p)[r]), phi, &orders, &steps)?;
                jac[(r, c)] = e.value;
            }
        }
        let det = jac.determinant();
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::Precondition(format!("transform `{}` has singular Jacobian at {phi:?}", self.name)));
        }
        Ok(det.abs().ln())
    }
}

/// `base` re-expressed in φ-coordinates through `transform`.
pub struct Reparameterized {
    id: String,
    base: FamilyModel,
    t: Transform,
    names: Vec<String>,
}

impl Reparameterized {
    pub fn new(base: FamilyModel, t: Transform) -> Self {
        let id = format!("{}@{}", base.id(), t.name);
        let names = (0..t.target_space.dim()).map(|i| format!("phi{i}")).collect();
        Reparameterized { id, base, t, names }
    }
}

/// Faà di Bruno up to fourth order for a scalar chain θ(φ).
fn chain(l: &[f64; 4], t: &[f64; 4], k: usize) -> f64 {
    let [l1, l2, l3, l4] = *l;
    let [t1, t2, t3, t4] = *t;
    match k {
        1 => l1 * t1,
        2 => l2 * t1 * t1 + l1 * t2,
        3 => l3 * t1.powi(3) + 3.0 * l2 * t1 * t2 + l1 * t3,
        4 => l4 * t1.powi(4) + 6.0 * l3 * t1 * t1 * t2 + l2 * (3.0 * t2 * t2 + 4.0 * t1 * t3) + l1 * t4,
        _ => unreachable!(),
    }
}

impl FamilyDef for Reparameterized {
    fn id(&self) -> String {
        self.id.clone()
    }
    fn description(&self) -> String {
        format!("{} in `{}` coordinates", self.base.description(), self.t.name)
    }
    fn space(&self) -> &ParameterSpace {
        &self.t.target_space
    }
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }
    fn kind(&self) -> ObservationKind {
        self.base.kind()
    }
    fn support(&self, phi: &[f64]) -> Support {
        self.base.def().support(&self.t.to_original(phi))
    }
    fn in_support(&self, x: &[f64]) -> bool {
        self.base.def().in_support(x)
    }
    fn log_density(&self, x: &[f64], phi: &[f64]) -> f64 {
        self.base.def().log_density(x, &self.t.to_original(phi))
    }
    fn sample(&self, phi: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.base.sample(&self.t.to_original(phi), rng)
    }
    fn anchor(&self) -> Vec<f64> {
        (self.t.forward)(&self.base.anchor())
    }
    fn analytic_partial(&self, x: &[f64], phi: &[f64], orders: &[usize]) -> Option<f64> {
        if phi.len() != 1 {
            return None;
        }
        let d = self.t.inverse_derivs.as_ref()?;
        let k = orders[0];
        let theta = self.t.to_original(phi);
        if k == 0 {
            return Some(self.base.def().log_density(x, &theta));
        }
        let mut l = [0.0; 4];
        for (i, v) in l.iter_mut().enumerate().take(k) {
            *v = self.base.def().analytic_partial(x, &theta, &[i + 1])?;
        }
        Some(chain(&l, &d(phi[0]), k))
    }
    fn exact_fisher(&self, phi: &[f64]) -> Option<DMatrix<f64>> {
        if phi.len() != 1 {
            return None;
        }
        let d = self.t.inverse_derivs.as_ref()?;
        let i = self.base.def().exact_fisher(&self.t.to_original(phi))?;
        let t1 = d(phi[0])[0];
        Some(i * (t1 * t1))
    }
    fn initial_guess(&self, data: &[Vec<f64>]) -> Vec<f64> {
        (self.t.forward)(&self.base.initial_guess(data))
    }
    fn loglik_kernel(&self, data: &[Vec<f64>]) -> Option<LoglikKernel> {
        let k = self.base.loglik_kernel(data);
        let inv = self.t.inverse.clone();
        Some(Box::new(move |phi: &[f64]| k(&inv(phi))))
    }
}

impl FamilyModel {
    /// This family in the coordinates of `t`.
    pub fn reparameterized(&self, t: Transform) -> FamilyModel {
        FamilyModel::new(Reparameterized::new(self.clone(), t))
    }
}
