use crate::error::{Error, Result};
use crate::numeric::quadrature::{hermite, integrate_vec, QuadOptions};

use super::{FamilyDef, Support};

const LATTICE_TAIL: f64 = 1e-12;
const LATTICE_MAX_TERMS: usize = 10_000_000;
const GH_NODES: usize = 7;
const GH_MAX_POINTS: usize = 200_000;

pub(super) fn expect<G>(def: &dyn FamilyDef, theta: &[f64], dim: usize, noise: f64, mut g: G) -> Result<Vec<f64>>
where
    G: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut buf = vec![0.0; dim];
    match def.support(theta) {
        Support::Finite(values) => {
            let mut acc = vec![0.0; dim];
            for x in values {
                let p = def.log_density(&[x], theta).exp();
                if p == 0.0 {
                    continue;
                }
                buf.iter_mut().for_each(|v| *v = 0.0);
                g(&[x], &mut buf)?;
                for j in 0..dim {
                    acc[j] += p * buf[j];
                }
            }
            Ok(acc)
        }
        Support::Lattice { start, mode } => {
            let mut acc = vec![0.0; dim];
            let mut prev = f64::INFINITY;
            for k in 0..LATTICE_MAX_TERMS {
                let x = start + k as f64;
                let p = def.log_density(&[x], theta).exp();
                let mut term = 0.0;
                if p > 0.0 {
                    buf.iter_mut().for_each(|v| *v = 0.0);
                    g(&[x], &mut buf)?;
                    for j in 0..dim {
                        let t = p * buf[j];
                        acc[j] += t;
                        term = f64::max(term, t.abs());
                    }
                }
                if x > mode + 1.0 && term <= prev {
                    let ratio = if prev.is_finite() && prev > 0.0 { term / prev } else { 0.0 };
                    // geometric bound on everything past this term
                    let tail = if ratio < 1.0 { term * ratio / (1.0 - ratio) } else { f64::INFINITY };
                    if term + tail < LATTICE_TAIL {
                        return Ok(acc);
                    }
                }
                prev = term;
            }
            Err(Error::Integration(format!("lattice sum did not reach the tail bound after {LATTICE_MAX_TERMS} terms")))
        }
        Support::Interval { lower, upper, center, scale } => {
            interval_expect(def, theta, dim, lower, upper, center, scale, noise, &mut g)
        }
        Support::Gaussian { mean, cov } => {
            let d = mean.len();
            let total = (GH_NODES as f64).powi(d as i32);
            if total > GH_MAX_POINTS as f64 {
                return Err(Error::Integration(format!(
                    "observation dimension {d} too large for the tensor Gauss–Hermite rule"
                )));
            }
            let chol = cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Conditioning("observation covariance is not positive definite".into()))?;
            let l = chol.l();
            let rule = hermite(GH_NODES);
            let mut idx = vec![0usize; d];
            let mut acc = vec![0.0; dim];
            let mut z = vec![0.0; d];
            let mut x = vec![0.0; d];
            loop {
                let mut w = 1.0;
                for a in 0..d {
                    z[a] = rule.nodes[idx[a]];
                    w *= rule.weights[idx[a]];
                }
                for a in 0..d {
                    let mut s = mean[a];
                    for b in 0..=a {
                        s += l[(a, b)] * z[b];
                    }
                    x[a] = s;
                }
                buf.iter_mut().for_each(|v| *v = 0.0);
                g(&x, &mut buf)?;
                for j in 0..dim {
                    acc[j] += w * buf[j];
                }
                let mut carry = true;
                for a in 0..d {
                    if !carry {
                        break;
                    }
                    idx[a] += 1;
                    if idx[a] == GH_NODES {
                        idx[a] = 0;
                    } else {
                        carry = false;
                    }
                }
                if carry {
                    break;
                }
            }
            Ok(acc)
        }
    }
}

/// Map t ∈ (−1,1) onto the support; returns (x, log dx/dt).
fn interval_map(lower: f64, upper: f64, center: f64, scale: f64) -> impl Fn(f64) -> (f64, f64) {
    let s = scale.abs().max(1e-300);
    move |t: f64| {
        let one_m = 1.0 - t * t;
        let u = t / one_m;
        let du = ((1.0 + t * t) / (one_m * one_m)).ln();
        match (lower.is_finite(), upper.is_finite()) {
            (false, false) => (center + s * u, s.ln() + du),
            (true, false) => {
                let wc = (center - lower).ln();
                let ws = (s / (center - lower)).max(0.5);
                let w = wc + ws * u;
                (lower + w.exp(), w + ws.ln() + du)
            }
            (false, true) => {
                let wc = (upper - center).ln();
                let ws = (s / (upper - center)).max(0.5);
                let w = wc + ws * u;
                (upper - w.exp(), w + ws.ln() + du)
            }
            (true, true) => {
                let half = 0.5 * (upper - lower);
                (lower + half * (1.0 + t), half.ln())
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn interval_expect<G>(
    def: &dyn FamilyDef,
    theta: &[f64],
    dim: usize,
    lower: f64,
    upper: f64,
    center: f64,
    scale: f64,
    noise: f64,
    g: &mut G,
) -> Result<Vec<f64>>
where
    G: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let map = interval_map(lower, upper, center, scale);
    let mut failure: Option<Error> = None;
    let opts = QuadOptions { initial_pieces: 8, noise, ..QuadOptions::default() };
    let res = integrate_vec(
        |t, out| {
            if failure.is_some() {
                return;
            }
            let (x, log_jac) = map(t);
            if !x.is_finite() || x <= lower || x >= upper {
                return;
            }
            let lw = def.log_density(&[x], theta) + log_jac;
            if !(lw > -745.0) {
                return;
            }
            let w = lw.exp();
            if let Err(e) = g(&[x], out) {
                failure = Some(e);
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            out.iter_mut().for_each(|v| *v *= w);
        },
        -1.0,
        1.0,
        dim,
        opts,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(res?.values)
}

/// A representative point of the support, used to probe for analytic partials.
pub(super) fn support_probe(support: &Support) -> Vec<f64> {
    match support {
        Support::Finite(v) => vec![v[v.len() / 2]],
        Support::Lattice { start, mode } => vec![(start + mode.floor().max(0.0)).max(*start)],
        Support::Interval { center, .. } => vec![*center],
        Support::Gaussian { mean, .. } => mean.clone(),
    }
}
