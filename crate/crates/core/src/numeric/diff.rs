//! Central finite differences with one Richardson level.

use crate::error::{Error, Result};

/// A derivative estimate with an error bound from the Richardson pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Step for a central difference of order `order`: max(|x|,1)·ε^{1/(order+2)}.
pub fn fd_step(x: f64, order: usize) -> f64 {
    x.abs().max(1.0) * f64::EPSILON.powf(1.0 / (order as f64 + 2.0))
}

/// Offsets (in units of h) and weights of the second-order-accurate central stencil.
pub fn stencil(order: usize) -> &'static [(i32, f64)] {
    match order {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        4 => &[(-2, 1.0), (-1, -4.0), (0, 6.0), (1, -4.0), (2, 1.0)],
        _ => panic!("derivative order {order} not supported"),
    }
}

/// Largest offset, in base steps, touched by [`partial`] (the Richardson pair doubles the step).
pub fn reach(order: usize) -> f64 {
    match order {
        0 => 0.0,
        1 | 2 => 2.0,
        _ => 4.0,
    }
}

fn product_stencil<F>(f: &F, x: &[f64], orders: &[usize], steps: &[f64]) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let active: Vec<usize> = (0..x.len()).filter(|&j| orders[j] > 0).collect();
    let stencils: Vec<&[(i32, f64)]> = active.iter().map(|&j| stencil(orders[j])).collect();
    let mut idx = vec![0usize; active.len()];
    let mut sum = 0.0;
    let mut mag = 0.0;
    let mut pt = x.to_vec();
    loop {
        let mut w = 1.0;
        for (a, &j) in active.iter().enumerate() {
            let (off, wt) = stencils[a][idx[a]];
            pt[j] = x[j] + off as f64 * steps[j];
            w *= wt;
        }
        if w != 0.0 {
            let v = f(&pt)?;
            if !v.is_finite() {
                return Err(Error::Domain(format!("non-finite value in finite-difference stencil at {pt:?}")));
            }
            sum += w * v;
            mag += (w * v).abs();
        }
        let mut carry = true;
        for a in 0..active.len() {
            if !carry {
                break;
            }
            idx[a] += 1;
            if idx[a] == stencils[a].len() {
                idx[a] = 0;
            } else {
                carry = false;
            }
        }
        if carry {
            break;
        }
    }
    let denom: f64 = active.iter().map(|&j| steps[j].powi(orders[j] as i32)).product();
    Ok((sum / denom, mag * f64::EPSILON / denom))
}

/// Mixed partial ∂^{orders} f at `x` with the given base steps and one Richardson level.
pub fn partial<F>(f: F, x: &[f64], orders: &[usize], steps: &[f64]) -> Result<Estimate>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    assert_eq!(x.len(), orders.len());
    assert_eq!(x.len(), steps.len());
    if orders.iter().all(|&k| k == 0) {
        return Ok(Estimate { value: f(x)?, error: 0.0 });
    }
    // Pair h with 2h: the extrapolation keeps the round-off level of the base step.
    let (d1, r1) = product_stencil(&f, x, orders, steps)?;
    let double: Vec<f64> = steps.iter().map(|h| 2.0 * h).collect();
    let (d2, r2) = product_stencil(&f, x, orders, &double)?;
    let value = (4.0 * d1 - d2) / 3.0;
    let error = (d2 - d1).abs() / 3.0 + 4.0 * (r1 + r2);
    Ok(Estimate { value, error })
}

/// Default steps for a mixed partial of total order `sum(orders)`.
pub fn default_steps(x: &[f64], orders: &[usize]) -> Vec<f64> {
    let total: usize = orders.iter().sum();
    x.iter().map(|&v| fd_step(v, total.max(1))).collect()
}

/// Derivative of order `order` of a scalar function.
pub fn derivative<F>(f: F, x: f64, order: usize, h: f64) -> Result<Estimate>
where
    F: Fn(f64) -> Result<f64>,
{
    partial(|p: &[f64]| f(p[0]), &[x], &[order], &[h])
}

/// Derivative for a function whose values carry relative noise `noise`, with the step
/// scaled to `length`, the distance over which f changes appreciably. The step
/// length·noise^{1/(order+4)} balances round-off against the Richardson-corrected
/// truncation error.
pub fn scaled_derivative<F>(f: F, x: f64, order: usize, length: f64, noise: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let h = length * noise.max(f64::EPSILON).powf(1.0 / (order as f64 + 4.0));
    Ok(derivative(f, x, order, h)?.value)
}

/// Derivative of a plain (infallible) scalar function with the default step.
pub fn derivative_plain<F: Fn(f64) -> f64>(f: F, x: f64, order: usize) -> Estimate {
    derivative(|t| Ok(f(t)), x, order, fd_step(x, order)).unwrap_or(Estimate { value: f64::NAN, error: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_of_exp() {
        for k in 1..=4 {
            let d = derivative_plain(f64::exp, 0.3, k);
            assert!((d.value - 0.3f64.exp()).abs() < 1e-4, "order {k}: {d:?}");
            assert!((d.value - 0.3f64.exp()).abs() < 10.0 * d.error + 1e-12, "order {k}: {d:?}");
        }
    }

    #[test]
    fn mixed_partial() {
        let f = |p: &[f64]| Ok(p[0].powi(2) * p[1].sin());
        let x = [0.7, 0.4];
        let d = partial(f, &x, &[2, 1], &default_steps(&x, &[2, 1])).unwrap();
        assert!((d.value - 2.0 * 0.4f64.cos()).abs() < 1e-6);
    }
}
