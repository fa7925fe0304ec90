//! One-dimensional maximization: bracketing, then Newton steps on finite-difference
//! derivatives, falling back to golden section whenever Newton leaves the bracket.

use crate::error::{Error, Result};

const GOLD: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Maximize `f` starting from `x0` with initial step `scale`.
///
/// `f` may return `-inf` outside its domain. If the function keeps rising
/// toward ±∞ the maximum is reported as lying on the boundary.
pub fn maximize<F: Fn(f64) -> f64>(f: F, x0: f64, scale: f64, max_iter: usize) -> Result<Maximum> {
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Optimization(format!("objective not finite at the starting point {x0}")));
    }
    let mut step = scale.abs().max(1e-8);
    let (mut a, mut m, mut b);
    let mut fm = f0;
    let fp = f(x0 + step);
    let fn_ = f(x0 - step);
    if fp <= f0 && fn_ <= f0 {
        a = x0 - step;
        b = x0 + step;
        m = x0;
    } else {
        let dir = if fp > fn_ { 1.0 } else { -1.0 };
        let mut prev = x0;
        m = x0 + dir * step;
        fm = if dir > 0.0 { fp } else { fn_ };
        let mut expansions = 0;
        loop {
            step *= 1.618;
            let next = m + dir * step;
            let fnext = f(next);
            if fnext < fm || fnext.is_nan() {
                if dir > 0.0 {
                    a = prev;
                    b = next;
                } else {
                    a = next;
                    b = prev;
                }
                break;
            }
            prev = m;
            m = next;
            fm = fnext;
            expansions += 1;
            if expansions > 200 || !m.is_finite() {
                return Err(Error::BoundaryMle(format!(
                    "objective increases without bound in direction {}",
                    if dir > 0.0 { "+" } else { "-" }
                )));
            }
        }
    }
    for it in 0..max_iter {
        let width = b - a;
        let tol = 1e-12 * (1.0 + m.abs());
        if width < 4.0 * tol {
            return Ok(Maximum { x: m, value: fm, iterations: it });
        }
        let h = (1e-4 * width).max(1e-6 * (1.0 + m.abs()).min(width)).min(0.25 * width.min(m - a).min(b - m).max(tol));
        let fph = f(m + h);
        let fmh = f(m - h);
        let g = (fph - fmh) / (2.0 * h);
        let hess = (fph - 2.0 * fm + fmh) / (h * h);
        let mut u = f64::NAN;
        let mut newton = false;
        if hess < 0.0 && g.is_finite() {
            let cand = m - g / hess;
            if cand > a && cand < b && (cand - m).abs() < 0.5 * width {
                u = cand;
                newton = true;
            }
        }
        if !newton {
            u = if b - m > m - a { m + GOLD * (b - m) } else { m - GOLD * (m - a) };
        }
        if newton && (u - m).abs() < tol {
            return Ok(Maximum { x: m, value: fm, iterations: it });
        }
        let fu = f(u);
        if fu >= fm {
            if u < m {
                b = m;
            } else {
                a = m;
            }
            m = u;
            fm = fu;
        } else if u < m {
            a = u;
        } else {
            b = u;
        }
    }
    Err(Error::Optimization(format!("no convergence after {max_iter} iterations (bracket [{a}, {b}])")))
}
