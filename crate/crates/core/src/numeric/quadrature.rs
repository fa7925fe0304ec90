//! Fixed Gauss rules and an adaptive vector-valued Gauss–Kronrod integrator.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};

/// Nodes and weights of a fixed-order Gauss rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    /// Gauss–Legendre rule on [-1, 1], nodes ascending.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
                }
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussRule { nodes, weights }
    }

    /// Gauss–Hermite rule for the standard normal weight: Σ wᵢ g(zᵢ) ≈ E[g(Z)].
    pub fn hermite_normal(n: usize) -> Self {
        assert!(n >= 1);
        const PIM4: f64 = 0.751_125_544_464_942_5;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let mut z: f64 = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 1.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| (xi * std::f64::consts::SQRT_2, wi / sqrt_pi))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        GaussRule {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    /// Apply a Legendre rule to [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

type RuleCache = Mutex<HashMap<usize, &'static GaussRule>>;

fn cached(cache: &'static OnceLock<RuleCache>, n: usize, make: fn(usize) -> GaussRule) -> &'static GaussRule {
    let map = cache.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("rule cache poisoned");
    guard.entry(n).or_insert_with(|| Box::leak(Box::new(make(n))))
}

/// Cached Gauss–Legendre rule.
pub fn legendre(n: usize) -> &'static GaussRule {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    cached(&CACHE, n, GaussRule::legendre)
}

/// Cached Gauss–Hermite rule for the standard normal weight.
pub fn hermite(n: usize) -> &'static GaussRule {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    cached(&CACHE, n, GaussRule::hermite_normal)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
    /// Number of equal pieces the interval is cut into before adapting.
    pub initial_pieces: usize,
    /// Relative noise level of the integrand itself (e.g. from finite differences);
    /// errors below noise·∫|f| are accepted.
    pub noise: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-10, rel_tol: 1e-10, max_intervals: 4000, initial_pieces: 4, noise: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    est: Vec<f64>,
    err: Vec<f64>,
    abs: Vec<f64>,
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Result<Segment> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut kabs = vec![0.0; dim];
    let mut fvals: Vec<(f64, Vec<f64>)> = Vec::with_capacity(15);
    let mut eval = |x: f64, buf: &mut [f64]| -> Result<()> {
        buf.iter_mut().for_each(|v| *v = 0.0);
        f(x, buf);
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration(format!("non-finite integrand at x = {x:e}")));
        }
        Ok(())
    };
    eval(mid, buf)?;
    for j in 0..dim {
        kron[j] += WGK[7] * buf[j];
        gauss[j] += WG[3] * buf[j];
        kabs[j] += WGK[7] * buf[j].abs();
    }
    fvals.push((WGK[7], buf.to_vec()));
    for k in 0..7 {
        let dx = half * XGK[k];
        for x in [mid - dx, mid + dx] {
            eval(x, buf)?;
            for j in 0..dim {
                kron[j] += WGK[k] * buf[j];
                kabs[j] += WGK[k] * buf[j].abs();
                if k % 2 == 1 {
                    gauss[j] += WG[k / 2] * buf[j];
                }
            }
            fvals.push((WGK[k], buf.to_vec()));
        }
    }
    // QUADPACK's error rescaling: sharpens the raw |K − G| for smooth integrands
    // and floors it at the round-off level.
    let mut est = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut abs = vec![0.0; dim];
    for j in 0..dim {
        let mean = kron[j] * 0.5;
        let asc: f64 = fvals.iter().map(|(w, v)| w * (v[j] - mean).abs()).sum::<f64>() * half.abs();
        let mut e = ((kron[j] - gauss[j]) * half).abs();
        if asc != 0.0 && e != 0.0 {
            e = asc * (200.0 * e / asc).powf(1.5).min(1.0);
        }
        let resabs = kabs[j] * half.abs();
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * resabs);
        }
        est[j] = kron[j] * half;
        err[j] = e;
        abs[j] = resabs;
    }
    Ok(Segment { a, b, est, err, abs })
}

/// Adaptive G7–K15 integration of a vector-valued integrand over a finite interval.
///
/// `f(x, out)` writes `dim` values into `out` (pre-zeroed).
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    opts: QuadOptions,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Integration(format!("interval [{a}, {b}] is not finite")));
    }
    if a == b {
        return Ok(QuadResult { values: vec![0.0; dim], errors: vec![0.0; dim], intervals: 0 });
    }
    let mut buf = vec![0.0; dim];
    let pieces = opts.initial_pieces.max(1);
    let mut segs = Vec::with_capacity(pieces * 4);
    for i in 0..pieces {
        let lo = a + (b - a) * i as f64 / pieces as f64;
        let hi = if i + 1 == pieces { b } else { a + (b - a) * (i + 1) as f64 / pieces as f64 };
        segs.push(gk15(&mut f, lo, hi, dim, &mut buf)?);
    }
    loop {
        let mut total = vec![0.0; dim];
        let mut total_err = vec![0.0; dim];
        let mut total_abs = vec![0.0; dim];
        for s in &segs {
            for j in 0..dim {
                total[j] += s.est[j];
                total_err[j] += s.err[j];
                total_abs[j] += s.abs[j];
            }
        }
        // a request below the round-off floor of ∫|f| cannot be met
        let tol: Vec<f64> = (0..dim)
            .map(|j| opts.abs_tol.max(opts.rel_tol * total[j].abs()).max((1e3 * f64::EPSILON + opts.noise) * total_abs[j]))
            .collect();
        if total_err.iter().zip(&tol).all(|(e, t)| e <= t) {
            return Ok(QuadResult { values: total, errors: total_err, intervals: segs.len() });
        }
        if segs.len() >= opts.max_intervals {
            let worst = (0..dim).max_by(|&i, &j| (total_err[i] / tol[i]).total_cmp(&(total_err[j] / tol[j]))).unwrap_or(0);
            return Err(Error::Integration(format!(
                "adaptive quadrature on [{a:e}, {b:e}] hit {} intervals; component {worst} estimate {:e} with error {:e}",
                segs.len(),
                total[worst],
                total_err[worst]
            )));
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.err.iter().zip(&tol).map(|(e, t)| e / t).fold(0.0, f64::max)))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .expect("at least one segment");
        let s = segs.swap_remove(idx);
        let m = 0.5 * (s.a + s.b);
        if m <= s.a || m >= s.b {
            return Err(Error::Integration(format!("interval around {m:e} cannot be subdivided further")));
        }
        segs.push(gk15(&mut f, s.a, m, dim, &mut buf)?);
        segs.push(gk15(&mut f, m, s.b, dim, &mut buf)?);
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64> {
    let r = integrate_vec(|x, out| out[0] = f(x), a, b, 1, opts)?;
    Ok(r.values[0])
}
