//! Polygamma functions not covered by `statrs`.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Trigamma ψ′(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    acc + r + 0.5 * r2 + r * r2 * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * 5.0 / 66.0))))
}

/// Tetragamma ψ″(x) for x > 0.
pub fn tetragamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    acc - r2 - r2 * r - 0.5 * r2 * r2
        + r2 * r2 * r2 * (1.0 / 6.0 - r2 * (1.0 / 6.0 - r2 * (3.0 / 10.0 - r2 * 5.0 / 6.0)))
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_known_values() {
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((trigamma(1.0) - pi2 / 6.0).abs() < 1e-13);
        assert!((trigamma(0.5) - pi2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn polygamma_agree_with_differences_of_digamma() {
        for &x in &[0.3, 1.7, 4.2, 25.0] {
            let h = 1e-4 * x;
            let fd1 = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd1 - trigamma(x)).abs() / trigamma(x) < 1e-7, "x={x}");
            let fd2 = (trigamma(x + h) - trigamma(x - h)) / (2.0 * h);
            assert!((fd2 - tetragamma(x)).abs() / tetragamma(x).abs() < 1e-7, "x={x}");
        }
        // ψ″(1) = −2ζ(3)
        assert!((tetragamma(1.0) + 2.0 * 1.202_056_903_159_594_3).abs() < 1e-12);
    }
}
