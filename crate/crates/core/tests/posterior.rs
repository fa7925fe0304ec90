use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Beta, ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma_ur;

use priorforge::family::catalog;
use priorforge::family::{CoordMap, FamilyModel};
use priorforge::posterior::*;
use priorforge::priors::*;
use priorforge::Error;

fn fam(id: &str) -> FamilyModel {
    catalog::family(id).unwrap()
}

fn bernoulli(successes: usize, n: usize) -> (FamilyModel, DataSample) {
    let b = fam("binomial");
    let xs: Vec<f64> = (0..n).map(|i| if i < successes { 1.0 } else { 0.0 }).collect();
    let d = DataSample::scalar(&b, &xs).unwrap();
    (b, d)
}

fn normal_data() -> (FamilyModel, DataSample) {
    let k = fam("normal_known_var");
    let d = DataSample::scalar(&k, &[0.3, -1.2, 2.5, 0.8, 1.1, -0.4, 0.9]).unwrap();
    (k, d)
}

const XBAR: f64 = (0.3 - 1.2 + 2.5 + 0.8 + 1.1 - 0.4 + 0.9) / 7.0;

#[test]
fn data_sample_validation() {
    let b = fam("binomial");
    assert!(matches!(DataSample::scalar(&b, &[]), Err(Error::Domain(_))));
    assert!(matches!(DataSample::scalar(&b, &[0.0, 2.0]), Err(Error::Domain(_))));
    let d = DataSample::scalar(&b, &[0.0, 1.0]).unwrap();
    assert_eq!(d.n(), 2);
    let p = fam("poisson");
    assert!(matches!(mle(&p, &d), Err(Error::Precondition(_))));
}

#[test]
fn mle_examples() {
    let (k, d) = normal_data();
    assert!((mle(&k, &d).unwrap() - XBAR).abs() < 1e-12);
    let (b, d) = bernoulli(7, 10);
    assert!((mle(&b, &d).unwrap() - 0.7).abs() < 1e-12);
    let e = fam("exp_scale");
    let xs = [0.5, 2.0, 1.25, 3.0, 0.75];
    let d = DataSample::scalar(&e, &xs).unwrap();
    assert!((mle(&e, &d).unwrap() - 1.5).abs() < 1e-12);
}

#[test]
fn mle_on_the_boundary_is_reported() {
    let (b, d) = bernoulli(0, 12);
    assert!(matches!(mle(&b, &d), Err(Error::BoundaryMle(_))));
    let (b, d) = bernoulli(12, 12);
    assert!(matches!(mle(&b, &d), Err(Error::BoundaryMle(_))));
}

#[test]
fn mle_for_a_scale_family_without_closed_form_partials() {
    // half-normal scale: θ̂² = mean x²
    let h = fam("halfnormal_scale");
    let xs = [0.4, 1.3, 0.2, 2.2, 0.9, 1.7];
    let d = DataSample::scalar(&h, &xs).unwrap();
    let want = (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt();
    assert!((mle(&h, &d).unwrap() - want).abs() < 1e-8 * want);
}

#[test]
fn coefficient_examples() {
    let (k, d) = normal_data();
    let c = expansion_coefficients(&k, &d, &uniform(&k).unwrap()).unwrap();
    assert!((c.a[1] + 1.0).abs() < 1e-12 && c.a[2].abs() < 1e-12 && c.a[3].abs() < 1e-12);
    assert!(c.prior_d1.abs() < 1e-12 && c.prior_d2.abs() < 1e-12);

    let p = fam("poisson");
    let d = DataSample::scalar(&p, &[1.0, 3.0, 2.0, 0.0, 4.0, 2.0]).unwrap();
    let c = expansion_coefficients(&p, &d, &jeffreys(&p).unwrap()).unwrap();
    assert!((c.mle - 2.0).abs() < 1e-12);
    assert!((c.i_hat - 0.5).abs() < 1e-10);

    let (b, d) = bernoulli(7, 10);
    let c = expansion_coefficients(&b, &d, &jeffreys(&b).unwrap()).unwrap();
    assert!((c.i_hat - 1.0 / 0.21).abs() < 1e-9);
    assert_eq!(c.n, 10);
}

#[test]
fn order_zero_at_the_origin() {
    let (b, d) = bernoulli(7, 10);
    let c = expansion_coefficients(&b, &d, &jeffreys(&b).unwrap()).unwrap();
    let v = expansion_density(&c, 0.0, 0).unwrap();
    assert!((v - (2.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-15);
    assert!(matches!(expansion_density(&c, 0.0, 3), Err(Error::Domain(_))));
}

#[test]
fn flat_normal_expansion_is_exactly_gaussian() {
    let (k, d) = normal_data();
    let c = expansion_coefficients(&k, &d, &uniform(&k).unwrap()).unwrap();
    for order in 0..=2 {
        for t in [-3.0f64, -1.0, 0.0, 0.4, 2.5] {
            let phi = (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!((expansion_density(&c, t, order).unwrap() - phi).abs() < 1e-14);
        }
    }
}

/// Bernoulli log-likelihood and Jeffreys log-prior derivatives, by hand.
struct BinomialHand {
    n: f64,
    i: f64,
    a3: f64,
    a4: f64,
    p1: f64,
    p2: f64,
}

fn binomial_hand(s: f64, n: f64) -> BinomialHand {
    let p = s / n;
    let q = 1.0 - p;
    let f = n - s;
    let i = (s / (p * p) + f / (q * q)) / n;
    let a3 = (2.0 * s / p.powi(3) - 2.0 * f / q.powi(3)) / n;
    let a4 = (-6.0 * s / p.powi(4) - 6.0 * f / q.powi(4)) / n;
    let l1 = -0.5 / p + 0.5 / q;
    let l2 = 0.5 / (p * p) + 0.5 / (q * q);
    BinomialHand { n, i, a3, a4, p1: l1, p2: l2 + l1 * l1 }
}

#[test]
fn binomial_order_one_matches_hand_formula() {
    let (b, d) = bernoulli(7, 10);
    let c = expansion_coefficients(&b, &d, &jeffreys(&b).unwrap()).unwrap();
    let h = binomial_hand(7.0, 10.0);
    assert!((c.a[2] - h.a3).abs() < 1e-9 && (c.a[3] - h.a4).abs() < 1e-8);
    assert!((c.prior_d1 - h.p1).abs() < 1e-7 && (c.prior_d2 - h.p2).abs() < 1e-5);
    let t: f64 = 1.0;
    let g1 = h.a3 * t.powi(3) / (6.0 * h.i.powf(1.5)) + t * h.p1 / h.i.sqrt();
    let want = (-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt() * (1.0 + g1 / h.n.sqrt());
    assert!((expansion_density(&c, t, 1).unwrap() - want).abs() < 1e-8);
}

#[test]
fn gamma_two_integrates_to_zero_against_the_normal() {
    // The constant terms of γ₂ are exactly the N(0,1) means of its t-terms.
    let (b, d) = bernoulli(3, 11);
    let c = expansion_coefficients(&b, &d, &jeffreys(&b).unwrap()).unwrap();
    let rule = priorforge::numeric::quadrature::hermite(40);
    let m: f64 = rule.nodes.iter().zip(&rule.weights).map(|(&t, &w)| w * expansion_terms(&c, t).1).sum();
    let m1: f64 = rule.nodes.iter().zip(&rule.weights).map(|(&t, &w)| w * expansion_terms(&c, t).0).sum();
    assert!(m.abs() < 1e-10 && m1.abs() < 1e-12, "{m} {m1}");
}

#[test]
fn binomial_mean_correction_by_hand() {
    let (b, d) = bernoulli(7, 10);
    let c = expansion_coefficients(&b, &d, &jeffreys(&b).unwrap()).unwrap();
    let h = binomial_hand(7.0, 10.0);
    let want = (h.a3 / (2.0 * h.i * h.i) + h.p1 / h.i) / h.n;
    let m = posterior_mean_expansion(&c);
    assert!((m.correction - want).abs() < 1e-9);
    assert!((m.mean - 0.7 - want).abs() < 1e-9);
    assert!((m.variance - 0.021).abs() < 1e-12);
}

#[test]
fn flat_normal_mean_expansion_is_the_sample_mean() {
    let (k, d) = normal_data();
    let c = expansion_coefficients(&k, &d, &uniform(&k).unwrap()).unwrap();
    let m = posterior_mean_expansion(&c);
    assert!((m.mean - XBAR).abs() < 1e-12);
    assert!((m.variance - 1.0 / 7.0).abs() < 1e-12);
}

#[test]
fn binomial_jeffreys_posterior_is_beta() {
    let (b, d) = bernoulli(7, 10);
    let post = exact_posterior(&b, &jeffreys(&b).unwrap(), &d).unwrap();
    let beta = Beta::new(7.5, 3.5).unwrap();
    for k in 1..10 {
        let q = beta.inverse_cdf(k as f64 / 10.0);
        assert!((post.cdf_at(q) - beta_reg(7.5, 3.5, q)).abs() < 1e-6, "decile {k}");
    }
    let q90 = post.quantile(0.9).unwrap();
    assert!((q90 - beta.inverse_cdf(0.9)).abs() < 1e-8);
    assert!((post.mean() - 7.5 / 11.0).abs() < 1e-9);
}

#[test]
fn flat_normal_posterior_quantiles() {
    let (k, d) = normal_data();
    let post = exact_posterior(&k, &uniform(&k).unwrap(), &d).unwrap();
    let nrm = Normal::new(XBAR, (1.0f64 / 7.0).sqrt()).unwrap();
    for a in [0.01, 0.05, 0.25, 0.5, 0.8, 0.95, 0.999] {
        assert!((post.quantile(a).unwrap() - nrm.inverse_cdf(a)).abs() < 1e-8, "α = {a}");
    }
    assert!((post.quantile(0.5).unwrap() - XBAR).abs() < 1e-10);
    assert!((post.variance() - 1.0 / 7.0).abs() < 1e-9);
}

#[test]
fn exponential_scale_posterior_is_inverse_gamma() {
    // π ∝ 1/θ gives θ | x ~ InvGamma(n, Σx)
    let e = fam("exp_scale");
    let xs = [0.5, 2.0, 1.25, 3.0, 0.75, 0.1, 4.2];
    let d = DataSample::scalar(&e, &xs).unwrap();
    let prior = power_law(&e, &[-1.0]).unwrap();
    let post = exact_posterior(&e, &prior, &d).unwrap();
    let (a, s) = (xs.len() as f64, xs.iter().sum::<f64>());
    for q in [0.5, 1.0, 1.7, 2.5, 4.0, 8.0] {
        assert!((post.cdf_at(q) - gamma_ur(a, s / q)).abs() < 1e-8, "q = {q}");
    }
    assert!((post.mean() - s / (a - 1.0)).abs() < 1e-8 * s);
}

#[test]
fn boundary_data_still_has_a_posterior() {
    let (b, d) = bernoulli(0, 15);
    let post = exact_posterior(&b, &jeffreys(&b).unwrap(), &d).unwrap();
    let beta = Beta::new(0.5, 15.5).unwrap();
    for a in [0.1, 0.5, 0.9, 0.99] {
        let q = post.quantile(a).unwrap();
        assert!((q - beta.inverse_cdf(a)).abs() < 1e-7 * beta.inverse_cdf(a).max(1e-3), "α = {a}");
    }
}

#[test]
fn grid_invariants() {
    let (b, d) = bernoulli(4, 9);
    let post = exact_posterior(&b, &uniform(&b).unwrap(), &d).unwrap();
    assert!(post.grid.windows(2).all(|w| w[0] < w[1]));
    assert!(post.cdf.windows(2).all(|w| w[0] <= w[1]));
    assert!(post.cdf[0].abs() < 1e-12 && (post.cdf[post.cdf.len() - 1] - 1.0).abs() < 1e-8);
    assert!((post.trapezoid_mass() - 1.0).abs() < 1e-6);
    assert!(post.cells() >= GridOptions::default().cells);
    let mut last = 0.0;
    for k in 1..100 {
        let q = post.quantile(k as f64 / 100.0).unwrap();
        assert!(q > last);
        last = q;
        assert!((post.cdf_at(q) - k as f64 / 100.0).abs() < 1e-10);
    }
    assert!(matches!(post.quantile(1.0), Err(Error::Domain(_))));
}

#[test]
fn heavy_tailed_posterior_on_the_line() {
    // A Cauchy log density is resolved out to its algebraic tails.
    let logf: LogDensity1d = Arc::new(|t: f64| -(1.0 + (t - 2.0).powi(2)).ln());
    let post = PosteriorGrid::from_log_density(CoordMap::Real, logf, 0.0, GridOptions::default()).unwrap();
    for a in [0.05, 0.25, 0.5, 0.9, 0.975] {
        let want = 2.0 + (std::f64::consts::PI * (a - 0.5)).tan();
        assert!((post.quantile(a).unwrap() - want).abs() < 1e-8, "α = {a}");
    }
    assert!((post.log_normalizer - std::f64::consts::PI.ln()).abs() < 1e-6);
}

#[test]
fn improper_posterior_is_detected() {
    let logf: LogDensity1d = Arc::new(|t: f64| -t.ln());
    let r = PosteriorGrid::from_log_density(CoordMap::Lower(0.0), logf, 1.0, GridOptions::default());
    assert!(matches!(r, Err(Error::ImproperPosterior(_))), "{r:?}");
}

#[test]
fn inverse_gamma_mode() {
    let e = fam("exp_scale");
    let xs = [0.5, 2.0, 1.25, 3.0];
    let d = DataSample::scalar(&e, &xs).unwrap();
    let post = exact_posterior(&e, &power_law(&e, &[-1.0]).unwrap(), &d).unwrap();
    // density θ^{−n−1} e^{−s/θ} peaks at s/(n+1)
    let m = post.mode().unwrap();
    assert!((m - 6.75 / 5.0).abs() < 1e-7, "{m}");
}

#[test]
fn expansion_improves_with_order() {
    let (b, d) = bernoulli(24, 80);
    let j = jeffreys(&b).unwrap();
    let post = exact_posterior(&b, &j, &d).unwrap();
    let c = expansion_coefficients(&b, &d, &j).unwrap();
    let rows = expansion_comparison(&post, &c, &t_grid(-3.0, 3.0, 121)).unwrap();
    let e: Vec<f64> = (0..=2).map(|k| expansion_sup_error(&rows, k)).collect();
    assert!(e[2] < e[1] && e[1] < e[0], "{e:?}");
    let m = posterior_mean_expansion(&c);
    assert!((m.mean - post.mean()).abs() < 0.1 * m.correction.abs());
}

#[test]
fn csv_exports() {
    let (b, d) = bernoulli(3, 8);
    let j = jeffreys(&b).unwrap();
    let post = exact_posterior(&b, &j, &d).unwrap();
    let mut buf = Vec::new();
    post.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("theta,density,cdf\n"));
    assert_eq!(text.lines().count(), post.grid.len() + 1);

    let c = expansion_coefficients(&b, &d, &j).unwrap();
    let rows = expansion_comparison(&post, &c, &t_grid(-1.0, 1.0, 5)).unwrap();
    let mut buf = Vec::new();
    write_comparison_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,exact,order0,order1,order2\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn multiparameter_expansion_for_the_normal() {
    let n = fam("normal");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = DataSample::simulate(&n, &[1.0, 2.0], 40, &mut rng).unwrap();
    let m = multi_expansion(&n, &d, &uniform(&n).unwrap()).unwrap();
    let xs: Vec<f64> = d.observations.iter().map(|x| x[0]).collect();
    let xbar = xs.iter().sum::<f64>() / 40.0;
    let s = (xs.iter().map(|x| (x - xbar).powi(2)).sum::<f64>() / 40.0).sqrt();
    assert!((m.mle[0] - xbar).abs() < 1e-9 && (m.mle[1] - s).abs() < 1e-9);
    assert!((m.info[0][0] - 1.0 / (s * s)).abs() < 1e-8 && (m.info[1][1] - 2.0 / (s * s)).abs() < 1e-8);
    assert!(m.info[0][1].abs() < 1e-8);
    // a_{σσσ} = 10/σ̂³, a_{μμσ} = 2/σ̂³, a_{μσσ} = a_{μμμ} = 0
    let a = |j: usize, r: usize, t: usize| m.a3[(j * 2 + r) * 2 + t];
    assert!((a(1, 1, 1) - 10.0 / s.powi(3)).abs() < 1e-6);
    assert!((a(0, 0, 1) - 2.0 / s.powi(3)).abs() < 1e-6);
    assert!(a(0, 1, 1).abs() < 1e-6 && a(0, 0, 0).abs() < 1e-6);
    // the n^{-1/2} term is odd in w, so the truncation still integrates to one
    let rule = priorforge::numeric::quadrature::legendre(60);
    let (h0, h1) = (8.0 * s, 8.0 * s / 2f64.sqrt());
    let mut total = 0.0;
    for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
        for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
            total += wx * wy * h0 * h1 * m.density(&[h0 * x, h1 * y]).unwrap();
        }
    }
    assert!((total - 1.0).abs() < 1e-8, "{total}");
}
