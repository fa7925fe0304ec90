use std::sync::Arc;

use priorforge::family::catalog;
use priorforge::family::FamilyModel;
use priorforge::matching::*;
use priorforge::numeric::special::trigamma;
use priorforge::priors::*;
use priorforge::Error;

fn fam(id: &str) -> FamilyModel {
    catalog::family(id).unwrap()
}

fn grid(f: &FamilyModel) -> Vec<Vec<f64>> {
    default_grid(f.space())
}

#[test]
fn jeffreys_is_first_order_matching() {
    for id in ["binomial", "poisson", "exp_scale", "bvn_rho", "halfnormal_scale"] {
        let f = fam(id);
        let r = first_order_residual(&jeffreys(&f).unwrap(), &f, &grid(&f)).unwrap();
        assert_eq!(r.verdict, Verdict::Matches, "{id}: {}", r.max_scaled_residual);
        assert_eq!(r.order, MatchingOrder::First);
    }
}

#[test]
fn uniform_binomial_is_not_first_order_matching() {
    let b = fam("binomial");
    let r = first_order_residual(&uniform(&b).unwrap(), &b, &grid(&b)).unwrap();
    assert_eq!(r.verdict, Verdict::Fails);
    // d/dp (p(1−p))^{1/2} = (1−2p)/(2(p(1−p))^{1/2}), times π(½) = 1
    for (t, res) in r.grid.iter().zip(&r.residuals) {
        let p = t[0];
        let want = (1.0 - 2.0 * p) / (2.0 * (p * (1.0 - p)).sqrt());
        assert!((res - want).abs() < 1e-6 * want.abs().max(1.0), "p = {p}: {res} vs {want}");
    }
}

#[test]
fn constant_prior_on_unit_normal_has_zero_residuals() {
    let k = fam("normal_known_var");
    let u = uniform(&k).unwrap();
    let r1 = first_order_residual(&u, &k, &grid(&k)).unwrap();
    let r2 = second_order_residual(&u, &k, &grid(&k)).unwrap();
    assert!(r1.residuals.iter().chain(&r2.residuals).all(|v| v.abs() < 1e-12));
}

#[test]
fn second_order_location_and_scale() {
    for id in ["normal_known_var", "logistic_location", "exp_scale", "halfnormal_scale"] {
        let f = fam(id);
        let r = second_order_residual(&jeffreys(&f).unwrap(), &f, &grid(&f)).unwrap();
        assert_eq!(r.verdict, Verdict::Matches, "{id}: {}", r.max_scaled_residual);
    }
}

#[test]
fn second_order_fails_for_correlation_and_binomial() {
    for id in ["bvn_rho", "binomial"] {
        let f = fam(id);
        let r = second_order_residual(&jeffreys(&f).unwrap(), &f, &grid(&f)).unwrap();
        assert_eq!(r.verdict, Verdict::Fails, "{id}");
    }
}

#[test]
fn second_order_existence_verdicts() {
    for id in ["bvn_rho", "binomial"] {
        let f = fam(id);
        assert_eq!(second_order_existence(&f, &grid(&f)).unwrap().verdict, Verdict::NoSecondOrderExists, "{id}");
    }
    for id in ["exp_scale", "halfnormal_scale", "normal_known_var", "logistic_location"] {
        let f = fam(id);
        assert_eq!(second_order_existence(&f, &grid(&f)).unwrap().verdict, Verdict::Matches, "{id}");
    }
}

#[test]
fn existence_functional_for_canonical_poisson() {
    // I = e^θ: (1/6) E[ℓ′³]/I^{3/2} = e^{−θ/2}/6, constant only in the c = 0 case
    let e = fam("exp_family_expc");
    let g = grid(&e);
    let r = second_order_existence(&e, &g).unwrap();
    assert_eq!(r.verdict, Verdict::NoSecondOrderExists);
    let mean: f64 = g.iter().map(|t| (-t[0] / 2.0).exp() / 6.0).sum::<f64>() / g.len() as f64;
    for (t, res) in g.iter().zip(&r.residuals) {
        assert!((res - ((-t[0] / 2.0).exp() / 6.0 - mean)).abs() < 1e-8);
    }
}

#[test]
fn bvn_existence_functional_matches_closed_form() {
    let b = fam("bvn_rho");
    let g = grid(&b);
    let r = second_order_existence(&b, &g).unwrap();
    let q = |p: f64| -2.0 * p * (p * p + 3.0) / (1.0 - p * p).powi(3) / (6.0 * ((1.0 + p * p) / (1.0 - p * p).powi(2)).powf(1.5));
    let mean = g.iter().map(|t| q(t[0])).sum::<f64>() / g.len() as f64;
    for (t, res) in g.iter().zip(&r.residuals) {
        assert!((res - (q(t[0]) - mean)).abs() < 1e-7, "ρ = {}", t[0]);
    }
}

#[test]
fn nuisance_first_order_location_scale() {
    let n = fam("normal");
    let g = n.space().grid(9);
    let gs = custom(&n, "g", Arc::new(|t: &[f64]| Ok((1.0 + t[1]).ln() - t[1] * t[1]))).unwrap();
    assert_eq!(nuisance_first_order_residual(&gs, &n, &g).unwrap().verdict, Verdict::Matches);

    let n1 = n.with_interest(1).unwrap();
    let hs = custom(&n, "h", Arc::new(|t: &[f64]| Ok(-t[1].ln() + (0.3 * t[0]).sin()))).unwrap();
    assert_eq!(nuisance_first_order_residual(&hs, &n1, &g).unwrap().verdict, Verdict::Matches);
    assert_eq!(nuisance_first_order_residual(&gs, &n1, &g).unwrap().verdict, Verdict::Fails);
}

#[test]
fn nuisance_first_order_orthogonal_information_prior() {
    let nc = fam("noncentrality_orth");
    let g = nc.space().grid(9);
    let i11 = custom(&nc, "i11", Arc::new(|t: &[f64]| Ok(-0.5 * (t[0] * t[0] + 2.0).ln() + 0.7 * t[1].ln()))).unwrap();
    assert_eq!(nuisance_first_order_residual(&i11, &nc, &g).unwrap().verdict, Verdict::Matches);
    let flat = uniform(&nc).unwrap();
    assert_eq!(nuisance_first_order_residual(&flat, &nc, &g).unwrap().verdict, Verdict::Fails);
}

#[test]
fn gamma_mean_second_order_discrimination() {
    let gm = fam("gamma_mean");
    let g = gm.space().grid(9);
    let j = |l: f64| trigamma(l) - 1.0 / l;
    let second = custom(&gm, "second_order", Arc::new(move |t: &[f64]| Ok(t[1].ln() - t[0].ln() + j(t[1]).ln()))).unwrap();
    let reference = custom(&gm, "reference", Arc::new(move |t: &[f64]| Ok(-t[0].ln() + 0.5 * j(t[1]).ln()))).unwrap();
    assert_eq!(orthogonal_second_order_for_prior(&second, &gm, &g).unwrap().verdict, Verdict::Matches);
    assert_eq!(orthogonal_second_order_for_prior(&reference, &gm, &g).unwrap().verdict, Verdict::Fails);
}

#[test]
fn noncentrality_second_order_solution_is_constant_h() {
    // In (θ, φ) the orthogonal condition is solved by h ≡ 1: π ∝ (θ²+2)^{−1/2},
    // which is σ⁻¹ back in (μ, σ).
    let nc = fam("noncentrality_orth");
    let g = nc.space().grid(9);
    assert_eq!(orthogonal_second_order_residual(|_: &[f64]| 1.0, &nc, &g).unwrap().verdict, Verdict::Matches);
    assert_eq!(orthogonal_second_order_residual(|t: &[f64]| 1.0 / t[1], &nc, &g).unwrap().verdict, Verdict::Fails);
}

#[test]
fn neyman_scott_every_first_order_prior_is_second_order() {
    let ns = fam("neyman_scott");
    let g = ns.diagnostic_grid();
    for h in [|_: &[f64]| 1.0, |t: &[f64]| (0.5 * t[0]).exp() * (1.0 + t[1] * t[1])] {
        assert_eq!(orthogonal_second_order_residual(h, &ns, &g).unwrap().verdict, Verdict::Matches);
    }
}

#[test]
fn fieller_creasy_only_constant_h_is_second_order() {
    // second term vanishes; the first is −(1+θ²)^{−1} h′(φ)
    let fc = fam("fieller_creasy_orth");
    let g = fc.space().grid(9);
    let r = orthogonal_second_order_residual(|_: &[f64]| 1.0, &fc, &g).unwrap();
    assert_eq!(r.verdict, Verdict::Matches);
    let r = orthogonal_second_order_residual(|t: &[f64]| t[1], &fc, &g).unwrap();
    assert_eq!(r.verdict, Verdict::Fails);
    for (t, res) in r.grid.iter().zip(&r.residuals) {
        let want = -1.0 / (1.0 + t[0] * t[0]);
        assert!((res - want).abs() < 1e-6, "{t:?}: {res} vs {want}");
    }
}

#[test]
fn non_orthogonal_family_is_rejected() {
    let nc = fam("noncentrality");
    let g = nc.space().grid(5);
    assert!(matches!(orthogonal_second_order_residual(|_: &[f64]| 1.0, &nc, &g), Err(Error::Precondition(_))));
}

#[test]
fn residuals_scale_linearly_with_the_prior() {
    let b = fam("binomial");
    let g = grid(&b);
    let u = uniform(&b).unwrap();
    let c = 7.5;
    for (r1, r2) in [
        (first_order_residual(&u, &b, &g).unwrap(), first_order_residual(&u.scaled(c), &b, &g).unwrap()),
        (second_order_residual(&u, &b, &g).unwrap(), second_order_residual(&u.scaled(c), &b, &g).unwrap()),
    ] {
        assert_eq!(r1.verdict, r2.verdict);
        for (a, b) in r1.residuals.iter().zip(&r2.residuals) {
            assert!((b - c * a).abs() <= 1e-8 * (c * a).abs().max(1e-300), "{a} {b}");
        }
    }
}

#[test]
fn grid_refinement_keeps_verdicts() {
    for id in ["binomial", "poisson", "bvn_rho", "exp_scale"] {
        let f = fam(id);
        let coarse = f.space().grid(17);
        let fine = f.space().grid(33);
        for p in [jeffreys(&f).unwrap(), uniform(&f).unwrap()] {
            assert_eq!(first_order_residual(&p, &f, &coarse).unwrap().verdict, first_order_residual(&p, &f, &fine).unwrap().verdict);
            assert_eq!(second_order_residual(&p, &f, &coarse).unwrap().verdict, second_order_residual(&p, &f, &fine).unwrap().verdict);
        }
        assert_eq!(second_order_existence(&f, &coarse).unwrap().verdict, second_order_existence(&f, &fine).unwrap().verdict);
    }
}

#[test]
fn grid_at_the_boundary_is_refused() {
    let b = fam("binomial");
    let j = jeffreys(&b).unwrap();
    assert!(matches!(first_order_residual(&j, &b, &[vec![1e-12]]), Err(Error::BoundaryProximity(_))));
    assert!(matches!(first_order_residual(&j, &b, &[vec![1.5]]), Err(Error::Domain(_))));
    assert!(matches!(first_order_residual(&j, &fam("normal"), &[vec![0.0, 1.0]]), Err(Error::Precondition(_))));
}

#[test]
fn report_serialization() {
    let b = fam("binomial");
    let r = first_order_residual(&jeffreys(&b).unwrap(), &b, &b.space().grid(5)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(v["verdict"], "matches");
    assert_eq!(v["residuals"].as_array().unwrap().len(), 5);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("theta_0,residual,scale,scaled\n"));
    assert_eq!(text.lines().count(), 6);
}
