use priorforge::family::catalog::{self, Settings};
use priorforge::family::{DerivativeMethod, FamilyModel};
use priorforge::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fam(id: &str) -> FamilyModel {
    catalog::family(id).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn log_density_examples() {
    let b = fam("binomial");
    assert!((b.log_density(&[1.0], &[0.5]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    let n = fam("normal_known_var");
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((n.log_density(&[0.3], &[0.3]).unwrap() + half_ln_2pi).abs() < 1e-15);
    let e = fam("exp_scale");
    assert!((e.log_density(&[2.0], &[2.0]).unwrap() - (0.5f64.ln() - 1.0)).abs() < 1e-15);
}

#[test]
fn log_density_rejects_bad_inputs() {
    let b = fam("binomial");
    assert!(matches!(b.log_density(&[2.0], &[0.5]), Err(Error::Domain(_))));
    assert!(matches!(b.log_density(&[1.0], &[1.2]), Err(Error::Domain(_))));
    assert!(matches!(b.log_density(&[1.0], &[1e-10]), Err(Error::BoundaryProximity(_))));
}

#[test]
fn finite_support_probabilities_sum_to_one() {
    let b = catalog::build("binomial", &Settings::from([("m".to_string(), 7.0)])).unwrap();
    let total: f64 = (0..=7).map(|x| b.log_density(&[x as f64], &[0.37]).unwrap().exp()).sum();
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn derivative_examples() {
    let n = fam("normal_known_var");
    let d = n.derivatives(&[1.4], &[0.2], 1).unwrap();
    assert!((d.scalar(1).unwrap() - 1.2).abs() < 1e-14);
    let b = fam("binomial");
    let d = b.derivatives(&[1.0], &[0.3], 2).unwrap();
    assert!((d.scalar(2).unwrap() + 1.0 / 0.09).abs() < 1e-12);
    let p = fam("poisson");
    let d = p.derivatives(&[3.0], &[1.7], 3).unwrap();
    assert!(rel(d.scalar(3).unwrap(), 6.0 / 1.7f64.powi(3)) < 1e-14);
    assert_eq!(d.method, DerivativeMethod::Analytic);
}

#[test]
fn finite_difference_bundles_match_analytic_and_are_self_consistent() {
    // halfnormal has no analytic partials
    let h = fam("halfnormal_scale");
    let (x, t) = (0.9, 1.3);
    let d = h.derivatives(&[x], &[t], 4).unwrap();
    assert_eq!(d.method, DerivativeMethod::FiniteDifference);
    let exact = [
        -1.0 / t + x * x / t.powi(3),
        1.0 / t.powi(2) - 3.0 * x * x / t.powi(4),
        -2.0 / t.powi(3) + 12.0 * x * x / t.powi(5),
        6.0 / t.powi(4) - 60.0 * x * x / t.powi(6),
    ];
    for k in 1..=4 {
        let e = d.get(&[k]).unwrap();
        assert!((e.value - exact[k - 1]).abs() < 1e-3 * exact[k - 1].abs().max(1.0), "order {k}: {e:?}");
    }
    // halving the step changes each entry by less than 10× the reported error
    let f = |th: &[f64]| Ok(h.def().log_density(&[x], th));
    for k in 1..=4 {
        let steps = priorforge::numeric::diff::default_steps(&[t], &[k]);
        let a = priorforge::numeric::diff::partial(f, &[t], &[k], &steps).unwrap();
        let b = priorforge::numeric::diff::partial(f, &[t], &[k], &[steps[0] * 0.5]).unwrap();
        assert!((a.value - b.value).abs() < 10.0 * a.error.max(b.error), "order {k}: {a:?} vs {b:?}");
    }
}

#[test]
fn finite_differences_refuse_points_near_the_boundary() {
    let h = fam("halfnormal_scale");
    assert!(matches!(h.derivatives(&[0.5], &[1e-4], 3), Err(Error::BoundaryProximity(_))));
}

#[test]
fn exact_and_numeric_fisher_agree_on_the_diagnostic_grid() {
    for id in catalog::IDS {
        let f = fam(id);
        if !f.has_exact_fisher() {
            continue;
        }
        for th in f.diagnostic_grid() {
            let a = f.fisher_information(&th).unwrap();
            let b = f.fisher_information_numeric(&th).unwrap();
            let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-5 * scale, "{id} at {th:?}: exact {a} numeric {b}");
            }
            assert!((b.clone() - b.transpose()).iter().all(|v| *v == 0.0));
            assert!(b.cholesky().is_some());
        }
    }
}

#[test]
fn score_and_information_identities() {
    for id in catalog::IDS {
        let f = fam(id);
        let r = f.interest_index();
        let o1 = priorforge::family::unit_orders(f.dim(), &[r]);
        for th in f.diagnostic_grid().iter().step_by(5) {
            let v = f
                .expect(th, 2, |x, out| {
                    let s = f.partial(x, th, &o1)?.value;
                    out[0] = s;
                    out[1] = s * s;
                    Ok(())
                })
                .unwrap();
            let info = f.fisher_information(th).unwrap()[(r, r)];
            assert!(v[0].abs() < 1e-8 * info.sqrt().max(1.0), "{id} score mean {} at {th:?}", v[0]);
            assert!(rel(v[1], info) < 1e-5, "{id} E[s²] {} vs I {info} at {th:?}", v[1]);
        }
    }
}

#[test]
fn g3_equals_fisher_derivative_in_canonical_exponential_families() {
    let f = fam("exp_family_expc");
    for th in f.diagnostic_grid() {
        let g3 = f.g3_numeric(&th).unwrap();
        let d = f.fisher_derivative(th[0]).unwrap();
        assert!(rel(g3, d) < 1e-4, "θ={th:?}: g3 {g3} I′ {d}");
    }
}

#[test]
fn exact_g3_agrees_with_expectation_engine() {
    for id in ["binomial", "poisson", "exp_family_expc", "normal_known_var", "exp_scale", "logistic_location"] {
        let f = fam(id);
        for th in f.diagnostic_grid().iter().step_by(4) {
            let a = f.g3(th).unwrap();
            let b = f.g3_numeric(th).unwrap();
            assert!((a - b).abs() < 1e-6 * a.abs().max(1.0), "{id} at {th:?}: {a} vs {b}");
        }
    }
}

#[test]
fn fisher_examples() {
    let b = fam("bvn_rho");
    for &r in &[-0.7, 0.1, 0.55] {
        let i = b.fisher_information_numeric(&[r]).unwrap()[(0, 0)];
        assert!(rel(i, (1.0 + r * r) / (1.0 - r * r).powi(2)) < 1e-6);
        // oracle: derived symbolically from the bivariate normal moments
        let g3 = 4.0 * r * (r * r + 3.0) / (1.0 - r * r).powi(3);
        assert!(rel(b.g3(&[r]).unwrap(), g3) < 1e-6);
        let cube = -2.0 * r * (r * r + 3.0) / (1.0 - r * r).powi(3);
        assert!(rel(b.score_cube_expectation(&[r]).unwrap(), cube) < 1e-6);
    }
    let fc = fam("fieller_creasy");
    let i = fc.fisher_information_numeric(&[0.7, 1.9]).unwrap();
    assert!(rel(i[(0, 0)], 1.9 * 1.9) < 1e-6 && rel(i[(0, 1)], 1.9 * 0.7) < 1e-6 && rel(i[(1, 1)], 1.49) < 1e-6);
    let bin = fam("binomial");
    assert!(rel(bin.fisher_information_numeric(&[0.3]).unwrap()[(0, 0)], 1.0 / 0.21) < 1e-12);
}

#[test]
fn schur_complement_examples() {
    let nc = fam("noncentrality");
    for &t in &[-1.5, 0.0, 0.8] {
        let s = nc.fisher_schur(&[t, 1.7]).unwrap();
        assert!(rel(s, 2.0 / (t * t + 2.0)) < 1e-12);
    }
    let fo = fam("fieller_creasy_orth");
    let i = fo.fisher_information_numeric(&[0.6, 2.0]).unwrap();
    assert!(i[(0, 1)].abs() < 1e-7);
    assert!(rel(i[(0, 0)], 4.0 / 1.36f64.powi(2)) < 1e-6);
    assert!(rel(fo.fisher_schur(&[0.6, 2.0]).unwrap(), 4.0 / 1.36f64.powi(2)) < 1e-12);
}

#[test]
fn symmetric_families_have_vanishing_odd_functionals() {
    let l = fam("logistic_location");
    for &t in &[-2.0, 0.0, 3.0] {
        assert!(l.g3_numeric(&[t]).unwrap().abs() < 1e-10);
        assert!(l.score_cube_expectation(&[t]).unwrap().abs() < 1e-10);
    }
    let n = fam("normal_known_var");
    assert!(n.g3_numeric(&[0.4]).unwrap().abs() < 1e-12);
    assert!(n.score_cube_expectation(&[0.4]).unwrap().abs() < 1e-12);
    assert!(fam("binomial").score_cube_expectation(&[0.5]).unwrap().abs() < 1e-14);
}

#[test]
fn random_effects_information_has_a_cross_term() {
    // Independent oracle: symbolic expectation of the Hessian for the group likelihood.
    let re = catalog::build("random_effects", &Settings::from([("n".to_string(), 2.0)])).unwrap();
    let (r, u) = (1.3, 0.4);
    let i = re.fisher_information_numeric(&[0.2, r, u]).unwrap();
    assert!(rel(i[(0, 0)], 2.0 * r * u) < 1e-6);
    assert!(rel(i[(1, 1)], 1.0 / (r * r)) < 1e-6);
    assert!(rel(i[(2, 2)], 0.5 / (u * u)) < 1e-6);
    assert!(rel(i[(1, 2)], 0.5 / (r * u)) < 1e-6);
    assert!(i[(0, 1)].abs() < 1e-7 && i[(0, 2)].abs() < 1e-7);
}

#[test]
fn neyman_scott_fast_paths() {
    let ns = catalog::build("neyman_scott", &Settings::from([("n_cells".to_string(), 3.0), ("k".to_string(), 2.0)])).unwrap();
    let th = [0.1, -0.3, 0.5, 1.7];
    let num = ns.fisher_information_numeric(&th).unwrap();
    let ex = ns.fisher_information(&th).unwrap();
    for (a, b) in num.iter().zip(ex.iter()) {
        assert!((a - b).abs() < 1e-9);
    }
    let ld = ns.log_det_fisher(&th).unwrap();
    assert!((ld - ex.determinant().ln()).abs() < 1e-12);
    assert!(rel(ns.fisher_schur(&th).unwrap(), 6.0 / (2.0 * 1.7 * 1.7)) < 1e-14);
}

#[test]
fn samplers_stay_in_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for id in catalog::IDS {
        let f = fam(id);
        let th = f.anchor();
        for _ in 0..200 {
            let x = f.sample(&th, &mut rng);
            assert!(f.def().in_support(&x), "{id}: {x:?}");
            assert!(f.log_density(&x, &th).unwrap().is_finite());
        }
    }
}

#[test]
fn unknown_family_is_reported() {
    assert!(matches!(catalog::family("cauchy_mixture"), Err(Error::UnknownFamily(_))));
}
