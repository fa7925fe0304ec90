use std::sync::Arc;
use std::time::Instant;

use priorforge::family::catalog;
use priorforge::family::transform::Transform;
use priorforge::family::{FamilyModel, ParameterSpace};
use priorforge::priors::*;
use priorforge::Error;

fn fam(id: &str) -> FamilyModel {
    catalog::family(id).unwrap()
}

/// Std-dev over the grid of log π − reference(θ).
fn spread(p: &PriorDensity, reference: impl Fn(&[f64]) -> f64, grid: &[Vec<f64>]) -> f64 {
    let d: Vec<f64> = grid.iter().map(|t| p.log_density(t).unwrap() - reference(t)).collect();
    std_dev(&d)
}

#[test]
fn jeffreys_examples() {
    let b = fam("binomial");
    let p = jeffreys(&b).unwrap();
    assert!(spread(&p, |t| -0.5 * (t[0] * (1.0 - t[0])).ln(), &b.diagnostic_grid()) < 1e-9);
    assert_eq!(p.proper(), Propriety::Yes);

    let n = fam("normal");
    let p = jeffreys(&n).unwrap();
    assert!(spread(&p, |t| -2.0 * t[1].ln(), &n.diagnostic_grid()) < 1e-9);

    let k = fam("normal_known_var");
    assert!(spread(&jeffreys(&k).unwrap(), |_| 0.0, &k.diagnostic_grid()) < 1e-9);
}

#[test]
fn anchor_pins_log_prior_to_zero() {
    for id in ["binomial", "poisson", "exp_scale"] {
        let f = fam(id);
        let p = gml_prior(&f, None).unwrap();
        assert!(p.log_density(&f.anchor()).unwrap().abs() < 1e-12, "{id}");
    }
    let b = fam("binomial");
    let p = gml_prior(&b, Some(0.2)).unwrap();
    assert!(p.log_density(&[0.2]).unwrap().abs() < 1e-12);
}

#[test]
fn gml_closed_forms() {
    let cases: [(&str, fn(&[f64]) -> f64); 4] = [
        ("binomial", |t| -0.75 * (t[0] * (1.0 - t[0])).ln()),
        // I^{1/4} in log λ pushed through dθ/dλ = 1/λ
        ("poisson", |t| -0.75 * t[0].ln()),
        ("exp_scale", |t| -1.5 * t[0].ln()),
        ("normal_known_var", |_| 0.0),
    ];
    for (id, reference) in cases {
        let f = fam(id);
        let start = Instant::now();
        let p = gml_prior(&f, None).unwrap();
        let s = spread(&p, reference, &f.diagnostic_grid());
        let elapsed = start.elapsed().as_secs_f64();
        assert!(s < 1e-5, "{id}: spread {s:e}");
        assert!(elapsed < 1.0, "{id}: took {elapsed}s");
    }
}

#[test]
fn gml_canonical_exponential_family_is_quarter_power_of_information() {
    let e = fam("exp_family_expc");
    let p = gml_prior(&e, None).unwrap();
    assert!(spread(&p, |t| 0.25 * t[0], &e.diagnostic_grid()) < 1e-6);
}

#[test]
fn moment_matching_examples() {
    // canonical exponential family: Jeffreys
    let e = fam("exp_family_expc");
    let mm = moment_matching_prior(&e, None).unwrap();
    let j = jeffreys(&e).unwrap();
    assert!(log_difference_spread(&mm, &j, &e.diagnostic_grid()).unwrap() < 1e-6);

    // binomial mean parameter: Haldane
    let b = fam("binomial");
    let mm = moment_matching_prior(&b, None).unwrap();
    assert!(spread(&mm, |t| -(t[0] * (1.0 - t[0])).ln(), &b.diagnostic_grid()) < 1e-6);

    let k = fam("normal_known_var");
    assert!(spread(&moment_matching_prior(&k, None).unwrap(), |_| 0.0, &k.diagnostic_grid()) < 1e-9);
}

#[test]
fn hartigan_examples() {
    let b = fam("binomial");
    assert!(spread(&hartigan_ml_prior(&b).unwrap(), |t| -(t[0] * (1.0 - t[0])).ln(), &b.diagnostic_grid()) < 1e-9);
    let p = fam("poisson");
    assert!(spread(&hartigan_ml_prior(&p).unwrap(), |t| -t[0].ln(), &p.diagnostic_grid()) < 1e-9);
    let k = fam("normal_known_var");
    assert!(spread(&hartigan_ml_prior(&k).unwrap(), |_| 0.0, &k.diagnostic_grid()) < 1e-9);
}

#[test]
fn normal_unit_variance_priors_agree() {
    let k = fam("normal_known_var");
    let g = k.diagnostic_grid();
    let j = jeffreys(&k).unwrap();
    let gml = gml_prior(&k, None).unwrap();
    let mm = moment_matching_prior(&k, None).unwrap();
    assert!(log_difference_spread(&j, &gml, &g).unwrap() < 1e-9);
    assert!(log_difference_spread(&j, &mm, &g).unwrap() < 1e-9);
}

#[test]
fn scalar_constructions_reject_vectors() {
    let n = fam("normal");
    assert!(matches!(gml_prior(&n, None), Err(Error::Precondition(_))));
    assert!(matches!(hartigan_ml_prior(&n), Err(Error::Precondition(_))));
}

#[test]
fn haar_priors() {
    let n = fam("normal");
    let g = n.diagnostic_grid();
    let l = haar_location_scale(&n, HaarSide::Left).unwrap();
    let r = haar_location_scale(&n, HaarSide::Right).unwrap();
    assert!(spread(&l, |t| -2.0 * t[1].ln(), &g) < 1e-12);
    assert!(spread(&r, |t| -t[1].ln(), &g) < 1e-12);
    let ratio: Vec<f64> = g.iter().map(|t| r.log_density(t).unwrap() - l.log_density(t).unwrap() - t[1].ln()).collect();
    assert!(std_dev(&ratio) < 1e-12);
    assert!(matches!(haar_location_scale(&fam("poisson"), HaarSide::Left), Err(Error::Precondition(_))));
}

#[test]
fn scaling_shifts_log_density() {
    let b = fam("binomial");
    let p = jeffreys(&b).unwrap();
    let q = p.scaled(3.0);
    let d = q.log_density(&[0.3]).unwrap() - p.log_density(&[0.3]).unwrap();
    assert!((d - 3f64.ln()).abs() < 1e-14);
}

#[test]
fn gml_invariance_under_logit() {
    let b = fam("binomial");
    let logit = b.reparameterized(Transform::logit());
    let in_logit = gml_prior(&logit, None).unwrap();
    let pushed = reparameterize(&in_logit, &Transform::logistic(), 1.0).unwrap();
    let native = gml_prior(&b, None).unwrap();
    assert!(log_difference_spread(&pushed, &native, &b.diagnostic_grid()).unwrap() < 1e-5);
    // and the reverse direction
    let pulled = reparameterize(&native, &Transform::logit(), 1.0).unwrap();
    assert!(log_difference_spread(&pulled, &in_logit, &logit.diagnostic_grid()).unwrap() < 1e-5);
}

#[test]
fn gml_invariance_under_log() {
    let p = fam("poisson");
    let logp = p.reparameterized(Transform::log());
    let native_log = gml_prior(&logp, None).unwrap();
    let pulled = reparameterize(&gml_prior(&p, None).unwrap(), &Transform::log(), 1.0).unwrap();
    assert!(log_difference_spread(&pulled, &native_log, &logp.diagnostic_grid()).unwrap() < 1e-5);
}

#[test]
fn jeffreys_invariance_pairs() {
    let pairs = [("binomial", Transform::logit()), ("poisson", Transform::log()), ("exp_scale", Transform::log())];
    for (id, t) in pairs {
        let f = fam(id);
        let g = f.reparameterized(t.clone());
        let native = jeffreys(&g).unwrap();
        let pushed = reparameterize(&jeffreys(&f).unwrap(), &t, 1.0).unwrap();
        let s = log_difference_spread(&native, &pushed, &g.diagnostic_grid()).unwrap();
        assert!(s < 1e-6, "{id}: {s:e}");
    }
}

#[test]
fn identity_reparameterization_is_a_no_op() {
    let b = fam("binomial");
    let p = gml_prior(&b, None).unwrap();
    for power in [0.0, 1.0, 1.5] {
        let q = reparameterize(&p, &Transform::identity(b.space().clone()), power).unwrap();
        assert!(log_difference_spread(&p, &q, &b.diagnostic_grid()).unwrap() < 1e-12);
    }
}

#[test]
fn moment_matching_mean_parameter_gives_information() {
    // canonical θ = log λ; mean φ = λ with power 3/2
    let e = fam("exp_family_expc");
    let mm = moment_matching_prior(&e, None).unwrap();
    let in_mean = reparameterize(&mm, &Transform::exp(), 1.5).unwrap();
    let p = fam("poisson");
    let info = hartigan_ml_prior(&p).unwrap();
    assert!(log_difference_spread(&in_mean, &info, &p.diagnostic_grid()).unwrap() < 1e-6);
}

#[test]
fn non_monotone_transform_is_rejected() {
    let b = fam("binomial");
    let p = jeffreys(&b).unwrap();
    // φ ∈ (0,1), θ = 4φ(1−φ) folds the interval
    let fold = Transform::new(
        "fold",
        Arc::new(|t: &[f64]| vec![0.5 * (1.0 - (1.0 - t[0]).sqrt())]),
        Arc::new(|f: &[f64]| vec![4.0 * f[0] * (1.0 - f[0])]),
        ParameterSpace::new(vec![priorforge::family::Interval::unit()]).unwrap(),
    );
    assert!(matches!(reparameterize(&p, &fold, 1.0), Err(Error::Precondition(_))));
}

#[test]
fn reference_orthogonal_examples() {
    let fc = fam("fieller_creasy_orth");
    let p = reference_orthogonal(&TwoGroupSpec::new(&fc, 0)).unwrap();
    assert!(spread(&p, |t| -(1.0 + t[0] * t[0]).ln(), &fc.diagnostic_grid()) < 1e-9);

    let nc = fam("noncentrality_orth");
    let parts = reference_orthogonal_parts(&TwoGroupSpec::new(&nc, 0)).unwrap();
    let g = nc.diagnostic_grid();
    assert!(spread(&parts.joint, |t| -0.5 * (t[0] * t[0] + 2.0).ln() - t[1].ln(), &g) < 1e-9);
    assert!(spread(&parts.interest_factor, |t| -0.5 * (t[0] * t[0] + 2.0).ln(), &g) < 1e-9);

    let mut s = catalog::Settings::new();
    s.insert("n_cells".into(), 3.0);
    let ns = catalog::build("neyman_scott", &s).unwrap();
    let r = ns.interest_index();
    let p = reference_orthogonal(&TwoGroupSpec::new(&ns, r)).unwrap();
    assert!(spread(&p, |t| -t[r].ln(), &ns.diagnostic_grid()) < 1e-9);
}

#[test]
fn random_effects_interest_mean_is_flat_in_mean() {
    let re = fam("random_effects");
    let parts = reference_orthogonal_parts(&TwoGroupSpec::new(&re, 0)).unwrap();
    let g = re.diagnostic_grid();
    assert!(spread(&parts.interest_factor, |_| 0.0, &g) < 1e-9);
    // the variance block is not diagonal, so r and u are not orthogonal to each other
    assert!(matches!(reference_orthogonal(&TwoGroupSpec::new(&re, 1)), Err(Error::Precondition(_))));
}

#[test]
fn non_orthogonal_split_is_rejected() {
    let nc = fam("noncentrality");
    assert!(matches!(reference_orthogonal(&TwoGroupSpec::new(&nc, 0)), Err(Error::Precondition(_))));
    let fc = fam("fieller_creasy");
    assert!(matches!(reference_orthogonal(&TwoGroupSpec::new(&fc, 0)), Err(Error::Precondition(_))));
}

#[test]
fn supplied_factorization_is_checked() {
    let nc = fam("noncentrality_orth");
    let good = Factorization {
        h11: Arc::new(|t: &[f64]| 2.0 / (t[0] * t[0] + 2.0)),
        h12: Arc::new(|_: &[f64]| 1.0),
        h21: Arc::new(|t: &[f64]| t[0] * t[0] + 2.0),
        h22: Arc::new(|t: &[f64]| 1.0 / (t[0] * t[0])),
    };
    let mut spec = TwoGroupSpec::new(&nc, 0);
    spec.factorization = Some(good.clone());
    assert!(reference_orthogonal(&spec).is_ok());
    spec.factorization = Some(Factorization { h22: Arc::new(|t: &[f64]| 1.0 / t[0]), ..good });
    assert!(matches!(reference_orthogonal(&spec), Err(Error::Factorization(_))));
}

fn stabilization(p: &PriorDensity) -> Vec<f64> {
    serde_json::from_value(p.descriptor().params["stabilization"].clone()).unwrap()
}

#[test]
fn reference_compact_location_scale() {
    let n = fam("normal");
    for interest in [0, 1] {
        let p = reference_compact(&n, interest, None).unwrap();
        assert!(spread(&p, |t| -t[1].ln(), &n.diagnostic_grid()) < 1e-6, "interest {interest}");
        assert!(*stabilization(&p).last().unwrap() < 1e-3);
    }
}

#[test]
fn reference_compact_noncentrality() {
    let nc = fam("noncentrality");
    let p = reference_compact(&nc, 0, None).unwrap();
    assert!(spread(&p, |t| -0.5 * (t[0] * t[0] + 2.0).ln() - t[1].ln(), &nc.diagnostic_grid()) < 1e-6);
    let d = stabilization(&p);
    assert!(d.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{d:?}");
}

#[test]
fn reference_compact_rejects_bad_sequences() {
    let n = fam("normal");
    let mut ks = default_compacts(n.space());
    ks.swap(0, 1);
    assert!(matches!(reference_compact(&n, 0, Some(ks)), Err(Error::Precondition(_))));
    assert!(matches!(reference_compact(&fam("poisson"), 0, None), Err(Error::Precondition(_))));
}

#[test]
fn descriptor_round_trip() {
    let b = fam("binomial");
    let p = gml_prior(&b, None).unwrap();
    let text = serde_json::to_string(p.descriptor()).unwrap();
    let d: PriorDescriptor = serde_json::from_str(&text).unwrap();
    assert_eq!(d.construction, "gml");
    let q = from_descriptor(&b, &d).unwrap();
    assert!(log_difference_spread(&p, &q, &b.diagnostic_grid()).unwrap() < 1e-12);

    let custom = PriorDescriptor {
        construction: "custom".into(),
        family_id: "exp_scale".into(),
        anchor: None,
        params: serde_json::json!({ "powers": [-1.5] }),
    };
    let e = fam("exp_scale");
    let c = from_descriptor(&e, &custom).unwrap();
    let g = gml_prior(&e, None).unwrap();
    assert!(log_difference_spread(&c, &g, &e.diagnostic_grid()).unwrap() < 1e-5);
    assert!("nonsense".parse::<Construction>().is_err());
}
