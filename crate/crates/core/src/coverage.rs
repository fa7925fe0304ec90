//! Monte Carlo coverage of posterior quantiles, an exact enumeration oracle for
//! the binomial, and the exact-matching and Neyman–Scott experiments.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::family::catalog::{self, within_cell_ss, Settings};
use crate::family::{CoordMap, FamilyModel};
use crate::numeric::optimize::maximize;
use crate::numeric::quadrature::legendre;
use crate::posterior::{exact_posterior, DataSample, GridOptions, LogDensity1d, PosteriorGrid};
use crate::priors::{self, Construction, PriorDescriptor, PriorDensity};

pub const DEFAULT_REPLICATIONS: usize = 20_000;
/// Replicates may fail numerically; beyond this fraction the result is flagged.
pub const FAILURE_BUDGET: f64 = 0.01;

/// Generator for replicate `rep`: one ChaCha stream per replicate, so results do
/// not depend on how replicates are scheduled.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Prior given either by construction tag or by full descriptor.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Tag(String),
    Descriptor(PriorDescriptor),
}

impl PriorSpec {
    pub fn build(&self, family: &FamilyModel) -> Result<PriorDensity> {
        match self {
            PriorSpec::Tag(t) => priors::from_descriptor(
                family,
                &PriorDescriptor { construction: t.clone(), family_id: family.id(), anchor: None, params: serde_json::json!({}) },
            ),
            PriorSpec::Descriptor(d) => priors::from_descriptor(family, d),
        }
    }
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub family: String,
    #[serde(default)]
    pub family_settings: Settings,
    pub prior: PriorSpec,
    pub theta_true: Vec<f64>,
    pub n: usize,
    pub alphas: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub seed: u64,
    /// Interest coordinate; defaults to the family's.
    #[serde(default)]
    pub interest: Option<usize>,
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 100 {
            return Err(Error::Config(format!("replications must be at least 100, got {}", self.replications)));
        }
        if self.n == 0 {
            return Err(Error::Config("sample size n must be positive".into()));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Config(format!("alphas must be a non-empty list in (0, 1), got {:?}", self.alphas)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlphaCoverage {
    pub alpha: f64,
    /// Nominal P(θ ≤ q_{1−α}) = 1 − α.
    pub nominal: f64,
    pub coverage: f64,
    pub std_error: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoverageResult {
    pub config: CoverageConfig,
    pub per_alpha: Vec<AlphaCoverage>,
    pub failures: usize,
    pub unreliable: bool,
}

impl PartialEq for CoverageConfig {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

impl CoverageResult {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["alpha", "nominal", "coverage", "std_error", "replications", "failures"])?;
        for a in &self.per_alpha {
            w.write_record([
                format!("{:.16e}", a.alpha),
                format!("{:.16e}", a.nominal),
                format!("{:.16e}", a.coverage),
                format!("{:.16e}", a.std_error),
                a.replications.to_string(),
                self.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn get(&self, alpha: f64) -> Option<&AlphaCoverage> {
        self.per_alpha.iter().find(|a| a.alpha == alpha)
    }
}

/// Standard error of a proportion estimated from `r` replicates.
pub fn proportion_se(p: f64, r: usize) -> f64 {
    (p * (1.0 - p) / r as f64).sqrt()
}

/// Replicates needed for a coverage error `err` to stand 3 standard errors clear of zero.
pub fn replications_to_resolve(coverage: f64, err: f64) -> f64 {
    if err == 0.0 { f64::INFINITY } else { 9.0 * coverage * (1.0 - coverage) / (err * err) }
}

// ----------------------------------------------------------------------------
// Marginal posteriors of the interest parameter.

/// The scalar marginal posterior of coordinate `interest`.
pub fn marginal_posterior(family: &FamilyModel, prior: &PriorDensity, data: &DataSample, interest: usize) -> Result<PosteriorGrid> {
    if interest >= family.dim() {
        return Err(Error::Config(format!("interest index {interest} out of range for {}", family.id())));
    }
    if family.dim() == 1 {
        return exact_posterior(family, prior, data);
    }
    match family.id().as_str() {
        "normal" if matches!(prior.construction(), Construction::HaarLeft | Construction::HaarRight) => {
            normal_haar_marginal(prior, data, interest)
        }
        "neyman_scott" => neyman_scott_marginal(family, prior, data, interest),
        _ if family.dim() == 2 => integrated_marginal(family, prior, data, interest),
        id => Err(Error::Precondition(format!("no marginal-posterior recipe for `{id}` with {} parameters", family.dim()))),
    }
}

fn scalar_column(data: &DataSample) -> Vec<f64> {
    data.observations.iter().map(|x| x[0]).collect()
}

fn mean_ss(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum())
}

/// π ∝ σ^{−p}: μ | x has density ∝ (SS + n(μ−x̄)²)^{−(n+p−1)/2}; σ | x ∝ σ^{−(n+p−1)} e^{−SS/2σ²}.
fn normal_haar_marginal(prior: &PriorDensity, data: &DataSample, interest: usize) -> Result<PosteriorGrid> {
    let xs = scalar_column(data);
    let (xbar, ss) = mean_ss(&xs);
    let n = xs.len() as f64;
    if ss <= 0.0 {
        return Err(Error::Domain("sample has no spread; the scale posterior is degenerate".into()));
    }
    // the power of σ is read off the prior itself
    let p = prior.log_density_unchecked(&[0.0, 1.0])? - prior.log_density_unchecked(&[0.0, std::f64::consts::E])?;
    let e = n + p - 1.0;
    let opts = GridOptions::default();
    if interest == 0 {
        let logf: LogDensity1d = Arc::new(move |m: f64| -0.5 * e * (ss + n * (m - xbar).powi(2)).ln());
        PosteriorGrid::from_log_density(CoordMap::Real, logf, xbar, opts)
    } else {
        let logf: LogDensity1d = Arc::new(move |s: f64| if s > 0.0 { -e * s.ln() - ss / (2.0 * s * s) } else { f64::NEG_INFINITY });
        PosteriorGrid::from_log_density(CoordMap::Lower(0.0), logf, (ss / n).sqrt(), opts)
    }
}

/// Sufficient statistic of a Neyman–Scott sample: (cell means, within SS, cells, k).
fn neyman_scott_stats(family: &FamilyModel, data: &DataSample) -> Result<(Vec<f64>, f64, usize, usize)> {
    let n = family.dim() - 1;
    let x = data.observations.first().ok_or_else(|| Error::Domain("empty Neyman–Scott sample".into()))?;
    if data.n() != 1 || x.len() % n != 0 {
        return Err(Error::Domain("a Neyman–Scott sample is one n·k array".into()));
    }
    let k = x.len() / n;
    let means = x.chunks(k).map(|c| c.iter().sum::<f64>() / k as f64).collect();
    Ok((means, within_cell_ss(x, k), n, k))
}

/// Flat in the cell means: σ² | x ∝ π(σ²)·(σ²)^{−n(k−1)/2} e^{−SS/2σ²}.
/// The prior is evaluated at the cell means, so it may depend on σ² only.
fn neyman_scott_marginal(family: &FamilyModel, prior: &PriorDensity, data: &DataSample, interest: usize) -> Result<PosteriorGrid> {
    let (means, ss, n, k) = neyman_scott_stats(family, data)?;
    if interest != n {
        return Err(Error::Precondition("the Neyman–Scott recipe marginalizes onto σ² only".into()));
    }
    let mut probe = means.clone();
    probe.push(1.0);
    let mut shifted: Vec<f64> = means.iter().map(|m| m + 1.0).collect();
    shifted.push(1.0);
    if (prior.log_density_unchecked(&probe)? - prior.log_density_unchecked(&shifted)?).abs() > 1e-10 {
        return Err(Error::Precondition("the Neyman–Scott recipe needs a prior that does not depend on the cell means".into()));
    }
    let dof = (n * (k - 1)) as f64;
    let prior = prior.clone();
    let logf: LogDensity1d = Arc::new(move |s2: f64| {
        if !(s2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut t = means.clone();
        t.push(s2);
        match prior.log_density_unchecked(&t) {
            Ok(lp) => lp - 0.5 * dof * s2.ln() - ss / (2.0 * s2),
            Err(_) => f64::NEG_INFINITY,
        }
    });
    PosteriorGrid::from_log_density(CoordMap::Lower(0.0), logf, ss / dof, GridOptions::default())
}

const NUISANCE_NODES: usize = 16;
const MAX_PANELS: usize = 40;

/// log ∫ exp(ℓ + log π) dφ over the other coordinate of a two-parameter family,
/// by Gauss–Legendre panels around the conditional mode in the unconstrained
/// coordinate (see `integrate_out`).
fn integrated_marginal(family: &FamilyModel, prior: &PriorDensity, data: &DataSample, interest: usize) -> Result<PosteriorGrid> {
    let other = 1 - interest;
    let kernel: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync> = Arc::from(family.loglik_kernel(&data.observations));
    let space = family.space().clone();
    let nuis = space.coord(other);
    let mut start = family.initial_guess(&data.observations);
    if family.check_point(&start).is_err() {
        start = family.anchor();
    }
    let u0 = nuis.to_real(start[other]);
    let prior = prior.clone();
    let joint = move |t: f64, u: f64| -> f64 {
        let mut th = [0.0; 2];
        th[interest] = t;
        th[other] = nuis.from_real(u);
        if !space.contains(&th) {
            return f64::NEG_INFINITY;
        }
        let lp = prior.log_density_unchecked(&th).unwrap_or(f64::NEG_INFINITY);
        let v = kernel(&th) + lp + nuis.log_jacobian(u);
        if v.is_nan() || v == f64::INFINITY { f64::NEG_INFINITY } else { v }
    };
    let logf: LogDensity1d = Arc::new(move |t: f64| integrate_out(|u| joint(t, u), u0).unwrap_or(f64::NEG_INFINITY));
    PosteriorGrid::from_log_density(family.space().coord(interest), logf, start[interest], GridOptions::default())
}

fn integrate_out<H: Fn(f64) -> f64>(h: H, u0: f64) -> Result<f64> {
    let m = maximize(&h, u0, 0.5, 400)?;
    let (us, peak) = (m.x, m.value);
    // widen the probe until the drop is well above roundoff; the conditional
    // can be extremely wide far out in the interest parameter's tail
    let mut d = 1e-3 * us.abs().max(1.0);
    let mut drop = peak - 0.5 * (h(us + d) + h(us - d));
    while drop < 1e-3 && d < 1e300 {
        d *= 16.0;
        drop = peak - 0.5 * (h(us + d) + h(us - d));
    }
    let sd = if drop > 0.0 && drop.is_finite() { d / (2.0 * drop).sqrt() } else { 1.0 };
    let rule = legendre(NUISANCE_NODES);
    let e = |u: f64| (h(u) - peak).exp();
    // Panels march outward from the conditional mode and widen geometrically,
    // so skewed or exponential tails are covered without a fixed window.
    let mut total = 0.0;
    for dir in [-1.0, 1.0] {
        let (mut a, mut w) = (us, sd);
        let mut done = false;
        for _ in 0..MAX_PANELS {
            let b = a + dir * w;
            let part = rule.integrate(a.min(b), a.max(b), e);
            total += part;
            a = b;
            w *= 1.4;
            if h(a) - peak < -40.0 && part <= 1e-17 * total.max(f64::MIN_POSITIVE) {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::ImproperPosterior("conditional posterior of the nuisance parameter does not decay".into()));
        }
    }
    Ok(peak + total.ln())
}

// ----------------------------------------------------------------------------
// Monte Carlo coverage.

struct Prepared {
    family: FamilyModel,
    prior: PriorDensity,
    interest: usize,
}

fn prepare(config: &CoverageConfig) -> Result<Prepared> {
    config.validate()?;
    let family = catalog::build(&config.family, &config.family_settings)?;
    let interest = config.interest.unwrap_or(family.interest_index());
    let family = family.with_interest(interest)?;
    family.check_point(&config.theta_true)?;
    let prior = config.prior.build(&family)?;
    Ok(Prepared { family, prior, interest })
}

/// Indicators θ_true ≤ q_{1−α} for one replicate, or None on numeric failure.
fn replicate(p: &Prepared, config: &CoverageConfig, rep: usize) -> Option<Vec<bool>> {
    let mut rng = replicate_rng(config.seed, rep as u64);
    let data = DataSample::simulate(&p.family, &config.theta_true, config.n, &mut rng).ok()?;
    let post = marginal_posterior(&p.family, &p.prior, &data, p.interest).ok()?;
    let truth = config.theta_true[p.interest];
    config.alphas.iter().map(|&a| post.quantile(1.0 - a).ok().map(|q| truth <= q)).collect()
}

fn summarize(config: &CoverageConfig, outcomes: &[Option<Vec<bool>>]) -> CoverageResult {
    let ok: Vec<&Vec<bool>> = outcomes.iter().flatten().collect();
    let failures = outcomes.len() - ok.len();
    let r = ok.len();
    let per_alpha = config
        .alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let hits = ok.iter().filter(|v| v[j]).count();
            let c = if r > 0 { hits as f64 / r as f64 } else { f64::NAN };
            AlphaCoverage { alpha, nominal: 1.0 - alpha, coverage: c, std_error: proportion_se(c, r), replications: r }
        })
        .collect();
    CoverageResult {
        config: config.clone(),
        per_alpha,
        failures,
        unreliable: failures as f64 >= FAILURE_BUDGET * outcomes.len() as f64,
    }
}

/// Estimate P(θ ≤ q_{1−α} | θ_true) for every α in the configuration.
pub fn simulate_coverage(config: &CoverageConfig) -> Result<CoverageResult> {
    let p = prepare(config)?;
    let outcomes: Vec<Option<Vec<bool>>> = (0..config.replications).into_par_iter().map(|rep| replicate(&p, config, rep)).collect();
    Ok(summarize(config, &outcomes))
}

/// Run `f` on a pool with `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: usize, f: F) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build a thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Thread cap from `PRIORFORGE_THREADS`, if set.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var("PRIORFORGE_THREADS") {
        Err(_) => Ok(0),
        Ok(s) => s.trim().parse::<usize>().map_err(|_| Error::Config(format!("PRIORFORGE_THREADS must be a non-negative integer, got `{s}`"))),
    }
}

// ----------------------------------------------------------------------------
// Exact coverage for the binomial by enumeration.

/// Exact P(p_true ≤ q_{1−α}(S)) with S ~ Binomial(n·m, p_true), summing over every
/// value of the sufficient statistic.
pub fn binomial_exact_coverage(prior: &PriorDensity, m: u64, n: usize, p_true: f64, alpha: f64) -> Result<f64> {
    let mut settings = Settings::new();
    settings.insert("m".into(), m as f64);
    let family = catalog::build("binomial", &settings)?;
    let total = n as u64 * m;
    let mut cov = 0.0;
    for s in 0..=total {
        // spread s successes over n observations of m trials each
        let obs: Vec<Vec<f64>> = (0..n as u64)
            .map(|i| {
                let lo = i * m;
                vec![s.saturating_sub(lo).min(m) as f64]
            })
            .collect();
        let data = DataSample::new(&family, obs)?;
        let q = exact_posterior(&family, prior, &data)?.quantile(1.0 - alpha)?;
        if p_true <= q {
            let t = total as f64;
            let s = s as f64;
            let lp = ln_gamma(t + 1.0) - ln_gamma(s + 1.0) - ln_gamma(t - s + 1.0) + s * p_true.ln() + (t - s) * (-p_true).ln_1p();
            cov += lp.exp();
        }
    }
    Ok(cov)
}

// ----------------------------------------------------------------------------
// Coverage against sample size.

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanRow {
    pub n: usize,
    pub alpha: f64,
    pub coverage: f64,
    pub error: f64,
    pub std_error: f64,
    /// Replicates needed for this error to sit 3 SE from zero.
    pub replications_needed: f64,
    pub failures: usize,
}

/// Coverage error at each sample size, with paired streams (same seed) across n.
pub fn coverage_rate_scan(template: &CoverageConfig, ns: &[usize]) -> Result<Vec<ScanRow>> {
    if ns.len() < 3 {
        return Err(Error::Config("a rate scan needs at least three sample sizes".into()));
    }
    let mut rows = Vec::new();
    for &n in ns {
        let cfg = CoverageConfig { n, ..template.clone() };
        let r = simulate_coverage(&cfg)?;
        for a in &r.per_alpha {
            let err = a.coverage - a.nominal;
            rows.push(ScanRow {
                n,
                alpha: a.alpha,
                coverage: a.coverage,
                error: err,
                std_error: a.std_error,
                replications_needed: replications_to_resolve(a.coverage, err.abs()),
                failures: r.failures,
            });
        }
    }
    Ok(rows)
}

pub fn write_scan_csv<W: std::io::Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "alpha", "coverage", "error", "std_error", "replications_needed", "failures"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:.16e}", r.alpha),
            format!("{:.16e}", r.coverage),
            format!("{:.16e}", r.error),
            format!("{:.16e}", r.std_error),
            format!("{:.16e}", r.replications_needed),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ----------------------------------------------------------------------------
// Exact matching for the normal under the right-Haar prior.

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExactMatchingReport {
    pub n: usize,
    pub seed: u64,
    pub alphas: Vec<f64>,
    /// Datasets on which numeric and closed-form quantiles were compared.
    pub datasets_checked: usize,
    /// Largest |numeric − closed form| / scale over datasets and α, for μ and σ².
    pub max_rel_error_mu: f64,
    pub max_rel_error_sigma2: f64,
    pub identities_hold: bool,
    pub coverage_mu: Vec<AlphaCoverage>,
    pub coverage_sigma2: Vec<AlphaCoverage>,
    pub failures: usize,
}

pub const EXACT_MATCHING_TOL: f64 = 1e-5;

/// Upper quantiles of μ and σ² in closed form: x̄ + t_{n−1,1−α} s/√n and (n−1)s²/χ²_{n−1;α}.
pub fn normal_closed_form_quantiles(xs: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let n = xs.len();
    let (xbar, ss) = mean_ss(xs);
    let dof = (n - 1) as f64;
    let s = (ss / dof).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Domain(e.to_string()))?;
    let chi = ChiSquared::new(dof).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((xbar + t.inverse_cdf(1.0 - alpha) * s / (n as f64).sqrt(), ss / chi.inverse_cdf(alpha)))
}

/// Simulate N(μ, σ²) samples of size n; compare numeric right-Haar posterior
/// quantiles with the closed forms on the first `datasets` samples and
/// estimate coverage from `replications` samples. The identity samples are
/// checked twice: through the analytic marginal kernels and by integrating the
/// other parameter out of the joint posterior numerically.
pub fn exact_matching_normal(n: usize, seed: u64, alphas: &[f64], datasets: usize, replications: usize) -> Result<ExactMatchingReport> {
    if n < 2 {
        return Err(Error::Config("exact matching needs n ≥ 2".into()));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::Config(format!("alphas must lie in (0, 1), got {alphas:?}")));
    }
    let family = catalog::family("normal")?;
    let prior = priors::haar_location_scale(&family, priors::HaarSide::Right)?;
    let truth = [0.0, 1.0];
    let reps = datasets.max(replications);
    type Rep = Option<(f64, f64, Vec<bool>, Vec<bool>)>;
    let results: Vec<Rep> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let xs: Vec<f64> = (0..n).map(|_| truth[0] + truth[1] * rng.sample::<f64, _>(StandardNormal)).collect();
            let data = DataSample::scalar(&family, &xs).ok()?;
            let pm = marginal_posterior(&family, &prior, &data, 0).ok()?;
            let ps = marginal_posterior(&family, &prior, &data, 1).ok()?;
            // the identity datasets also integrate the joint posterior numerically
            let joint = if rep < datasets {
                Some((integrated_marginal(&family, &prior, &data, 0).ok()?, integrated_marginal(&family, &prior, &data, 1).ok()?))
            } else {
                None
            };
            let s = (mean_ss(&xs).1 / (n - 1) as f64).sqrt();
            let (mut em, mut es) = (0.0f64, 0.0f64);
            let mut hm = Vec::new();
            let mut hs = Vec::new();
            for &a in alphas {
                let qm = pm.quantile(1.0 - a).ok()?;
                let qs = ps.quantile(1.0 - a).ok()?.powi(2);
                if let Some((jm, js)) = &joint {
                    let (cm, cs) = normal_closed_form_quantiles(&xs, a).ok()?;
                    let (jqm, jqs) = (jm.quantile(1.0 - a).ok()?, js.quantile(1.0 - a).ok()?.powi(2));
                    // μ relative to its posterior scale, σ² relative to itself
                    let mu_scale = cm.abs().max(s / (n as f64).sqrt());
                    em = em.max((qm - cm).abs().max((jqm - cm).abs()) / mu_scale);
                    es = es.max((qs - cs).abs().max((jqs - cs).abs()) / cs);
                }
                hm.push(truth[0] <= qm);
                hs.push(truth[1] * truth[1] <= qs);
            }
            Some((em, es, hm, hs))
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    let ok: Vec<_> = results.iter().flatten().collect();
    let max_mu = ok.iter().map(|r| r.0).fold(0.0, f64::max);
    let max_s2 = ok.iter().map(|r| r.1).fold(0.0, f64::max);
    let cov = |pick: &dyn Fn(&(f64, f64, Vec<bool>, Vec<bool>)) -> &Vec<bool>| -> Vec<AlphaCoverage> {
        let used: Vec<_> = ok.iter().take(replications).collect();
        alphas
            .iter()
            .enumerate()
            .map(|(j, &alpha)| {
                let c = used.iter().filter(|r| pick(r)[j]).count() as f64 / used.len() as f64;
                AlphaCoverage { alpha, nominal: 1.0 - alpha, coverage: c, std_error: proportion_se(c, used.len()), replications: used.len() }
            })
            .collect()
    };
    Ok(ExactMatchingReport {
        n,
        seed,
        alphas: alphas.to_vec(),
        datasets_checked: datasets,
        max_rel_error_mu: max_mu,
        max_rel_error_sigma2: max_s2,
        identities_hold: failures == 0 && max_mu < EXACT_MATCHING_TOL && max_s2 < EXACT_MATCHING_TOL,
        coverage_mu: cov(&|r| &r.2),
        coverage_sigma2: cov(&|r| &r.3),
        failures,
    })
}

// ----------------------------------------------------------------------------
// Neyman–Scott.

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NeymanScottReport {
    pub n_cells: usize,
    pub k: usize,
    pub sigma_true: f64,
    pub seed: u64,
    pub s_statistic: f64,
    pub jeffreys_mean_closed: f64,
    pub jeffreys_mean_numeric: f64,
    pub jeffreys_mode_closed: f64,
    pub jeffreys_mode_numeric: f64,
    pub reference_mean_closed: f64,
    pub reference_mean_numeric: f64,
    /// Jeffreys mean / σ²_true, which tends to (k−1)/k.
    pub jeffreys_ratio: f64,
    pub jeffreys_limit: f64,
    /// Reference mean / σ²_true, which tends to 1.
    pub reference_ratio: f64,
    pub max_rel_discrepancy: f64,
}

/// Simulate an n_cells × k array with cell means drawn from N(0, 1), then
/// compare closed-form and numerically integrated posterior summaries of σ².
pub fn neyman_scott_experiment(n_cells: usize, k: usize, sigma_true: f64, seed: u64) -> Result<NeymanScottReport> {
    if k < 2 || n_cells < 2 {
        return Err(Error::Config("Neyman–Scott needs k ≥ 2 and at least two cells".into()));
    }
    if !(sigma_true > 0.0) {
        return Err(Error::Config("σ_true must be positive".into()));
    }
    let mut settings = Settings::new();
    settings.insert("n_cells".into(), n_cells as f64);
    settings.insert("k".into(), k as f64);
    let family = catalog::build("neyman_scott", &settings)?;
    let mut rng = replicate_rng(seed, 0);
    let mut theta: Vec<f64> = (0..n_cells).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    theta.push(sigma_true * sigma_true);
    let data = DataSample::simulate(&family, &theta, 1, &mut rng)?;
    let ss = within_cell_ss(&data.observations[0], k);
    let (n, kf) = (n_cells as f64, k as f64);
    let s = ss / (n * (kf - 1.0));

    let jeffreys = priors::jeffreys(&family)?;
    let reference = neyman_scott_reference(&family)?;
    let pj = marginal_posterior(&family, &jeffreys, &data, n_cells)?;
    let pr = marginal_posterior(&family, &reference, &data, n_cells)?;

    let jm = n * (kf - 1.0) * s / (n * kf - 2.0);
    let jmode = n * (kf - 1.0) * s / (n * kf + 2.0);
    let rm = n * (kf - 1.0) * s / (n * (kf - 1.0) - 2.0);
    let (jm_num, rm_num, jmode_num) = (pj.mean(), pr.mean(), pj.mode()?);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let s2 = sigma_true * sigma_true;
    Ok(NeymanScottReport {
        n_cells,
        k,
        sigma_true,
        seed,
        s_statistic: s,
        jeffreys_mean_closed: jm,
        jeffreys_mean_numeric: jm_num,
        jeffreys_mode_closed: jmode,
        jeffreys_mode_numeric: jmode_num,
        reference_mean_closed: rm,
        reference_mean_numeric: rm_num,
        jeffreys_ratio: jm / s2,
        jeffreys_limit: (kf - 1.0) / kf,
        reference_ratio: rm / s2,
        max_rel_discrepancy: rel(jm_num, jm).max(rel(rm_num, rm)).max(rel(jmode_num, jmode)),
    })
}

/// The two-group reference prior for σ² with the cell means as nuisance,
/// built from the orthogonal construction.
pub fn neyman_scott_reference(family: &FamilyModel) -> Result<PriorDensity> {
    priors::reference_orthogonal(&priors::TwoGroupSpec::new(family, family.dim() - 1))
}
