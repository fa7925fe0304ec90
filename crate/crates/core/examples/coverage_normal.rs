//! Frequentist coverage of one-sided posterior quantiles. Under the right-Haar
//! prior σ⁻¹ the normal posterior quantiles are the Student-t and scaled
//! inverse-χ² ones, so coverage is exact at every n. The binomial shows what
//! discreteness does, checked against exact enumeration.

use priorforge::coverage::{self, CoverageConfig};
use priorforge::family::catalog;
use priorforge::priors;

fn main() -> priorforge::Result<()> {
    let rep = coverage::exact_matching_normal(5, 1, &[0.05, 0.5], 200, 4000)?;
    println!(
        "normal n=5: quantile identities {} (max rel. error μ {:.1e}, σ² {:.1e})",
        if rep.identities_hold { "hold" } else { "fail" },
        rep.max_rel_error_mu,
        rep.max_rel_error_sigma2
    );
    for (name, cs) in [("μ", &rep.coverage_mu), ("σ²", &rep.coverage_sigma2)] {
        for c in cs {
            println!("  {name:<3} nominal {:.2}: {:.4} ± {:.4}", c.nominal, c.coverage, c.std_error);
        }
    }

    let b = catalog::family("binomial")?;
    let jeffreys = priors::jeffreys(&b)?;
    for p in [0.1, 0.3, 0.5] {
        let cfg: CoverageConfig = serde_json::from_value(serde_json::json!({
            "family": "binomial", "prior": "jeffreys", "theta_true": [p], "n": 10,
            "alphas": [0.05], "replications": 2000, "seed": 17
        }))?;
        let mc = coverage::simulate_coverage(&cfg)?;
        let exact = coverage::binomial_exact_coverage(&jeffreys, 1, 10, p, 0.05)?;
        println!("binomial p={p}: Monte Carlo {:.4} ± {:.4}, exact {exact:.4}", mc.per_alpha[0].coverage, mc.per_alpha[0].std_error);
    }
    Ok(())
}
