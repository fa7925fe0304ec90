//! First- and second-order probability-matching checks, plus the existence
//! test for a second-order matching prior.

use priorforge::family::catalog;
use priorforge::matching;
use priorforge::priors;

fn main() -> priorforge::Result<()> {
    for id in ["binomial", "poisson", "exp_scale", "bvn_rho"] {
        let f = catalog::family(id)?;
        let g = matching::default_grid(f.space());
        let j = priors::jeffreys(&f)?;
        let first = matching::first_order_residual(&j, &f, &g)?;
        let second = matching::second_order_residual(&j, &f, &g)?;
        let exists = matching::second_order_existence(&f, &g)?;
        println!(
            "{id:>10}  jeffreys first: {:<8} second: {:<8} existence: {}",
            first.verdict.as_str(),
            second.verdict.as_str(),
            exists.verdict.as_str()
        );
    }

    let b = catalog::family("binomial")?;
    let u = matching::first_order_residual(&priors::uniform(&b)?, &b, &matching::default_grid(b.space()))?;
    println!("binomial uniform first order: {} (max scaled residual {:.3})", u.verdict.as_str(), u.max_scaled_residual);

    // orthogonal nuisance parameters: π = h(φ) × I₁₁^{1/2}; only some h are second order
    let fc = catalog::family("fieller_creasy_orth")?;
    let g = fc.space().grid(9);
    for (name, h) in [("h = 1", (|_: &[f64]| 1.0) as fn(&[f64]) -> f64), ("h = φ", |t: &[f64]| t[1])] {
        let r = matching::orthogonal_second_order_residual(h, &fc, &g)?;
        println!("fieller_creasy_orth {name}: {}", r.verdict.as_str());
    }
    Ok(())
}
