//! Chi-square (GML) priors next to Jeffreys, moment-matching and Hartigan's
//! prior for the one-parameter catalog families.
//!
//! Each prior is pinned to zero at the family anchor, so the printed columns
//! are log π(θ) values that can be compared across constructions directly.

use priorforge::family::catalog;
use priorforge::priors;

fn main() -> priorforge::Result<()> {
    for id in ["binomial", "poisson", "exp_scale", "normal_known_var"] {
        let f = catalog::family(id)?;
        let gml = priors::gml_prior(&f, None)?;
        let jef = priors::jeffreys(&f)?;
        let mm = priors::moment_matching_prior(&f, None)?;
        let hart = priors::hartigan_ml_prior(&f)?;
        println!("{id} (anchor {:?})", f.anchor());
        println!("  {:>10} {:>10} {:>10} {:>10} {:>10}", "theta", "gml", "jeffreys", "moment", "hartigan");
        for t in f.space().grid(7) {
            println!(
                "  {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                t[0],
                gml.log_density(&t)?,
                jef.log_density(&t)?,
                mm.log_density(&t)?,
                hart.log_density(&t)?
            );
        }
    }

    // Binomial GML is Beta(1/4, 1/4): the log prior minus −¾ log p(1−p) is flat.
    let b = catalog::family("binomial")?;
    let gml = priors::gml_prior(&b, None)?;
    let d: Vec<f64> = b
        .space()
        .grid(33)
        .iter()
        .map(|t| gml.log_density(t).map(|v| v + 0.75 * (t[0] * (1.0 - t[0])).ln()))
        .collect::<priorforge::Result<_>>()?;
    println!("binomial GML vs p^-3/4 (1-p)^-3/4: sd of log difference {:.2e}", priors::std_dev(&d));
    Ok(())
}
