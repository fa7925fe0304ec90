//! Invariance under reparameterization: the GML prior computed natively in
//! logit coordinates, pushed back to p with Jacobian power 1, agrees with the
//! prior computed in p. Jeffreys behaves the same way; a flat prior does not.

use priorforge::family::catalog;
use priorforge::family::transform::Transform;
use priorforge::priors;

fn main() -> priorforge::Result<()> {
    let b = catalog::family("binomial")?;
    let logit = b.reparameterized(Transform::logit());
    let grid = b.space().grid(33);

    for (name, native, in_logit) in [
        ("gml", priors::gml_prior(&b, None)?, priors::gml_prior(&logit, None)?),
        ("jeffreys", priors::jeffreys(&b)?, priors::jeffreys(&logit)?),
        ("uniform", priors::uniform(&b)?, priors::uniform(&logit)?),
    ] {
        let pushed = priors::reparameterize(&in_logit, &Transform::logistic(), 1.0)?;
        let s = priors::log_difference_spread(&pushed, &native, &grid)?;
        println!("{name:>9}: sd of log difference after the round trip {s:.3e}");
    }
    Ok(())
}
