//! The asymptotic expansion of the standardized posterior against the exact
//! (quadrature) posterior, for a binomial sample under the Jeffreys prior.
//! Writes the comparison table to `expansion.csv` in the working directory
//! when run with `--csv`.

use priorforge::family::catalog;
use priorforge::posterior::{self, DataSample};
use priorforge::priors;

fn main() -> priorforge::Result<()> {
    let b = catalog::family("binomial")?;
    let prior = priors::jeffreys(&b)?;
    let ts = posterior::t_grid(-3.0, 3.0, 61);
    for (k, n) in [(6, 20), (24, 80), (96, 320)] {
        let xs: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        let data = DataSample::scalar(&b, &xs)?;
        let post = posterior::exact_posterior(&b, &prior, &data)?;
        let c = posterior::expansion_coefficients(&b, &data, &prior)?;
        let rows = posterior::expansion_comparison(&post, &c, &ts)?;
        let m = posterior::posterior_mean_expansion(&c);
        println!(
            "n = {n:>3}: sup error order 0 {:.2e}, order 1 {:.2e}, order 2 {:.2e}; mean {:.6} vs expansion {:.6}",
            posterior::expansion_sup_error(&rows, 0),
            posterior::expansion_sup_error(&rows, 1),
            posterior::expansion_sup_error(&rows, 2),
            post.mean(),
            m.mean
        );
        if n == 20 && std::env::args().any(|a| a == "--csv") {
            posterior::write_comparison_csv(&rows, std::fs::File::create("expansion.csv")?)?;
        }
    }
    Ok(())
}
