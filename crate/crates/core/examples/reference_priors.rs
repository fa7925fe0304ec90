//! Reference priors two ways: the compact-set limit (numerical) and the
//! orthogonal two-group closed form.

use priorforge::family::catalog;
use priorforge::priors::{self, TwoGroupSpec};

fn main() -> priorforge::Result<()> {
    let normal = catalog::family("normal")?;
    for interest in [0, 1] {
        let p = priors::reference_compact(&normal, interest, None)?;
        let stab = &p.descriptor().params["stabilization"];
        println!("normal, interest {}: log π(1, σ) at σ = 0.5, 2: {:.4} {:.4} (stabilization {stab})",
            normal.param_names()[interest], p.log_density(&[1.0, 0.5])?, p.log_density(&[1.0, 2.0])?);
    }

    let nc = catalog::family("noncentrality")?;
    let p = priors::reference_compact(&nc, 0, None)?;
    let d: Vec<f64> = nc
        .diagnostic_grid()
        .iter()
        .map(|t| Ok(p.log_density(t)? + 0.5 * (t[0] * t[0] + 2.0).ln() + t[1].ln()))
        .collect::<priorforge::Result<_>>()?;
    println!("noncentrality: sd vs (θ²+2)^-1/2 σ^-1 = {:.2e}", priors::std_dev(&d));

    let mut settings = catalog::Settings::new();
    settings.insert("n_cells".into(), 5.0);
    let ns = catalog::build("neyman_scott", &settings)?;
    let r = ns.interest_index();
    let p = priors::reference_orthogonal(&TwoGroupSpec::new(&ns, r))?;
    let mut t = vec![0.0; ns.dim()];
    for s2 in [0.5, 1.0, 4.0] {
        t[r] = s2;
        println!("neyman_scott: log π at σ² = {s2}: {:.4} (−log σ² = {:.4})", p.log_density(&t)?, -f64::ln(s2));
    }

    let fc = catalog::family("fieller_creasy_orth")?;
    let parts = priors::reference_orthogonal_parts(&TwoGroupSpec::new(&fc, 0))?;
    println!("fieller_creasy_orth: log π(2, 1) = {:.4}, −log(1+θ²) = {:.4}", parts.joint.log_density(&[2.0, 1.0])?, -f64::ln(5.0));

    // the (r, u) block of the random-effects information is not diagonal
    let re = catalog::family("random_effects")?;
    match priors::reference_orthogonal(&TwoGroupSpec::new(&re, 1)) {
        Ok(_) => println!("random_effects, interest r: built"),
        Err(e) => println!("random_effects, interest r: {e}"),
    }
    Ok(())
}
