//! First zero of the comparison solution as a function of the curvature
//! constant `K`, and the focal-to-strata distance ratio of sphere models.

use isoflow::catalog;
use isoflow::comparison;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for k in [0.0, 0.1, 0.25, 0.26, 0.3, 0.5, 1.0, 1.25, 2.0, 10.0, 100.0] {
        let closed = comparison::first_zero_closed_form(k);
        let numeric = comparison::first_zero_numeric(k)?;
        let res = comparison::sigma_lower_bound(k)?;
        println!("K = {k:<6} σ = {:.12}  closed {closed:?}  numeric {numeric:?}", res.sigma);
    }
    println!("1 − e^−π = {:.12}", -(-std::f64::consts::PI).exp_m1());
    for model in catalog::sphere_catalog() {
        let c = comparison::focal_strata_check(&model, 1.0)?;
        println!("{model}: worst focal/strata ratio {:.12} ≥ σ = {:.6}: {}", c.worst_ratio, c.sigma, c.passed);
    }
    Ok(())
}
