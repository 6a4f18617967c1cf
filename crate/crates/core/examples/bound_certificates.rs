//! Tube certificates `(δ, c)` around each singular leaf and the rate
//! constants they imply, along a ladder of tube radii.

use isoflow::catalog;
use isoflow::diagnostics;
use isoflow::verify::EPSILON_LADDER;

fn main() {
    for model in catalog::standard_catalog() {
        let ends = [Some(model.lower_endpoint()), model.upper_endpoint()];
        for ep in ends.into_iter().flatten() {
            println!("{model} at θ = {:.6} (D = {})", ep.coordinate, ep.dimension_drop);
            for eps in EPSILON_LADDER {
                match diagnostics::fit_bound_certificate(&model, &ep, eps) {
                    Ok(c) => println!(
                        "  ε = {eps:<5} δ = {:.3}  c = {:.6}  C1 = {:.6}  C2 = {:.6}",
                        c.delta, c.c, c.c1, c.c2
                    ),
                    Err(e) => println!("  ε = {eps:<5} {e}"),
                }
            }
        }
    }
    // tubes that reach past the minimal leaf admit no certificate
    let clifford = catalog::FoliationModel::isoparametric_sphere(2, 1, 1).unwrap();
    if let Err(e) = diagnostics::fit_bound_certificate(&clifford, &clifford.lower_endpoint(), 1.2) {
        println!("{clifford} with ε = 1.2: {e}");
    }
}
