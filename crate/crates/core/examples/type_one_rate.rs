//! Blow-up rate of the second fundamental form: `|A|²(T − t)` tends to
//! `1/(2D)` where `D` is the dimension drop at the limit leaf.

use isoflow::catalog;
use isoflow::flow::FlowOptions;
use isoflow::verify;

fn main() {
    println!("{:<36} {:>8} {:>3} {:>14} {:>10}", "model", "θ0", "D", "limit", "1/(2D)");
    for model in catalog::sphere_catalog() {
        for theta0 in verify::start_grid(&model, 3) {
            match verify::singular_run(&model, theta0, &FlowOptions::default(), 0.1) {
                Ok(run) => println!(
                    "{:<36} {theta0:>8.4} {:>3} {:>14.10} {:>10.6}",
                    model.to_string(),
                    run.dimension_drop,
                    run.type1.limit,
                    0.5 / run.dimension_drop as f64
                ),
                Err(e) => println!("{model} θ0 = {theta0}: {e}"),
            }
        }
    }
}
