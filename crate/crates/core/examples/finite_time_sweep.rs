//! Every non-minimal leaf of a sphere model collapses in finite time.
//!
//! ```text
//! cargo run --release --example finite_time_sweep -- [grid]
//! ```

use isoflow::catalog;
use isoflow::diagnostics;
use isoflow::flow::{self, FlowOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(20);
    for model in catalog::sphere_catalog() {
        let sweep = diagnostics::finite_time_sweep(&model, grid, &FlowOptions::default())?;
        let longest = sweep.rows.iter().filter_map(|r| r.singular_time).fold(0.0, f64::max);
        println!("{model}: all finite {}, longest T {longest:.6}", sweep.all_finite);
    }

    let model = catalog::FoliationModel::isoparametric_sphere(1, 1, 1)?;
    let sweep = diagnostics::finite_time_sweep(&model, 8, &FlowOptions::default())?;
    println!("{:>10} {:>18} {:>18}", "θ0", "T", "−ln|cos θ0|");
    for row in &sweep.rows {
        let exact = flow::closed_form_singular_time(&model, row.theta0)?;
        println!("{:>10.6} {:>18.12} {:>18.12}", row.theta0, row.singular_time.unwrap_or(f64::NAN), exact);
    }
    Ok(())
}
