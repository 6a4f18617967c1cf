//! Principal curvatures, mean curvature and volume density across the leaves
//! of each catalog model.

use isoflow::catalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for model in catalog::standard_catalog() {
        let interval = model.quotient_interval();
        println!("{model}  ambient dim {}  θ_max {:.6}", model.ambient().dim, model.theta_max());
        println!("  lower endpoint {:?}", interval.lower);
        if let Some(upper) = interval.upper {
            println!("  upper endpoint {upper:?}");
        }
        if let Some(m) = model.minimal_leaf() {
            println!("  minimal leaf at θ = {m:.12}");
        }
        let span = if model.is_sphere() { model.theta_max() } else { 2.0 };
        for i in 1..=3 {
            let theta = span * i as f64 / 4.0;
            let spectrum = model.spectrum_at(theta)?;
            let pairs: Vec<String> = spectrum
                .eigenpairs
                .iter()
                .map(|(l, m)| format!("{l:+.4}×{m}"))
                .collect();
            println!(
                "  θ = {theta:.4}: [{}]  tr = {:+.6}  log V = {:+.6}",
                pairs.join(", "),
                spectrum.trace(),
                model.log_volume_density(theta)?
            );
        }
    }
    Ok(())
}
