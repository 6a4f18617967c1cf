//! Volume growth off the minimal leaf against the Riccati comparison bound.

use isoflow::catalog::{self, AmbientKind, ShapeSpectrum};
use isoflow::comparison::{self, JacobiComparison};
use isoflow::verify;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for model in catalog::sphere_catalog() {
        let c = comparison::volume_local_max_check(&model)?;
        println!(
            "{model}: minimal leaf θ* = {:.6}, j ≤ j̄ ≤ 1 {} (margin {:.2e}, max j̄ {:.6})",
            c.minimal_leaf, c.passed, c.margin, c.max_jbar
        );
    }

    let clifford = ShapeSpectrum::new(vec![(-1.0, 1), (1.0, 1)], AmbientKind::UnitSphere);
    let cmp = JacobiComparison::new(clifford);
    for s in [0.0, 0.25, 0.5, 0.9] {
        println!(
            "Clifford torus j̄({s}) = {:.15} (product), {:.15} (Riccati), 1 − s² = {:.15}",
            cmp.jbar_product(s)?,
            cmp.jbar_riccati(s)?,
            1.0 - s * s
        );
    }
    let defect = verify::riccati_product_defect(100, verify::DEFAULT_SEED)?;
    println!("Riccati vs product over 100 random spectra: {defect:.2e}");
    Ok(())
}
