//! Level-set realizations: the mean curvature computed from the Hessian of
//! an ambient function agrees with the catalog, and points moved by their
//! mean curvature vector follow the reduced flow.

use isoflow::catalog;
use isoflow::extrinsic;
use isoflow::verify;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(verify::DEFAULT_SEED);
    for model in catalog::standard_catalog() {
        let Some(f) = extrinsic::level_set_for(model) else {
            println!("{model}: no level-set realization");
            continue;
        };
        let oracle = verify::oracle_agreement(f.as_ref(), &model, 50, &mut rng)?;
        let theta0 = verify::start_grid(&model, 3)[1];
        let particle = verify::particle_agreement(&model, theta0, 0.9, 2000, &mut rng)?;
        println!("{model}: trace defect {oracle:.2e}, particle path defect {particle:.2e}");
    }

    let model = catalog::FoliationModel::isoparametric_sphere(2, 1, 1)?;
    let f = extrinsic::level_set_for(model).expect("Clifford quadric");
    let x = extrinsic::sample_leaf_point(f.as_ref(), 0.5, &mut rng)?;
    let shape = extrinsic::shape_operator(f.as_ref(), &x)?;
    println!("shape operator of the θ = 0.5 Clifford torus: eigenvalues {:?}", shape.eigenvalues.as_slice());
    println!("catalog: {:?}", model.spectrum_at(0.5)?.eigenpairs);
    Ok(())
}
