//! Temporary diagnostic 3: does the long alternating run converge at desk
//! scale on convection beta=50?

use ifef_pinn::diff::NetworkParams;
use ifef_pinn::eval::GridEvaluator;
use ifef_pinn::pde::{make_convection, sample_uniform, GridSpec};
use ifef_pinn::train::{ifef_train, pretrain_vanilla, TrainConfig};

#[test]
#[ignore]
fn long_alternation() {
    let problem = make_convection(50.0);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![51, 51], boundary_total: 204 },
        0,
    )
    .unwrap();
    let evaluator = GridEvaluator::from_problem(&problem, &[101, 101]).unwrap();

    let widths = vec![2usize, 32, 32, 32];
    let config = TrainConfig { pretrain_epochs: 3000, seed: 0, ..TrainConfig::default() };
    let params0 = NetworkParams::glorot(&widths, true, 7).unwrap();
    let t0 = std::time::Instant::now();
    let (pre, _) = pretrain_vanilla(&problem, &params0, &colloc, &config).unwrap();
    println!("pretrain {:?}, vanilla rel {:.3e}", t0.elapsed(), evaluator.rel_l2_readout(&pre).unwrap());

    for (sigma, lambda_ll, lr) in [(0.1, 1e-2, 1e-3), (0.1, 1.0, 1e-3), (0.15, 1e-2, 3e-3)] {
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            ifef_epochs: 1500,
            d: 200,
            sigma,
            lambda_ll,
            upper_lr: lr,
            gamma: 1e-7,
            seed: 0,
            ..TrainConfig::default()
        };
        let t0 = std::time::Instant::now();
        let out = ifef_train(&problem, &pre, &colloc, &cfg, Some(&evaluator), None).unwrap();
        let rels: Vec<f64> = out
            .records
            .iter()
            .step_by(250)
            .map(|r| r.rel_l2)
            .collect();
        println!(
            "sigma={sigma} lambda={lambda_ll} lr={lr}: rel trace {rels:?} final {:.3e} ({:?})",
            out.final_rel_l2,
            t0.elapsed()
        );
    }
}
