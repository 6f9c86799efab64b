//! Temporary diagnostic 2: feature-bandwidth sweep for the one-shot solve.

use ifef_pinn::diff::{NetworkParams, Tape};
use ifef_pinn::eval::GridEvaluator;
use ifef_pinn::features::{sample_rff, Extension, FeatureBasis};
use ifef_pinn::pde::{build_design, make_convection, sample_uniform, GridSpec};
use ifef_pinn::qp::{assemble_from_design, direct_loss, solve_regularized};
use ifef_pinn::train::{ifef_train, pretrain_vanilla, TrainConfig};

#[test]
#[ignore]
fn bandwidth_sweep() {
    let problem = make_convection(50.0);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![51, 51], boundary_total: 204 },
        0,
    )
    .unwrap();
    let fine = sample_uniform(
        &problem,
        &GridSpec { interior: vec![127, 127], boundary_total: 204 },
        0,
    )
    .unwrap();
    let evaluator = GridEvaluator::from_problem(&problem, &[101, 101]).unwrap();

    let widths = vec![2usize, 32, 32, 32];
    let config = TrainConfig { pretrain_epochs: 3000, seed: 0, ..TrainConfig::default() };
    let params0 = NetworkParams::glorot(&widths, true, 7).unwrap();
    let (pre, _) = pretrain_vanilla(&problem, &params0, &colloc, &config).unwrap();
    let pre_rel = evaluator.rel_l2_readout(&pre).unwrap();
    let hidden = pre.without_readout();

    // Hidden-gradient magnitudes over a subsample of collocation points.
    let mut ht = Vec::new();
    let mut hx = Vec::new();
    for x in colloc.interior.iter().step_by(37) {
        let tape = Tape::forward(&hidden, x, 1).unwrap();
        let g = &tape.output().grad;
        ht.push(g.column(0).dot(&g.column(0)).sqrt());
        hx.push(g.column(1).dot(&g.column(1)).sqrt());
    }
    let stat = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().cloned().fold(0.0f64, f64::max);
        (mean, max)
    };
    println!(
        "vanilla rel {pre_rel:.3e}; |h_t| mean/max {:?}, |h_x| mean/max {:?}",
        stat(&ht),
        stat(&hx)
    );

    for sigma in [0.02, 0.05, 0.1, 0.15, 0.25, 0.5] {
        let ext = Extension::Rff(sample_rff(200, hidden.hidden_dim(), sigma, 99).unwrap());
        let basis = FeatureBasis::new(hidden.clone(), ext).unwrap();
        let design = build_design(&problem, &basis, &colloc).unwrap();
        let sys = assemble_from_design(&design, 1e-2).unwrap();
        for gamma in [1e-7, 1e-4] {
            match solve_regularized(&sys, gamma) {
                Ok(theta) => {
                    let rel = evaluator.rel_l2_basis(&basis, &theta).unwrap();
                    let fine_design = build_design(&problem, &basis, &fine).unwrap();
                    let fine_loss = direct_loss(&fine_design, 1e-2, &theta);
                    println!(
                        "sigma={sigma} gamma={gamma:.0e}: fit {:.2e}, fine {:.2e}, rel_l2 {:.3e}, |th| {:.1e}",
                        sys.quadratic_value(&theta),
                        fine_loss,
                        rel,
                        theta.0.dot(&theta.0).sqrt()
                    );
                }
                Err(e) => println!("sigma={sigma} gamma={gamma:.0e}: {e}"),
            }
        }
    }

    // A short alternating run at the best-looking sigma.
    for sigma in [0.1, 0.15] {
        let mut cfg = TrainConfig {
            pretrain_epochs: 0,
            ifef_epochs: 200,
            d: 200,
            sigma,
            seed: 0,
            ..TrainConfig::default()
        };
        cfg.gamma = 1e-7;
        let t0 = std::time::Instant::now();
        let out = ifef_train(&problem, &pre, &colloc, &cfg, Some(&evaluator), None).unwrap();
        println!(
            "ifef 200 epochs sigma={sigma}: rel {:.3e} (first epoch rel {:.3e}), {:?}",
            out.final_rel_l2,
            out.records.first().map(|r| r.rel_l2).unwrap_or(f64::NAN),
            t0.elapsed()
        );
    }
}
