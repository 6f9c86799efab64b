//! Temporary diagnostic (not part of the suite): inspect the one-shot solve
//! quality on desk-scale convection. Run with:
//! cargo test --release -p ifef-pinn --test scratch_diag -- --nocapture --ignored

use ifef_pinn::diff::NetworkParams;
use ifef_pinn::eval::GridEvaluator;
use ifef_pinn::features::{sample_rff, Extension, FeatureBasis};
use ifef_pinn::pde::{build_design, make_convection, sample_uniform, GridSpec};
use ifef_pinn::qp::{assemble_from_design, direct_loss, solve_regularized};
use ifef_pinn::train::{pretrain_vanilla, TrainConfig};

#[test]
#[ignore]
fn diagnose_convection_oneshot() {
    let problem = make_convection(50.0);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![51, 51], boundary_total: 204 },
        0,
    )
    .unwrap();
    // Finer off-grid set to measure the true residual between points.
    let fine = sample_uniform(
        &problem,
        &GridSpec { interior: vec![128, 128], boundary_total: 204 },
        0,
    )
    .unwrap();
    let evaluator = GridEvaluator::from_problem(&problem, &[101, 101]).unwrap();

    for widths in [vec![2usize, 48, 48, 48], vec![2, 64, 64, 64, 64]] {
        let mut config = TrainConfig {
            pretrain_epochs: 3000,
            upper_lr: 1e-3,
            ..TrainConfig::default()
        };
        config.seed = 0;
        let params0 = NetworkParams::glorot(&widths, true, 7).unwrap();
        let t0 = std::time::Instant::now();
        let (pre, trace) = pretrain_vanilla(&problem, &params0, &colloc, &config).unwrap();
        let pre_rel = evaluator.rel_l2_readout(&pre).unwrap();
        println!(
            "net {widths:?}: pretrain {:?} loss {:.3e} -> {:.3e}, vanilla rel_l2 {pre_rel:.3e}",
            t0.elapsed(),
            trace[0],
            trace.last().unwrap()
        );

        let hidden = pre.without_readout();
        for d in [100usize, 200, 400, 800] {
            for sigma in [0.3, 1.0] {
                let ext = Extension::Rff(sample_rff(d, hidden.hidden_dim(), sigma, 99).unwrap());
                let basis = FeatureBasis::new(hidden.clone(), ext).unwrap();
                let design = build_design(&problem, &basis, &colloc).unwrap();
                let sys = assemble_from_design(&design, 1e-2).unwrap();
                let theta = match solve_regularized(&sys, 1e-7) {
                    Ok(t) => t,
                    Err(e) => {
                        println!("  d={d} sigma={sigma}: solve failed: {e}");
                        continue;
                    }
                };
                let rel = evaluator.rel_l2_basis(&basis, &theta).unwrap();
                let fit = sys.quadratic_value(&theta);
                // Residual on the finer grid (board for aliasing).
                let fine_design = build_design(&problem, &basis, &fine).unwrap();
                let fine_loss = direct_loss(&fine_design, 1e-2, &theta);
                println!(
                    "  d={d} sigma={sigma}: fit {fit:.3e}, fine-grid loss {fine_loss:.3e}, rel_l2 {rel:.3e}, |theta| {:.2e}",
                    theta.0.dot(&theta.0).sqrt()
                );
            }
        }
    }
}
