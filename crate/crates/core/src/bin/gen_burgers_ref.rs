//! Regenerates the committed Burgers reference grid
//! (`data/burgers_reference.csv`): Cole-Hopf evaluation on a 101x256 grid
//! with a 160-point Gauss-Hermite rule, cross-checked against a 96-point
//! rule before writing.

use ifef_pinn::pde::burgers_ref::{BurgersReference, ColeHopf};
use std::path::PathBuf;

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/burgers_reference.csv"));
    let nu = 0.01 / std::f64::consts::PI;
    let (nt, nx) = (101, 256);

    let reference = BurgersReference::compute(nu, nt, nx, 160);

    // Quadrature convergence check on a subsample.
    let coarse = ColeHopf::new(nu, 96);
    let mut worst = 0.0f64;
    for i in (0..nt).step_by(10) {
        for j in (0..nx).step_by(16) {
            let t = reference.ts[i];
            let x = reference.xs[j];
            worst = worst.max((coarse.eval(t, x) - reference.u[[i, j]]).abs());
        }
    }
    if worst > 1e-6 {
        eprintln!("quadrature has not converged: drift {worst:.3e}");
        std::process::exit(1);
    }

    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).expect("create output directory");
    }
    reference.save_csv(&out).expect("write reference grid");
    let bytes = std::fs::read(&out).expect("re-read for checksum");
    println!(
        "wrote {} ({} points, quadrature drift {worst:.2e}, sha256 {})",
        out.display(),
        nt * nx,
        ifef_pinn::train::manifest::sha256_hex(&bytes)
    );
}
