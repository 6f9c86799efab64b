//! Reference solution for the viscous Burgers benchmark.
//!
//! The initial-value problem u_t + u u_x = nu u_xx, u(0, x) = -sin(pi x) has
//! the classical Cole-Hopf representation
//!
//!   u(x, t) = - int sin(pi(x-e)) f(x-e) exp(-e^2/(4 nu t)) de
//!             / int f(x-e) exp(-e^2/(4 nu t)) de,
//!   f(y)    = exp(-cos(pi y) / (2 pi nu)),
//!
//! which Gauss-Hermite quadrature evaluates to near machine precision. The
//! grid this produces is committed as `data/burgers_reference.csv` (layout:
//! `t,x,u` per line after a `#` comment header, t-major) and regenerated by
//! the `gen-burgers-ref` binary.

use crate::error::{IfefError, Result};
use ndarray::Array2;
use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::path::Path;

/// Nodes and weights for int e^{-x^2} g(x) dx (physicists' convention).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let mut z = 0.0;
    for i in 0..m {
        // Stroud & Secrest style initial guesses, then Newton on the
        // orthonormal Hermite recurrence.
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Cole-Hopf evaluator with a fixed quadrature rule.
pub struct ColeHopf {
    nu: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ColeHopf {
    pub fn new(nu: f64, quad_points: usize) -> Self {
        let (nodes, weights) = gauss_hermite(quad_points);
        ColeHopf { nu, nodes, weights }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        if t <= 0.0 {
            return -(PI * x).sin();
        }
        let s = (4.0 * self.nu * t).sqrt();
        let a = 1.0 / (2.0 * PI * self.nu);
        let mut num = 0.0;
        let mut den = 0.0;
        for (z, w) in self.nodes.iter().zip(&self.weights) {
            let y = x - s * z;
            let f = (-a * (PI * y).cos()).exp();
            num += w * (PI * y).sin() * f;
            den += w * f;
        }
        -num / den
    }
}

/// Loaded reference grid: t-major values on a tensor grid.
pub struct BurgersReference {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    pub u: Array2<f64>,
}

impl BurgersReference {
    /// Compute the grid directly (what the committed file contains).
    pub fn compute(nu: f64, nt: usize, nx: usize, quad_points: usize) -> Self {
        let solver = ColeHopf::new(nu, quad_points);
        let ts: Vec<f64> = (0..nt).map(|i| i as f64 / (nt - 1) as f64).collect();
        let xs: Vec<f64> = (0..nx).map(|j| -1.0 + 2.0 * j as f64 / (nx - 1) as f64).collect();
        let mut u = Array2::zeros((nt, nx));
        for (i, &t) in ts.iter().enumerate() {
            for (j, &x) in xs.iter().enumerate() {
                u[[i, j]] = solver.eval(t, x);
            }
        }
        BurgersReference { ts, xs, u }
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("csv.tmp");
        {
            let file = std::fs::File::create(&tmp)
                .map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
            let mut w = std::io::BufWriter::new(file);
            let write = |w: &mut dyn Write| -> std::io::Result<()> {
                writeln!(w, "# viscous burgers reference grid, cole-hopf / gauss-hermite")?;
                writeln!(w, "# rows are t-major; columns: t,x,u")?;
                writeln!(w, "t,x,u")?;
                for (i, &t) in self.ts.iter().enumerate() {
                    for (j, &x) in self.xs.iter().enumerate() {
                        writeln!(w, "{:e},{:e},{:e}", t, x, self.u[[i, j]])?;
                    }
                }
                Ok(())
            };
            write(&mut w).map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| IfefError::io(path.display().to_string(), e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| IfefError::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);
        let mut triples: Vec<(f64, f64, f64)> = Vec::new();
        for line in reader.lines() {
            let line = line.map_err(|e| IfefError::io(path.display().to_string(), e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.ok_or_else(|| IfefError::config(format!("short line in {}", path.display())))?
                    .parse::<f64>()
                    .map_err(|e| IfefError::config(format!("bad number in {}: {e}", path.display())))
            };
            triples.push((parse(it.next())?, parse(it.next())?, parse(it.next())?));
        }
        if triples.is_empty() {
            return Err(IfefError::config(format!("empty reference file {}", path.display())));
        }
        let mut ts: Vec<f64> = Vec::new();
        let mut xs: Vec<f64> = Vec::new();
        for (t, x, _) in &triples {
            if ts.last() != Some(t) {
                ts.push(*t);
            }
            if ts.len() == 1 {
                xs.push(*x);
            }
        }
        let (nt, nx) = (ts.len(), xs.len());
        if nt * nx != triples.len() {
            return Err(IfefError::config(format!(
                "reference file {} is not a {}x{} grid",
                path.display(),
                nt,
                nx
            )));
        }
        let mut u = Array2::zeros((nt, nx));
        for (k, (_, _, v)) in triples.into_iter().enumerate() {
            u[[k / nx, k % nx]] = v;
        }
        Ok(BurgersReference { ts, xs, u })
    }
}
