//! Evaluation: relative L2 error on tensor grids (or the stored Burgers
//! reference), error-map export, and the frequency-domain spectrum analysis.

use crate::diff::{hidden_values, NetworkParams};
use crate::error::{IfefError, Result};
use crate::features::FeatureBasis;
use crate::pde::burgers_ref::BurgersReference;
use crate::pde::{GridSpec, PdeProblem};
use crate::qp::Theta;
use crate::train::TrainConfig;
use ndarray::Array1;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// ||pred - exact||_2 / ||exact||_2.
pub fn relative_l2(pred: &[f64], exact: &[f64]) -> Result<f64> {
    if pred.len() != exact.len() {
        return Err(IfefError::config(format!(
            "length mismatch: {} predictions vs {} references",
            pred.len(),
            exact.len()
        )));
    }
    let norm: f64 = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(IfefError::UndefinedMetric(
            "reference is identically zero on the grid".into(),
        ));
    }
    let diff: f64 = pred.iter().zip(exact).map(|(p, e)| (p - e) * (p - e)).sum::<f64>().sqrt();
    Ok(diff / norm)
}

/// Relative error plus the per-point absolute error map.
pub struct ErrorReport {
    pub relative_l2: f64,
    pub abs_errors: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl ErrorReport {
    /// CSV export: one line per point, coordinates then the absolute error.
    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let tmp = path.with_extension("tmp");
        {
            let file = std::fs::File::create(&tmp)
                .map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
            let mut w = std::io::BufWriter::new(file);
            let dim = self.points.first().map(|p| p.len()).unwrap_or(0);
            let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
            writeln!(w, "{},abs_error", header.join(","))
                .map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
            for (p, err) in self.points.iter().zip(&self.abs_errors) {
                let coords: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{},{:e}", coords.join(","), err)
                    .map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
            }
        }
        std::fs::rename(&tmp, path).map_err(|e| IfefError::io(path.display().to_string(), e))
    }
}

/// A fixed evaluation grid with reference values.
pub struct GridEvaluator {
    pub points: Vec<Vec<f64>>,
    pub exact: Vec<f64>,
    pub grid_shape: Vec<usize>,
}

impl GridEvaluator {
    /// Uniform tensor grid over the problem domain against its closed form.
    pub fn from_problem(problem: &PdeProblem, per_axis: &[usize]) -> Result<Self> {
        let exact_fn = problem
            .exact
            .as_ref()
            .ok_or_else(|| IfefError::config(format!("{} has no closed form", problem.name)))?;
        if per_axis.len() != problem.dim {
            return Err(IfefError::config("evaluation grid dimension mismatch"));
        }
        let axes: Vec<Vec<f64>> = problem
            .domain
            .iter()
            .zip(per_axis)
            .map(|((lo, hi), &n)| {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect()
            })
            .collect();
        let mut points = Vec::new();
        for &a in &axes[0] {
            for &b in &axes[1] {
                points.push(vec![a, b]);
            }
        }
        let exact = points.iter().map(|p| exact_fn(p)).collect();
        Ok(GridEvaluator { points, exact, grid_shape: per_axis.to_vec() })
    }

    /// The stored Burgers grid.
    pub fn from_burgers_reference(reference: &BurgersReference) -> Self {
        let mut points = Vec::with_capacity(reference.ts.len() * reference.xs.len());
        let mut exact = Vec::with_capacity(points.capacity());
        for (i, &t) in reference.ts.iter().enumerate() {
            for (j, &x) in reference.xs.iter().enumerate() {
                points.push(vec![t, x]);
                exact.push(reference.u[[i, j]]);
            }
        }
        GridEvaluator {
            points,
            exact,
            grid_shape: vec![reference.ts.len(), reference.xs.len()],
        }
    }

    fn predictions<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let chunks: Vec<Result<Vec<f64>>> = self
            .points
            .par_chunks(256)
            .map(|chunk| chunk.iter().map(|x| f(x)).collect())
            .collect();
        let mut out = Vec::with_capacity(self.points.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    pub fn rel_l2_basis(&self, basis: &FeatureBasis, theta: &Theta) -> Result<f64> {
        let pred = self.predictions(|x| basis.predict(x, &theta.0))?;
        relative_l2(&pred, &self.exact)
    }

    pub fn rel_l2_readout(&self, params: &NetworkParams) -> Result<f64> {
        let w = params
            .readout
            .as_ref()
            .ok_or_else(|| IfefError::config("readout evaluation needs a readout row"))?;
        let row = w.row(0).to_owned();
        let pred = self.predictions(|x| Ok(hidden_values(params, x)?.dot(&row)))?;
        relative_l2(&pred, &self.exact)
    }

    pub fn report_basis(&self, basis: &FeatureBasis, theta: &Theta) -> Result<ErrorReport> {
        let pred = self.predictions(|x| basis.predict(x, &theta.0))?;
        let rel = relative_l2(&pred, &self.exact)?;
        let abs_errors = pred.iter().zip(&self.exact).map(|(p, e)| (p - e).abs()).collect();
        Ok(ErrorReport { relative_l2: rel, abs_errors, points: self.points.clone() })
    }
}

/// Spectrum-analysis settings: target frequencies/amplitudes, the evaluation
/// grid resolution on [0,1], the time slice, and the feature-count sweep.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SpectrumConfig {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub grid_points: usize,
    pub time_slice: f64,
    pub d_sweep: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frequencies.len() != self.amplitudes.len() {
            return Err(IfefError::config("frequencies and amplitudes must pair up"));
        }
        if self.frequencies.is_empty() {
            return Err(IfefError::config("need at least one target frequency"));
        }
        for &f in &self.frequencies {
            if f >= self.grid_points as f64 / 2.0 {
                return Err(IfefError::config(format!(
                    "frequency {f} is not resolvable on {} grid points (aliasing)",
                    self.grid_points
                )));
            }
        }
        Ok(())
    }
}

/// Normalized magnitude at each target frequency: the prediction is sampled
/// on the M-point grid x_m = m/M, projected onto e^{-2 pi i f x} directly,
/// scaled so a unit-amplitude sinusoid gives 1, and divided by A_i.
pub fn spectrum_magnitudes(
    u: &dyn Fn(f64) -> f64,
    config: &SpectrumConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let m = config.grid_points;
    let values: Vec<f64> = (0..m).map(|i| u(i as f64 / m as f64)).collect();
    Ok(config
        .frequencies
        .iter()
        .zip(&config.amplitudes)
        .map(|(&f, &a)| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, &v) in values.iter().enumerate() {
                let phase = TAU * f * i as f64 / m as f64;
                re += v * phase.cos();
                im -= v * phase.sin();
            }
            2.0 * (re * re + im * im).sqrt() / m as f64 / a
        })
        .collect())
}

/// One row of the spectrum table.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectrumRow {
    pub label: String,
    pub magnitudes: Vec<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SpectrumTable {
    pub frequencies: Vec<f64>,
    pub rows: Vec<SpectrumRow>,
}

impl SpectrumTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("basis");
        for f in &self.frequencies {
            out.push_str(&format!(",f{f}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.label);
            for v in &row.magnitudes {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Settings of one spectrum experiment run (on top of the spectral targets).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SpectrumRunConfig {
    pub hidden: Vec<usize>,
    pub grid: GridSpec,
    pub train: TrainConfig,
}

/// The spectrum experiment: pre-train the plain readout network once per
/// seed, then one-shot solve the lower problem for every feature count in
/// the sweep (nested feature matrices come for free from the counter-based
/// sampler). Magnitudes are averaged over seeds; failed cells are recorded
/// and skipped in the average.
pub fn spectrum_experiment(
    spectrum: &SpectrumConfig,
    run: &SpectrumRunConfig,
) -> Result<SpectrumTable> {
    spectrum.validate()?;
    let problem =
        crate::pde::make_multiscale_convection(&spectrum.frequencies, &spectrum.amplitudes);

    let nf = spectrum.frequencies.len();
    let mut labels = vec!["vanilla".to_string()];
    labels.extend(spectrum.d_sweep.iter().map(|d| format!("d{d}")));
    let mut sums = vec![vec![0.0f64; nf]; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    let mut failures = vec![0usize; labels.len()];

    for &seed in &spectrum.seeds {
        let mut config = run.train.clone();
        config.seed = seed;
        let plan = config.seeds();
        let mut dims = vec![problem.dim];
        dims.extend(&run.hidden);
        let params0 = NetworkParams::glorot(&dims, true, plan.network)?;
        let colloc = crate::pde::sample_uniform(&problem, &run.grid, plan.sampling)?;

        let (pretrained, _) =
            crate::train::pretrain_vanilla(&problem, &params0, &colloc, &config)?;

        // Vanilla row: the readout network itself.
        let w = pretrained.readout.clone().unwrap();
        let row = w.row(0).to_owned();
        let t0 = spectrum.time_slice;
        let vanilla_u = |x: f64| -> f64 {
            hidden_values(&pretrained, &[t0, x]).map(|h| h.dot(&row)).unwrap_or(f64::NAN)
        };
        match spectrum_magnitudes(&vanilla_u, spectrum) {
            Ok(mags) if mags.iter().all(|v| v.is_finite()) => {
                for (s, v) in sums[0].iter_mut().zip(&mags) {
                    *s += v;
                }
                counts[0] += 1;
            }
            _ => failures[0] += 1,
        }

        for (di, &d) in spectrum.d_sweep.iter().enumerate() {
            let mut cell_cfg = config.clone();
            cell_cfg.d = d;
            cell_cfg.ifef_epochs = 0;
            cell_cfg.pretrain_epochs = 0;
            let result = crate::train::ifef_train(
                &problem,
                &pretrained,
                &colloc,
                &cell_cfg,
                None,
                None,
            );
            match result {
                Ok(out) => {
                    let basis = FeatureBasis::new(out.params.clone(), out.extension.clone())?;
                    let theta: Array1<f64> = out.theta.0.clone();
                    let u = |x: f64| -> f64 {
                        basis.predict(&[t0, x], &theta).unwrap_or(f64::NAN)
                    };
                    match spectrum_magnitudes(&u, spectrum) {
                        Ok(mags) if mags.iter().all(|v| v.is_finite()) => {
                            for (s, v) in sums[di + 1].iter_mut().zip(&mags) {
                                *s += v;
                            }
                            counts[di + 1] += 1;
                        }
                        _ => failures[di + 1] += 1,
                    }
                }
                Err(_) => failures[di + 1] += 1,
            }
        }
    }

    let rows = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| SpectrumRow {
            label,
            magnitudes: sums[i]
                .iter()
                .map(|s| if counts[i] > 0 { s / counts[i] as f64 } else { f64::NAN })
                .collect(),
            failures: failures[i],
        })
        .collect();
    Ok(SpectrumTable { frequencies: spectrum.frequencies.clone(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config() -> SpectrumConfig {
        SpectrumConfig {
            frequencies: vec![1.0, 2.0, 5.0, 10.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
            amplitudes: vec![1.0; 10],
            grid_points: 512,
            time_slice: 0.0,
            d_sweep: vec![],
            seeds: vec![],
        }
    }

    #[test]
    fn relative_l2_identities() {
        let e = vec![1.0, 2.0, -1.0, 0.5];
        assert_eq!(relative_l2(&e, &e).unwrap(), 0.0);
        let doubled: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
        assert!((relative_l2(&doubled, &e).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            relative_l2(&e, &[0.0; 4]),
            Err(IfefError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn relative_l2_orthogonal_perturbation() {
        // exact spans one direction; eps orthogonal with norm ratio 0.1.
        let exact = vec![1.0, 1.0, 0.0, 0.0];
        let norm = 2.0f64.sqrt();
        let eps = [0.0, 0.0, 1.0, -1.0];
        let scale = 0.1 * norm / 2.0f64.sqrt();
        let pred: Vec<f64> =
            exact.iter().zip(&eps).map(|(e, d)| e + scale * d).collect();
        let r = relative_l2(&pred, &exact).unwrap();
        assert!((r - 0.1).abs() < 1e-12, "{r}");
    }

    #[test]
    fn unit_sinusoid_calibrates_to_one() {
        let cfg = base_config();
        let u = |x: f64| (TAU * 5.0 * x).sin();
        let mags = spectrum_magnitudes(&u, &cfg).unwrap();
        assert!((mags[2] - 1.0).abs() < 1e-10, "{}", mags[2]);
        // Off-target bins of a pure tone are empty.
        assert!(mags[0].abs() < 1e-10);
    }

    #[test]
    fn multi_sinusoid_hits_one_everywhere() {
        let cfg = base_config();
        let freqs = cfg.frequencies.clone();
        let u = move |x: f64| -> f64 { freqs.iter().map(|f| (TAU * f * x).sin()).sum() };
        let mags = spectrum_magnitudes(&u, &cfg).unwrap();
        for (f, m) in cfg.frequencies.iter().zip(&mags) {
            assert!((m - 1.0).abs() < 1e-8, "f={f}: {m}");
        }
    }

    #[test]
    fn aliasing_is_rejected() {
        let mut cfg = base_config();
        cfg.grid_points = 64;
        let u = |x: f64| x;
        assert!(matches!(spectrum_magnitudes(&u, &cfg), Err(IfefError::Config(_))));
    }

    #[test]
    fn parseval_bound_holds() {
        let cfg = base_config();
        let freqs = cfg.frequencies.clone();
        let u = move |x: f64| -> f64 {
            freqs.iter().map(|f| (TAU * f * x).sin()).sum::<f64>() + 0.3 * (TAU * 3.0 * x).cos()
        };
        let mags = spectrum_magnitudes(&u, &cfg).unwrap();
        let projected: f64 = mags.iter().map(|m| m * m / 2.0).sum();
        let m = cfg.grid_points;
        let energy: f64 =
            (0..m).map(|i| u(i as f64 / m as f64).powi(2)).sum::<f64>() / m as f64;
        assert!(projected <= energy + 1e-9, "{projected} > {energy}");
    }
}
