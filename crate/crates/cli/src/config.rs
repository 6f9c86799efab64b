//! Experiment configuration files: TOML with strict unknown-key rejection.
//! Parsing produces a fully validated problem + sampler + train setup;
//! per-kind problem parameters are cross-checked so a stray key never
//! silently changes an experiment.

use ifef_pinn::eval::{GridEvaluator, SpectrumConfig, SpectrumRunConfig};
use ifef_pinn::pde::burgers_ref::BurgersReference;
use ifef_pinn::pde::{sample_lhs, sample_uniform, CollocationSet, GridSpec, PdeProblem};
use ifef_pinn::train::TrainConfig;
use ifef_pinn::{IfefError, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: ProblemCfg,
    pub sampling: SamplingCfg,
    pub network: NetworkCfg,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalCfg,
    pub output: OutputCfg,
    #[serde(default)]
    pub spectrum: Option<SpectrumCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemCfg {
    pub kind: String,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub domain: Option<[[f64; 2]; 2]>,
    pub beta: Option<f64>,
    pub c: Option<f64>,
    pub d_coef: Option<f64>,
    pub a_low: Option<f64>,
    pub a_high: Option<f64>,
    pub k_low: Option<f64>,
    pub k_high: Option<f64>,
    pub nu: Option<f64>,
    pub frequencies: Option<Vec<f64>>,
    pub amplitudes: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingCfg {
    pub method: String,
    pub boundary: usize,
    pub interior: Option<Vec<usize>>,
    pub interior_points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkCfg {
    pub hidden: Vec<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EvalCfg {
    pub grid: Option<Vec<usize>>,
    pub burgers_reference: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    pub dir: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumCfg {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub grid_points: usize,
    pub time_slice: f64,
    pub d_sweep: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// A parsed, validated experiment.
pub struct Experiment {
    pub problem: PdeProblem,
    pub sampling: SamplingCfg,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub eval: EvalCfg,
    pub out_dir: PathBuf,
    pub spectrum: Option<SpectrumCfg>,
    pub config_dir: PathBuf,
    pub config_hash: String,
}

fn require(opt: Option<f64>, kind: &str, name: &str) -> Result<f64> {
    opt.ok_or_else(|| IfefError::config(format!("problem kind {kind} requires `{name}`")))
}

fn forbid_unused(cfg: &ProblemCfg, kind: &str, used: &[&str]) -> Result<()> {
    let fields: [(&str, bool); 13] = [
        ("a1", cfg.a1.is_some()),
        ("a2", cfg.a2.is_some()),
        ("domain", cfg.domain.is_some()),
        ("beta", cfg.beta.is_some()),
        ("c", cfg.c.is_some()),
        ("d_coef", cfg.d_coef.is_some()),
        ("a_low", cfg.a_low.is_some()),
        ("a_high", cfg.a_high.is_some()),
        ("k_low", cfg.k_low.is_some()),
        ("k_high", cfg.k_high.is_some()),
        ("nu", cfg.nu.is_some()),
        ("frequencies", cfg.frequencies.is_some()),
        ("amplitudes", cfg.amplitudes.is_some()),
    ];
    for (name, set) in fields {
        if set && !used.contains(&name) {
            return Err(IfefError::config(format!(
                "problem kind {kind} does not use `{name}`"
            )));
        }
    }
    Ok(())
}

pub fn build_problem(cfg: &ProblemCfg) -> Result<PdeProblem> {
    match cfg.kind.as_str() {
        "helmholtz" => {
            forbid_unused(cfg, "helmholtz", &["a1", "a2", "domain"])?;
            let a1 = require(cfg.a1, "helmholtz", "a1")?;
            let a2 = require(cfg.a2, "helmholtz", "a2")?;
            let d = cfg.domain.unwrap_or([[-1.0, 1.0], [-1.0, 1.0]]);
            Ok(ifef_pinn::pde::make_helmholtz(
                a1,
                a2,
                [(d[0][0], d[0][1]), (d[1][0], d[1][1])],
            ))
        }
        "convection" => {
            forbid_unused(cfg, "convection", &["beta"])?;
            Ok(ifef_pinn::pde::make_convection(require(cfg.beta, "convection", "beta")?))
        }
        "convection_diffusion" => {
            forbid_unused(
                cfg,
                "convection_diffusion",
                &["c", "d_coef", "a_low", "a_high", "k_low", "k_high"],
            )?;
            Ok(ifef_pinn::pde::make_convection_diffusion(
                require(cfg.c, "convection_diffusion", "c")?,
                require(cfg.d_coef, "convection_diffusion", "d_coef")?,
                require(cfg.a_low, "convection_diffusion", "a_low")?,
                require(cfg.a_high, "convection_diffusion", "a_high")?,
                require(cfg.k_low, "convection_diffusion", "k_low")?,
                require(cfg.k_high, "convection_diffusion", "k_high")?,
            ))
        }
        "burgers" => {
            forbid_unused(cfg, "burgers", &["nu"])?;
            let nu = require(cfg.nu, "burgers", "nu")?;
            if !(nu > 0.0) {
                return Err(IfefError::config("burgers needs nu > 0"));
            }
            Ok(ifef_pinn::pde::make_burgers(nu))
        }
        "multiscale_convection" => {
            forbid_unused(cfg, "multiscale_convection", &["frequencies", "amplitudes"])?;
            let f = cfg
                .frequencies
                .clone()
                .ok_or_else(|| IfefError::config("multiscale_convection requires `frequencies`"))?;
            let a = cfg
                .amplitudes
                .clone()
                .ok_or_else(|| IfefError::config("multiscale_convection requires `amplitudes`"))?;
            if f.len() != a.len() || f.is_empty() {
                return Err(IfefError::config("frequencies and amplitudes must pair up"));
            }
            Ok(ifef_pinn::pde::make_multiscale_convection(&f, &a))
        }
        other => Err(IfefError::config(format!(
            "unknown problem kind `{other}` (expected helmholtz | convection | \
             convection_diffusion | burgers | multiscale_convection)"
        ))),
    }
}

pub fn load(path: &Path) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| IfefError::io(path.display().to_string(), e))?;
    let parsed: FileConfig = toml::from_str(&text)
        .map_err(|e| IfefError::config(format!("{}: {e}", path.display())))?;
    parsed.train.validate()?;
    let problem = build_problem(&parsed.problem)?;

    match parsed.sampling.method.as_str() {
        "uniform" => {
            let axes = parsed.sampling.interior.as_ref().ok_or_else(|| {
                IfefError::config("uniform sampling requires `interior = [n_t, n_x]`")
            })?;
            if axes.len() != problem.dim {
                return Err(IfefError::config("interior grid dimension mismatch"));
            }
        }
        "lhs" => {
            if parsed.sampling.interior_points.is_none() {
                return Err(IfefError::config("lhs sampling requires `interior_points`"));
            }
        }
        other => {
            return Err(IfefError::config(format!(
                "unknown sampling method `{other}` (expected uniform | lhs)"
            )))
        }
    }
    if parsed.network.hidden.is_empty() {
        return Err(IfefError::config("network needs at least one hidden width"));
    }

    let config_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out_dir = resolve_out_dir(&parsed.output.dir);
    Ok(Experiment {
        problem,
        sampling: parsed.sampling,
        hidden: parsed.network.hidden,
        train: parsed.train,
        eval: parsed.eval,
        out_dir,
        spectrum: parsed.spectrum,
        config_dir,
        config_hash: ifef_pinn::train::manifest::sha256_hex(text.as_bytes()),
    })
}

/// Relative output directories land under IFEF_OUT_ROOT when set.
fn resolve_out_dir(dir: &str) -> PathBuf {
    let p = PathBuf::from(dir);
    if p.is_absolute() {
        return p;
    }
    match std::env::var_os("IFEF_OUT_ROOT") {
        Some(root) => PathBuf::from(root).join(p),
        None => p,
    }
}

impl Experiment {
    pub fn sample(&self, seed: u64) -> Result<CollocationSet> {
        match self.sampling.method.as_str() {
            "uniform" => sample_uniform(
                &self.problem,
                &GridSpec {
                    interior: self.sampling.interior.clone().unwrap(),
                    boundary_total: self.sampling.boundary,
                },
                seed,
            ),
            _ => sample_lhs(
                &self.problem,
                self.sampling.boundary,
                self.sampling.interior_points.unwrap(),
                seed,
            ),
        }
    }

    /// Evaluation grid: the problem's closed form on a tensor grid, or the
    /// stored Burgers reference.
    pub fn evaluator(&self) -> Result<GridEvaluator> {
        if self.problem.exact.is_some() {
            let grid = self.eval.grid.clone().unwrap_or_else(|| vec![101, 101]);
            GridEvaluator::from_problem(&self.problem, &grid)
        } else {
            let reference = BurgersReference::load_csv(&self.burgers_reference_path())?;
            Ok(GridEvaluator::from_burgers_reference(&reference))
        }
    }

    /// Reference-grid path, resolved against the config file's directory
    /// when relative.
    pub fn burgers_reference_path(&self) -> PathBuf {
        let raw = self
            .eval
            .burgers_reference
            .clone()
            .unwrap_or_else(|| "../data/burgers_reference.csv".to_string());
        let p = PathBuf::from(&raw);
        if p.is_absolute() {
            p
        } else {
            self.config_dir.join(p)
        }
    }

    pub fn network_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.problem.dim];
        dims.extend(&self.hidden);
        dims
    }

    pub fn spectrum_configs(&self) -> Result<(SpectrumConfig, SpectrumRunConfig)> {
        let s = self
            .spectrum
            .as_ref()
            .ok_or_else(|| IfefError::config("config has no [spectrum] section"))?;
        let spectrum = SpectrumConfig {
            frequencies: s.frequencies.clone(),
            amplitudes: s.amplitudes.clone(),
            grid_points: s.grid_points,
            time_slice: s.time_slice,
            d_sweep: s.d_sweep.clone(),
            seeds: s.seeds.clone(),
        };
        spectrum.validate()?;
        let grid = GridSpec {
            interior: self
                .sampling
                .interior
                .clone()
                .ok_or_else(|| IfefError::config("spectrum runs use uniform sampling"))?,
            boundary_total: self.sampling.boundary,
        };
        let run = SpectrumRunConfig { hidden: self.hidden.clone(), grid, train: self.train.clone() };
        Ok((spectrum, run))
    }
}
