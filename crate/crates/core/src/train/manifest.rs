//! Run artifacts: the reproducibility manifest, the metrics CSV, and the
//! checkpoint container. Every file is written to a temporary name and
//! renamed into place, so artifacts are either complete or absent.
//!
//! Checkpoint layout (little-endian): magic `IFEF`, u32 version, u32 layer
//! count, then per layer u32 rows / u32 cols / row-major f64 weights / f64
//! biases; u8 readout flag (+ u32 width + f64 row); u8 theta flag (+ u32 len
//! + f64 values); u8 extension kind (0 none, 1 rff; rff adds u64 seed,
//! u32 d, u32 p, f64 sigma). The feature matrix itself is not stored — seed
//! and dimensions regenerate it exactly.

use crate::diff::{Layer, NetworkParams};
use crate::error::{IfefError, Result};
use crate::features::{sample_rff, Extension};
use crate::qp::Theta;
use crate::rng::SeedPlan;
use crate::train::{EpochRecord, TrainConfig};
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"IFEF";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ProblemInfo {
    pub name: String,
    pub dim: usize,
    pub domain: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SamplingInfo {
    pub method: String,
    pub n_u: usize,
    pub n_f: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FinalMetrics {
    pub rel_l2: f64,
    pub lower_loss: f64,
    pub theta_norm: f64,
}

/// Everything needed to reproduce and audit one run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub suite_version: String,
    pub problem: ProblemInfo,
    pub config: TrainConfig,
    pub config_hash: String,
    pub seeds: SeedPlan,
    pub sampling: SamplingInfo,
    pub rank_warning: bool,
    pub pretrain_trace: Vec<f64>,
    pub records: Vec<EpochRecord>,
    pub final_metrics: Option<FinalMetrics>,
    pub checkpoint: Option<FileRef>,
    pub data_files: Vec<FileRef>,
    pub wall_ms: u64,
    /// Set when the run aborted; the manifest then holds the partial trace.
    pub aborted: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).map_err(|e| IfefError::io(path.display().to_string(), e))?;
    Ok(sha256_hex(&bytes))
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, path).map_err(|e| IfefError::io(path.display().to_string(), e))
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| IfefError::config(format!("manifest serialization: {e}")))?;
        atomic_write(path, json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| IfefError::io(path.display().to_string(), e))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| IfefError::config(format!("manifest parse: {e}")))
    }
}

/// Incremental metrics CSV: rows land in a temporary file as epochs finish
/// and the final rename publishes the artifact. Column order is part of the
/// public contract: epoch,lower_loss,upper_loss,rel_l2,lambda,wall_ms.
pub struct MetricsWriter {
    tmp: PathBuf,
    path: PathBuf,
    file: std::io::BufWriter<std::fs::File>,
}

pub const METRICS_HEADER: &str = "epoch,lower_loss,upper_loss,rel_l2,lambda,wall_ms";

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let tmp = path.with_extension("csv.tmp");
        let file = std::fs::File::create(&tmp)
            .map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
        let mut w = MetricsWriter {
            tmp,
            path: path.to_path_buf(),
            file: std::io::BufWriter::new(file),
        };
        writeln!(w.file, "{METRICS_HEADER}")
            .map_err(|e| IfefError::io(w.tmp.display().to_string(), e))?;
        Ok(w)
    }

    pub fn append(&mut self, r: &EpochRecord) -> Result<()> {
        writeln!(
            self.file,
            "{},{:e},{:e},{:e},{:e},{}",
            r.epoch, r.lower_loss, r.upper_loss, r.rel_l2, r.lambda, r.wall_ms
        )
        .and_then(|_| self.file.flush())
        .map_err(|e| IfefError::io(self.tmp.display().to_string(), e))
    }

    /// Publish the file (also used when a run aborts, so partial metrics
    /// survive as a complete artifact).
    pub fn finalize(mut self) -> Result<()> {
        self.file
            .flush()
            .map_err(|e| IfefError::io(self.tmp.display().to_string(), e))?;
        drop(self.file);
        std::fs::rename(&self.tmp, &self.path)
            .map_err(|e| IfefError::io(self.path.display().to_string(), e))
    }
}

/// Checkpoint payload.
pub struct Checkpoint {
    pub params: NetworkParams,
    pub theta: Option<Theta>,
    pub extension: Extension,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.params.layers.len() as u32).to_le_bytes());
        for layer in &self.params.layers {
            buf.extend_from_slice(&(layer.weight.nrows() as u32).to_le_bytes());
            buf.extend_from_slice(&(layer.weight.ncols() as u32).to_le_bytes());
            for v in layer.weight.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            for v in layer.bias.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        match &self.params.readout {
            Some(w) => {
                buf.push(1);
                buf.extend_from_slice(&(w.ncols() as u32).to_le_bytes());
                for v in w.iter() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => buf.push(0),
        }
        match &self.theta {
            Some(t) => {
                buf.push(1);
                buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
                for v in t.0.iter() {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
            None => buf.push(0),
        }
        match &self.extension {
            Extension::None => buf.push(0),
            Extension::Rff(rff) => {
                buf.push(1);
                buf.extend_from_slice(&rff.seed.to_le_bytes());
                buf.extend_from_slice(&(rff.d() as u32).to_le_bytes());
                buf.extend_from_slice(&(rff.p() as u32).to_le_bytes());
                buf.extend_from_slice(&rff.sigma.to_le_bytes());
            }
        }
        atomic_write(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file =
            std::fs::File::open(path).map_err(|e| IfefError::io(path.display().to_string(), e))?;
        let mut r = std::io::BufReader::new(file);
        let bad = |msg: &str| IfefError::config(format!("checkpoint {}: {msg}", path.display()));

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("wrong magic"));
        }
        let version = read_u32(&mut r).map_err(|_| bad("truncated version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n_layers = read_u32(&mut r).map_err(|_| bad("truncated layer count"))? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let rows = read_u32(&mut r).map_err(|_| bad("truncated dims"))? as usize;
            let cols = read_u32(&mut r).map_err(|_| bad("truncated dims"))? as usize;
            let mut weight = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                weight.push(read_f64(&mut r).map_err(|_| bad("truncated weights"))?);
            }
            let mut bias = Vec::with_capacity(rows);
            for _ in 0..rows {
                bias.push(read_f64(&mut r).map_err(|_| bad("truncated bias"))?);
            }
            layers.push(Layer {
                weight: Array2::from_shape_vec((rows, cols), weight)
                    .map_err(|e| bad(&format!("weight shape: {e}")))?,
                bias: Array1::from(bias),
            });
        }
        let readout = match read_u8(&mut r).map_err(|_| bad("truncated readout flag"))? {
            0 => None,
            _ => {
                let p = read_u32(&mut r).map_err(|_| bad("truncated readout width"))? as usize;
                let mut row = Vec::with_capacity(p);
                for _ in 0..p {
                    row.push(read_f64(&mut r).map_err(|_| bad("truncated readout"))?);
                }
                Some(
                    Array2::from_shape_vec((1, p), row)
                        .map_err(|e| bad(&format!("readout shape: {e}")))?,
                )
            }
        };
        let theta = match read_u8(&mut r).map_err(|_| bad("truncated theta flag"))? {
            0 => None,
            _ => {
                let len = read_u32(&mut r).map_err(|_| bad("truncated theta len"))? as usize;
                let mut vals = Vec::with_capacity(len);
                for _ in 0..len {
                    vals.push(read_f64(&mut r).map_err(|_| bad("truncated theta"))?);
                }
                Some(Theta(Array1::from(vals)))
            }
        };
        let params = NetworkParams::new(layers, readout)?;
        let extension = match read_u8(&mut r).map_err(|_| bad("truncated extension flag"))? {
            0 => Extension::None,
            _ => {
                let mut seed = [0u8; 8];
                r.read_exact(&mut seed).map_err(|_| bad("truncated rff seed"))?;
                let d = read_u32(&mut r).map_err(|_| bad("truncated rff dims"))? as usize;
                let p = read_u32(&mut r).map_err(|_| bad("truncated rff dims"))? as usize;
                let sigma = read_f64(&mut r).map_err(|_| bad("truncated rff sigma"))?;
                Extension::Rff(sample_rff(d, p, sigma, u64::from_le_bytes(seed))?)
            }
        };
        Ok(Checkpoint { params, theta, extension })
    }
}

fn read_u8(r: &mut impl Read) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
