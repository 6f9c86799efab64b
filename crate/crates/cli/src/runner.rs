//! Shared run pipeline behind `train` and `compare`: sampling, network init,
//! the variant dispatch, and artifact writing.

use crate::config::Experiment;
use ifef_pinn::diff::NetworkParams;
use ifef_pinn::features::{Extension, FeatureBasis};
use ifef_pinn::pde::build_design;
use ifef_pinn::qp::assemble_from_design;
use ifef_pinn::train::manifest::{
    sha256_file, Checkpoint, FileRef, FinalMetrics, MetricsWriter, ProblemInfo, RunManifest,
    SamplingInfo,
};
use ifef_pinn::train::{
    ifef_train, pretrain_vanilla, train_vanilla, EpochRecord, TrainConfig, Variant,
};
use ifef_pinn::{IfefError, Result};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

pub struct RunOutput {
    pub final_rel_l2: f64,
    pub final_lower: f64,
    pub records: Vec<EpochRecord>,
}

pub struct ArtifactOptions {
    pub error_map: bool,
    pub dump_qp: bool,
}

/// Run one configuration end to end. With `out_dir` set, artifacts are
/// written (atomically; on a numeric failure the partial metrics and an
/// aborted manifest still land on disk before the error propagates).
pub fn execute_run(
    exp: &Experiment,
    train: &TrainConfig,
    out_dir: Option<&Path>,
    opts: &ArtifactOptions,
) -> Result<RunOutput> {
    train.validate()?;
    let t_start = Instant::now();
    let plan = train.seeds();
    let colloc = exp.sample(plan.sampling)?;
    let params0 = NetworkParams::glorot(&exp.network_dims(), true, plan.network)?;
    let evaluator = exp.evaluator()?;

    let mut metrics = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| IfefError::io(dir.display().to_string(), e))?;
            Some(MetricsWriter::create(&dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut io_error: Option<IfefError> = None;

    let manifest_base = |train: &TrainConfig| RunManifest {
        suite_version: ifef_pinn::SUITE_VERSION.to_string(),
        problem: ProblemInfo {
            name: exp.problem.name.clone(),
            dim: exp.problem.dim,
            domain: exp.problem.domain.clone(),
        },
        config: train.clone(),
        config_hash: exp.config_hash.clone(),
        seeds: plan,
        sampling: SamplingInfo {
            method: exp.sampling.method.clone(),
            n_u: colloc.n_u(),
            n_f: colloc.n_f(),
            seed: plan.sampling,
        },
        rank_warning: false,
        pretrain_trace: Vec::new(),
        records: Vec::new(),
        final_metrics: None,
        checkpoint: None,
        data_files: Vec::new(),
        wall_ms: 0,
        aborted: None,
    };

    let result = (|| -> Result<(RunOutput, Checkpoint, Vec<f64>, bool)> {
        match train.variant {
            Variant::Vanilla => {
                let mut on_epoch = |r: &EpochRecord| {
                    records.push(r.clone());
                    if let Some(w) = metrics.as_mut() {
                        if let Err(e) = w.append(r) {
                            io_error.get_or_insert(e);
                        }
                    }
                };
                let (params, recs) =
                    train_vanilla(&exp.problem, &params0, &colloc, train, Some(&evaluator), Some(&mut on_epoch))?;
                let final_rel = recs.last().map(|r| r.rel_l2).unwrap_or(f64::NAN);
                let final_loss = recs.last().map(|r| r.lower_loss).unwrap_or(f64::NAN);
                Ok((
                    RunOutput { final_rel_l2: final_rel, final_lower: final_loss, records: recs.clone() },
                    Checkpoint { params, theta: None, extension: Extension::None },
                    Vec::new(),
                    false,
                ))
            }
            Variant::Ifef | Variant::IfefPd => {
                let (pretrained, trace) = pretrain_vanilla(&exp.problem, &params0, &colloc, train)?;
                let mut on_epoch = |r: &EpochRecord| {
                    records.push(r.clone());
                    if let Some(w) = metrics.as_mut() {
                        if let Err(e) = w.append(r) {
                            io_error.get_or_insert(e);
                        }
                    }
                };
                let outcome = ifef_train(
                    &exp.problem,
                    &pretrained,
                    &colloc,
                    train,
                    Some(&evaluator),
                    Some(&mut on_epoch),
                )?;
                Ok((
                    RunOutput {
                        final_rel_l2: outcome.final_rel_l2,
                        final_lower: outcome.final_lower,
                        records: outcome.records.clone(),
                    },
                    Checkpoint {
                        params: outcome.params,
                        theta: Some(outcome.theta),
                        extension: outcome.extension,
                    },
                    trace,
                    outcome.rank_warning,
                ))
            }
        }
    })();

    match result {
        Ok((output, checkpoint, pretrain_trace, rank_warning)) => {
            if let Some(e) = io_error {
                return Err(e);
            }
            if let Some(dir) = out_dir {
                if let Some(w) = metrics.take() {
                    w.finalize()?;
                }
                let ckpt_path = dir.join("checkpoint.bin");
                checkpoint.save(&ckpt_path)?;
                let mut manifest = manifest_base(train);
                manifest.pretrain_trace = pretrain_trace;
                manifest.records = output.records.clone();
                manifest.rank_warning = rank_warning;
                manifest.final_metrics = Some(FinalMetrics {
                    rel_l2: output.final_rel_l2,
                    lower_loss: output.final_lower,
                    theta_norm: checkpoint
                        .theta
                        .as_ref()
                        .map(|t| t.0.dot(&t.0).sqrt())
                        .unwrap_or(f64::NAN),
                });
                manifest.checkpoint = Some(FileRef {
                    path: "checkpoint.bin".to_string(),
                    sha256: sha256_file(&ckpt_path)?,
                });
                if exp.problem.exact.is_none() {
                    let ref_path = exp.burgers_reference_path();
                    manifest.data_files.push(FileRef {
                        path: ref_path.display().to_string(),
                        sha256: sha256_file(&ref_path)?,
                    });
                }
                manifest.wall_ms = t_start.elapsed().as_millis() as u64;
                manifest.save(&dir.join("manifest.json"))?;

                write_extras(exp, &checkpoint, &evaluator, dir, opts)?;
            }
            Ok(output)
        }
        Err(e) => {
            // Flush what we have so the partial run can be audited.
            if let Some(dir) = out_dir {
                if let Some(w) = metrics.take() {
                    let _ = w.finalize();
                }
                let mut manifest = manifest_base(train);
                manifest.records = records;
                manifest.wall_ms = t_start.elapsed().as_millis() as u64;
                manifest.aborted = Some(e.to_string());
                let _ = manifest.save(&dir.join("manifest.json"));
            }
            Err(e)
        }
    }
}

fn write_extras(
    exp: &Experiment,
    checkpoint: &Checkpoint,
    evaluator: &ifef_pinn::eval::GridEvaluator,
    dir: &Path,
    opts: &ArtifactOptions,
) -> Result<()> {
    if opts.error_map {
        if let Some(theta) = &checkpoint.theta {
            let basis =
                FeatureBasis::new(checkpoint.params.clone(), checkpoint.extension.clone())?;
            let report = evaluator.report_basis(&basis, theta)?;
            report.to_csv(&dir.join("error_map.csv"))?;
        }
    }
    if opts.dump_qp {
        if let (Some(_), true) = (&checkpoint.theta, exp.problem.interior.is_linear()) {
            let basis =
                FeatureBasis::new(checkpoint.params.clone(), checkpoint.extension.clone())?;
            let plan = exp.train.seeds();
            let colloc = exp.sample(plan.sampling)?;
            let design = build_design(&exp.problem, &basis, &colloc)?;
            let sys = assemble_from_design(&design, exp.train.lambda_ll)?;
            dump_qp(&sys, &dir.join("qp_dump.csv"))?;
        }
    }
    Ok(())
}

/// Documented dump layout: `b,<value>`, then `c,<i>,<value>` rows, then
/// `q,<i>,<j>,<value>` rows (full symmetric matrix).
fn dump_qp(sys: &ifef_pinn::qp::QpSystem, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let file =
            std::fs::File::create(&tmp).map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e: std::io::Error| IfefError::io(tmp.display().to_string(), e);
        writeln!(w, "term,i,j,value").map_err(io)?;
        writeln!(w, "b,,,{:e}", sys.b).map_err(io)?;
        for (i, v) in sys.c.iter().enumerate() {
            writeln!(w, "c,{i},,{v:e}").map_err(io)?;
        }
        for i in 0..sys.dim() {
            for j in 0..sys.dim() {
                writeln!(w, "q,{i},{j},{:e}", sys.q[[i, j]]).map_err(io)?;
            }
        }
    }
    std::fs::rename(&tmp, path).map_err(|e| IfefError::io(path.display().to_string(), e))
}

/// Final relative L2 of one quiet run (compare cells).
pub fn run_cell(exp: &Experiment, train: &TrainConfig) -> Result<f64> {
    let opts = ArtifactOptions { error_map: false, dump_qp: false };
    Ok(execute_run(exp, train, None, &opts)?.final_rel_l2)
}

