//! `ifef` — configuration-driven driver for the training suite.
//!
//! Subcommands: `train` (one run, writes manifest/metrics/checkpoint),
//! `compare` (variants x seeds, combined CSV), `spectrum` (feature-count
//! sweep of the frequency-response table), `selfcheck` (fast oracle suite).
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 numeric failure
//! (manifest still flushed), 1 I/O or internal error.

use clap::{Args, Parser, Subcommand};
use ifef_cli::{config, runner};
use ifef_pinn::train::{ExtensionMode, TrainConfig, Variant};
use ifef_pinn::{IfefError, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "ifef", version, about = "Fourier-enhanced iterative PINN training")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Overrides {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Variant override: ifef | ifef_pd | vanilla.
    #[arg(long)]
    variant: Option<String>,
    /// Basis extension override: rff | none.
    #[arg(long)]
    extension: Option<String>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one training configuration and write its artifacts.
    Train {
        #[command(flatten)]
        overrides: Overrides,
        /// Also export the per-point absolute error map.
        #[arg(long)]
        error_map: bool,
        /// Also dump the assembled quadratic system (Q, c, b).
        #[arg(long)]
        dump_qp: bool,
    },
    /// Run several variants over several seeds; write a combined CSV.
    Compare {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated variants to run.
        #[arg(long, default_value = "ifef,vanilla")]
        variants: String,
        /// Number of seeds per variant (master seed, master+1, ...).
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Frequency-response table over the feature-count sweep.
    Spectrum {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated D values overriding the config sweep.
        #[arg(long)]
        d_sweep: Option<String>,
    },
    /// Fast oracle suite; prints one `CHECK <name> PASS|FAIL` line each.
    Selfcheck,
}

fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "ifef" => Ok(Variant::Ifef),
        "ifef_pd" => Ok(Variant::IfefPd),
        "vanilla" => Ok(Variant::Vanilla),
        other => Err(IfefError::config(format!("unknown variant `{other}`"))),
    }
}

fn parse_extension(s: &str) -> Result<ExtensionMode> {
    match s {
        "rff" => Ok(ExtensionMode::Rff),
        "none" => Ok(ExtensionMode::None),
        other => Err(IfefError::config(format!("unknown extension `{other}`"))),
    }
}

fn apply_overrides(train: &mut TrainConfig, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        train.seed = seed;
    }
    if let Some(v) = &o.variant {
        train.variant = parse_variant(v)?;
    }
    if let Some(e) = &o.extension {
        train.extension_mode = parse_extension(e)?;
    }
    Ok(())
}

fn cmd_train(overrides: Overrides, error_map: bool, dump_qp: bool) -> Result<()> {
    let mut exp = config::load(&overrides.config)?;
    apply_overrides(&mut exp.train, &overrides)?;
    if let Some(out) = &overrides.out {
        exp.out_dir = out.clone();
    }
    let train = exp.train.clone();
    let out = runner::execute_run(
        &exp,
        &train,
        Some(&exp.out_dir.clone()),
        &runner::ArtifactOptions { error_map, dump_qp },
    )?;
    println!(
        "run complete: rel_l2 {:e}, lower loss {:e}, artifacts in {}",
        out.final_rel_l2,
        out.final_lower,
        exp.out_dir.display()
    );
    Ok(())
}

fn cmd_compare(overrides: Overrides, variants: String, seeds: usize) -> Result<()> {
    let mut exp = config::load(&overrides.config)?;
    apply_overrides(&mut exp.train, &overrides)?;
    if let Some(out) = &overrides.out {
        exp.out_dir = out.clone();
    }
    let variant_list: Vec<Variant> = variants
        .split(',')
        .filter(|s| !s.is_empty())
        .map(parse_variant)
        .collect::<Result<_>>()?;
    if variant_list.len() < 2 {
        return Err(IfefError::config("compare needs at least two variants"));
    }
    if seeds == 0 {
        return Err(IfefError::config("compare needs at least one seed"));
    }

    let base_seed = exp.train.seed;
    let mut csv = String::from("variant,seed,rel_l2,note\n");
    let mut summary = String::new();
    for variant in &variant_list {
        let name = match variant {
            Variant::Ifef => "ifef",
            Variant::IfefPd => "ifef_pd",
            Variant::Vanilla => "vanilla",
        };
        let mut values = Vec::new();
        for k in 0..seeds {
            let mut train = exp.train.clone();
            train.variant = *variant;
            train.seed = base_seed + k as u64;
            match runner::run_cell(&exp, &train) {
                Ok(rel) => {
                    csv.push_str(&format!("{name},{},{rel:e},ok\n", train.seed));
                    values.push(rel);
                }
                Err(e) => {
                    let note = e.to_string().replace([',', '\n'], ";");
                    csv.push_str(&format!("{name},{},NaN,{note}\n", train.seed));
                }
            }
        }
        let (mean, std) = mean_std(&values);
        summary.push_str(&format!("{name},mean,{mean:e},over {} runs\n", values.len()));
        summary.push_str(&format!("{name},std,{std:e},over {} runs\n", values.len()));
    }
    csv.push_str(&summary);

    std::fs::create_dir_all(&exp.out_dir)
        .map_err(|e| IfefError::io(exp.out_dir.display().to_string(), e))?;
    let path = exp.out_dir.join("compare.csv");
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &csv).map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, &path).map_err(|e| IfefError::io(path.display().to_string(), e))?;
    print!("{csv}");
    Ok(())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn cmd_spectrum(overrides: Overrides, d_sweep: Option<String>) -> Result<()> {
    let mut exp = config::load(&overrides.config)?;
    apply_overrides(&mut exp.train, &overrides)?;
    if let Some(out) = &overrides.out {
        exp.out_dir = out.clone();
    }
    let (mut spectrum, run) = exp.spectrum_configs()?;
    if let Some(sweep) = d_sweep {
        spectrum.d_sweep = sweep
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| IfefError::config(format!("bad d-sweep entry `{s}`: {e}")))
            })
            .collect::<Result<_>>()?;
    }
    let table = ifef_pinn::eval::spectrum_experiment(&spectrum, &run)?;
    let csv = table.to_csv_string();
    std::fs::create_dir_all(&exp.out_dir)
        .map_err(|e| IfefError::io(exp.out_dir.display().to_string(), e))?;
    let path = exp.out_dir.join("spectrum.csv");
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &csv).map_err(|e| IfefError::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, &path).map_err(|e| IfefError::io(path.display().to_string(), e))?;
    print!("{csv}");
    Ok(())
}

fn cmd_selfcheck() -> i32 {
    let results = ifef_pinn::selfcheck::run_all();
    let mut failed = 0;
    for r in &results {
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", results.len());
        1
    } else {
        0
    }
}

fn exit_code_of(e: &IfefError) -> i32 {
    match e {
        IfefError::Config(_) | IfefError::UndefinedMetric(_) => 2,
        IfefError::Io { .. } => 1,
        _ => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train { overrides, error_map, dump_qp } => cmd_train(overrides, error_map, dump_qp),
        Cmd::Compare { overrides, variants, seeds } => cmd_compare(overrides, variants, seeds),
        Cmd::Spectrum { overrides, d_sweep } => cmd_spectrum(overrides, d_sweep),
        Cmd::Selfcheck => std::process::exit(cmd_selfcheck()),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code_of(&e));
    }
}
