use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brotoc_core::brotoc::{connected, disconnected, haar_mc_oracle, unregularized_bipartite};
use brotoc_core::experiment::config::OutputSpec;
use brotoc_core::experiment::records::MEAN_LABEL;
use brotoc_core::experiment::{
    emit_records, fit_scaling, read_records, run_experiment, write_rows, BetaValue, ExperimentConfig, FitRecord,
    OutputFormat, RunOptions,
};
use brotoc_core::models::sample_gue;
use brotoc_core::random::stream;
use brotoc_core::thermal::ThermalContext;
use brotoc_core::{BrotocError, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "brotoc", version, about = "Bipartite regularized OTOC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a configuration file or a built-in preset.
    Run {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Built-in preset; applied first when combined with --config.
        #[arg(long)]
        preset: Option<String>,
        /// Single-threaded, bit-exact run.
        #[arg(long)]
        serial: bool,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the chain-length cap.
        #[arg(long)]
        max_l: Option<u32>,
        /// Keep only the lowest K levels in NRC averages.
        #[arg(long, value_name = "K")]
        truncate_keep: Option<usize>,
        /// Report each finished task on stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Fit `value = α d^{-γ}` to the mean rows of a results file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 5)]
        k_last: usize,
        /// Write fits here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare Haar Monte Carlo averages with the analytic values for one GUE sample.
    Oracle {
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 0.7)]
        beta: f64,
        #[arg(long, default_value_t = 1.3)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Largest |z| still counted as agreement.
        #[arg(long, default_value_t = 5.0)]
        max_z: f64,
    },
}

fn exit_code(err: &BrotocError) -> u8 {
    match err {
        BrotocError::Config(_) | BrotocError::Domain(_) | BrotocError::Dimension(_) => 2,
        BrotocError::Resource(_) => 3,
        BrotocError::Numerical { .. } | BrotocError::Validation(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, preset, serial, seed, out, max_l, truncate_keep, progress } => {
            cmd_run(config.as_deref(), preset.as_deref(), serial, seed, out, max_l, truncate_keep, progress)
        }
        Command::Fit { input, k_last, output } => cmd_fit(&input, k_last, output.as_deref()),
        Command::Oracle { d, beta, t, samples, seed, max_z } => cmd_oracle(d, beta, t, samples, seed, max_z),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: Option<&Path>,
    preset: Option<&str>,
    serial: bool,
    seed: Option<u64>,
    out: Option<PathBuf>,
    max_l: Option<u32>,
    truncate_keep: Option<usize>,
    progress: bool,
) -> Result<u8> {
    let mut cfg = match (config, preset) {
        (Some(path), None) => ExperimentConfig::from_file(path)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (Some(path), Some(name)) => {
            let mut merged = serde_json::to_value(ExperimentConfig::preset(name)?)?;
            let text = std::fs::read_to_string(path)?;
            let overrides: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| BrotocError::Config(e.to_string()))?;
            let (Some(base), Some(extra)) = (merged.as_object_mut(), overrides.as_object()) else {
                return Err(BrotocError::Config("configuration must be a JSON object".into()));
            };
            for (k, v) in extra {
                base.insert(k.clone(), v.clone());
            }
            ExperimentConfig::from_json(&merged.to_string())?
        }
        (None, None) => return Err(BrotocError::Config("pass --config or --preset".into())),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(l) = max_l {
        cfg.max_l = l;
    }
    if truncate_keep.is_some() {
        cfg.truncate_keep = truncate_keep;
    }
    let output = run_experiment(&cfg, RunOptions { serial, progress })?;
    for w in &output.warnings {
        eprintln!("warning: {w}");
    }
    let (records_path, fits_path) = output_paths(&cfg.name, &cfg.output, out.as_deref());
    emit_records(&output.records, &records_path, cfg.output.format)?;
    eprintln!("wrote {} rows to {}", output.records.len(), records_path.display());
    if !output.fits.is_empty() {
        write_rows(&output.fits, &fits_path, cfg.output.format)?;
        for f in &output.fits {
            eprintln!(
                "fit {} beta={}: gamma = {:.4}, log2 alpha = {:.4}, R^2 = {:.4}",
                f.model, f.beta, f.gamma, f.log2_alpha, f.r_squared
            );
        }
    }
    Ok(0)
}

/// Records file and fits file locations.
fn output_paths(name: &str, spec: &OutputSpec, out_dir: Option<&Path>) -> (PathBuf, PathBuf) {
    let ext = match spec.format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    };
    let records = match (out_dir, &spec.path) {
        (Some(dir), _) => dir.join(format!("{name}.{ext}")),
        (None, Some(p)) => p.clone(),
        (None, None) => PathBuf::from("results").join(format!("{name}.{ext}")),
    };
    let stem = records.file_stem().and_then(|s| s.to_str()).unwrap_or(name).to_string();
    let fits = records.with_file_name(format!("{stem}_fits.{ext}"));
    (records, fits)
}

fn cmd_fit(input: &Path, k_last: usize, output: Option<&Path>) -> Result<u8> {
    let rows = read_records(input)?;
    let has_means = rows.iter().any(|r| r.is_mean());
    // (model, beta key) -> L -> values
    let mut groups: Vec<((String, BetaValue), BTreeMap<u32, Vec<f64>>)> = Vec::new();
    for r in rows.iter().filter(|r| if has_means { r.is_mean() } else { r.realization.parse::<usize>().is_ok() }) {
        let key = (r.model.clone(), r.beta);
        let pos = match groups.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                groups.push((key, BTreeMap::new()));
                groups.len() - 1
            }
        };
        groups[pos].1.entry(r.l).or_default().push(r.g_reg);
    }
    let mut fits = Vec::new();
    for ((model, beta), by_l) in groups {
        let pts: Vec<(f64, f64)> =
            by_l.iter().map(|(l, v)| (*l as f64, v.iter().sum::<f64>() / v.len() as f64)).collect();
        if pts.len() < k_last {
            eprintln!("skipping {model} beta={beta}: {} sizes, need {k_last}", pts.len());
            continue;
        }
        let f = fit_scaling(&pts, k_last)?;
        fits.push(FitRecord {
            model,
            beta,
            log2_alpha: f.log2_alpha,
            gamma: f.gamma,
            r_squared: f.r_squared,
            points_used: f.points_used,
        });
    }
    if fits.is_empty() {
        return Err(BrotocError::Domain(format!(
            "no ({}) series in {} has {k_last} sizes",
            if has_means { MEAN_LABEL } else { "realization" },
            input.display()
        )));
    }
    match output {
        Some(path) => {
            let format = if path.extension().is_some_and(|e| e == "json") { OutputFormat::Json } else { OutputFormat::Csv };
            write_rows(&fits, path, format)?;
        }
        None => {
            println!("model,beta,log2_alpha,gamma,r_squared,points_used");
            for f in &fits {
                println!("{},{},{},{},{},{}", f.model, f.beta, f.log2_alpha, f.gamma, f.r_squared, f.points_used);
            }
        }
    }
    Ok(0)
}

fn cmd_oracle(d: usize, beta: f64, t: f64, samples: usize, seed: u64, max_z: f64) -> Result<u8> {
    let mut rng = stream(seed, &[]);
    let spectral = sample_gue(d, &mut rng)?.into_spectral()?;
    let bip = spectral.bipartition();
    let ctx = ThermalContext::new(&spectral, beta)?;
    let g_disc = disconnected(&ctx, bip)?;
    let g_reg = connected(&ctx, t, bip)?;
    let g_unreg = unregularized_bipartite(&ctx, t, bip)?;
    let est = haar_mc_oracle(&ctx, t, bip, samples, &mut rng)?;
    println!(
        "GUE d={d} ({}x{}) beta={beta} t={t} samples={}",
        bip.dim_a(),
        bip.dim_b(),
        est.samples
    );
    println!("{:<8} {:>14} {:>14} {:>12} {:>8}", "quantity", "analytic", "monte_carlo", "stderr", "z");
    let rows = [
        ("g_disc", g_disc, est.g_disc),
        ("g_reg", g_reg, est.g_reg),
        ("n_value", g_disc - g_reg, est.n_value),
        ("g_unreg", g_unreg, est.g_unreg),
    ];
    let mut ok = true;
    for (name, exact, mc) in rows {
        let z = mc.z_score(exact);
        ok &= z.abs() <= max_z;
        println!("{name:<8} {exact:>14.8} {:>14.8} {:>12.3e} {z:>8.2}", mc.mean, mc.stderr);
    }
    if ok {
        println!("agreement: all |z| <= {max_z}");
        Ok(0)
    } else {
        println!("agreement: FAILED, some |z| > {max_z}");
        Ok(4)
    }
}
