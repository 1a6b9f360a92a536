use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lodwave::harness::{finish, read_config_file, resolve_config, run_experiment, ExampleId, ExperimentReport, KEYS};
use lodwave::Error;

/// Mass-lumped LOD wave solver: convergence sweeps, ablations and timing.
///
/// Settings are resolved as example defaults, then the config file, then
/// flags. Any config key may also be given as `--set key=value`. Random
/// coefficients use the seed for α and seed+1 for β. Naive-averaging
/// variants run at the largest requested ℓ. The exit code is 0 when every
/// row succeeds, 2 when some rows failed and 1 on configuration errors.
#[derive(Parser, Debug)]
#[command(name = "lodwave", version, after_help = keys_help())]
struct Cli {
    /// example1 | example2 | example3 | custom (may come from the config file)
    example: Option<String>,
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Smallest coarse exponent k (H = 2^-k)
    #[arg(long)]
    hmin: Option<u32>,
    /// Largest coarse exponent k
    #[arg(long)]
    hmax: Option<u32>,
    /// Localization orders, comma separated; `inf` for whole-domain patches
    #[arg(long)]
    ell: Option<String>,
    /// Fine mesh exponent (h = 2^-fine)
    #[arg(long)]
    fine: Option<u32>,
    /// Coefficient mesh exponent
    #[arg(long)]
    eps: Option<u32>,
    /// Seed of the random coefficient fields (default 20240601)
    #[arg(long)]
    seed: Option<u64>,
    /// Variants, comma separated: mllod_weighted,lod_weighted,mllod_naive,lod_naive,fem
    #[arg(long)]
    variants: Option<String>,
    #[arg(long)]
    alpha_file: Option<PathBuf>,
    #[arg(long)]
    beta_file: Option<PathBuf>,
    /// Output directory (default out/<example>)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sequential rows and no timing columns in errors.csv
    #[arg(long)]
    deterministic: bool,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
    /// Extra `key=value` settings
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn keys_help() -> String {
    format!("Config keys: {}", KEYS.join(", "))
}

fn overrides(cli: &Cli) -> Result<Vec<(String, String)>, Error> {
    let mut pairs = Vec::new();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    push("hmin", cli.hmin.map(|v| v.to_string()));
    push("hmax", cli.hmax.map(|v| v.to_string()));
    push("ell", cli.ell.clone());
    push("fine", cli.fine.map(|v| v.to_string()));
    push("eps", cli.eps.map(|v| v.to_string()));
    push("seed", cli.seed.map(|v| v.to_string()));
    push("variants", cli.variants.clone());
    push("alpha_file", cli.alpha_file.as_ref().map(|p| p.display().to_string()));
    push("beta_file", cli.beta_file.as_ref().map(|p| p.display().to_string()));
    push("out", cli.out.as_ref().map(|p| p.display().to_string()));
    push("deterministic", cli.deterministic.then(|| "true".to_string()));
    push("threads", cli.threads.map(|v| v.to_string()));
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
        if !KEYS.contains(&k.trim()) {
            return Err(Error::Config(format!("unknown configuration key '{}'", k.trim())));
        }
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<16} {:>5} {:>9} {:>14} {:>8} {:>14} {:>8}",
        "variant", "ell", "H", "rel_err_H1", "eoc", "rel_err_energy", "eoc"
    );
    let order = |e: Option<f64>| e.map_or("-".into(), |e| format!("{e:.2}"));
    for r in &report.records {
        println!(
            "{:<16} {:>5} {:>9} {:>14.6e} {:>8} {:>14} {:>8}",
            r.variant.to_string(),
            r.ell.as_deref().unwrap_or("-"),
            format!("2^-{}", r.h_exponent),
            r.rel_err_h1,
            order(r.eoc),
            r.rel_err_energy.map_or("-".into(), |e| format!("{e:.6e}")),
            order(r.eoc_energy)
        );
    }
    for t in &report.timing {
        println!(
            "timing H=2^-{}: offline {:.3}s, lumped {:.4}s, non-lumped {:.4}s, speed-up {:.1}",
            t.h_exponent,
            t.offline_seconds,
            t.lumped_seconds,
            t.consistent_seconds,
            t.speedup()
        );
    }
    for f in &report.failures {
        eprintln!("row failed: {}: {}", f.label, f.message);
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = (|| {
        let file = match &cli.config {
            Some(p) => read_config_file(p)?,
            None => Vec::new(),
        };
        let from_file = file.iter().find(|(k, _)| k == "example").map(|(_, v)| v.clone());
        let name = cli
            .example
            .clone()
            .or(from_file)
            .ok_or_else(|| Error::Config("no example given".into()))?;
        let example: ExampleId = name.parse()?;
        // the positional example wins over the file's
        let file: Vec<_> = file.into_iter().filter(|(k, _)| k != "example").collect();
        resolve_config(example, &file, &overrides(&cli)?)
    })();
    let config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = config.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let report = match run_experiment(&config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    print_summary(&report);
    match finish(&report, &config.out) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
