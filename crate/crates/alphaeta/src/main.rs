use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alphaeta::config::{config_from_value, get_path, parse_override, parse_value, read_config_value, set_path};
use alphaeta::core::analytic::{exact_symbol_info_with_mode, n0, threshold_crossing};
use alphaeta::core::experiment::Fault;
use alphaeta::core::keystream::ndep_bound;
use alphaeta::core::{ChannelModel, CipherKind, ExperimentConfig};
use alphaeta::{load_config, run_ensemble, write_results, EnsembleOptions, Error, Result, RunMetadata};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

/// Most trials `verify` runs, whatever the config asks for.
const VERIFY_TRIALS: u64 = 200;

#[derive(Parser)]
#[command(name = "alphaeta", version, about = "Eavesdropper key-entropy simulations for the alpha-eta cipher")]
struct Cli {
    /// Worker threads for ensembles (0 = all available cores). Never
    /// changes the numbers produced.
    #[arg(long, global = true, env = "ALPHAETA_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config, or a results sidecar to rerun. Defaults to the
    /// 13-bit, M = 256, sigma = 16 setup.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a config field by dotted path, e.g. `channel.sigma=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write the curve CSV plus metadata sidecar.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also record the entropy of the trial-averaged posterior.
        #[arg(long)]
        mean_posterior: bool,
    },
    /// Print the closed-form estimates for a configuration.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Entropy (bits) below which the key counts as compromised.
        #[arg(long)]
        threshold_bits: Option<f64>,
    },
    /// Run one ensemble per value of a numeric field.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Dotted path of the field to vary.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `4,8,16,32`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run a reduced ensemble and check every invariant.
    Verify {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    CorruptDensity,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::Simulate {
            config,
            out,
            mean_posterior,
        } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            simulate(&cfg, &out, threads, mean_posterior)
        }
        Command::Estimate {
            config,
            threshold_bits,
        } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            estimate(&cfg, threshold_bits)
        }
        Command::Sweep {
            config,
            out,
            param,
            values,
        } => sweep(&config, &out, &param, &values, threads),
        Command::Verify {
            config,
            inject_fault,
        } => {
            let cfg = load_config(config.config.as_deref(), &config.overrides)?;
            let fault = inject_fault.map(|FaultArg::CorruptDensity| Fault::CorruptDensity);
            verify(cfg, threads, fault)
        }
    }
}

fn simulate(cfg: &ExperimentConfig, out: &Path, threads: usize, mean_posterior: bool) -> Result<()> {
    let run = run_ensemble(
        cfg,
        &EnsembleOptions {
            threads,
            mean_posterior,
            fault: None,
        },
    )?;
    let mut meta = RunMetadata::new(cfg, run.threads, run.wall_clock_seconds);
    meta.mean_posterior_entropy = run.mean_posterior_entropy.clone();
    write_results(&run.aggregate, &meta, out)?;
    let last = run.aggregate.rows.last().expect("Q_max >= 1");
    println!(
        "q={}: mean entropy {:.6} bits, mean P_E {:.6} ({} trials, {:.1} s, {} threads) -> {}",
        last.q,
        last.mean_entropy,
        last.mean_prob_correct,
        cfg.n_trials,
        run.wall_clock_seconds,
        run.threads,
        out.display()
    );
    Ok(())
}

fn estimate(cfg: &ExperimentConfig, threshold_bits: Option<f64>) -> Result<()> {
    let key_bits = cfg.key_bits as f64;
    let rate = cfg.info_rate();
    let channel = match cfg.channel {
        ChannelModel::WrappedGaussian { sigma } => format!("wrapped_gaussian sigma = {sigma}"),
        ChannelModel::UniformArc { arc_fraction } => format!("uniform_arc arc_fraction = {arc_fraction}"),
    };
    let attack = serde_json::to_value(cfg.attack).expect("serializes");
    println!("L = {}, M = {}, {channel}, {}", cfg.key_bits, cfg.symbols, attack.as_str().unwrap_or_default());
    println!("U = {rate:.6} bits per symbol");
    match n0(key_bits, rate) {
        Ok(n) => println!("n0 = L / U = {n:.4} symbols"),
        Err(_) => println!(
            "warning: U = {rate:.6} is not positive; the linear estimate is vacuous and n0 is undefined"
        ),
    }
    if cfg.cipher == CipherKind::AlphaEta {
        if let Ok(bound) = ndep_bound(cfg.key_bits, cfg.symbols) {
            println!("ndep_bound = {bound:.4} independent running keys");
        }
        if let ChannelModel::WrappedGaussian { sigma } = cfg.channel {
            let info = exact_symbol_info_with_mode(cfg.symbols as f64, sigma, cfg.attack)?;
            println!("exact_symbol_info = {info:.6} bits per symbol");
        }
    }
    if let Some(t) = threshold_bits {
        match threshold_crossing(key_bits, rate, t) {
            Some(0) => println!("threshold {t} bits: reached at q = 0, insecure for every message length"),
            Some(q) => println!(
                "threshold {t} bits: reached at q = {q}, insecure for message lengths above {} bits",
                q - 1
            ),
            None => println!("threshold {t} bits: never reached by the estimate"),
        }
    }
    Ok(())
}

fn sweep(args: &ConfigArgs, out: &Path, param: &str, values: &[String], threads: usize) -> Result<()> {
    let values: Vec<&str> = values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Error::Usage("sweep needs at least one value".into()));
    }
    let base = match args.config.as_deref() {
        Some(p) => read_config_value(p)?,
        None => serde_json::to_value(ExperimentConfig::default()).expect("config serializes"),
    };
    let mut resolved = base.clone();
    for item in &args.overrides {
        let (k, v) = parse_override(item)?;
        set_path(&mut resolved, k, parse_value(v))?;
    }
    if !matches!(get_path(&resolved, param), Some(Value::Number(_))) {
        return Err(Error::Usage(format!("sweep parameter `{param}` is not a numeric config field")));
    }

    let mut runs = Vec::with_capacity(values.len());
    for v in &values {
        if !matches!(parse_value(v), Value::Number(_)) {
            return Err(Error::Usage(format!("sweep value `{v}` is not a number")));
        }
        let mut overrides = args.overrides.clone();
        overrides.push(format!("{param}={v}"));
        let cfg = config_from_value(base.clone(), &overrides)?;
        cfg.check_budget()?;
        runs.push((*v, cfg));
    }

    std::fs::create_dir_all(out).map_err(|e| Error::Usage(format!("{}: {e}", out.display())))?;
    let index_path = out.join("index.csv");
    let mut index = csv::Writer::from_path(&index_path)
        .map_err(|e| Error::Usage(format!("{}: {e}", index_path.display())))?;
    let index_err = |e: csv::Error| Error::Usage(format!("{}: {e}", index_path.display()));
    index
        .write_record(["value", "file", "final_mean_entropy", "final_mean_prob_correct"])
        .map_err(index_err)?;
    for (v, cfg) in runs {
        let file = format!("{param}_{v}.csv");
        let path = out.join(&file);
        let run = run_ensemble(
            &cfg,
            &EnsembleOptions {
                threads,
                ..Default::default()
            },
        )?;
        let meta = RunMetadata::new(&cfg, run.threads, run.wall_clock_seconds);
        write_results(&run.aggregate, &meta, &path)?;
        let last = run.aggregate.rows.last().expect("Q_max >= 1");
        index
            .write_record([
                v.to_string(),
                file,
                format!("{:?}", last.mean_entropy),
                format!("{:?}", last.mean_prob_correct),
            ])
            .map_err(index_err)?;
        println!("{param}={v}: mean entropy at q={} is {:.6} bits", last.q, last.mean_entropy);
    }
    index.flush().map_err(|e| Error::Usage(format!("{}: {e}", index_path.display())))?;
    Ok(())
}

fn verify(mut cfg: ExperimentConfig, threads: usize, fault: Option<Fault>) -> Result<()> {
    cfg.n_trials = cfg.n_trials.min(VERIFY_TRIALS);
    let run = run_ensemble(
        &cfg,
        &EnsembleOptions {
            threads,
            mean_posterior: false,
            fault,
        },
    )?;
    let report = run.invariants();
    for c in &report.checks {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    match report.first_failure() {
        Some(c) => Err(Error::Invariant(c.name)),
        None => {
            println!("all invariants hold over {} trials", cfg.n_trials);
            Ok(())
        }
    }
}
