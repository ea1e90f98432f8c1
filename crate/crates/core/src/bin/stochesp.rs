use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stochesp::config::{parse_config, ExperimentConfig};
use stochesp::experiments::{certify_table, config_hash, list_experiments, run_experiment};

#[derive(Parser)]
#[command(name = "stochesp", version, about = "Stochastic echo state property experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// List the available experiments.
    List,
    /// Print the certificate table for a config's model and inputs.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// auto, quantile, assignment or sinkhorn.
    #[arg(long)]
    ot: Option<String>,
    #[arg(long, env = "STOCHESP_THREADS")]
    threads: Option<usize>,
}

fn load(path: &Path) -> Result<(Vec<u8>, ExperimentConfig), String> {
    let text = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let text_str = std::str::from_utf8(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let cfg = parse_config(text_str).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((text, cfg))
}

fn certify(config: &Path, seed: Option<u64>) -> Result<bool, String> {
    let (_, mut cfg) = load(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let (pass, table) = certify_table(&cfg).map_err(|e| e.to_string())?;
    print!("{table}");
    Ok(pass)
}

fn run(args: RunArgs) -> Result<bool, String> {
    let (text, mut cfg) = load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.seeds.clear();
    }
    if let Some(ot) = args.ot {
        cfg.run.ot = ot;
        cfg.validate().map_err(|e| e.to_string())?;
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = args.threads;
    let out = args
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .ok_or("no output directory: pass --out or set out in the config")?;
    let outcome = run_experiment(&cfg, &config_hash(&text), &out).map_err(|e| e.to_string())?;
    for (k, v) in &outcome.summary {
        println!("{k} = {v}");
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", list_experiments());
            ExitCode::SUCCESS
        }
        Command::Certify { config, seed } => exit_code(certify(&config, seed)),
        Command::Run(args) => exit_code(run(args)),
    }
}

fn exit_code(r: Result<bool, String>) -> ExitCode {
    match r {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
