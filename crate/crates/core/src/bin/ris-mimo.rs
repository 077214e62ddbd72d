use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use ris_mimo::codebook::codebook_dump;
use ris_mimo::harness::{
    render_config_json, render_csv, render_rows_json, render_traces_jsonl, run_sweep, ExperimentConfig, MetricChoice,
    SelectorChoice,
};
use ris_mimo::Error;

#[derive(Parser)]
#[command(name = "ris-mimo", version, about = "RIS-assisted MIMO precoder selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectorArg {
    Proposed,
    Conventional,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Lambda,
    Effrank,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write results to a directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        selector: Option<SelectorArg>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
    },
    /// Print the beam grid and every precoder of a codebook as JSON.
    CodebookDump {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        o1: usize,
        #[arg(long)]
        o2: usize,
        #[arg(long)]
        layer: usize,
    },
    /// Parse and check an experiment config.
    ValidateConfig { path: PathBuf },
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn simulate(
    config: &Path,
    out: &Path,
    trials: Option<usize>,
    seed: Option<u64>,
    selector: Option<SelectorArg>,
    metric: Option<MetricArg>,
) -> Result<(), Error> {
    let mut cfg = load_config(config)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(s) = selector {
        cfg.selector_kind = match s {
            SelectorArg::Proposed => SelectorChoice::Proposed,
            SelectorArg::Conventional => SelectorChoice::Conventional,
            SelectorArg::Both => SelectorChoice::Both,
        };
    }
    if let Some(m) = metric {
        cfg.metric_kind = match m {
            MetricArg::Lambda => MetricChoice::Lambda,
            MetricArg::Effrank => MetricChoice::Effrank,
            MetricArg::Both => MetricChoice::Both,
        };
    }
    cfg.validate()?;

    info!("running {} trials of '{}'", cfg.trials, cfg.name);
    let result = run_sweep(&cfg)?;

    fs::create_dir_all(out)?;
    fs::write(out.join("results.csv"), render_csv(&result.rows)?)?;
    fs::write(out.join("results.json"), render_rows_json(&result.rows)?)?;
    fs::write(out.join("config.json"), render_config_json(&cfg)?)?;
    if cfg.record_traces {
        fs::write(out.join("traces.jsonl"), render_traces_jsonl(&result.traces)?)?;
    }
    println!("wrote {} rows to {}", result.rows.len(), out.display());
    if result.failures > 0 {
        eprintln!("{} trials failed and were excluded", result.failures);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { config, out, trials, seed, selector, metric } => {
            simulate(&config, &out, trials, seed, selector, metric)
        }
        Command::CodebookDump { n1, n2, o1, o2, layer } => {
            let dump = codebook_dump(n1, n2, o1, o2, layer)?;
            println!("{}", serde_json::to_string_pretty(&dump)?);
            Ok(())
        }
        Command::ValidateConfig { path } => {
            let cfg = load_config(&path)?;
            println!(
                "ok: '{}' {}x{} MIMO, {} layers, N_RIS = {}, {} SNR points, {} trials",
                cfg.name,
                cfg.n_t,
                cfg.n_r,
                cfg.layer,
                cfg.n_ris(),
                cfg.snr_grid_db.len(),
                cfg.trials
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
