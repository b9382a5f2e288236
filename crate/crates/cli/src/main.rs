//! Batch runner for dyad experiments.

mod config;
mod run;
mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use config::{parse_config, ConfigError, Overrides};
use run::RunError;

#[derive(Debug, Parser)]
#[command(name = "spindyad", version, about = "Run a dyad experiment preset from a config file")]
struct Cli {
    /// Experiment config (`key=value` with `[section]` headers).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed; replaces `sim.seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; replaces `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Trajectory count; replaces `sim.trajectories`.
    #[arg(long, value_name = "N")]
    trajectories: Option<usize>,
    /// Skip SVG output.
    #[arg(long)]
    no_plot: bool,
    /// Worker threads. Changes wall time only.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\\', "\\\\").replace('"', "\\\"");
            eprintln!(
                "error: kind={} code={} message=\"{message}\"",
                e.kind(),
                e.exit_code()
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn real_main(cli: &Cli) -> Result<(), RunError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("cannot start thread pool: {e}")))?;
    }
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", cli.config.display())))?;
    let base = cli.config.parent().unwrap_or(Path::new("."));
    let overrides = Overrides {
        seed: cli.seed,
        trajectories: cli.trajectories,
        out_dir: cli.out.clone(),
        no_plot: cli.no_plot,
    };
    let cfg = parse_config(&text, base, &overrides)?;
    let artifacts = run::execute(&cfg)?;

    fs::create_dir_all(&cfg.out_dir)?;
    for (name, contents) in &artifacts.files {
        fs::write(cfg.out_dir.join(name), contents)?;
    }
    for (k, v) in &artifacts.summary {
        println!("{k}={v}");
    }
    eprintln!(
        "wrote {} files to {}",
        artifacts.files.len(),
        cfg.out_dir.display()
    );
    Ok(())
}
