use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ehwsn::bench::{emit_csv, run_experiment_detailed, write_lp_trace, ExperimentConfig, RunOptions};
use ehwsn::Error;

/// MSE-versus-slots Monte-Carlo study of joint signal and power restoration.
#[derive(Debug, Parser)]
#[command(name = "ehwsn-bench", version)]
struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path.
    #[arg(long, default_value = "mse.csv")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    /// Comma-separated slot counts, e.g. `5,10,15`.
    #[arg(long)]
    m_values: Option<String>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Comma-separated scheme names.
    #[arg(long)]
    schemes: Option<String>,
    /// `real` or `complex`.
    #[arg(long)]
    fading: Option<String>,
    /// Print per-iteration solver records to stderr.
    #[arg(long)]
    verbose: bool,
    /// Write the pivot trace of frame 0 of every cell to this file.
    #[arg(long)]
    lp_trace: Option<PathBuf>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        config.apply_text(&text)?;
    }
    let overrides = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("n_frames", cli.frames.map(|v| v.to_string())),
        ("m_values", cli.m_values.clone()),
        ("sigma2", cli.sigma2.map(|v| v.to_string())),
        ("schemes", cli.schemes.clone()),
        ("fading_mode", cli.fading.clone()),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ehwsn-bench: {e}");
            return ExitCode::from(1);
        }
    };

    let run = || -> Result<(), Error> {
        let report = run_experiment_detailed(&config, RunOptions { verbose: cli.verbose })?;
        for cell in &report.cells {
            for frame in &cell.frames {
                for line in frame.log.iter().chain(&frame.errors) {
                    if cli.verbose || frame.errors.contains(line) {
                        eprintln!("{line}");
                    }
                }
            }
            for (s, scheme) in config.schemes.iter().enumerate() {
                let failed = cell.failures(s);
                if failed > 0 {
                    eprintln!("M={} {scheme}: {failed} of {} frames failed", cell.m, config.n_frames);
                }
            }
        }
        emit_csv(&report.table, &cli.out)?;
        if let Some(path) = &cli.lp_trace {
            write_lp_trace(&config, BufWriter::new(File::create(path)?))?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ehwsn-bench: {e}");
            ExitCode::from(2)
        }
    }
}
