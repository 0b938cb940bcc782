use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cvqkd::mc::write_round_dump;
use cvqkd::sweep::{self, Mode, OutputFormat, RunConfig, Scale, SweepSpec};
use cvqkd::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_IO: u8 = 4;

/// Key rates and protocol simulation for source-device-independent CV-QKD.
///
/// Configuration keys can be overridden with CVQKD_<KEY> environment
/// variables, and keys of the [sweep] section with CVQKD_SWEEP_<KEY>.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the run described by a configuration file.
    Run {
        /// TOML configuration file.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Sweep one parameter, starting from the defaults or a configuration file.
    Sweep {
        /// Parameter to vary, e.g. distance_km or block_size.
        #[arg(long)]
        param: String,
        /// First value of the parameter.
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        /// Last value of the parameter.
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        /// Number of points, endpoints included.
        #[arg(long)]
        steps: usize,
        /// Space the points logarithmically.
        #[arg(long)]
        log: bool,
        /// Base configuration; defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// collective, coherent, coherent-asymptotic or mc.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct OutputArgs {
    /// Seed of the Monte-Carlo simulation.
    #[arg(long)]
    seed: Option<u64>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format; CSV when neither this nor the configuration sets it.
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    toml::Value::String(s.to_string())
        .try_into()
        .map_err(|_| format!("unknown mode '{s}' (collective, coherent, coherent-asymptotic, mc)"))
}

fn load(path: Option<&PathBuf>) -> cvqkd::Result<RunConfig> {
    match path {
        Some(path) => RunConfig::load(path),
        None => RunConfig::from_toml_with_env("", std::env::vars()),
    }
}

fn execute(cli: Cli) -> cvqkd::Result<bool> {
    let (mut config, out) = match cli.command {
        Command::Run { config, out } => (load(Some(&config))?, out),
        Command::Sweep {
            param,
            from,
            to,
            steps,
            log,
            config,
            mode,
            out,
        } => {
            let mut cfg = load(config.as_ref())?;
            cfg.sweep = Some(SweepSpec {
                param,
                from,
                to,
                steps,
                scale: if log { Scale::Log } else { Scale::Linear },
            });
            if let Some(mode) = mode {
                cfg.mode = mode;
            }
            (cfg, out)
        }
    };
    if let Some(seed) = out.seed {
        config.seed = seed;
    }
    if let Some(path) = out.output {
        config.output = Some(path);
    }
    if let Some(format) = out.format {
        config.format = format;
    }

    let result = sweep::run(&config)?;
    let mut buf = Vec::new();
    match config.format {
        OutputFormat::Csv => sweep::write_csv(&result, &mut buf)?,
        OutputFormat::Json => sweep::write_json(&result, &mut buf)?,
        OutputFormat::Svg => sweep::write_svg(&result, &mut buf)?,
    }
    match &config.output {
        Some(path) => std::fs::write(path, &buf).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?,
        None => std::io::stdout().write_all(&buf).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        })?,
    }
    if let Some(path) = &config.round_dump {
        write_round_dump(path, &result.records)?;
    }
    if result.all_aborted() {
        let reasons: Vec<String> = result
            .rows
            .iter()
            .filter_map(|r| r.abort_reason.map(|a| a.description().to_string()))
            .collect();
        eprintln!("every point aborted: {}", reasons.join("; "));
        return Ok(false);
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_MODEL),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Config(_) => EXIT_CONFIG,
                Error::Io { .. } => EXIT_IO,
                _ => EXIT_MODEL,
            })
        }
    }
}
