use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use optdec_cli::config::TopologyKind;
use optdec_cli::sweep::{sweep_to_dir, SweepParam};
use optdec_cli::{gen_topology, output_dir, run_to_dir, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "optdec", version, about = "Run optdec solver experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace and summary.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a connected topology as JSON.
    GenTopology {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a configuration once per value of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn topology_error(e: optdec_core::Error) -> CliError {
    match e {
        optdec_core::Error::Disconnected { .. } => CliError::Runtime {
            message: e.to_string(),
            trace: None,
        },
        _ => CliError::Config(e.to_string()),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let files = run_to_dir(&cfg, &output_dir(out.as_deref()))?;
            println!("{}", files.trace.display());
            println!("{}", files.summary.display());
            Ok(())
        }
        Command::GenTopology { kind, m, p, seed, out } => {
            let kind: TopologyKind = kind.parse().map_err(CliError::Config)?;
            let t = gen_topology(kind, m, p, seed).map_err(topology_error)?;
            let json = serde_json::to_string(&t.to_file()).expect("topology serializes");
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let param: SweepParam = param.parse()?;
            if values.is_empty() {
                return Err(CliError::Config("sweep needs at least one value".into()));
            }
            let path = sweep_to_dir(&cfg, param, &values, &output_dir(out.as_deref()))?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
