//! `wzlri`: simulations, path dumps and convergence studies for the cubic
//! Schrödinger equation with white noise dispersion.

mod commands;
mod manifest;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::manifest::RunManifest;
use crate::settings::{read_config, Resolver};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] wzlri_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use wzlri_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Config(_) | E::Argument(_) | E::Size { .. } | E::Range { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "wzlri",
    version,
    about = "Wong-Zakai low-regularity integrators for stochastic NLS"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write the initial and final fields.
    Simulate(Flags),
    /// Run a convergence study and write its error table.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[command(flatten)]
        flags: Flags,
    },
    /// Dump a Brownian or Wong-Zakai path on the fine grid.
    Paths {
        #[command(flatten)]
        flags: Flags,
        /// Dump the raw Brownian samples instead of the interpolant.
        #[arg(long)]
        raw: bool,
    },
    /// Verify a previous run.
    Check {
        #[arg(value_enum)]
        what: CheckKind,
        /// Manifest written by the run to verify.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Re-execute a run from its manifest.
    Replay {
        manifest: PathBuf,
        /// Write to this directory instead of the recorded one.
        #[arg(long)]
        out: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StudyKind {
    Deterministic,
    Strong,
    Pathwise,
    DeltaSweep,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Deterministic => "deterministic",
            StudyKind::Strong => "strong",
            StudyKind::Pathwise => "pathwise",
            StudyKind::DeltaSweep => "delta-sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CheckKind {
    /// Final field of a `--lambda 0` simulation equals the exact free flow.
    FreeFlow,
}

/// Times accept `2^-12` style literals; decimals are snapped.
#[derive(Args, Debug, Default)]
struct Flags {
    /// Scheme name (comma list for studies).
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long = "T")]
    horizon: Option<String>,
    /// Step size (comma list for studies).
    #[arg(long)]
    tau: Option<String>,
    /// Wong-Zakai width (comma list for delta sweeps).
    #[arg(long)]
    delta: Option<String>,
    /// Truncation level, `inf` for none.
    #[arg(long = "R")]
    truncation: Option<String>,
    #[arg(long = "N")]
    bandwidth: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// Initial data class: H2, H3, H4 or Cinf.
    #[arg(long)]
    data: Option<String>,
    #[arg(long = "data-seed")]
    data_seed: Option<String>,
    /// Sobolev index of the error norm.
    #[arg(long = "norm-s")]
    norm_s: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long = "tau-ref")]
    tau_ref: Option<String>,
    /// Bandwidth of the reference solve.
    #[arg(long = "n-ref")]
    n_ref: Option<String>,
    #[arg(long = "h-fine")]
    h_fine: Option<String>,
    /// `wong_zakai` or `raw_brownian`.
    #[arg(long = "path-source")]
    path_source: Option<String>,
    /// Study defaults: `desk` or `large`.
    #[arg(long)]
    scale: Option<String>,
    /// File of `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn resolver(self, extra: &[(&str, String)]) -> Result<Resolver, CliError> {
        let config = match &self.config {
            Some(path) => read_config(path)?,
            None => BTreeMap::new(),
        };
        let pairs = [
            ("scheme", self.scheme),
            ("T", self.horizon),
            ("tau", self.tau),
            ("delta", self.delta),
            ("R", self.truncation),
            ("N", self.bandwidth),
            ("lambda", self.lambda),
            ("seed", self.seed),
            ("samples", self.samples),
            ("data", self.data),
            ("data-seed", self.data_seed),
            ("norm-s", self.norm_s),
            ("workers", self.workers),
            ("out", self.out),
            ("tau-ref", self.tau_ref),
            ("n-ref", self.n_ref),
            ("h-fine", self.h_fine),
            ("path-source", self.path_source),
            ("scale", self.scale),
        ];
        let mut flags: BTreeMap<String, String> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect();
        flags.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
        Ok(Resolver::new(config, flags))
    }
}

fn dispatch(command: &str, r: &mut Resolver) -> Result<RunManifest, CliError> {
    match command.split_once(' ') {
        None if command == "simulate" => commands::simulate(r),
        None if command == "paths" => commands::paths(r),
        Some(("study", kind)) => {
            let kind = StudyKind::from_str(kind, false).map_err(CliError::Usage)?;
            commands::study(kind, r)
        }
        _ => Err(CliError::Usage(format!("unknown command '{command}'"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let manifest = match cli.command {
        Command::Simulate(flags) => dispatch("simulate", &mut flags.resolver(&[])?)?,
        Command::Study { kind, flags } => commands::study(kind, &mut flags.resolver(&[])?)?,
        Command::Paths { flags, raw } => {
            let extra = if raw { vec![("raw", "true".to_string())] } else { vec![] };
            dispatch("paths", &mut flags.resolver(&extra)?)?
        }
        Command::Check {
            what: CheckKind::FreeFlow,
            manifest,
        } => {
            let deviation = commands::check_free_flow(&manifest)?;
            println!("max deviation from free flow: {deviation:.3e}");
            if deviation > 1e-12 {
                return Err(CliError::Check(format!("deviation {deviation:.3e} exceeds 1e-12")));
            }
            return Ok(());
        }
        Command::Replay { manifest, out } => {
            let recorded = RunManifest::read(&manifest)?;
            let mut r = Resolver::new(recorded.params.clone(), BTreeMap::new());
            if let Some(out) = out {
                r.set("out", out);
            }
            dispatch(&recorded.command, &mut r)?
        }
    };
    log::info!("outputs: {:?}", manifest.outputs);
    Ok(())
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
