//! `ebake`: operator front end for the EBAKE-SE toolkit.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Overrides;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Protocol(String),
    Transport(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Protocol(_) => 2,
            CliError::Transport(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Protocol(m) | CliError::Transport(m) => f.write_str(m),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ebake", version, about = "EBAKE-SE key exchange toolkit")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Trusted authority administration
    Ta {
        #[command(subcommand)]
        cmd: TaCmd,
    },
    /// Run one handshake and print the key fingerprint
    Handshake {
        /// Initiator credential file, or a device label from the credentials dir
        #[arg(long)]
        initiator: String,
        /// Responder label
        #[arg(long)]
        responder: String,
        #[arg(long, value_enum, default_value_t = SchemeArg::Ebake)]
        scheme: SchemeArg,
    },
    /// Scripted attacks
    Attack {
        #[command(subcommand)]
        cmd: AttackCmd,
    },
    /// Operation counts and timing
    Bench {
        #[command(subcommand)]
        cmd: BenchCmd,
    },
}

#[derive(Subcommand, Debug)]
enum TaCmd {
    /// Create a fresh registry
    Init {
        /// Overwrite an existing registry
        #[arg(long)]
        force: bool,
    },
    /// Provision a device and write its credential file
    Register { id: String },
    /// Start a new K_dta generation
    RotateKdta,
    /// Broker handshakes between provisioned devices.
    /// Pairs come from --pair or from stdin, one "initiator responder" per line.
    Serve {
        #[arg(long = "pair", value_parser = parse_pair)]
        pairs: Vec<(String, String)>,
    },
}

#[derive(Subcommand, Debug)]
enum AttackCmd {
    Run {
        /// trace, impersonate, mitm or dos
        name: String,
        #[arg(long, value_enum, default_value_t = SchemeArg::Ebake)]
        scheme: SchemeArg,
        /// JSON report destination; printed to stdout when absent
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum BenchCmd {
    Run {
        #[arg(long, value_enum, default_value_t = SchemeArg::Ebake)]
        scheme: SchemeArg,
        #[arg(long, value_enum, default_value_t = OutputArg::Table)]
        output: OutputArg,
        #[arg(long, default_value_t = ebake_core::bench::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long, default_value_t = 50)]
        handshakes: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeArg {
    Ebake,
    Das,
}

impl From<SchemeArg> for ebake_core::adversary::Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Ebake => ebake_core::adversary::Scheme::Ebake,
            SchemeArg::Das => ebake_core::adversary::Scheme::Das,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputArg {
    Table,
    Json,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (a, b) = s
        .split_once([',', ':', ' '])
        .ok_or_else(|| format!("expected INITIATOR,RESPONDER, got {s:?}"))?;
    Ok((a.trim().to_owned(), b.trim().to_owned()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::Config::resolve(&cli.overrides)?;
    match cli.cmd {
        Cmd::Ta { cmd } => match cmd {
            TaCmd::Init { force } => commands::ta_init(&cfg, force),
            TaCmd::Register { id } => commands::ta_register(&cfg, &id),
            TaCmd::RotateKdta => commands::ta_rotate(&cfg),
            TaCmd::Serve { pairs } => commands::ta_serve(&cfg, pairs),
        },
        Cmd::Handshake {
            initiator,
            responder,
            scheme,
        } => commands::handshake(&cfg, &initiator, &responder, scheme),
        Cmd::Attack {
            cmd: AttackCmd::Run { name, scheme, report },
        } => commands::attack(&cfg, &name, scheme, report.as_deref()),
        Cmd::Bench {
            cmd:
                BenchCmd::Run {
                    scheme,
                    output,
                    iterations,
                    handshakes,
                },
        } => commands::bench(&cfg, scheme, output, iterations, handshakes),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
