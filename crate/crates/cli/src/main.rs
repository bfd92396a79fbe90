use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::TypedValueParser;
use clap::{Parser, Subcommand};
use pidil_core::dilation::{dilate, predict_properties, DEFAULT_DEPTH};
use pidil_core::families::{
    enumerate_poset_capped, finest_family, validate_family, ProjectionFamily, RowContraction,
    DEFAULT_BLOCK_CAP,
};
use pidil_core::graph::{is_type_one, to_dot, DirectedGraph};
use pidil_core::numerics::ToleranceConfig;
use pidil_core::tuples::{check_dagger, extract_graph, wold_decompose, OperatorTuple};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

/// Minimal partially isometric dilations of finite-dimensional row contractions.
#[derive(Debug, Parser)]
#[command(name = "pidil", version)]
struct Cli {
    /// Rank and membership tolerance.
    #[arg(long, global = true)]
    eps_rank: Option<f64>,
    /// Roundoff tolerance for residuals that should vanish.
    #[arg(long, global = true)]
    eps_rel: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the partial-isometry relations of an operator tuple.
    ValidateTuple { tuple: PathBuf },
    /// Directed graph of a tuple satisfying the relations.
    ExtractGraph {
        tuple: PathBuf,
        #[arg(long)]
        dot: bool,
    },
    /// Wold decomposition of a tuple satisfying the relations.
    Wold { tuple: PathBuf },
    /// Check that a projection family stabilizes a row contraction.
    ValidateFamily {
        #[arg(short = 'T', long = "contraction")]
        contraction: PathBuf,
        #[arg(short = 'P', long = "family")]
        family: PathBuf,
    },
    /// Finest stabilizing family of a row contraction.
    Finest {
        #[arg(short = 'T', long = "contraction")]
        contraction: PathBuf,
    },
    /// Every stabilizing family with its Hasse diagram.
    Poset {
        #[arg(short = 'T', long = "contraction")]
        contraction: PathBuf,
        #[arg(long)]
        dot: bool,
        /// Refuse finest families with more blocks than this.
        #[arg(long, default_value_t = DEFAULT_BLOCK_CAP)]
        max_blocks: usize,
    },
    /// Construct and verify the truncated minimal dilation.
    Dilate {
        #[arg(short = 'T', long = "contraction")]
        contraction: PathBuf,
        #[arg(short = 'P', long = "family")]
        family: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DEPTH, value_parser = clap::value_parser!(u32).range(1..).map(|d| d as usize))]
        depth: usize,
        /// Write the result here instead of stdout.
        #[arg(short = 'o', long = "output")]
        output: Option<PathBuf>,
    },
    /// Purity, coisometry and wandering multiplicities of the dilation.
    Predict {
        #[arg(short = 'T', long = "contraction")]
        contraction: PathBuf,
        #[arg(short = 'P', long = "family")]
        family: PathBuf,
    },
    /// Type I classification of a graph algebra.
    Type1 { graph: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error("cannot parse {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] pidil_core::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Read { .. }
            | CliError::Write { .. }
            | CliError::Parse { .. }
            | CliError::Usage(_) => 1,
            CliError::Core(e) => e.exit_code() as u8,
        }
    }

    fn kind(&self) -> String {
        match self {
            CliError::Read { .. } | CliError::Write { .. } => "Io".into(),
            CliError::Parse { .. } => "Parse".into(),
            CliError::Usage(_) => "Usage".into(),
            CliError::Core(e) => e.kind(),
        }
    }
}

fn core<E: Into<pidil_core::Error>>(e: E) -> CliError {
    CliError::Core(e.into())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    text
}

fn emit<T: Serialize>(value: &T) {
    print!("{}", to_json(value));
}

fn tolerances(cli: &Cli) -> Result<ToleranceConfig, CliError> {
    let defaults = ToleranceConfig::default();
    ToleranceConfig::new(
        cli.eps_rank.unwrap_or(defaults.eps_rank),
        cli.eps_rel.unwrap_or(defaults.eps_rel),
    )
    .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let tol = tolerances(cli)?;
    match &cli.command {
        Command::ValidateTuple { tuple } => {
            let s: OperatorTuple = read_json(tuple)?;
            let report = check_dagger(&s, &tol).map_err(core)?;
            emit(&report);
            report.require(tol.eps_rank).map_err(core)
        }
        Command::ExtractGraph { tuple, dot } => {
            let s: OperatorTuple = read_json(tuple)?;
            let graph = extract_graph(&s, &tol).map_err(core)?;
            if *dot {
                print!("{}", to_dot(&graph));
            } else {
                emit(&graph);
            }
            Ok(())
        }
        Command::Wold { tuple } => {
            let s: OperatorTuple = read_json(tuple)?;
            emit(&wold_decompose(&s, &tol).map_err(core)?);
            Ok(())
        }
        Command::ValidateFamily {
            contraction,
            family,
        } => {
            let t: RowContraction = read_json(contraction)?;
            let p: ProjectionFamily = read_json(family)?;
            emit(&validate_family(&t, &p, &tol).map_err(core)?);
            Ok(())
        }
        Command::Finest { contraction } => {
            let t: RowContraction = read_json(contraction)?;
            let family = finest_family(&t, &tol).map_err(core)?;
            emit(&family);
            validate_family(&t, &family, &tol).map_err(core)?;
            Ok(())
        }
        Command::Poset {
            contraction,
            dot,
            max_blocks,
        } => {
            let t: RowContraction = read_json(contraction)?;
            let poset = enumerate_poset_capped(&t, &tol, *max_blocks).map_err(core)?;
            if *dot {
                print!("{}", poset.to_dot());
            } else {
                emit(&poset);
            }
            Ok(())
        }
        Command::Dilate {
            contraction,
            family,
            depth,
            output,
        } => {
            let t: RowContraction = read_json(contraction)?;
            let p: ProjectionFamily = read_json(family)?;
            let result = dilate(&t, &p, *depth, &tol).map_err(core)?;
            match output {
                Some(path) => fs::write(path, to_json(&result)).map_err(|source| CliError::Write {
                    path: path.clone(),
                    source,
                }),
                None => {
                    emit(&result);
                    Ok(())
                }
            }
        }
        Command::Predict {
            contraction,
            family,
        } => {
            let t: RowContraction = read_json(contraction)?;
            let p: ProjectionFamily = read_json(family)?;
            validate_family(&t, &p, &tol).map_err(core)?;
            emit(&predict_properties(&t, &p, &tol));
            Ok(())
        }
        Command::Type1 { graph } => {
            let g: DirectedGraph = read_json(graph)?;
            emit(&is_type_one(&g));
            Ok(())
        }
    }
}

fn diagnostic(kind: &str, message: &str, code: u8) {
    let line = serde_json::json!({
        "level": "error",
        "kind": kind,
        "message": message,
        "exit_code": code,
    });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            // --help and --version
            print!("{err}");
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            diagnostic("Usage", err.to_string().trim_end(), 1);
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err.exit_code();
            diagnostic(&err.kind(), &err.to_string(), code);
            ExitCode::from(code)
        }
    }
}
