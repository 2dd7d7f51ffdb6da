//! Command-line front end for the marketplace simulator:
//!
//! - `select` — score a candidate roster CSV and keep the top N.
//! - `contract` — solve the contract equilibrium for a config and write
//!   the equilibrium record as JSON.
//! - `train` — run one comparison arm end to end and report its trace.
//! - `scenario` — run the full comparison set into an artifact bundle.
//! - `compare` — summarize a finished bundle as a table or JSON.
//!
//! Configs are TOML (`--config`), every key can be overridden with
//! repeated `--set dotted.path=value` flags, and the output directory
//! falls back to the `FEDMARKET_OUT` environment variable. Exit codes:
//! 0 success, 2 validation error, 3 non-convergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedmarket_core::contract::equilibrium::iterate_contracts;
use fedmarket_core::contract::feasibility::verify_book;
use fedmarket_core::scenario::{
    assemble_market, compare_arms, default_config_toml, load_bundle, parse_config_with_overrides,
    render_comparison, run_scenario, to_toml_string, Arm, ScenarioConfig, ScenarioError,
};
use fedmarket_core::selection::{roster_from_csv, roster_to_writer, select_top_n, SelectionWeights};
use fedmarket_core::MarketInstance;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;

/// Environment fallback for `--out-dir`.
const OUT_DIR_ENV: &str = "FEDMARKET_OUT";

#[derive(Parser)]
#[command(
    name = "fedmarket",
    version,
    about = "Deterministic simulator for a contract-driven encrypted-data federated-learning market"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Config file plus overrides, shared by every config-driven subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set training.rounds=500 (repeatable; wins over the file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig, CliError> {
        let text = match &self.config {
            Some(path) => fs::read_to_string(path)
                .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?,
            None => String::new(),
        };
        let config = parse_config_with_overrides(&text, &self.set)?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Select the top-N candidates from a roster CSV.
    Select {
        /// Candidate roster CSV (id,d_total,d_local_cap,eps,a_fn,zeta,cycles,freq,rate,compute).
        #[arg(long)]
        roster: PathBuf,
        /// How many users to keep.
        #[arg(long)]
        n: usize,
        /// Weight on the data-stock attribute.
        #[arg(long, default_value_t = 1.0 / 3.0)]
        w_data: f64,
        /// Weight on the compute attribute.
        #[arg(long, default_value_t = 1.0 / 3.0)]
        w_compute: f64,
        /// Weight on the uplink-rate attribute.
        #[arg(long, default_value_t = 1.0 / 3.0)]
        w_rate: f64,
        /// Where to write the selected roster CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the contract equilibrium and write it as JSON.
    Contract {
        #[command(flatten)]
        config: ConfigArgs,
        /// Where to write the equilibrium JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one comparison arm end to end.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Which arm to run (proposed, baseline, info-symmetry, conv-fl).
        #[arg(long)]
        arm: String,
        /// Bundle directory (falls back to $FEDMARKET_OUT, then ./fedmarket_out).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the full scenario into an artifact bundle.
    Scenario {
        #[command(flatten)]
        config: ConfigArgs,
        /// Restrict the comparison set (repeatable).
        #[arg(long = "arm")]
        arms: Vec<String>,
        /// Bundle directory (falls back to $FEDMARKET_OUT, then ./fedmarket_out).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Print the effective config TOML and exit without running.
        #[arg(long)]
        print_config: bool,
    },
    /// Summarize a finished bundle.
    Compare {
        /// Bundle directory written by `scenario`.
        #[arg(long)]
        bundle: PathBuf,
        /// Emit JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Print the default config TOML.
    DefaultConfig,
}

/// An error plus the exit code it deserves.
struct CliError {
    message: String,
    code: u8,
}

impl CliError {
    fn validation(message: String) -> Self {
        Self {
            message,
            code: EXIT_VALIDATION,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::validation(e.to_string())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn out_dir_or_default(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fedmarket_out"))
}

fn parse_arms(names: &[String]) -> Result<Vec<Arm>, CliError> {
    names
        .iter()
        .map(|name| {
            Arm::from_name(name).ok_or_else(|| {
                CliError::validation(format!(
                    "unknown arm '{name}' (expected proposed, baseline, info-symmetry, or conv-fl)"
                ))
            })
        })
        .collect()
}

fn write_or_print(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display()))),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::validation(format!("cannot write stdout: {e}")))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.cmd {
        Cmd::Select {
            roster,
            n,
            w_data,
            w_compute,
            w_rate,
            out,
        } => {
            let weights = SelectionWeights::new(w_data, w_compute, w_rate)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let candidates =
                roster_from_csv(&roster).map_err(|e| CliError::validation(e.to_string()))?;
            let picked = select_top_n(&candidates, &weights, n)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let selected: Vec<_> = picked.iter().map(|&k| candidates[k].clone()).collect();
            let mut buf = Vec::new();
            roster_to_writer(&selected, &mut buf)
                .map_err(|e| CliError::validation(e.to_string()))?;
            write_or_print(out.as_deref(), &buf)?;
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Contract { config, out } => {
            let cfg = config.load()?;
            let (roster, map) = assemble_market(&cfg)?;
            let instance = MarketInstance::new(&roster, &map, &cfg.pricing)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let result = iterate_contracts(&instance, &cfg.solver)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let feasibility = verify_book(&instance, &result.book, &result.eta)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let record = serde_json::json!({
                "book": result.book,
                "eta": result.eta,
                "iterations": result.iterations,
                "converged": result.converged,
                "utility_trace": result.utility_trace,
                "feasibility": feasibility,
            });
            let mut bytes = serde_json::to_vec_pretty(&record)
                .map_err(|e| CliError::validation(e.to_string()))?;
            bytes.push(b'\n');
            write_or_print(out.as_deref(), &bytes)?;
            if !result.converged {
                eprintln!(
                    "equilibrium search did not settle within {} sweeps",
                    cfg.solver.max_iters
                );
                return Ok(ExitCode::from(EXIT_NO_CONVERGENCE));
            }
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Train {
            config,
            arm,
            out_dir,
        } => {
            let mut cfg = config.load()?;
            cfg.arms = parse_arms(&[arm])?;
            cfg.validate()?;
            let dir = out_dir_or_default(out_dir);
            let bundle = run_scenario(&cfg, &dir)?;
            let slug = cfg.arms[0].slug();
            println!("{}", dir.join(format!("trace_{slug}.csv")).display());
            exit_for_bundle(&bundle)
        }

        Cmd::Scenario {
            config,
            arms,
            out_dir,
            print_config,
        } => {
            let mut cfg = config.load()?;
            if !arms.is_empty() {
                cfg.arms = parse_arms(&arms)?;
                cfg.validate()?;
            }
            if print_config {
                print!("{}", to_toml_string(&cfg)?);
                return Ok(ExitCode::SUCCESS);
            }
            let dir = out_dir_or_default(out_dir);
            let bundle = run_scenario(&cfg, &dir)?;
            println!("{}", dir.display());
            exit_for_bundle(&bundle)
        }

        Cmd::Compare { bundle, json } => {
            let bundle = load_bundle(&bundle)?;
            let cmp = compare_arms(&bundle);
            if json {
                let bytes = serde_json::to_vec_pretty(&cmp)
                    .map_err(|e| CliError::validation(e.to_string()))?;
                write_or_print(None, &bytes)?;
                println!();
            } else {
                print!("{}", render_comparison(&bundle, &cmp));
            }
            Ok(ExitCode::SUCCESS)
        }

        Cmd::DefaultConfig => {
            print!("{}", default_config_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Success unless an equilibrium search in the bundle failed to settle.
fn exit_for_bundle(bundle: &fedmarket_core::ScenarioBundle) -> Result<ExitCode, CliError> {
    let unsettled = bundle
        .summaries
        .iter()
        .any(|s| s.converged == Some(false));
    if unsettled {
        eprintln!("equilibrium search did not settle; artifacts were still written");
        Ok(ExitCode::from(EXIT_NO_CONVERGENCE))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}
