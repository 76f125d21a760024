use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ipbleadv::{cmd_report, cmd_run, cmd_sweep, format_table, CliError};

#[derive(Parser)]
#[command(name = "ipbleadv", version, about = "IPv6 over BLE advertising / connection simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write puts.csv, nodes.csv and summary.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario once per parameter value.
    Sweep {
        scenario: PathBuf,
        /// Parameter name, e.g. `adv.retransmissions` or `traffic.interval_us`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a comparison table for a run or sweep directory and write cdf.csv.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.cmd {
        Cmd::Run { scenario, seed, out } => cmd_run(&scenario, seed, &out).map(|s| {
            let pdr = s.pdr.map_or_else(|| "-".into(), |p| format!("{p:.4}"));
            println!("sent {} acked {} pdr {pdr}", s.sent, s.acked);
        }),
        Cmd::Sweep { scenario, param, values, seed, out } => {
            cmd_sweep(&scenario, &param, &values, seed, &out).map(|runs| {
                for (v, s) in runs {
                    let pdr = s.pdr.map_or_else(|| "-".into(), |p| format!("{p:.4}"));
                    println!("{param}={v}: sent {} pdr {pdr}", s.sent);
                }
            })
        }
        Cmd::Report { dir } => cmd_report(&dir).map(|runs| print!("{}", format_table(&runs))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
