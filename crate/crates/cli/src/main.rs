mod config;
mod launch;
mod metrics;
mod programs;

use std::net::TcpListener;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use mpc_engine::dealer::serve_dealer;
use mpc_engine::Error;

use config::{Cli, Command, Settings};
use metrics::{summary, write_records, Record};

/// Why a run stopped, with its exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Engine(Error),
    Check,
    Output(std::io::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Engine(e) => match e {
                Error::Config(_) | Error::InvalidRank { .. } | Error::InvalidSrc { .. } => 2,
                Error::PeerDisconnected(_)
                | Error::Timeout(_)
                | Error::DealerUnavailable(_)
                | Error::Frame(_)
                | Error::Io(_) => 3,
                Error::Desync(_) | Error::ShapeMismatch(_) => 4,
                _ => 1,
            },
            Failure::Check | Failure::Output(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Engine(e)
    }
}

fn metrics_path(template: &Path, rank: usize) -> std::path::PathBuf {
    template.to_string_lossy().replace("{party}", &rank.to_string()).into()
}

fn write_metrics(s: &Settings, per_party: &[(usize, Vec<Record>)]) -> Result<(), Failure> {
    let Some(template) = &s.metrics_out else {
        return Ok(());
    };
    if template.to_string_lossy().contains("{party}") {
        for (rank, records) in per_party {
            write_records(&metrics_path(template, *rank), records).map_err(Failure::Output)?;
        }
    } else {
        let all: Vec<Record> = per_party.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
        write_records(template, &all).map_err(Failure::Output)?;
    }
    Ok(())
}

fn run(s: Settings) -> Result<(), Failure> {
    let outcomes = launch::run_parties(&s, |p| programs::run(p, &s))?;
    let first_rank = s.rank.unwrap_or(0);
    let per_party: Vec<(usize, Vec<Record>)> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| (first_rank + i, o.records.clone()))
        .collect();
    write_metrics(&s, &per_party)?;
    if first_rank == 0 {
        let lead = &outcomes[0];
        println!(
            "{} with {} parties, batch size {}, {} measured batches (party 0)",
            s.program.name(),
            s.parties,
            s.batch_size,
            s.batches
        );
        for line in summary(&lead.records).iter().chain(&lead.report) {
            println!("{line}");
        }
    }
    if outcomes.iter().all(|o| o.ok) {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => args.resolve().and_then(run),
        Command::Dealer(d) => TcpListener::bind(d.listen)
            .map_err(|e| Failure::Engine(Error::Io(e)))
            .and_then(|l| serve_dealer(l, d.parties, d.seed).map_err(Failure::from)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("mpc-run: configuration error: {msg}"),
                Failure::Engine(e) => eprintln!("mpc-run: {e}"),
                Failure::Check => eprintln!("mpc-run: result check failed"),
                Failure::Output(e) => eprintln!("mpc-run: cannot write metrics: {e}"),
            }
            ExitCode::from(f.code())
        }
    }
}
