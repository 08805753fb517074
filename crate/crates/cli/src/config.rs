use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpc_engine::ArgmaxMethod;

use crate::Failure;

#[derive(Parser, Debug)]
#[command(name = "mpc-run", version, about = "Runs multi-party programs and reports communication metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Runs a program as one party (`--rank`) or as every party in-process.
    Run(RunArgs),
    /// Serves correlated randomness to the parties of a TCP run.
    Dealer(DealerArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Inproc,
    Tcp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Program {
    Roundtrip,
    MlpInfer,
    LogregTrain,
    ArgmaxBench,
    ApproxSweep,
    SamplerStats,
}

impl Program {
    pub fn name(self) -> &'static str {
        match self {
            Program::Roundtrip => "roundtrip",
            Program::MlpInfer => "mlp_infer",
            Program::LogregTrain => "logreg_train",
            Program::ArgmaxBench => "argmax_bench",
            Program::ApproxSweep => "approx_sweep",
            Program::SamplerStats => "sampler_stats",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Pairwise,
    Tree,
}

impl From<Method> for ArgmaxMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Pairwise => ArgmaxMethod::Pairwise,
            Method::Tree => ArgmaxMethod::Tree,
        }
    }
}

/// Every flag is optional here so that a config file can fill the gaps.
#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// key=value file mirroring these flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of parties.
    #[arg(long)]
    pub parties: Option<usize>,
    /// Run only this party; absent runs every party in this process.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, value_enum)]
    pub transport: Option<TransportKind>,
    /// File with one host:port per line, in rank order.
    #[arg(long)]
    pub peers: Option<PathBuf>,
    /// Dealer address, or `inproc`.
    #[arg(long)]
    pub dealer: Option<String>,
    #[arg(long)]
    pub precision_bits: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub program: Option<Program>,
    /// JSON-lines metrics file; `{party}` is replaced by the rank.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// Measured batches, after one unmeasured warm-up batch.
    #[arg(long)]
    pub batches: Option<usize>,
    /// Argmax method for argmax_bench.
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Vector length for argmax_bench.
    #[arg(long)]
    pub vector_len: Option<usize>,
    /// Weight file for mlp_infer (784 -> 128 -> 10); random weights otherwise.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Connect and receive timeout in milliseconds.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

#[derive(Args, Clone, Debug)]
pub struct DealerArgs {
    /// Address to listen on.
    #[arg(long)]
    pub listen: SocketAddr,
    #[arg(long)]
    pub parties: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DealerSpec {
    InProcess,
    Remote(SocketAddr),
}

/// Fully resolved run settings.
#[derive(Clone, Debug)]
pub struct Settings {
    pub parties: usize,
    pub rank: Option<usize>,
    pub transport: TransportKind,
    pub peers: Option<Vec<SocketAddr>>,
    pub dealer: DealerSpec,
    pub precision_bits: u32,
    pub seed: u64,
    pub batch_size: usize,
    pub program: Program,
    pub metrics_out: Option<PathBuf>,
    pub batches: usize,
    pub method: Method,
    pub vector_len: usize,
    pub weights: Option<PathBuf>,
    pub timeout_ms: u64,
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

/// Parses a key=value file into the same flags the command line accepts.
fn read_config_file(path: &PathBuf) -> Result<RunArgs, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    let mut argv = vec!["run".to_string()];
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_error(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(config_error("config files cannot include other config files"));
        }
        if !seen.insert(key.clone()) {
            return Err(config_error(format!("{}: duplicate key {key}", path.display())));
        }
        argv.push(format!("--{key}"));
        argv.push(value.trim().to_string());
    }
    #[derive(Parser)]
    #[command(no_binary_name = true)]
    struct FileArgs {
        #[command(subcommand)]
        command: FileCommand,
    }
    #[derive(Subcommand)]
    enum FileCommand {
        Run(RunArgs),
    }
    let parsed = FileArgs::try_parse_from(argv)
        .map_err(|e| config_error(format!("{}: {}", path.display(), e.render().to_string().trim())))?;
    let FileCommand::Run(args) = parsed.command;
    Ok(args)
}

fn parse_peers(path: &PathBuf) -> Result<Vec<SocketAddr>, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse()
                .map_err(|_| config_error(format!("{}: bad address {l:?}", path.display())))
        })
        .collect()
}

impl RunArgs {
    fn or(self, file: RunArgs) -> RunArgs {
        RunArgs {
            config: self.config,
            parties: self.parties.or(file.parties),
            rank: self.rank.or(file.rank),
            transport: self.transport.or(file.transport),
            peers: self.peers.or(file.peers),
            dealer: self.dealer.or(file.dealer),
            precision_bits: self.precision_bits.or(file.precision_bits),
            seed: self.seed.or(file.seed),
            batch_size: self.batch_size.or(file.batch_size),
            program: self.program.or(file.program),
            metrics_out: self.metrics_out.or(file.metrics_out),
            batches: self.batches.or(file.batches),
            method: self.method.or(file.method),
            vector_len: self.vector_len.or(file.vector_len),
            weights: self.weights.or(file.weights),
            timeout_ms: self.timeout_ms.or(file.timeout_ms),
        }
    }

    /// Merges the config file under the flags, applies defaults and checks
    /// consistency.
    pub fn resolve(self) -> Result<Settings, Failure> {
        let args = match &self.config {
            Some(path) => {
                let file = read_config_file(path)?;
                self.or(file)
            }
            None => self,
        };
        let parties = args.parties.unwrap_or(2);
        if !(1..=64).contains(&parties) {
            return Err(config_error(format!("--parties must be in 1..=64, got {parties}")));
        }
        let transport = args.transport.unwrap_or(TransportKind::Inproc);
        let program = args
            .program
            .ok_or_else(|| config_error("--program is required"))?;
        let precision_bits = args.precision_bits.unwrap_or(16);
        if !(4..=30).contains(&precision_bits) {
            return Err(config_error(format!("--precision-bits must be in 4..=30, got {precision_bits}")));
        }
        let batch_size = args.batch_size.unwrap_or(8);
        let batches = args.batches.unwrap_or(5);
        let vector_len = args.vector_len.unwrap_or(64);
        if batch_size == 0 || batches == 0 || vector_len == 0 {
            return Err(config_error("--batch-size, --batches and --vector-len must be positive"));
        }
        let dealer = match args.dealer.as_deref() {
            None | Some("inproc") => DealerSpec::InProcess,
            Some(addr) => DealerSpec::Remote(
                addr.parse()
                    .map_err(|_| config_error(format!("--dealer: bad address {addr:?}")))?,
            ),
        };
        let peers = args.peers.as_ref().map(parse_peers).transpose()?;
        if let Some(p) = &peers {
            if p.len() != parties {
                return Err(config_error(format!("{} peers listed for {parties} parties", p.len())));
            }
        }
        if let Some(rank) = args.rank {
            if rank >= parties {
                return Err(config_error(format!("--rank {rank} with {parties} parties")));
            }
            if transport != TransportKind::Tcp {
                return Err(config_error("--rank requires --transport tcp"));
            }
            if peers.is_none() {
                return Err(config_error("--rank requires --peers"));
            }
            if dealer == DealerSpec::InProcess {
                return Err(config_error("--rank requires a dealer address"));
            }
        } else if transport == TransportKind::Inproc && peers.is_some() {
            return Err(config_error("--peers requires --transport tcp"));
        }
        Ok(Settings {
            parties,
            rank: args.rank,
            transport,
            peers,
            dealer,
            precision_bits,
            seed: args.seed.unwrap_or(0),
            batch_size,
            program,
            metrics_out: args.metrics_out,
            batches,
            method: args.method.unwrap_or(Method::Pairwise),
            vector_len,
            weights: args.weights,
            timeout_ms: args.timeout_ms.unwrap_or(30_000),
        })
    }
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_override_the_config_file() {
        let f = file("parties = 4\nprogram=roundtrip\n# comment\nbatch_size=3\n");
        let args = RunArgs {
            config: Some(f.path().to_path_buf()),
            parties: Some(3),
            ..RunArgs::default()
        };
        let s = args.resolve().unwrap();
        assert_eq!(s.parties, 3);
        assert_eq!(s.batch_size, 3);
        assert_eq!(s.program, Program::Roundtrip);
    }

    #[test]
    fn inconsistent_settings_are_config_errors() {
        let base = RunArgs {
            program: Some(Program::Roundtrip),
            ..RunArgs::default()
        };
        let bad = [
            RunArgs { parties: Some(0), ..base.clone() },
            RunArgs { rank: Some(0), ..base.clone() },
            RunArgs { dealer: Some("nowhere".into()), ..base.clone() },
            RunArgs { program: None, ..base.clone() },
            RunArgs { precision_bits: Some(40), ..base.clone() },
        ];
        for args in bad {
            assert!(matches!(args.resolve(), Err(Failure::Config(_))));
        }
        let f = file("parties=2\nparties=3\n");
        let dup = RunArgs { config: Some(f.path().to_path_buf()), ..base.clone() };
        assert!(matches!(dup.resolve(), Err(Failure::Config(_))));
        let f = file("colour=blue\n");
        let unknown = RunArgs { config: Some(f.path().to_path_buf()), ..base };
        assert!(matches!(unknown.resolve(), Err(Failure::Config(_))));
    }
}
