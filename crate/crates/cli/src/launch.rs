use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use mpc_engine::dealer::{CorrelationSource, DealerCore, InProcessDealer, RemoteDealer};
use mpc_engine::transport::{InProcessTransport, Session, TcpTransport, Transport};
use mpc_engine::{collect_results, Error, Party, PartyConfig, Result};

use crate::config::{DealerSpec, Settings, TransportKind};

/// Private seed of every party; each party draws from its own stream.
fn local_seed(seed: u64) -> u64 {
    seed ^ 0x5eed_0f_5eed_0f
}

fn party_config(s: &Settings) -> PartyConfig {
    PartyConfig {
        precision_bits: s.precision_bits,
        argmax: s.method.into(),
        ..PartyConfig::default()
    }
}

enum Link {
    InProcess(InProcessTransport),
    Tcp(TcpListener, Vec<SocketAddr>),
}

fn build_party(s: &Settings, rank: usize, link: Link, core: Option<Arc<DealerCore>>) -> Result<Party> {
    let timeout = Duration::from_millis(s.timeout_ms);
    let dealer: Box<dyn CorrelationSource> = match (&s.dealer, core) {
        (DealerSpec::Remote(addr), _) => Box::new(RemoteDealer::connect(*addr, rank, s.parties, timeout)?),
        (DealerSpec::InProcess, Some(core)) => Box::new(InProcessDealer::new(core, rank)),
        (DealerSpec::InProcess, None) => {
            return Err(Error::Config("an in-process dealer needs every party in this process".into()))
        }
    };
    let transport: Box<dyn Transport> = match link {
        Link::InProcess(t) => Box::new(t),
        Link::Tcp(listener, addrs) => Box::new(TcpTransport::with_listener(rank, listener, &addrs, timeout)?),
    };
    let mut session = Session::from_boxed(transport);
    session.set_recv_timeout(timeout);
    Party::new(session, dealer, local_seed(s.seed), party_config(s))
}

/// Runs `f` as the configured party, or as every party on its own thread.
/// Results come back in rank order.
pub fn run_parties<T, F>(s: &Settings, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    if let Some(rank) = s.rank {
        let addrs = s.peers.clone().expect("checked at resolve");
        let listener = TcpListener::bind(addrs[rank])?;
        let mut party = build_party(s, rank, Link::Tcp(listener, addrs), None)?;
        return Ok(vec![f(&mut party)?]);
    }
    let links: Vec<Link> = match s.transport {
        TransportKind::Inproc => InProcessTransport::mesh(s.parties)
            .into_iter()
            .map(Link::InProcess)
            .collect(),
        TransportKind::Tcp => {
            let listeners: Vec<TcpListener> = match &s.peers {
                Some(addrs) => addrs.iter().map(TcpListener::bind).collect::<std::io::Result<_>>()?,
                None => (0..s.parties)
                    .map(|_| TcpListener::bind("127.0.0.1:0"))
                    .collect::<std::io::Result<_>>()?,
            };
            let addrs: Vec<SocketAddr> = listeners
                .iter()
                .map(|l| l.local_addr())
                .collect::<std::io::Result<_>>()?;
            listeners
                .into_iter()
                .map(|l| Link::Tcp(l, addrs.clone()))
                .collect()
        }
    };
    let core = Arc::new(DealerCore::new(s.parties, s.seed));
    let results: Vec<Result<T>> = thread::scope(|scope| {
        let handles: Vec<_> = links
            .into_iter()
            .enumerate()
            .map(|(rank, link)| {
                let core = core.clone();
                let f = &f;
                thread::Builder::new()
                    .stack_size(16 << 20)
                    .spawn_scoped(scope, move || {
                        let mut party = build_party(s, rank, link, Some(core))?;
                        f(&mut party)
                    })
                    .expect("spawn party thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)))
            .collect()
    });
    collect_results(results)
}
