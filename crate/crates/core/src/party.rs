use std::sync::Arc;
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::approx::ApproxConfig;
use crate::binary::SumMode;
use crate::compare::ArgmaxMethod;
use crate::dealer::{CorrelationSource, DealerCore, InProcessDealer, Przs, Request};
use crate::error::{Error, Result};
use crate::ring::{FixedPointEncoder, RingTensor, DEFAULT_PRECISION_BITS};
use crate::transport::{InProcessTransport, Metrics, ReduceMode, Session};

/// Settings every party must agree on.
#[derive(Clone, Debug, PartialEq)]
pub struct PartyConfig {
    pub precision_bits: u32,
    pub approx: ApproxConfig,
    pub sum_mode: SumMode,
    pub argmax: ArgmaxMethod,
    pub reduce_mode: ReduceMode,
    /// Reveal intermediate values at domain-sensitive points and fail with
    /// [`Error::DomainViolation`] instead of silently producing garbage.
    /// Leaks data; for debugging only.
    pub debug_domain: bool,
}

impl Default for PartyConfig {
    fn default() -> Self {
        PartyConfig {
            precision_bits: DEFAULT_PRECISION_BITS,
            approx: ApproxConfig::default(),
            sum_mode: SumMode::Tree,
            argmax: ArgmaxMethod::Pairwise,
            reduce_mode: ReduceMode::Flat,
            debug_domain: false,
        }
    }
}

/// One participant of the computation: its session, its dealer connection,
/// its zero-sharing generator and private randomness.
///
/// All protocol operations are methods on `Party`. Collective operations
/// must be invoked in the same order, with the same shapes, by every party.
pub struct Party {
    session: Session,
    dealer: Box<dyn CorrelationSource>,
    dealer_step: u64,
    przs: Przs,
    rng: ChaCha20Rng,
    config: PartyConfig,
}

impl Party {
    /// Sets up zero-sharing seeds with the dealer. `local_seed` drives the
    /// party's private randomness (used by the samplers).
    pub fn new(
        mut session: Session,
        mut dealer: Box<dyn CorrelationSource>,
        local_seed: u64,
        config: PartyConfig,
    ) -> Result<Self> {
        config.approx.validate()?;
        session.set_reduce_mode(config.reduce_mode);
        let seeds = dealer.fetch(0, &Request::PrzsSeeds)?;
        let przs = Przs::from_words(&seeds[0])?;
        let mut rng = ChaCha20Rng::seed_from_u64(local_seed);
        rng.set_stream(session.rank() as u64);
        Ok(Party {
            session,
            dealer,
            dealer_step: 0,
            przs,
            rng,
            config,
        })
    }

    pub fn rank(&self) -> usize {
        self.session.rank()
    }

    pub fn world_size(&self) -> usize {
        self.session.world_size()
    }

    pub fn metrics(&self) -> &Metrics {
        self.session.metrics()
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn session_mut(&mut self) -> &mut Session {
        &mut self.session
    }

    pub fn config(&self) -> &PartyConfig {
        &self.config
    }

    /// Changing settings is itself a collective decision: every party must
    /// make the same change at the same point of the program.
    pub fn config_mut(&mut self) -> &mut PartyConfig {
        &mut self.config
    }

    pub fn encoder(&self) -> FixedPointEncoder {
        FixedPointEncoder::new(self.config.precision_bits)
    }

    /// Runs `f` inside a named metrics scope.
    pub fn op<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        self.session.enter_op(name);
        let out = f(self);
        self.session.exit_op();
        out
    }

    pub(crate) fn fetch(&mut self, request: Request) -> Result<Vec<RingTensor>> {
        self.dealer_step += 1;
        self.dealer.fetch(self.dealer_step, &request)
    }

    pub(crate) fn przs(&mut self) -> &mut Przs {
        &mut self.przs
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }
}

/// Runs `f` as every party of an in-process computation, one thread per
/// party, with an in-process dealer seeded by `seed`. Returns each party's
/// result in rank order, or the first root-cause error.
pub fn simulate<T, F>(world_size: usize, seed: u64, config: &PartyConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    let seeds: Vec<u64> = (0..world_size)
        .map(|_| seed ^ 0x5eed_0f_5eed_0f_u64)
        .collect();
    simulate_with_seeds(seed, &seeds, config, f)
}

/// Like [`simulate`] with an explicit private seed per party.
pub fn simulate_with_seeds<T, F>(
    dealer_seed: u64,
    party_seeds: &[u64],
    config: &PartyConfig,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut Party) -> Result<T> + Sync,
{
    let world_size = party_seeds.len();
    if world_size == 0 {
        return Err(Error::Config("world size must be at least 1".into()));
    }
    let core = Arc::new(DealerCore::new(world_size, dealer_seed));
    let results: Vec<Result<T>> = thread::scope(|s| {
        let handles: Vec<_> = InProcessTransport::mesh(world_size)
            .into_iter()
            .zip(party_seeds)
            .map(|(transport, &seed)| {
                let core = core.clone();
                let f = &f;
                thread::Builder::new()
                    .stack_size(16 << 20)
                    .spawn_scoped(s, move || {
                        let rank = transport_rank(&transport);
                        let dealer = Box::new(InProcessDealer::new(core, rank));
                        let mut party =
                            Party::new(Session::new(transport), dealer, seed, config.clone())?;
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

fn transport_rank(t: &InProcessTransport) -> usize {
    use crate::transport::Transport;
    t.rank()
}

/// Collects per-party results, preferring an error that is not a
/// consequence of another party failing.
pub fn collect_results<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    if results.iter().all(|r| r.is_ok()) {
        return Ok(results.into_iter().map(|r| r.ok().expect("checked")).collect());
    }
    let mut errors: Vec<Error> = results.into_iter().filter_map(|r| r.err()).collect();
    let root = errors
        .iter()
        .position(|e| !matches!(e, Error::PeerDisconnected(_)))
        .unwrap_or(0);
    Err(errors.swap_remove(root))
}
