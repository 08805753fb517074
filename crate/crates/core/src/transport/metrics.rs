use std::collections::BTreeMap;

/// Communication cost attributed to one named operation. Nested operations
/// are inclusive: a round inside `relu` also counts toward `relu`'s caller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpStats {
    pub calls: u64,
    pub rounds: u64,
    pub bytes_sent: u64,
}

/// Per-party communication counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metrics {
    pub rounds: u64,
    pub bytes_sent: u64,
    pub per_op: BTreeMap<String, OpStats>,
}

impl Metrics {
    pub fn op(&self, name: &str) -> OpStats {
        self.per_op.get(name).copied().unwrap_or_default()
    }

    /// Counters accumulated since `earlier` was captured.
    pub fn since(&self, earlier: &Metrics) -> Metrics {
        let per_op = self
            .per_op
            .iter()
            .filter_map(|(name, now)| {
                let then = earlier.op(name);
                let d = OpStats {
                    calls: now.calls - then.calls,
                    rounds: now.rounds - then.rounds,
                    bytes_sent: now.bytes_sent - then.bytes_sent,
                };
                (d != OpStats::default()).then(|| (name.clone(), d))
            })
            .collect();
        Metrics {
            rounds: self.rounds - earlier.rounds,
            bytes_sent: self.bytes_sent - earlier.bytes_sent,
            per_op,
        }
    }
}
