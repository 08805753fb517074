use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use mpc_engine::{Party, Result};
use serde::{Deserialize, Serialize};

/// One JSON-lines metrics record: the cost of one program step in one
/// measured batch, as seen by one party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub party: usize,
    pub op: String,
    pub rounds: u64,
    pub bytes_sent: u64,
    pub wall_ms: f64,
    pub batch_size: usize,
}

/// Times program steps and keeps the records of measured batches.
pub struct Recorder {
    batch_size: usize,
    measuring: bool,
    records: Vec<Record>,
}

impl Recorder {
    pub fn new(batch_size: usize) -> Self {
        Recorder {
            batch_size,
            measuring: false,
            records: Vec::new(),
        }
    }

    /// Steps run while not measuring (the warm-up batch) leave no record.
    pub fn set_measuring(&mut self, on: bool) {
        self.measuring = on;
    }

    pub fn step<T>(&mut self, p: &mut Party, op: &str, f: impl FnOnce(&mut Party) -> Result<T>) -> Result<T> {
        let before = p.metrics().clone();
        let start = Instant::now();
        let out = f(p)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        if self.measuring {
            let d = p.metrics().since(&before);
            self.records.push(Record {
                party: p.rank(),
                op: op.to_string(),
                rounds: d.rounds,
                bytes_sent: d.bytes_sent,
                wall_ms,
                batch_size: self.batch_size,
            });
        }
        Ok(out)
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }
}

pub fn write_records(path: &Path, records: &[Record]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Per-op means over the measured batches, in first-seen order.
pub fn summary(records: &[Record]) -> Vec<String> {
    let mut order = Vec::new();
    let mut totals: BTreeMap<&str, (u64, u64, f64, u64)> = BTreeMap::new();
    for r in records {
        let t = totals.entry(&r.op).or_insert_with(|| {
            order.push(r.op.as_str());
            (0, 0, 0.0, 0)
        });
        t.0 += r.rounds;
        t.1 += r.bytes_sent;
        t.2 += r.wall_ms;
        t.3 += 1;
    }
    let batch = records.first().map_or(1, |r| r.batch_size.max(1));
    let mut lines = vec![format!(
        "{:<16} {:>8} {:>14} {:>16} {:>10}",
        "op", "rounds", "bytes", "bytes/sample", "wall_ms"
    )];
    for op in order {
        let (rounds, bytes, ms, n) = totals[op];
        let n_f = n as f64;
        lines.push(format!(
            "{:<16} {:>8.1} {:>14.0} {:>16.1} {:>10.3}",
            op,
            rounds as f64 / n_f,
            bytes as f64 / n_f,
            bytes as f64 / n_f / batch as f64,
            ms / n_f
        ));
    }
    lines
}
