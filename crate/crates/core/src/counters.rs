//! The six energy-model event counters.
//!
//! | counter | event                                   |
//! |---------|-----------------------------------------|
//! | `c1`    | executed instructions, excluding MULS   |
//! | `c2`    | MULS instructions                       |
//! | `c3`    | taken branches                          |
//! | `c4`    | RAM data reads                          |
//! | `c5`    | RAM writes                              |
//! | `c6`    | flash data reads (alias included)       |
//!
//! Multi-register transfers count one event per register. Instruction
//! fetches never contribute to `c4`..`c6`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Index, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{InstrKind, Mnemonic, StepEvents};
use crate::memory::{Direction, Region};

/// Names of the six model counters, in order.
pub const COUNTER_NAMES: [&str; 6] = ["c1", "c2", "c3", "c4", "c5", "c6"];

/// The six model counters as a plain vector: a per-step delta, a static
/// block prediction, or a regression row.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CounterVector {
    pub c1: u64,
    pub c2: u64,
    pub c3: u64,
    pub c4: u64,
    pub c5: u64,
    pub c6: u64,
}

impl CounterVector {
    pub const ZERO: CounterVector = CounterVector { c1: 0, c2: 0, c3: 0, c4: 0, c5: 0, c6: 0 };

    pub fn from_array(a: [u64; 6]) -> Self {
        CounterVector { c1: a[0], c2: a[1], c3: a[2], c4: a[3], c5: a[4], c6: a[5] }
    }

    pub fn to_array(self) -> [u64; 6] {
        [self.c1, self.c2, self.c3, self.c4, self.c5, self.c6]
    }

    /// Executed instructions, `c1 + c2`.
    pub fn instructions(&self) -> u64 {
        self.c1 + self.c2
    }
}

impl Index<usize> for CounterVector {
    type Output = u64;
    fn index(&self, i: usize) -> &u64 {
        match i {
            0 => &self.c1,
            1 => &self.c2,
            2 => &self.c3,
            3 => &self.c4,
            4 => &self.c5,
            5 => &self.c6,
            _ => panic!("counter index {i} out of range"),
        }
    }
}

impl Add for CounterVector {
    type Output = CounterVector;
    fn add(self, o: CounterVector) -> CounterVector {
        CounterVector {
            c1: self.c1 + o.c1,
            c2: self.c2 + o.c2,
            c3: self.c3 + o.c3,
            c4: self.c4 + o.c4,
            c5: self.c5 + o.c5,
            c6: self.c6 + o.c6,
        }
    }
}

impl AddAssign for CounterVector {
    fn add_assign(&mut self, o: CounterVector) {
        *self = *self + o;
    }
}

impl Mul<u64> for CounterVector {
    type Output = CounterVector;
    fn mul(self, k: u64) -> CounterVector {
        CounterVector::from_array(self.to_array().map(|v| v * k))
    }
}

/// Counter increments for one executed instruction.
pub type CounterDelta = CounterVector;

/// Classifies one executed instruction.
pub fn classify(events: &StepEvents) -> CounterDelta {
    let mut d = CounterDelta::ZERO;
    if events.instruction.kind() == InstrKind::Muls {
        d.c2 = 1;
    } else {
        d.c1 = 1;
    }
    if events.branch_taken {
        d.c3 = 1;
    }
    for a in &events.data_accesses {
        match (a.region, a.direction) {
            (Region::Ram, Direction::Read) => d.c4 += 1,
            (Region::Ram, Direction::Write) => d.c5 += 1,
            (Region::Flash, Direction::Read) => d.c6 += 1,
            (Region::Flash, Direction::Write) => {}
        }
    }
    d
}

/// Accumulated counters of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    #[serde(flatten)]
    pub model: CounterVector,
    pub cycles: u64,
    pub opcode_histogram: BTreeMap<Mnemonic, u64>,
}

impl EventCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, events: &StepEvents, delta: CounterDelta, cycles: u64) {
        self.model += delta;
        self.cycles += cycles;
        *self.opcode_histogram.entry(events.instruction.mnemonic()).or_insert(0) += 1;
    }

    pub fn histogram_total(&self) -> u64 {
        self.opcode_histogram.values().sum()
    }

    /// Fieldwise sum.
    pub fn merge(&self, other: &EventCounters) -> EventCounters {
        let mut opcode_histogram = self.opcode_histogram.clone();
        for (k, v) in &other.opcode_histogram {
            *opcode_histogram.entry(*k).or_insert(0) += v;
        }
        EventCounters {
            model: self.model + other.model,
            cycles: self.cycles + other.cycles,
            opcode_histogram,
        }
    }
}

/// One row of the counters CSV: `name,c1,c2,c3,c4,c5,c6,cycles`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterRow {
    pub name: String,
    pub c1: u64,
    pub c2: u64,
    pub c3: u64,
    pub c4: u64,
    pub c5: u64,
    pub c6: u64,
    #[serde(default)]
    pub cycles: Option<u64>,
}

impl CounterRow {
    pub fn new(name: impl Into<String>, counters: &EventCounters) -> Self {
        let m = counters.model;
        CounterRow {
            name: name.into(),
            c1: m.c1,
            c2: m.c2,
            c3: m.c3,
            c4: m.c4,
            c5: m.c5,
            c6: m.c6,
            cycles: Some(counters.cycles),
        }
    }

    pub fn vector(&self) -> CounterVector {
        CounterVector::from_array([self.c1, self.c2, self.c3, self.c4, self.c5, self.c6])
    }
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
}

pub fn write_counter_rows<W: Write>(out: W, rows: &[CounterRow]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads counter rows. `name` and `cycles` columns are optional; `c1`..`c6`
/// are required.
pub fn read_counter_rows<R: Read>(input: R) -> Result<Vec<CounterRow>, CsvError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers()?.clone();
    for name in COUNTER_NAMES {
        if !headers.iter().any(|h| h == name) {
            return Err(CsvError::MissingColumn(name));
        }
    }
    let has_name = headers.iter().any(|h| h == "name");
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        #[derive(Deserialize)]
        struct Partial {
            name: Option<String>,
            c1: u64,
            c2: u64,
            c3: u64,
            c4: u64,
            c5: u64,
            c6: u64,
            cycles: Option<u64>,
        }
        let p: Partial = rec.deserialize(Some(&headers))?;
        rows.push(CounterRow {
            name: if has_name { p.name.unwrap_or_default() } else { format!("row{}", i + 1) },
            c1: p.c1,
            c2: p.c2,
            c3: p.c3,
            c4: p.c4,
            c5: p.c5,
            c6: p.c6,
            cycles: p.cycles,
        });
    }
    Ok(rows)
}
