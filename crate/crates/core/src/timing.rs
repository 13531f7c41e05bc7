//! Cycle accounting under the (PreFetch, WaitState) flash configurations of
//! the STM32F0xx.
//!
//! Base costs follow the Cortex-M0 instruction timing table with the
//! single-cycle multiplier. Flash waitstates are added on top:
//!
//! * every flash instruction fetch (one per halfword) that the prefetch
//!   buffer does not satisfy costs `waitstates` cycles;
//! * every flash data read costs `waitstates` cycles.
//!
//! RAM is zero-waitstate for both fetches and data. The prefetch buffer holds
//! one 32-bit flash word. While execution is sequential it refills with the
//! following word as soon as the core moves onto the upper halfword of the
//! current one; a taken branch invalidates it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{InstrKind, Instruction, Op, StepEvents};
use crate::memory::{Direction, MemoryLayout, Region};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unsupported frequency {0} MHz (expected 20, 24 or 48)")]
    Frequency(u32),
    #[error("unsupported waitstate count {0} (expected 0 or 1)")]
    WaitStates(u8),
    #[error("48 MHz requires one flash waitstate")]
    TooFastForZeroWaitStates,
    #[error("cannot parse hardware configuration {0:?}; expected e.g. 24,ON,1")]
    Syntax(String),
}

/// Clock frequency, prefetch buffer state and flash waitstates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct HardwareConfig {
    freq_mhz: u32,
    prefetch: bool,
    waitstates: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    freq_mhz: u32,
    prefetch: bool,
    waitstates: u8,
}

impl TryFrom<RawConfig> for HardwareConfig {
    type Error = ConfigError;
    fn try_from(raw: RawConfig) -> Result<Self, Self::Error> {
        HardwareConfig::new(raw.freq_mhz, raw.prefetch, raw.waitstates)
    }
}

impl From<HardwareConfig> for RawConfig {
    fn from(c: HardwareConfig) -> Self {
        RawConfig { freq_mhz: c.freq_mhz, prefetch: c.prefetch, waitstates: c.waitstates }
    }
}

impl HardwareConfig {
    pub fn new(freq_mhz: u32, prefetch: bool, waitstates: u8) -> Result<Self, ConfigError> {
        if !matches!(freq_mhz, 20 | 24 | 48) {
            return Err(ConfigError::Frequency(freq_mhz));
        }
        if waitstates > 1 {
            return Err(ConfigError::WaitStates(waitstates));
        }
        if freq_mhz == 48 && waitstates == 0 {
            return Err(ConfigError::TooFastForZeroWaitStates);
        }
        Ok(HardwareConfig { freq_mhz, prefetch, waitstates })
    }

    pub fn freq_mhz(&self) -> u32 {
        self.freq_mhz
    }

    pub fn prefetch(&self) -> bool {
        self.prefetch
    }

    pub fn waitstates(&self) -> u8 {
        self.waitstates
    }

    /// All ten valid configurations, in the order 20, 24, 48 MHz;
    /// prefetch OFF before ON; waitstates 0 before 1.
    pub fn all() -> Vec<HardwareConfig> {
        let mut out = Vec::new();
        for freq in [20, 24] {
            for prefetch in [false, true] {
                for ws in [0, 1] {
                    out.push(HardwareConfig { freq_mhz: freq, prefetch, waitstates: ws });
                }
            }
        }
        for prefetch in [false, true] {
            out.push(HardwareConfig { freq_mhz: 48, prefetch, waitstates: 1 });
        }
        out
    }
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig { freq_mhz: 20, prefetch: false, waitstates: 0 }
    }
}

/// `24,ON,1` style, the same form accepted by [`FromStr`].
impl fmt::Display for HardwareConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pf = if self.prefetch { "ON" } else { "OFF" };
        write!(f, "{},{},{}", self.freq_mhz, pf, self.waitstates)
    }
}

impl FromStr for HardwareConfig {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || ConfigError::Syntax(s.to_string());
        let trimmed = s.trim().trim_start_matches('[').trim_end_matches(']');
        let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let [freq, pf, ws] = parts.as_slice() else {
            return Err(syntax());
        };
        let freq: u32 = freq.parse().map_err(|_| syntax())?;
        let prefetch = match pf.to_ascii_uppercase().as_str() {
            "ON" => true,
            "OFF" => false,
            _ => return Err(syntax()),
        };
        let ws: u8 = ws.parse().map_err(|_| syntax())?;
        HardwareConfig::new(freq, prefetch, ws)
    }
}

/// One-word flash prefetch buffer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FetchUnitState {
    pub buffer_valid: bool,
    /// Word-aligned canonical flash address of the buffered word.
    pub buffer_tag: u32,
}

/// Base cycle cost from the Cortex-M0 timing table, before waitstates.
pub fn base_cycles(instr: &Instruction, branch_taken: bool) -> u64 {
    match instr.op {
        Op::Push { regs } | Op::Pop { regs } => {
            let n = u64::from(regs.count_ones());
            if branch_taken {
                3 + n
            } else {
                1 + n
            }
        }
        Op::Ldm { regs, .. } | Op::Stm { regs, .. } => 1 + u64::from(regs.count_ones()),
        Op::Bl { .. } => 4,
        _ => match instr.kind() {
            InstrKind::Load | InstrKind::Store => 2,
            InstrKind::BranchExchange | InstrKind::BranchUnconditional => 3,
            _ if branch_taken => 3,
            _ => 1,
        },
    }
}

/// Cycles for one executed instruction, and the prefetch state after it.
pub fn cycles_for(
    events: &StepEvents,
    cfg: &HardwareConfig,
    fetch: FetchUnitState,
    layout: &MemoryLayout,
) -> (u64, FetchUnitState) {
    let ws = u64::from(cfg.waitstates);
    let mut cycles = base_cycles(&events.instruction, events.branch_taken);
    let mut unit = fetch;

    for access in &events.fetch_accesses {
        if access.region != Region::Flash {
            continue;
        }
        let Some(addr) = layout.canonical_flash(access.address) else {
            continue;
        };
        let word = addr & !3;
        if cfg.prefetch {
            let hit = unit.buffer_valid && unit.buffer_tag == word;
            if !hit {
                cycles += ws;
                unit = FetchUnitState { buffer_valid: true, buffer_tag: word };
            }
            if addr & 2 != 0 {
                let next = word.wrapping_add(4);
                unit = if layout.canonical_flash(next) == Some(next) {
                    FetchUnitState { buffer_valid: true, buffer_tag: next }
                } else {
                    FetchUnitState::default()
                };
            }
        } else {
            cycles += ws;
        }
    }

    let flash_data_reads = events
        .data_accesses
        .iter()
        .filter(|a| a.region == Region::Flash && a.direction == Direction::Read)
        .count() as u64;
    cycles += ws * flash_data_reads;

    if events.branch_taken {
        unit = FetchUnitState::default();
    }
    (cycles, unit)
}

/// Wall-clock seconds for `cycles` at the configured frequency.
pub fn wall_time_seconds(cycles: u64, cfg: &HardwareConfig) -> f64 {
    cycles as f64 / (f64::from(cfg.freq_mhz) * 1e6)
}
