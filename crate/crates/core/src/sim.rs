//! The simulator: fetch, decode, execute, then charge cycles and counters.

use serde::Serialize;
use thiserror::Error;

use crate::counters::{classify, CounterDelta, EventCounters};
use crate::isa::{decode_halfwords, execute, is_wide_prefix, ExecError, FetchAccess, MachineState};
use crate::isa::{DecodeError, StepEvents, PC, SP};
use crate::loader::{load_image, Image, LoadError, LoadReport};
use crate::memory::{Bus, LayoutError, MemoryError, MemoryLayout, MemoryMap, Purpose};
use crate::timing::{cycles_for, wall_time_seconds, FetchUnitState, HardwareConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("simulator is halted")]
    Halted,
    #[error("undefined encoding {bits:#x} at {address:#010x}")]
    UndefinedEncoding { address: u32, bits: u32 },
    #[error("memory fault: {0}")]
    Memory(#[from] MemoryError),
}

impl From<ExecError> for SimError {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::Memory(m) => SimError::Memory(m),
        }
    }
}

/// Outcome of a single step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReport {
    pub events: StepEvents,
    pub cycles: u64,
    pub delta: CounterDelta,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitReason {
    Breakpoint,
    UndefinedEncoding { address: u32, bits: u32 },
    MemoryFault { address: Option<u32>, detail: MemoryError },
    BudgetExhausted,
}

impl ExitReason {
    pub fn name(&self) -> &'static str {
        match self {
            ExitReason::Breakpoint => "breakpoint",
            ExitReason::UndefinedEncoding { .. } => "undefined_encoding",
            ExitReason::MemoryFault { .. } => "memory_fault",
            ExitReason::BudgetExhausted => "budget_exhausted",
        }
    }
}

impl Serialize for MemoryError {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub exit: ExitReason,
    pub config: HardwareConfig,
    pub instr_retired: u64,
    pub cycles: u64,
    pub wall_time_s: f64,
    pub counters: EventCounters,
    pub state: MachineState,
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Load(#[from] LoadError),
}

#[derive(Debug, Clone)]
pub struct Simulator {
    state: MachineState,
    memory: MemoryMap,
    config: HardwareConfig,
    fetch_unit: FetchUnitState,
    counters: EventCounters,
}

impl Simulator {
    pub fn new(memory: MemoryMap, config: HardwareConfig) -> Self {
        Simulator {
            state: MachineState::default(),
            memory,
            config,
            fetch_unit: FetchUnitState::default(),
            counters: EventCounters::new(),
        }
    }

    /// Builds a simulator around a freshly loaded image and resets it from
    /// the vector table.
    pub fn with_image(
        layout: MemoryLayout,
        image: Image<'_>,
        config: HardwareConfig,
    ) -> Result<(Self, LoadReport), SetupError> {
        let mut memory = MemoryMap::new(layout)?;
        let report = load_image(&mut memory, image)?;
        let mut sim = Simulator::new(memory, config);
        sim.reset();
        Ok((sim, report))
    }

    /// Cortex-M0 reset: sp from the first vector table word, pc from the
    /// second with the Thumb bit cleared.
    pub fn reset(&mut self) {
        let base = self.memory.layout().flash_base;
        let sp = self.memory.peek_u32(base).unwrap_or(0);
        let pc = self.memory.peek_u32(base + 4).unwrap_or(0) & !1;
        self.reset_to(pc, sp);
    }

    /// Reset with an explicit entry point and stack pointer.
    pub fn reset_to(&mut self, entry: u32, sp: u32) {
        self.state = MachineState::default();
        self.state.regs[usize::from(SP)] = sp & !3;
        self.state.regs[usize::from(PC)] = entry & !1;
        self.fetch_unit = FetchUnitState::default();
        self.counters = EventCounters::new();
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut MachineState {
        &mut self.state
    }

    pub fn memory(&self) -> &MemoryMap {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut MemoryMap {
        &mut self.memory
    }

    pub fn config(&self) -> &HardwareConfig {
        &self.config
    }

    pub fn counters(&self) -> &EventCounters {
        &self.counters
    }

    pub fn is_halted(&self) -> bool {
        self.state.halted
    }

    fn fetch(&self, address: u32) -> Result<(u16, FetchAccess), MemoryError> {
        let (value, class) = self.memory.read(address, 2, Purpose::Fetch)?;
        Ok((value as u16, FetchAccess { address, size: 2, region: class.region }))
    }

    /// Executes exactly one instruction.
    pub fn step(&mut self) -> Result<StepReport, SimError> {
        if self.state.halted {
            return Err(SimError::Halted);
        }
        let pc = self.state.pc();
        let (first, fa) = self.fetch(pc)?;
        let mut fetches = vec![fa];
        let second = if is_wide_prefix(first) {
            let (hw, fb) = self.fetch(pc.wrapping_add(2))?;
            fetches.push(fb);
            Some(hw)
        } else {
            None
        };
        let instr = decode_halfwords(first, second, pc).map_err(|e| match e {
            DecodeError::UndefinedEncoding { address, bits } => {
                SimError::UndefinedEncoding { address, bits }
            }
            DecodeError::Truncated { address } | DecodeError::Misaligned { address } => {
                SimError::UndefinedEncoding { address, bits: u32::from(first) }
            }
        })?;
        let mut events = execute(&mut self.state, &instr, &mut self.memory)?;
        events.fetch_accesses = fetches;
        let (cycles, unit) =
            cycles_for(&events, &self.config, self.fetch_unit, self.memory.layout());
        self.fetch_unit = unit;
        let delta = classify(&events);
        self.counters.record(&events, delta, cycles);
        Ok(StepReport { events, cycles, delta })
    }

    /// Runs until a breakpoint, fault, or `max_instructions` retired
    /// instructions.
    pub fn run(&mut self, max_instructions: u64) -> RunReport {
        self.run_with(max_instructions, |_| {})
    }

    /// Like [`Simulator::run`], calling `observe` after every step.
    pub fn run_with<F: FnMut(&StepReport)>(
        &mut self,
        max_instructions: u64,
        mut observe: F,
    ) -> RunReport {
        let mut executed = 0u64;
        let exit = loop {
            if self.state.halted {
                break ExitReason::Breakpoint;
            }
            if executed >= max_instructions {
                break ExitReason::BudgetExhausted;
            }
            match self.step() {
                Ok(report) => {
                    executed += 1;
                    observe(&report);
                }
                Err(SimError::Halted) => break ExitReason::Breakpoint,
                Err(SimError::UndefinedEncoding { address, bits }) => {
                    break ExitReason::UndefinedEncoding { address, bits }
                }
                Err(SimError::Memory(detail)) => {
                    break ExitReason::MemoryFault { address: detail.address(), detail }
                }
            }
        };
        self.report(exit)
    }

    fn report(&self, exit: ExitReason) -> RunReport {
        RunReport {
            exit,
            config: self.config,
            instr_retired: self.state.instr_retired,
            cycles: self.counters.cycles,
            wall_time_s: wall_time_seconds(self.counters.cycles, &self.config),
            counters: self.counters.clone(),
            state: self.state.clone(),
        }
    }
}

/// Total cycles and wall-clock seconds of a completed run.
pub fn run_cycles(report: &RunReport) -> (u64, f64) {
    (report.cycles, wall_time_seconds(report.cycles, &report.config))
}
