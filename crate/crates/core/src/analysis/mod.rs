//! Basic-block extraction and static counter prediction.
//!
//! Blocks are found by recursive descent from the entry point and any
//! extra roots, so literal pools are never decoded as code. Each block gets
//! a base counter vector for one execution that leaves through its
//! fallthrough edge, plus a delta of one taken branch for executions that
//! leave through a taken edge. Execution counts are inputs: they come from
//! profiling ([`profile_blocks`]) or from the user.

mod values;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::counters::CounterVector;
use crate::energy::EnergyModel;
use crate::isa::{decode, DecodeError, Instruction, Op, LR};
use crate::memory::{MemoryMap, Region};
use crate::scalar::Scalar;
use crate::sim::{RunReport, Simulator};

pub use values::{predict, transfer, BlockPrediction, RegValues, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalysisError {
    #[error("entry point {0:#010x} is not in flash")]
    EntryOutsideFlash(u32),
    #[error("block {0:#010x} is not in the CFG")]
    UnknownBlock(u32),
    #[error("block {0:#010x} has no taken exit but a taken count was given")]
    NoTakenExit(u32),
    #[error("block {start:#010x}: taken count {taken} exceeds execution count {executions}")]
    TakenExceedsExecutions { start: u32, taken: u64, executions: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Fallthrough,
    TakenBranch,
    Call,
    Return,
    Indirect,
}

impl EdgeKind {
    /// Leaving through this edge retires a taken branch.
    pub fn is_taken(self) -> bool {
        self != EdgeKind::Fallthrough
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Exit {
    pub kind: EdgeKind,
    /// `None` when the target is only known at run time.
    #[serde(serialize_with = "ser_opt_addr")]
    pub target: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DecodeIssue {
    #[serde(serialize_with = "ser_addr")]
    pub address: u32,
    #[serde(serialize_with = "ser_display")]
    pub error: DecodeError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BlockFlags {
    /// Data accesses classified as RAM by default.
    pub unresolved_accesses: u32,
    /// The block runs into an undecodable instruction.
    #[serde(serialize_with = "ser_opt_addr")]
    pub decode_error: Option<u32>,
    /// The block ends with a breakpoint (the program halts there).
    pub halts: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub start: u32,
    /// Exclusive.
    pub end: u32,
    pub instructions: Vec<Instruction>,
    pub exits: Vec<Exit>,
    /// Abstract register values on entry.
    pub entry_values: RegValues,
    pub base: CounterVector,
    pub taken_delta: CounterVector,
    pub flags: BlockFlags,
}

impl BasicBlock {
    pub fn has_taken_exit(&self) -> bool {
        self.exits.iter().any(|e| e.kind.is_taken())
    }

    pub fn last(&self) -> &Instruction {
        self.instructions.last().expect("blocks are nonempty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticCfg {
    pub entry: u32,
    pub blocks: BTreeMap<u32, BasicBlock>,
    /// Undecodable instructions reached by the traversal.
    pub decode_errors: Vec<DecodeIssue>,
}

impl StaticCfg {
    /// The block containing the instruction at `address`.
    pub fn block_containing(&self, address: u32) -> Option<&BasicBlock> {
        let (_, b) = self.blocks.range(..=address).next_back()?;
        b.instructions.iter().any(|i| i.address == address).then_some(b)
    }
}

fn ends_block(instr: &Instruction) -> bool {
    instr.may_write_pc() || matches!(instr.op, Op::Bkpt { .. })
}

fn exits_of(instr: &Instruction) -> Vec<Exit> {
    let next = Some(instr.next_address());
    let exit = |kind, target| Exit { kind, target };
    match instr.op {
        Op::BCond { .. } => vec![
            exit(EdgeKind::Fallthrough, next),
            exit(EdgeKind::TakenBranch, instr.branch_target()),
        ],
        Op::B { .. } => vec![exit(EdgeKind::TakenBranch, instr.branch_target())],
        Op::Bl { .. } => {
            vec![exit(EdgeKind::Call, instr.branch_target()), exit(EdgeKind::Fallthrough, next)]
        }
        Op::Blx { .. } => vec![exit(EdgeKind::Call, None), exit(EdgeKind::Fallthrough, next)],
        Op::Bx { rm } if rm == LR => vec![exit(EdgeKind::Return, None)],
        Op::Pop { .. } => vec![exit(EdgeKind::Return, None)],
        Op::Bkpt { .. } => vec![],
        _ => vec![exit(EdgeKind::Indirect, None)],
    }
}

fn decode_at(memory: &MemoryMap, address: u32) -> Result<Instruction, DecodeError> {
    let in_flash = |a: u32| memory.layout().region_of(a) == Some(Region::Flash);
    if !in_flash(address) {
        return Err(DecodeError::Truncated { address });
    }
    let bytes = memory.peek(address, 4).or_else(|| memory.peek(address, 2));
    let bytes = bytes.ok_or(DecodeError::Truncated { address })?;
    decode(bytes, address)
}

/// Recursive-descent CFG from `entry` and `roots`.
pub fn extract_cfg(memory: &MemoryMap, entry: u32, roots: &[u32]) -> Result<StaticCfg, AnalysisError> {
    let entry = entry & !1;
    if memory.layout().region_of(entry) != Some(Region::Flash) {
        return Err(AnalysisError::EntryOutsideFlash(entry));
    }
    let mut decoded: BTreeMap<u32, Instruction> = BTreeMap::new();
    let mut errors: BTreeMap<u32, DecodeError> = BTreeMap::new();
    let mut leaders: BTreeSet<u32> = BTreeSet::new();
    let mut function_starts: BTreeSet<u32> = BTreeSet::new();
    let mut work: VecDeque<u32> = VecDeque::new();
    for r in std::iter::once(entry).chain(roots.iter().map(|r| r & !1)) {
        leaders.insert(r);
        function_starts.insert(r);
        work.push_back(r);
    }

    while let Some(start) = work.pop_front() {
        let mut addr = start;
        loop {
            if decoded.contains_key(&addr) || errors.contains_key(&addr) {
                break;
            }
            let instr = match decode_at(memory, addr) {
                Ok(i) => i,
                Err(e) => {
                    errors.insert(addr, e);
                    break;
                }
            };
            decoded.insert(addr, instr);
            if ends_block(&instr) {
                for exit in exits_of(&instr) {
                    if let Some(t) = exit.target {
                        leaders.insert(t);
                        if exit.kind == EdgeKind::Call {
                            function_starts.insert(t);
                        }
                        work.push_back(t);
                    }
                }
                break;
            }
            addr = instr.next_address();
        }
    }

    // Partition into blocks.
    let mut blocks: BTreeMap<u32, BasicBlock> = BTreeMap::new();
    let mut current: Vec<Instruction> = Vec::new();
    let mut flush = |current: &mut Vec<Instruction>, exits: Vec<Exit>, flags: BlockFlags| {
        if current.is_empty() {
            return;
        }
        let start = current[0].address;
        let end = current.last().unwrap().next_address();
        blocks.insert(
            start,
            BasicBlock {
                start,
                end,
                instructions: std::mem::take(current),
                exits,
                entry_values: RegValues::unknown(),
                base: CounterVector::ZERO,
                taken_delta: CounterVector::ZERO,
                flags,
            },
        );
    };
    let instrs: Vec<Instruction> = decoded.values().copied().collect();
    for (idx, instr) in instrs.iter().enumerate() {
        current.push(*instr);
        let next = instr.next_address();
        if ends_block(instr) {
            let flags = BlockFlags {
                halts: matches!(instr.op, Op::Bkpt { .. }),
                ..BlockFlags::default()
            };
            flush(&mut current, exits_of(instr), flags);
            continue;
        }
        let follows = instrs.get(idx + 1).map(|n| n.address) == Some(next);
        if errors.contains_key(&next) {
            let flags = BlockFlags { decode_error: Some(next), ..BlockFlags::default() };
            flush(&mut current, vec![], flags);
        } else if !follows || leaders.contains(&next) {
            let ft = vec![Exit { kind: EdgeKind::Fallthrough, target: Some(next) }];
            flush(&mut current, ft, BlockFlags::default());
        }
    }
    debug_assert!(current.is_empty());

    propagate_values(memory, &mut blocks, &function_starts);
    for b in blocks.values_mut() {
        let p = predict_block_counters(b, memory);
        b.base = p.base;
        b.taken_delta = p.taken_delta;
        b.flags.unresolved_accesses = p.unresolved_accesses;
    }

    let decode_errors =
        errors.into_iter().map(|(address, error)| DecodeIssue { address, error }).collect();
    Ok(StaticCfg { entry, blocks, decode_errors })
}

/// Forward constant propagation over intra-procedural edges. Function
/// entries and call return sites start with nothing known.
fn propagate_values(
    memory: &MemoryMap,
    blocks: &mut BTreeMap<u32, BasicBlock>,
    function_starts: &BTreeSet<u32>,
) {
    let mut inputs: BTreeMap<u32, RegValues> = BTreeMap::new();
    let mut work: VecDeque<u32> = VecDeque::new();
    for &start in blocks.keys() {
        let is_return_site = blocks.values().any(|p| {
            p.end == start && p.exits.iter().any(|e| e.kind == EdgeKind::Call)
        });
        if function_starts.contains(&start) || is_return_site {
            inputs.insert(start, RegValues::unknown());
            work.push_back(start);
        }
    }
    while let Some(start) = work.pop_front() {
        let b = &blocks[&start];
        let mut vals = inputs[&start];
        for i in &b.instructions {
            transfer(&mut vals, i, memory);
        }
        let has_call = b.exits.iter().any(|e| e.kind == EdgeKind::Call);
        for e in &b.exits {
            let intra = matches!(e.kind, EdgeKind::Fallthrough | EdgeKind::TakenBranch);
            if !intra || has_call {
                continue;
            }
            let Some(t) = e.target else { continue };
            if !blocks.contains_key(&t) {
                continue;
            }
            let new = match inputs.get(&t) {
                Some(old) => old.meet(&vals, memory.layout()),
                None => vals,
            };
            if inputs.get(&t) != Some(&new) {
                inputs.insert(t, new);
                work.push_back(t);
            }
        }
    }
    for (start, b) in blocks.iter_mut() {
        b.entry_values = inputs.get(start).copied().unwrap_or_else(RegValues::unknown);
    }
}

/// Base counters and taken-exit delta of `block`, from its entry values.
pub fn predict_block_counters(block: &BasicBlock, memory: &MemoryMap) -> BlockPrediction {
    predict(&block.instructions, memory, &block.entry_values)
}

/// Block execution and taken-exit counts, keyed by block start.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCounts {
    #[serde(with = "addr_map")]
    pub executions: BTreeMap<u32, u64>,
    #[serde(default, with = "addr_map")]
    pub taken: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockEnergy<T> {
    #[serde(serialize_with = "ser_addr")]
    pub start: u32,
    pub executions: u64,
    pub taken: u64,
    pub counters: CounterVector,
    pub energy_nj: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticEstimate<T> {
    pub counters: CounterVector,
    pub total_nj: T,
    pub blocks: Vec<BlockEnergy<T>>,
}

/// Total counters implied by block counts.
pub fn static_counters(
    cfg: &StaticCfg,
    counts: &BlockCounts,
) -> Result<Vec<(u32, u64, u64, CounterVector)>, AnalysisError> {
    for start in counts.executions.keys().chain(counts.taken.keys()) {
        if !cfg.blocks.contains_key(start) {
            return Err(AnalysisError::UnknownBlock(*start));
        }
    }
    let mut out = Vec::new();
    for (start, b) in &cfg.blocks {
        let executions = counts.executions.get(start).copied().unwrap_or(0);
        let taken = counts.taken.get(start).copied().unwrap_or(0);
        if taken > 0 && !b.has_taken_exit() {
            return Err(AnalysisError::NoTakenExit(*start));
        }
        if taken > executions {
            return Err(AnalysisError::TakenExceedsExecutions { start: *start, taken, executions });
        }
        out.push((*start, executions, taken, b.base * executions + b.taken_delta * taken));
    }
    Ok(out)
}

/// Energy of a program from block counts. The total is the model applied
/// to the summed counters; the per-block energies add up to it up to
/// rounding.
pub fn estimate_static<T: Scalar>(
    cfg: &StaticCfg,
    counts: &BlockCounts,
    model: &EnergyModel<T>,
) -> Result<StaticEstimate<T>, AnalysisError> {
    let per_block = static_counters(cfg, counts)?;
    let mut total = CounterVector::ZERO;
    let mut blocks = Vec::new();
    for (start, executions, taken, counters) in per_block {
        total += counters;
        if executions == 0 {
            continue;
        }
        blocks.push(BlockEnergy {
            start,
            executions,
            taken,
            counters,
            energy_nj: model.estimate_counts(&counters),
        });
    }
    Ok(StaticEstimate { counters: total, total_nj: model.estimate_counts(&total), blocks })
}

/// Result of running a program while attributing steps to blocks.
#[derive(Debug, Clone)]
pub struct BlockProfile {
    pub run: RunReport,
    pub counts: BlockCounts,
    /// Steps at addresses outside every block, or taken branches that do
    /// not end a block; nonzero means the CFG missed code.
    pub unattributed_steps: u64,
}

/// Runs `sim` to completion and records block execution and taken counts.
pub fn profile_blocks(sim: &mut Simulator, cfg: &StaticCfg, max_instructions: u64) -> BlockProfile {
    let last_of: BTreeMap<u32, u32> =
        cfg.blocks.values().map(|b| (b.last().address, b.start)).collect();
    let mut counts = BlockCounts::default();
    let mut unattributed = 0u64;
    let run = sim.run_with(max_instructions, |step| {
        let addr = step.events.instruction.address;
        if cfg.blocks.contains_key(&addr) {
            *counts.executions.entry(addr).or_insert(0) += 1;
        } else if cfg.block_containing(addr).is_none() {
            unattributed += 1;
        }
        if step.events.branch_taken {
            match last_of.get(&addr) {
                Some(&start) => *counts.taken.entry(start).or_insert(0) += 1,
                None => unattributed += 1,
            }
        }
    });
    BlockProfile { run, counts, unattributed_steps: unattributed }
}

fn ser_addr<S: serde::Serializer>(a: &u32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{a:#010x}"))
}

fn ser_opt_addr<S: serde::Serializer>(a: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
    match a {
        Some(a) => ser_addr(a, s),
        None => s.serialize_none(),
    }
}

fn ser_display<S: serde::Serializer, D: std::fmt::Display>(d: &D, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(d)
}

/// Parses `0x`-prefixed hex or decimal addresses.
pub fn parse_address(s: &str) -> Option<u32> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u32::from_str_radix(&hex.replace('_', ""), 16).ok(),
        None => s.parse().ok(),
    }
}

mod addr_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<u32, u64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(m.iter().map(|(k, v)| (format!("{k:#010x}"), v)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u32, u64>, D::Error> {
        let raw = BTreeMap::<String, u64>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                super::parse_address(&k)
                    .map(|a| (a, v))
                    .ok_or_else(|| D::Error::custom(format!("bad block address {k:?}")))
            })
            .collect()
    }
}

/// JSON view of one block for reports.
#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    #[serde(serialize_with = "ser_addr")]
    pub start: u32,
    #[serde(serialize_with = "ser_addr")]
    pub end: u32,
    pub instr_count: usize,
    pub base: CounterVector,
    pub taken_delta: CounterVector,
    pub exits: Vec<Exit>,
    pub flags: BlockFlags,
    pub disassembly: Vec<String>,
}

impl From<&BasicBlock> for BlockReport {
    fn from(b: &BasicBlock) -> Self {
        BlockReport {
            start: b.start,
            end: b.end,
            instr_count: b.instructions.len(),
            base: b.base,
            taken_delta: b.taken_delta,
            exits: b.exits.clone(),
            flags: b.flags,
            disassembly: b
                .instructions
                .iter()
                .map(|i| format!("{:#010x}: {}", i.address, i))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CfgReport {
    #[serde(serialize_with = "ser_addr")]
    pub entry: u32,
    pub blocks: Vec<BlockReport>,
    pub decode_errors: Vec<DecodeIssue>,
}

impl From<&StaticCfg> for CfgReport {
    fn from(cfg: &StaticCfg) -> Self {
        CfgReport {
            entry: cfg.entry,
            blocks: cfg.blocks.values().map(BlockReport::from).collect(),
            decode_errors: cfg.decode_errors.clone(),
        }
    }
}
