//! Per-register abstract values used to resolve load/store regions.

use crate::counters::CounterVector;
use crate::isa::{InstrKind, Instruction, Op, PC, SP};
use crate::memory::{MemoryLayout, MemoryMap, Region};

/// What is known about a register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Value {
    #[default]
    Unknown,
    Const(u32),
    /// A pointer into a region with an unknown offset: a known address
    /// plus or minus something, or the merge of different addresses in the
    /// same region. The stack pointer is `Region(Ram)`.
    Region(Region),
}

/// Region of an address that looks like a pointer: inside flash at its
/// own base (not the boot alias, where small integers live) or in RAM.
fn pointer_region(layout: &MemoryLayout, a: u32) -> Option<Region> {
    let in_flash = a.wrapping_sub(layout.flash_base) < layout.flash_size;
    let in_ram = a.wrapping_sub(layout.ram_base) < layout.ram_size;
    if in_flash {
        Some(Region::Flash)
    } else if in_ram {
        Some(Region::Ram)
    } else {
        None
    }
}

impl Value {
    fn region(self, layout: &MemoryLayout) -> Option<Region> {
        match self {
            Value::Const(a) => pointer_region(layout, a),
            Value::Region(r) => Some(r),
            Value::Unknown => None,
        }
    }

    fn meet(self, other: Value, layout: &MemoryLayout) -> Value {
        if self == other {
            return self;
        }
        match (self.region(layout), other.region(layout)) {
            (Some(a), Some(b)) if a == b => Value::Region(a),
            _ => Value::Unknown,
        }
    }

    fn add(self, other: Value, layout: &MemoryLayout) -> Value {
        match (self, other) {
            (Value::Const(a), Value::Const(b)) => Value::Const(a.wrapping_add(b)),
            (Value::Region(_), Value::Region(_)) => Value::Unknown,
            (Value::Region(r), _) | (_, Value::Region(r)) => Value::Region(r),
            (Value::Const(a), Value::Unknown) | (Value::Unknown, Value::Const(a)) => {
                pointer_region(layout, a).map_or(Value::Unknown, Value::Region)
            }
            (Value::Unknown, Value::Unknown) => Value::Unknown,
        }
    }

    fn sub(self, other: Value, layout: &MemoryLayout) -> Value {
        match (self, other) {
            (Value::Const(a), Value::Const(b)) => Value::Const(a.wrapping_sub(b)),
            (Value::Region(r), Value::Const(_) | Value::Unknown) => Value::Region(r),
            (Value::Const(a), Value::Unknown) => {
                pointer_region(layout, a).map_or(Value::Unknown, Value::Region)
            }
            _ => Value::Unknown,
        }
    }
}

/// Abstract register file. `sp` always points into RAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegValues([Value; 16]);

impl Default for RegValues {
    fn default() -> Self {
        RegValues::unknown()
    }
}

impl RegValues {
    pub fn unknown() -> Self {
        let mut v = [Value::Unknown; 16];
        v[usize::from(SP)] = Value::Region(Region::Ram);
        RegValues(v)
    }

    pub fn get(&self, r: u8) -> Value {
        self.0[usize::from(r)]
    }

    fn set(&mut self, r: u8, v: Value) {
        if r != PC && r != SP {
            self.0[usize::from(r)] = v;
        }
    }

    pub fn meet(&self, other: &RegValues, layout: &MemoryLayout) -> RegValues {
        let mut out = *self;
        for (o, b) in out.0.iter_mut().zip(other.0.iter()) {
            *o = o.meet(*b, layout);
        }
        out
    }
}

fn c(v: u32) -> Value {
    Value::Const(v)
}

fn pc_value(instr: &Instruction) -> u32 {
    instr.address.wrapping_add(4)
}

fn literal_address(instr: &Instruction, imm: u16) -> u32 {
    (pc_value(instr) & !3).wrapping_add(u32::from(imm))
}

fn read_value(vals: &RegValues, instr: &Instruction, r: u8) -> Value {
    if r == PC {
        c(pc_value(instr))
    } else {
        vals.get(r)
    }
}

/// Applies `instr` to the abstract state.
pub fn transfer(vals: &mut RegValues, instr: &Instruction, memory: &MemoryMap) {
    use Op::*;
    let before = *vals;
    let get = |r: u8| read_value(&before, instr, r);
    let l = memory.layout();
    match instr.op {
        MovImm { rd, imm } => vals.set(rd, c(u32::from(imm))),
        AddImm8 { rdn, imm } => vals.set(rdn, get(rdn).add(c(u32::from(imm)), l)),
        SubImm8 { rdn, imm } => vals.set(rdn, get(rdn).sub(c(u32::from(imm)), l)),
        AddImm3 { rd, rn, imm } => vals.set(rd, get(rn).add(c(u32::from(imm)), l)),
        SubImm3 { rd, rn, imm } => vals.set(rd, get(rn).sub(c(u32::from(imm)), l)),
        AddReg { rd, rn, rm } => vals.set(rd, get(rn).add(get(rm), l)),
        SubReg { rd, rn, rm } => vals.set(rd, get(rn).sub(get(rm), l)),
        AddHigh { rdn, rm } => vals.set(rdn, get(rdn).add(get(rm), l)),
        MovHigh { rd, rm } => vals.set(rd, get(rm)),
        LslImm { rd, rm, shift } => {
            let v = match get(rm) {
                Value::Const(x) => c(x << shift),
                _ => Value::Unknown,
            };
            vals.set(rd, v);
        }
        LsrImm { rd, rm, shift } => {
            let v = match get(rm) {
                Value::Const(x) if shift != 0 => c(x >> shift),
                Value::Const(_) => c(0),
                _ => Value::Unknown,
            };
            vals.set(rd, v);
        }
        LdrLiteral { rt, imm } => {
            let addr = literal_address(instr, imm);
            let v = match memory.layout().region_of(addr) {
                Some(Region::Flash) => memory.peek_u32(addr).map_or(Value::Unknown, c),
                _ => Value::Unknown,
            };
            vals.set(rt, v);
        }
        Adr { rd, imm } => vals.set(rd, c(literal_address(instr, imm))),
        AddRdSp { rd, .. } => vals.set(rd, Value::Region(Region::Ram)),
        Ldm { rn, regs } => {
            let n = regs.count_ones();
            let wb = regs & (1 << rn) == 0;
            for r in 0..8 {
                if regs & (1 << r) != 0 {
                    vals.set(r, Value::Unknown);
                }
            }
            if wb {
                vals.set(rn, get(rn).add(c(4 * n), l));
            }
        }
        Stm { rn, regs } => vals.set(rn, get(rn).add(c(4 * regs.count_ones()), l)),
        Pop { regs } => {
            for r in 0..8 {
                if regs & (1 << r) != 0 {
                    vals.set(r, Value::Unknown);
                }
            }
        }
        Bl { .. } | Blx { .. } => *vals = RegValues::unknown(),
        _ => {
            for r in written_registers(&instr.op) {
                vals.set(r, Value::Unknown);
            }
        }
    }
}

/// Registers an operation not modelled by [`transfer`] may write.
fn written_registers(op: &Op) -> Vec<u8> {
    use Op::*;
    match *op {
        Alu { op, rdn, .. } => {
            use crate::isa::AluOp::*;
            if matches!(op, Tst | Cmp | Cmn) {
                vec![]
            } else {
                vec![rdn]
            }
        }
        AsrImm { rd, .. } | Extend { rd, .. } | Rev { rd, .. } | Mrs { rd, .. } => vec![rd],
        Muls { rdm, .. } => vec![rdm],
        MemReg { op, rt, .. } | MemImm { op, rt, .. } if op.is_load() => vec![rt],
        _ => vec![],
    }
}

/// Statically predicted counters of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockPrediction {
    /// One execution leaving through a fallthrough edge.
    pub base: CounterVector,
    /// Added when the block is left through a taken edge.
    pub taken_delta: CounterVector,
    /// Data accesses whose address could not be resolved and were
    /// classified as RAM.
    pub unresolved_accesses: u32,
}

enum Access {
    Read,
    Write,
}

fn count(
    out: &mut BlockPrediction,
    memory: &MemoryMap,
    addr: Value,
    dir: Access,
    times: u64,
) {
    let region = match addr {
        Value::Region(r) => r,
        Value::Const(a) => memory.layout().region_of(a).unwrap_or_else(|| {
            out.unresolved_accesses += times as u32;
            Region::Ram
        }),
        Value::Unknown => {
            out.unresolved_accesses += times as u32;
            Region::Ram
        }
    };
    match (region, dir) {
        (Region::Ram, Access::Read) => out.base.c4 += times,
        (Region::Ram, Access::Write) => out.base.c5 += times,
        (Region::Flash, Access::Read) => out.base.c6 += times,
        // Faults at run time; nothing is counted.
        (Region::Flash, Access::Write) => {}
    }
}

/// Predicts the counters of `instructions` executed in order from the
/// abstract state `entry`.
pub fn predict(instructions: &[Instruction], memory: &MemoryMap, entry: &RegValues) -> BlockPrediction {
    use Op::*;
    let mut out = BlockPrediction {
        taken_delta: CounterVector::from_array([0, 0, 1, 0, 0, 0]),
        ..BlockPrediction::default()
    };
    let mut vals = *entry;
    for instr in instructions {
        if instr.kind() == InstrKind::Muls {
            out.base.c2 += 1;
        } else {
            out.base.c1 += 1;
        }
        let get = |r: u8| read_value(&vals, instr, r);
        match instr.op {
            LdrLiteral { imm, .. } => {
                count(&mut out, memory, c(literal_address(instr, imm)), Access::Read, 1)
            }
            MemImm { op, rn, imm, .. } => {
                let addr = get(rn).add(c(u32::from(imm)), memory.layout());
                let dir = if op.is_load() { Access::Read } else { Access::Write };
                count(&mut out, memory, addr, dir, 1);
            }
            MemReg { op, rn, rm, .. } => {
                let addr = get(rn).add(get(rm), memory.layout());
                let dir = if op.is_load() { Access::Read } else { Access::Write };
                count(&mut out, memory, addr, dir, 1);
            }
            Ldm { rn, regs } | Stm { rn, regs } => {
                let base = get(rn);
                let dir = || if matches!(instr.op, Ldm { .. }) { Access::Read } else { Access::Write };
                for i in 0..regs.count_ones() {
                    count(&mut out, memory, base.add(c(4 * i), memory.layout()), dir(), 1);
                }
            }
            Push { regs } => out.base.c5 += u64::from(regs.count_ones()),
            Pop { regs } => out.base.c4 += u64::from(regs.count_ones()),
            _ => {}
        }
        transfer(&mut vals, instr, memory);
    }
    out
}
