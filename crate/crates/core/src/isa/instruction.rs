use std::fmt;

use serde::{Deserialize, Serialize};

/// Register index for the stack pointer.
pub const SP: u8 = 13;
/// Register index for the link register.
pub const LR: u8 = 14;
/// Register index for the program counter.
pub const PC: u8 = 15;

/// Condition field of a conditional branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Condition {
    Eq,
    Ne,
    Cs,
    Cc,
    Mi,
    Pl,
    Vs,
    Vc,
    Hi,
    Ls,
    Ge,
    Lt,
    Gt,
    Le,
}

impl Condition {
    /// Maps the 4-bit condition field. `0b1110` and `0b1111` are not
    /// conditions in the branch encoding space (UDF and SVC live there).
    pub fn from_bits(bits: u16) -> Option<Condition> {
        use Condition::*;
        Some(match bits & 0xF {
            0 => Eq,
            1 => Ne,
            2 => Cs,
            3 => Cc,
            4 => Mi,
            5 => Pl,
            6 => Vs,
            7 => Vc,
            8 => Hi,
            9 => Ls,
            10 => Ge,
            11 => Lt,
            12 => Gt,
            13 => Le,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        use Condition::*;
        match self {
            Eq => "eq",
            Ne => "ne",
            Cs => "hs",
            Cc => "lo",
            Mi => "mi",
            Pl => "pl",
            Vs => "vs",
            Vc => "vc",
            Hi => "hi",
            Ls => "ls",
            Ge => "ge",
            Lt => "lt",
            Gt => "gt",
            Le => "le",
        }
    }
}

/// Two-operand data-processing operations of the `010000` group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    And,
    Eor,
    Lsl,
    Lsr,
    Asr,
    Adc,
    Sbc,
    Ror,
    Tst,
    Rsb,
    Cmp,
    Cmn,
    Orr,
    Bic,
    Mvn,
}

/// Width, direction and sign extension of a single load or store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemOp {
    Str,
    Strh,
    Strb,
    Ldr,
    Ldrh,
    Ldrb,
    Ldrsb,
    Ldrsh,
}

impl MemOp {
    pub fn size(self) -> u8 {
        match self {
            MemOp::Str | MemOp::Ldr => 4,
            MemOp::Strh | MemOp::Ldrh | MemOp::Ldrsh => 2,
            MemOp::Strb | MemOp::Ldrb | MemOp::Ldrsb => 1,
        }
    }

    pub fn is_load(self) -> bool {
        !matches!(self, MemOp::Str | MemOp::Strh | MemOp::Strb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtendOp {
    Sxth,
    Sxtb,
    Uxth,
    Uxtb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RevOp {
    Rev,
    Rev16,
    Revsh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BarrierKind {
    Dsb,
    Dmb,
    Isb,
}

/// Decoded operation with its operands.
///
/// Register fields are raw 0..=15 indices. Immediates are already scaled
/// (e.g. `imm` of a word load is a byte offset) and branch offsets are
/// relative to the instruction address plus 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    LslImm { rd: u8, rm: u8, shift: u8 },
    LsrImm { rd: u8, rm: u8, shift: u8 },
    AsrImm { rd: u8, rm: u8, shift: u8 },
    AddReg { rd: u8, rn: u8, rm: u8 },
    SubReg { rd: u8, rn: u8, rm: u8 },
    AddImm3 { rd: u8, rn: u8, imm: u8 },
    SubImm3 { rd: u8, rn: u8, imm: u8 },
    MovImm { rd: u8, imm: u8 },
    CmpImm { rn: u8, imm: u8 },
    AddImm8 { rdn: u8, imm: u8 },
    SubImm8 { rdn: u8, imm: u8 },
    Alu { op: AluOp, rdn: u8, rm: u8 },
    Muls { rdm: u8, rn: u8 },
    /// ADD with at least one operand allowed to be a high register; no flags.
    AddHigh { rdn: u8, rm: u8 },
    CmpHigh { rn: u8, rm: u8 },
    MovHigh { rd: u8, rm: u8 },
    Bx { rm: u8 },
    Blx { rm: u8 },
    LdrLiteral { rt: u8, imm: u16 },
    MemReg { op: MemOp, rt: u8, rn: u8, rm: u8 },
    /// Immediate-offset form; `rn` is 13 for the SP-relative encodings.
    MemImm { op: MemOp, rt: u8, rn: u8, imm: u16 },
    Adr { rd: u8, imm: u16 },
    AddRdSp { rd: u8, imm: u16 },
    AddSp { imm: u16 },
    SubSp { imm: u16 },
    Extend { op: ExtendOp, rd: u8, rm: u8 },
    Rev { op: RevOp, rd: u8, rm: u8 },
    /// Bits 0..=7 are r0-r7, bit 14 is lr.
    Push { regs: u16 },
    /// Bits 0..=7 are r0-r7, bit 15 is pc.
    Pop { regs: u16 },
    Stm { rn: u8, regs: u8 },
    Ldm { rn: u8, regs: u8 },
    BCond { cond: Condition, offset: i32 },
    B { offset: i32 },
    Bl { offset: i32 },
    Bkpt { imm: u8 },
    Svc { imm: u8 },
    /// NOP, YIELD, WFE, WFI, SEV and unallocated hints (by number).
    Hint { hint: u8 },
    Cps { disable: bool },
    Msr { rn: u8, sysm: u8 },
    Mrs { rd: u8, sysm: u8 },
    Barrier { kind: BarrierKind, option: u8 },
}

/// Coarse opcode class used by the timing and counter models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrKind {
    DataProcessing,
    Muls,
    Load,
    Store,
    BranchConditional,
    BranchUnconditional,
    Bl,
    BranchExchange,
    PushPop,
    Misc,
}

/// Per-opcode key of the execution histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mnemonic {
    Adcs,
    Add,
    Adds,
    Adr,
    Ands,
    Asrs,
    B,
    /// Any conditional branch.
    BCond,
    Bics,
    Bkpt,
    Bl,
    Blx,
    Bx,
    Cmn,
    Cmp,
    Cps,
    Dmb,
    Dsb,
    Eors,
    Hint,
    Isb,
    Ldm,
    Ldr,
    Ldrb,
    Ldrh,
    Ldrsb,
    Ldrsh,
    Lsls,
    Lsrs,
    Mov,
    Movs,
    Mrs,
    Msr,
    Muls,
    Mvns,
    Orrs,
    Pop,
    Push,
    Rev,
    Rev16,
    Revsh,
    Rors,
    Rsbs,
    Sbcs,
    Stm,
    Str,
    Strb,
    Strh,
    Sub,
    Subs,
    Svc,
    Sxtb,
    Sxth,
    Tst,
    Uxtb,
    Uxth,
}

/// A decoded Thumb instruction at a specific address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub address: u32,
    /// 2, or 4 for the 32-bit encodings (BL and the system instructions).
    pub width: u8,
    /// Encoding bits; for 32-bit instructions the first halfword is in the
    /// upper 16 bits.
    pub raw: u32,
    pub op: Op,
}

impl Instruction {
    pub fn kind(&self) -> InstrKind {
        use Op::*;
        match self.op {
            Muls { .. } => InstrKind::Muls,
            LdrLiteral { .. } | Ldm { .. } => InstrKind::Load,
            MemReg { op, .. } | MemImm { op, .. } => {
                if op.is_load() {
                    InstrKind::Load
                } else {
                    InstrKind::Store
                }
            }
            Stm { .. } => InstrKind::Store,
            Push { .. } | Pop { .. } => InstrKind::PushPop,
            BCond { .. } => InstrKind::BranchConditional,
            B { .. } => InstrKind::BranchUnconditional,
            Bl { .. } => InstrKind::Bl,
            Bx { .. } | Blx { .. } => InstrKind::BranchExchange,
            Bkpt { .. } | Svc { .. } | Hint { .. } | Cps { .. } | Msr { .. } | Mrs { .. }
            | Barrier { .. } => InstrKind::Misc,
            _ => InstrKind::DataProcessing,
        }
    }

    pub fn mnemonic(&self) -> Mnemonic {
        use Op::*;
        match self.op {
            LslImm { shift: 0, .. } => Mnemonic::Movs,
            LslImm { .. } => Mnemonic::Lsls,
            LsrImm { .. } => Mnemonic::Lsrs,
            AsrImm { .. } => Mnemonic::Asrs,
            AddReg { .. } | AddImm3 { .. } | AddImm8 { .. } => Mnemonic::Adds,
            SubReg { .. } | SubImm3 { .. } | SubImm8 { .. } => Mnemonic::Subs,
            MovImm { .. } => Mnemonic::Movs,
            CmpImm { .. } | CmpHigh { .. } => Mnemonic::Cmp,
            Alu { op, .. } => match op {
                AluOp::And => Mnemonic::Ands,
                AluOp::Eor => Mnemonic::Eors,
                AluOp::Lsl => Mnemonic::Lsls,
                AluOp::Lsr => Mnemonic::Lsrs,
                AluOp::Asr => Mnemonic::Asrs,
                AluOp::Adc => Mnemonic::Adcs,
                AluOp::Sbc => Mnemonic::Sbcs,
                AluOp::Ror => Mnemonic::Rors,
                AluOp::Tst => Mnemonic::Tst,
                AluOp::Rsb => Mnemonic::Rsbs,
                AluOp::Cmp => Mnemonic::Cmp,
                AluOp::Cmn => Mnemonic::Cmn,
                AluOp::Orr => Mnemonic::Orrs,
                AluOp::Bic => Mnemonic::Bics,
                AluOp::Mvn => Mnemonic::Mvns,
            },
            Muls { .. } => Mnemonic::Muls,
            AddHigh { .. } | AddRdSp { .. } | AddSp { .. } => Mnemonic::Add,
            SubSp { .. } => Mnemonic::Sub,
            MovHigh { .. } => Mnemonic::Mov,
            Bx { .. } => Mnemonic::Bx,
            Blx { .. } => Mnemonic::Blx,
            LdrLiteral { .. } => Mnemonic::Ldr,
            MemReg { op, .. } | MemImm { op, .. } => match op {
                MemOp::Str => Mnemonic::Str,
                MemOp::Strh => Mnemonic::Strh,
                MemOp::Strb => Mnemonic::Strb,
                MemOp::Ldr => Mnemonic::Ldr,
                MemOp::Ldrh => Mnemonic::Ldrh,
                MemOp::Ldrb => Mnemonic::Ldrb,
                MemOp::Ldrsb => Mnemonic::Ldrsb,
                MemOp::Ldrsh => Mnemonic::Ldrsh,
            },
            Adr { .. } => Mnemonic::Adr,
            Extend { op, .. } => match op {
                ExtendOp::Sxth => Mnemonic::Sxth,
                ExtendOp::Sxtb => Mnemonic::Sxtb,
                ExtendOp::Uxth => Mnemonic::Uxth,
                ExtendOp::Uxtb => Mnemonic::Uxtb,
            },
            Rev { op, .. } => match op {
                RevOp::Rev => Mnemonic::Rev,
                RevOp::Rev16 => Mnemonic::Rev16,
                RevOp::Revsh => Mnemonic::Revsh,
            },
            Push { .. } => Mnemonic::Push,
            Pop { .. } => Mnemonic::Pop,
            Stm { .. } => Mnemonic::Stm,
            Ldm { .. } => Mnemonic::Ldm,
            BCond { .. } => Mnemonic::BCond,
            B { .. } => Mnemonic::B,
            Bl { .. } => Mnemonic::Bl,
            Bkpt { .. } => Mnemonic::Bkpt,
            Svc { .. } => Mnemonic::Svc,
            Hint { .. } => Mnemonic::Hint,
            Cps { .. } => Mnemonic::Cps,
            Msr { .. } => Mnemonic::Msr,
            Mrs { .. } => Mnemonic::Mrs,
            Barrier { kind, .. } => match kind {
                BarrierKind::Dsb => Mnemonic::Dsb,
                BarrierKind::Dmb => Mnemonic::Dmb,
                BarrierKind::Isb => Mnemonic::Isb,
            },
        }
    }

    /// Address of the next sequential instruction.
    pub fn next_address(&self) -> u32 {
        self.address.wrapping_add(u32::from(self.width))
    }

    /// Target of a direct branch (B, B<cond>, BL), if this is one.
    pub fn branch_target(&self) -> Option<u32> {
        match self.op {
            Op::BCond { offset, .. } | Op::B { offset } | Op::Bl { offset } => {
                Some(self.address.wrapping_add(4).wrapping_add(offset as u32))
            }
            _ => None,
        }
    }

    /// Whether executing this instruction may redirect the program counter.
    pub fn may_write_pc(&self) -> bool {
        match self.op {
            Op::BCond { .. } | Op::B { .. } | Op::Bl { .. } | Op::Bx { .. } | Op::Blx { .. } => {
                true
            }
            Op::Pop { regs } => regs & (1 << 15) != 0,
            Op::AddHigh { rdn, .. } => rdn == PC,
            Op::MovHigh { rd, .. } => rd == PC,
            _ => false,
        }
    }
}

fn reg_name(r: u8) -> &'static str {
    const NAMES: [&str; 16] = [
        "r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8", "sb", "sl", "fp", "ip", "sp", "lr",
        "pc",
    ];
    NAMES[usize::from(r & 0xF)]
}

fn sysm_name(sysm: u8) -> String {
    match sysm {
        0 => "apsr".into(),
        1 => "iapsr".into(),
        2 => "eapsr".into(),
        3 => "xpsr".into(),
        5 => "ipsr".into(),
        6 => "epsr".into(),
        7 => "iepsr".into(),
        8 => "msp".into(),
        9 => "psp".into(),
        16 => "primask".into(),
        20 => "control".into(),
        other => format!("#{other}"),
    }
}

fn write_reglist(f: &mut fmt::Formatter<'_>, regs: u16) -> fmt::Result {
    f.write_str("{")?;
    let mut first = true;
    for r in 0..16u8 {
        if regs & (1 << r) != 0 {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            f.write_str(reg_name(r))?;
        }
    }
    f.write_str("}")
}

fn mem_op_name(op: MemOp) -> &'static str {
    match op {
        MemOp::Str => "str",
        MemOp::Strh => "strh",
        MemOp::Strb => "strb",
        MemOp::Ldr => "ldr",
        MemOp::Ldrh => "ldrh",
        MemOp::Ldrb => "ldrb",
        MemOp::Ldrsb => "ldrsb",
        MemOp::Ldrsh => "ldrsh",
    }
}

/// Unified assembler syntax, lower case, with absolute branch targets.
impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Op::*;
        let r = reg_name;
        match self.op {
            LslImm { rd, rm, shift: 0 } => write!(f, "movs {}, {}", r(rd), r(rm)),
            LslImm { rd, rm, shift } => write!(f, "lsls {}, {}, #{}", r(rd), r(rm), shift),
            LsrImm { rd, rm, shift } => write!(f, "lsrs {}, {}, #{}", r(rd), r(rm), shift),
            AsrImm { rd, rm, shift } => write!(f, "asrs {}, {}, #{}", r(rd), r(rm), shift),
            AddReg { rd, rn, rm } => write!(f, "adds {}, {}, {}", r(rd), r(rn), r(rm)),
            SubReg { rd, rn, rm } => write!(f, "subs {}, {}, {}", r(rd), r(rn), r(rm)),
            AddImm3 { rd, rn, imm } => write!(f, "adds {}, {}, #{}", r(rd), r(rn), imm),
            SubImm3 { rd, rn, imm } => write!(f, "subs {}, {}, #{}", r(rd), r(rn), imm),
            MovImm { rd, imm } => write!(f, "movs {}, #{}", r(rd), imm),
            CmpImm { rn, imm } => write!(f, "cmp {}, #{}", r(rn), imm),
            AddImm8 { rdn, imm } => write!(f, "adds {}, #{}", r(rdn), imm),
            SubImm8 { rdn, imm } => write!(f, "subs {}, #{}", r(rdn), imm),
            Alu { op: AluOp::Rsb, rdn, rm } => write!(f, "rsbs {}, {}, #0", r(rdn), r(rm)),
            Alu { op, rdn, rm } => {
                let name = match op {
                    AluOp::And => "ands",
                    AluOp::Eor => "eors",
                    AluOp::Lsl => "lsls",
                    AluOp::Lsr => "lsrs",
                    AluOp::Asr => "asrs",
                    AluOp::Adc => "adcs",
                    AluOp::Sbc => "sbcs",
                    AluOp::Ror => "rors",
                    AluOp::Tst => "tst",
                    AluOp::Rsb => unreachable!(),
                    AluOp::Cmp => "cmp",
                    AluOp::Cmn => "cmn",
                    AluOp::Orr => "orrs",
                    AluOp::Bic => "bics",
                    AluOp::Mvn => "mvns",
                };
                write!(f, "{} {}, {}", name, r(rdn), r(rm))
            }
            Muls { rdm, rn } => write!(f, "muls {}, {}, {}", r(rdm), r(rn), r(rdm)),
            AddHigh { rdn, rm: SP } if rdn != SP => {
                write!(f, "add {}, sp, {}", r(rdn), r(rdn))
            }
            AddHigh { rdn, rm } => write!(f, "add {}, {}", r(rdn), r(rm)),
            CmpHigh { rn, rm } => write!(f, "cmp {}, {}", r(rn), r(rm)),
            MovHigh { rd, rm } => write!(f, "mov {}, {}", r(rd), r(rm)),
            Bx { rm } => write!(f, "bx {}", r(rm)),
            Blx { rm } => write!(f, "blx {}", r(rm)),
            LdrLiteral { rt, imm } => write!(f, "ldr {}, [pc, #{}]", r(rt), imm),
            MemReg { op, rt, rn, rm } => {
                write!(f, "{} {}, [{}, {}]", mem_op_name(op), r(rt), r(rn), r(rm))
            }
            MemImm { op, rt, rn, imm } => {
                write!(f, "{} {}, [{}, #{}]", mem_op_name(op), r(rt), r(rn), imm)
            }
            Adr { rd, imm } => write!(f, "adr {}, #{}", r(rd), imm),
            AddRdSp { rd, imm } => write!(f, "add {}, sp, #{}", r(rd), imm),
            AddSp { imm } => write!(f, "add sp, #{imm}"),
            SubSp { imm } => write!(f, "sub sp, #{imm}"),
            Extend { op, rd, rm } => {
                let name = match op {
                    ExtendOp::Sxth => "sxth",
                    ExtendOp::Sxtb => "sxtb",
                    ExtendOp::Uxth => "uxth",
                    ExtendOp::Uxtb => "uxtb",
                };
                write!(f, "{} {}, {}", name, r(rd), r(rm))
            }
            Rev { op, rd, rm } => {
                let name = match op {
                    RevOp::Rev => "rev",
                    RevOp::Rev16 => "rev16",
                    RevOp::Revsh => "revsh",
                };
                write!(f, "{} {}, {}", name, r(rd), r(rm))
            }
            Push { regs } => {
                f.write_str("push ")?;
                write_reglist(f, regs)
            }
            Pop { regs } => {
                f.write_str("pop ")?;
                write_reglist(f, regs)
            }
            Stm { rn, regs } => {
                write!(f, "stm {}!, ", r(rn))?;
                write_reglist(f, u16::from(regs))
            }
            Ldm { rn, regs } => {
                let wb = if regs & (1 << rn) == 0 { "!" } else { "" };
                write!(f, "ldm {}{}, ", r(rn), wb)?;
                write_reglist(f, u16::from(regs))
            }
            BCond { cond, .. } => {
                write!(f, "b{} #{:#x}", cond.as_str(), self.branch_target().unwrap())
            }
            B { .. } => write!(f, "b #{:#x}", self.branch_target().unwrap()),
            Bl { .. } => write!(f, "bl #{:#x}", self.branch_target().unwrap()),
            Bkpt { imm } => write!(f, "bkpt #{imm}"),
            Svc { imm } => write!(f, "svc #{imm}"),
            Hint { hint } => match hint {
                0 => f.write_str("nop"),
                1 => f.write_str("yield"),
                2 => f.write_str("wfe"),
                3 => f.write_str("wfi"),
                4 => f.write_str("sev"),
                n => write!(f, "hint #{n}"),
            },
            Cps { disable } => f.write_str(if disable { "cpsid i" } else { "cpsie i" }),
            Msr { rn, sysm } => write!(f, "msr {}, {}", sysm_name(sysm), r(rn)),
            Mrs { rd, sysm } => write!(f, "mrs {}, {}", r(rd), sysm_name(sysm)),
            Barrier { kind, option } => {
                let name = match kind {
                    BarrierKind::Dsb => "dsb",
                    BarrierKind::Dmb => "dmb",
                    BarrierKind::Isb => "isb",
                };
                if option == 0xF {
                    write!(f, "{name} sy")
                } else {
                    write!(f, "{name} #{option:#x}")
                }
            }
        }
    }
}
