//! Thumb encoder and a small label-resolving assembler.
//!
//! [`encode`] inverts the decoder for every operation it produces. The
//! [`Assembler`] is meant for building test programs and generated
//! workloads in code, not for parsing assembly text.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::isa::{AluOp, BarrierKind, Condition, ExtendOp, MemOp, Op, RevOp, SP};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("operand out of range in {0:?}")]
    OutOfRange(Op),
    #[error("no encoding for {0:?}")]
    NoEncoding(Op),
    #[error("undefined label {0:?}")]
    UndefinedLabel(String),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("literal at {0:#010x} is out of reach")]
    LiteralOutOfReach(u32),
}

fn lo(r: u8) -> bool {
    r < 8
}

fn cond_bits(c: Condition) -> u16 {
    use Condition::*;
    match c {
        Eq => 0,
        Ne => 1,
        Cs => 2,
        Cc => 3,
        Mi => 4,
        Pl => 5,
        Vs => 6,
        Vc => 7,
        Hi => 8,
        Ls => 9,
        Ge => 10,
        Lt => 11,
        Gt => 12,
        Le => 13,
    }
}

fn alu_bits(op: AluOp) -> u16 {
    use AluOp::*;
    match op {
        And => 0x0,
        Eor => 0x1,
        Lsl => 0x2,
        Lsr => 0x3,
        Asr => 0x4,
        Adc => 0x5,
        Sbc => 0x6,
        Ror => 0x7,
        Tst => 0x8,
        Rsb => 0x9,
        Cmp => 0xA,
        Cmn => 0xB,
        Orr => 0xC,
        Bic => 0xE,
        Mvn => 0xF,
    }
}

fn fits_signed(v: i32, bits: u32) -> bool {
    let lim = 1i32 << (bits - 1);
    (-lim..lim).contains(&v)
}

/// Encodes one operation as one or two halfwords.
pub fn encode(op: &Op) -> Result<Vec<u16>, AsmError> {
    use Op::*;
    let bad = || AsmError::OutOfRange(*op);
    let r = |x: u8| u16::from(x);
    let check = |ok: bool| if ok { Ok(()) } else { Err(bad()) };
    let hw = match *op {
        LslImm { rd, rm, shift } | LsrImm { rd, rm, shift } | AsrImm { rd, rm, shift } => {
            check(lo(rd) && lo(rm) && shift < 32)?;
            let opc = match op {
                LslImm { .. } => 0,
                LsrImm { .. } => 1,
                _ => 2,
            };
            (opc << 11) | (u16::from(shift) << 6) | (r(rm) << 3) | r(rd)
        }
        AddReg { rd, rn, rm } | SubReg { rd, rn, rm } => {
            check(lo(rd) && lo(rn) && lo(rm))?;
            let base = if matches!(op, AddReg { .. }) { 0x1800 } else { 0x1A00 };
            base | (r(rm) << 6) | (r(rn) << 3) | r(rd)
        }
        AddImm3 { rd, rn, imm } | SubImm3 { rd, rn, imm } => {
            check(lo(rd) && lo(rn) && imm < 8)?;
            let base = if matches!(op, AddImm3 { .. }) { 0x1C00 } else { 0x1E00 };
            base | (u16::from(imm) << 6) | (r(rn) << 3) | r(rd)
        }
        MovImm { rd, imm } => {
            check(lo(rd))?;
            0x2000 | (r(rd) << 8) | u16::from(imm)
        }
        CmpImm { rn, imm } => {
            check(lo(rn))?;
            0x2800 | (r(rn) << 8) | u16::from(imm)
        }
        AddImm8 { rdn, imm } => {
            check(lo(rdn))?;
            0x3000 | (r(rdn) << 8) | u16::from(imm)
        }
        SubImm8 { rdn, imm } => {
            check(lo(rdn))?;
            0x3800 | (r(rdn) << 8) | u16::from(imm)
        }
        Alu { op: alu, rdn, rm } => {
            check(lo(rdn) && lo(rm))?;
            0x4000 | (alu_bits(alu) << 6) | (r(rm) << 3) | r(rdn)
        }
        Muls { rdm, rn } => {
            check(lo(rdm) && lo(rn))?;
            0x4340 | (r(rn) << 3) | r(rdm)
        }
        AddHigh { rdn, rm } | CmpHigh { rn: rdn, rm } | MovHigh { rd: rdn, rm } => {
            check(rdn < 16 && rm < 16)?;
            let opc = match op {
                AddHigh { .. } => 0,
                CmpHigh { .. } => 1,
                _ => 2,
            };
            0x4400 | (opc << 8) | (r(rdn >> 3) << 7) | (r(rm) << 3) | r(rdn & 7)
        }
        Bx { rm } | Blx { rm } => {
            check(rm < 16)?;
            let link = if matches!(op, Blx { .. }) { 0x80 } else { 0 };
            0x4700 | link | (r(rm) << 3)
        }
        LdrLiteral { rt, imm } => {
            check(lo(rt) && imm % 4 == 0 && imm <= 1020)?;
            0x4800 | (r(rt) << 8) | (imm / 4)
        }
        MemReg { op: m, rt, rn, rm } => {
            check(lo(rt) && lo(rn) && lo(rm))?;
            let opc = match m {
                MemOp::Str => 0,
                MemOp::Strh => 1,
                MemOp::Strb => 2,
                MemOp::Ldrsb => 3,
                MemOp::Ldr => 4,
                MemOp::Ldrh => 5,
                MemOp::Ldrb => 6,
                MemOp::Ldrsh => 7,
            };
            0x5000 | (opc << 9) | (r(rm) << 6) | (r(rn) << 3) | r(rt)
        }
        MemImm { op: m, rt, rn, imm } if rn == SP => {
            check(lo(rt) && imm % 4 == 0 && imm <= 1020)?;
            let base = match m {
                MemOp::Str => 0x9000,
                MemOp::Ldr => 0x9800,
                _ => return Err(AsmError::NoEncoding(*op)),
            };
            base | (r(rt) << 8) | (imm / 4)
        }
        MemImm { op: m, rt, rn, imm } => {
            check(lo(rt) && lo(rn))?;
            let (base, scale) = match m {
                MemOp::Str => (0x6000, 4),
                MemOp::Ldr => (0x6800, 4),
                MemOp::Strb => (0x7000, 1),
                MemOp::Ldrb => (0x7800, 1),
                MemOp::Strh => (0x8000, 2),
                MemOp::Ldrh => (0x8800, 2),
                _ => return Err(AsmError::NoEncoding(*op)),
            };
            check(imm % scale == 0 && imm / scale < 32)?;
            base | ((imm / scale) << 6) | (r(rn) << 3) | r(rt)
        }
        Adr { rd, imm } | AddRdSp { rd, imm } => {
            check(lo(rd) && imm % 4 == 0 && imm <= 1020)?;
            let base = if matches!(op, Adr { .. }) { 0xA000 } else { 0xA800 };
            base | (r(rd) << 8) | (imm / 4)
        }
        AddSp { imm } | SubSp { imm } => {
            check(imm % 4 == 0 && imm <= 508)?;
            let sub = if matches!(op, SubSp { .. }) { 0x80 } else { 0 };
            0xB000 | sub | (imm / 4)
        }
        Extend { op: e, rd, rm } => {
            check(lo(rd) && lo(rm))?;
            let opc = match e {
                ExtendOp::Sxth => 0,
                ExtendOp::Sxtb => 1,
                ExtendOp::Uxth => 2,
                ExtendOp::Uxtb => 3,
            };
            0xB200 | (opc << 6) | (r(rm) << 3) | r(rd)
        }
        Rev { op: v, rd, rm } => {
            check(lo(rd) && lo(rm))?;
            let opc = match v {
                RevOp::Rev => 0,
                RevOp::Rev16 => 1,
                RevOp::Revsh => 3,
            };
            0xBA00 | (opc << 6) | (r(rm) << 3) | r(rd)
        }
        Push { regs } => {
            check(regs != 0 && regs & !0x40FF == 0)?;
            0xB400 | (regs & 0xFF) | ((regs >> 14) << 8)
        }
        Pop { regs } => {
            check(regs != 0 && regs & !0x80FF == 0)?;
            0xBC00 | (regs & 0xFF) | ((regs >> 15) << 8)
        }
        Stm { rn, regs } | Ldm { rn, regs } => {
            check(lo(rn) && regs != 0)?;
            let base = if matches!(op, Ldm { .. }) { 0xC800 } else { 0xC000 };
            base | (r(rn) << 8) | u16::from(regs)
        }
        BCond { cond, offset } => {
            check(offset % 2 == 0 && fits_signed(offset, 9))?;
            0xD000 | (cond_bits(cond) << 8) | ((offset >> 1) as u16 & 0xFF)
        }
        Svc { imm } => 0xDF00 | u16::from(imm),
        B { offset } => {
            check(offset % 2 == 0 && fits_signed(offset, 12))?;
            0xE000 | ((offset >> 1) as u16 & 0x7FF)
        }
        Bkpt { imm } => 0xBE00 | u16::from(imm),
        Hint { hint } => {
            check(hint < 16)?;
            0xBF00 | (u16::from(hint) << 4)
        }
        Cps { disable } => {
            if disable {
                0xB672
            } else {
                0xB662
            }
        }
        Bl { offset } => {
            check(offset % 2 == 0 && fits_signed(offset, 25))?;
            let imm = offset as u32;
            let s = (imm >> 24) & 1;
            let i1 = (imm >> 23) & 1;
            let i2 = (imm >> 22) & 1;
            let j1 = (!(i1 ^ s)) & 1;
            let j2 = (!(i2 ^ s)) & 1;
            let hw1 = 0xF000 | (s << 10) | ((imm >> 12) & 0x3FF);
            let hw2 = 0xD000 | (j1 << 13) | (j2 << 11) | ((imm >> 1) & 0x7FF);
            return Ok(vec![hw1 as u16, hw2 as u16]);
        }
        Msr { rn, sysm } => {
            check(rn < 16)?;
            return Ok(vec![0xF380 | r(rn), 0x8800 | u16::from(sysm)]);
        }
        Mrs { rd, sysm } => {
            check(rd < 16)?;
            return Ok(vec![0xF3EF, 0x8000 | (r(rd) << 8) | u16::from(sysm)]);
        }
        Op::Barrier { kind, option } => {
            check(option < 16)?;
            let k = match kind {
                BarrierKind::Dsb => 0x40,
                BarrierKind::Dmb => 0x50,
                BarrierKind::Isb => 0x60,
            };
            return Ok(vec![0xF3BF, 0x8F00 | k | u16::from(option)]);
        }
    };
    Ok(vec![hw])
}

#[derive(Debug, Clone)]
enum Item {
    Fixed(Op),
    /// A branch (`B`, `B<cond>` or `BL`) whose offset is filled in from a
    /// label.
    Branch(Op, String),
    /// `LDR rt, [pc, #imm]` reading the word at a label.
    Literal(u8, String),
    /// `ADR rd, label`.
    Adr(u8, String),
    Word(u32),
    Align4,
    Label(String),
}

/// Builds a flat Thumb image with forward and backward label references.
#[derive(Debug, Clone, Default)]
pub struct Assembler {
    items: Vec<Item>,
}

/// Assembled bytes plus label addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub base: u32,
    pub bytes: Vec<u8>,
    pub labels: BTreeMap<String, u32>,
}

impl Program {
    pub fn label(&self, name: &str) -> u32 {
        *self.labels.get(name).unwrap_or_else(|| panic!("no label {name:?}"))
    }

    pub fn end(&self) -> u32 {
        self.base + self.bytes.len() as u32
    }
}

impl Assembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(&mut self, op: Op) -> &mut Self {
        self.items.push(Item::Fixed(op));
        self
    }

    pub fn label(&mut self, name: &str) -> &mut Self {
        self.items.push(Item::Label(name.to_string()));
        self
    }

    pub fn word(&mut self, value: u32) -> &mut Self {
        self.items.push(Item::Word(value));
        self
    }

    pub fn align4(&mut self) -> &mut Self {
        self.items.push(Item::Align4);
        self
    }

    pub fn b(&mut self, label: &str) -> &mut Self {
        self.items.push(Item::Branch(Op::B { offset: 0 }, label.to_string()));
        self
    }

    pub fn bcond(&mut self, cond: Condition, label: &str) -> &mut Self {
        self.items.push(Item::Branch(Op::BCond { cond, offset: 0 }, label.to_string()));
        self
    }

    pub fn bl(&mut self, label: &str) -> &mut Self {
        self.items.push(Item::Branch(Op::Bl { offset: 0 }, label.to_string()));
        self
    }

    /// `LDR rt, =<word at label>`.
    pub fn ldr_literal(&mut self, rt: u8, label: &str) -> &mut Self {
        self.items.push(Item::Literal(rt, label.to_string()));
        self
    }

    pub fn adr(&mut self, rd: u8, label: &str) -> &mut Self {
        self.items.push(Item::Adr(rd, label.to_string()));
        self
    }

    pub fn movs(&mut self, rd: u8, imm: u8) -> &mut Self {
        self.op(Op::MovImm { rd, imm })
    }

    pub fn adds_imm(&mut self, rdn: u8, imm: u8) -> &mut Self {
        self.op(Op::AddImm8 { rdn, imm })
    }

    pub fn subs_imm(&mut self, rdn: u8, imm: u8) -> &mut Self {
        self.op(Op::SubImm8 { rdn, imm })
    }

    pub fn bkpt(&mut self) -> &mut Self {
        self.op(Op::Bkpt { imm: 0 })
    }

    fn width(item: &Item) -> u32 {
        match item {
            Item::Fixed(op) | Item::Branch(op, _) => match op {
                Op::Bl { .. } | Op::Msr { .. } | Op::Mrs { .. } | Op::Barrier { .. } => 4,
                _ => 2,
            },
            Item::Literal(..) | Item::Adr(..) => 2,
            Item::Word(_) => 4,
            Item::Align4 | Item::Label(_) => 0,
        }
    }

    /// Lays the program out at `base` (halfword aligned).
    pub fn assemble(&self, base: u32) -> Result<Program, AsmError> {
        let mut labels = BTreeMap::new();
        let mut addr = base;
        for item in &self.items {
            match item {
                Item::Label(name) => {
                    if labels.insert(name.clone(), addr).is_some() {
                        return Err(AsmError::DuplicateLabel(name.clone()));
                    }
                }
                Item::Align4 => addr = (addr + 3) & !3,
                other => addr += Self::width(other),
            }
        }
        let find = |name: &str| {
            labels.get(name).copied().ok_or_else(|| AsmError::UndefinedLabel(name.to_string()))
        };
        let mut bytes = Vec::new();
        let emit = |bytes: &mut Vec<u8>, hws: Vec<u16>| {
            for h in hws {
                bytes.extend_from_slice(&h.to_le_bytes());
            }
        };
        for item in &self.items {
            match item {
                Item::Label(_) => {}
                Item::Align4 => {
                    while (base + bytes.len() as u32) % 4 != 0 {
                        emit(&mut bytes, vec![0xBF00]);
                    }
                }
                Item::Word(w) => bytes.extend_from_slice(&w.to_le_bytes()),
                Item::Fixed(op) => emit(&mut bytes, encode(op)?),
                Item::Branch(op, name) => {
                    let here = base + bytes.len() as u32;
                    let offset = find(name)?.wrapping_sub(here + 4) as i32;
                    let op = match *op {
                        Op::B { .. } => Op::B { offset },
                        Op::BCond { cond, .. } => Op::BCond { cond, offset },
                        _ => Op::Bl { offset },
                    };
                    emit(&mut bytes, encode(&op)?);
                }
                Item::Literal(rt, name) | Item::Adr(rt, name) => {
                    let here = base + bytes.len() as u32;
                    let target = find(name)?;
                    let pc = (here + 4) & !3;
                    if target < pc || target % 4 != 0 || target - pc > 1020 {
                        return Err(AsmError::LiteralOutOfReach(here));
                    }
                    let imm = (target - pc) as u16;
                    let op = if matches!(item, Item::Literal(..)) {
                        Op::LdrLiteral { rt: *rt, imm }
                    } else {
                        Op::Adr { rd: *rt, imm }
                    };
                    emit(&mut bytes, encode(&op)?);
                }
            }
        }
        Ok(Program { base, bytes, labels })
    }
}
