//! ARMv6-M Thumb decoder.
//!
//! All 16-bit encodings of the architecture are supported, plus the 32-bit
//! BL, MSR, MRS, DSB, DMB and ISB. ARMv7-M additions that share the 16-bit
//! space (CBZ, CBNZ, IT) are undefined here, as are UDF and empty register
//! lists.

use thiserror::Error;

use super::instruction::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("undefined encoding {bits:#06x} at {address:#010x}")]
    UndefinedEncoding { address: u32, bits: u32 },
    #[error("truncated 32-bit instruction at {address:#010x}")]
    Truncated { address: u32 },
    #[error("misaligned instruction address {address:#010x}")]
    Misaligned { address: u32 },
}

/// True when `hw` is the first halfword of a 32-bit encoding.
pub fn is_wide_prefix(hw: u16) -> bool {
    matches!(hw >> 11, 0b11101 | 0b11110 | 0b11111)
}

/// Decodes one instruction from little-endian `bytes` located at `address`.
///
/// Two bytes suffice for 16-bit encodings; a 32-bit prefix needs four.
pub fn decode(bytes: &[u8], address: u32) -> Result<Instruction, DecodeError> {
    if address & 1 != 0 {
        return Err(DecodeError::Misaligned { address });
    }
    let hw = |i: usize| -> Option<u16> {
        Some(u16::from_le_bytes([*bytes.get(i)?, *bytes.get(i + 1)?]))
    };
    let first = hw(0).ok_or(DecodeError::Truncated { address })?;
    decode_halfwords(first, hw(2), address)
}

/// Decodes from halfwords. `second` is only consulted for 32-bit prefixes.
pub fn decode_halfwords(
    first: u16,
    second: Option<u16>,
    address: u32,
) -> Result<Instruction, DecodeError> {
    if is_wide_prefix(first) {
        let second = second.ok_or(DecodeError::Truncated { address })?;
        let raw = (u32::from(first) << 16) | u32::from(second);
        let op = decode32(first, second)
            .ok_or(DecodeError::UndefinedEncoding { address, bits: raw })?;
        return Ok(Instruction { address, width: 4, raw, op });
    }
    let op = decode16(first).ok_or(DecodeError::UndefinedEncoding {
        address,
        bits: u32::from(first),
    })?;
    Ok(Instruction { address, width: 2, raw: u32::from(first), op })
}

fn bits(v: u16, hi: u32, lo: u32) -> u16 {
    (v >> lo) & ((1 << (hi - lo + 1)) - 1)
}

fn r3(v: u16, lo: u32) -> u8 {
    bits(v, lo + 2, lo) as u8
}

fn sign_extend(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

fn decode16(hw: u16) -> Option<Op> {
    use Op::*;
    let op = match hw >> 12 {
        0b0000 | 0b0001 => {
            let rd = r3(hw, 0);
            let rm = r3(hw, 3);
            let shift = bits(hw, 10, 6) as u8;
            match bits(hw, 12, 11) {
                0b00 => LslImm { rd, rm, shift },
                0b01 => LsrImm { rd, rm, shift },
                0b10 => AsrImm { rd, rm, shift },
                _ => {
                    let rn = r3(hw, 3);
                    let third = r3(hw, 6);
                    match bits(hw, 10, 9) {
                        0b00 => AddReg { rd, rn, rm: third },
                        0b01 => SubReg { rd, rn, rm: third },
                        0b10 => AddImm3 { rd, rn, imm: third },
                        _ => SubImm3 { rd, rn, imm: third },
                    }
                }
            }
        }
        0b0010 | 0b0011 => {
            let reg = r3(hw, 8);
            let imm = (hw & 0xFF) as u8;
            match bits(hw, 12, 11) {
                0b00 => MovImm { rd: reg, imm },
                0b01 => CmpImm { rn: reg, imm },
                0b10 => AddImm8 { rdn: reg, imm },
                _ => SubImm8 { rdn: reg, imm },
            }
        }
        0b0100 => {
            if hw & 0x0800 != 0 {
                LdrLiteral { rt: r3(hw, 8), imm: (hw & 0xFF) * 4 }
            } else if hw & 0x0400 == 0 {
                let rdn = r3(hw, 0);
                let rm = r3(hw, 3);
                let alu = match bits(hw, 9, 6) {
                    0x0 => AluOp::And,
                    0x1 => AluOp::Eor,
                    0x2 => AluOp::Lsl,
                    0x3 => AluOp::Lsr,
                    0x4 => AluOp::Asr,
                    0x5 => AluOp::Adc,
                    0x6 => AluOp::Sbc,
                    0x7 => AluOp::Ror,
                    0x8 => AluOp::Tst,
                    0x9 => AluOp::Rsb,
                    0xA => AluOp::Cmp,
                    0xB => AluOp::Cmn,
                    0xC => AluOp::Orr,
                    0xD => return Some(Muls { rdm: rdn, rn: rm }),
                    0xE => AluOp::Bic,
                    _ => AluOp::Mvn,
                };
                Alu { op: alu, rdn, rm }
            } else {
                let rm = bits(hw, 6, 3) as u8;
                let rdn = ((bits(hw, 7, 7) << 3) | bits(hw, 2, 0)) as u8;
                match bits(hw, 9, 8) {
                    0b00 => AddHigh { rdn, rm },
                    0b01 => CmpHigh { rn: rdn, rm },
                    0b10 => MovHigh { rd: rdn, rm },
                    _ => {
                        if hw & 0x80 == 0 {
                            Bx { rm }
                        } else {
                            Blx { rm }
                        }
                    }
                }
            }
        }
        0b0101 => {
            let op = match bits(hw, 11, 9) {
                0 => MemOp::Str,
                1 => MemOp::Strh,
                2 => MemOp::Strb,
                3 => MemOp::Ldrsb,
                4 => MemOp::Ldr,
                5 => MemOp::Ldrh,
                6 => MemOp::Ldrb,
                _ => MemOp::Ldrsh,
            };
            MemReg { op, rt: r3(hw, 0), rn: r3(hw, 3), rm: r3(hw, 6) }
        }
        0b0110 | 0b0111 | 0b1000 => {
            let load = hw & 0x0800 != 0;
            let imm5 = bits(hw, 10, 6);
            let (op, imm) = match (hw >> 12, load) {
                (0b0110, false) => (MemOp::Str, imm5 * 4),
                (0b0110, true) => (MemOp::Ldr, imm5 * 4),
                (0b0111, false) => (MemOp::Strb, imm5),
                (0b0111, true) => (MemOp::Ldrb, imm5),
                (_, false) => (MemOp::Strh, imm5 * 2),
                (_, true) => (MemOp::Ldrh, imm5 * 2),
            };
            MemImm { op, rt: r3(hw, 0), rn: r3(hw, 3), imm }
        }
        0b1001 => {
            let op = if hw & 0x0800 != 0 { MemOp::Ldr } else { MemOp::Str };
            MemImm { op, rt: r3(hw, 8), rn: SP, imm: (hw & 0xFF) * 4 }
        }
        0b1010 => {
            let rd = r3(hw, 8);
            let imm = (hw & 0xFF) * 4;
            if hw & 0x0800 == 0 {
                Adr { rd, imm }
            } else {
                AddRdSp { rd, imm }
            }
        }
        0b1011 => return decode_misc(hw),
        0b1100 => {
            let rn = r3(hw, 8);
            let regs = (hw & 0xFF) as u8;
            if regs == 0 {
                return None;
            }
            if hw & 0x0800 == 0 {
                Stm { rn, regs }
            } else {
                Ldm { rn, regs }
            }
        }
        0b1101 => {
            let cond = bits(hw, 11, 8);
            let imm8 = u32::from(hw & 0xFF);
            match cond {
                0b1110 => return None,
                0b1111 => Svc { imm: imm8 as u8 },
                c => BCond {
                    cond: Condition::from_bits(c)?,
                    offset: sign_extend(imm8 << 1, 9),
                },
            }
        }
        0b1110 if hw & 0x0800 == 0 => {
            B { offset: sign_extend(u32::from(hw & 0x7FF) << 1, 12) }
        }
        _ => return None,
    };
    Some(op)
}

fn decode_misc(hw: u16) -> Option<Op> {
    use Op::*;
    let op = match bits(hw, 11, 8) {
        0b0000 => {
            let imm = (hw & 0x7F) * 4;
            if hw & 0x80 == 0 {
                AddSp { imm }
            } else {
                SubSp { imm }
            }
        }
        0b0010 => {
            let op = match bits(hw, 7, 6) {
                0 => ExtendOp::Sxth,
                1 => ExtendOp::Sxtb,
                2 => ExtendOp::Uxth,
                _ => ExtendOp::Uxtb,
            };
            Extend { op, rd: r3(hw, 0), rm: r3(hw, 3) }
        }
        0b0100 | 0b0101 => {
            let regs = (hw & 0xFF) | (bits(hw, 8, 8) << 14);
            if regs == 0 {
                return None;
            }
            Push { regs }
        }
        0b0110 => match hw & 0xFF {
            0x62 => Cps { disable: false },
            0x72 => Cps { disable: true },
            _ => return None,
        },
        0b1010 => {
            let op = match bits(hw, 7, 6) {
                0 => RevOp::Rev,
                1 => RevOp::Rev16,
                3 => RevOp::Revsh,
                _ => return None,
            };
            Rev { op, rd: r3(hw, 0), rm: r3(hw, 3) }
        }
        0b1100 | 0b1101 => {
            let regs = (hw & 0xFF) | (bits(hw, 8, 8) << 15);
            if regs == 0 {
                return None;
            }
            Pop { regs }
        }
        0b1110 => Bkpt { imm: (hw & 0xFF) as u8 },
        0b1111 => {
            // A nonzero low nibble is IT, which ARMv6-M lacks.
            if hw & 0xF != 0 {
                return None;
            }
            Hint { hint: bits(hw, 7, 4) as u8 }
        }
        _ => return None,
    };
    Some(op)
}

fn decode32(hw1: u16, hw2: u16) -> Option<Op> {
    use Op::*;
    if hw1 >> 11 == 0b11110 && hw2 & 0xD000 == 0xD000 {
        let s = u32::from(bits(hw1, 10, 10));
        let imm10 = u32::from(bits(hw1, 9, 0));
        let j1 = u32::from(bits(hw2, 13, 13));
        let j2 = u32::from(bits(hw2, 11, 11));
        let imm11 = u32::from(bits(hw2, 10, 0));
        let i1 = !(j1 ^ s) & 1;
        let i2 = !(j2 ^ s) & 1;
        let imm = (s << 24) | (i1 << 23) | (i2 << 22) | (imm10 << 12) | (imm11 << 1);
        return Some(Bl { offset: sign_extend(imm, 25) });
    }
    if hw2 & 0xD000 != 0x8000 {
        return None;
    }
    match hw1 & 0xFFF0 {
        0xF380 if hw2 & 0xFF00 == 0x8800 => Some(Msr {
            rn: (hw1 & 0xF) as u8,
            sysm: (hw2 & 0xFF) as u8,
        }),
        0xF3E0 if hw1 == 0xF3EF && hw2 & 0xF000 == 0x8000 => Some(Mrs {
            rd: bits(hw2, 11, 8) as u8,
            sysm: (hw2 & 0xFF) as u8,
        }),
        0xF3B0 if hw1 == 0xF3BF && hw2 & 0xFF00 == 0x8F00 => {
            let kind = match bits(hw2, 7, 4) {
                0x4 => BarrierKind::Dsb,
                0x5 => BarrierKind::Dmb,
                0x6 => BarrierKind::Isb,
                _ => return None,
            };
            Some(Op::Barrier { kind, option: (hw2 & 0xF) as u8 })
        }
        _ => None,
    }
}
