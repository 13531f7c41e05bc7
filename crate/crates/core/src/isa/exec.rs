use serde::Serialize;
use thiserror::Error;

use super::instruction::*;
use crate::memory::{Bus, Direction, MemoryError, Purpose, Region};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub n: bool,
    pub z: bool,
    pub c: bool,
    pub v: bool,
}

/// Architectural state of the core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MachineState {
    /// r0-r12, sp, lr, pc. Between steps `regs[15]` holds the address of the
    /// next instruction to execute.
    pub regs: [u32; 16],
    pub flags: Flags,
    /// PRIMASK bit 0; set by `cpsid i`.
    pub primask: bool,
    /// CONTROL bits 1..0. Stored only: the simulator always runs privileged
    /// on the main stack.
    pub control: u32,
    /// Process stack pointer, reachable through MRS/MSR only.
    pub psp: u32,
    pub halted: bool,
    pub instr_retired: u64,
}

impl Default for MachineState {
    fn default() -> Self {
        MachineState {
            regs: [0; 16],
            flags: Flags::default(),
            primask: false,
            control: 0,
            psp: 0,
            halted: false,
            instr_retired: 0,
        }
    }
}

impl MachineState {
    pub fn pc(&self) -> u32 {
        self.regs[usize::from(PC)]
    }

    pub fn sp(&self) -> u32 {
        self.regs[usize::from(SP)]
    }

    /// APSR image with N, Z, C, V in bits 31..28.
    pub fn apsr(&self) -> u32 {
        (u32::from(self.flags.n) << 31)
            | (u32::from(self.flags.z) << 30)
            | (u32::from(self.flags.c) << 29)
            | (u32::from(self.flags.v) << 28)
    }

    /// Special register read by MRS. IPSR reads 0 (thread mode) and EPSR
    /// reads as zero, so the xPSR views reduce to the APSR flags.
    pub fn special_register(&self, sysm: u8) -> u32 {
        match sysm {
            0..=7 if sysm & 4 == 0 => self.apsr(),
            8 => self.sp(),
            9 => self.psp,
            16 => u32::from(self.primask),
            20 => self.control,
            _ => 0,
        }
    }

    /// Special register write by MSR. Only the APSR flag bits are writable
    /// among the xPSR views.
    pub fn set_special_register(&mut self, sysm: u8, value: u32) {
        match sysm {
            0..=7 if sysm & 4 == 0 => {
                self.flags = Flags {
                    n: value & (1 << 31) != 0,
                    z: value & (1 << 30) != 0,
                    c: value & (1 << 29) != 0,
                    v: value & (1 << 28) != 0,
                }
            }
            8 => self.regs[usize::from(SP)] = value & !3,
            9 => self.psp = value & !3,
            16 => self.primask = value & 1 != 0,
            20 => self.control = value & 3,
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DataAccess {
    pub address: u32,
    pub size: u8,
    pub direction: Direction,
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FetchAccess {
    pub address: u32,
    pub size: u8,
    pub region: Region,
}

/// Everything observable about one executed instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepEvents {
    pub instruction: Instruction,
    /// The instruction redirected the program counter.
    pub branch_taken: bool,
    /// Data accesses in bus order.
    pub data_accesses: Vec<DataAccess>,
    /// Instruction fetches, one per halfword.
    pub fetch_accesses: Vec<FetchAccess>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

struct Exec<'a, B: Bus> {
    state: &'a mut MachineState,
    bus: &'a mut B,
    accesses: Vec<DataAccess>,
    address: u32,
}

fn add_with_carry(x: u32, y: u32, carry_in: bool) -> (u32, bool, bool) {
    let unsigned = u64::from(x) + u64::from(y) + u64::from(carry_in);
    let signed = i64::from(x as i32) + i64::from(y as i32) + i64::from(carry_in);
    let result = unsigned as u32;
    let carry = unsigned >> 32 != 0;
    let overflow = i64::from(result as i32) != signed;
    (result, carry, overflow)
}

impl<B: Bus> Exec<'_, B> {
    /// Register read with the architectural pc offset.
    fn reg(&self, r: u8) -> u32 {
        if r == PC {
            self.address.wrapping_add(4)
        } else {
            self.state.regs[usize::from(r)]
        }
    }

    fn set(&mut self, r: u8, value: u32) {
        self.state.regs[usize::from(r)] = value;
    }

    fn set_nz(&mut self, result: u32) {
        self.state.flags.n = result & 0x8000_0000 != 0;
        self.state.flags.z = result == 0;
    }

    fn set_nzcv(&mut self, result: u32, c: bool, v: bool) {
        self.set_nz(result);
        self.state.flags.c = c;
        self.state.flags.v = v;
    }

    fn load(&mut self, address: u32, size: u8) -> Result<u32, MemoryError> {
        let (value, class) = self.bus.read(address, size, Purpose::Data)?;
        self.accesses.push(DataAccess {
            address,
            size,
            direction: Direction::Read,
            region: class.region,
        });
        Ok(value)
    }

    fn store(&mut self, address: u32, size: u8, value: u32) -> Result<(), MemoryError> {
        let class = self.bus.write(address, size, value)?;
        self.accesses.push(DataAccess {
            address,
            size,
            direction: Direction::Write,
            region: class.region,
        });
        Ok(())
    }

    fn shift_flags(&mut self, result: u32, carry: bool) {
        self.set_nz(result);
        self.state.flags.c = carry;
    }

    fn alu(&mut self, op: AluOp, rdn: u8, rm: u8) {
        let a = self.reg(rdn);
        let b = self.reg(rm);
        let c = self.state.flags.c;
        match op {
            AluOp::And => {
                let r = a & b;
                self.set(rdn, r);
                self.set_nz(r);
            }
            AluOp::Eor => {
                let r = a ^ b;
                self.set(rdn, r);
                self.set_nz(r);
            }
            AluOp::Orr => {
                let r = a | b;
                self.set(rdn, r);
                self.set_nz(r);
            }
            AluOp::Bic => {
                let r = a & !b;
                self.set(rdn, r);
                self.set_nz(r);
            }
            AluOp::Mvn => {
                let r = !b;
                self.set(rdn, r);
                self.set_nz(r);
            }
            AluOp::Tst => self.set_nz(a & b),
            AluOp::Lsl | AluOp::Lsr | AluOp::Asr | AluOp::Ror => {
                let amount = b & 0xFF;
                let (r, carry) = shift_by_register(op, a, amount, c);
                self.set(rdn, r);
                self.shift_flags(r, carry);
            }
            AluOp::Adc => {
                let (r, c, v) = add_with_carry(a, b, c);
                self.set(rdn, r);
                self.set_nzcv(r, c, v);
            }
            AluOp::Sbc => {
                let (r, c, v) = add_with_carry(a, !b, c);
                self.set(rdn, r);
                self.set_nzcv(r, c, v);
            }
            AluOp::Rsb => {
                let (r, c, v) = add_with_carry(!b, 0, true);
                self.set(rdn, r);
                self.set_nzcv(r, c, v);
            }
            AluOp::Cmp => {
                let (r, c, v) = add_with_carry(a, !b, true);
                self.set_nzcv(r, c, v);
            }
            AluOp::Cmn => {
                let (r, c, v) = add_with_carry(a, b, false);
                self.set_nzcv(r, c, v);
            }
        }
    }

    fn condition_passed(&self, cond: Condition) -> bool {
        let f = self.state.flags;
        match cond {
            Condition::Eq => f.z,
            Condition::Ne => !f.z,
            Condition::Cs => f.c,
            Condition::Cc => !f.c,
            Condition::Mi => f.n,
            Condition::Pl => !f.n,
            Condition::Vs => f.v,
            Condition::Vc => !f.v,
            Condition::Hi => f.c && !f.z,
            Condition::Ls => !f.c || f.z,
            Condition::Ge => f.n == f.v,
            Condition::Lt => f.n != f.v,
            Condition::Gt => !f.z && f.n == f.v,
            Condition::Le => f.z || f.n != f.v,
        }
    }

    /// Executes `op`; returns the branch target if the pc was redirected.
    fn run(&mut self, instr: &Instruction) -> Result<Option<u32>, MemoryError> {
        use Op::*;
        let literal_base = self.address.wrapping_add(4) & !3;
        match instr.op {
            LslImm { rd, rm, shift } => {
                let v = self.reg(rm);
                if shift == 0 {
                    self.set(rd, v);
                    self.set_nz(v);
                } else {
                    let r = v << shift;
                    self.set(rd, r);
                    self.shift_flags(r, (v >> (32 - u32::from(shift))) & 1 != 0);
                }
            }
            LsrImm { rd, rm, shift } => {
                let v = self.reg(rm);
                let n = if shift == 0 { 32 } else { u32::from(shift) };
                let (r, carry) = shift_by_register(AluOp::Lsr, v, n, self.state.flags.c);
                self.set(rd, r);
                self.shift_flags(r, carry);
            }
            AsrImm { rd, rm, shift } => {
                let v = self.reg(rm);
                let n = if shift == 0 { 32 } else { u32::from(shift) };
                let (r, carry) = shift_by_register(AluOp::Asr, v, n, self.state.flags.c);
                self.set(rd, r);
                self.shift_flags(r, carry);
            }
            AddReg { rd, rn, rm } => {
                let (r, c, v) = add_with_carry(self.reg(rn), self.reg(rm), false);
                self.set(rd, r);
                self.set_nzcv(r, c, v);
            }
            SubReg { rd, rn, rm } => {
                let (r, c, v) = add_with_carry(self.reg(rn), !self.reg(rm), true);
                self.set(rd, r);
                self.set_nzcv(r, c, v);
            }
            AddImm3 { rd, rn, imm } => {
                let (r, c, v) = add_with_carry(self.reg(rn), u32::from(imm), false);
                self.set(rd, r);
                self.set_nzcv(r, c, v);
            }
            SubImm3 { rd, rn, imm } => {
                let (r, c, v) = add_with_carry(self.reg(rn), !u32::from(imm), true);
                self.set(rd, r);
                self.set_nzcv(r, c, v);
            }
            MovImm { rd, imm } => {
                self.set(rd, u32::from(imm));
                self.set_nz(u32::from(imm));
            }
            CmpImm { rn, imm } => {
                let (r, c, v) = add_with_carry(self.reg(rn), !u32::from(imm), true);
                self.set_nzcv(r, c, v);
            }
            AddImm8 { rdn, imm } => {
                let (r, c, v) = add_with_carry(self.reg(rdn), u32::from(imm), false);
                self.set(rdn, r);
                self.set_nzcv(r, c, v);
            }
            SubImm8 { rdn, imm } => {
                let (r, c, v) = add_with_carry(self.reg(rdn), !u32::from(imm), true);
                self.set(rdn, r);
                self.set_nzcv(r, c, v);
            }
            Alu { op, rdn, rm } => self.alu(op, rdn, rm),
            Muls { rdm, rn } => {
                let r = self.reg(rdm).wrapping_mul(self.reg(rn));
                self.set(rdm, r);
                self.set_nz(r);
            }
            AddHigh { rdn, rm } => {
                let r = self.reg(rdn).wrapping_add(self.reg(rm));
                if rdn == PC {
                    return Ok(Some(r & !1));
                }
                self.set(rdn, r);
            }
            CmpHigh { rn, rm } => {
                let (r, c, v) = add_with_carry(self.reg(rn), !self.reg(rm), true);
                self.set_nzcv(r, c, v);
            }
            MovHigh { rd, rm } => {
                let v = self.reg(rm);
                if rd == PC {
                    return Ok(Some(v & !1));
                }
                self.set(rd, v);
            }
            Bx { rm } => return Ok(Some(self.reg(rm) & !1)),
            Blx { rm } => {
                let target = self.reg(rm) & !1;
                self.set(LR, instr.next_address() | 1);
                return Ok(Some(target));
            }
            LdrLiteral { rt, imm } => {
                let v = self.load(literal_base.wrapping_add(u32::from(imm)), 4)?;
                self.set(rt, v);
            }
            MemReg { op, rt, rn, rm } => {
                let address = self.reg(rn).wrapping_add(self.reg(rm));
                self.transfer(op, rt, address)?;
            }
            MemImm { op, rt, rn, imm } => {
                let address = self.reg(rn).wrapping_add(u32::from(imm));
                self.transfer(op, rt, address)?;
            }
            Adr { rd, imm } => self.set(rd, literal_base.wrapping_add(u32::from(imm))),
            AddRdSp { rd, imm } => self.set(rd, self.reg(SP).wrapping_add(u32::from(imm))),
            AddSp { imm } => self.set(SP, self.reg(SP).wrapping_add(u32::from(imm))),
            SubSp { imm } => self.set(SP, self.reg(SP).wrapping_sub(u32::from(imm))),
            Extend { op, rd, rm } => {
                let v = self.reg(rm);
                let r = match op {
                    ExtendOp::Sxth => v as u16 as i16 as i32 as u32,
                    ExtendOp::Sxtb => v as u8 as i8 as i32 as u32,
                    ExtendOp::Uxth => v & 0xFFFF,
                    ExtendOp::Uxtb => v & 0xFF,
                };
                self.set(rd, r);
            }
            Rev { op, rd, rm } => {
                let v = self.reg(rm);
                let r = match op {
                    RevOp::Rev => v.swap_bytes(),
                    RevOp::Rev16 => ((v & 0x00FF_00FF) << 8) | ((v >> 8) & 0x00FF_00FF),
                    RevOp::Revsh => (v as u16).swap_bytes() as i16 as i32 as u32,
                };
                self.set(rd, r);
            }
            Push { regs } => {
                let count = regs.count_ones();
                let base = self.reg(SP).wrapping_sub(4 * count);
                let mut address = base;
                for r in (0..16u8).filter(|r| regs & (1 << r) != 0) {
                    self.store(address, 4, self.reg(r))?;
                    address = address.wrapping_add(4);
                }
                self.set(SP, base);
            }
            Pop { regs } => {
                let mut address = self.reg(SP);
                let mut values = [0u32; 16];
                for r in (0..16u8).filter(|r| regs & (1 << r) != 0) {
                    values[usize::from(r)] = self.load(address, 4)?;
                    address = address.wrapping_add(4);
                }
                for r in (0..8u8).filter(|r| regs & (1 << r) != 0) {
                    self.set(r, values[usize::from(r)]);
                }
                self.set(SP, address);
                if regs & (1 << PC) != 0 {
                    return Ok(Some(values[usize::from(PC)] & !1));
                }
            }
            Stm { rn, regs } => {
                let mut address = self.reg(rn);
                for r in (0..8u8).filter(|r| regs & (1 << r) != 0) {
                    self.store(address, 4, self.reg(r))?;
                    address = address.wrapping_add(4);
                }
                self.set(rn, address);
            }
            Ldm { rn, regs } => {
                let mut address = self.reg(rn);
                let mut values = [0u32; 8];
                for r in (0..8u8).filter(|r| regs & (1 << r) != 0) {
                    values[usize::from(r)] = self.load(address, 4)?;
                    address = address.wrapping_add(4);
                }
                if regs & (1 << rn) == 0 {
                    self.set(rn, address);
                }
                for r in (0..8u8).filter(|r| regs & (1 << r) != 0) {
                    self.set(r, values[usize::from(r)]);
                }
            }
            BCond { cond, .. } => {
                if self.condition_passed(cond) {
                    return Ok(instr.branch_target());
                }
            }
            B { .. } => return Ok(instr.branch_target()),
            Bl { .. } => {
                self.set(LR, instr.next_address() | 1);
                return Ok(instr.branch_target());
            }
            Bkpt { .. } => self.state.halted = true,
            Cps { disable } => self.state.primask = disable,
            Mrs { rd, sysm } => {
                let v = self.state.special_register(sysm);
                self.set(rd, v);
            }
            Msr { rn, sysm } => {
                let v = self.reg(rn);
                self.state.set_special_register(sysm, v);
            }
            // No exception model: SVC, hints and barriers only retire.
            Svc { .. } | Hint { .. } | Barrier { .. } => {}
        }
        Ok(None)
    }

    fn transfer(&mut self, op: MemOp, rt: u8, address: u32) -> Result<(), MemoryError> {
        let size = op.size();
        if op.is_load() {
            let raw = self.load(address, size)?;
            let value = match op {
                MemOp::Ldrsb => raw as u8 as i8 as i32 as u32,
                MemOp::Ldrsh => raw as u16 as i16 as i32 as u32,
                _ => raw,
            };
            self.set(rt, value);
        } else {
            let value = self.reg(rt);
            let mask = if size == 4 { u32::MAX } else { (1u32 << (8 * size)) - 1 };
            self.store(address, size, value & mask)?;
        }
        Ok(())
    }
}

/// Shift by a register amount (or a decoded immediate amount of 1..=32).
fn shift_by_register(op: AluOp, value: u32, amount: u32, carry_in: bool) -> (u32, bool) {
    if amount == 0 {
        return (value, carry_in);
    }
    let bit = |n: u32| (value >> n) & 1 != 0;
    match op {
        AluOp::Lsl => match amount {
            1..=31 => (value << amount, bit(32 - amount)),
            32 => (0, bit(0)),
            _ => (0, false),
        },
        AluOp::Lsr => match amount {
            1..=31 => (value >> amount, bit(amount - 1)),
            32 => (0, bit(31)),
            _ => (0, false),
        },
        AluOp::Asr => match amount {
            1..=31 => (((value as i32) >> amount) as u32, bit(amount - 1)),
            _ => (((value as i32) >> 31) as u32, bit(31)),
        },
        AluOp::Ror => {
            let r = value.rotate_right(amount % 32);
            (r, r & 0x8000_0000 != 0)
        }
        _ => unreachable!("not a shift"),
    }
}

/// Executes `instr` against `state` and `bus`.
///
/// `state.regs[15]` must equal `instr.address`. On success the pc points at
/// the next instruction and `instr_retired` is incremented. On a memory
/// fault the pc and retirement count are left unchanged. The returned
/// events have no fetch accesses; the caller performs the fetch.
pub fn execute<B: Bus>(
    state: &mut MachineState,
    instr: &Instruction,
    bus: &mut B,
) -> Result<StepEvents, ExecError> {
    let mut exec = Exec { state, bus, accesses: Vec::new(), address: instr.address };
    let target = exec.run(instr)?;
    let accesses = exec.accesses;
    state.regs[usize::from(PC)] = target.unwrap_or_else(|| instr.next_address());
    state.instr_retired += 1;
    Ok(StepEvents {
        instruction: *instr,
        branch_taken: target.is_some(),
        data_accesses: accesses,
        fetch_accesses: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::decode::decode_halfwords;
    use crate::memory::{MemoryLayout, MemoryMap};

    fn setup() -> (MachineState, MemoryMap) {
        let mut s = MachineState::default();
        s.regs[13] = 0x2000_2000;
        (s, MemoryMap::new(MemoryLayout::default()).unwrap())
    }

    fn exec(s: &mut MachineState, m: &mut MemoryMap, hw: u16) -> StepEvents {
        let i = decode_halfwords(hw, None, s.pc()).unwrap();
        execute(s, &i, m).unwrap()
    }

    #[test]
    fn movs_immediate() {
        let (mut s, mut m) = setup();
        s.regs[15] = 0x0800_0000;
        let ev = exec(&mut s, &mut m, 0x2005);
        assert_eq!(s.regs[0], 5);
        assert!(!s.flags.z && !s.flags.n);
        assert!(!ev.branch_taken);
        assert!(ev.data_accesses.is_empty());
        assert_eq!(s.pc(), 0x0800_0002);
        assert_eq!(s.instr_retired, 1);
    }

    #[test]
    fn beq_taken_offset_from_pc_plus_4() {
        let (mut s, mut m) = setup();
        s.regs[15] = 0x0800_0000;
        s.flags.z = true;
        // beq +4: imm8 = 2
        let ev = exec(&mut s, &mut m, 0xD002);
        assert!(ev.branch_taken);
        assert_eq!(s.pc(), 0x0800_0000 + 4 + 4);
        s.regs[15] = 0x0800_0000;
        s.flags.z = false;
        let ev = exec(&mut s, &mut m, 0xD002);
        assert!(!ev.branch_taken);
        assert_eq!(s.pc(), 0x0800_0002);
    }

    #[test]
    fn ldr_sp_relative() {
        let (mut s, mut m) = setup();
        s.regs[15] = 0x0800_0000;
        s.regs[13] = 0x2000_0100;
        m.write(0x2000_0104, 4, 0x1234).unwrap();
        // ldr r1, [sp, #4]
        let ev = exec(&mut s, &mut m, 0x9901);
        assert_eq!(s.regs[1], 0x1234);
        assert_eq!(
            ev.data_accesses,
            vec![DataAccess {
                address: 0x2000_0104,
                size: 4,
                direction: Direction::Read,
                region: Region::Ram
            }]
        );
    }

    #[test]
    fn muls_keeps_carry_and_overflow() {
        let (mut s, mut m) = setup();
        s.flags.c = true;
        s.flags.v = true;
        s.regs[0] = 0x8000_0000;
        s.regs[1] = 1;
        exec(&mut s, &mut m, 0x4348);
        assert_eq!(s.regs[0], 0x8000_0000);
        assert!(s.flags.n && !s.flags.z && s.flags.c && s.flags.v);
    }

    #[test]
    fn push_pop_pc() {
        let (mut s, mut m) = setup();
        s.regs[15] = 0x0800_0000;
        s.regs[4] = 44;
        s.regs[14] = 0x0800_0101;
        // push {r4, lr}
        let ev = exec(&mut s, &mut m, 0xB510);
        assert_eq!(ev.data_accesses.len(), 2);
        assert_eq!(ev.data_accesses[0].address, 0x2000_1FF8);
        assert_eq!(s.sp(), 0x2000_1FF8);
        s.regs[4] = 0;
        // pop {r4, pc}
        let ev = exec(&mut s, &mut m, 0xBD10);
        assert!(ev.branch_taken);
        assert_eq!(s.regs[4], 44);
        assert_eq!(s.pc(), 0x0800_0100);
        assert_eq!(s.sp(), 0x2000_2000);
    }

    #[test]
    fn subtract_sets_carry_as_not_borrow() {
        let (mut s, mut m) = setup();
        s.regs[0] = 1;
        exec(&mut s, &mut m, 0x3801); // subs r0, #1
        assert!(s.flags.z && s.flags.c);
        exec(&mut s, &mut m, 0x3801);
        assert_eq!(s.regs[0], u32::MAX);
        assert!(s.flags.n && !s.flags.c);
    }

    #[test]
    fn shifts_by_register() {
        assert_eq!(shift_by_register(AluOp::Lsl, 1, 32, false), (0, true));
        assert_eq!(shift_by_register(AluOp::Lsl, 1, 33, true), (0, false));
        assert_eq!(shift_by_register(AluOp::Lsr, 0x8000_0000, 32, false), (0, true));
        assert_eq!(shift_by_register(AluOp::Asr, 0x8000_0000, 40, false), (u32::MAX, true));
        assert_eq!(shift_by_register(AluOp::Ror, 1, 1, false), (0x8000_0000, true));
        assert_eq!(shift_by_register(AluOp::Ror, 0x8000_0000, 32, false), (0x8000_0000, true));
        assert_eq!(shift_by_register(AluOp::Lsr, 5, 0, true), (5, true));
    }

    #[test]
    fn unaligned_word_load_faults_without_retiring() {
        let (mut s, mut m) = setup();
        s.regs[15] = 0x0800_0000;
        s.regs[1] = 0x2000_0002;
        let i = decode_halfwords(0x6808, None, s.pc()).unwrap(); // ldr r0, [r1, #0]
        let err = execute(&mut s, &i, &mut m).unwrap_err();
        assert_eq!(
            err,
            ExecError::Memory(MemoryError::Unaligned { address: 0x2000_0002, size: 4 })
        );
        assert_eq!(s.instr_retired, 0);
        assert_eq!(s.pc(), 0x0800_0000);
    }

    #[test]
    fn add_pc_is_a_branch() {
        let (mut s, mut m) = setup();
        s.regs[15] = 0x0800_0010;
        s.regs[0] = 8;
        let ev = exec(&mut s, &mut m, 0x4487); // add pc, r0
        assert!(ev.branch_taken);
        assert_eq!(s.pc(), 0x0800_0010 + 4 + 8);
    }

    #[test]
    fn ldm_writeback_rule() {
        let (mut s, mut m) = setup();
        m.write(0x2000_0000, 4, 11).unwrap();
        m.write(0x2000_0004, 4, 22).unwrap();
        s.regs[1] = 0x2000_0000;
        exec(&mut s, &mut m, 0xC903); // ldm r1, {r0, r1}
        assert_eq!((s.regs[0], s.regs[1]), (11, 22));
        s.regs[2] = 0x2000_0000;
        exec(&mut s, &mut m, 0xCA01); // ldm r2!, {r0}
        assert_eq!((s.regs[0], s.regs[2]), (11, 0x2000_0004));
    }
}
