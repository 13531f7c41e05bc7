#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use em0_core::loader::Image;
use em0_core::memory::MemoryLayout;
use em0_core::sim::Simulator;
use em0_core::timing::HardwareConfig;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct Golden {
    pub elf: String,
    #[serde(rename = "static")]
    pub is_static: bool,
    pub instr_retired: u64,
    pub counters: BTreeMap<String, u64>,
    pub cycles: BTreeMap<String, u64>,
    pub regs: Vec<u32>,
    pub flags: BTreeMap<String, bool>,
}

impl Golden {
    pub fn counter_array(&self) -> [u64; 6] {
        ["c1", "c2", "c3", "c4", "c5", "c6"].map(|k| self.counters[k])
    }
}

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

pub fn corpus() -> BTreeMap<String, Golden> {
    let text = std::fs::read_to_string(data_dir().join("golden.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn elf_bytes(g: &Golden) -> Vec<u8> {
    std::fs::read(data_dir().join(&g.elf)).unwrap()
}

pub fn simulator(elf: &[u8], config: HardwareConfig) -> Simulator {
    Simulator::with_image(MemoryLayout::default(), Image::Elf(elf), config).unwrap().0
}

pub mod gen {
    //! Seeded generator of small terminating programs with direct control
    //! flow: straight-line code, counted loops, forward conditional skips,
    //! calls, and RAM, flash and stack traffic.

    use em0_core::asm::Assembler;
    use em0_core::isa::{AluOp, Condition, ExtendOp, MemOp, Op};
    use em0_core::memory::{MemoryLayout, MemoryMap};
    use em0_core::sim::Simulator;
    use em0_core::timing::HardwareConfig;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub const BASE: u32 = 0x0800_0000;
    pub const SP: u32 = 0x2000_2000;

    const ALU: [AluOp; 15] = [
        AluOp::And, AluOp::Eor, AluOp::Lsl, AluOp::Lsr, AluOp::Asr, AluOp::Adc, AluOp::Sbc,
        AluOp::Ror, AluOp::Tst, AluOp::Rsb, AluOp::Cmp, AluOp::Cmn, AluOp::Orr, AluOp::Bic,
        AluOp::Mvn,
    ];
    const CONDS: [Condition; 14] = [
        Condition::Eq, Condition::Ne, Condition::Cs, Condition::Cc, Condition::Mi, Condition::Pl,
        Condition::Vs, Condition::Vc, Condition::Hi, Condition::Ls, Condition::Ge, Condition::Lt,
        Condition::Gt, Condition::Le,
    ];

    fn lo(rng: &mut ChaCha8Rng) -> u8 {
        rng.gen_range(0..4)
    }

    /// Register-only operation on r0-r3.
    fn alu_op(rng: &mut ChaCha8Rng) -> Op {
        match rng.gen_range(0..8) {
            0 => Op::MovImm { rd: lo(rng), imm: rng.gen() },
            1 => Op::AddImm8 { rdn: lo(rng), imm: rng.gen() },
            2 => Op::SubImm3 { rd: lo(rng), rn: lo(rng), imm: rng.gen_range(0..8) },
            3 => Op::AddReg { rd: lo(rng), rn: lo(rng), rm: lo(rng) },
            4 => Op::Muls { rdm: lo(rng), rn: lo(rng) },
            5 => Op::LslImm { rd: lo(rng), rm: lo(rng), shift: rng.gen_range(0..32) },
            6 => Op::Extend { op: ExtendOp::Sxtb, rd: lo(rng), rm: lo(rng) },
            _ => Op::Alu { op: *ALU.choose(rng).unwrap(), rdn: lo(rng), rm: lo(rng) },
        }
    }

    /// Load or store through r4 (RAM scratch), r5 (flash table) or sp.
    fn mem_op(rng: &mut ChaCha8Rng) -> Op {
        let rt = lo(rng);
        match rng.gen_range(0..6) {
            0 => Op::MemImm { op: MemOp::Str, rt, rn: 4, imm: 4 * rng.gen_range(0..8) },
            1 => Op::MemImm { op: MemOp::Strb, rt, rn: 4, imm: rng.gen_range(0..32) },
            2 => Op::MemImm { op: MemOp::Ldrh, rt, rn: 4, imm: 2 * rng.gen_range(0..16) },
            3 => Op::MemImm { op: MemOp::Ldr, rt, rn: 5, imm: 4 * rng.gen_range(0..8) },
            4 => Op::MemImm { op: MemOp::Ldrb, rt, rn: 5, imm: rng.gen_range(0..32) },
            _ => Op::MemImm { op: MemOp::Ldr, rt, rn: 13, imm: 4 * rng.gen_range(0..4) },
        }
    }

    fn body(a: &mut Assembler, rng: &mut ChaCha8Rng, len: usize) {
        for _ in 0..len {
            let op = if rng.gen_bool(0.3) { mem_op(rng) } else { alu_op(rng) };
            a.op(op);
        }
    }

    fn pointers(a: &mut Assembler) {
        a.ldr_literal(4, "ram").adr(5, "table");
    }

    /// Assembles a program at [`BASE`]; execution starts at [`BASE`] with
    /// sp = [`SP`] and ends at a BKPT.
    pub fn program(seed: u64) -> Vec<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let mut a = Assembler::new();
        let n_funcs = rng.gen_range(0..3);
        pointers(&mut a);
        // Room for sp-relative loads.
        a.op(Op::SubSp { imm: 16 });
        for seg in 0..rng.gen_range(2..8) {
            match rng.gen_range(0..5) {
                0 => {
                    let len = rng.gen_range(1..10);
                    body(&mut a, rng, len);
                }
                1 => {
                    let l = format!("loop{seg}");
                    let (trips, len) = (rng.gen_range(1..6), rng.gen_range(1..6));
                    a.movs(6, trips).label(&l);
                    body(&mut a, rng, len);
                    a.subs_imm(6, 1).bcond(Condition::Ne, &l);
                }
                2 => {
                    let l = format!("skip{seg}");
                    a.op(Op::CmpImm { rn: lo(rng), imm: rng.gen() });
                    a.bcond(*CONDS.choose(rng).unwrap(), &l);
                    let len = rng.gen_range(1..5);
                    body(&mut a, rng, len);
                    a.label(&l);
                }
                3 if n_funcs > 0 => {
                    a.bl(&format!("f{}", rng.gen_range(0..n_funcs)));
                    pointers(&mut a);
                }
                _ => {
                    let regs = rng.gen_range(1..16u16);
                    let len = rng.gen_range(0..4);
                    a.op(Op::Push { regs });
                    body(&mut a, rng, len);
                    a.op(Op::Pop { regs });
                }
            }
        }
        a.op(Op::AddSp { imm: 16 }).bkpt();
        a.align4().label("ram").word(0x2000_0100).label("table");
        for _ in 0..8 {
            a.word(rng.gen());
        }
        for f in 0..n_funcs {
            a.label(&format!("f{f}"));
            if rng.gen_bool(0.5) {
                a.op(Op::Push { regs: 0x4000 | 0x30 });
                for _ in 0..rng.gen_range(1..6) {
                    a.op(alu_op(rng));
                }
                a.op(Op::Pop { regs: 0x8000 | 0x30 });
            } else {
                for _ in 0..rng.gen_range(1..6) {
                    a.op(alu_op(rng));
                }
                a.op(Op::Bx { rm: 14 });
            }
        }
        a.assemble(BASE).unwrap().bytes
    }

    pub fn simulator(bytes: &[u8], config: HardwareConfig) -> Simulator {
        let mut mem = MemoryMap::new(MemoryLayout::default()).unwrap();
        mem.load_bytes(BASE, bytes).unwrap();
        let mut sim = Simulator::new(mem, config);
        sim.reset_to(BASE, SP);
        sim
    }
}
