//! The 16-bit decoder against an independent disassembler. Reference data
//! comes from tests/data/gen_decode.py.

mod common;

use std::collections::BTreeMap;

use common::data_dir;
use em0_core::isa::{decode_halfwords, AluOp, Instruction, Op};

const ADDR: u32 = 0x0800_0000;

fn ours(hw: u16) -> Option<Instruction> {
    decode_halfwords(hw, None, ADDR).ok()
}

fn mnemonic(i: &Instruction) -> String {
    i.to_string().split(' ').next().unwrap().to_string()
}

fn reg(r: u8) -> String {
    match r {
        9 => "sb".into(),
        10 => "sl".into(),
        11 => "fp".into(),
        12 => "ip".into(),
        13 => "sp".into(),
        14 => "lr".into(),
        15 => "pc".into(),
        r => format!("r{r}"),
    }
}

fn reglist(bits: u16) -> Vec<String> {
    (0..16).filter(|b| bits & (1 << b) != 0).map(reg).collect()
}

/// `mnemonic;registers;immediates` in the reference's normal form.
fn canonical(i: &Instruction) -> String {
    use Op::*;
    let (regs, imms): (Vec<String>, Vec<u32>) = match i.op {
        LslImm { rd, rm, shift: 0 } => (vec![reg(rd), reg(rm)], vec![]),
        LslImm { rd, rm, shift } => (vec![reg(rd), reg(rm)], vec![u32::from(shift)]),
        LsrImm { rd, rm, shift } | AsrImm { rd, rm, shift } => {
            let s = if shift == 0 { 32 } else { u32::from(shift) };
            (vec![reg(rd), reg(rm)], vec![s])
        }
        AddReg { rd, rn, rm } | SubReg { rd, rn, rm } => (vec![reg(rd), reg(rn), reg(rm)], vec![]),
        AddImm3 { rd, rn, imm } | SubImm3 { rd, rn, imm } => {
            (vec![reg(rd), reg(rn)], vec![u32::from(imm)])
        }
        MovImm { rd: r, imm } | CmpImm { rn: r, imm } | AddImm8 { rdn: r, imm } | SubImm8 { rdn: r, imm } => {
            (vec![reg(r)], vec![u32::from(imm)])
        }
        Alu { op: AluOp::Rsb, rdn, rm } => (vec![reg(rdn), reg(rm)], vec![0]),
        Alu { rdn, rm, .. } => (vec![reg(rdn), reg(rm)], vec![]),
        Muls { rdm, rn } => (vec![reg(rdm), reg(rn), reg(rdm)], vec![]),
        AddHigh { rdn, rm: 13 } if rdn != 13 => (vec![reg(rdn), reg(13), reg(rdn)], vec![]),
        AddHigh { rdn, rm } | CmpHigh { rn: rdn, rm } | MovHigh { rd: rdn, rm } => {
            (vec![reg(rdn), reg(rm)], vec![])
        }
        Bx { rm } | Blx { rm } => (vec![reg(rm)], vec![]),
        LdrLiteral { rt, imm } => (vec![reg(rt), "pc".into()], vec![u32::from(imm)]),
        MemReg { rt, rn, rm, .. } => (vec![reg(rt), reg(rn), reg(rm)], vec![0]),
        MemImm { rt, rn, imm, .. } => (vec![reg(rt), reg(rn)], vec![u32::from(imm)]),
        Adr { rd, imm } => (vec![reg(rd)], vec![u32::from(imm)]),
        AddRdSp { rd, imm } => (vec![reg(rd), "sp".into()], vec![u32::from(imm)]),
        AddSp { imm } | SubSp { imm } => (vec!["sp".into()], vec![u32::from(imm)]),
        Extend { rd, rm, .. } | Rev { rd, rm, .. } => (vec![reg(rd), reg(rm)], vec![]),
        Push { regs } | Pop { regs } => (reglist(regs), vec![]),
        Stm { rn, regs } | Ldm { rn, regs } => {
            let mut v = vec![reg(rn)];
            v.extend(reglist(u16::from(regs)));
            (v, vec![])
        }
        BCond { .. } | B { .. } | Bl { .. } => (vec![], vec![i.branch_target().unwrap()]),
        Bkpt { imm } | Svc { imm } => (vec![], vec![u32::from(imm)]),
        Hint { hint } if hint > 4 => (vec![], vec![u32::from(hint)]),
        Hint { .. } | Cps { .. } => (vec![], vec![]),
        Msr { .. } | Mrs { .. } | Barrier { .. } => unreachable!("32-bit"),
    };
    let imms: Vec<String> = imms.iter().map(u32::to_string).collect();
    format!("{};{};{}", mnemonic(i), regs.join(","), imms.join(","))
}

fn read(name: &str) -> String {
    std::fs::read_to_string(data_dir().join(name)).unwrap()
}

/// Mnemonics the reference accepts that ARMv6-M does not have, mapped to
/// what this decoder does with them.
fn expected_difference(hw: u16, reference: &str, ours: Option<&str>) -> bool {
    match reference {
        // BLX with should-be-zero bits set, accepted like BX.
        "-" if hw & 0xFF80 == 0x4780 => ours == Some("blx"),
        // Only the `i` form of CPS exists in ARMv6-M.
        "cpsie" | "cpsid" if hw & 7 != 2 => ours.is_none(),
        // ARMv7-M only.
        m if m.starts_with("it") || m == "cbz" || m == "cbnz" => ours.is_none(),
        // ARMv8-M security extension; bits 2..0 are should-be-zero for
        // BX/BLX and are ignored here.
        "bxns" => ours == Some("bx"),
        "blxns" => ours == Some("blx"),
        // Permanently undefined.
        "udf" | "trap" => ours.is_none(),
        _ => false,
    }
}

#[test]
fn every_halfword_has_the_reference_mnemonic() {
    let mut diffs: BTreeMap<(String, Option<String>), u32> = BTreeMap::new();
    let mut covered = 0u32;
    for line in read("decode_ranges.txt").lines() {
        let f: Vec<&str> = line.split(' ').collect();
        let (a, b) = (u16::from_str_radix(f[0], 16).unwrap(), u16::from_str_radix(f[1], 16).unwrap());
        for hw in a..=b {
            covered += 1;
            let got = ours(hw).map(|i| mnemonic(&i));
            let reference = f[2];
            let same = match (&got, reference) {
                (None, "-") => true,
                (Some(g), r) => g == r,
                _ => false,
            };
            if !same && !expected_difference(hw, reference, got.as_deref()) {
                *diffs.entry((reference.to_string(), got)).or_insert(0) += 1;
            }
        }
    }
    assert_eq!(covered, 0xE800);
    assert!(diffs.is_empty(), "{diffs:#?}");
}

#[test]
fn sampled_operands_match_the_reference() {
    let mut bad = Vec::new();
    let mut n = 0;
    for line in read("decode_sample.txt").lines() {
        let (hw, reference) = line.split_once(' ').unwrap();
        let hw = u16::from_str_radix(hw, 16).unwrap();
        let reference_mn = reference.split(';').next().unwrap();
        let Some(i) = ours(hw) else {
            assert!(expected_difference(hw, reference_mn, None), "{hw:04x}: {reference}");
            continue;
        };
        if expected_difference(hw, reference_mn, Some(&mnemonic(&i))) {
            continue;
        }
        n += 1;
        let got = canonical(&i);
        if got != reference {
            bad.push(format!("{hw:04x}: ours {got} reference {reference}"));
        }
    }
    assert!(n > 3000);
    assert!(bad.is_empty(), "{} mismatches:\n{}", bad.len(), bad[..bad.len().min(40)].join("\n"));
}
