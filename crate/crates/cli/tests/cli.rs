//! End-to-end tests of the `em0` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use em0_core::asm::Assembler;
use em0_core::isa::{Condition, Op};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn em0(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_em0")).args(args).output().unwrap()
}

fn em0_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_em0"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn corpus(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/elf").join(format!("{name}.elf"));
    p.to_str().unwrap().to_string()
}

/// Writes a raw image assembled at the flash base; it starts at the base.
fn raw_image(dir: &Path, name: &str, a: &Assembler) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, a.assemble(0x0800_0000).unwrap().bytes).unwrap();
    p
}

fn raw_args(path: &Path) -> Vec<String> {
    ["--format", "raw", "--entry", "0x08000000", "--sp", "0x20002000"]
        .iter()
        .map(|s| s.to_string())
        .chain([path.to_str().unwrap().to_string()])
        .collect()
}

fn run_raw(cmd: &str, path: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd.to_string()];
    args.extend(raw_args(path));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    em0(&refs)
}

#[test]
fn simulate_reports_breakpoint_and_cycles() {
    let v: Value = serde_json::from_str(&ok(&em0(&["simulate", &corpus("countdown"), "--config", "20,OFF,0"]))).unwrap();
    assert_eq!(v["exit"]["kind"], "breakpoint");
    assert_eq!(v["cycles"], 51);
    assert_eq!(v["counters"]["c3"], 9);
    assert_eq!(v["registers"]["r1"], 20);
    assert!(v.get("energy_nj").is_none());
}

#[test]
fn usage_and_io_errors_exit_2() {
    let out = em0(&["simulate", "/definitely/not/here.elf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));

    let out = em0(&["simulate", &corpus("countdown"), "--config", "48,OFF,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("48 MHz requires one flash waitstate"));

    assert_eq!(em0(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn faults_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Assembler::new();
    a.label("x").b("x");
    let p = raw_image(dir.path(), "spin.bin", &a);
    let out = run_raw("simulate", &p, &["--max-instructions", "100"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exit"]["kind"], "budget_exhausted");

    let mut a = Assembler::new();
    a.op(Op::MovImm { rd: 0, imm: 1 }).op(Op::LslImm { rd: 0, rm: 0, shift: 31 });
    a.op(Op::MemImm { op: em0_core::isa::MemOp::Ldr, rt: 1, rn: 0, imm: 0 }).bkpt();
    let p = raw_image(dir.path(), "fault.bin", &a);
    let out = run_raw("simulate", &p, &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn profile_counts_adds_and_muls() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Assembler::new();
    for _ in 0..10 {
        a.adds_imm(0, 1);
    }
    a.bkpt();
    let adds = raw_image(dir.path(), "adds.bin", &a);
    let out = ok(&run_raw("profile", &adds, &[]));
    assert_eq!(out, "name,c1,c2,c3,c4,c5,c6,cycles\nadds,11,0,0,0,0,0,11\n");
    assert_eq!(ok(&run_raw("profile", &adds, &[])), out);

    let trips = 13;
    let mut a = Assembler::new();
    a.movs(0, 1).movs(1, 3).movs(2, trips).label("l");
    a.op(Op::Muls { rdm: 0, rn: 1 }).subs_imm(2, 1).bcond(Condition::Ne, "l").bkpt();
    let muls = raw_image(dir.path(), "muls.bin", &a);
    let v: Value = serde_json::from_str(&ok(&run_raw("profile", &muls, &["--output", "json"]))).unwrap();
    assert_eq!(v[0]["c2"], u64::from(trips));
}

#[test]
fn profile_many_images_in_parallel_matches_sequential() {
    let names = ["countdown", "fib", "crc8", "bubble_sort", "factorial", "gcd"];
    let paths: Vec<String> = names.iter().map(|n| corpus(n)).collect();
    let mut args = vec!["profile", "--config", "24,ON,1"];
    args.extend(paths.iter().map(String::as_str));
    let seq = ok(&em0(&args));
    args.extend(["--jobs", "4"]);
    assert_eq!(ok(&em0(&args)), seq);
    assert_eq!(seq.lines().count(), names.len() + 1);
}

#[test]
fn estimate_examples() {
    let csv = "name,c1,c2,c3,c4,c5,c6\nzero,0,0,0,0,0,0\nunit,1,1,1,1,1,1\n";
    let out = ok(&em0_stdin(&["estimate", "--model", "20,OFF,0"], csv.as_bytes()));
    assert_eq!(out, "name,energy_nj\nzero,0.000000\nunit,7.102716\n");
    let out = ok(&em0_stdin(&["estimate", "-", "--model", "20,OFF,0", "--unit", "uj"], csv.as_bytes()));
    assert_eq!(out, "name,energy_uj\nzero,0.000000000\nunit,0.007102716\n");
    let out = em0_stdin(&["estimate", "--model", "48,OFF,0"], csv.as_bytes());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no built-in energy model"));
}

#[test]
fn pipeline_closure_is_bit_exact() {
    for name in ["bubble_sort", "table_lookup", "factorial", "literal_pool"] {
        for cfg in ["20,OFF,0", "24,ON,1", "48,OFF,1"] {
            let profile = ok(&em0(&["profile", &corpus(name), "--config", cfg]));
            let est = ok(&em0_stdin(&["estimate", "--model", cfg], profile.as_bytes()));
            let piped = est.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
            let sim = ok(&em0(&["simulate", &corpus(name), "--config", cfg, "--model", cfg, "--output", "csv"]));
            let combined = sim.lines().nth(1).unwrap().rsplit(',').next().unwrap().to_string();
            assert_eq!(piped, combined, "{name} {cfg}");
            let v: Value = serde_json::from_str(&ok(&em0(&["simulate", &corpus(name), "--config", cfg, "--model", cfg]))).unwrap();
            assert_eq!(v["energy_nj"].as_f64().unwrap(), piped.parse::<f64>().unwrap());
        }
    }
}

#[test]
fn model_files_and_model_dir() {
    let dir = tempfile::tempdir().unwrap();
    let shown = ok(&em0(&["models", "show", "24,ON,1"]));
    let path = dir.path().join("mine.json");
    std::fs::write(&path, &shown).unwrap();
    let csv = "c1,c2,c3,c4,c5,c6\n12,3,4,5,6,7\n";
    let builtin = ok(&em0_stdin(&["estimate", "--model", "24,ON,1"], csv.as_bytes()));
    let from_file = ok(&em0_stdin(&["estimate", "--model", path.to_str().unwrap()], csv.as_bytes()));
    assert_eq!(builtin, from_file);
    assert!(builtin.starts_with("name,energy_nj\nrow1,"));

    let out = Command::new(env!("CARGO_BIN_EXE_em0"))
        .args(["models", "show", "mine"])
        .env("EM0_MODEL_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(ok(&out), shown);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, shown.replace("\"c6\"", "\"c7\"")).unwrap();
    assert_eq!(em0(&["models", "show", bad.to_str().unwrap()]).status.code(), Some(2));
}

fn synthetic_csv(n: usize, noise: f64, seed: u64) -> String {
    let beta = [1.0, 2.0, 1.5, 1.1, 0.7, 0.6];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::from("name,c1,c2,c3,c4,c5,c6,energy_nj\n");
    for i in 0..n {
        let c: Vec<u64> = (0..6).map(|_| rng.gen_range(1..100_000)).collect();
        let e: f64 = c.iter().zip(beta).map(|(&c, b)| c as f64 * b).sum();
        let e = e * (1.0 + noise * rng.gen_range(-1.0..1.0));
        let cs: Vec<String> = c.iter().map(u64::to_string).collect();
        s += &format!("s{i},{},{e:?}\n", cs.join(","));
    }
    s
}

#[test]
fn train_examples() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.csv");
    std::fs::write(&data, synthetic_csv(60, 0.0, 1)).unwrap();
    let model_path = dir.path().join("model.json");
    let args = ["train", data.to_str().unwrap(), "--config", "24,ON,1", "--seed", "7"];
    let first = ok(&em0(&[&args[..], &["--out", model_path.to_str().unwrap()]].concat()));
    let v: Value = serde_json::from_str(&first).unwrap();
    let folds = v["evaluation"]["r2_per_fold"].as_array().unwrap();
    assert_eq!(folds.len(), 10);
    for r2 in folds {
        assert!((r2.as_f64().unwrap() - 1.0).abs() < 1e-12, "{r2}");
    }
    assert!(v["model"]["provenance"].as_str().unwrap().starts_with("trained:sha256:"));
    assert_eq!(ok(&em0(&args)), first);
    assert_eq!(ok(&em0(&[&args[..], &["--jobs", "3"]].concat())), first);
    // The written model is usable for estimation.
    let est = ok(&em0_stdin(&["estimate", "--model", model_path.to_str().unwrap()], b"c1,c2,c3,c4,c5,c6\n1,0,0,0,0,0\n"));
    let c1: f64 = est.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((c1 - 1.0).abs() < 1e-6);

    let small = dir.path().join("small.csv");
    std::fs::write(&small, synthetic_csv(3, 0.0, 2)).unwrap();
    let out = em0(&["train", small.to_str().unwrap(), "--config", "20,OFF,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("insufficient"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn blocks_examples() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Assembler::new();
    a.movs(0, 1).adds_imm(0, 2).subs_imm(0, 1).bkpt();
    let p = raw_image(dir.path(), "line.bin", &a);
    let v: Value = serde_json::from_str(&ok(&run_raw("blocks", &p, &[]))).unwrap();
    assert_eq!(v["blocks"].as_array().unwrap().len(), 1);
    assert_eq!(v["blocks"][0]["instr_count"], 4);

    // Loop program: static total equals profile + estimate.
    let elf = corpus("countdown");
    let counts = dir.path().join("counts.json");
    ok(&em0(&["blocks", &elf, "--emit-counts", counts.to_str().unwrap()]));
    let v: Value = serde_json::from_str(&ok(&em0(&[
        "blocks", &elf, "--counts", counts.to_str().unwrap(), "--model", "20,OFF,0",
    ])))
    .unwrap();
    let profile = ok(&em0(&["profile", &elf]));
    let est = ok(&em0_stdin(&["estimate", "--model", "20,OFF,0"], profile.as_bytes()));
    let dynamic: f64 = est.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(v["estimate"]["total_nj"].as_f64().unwrap(), dynamic);

    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"executions":{"0x08000002":1},"taken":{}}"#).unwrap();
    let out = em0(&["blocks", &elf, "--counts", unknown.to_str().unwrap(), "--model", "20,OFF,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0x08000002"));
}

#[test]
fn models_list_is_stable() {
    let a = ok(&em0(&["models", "list"]));
    assert_eq!(a.lines().count(), 11);
    assert_eq!(ok(&em0(&["models", "list"])), a);
    let row = a.lines().find(|l| l.starts_with("[24, OFF, 1]")).unwrap();
    assert!(row.ends_with(" 3.16"));
    let csv = ok(&em0(&["models", "list", "--output", "csv"]));
    assert!(csv.contains("\"[48, ON, 1]\",0.816331,2.014612,1.372157,1.402116,0.835035,1.250446,4.33,202.5"));
    let json: Value = serde_json::from_str(&ok(&em0(&["models", "list", "--output", "json"]))).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 10);
}
