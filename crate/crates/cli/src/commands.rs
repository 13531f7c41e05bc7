use std::fs::File;
use std::io::{self, BufWriter, Write};

use anyhow::{bail, Context, Result};
use em0_core::analysis::{estimate_static, extract_cfg, profile_blocks, BlockCounts, CfgReport};
use em0_core::counters::{read_counter_rows, write_counter_rows, CounterRow, COUNTER_NAMES};
use em0_core::energy::{model_to_json, save_model, EnergyModel, ModelRegistry};
use em0_core::sim::{ExitReason, RunReport};
use em0_core::trainer::{fit_nnls, kfold_cv, read_training_csv, CvOptions};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::support::*;
use crate::*;

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::new(io::stdout().lock())
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let mut out = stdout();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn check_model_config(model: &EnergyModel<f64>, config: HardwareConfig) {
    if model.config != config {
        log::warn!("model is for [{}] but the run uses [{}]", model.config, config);
    }
}

fn exit_outcome(what: &str, exit: &ExitReason) -> Outcome {
    if *exit == ExitReason::Breakpoint {
        return Outcome::Success;
    }
    let detail = match exit {
        ExitReason::UndefinedEncoding { address, bits } => {
            format!("undefined encoding {bits:#x} at {address:#010x}")
        }
        ExitReason::MemoryFault { detail, .. } => format!("memory fault: {detail}"),
        ExitReason::BudgetExhausted => "instruction budget exhausted".into(),
        ExitReason::Breakpoint => unreachable!(),
    };
    eprintln!("em0: {what}: {detail}");
    Outcome::Fault
}

fn registers(run: &RunReport) -> Value {
    let mut m = Map::new();
    for (i, v) in run.state.regs.iter().enumerate() {
        let name = match i {
            13 => "sp".to_string(),
            14 => "lr".to_string(),
            15 => "pc".to_string(),
            i => format!("r{i}"),
        };
        m.insert(name, json!(v));
    }
    Value::Object(m)
}

pub fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let bytes = read_file(&a.image)?;
    let model = a.model.as_deref().map(select_model).transpose()?;
    if let Some(m) = &model {
        check_model_config(m, a.config);
    }
    let (mut sim, _) = load(&bytes, &a.image_opts, a.config)?;
    let run = sim.run(a.max_instructions);
    let name = image_name(&a.image);
    let energy = model.as_ref().map(|m| format_nj(m.estimate(&run.counters)));
    match a.output {
        OutputFormat::Json => {
            let mut v = json!({
                "image": name,
                "config": run.config,
                "exit": run.exit,
                "instr_retired": run.instr_retired,
                "cycles": run.cycles,
                "wall_time_s": run.wall_time_s,
                "counters": run.counters,
                "registers": registers(&run),
                "flags": run.state.flags,
            });
            if let Some(e) = &energy {
                v["energy_nj"] = json_decimal(e);
            }
            print_json(&v)?;
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(stdout());
            let mut header: Vec<&str> = vec!["name"];
            header.extend(COUNTER_NAMES);
            header.extend(["cycles", "instr_retired", "exit"]);
            if energy.is_some() {
                header.push("energy_nj");
            }
            w.write_record(&header)?;
            let c = run.counters.model.to_array();
            let mut row: Vec<String> = vec![name];
            row.extend(c.iter().map(u64::to_string));
            row.extend([run.cycles.to_string(), run.instr_retired.to_string(), run.exit.name().into()]);
            row.extend(energy);
            w.write_record(&row)?;
            w.flush()?;
        }
    }
    Ok(exit_outcome(&a.image.display().to_string(), &run.exit))
}

pub fn profile(a: ProfileArgs) -> Result<Outcome> {
    let images: Vec<(String, Vec<u8>)> = a
        .images
        .iter()
        .map(|p| Ok((image_name(p), read_file(p)?)))
        .collect::<Result<_>>()?;
    let run_one = |(name, bytes): &(String, Vec<u8>)| -> Result<(CounterRow, ExitReason)> {
        let (mut sim, _) = load(bytes, &a.image_opts, a.config)?;
        let run = sim.run(a.max_instructions);
        Ok((CounterRow::new(name.clone(), &run.counters), run.exit))
    };
    let results: Vec<Result<(CounterRow, ExitReason)>> = if a.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build()?;
        pool.install(|| images.par_iter().map(run_one).collect())
    } else {
        images.iter().map(run_one).collect()
    };
    let mut rows = Vec::new();
    let mut outcome = Outcome::Success;
    for (path, r) in a.images.iter().zip(results) {
        let (row, exit) = r?;
        if let Outcome::Fault = exit_outcome(&path.display().to_string(), &exit) {
            outcome = Outcome::Fault;
        }
        rows.push(row);
    }
    match a.output {
        OutputFormat::Csv => {
            let mut out = stdout();
            write_counter_rows(&mut out, &rows)?;
            out.flush()?;
        }
        OutputFormat::Json => print_json(&rows)?,
    }
    Ok(outcome)
}

pub fn estimate(a: EstimateArgs) -> Result<Outcome> {
    let model = select_model(&a.model)?;
    let input = read_input(a.input.as_deref())?;
    let rows = read_counter_rows(input.as_slice()).context("cannot read counters")?;
    let column = unit_column(a.unit);
    let energies: Vec<(String, String)> = rows
        .iter()
        .map(|r| (r.name.clone(), format_energy(model.estimate_counts(&r.vector()), a.unit)))
        .collect();
    match a.output {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(stdout());
            w.write_record(["name", column])?;
            for (name, e) in &energies {
                w.write_record([name, e])?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let v: Vec<Value> = energies
                .iter()
                .map(|(name, e)| {
                    let mut m = Map::new();
                    m.insert("name".into(), json!(name));
                    m.insert(column.into(), json_decimal(e));
                    Value::Object(m)
                })
                .collect();
            print_json(&v)?;
        }
    }
    Ok(Outcome::Success)
}

pub fn train(a: TrainArgs) -> Result<Outcome> {
    let bytes = read_file(&a.input)?;
    let samples = read_training_csv::<f64, _>(bytes.as_slice())?;
    let model = fit_nnls(&samples, a.config)?;
    let opts = CvOptions { k: a.k, seed: a.seed, centered: !a.uncentered, jobs: a.jobs };
    let report = kfold_cv(&samples, opts)?;
    if let Some(path) = &a.out {
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        save_model(BufWriter::new(f), &model)?;
    }
    let model_json: Value = serde_json::from_str(&model_to_json(&model))?;
    print_json(&json!({ "model": model_json, "evaluation": report }))?;
    Ok(Outcome::Success)
}

pub fn blocks(a: BlocksArgs) -> Result<Outcome> {
    let bytes = read_file(&a.image)?;
    let (mut sim, _) = load(&bytes, &a.image_opts, HardwareConfig::default())?;
    let entry = sim.state().pc();
    let cfg = extract_cfg(sim.memory(), entry, &a.roots)?;
    for b in cfg.blocks.values().filter(|b| b.flags.unresolved_accesses > 0) {
        log::warn!(
            "block {:#010x}: {} data accesses with unresolved addresses counted as RAM",
            b.start,
            b.flags.unresolved_accesses
        );
    }
    let mut outcome = Outcome::Success;
    if let Some(path) = &a.emit_counts {
        let profile = profile_blocks(&mut sim, &cfg, a.max_instructions);
        outcome = exit_outcome(&a.image.display().to_string(), &profile.run.exit);
        if profile.unattributed_steps > 0 {
            log::warn!("{} executed instructions lie outside the CFG", profile.unattributed_steps);
        }
        let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &profile.counts)?;
        writeln!(w)?;
        w.flush()?;
    }
    let mut report = serde_json::to_value(CfgReport::from(&cfg))?;
    if let Some(path) = &a.counts {
        let Some(selector) = &a.model else {
            bail!("--counts needs --model");
        };
        let model = select_model(selector)?;
        let counts: BlockCounts = serde_json::from_slice(&read_file(path)?)
            .with_context(|| format!("cannot parse counts {}", path.display()))?;
        let est = estimate_static(&cfg, &counts, &model)?;
        let mut v = serde_json::to_value(&est)?;
        v["total_nj"] = json_decimal(&format_nj(est.total_nj));
        report["estimate"] = v;
    }
    print_json(&report)?;
    Ok(outcome)
}

fn key(freq: u32, prefetch: bool, ws: u8) -> String {
    format!("[{}, {}, {}]", freq, if prefetch { "ON" } else { "OFF" }, ws)
}

pub fn models_list(output: ListFormat) -> Result<Outcome> {
    let entries = ModelRegistry::builtin().entries();
    let mut out = stdout();
    match output {
        ListFormat::Table => {
            write!(out, "{:<14}", "config")?;
            for c in COUNTER_NAMES {
                write!(out, "{c:<10}")?;
            }
            writeln!(out, "mape_percent")?;
            for p in entries {
                write!(out, "{:<14}", key(p.freq_mhz, p.prefetch, p.waitstates))?;
                for b in p.beta {
                    write!(out, "{b:<10}")?;
                }
                writeln!(out, "{}", p.mape_percent)?;
            }
        }
        ListFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let mut header = vec!["config"];
            header.extend(COUNTER_NAMES);
            header.extend(["mape_percent", "measured_j"]);
            w.write_record(&header)?;
            for p in entries {
                let mut row = vec![key(p.freq_mhz, p.prefetch, p.waitstates)];
                row.extend(p.beta.iter().map(|s| s.to_string()));
                row.extend([p.mape_percent.to_string(), p.measured_j.to_string()]);
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        ListFormat::Json => {
            let v: Vec<Value> = entries
                .iter()
                .map(|p| {
                    let beta: Map<String, Value> =
                        COUNTER_NAMES.iter().zip(p.beta).map(|(c, b)| (c.to_string(), json!(b))).collect();
                    json!({
                        "config": p.config(),
                        "key": key(p.freq_mhz, p.prefetch, p.waitstates),
                        "beta_nj": beta,
                        "mape_percent": p.mape_percent,
                        "measured_j": p.measured_j,
                    })
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &v)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(Outcome::Success)
}

pub fn models_show(selector: &str) -> Result<Outcome> {
    let model = select_model(selector)?;
    let mut out = stdout();
    save_model(&mut out, &model)?;
    out.flush()?;
    Ok(Outcome::Success)
}
