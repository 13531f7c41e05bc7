//! Image loading, model selection and number formatting.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use em0_core::energy::{load_model, EnergyError, EnergyModel, ModelRegistry};
use em0_core::loader::{Image, LoadReport};
use em0_core::memory::MemoryLayout;
use em0_core::sim::Simulator;
use em0_core::timing::HardwareConfig;

use crate::{EnergyUnit, ImageFormat, ImageOptions};

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Reads `path`, or stdin for `None` and `-`.
pub fn read_input(path: Option<&Path>) -> Result<Vec<u8>> {
    match path {
        Some(p) if p != Path::new("-") => read_file(p),
        _ => {
            let mut buf = Vec::new();
            io::stdin().read_to_end(&mut buf).context("cannot read stdin")?;
            Ok(buf)
        }
    }
}

/// Loads an image and resets the core from its vector table, or from the
/// explicit entry and stack pointer.
pub fn load(bytes: &[u8], opts: &ImageOptions, config: HardwareConfig) -> Result<(Simulator, LoadReport)> {
    let image = match opts.format {
        ImageFormat::Elf => Image::Elf(bytes),
        ImageFormat::Raw => Image::Raw { bytes, base: opts.base },
    };
    let layout = MemoryLayout::default();
    let (mut sim, report) = Simulator::with_image(layout, image, config)?;
    if opts.entry.is_some() || opts.sp.is_some() || report.reset_vector == 0 {
        let entry = opts.entry.or(report.entry).unwrap_or(report.reset_vector);
        let sp = opts
            .sp
            .or((report.initial_sp != 0).then_some(report.initial_sp))
            .unwrap_or_else(|| layout.ram_end());
        sim.reset_to(entry, sp);
    }
    Ok((sim, report))
}

/// Resolves a model selector: a built-in configuration key, a model file,
/// or a file name under `EM0_MODEL_DIR`.
pub fn select_model(selector: &str) -> Result<EnergyModel<f64>> {
    let path = PathBuf::from(selector);
    if path.is_file() {
        return load_model_file(&path);
    }
    if let Some(dir) = std::env::var_os("EM0_MODEL_DIR") {
        let dir = PathBuf::from(dir);
        for candidate in [dir.join(selector), dir.join(format!("{selector}.json"))] {
            if candidate.is_file() {
                return load_model_file(&candidate);
            }
        }
    }
    if selector.contains(',') {
        return match ModelRegistry::builtin().lookup_key(selector) {
            Ok(m) => Ok(m),
            Err(e @ EnergyError::UnsupportedConfig(_)) => Err(e.into()),
            Err(e) => Err(e).context(format!("model {selector:?}")),
        };
    }
    bail!("model {selector:?} is neither a built-in configuration key nor a model file")
}

fn load_model_file(path: &Path) -> Result<EnergyModel<f64>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    load_model(file).with_context(|| format!("cannot load model {}", path.display()))
}

/// Energy in nJ with six decimals, the precision of the published models.
pub fn format_nj(e: f64) -> String {
    format!("{e:.6}")
}

pub fn format_energy(nj: f64, unit: EnergyUnit) -> String {
    match unit {
        EnergyUnit::Nj => format_nj(nj),
        EnergyUnit::Uj => format!("{:.9}", nj / 1e3),
        EnergyUnit::J => format!("{:.15}", nj / 1e9),
    }
}

pub fn unit_column(unit: EnergyUnit) -> &'static str {
    match unit {
        EnergyUnit::Nj => "energy_nj",
        EnergyUnit::Uj => "energy_uj",
        EnergyUnit::J => "energy_j",
    }
}

/// The JSON number of a formatted decimal. It parses to the same f64 as
/// the CSV text, though trailing zeros are not kept.
pub fn json_decimal(text: &str) -> serde_json::Value {
    serde_json::from_str(text).expect("formatted decimal is valid JSON")
}

pub fn image_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}
