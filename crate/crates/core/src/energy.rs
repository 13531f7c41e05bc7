//! Linear, intercept-free energy models: `E = sum(beta_i * c_i)` in nJ.
//!
//! The built-in registry carries the ten published Cortex-M0 (STM32F0)
//! models, one per supported hardware configuration.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::counters::{CounterVector, EventCounters, COUNTER_NAMES};
use crate::scalar::Scalar;
use crate::timing::HardwareConfig;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("no built-in energy model for configuration [{0}]")]
    UnsupportedConfig(String),
    #[error("model schema error: {0}")]
    Schema(String),
    #[error("negative coefficient {counter} = {value}")]
    NegativeCoefficient { counter: &'static str, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a model's coefficients came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Builtin,
    /// Fitted from a dataset identified by its fingerprint.
    Trained { fingerprint: String },
}

impl Provenance {
    fn encode(&self) -> String {
        match self {
            Provenance::Builtin => "builtin".to_string(),
            Provenance::Trained { fingerprint } => format!("trained:{fingerprint}"),
        }
    }

    fn decode(s: &str) -> Result<Self, EnergyError> {
        if s == "builtin" {
            Ok(Provenance::Builtin)
        } else if let Some(fp) = s.strip_prefix("trained:") {
            Ok(Provenance::Trained { fingerprint: fp.to_string() })
        } else {
            Err(EnergyError::Schema(format!("unknown provenance {s:?}")))
        }
    }
}

/// Six nonnegative nJ-per-event coefficients for one hardware configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel<T> {
    pub config: HardwareConfig,
    beta: [T; 6],
    pub provenance: Provenance,
}

impl<T: Scalar> EnergyModel<T> {
    /// Rejects negative or non-finite coefficients.
    pub fn new(
        config: HardwareConfig,
        beta: [T; 6],
        provenance: Provenance,
    ) -> Result<Self, EnergyError> {
        for (i, b) in beta.iter().enumerate() {
            if !b.is_finite() {
                return Err(EnergyError::Schema(format!(
                    "coefficient {} is not finite",
                    COUNTER_NAMES[i]
                )));
            }
            if *b < T::zero() {
                return Err(EnergyError::NegativeCoefficient {
                    counter: COUNTER_NAMES[i],
                    value: b.to_string(),
                });
            }
        }
        Ok(EnergyModel { config, beta, provenance })
    }

    pub fn beta(&self) -> &[T; 6] {
        &self.beta
    }

    /// Energy in nJ of a run.
    pub fn estimate(&self, counters: &EventCounters) -> T {
        self.estimate_counts(&counters.model)
    }

    pub fn estimate_counts(&self, c: &CounterVector) -> T {
        let c = c.to_array();
        let mut e = T::zero();
        for i in 0..6 {
            e = e + self.beta[i] * T::from_count(c[i]);
        }
        e
    }
}

/// Free-function form of [`EnergyModel::estimate`].
pub fn estimate<T: Scalar>(counters: &EventCounters, model: &EnergyModel<T>) -> T {
    model.estimate(counters)
}

/// One published model as decimal strings, exactly as printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublishedModel {
    pub freq_mhz: u32,
    pub prefetch: bool,
    pub waitstates: u8,
    pub beta: [&'static str; 6],
    pub mape_percent: &'static str,
    /// Measured energy of the whole benchmark set, J.
    pub measured_j: &'static str,
}

impl PublishedModel {
    pub fn config(&self) -> HardwareConfig {
        HardwareConfig::new(self.freq_mhz, self.prefetch, self.waitstates)
            .expect("published configurations are valid")
    }

    pub fn model<T: Scalar>(&self) -> EnergyModel<T> {
        let beta = self.beta.map(|s| s.parse::<T>().ok().expect("published coefficient parses"));
        EnergyModel::new(self.config(), beta, Provenance::Builtin)
            .expect("published coefficients are nonnegative")
    }
}

const fn row(
    freq_mhz: u32,
    prefetch: bool,
    waitstates: u8,
    beta: [&'static str; 6],
    mape_percent: &'static str,
    measured_j: &'static str,
) -> PublishedModel {
    PublishedModel { freq_mhz, prefetch, waitstates, beta, mape_percent, measured_j }
}

#[rustfmt::skip]
static PUBLISHED: [PublishedModel; 10] = [
    row(20, false, 0, ["0.964258", "1.652455", "2.091986", "1.109833", "0.650563", "0.633621"], "2.80", "221.4"),
    row(20, false, 1, ["1.282474", "2.110668", "2.191545", "1.185609", "0.416602", "1.178991"], "2.97", "274.9"),
    row(20, true, 0, ["1.003378", "1.885309", "1.802974", "1.122833", "0.849223", "0.475831"], "2.86", "226.38"),
    row(20, true, 1, ["0.895879", "2.185851", "2.001178", "1.493364", "1.076354", "1.573758"], "3.68", "227.9"),
    row(24, false, 0, ["0.959172", "1.888565", "1.357556", "1.089427", "0.993145", "0.562952"], "3.22", "214.62"),
    row(24, false, 1, ["1.178558", "2.540429", "2.042475", "1.190892", "0.979651", "0.891088"], "3.16", "264.88"),
    row(24, true, 0, ["0.985415", "1.933276", "1.448160", "1.075671", "1.011891", "0.617510"], "3.36", "220.03"),
    row(24, true, 1, ["0.883755", "2.156046", "1.633465", "1.436556", "1.152560", "1.455166"], "4.15", "220.05"),
    row(48, false, 1, ["1.096677", "2.364495", "1.627854", "1.173680", "0.681475", "0.652665"], "3.65", "243.44"),
    row(48, true, 1, ["0.816331", "2.014612", "1.372157", "1.402116", "0.835035", "1.250446"], "4.33", "202.5"),
];

/// The built-in models, immutable.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelRegistry;

impl ModelRegistry {
    pub fn builtin() -> Self {
        ModelRegistry
    }

    pub fn entries(&self) -> &'static [PublishedModel] {
        &PUBLISHED
    }

    pub fn published(&self, config: HardwareConfig) -> Option<&'static PublishedModel> {
        PUBLISHED.iter().find(|p| p.config() == config)
    }

    pub fn lookup<T: Scalar>(&self, config: HardwareConfig) -> Result<EnergyModel<T>, EnergyError> {
        self.published(config)
            .map(PublishedModel::model)
            .ok_or_else(|| EnergyError::UnsupportedConfig(config.to_string()))
    }

    /// Looks up a `freq,ON|OFF,ws` key. Well-formed keys without a row
    /// (including ones that are not valid configurations, such as
    /// `48,OFF,0`) give `UnsupportedConfig`.
    pub fn lookup_key<T: Scalar>(&self, key: &str) -> Result<EnergyModel<T>, EnergyError> {
        let unsupported = || EnergyError::UnsupportedConfig(key.trim().to_string());
        let trimmed = key.trim().trim_start_matches('[').trim_end_matches(']');
        let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let [freq, pf, ws] = parts.as_slice() else {
            return Err(unsupported());
        };
        let prefetch = match pf.to_ascii_uppercase().as_str() {
            "ON" => true,
            "OFF" => false,
            _ => return Err(unsupported()),
        };
        let (Ok(freq), Ok(ws)) = (freq.parse::<u32>(), ws.parse::<u8>()) else {
            return Err(unsupported());
        };
        PUBLISHED
            .iter()
            .find(|p| (p.freq_mhz, p.prefetch, p.waitstates) == (freq, prefetch, ws))
            .map(PublishedModel::model)
            .ok_or_else(unsupported)
    }
}

/// Built-in model for `config`.
pub fn lookup<T: Scalar>(config: HardwareConfig) -> Result<EnergyModel<T>, EnergyError> {
    ModelRegistry::builtin().lookup(config)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    config: HardwareConfig,
    beta_nj: Map<String, Value>,
    provenance: String,
}

/// Serializes a model as JSON with the coefficients as decimal strings.
pub fn model_to_json<T: Scalar>(model: &EnergyModel<T>) -> String {
    let mut beta_nj = Map::new();
    for (name, b) in COUNTER_NAMES.iter().zip(model.beta.iter()) {
        beta_nj.insert(name.to_string(), Value::String(b.to_string()));
    }
    let file = ModelFile { config: model.config, beta_nj, provenance: model.provenance.encode() };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json<T: Scalar>(text: &str) -> Result<EnergyModel<T>, EnergyError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| EnergyError::Schema(e.to_string()))?;
    if let Some(extra) = file.beta_nj.keys().find(|k| !COUNTER_NAMES.contains(&k.as_str())) {
        return Err(EnergyError::Schema(format!("unknown coefficient {extra:?}")));
    }
    let mut beta = [T::zero(); 6];
    for (i, name) in COUNTER_NAMES.iter().enumerate() {
        let value = file
            .beta_nj
            .get(*name)
            .ok_or_else(|| EnergyError::Schema(format!("missing coefficient {name:?}")))?;
        let text = value
            .as_str()
            .ok_or_else(|| EnergyError::Schema(format!("coefficient {name:?} must be a string")))?;
        beta[i] = text
            .trim()
            .parse::<T>()
            .map_err(|_| EnergyError::Schema(format!("coefficient {name:?} = {text:?}")))?;
    }
    EnergyModel::new(file.config, beta, Provenance::decode(&file.provenance)?)
}

pub fn save_model<T: Scalar, W: Write>(mut out: W, model: &EnergyModel<T>) -> Result<(), EnergyError> {
    out.write_all(model_to_json(model).as_bytes())?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn load_model<T: Scalar, R: Read>(mut input: R) -> Result<EnergyModel<T>, EnergyError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    model_from_json(&text)
}
