//! ARMv6-M (Cortex-M0) instruction-set simulator with energy-model event
//! counters, STM32F0xx flash timing, NNLS energy-model training and
//! basic-block static energy estimation.

pub mod analysis;
pub mod asm;
pub mod counters;
pub mod energy;
pub mod isa;
pub mod loader;
pub mod memory;
pub mod scalar;
pub mod sim;
pub mod timing;
pub mod trainer;

pub use scalar::Scalar;

pub type EnergyModel64 = energy::EnergyModel<f64>;
pub type EnergyModel32 = energy::EnergyModel<f32>;
pub type TrainingSample64 = trainer::TrainingSample<f64>;
pub type EvaluationReport64 = trainer::EvaluationReport<f64>;
pub type StaticEstimate64 = analysis::StaticEstimate<f64>;
