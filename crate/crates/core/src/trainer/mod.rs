//! Fitting energy models from measured samples and evaluating them.
//!
//! Models have no intercept and nonnegative coefficients. Evaluation uses
//! seeded k-fold cross-validation, R² and MAPE.

mod nnls;

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::counters::CounterVector;
use crate::energy::{EnergyError, EnergyModel, Provenance};
use crate::scalar::Scalar;
use crate::timing::HardwareConfig;

pub use nnls::{nnls, Matrix, NnlsError, NnlsSolution};

/// Minimum number of samples for a fit: one per coefficient.
pub const MIN_SAMPLES: usize = 6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate design: every counter column is zero")]
    DegenerateDesign,
    #[error("invalid sample {name:?}: {reason}")]
    InvalidSample { name: String, reason: String },
    #[error("zero variance in the observed energies")]
    ZeroVariance,
    #[error(transparent)]
    Solver(#[from] NnlsError),
    #[error(transparent)]
    Model(#[from] EnergyError),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// One benchmark run: counters and the measured energy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample<T> {
    pub name: String,
    pub counters: CounterVector,
    pub energy_nj: T,
}

impl<T: Scalar> TrainingSample<T> {
    /// Requires positive finite energy and at least one executed
    /// instruction.
    pub fn new(
        name: impl Into<String>,
        counters: CounterVector,
        energy_nj: T,
    ) -> Result<Self, TrainError> {
        let name = name.into();
        if !(energy_nj.is_finite() && energy_nj > T::zero()) {
            return Err(TrainError::InvalidSample {
                name,
                reason: format!("energy {energy_nj} must be positive"),
            });
        }
        if counters.instructions() == 0 {
            return Err(TrainError::InvalidSample {
                name,
                reason: "no instructions executed (c1 + c2 = 0)".into(),
            });
        }
        Ok(TrainingSample { name, counters, energy_nj })
    }

    fn regressors(&self) -> [T; 6] {
        self.counters.to_array().map(T::from_count)
    }
}

/// Reads `name,c1,c2,c3,c4,c5,c6,energy_nj`. The `name` column may be
/// omitted.
pub fn read_training_csv<T: Scalar, R: Read>(input: R) -> Result<Vec<TrainingSample<T>>, TrainError> {
    #[derive(Deserialize)]
    struct Row {
        name: Option<String>,
        c1: u64,
        c2: u64,
        c3: u64,
        c4: u64,
        c5: u64,
        c6: u64,
        energy_nj: String,
    }
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<Row>().enumerate() {
        let row = rec?;
        let name = row.name.unwrap_or_else(|| format!("row{}", i + 1));
        let energy = row.energy_nj.parse::<T>().map_err(|_| TrainError::InvalidSample {
            name: name.clone(),
            reason: format!("cannot parse energy {:?}", row.energy_nj),
        })?;
        let c = CounterVector::from_array([row.c1, row.c2, row.c3, row.c4, row.c5, row.c6]);
        out.push(TrainingSample::new(name, c, energy)?);
    }
    Ok(out)
}

pub fn write_training_csv<T: Scalar, W: Write>(
    out: W,
    samples: &[TrainingSample<T>],
) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["name", "c1", "c2", "c3", "c4", "c5", "c6", "energy_nj"])?;
    for s in samples {
        let mut rec = vec![s.name.clone()];
        rec.extend(s.counters.to_array().iter().map(u64::to_string));
        rec.push(s.energy_nj.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `sha256:<hex>` of the dataset in its canonical CSV form.
pub fn dataset_fingerprint<T: Scalar>(samples: &[TrainingSample<T>]) -> String {
    let mut buf = Vec::new();
    write_training_csv(&mut buf, samples).expect("writing to memory");
    let digest = Sha256::digest(&buf);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn check_size<T>(samples: &[TrainingSample<T>], needed: usize) -> Result<(), TrainError> {
    if samples.len() < needed {
        return Err(TrainError::InsufficientData { needed, got: samples.len() });
    }
    Ok(())
}

/// Nonnegative, intercept-free coefficients for `samples`.
pub fn fit_beta<T: Scalar>(samples: &[TrainingSample<T>]) -> Result<[T; 6], TrainError> {
    check_size(samples, MIN_SAMPLES)?;
    let rows: Vec<[T; 6]> = samples.iter().map(TrainingSample::regressors).collect();
    let a = Matrix::from_rows(&rows);
    let y: Vec<T> = samples.iter().map(|s| s.energy_nj).collect();
    let sol = nnls(&a, &y)?;
    if sol.zero_columns.len() == 6 {
        return Err(TrainError::DegenerateDesign);
    }
    for j in &sol.zero_columns {
        log::warn!("counter c{} is zero in every sample; its coefficient is set to 0", j + 1);
    }
    let mut beta = [T::zero(); 6];
    beta.copy_from_slice(&sol.x);
    Ok(beta)
}

/// Fits a model for `config` on all samples.
pub fn fit_nnls<T: Scalar>(
    samples: &[TrainingSample<T>],
    config: HardwareConfig,
) -> Result<EnergyModel<T>, TrainError> {
    let beta = fit_beta(samples)?;
    let provenance = Provenance::Trained { fingerprint: dataset_fingerprint(samples) };
    Ok(EnergyModel::new(config, beta, provenance)?)
}

/// `(100/n) * sum(|pred - actual| / actual)`.
pub fn mape_from<T: Scalar>(predicted: &[T], actual: &[T]) -> T {
    assert_eq!(predicted.len(), actual.len());
    if actual.is_empty() {
        return T::zero();
    }
    let sum: T = predicted.iter().zip(actual).map(|(p, a)| ((*p - *a) / *a).abs()).sum();
    T::from_count(100) * sum / T::from_count(actual.len() as u64)
}

/// `1 - SS_res / SS_tot`; `SS_tot` is taken about the mean of `actual` when
/// `centered`, about zero otherwise.
pub fn r_squared_from<T: Scalar>(predicted: &[T], actual: &[T], centered: bool) -> Result<T, TrainError> {
    assert_eq!(predicted.len(), actual.len());
    if actual.len() < 2 {
        return Err(TrainError::InsufficientData { needed: 2, got: actual.len() });
    }
    let n = T::from_count(actual.len() as u64);
    let center = if centered { actual.iter().copied().sum::<T>() / n } else { T::zero() };
    let ss_tot: T = actual.iter().map(|a| (*a - center) * (*a - center)).sum();
    if ss_tot == T::zero() {
        return Err(TrainError::ZeroVariance);
    }
    let ss_res: T = predicted.iter().zip(actual).map(|(p, a)| (*a - *p) * (*a - *p)).sum();
    Ok(T::one() - ss_res / ss_tot)
}

fn predictions<T: Scalar>(model: &EnergyModel<T>, samples: &[TrainingSample<T>]) -> (Vec<T>, Vec<T>) {
    samples.iter().map(|s| (model.estimate_counts(&s.counters), s.energy_nj)).unzip()
}

pub fn mape<T: Scalar>(model: &EnergyModel<T>, samples: &[TrainingSample<T>]) -> T {
    let (p, a) = predictions(model, samples);
    mape_from(&p, &a)
}

pub fn r_squared<T: Scalar>(
    model: &EnergyModel<T>,
    samples: &[TrainingSample<T>],
    centered: bool,
) -> Result<T, TrainError> {
    let (p, a) = predictions(model, samples);
    r_squared_from(&p, &a, centered)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    /// Mean-centered R² (the default) or uncentered.
    pub centered: bool,
    /// Worker threads for fitting folds; 0 or 1 runs sequentially.
    pub jobs: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { k: 10, seed: 0, centered: true, jobs: 1 }
    }
}

/// Sample indices of each fold after a seeded shuffle. Fold sizes differ
/// by at most one; the first `n % k` folds are the larger ones.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(k > 0, "k must be positive");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (q, r) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = q + usize::from(f < r);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    folds
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual<T> {
    pub name: String,
    pub fold: usize,
    pub predicted_nj: T,
    pub actual_nj: T,
    /// `actual - predicted`.
    pub residual_nj: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport<T> {
    pub k: usize,
    pub seed: u64,
    pub r2_definition: &'static str,
    pub r2_per_fold: Vec<T>,
    pub r2_mean: T,
    /// Population standard deviation of the per-fold R².
    pub r2_std: T,
    /// Over the out-of-fold predictions of all samples.
    pub mape_percent: T,
    /// Out-of-fold residuals in dataset order.
    pub residuals: Vec<Residual<T>>,
}

struct FoldResult<T> {
    r2: T,
    predicted: Vec<(usize, T)>,
}

fn run_fold<T: Scalar>(
    samples: &[TrainingSample<T>],
    fold: &[usize],
    centered: bool,
) -> Result<FoldResult<T>, TrainError> {
    let mut held = vec![false; samples.len()];
    for &i in fold {
        held[i] = true;
    }
    let train: Vec<TrainingSample<T>> =
        samples.iter().zip(&held).filter(|(_, h)| !**h).map(|(s, _)| s.clone()).collect();
    let beta = fit_beta(&train)?;
    let model = EnergyModel::new(HardwareConfig::default(), beta, Provenance::Builtin)?;
    let predicted: Vec<(usize, T)> =
        fold.iter().map(|&i| (i, model.estimate_counts(&samples[i].counters))).collect();
    let p: Vec<T> = predicted.iter().map(|(_, v)| *v).collect();
    let a: Vec<T> = fold.iter().map(|&i| samples[i].energy_nj).collect();
    Ok(FoldResult { r2: r_squared_from(&p, &a, centered)?, predicted })
}

/// Seeded k-fold cross-validation of the NNLS fit.
pub fn kfold_cv<T: Scalar>(
    samples: &[TrainingSample<T>],
    opts: CvOptions,
) -> Result<EvaluationReport<T>, TrainError> {
    if opts.k < 2 {
        return Err(TrainError::InsufficientData { needed: 2, got: opts.k });
    }
    check_size(samples, opts.k.max(MIN_SAMPLES))?;
    let folds = fold_assignment(samples.len(), opts.k, opts.seed);
    let results: Vec<Result<FoldResult<T>, TrainError>> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| TrainError::ThreadPool(e.to_string()))?;
        pool.install(|| folds.par_iter().map(|f| run_fold(samples, f, opts.centered)).collect())
    } else {
        folds.iter().map(|f| run_fold(samples, f, opts.centered)).collect()
    };
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let r2_per_fold: Vec<T> = results.iter().map(|r| r.r2).collect();
    let kf = T::from_count(opts.k as u64);
    let r2_mean = r2_per_fold.iter().copied().sum::<T>() / kf;
    let r2_std =
        (r2_per_fold.iter().map(|r| (*r - r2_mean) * (*r - r2_mean)).sum::<T>() / kf).sqrt();

    let mut residuals: Vec<Option<Residual<T>>> = vec![None; samples.len()];
    for (fold, r) in results.iter().enumerate() {
        for &(i, p) in &r.predicted {
            let s = &samples[i];
            residuals[i] = Some(Residual {
                name: s.name.clone(),
                fold,
                predicted_nj: p,
                actual_nj: s.energy_nj,
                residual_nj: s.energy_nj - p,
            });
        }
    }
    let residuals: Vec<Residual<T>> =
        residuals.into_iter().map(|r| r.expect("folds cover the dataset")).collect();
    let p: Vec<T> = residuals.iter().map(|r| r.predicted_nj).collect();
    let a: Vec<T> = residuals.iter().map(|r| r.actual_nj).collect();

    Ok(EvaluationReport {
        k: opts.k,
        seed: opts.seed,
        r2_definition: if opts.centered { "centered" } else { "uncentered" },
        r2_per_fold,
        r2_mean,
        r2_std,
        mape_percent: mape_from(&p, &a),
        residuals,
    })
}
