//! Distances between beats, distribution descriptors and the success-rate /
//! confusion reports.

mod confusion;
mod histogram;

pub use confusion::*;
pub use histogram::*;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat::BeatMatrix;
use crate::par::*;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("signals differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("signal is empty")]
    EmptySignal,
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("dataset is empty")]
    EmptySet,
    #[error("need at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("bin count must be positive")]
    InvalidBins,
    #[error("no plausible candidates")]
    DivisionByZero,
    #[error("verified count {verified} exceeds plausible count {plausible}")]
    InvalidCounts { plausible: u64, verified: u64 },
    #[error("malformed report: {0}")]
    Parse(String),
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(EvalError::EmptySignal);
    }
    Ok(())
}

fn sq_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Percent root-mean-square difference of `y` from the reference `x`.
pub fn prd(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Err(EvalError::ZeroReference);
    }
    Ok((sq_diff(x, y) / energy).sqrt() * 100.0)
}

pub fn rmse(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_pair(x, y)?;
    Ok((sq_diff(x, y) / x.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sdm {
    #[serde(rename = "PRD")]
    Prd,
    #[serde(rename = "RMSE")]
    Rmse,
}

impl Sdm {
    pub const ALL: [Sdm; 2] = [Sdm::Prd, Sdm::Rmse];

    pub fn as_str(self) -> &'static str {
        match self {
            Sdm::Prd => "PRD",
            Sdm::Rmse => "RMSE",
        }
    }

    /// Distance of `candidate` from `reference`.
    pub fn eval(self, reference: &[f64], candidate: &[f64]) -> Result<f64, EvalError> {
        match self {
            Sdm::Prd => prd(reference, candidate),
            Sdm::Rmse => rmse(reference, candidate),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdmSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

/// For every candidate, min/max/mean distance to each reference signal.
/// Reference signals play `x` in [`prd`].
pub fn sdm_summary<S: AsRef<[f64]> + Sync>(
    candidates: &[S],
    reference: &[S],
    metric: Sdm,
) -> Result<Vec<SdmSummary>, EvalError> {
    if candidates.is_empty() || reference.is_empty() {
        return Err(EvalError::EmptySet);
    }
    candidates
        .par_iter()
        .map(|c| {
            let d = reference
                .iter()
                .map(|r| metric.eval(r.as_ref(), c.as_ref()))
                .collect::<Result<Vec<f64>, _>>()?;
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            Ok(SdmSummary { min, max, mean })
        })
        .collect()
}

/// Lead-major flattening of every beat.
pub fn flatten_all(beats: &[BeatMatrix]) -> Vec<Vec<f64>> {
    beats.iter().map(BeatMatrix::flatten_lead_major).collect()
}

/// Seeded uniform subsample of `n` items in their original order; the whole
/// set when it is not larger than `n`.
pub fn subsample<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    if items.len() <= n {
        return items.to_vec();
    }
    let mut idx = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(seed), items.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

/// Percentage of plausible candidates that verified.
pub fn success_rate(plausible: u64, verified: u64) -> Result<f64, EvalError> {
    if plausible == 0 {
        return Err(EvalError::DivisionByZero);
    }
    if verified > plausible {
        return Err(EvalError::InvalidCounts { plausible, verified });
    }
    Ok(100.0 * verified as f64 / plausible as f64)
}

/// The six interval and axis measurements compared across datasets.
pub const FEATURE_NAMES: [&str; 6] = ["PR interval", "QRS duration", "QT interval", "P axis", "QRS axis", "T axis"];

pub type FeatureRow = [f64; 6];

pub const DATASET_NAMES: [&str; 3] = ["synthetic", "training", "testing"];

/// Candidate/reference pairs of the SDM comparison, as dataset indices.
pub const SDM_PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

#[derive(Clone, Debug, PartialEq)]
pub struct BiasReport {
    /// Datasets were cut to this many beats before comparison.
    pub sample_size: usize,
    pub sdm: Vec<(String, HistogramStats)>,
    pub features: Vec<(String, HistogramStats)>,
}

impl BiasReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, h) in self.sdm.iter().chain(&self.features) {
            out.push_str(&h.to_block(label));
        }
        out
    }

    /// Mean of the per-candidate minimum RMSE for one SDM pair.
    pub fn mean_min(&self, metric: Sdm, pair: (usize, usize)) -> Option<f64> {
        let label = sdm_label(metric, pair, "min");
        self.sdm.iter().find(|(l, _)| *l == label).map(|(_, h)| h.mean)
    }
}

pub fn sdm_label(metric: Sdm, (a, b): (usize, usize), stat: &str) -> String {
    format!("sdm/{}/{}-{}/{stat}", metric.as_str(), DATASET_NAMES[a], DATASET_NAMES[b])
}

/// Compares synthetic, training and testing beats: SDM histograms for each
/// pair and metric, and per-dataset histograms of the six features. Larger
/// sets are subsampled to the size of the smallest.
pub fn bias_assessment(
    beats: [&[BeatMatrix]; 3],
    features: [&[FeatureRow]; 3],
    bins: usize,
    seed: u64,
) -> Result<BiasReport, EvalError> {
    if beats.iter().any(|b| b.is_empty()) {
        return Err(EvalError::EmptySet);
    }
    let n = beats.iter().map(|b| b.len()).min().unwrap();
    let sets: Vec<Vec<Vec<f64>>> = beats
        .iter()
        .enumerate()
        .map(|(k, b)| flatten_all(&subsample(b, n, crate::derive_seed(seed, &[k as u64]))))
        .collect();
    let mut sdm = Vec::new();
    for metric in Sdm::ALL {
        for pair in SDM_PAIRS {
            let rows = sdm_summary(&sets[pair.0], &sets[pair.1], metric)?;
            for (stat, pick) in [("min", 0), ("max", 1), ("mean", 2)] {
                let values: Vec<f64> = rows.iter().map(|r| [r.min, r.max, r.mean][pick]).collect();
                sdm.push((sdm_label(metric, pair, stat), histogram_stats_lenient(&values, bins)?));
            }
        }
    }
    let mut feats = Vec::new();
    for (f, name) in FEATURE_NAMES.iter().enumerate() {
        for (k, set) in DATASET_NAMES.iter().enumerate() {
            let values: Vec<f64> = features[k].iter().map(|r| r[f]).filter(|v| v.is_finite()).collect();
            feats.push((format!("feature/{name}/{set}"), histogram_stats_lenient(&values, bins)?));
        }
    }
    Ok(BiasReport {
        sample_size: n,
        sdm,
        features: feats,
    })
}
