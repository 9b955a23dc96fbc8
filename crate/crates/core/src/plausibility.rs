//! Four-criterion gate applied to every generated beat before verification.
//!
//! A candidate passes when its mean squared MMD against the testing beats is
//! at most the threshold, its amplitude range reaches the floor, its absolute
//! maximum sits away from the window edges and training has run long enough.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat::{BeatMatrix, BEAT_LEADS, BEAT_SAMPLES};
use crate::par::{compensated_sum, IntoParallelRefIterator, ParallelIterator};

#[derive(Debug, Error, PartialEq)]
pub enum PlausibilityError {
    #[error("sample set is empty")]
    EmptySet,
    #[error("vectors of length {0} and {1} cannot be compared")]
    LengthMismatch(usize, usize),
    #[error("median heuristic needs at least two distinct testing beats")]
    DegenerateBandwidth,
    #[error("invalid plausibility config: {0}")]
    InvalidConfig(String),
}

/// RBF kernel width selection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise distance among the testing beats.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlausibilityConfig {
    pub mmd_threshold: f64,
    pub min_amplitude_range_mv: f64,
    pub edge_margin_samples: usize,
    pub min_epochs: u64,
    pub mmd_kernel_bandwidth: Bandwidth,
}

impl Default for PlausibilityConfig {
    fn default() -> Self {
        Self {
            mmd_threshold: 0.004,
            min_amplitude_range_mv: 1.2,
            edge_margin_samples: 50,
            min_epochs: 10,
            mmd_kernel_bandwidth: Bandwidth::MedianHeuristic,
        }
    }
}

impl PlausibilityConfig {
    pub fn validate(&self) -> Result<(), PlausibilityError> {
        let bad = |m: String| Err(PlausibilityError::InvalidConfig(m));
        if !(self.mmd_threshold > 0.0 && self.mmd_threshold.is_finite()) {
            return bad(format!("mmd_threshold {} must be positive", self.mmd_threshold));
        }
        if !(self.min_amplitude_range_mv > 0.0 && self.min_amplitude_range_mv.is_finite()) {
            return bad(format!(
                "min_amplitude_range_mv {} must be positive",
                self.min_amplitude_range_mv
            ));
        }
        if self.edge_margin_samples == 0 || self.edge_margin_samples >= BEAT_SAMPLES / 2 {
            return bad(format!(
                "edge_margin_samples {} must lie in 1..{}",
                self.edge_margin_samples,
                BEAT_SAMPLES / 2
            ));
        }
        if self.min_epochs == 0 {
            return bad("min_epochs must be positive".into());
        }
        if let Bandwidth::Fixed(s) = self.mmd_kernel_bandwidth {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("fixed bandwidth {s} must be positive"));
            }
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn rbf(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-squared_distance(a, b) / (2.0 * sigma * sigma)).exp()
}

fn mean_kernel(x: &[&[f64]], y: &[&[f64]], sigma: f64) -> f64 {
    let rows: Vec<f64> = x
        .par_iter()
        .map(|a| compensated_sum(&y.iter().map(|b| rbf(a, b, sigma)).collect::<Vec<_>>()))
        .collect();
    compensated_sum(&rows) / (x.len() * y.len()) as f64
}

/// Biased squared MMD with a Gaussian RBF kernel of width `sigma`.
pub fn mmd(x: &[&[f64]], y: &[&[f64]], sigma: f64) -> Result<f64, PlausibilityError> {
    if x.is_empty() || y.is_empty() {
        return Err(PlausibilityError::EmptySet);
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().chain(y).find(|v| v.len() != dim) {
        return Err(PlausibilityError::LengthMismatch(dim, bad.len()));
    }
    let v = mean_kernel(x, x, sigma) + mean_kernel(y, y, sigma) - 2.0 * mean_kernel(x, y, sigma);
    Ok(v.max(0.0))
}

/// Median of all pairwise Euclidean distances within `beats`.
pub fn median_heuristic(beats: &[&[f64]]) -> Result<f64, PlausibilityError> {
    let pairs: Vec<(usize, usize)> = (0..beats.len())
        .flat_map(|i| (i + 1..beats.len()).map(move |j| (i, j)))
        .collect();
    let mut d: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| squared_distance(beats[i], beats[j]).sqrt())
        .collect();
    if d.is_empty() {
        return Err(PlausibilityError::DegenerateBandwidth);
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let med = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    if med > 0.0 {
        Ok(med)
    } else {
        Err(PlausibilityError::DegenerateBandwidth)
    }
}

/// Mean over testing beats of `mmd({candidate}, {beat})`.
pub fn mean_mmd_vs_testing(
    candidate: &BeatMatrix,
    testing: &[BeatMatrix],
    sigma: f64,
) -> Result<f64, PlausibilityError> {
    if testing.is_empty() {
        return Err(PlausibilityError::EmptySet);
    }
    let c = candidate.as_slice();
    // singleton sets: k(c,c) = k(t,t) = 1
    let per: Vec<f64> = testing
        .par_iter()
        .map(|t| (2.0 - 2.0 * rbf(c, t.as_slice(), sigma)).max(0.0))
        .collect();
    Ok(compensated_sum(&per) / testing.len() as f64)
}

/// Global maximum minus global minimum across all leads.
pub fn amplitude_range(candidate: &BeatMatrix) -> f64 {
    let (lo, hi) = candidate
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Sample index of the largest absolute amplitude; ties go to the earliest
/// sample.
pub fn abs_argmax(candidate: &BeatMatrix) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for t in 0..BEAT_SAMPLES {
        for l in 0..BEAT_LEADS {
            let v = candidate.get(t, l).abs();
            if v > best.1 {
                best = (t, v);
            }
        }
    }
    best.0
}

/// `(erratic, argmax)`: erratic when the absolute maximum lies in the first
/// or last `margin` samples.
pub fn erratic_edge(candidate: &BeatMatrix, margin: usize) -> (bool, usize) {
    let at = abs_argmax(candidate);
    (at < margin || at >= BEAT_SAMPLES - margin, at)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Criterion {
    Mmd,
    AmplitudeRange,
    Edge,
    Epochs,
}

/// Outcome of one gate evaluation; serialises as one audit-log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityVerdict {
    pub epoch: u64,
    pub mmd_mean: f64,
    pub mmd_pass: bool,
    pub amp_range: f64,
    pub amp_pass: bool,
    pub edge_argmax: usize,
    pub edge_pass: bool,
    pub epoch_pass: bool,
    pub passed: bool,
}

impl PlausibilityVerdict {
    pub fn failed(&self) -> Vec<Criterion> {
        [
            (self.mmd_pass, Criterion::Mmd),
            (self.amp_pass, Criterion::AmplitudeRange),
            (self.edge_pass, Criterion::Edge),
            (self.epoch_pass, Criterion::Epochs),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, c)| c)
        .collect()
    }

    pub fn audit_line(&self) -> String {
        serde_json::to_string(self).expect("verdict serialises")
    }
}

/// Testing set and resolved kernel width, prepared once per campaign.
#[derive(Clone, Debug)]
pub struct PlausibilityGate {
    config: PlausibilityConfig,
    testing: Vec<BeatMatrix>,
    sigma: f64,
}

impl PlausibilityGate {
    pub fn new(config: PlausibilityConfig, testing: Vec<BeatMatrix>) -> Result<Self, PlausibilityError> {
        config.validate()?;
        if testing.is_empty() {
            return Err(PlausibilityError::EmptySet);
        }
        let sigma = match config.mmd_kernel_bandwidth {
            Bandwidth::Fixed(s) => s,
            Bandwidth::MedianHeuristic => {
                let views: Vec<&[f64]> = testing.iter().map(BeatMatrix::as_slice).collect();
                median_heuristic(&views)?
            }
        };
        Ok(Self {
            config,
            testing,
            sigma,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn config(&self) -> &PlausibilityConfig {
        &self.config
    }

    pub fn check(&self, candidate: &BeatMatrix, epoch: u64) -> PlausibilityVerdict {
        let cfg = &self.config;
        let mmd_mean = mean_mmd_vs_testing(candidate, &self.testing, self.sigma)
            .expect("gate holds a non-empty testing set");
        let amp_range = amplitude_range(candidate);
        let (erratic, edge_argmax) = erratic_edge(candidate, cfg.edge_margin_samples);
        let mmd_pass = mmd_mean <= cfg.mmd_threshold;
        let amp_pass = amp_range >= cfg.min_amplitude_range_mv;
        let epoch_pass = epoch >= cfg.min_epochs;
        PlausibilityVerdict {
            epoch,
            mmd_mean,
            mmd_pass,
            amp_range,
            amp_pass,
            edge_argmax,
            edge_pass: !erratic,
            epoch_pass,
            passed: mmd_pass && amp_pass && !erratic && epoch_pass,
        }
    }
}

/// One-shot form of [`PlausibilityGate::check`].
pub fn check(
    candidate: &BeatMatrix,
    testing: &[BeatMatrix],
    epoch: u64,
    config: &PlausibilityConfig,
) -> Result<PlausibilityVerdict, PlausibilityError> {
    Ok(PlausibilityGate::new(config.clone(), testing.to_vec())?.check(candidate, epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spike(at: usize, lead: usize, v: f64) -> BeatMatrix {
        let mut b = BeatMatrix::zeros();
        b.set(at, lead, v);
        b
    }

    #[test]
    fn singleton_closed_form() {
        let zero = vec![0.0; 5];
        let c = vec![0.3, -0.1, 0.7, 0.0, 1.2];
        let sigma = 0.9;
        let n2: f64 = c.iter().map(|v| v * v).sum();
        let expect = 2.0 * (1.0 - (-n2 / (2.0 * sigma * sigma)).exp());
        let got = mmd(&[&zero], &[&c], sigma).unwrap();
        assert!((got - expect).abs() < 1e-12);
        let far: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        assert!(mmd(&[&zero], &[&far], sigma).unwrap() > got);
    }

    #[test]
    fn empty_and_ragged_sets() {
        let a = vec![1.0, 2.0];
        assert_eq!(mmd(&[], &[&a], 1.0), Err(PlausibilityError::EmptySet));
        assert_eq!(
            mmd(&[&a], &[&a[..1]], 1.0),
            Err(PlausibilityError::LengthMismatch(2, 1))
        );
        assert_eq!(
            mean_mmd_vs_testing(&BeatMatrix::zeros(), &[], 1.0),
            Err(PlausibilityError::EmptySet)
        );
    }

    #[test]
    fn amplitude_examples() {
        assert_eq!(amplitude_range(&BeatMatrix::zeros()), 0.0);
        let mut b = spike(100, 0, 0.9);
        b.set(120, 3, -0.5);
        assert!((amplitude_range(&b) - 1.4).abs() < 1e-12);
        let flat = BeatMatrix::new(vec![5.0; BEAT_SAMPLES * BEAT_LEADS]).unwrap();
        assert_eq!(amplitude_range(&flat), 0.0);
    }

    #[test]
    fn edge_examples() {
        assert_eq!(erratic_edge(&spike(20, 2, 1.0), 50), (true, 20));
        assert_eq!(erratic_edge(&spike(200, 2, -1.0), 50), (false, 200));
        assert_eq!(erratic_edge(&spike(399, 7, 1.0), 50), (true, 399));
        assert_eq!(erratic_edge(&spike(350, 0, 1.0), 50), (true, 350));
        assert_eq!(erratic_edge(&spike(349, 0, 1.0), 50), (false, 349));
        // tie: earliest sample wins
        let mut b = spike(10, 0, 1.0);
        b.set(200, 5, -1.0);
        assert_eq!(erratic_edge(&b, 50), (true, 10));
    }

    #[test]
    fn identical_single_testing_beat_gives_zero() {
        let b = spike(200, 1, 1.0);
        let v = mean_mmd_vs_testing(&b, std::slice::from_ref(&b), 3.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn median_heuristic_needs_spread() {
        let a = vec![0.0, 0.0];
        assert_eq!(median_heuristic(&[&a]), Err(PlausibilityError::DegenerateBandwidth));
        assert_eq!(median_heuristic(&[&a, &a]), Err(PlausibilityError::DegenerateBandwidth));
        let b = vec![3.0, 4.0];
        let c = vec![0.0, 1.0];
        // distances 5, 1, sqrt(18)
        assert!((median_heuristic(&[&a, &b, &c]).unwrap() - 18f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        PlausibilityConfig::default().validate().unwrap();
        let mut c = PlausibilityConfig::default();
        c.edge_margin_samples = 200;
        assert!(c.validate().is_err());
        let mut c = PlausibilityConfig::default();
        c.mmd_threshold = 0.0;
        assert!(c.validate().is_err());
        let mut c = PlausibilityConfig::default();
        c.mmd_kernel_bandwidth = Bandwidth::Fixed(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn verdict_lists_failures_and_serialises() {
        let b = spike(20, 0, 0.5);
        let cfg = PlausibilityConfig {
            mmd_kernel_bandwidth: Bandwidth::Fixed(1.0),
            ..Default::default()
        };
        let v = check(&b, std::slice::from_ref(&b), 3, &cfg).unwrap();
        assert!(!v.passed);
        assert_eq!(
            v.failed(),
            vec![Criterion::AmplitudeRange, Criterion::Edge, Criterion::Epochs]
        );
        let line = v.audit_line();
        let back: PlausibilityVerdict = serde_json::from_str(&line).unwrap();
        assert_eq!(back, v);
    }

    fn vecs(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3.0..3.0f64, d), 1..n)
    }

    proptest! {
        #[test]
        fn mmd_symmetric_nonnegative(x in vecs(5, 4), y in vecs(5, 4), sigma in 0.3..4.0f64) {
            let xv: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
            let yv: Vec<&[f64]> = y.iter().map(Vec::as_slice).collect();
            let a = mmd(&xv, &yv, sigma).unwrap();
            let b = mmd(&yv, &xv, sigma).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(mmd(&xv, &xv, sigma).unwrap().abs() < 1e-12);
        }

        #[test]
        fn amplitude_translation_and_scale(
            data in prop::collection::vec(-2.0..2.0f64, BEAT_SAMPLES * BEAT_LEADS),
            shift in -5.0..5.0f64,
            k in 0.1..10.0f64,
        ) {
            let b = BeatMatrix::new(data.clone()).unwrap();
            let r = amplitude_range(&b);
            let moved = BeatMatrix::new(data.iter().map(|v| v + shift).collect()).unwrap();
            let scaled = BeatMatrix::new(data.iter().map(|v| v * k).collect()).unwrap();
            prop_assert!((amplitude_range(&moved) - r).abs() < 1e-9);
            prop_assert!((amplitude_range(&scaled) - k * r).abs() < 1e-9 * k.max(1.0));
        }
    }
}
