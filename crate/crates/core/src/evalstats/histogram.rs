use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::par::compensated_sum;

/// Shape descriptors and an equal-width histogram of a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramStats {
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// `m3 / m2^1.5`.
    pub skewness: f64,
    /// Excess kurtosis `m4 / m2² - 3`.
    pub kurtosis: f64,
    /// Set when the moments are undefined (fewer than two distinct values);
    /// skewness and kurtosis are then reported as 0.
    pub degenerate: bool,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Quantile by linear interpolation between order statistics of a sorted
/// sample (`h = (n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn histogram_stats(values: &[f64], bins: usize) -> Result<HistogramStats, EvalError> {
    if values.len() < 2 {
        return Err(EvalError::TooFewValues(values.len()));
    }
    describe(values, bins)
}

/// As [`histogram_stats`] but a sample of 0 or 1 values yields a degenerate
/// record instead of an error.
pub fn histogram_stats_lenient(values: &[f64], bins: usize) -> Result<HistogramStats, EvalError> {
    if values.is_empty() {
        if bins == 0 {
            return Err(EvalError::InvalidBins);
        }
        return Ok(HistogramStats {
            n: 0,
            mean: 0.0,
            q1: 0.0,
            q3: 0.0,
            iqr: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
            degenerate: true,
            edges: (0..=bins).map(|k| k as f64 / bins as f64).collect(),
            counts: vec![0; bins],
        });
    }
    describe(values, bins)
}

fn describe(values: &[f64], bins: usize) -> Result<HistogramStats, EvalError> {
    if bins == 0 {
        return Err(EvalError::InvalidBins);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let n = values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = compensated_sum(values) / n;
    let moment = |k: i32| compensated_sum(&values.iter().map(|v| (v - mean).powi(k)).collect::<Vec<_>>()) / n;
    let (m2, m3, m4) = (moment(2), moment(3), moment(4));
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let degenerate = lo == hi || m2 == 0.0;
    let (skewness, kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let (q1, q3) = (quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75));
    let (start, width) = if lo == hi {
        (lo - 0.5, 1.0 / bins as f64)
    } else {
        (lo, (hi - lo) / bins as f64)
    };
    let edges: Vec<f64> = (0..=bins).map(|k| start + k as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let k = (((v - start) / width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    Ok(HistogramStats {
        n: values.len(),
        mean,
        q1,
        q3,
        iqr: (q3 - q1).max(0.0),
        skewness,
        kurtosis,
        degenerate,
        edges,
        counts,
    })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

impl HistogramStats {
    /// One text block; floats use the shortest round-trip notation.
    pub fn to_block(&self, label: &str) -> String {
        let mut s = String::new();
        s.push_str("[histogram]\n");
        let _ = writeln!(s, "label = {label}");
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "mean = {:?}", self.mean);
        let _ = writeln!(s, "q1 = {:?}", self.q1);
        let _ = writeln!(s, "q3 = {:?}", self.q3);
        let _ = writeln!(s, "iqr = {:?}", self.iqr);
        let _ = writeln!(s, "skewness = {:?}", self.skewness);
        let _ = writeln!(s, "kurtosis = {:?}", self.kurtosis);
        let _ = writeln!(s, "degenerate = {}", self.degenerate);
        let edges: Vec<String> = self.edges.iter().map(|e| format!("{e:?}")).collect();
        let _ = writeln!(s, "edges = {}", edges.join(" "));
        let _ = writeln!(s, "counts = {}", join(&self.counts));
        s.push('\n');
        s
    }
}

/// Reads back every block written by [`HistogramStats::to_block`].
pub fn parse_blocks(text: &str) -> Result<Vec<(String, HistogramStats)>, EvalError> {
    let bad = |m: &str| EvalError::Parse(m.to_string());
    let mut out = Vec::new();
    for block in text.split("[histogram]\n").filter(|b| !b.trim().is_empty()) {
        let mut label = None;
        let mut h = HistogramStats {
            n: 0,
            mean: 0.0,
            q1: 0.0,
            q3: 0.0,
            iqr: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
            degenerate: false,
            edges: Vec::new(),
            counts: Vec::new(),
        };
        for line in block.lines().filter(|l| !l.is_empty()) {
            let (key, value) = line.split_once(" = ").ok_or_else(|| bad(line))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(line));
            match key {
                "label" => label = Some(value.to_string()),
                "n" => h.n = value.parse().map_err(|_| bad(line))?,
                "mean" => h.mean = num(value)?,
                "q1" => h.q1 = num(value)?,
                "q3" => h.q3 = num(value)?,
                "iqr" => h.iqr = num(value)?,
                "skewness" => h.skewness = num(value)?,
                "kurtosis" => h.kurtosis = num(value)?,
                "degenerate" => h.degenerate = value.parse().map_err(|_| bad(line))?,
                "edges" => h.edges = value.split(' ').map(num).collect::<Result<_, _>>()?,
                "counts" => {
                    h.counts = value
                        .split(' ')
                        .map(|c| c.parse().map_err(|_| bad(line)))
                        .collect::<Result<_, _>>()?
                }
                _ => return Err(bad(line)),
            }
        }
        out.push((label.ok_or_else(|| bad("block without label"))?, h));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iqr_of_four() {
        let h = histogram_stats(&[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert_eq!(h.q1, 1.75);
        assert_eq!(h.q3, 3.25);
        assert_eq!(h.iqr, 1.5);
        assert_eq!(h.counts, vec![1, 1, 1, 1]);
    }

    #[test]
    fn symmetric_sample() {
        let h = histogram_stats(&[-2.0, -1.0, 0.0, 1.0, 2.0], 5).unwrap();
        assert_eq!(h.skewness, 0.0);
        assert_eq!(h.mean, 0.0);
        // uniform five points: m4/m2^2 = 6.8/4 = 1.7
        assert!((h.kurtosis - (1.7 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn scipy_reference_moments() {
        let h = histogram_stats(&[2.0, 8.0, 0.0, 4.0, 1.0, 9.0, 9.0, 0.0], 3).unwrap();
        assert!((h.skewness - 0.2650554122698573).abs() < 1e-12);
        assert!((h.kurtosis - -1.6660010752838508).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_errors() {
        let h = histogram_stats(&[3.0, 3.0, 3.0], 2).unwrap();
        assert!(h.degenerate);
        assert_eq!((h.skewness, h.kurtosis, h.iqr), (0.0, 0.0, 0.0));
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert_eq!(histogram_stats(&[1.0], 2), Err(EvalError::TooFewValues(1)));
        assert_eq!(histogram_stats(&[1.0, 2.0], 0), Err(EvalError::InvalidBins));
        assert_eq!(histogram_stats(&[1.0, f64::NAN], 2), Err(EvalError::NonFinite));
        assert!(histogram_stats_lenient(&[], 3).unwrap().degenerate);
        assert!(histogram_stats_lenient(&[1.0], 3).unwrap().degenerate);
    }

    #[test]
    fn block_round_trip() {
        let h = histogram_stats(&[0.1, 0.7, 0.25, 3.0, -1.5], 3).unwrap();
        let text = h.to_block("a/b") + &h.to_block("c");
        let parsed = parse_blocks(&text).unwrap();
        assert_eq!(parsed, vec![("a/b".to_string(), h.clone()), ("c".to_string(), h)]);
    }
}
