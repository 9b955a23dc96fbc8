//! Beat data types, preprocessing and 10-second record assembly.
//!
//! All amplitudes are millivolts. Matrices are stored time-major
//! (`sample * leads + lead`) which is also the layout the networks consume.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling rate of every beat and record after preprocessing.
pub const SPS: usize = 500;
/// Samples per beat window (800 ms at 500 SPS).
pub const BEAT_SAMPLES: usize = 400;
/// Independent leads the generator learns.
pub const BEAT_LEADS: usize = 8;
/// Samples in a 10-second record.
pub const RECORD_SAMPLES: usize = 5000;
/// Beat copies tiled before truncating to ten seconds.
pub const STITCH_COPIES: usize = 13;
/// Fixed synthetic RR interval.
pub const RR_INTERVAL_MS: f64 = 800.0;
/// Sampling rate of raw representative beats.
pub const RAW_SPS: usize = 1000;
/// Duration of a raw representative beat.
pub const RAW_BEAT_MS: usize = 1200;
/// Length of the centred window cut from a raw beat.
pub const WINDOW_MS: usize = 800;
/// Source recordings faster than this are excluded.
pub const MAX_HEART_RATE_BPM: f64 = 100.0;

#[derive(Debug, Error)]
pub enum BeatError {
    #[error("expected {expected} values, got {got}")]
    InvalidShape { expected: usize, got: usize },
    #[error("non-finite amplitude at sample {sample}, lead {lead}")]
    NonFinite { sample: usize, lead: usize },
    #[error("window centred at {center_ms} ms cannot be placed inside the {len_ms} ms beat")]
    WindowOutOfRange { center_ms: f64, len_ms: usize },
    #[error("heart rate {bpm} bpm exceeds {MAX_HEART_RATE_BPM} bpm")]
    RateExcluded { bpm: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    InvalidFraction(f64),
    #[error("lead {0} missing from input")]
    MissingLead(Lead),
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lead {
    I,
    II,
    III,
    #[serde(rename = "aVR")]
    AVR,
    #[serde(rename = "aVL")]
    AVL,
    #[serde(rename = "aVF")]
    AVF,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
}

impl Lead {
    /// Lead order of a [`BeatMatrix`].
    pub const BEAT: [Lead; BEAT_LEADS] = [
        Lead::I,
        Lead::II,
        Lead::V1,
        Lead::V2,
        Lead::V3,
        Lead::V4,
        Lead::V5,
        Lead::V6,
    ];

    /// Lead order of a [`TwelveLeadBeat`] and [`Record10s`].
    pub const TWELVE: [Lead; 12] = [
        Lead::I,
        Lead::II,
        Lead::III,
        Lead::AVR,
        Lead::AVL,
        Lead::AVF,
        Lead::V1,
        Lead::V2,
        Lead::V3,
        Lead::V4,
        Lead::V5,
        Lead::V6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Lead::I => "I",
            Lead::II => "II",
            Lead::III => "III",
            Lead::AVR => "aVR",
            Lead::AVL => "aVL",
            Lead::AVF => "aVF",
            Lead::V1 => "V1",
            Lead::V2 => "V2",
            Lead::V3 => "V3",
            Lead::V4 => "V4",
            Lead::V5 => "V5",
            Lead::V6 => "V6",
        }
    }

    /// Column index in twelve-lead storage.
    pub fn twelve_index(self) -> usize {
        Lead::TWELVE.iter().position(|&l| l == self).unwrap()
    }
}

impl fmt::Display for Lead {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lead {
    type Err = BeatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.strip_prefix("lead_").unwrap_or(s);
        Lead::TWELVE
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| BeatError::Metadata(format!("unknown lead {s:?}")))
    }
}

/// Target diagnostic category a model is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Normal,
    #[serde(rename = "LVH")]
    Lvh,
    #[serde(rename = "LBBB")]
    Lbbb,
    #[serde(rename = "ACUTMI")]
    Acutmi,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Normal,
        Category::Lvh,
        Category::Lbbb,
        Category::Acutmi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Normal => "Normal",
            Category::Lvh => "LVH",
            Category::Lbbb => "LBBB",
            Category::Acutmi => "ACUTMI",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown category {s:?} (expected Normal, LVH, LBBB or ACUTMI)"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
    #[default]
    Unidentified,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
            Sex::Unidentified => "Unidentified",
        })
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "male" => Ok(Sex::Male),
            "f" | "female" => Ok(Sex::Female),
            "" | "u" | "unknown" | "unidentified" => Ok(Sex::Unidentified),
            other => Err(format!("unknown sex {other:?}")),
        }
    }
}

fn check_finite(data: &[f64], leads: usize) -> Result<(), BeatError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(BeatError::NonFinite {
            sample: i / leads,
            lead: i % leads,
        }),
        None => Ok(()),
    }
}

/// 400×8 beat at 500 SPS, leads `[I, II, V1..V6]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BeatMatrix {
    data: Vec<f64>,
}

impl BeatMatrix {
    pub fn new(data: Vec<f64>) -> Result<Self, BeatError> {
        let expected = BEAT_SAMPLES * BEAT_LEADS;
        if data.len() != expected {
            return Err(BeatError::InvalidShape {
                expected,
                got: data.len(),
            });
        }
        check_finite(&data, BEAT_LEADS)?;
        Ok(Self { data })
    }

    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; BEAT_SAMPLES * BEAT_LEADS],
        }
    }

    /// Builds a beat from eight lead vectors of 400 samples each.
    pub fn from_leads(leads: &[Vec<f64>]) -> Result<Self, BeatError> {
        if leads.len() != BEAT_LEADS {
            return Err(BeatError::InvalidShape {
                expected: BEAT_LEADS,
                got: leads.len(),
            });
        }
        let mut data = vec![0.0; BEAT_SAMPLES * BEAT_LEADS];
        for (l, lead) in leads.iter().enumerate() {
            if lead.len() != BEAT_SAMPLES {
                return Err(BeatError::InvalidShape {
                    expected: BEAT_SAMPLES,
                    got: lead.len(),
                });
            }
            for (t, &v) in lead.iter().enumerate() {
                data[t * BEAT_LEADS + l] = v;
            }
        }
        Self::new(data)
    }

    #[inline]
    pub fn get(&self, sample: usize, lead: usize) -> f64 {
        self.data[sample * BEAT_LEADS + lead]
    }

    #[inline]
    pub fn set(&mut self, sample: usize, lead: usize, value: f64) {
        self.data[sample * BEAT_LEADS + lead] = value;
    }

    /// Time-major samples.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn lead(&self, lead: usize) -> Vec<f64> {
        (0..BEAT_SAMPLES).map(|t| self.get(t, lead)).collect()
    }

    /// Concatenation of the eight leads (I, then II, then V1, ...).
    pub fn flatten_lead_major(&self) -> Vec<f64> {
        (0..BEAT_LEADS).flat_map(|l| self.lead(l)).collect()
    }
}

/// 400×12 beat with the four derived limb leads.
#[derive(Clone, Debug, PartialEq)]
pub struct TwelveLeadBeat {
    data: Vec<f64>,
}

impl TwelveLeadBeat {
    pub fn new(data: Vec<f64>) -> Result<Self, BeatError> {
        let expected = BEAT_SAMPLES * 12;
        if data.len() != expected {
            return Err(BeatError::InvalidShape {
                expected,
                got: data.len(),
            });
        }
        check_finite(&data, 12)?;
        Ok(Self { data })
    }

    #[inline]
    pub fn get(&self, sample: usize, lead: Lead) -> f64 {
        self.data[sample * 12 + lead.twelve_index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn lead(&self, lead: Lead) -> Vec<f64> {
        (0..BEAT_SAMPLES).map(|t| self.get(t, lead)).collect()
    }
}

/// Ten-second 12-lead record at 500 SPS with a fixed 800 ms RR interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Record10s {
    data: Vec<f64>,
}

impl Record10s {
    pub fn new(data: Vec<f64>) -> Result<Self, BeatError> {
        let expected = RECORD_SAMPLES * 12;
        if data.len() != expected {
            return Err(BeatError::InvalidShape {
                expected,
                got: data.len(),
            });
        }
        check_finite(&data, 12)?;
        Ok(Self { data })
    }

    pub fn rr_interval_ms(&self) -> f64 {
        RR_INTERVAL_MS
    }

    #[inline]
    pub fn get(&self, sample: usize, lead: Lead) -> f64 {
        self.data[sample * 12 + lead.twelve_index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn lead(&self, lead: Lead) -> Vec<f64> {
        (0..RECORD_SAMPLES).map(|t| self.get(t, lead)).collect()
    }
}

/// Limb-lead reconstruction from leads I and II:
/// `III = II - I`, `aVR = -(I + II)/2`, `aVL = I - II/2`, `aVF = II - I/2`.
pub fn derive_limb_leads(beat: &BeatMatrix) -> TwelveLeadBeat {
    let mut data = Vec::with_capacity(BEAT_SAMPLES * 12);
    for t in 0..BEAT_SAMPLES {
        let i = beat.get(t, 0);
        let ii = beat.get(t, 1);
        data.extend_from_slice(&[i, ii, ii - i, -0.5 * (i + ii), i - 0.5 * ii, ii - 0.5 * i]);
        for l in 2..BEAT_LEADS {
            data.push(beat.get(t, l));
        }
    }
    TwelveLeadBeat { data }
}

/// Tiles the beat 13 times and keeps the first ten seconds.
pub fn stitch_record(beat: &TwelveLeadBeat) -> Record10s {
    let tiled: Vec<f64> = beat
        .data
        .iter()
        .copied()
        .cycle()
        .take(BEAT_SAMPLES * STITCH_COPIES * 12)
        .collect();
    let mut data = tiled;
    data.truncate(RECORD_SAMPLES * 12);
    Record10s { data }
}

/// 1200 ms representative beat at 1000 SPS with its fiducials and demographics.
#[derive(Clone, Debug, PartialEq)]
pub struct RawBeat {
    pub leads: Vec<Lead>,
    /// One vector per entry of `leads`.
    pub samples: Vec<Vec<f64>>,
    pub q_onset_ms: f64,
    pub qrs_dur_ms: f64,
    pub heart_rate_bpm: f64,
    pub age_years: Option<f64>,
    pub sex: Sex,
}

impl RawBeat {
    pub fn validate(&self) -> Result<(), BeatError> {
        if self.leads.len() != self.samples.len() {
            return Err(BeatError::InvalidShape {
                expected: self.leads.len(),
                got: self.samples.len(),
            });
        }
        if !(self.heart_rate_bpm > 0.0) {
            return Err(BeatError::Metadata(format!(
                "heart rate must be positive, got {}",
                self.heart_rate_bpm
            )));
        }
        if self.q_onset_ms < 0.0
            || self.qrs_dur_ms < 0.0
            || self.q_onset_ms + self.qrs_dur_ms > RAW_BEAT_MS as f64
        {
            return Err(BeatError::Metadata(format!(
                "fiducials q_onset={} qrs_dur={} outside the {RAW_BEAT_MS} ms beat",
                self.q_onset_ms, self.qrs_dur_ms
            )));
        }
        Ok(())
    }

    fn lead_samples(&self, lead: Lead) -> Result<&[f64], BeatError> {
        self.leads
            .iter()
            .position(|&l| l == lead)
            .map(|i| self.samples[i].as_slice())
            .ok_or(BeatError::MissingLead(lead))
    }
}

/// Cuts the 800 ms window centred at `Qo + QRSdur/2`, clamped inside the raw
/// beat, and decimates it to 500 SPS by averaging adjacent sample pairs.
pub fn extract_centered_window(raw: &RawBeat) -> Result<BeatMatrix, BeatError> {
    if raw.heart_rate_bpm > MAX_HEART_RATE_BPM {
        return Err(BeatError::RateExcluded {
            bpm: raw.heart_rate_bpm,
        });
    }
    raw.validate()?;
    let center_ms = raw.q_onset_ms + raw.qrs_dur_ms / 2.0;
    let samples_per_ms = RAW_SPS as f64 / 1000.0;
    let win = WINDOW_MS * RAW_SPS / 1000;
    let mut leads = Vec::with_capacity(BEAT_LEADS);
    for lead in Lead::BEAT {
        let src = raw.lead_samples(lead)?;
        let len_ms = src.len() * 1000 / RAW_SPS;
        if src.len() < win || !(0.0..=len_ms as f64).contains(&center_ms) {
            return Err(BeatError::WindowOutOfRange { center_ms, len_ms });
        }
        let start = ((center_ms - WINDOW_MS as f64 / 2.0) * samples_per_ms).round();
        let start = (start.max(0.0) as usize).min(src.len() - win);
        let window = &src[start..start + win];
        leads.push(window.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect());
    }
    BeatMatrix::from_leads(&leads)
}

/// Seeded shuffle followed by a `floor(n * fraction)` / remainder partition.
pub fn split_dataset<T: Clone>(
    items: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), BeatError> {
    if items.is_empty() {
        return Err(BeatError::EmptyDataset);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(BeatError::InvalidFraction(train_fraction));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((items.len() as f64) * train_fraction + 1e-9).floor() as usize;
    let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
    let test = order[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}

/// CSV header of the beat interchange format.
pub fn beat_csv_header() -> Vec<String> {
    Lead::BEAT.iter().map(|l| format!("lead_{}", l.name())).collect()
}

/// Writes a beat as 400 rows of eight millivolt values. Values use the
/// shortest representation that round-trips exactly.
pub fn write_beat_csv<W: Write>(beat: &BeatMatrix, out: W) -> Result<(), BeatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(beat_csv_header())?;
    for t in 0..BEAT_SAMPLES {
        w.write_record((0..BEAT_LEADS).map(|l| beat.get(t, l).to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64, BeatError> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| BeatError::Metadata(format!("bad number {s:?}: {e}")))
}

/// Reads a lead-labelled CSV into per-lead columns.
fn read_columns<R: Read>(input: R) -> Result<(Vec<Lead>, Vec<Vec<f64>>), BeatError> {
    let mut r = csv::Reader::from_reader(input);
    let leads = r
        .headers()?
        .iter()
        .map(Lead::from_str)
        .collect::<Result<Vec<_>, _>>()?;
    let mut cols = vec![Vec::new(); leads.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            c.push(parse_f64(field)?);
        }
    }
    Ok((leads, cols))
}

pub fn read_beat_csv<R: Read>(input: R) -> Result<BeatMatrix, BeatError> {
    let (leads, cols) = read_columns(input)?;
    let mut ordered = Vec::with_capacity(BEAT_LEADS);
    for lead in Lead::BEAT {
        let i = leads
            .iter()
            .position(|&l| l == lead)
            .ok_or(BeatError::MissingLead(lead))?;
        ordered.push(cols[i].clone());
    }
    BeatMatrix::from_leads(&ordered)
}

pub fn load_beat(path: &Path) -> Result<BeatMatrix, BeatError> {
    read_beat_csv(std::fs::File::open(path)?)
}

/// Header of the raw-beat metadata sidecar.
pub const RAW_META_HEADER: &str = "q_onset_ms,qrs_dur_ms,heart_rate_bpm,age_years,sex";

/// Reads a raw beat CSV (1000 SPS, any lead subset containing I, II, V1–V6)
/// together with its one-row metadata sidecar.
pub fn read_raw_beat<R1: Read, R2: Read>(samples: R1, meta: R2) -> Result<RawBeat, BeatError> {
    let (leads, cols) = read_columns(samples)?;
    let mut r = csv::Reader::from_reader(meta);
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header.join(",") != RAW_META_HEADER {
        return Err(BeatError::Metadata(format!(
            "sidecar header must be {RAW_META_HEADER:?}, got {:?}",
            header.join(",")
        )));
    }
    let row = r
        .records()
        .next()
        .ok_or_else(|| BeatError::Metadata("sidecar has no data row".into()))??;
    let field = |i: usize| row.get(i).unwrap_or("").trim().to_string();
    let age = field(3);
    let raw = RawBeat {
        leads,
        samples: cols,
        q_onset_ms: parse_f64(&field(0))?,
        qrs_dur_ms: parse_f64(&field(1))?,
        heart_rate_bpm: parse_f64(&field(2))?,
        age_years: if age.is_empty() {
            None
        } else {
            Some(parse_f64(&age)?)
        },
        sex: field(4).parse().map_err(BeatError::Metadata)?,
    };
    raw.validate()?;
    Ok(raw)
}

pub fn write_raw_beat<W1: Write, W2: Write>(
    raw: &RawBeat,
    samples: W1,
    meta: W2,
) -> Result<(), BeatError> {
    let mut w = csv::Writer::from_writer(samples);
    w.write_record(raw.leads.iter().map(|l| format!("lead_{}", l.name())))?;
    let n = raw.samples.first().map_or(0, Vec::len);
    for t in 0..n {
        w.write_record(raw.samples.iter().map(|c| c[t].to_string()))?;
    }
    w.flush()?;
    let mut m = meta;
    writeln!(m, "{RAW_META_HEADER}")?;
    writeln!(
        m,
        "{},{},{},{},{}",
        raw.q_onset_ms,
        raw.qrs_dur_ms,
        raw.heart_rate_bpm,
        raw.age_years.map(|a| a.to_string()).unwrap_or_default(),
        raw.sex
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn beat_with(i: f64, ii: f64) -> BeatMatrix {
        let mut b = BeatMatrix::zeros();
        for t in 0..BEAT_SAMPLES {
            b.set(t, 0, i);
            b.set(t, 1, ii);
        }
        b
    }

    #[test]
    fn limb_leads_worked_examples() {
        let cases = [
            ((1.0, 0.5), [-0.5, -0.75, 0.75, 0.0]),
            ((0.0, 0.0), [0.0, 0.0, 0.0, 0.0]),
            ((0.2, 0.2), [0.0, -0.2, 0.1, 0.1]),
        ];
        for ((i, ii), expected) in cases {
            let twelve = derive_limb_leads(&beat_with(i, ii));
            let got = [
                twelve.get(7, Lead::III),
                twelve.get(7, Lead::AVR),
                twelve.get(7, Lead::AVL),
                twelve.get(7, Lead::AVF),
            ];
            for (g, e) in got.iter().zip(expected) {
                assert!((g - e).abs() < 1e-15, "I={i} II={ii}: {got:?} vs {expected:?}");
            }
        }
    }

    #[test]
    fn precordial_leads_copied() {
        let mut b = BeatMatrix::zeros();
        for t in 0..BEAT_SAMPLES {
            for l in 2..8 {
                b.set(t, l, (t * 10 + l) as f64);
            }
        }
        let twelve = derive_limb_leads(&b);
        for (l, lead) in Lead::BEAT.iter().enumerate().skip(2) {
            assert_eq!(twelve.lead(*lead), b.lead(l));
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        let mut data = vec![0.0; 3200];
        data[17] = f64::NAN;
        assert!(matches!(
            BeatMatrix::new(data),
            Err(BeatError::NonFinite { sample: 2, lead: 1 })
        ));
        assert!(matches!(
            BeatMatrix::new(vec![0.0; 10]),
            Err(BeatError::InvalidShape { .. })
        ));
    }

    #[test]
    fn stitch_indices() {
        let mut b = BeatMatrix::zeros();
        for t in 0..BEAT_SAMPLES {
            b.set(t, 0, t as f64);
        }
        let rec = stitch_record(&derive_limb_leads(&b));
        assert_eq!(rec.as_slice().len(), RECORD_SAMPLES * 12);
        assert_eq!(rec.get(4799, Lead::I), 399.0);
        assert_eq!(rec.get(4999, Lead::I), 199.0);
        assert_eq!(rec.rr_interval_ms(), 800.0);
    }

    fn raw_ramp(q: f64, dur: f64, hr: f64) -> RawBeat {
        RawBeat {
            leads: Lead::BEAT.to_vec(),
            samples: (0..8)
                .map(|_| (0..RAW_BEAT_MS).map(|t| t as f64).collect())
                .collect(),
            q_onset_ms: q,
            qrs_dur_ms: dur,
            heart_rate_bpm: hr,
            age_years: Some(60.0),
            sex: Sex::Female,
        }
    }

    #[test]
    fn window_covers_centre_plus_minus_400() {
        let beat = extract_centered_window(&raw_ramp(500.0, 100.0, 70.0)).unwrap();
        // ramp value = ms index; first decimated sample averages 150 and 151
        assert_eq!(beat.get(0, 0), 150.5);
        assert_eq!(beat.get(399, 0), 948.5);
    }

    #[test]
    fn window_clamps_at_edges() {
        let beat = extract_centered_window(&raw_ramp(80.0, 80.0, 70.0)).unwrap();
        assert_eq!(beat.get(0, 3), 0.5);
        assert_eq!(beat.get(399, 3), 798.5);
        let beat = extract_centered_window(&raw_ramp(1100.0, 100.0, 70.0)).unwrap();
        assert_eq!(beat.get(0, 3), 400.5);
    }

    #[test]
    fn window_rate_excluded() {
        assert!(matches!(
            extract_centered_window(&raw_ramp(500.0, 100.0, 101.0)),
            Err(BeatError::RateExcluded { .. })
        ));
        assert!(extract_centered_window(&raw_ramp(500.0, 100.0, 100.0)).is_ok());
    }

    #[test]
    fn window_out_of_range_on_short_beat() {
        let mut raw = raw_ramp(300.0, 100.0, 60.0);
        for c in &mut raw.samples {
            c.truncate(700);
        }
        assert!(matches!(
            extract_centered_window(&raw),
            Err(BeatError::WindowOutOfRange { .. })
        ));
    }

    #[test]
    fn split_sizes() {
        let items: Vec<u32> = (0..10_013).collect();
        let (tr, te) = split_dataset(&items, 0.9, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (9011, 1002));
        for (total, train) in [(11_519, 10_367), (10_080, 9_072), (11_214, 10_092)] {
            let items: Vec<u32> = (0..total).collect();
            assert_eq!(split_dataset(&items, 0.9, 3).unwrap().0.len(), train);
        }
        let (tr, te) = split_dataset(&[1, 2], 0.5, 0).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_dataset::<u8>(&[], 0.9, 0),
            Err(BeatError::EmptyDataset)
        ));
        assert!(matches!(
            split_dataset(&[1], 1.0, 0),
            Err(BeatError::InvalidFraction(_))
        ));
    }

    #[test]
    fn csv_round_trip_exact() {
        let mut b = BeatMatrix::zeros();
        for t in 0..BEAT_SAMPLES {
            for l in 0..8 {
                b.set(t, l, ((t * 31 + l * 7) as f64).sin() / 3.0);
            }
        }
        let mut buf = Vec::new();
        write_beat_csv(&b, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("lead_I,lead_II,lead_V1,lead_V2,lead_V3,lead_V4,lead_V5,lead_V6\n"));
        assert_eq!(text.lines().count(), 401);
        assert_eq!(read_beat_csv(buf.as_slice()).unwrap(), b);
    }

    #[test]
    fn raw_beat_round_trip() {
        let raw = raw_ramp(420.0, 96.0, 72.0);
        let (mut s, mut m) = (Vec::new(), Vec::new());
        write_raw_beat(&raw, &mut s, &mut m).unwrap();
        assert!(String::from_utf8(m.clone()).unwrap().starts_with(RAW_META_HEADER));
        assert_eq!(read_raw_beat(s.as_slice(), m.as_slice()).unwrap(), raw);
    }

    fn arb_beat() -> impl Strategy<Value = BeatMatrix> {
        prop::collection::vec(-5.0f64..5.0, BEAT_SAMPLES * BEAT_LEADS)
            .prop_map(|v| BeatMatrix::new(v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn limb_identities(b in arb_beat()) {
            let tw = derive_limb_leads(&b);
            for t in 0..BEAT_SAMPLES {
                let e = tw.get(t, Lead::I) - tw.get(t, Lead::II) + tw.get(t, Lead::III);
                let g = tw.get(t, Lead::AVR) + tw.get(t, Lead::AVL) + tw.get(t, Lead::AVF);
                prop_assert!(e.abs() < 1e-9 && g.abs() < 1e-9);
            }
        }

        #[test]
        fn limb_leads_linear(x in arb_beat(), y in arb_beat(), a in -3.0f64..3.0, c in -3.0f64..3.0) {
            let combo: Vec<f64> = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| a * p + c * q).collect();
            let lhs = derive_limb_leads(&BeatMatrix::new(combo).unwrap());
            let (dx, dy) = (derive_limb_leads(&x), derive_limb_leads(&y));
            for ((l, p), q) in lhs.as_slice().iter().zip(dx.as_slice()).zip(dy.as_slice()) {
                prop_assert!((l - (a * p + c * q)).abs() < 1e-9);
            }
        }

        #[test]
        fn stitch_is_periodic(b in arb_beat()) {
            let tw = derive_limb_leads(&b);
            let rec = stitch_record(&tw);
            for t in (0..RECORD_SAMPLES).step_by(7) {
                for lead in Lead::TWELVE {
                    prop_assert_eq!(rec.get(t, lead), tw.get(t % BEAT_SAMPLES, lead));
                }
            }
        }

        #[test]
        fn window_always_400(q in 0.0f64..1100.0, dur in 40.0f64..100.0) {
            prop_assume!(q + dur <= 1200.0);
            let b = extract_centered_window(&raw_ramp(q, dur, 80.0)).unwrap();
            prop_assert_eq!(b.as_slice().len(), 3200);
        }

        #[test]
        fn split_partitions(n in 1usize..300, f in 0.05f64..0.95, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let (tr, te) = split_dataset(&items, f, seed).unwrap();
            let (tr2, te2) = split_dataset(&items, f, seed).unwrap();
            prop_assert_eq!(&tr, &tr2);
            prop_assert_eq!(&te, &te2);
            prop_assert!(((tr.len() as f64) - n as f64 * f).abs() <= 1.0);
            let mut all: Vec<usize> = tr.into_iter().chain(te).collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
        }
    }
}
