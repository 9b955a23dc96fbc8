//! Fiducial detection on a representative twelve-lead beat.

use serde::{Deserialize, Serialize};

use super::rules::MeasureConfig;
use super::{VerifyError, Wave};
use crate::beat::{Lead, Record10s, TwelveLeadBeat, BEAT_SAMPLES, RECORD_SAMPLES, RR_INTERVAL_MS, SPS};

const MS_PER_SAMPLE: f64 = 1000.0 / SPS as f64;

/// Measured intervals, axes and per-lead amplitudes.
///
/// Per-lead arrays follow the twelve-lead order `I, II, III, aVR, aVL, aVF,
/// V1..V6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatFeatures {
    pub rate_bpm: f64,
    pub pr_ms: f64,
    pub qrs_dur_ms: f64,
    pub qt_ms: f64,
    pub qtc_ms: f64,
    pub p_axis_deg: f64,
    pub qrs_axis_deg: f64,
    pub t_axis_deg: f64,
    /// Level 60 ms after the QRS offset, relative to baseline.
    pub st_level_uv: [f64; 12],
    pub r_notched: [bool; 12],
    pub r_amp_mv: [f64; 12],
    pub s_amp_mv: [f64; 12],
    /// Set when a wave could not be found; the remaining fields are then
    /// meaningless.
    pub undetectable: Option<Wave>,
}

impl BeatFeatures {
    /// A plain normal beat: the starting point for hand-built feature sets.
    pub fn unremarkable() -> Self {
        Self {
            rate_bpm: 75.0,
            pr_ms: 160.0,
            qrs_dur_ms: 90.0,
            qt_ms: 380.0,
            qtc_ms: bazett(380.0, RR_INTERVAL_MS),
            p_axis_deg: 50.0,
            qrs_axis_deg: 45.0,
            t_axis_deg: 40.0,
            st_level_uv: [0.0; 12],
            r_notched: [false; 12],
            r_amp_mv: [0.8; 12],
            s_amp_mv: [0.3; 12],
            undetectable: None,
        }
    }

    pub fn undetectable(wave: Wave) -> Self {
        Self {
            undetectable: Some(wave),
            ..Self::unremarkable()
        }
    }

    pub fn st(&self, lead: Lead) -> f64 {
        self.st_level_uv[lead.twelve_index()]
    }

    pub fn set_st(&mut self, lead: Lead, uv: f64) {
        self.st_level_uv[lead.twelve_index()] = uv;
    }

    pub fn notched(&self, lead: Lead) -> bool {
        self.r_notched[lead.twelve_index()]
    }

    pub fn r(&self, lead: Lead) -> f64 {
        self.r_amp_mv[lead.twelve_index()]
    }

    pub fn s(&self, lead: Lead) -> f64 {
        self.s_amp_mv[lead.twelve_index()]
    }
}

/// QT corrected by the square root of the RR interval in seconds.
pub fn bazett(qt_ms: f64, rr_ms: f64) -> f64 {
    qt_ms / (rr_ms / 1000.0).sqrt()
}

/// Hexaxial angle of a net vector with components in leads I and aVF, in
/// `(-180, 180]` degrees.
pub fn frontal_axis(lead_i: f64, lead_avf: f64) -> f64 {
    let deg = lead_avf.atan2(lead_i).to_degrees();
    if deg <= -180.0 {
        deg + 360.0
    } else {
        deg
    }
}

/// Averages the complete beat cycles of a stitched record.
pub fn representative_beat(record: &Record10s) -> TwelveLeadBeat {
    let cycles = RECORD_SAMPLES / BEAT_SAMPLES;
    let src = record.as_slice();
    let mut data = vec![0.0; BEAT_SAMPLES * 12];
    for c in 0..cycles {
        for (d, s) in data.iter_mut().zip(&src[c * BEAT_SAMPLES * 12..]) {
            *d += s;
        }
    }
    data.iter_mut().for_each(|v| *v /= cycles as f64);
    TwelveLeadBeat::new(data).expect("average of finite samples")
}

pub fn extract_features(record: &Record10s, cfg: &MeasureConfig) -> Result<BeatFeatures, VerifyError> {
    extract_beat_features(&representative_beat(record), record.rr_interval_ms(), cfg)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn ms_to_samples(ms: f64) -> usize {
    (ms / MS_PER_SAMPLE).round() as usize
}

/// Fractional index where `env` first drops below `thr`, walking from `peak`
/// in direction `step` (±1). Linear interpolation between the bracketing
/// samples.
fn crossing(env: &[f64], peak: usize, thr: f64, step: isize, limit: usize) -> f64 {
    let mut t = peak as isize;
    loop {
        let next = t + step;
        if next < 0 || next as usize >= env.len() || (step < 0 && (next as usize) < limit) || (step > 0 && next as usize > limit) {
            return t as f64;
        }
        let (a, b) = (env[t as usize], env[next as usize]);
        if b < thr {
            let frac = if a > b { (a - thr) / (a - b) } else { 1.0 };
            return t as f64 + step as f64 * frac;
        }
        t = next;
    }
}

fn is_notched(x: &[f64], dip_mv: f64, min_peak: f64) -> bool {
    let peaks: Vec<usize> = (1..x.len().saturating_sub(1))
        .filter(|&t| x[t] > x[t - 1] && x[t] >= x[t + 1] && x[t] > min_peak)
        .collect();
    peaks.windows(2).any(|w| {
        let dip = x[w[0]..=w[1]].iter().copied().fold(f64::INFINITY, f64::min);
        x[w[0]].min(x[w[1]]) - dip >= dip_mv
    })
}

/// Measures one twelve-lead beat; `rr_ms` feeds rate and QTc.
pub fn extract_beat_features(
    beat: &TwelveLeadBeat,
    rr_ms: f64,
    cfg: &MeasureConfig,
) -> Result<BeatFeatures, VerifyError> {
    let n = BEAT_SAMPLES;
    let leads: Vec<Vec<f64>> = Lead::TWELVE
        .iter()
        .map(|&l| {
            let raw = beat.lead(l);
            let base = median(&mut raw[..cfg.baseline_samples.clamp(1, n)].to_vec());
            raw.iter().map(|v| v - base).collect()
        })
        .collect();

    // summed absolute central slope
    let mut slope = vec![0.0; n];
    for t in 1..n - 1 {
        slope[t] = leads.iter().map(|x| (x[t + 1] - x[t - 1]).abs() * 0.5).sum();
    }
    let lo = cfg.edge_samples.min(n / 2 - 1);
    let (tpk, dmax) = (lo..n - lo).fold((lo, 0.0), |b, t| if slope[t] > b.1 { (t, slope[t]) } else { b });
    if dmax < cfg.qrs_slope_floor {
        return Err(VerifyError::FeatureUndetectable(Wave::Qrs));
    }
    let thr = cfg.slope_fraction * dmax;
    let edge = |dir: isize| -> usize {
        let mut last = tpk;
        let mut quiet = 0;
        let mut t = tpk as isize;
        while quiet < cfg.gap_samples {
            t += dir;
            if t < 0 || t as usize >= n {
                break;
            }
            if slope[t as usize] >= thr {
                last = t as usize;
                quiet = 0;
            } else {
                quiet += 1;
            }
        }
        last
    };
    let qrs_on = edge(-1);
    let qrs_off = edge(1);
    if qrs_on == 0 || qrs_off >= n - 1 {
        return Err(VerifyError::FeatureUndetectable(Wave::Qrs));
    }

    let envelope: Vec<f64> = (0..n)
        .map(|t| leads.iter().map(|x| x[t].abs()).fold(0.0, f64::max))
        .collect();

    // P wave
    let p_lo = qrs_on.saturating_sub(ms_to_samples(cfg.p_search_ms));
    let p_hi = qrs_on.saturating_sub(2);
    if p_hi <= p_lo {
        return Err(VerifyError::FeatureUndetectable(Wave::P));
    }
    let p_pk = (p_lo..p_hi).fold(p_lo, |b, t| if envelope[t] > envelope[b] { t } else { b });
    if envelope[p_pk] < cfg.p_floor_mv {
        return Err(VerifyError::FeatureUndetectable(Wave::P));
    }
    let p_thr = cfg.wave_fraction * envelope[p_pk];
    let p_on = crossing(&envelope, p_pk, p_thr, -1, 0);
    let p_off = crossing(&envelope, p_pk, p_thr, 1, qrs_on);

    // T wave
    let t_lo = qrs_off + ms_to_samples(cfg.t_skip_ms);
    if t_lo >= n - 1 {
        return Err(VerifyError::FeatureUndetectable(Wave::T));
    }
    let t_pk = (t_lo..n).fold(t_lo, |b, t| if envelope[t] > envelope[b] { t } else { b });
    if envelope[t_pk] < cfg.t_floor_mv {
        return Err(VerifyError::FeatureUndetectable(Wave::T));
    }
    let t_end = crossing(&envelope, t_pk, cfg.wave_fraction * envelope[t_pk], 1, n - 1);

    let area = |lead: Lead, a: usize, b: usize| -> f64 { leads[lead.twelve_index()][a..=b.min(n - 1)].iter().sum() };
    let axis = |a: usize, b: usize| frontal_axis(area(Lead::I, a, b), area(Lead::AVF, a, b));

    let st_idx = (qrs_off + ms_to_samples(cfg.st_offset_ms)).min(n - 1);
    let mut st_level_uv = [0.0; 12];
    let mut r_notched = [false; 12];
    let mut r_amp_mv = [0.0; 12];
    let mut s_amp_mv = [0.0; 12];
    for (k, x) in leads.iter().enumerate() {
        st_level_uv[k] = x[st_idx] * 1000.0;
        let qrs = &x[qrs_on..=qrs_off];
        r_amp_mv[k] = qrs.iter().copied().fold(0.0, f64::max);
        s_amp_mv[k] = -qrs.iter().copied().fold(0.0, f64::min);
        r_notched[k] = is_notched(qrs, cfg.notch_dip_mv, cfg.notch_min_peak_mv);
    }

    let qt_ms = (t_end - qrs_on as f64) * MS_PER_SAMPLE;
    Ok(BeatFeatures {
        rate_bpm: 60_000.0 / rr_ms,
        pr_ms: (qrs_on as f64 - p_on) * MS_PER_SAMPLE,
        qrs_dur_ms: (qrs_off - qrs_on) as f64 * MS_PER_SAMPLE,
        qt_ms,
        qtc_ms: bazett(qt_ms, rr_ms),
        p_axis_deg: axis(p_on.floor() as usize, p_off.ceil() as usize),
        qrs_axis_deg: axis(qrs_on, qrs_off),
        t_axis_deg: axis(qrs_off, t_end.ceil() as usize),
        st_level_uv,
        r_notched,
        r_amp_mv,
        s_amp_mv,
        undetectable: None,
    })
}
