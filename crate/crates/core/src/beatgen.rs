//! Parametric beat synthesis: sums of Gaussian waves plus an ST plateau.
//!
//! Timing is shared by all leads; each lead scales the common waves with its
//! own amplitude. Wave extents are taken as ±2.5σ, which is how ground-truth
//! intervals are derived from a template.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat::{BeatMatrix, Category, Sex, BEAT_LEADS, BEAT_SAMPLES, RR_INTERVAL_MS, SPS};
use crate::derive_seed;
use crate::par::{IntoParallelIterator, ParallelIterator};
use crate::verifier::Demographics;

/// Centre of the QRS complex inside the 800 ms window.
pub const QRS_CENTER_MS: f64 = 400.0;
/// Half-width of a wave in units of its σ.
pub const EXTENT_SIGMAS: f64 = 2.5;
/// Rise time of the ST plateau after the J point.
pub const ST_RISE_MS: f64 = 60.0;

const MS_PER_SAMPLE: f64 = 1000.0 / SPS as f64;
const LBBB_QS_SHIFT: f64 = 0.05;
const LBBB_QS_WIDTH: f64 = 0.12;

#[derive(Debug, Error, PartialEq)]
pub enum BeatgenError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
}

/// One Gaussian wave shared by all leads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center_ms: f64,
    /// Standard deviation.
    pub width_ms: f64,
    /// Per-lead peak, leads `[I, II, V1..V6]`.
    pub amplitude_mv: [f64; BEAT_LEADS],
}

impl Bump {
    fn at(&self, t_ms: f64, lead: usize) -> f64 {
        let z = (t_ms - self.center_ms) / self.width_ms;
        self.amplitude_mv[lead] * (-0.5 * z * z).exp()
    }

    pub fn onset_ms(&self) -> f64 {
        self.center_ms - EXTENT_SIGMAS * self.width_ms
    }

    pub fn offset_ms(&self) -> f64 {
        self.center_ms + EXTENT_SIGMAS * self.width_ms
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatTemplate {
    pub p: Bump,
    pub q: Bump,
    pub r: Bump,
    /// Second R peak of a notched complex.
    pub r_prime: Option<Bump>,
    pub s: Bump,
    pub t: Bump,
    /// Plateau between the J point and the T peak, per lead.
    pub st_offset_mv: [f64; BEAT_LEADS],
    pub qrs_dur_ms: f64,
    pub qt_ms: f64,
    pub pr_ms: f64,
    pub noise_std_mv: f64,
    pub seed: u64,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl BeatTemplate {
    pub fn qrs_onset_ms(&self) -> f64 {
        QRS_CENTER_MS - 0.5 * self.qrs_dur_ms
    }

    pub fn j_point_ms(&self) -> f64 {
        QRS_CENTER_MS + 0.5 * self.qrs_dur_ms
    }

    fn bumps(&self) -> impl Iterator<Item = &Bump> {
        [&self.p, &self.q, &self.r, &self.s, &self.t]
            .into_iter()
            .chain(self.r_prime.as_ref())
    }

    pub fn validate(&self) -> Result<(), BeatgenError> {
        let bad = |m: &str| Err(BeatgenError::InvalidTemplate(m.into()));
        if self.bumps().any(|b| !(b.width_ms > 0.0)) {
            return bad("wave widths must be positive");
        }
        let finite = self
            .bumps()
            .flat_map(|b| b.amplitude_mv.iter().chain([&b.center_ms, &b.width_ms]))
            .chain(&self.st_offset_mv)
            .chain([&self.qrs_dur_ms, &self.qt_ms, &self.pr_ms, &self.noise_std_mv])
            .all(|v| v.is_finite());
        if !finite {
            return bad("parameters must be finite");
        }
        if !(0.0 <= self.pr_ms && self.pr_ms < self.qt_ms) {
            return bad("need 0 <= pr_ms < qt_ms");
        }
        if !(self.qrs_dur_ms > 0.0) || self.noise_std_mv < 0.0 {
            return bad("qrs_dur_ms must be positive and noise non-negative");
        }
        let order = [self.p.center_ms, self.q.center_ms, self.r.center_ms, self.s.center_ms, self.t.center_ms];
        if order.windows(2).any(|w| w[0] >= w[1]) {
            return bad("wave centres must be ordered P < Q < R < S < T");
        }
        if let Some(rp) = &self.r_prime {
            if !(self.r.center_ms < rp.center_ms && rp.center_ms < self.t.center_ms) {
                return bad("R' must lie between R and T");
            }
        }
        Ok(())
    }

    /// Noise-free value of `lead` at `t_ms`.
    pub fn value(&self, t_ms: f64, lead: usize) -> f64 {
        let waves: f64 = self.bumps().map(|b| b.at(t_ms, lead)).sum();
        let j = self.j_point_ms();
        let rise = smoothstep((t_ms - j) / ST_RISE_MS);
        let fall = 1.0 - smoothstep((t_ms - j - ST_RISE_MS) / (self.t.center_ms - j - ST_RISE_MS).max(1.0));
        waves + self.st_offset_mv[lead] * rise * fall
    }
}

pub fn render_beat(template: &BeatTemplate) -> Result<BeatMatrix, BeatgenError> {
    template.validate()?;
    let mut data = Vec::with_capacity(BEAT_SAMPLES * BEAT_LEADS);
    for i in 0..BEAT_SAMPLES {
        let t = i as f64 * MS_PER_SAMPLE;
        for l in 0..BEAT_LEADS {
            data.push(template.value(t, l));
        }
    }
    if template.noise_std_mv > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(template.seed);
        let noise = Normal::new(0.0, template.noise_std_mv).expect("validated std");
        data.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    Ok(BeatMatrix::new(data).expect("finite template renders finite samples"))
}

/// Intervals and levels a noiseless render is known to have.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub category: Category,
    pub pr_ms: f64,
    pub qrs_dur_ms: f64,
    pub qt_ms: f64,
    pub qtc_ms: f64,
    pub qrs_onset_ms: f64,
    /// Plateau level per beat lead.
    pub st_offset_mv: [f64; BEAT_LEADS],
    /// `S(V1) + max(R(V5), R(V6))` of the template amplitudes.
    pub lvh_voltage_mv: f64,
    pub age_years: f64,
    pub sex: Sex,
}

impl GroundTruth {
    pub fn demographics(&self) -> Demographics {
        Demographics::new(self.age_years, self.sex)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBeat {
    pub beat: BeatMatrix,
    pub template: BeatTemplate,
    pub truth: GroundTruth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusOptions {
    pub noise_std_mv: f64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self { noise_std_mv: 0.0 }
    }
}

// lead order I, II, V1, V2, V3, V4, V5, V6
const P_SHAPE: [f64; 8] = [0.10, 0.15, 0.07, 0.09, 0.10, 0.10, 0.10, 0.09];
const Q_SHAPE: [f64; 8] = [-0.06, -0.08, 0.0, 0.0, 0.0, -0.05, -0.10, -0.10];
const R_SHAPE: [f64; 8] = [0.70, 1.00, 0.25, 0.55, 0.85, 1.20, 1.30, 1.00];
const S_SHAPE: [f64; 8] = [-0.15, -0.20, -0.90, -1.20, -0.80, -0.45, -0.20, -0.10];
const T_SHAPE: [f64; 8] = [0.25, 0.30, 0.05, 0.40, 0.45, 0.40, 0.30, 0.25];

fn jitter<const N: usize>(rng: &mut impl Rng, base: [f64; N], spread: f64) -> [f64; N] {
    base.map(|v| v * rng.random_range(1.0 - spread..1.0 + spread))
}

fn u(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

/// Draws the template of one corpus beat.
pub fn sample_template(category: Category, rng: &mut impl Rng, options: &CorpusOptions) -> BeatTemplate {
    let qrs = match category {
        Category::Lbbb => u(rng, 130.0, 160.0),
        Category::Lvh => u(rng, 86.0, 110.0),
        _ => u(rng, 80.0, 100.0),
    };
    let qt = match category {
        Category::Lbbb => u(rng, 400.0, 440.0),
        Category::Lvh => u(rng, 370.0, 410.0),
        _ => u(rng, 360.0, 400.0),
    };
    let pr = u(rng, 140.0, 180.0);
    let p_dur = u(rng, 80.0, 100.0);
    let t_sigma = u(rng, 34.0, 44.0);
    let on = QRS_CENTER_MS - 0.5 * qrs;

    let p = Bump {
        center_ms: on - pr + 0.5 * p_dur,
        width_ms: p_dur / (2.0 * EXTENT_SIGMAS),
        amplitude_mv: jitter(rng, P_SHAPE, 0.2),
    };
    let mut q = Bump {
        center_ms: QRS_CENTER_MS - 0.25 * qrs,
        width_ms: 0.1 * qrs,
        amplitude_mv: jitter(rng, Q_SHAPE, 0.2),
    };
    let mut r = Bump {
        center_ms: QRS_CENTER_MS,
        width_ms: qrs / (2.0 * EXTENT_SIGMAS),
        amplitude_mv: jitter(rng, R_SHAPE, 0.15),
    };
    let mut s = Bump {
        center_ms: QRS_CENTER_MS + 0.25 * qrs,
        width_ms: 0.1 * qrs,
        amplitude_mv: jitter(rng, S_SHAPE, 0.15),
    };
    let mut t = Bump {
        center_ms: on + qt - EXTENT_SIGMAS * t_sigma,
        width_ms: t_sigma,
        amplitude_mv: jitter(rng, T_SHAPE, 0.2),
    };
    let mut st = [0.0; BEAT_LEADS];
    let mut r_prime = None;

    match category {
        Category::Normal => {
            // keep the voltage sum clear of the borderline band
            let volt = -s.amplitude_mv[2] + r.amplitude_mv[6].max(r.amplitude_mv[7]);
            let cap = u(rng, 2.0, 2.9);
            if volt > cap {
                let k = cap / volt;
                r.amplitude_mv.iter_mut().chain(s.amplitude_mv.iter_mut()).for_each(|v| *v *= k);
            }
        }
        Category::Lvh => {
            let volt = u(rng, 4.0, 5.5);
            let share = u(rng, 0.35, 0.45);
            s.amplitude_mv[2] = -share * volt;
            s.amplitude_mv[3] = -share * volt * u(rng, 1.0, 1.2);
            r.amplitude_mv[6] = (1.0 - share) * volt;
            r.amplitude_mv[7] = (1.0 - share) * volt * u(rng, 0.75, 0.95);
            r.amplitude_mv[5] = (1.0 - share) * volt * u(rng, 0.8, 1.0);
            r.amplitude_mv[0] *= 1.4;
            // lateral strain pattern
            for l in [0, 6, 7] {
                t.amplitude_mv[l] = -u(rng, 0.1, 0.25);
            }
        }
        Category::Lbbb => {
            let width = 0.1 * qrs;
            let lateral = |rng: &mut ChaCha8Rng| u(rng, 0.7, 1.3);
            let mut lrng = ChaCha8Rng::seed_from_u64(rng.random());
            let mut amp1 = [0.0; BEAT_LEADS];
            let mut amp2 = [0.0; BEAT_LEADS];
            // I, V5, V6 broad notched R; II smaller notched
            for (l, a) in [(0, 0.9), (1, 0.5), (5, 0.6), (6, 1.2), (7, 1.1)] {
                amp1[l] = a * lateral(&mut lrng);
                amp2[l] = amp1[l] * u(&mut lrng, 0.9, 1.2);
            }
            r = Bump {
                center_ms: QRS_CENTER_MS - 0.25 * qrs,
                width_ms: width,
                amplitude_mv: amp1,
            };
            r_prime = Some(Bump {
                center_ms: QRS_CENTER_MS + 0.25 * qrs,
                width_ms: width,
                amplitude_mv: amp2,
            });
            q.amplitude_mv = [0.0; BEAT_LEADS];
            q.center_ms = QRS_CENTER_MS - 0.35 * qrs;
            q.width_ms = 0.06 * qrs;
            // deep QS in V1-V3
            let mut qs = [0.0; BEAT_LEADS];
            for (l, a) in [(2, -1.0), (3, -1.5), (4, -1.2)] {
                qs[l] = a * lateral(&mut lrng);
            }
            s = Bump {
                center_ms: QRS_CENTER_MS + LBBB_QS_SHIFT * qrs,
                width_ms: LBBB_QS_WIDTH * qrs,
                amplitude_mv: qs,
            };
            // discordant ST-T
            for l in [0, 6, 7] {
                st[l] = -u(rng, 0.04, 0.08);
                t.amplitude_mv[l] = -u(rng, 0.2, 0.35);
            }
            for l in [2, 3, 4] {
                st[l] = u(rng, 0.06, 0.12);
                t.amplitude_mv[l] = u(rng, 0.3, 0.5);
            }
        }
        Category::Acutmi => {
            for l in [2, 3, 4, 5] {
                st[l] = u(rng, 0.25, 0.45);
                t.amplitude_mv[l] = u(rng, 0.6, 0.9);
                r.amplitude_mv[l] *= 0.7;
            }
            // reciprocal depression is absent in anterior leads only
            st[0] = u(rng, 0.0, 0.05);
        }
    }

    BeatTemplate {
        p,
        q,
        r,
        r_prime,
        s,
        t,
        st_offset_mv: st,
        qrs_dur_ms: qrs,
        qt_ms: qt,
        pr_ms: pr,
        noise_std_mv: options.noise_std_mv,
        seed: rng.random(),
    }
}

fn truth_of(template: &BeatTemplate, category: Category, age_years: f64, sex: Sex) -> GroundTruth {
    let v1 = -template.s.amplitude_mv[2].min(0.0) - template.r.amplitude_mv[2].min(0.0);
    let r_of = |l: usize| {
        template.r.amplitude_mv[l].max(0.0)
            + template.r_prime.as_ref().map_or(0.0, |b| b.amplitude_mv[l].max(0.0))
    };
    GroundTruth {
        category,
        pr_ms: template.pr_ms,
        qrs_dur_ms: template.qrs_dur_ms,
        qt_ms: template.qt_ms,
        qtc_ms: template.qt_ms / (RR_INTERVAL_MS / 1000.0).sqrt(),
        qrs_onset_ms: template.qrs_onset_ms(),
        st_offset_mv: template.st_offset_mv,
        lvh_voltage_mv: v1 + r_of(6).max(r_of(7)),
        age_years,
        sex,
    }
}

/// `n` labelled beats of one category. Beat `i` depends only on `(seed, i)`.
pub fn make_corpus(
    category: Category,
    n: usize,
    seed: u64,
    options: &CorpusOptions,
) -> Result<Vec<LabeledBeat>, BeatgenError> {
    if n == 0 {
        return Err(BeatgenError::EmptyCorpus);
    }
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[category as u64, i]));
            let template = sample_template(category, &mut rng, options);
            let age = u(&mut rng, 40.0, 75.0).round();
            let sex = if rng.random_bool(0.5) { Sex::Male } else { Sex::Female };
            let beat = render_beat(&template)?;
            let truth = truth_of(&template, category, age, sex);
            Ok(LabeledBeat { beat, template, truth })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_template() -> BeatTemplate {
        let bump = |c: f64| Bump {
            center_ms: c,
            width_ms: 10.0,
            amplitude_mv: [0.0; BEAT_LEADS],
        };
        BeatTemplate {
            p: bump(200.0),
            q: bump(380.0),
            r: bump(400.0),
            r_prime: None,
            s: bump(420.0),
            t: bump(600.0),
            st_offset_mv: [0.0; BEAT_LEADS],
            qrs_dur_ms: 90.0,
            qt_ms: 380.0,
            pr_ms: 160.0,
            noise_std_mv: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn zero_amplitudes_render_zero() {
        let b = render_beat(&flat_template()).unwrap();
        assert!(b.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn r_peak_at_centre() {
        let mut t = flat_template();
        t.r.amplitude_mv[1] = 1.0;
        let b = render_beat(&t).unwrap();
        let lead = b.lead(1);
        let (at, max) = lead
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        assert_eq!(at, 200);
        assert!((max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let mut t = flat_template();
        t.noise_std_mv = 0.05;
        assert_eq!(render_beat(&t).unwrap(), render_beat(&t).unwrap());
        let mut u = t.clone();
        u.seed = 2;
        assert_ne!(render_beat(&t).unwrap(), render_beat(&u).unwrap());
    }

    #[test]
    fn invalid_templates() {
        let mut t = flat_template();
        t.r.width_ms = 0.0;
        assert!(render_beat(&t).is_err());
        let mut t = flat_template();
        t.s.center_ms = 390.0;
        assert!(render_beat(&t).is_err());
        let mut t = flat_template();
        t.pr_ms = 400.0;
        assert!(render_beat(&t).is_err());
        assert_eq!(
            make_corpus(Category::Normal, 0, 1, &CorpusOptions::default()),
            Err(BeatgenError::EmptyCorpus)
        );
    }

    #[test]
    fn small_parameter_changes_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = sample_template(Category::Normal, &mut rng, &CorpusOptions::default());
        let base = render_beat(&t).unwrap();
        let mut u = t.clone();
        u.r.center_ms += 1e-4;
        u.t.amplitude_mv[3] += 1e-4;
        let moved = render_beat(&u).unwrap();
        let d = base
            .as_slice()
            .iter()
            .zip(moved.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d > 0.0 && d < 1e-3);
    }

    #[test]
    fn category_ranges() {
        let opts = CorpusOptions::default();
        for lb in make_corpus(Category::Lbbb, 20, 3, &opts).unwrap() {
            assert!(lb.truth.qrs_dur_ms > 120.0);
        }
        for lb in make_corpus(Category::Acutmi, 20, 3, &opts).unwrap() {
            assert!(lb.truth.st_offset_mv[3] > 0.20);
        }
        for lb in make_corpus(Category::Lvh, 20, 3, &opts).unwrap() {
            assert!(lb.truth.lvh_voltage_mv > 3.5);
        }
        let a = make_corpus(Category::Normal, 5, 9, &opts).unwrap();
        let b = make_corpus(Category::Normal, 5, 9, &opts).unwrap();
        assert_eq!(a, b);
    }
}
