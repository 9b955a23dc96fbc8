//! Rule-based ECG interpretation: fiducial measurement on a stitched record
//! followed by a fixed-priority rule cascade.
//!
//! Cascade order: defective measurement, LBBB, acute MI, LVH, other
//! abnormal, borderline, otherwise normal, normal.

mod features;
mod rules;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat::{Category, Lead, Record10s, Sex};

pub use features::{
    bazett, extract_beat_features, extract_features, frontal_axis, representative_beat, BeatFeatures,
};
pub use rules::{
    AcutmiRules, LbbbRules, LvhRules, MeasureConfig, OnRules, RulesConfig, StThresholds, V23Thresholds,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Wave {
    P,
    #[serde(rename = "QRS")]
    Qrs,
    T,
}

impl fmt::Display for Wave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Wave::P => "P",
            Wave::Qrs => "QRS",
            Wave::T => "T",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VerifyError {
    #[error("{0} wave not detectable")]
    FeatureUndetectable(Wave),
}

#[allow(clippy::upper_case_acronyms)]
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    NO,
    ON,
    BO,
    AB,
    DE,
}

impl Severity {
    pub const ALL: [Severity; 5] = [Severity::NO, Severity::ON, Severity::BO, Severity::AB, Severity::DE];

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::NO => "NO",
            Severity::ON => "ON",
            Severity::BO => "BO",
            Severity::AB => "AB",
            Severity::DE => "DE",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Interpreted category: one of the four targets or anything else.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DxCategory {
    Normal,
    #[serde(rename = "LVH")]
    Lvh,
    #[serde(rename = "LBBB")]
    Lbbb,
    #[serde(rename = "ACUTMI")]
    Acutmi,
    Other,
}

impl From<Category> for DxCategory {
    fn from(c: Category) -> Self {
        match c {
            Category::Normal => DxCategory::Normal,
            Category::Lvh => DxCategory::Lvh,
            Category::Lbbb => DxCategory::Lbbb,
            Category::Acutmi => DxCategory::Acutmi,
        }
    }
}

impl fmt::Display for DxCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DxCategory::Normal => "Normal",
            DxCategory::Lvh => "LVH",
            DxCategory::Lbbb => "LBBB",
            DxCategory::Acutmi => "ACUTMI",
            DxCategory::Other => "Other",
        })
    }
}

/// Patient data the rules consult. Missing values resolve to a 50-year-old
/// male.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Demographics {
    pub age_years: Option<f64>,
    pub sex: Sex,
}

impl Demographics {
    pub const DEFAULT_AGE: f64 = 50.0;

    pub fn new(age_years: f64, sex: Sex) -> Self {
        Self {
            age_years: Some(age_years),
            sex,
        }
    }

    pub fn resolved(self) -> (f64, Sex) {
        let sex = match self.sex {
            Sex::Unidentified => Sex::Male,
            s => s,
        };
        (self.age_years.unwrap_or(Self::DEFAULT_AGE), sex)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub category: DxCategory,
    pub severity: Severity,
    /// Headline first, then the criteria that fired.
    pub statements: Vec<String>,
    pub age_years: f64,
    pub sex: Sex,
}

const LIMB_SEQUENCE: [Lead; 5] = [Lead::AVL, Lead::I, Lead::II, Lead::AVF, Lead::III];
const CHEST_SEQUENCE: [Lead; 6] = [Lead::V1, Lead::V2, Lead::V3, Lead::V4, Lead::V5, Lead::V6];
const LATERAL: [Lead; 3] = [Lead::I, Lead::V5, Lead::V6];

/// Every lead except aVR, whose ST mirrors the others.
fn st_leads() -> impl Iterator<Item = Lead> {
    Lead::TWELVE.into_iter().filter(|&l| l != Lead::AVR)
}

fn acutmi_reason(f: &BeatFeatures, age: f64, sex: Sex, r: &AcutmiRules) -> Option<String> {
    let excluded = |l: Lead| matches!(l, Lead::V2 | Lead::V3);
    for seq in [&LIMB_SEQUENCE[..], &CHEST_SEQUENCE[..]] {
        let mut run: Vec<Lead> = Vec::new();
        for &l in seq {
            if !excluded(l) && f.st(l) > r.st_uv.default {
                run.push(l);
                if run.len() >= r.st_uv.contiguous {
                    let names: Vec<&str> = run.iter().map(|l| l.name()).collect();
                    return Some(format!(
                        "ST elevation >{:.0} uV in {}",
                        r.st_uv.default,
                        names.join(", ")
                    ));
                }
            } else {
                run.clear();
            }
        }
    }
    let limit = match sex {
        Sex::Female => r.st_uv.v23.female,
        _ if age >= r.male_age_split => r.st_uv.v23.male_40_plus,
        _ => r.st_uv.v23.male_under_40,
    };
    [Lead::V2, Lead::V3]
        .into_iter()
        .find(|&l| f.st(l) > limit)
        .map(|l| format!("ST elevation >{limit:.0} uV in {}", l.name()))
}

/// Runs the rule cascade on measured features.
pub fn classify(f: &BeatFeatures, demographics: Demographics, rules: &RulesConfig) -> Diagnosis {
    let (age, sex) = demographics.resolved();
    let dx = |category, severity, statements: Vec<String>| Diagnosis {
        category,
        severity,
        statements,
        age_years: age,
        sex,
    };

    if let Some(w) = f.undetectable {
        return dx(
            DxCategory::Other,
            Severity::DE,
            vec!["Defective recording".into(), format!("{w} wave undetectable")],
        );
    }

    let wide = f.qrs_dur_ms > rules.lbbb.qrs_ms;
    if wide && LATERAL.iter().any(|&l| f.notched(l)) {
        return dx(
            DxCategory::Lbbb,
            Severity::AB,
            vec![
                "Left bundle branch block".into(),
                format!("QRSd>{:.0}, broad/notched R", rules.lbbb.qrs_ms),
            ],
        );
    }

    let a = &rules.acutmi;
    let eligible = match sex {
        Sex::Female => age >= a.min_age_female,
        _ => age >= a.min_age_male,
    };
    if eligible {
        if let Some(reason) = acutmi_reason(f, age, sex, a) {
            return dx(
                DxCategory::Acutmi,
                Severity::AB,
                vec!["Acute myocardial infarction".into(), reason],
            );
        }
    }

    let volt = f.s(Lead::V1) + f.r(Lead::V5).max(f.r(Lead::V6));
    let lvh = &rules.lvh;
    let mut borderline = None;
    if age >= lvh.min_age {
        if volt > lvh.voltage_mv {
            return dx(
                DxCategory::Lvh,
                Severity::AB,
                vec![
                    "Left ventricular hypertrophy".into(),
                    format!("S(V1)+R(V5/V6) {volt:.2} mV > {:.2} mV", lvh.voltage_mv),
                ],
            );
        }
        if volt > lvh.voltage_mv * (1.0 - lvh.borderline_fraction) {
            borderline = Some(format!("S(V1)+R(V5/V6) {volt:.2} mV near {:.2} mV", lvh.voltage_mv));
        }
    }

    let on = &rules.on;
    let max_dep = st_leads().map(|l| -f.st(l) / 1000.0).fold(f64::NEG_INFINITY, f64::max);
    let max_elev = st_leads().map(|l| f.st(l) / 1000.0).fold(f64::NEG_INFINITY, f64::max);
    let mut abnormal = Vec::new();
    if wide {
        abnormal.push(format!("QRSd>{:.0} without notched R", rules.lbbb.qrs_ms));
    }
    if max_dep >= on.st_dep_mv {
        abnormal.push(format!("ST depression {max_dep:.2} mV"));
    }
    if max_elev >= on.st_elev_mv {
        abnormal.push(format!("ST elevation {max_elev:.2} mV"));
    }
    if !abnormal.is_empty() {
        let mut s = vec!["Abnormal ECG".to_string()];
        s.extend(abnormal);
        return dx(DxCategory::Other, Severity::AB, s);
    }
    if let Some(reason) = borderline {
        return dx(
            DxCategory::Other,
            Severity::BO,
            vec!["Borderline left ventricular hypertrophy".into(), reason],
        );
    }

    let mut minor = Vec::new();
    if f.qtc_ms < on.qtc_ms {
        minor.push(format!("Short QTc {:.0} ms", f.qtc_ms));
    }
    if max_dep > on.st_floor_mv {
        minor.push(format!("Minor ST depression {max_dep:.2} mV"));
    }
    if max_elev > on.st_floor_mv {
        minor.push(format!("Minor ST elevation {max_elev:.2} mV"));
    }
    if !minor.is_empty() {
        let mut s = vec!["Otherwise normal ECG".to_string()];
        s.extend(minor);
        return dx(DxCategory::Other, Severity::ON, s);
    }
    dx(DxCategory::Normal, Severity::NO, vec!["Normal ECG".into()])
}

/// Measures a record and classifies it. Measurement failures become a
/// defective diagnosis rather than an error.
pub fn assess(record: &Record10s, demographics: Demographics, rules: &RulesConfig) -> (BeatFeatures, Diagnosis) {
    let features = match extract_features(record, &rules.measure) {
        Ok(f) => f,
        Err(VerifyError::FeatureUndetectable(w)) => BeatFeatures::undetectable(w),
    };
    let dx = classify(&features, demographics, rules);
    (features, dx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Verified(Diagnosis),
    Rejected(Diagnosis),
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified(_))
    }

    pub fn diagnosis(&self) -> &Diagnosis {
        match self {
            Verdict::Verified(d) | Verdict::Rejected(d) => d,
        }
    }
}

pub fn verify_target(
    record: &Record10s,
    target: Category,
    demographics: Demographics,
    rules: &RulesConfig,
) -> Verdict {
    let (_, dx) = assess(record, demographics, rules);
    if dx.category == DxCategory::from(target) {
        Verdict::Verified(dx)
    } else {
        Verdict::Rejected(dx)
    }
}

/// Fixed-layout summary: measurements on the left, interpretation on the
/// right, then the criteria and the severity code.
pub fn render_report(f: &BeatFeatures, dx: &Diagnosis) -> String {
    let num = |v: f64| {
        if f.undetectable.is_some() {
            "---".to_string()
        } else {
            format!("{v:.0}")
        }
    };
    let left = [
        format!("Rate {}", num(f.rate_bpm)),
        format!("PR {}", num(f.pr_ms)),
        format!("QRSd {}", num(f.qrs_dur_ms)),
        format!("QT {}", num(f.qt_ms)),
        format!("QTc {}", num(f.qtc_ms)),
        "Axes".to_string(),
        format!("P {}", num(f.p_axis_deg)),
        format!("QRS {}", num(f.qrs_axis_deg)),
        format!("T {}", num(f.t_axis_deg)),
    ];
    let mut right = vec!["Sinus rhythm".to_string()];
    right.extend(dx.statements.first().cloned());
    let mut out = String::new();
    for (k, l) in left.iter().enumerate() {
        match right.get(k) {
            Some(r) => out.push_str(&format!("{l:<12}{r}\n")),
            None => out.push_str(&format!("{l}\n")),
        }
    }
    out.push('\n');
    for s in dx.statements.iter().skip(1) {
        out.push_str(s);
        out.push('\n');
    }
    out.push_str(&format!("Category {}\n", dx.category));
    out.push_str(&format!("Severity {}\n", dx.severity));
    out.push_str(&format!("Age {:.0} Sex {}\n", dx.age_years, dx.sex));
    out
}
