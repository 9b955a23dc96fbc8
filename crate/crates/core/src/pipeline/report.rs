use std::path::Path;

use super::corpus::Corpus;
use super::run::RunManifest;
use super::{PipelineConfig, PipelineError, Result};
use crate::beat::{derive_limb_leads, load_beat, BeatMatrix, RR_INTERVAL_MS};
use crate::evalstats::{bias_assessment, BiasReport, ConfusionMatrix, EvalError, FeatureRow};
use crate::par::*;
use crate::verifier::{extract_beat_features, MeasureConfig};

/// PR, QRS and QT durations and the P, QRS and T axes of a beat; all NaN
/// when a wave cannot be found.
pub fn feature_row(beat: &BeatMatrix, cfg: &MeasureConfig) -> FeatureRow {
    match extract_beat_features(&derive_limb_leads(beat), RR_INTERVAL_MS, cfg) {
        Ok(f) if f.undetectable.is_none() => [f.pr_ms, f.qrs_dur_ms, f.qt_ms, f.p_axis_deg, f.qrs_axis_deg, f.t_axis_deg],
        _ => [f64::NAN; 6],
    }
}

pub fn feature_rows(beats: &[BeatMatrix], cfg: &MeasureConfig) -> Vec<FeatureRow> {
    beats.par_iter().map(|b| feature_row(b, cfg)).collect()
}

/// Synthetic beats of a run against the training and testing beats of its
/// corpus.
pub fn cmd_evaluate(run_dir: &Path, corpus_dir: &Path, cfg: &PipelineConfig) -> Result<BiasReport> {
    let run = RunManifest::load(run_dir)?;
    let corpus = Corpus::load_for(corpus_dir, Some(run.category))?;
    if corpus.fingerprint() != run.corpus.fingerprint {
        return Err(PipelineError::Config(format!(
            "{} is not the corpus run {} was trained on",
            corpus.dir.display(),
            run.campaign_id
        )));
    }
    if run.records.is_empty() {
        return Err(EvalError::EmptySet.into());
    }
    let synthetic: Vec<BeatMatrix> = run
        .records
        .iter()
        .map(|r| {
            let p = run_dir.join(&r.beat);
            load_beat(&p).map_err(|e| PipelineError::format(&p, e))
        })
        .collect::<Result<_>>()?;
    let measure = &cfg.rules.measure;
    let feats = [
        feature_rows(&synthetic, measure),
        feature_rows(&corpus.train, measure),
        feature_rows(&corpus.test, measure),
    ];
    Ok(bias_assessment(
        [&synthetic, &corpus.train, &corpus.test],
        [&feats[0], &feats[1], &feats[2]],
        cfg.evaluation.bins,
        cfg.evaluation.seed,
    )?)
}

/// One row of the success-rate table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub campaign_id: String,
    pub category: String,
    pub mode: String,
    pub epochs: u64,
    pub plausible: u64,
    pub verified: u64,
    pub success_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub rows: Vec<SummaryRow>,
    pub confusion: ConfusionMatrix,
}

impl RunSummary {
    /// Success-rate table as CSV; undefined rates print as `undefined`.
    pub fn table_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["campaign_id", "category", "mode", "epochs", "plausible", "verified", "success_rate_pct"])
            .expect("in-memory write");
        for r in &self.rows {
            let rate = r.success_rate.map_or("undefined".to_string(), |v| format!("{v:.1}"));
            w.write_record([
                r.campaign_id.clone(),
                r.category.clone(),
                r.mode.clone(),
                r.epochs.to_string(),
                r.plausible.to_string(),
                r.verified.to_string(),
                rate,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }
}

/// Success rates per run and the confusion matrix merged over all runs.
pub fn cmd_report(run_dirs: &[&Path]) -> Result<RunSummary> {
    let mut rows = Vec::new();
    let mut confusion = ConfusionMatrix::default();
    for dir in run_dirs {
        let m = RunManifest::load(dir)?;
        confusion.merge(&m.confusion());
        rows.push(SummaryRow {
            campaign_id: m.campaign_id.clone(),
            category: m.category.to_string(),
            mode: m.mode.to_string(),
            epochs: m.epochs_run,
            plausible: m.plausible,
            verified: m.verified,
            success_rate: m.success_rate,
        });
    }
    Ok(RunSummary { rows, confusion })
}
