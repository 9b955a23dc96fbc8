use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::Corpus;
use super::{jsonl, read_json, read_text, to_json_pretty, write_atomic, PipelineConfig, PipelineError, Result};
use crate::beat::{load_beat, write_beat_csv, BeatMatrix, Category};
use crate::evalstats::{success_rate, tally_confusion, ConfusionMatrix};
use crate::gan::{
    init_seed, train_epoch, Campaign, CampaignReport, EpochOutcome, GanError, GanState, Mode, TrainMetrics,
};
use crate::nn::Checkpoint;
use crate::par::*;
use crate::verifier::{assess, render_report, BeatFeatures, Demographics, Diagnosis, DxCategory, Severity};
use crate::xml::{export_xml, import_xml, XmlMetadata};

pub const RUN_MANIFEST: &str = "manifest.json";
pub const METRICS_LOG: &str = "metrics.jsonl";
pub const AUDIT_LOG: &str = "audit.jsonl";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const TRAIN_CHECKPOINT: &str = "checkpoint.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    /// Interrupted or still running; `--resume` continues it.
    Partial,
    Complete,
}

/// A verified record and the files it was written to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub epoch: u64,
    pub init_index: u64,
    pub xml: String,
    pub beat: String,
    pub category: DxCategory,
    pub severity: Severity,
}

/// One parameter initialisation and the epochs trained from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitEntry {
    pub init_index: u64,
    pub seed: u64,
    pub first_epoch: u64,
    pub last_epoch: u64,
    pub verified: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRef {
    pub category: Option<Category>,
    pub n_train: usize,
    pub n_test: usize,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub metrics: String,
    pub audit: String,
    pub checkpoint: String,
    pub confusion: Option<String>,
}

/// `manifest.json` of a run directory. Paths are relative to the directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub campaign_id: String,
    pub category: Category,
    pub mode: Mode,
    pub seed: u64,
    pub status: RunStatus,
    pub config: PipelineConfig,
    pub corpus: CorpusRef,
    pub epochs_run: u64,
    pub plausible: u64,
    pub verified: u64,
    /// Percent of plausible candidates that verified; `null` when none were
    /// plausible.
    pub success_rate: Option<f64>,
    pub inits: Vec<InitEntry>,
    pub outcomes: Vec<EpochOutcome>,
    pub records: Vec<RecordEntry>,
    pub artifacts: RunArtifacts,
}

impl RunManifest {
    pub fn confusion(&self) -> ConfusionMatrix {
        tally_confusion(
            self.outcomes
                .iter()
                .filter_map(|o| o.diagnosis.as_ref())
                .map(|d| (self.category, d)),
        )
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(RUN_MANIFEST))
    }
}

pub fn campaign_id(category: Category, mode: Mode, seed: u64) -> String {
    format!("{category}-{mode}-seed{seed}")
}

fn init_entries(seed: u64, outcomes: &[EpochOutcome]) -> Vec<InitEntry> {
    let mut out: Vec<InitEntry> = Vec::new();
    for o in outcomes {
        match out.last_mut() {
            Some(e) if e.init_index == o.init_index => {
                e.last_epoch = o.epoch;
                e.verified += o.verified as u64;
            }
            _ => out.push(InitEntry {
                init_index: o.init_index,
                seed: init_seed(seed, o.init_index),
                first_epoch: o.epoch,
                last_epoch: o.epoch,
                verified: o.verified as u64,
            }),
        }
    }
    out
}

fn checkpoint_name(epoch: u64) -> String {
    format!("checkpoint_{epoch:05}.bin")
}

fn xml_metadata(cfg: &PipelineConfig, target: Category) -> XmlMetadata {
    XmlMetadata {
        age_years: cfg.demographics.age_years,
        sex: cfg.demographics.sex,
        target: Some(target),
    }
}

/// Settings that must not change when a run is resumed: everything except
/// the epoch budget.
fn resumable_view(cfg: &PipelineConfig) -> PipelineConfig {
    let mut c = cfg.clone();
    c.gan.epochs_max = 0;
    c
}

struct RunWriter<'a> {
    out: &'a Path,
    manifest: RunManifest,
}

impl RunWriter<'_> {
    fn record_outcome(&mut self, outcome: &EpochOutcome, verified: Option<(&BeatMatrix, &Diagnosis, String)>) -> Result<()> {
        if let Some((beat, dx, xml)) = verified {
            let stem = format!("records/epoch_{:05}", outcome.epoch);
            let entry = RecordEntry {
                epoch: outcome.epoch,
                init_index: outcome.init_index,
                xml: format!("{stem}.xml"),
                beat: format!("{stem}.csv"),
                category: dx.category,
                severity: dx.severity,
            };
            let mut csv = Vec::new();
            write_beat_csv(beat, &mut csv)?;
            write_atomic(&self.out.join(&entry.beat), &csv)?;
            write_atomic(&self.out.join(&entry.xml), xml.as_bytes())?;
            self.manifest.records.push(entry);
        }
        let m = &mut self.manifest;
        m.outcomes.push(outcome.clone());
        m.epochs_run = outcome.epoch;
        m.plausible += outcome.plausibility.passed as u64;
        m.verified += outcome.verified as u64;
        Ok(())
    }

    /// Rewrites the derived logs, saves the state under a fresh name and
    /// then commits the manifest, which is the only file naming the current
    /// checkpoint.
    fn commit(&mut self, state: &GanState, status: RunStatus) -> Result<()> {
        let m = &mut self.manifest;
        m.status = status;
        m.success_rate = success_rate(m.plausible, m.verified).ok();
        m.inits = init_entries(m.seed, &m.outcomes);
        write_atomic(&self.out.join(METRICS_LOG), jsonl(m.outcomes.iter().map(|o| o.metrics)).as_bytes())?;
        let audit: String = m.outcomes.iter().map(|o| o.plausibility.audit_line() + "\n").collect();
        write_atomic(&self.out.join(AUDIT_LOG), audit.as_bytes())?;
        if status == RunStatus::Complete {
            write_atomic(&self.out.join(CONFUSION_CSV), m.confusion().to_csv().as_bytes())?;
            m.artifacts.confusion = Some(CONFUSION_CSV.into());
        } else {
            m.artifacts.confusion = None;
        }
        let previous = std::mem::replace(&mut m.artifacts.checkpoint, checkpoint_name(m.epochs_run));
        if previous != m.artifacts.checkpoint || !self.out.join(&previous).exists() {
            write_atomic(&self.out.join(&m.artifacts.checkpoint), &state.to_checkpoint().to_bytes())?;
        }
        write_atomic(&self.out.join(RUN_MANIFEST), &to_json_pretty(&self.manifest))?;
        if previous != self.manifest.artifacts.checkpoint && !previous.is_empty() {
            let old = self.out.join(&previous);
            if old.exists() {
                fs::remove_file(&old).map_err(|e| PipelineError::io(&old, e))?;
            }
        }
        Ok(())
    }
}

/// Runs (or with `resume`, continues) a generation campaign for `category`
/// and persists everything under `out`. A campaign with no plausible
/// candidate still succeeds here; its manifest carries a `null` success
/// rate.
pub fn cmd_run(cfg: &PipelineConfig, category: Category, corpus_dir: &Path, out: &Path, resume: bool) -> Result<RunManifest> {
    let corpus = Corpus::load_for(corpus_dir, Some(category))?;
    let corpus_ref = CorpusRef {
        category: corpus.manifest.category,
        n_train: corpus.train.len(),
        n_test: corpus.test.len(),
        fingerprint: corpus.fingerprint(),
    };
    let manifest_path = out.join(RUN_MANIFEST);
    let gan = &cfg.gan;
    let (mut campaign, manifest) = if manifest_path.exists() {
        if !resume {
            return Err(PipelineError::Config(format!(
                "{} already holds a run; pass --resume or choose another output directory",
                out.display()
            )));
        }
        let prior = RunManifest::load(out)?;
        if prior.category != category || resumable_view(&prior.config) != resumable_view(cfg) {
            return Err(PipelineError::Config(
                "resume needs the category and configuration of the original run".into(),
            ));
        }
        if prior.corpus != corpus_ref {
            return Err(PipelineError::Config("resume needs the corpus of the original run".into()));
        }
        let ck_path = out.join(&prior.artifacts.checkpoint);
        let bytes = fs::read(&ck_path).map_err(|e| PipelineError::io(&ck_path, e))?;
        let state = GanState::from_checkpoint(gan, &Checkpoint::from_bytes(&bytes).map_err(GanError::from)?)?;
        let report = CampaignReport {
            epochs_run: prior.epochs_run,
            plausible: prior.plausible,
            verified: prior.verified,
            inits: state.init_index + 1,
            outcomes: prior.outcomes.clone(),
            records: Vec::new(),
        };
        log::info!("resuming {} after epoch {}", prior.campaign_id, prior.epochs_run);
        let c = Campaign::resume(
            state,
            report,
            corpus.train,
            corpus.test,
            &cfg.plausibility,
            &cfg.rules,
            cfg.demographics,
            category,
        )?;
        (c, RunManifest { config: cfg.clone(), ..prior })
    } else {
        let c = Campaign::new(
            gan,
            corpus.train,
            corpus.test,
            &cfg.plausibility,
            &cfg.rules,
            cfg.demographics,
            category,
        )?;
        let m = RunManifest {
            campaign_id: campaign_id(category, gan.mode, gan.seed),
            category,
            mode: gan.mode,
            seed: gan.seed,
            status: RunStatus::Partial,
            config: cfg.clone(),
            corpus: corpus_ref,
            epochs_run: 0,
            plausible: 0,
            verified: 0,
            success_rate: None,
            inits: Vec::new(),
            outcomes: Vec::new(),
            records: Vec::new(),
            artifacts: RunArtifacts {
                metrics: METRICS_LOG.into(),
                audit: AUDIT_LOG.into(),
                checkpoint: String::new(),
                confusion: None,
            },
        };
        (c, m)
    };
    let mut writer = RunWriter { out, manifest };
    let meta = xml_metadata(cfg, category);
    loop {
        let Some(outcome) = campaign.step()?.cloned() else { break };
        let verified = if outcome.verified {
            let vb = campaign.report().records.last().expect("verified beat kept");
            Some((&vb.beat, &vb.diagnosis, export_xml(&vb.record, &meta)))
        } else {
            None
        };
        writer.record_outcome(&outcome, verified)?;
        log::info!(
            "epoch {} g_loss {:.4} d_loss {:.4} d_acc {:.3} plausible {} verified {}",
            outcome.epoch,
            outcome.metrics.g_loss,
            outcome.metrics.d_loss,
            outcome.metrics.d_acc,
            outcome.plausibility.passed,
            outcome.verified
        );
        writer.commit(campaign.state(), RunStatus::Partial)?;
    }
    writer.commit(campaign.state(), RunStatus::Complete)?;
    Ok(writer.manifest)
}

/// Re-imports every record of a run and checks it verifies to what the
/// manifest says, and that the counters are consistent.
pub fn audit_run(dir: &Path) -> Result<RunManifest> {
    let m = RunManifest::load(dir)?;
    let bad = |msg: String| Err(PipelineError::Inconsistent(msg));
    if !(m.verified <= m.plausible && m.plausible <= m.epochs_run) {
        return bad(format!(
            "counters violate verified {} <= plausible {} <= epochs {}",
            m.verified, m.plausible, m.epochs_run
        ));
    }
    if m.records.len() as u64 != m.verified || m.outcomes.len() as u64 != m.epochs_run {
        return bad("record or outcome count differs from the counters".into());
    }
    let rules = &m.config.rules;
    m.records.par_iter().try_for_each(|r| {
        let path = dir.join(&r.xml);
        let (record, meta) = import_xml(&read_text(&path)?).map_err(|e| PipelineError::xml(&path, e))?;
        let demo = Demographics {
            age_years: meta.age_years,
            sex: meta.sex,
        };
        let (_, dx) = assess(&record, demo, rules);
        if dx.category != r.category || DxCategory::from(m.category) != dx.category {
            return Err(PipelineError::Inconsistent(format!(
                "{} re-verifies as {}, manifest says {}",
                r.xml, dx.category, r.category
            )));
        }
        load_beat(&dir.join(&r.beat)).map_err(|e| PipelineError::format(&dir.join(&r.beat), e))?;
        Ok(())
    })?;
    Ok(m)
}

/// Trains without gating for `cfg.gan.epochs_max` epochs, writing one
/// metrics line per epoch and the final state. In accumulative mode an
/// existing checkpoint in `out` is continued and its metrics kept.
pub fn cmd_train(cfg: &PipelineConfig, category: Option<Category>, corpus_dir: &Path, out: &Path) -> Result<Vec<TrainMetrics>> {
    let corpus = Corpus::load_for(corpus_dir, category)?;
    let ck_path = out.join(TRAIN_CHECKPOINT);
    let metrics_path = out.join(METRICS_LOG);
    let (mut state, mut lines) = if cfg.gan.mode == Mode::AccumulativeLearning && ck_path.exists() {
        let bytes = fs::read(&ck_path).map_err(|e| PipelineError::io(&ck_path, e))?;
        let state = GanState::from_checkpoint(&cfg.gan, &Checkpoint::from_bytes(&bytes).map_err(GanError::from)?)?;
        let kept: Vec<String> = if metrics_path.exists() {
            read_text(&metrics_path)?
                .lines()
                .filter(|l| serde_json::from_str::<TrainMetrics>(l).is_ok_and(|m| m.epoch <= state.epoch))
                .map(String::from)
                .collect()
        } else {
            Vec::new()
        };
        log::info!("continuing from epoch {}", state.epoch);
        (state, kept)
    } else {
        (GanState::new(&cfg.gan, 0)?, Vec::new())
    };
    let mut fresh = Vec::new();
    for _ in 0..cfg.gan.epochs_max {
        let m = train_epoch(&mut state, &corpus.train)?;
        log::info!("epoch {} g_loss {:.4} d_loss {:.4} d_acc {:.3}", m.epoch, m.g_loss, m.d_loss, m.d_acc);
        lines.push(serde_json::to_string(&m).expect("metrics serialise"));
        fresh.push(m);
        write_atomic(&ck_path, &state.to_checkpoint().to_bytes())?;
        write_atomic(&metrics_path, (lines.join("\n") + "\n").as_bytes())?;
    }
    Ok(fresh)
}

/// Verification of one exported record.
#[derive(Clone, Debug)]
pub struct VerifyOutcome {
    pub path: PathBuf,
    pub features: BeatFeatures,
    pub diagnosis: Diagnosis,
    pub target: Option<Category>,
}

impl VerifyOutcome {
    /// `None` when the record names no target category.
    pub fn verified(&self) -> Option<bool> {
        self.target.map(|t| DxCategory::from(t) == self.diagnosis.category)
    }

    pub fn report(&self) -> String {
        let mut s = render_report(&self.features, &self.diagnosis);
        if let (Some(t), Some(ok)) = (self.target, self.verified()) {
            s.push_str(&format!("Target {t}: {}\n", if ok { "verified" } else { "rejected" }));
        }
        s
    }
}

fn xml_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| PipelineError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "xml"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Measures and classifies XML records. Directories contribute their `.xml`
/// files in name order. Demographics come from each record's metadata,
/// falling back to `cfg.demographics`.
pub fn cmd_verify(paths: &[PathBuf], cfg: &PipelineConfig) -> Result<Vec<VerifyOutcome>> {
    xml_files(paths)?
        .par_iter()
        .map(|path| {
            let (record, meta) = import_xml(&read_text(path)?).map_err(|e| PipelineError::xml(path, e))?;
            let demo = Demographics {
                age_years: meta.age_years.or(cfg.demographics.age_years),
                sex: match meta.sex {
                    crate::Sex::Unidentified => cfg.demographics.sex,
                    s => s,
                },
            };
            let (features, diagnosis) = assess(&record, demo, &cfg.rules);
            Ok(VerifyOutcome {
                path: path.clone(),
                features,
                diagnosis,
                target: meta.target,
            })
        })
        .collect()
}
