use serde::{Deserialize, Serialize};

use super::train::{generate, train_epoch, GanConfig, GanState, Mode, TrainMetrics};
use super::GanError;
use crate::beat::{derive_limb_leads, stitch_record, BeatMatrix, Category, Record10s};
use crate::derive_seed;
use crate::plausibility::{PlausibilityConfig, PlausibilityGate, PlausibilityVerdict};
use crate::verifier::{assess, Demographics, Diagnosis, DxCategory, RulesConfig};

const NOISE_STREAM: u64 = 2;

/// Noise seed of the candidate drawn after campaign epoch `epoch`.
pub fn candidate_seed(seed: u64, epoch: u64) -> u64 {
    derive_seed(seed, &[NOISE_STREAM, epoch])
}

/// What happened to the candidate of one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochOutcome {
    /// Campaign-wide epoch counter, starting at 1.
    pub epoch: u64,
    pub init_index: u64,
    /// Epochs trained since the last initialisation; what the epoch gate sees.
    pub local_epoch: u64,
    pub metrics: TrainMetrics,
    pub plausibility: PlausibilityVerdict,
    /// Present only for plausible candidates.
    pub diagnosis: Option<Diagnosis>,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifiedBeat {
    pub epoch: u64,
    pub init_index: u64,
    pub beat: BeatMatrix,
    pub record: Record10s,
    pub diagnosis: Diagnosis,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CampaignReport {
    pub epochs_run: u64,
    pub plausible: u64,
    pub verified: u64,
    /// Number of initialisations used; 1 plus the number of restarts.
    pub inits: u64,
    pub outcomes: Vec<EpochOutcome>,
    pub records: Vec<VerifiedBeat>,
}

impl CampaignReport {
    /// Verified share of plausible candidates; `None` when nothing was
    /// plausible.
    pub fn success_rate(&self) -> Option<f64> {
        (self.plausible > 0).then(|| self.verified as f64 / self.plausible as f64)
    }

    pub fn metrics(&self) -> impl Iterator<Item = &TrainMetrics> {
        self.outcomes.iter().map(|o| &o.metrics)
    }

    /// Diagnoses of every plausible candidate, for confusion tallies.
    pub fn plausible_diagnoses(&self) -> impl Iterator<Item = &Diagnosis> {
        self.outcomes.iter().filter_map(|o| o.diagnosis.as_ref())
    }
}

/// A campaign advanced one epoch at a time.
pub struct Campaign {
    state: GanState,
    gate: PlausibilityGate,
    rules: RulesConfig,
    demographics: Demographics,
    target: Category,
    train: Vec<BeatMatrix>,
    report: CampaignReport,
}

impl Campaign {
    pub fn new(
        config: &GanConfig,
        train: Vec<BeatMatrix>,
        testing: Vec<BeatMatrix>,
        plausibility: &PlausibilityConfig,
        rules: &RulesConfig,
        demographics: Demographics,
        target: Category,
    ) -> Result<Self, GanError> {
        let state = GanState::new(config, 0)?;
        let report = CampaignReport {
            inits: 1,
            ..CampaignReport::default()
        };
        Self::resume(state, report, train, testing, plausibility, rules, demographics, target)
    }

    /// Continues from a saved state and the report accumulated so far.
    #[allow(clippy::too_many_arguments)]
    pub fn resume(
        state: GanState,
        report: CampaignReport,
        train: Vec<BeatMatrix>,
        testing: Vec<BeatMatrix>,
        plausibility: &PlausibilityConfig,
        rules: &RulesConfig,
        demographics: Demographics,
        target: Category,
    ) -> Result<Self, GanError> {
        if train.is_empty() {
            return Err(GanError::EmptyTrainingSet);
        }
        let gate = PlausibilityGate::new(plausibility.clone(), testing)?;
        Ok(Self {
            state,
            gate,
            rules: rules.clone(),
            demographics,
            target,
            train,
            report,
        })
    }

    pub fn state(&self) -> &GanState {
        &self.state
    }

    pub fn report(&self) -> &CampaignReport {
        &self.report
    }

    pub fn into_report(self) -> CampaignReport {
        self.report
    }

    pub fn is_finished(&self) -> bool {
        self.report.epochs_run >= self.state.config.epochs_max
    }

    /// Trains one epoch, gates its candidate and verifies it if plausible.
    /// Returns `None` once the epoch budget is spent.
    pub fn step(&mut self) -> Result<Option<&EpochOutcome>, GanError> {
        if self.is_finished() {
            return Ok(None);
        }
        let metrics = train_epoch(&mut self.state, &self.train)?;
        let epoch = self.report.epochs_run + 1;
        let candidate = generate(&self.state, 1, candidate_seed(self.state.config.seed, epoch))?
            .pop()
            .expect("one candidate");
        let verdict = self.gate.check(&candidate, self.state.epoch);
        let mut outcome = EpochOutcome {
            epoch,
            init_index: self.state.init_index,
            local_epoch: self.state.epoch,
            metrics: TrainMetrics { epoch, ..metrics },
            plausibility: verdict,
            diagnosis: None,
            verified: false,
        };
        self.report.epochs_run = epoch;
        if outcome.plausibility.passed {
            self.report.plausible += 1;
            let record = stitch_record(&derive_limb_leads(&candidate));
            let (_, dx) = assess(&record, self.demographics, &self.rules);
            outcome.verified = dx.category == DxCategory::from(self.target);
            if outcome.verified {
                self.report.verified += 1;
                self.report.records.push(VerifiedBeat {
                    epoch,
                    init_index: self.state.init_index,
                    beat: candidate,
                    record,
                    diagnosis: dx.clone(),
                });
            }
            outcome.diagnosis = Some(dx);
        }
        log::debug!(
            "epoch {epoch}: g {:.4} d {:.4} acc {:.3} plausible {} verified {}",
            outcome.metrics.g_loss,
            outcome.metrics.d_loss,
            outcome.metrics.d_acc,
            outcome.plausibility.passed,
            outcome.verified
        );
        if outcome.verified && self.state.config.mode == Mode::Relearning {
            self.state.reinitialize()?;
            self.report.inits += 1;
        }
        self.report.outcomes.push(outcome);
        Ok(self.report.outcomes.last())
    }

    pub fn run(mut self) -> Result<CampaignReport, GanError> {
        while self.step()?.is_some() {}
        Ok(self.report)
    }
}

/// Runs a whole campaign: train, gate, post-process and verify, for
/// `config.epochs_max` epochs.
pub fn run_generation_campaign(
    config: &GanConfig,
    train: Vec<BeatMatrix>,
    testing: Vec<BeatMatrix>,
    plausibility: &PlausibilityConfig,
    rules: &RulesConfig,
    demographics: Demographics,
    target: Category,
) -> Result<CampaignReport, GanError> {
    Campaign::new(config, train, testing, plausibility, rules, demographics, target)?.run()
}
