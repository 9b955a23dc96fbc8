use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_json, read_text, to_json_pretty, write_atomic, PipelineConfig, PipelineError, Result};
use crate::beat::{
    extract_centered_window, read_beat_csv, read_raw_beat, split_dataset, write_beat_csv, BeatError, BeatMatrix,
    Category, Lead,
};
use crate::beatgen::{make_corpus, GroundTruth};
use crate::par::*;

pub const CORPUS_MANIFEST: &str = "corpus.json";
pub const REJECTS_LOG: &str = "rejects.csv";
pub const TRUTH_MANIFEST: &str = "truth.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSource {
    Preprocess,
    Beatgen,
}

/// `corpus.json`: how the corpus was made and which beat files form each
/// split, in split order. Beat files live at `train/<name>.csv` and
/// `test/<name>.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source: CorpusSource,
    pub category: Option<Category>,
    /// Beatgen seed; absent for preprocessed corpora.
    pub seed: Option<u64>,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_rejected: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: CorpusManifest,
    pub train: Vec<BeatMatrix>,
    pub test: Vec<BeatMatrix>,
}

impl Corpus {
    /// `dir/<category>` when that holds a corpus, otherwise `dir` itself.
    pub fn resolve(dir: &Path, category: Option<Category>) -> PathBuf {
        if let Some(c) = category {
            let sub = dir.join(c.as_str());
            if sub.join(CORPUS_MANIFEST).is_file() {
                return sub;
            }
        }
        dir.to_path_buf()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CorpusManifest = read_json(&dir.join(CORPUS_MANIFEST))?;
        let load_set = |set: &str, names: &[String]| -> Result<Vec<BeatMatrix>> {
            names
                .par_iter()
                .map(|name| {
                    let path = dir.join(set).join(format!("{name}.csv"));
                    let file = fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
                    read_beat_csv(file).map_err(|e| PipelineError::format(&path, e))
                })
                .collect()
        };
        let train = load_set("train", &manifest.train)?;
        let test = load_set("test", &manifest.test)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            train,
            test,
        })
    }

    /// Loads the corpus for `category`, refusing one labelled otherwise.
    pub fn load_for(dir: &Path, category: Option<Category>) -> Result<Self> {
        let corpus = Self::load(&Self::resolve(dir, category))?;
        if let (Some(want), Some(have)) = (category, corpus.manifest.category) {
            if want != have {
                return Err(PipelineError::Config(format!(
                    "corpus {} holds {have} beats, not {want}",
                    corpus.dir.display()
                )));
            }
        }
        Ok(corpus)
    }

    /// FNV-1a over the bit patterns of every training then testing sample.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for beat in self.train.iter().chain(&self.test) {
            for v in beat.as_slice() {
                for byte in v.to_bits().to_le_bytes() {
                    h = (h ^ byte as u64).wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        format!("{h:016x}")
    }
}

/// Empties the beat folders of an earlier corpus, or refuses a directory
/// that holds something else.
fn prepare_corpus_dir(out: &Path) -> Result<()> {
    if out.exists() {
        let has_entries = fs::read_dir(out).map_err(|e| PipelineError::io(out, e))?.next().is_some();
        if has_entries && !out.join(CORPUS_MANIFEST).is_file() {
            return Err(PipelineError::Config(format!(
                "{} is not empty and holds no corpus; refusing to write into it",
                out.display()
            )));
        }
        for set in ["train", "test"] {
            let d = out.join(set);
            if d.is_dir() {
                fs::remove_dir_all(&d).map_err(|e| PipelineError::io(&d, e))?;
            }
        }
    }
    fs::create_dir_all(out).map_err(|e| PipelineError::io(out, e))
}

fn write_beats(out: &Path, set: &str, beats: &[(String, BeatMatrix)]) -> Result<()> {
    beats.par_iter().try_for_each(|(name, beat)| {
        let mut buf = Vec::new();
        write_beat_csv(beat, &mut buf)?;
        write_atomic(&out.join(set).join(format!("{name}.csv")), &buf)
    })
}

fn write_corpus(
    out: &Path,
    cfg: &PipelineConfig,
    source: CorpusSource,
    category: Option<Category>,
    seed: Option<u64>,
    items: Vec<(String, BeatMatrix)>,
    n_rejected: usize,
) -> Result<CorpusManifest> {
    let (train, test) = split_dataset(&items, cfg.data.train_fraction, cfg.data.split_seed)?;
    prepare_corpus_dir(out)?;
    write_beats(out, "train", &train)?;
    write_beats(out, "test", &test)?;
    let manifest = CorpusManifest {
        source,
        category,
        seed,
        train_fraction: cfg.data.train_fraction,
        split_seed: cfg.data.split_seed,
        n_train: train.len(),
        n_test: test.len(),
        n_rejected,
        train: train.into_iter().map(|(n, _)| n).collect(),
        test: test.into_iter().map(|(n, _)| n).collect(),
    };
    write_atomic(&out.join(CORPUS_MANIFEST), &to_json_pretty(&manifest))?;
    Ok(manifest)
}

/// Short code for the rejects log.
pub fn reject_reason(e: &BeatError) -> &'static str {
    match e {
        BeatError::InvalidShape { .. } => "InvalidShape",
        BeatError::NonFinite { .. } => "NonFinite",
        BeatError::WindowOutOfRange { .. } => "WindowOutOfRange",
        BeatError::RateExcluded { .. } => "RateExcluded",
        BeatError::EmptyDataset => "EmptyDataset",
        BeatError::InvalidFraction(_) => "InvalidFraction",
        BeatError::MissingLead(_) => "MissingLead",
        BeatError::Metadata(_) => "Metadata",
        BeatError::Csv(_) => "Csv",
        BeatError::Io(_) => "Io",
    }
}

/// One line of the rejects log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reject {
    pub name: String,
    pub reason: String,
    pub detail: String,
}

/// Raw beats in `input` are `<name>.csv` files with a `<name>.meta.csv`
/// sidecar.
fn raw_inputs(input: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(input)
        .map_err(|e| PipelineError::io(input, e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_file())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|f| f.ends_with(".csv") && !f.ends_with(".meta.csv"))
        .map(|f| f.trim_end_matches(".csv").to_string())
        .collect();
    names.sort();
    Ok(names)
}

fn window_raw(input: &Path, name: &str) -> std::result::Result<BeatMatrix, Reject> {
    let reject = |reason: &str, detail: String| Reject {
        name: name.to_string(),
        reason: reason.to_string(),
        detail,
    };
    let meta_path = input.join(format!("{name}.meta.csv"));
    let meta = fs::File::open(&meta_path).map_err(|e| reject("MissingMetadata", e.to_string()))?;
    let samples = fs::File::open(input.join(format!("{name}.csv"))).map_err(|e| reject("Io", e.to_string()))?;
    read_raw_beat(samples, meta)
        .and_then(|raw| extract_centered_window(&raw))
        .map_err(|e| reject(reject_reason(&e), e.to_string()))
}

/// Filters, windows and decimates every raw beat in `input`, then splits the
/// survivors into a corpus at `out`. Excluded beats go to the rejects log.
pub fn cmd_preprocess(input: &Path, out: &Path, cfg: &PipelineConfig) -> Result<(CorpusManifest, Vec<Reject>)> {
    let names = raw_inputs(input)?;
    let results: Vec<_> = names.par_iter().map(|n| window_raw(input, n)).collect();
    let mut kept = Vec::new();
    let mut rejects = Vec::new();
    for (name, r) in names.into_iter().zip(results) {
        match r {
            Ok(beat) => kept.push((name, beat)),
            Err(rej) => {
                log::info!("rejected {}: {}", rej.name, rej.detail);
                rejects.push(rej);
            }
        }
    }
    let mut log = csv::Writer::from_writer(Vec::new());
    log.write_record(["file", "reason", "detail"]).expect("in-memory write");
    for r in &rejects {
        log.write_record([&r.name, &r.reason, &r.detail]).expect("in-memory write");
    }
    let log = log.into_inner().expect("in-memory flush");
    let manifest = write_corpus(out, cfg, CorpusSource::Preprocess, None, None, kept, rejects.len())?;
    write_atomic(&out.join(REJECTS_LOG), &log)?;
    Ok((manifest, rejects))
}

fn truth_csv(rows: &[(String, &str, &GroundTruth)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "name",
        "set",
        "category",
        "pr_ms",
        "qrs_dur_ms",
        "qt_ms",
        "qtc_ms",
        "qrs_onset_ms",
        "lvh_voltage_mv",
        "age_years",
        "sex",
    ]
    .map(String::from)
    .to_vec();
    header.extend(Lead::BEAT.iter().map(|l| format!("st_{}_mv", l.name())));
    w.write_record(&header).expect("in-memory write");
    for (name, set, t) in rows {
        let mut rec = vec![
            name.clone(),
            set.to_string(),
            t.category.to_string(),
            t.pr_ms.to_string(),
            t.qrs_dur_ms.to_string(),
            t.qt_ms.to_string(),
            t.qtc_ms.to_string(),
            t.qrs_onset_ms.to_string(),
            t.lvh_voltage_mv.to_string(),
            t.age_years.to_string(),
            t.sex.to_string(),
        ];
        rec.extend(t.st_offset_mv.iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Renders `n` synthetic beats of `category` into a corpus at `out`, with a
/// ground-truth manifest alongside.
pub fn cmd_beatgen(category: Category, n: usize, seed: u64, out: &Path, cfg: &PipelineConfig) -> Result<CorpusManifest> {
    let corpus = make_corpus(category, n, seed, &cfg.beatgen)?;
    let items: Vec<(String, BeatMatrix)> = corpus
        .iter()
        .enumerate()
        .map(|(i, lb)| (format!("beat_{i:05}"), lb.beat.clone()))
        .collect();
    let manifest = write_corpus(out, cfg, CorpusSource::Beatgen, Some(category), Some(seed), items, 0)?;
    let index = |name: &str| name["beat_".len()..].parse::<usize>().expect("generated name");
    let rows: Vec<(String, &str, &GroundTruth)> = [("train", &manifest.train), ("test", &manifest.test)]
        .into_iter()
        .flat_map(|(set, names)| names.iter().map(move |n| (n.clone(), set)))
        .map(|(name, set)| {
            let truth = &corpus[index(&name)].truth;
            (name, set, truth)
        })
        .collect();
    write_atomic(&out.join(TRUTH_MANIFEST), &truth_csv(&rows))?;
    Ok(manifest)
}

/// Ground-truth rows of a beatgen corpus, keyed by beat name.
pub fn read_truth_manifest(dir: &Path) -> Result<Vec<(String, String, Vec<String>)>> {
    let path = dir.join(TRUTH_MANIFEST);
    let text = read_text(&path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| PipelineError::format(&path, e))?;
        rows.push((rec[0].to_string(), rec[1].to_string(), rec.iter().skip(2).map(String::from).collect()));
    }
    Ok(rows)
}
