//! `ecgsynth`: corpus preparation, GAN campaigns, verification and
//! evaluation from the command line.
//!
//! Exit status: 0 success, 2 campaign without a plausible candidate, 3 I/O or
//! malformed input, 4 configuration or usage error, 1 anything else.
//! `ECGSYNTH_LOG` sets the log filter (default `warn`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecgsynth::gan::Mode;
use ecgsynth::pipeline::{self, PipelineConfig, PipelineError, EXIT_CONFIG, EXIT_ZERO_PLAUSIBLE};
use ecgsynth::Category;

#[derive(Debug, Parser)]
#[command(name = "ecgsynth", version, about = "Synthetic 12-lead ECG generation pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Campaign seed (beatgen: corpus seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Target category: Normal, LVH, LBBB or ACUTMI.
    #[arg(long, global = true)]
    category: Option<Category>,
    /// relearn or accumulate.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    /// Epoch budget.
    #[arg(long, global = true)]
    epochs: Option<u64>,
    /// Output directory (evaluate: output file).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Corpus directory, or a directory of per-category corpora.
    #[arg(long, global = true, value_name = "DIR")]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Window, filter and split raw beats into a corpus.
    Preprocess {
        /// Directory of `<name>.csv` beats with `<name>.meta.csv` sidecars.
        input: PathBuf,
    },
    /// Render a synthetic corpus of one category.
    Beatgen {
        /// Number of beats.
        #[arg(long, short, default_value_t = 256)]
        n: usize,
    },
    /// Train a GAN on a corpus, logging per-epoch metrics.
    Train,
    /// Run a generate/gate/verify campaign and persist its artifacts.
    Run {
        /// Continue the run already in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Measure and classify XML records.
    Verify {
        /// XML files or directories of them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Diversity and bias statistics of a run against its corpus.
    Evaluate {
        /// Run directory.
        #[arg(long, value_name = "DIR")]
        run: PathBuf,
    },
    /// Success rates and merged confusion matrix of finished runs.
    Report {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, PipelineError> {
    v.as_ref()
        .ok_or_else(|| PipelineError::Config(format!("--{flag} is required for this command")))
}

fn config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(g.config.as_deref())?;
    if let Some(s) = g.seed {
        cfg.gan.seed = s;
    }
    if let Some(m) = g.mode {
        cfg.gan.mode = m;
    }
    if let Some(e) = g.epochs {
        cfg.gan.epochs_max = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    pipeline::write_atomic(path, text.as_bytes())
}

fn execute(cli: Cli) -> Result<i32, PipelineError> {
    let g = &cli.global;
    let cfg = config(g)?;
    match cli.command {
        Command::Preprocess { input } => {
            let (m, rejects) = pipeline::cmd_preprocess(&input, required(&g.out, "out")?, &cfg)?;
            println!("train {} test {} rejected {}", m.n_train, m.n_test, rejects.len());
        }
        Command::Beatgen { n } => {
            let category = *required(&g.category, "category")?;
            let m = pipeline::cmd_beatgen(category, n, g.seed.unwrap_or(0), required(&g.out, "out")?, &cfg)?;
            println!("{category}: train {} test {}", m.n_train, m.n_test);
        }
        Command::Train => {
            let metrics = pipeline::cmd_train(&cfg, g.category, required(&g.corpus, "corpus")?, required(&g.out, "out")?)?;
            if let Some(m) = metrics.last() {
                println!("epoch {} g_loss {:.4} d_loss {:.4} d_acc {:.3}", m.epoch, m.g_loss, m.d_loss, m.d_acc);
            }
        }
        Command::Run { resume } => {
            let category = *required(&g.category, "category")?;
            let out = required(&g.out, "out")?;
            let m = pipeline::cmd_run(&cfg, category, required(&g.corpus, "corpus")?, out, resume)?;
            let rate = m.success_rate.map_or("undefined".to_string(), |r| format!("{r:.1}%"));
            println!(
                "{}: epochs {} plausible {} verified {} success rate {rate}",
                m.campaign_id, m.epochs_run, m.plausible, m.verified
            );
            if m.plausible == 0 {
                return Ok(EXIT_ZERO_PLAUSIBLE);
            }
        }
        Command::Verify { paths } => {
            for v in pipeline::cmd_verify(&paths, &cfg)? {
                println!("== {} ==", v.path.display());
                print!("{}", v.report());
            }
        }
        Command::Evaluate { run } => {
            let report = pipeline::cmd_evaluate(&run, required(&g.corpus, "corpus")?, &cfg)?;
            match &g.out {
                Some(p) => write(p, &report.to_text())?,
                None => print!("{}", report.to_text()),
            }
        }
        Command::Report { runs } => {
            let dirs: Vec<&Path> = runs.iter().map(PathBuf::as_path).collect();
            let summary = pipeline::cmd_report(&dirs)?;
            let (table, confusion) = (summary.table_csv(), summary.confusion.to_csv());
            if let Some(dir) = &g.out {
                write(&dir.join("report.csv"), &table)?;
                write(&dir.join("confusion.csv"), &confusion)?;
            }
            print!("{table}\n{confusion}");
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ECGSYNTH_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
