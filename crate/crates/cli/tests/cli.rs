use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ecgsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgsynth"))
        .args(args)
        .env_remove("ECGSYNTH_LOG")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DESK: &str = "[gan.arch]\nlstm_hidden = 4\ngen_channels = [2, 2, 2, 2]\ndisc_channels = [2, 2, 2, 2]\n";

#[test]
fn usage_and_config_errors_exit_4() {
    assert_eq!(ecgsynth(&["run", "--category", "Nope"]).status.code(), Some(4));
    assert_eq!(ecgsynth(&["frobnicate"]).status.code(), Some(4));
    assert_eq!(ecgsynth(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[gan]\nbatch_size = 0\n").unwrap();
    let out = ecgsynth(&["beatgen", "--config", s(&cfg), "--category", "LBBB", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("batch_size"));

    let out = ecgsynth(&["beatgen", "--out", s(&dir.path().join("c"))]);
    assert_eq!(out.status.code(), Some(4), "missing --category");
}

#[test]
fn missing_corpus_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecgsynth(&[
        "run",
        "--category",
        "LBBB",
        "--corpus",
        s(&dir.path().join("absent")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn zero_plausible_campaign_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("desk.toml");
    fs::write(&cfg, DESK).unwrap();
    let corpus = dir.path().join("corpus");
    let out = ecgsynth(&["beatgen", "--category", "LBBB", "-n", "24", "--seed", "4", "--out", s(&corpus)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "LBBB: train 21 test 3");

    let run = dir.path().join("run");
    let out = ecgsynth(&[
        "run", "--config", s(&cfg), "--category", "LBBB", "--epochs", "2", "--seed", "1", "--mode", "accumulate",
        "--corpus", s(&corpus), "--out", s(&run),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("LBBB-accumulate-seed1: epochs 2 plausible 0 verified 0 success rate undefined"));
    assert!(run.join("manifest.json").is_file());

    let out = ecgsynth(&["report", s(&run)]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("LBBB-accumulate-seed1,LBBB,accumulate,2,0,0,undefined"));
    assert!(stdout.contains("actual,Normal,LVH,LBBB,ACUTMI,ON,BO,AB,DE"));
}

#[test]
fn train_appends_metrics_in_accumulate_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("desk.toml");
    fs::write(&cfg, DESK).unwrap();
    let corpus = dir.path().join("corpora");
    assert!(ecgsynth(&["beatgen", "--category", "Normal", "-n", "16", "--out", s(&corpus.join("Normal"))])
        .status
        .success());
    let out_dir = dir.path().join("train");
    let args = |epochs: &'static str| {
        vec![
            "train".to_string(),
            "--config".into(),
            s(&cfg).into(),
            "--category".into(),
            "Normal".into(),
            "--mode".into(),
            "accumulate".into(),
            "--epochs".into(),
            epochs.into(),
            "--corpus".into(),
            s(&corpus).into(),
            "--out".into(),
            s(&out_dir).into(),
        ]
    };
    let run = |a: Vec<String>| ecgsynth(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(run(args("2")).status.success());
    let out = run(args("1"));
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("epoch 3 "));
    let metrics = fs::read_to_string(out_dir.join("metrics.jsonl")).unwrap();
    let epochs: Vec<u64> = metrics
        .lines()
        .map(|l| {
            let rest = &l[l.find("\"epoch\":").unwrap() + 8..];
            rest[..rest.find(',').unwrap()].parse().unwrap()
        })
        .collect();
    assert_eq!(epochs, [1, 2, 3]);
    assert!(metrics.lines().all(|l| l.contains("\"g_loss\"") && l.contains("\"d_acc\"")));
}

#[test]
fn verify_reports_on_xml() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecgsynth(&["verify", s(&dir.path().join("missing.xml"))]);
    assert_eq!(out.status.code(), Some(3));
    let bad = dir.path().join("bad.xml");
    fs::write(&bad, "<ecgRecord sps=\"250\" duration_ms=\"10000\"></ecgRecord>").unwrap();
    assert_eq!(ecgsynth(&["verify", s(&bad)]).status.code(), Some(3));

    use ecgsynth::beat::{derive_limb_leads, stitch_record};
    let beats = ecgsynth::beatgen::make_corpus(ecgsynth::Category::Lbbb, 2, 7, &Default::default()).unwrap();
    let records = dir.path().join("records");
    for (k, lb) in beats.iter().enumerate() {
        let meta = ecgsynth::xml::XmlMetadata {
            age_years: Some(lb.truth.age_years),
            sex: lb.truth.sex,
            target: Some(ecgsynth::Category::Lbbb),
        };
        let xml = ecgsynth::xml::export_xml(&stitch_record(&derive_limb_leads(&lb.beat)), &meta);
        fs::create_dir_all(&records).unwrap();
        fs::write(records.join(format!("r{k}.xml")), xml).unwrap();
    }
    let out = ecgsynth(&["verify", s(&records)]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("Target LBBB: verified").count(), 2, "{stdout}");
    assert!(stdout.contains("QRSd "));
}
