use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use dflex::pipeline::{run, Command, ReportKind, RunConfig, MANIFEST, PARTIAL_MARKER};
use sha2::{Digest, Sha256};

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(rel)
}

fn toy_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::from_file(&data("toy/pipeline.conf")).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn golden_command(dir: &str) -> Command {
    match dir {
        "dflex" => Command::Dflex,
        "lookup" => Command::Lookup("P0000001".into()),
        d => Command::Report(d.trim_start_matches("report_").parse().unwrap()),
    }
}

fn golden_dirs() -> Vec<String> {
    let mut dirs: Vec<String> = fs::read_dir(data("golden"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    dirs
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn toy_corpus_matches_golden_files() {
    let dirs = golden_dirs();
    assert_eq!(dirs.len(), 2 + ReportKind::ALL.len());
    for d in dirs {
        let tmp = tempfile::tempdir().unwrap();
        run(&toy_config(tmp.path()), &golden_command(&d)).unwrap();
        for (name, want) in read_dir_bytes(&data("golden").join(&d)) {
            let got =
                fs::read(tmp.path().join(&name)).unwrap_or_else(|_| panic!("{d}/{name} missing"));
            assert!(got == want, "{d}/{name} differs from the golden copy");
        }
    }
}

#[test]
fn rerun_overwrites_with_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy_config(tmp.path());
    let cmd = Command::Report(ReportKind::Table2);
    run(&cfg, &cmd).unwrap();
    let first = read_dir_bytes(tmp.path());
    run(&cfg, &cmd).unwrap();
    assert_eq!(first, read_dir_bytes(tmp.path()));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = toy_config(a.path());
    cfg.threads = Some(1);
    run(&cfg, &Command::Dflex).unwrap();
    cfg.out_dir = b.path().to_path_buf();
    cfg.threads = Some(8);
    run(&cfg, &Command::Dflex).unwrap();
    assert_eq!(read_dir_bytes(a.path()), read_dir_bytes(b.path()));
}

#[test]
fn manifest_lists_every_output_with_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run(
        &toy_config(tmp.path()),
        &Command::Report(ReportKind::Scatter),
    )
    .unwrap();
    let manifest = fs::read_to_string(tmp.path().join(MANIFEST)).unwrap();
    assert!(manifest.contains("command=report scatter"));
    assert!(manifest.contains("seed="));
    assert!(manifest.contains("tool=dflex "));
    let outputs = manifest.split("[outputs]").nth(1).unwrap();
    let listed: BTreeMap<&str, &str> = outputs
        .lines()
        .filter_map(|l| l.split_once(" sha256="))
        .collect();
    let on_disk: Vec<String> = read_dir_bytes(tmp.path())
        .into_keys()
        .filter(|n| n != MANIFEST)
        .collect();
    assert_eq!(listed.len(), on_disk.len());
    for name in on_disk {
        let digest = hex::encode(Sha256::digest(fs::read(tmp.path().join(&name)).unwrap()));
        assert_eq!(listed[name.as_str()], digest, "{name}");
    }
    assert!(!tmp.path().join(PARTIAL_MARKER).exists());
    assert!(summary
        .row_counts
        .iter()
        .any(|(n, c)| n == "dflex.csv" && *c == 182));
}

#[test]
fn missing_input_fails_in_a_named_stage_and_leaves_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(tmp.path());
    cfg.citations = Some(data("toy/no_such_file.csv"));
    let err = run(&cfg, &Command::Dflex).unwrap_err();
    assert!(err.to_string().starts_with("ingest: "), "{err}");
    assert_eq!(err.exit_code(), 3);
    assert!(tmp.path().join(PARTIAL_MARKER).exists());
}

fn cli(args: &[&str], out: &Path) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_dflex"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn cli_invalid_index_is_a_usage_error_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let conf = data("toy/pipeline.conf");
    let res = cli(
        &[
            "dflex",
            "--config",
            conf.to_str().unwrap(),
            "--index",
            "hindex",
        ],
        &out,
    );
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    let res = cli(
        &["report", "table9", "--config", conf.to_str().unwrap()],
        &out,
    );
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
    let res = cli(&["frobnicate"], &out);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn cli_reproduces_golden_scores_and_honours_out_dir_env() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = data("toy/pipeline.conf");
    let res = Process::new(env!("CARGO_BIN_EXE_dflex"))
        .args([
            "dflex",
            "--config",
            conf.to_str().unwrap(),
            "--threads",
            "2",
        ])
        .env("DFLEX_OUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let want = fs::read(data("golden/dflex/dflex.csv")).unwrap();
    assert_eq!(fs::read(tmp.path().join("dflex.csv")).unwrap(), want);
}

#[test]
fn cli_lookup_on_case_study_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let scores = data("case_studies.csv");
    let res = cli(
        &["lookup", "US4724318", "--scores", scores.to_str().unwrap()],
        tmp.path(),
    );
    assert!(res.status.success());
    let text = fs::read_to_string(tmp.path().join("lookup_US4724318.txt")).unwrap();
    assert!(text.contains("dflex = 0.638"), "{text}");
    assert!(text.contains("binding dimension: disruptiveness"));
    let res = cli(
        &["lookup", "US0000000", "--scores", scores.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn calibrate_then_score_with_fit_result() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(tmp.path());
    cfg.starts = 2;
    cfg.pi_grid = Some("0.03:0.09:3".into());
    let summary = run(&cfg, &Command::Calibrate).unwrap();
    for f in ["fit_ml.txt", "fit_gmm.txt", "pi_sensitivity.csv"] {
        assert!(
            summary.files.iter().any(|p| p.file_name().unwrap() == f),
            "{f}"
        );
    }
    let sens = fs::read_to_string(tmp.path().join("pi_sensitivity.csv")).unwrap();
    assert_eq!(sens.lines().count(), 4);

    let scored = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(scored.path());
    cfg.set(
        "fit_result",
        tmp.path().join("fit_ml.txt").to_str().unwrap(),
    )
    .unwrap();
    cfg.set("mode", "exact").unwrap();
    run(&cfg, &Command::Dflex).unwrap();
    let table = dflex::pipeline::read_score_table(&scored.path().join("dflex.csv")).unwrap();
    assert_eq!(table.len(), 182);
    for r in &table {
        let (g, d) = (r.g.unwrap(), r.dflex.unwrap());
        let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(d >= lo - 1e-12 && d <= hi + 1e-12);
    }
}

#[test]
fn synth_command_writes_loadable_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::from_file(&data("toy/synth.conf")).unwrap();
    cfg.out_dir = tmp.path().to_path_buf();
    run(&cfg, &Command::Synth).unwrap();
    // the bundled toy corpus was produced by this exact configuration
    for f in ["patents.csv", "citations.csv"] {
        assert_eq!(
            fs::read(tmp.path().join(f)).unwrap(),
            fs::read(data("toy").join(f)).unwrap(),
            "{f}"
        );
    }
    let corpus = dflex::corpus::load_corpus(
        &tmp.path().join("patents.csv"),
        &tmp.path().join("citations.csv"),
    )
    .unwrap();
    assert_eq!(corpus.len(), 200);
}
