use std::path::Path;
use std::process::{Command, Output};

use kgbias::audit::{Manifest, RunStatus, Stage, MANIFEST};
use kgbias::config::AuditConfig;
use kgbias::report::write_json;

fn kgbias(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kgbias"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, corpus: &str) {
    let out = kgbias(&["synth", "--corpus", corpus, "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn audit(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["audit", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    kgbias(&args)
}

/// Desk config on the planted corpus, shrunk so each run takes well under a second.
fn small_config(dir: &Path) -> std::path::PathBuf {
    synth(dir, "planted");
    let path = dir.join("audit.json");
    let mut cfg = AuditConfig::load(&path).unwrap();
    cfg.train.epochs = 5;
    cfg.k = vec![1, 2];
    cfg.rank_deviation_k = 2;
    cfg.similarity_k = 2;
    cfg.entropy_k = 2;
    write_json(&path, &cfg).unwrap();
    path
}

#[test]
fn synth_writes_a_loadable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "bundled");
    for f in ["triples.tsv", "labels.tsv", "audit.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    AuditConfig::load(&dir.path().join("audit.json")).unwrap().validate_paths().unwrap();
}

#[test]
fn audit_writes_a_complete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let run = audit(&cfg, &out, &["--model", "distmult", "--seed", "5"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("complete:"));
    let m = Manifest::load(&out).unwrap();
    assert_eq!(m.status, RunStatus::Complete);
    assert_eq!(m.completed_stages, Stage::ALL.to_vec());
    assert_eq!(m.seed, 5);
    assert_eq!(m.config.models, vec!["distmult".parse().unwrap()]);
    for a in &m.artifacts {
        assert!(out.join(&a.path).is_file(), "{}", a.path);
    }
    assert!(out.join("summary.md").is_file());
}

#[test]
fn staged_run_matches_one_shot_audit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let whole = dir.path().join("whole");
    let staged = dir.path().join("staged");
    assert!(audit(&cfg, &whole, &[]).status.success());
    for stage in Stage::ALL {
        let run = kgbias(&[stage.as_str(), "--config", cfg.to_str().unwrap(), "--out", staged.to_str().unwrap()]);
        assert!(run.status.success(), "{}: {}", stage.as_str(), String::from_utf8_lossy(&run.stderr));
    }
    let a = Manifest::load(&whole).unwrap();
    let b = Manifest::load(&staged).unwrap();
    let paths = |m: &Manifest| m.artifacts.iter().map(|a| a.path.clone()).collect::<Vec<_>>();
    assert_eq!(paths(&a), paths(&b));
    for art in a.artifacts.iter().filter(|a| a.deterministic) {
        let x = std::fs::read(whole.join(&art.path)).unwrap();
        let y = std::fs::read(staged.join(&art.path)).unwrap();
        assert!(x == y, "{} differs", art.path);
    }
    assert_eq!(std::fs::read(whole.join(MANIFEST)).unwrap(), std::fs::read(staged.join(MANIFEST)).unwrap());
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let run = audit(&dir.path().join("missing.json"), &dir.path().join("out"), &[]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("error:"));

    let cfg = small_config(dir.path());
    let run = audit(&cfg, &dir.path().join("out"), &["--k", "3", "--k", "2"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_3_and_leave_a_failed_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let triples = dir.path().join("triples.tsv");
    let kept: String = std::fs::read_to_string(&triples)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\tP27\t"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&triples, kept).unwrap();
    let out = dir.path().join("out");
    let run = audit(&cfg, &out, &[]);
    assert_eq!(run.status.code(), Some(3));
    let m = Manifest::load(&out).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.failed_stage, Some(Stage::Slice));
    assert_eq!(m.completed_stages, vec![Stage::Ingest]);
}

#[test]
fn divergent_training_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_config(dir.path());
    let mut cfg = AuditConfig::load(&path).unwrap();
    cfg.train.learning_rate = 1e200;
    write_json(&path, &cfg).unwrap();
    let out = dir.path().join("out");
    let run = audit(&path, &out, &["--model", "distmult"]);
    assert_eq!(run.status.code(), Some(4), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(Manifest::load(&out).unwrap().failed_stage, Some(Stage::Train));
}
