//! The command-line front end.

use std::path::Path;
use std::process::Command;

use dynabo_core::config::RunConfig;
use dynabo_core::pipeline::read_gp_csv;
use dynabo_core::service::{CreateSession, ProposalRecord, ServiceContext, Session};

fn dynabo(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dynabo")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn corpus_to_proposal() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = dynabo(&["generate-corpus", "--out", path(&corpus), "--shots", "24", "--campaigns", "2", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let art = dir.path().join("art");
    let out = dynabo(&["pipeline", "--corpus", path(&corpus), "--out", path(&art)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dataset = art.join("gp_dataset.csv");
    let rows = read_gp_csv(&dataset).unwrap();
    assert!(!rows.is_empty());

    let out = dynabo(&["propose", "--dataset", path(&dataset), "--target-beta-n", "3.3", "--alpha", "1.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cli: ProposalRecord = serde_json::from_slice(&out.stdout).unwrap();

    let ctx = ServiceContext::load(&RunConfig::default(), None, art.clone()).unwrap();
    let s = Session::create(&ctx, "x".into(), CreateSession { dataset: Some("gp_dataset".into()), ..Default::default() })
        .unwrap();
    assert_eq!(cli, s.propose(&ctx, 3.3, Some(1.0)).unwrap());
}

#[test]
fn failures_exit_with_their_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = dynabo(&["--config", path(&missing), "propose", "--target-beta-n", "3.0"]);
    assert_eq!(out.status.code(), Some(24));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error [config_error]"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[corpus]\nshots = 3\n").unwrap();
    let out = dynabo(&["--config", path(&bad), "propose", "--target-beta-n", "3.0"]);
    assert_eq!(out.status.code(), Some(24));

    let out = dynabo(&["propose", "--target-beta-n=-1"]);
    assert_eq!(out.status.code(), Some(22));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation_error"));
}
