//! End-to-end runs of the `faultscope` binary on the secure-boot fixture.

use std::path::PathBuf;
use std::process::{Command, Output};

use faultscope::report::stats_text;
use faultscope::CampaignReport;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn faultscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faultscope"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_reports_fault_free_verdict() {
    let cfg = fixture("secure_boot.json");
    let o = faultscope(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("verdict: oracle-rejected"), "{}", stdout(&o));
}

#[test]
fn simulate_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = fixture("secure_boot.json");
    let cfg = cfg.to_str().unwrap();

    // Skips alone never pass the hash check.
    let o = faultscope(&["simulate", "--config", cfg, "--out", out, "--audit"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report_path = dir.path().join("report.json");
    let report = CampaignReport::from_json(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report.exploitable.is_empty());
    assert!(report.counters.runs > 0);

    let rp = report_path.to_str().unwrap();
    let o = faultscope(&["report", "--report", rp, "--heatmap", "--stats", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for line in stats_text(&report).lines().filter(|l| !l.starts_with("wall time")) {
        assert!(text.contains(line), "missing {line:?} in\n{text}");
    }
    let pgm = std::fs::read(dir.path().join("heatmap.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n200 1\n255\n"));
    assert!(pgm[13..].iter().all(|&b| b == 0));
    let csv = std::fs::read_to_string(dir.path().join("heatmap.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("m5,0,0"));

    // Byte-set faults do reach the firmware; every one replays.
    let o = faultscope(&["simulate", "--config", cfg, "--models", "m6", "--out", out, "--audit"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("exploitable [m6]:"));

    let o = faultscope(&["trace", "--config", cfg, "--models", "m6", "--report", rp, "--index", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("exploitable"), "{}", stdout(&o));

    let o = faultscope(&["report", "--report", rp, "--scatter", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let scatter = std::fs::read_to_string(dir.path().join("scatter.csv")).unwrap();
    assert_eq!(scatter.trim(), "t1,t2,count");
}

#[test]
fn configuration_errors_exit_2() {
    let o = faultscope(&["simulate", "--config", "/nonexistent/campaign.json"]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = fixture("secure_boot.json");
    let o = faultscope(&["simulate", "--config", cfg.to_str().unwrap(), "--models", "m99"]);
    assert_eq!(o.status.code(), Some(2));
    let o = faultscope(&["trace", "--report", "/nonexistent/report.json", "--index", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
