use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn biharm(records: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biharm")).args(args).env("BIHARM_RECORD_DIR", records).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MINIMAL: &str = r#"
[problem]
dim = 3
p = 2
bc = "navier"

[problem.forcing]
kind = "bump"
coeff = 1.0
center = 2.0
width = 1.0
"#;

#[test]
fn minimal_config_blows_up_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("min.toml");
    fs::write(&cfg, MINIMAL).unwrap();
    let out = biharm(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["classification"], "blowup");
    let records = fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    assert_eq!(rec["schema_version"], 1);
    assert_eq!(rec["outcome"]["kind"]["kind"], "blow-up");
    assert_eq!(rec["config"]["problem"]["cells"], 232);
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("min.json");
    fs::write(&cfg, r#"{"problem": {"dim": 3, "p": 2, "t_max": 2}}"#).unwrap();
    let out = biharm(dir.path(), &["simulate", "--no-record", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn p_below_one_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = biharm(dir.path(), &["simulate", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("p must exceed 1"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_names_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[problem.forcing]\nkind = \"bump\"\ncoeff = 1.0\ncenter = 2.0\nwidth = 1.0\nheight = 3\n").unwrap();
    let out = biharm(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("problem.forcing"), "{}", stderr(&out));
    assert!(stderr(&out).contains("height"), "{}", stderr(&out));
}

#[test]
fn linear_dirichlet_zero_run_is_stationary_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = biharm(dir.path(), &["simulate", "--bc", "dirichlet", "--nonlinearity", "off", "--f", "zero"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(summary["classification"], "stationary");
    assert_eq!(summary["outcome"]["residual"], 0.0);
}

#[test]
fn snapshots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("snap.csv");
    let out = biharm(dir.path(), &["simulate", "--no-record", "--u0", "bump", "--t-max", "1", "--snapshots", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("t,r,u\n"));
    assert!(text.lines().count() > 233);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(biharm(dir.path(), &["verify", "nope"]).status.code(), Some(1));
}

#[test]
fn supersolution_report_shows_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let out = biharm(dir.path(), &["verify", "supersolution", "--N", "6", "--p", "4", "--m", "1.5", "--eps", "0.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("M > 0,N=6 p=4 m=1.5 eps=0.1,6.5625e0"), "{}", stdout(&out));
}

#[test]
fn lifespan_cutoffs_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = biharm(dir.path(), &["verify", "lifespan-cutoffs"]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn fujita_sweep_resumes_without_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let out = biharm(dir.path(), &["sweep", "fujita", "--N", "4", "--jobs", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = stdout(&out);
    for line in csv.lines().filter(|l| l.starts_with("fujita,4,1.5,") || l.starts_with("fujita,4,2,")) {
        assert!(line.contains(",blowup,"), "{line}");
    }
    let above: Vec<&str> = csv.lines().filter(|l| l.starts_with("fujita,4,2.2,") || l.starts_with("fujita,4,2.8,")).collect();
    assert_eq!(above.len(), 4);
    assert!(above.iter().all(|l| l.contains("conjectured")));
    assert!(!csv.contains("global solution"));
    assert!(dir.path().join("fujita_plot.py").exists());
    let lines_before = fs::read_to_string(dir.path().join("records.jsonl")).unwrap().lines().count();

    let again = biharm(dir.path(), &["sweep", "fujita", "--N", "4", "--jobs", "2"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(stderr(&again).contains("computed 0 arms"), "{}", stderr(&again));
    let lines_after = fs::read_to_string(dir.path().join("records.jsonl")).unwrap().lines().count();
    assert_eq!(lines_before, lines_after);

    let report = biharm(dir.path(), &["report", "--study", "fujita"]);
    assert_eq!(report.status.code(), Some(0));
    assert_eq!(stdout(&report).lines().count(), lines_after + 1);
}

#[test]
fn lifespan_sweep_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = biharm(dir.path(), &["sweep", "lifespan", "--N", "3", "--p", "1.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let fit = stdout(&out).lines().find(|l| l.starts_with("fit,")).unwrap().to_string();
    let slope: f64 = fit.split(',').nth(1).unwrap().trim_start_matches("slope=").parse().unwrap();
    assert!((slope + 0.8).abs() <= 0.3, "{fit}");
}

#[test]
fn lifespan_sweep_refuses_short_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let out = biharm(dir.path(), &["sweep", "lifespan", "--eps", "0.3,0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("1.5 decades"), "{}", stderr(&out));
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["--help"],
        vec!["simulate", "--help"],
        vec!["verify", "lemmas", "--help"],
        vec!["sweep", "phase", "--help"],
        vec!["sweep", "lifespan", "--help"],
        vec!["report", "--help"],
    ] {
        let out = biharm(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(stdout(&out).contains("Usage"), "{args:?}");
    }
    let help = stdout(&biharm(dir.path(), &["verify", "supersolution", "--help"]));
    assert!(help.contains("[default: 1.5]"), "{help}");
}
