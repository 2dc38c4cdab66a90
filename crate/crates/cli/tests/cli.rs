use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use caedp::dataset::{ClusterDataset, ClusterRecord, DKind, Individual};
use caedp::io::{ingest_csv, write_csv, ColumnSchema};
use caedp::rng::seeded;
use caedp::simbench::{generate_dataset, ScenarioId, ScenarioSpec};
use caedp_cli::{run_args, CliError};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn ind(x: [f64; 2], d: f64, m: f64, y: f64) -> Individual {
    Individual { x: x.to_vec(), d, m, y }
}

#[test]
fn two_cluster_fixture_round_trips() {
    let schema = ColumnSchema::standard(2, 1, DKind::Continuous);
    let ds = ingest_csv(fixture("two_clusters.csv"), &schema).unwrap();
    let expected = ClusterDataset::new(
        2,
        1,
        DKind::Continuous,
        vec![
            ClusterRecord {
                id: "c1".to_string(),
                treated: true,
                v: vec![0.5],
                individuals: vec![
                    ind([1.2, -0.3], 0.7, 1.1, 2.5),
                    ind([0.4, 0.9], -0.2, 0.3, 1.0),
                    ind([-1.0, 0.0], 0.1, -0.4, 0.2),
                ],
            },
            ClusterRecord {
                id: "c2".to_string(),
                treated: false,
                v: vec![-1.5],
                individuals: vec![ind([0.0, 1.5], 1.3, 0.8, -0.6), ind([2.25, -0.75], 0.0, 0.5, 0.125)],
            },
        ],
    )
    .unwrap();
    assert_eq!(ds, expected);
    let mut buf = Vec::new();
    write_csv(&ds, &schema, &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), fs::read_to_string(fixture("two_clusters.csv")).unwrap());
}

#[test]
fn conflicting_treatment_reports_the_row() {
    let schema = ColumnSchema::standard(2, 1, DKind::Continuous);
    match ingest_csv(fixture("conflicting_a.csv"), &schema) {
        Err(caedp::Error::Csv { location, .. }) => assert_eq!(location, "row 4, column A"),
        other => panic!("expected a csv error, got {other:?}"),
    }
    let out = tempfile::tempdir().unwrap();
    let err = run_args([
        "caedp",
        "fit",
        "--out",
        out.path().to_str().unwrap(),
        "--set",
        &format!("input={}", fixture("conflicting_a.csv").display()),
    ])
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("row 4"));
}

#[test]
fn rps_shaped_fixture_parses() {
    let ds = ingest_csv(fixture("rps_shaped.csv"), &ColumnSchema::standard(3, 1, DKind::Binary)).unwrap();
    assert_eq!(ds.n_clusters(), 42);
    assert_eq!(ds.n_total(), 449);
    assert_eq!(ds.clusters().iter().map(|c| c.size()).sum::<usize>(), 449);
}

fn s7_fixture(dir: &Path) -> PathBuf {
    let spec = ScenarioSpec {
        n_clusters: 12,
        ..ScenarioSpec::preset(ScenarioId::S7)
    };
    let ds = generate_dataset(&spec, &mut seeded(77)).unwrap();
    let path = dir.join("s7.csv");
    let schema = ColumnSchema::standard(ds.p(), ds.q(), DKind::Continuous);
    write_csv(&ds, &schema, fs::File::create(&path).unwrap()).unwrap();
    path
}

const SMALL: [&str; 14] = [
    "--set", "burn_in=40", "--set", "keep=15", "--set", "truncation_k=4", "--set", "truncation_l=4", "--set",
    "truncation_m=4", "--set", "synthetic_clusters=15", "--set", "gamma_steps=200",
];

fn run(cmd: &str, out: &Path, input: Option<&Path>, extra: &[&str]) -> Result<Vec<String>, CliError> {
    let mut args: Vec<String> = vec!["caedp".into(), cmd.into(), "--out".into(), out.display().to_string()];
    if let Some(i) = input {
        args.extend(["--set".to_string(), format!("input={}", i.display())]);
    }
    args.extend(SMALL.iter().map(|s| s.to_string()));
    args.extend(["--set".to_string(), "gamma_burn=50".to_string(), "--seed".to_string(), "5".to_string()]);
    args.extend(extra.iter().map(|s| s.to_string()));
    run_args(args)
}

#[test]
fn fit_then_gcompute_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = s7_fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        run("fit", out, Some(&data), &[]).unwrap();
        let names = run("gcompute", out, Some(&data), &[]).unwrap();
        assert_eq!(names, ["estimand_draws.csv", "summary.txt"]);
    }
    for f in ["posterior.csv", "loglik.csv", "estimand_draws.csv", "summary.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    assert_eq!(summary.lines().count(), 6);
    // The manifest re-runs the command and reproduces its artifacts.
    let c = dir.path().join("c");
    fs::create_dir_all(&c).unwrap();
    fs::copy(a.join("posterior.csv"), c.join("posterior.csv")).unwrap();
    let manifest = a.join("manifest_gcompute.txt");
    run_args([
        "caedp",
        "gcompute",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--set",
        &format!("posterior={}", c.join("posterior.csv").display()),
    ])
    .unwrap();
    assert_eq!(fs::read(a.join("summary.txt")).unwrap(), fs::read(c.join("summary.txt")).unwrap());
    let m = fs::read_to_string(&manifest).unwrap();
    assert!(m.contains("manifest.artifact.summary.txt = ") && m.contains("manifest.wall_seconds = "));
    assert!(m.contains("command = gcompute") && m.contains("seed = 5"));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = s7_fixture(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run("fit", &a, Some(&data), &["--threads", "1"]).unwrap();
    fs::create_dir_all(&b).unwrap();
    fs::copy(a.join("posterior.csv"), b.join("posterior.csv")).unwrap();
    run("gcompute", &a, Some(&data), &["--threads", "1"]).unwrap();
    run("gcompute", &b, Some(&data), &["--threads", "4"]).unwrap();
    assert_eq!(fs::read(a.join("estimand_draws.csv")).unwrap(), fs::read(b.join("estimand_draws.csv")).unwrap());
}

#[test]
fn sensitivity_labels_modes() {
    let dir = tempfile::tempdir().unwrap();
    let data = s7_fixture(dir.path());
    let out = dir.path().join("o");
    run("fit", &out, Some(&data), &[]).unwrap();
    run("sensitivity", &out, Some(&data), &["--set", "sensitivity_rho=0,0.3,prior"]).unwrap();
    let table = fs::read_to_string(out.join("sensitivity.txt")).unwrap();
    for label in ["[rho=0]", "[rho=0.3]", "[rho~prior]", "shift"] {
        assert!(table.contains(label), "{label}");
    }
    let draws = fs::read_to_string(out.join("sensitivity_draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 3 * 15);
}

#[test]
fn binary_confounder_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = fixture("rps_shaped.csv");
    let extra = ["--set", "d_kind=binary"];
    run("fit", dir.path(), Some(&data), &extra).unwrap();
    run("gcompute", dir.path(), Some(&data), &extra).unwrap();
    let draws = fs::read_to_string(dir.path().join("estimand_draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 16);
}

#[test]
fn diagnose_reproduces_hand_lpml() {
    // Observation 0 has likelihoods 1 and 3 (harmonic mean 1.5), observation
    // 1 has 2 and 2, so LPML = ln 1.5 + ln 2 = ln 3.
    let dir = tempfile::tempdir().unwrap();
    let ll = dir.path().join("stub.csv");
    fs::write(&ll, format!("iteration,values\n0,0 {}\n1,{} {}\n", 2f64.ln(), 3f64.ln(), 2f64.ln())).unwrap();
    run_args([
        "caedp",
        "diagnose",
        "--out",
        dir.path().to_str().unwrap(),
        "--set",
        &format!("loglik={}", ll.display()),
    ])
    .unwrap();
    let text = fs::read_to_string(dir.path().join("lpml.txt")).unwrap();
    let lpml: f64 = text.lines().next().unwrap().trim_start_matches("LPML = ").parse().unwrap();
    assert!((lpml - 3f64.ln()).abs() < 1e-14, "{lpml}");
    assert!(text.contains("draws = 2") && text.contains("observations = 2"));
}

#[test]
fn simulate_emits_populated_report() {
    let dir = tempfile::tempdir().unwrap();
    run(
        "simulate",
        dir.path(),
        None,
        &["--set", "scenario=S7", "--set", "replicates=5", "--set", "n_clusters=12"],
    )
    .unwrap();
    let report = fs::read_to_string(dir.path().join("eval_report.txt")).unwrap();
    assert!(report.contains("truth by closed form"));
    let header = report.lines().nth(1).unwrap();
    for col in ["Bias", "RMSE", "AL", "CP"] {
        assert!(header.contains(col), "{col}");
    }
    for name in ["SME", "NIE"] {
        let row = report.lines().find(|l| l.starts_with(name)).unwrap();
        let cells: Vec<f64> = row.split_whitespace().skip(1).map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells.len(), 5);
        assert!(cells.iter().all(|c| c.is_finite()));
        assert_eq!(cells[4], 5.0);
    }
    assert_eq!(fs::read_to_string(dir.path().join("replicates.csv")).unwrap().lines().count(), 1 + 5 * 5);
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_caedp"))
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |p: &mut Process| p.output().unwrap().status.code().unwrap();
    assert_eq!(code(binary().arg("--help")), 0);
    assert_eq!(code(binary().args(["fit", "--set", "bogus=1"])), 1);
    assert_eq!(code(binary().args(["fit", "--set", "input=/nonexistent/data.csv"])), 1);
    assert_eq!(code(binary().args(["frobnicate"])), 1);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "command = simulate\n").unwrap();
    assert_eq!(code(binary().args(["fit", "--config", cfg.to_str().unwrap()])), 1);
    let ll = dir.path().join("ll.csv");
    fs::write(&ll, "iteration,values\n0,-1 -2\n").unwrap();
    let ll_arg = format!("loglik={}", ll.display());
    assert_eq!(
        code(binary().args(["diagnose", "--set", &ll_arg]).env("CAEDP_THREADS", "many")),
        1
    );
    // An output path that is a regular file fails while writing.
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let status = binary()
        .args(["diagnose", "--set", &ll_arg, "--out", blocker.to_str().unwrap()])
        .env("CAEDP_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    let ok = binary()
        .args(["diagnose", "--set", &ll_arg, "--out", dir.path().join("ok").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
}
