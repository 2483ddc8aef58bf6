use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use contraction_observer::observer::{error_bound, CertificateReport};
use contraction_observer::sim::read_trajectory_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contraction-observer"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .to_string()
}

#[test]
fn certify_two_link_writes_loadable_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert.json");
    let s = scenario("two_link.json");
    let o = run(&[
        "certify",
        "--scenario",
        s.to_str().unwrap(),
        "--gain",
        "none",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let text = stdout(&o);
    assert!((field(&text, "certified_c").parse::<f64>().unwrap() + 0.2).abs() <= 1e-9);
    assert_eq!(field(&text, "strictly_contractive"), "true");
    let report = CertificateReport::from_path(&out).unwrap();
    assert!((report.certified_c + 0.2).abs() <= 1e-9);
    assert_eq!(report.seed, 42);
}

#[test]
fn certify_without_out_prints_pure_json() {
    let s = scenario("five_link_sensed.json");
    let o = run(&[
        "certify",
        "--scenario",
        s.to_str().unwrap(),
        "--grid",
        "3",
        "--samples",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let report = CertificateReport::from_json_str(&stdout(&o)).unwrap();
    assert!(report.strictly_contractive);
    assert!(String::from_utf8_lossy(&o.stderr).contains("certified_c = "));
}

#[test]
fn unsensed_scenario_is_not_certified() {
    let s = scenario("five_link_unsensed.json");
    let o = run(&[
        "certify",
        "--scenario",
        s.to_str().unwrap(),
        "--grid",
        "3",
        "--samples",
        "50",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn certify_is_reproducible_byte_for_byte() {
    let s = scenario("rush_hour.json");
    let args = [
        "certify",
        "--scenario",
        s.to_str().unwrap(),
        "--grid",
        "3",
        "--samples",
        "100",
        "--seed",
        "7",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());
}

#[test]
fn malformed_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"n": 2, "capacities": [1.0]}"#).unwrap();
    let o = run(&["certify", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let missing = dir.path().join("nope.json");
    assert_eq!(
        run(&["certify", "--scenario", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_csv_respects_bound_in_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let s = scenario("two_link.json");
    let o = run(&[
        "simulate",
        "--scenario",
        s.to_str().unwrap(),
        "--gain",
        "none",
        "--t1",
        "10",
        "--dt",
        "1e-3",
        "--stride",
        "50",
        "--x0",
        "0.8,0.2",
        "--xhat0",
        "0.2,0.8",
        "--c",
        "-0.2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(stdout(&o).contains("error_bound c=-0.2"));

    let table =
        read_trajectory_csv(std::io::BufReader::new(std::fs::File::open(&csv).unwrap())).unwrap();
    assert_eq!(
        table.columns,
        ["t", "x_1", "x_2", "xhat_1", "xhat_2", "err_norm", "bound"]
    );
    assert!(table.comments.iter().any(|c| c == "seed=42"));
    assert_eq!(table.rows.len(), 10_000 / 50 + 1);
    let t = table.column("t").unwrap();
    let err = table.column("err_norm").unwrap();
    let bound = table.column("bound").unwrap();
    assert!((t.last().unwrap() - 10.0).abs() < 1e-12);
    for ((t, e), b) in t.iter().zip(&err).zip(&bound) {
        assert!((b - error_bound(-0.2, 1.2, *t)).abs() <= 1e-12);
        assert!(*e <= b * (1.0 + 1e-6), "t={t}: {e} > {b}");
    }
}

#[test]
fn simulate_checks_against_certificate_file() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert.json");
    let s = scenario("five_link_sensed.json");
    let c = run(&[
        "certify",
        "--scenario",
        s.to_str().unwrap(),
        "--grid",
        "3",
        "--samples",
        "100",
        "--out",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(c.status.code(), Some(0));
    let o = run(&[
        "simulate",
        "--scenario",
        s.to_str().unwrap(),
        "--t1",
        "5",
        "--dt",
        "1e-2",
        "--stride",
        "10",
        "--certificate",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let table = read_trajectory_csv(o.stdout.as_slice()).unwrap();
    assert!(table.columns.contains(&"bound".to_string()));
    assert!(String::from_utf8_lossy(&o.stderr).contains("holds=true"));
}

#[test]
fn simulate_with_seeded_starts_is_reproducible() {
    let s = scenario("rush_hour.json");
    let args = [
        "simulate",
        "--scenario",
        s.to_str().unwrap(),
        "--t1",
        "2",
        "--dt",
        "1e-2",
        "--seed",
        "9",
    ];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let other = run(&[
        "simulate",
        "--scenario",
        s.to_str().unwrap(),
        "--t1",
        "2",
        "--dt",
        "1e-2",
        "--seed",
        "10",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn violated_rate_exits_three() {
    let s = scenario("two_link.json");
    let o = run(&[
        "simulate",
        "--scenario",
        s.to_str().unwrap(),
        "--gain",
        "none",
        "--t1",
        "10",
        "--dt",
        "1e-2",
        "--x0",
        "0.8,0.2",
        "--xhat0",
        "0.2,0.8",
        "--c",
        "-5",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("holds=false"));
}

#[test]
fn simulate_rejects_out_of_box_start() {
    let s = scenario("two_link.json");
    let o = run(&[
        "simulate",
        "--scenario",
        s.to_str().unwrap(),
        "--x0",
        "1.5,0.2",
        "--xhat0",
        "0,0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn measure_reports_closed_form_values() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    std::fs::write(&a, "-2,1\n1,-3\n").unwrap();
    let o = run(&["measure", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(field(&text, "mu").parse::<f64>().unwrap(), -1.0);
    assert_eq!(field(&text, "metzler"), "true");
    assert!((field(&text, "limit_estimate").parse::<f64>().unwrap() + 1.0).abs() <= 1e-6);

    let eye = dir.path().join("eye.csv");
    std::fs::write(&eye, "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    let o = run(&["measure", eye.to_str().unwrap(), "--norm", "two"]);
    let text = stdout(&o);
    assert!((field(&text, "mu").parse::<f64>().unwrap() - 1.0).abs() <= 1e-12);
    assert!((field(&text, "induced_norm").parse::<f64>().unwrap() - 1.0).abs() <= 1e-12);

    let rect = dir.path().join("rect.csv");
    std::fs::write(&rect, "1,2,3\n4,5,6\n").unwrap();
    assert_eq!(
        run(&["measure", rect.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn gain_from_csv_must_match_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let gain = dir.path().join("l.csv");
    std::fs::write(&gain, "-1,0\n0,-1\n").unwrap();
    let s = scenario("five_link_sensed.json");
    let o = run(&[
        "certify",
        "--scenario",
        s.to_str().unwrap(),
        "--gain",
        gain.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("expected 5x5"));
}
