use std::process::{Command, Output};

fn vacq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vacq"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key},")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn analyze_reference_point() {
    let out = vacq(&["analyze"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let exact = value(&text, "el_exact");
    let paper = value(&text, "el_paper");
    assert!(exact > paper && paper > 0.0);
    assert!(value(&text, "spectral_radius") < 1.0);
    assert!(text.contains("status_vacation,ok"));
}

#[test]
fn exit_codes() {
    assert_eq!(vacq(&["analyze", "--lambda", "30"]).status.code(), Some(3));
    assert_eq!(vacq(&["analyze", "--lambda", "-1"]).status.code(), Some(2));
    assert_eq!(
        vacq(&["analyze", "--a", "0.5", "--b", "0.9"]).status.code(),
        Some(2)
    );
    assert_eq!(vacq(&["scan", "--rho-step", "nope"]).status.code(), Some(2));
    assert_eq!(vacq(&["no-such-command"]).status.code(), Some(2));
    // M/M/1 instability alone is reported as data
    let out = vacq(&["analyze", "--lambda", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("status_mm1,unstable"));
    assert!(text.contains("el_mm1,\n"));
}

#[test]
fn crossover_output() {
    let out = vacq(&["crossover", "--grid-step", "1e-3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let k1 = value(&text, "k1");
    assert!((0.022..0.025).contains(&k1), "{k1}");
    assert_eq!(value(&text, "sign_changes"), 1.0);
}

#[test]
fn scan_to_file_as_json_lines() {
    let dir = std::env::temp_dir().join(format!("vacq-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("scan.jsonl");
    let out = vacq(&[
        "scan",
        "--rho-step",
        "0.01",
        "--rho-max",
        "0.12",
        "--format",
        "json-lines",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[0]["status_mm1"], "ok");
    assert!(rows[11]["el_mm1"].is_null());
    assert_eq!(rows[11]["status_mm1"], "unstable");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn simulate_and_verify_run() {
    let out = vacq(&[
        "simulate",
        "--horizon",
        "2000",
        "--replications",
        "3",
        "--seed",
        "5",
    ]);
    assert!(out.status.success());
    let again = vacq(&[
        "simulate",
        "--horizon",
        "2000",
        "--replications",
        "3",
        "--seed",
        "5",
    ]);
    assert_eq!(out.stdout, again.stdout);
    assert!(value(&stdout(&out), "std_error") > 0.0);

    let out = vacq(&[
        "verify",
        "--samples",
        "30",
        "--horizon",
        "2000",
        "--replications",
        "4",
    ]);
    assert!(out.status.success(), "{}", stdout(&out));
}
