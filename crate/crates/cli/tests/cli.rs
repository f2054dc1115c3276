use std::io::Write;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn runchart(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_runchart"))
        .args(args)
        .env_remove("RUNCHART_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn runchart");
    {
        let mut pipe = child.stdin.take().unwrap();
        if let Some(text) = stdin {
            pipe.write_all(text.as_bytes()).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn json_lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{e}: {l}")))
        .collect()
}

#[test]
fn dist_longest_run_small_case() {
    let out = runchart(&["dist", "--rule", "longest-run", "--n", "5", "--m", "3", "--d", "3"], None);
    assert_eq!(out.status.code(), Some(0));
    let doc = &json_lines(&out)[0];
    assert_eq!(doc["probability"], 0.7);
    assert_eq!(doc["exact"], "7/10");
    assert_eq!(doc["M"], 3);
}

#[test]
fn dist_scan_and_pmf() {
    let out = runchart(&["dist", "--rule", "scan", "--window", "2", "--n", "5", "--m", "2", "--s", "2"], None);
    assert_eq!(out.status.code(), Some(0));
    // arrangements of two ones in five slots with no adjacent pair: 6 of 10
    assert_eq!(json_lines(&out)[0]["exact"], "3/5");

    let out = runchart(&["dist", "--n", "4", "--m", "2", "--pmf", "--format", "csv"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "value,probability,exact\n0,0,0\n1,0.5,1/2\n2,0.5,1/2\n");
}

#[test]
fn dist_float_arithmetic_has_no_exact_field() {
    let out = runchart(
        &["dist", "--n", "5", "--m", "3", "--d", "3", "--arithmetic", "float"],
        None,
    );
    let doc = &json_lines(&out)[0];
    assert!((doc["probability"].as_f64().unwrap() - 0.7).abs() < 1e-12);
    assert!(doc["exact"].is_null());
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(runchart(&["--help"], None).status.code(), Some(0));
    assert_eq!(runchart(&["--version"], None).status.code(), Some(0));
}

#[test]
fn bad_flags_exit_64() {
    assert_eq!(runchart(&["dist", "--n", "x", "--m", "1"], None).status.code(), Some(64));
    assert_eq!(runchart(&["frobnicate"], None).status.code(), Some(64));
    assert_eq!(runchart(&["monitor", "--alpha", "1.5"], Some("")).status.code(), Some(64));
    assert_eq!(runchart(&["monitor", "--rule", "scan"], Some("")).status.code(), Some(64));
    assert_eq!(runchart(&["dist", "--n", "3", "--m", "5", "--d", "1"], None).status.code(), Some(64));
}

#[test]
fn bad_input_exits_65_with_line_number() {
    let out = runchart(&["monitor", "--c", "10"], Some("0.1\n0.2\nbogus\n"));
    assert_eq!(out.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = runchart(&["monitor"], Some("1\ninf\n"));
    assert_eq!(out.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn monitor_without_ones_runs_to_end() {
    let input: String = (0..30).map(|i| format!("{}\n", -1.0 - i as f64)).collect();
    let out = runchart(&["monitor", "--c", "0"], Some(&input));
    assert_eq!(out.status.code(), Some(0));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 31);
    assert!(lines[..30].iter().all(|l| l["type"] == "step" && l["signal"].is_null()));
    let last = &lines[30];
    assert_eq!(last["type"], "run_length");
    assert_eq!(last["censored"], true);
    assert_eq!(last["observations"], 30);
}

#[test]
fn monitor_signal_exits_2() {
    // 000111: P(L_6 = 3 | N_6 = 3) = 4/20 <= 0.25, so the startup limit is 2
    let out = runchart(
        &["monitor", "--c", "0.5", "--alpha", "0.25", "--startup-nu", "6"],
        Some("t,value\n1,0\n2,0\n3,0\n4,1\n5,1\n6,1\n7,1\n"),
    );
    assert_eq!(out.status.code(), Some(2));
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[5]["limit"], 2);
    assert_eq!(lines[5]["signal"], "exceed");
    let last = lines.last().unwrap();
    assert_eq!(last["type"], "run_length");
    assert_eq!(last["observations"], 6);
    assert_eq!(last["rl"], 6);
}

#[test]
fn monitor_csv_sends_summary_to_stderr() {
    let out = runchart(&["monitor", "--format", "csv"], Some("-1\n-2\n"));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("t,y,bit"));
    let summary: Value = serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).unwrap();
    assert_eq!(summary["type"], "run_length");
}

#[test]
fn limits_from_bits_are_deterministic() {
    let args = [
        "limits", "--bits", "011010011101", "--alpha", "0.1", "--startup-nu", "4",
        "--arithmetic", "exact",
    ];
    let a = runchart(&args, None);
    let b = runchart(&args, None);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let lines = json_lines(&a);
    assert_eq!(lines.len(), 12);
    assert!(lines[2]["limit"].is_null());
    assert_eq!(lines[3]["limit"], 2);
    assert_eq!(lines[3]["status"], "exact");
    assert_eq!(lines[3]["level_exact"], "1/10");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = std::env::temp_dir().join(format!("runchart-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let toml_path = dir.join("chart.toml");
    std::fs::write(&toml_path, "alpha = 0.25\nstartup_nu = 6\nc = 0.5\n").unwrap();
    let input = "0\n0\n0\n1\n1\n1\n";
    let path = toml_path.to_str().unwrap();

    let out = runchart(&["monitor", "--config", path], Some(input));
    assert_eq!(out.status.code(), Some(2));

    // flag overrides the file: higher cutoff means no ones and no signal
    let out = runchart(&["monitor", "--config", path, "--c", "5"], Some(input));
    assert_eq!(out.status.code(), Some(0));

    let bad = dir.join("bad.json");
    std::fs::write(&bad, r#"{"alpha": 0.1, "colour": "red"}"#).unwrap();
    let out = runchart(&["monitor", "--config", bad.to_str().unwrap()], Some(input));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn seed_from_environment() {
    let run = |seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_runchart"));
        cmd.args(["simulate", "--alpha", "0.1", "--reps", "50", "--horizon", "500"]);
        match seed {
            Some(s) => cmd.env("RUNCHART_SEED", s),
            None => cmd.env_remove("RUNCHART_SEED"),
        };
        cmd.output().unwrap()
    };
    let a = run(Some("11"));
    let b = run(Some("11"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["chart"]["seed"], 11);
    assert_eq!(run(Some("nope")).status.code(), Some(64));
}

#[test]
fn simulate_and_sweep_outputs() {
    let out = runchart(
        &["simulate", "--alpha", "0.1", "--reps", "200", "--seed", "3", "--geometric"],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["estimate"]["runs"], 200);
    assert!(doc["estimate"]["mean"].as_f64().unwrap() >= 1.0);
    assert!(doc["geometric"]["p_value"].is_number());

    let out = runchart(
        &[
            "sweep", "--alpha", "0.05", "--mu", "2", "--reps", "100", "--seed", "5",
            "--cs", "-1,0,1", "--format", "csv",
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "c,mean,std_error,censored,false_alarms,runs");
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("-1,"));
}

#[test]
fn verify_small_grid_passes() {
    let out = runchart(&["verify", "--max-n", "12", "--format", "csv"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",pass")));
    assert!(text.lines().any(|l| l.starts_with("joint,")));
}
