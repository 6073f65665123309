use std::process::{Command, Output};

use qcount::asymptotics::VerifyReport;

fn qcount(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcount")).args(args).env_remove("QCOUNT_THREADS").output().expect("spawn qcount")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("valid json on stdout")
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(qcount(&[]).status.code(), Some(1));
    assert_eq!(qcount(&["bogus"]).status.code(), Some(1));
    assert_eq!(qcount(&["count", "--form", "1,1", "--a", "1", "--T", "5"]).status.code(), Some(1));
    assert_eq!(qcount(&["count", "--form", "1,1,-1,0,0,0", "--a", "1"]).status.code(), Some(1));
    let help = qcount(&["bogus"]);
    assert!(String::from_utf8_lossy(&help.stderr).contains("Commands:"));
    assert_eq!(qcount(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_2() {
    let definite = qcount(&["constant", "--form", "1,1,1,0,0,0", "--a", "1"]);
    assert_eq!(definite.status.code(), Some(2));
    let degenerate = qcount(&["integral", "--form", "1,1,0,0,0,0", "--a", "1", "--T", "3"]);
    assert_eq!(degenerate.status.code(), Some(2));
    let zero_target = qcount(&["count", "--form", "1,1,-1,0,0,0", "--a", "0", "--T", "3"]);
    assert_eq!(zero_target.status.code(), Some(2));
    let not_prime = qcount(&["density", "--form", "1,1,-1,0,0,0", "--a", "1", "--p", "9"]);
    assert_eq!(not_prime.status.code(), Some(2));
    let closed_off_family =
        qcount(&["integral", "--form", "1,2,-1,0,0,0", "--a", "1", "--T", "3", "--method", "closed"]);
    assert_eq!(closed_off_family.status.code(), Some(2));
}

#[test]
fn resource_errors_exit_3() {
    let cap = qcount(&["density", "--form", "1,1,-1,0,0,0", "--a", "1", "--p", "47", "--cap", "10"]);
    assert_eq!(cap.status.code(), Some(3));
    let guard = qcount(&["count", "--form", "1,1,-1,0,0,0", "--a", "1", "--T", "2e6"]);
    assert_eq!(guard.status.code(), Some(3));
    let lowered = qcount(&["count", "--form", "1,1,-1,0,0,0", "--a", "1", "--T", "100", "--t-guard", "50"]);
    assert_eq!(lowered.status.code(), Some(3));
}

#[test]
fn density_both_reports_each_method() {
    let odd = qcount(&["density", "--form", "1,1,-1,0,0,0", "--a", "1", "--p", "3", "--method", "both", "--json"]);
    assert_eq!(odd.status.code(), Some(0));
    let v = json(&odd);
    assert_eq!(v["agree"], true);
    assert_eq!(v["results"][0]["alpha"], "4/3");
    assert_eq!(v["results"][1]["method"], "closed");

    let two = qcount(&["density", "--form", "1,1,-1,0,0,0", "--a", "1", "--p", "2", "--method", "both"]);
    assert_eq!(two.status.code(), Some(0));
    let text = stdout(&two);
    assert!(text.contains("alpha_2 = 2 (stabilized counts"));
    assert!(text.contains("alpha_2 = 1 (closed form"));
}

#[test]
fn integral_both_agree() {
    let o = qcount(&["integral", "--form", "1,1,-1,0,0,0", "--a", "1", "--T", "3", "--method", "both", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    for r in v["results"].as_array().unwrap() {
        let x = r["value"].as_f64().unwrap();
        assert!((x - 4.0 * std::f64::consts::PI).abs() < 1e-9, "{x}");
    }
}

#[test]
fn count_both_and_threads_are_deterministic() {
    let args = ["count", "--form", "1,1,-1,0,0,0", "--a", "1", "--T", "5", "--method", "both", "--json"];
    let o = qcount(&args);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["results"][0]["count"], 44);
    assert_eq!(v["results"][1]["count"], 44);

    let one_thread = Command::new(env!("CARGO_BIN_EXE_qcount"))
        .args(["count", "--form", "1,2,-3,1,0,1", "--a", "5", "--T", "200", "--threads", "1"])
        .output()
        .unwrap();
    let many = Command::new(env!("CARGO_BIN_EXE_qcount"))
        .args(["count", "--form", "1,2,-3,1,0,1", "--a", "5", "--T", "200"])
        .env("QCOUNT_THREADS", "4")
        .output()
        .unwrap();
    let strip = |o: &Output| stdout(o).split(" (").next().unwrap().to_string();
    assert_eq!(strip(&one_thread), strip(&many));

    let bad_env = Command::new(env!("CARGO_BIN_EXE_qcount"))
        .args(["prefactor", "--r", "1", "--s", "0", "--w", "2", "--d", "1", "--R", "1", "--h", "1"])
        .env("QCOUNT_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
}

#[test]
fn verify_json_round_trips_and_csv_matches() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("report.json");
    let csv_path = dir.path().join("report.csv");
    let o = qcount(&[
        "verify",
        "--form",
        "1,1,-1,0,0,0",
        "--a",
        "1",
        "--t-min",
        "100",
        "--t-max",
        "10000",
        "--rungs",
        "3",
        "--out",
        json_path.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let report: VerifyReport = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(report.regime, "SquareCase");
    assert_eq!(report.ladder.len(), 3);
    for rung in report.ladder.iter() {
        let again = rung.breakdown.product();
        assert!((again - rung.predicted).abs() <= 1e-12 * rung.predicted, "{again} vs {}", rung.predicted);
        assert!((rung.ratio - rung.count as f64 / rung.predicted).abs() <= 1e-12);
    }

    let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    for key in ["form", "a", "regime", "constant", "ladder", "trend_ok"] {
        assert!(raw.get(key).is_some(), "missing {key}");
    }
    assert!(raw["ladder"][0].get("T").is_some());

    let mut rdr = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(&rdr.headers().unwrap()[0], "T");
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (row, rung) in rows.iter().zip(report.ladder.iter()) {
        assert_eq!(row[1].parse::<u64>().unwrap(), rung.count);
        assert_eq!(row[2].parse::<f64>().unwrap(), rung.predicted);
    }
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "# batch settings\nform = 1,1,-1,0,0,0\na = 1\nT = 5\nmethod = both\njson = true\nt-min = 100\n",
    )
    .unwrap();
    let cfg = cfg.to_str().unwrap();

    let from_file = qcount(&["count", "--config", cfg]);
    assert_eq!(from_file.status.code(), Some(0), "{}", String::from_utf8_lossy(&from_file.stderr));
    let v = json(&from_file);
    assert_eq!(v["results"][0]["count"], 44);
    assert_eq!(v["results"].as_array().unwrap().len(), 2);

    let overridden = qcount(&["count", "--config", cfg, "--T", "2", "--method", "generic"]);
    let v = json(&overridden);
    assert_eq!(v["results"].as_array().unwrap().len(), 1);
    assert_eq!(v["results"][0]["count"], 12);

    std::fs::write(dir.path().join("bad.conf"), "no equals sign here\n").unwrap();
    let bad = qcount(&["count", "--config", dir.path().join("bad.conf").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn prefactor_and_constant() {
    let o = qcount(&["prefactor", "--r", "1", "--s", "0", "--w", "2", "--d", "1", "--R", "1", "--h", "1"]);
    assert_eq!(stdout(&o).trim(), "prefactor = 1");

    let c = qcount(&["constant", "--form", "1,1,-2,0,0,0", "--a", "1", "--densities", "closed", "--json"]);
    assert_eq!(c.status.code(), Some(0));
    let v = json(&c);
    assert_eq!(v["regime"], "NonSquareCase");
    let (a, b) = (v["coefficient"].as_f64().unwrap(), v["table_coefficient"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-12 * b);
    assert!((v["l_value"]["value"].as_f64().unwrap() - 0.623225).abs() < 1e-6);
}
