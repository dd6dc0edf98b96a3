use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shuffle-acct"))
        .args(args)
        .env_remove("SHUFFLE_ACCT_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Rows of a CSV document as header-keyed lookups.
fn table(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|rec| {
            header
                .iter()
                .cloned()
                .zip(rec.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn f(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

#[test]
fn krr_indices_coincide() {
    let o = run(&["shuffle-index", "--mech", "krr", "--k", "3", "--eps0", "2"]);
    assert!(o.status.success());
    let rows = table(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert!((f(&rows[0], "chi_lo") - 0.33912).abs() < 5e-6);
    assert_eq!(rows[0]["chi_lo"], rows[0]["chi_up"]);
    assert_eq!(rows[0]["tight"], "true");
}

#[test]
fn gaussian_ratio_and_sweep_rows() {
    let o = run(&[
        "shuffle-index",
        "--mech",
        "gen-gaussian",
        "--beta",
        "1.5,2",
        "--scale",
        "2.828",
    ]);
    assert!(o.status.success());
    let rows = table(&stdout(&o));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(f(r, "ratio") > 0.7);
        assert_eq!(r["tight"], "false");
    }
}

#[test]
fn invalid_mechanism_exits_2() {
    let o = run(&["shuffle-index", "--k", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("k >= 2"));
    assert!(o.stdout.is_empty());
}

#[test]
fn infeasible_budget_exits_3_with_hint() {
    let o = run(&["accountant", "--n", "100000", "--eta-main", "1e-5"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("infeasible") && err.contains("--eta-main"), "{err}");
}

#[test]
fn epsilon_curve_columns_and_order() {
    let o = run(&["epsilon-curve", "--n-grid", "1e3:1e5:3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("n,eps_closed_form,eps_refined,eps_at_chi_up,eps_at_chi_lo,eps_refined_at_chi_up\n"));
    let rows = table(&text);
    let ns: Vec<&str> = rows.iter().map(|r| r["n"].as_str()).collect();
    assert_eq!(ns, ["1000", "10000", "100000"]);
    for w in rows.windows(2) {
        assert!(f(&w[1], "eps_refined") < f(&w[0], "eps_refined"));
    }
    // 17 significant digits
    assert!(rows[0]["eps_refined"].split('e').next().unwrap().len() == 18);
}

#[test]
fn oracle_rows_are_inside_and_deterministic() {
    let args = [
        "accountant",
        "--n-grid",
        "10:40:2",
        "--eps",
        "0.3",
        "--oracle",
        "--mc-samples",
        "20000",
        "--seed",
        "9",
        "--no-wall-time",
    ];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let rows = table(&stdout(&a));
    assert_eq!(rows[0]["oracle_kind"], "exact");
    assert_eq!(rows[1]["oracle_kind"], "monte_carlo");
    for r in &rows {
        assert_eq!(r["oracle_inside"], "true");
        assert!(f(r, "lower") <= f(r, "upper"));
        assert_eq!(f(r, "wall_ms"), 0.0);
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let args = [
        "accountant",
        "--n-grid",
        "100:1000:3",
        "--eta-main",
        "0.2,0.1",
        "--no-wall-time",
    ];
    let one = Command::new(env!("CARGO_BIN_EXE_shuffle-acct"))
        .args(args)
        .env("SHUFFLE_ACCT_THREADS", "1")
        .output()
        .unwrap();
    let many = run(&[&args[..], &["--threads", "3"]].concat());
    assert!(one.status.success() && many.status.success());
    assert_eq!(one.stdout, many.stdout);
    let rows = table(&stdout(&one));
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[1]["n"], "100");
    assert_eq!(rows[1]["eta_main"].parse::<f64>().unwrap(), 0.1);
}

#[test]
fn json_numbers_match_csv_bits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("band.json");
    let common = ["delta-band", "--n", "10000", "--eta-main", "0.01"];
    let o = run(&[&common[..], &["--format", "json", "--output", path.to_str().unwrap()]].concat());
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(json["config"]["command"], "delta-band");
    assert_eq!(json["config"]["mechanisms"][0]["kind"], "krr");
    let row = &json["rows"][0];

    let csv = table(&stdout(&run(&common)));
    for key in ["eps_used", "delta_upper", "delta_lower", "alpha_over_n"] {
        assert_eq!(row[key].as_f64().unwrap().to_bits(), f(&csv[0], key).to_bits(), "{key}");
    }
    // the band collapses for k-RR
    let (u, l) = (f(&csv[0], "delta_upper"), f(&csv[0], "delta_lower"));
    assert!(l <= u && (u - l) / u <= 0.1, "[{l}, {u}]");

    // re-serializing the parsed document changes nothing
    let again: serde_json::Value = serde_json::from_str(&serde_json::to_string(&json).unwrap()).unwrap();
    assert_eq!(again, json);
}

#[test]
fn list_arguments_rejected_outside_shuffle_index() {
    let o = run(&["accountant", "--n", "100", "--k", "3,4"]);
    assert_eq!(o.status.code(), Some(2));
}
