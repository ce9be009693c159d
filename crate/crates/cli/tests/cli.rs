use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dcfit::{AffinePiece, DataSet, DcFunction};
use serde_json::Value;

fn dcfit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcfit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad stdout ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("bad stderr ({e}): {text}"))
}

/// `|x|` sampled on five points, with the exact two-piece fit.
fn abs_case(dir: &Path) -> (String, String) {
    let rows: Vec<(Vec<f64>, f64)> = [-1.0, -0.4, 0.1, 0.5, 1.0].iter().map(|&t: &f64| (vec![t], t.abs())).collect();
    let ds = DataSet::from_rows(1, &rows, "abs").unwrap();
    let data = dir.join("abs.csv");
    ds.write_csv(&data).unwrap();
    let f = DcFunction::new(
        vec![AffinePiece::new(vec![1.0], 0.0), AffinePiece::new(vec![-1.0], 0.0)],
        vec![AffinePiece::constant(1, 0.0)],
    )
    .unwrap();
    let fit = dir.join("fit.json");
    fs::write(&fit, f.to_json()).unwrap();
    (data.display().to_string(), fit.display().to_string())
}

#[test]
fn gen_data_writes_requested_function() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcfit(&["gen-data", "--function", "square_diff", "--count", "7", "--seed", "3", "-o", "."], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("square_diff.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,z"));
    assert_eq!(lines.count(), 7);
    let again = dcfit(&["gen-data", "--function", "square_diff", "--count", "7", "--seed", "3", "-o", "b"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(fs::read_to_string(dir.path().join("b/square_diff.csv")).unwrap(), text);
}

#[test]
fn verify_accepts_exact_fit_and_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let (data, fit) = abs_case(dir.path());
    let ok = dcfit(&["verify", "--data", &data, "--fit", &fit, "--eps", "0"], dir.path());
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(stdout_json(&ok)["feasible"], Value::Bool(true));

    // shift the third point by 0.3
    let text = fs::read_to_string(&data).unwrap().replace("0.1,0.1", "0.1,0.4");
    fs::write(&data, text).unwrap();
    let bad = dcfit(&["verify", "--data", &data, "--fit", &fit, "--eps", "0.1"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    let v = stdout_json(&bad);
    assert_eq!(v["feasible"], Value::Bool(false));
    let viol = v["violations"].as_array().unwrap();
    assert_eq!(viol.len(), 1);
    assert_eq!(viol[0]["point"], 3);
    assert!((viol[0]["error"].as_f64().unwrap() + 0.3).abs() < 1e-12);
}

#[test]
fn export_plot_lattice_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (data, fit) = abs_case(dir.path());
    let out = dcfit(&["export-plot", "--fit", &fit, "--data", &data, "--resolution", "5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("lattice.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(text.lines().next(), Some("x1,f"));
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!((r[1] - r[0].abs()).abs() < 1e-12);
    }
    assert_eq!((rows[0][0], rows[4][0]), (-1.0, 1.0));
}

#[test]
fn errors_are_json_with_exit_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dcfit(&["verify", "--data", "nope.csv", "--fit", "nope.json", "--eps", "0.1"], dir.path());
    assert_eq!(missing.status.code(), Some(4));
    assert_eq!(stderr_json(&missing)["exit_code"], 4);

    let flags = dcfit(&["fit", "--no-such-flag"], dir.path());
    assert_eq!(flags.status.code(), Some(4));
    assert_eq!(stderr_json(&flags)["error"], "usage");

    let (data, _) = abs_case(dir.path());
    let bench = dcfit(&["bench", "--data", &data, "--eps", "0.1"], dir.path());
    assert_eq!(bench.status.code(), Some(4));
    assert!(stderr_json(&bench)["message"].as_str().unwrap().contains("combination"));

    let eps = dcfit(&["fit", "--data", &data, "--eps", "-1"], dir.path());
    assert_eq!(eps.status.code(), Some(4));
}

#[test]
fn preprocess_writes_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = abs_case(dir.path());
    let out = dcfit(&["preprocess", "--data", &data, "--eps", "0.05", "--pp", "2", "--pm", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let b: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
    assert_eq!(b["M_plus"].as_array().unwrap().len(), 5);
    // C(5, 2) subsets, 4 sign patterns each
    assert_eq!(stdout_json(&out)["raw_count"], "40");
}

#[test]
fn fit_and_infeasible_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = abs_case(dir.path());
    let out = dcfit(&["fit", "--data", &data, "--eps", "0.01", "--pp", "2", "--pm", "1", "--preset", "C3", "-o", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "Optimal");
    assert!(v["max_error"].as_f64().unwrap() <= 0.01 + 1e-6);
    let fit = dir.path().join("run/fit.json");
    let f = DcFunction::from_json(&fs::read_to_string(&fit).unwrap()).unwrap();
    assert!((f.eval(&[0.1]) - 0.1).abs() <= 0.01 + 1e-6);
    let check = dcfit(&["verify", "--data", &data, "--fit", fit.to_str().unwrap(), "--eps", "0.01"], dir.path());
    assert_eq!(check.status.code(), Some(0));

    // one affine piece cannot follow |x| within 0.01
    let none = dcfit(&["fit", "--data", &data, "--eps", "0.01", "--pp", "1", "--pm", "1", "--preset", "C3", "-o", "run2"], dir.path());
    assert_eq!(none.status.code(), Some(2), "{}", String::from_utf8_lossy(&none.stderr));
    assert_eq!(stdout_json(&none)["status"], "Infeasible");
}

#[test]
fn wellbehave_keeps_a_well_behaved_fit() {
    let dir = tempfile::tempdir().unwrap();
    let (data, fit) = abs_case(dir.path());
    let out = dcfit(&["wellbehave", "--data", &data, "--fit", &fit, "--eps", "0.1"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["well_behaved"], Value::Bool(true));
    assert!(v["max_deviation"].as_f64().unwrap() < 1e-9);
    assert!(dir.path().join("fit-wellbehaved.json").is_file());
}
