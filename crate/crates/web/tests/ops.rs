use dcfit_web::{bounds_json, verify_json, well_behave_json};
use serde_json::Value;

const DATA: &str = "x1,z\n0,2\n1,1\n2,0\n3,1\n4,2\n";
const CAPPED: &str = r#"{"plus":[{"a":[1.0],"b":-2.0},{"a":[-1.0],"b":2.0},{"a":[0.0],"b":0.05}],
 "minus":[{"a":[0.0],"b":0.0}]}"#;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn bounds_reports_count_and_big_m() {
    let v = parse(bounds_json(DATA, 0.1, 3, 1).unwrap());
    assert_eq!(v["points"], 5);
    // C(5, 2) pairs, 4 sign patterns each
    assert_eq!(v["raw_count"], "40");
    assert!(v["max_big_m"].as_f64().unwrap() > 0.0);
    assert!(bounds_json(DATA, 0.1, 0, 1).is_err());
}

#[test]
fn demo_fit_is_feasible_but_not_well_behaved() {
    let v = parse(verify_json(DATA, CAPPED, 0.1).unwrap());
    assert_eq!(v["report"]["feasible"], Value::Bool(true));
    assert_eq!(v["well_behaved"], Value::Bool(false));
    let tight = parse(verify_json(DATA, CAPPED, 0.01).unwrap());
    assert_eq!(tight["report"]["feasible"], Value::Bool(false));
}

#[test]
fn well_behave_repairs_the_demo_fit() {
    let v = parse(well_behave_json(DATA, CAPPED, 0.1).unwrap());
    assert_eq!(v["well_behaved"], Value::Bool(true));
    let fit = v["function"].to_string();
    let again = parse(verify_json(DATA, &fit, 0.1).unwrap());
    assert_eq!(again["report"]["feasible"], Value::Bool(true));
    assert_eq!(again["well_behaved"], Value::Bool(true));
}

#[test]
fn mismatched_dimensions_are_rejected() {
    let fit = r#"{"plus":[{"a":[1.0,0.0],"b":0.0}],"minus":[{"a":[0.0,0.0],"b":0.0}]}"#;
    assert!(verify_json(DATA, fit, 0.1).is_err());
    assert!(well_behave_json("x1,z\n0,1\nbad,2\n", CAPPED, 0.1).is_err());
}
