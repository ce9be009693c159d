//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every entry point takes CSV text (`x1,...,xd,z`) and returns a JSON string.
//! Errors come back as a JS string holding `{"error": ...}`.

use dcfit::cpwl::{check_well_behaved, verify_eps_approx, ACTIVITY_TOL};
use dcfit::dataset::parse_csv;
use dcfit::preprocess::compute_extrema;
use dcfit::{wellbehave, BoundsBundle, DataSet, DcFunction, Error, Result};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn function(text: &str, ds: &DataSet) -> Result<DcFunction> {
    let f = DcFunction::from_json(text)?;
    if f.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: f.dim(),
        });
    }
    Ok(f)
}

/// Pointwise extrema, big-M values and coefficient bounds.
pub fn bounds_json(csv: &str, eps: f64, pp: usize, pm: usize) -> Result<String> {
    let ds = parse_csv(csv, "input")?;
    if pp == 0 || pm == 0 {
        return Err(Error::Validation("piece counts must be at least 1".into()));
    }
    let b = BoundsBundle::new(&compute_extrema(&ds, eps)?, pp, pm);
    Ok(json!({
        "points": ds.len(),
        "dim": ds.dim(),
        "raw_count": b.raw_count.to_string(),
        "max_big_m": b.max_big_m(),
        "bounds": b,
    })
    .to_string())
}

/// Fitting errors of `fit` on the data, and its interpolation counts per pair.
pub fn verify_json(csv: &str, fit: &str, eps: f64) -> Result<String> {
    let ds = parse_csv(csv, "input")?;
    let f = function(fit, &ds)?;
    let rep = verify_eps_approx(&f, &ds, eps);
    let wb = check_well_behaved(&f, &ds, ACTIVITY_TOL);
    Ok(json!({ "report": rep, "well_behaved": wb.pass, "pairs": wb.pairs }).to_string())
}

/// Tilts pieces until every active pair interpolates `d+1` points.
pub fn well_behave_json(csv: &str, fit: &str, eps: f64) -> Result<String> {
    let ds = parse_csv(csv, "input")?;
    let f = function(fit, &ds)?;
    let out = wellbehave::transform(&f, &ds, eps, ACTIVITY_TOL)?;
    Ok(json!({
        "function": out.function,
        "well_behaved": out.report.pass,
        "steps": out.steps,
        "max_deviation": out.max_deviation,
    })
    .to_string())
}

fn js(r: Result<String>) -> std::result::Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&json!({ "error": e.to_string() }).to_string()))
}

#[wasm_bindgen]
pub fn bounds(csv: &str, eps: f64, pp: usize, pm: usize) -> std::result::Result<String, JsValue> {
    js(bounds_json(csv, eps, pp, pm))
}

#[wasm_bindgen]
pub fn verify(csv: &str, fit: &str, eps: f64) -> std::result::Result<String, JsValue> {
    js(verify_json(csv, fit, eps))
}

#[wasm_bindgen]
pub fn well_behave(csv: &str, fit: &str, eps: f64) -> std::result::Result<String, JsValue> {
    js(well_behave_json(csv, fit, eps))
}
