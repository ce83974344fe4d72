//! Browser bindings for `www/index.html`. Every export returns a JSON string.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use loopbound::bounds::{nn_lower_bound, GammaMethod, PairCurve};
use loopbound::loop_mc::{sample_poisson, trace_loops, LinkKind, TorusLattice};
use loopbound::quadrature::QuadratureSpec;
use loopbound::rp_integrals::{Beta, ModelParams};
use loopbound::Result;

/// Nonpositive or non-finite `beta` means β = ∞.
fn beta_of(beta: f64) -> Beta {
    if beta.is_finite() && beta > 0.0 {
        Beta::Finite(beta)
    } else {
        Beta::Infinite
    }
}

pub fn nn_bound_value(theta: u32, d: usize, u: f64, beta: f64) -> Result<Value> {
    let params = ModelParams::new(d, theta, u, beta_of(beta))?;
    let b = nn_lower_bound(&params, &QuadratureSpec::for_dimension(d))?;
    Ok(json!({ "value": b.value, "argmax_eta": b.argmax_eta, "components": b.components }))
}

/// Both `b(γ)` curves on `points` equally spaced γ in `[0.5, 6]`, plus the thresholds.
pub fn gamma_curves_value(d: usize, points: usize) -> Result<Value> {
    if !(3..=5).contains(&d) {
        return Err(loopbound::Error::Parameter(format!("the demo supports d = 3, 4, 5, got {d}")));
    }
    let curve = PairCurve::new(d, &QuadratureSpec::for_dimension(d))?;
    let n = points.clamp(2, 200);
    let gammas: Vec<f64> = (0..n).map(|i| 0.5 + 5.5 * i as f64 / (n - 1) as f64).collect();
    let ueltschi = gammas.iter().map(|&g| curve.b_ueltschi(g)).collect::<Result<Vec<_>>>()?;
    let new = gammas.iter().map(|&g| curve.b_new(g)).collect::<Result<Vec<_>>>()?;
    Ok(json!({
        "gamma": gammas,
        "ueltschi": ueltschi,
        "new": new,
        "threshold_ueltschi": curve.threshold(GammaMethod::Ueltschi)?,
        "threshold_new": curve.threshold(GammaMethod::New)?,
    }))
}

/// A Poisson link configuration on the ring of `side` sites and its loops.
pub fn loop_picture_value(side: usize, beta: f64, u: f64, seed: u32) -> Result<Value> {
    let lattice = TorusLattice::new(1, side)?;
    let config = sample_poisson(&lattice, beta, u, seed as u64)?;
    let loops = trace_loops(&config);
    let links: Vec<Value> = config
        .links()
        .map(|(_, l)| json!({ "edge": l.edge, "time": l.time, "cross": l.kind == LinkKind::Cross }))
        .collect();
    let segments: Vec<Value> = loops
        .segments()
        .map(|s| json!({ "vertex": s.vertex, "start": s.start, "end": s.end, "loop": s.loop_id }))
        .collect();
    Ok(json!({ "side": side, "beta": beta, "loops": loops.loop_count(), "links": links, "segments": segments }))
}

fn export(v: Result<Value>) -> std::result::Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn nn_bound(theta: u32, d: usize, u: f64, beta: f64) -> std::result::Result<String, JsError> {
    export(nn_bound_value(theta, d, u, beta))
}

#[wasm_bindgen]
pub fn gamma_curves(d: usize, points: usize) -> std::result::Result<String, JsError> {
    export(gamma_curves_value(d, points))
}

#[wasm_bindgen]
pub fn loop_picture(side: usize, beta: f64, u: f64, seed: u32) -> std::result::Result<String, JsError> {
    export(loop_picture_value(side, beta, u, seed))
}
