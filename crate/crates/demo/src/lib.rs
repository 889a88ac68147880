//! WebAssembly bindings behind `www/index.html`.
//!
//! Every export takes plain numbers and returns a JSON string; errors come
//! back as `{"error": "..."}` so the page never has to catch exceptions.

use picard_core::analytic::{IterateEvaluator, LinearExampleSpec};
use picard_core::bounds::{
    a10_lower, a21_sandwich, compare_modes_from, l01_error, ode_error_series, origin_gap_series, ModeComparison,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Curves {
    k: Vec<u32>,
    gap: Vec<f64>,
    a21_lower: Vec<Option<f64>>,
    a21_upper: Vec<Option<f64>>,
    a10_lower: Vec<Option<f64>>,
    ode: Vec<f64>,
}

#[derive(Serialize)]
struct Profile {
    x: Vec<f64>,
    /// `iterates[n-1][i] = v^n(t, x[i])`.
    iterates: Vec<Vec<f64>>,
    solution: Vec<f64>,
}

#[derive(Serialize)]
struct Fit {
    series: &'static str,
    log_c_sqrt_factorial: f64,
    residual_sqrt_factorial: f64,
    log_c_factorial: f64,
    residual_factorial: f64,
    winner: Option<&'static str>,
    ratio: f64,
}

fn to_json<T: Serialize>(r: picard_core::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

// JSON has no infinities; log-scale plots skip nulls.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn curves(b_norm_sq: f64, eps: f64, k_max: u32) -> picard_core::Result<serde_json::Value> {
    let spec = LinearExampleSpec::isotropic(1, b_norm_sq)?;
    let ks: Vec<u32> = (1..=k_max.max(1)).collect();
    let gap = origin_gap_series(&spec, ks.iter().copied())?.into_iter().map(|(_, g)| g).collect();
    let mut out = Curves {
        k: ks.clone(),
        gap,
        a21_lower: Vec::new(),
        a21_upper: Vec::new(),
        a10_lower: Vec::new(),
        ode: Vec::new(),
    };
    for &k in &ks {
        let s = a21_sandwich(&spec, k, eps).ok();
        out.a21_lower.push(s.and_then(|s| finite(s.lower)));
        out.a21_upper.push(s.and_then(|s| finite(s.upper)));
        out.a10_lower.push(a10_lower(&spec, k).ok().and_then(finite));
        out.ode.push(l01_error(1.0, k)?.exact);
    }
    Ok(serde_json::to_value(out).expect("plain data"))
}

pub fn profile(b_norm_sq: f64, t: f64, n_max: u32, points: u32) -> picard_core::Result<serde_json::Value> {
    let spec = LinearExampleSpec::isotropic(1, b_norm_sq)?;
    let points = points.clamp(2, 2000);
    let x: Vec<f64> = (0..points).map(|i| -4.0 + 8.0 * f64::from(i) / f64::from(points - 1)).collect();
    let sample = |ev: &IterateEvaluator| x.iter().map(|&xi| ev.value(t, &[xi])).collect::<picard_core::Result<Vec<_>>>();
    let iterates = (1..=n_max.max(1))
        .map(|n| sample(&IterateEvaluator::finite(&spec, n)))
        .collect::<picard_core::Result<_>>()?;
    let solution = sample(&IterateEvaluator::solution(&spec))?;
    Ok(serde_json::to_value(Profile { x, iterates, solution }).expect("plain data"))
}

fn fit(series: &'static str, c: ModeComparison) -> Fit {
    Fit {
        series,
        log_c_sqrt_factorial: c.sqrt_factorial.log_c,
        residual_sqrt_factorial: c.sqrt_factorial.residual,
        log_c_factorial: c.factorial.log_c,
        residual_factorial: c.factorial.residual,
        winner: c.winner.map(|m| m.name()),
        ratio: c.ratio,
    }
}

pub fn fits(b_norm_sq: f64, k_min: u32, k_max: u32) -> picard_core::Result<serde_json::Value> {
    let spec = LinearExampleSpec::isotropic(1, b_norm_sq)?;
    let ks = 1..=k_max.max(1);
    let gap = compare_modes_from(&origin_gap_series(&spec, ks.clone())?, k_min)?;
    let ode = compare_modes_from(&ode_error_series(1.0, ks)?, k_min)?;
    Ok(serde_json::to_value([fit("z-dependent", gap), fit("ode", ode)]).expect("plain data"))
}

/// Gap `|v^∞(0,0) - v^k(0,0)|`, its two envelopes and the ODE error for `k = 1..=k_max`.
#[wasm_bindgen]
pub fn convergence_curves(b_norm_sq: f64, eps: f64, k_max: u32) -> String {
    to_json(curves(b_norm_sq, eps, k_max))
}

/// `v^n(t, ·)` for `n = 1..=n_max` and the limit on `[-4, 4]`, one dimension.
#[wasm_bindgen]
pub fn iterate_profiles(b_norm_sq: f64, t: f64, n_max: u32, points: u32) -> String {
    to_json(profile(b_norm_sq, t, n_max, points))
}

/// Rate fits in both modes for the gap and ODE series over `k_min..=k_max`.
#[wasm_bindgen]
pub fn phase_fits(b_norm_sq: f64, k_min: u32, k_max: u32) -> String {
    to_json(fits(b_norm_sq, k_min, k_max))
}
