//! WebAssembly bindings for the demo page in `www/`.
//!
//! Each export returns JSON text (or a flat `Float64Array`) so the page needs
//! no glue beyond `JSON.parse`. The plain functions are usable natively.

use jpa_core::detection::DetectionConfig;
use jpa_core::device::{gain_profile, DeviceParams, PumpConfig};
use jpa_core::gaussian::{GaussianState, WignerEvaluator};
use jpa_core::tomography::{reconstruct, run_experiment, BinningSettings, WignerGrid};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Largest record count accepted from the page.
pub const MAX_RECORDS: usize = 2_000_000;

#[derive(Debug, Serialize)]
pub struct GainCurve {
    pub g0: f64,
    pub bandwidth_hz: f64,
    pub detuning_hz: Vec<f64>,
    pub gain: Vec<f64>,
    pub psd: Vec<f64>,
}

/// Gain and output PSD of the reference device at `power_dbm`.
pub fn gain_curve_data(power_dbm: f64, n_noise: f64, points: usize) -> Result<GainCurve, String> {
    if points < 2 || points > 10_000 {
        return Err("points must lie in [2, 10000]".into());
    }
    let pump = PumpConfig::reference().with_power(power_dbm);
    let prof = gain_profile(&pump, &DeviceParams::reference()).map_err(|e| e.to_string())?;
    let half = 20.0 * TWO_PI * 1e6;
    let detuning: Vec<f64> = (0..points)
        .map(|k| -half + 2.0 * half * k as f64 / (points - 1) as f64)
        .collect();
    Ok(GainCurve {
        g0: prof.g0,
        bandwidth_hz: prof.bandwidth / TWO_PI,
        gain: detuning.iter().map(|&d| prof.gain(d)).collect(),
        psd: detuning.iter().map(|&d| prof.psd(d, n_noise)).collect(),
        detuning_hz: detuning.iter().map(|d| d / TWO_PI).collect(),
    })
}

fn pair_indices(pair: &str) -> Result<(usize, usize), String> {
    let index = |c: &str| match c {
        "x1" => Ok(0),
        "p1" => Ok(1),
        "x2" => Ok(2),
        "p2" => Ok(3),
        _ => Err(format!("unknown quadrature {c:?}")),
    };
    if pair.len() != 4 {
        return Err(format!("pair must look like \"x1x2\", got {pair:?}"));
    }
    let (a, b) = (index(&pair[..2])?, index(&pair[2..])?);
    if a == b {
        return Err("pair needs two different quadratures".into());
    }
    Ok((a, b))
}

/// Row-major `points × points` density of the `pair` marginal of
/// `tms(r, n_add)`; row index runs over the first quadrature.
pub fn wigner_grid(
    r: f64,
    n_add: f64,
    pair: &str,
    half_range: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    if points < 2 || points > 1000 || !(half_range > 0.0) {
        return Err("need 2 <= points <= 1000 and half_range > 0".into());
    }
    let (a, b) = pair_indices(pair)?;
    let state = GaussianState::two_mode_squeezed(r, n_add).map_err(|e| e.to_string())?;
    let m = state.marginal(a, b).map_err(|e| e.to_string())?;
    let w = WignerEvaluator::new(&m).map_err(|e| e.to_string())?;
    let step = 2.0 * half_range / (points - 1) as f64;
    let mut out = Vec::with_capacity(points * points);
    for i in 0..points {
        for j in 0..points {
            let p = [-half_range + step * i as f64, -half_range + step * j as f64];
            out.push(w.density(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct TomographyDemo {
    pub truth_v: Vec<f64>,
    pub result: jpa_core::tomography::TomographyResult,
}

/// Simulated experiment on `tms(r, n_add)` with the reference detection
/// chain at `n_noise` photons.
pub fn tomography_data(
    r: f64,
    n_add: f64,
    n_noise: f64,
    records: usize,
    seed: u64,
) -> Result<TomographyDemo, String> {
    if !(1_000..=MAX_RECORDS).contains(&records) {
        return Err(format!("records must lie in [1000, {MAX_RECORDS}]"));
    }
    let truth = GaussianState::two_mode_squeezed(r, n_add).map_err(|e| e.to_string())?;
    let det = DetectionConfig {
        n_noise,
        ..DetectionConfig::reference()
    };
    let exp = run_experiment(&truth, &det, records, seed, &BinningSettings::default())
        .map_err(|e| e.to_string())?;
    let e = &exp.estimate;
    let grid = WignerGrid {
        half_range: 1.0,
        points: 2,
    };
    let rec =
        reconstruct(&e.state, &grid, e.scale_factors, e.n_records).map_err(|e| e.to_string())?;
    Ok(TomographyDemo {
        truth_v: truth.cov().transpose().iter().copied().collect(),
        result: rec.result,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn gain_curve(power_dbm: f64, n_noise: f64, points: usize) -> Result<String, JsError> {
    to_json(&gain_curve_data(power_dbm, n_noise, points).map_err(|e| JsError::new(&e))?)
}

#[wasm_bindgen]
pub fn wigner_marginal(
    r: f64,
    n_add: f64,
    pair: &str,
    half_range: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    wigner_grid(r, n_add, pair, half_range, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate_tomography(
    r: f64,
    n_add: f64,
    n_noise: f64,
    records: usize,
    seed: u64,
) -> Result<String, JsError> {
    to_json(&tomography_data(r, n_add, n_noise, records, seed).map_err(|e| JsError::new(&e))?)
}
