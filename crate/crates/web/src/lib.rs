//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions are usable (and tested) natively; the `#[wasm_bindgen]`
//! wrappers only translate errors into JavaScript exceptions.

use proactive_sched::channel::{inverse_moment, ChannelModel};
use proactive_sched::mobility::{Location, LocationModel};
use proactive_sched::offline::{schedule_tp1, solve_window, OfflineInstance};
use proactive_sched::online::schedule_tp1_online;
use wasm_bindgen::prelude::*;

/// Offline water-filling allocation `[b_t, ..., b_1]` for window gains
/// `[h_t, ..., h_1]`, followed by the threshold (`inf` if unbounded).
pub fn offline_allocation(bits: f64, gains: &[f64], request_prob: f64) -> Result<Vec<f64>, String> {
    let inst = OfflineInstance::new(bits, gains.to_vec(), request_prob).map_err(|e| e.to_string())?;
    let sol = solve_window(&inst);
    let mut out = sol.bits;
    out.push(sol.threshold);
    Ok(out)
}

/// Bits sent one slot before the deadline as the current gain sweeps
/// `gains`: interleaved `[h, offline, online, ...]`. The offline rule knows
/// the deadline gain `deadline_gain`; the online rule only the channel law.
pub fn tp1_curves(bits: f64, request_prob: f64, deadline_gain: f64, rate: f64, floor: f64, gains: &[f64]) -> Result<Vec<f64>, String> {
    let model = ChannelModel::truncated_exponential(rate, floor).map_err(|e| e.to_string())?;
    let nu1 = inverse_moment(&model, 1).map_err(|e| e.to_string())?;
    if !(deadline_gain > 0.0) || !(0.0..=1.0).contains(&request_prob) || !(bits >= 0.0) {
        return Err("need bits >= 0, deadline gain > 0 and p in [0, 1]".into());
    }
    let mut out = Vec::with_capacity(3 * gains.len());
    for &h in gains {
        if !(h > 0.0) {
            return Err(format!("gain {h} must be positive"));
        }
        out.extend([
            h,
            schedule_tp1(bits, h, deadline_gain, request_prob),
            schedule_tp1_online(bits, h, request_prob, nu1),
        ]);
    }
    Ok(out)
}

/// `p_t` for `t = 1..=max_slot` from a 1-based `location`; `transition` is
/// row-major `k x k`.
pub fn request_probability_curve(transition: &[f64], request: &[f64], location: usize, max_slot: usize) -> Result<Vec<f64>, String> {
    let k = request.len();
    if k == 0 || transition.len() != k * k {
        return Err(format!("transition has {} entries, expected {}", transition.len(), k * k));
    }
    if location == 0 || location > k {
        return Err(format!("location must be in 1..={k}"));
    }
    let rows = transition.chunks(k).map(<[f64]>::to_vec).collect();
    let model = LocationModel::new(rows, request.to_vec()).map_err(|e| e.to_string())?;
    (1..=max_slot)
        .map(|t| {
            model
                .estimate_request_probability(Location(location - 1), t)
                .map_err(|e| e.to_string())
        })
        .collect()
}

#[wasm_bindgen(js_name = offlineAllocation)]
pub fn offline_allocation_js(bits: f64, gains: &[f64], request_prob: f64) -> Result<Vec<f64>, JsError> {
    offline_allocation(bits, gains, request_prob).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = tp1Curves)]
pub fn tp1_curves_js(bits: f64, request_prob: f64, deadline_gain: f64, rate: f64, floor: f64, gains: &[f64]) -> Result<Vec<f64>, JsError> {
    tp1_curves(bits, request_prob, deadline_gain, rate, floor, gains).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = requestProbabilityCurve)]
pub fn request_probability_curve_js(transition: &[f64], request: &[f64], location: usize, max_slot: usize) -> Result<Vec<f64>, JsError> {
    request_probability_curve(transition, request, location, max_slot).map_err(|e| JsError::new(&e))
}
