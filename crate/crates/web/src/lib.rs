//! Browser bindings for the `relayfb` demo page.
//!
//! Each export has a plain Rust twin returning `Result<_, String>` so the
//! numerics can be tested natively; the `#[wasm_bindgen]` wrappers only turn
//! the error into a JavaScript exception.

use relayfb::{
    capacity, expected_phases, expected_phases_one_relay, run, snr_from_db, source_outage_prob,
    BscParam, CapacityProtocol, ChannelParams, DecodeProfile, OutageTarget, Rate, SimConfig,
    Strategy,
};
use wasm_bindgen::prelude::*;

/// Largest block count the page may request in one call.
pub const MAX_BLOCKS: u64 = 5_000_000;

fn grid(start: f64, stop: f64, points: usize) -> Result<Vec<f64>, String> {
    if points < 2 {
        return Err("need at least two grid points".into());
    }
    let step = (stop - start) / (points - 1) as f64;
    Ok((0..points).map(|i| start + step * i as f64).collect())
}

/// `E(N)` against `p` on `points` evenly spaced values in `[0, 1]`, one curve
/// per entry of `p_bars`, concatenated.
///
/// Every relay level decodes with the same probability `1 - P̄_SD`.
pub fn phase_curves_native(
    p_bars: &[f64],
    relays: usize,
    points: usize,
) -> Result<Vec<f64>, String> {
    let ps = grid(0.0, 1.0, points)?;
    let mut out = Vec::with_capacity(p_bars.len() * points);
    for &p_bar in p_bars {
        let profile =
            DecodeProfile::new(vec![1.0 - p_bar; relays.max(1)]).map_err(|e| e.to_string())?;
        for &p in &ps {
            let p = BscParam::new(p).map_err(|e| e.to_string())?;
            out.push(expected_phases(&profile, p, relays).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

/// ε-outage capacity in bit/s/Hz for SNR (dB) on an even grid, unit channel
/// variances. Points where the solver fails come back as `NaN`.
pub fn capacity_curve_native(
    protocol: &str,
    epsilon: f64,
    p: f64,
    snr_db_start: f64,
    snr_db_stop: f64,
    points: usize,
) -> Result<Vec<f64>, String> {
    let protocol: CapacityProtocol = protocol.parse()?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err("epsilon must lie strictly between 0 and 1".into());
    }
    let target = OutageTarget::new(epsilon).map_err(|e| e.to_string())?;
    let p = BscParam::new(p).map_err(|e| e.to_string())?;
    grid(snr_db_start, snr_db_stop, points)?
        .into_iter()
        .map(|db| {
            let params = ChannelParams::one_relay(1.0, 1.0, 1.0, snr_from_db(db))
                .map_err(|e| e.to_string())?;
            Ok(capacity(&params, target, p, protocol).map_or(f64::NAN, |r| r.rate))
        })
        .collect()
}

/// Simulates `blocks` blocks over unit-variance links.
///
/// Returns `[mean_phases, phases_stderr, outage_rate, outage_stderr,
/// closed_form]`, where `closed_form` is `NaN` unless there is one relay.
pub fn simulate_native(
    relays: usize,
    strategy: &str,
    snr_db: f64,
    rate: f64,
    p: f64,
    blocks: u64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if blocks > MAX_BLOCKS {
        return Err(format!("at most {MAX_BLOCKS} blocks per run"));
    }
    let strategy: Strategy = strategy.parse()?;
    let channel =
        ChannelParams::uniform(relays, 1.0, snr_from_db(snr_db)).map_err(|e| e.to_string())?;
    let rate = Rate::new(rate).map_err(|e| e.to_string())?;
    let p = BscParam::new(p).map_err(|e| e.to_string())?;
    let config = SimConfig::new(channel.clone(), rate, p, strategy)
        .with_blocks(blocks)
        .with_seed(seed);
    let report = run(&config).map_err(|e| e.to_string())?;
    let closed_form = if relays == 1 {
        expected_phases_one_relay(source_outage_prob(&channel, rate), p)
            .map_err(|e| e.to_string())?
    } else {
        f64::NAN
    };
    Ok(vec![
        report.mean_phases,
        report.phases_stderr,
        report.outage_rate,
        report.outage_stderr,
        closed_form,
    ])
}

#[wasm_bindgen]
pub fn phase_curves(p_bars: &[f64], relays: usize, points: usize) -> Result<Vec<f64>, JsError> {
    phase_curves_native(p_bars, relays, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn capacity_curve(
    protocol: &str,
    epsilon: f64,
    p: f64,
    snr_db_start: f64,
    snr_db_stop: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    capacity_curve_native(protocol, epsilon, p, snr_db_start, snr_db_stop, points)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(
    relays: usize,
    strategy: &str,
    snr_db: f64,
    rate: f64,
    p: f64,
    blocks: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    simulate_native(
        relays,
        strategy,
        snr_db,
        rate,
        p,
        blocks.into(),
        seed.into(),
    )
    .map_err(|e| JsError::new(&e))
}
