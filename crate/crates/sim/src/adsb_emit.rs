//! Transponder emissions of ADS-B equipped targets.

use skywatch_core::adsb::{encode, RawFrame, VehicleCategory};
use skywatch_core::geometry::{GeoPosition, FEET_TO_METERS};
use skywatch_core::Millis;

use crate::scenario::{enu_to_geo, AdsbModel, ResolvedTarget};
use crate::world::World;

/// Frames the target transmits with timestamps in `(after, until]`: a position
/// message each period, alternating even/odd, and identification with every
/// `ident_every`-th one.
pub fn emit_adsb(
    target: &ResolvedTarget,
    origin: &GeoPosition,
    model: &AdsbModel,
    duration: Millis,
    after: Option<Millis>,
    until: Millis,
) -> Vec<RawFrame> {
    let (Some(icao), Some(tx)) = (target.icao, target.spec.adsb.as_ref()) else {
        return Vec::new();
    };
    let period = model.position_period_ms;
    let phase = tx.phase_ms % period;
    let first_k = match after {
        None => 0,
        Some(a) if a < phase => 0,
        Some(a) => (a - phase) / period + 1,
    };
    let mut out = Vec::new();
    let mut k = first_k;
    loop {
        let t = phase + k * period;
        if t > until || t > duration {
            break;
        }
        if let Some(state) = target.state_at(t, duration) {
            let geo = enu_to_geo(origin, state.position);
            let alt_ft = geo.alt / FEET_TO_METERS;
            let bytes = encode::airborne_position(icao, geo.lat, geo.lon, alt_ft, k % 2 == 1);
            out.push(RawFrame::new(bytes, t));
            if k % model.ident_every == 0 {
                let cat = if tx.send_category { tx.category } else { VehicleCategory::None };
                out.push(RawFrame::new(encode::identification(icao, &tx.callsign, cat), t));
            }
        }
        k += 1;
    }
    out
}

/// Every frame transmitted during the scenario, time-ordered (stable across
/// targets in scenario order).
pub fn scenario_frames(world: &World) -> Vec<RawFrame> {
    let mut frames: Vec<RawFrame> = world
        .targets
        .iter()
        .flat_map(|t| emit_adsb(t, &world.origin, &world.scenario.sensors.adsb, world.duration, None, world.duration))
        .collect();
    frames.sort_by_key(|f| f.t);
    frames
}

/// `t_us,HEX` lines, the format `parse_frame_line` reads.
pub fn frames_to_text(frames: &[RawFrame]) -> String {
    frames.iter().map(|f| format!("{},{}\n", f.t * 1000, f.to_hex())).collect()
}
