//! Mode S extended squitter (DF17) decoding and the ADS-B worker's track queues.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{relative_geometry, GeoPosition, SystemPose, FEET_TO_METERS};
use crate::types::{Millis, TargetClass};

pub type Icao = u32;

const CRC24_GENERATOR: u32 = 0x1FF_F409;
const CPR_SCALE: f64 = 131_072.0; // 2^17

/// A 112-bit extended squitter with its receive time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawFrame {
    pub bytes: [u8; 14],
    pub t: Millis,
}

impl RawFrame {
    pub fn new(bytes: [u8; 14], t: Millis) -> Self {
        RawFrame { bytes, t }
    }

    /// Parses 28 hex digits, tolerating the `*...;` framing of raw receiver output.
    pub fn from_hex(hex: &str, t: Millis) -> Result<Self> {
        let s = hex.trim().trim_start_matches('*').trim_end_matches(';');
        if s.len() != 28 || !s.is_ascii() {
            return Err(Error::Malformed(format!("expected 28 hex digits, got '{s}'")));
        }
        let mut bytes = [0u8; 14];
        for (i, b) in bytes.iter_mut().enumerate() {
            *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Malformed(format!("bad hex '{s}'")))?;
        }
        Ok(RawFrame { bytes, t })
    }

    pub fn to_hex(&self) -> String {
        self.bytes.iter().map(|b| format!("{b:02X}")).collect()
    }

    pub fn downlink_format(&self) -> u8 {
        self.bytes[0] >> 3
    }

    pub fn icao(&self) -> Icao {
        u32::from_be_bytes([0, self.bytes[1], self.bytes[2], self.bytes[3]])
    }

    /// The 56-bit message field, right aligned.
    pub fn me(&self) -> u64 {
        self.bytes[4..11]
            .iter()
            .fold(0u64, |acc, b| (acc << 8) | *b as u64)
    }

    pub fn type_code(&self) -> u8 {
        self.bytes[4] >> 3
    }

    pub fn parity(&self) -> u32 {
        u32::from_be_bytes([0, self.bytes[11], self.bytes[12], self.bytes[13]])
    }
}

/// Polynomial remainder of `data` under the Mode S generator.
pub fn crc24(data: &[u8]) -> u32 {
    let mut crc = 0u32;
    for &b in data {
        crc ^= (b as u32) << 16;
        for _ in 0..8 {
            crc <<= 1;
            if crc & 0x100_0000 != 0 {
                crc ^= CRC24_GENERATOR;
            }
        }
    }
    crc & 0xFF_FFFF
}

/// Parity field equals the CRC of the first 88 bits.
pub fn parity_matches(frame: &RawFrame) -> bool {
    crc24(&frame.bytes[..11]) == frame.parity()
}

/// Frame acceptance: downlink format 17 and a matching parity field.
///
/// An all-zero frame has a zero remainder, but is rejected by the format test.
pub fn crc24_check(frame: &RawFrame) -> bool {
    frame.downlink_format() == 17 && parity_matches(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VehicleCategory {
    None,
    Light,
    Medium,
    Heavy,
    HighVortex,
    VeryHeavy,
    HighPerformanceHighSpeed,
    Rotorcraft,
    Glider,
    LighterThanAir,
    Parachutist,
    Ultralight,
    UAV,
    Space,
    SurfaceVehicle,
    Obstacle,
    Reserved,
}

impl VehicleCategory {
    /// Emitter category from the identification type code (1..=4) and its
    /// 3-bit category field.
    pub fn from_codes(type_code: u8, category: u8) -> VehicleCategory {
        use VehicleCategory::*;
        if category == 0 {
            return None;
        }
        match (type_code, category) {
            (4, 1) => Light,
            (4, 2) => Medium,
            (4, 3) => Heavy,
            (4, 4) => HighVortex,
            (4, 5) => VeryHeavy,
            (4, 6) => HighPerformanceHighSpeed,
            (4, 7) => Rotorcraft,
            (3, 1) => Glider,
            (3, 2) => LighterThanAir,
            (3, 3) => Parachutist,
            (3, 4) => Ultralight,
            (3, 6) => UAV,
            (3, 7) => Space,
            (2, 1) | (2, 2) => SurfaceVehicle,
            (2, 3..=5) => Obstacle,
            _ => Reserved,
        }
    }

    /// Inverse of [`VehicleCategory::from_codes`] for encoding.
    pub fn codes(self) -> (u8, u8) {
        use VehicleCategory::*;
        match self {
            None => (4, 0),
            Light => (4, 1),
            Medium => (4, 2),
            Heavy => (4, 3),
            HighVortex => (4, 4),
            VeryHeavy => (4, 5),
            HighPerformanceHighSpeed => (4, 6),
            Rotorcraft => (4, 7),
            Glider => (3, 1),
            LighterThanAir => (3, 2),
            Parachutist => (3, 3),
            Ultralight => (3, 4),
            UAV => (3, 6),
            Space => (3, 7),
            SurfaceVehicle => (2, 1),
            Obstacle => (2, 3),
            Reserved => (1, 1),
        }
    }
}

/// Class label and confidence the ADS-B worker reports for a category.
///
/// Without a category the aircraft is assumed to be an airplane at 0.75 so
/// the other sensors can still outvote it.
pub fn category_to_class(cat: VehicleCategory) -> (TargetClass, f64) {
    match cat {
        VehicleCategory::None => (TargetClass::Airplane, 0.75),
        VehicleCategory::Rotorcraft => (TargetClass::Helicopter, 1.0),
        VehicleCategory::UAV => (TargetClass::Drone, 1.0),
        _ => (TargetClass::Airplane, 1.0),
    }
}

const CALLSIGN_CHARSET: &[u8; 64] =
    b"#ABCDEFGHIJKLMNOPQRSTUVWXYZ##### ###############0123456789######";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Eight characters, `#` where the code is not in the alphabet.
    pub callsign: String,
    pub category: VehicleCategory,
    pub invalid_chars: bool,
}

fn bits(me: u64, start: u32, len: u32) -> u64 {
    (me >> (56 - start - len)) & ((1u64 << len) - 1)
}

pub fn decode_identification(me: u64) -> Result<Identification> {
    let tc = bits(me, 0, 5) as u8;
    if !(1..=4).contains(&tc) {
        return Err(Error::Malformed(format!("type code {tc} is not an identification")));
    }
    let cat = bits(me, 5, 3) as u8;
    let mut invalid = false;
    let callsign: String = (0..8)
        .map(|i| {
            let code = bits(me, 8 + 6 * i, 6) as usize;
            let c = CALLSIGN_CHARSET[code] as char;
            if c == '#' {
                invalid = true;
            }
            c
        })
        .collect();
    Ok(Identification {
        callsign,
        category: VehicleCategory::from_codes(tc, cat),
        invalid_chars: invalid,
    })
}

/// One half of an even/odd compact position pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CprFrame {
    pub odd: bool,
    pub lat: u32,
    pub lon: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirbornePosition {
    pub altitude_ft: Option<f64>,
    pub cpr: CprFrame,
}

fn decode_altitude(alt12: u32, gnss: bool) -> Option<f64> {
    if alt12 == 0 {
        return None;
    }
    if gnss {
        return Some(alt12 as f64 / FEET_TO_METERS);
    }
    if alt12 & 0x10 == 0 {
        // 100-ft Gillham coding is not used by the receivers modelled here.
        return None;
    }
    let n = ((alt12 & 0xFE0) >> 1) | (alt12 & 0xF);
    Some(n as f64 * 25.0 - 1000.0)
}

pub fn decode_airborne_position(me: u64) -> Result<AirbornePosition> {
    let tc = bits(me, 0, 5) as u8;
    let gnss = match tc {
        9..=18 => false,
        20..=22 => true,
        _ => return Err(Error::Malformed(format!("type code {tc} is not an airborne position"))),
    };
    Ok(AirbornePosition {
        altitude_ft: decode_altitude(bits(me, 8, 12) as u32, gnss),
        cpr: CprFrame {
            odd: bits(me, 21, 1) == 1,
            lat: bits(me, 22, 17) as u32,
            lon: bits(me, 39, 17) as u32,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Velocity {
    GroundSpeed {
        speed_kt: f64,
        track_deg: f64,
        vertical_rate_fpm: Option<f64>,
    },
    /// Airspeed subtypes are kept undecoded.
    Airspeed { subtype: u8, raw_me: u64 },
}

pub fn decode_velocity(me: u64) -> Result<Velocity> {
    let tc = bits(me, 0, 5);
    if tc != 19 {
        return Err(Error::Malformed(format!("type code {tc} is not a velocity")));
    }
    let st = bits(me, 5, 3) as u8;
    match st {
        1 | 2 => {
            let v_ew = bits(me, 14, 10) as f64;
            let v_ns = bits(me, 25, 10) as f64;
            if v_ew == 0.0 || v_ns == 0.0 {
                return Err(Error::Malformed("velocity not available".into()));
            }
            let k = if st == 2 { 4.0 } else { 1.0 };
            let east = (v_ew - 1.0) * k * if bits(me, 13, 1) == 1 { -1.0 } else { 1.0 };
            let north = (v_ns - 1.0) * k * if bits(me, 24, 1) == 1 { -1.0 } else { 1.0 };
            let vr = bits(me, 37, 9) as f64;
            let vertical_rate_fpm = (vr != 0.0)
                .then(|| (vr - 1.0) * 64.0 * if bits(me, 36, 1) == 1 { -1.0 } else { 1.0 });
            let track = east.atan2(north).to_degrees();
            Ok(Velocity::GroundSpeed {
                speed_kt: east.hypot(north),
                track_deg: if track < 0.0 { track + 360.0 } else { track },
                vertical_rate_fpm,
            })
        }
        3 | 4 => Ok(Velocity::Airspeed { subtype: st, raw_me: me }),
        _ => Err(Error::Malformed(format!("velocity subtype {st} unsupported"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AdsbMessage {
    Identification(Identification),
    AirbornePosition(AirbornePosition),
    Velocity(Velocity),
    /// Surface position, status and other type codes the worker ignores.
    Other { type_code: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedFrame {
    pub icao: Icao,
    pub t: Millis,
    pub message: AdsbMessage,
}

pub fn decode_frame(frame: &RawFrame) -> Result<DecodedFrame> {
    if frame.downlink_format() != 17 {
        return Err(Error::Malformed(format!(
            "downlink format {} not processed",
            frame.downlink_format()
        )));
    }
    if !parity_matches(frame) {
        return Err(Error::Checksum);
    }
    let me = frame.me();
    let message = match frame.type_code() {
        1..=4 => AdsbMessage::Identification(decode_identification(me)?),
        9..=18 | 20..=22 => AdsbMessage::AirbornePosition(decode_airborne_position(me)?),
        19 => match decode_velocity(me) {
            Ok(v) => AdsbMessage::Velocity(v),
            Err(_) => AdsbMessage::Other { type_code: 19 },
        },
        tc => AdsbMessage::Other { type_code: tc },
    };
    Ok(DecodedFrame {
        icao: frame.icao(),
        t: frame.t,
        message,
    })
}

/// Number of longitude zones at a latitude.
pub fn cpr_nl(lat: f64) -> u32 {
    let lat = lat.abs();
    if lat < 1e-9 {
        return 59;
    }
    if (lat - 87.0).abs() < 1e-9 {
        return 2;
    }
    if lat > 87.0 {
        return 1;
    }
    let nz = 15.0;
    let a = 1.0 - (std::f64::consts::PI / (2.0 * nz)).cos();
    let b = lat.to_radians().cos().powi(2);
    (2.0 * std::f64::consts::PI / (1.0 - a / b).acos()).floor() as u32
}

fn modulo(a: f64, b: f64) -> f64 {
    a - b * (a / b).floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedCpr {
    pub frame: CprFrame,
    pub t: Millis,
}

/// Maximum spacing of an even/odd pair for a global decode.
pub const CPR_PAIR_WINDOW_MS: Millis = 10_000;

/// Globally unambiguous airborne position from an even/odd pair; the more
/// recent frame selects the solution.
pub fn cpr_decode_airborne(even: &TimedCpr, odd: &TimedCpr) -> Result<(f64, f64)> {
    if even.frame.odd || !odd.frame.odd {
        return Err(Error::Cpr("pair must be one even and one odd frame"));
    }
    if even.t.abs_diff(odd.t) > CPR_PAIR_WINDOW_MS {
        return Err(Error::Cpr("even/odd frames too far apart"));
    }
    let (lat_e, lon_e) = (even.frame.lat as f64 / CPR_SCALE, even.frame.lon as f64 / CPR_SCALE);
    let (lat_o, lon_o) = (odd.frame.lat as f64 / CPR_SCALE, odd.frame.lon as f64 / CPR_SCALE);
    let j = (59.0 * lat_e - 60.0 * lat_o + 0.5).floor();
    let mut rlat_e = 360.0 / 60.0 * (modulo(j, 60.0) + lat_e);
    let mut rlat_o = 360.0 / 59.0 * (modulo(j, 59.0) + lat_o);
    if rlat_e >= 270.0 {
        rlat_e -= 360.0;
    }
    if rlat_o >= 270.0 {
        rlat_o -= 360.0;
    }
    if !(-90.0..=90.0).contains(&rlat_e) || !(-90.0..=90.0).contains(&rlat_o) {
        return Err(Error::Cpr("latitude out of range"));
    }
    let nl = cpr_nl(rlat_e);
    if nl != cpr_nl(rlat_o) {
        return Err(Error::Cpr("even and odd frames straddle a latitude zone"));
    }
    let odd_newer = odd.t > even.t;
    let (lat, ni, lon_frac) = if odd_newer {
        (rlat_o, (nl as i64 - 1).max(1) as f64, lon_o)
    } else {
        (rlat_e, (nl as f64).max(1.0), lon_e)
    };
    let m = (lon_e * (nl as f64 - 1.0) - lon_o * nl as f64 + 0.5).floor();
    let mut lon = 360.0 / ni * (modulo(m, ni) + lon_frac);
    if lon >= 180.0 {
        lon -= 360.0;
    }
    Ok((lat, lon))
}

/// Compact position encoding of a latitude/longitude.
pub fn cpr_encode(lat: f64, lon: f64, odd: bool) -> CprFrame {
    let i = if odd { 1.0 } else { 0.0 };
    let dlat = 360.0 / (60.0 - i);
    let yz = (CPR_SCALE * modulo(lat, dlat) / dlat + 0.5).floor();
    let rlat = dlat * (yz / CPR_SCALE + (lat / dlat).floor());
    let nl = cpr_nl(rlat) as f64 - i;
    let dlon = 360.0 / nl.max(1.0);
    let xz = (CPR_SCALE * modulo(lon, dlon) / dlon + 0.5).floor();
    CprFrame {
        odd,
        lat: (yz as u32) & 0x1FFFF,
        lon: (xz as u32) & 0x1FFFF,
    }
}

/// Builders for CRC-valid DF17 frames, used for test vectors and simulation.
pub mod encode {
    use super::*;

    const CAPABILITY: u8 = 5;

    fn frame(icao: Icao, me: u64) -> [u8; 14] {
        let mut b = [0u8; 14];
        b[0] = (17 << 3) | CAPABILITY;
        b[1..4].copy_from_slice(&icao.to_be_bytes()[1..]);
        b[4..11].copy_from_slice(&me.to_be_bytes()[1..]);
        let p = crc24(&b[..11]);
        b[11..14].copy_from_slice(&p.to_be_bytes()[1..]);
        b
    }

    fn put(me: &mut u64, start: u32, len: u32, v: u64) {
        let shift = 56 - start - len;
        *me |= (v & ((1u64 << len) - 1)) << shift;
    }

    pub fn identification(icao: Icao, callsign: &str, category: VehicleCategory) -> [u8; 14] {
        let (tc, cat) = category.codes();
        let mut me = 0u64;
        put(&mut me, 0, 5, tc as u64);
        put(&mut me, 5, 3, cat as u64);
        let chars: Vec<u8> = callsign.bytes().chain(std::iter::repeat(b' ')).take(8).collect();
        for (i, c) in chars.iter().enumerate() {
            let code = CALLSIGN_CHARSET
                .iter()
                .position(|x| x == &c.to_ascii_uppercase() && *x != b'#')
                .unwrap_or(0);
            put(&mut me, 8 + 6 * i as u32, 6, code as u64);
        }
        frame(icao, me)
    }

    /// Barometric airborne position with 25-ft altitude coding (type code 11).
    pub fn airborne_position(icao: Icao, lat: f64, lon: f64, altitude_ft: f64, odd: bool) -> [u8; 14] {
        let cpr = cpr_encode(lat, lon, odd);
        let n = (((altitude_ft + 1000.0) / 25.0).round().max(0.0) as u64).min(0x7FF);
        let alt12 = ((n & 0x7F0) << 1) | 0x10 | (n & 0xF);
        let mut me = 0u64;
        put(&mut me, 0, 5, 11);
        put(&mut me, 8, 12, alt12);
        put(&mut me, 21, 1, odd as u64);
        put(&mut me, 22, 17, cpr.lat as u64);
        put(&mut me, 39, 17, cpr.lon as u64);
        frame(icao, me)
    }

    /// Subsonic ground velocity (subtype 1).
    pub fn ground_velocity(icao: Icao, east_kt: f64, north_kt: f64, vertical_fpm: f64) -> [u8; 14] {
        let mut me = 0u64;
        put(&mut me, 0, 5, 19);
        put(&mut me, 5, 3, 1);
        put(&mut me, 13, 1, (east_kt < 0.0) as u64);
        put(&mut me, 14, 10, (east_kt.abs().round() as u64 + 1).min(1023));
        put(&mut me, 24, 1, (north_kt < 0.0) as u64);
        put(&mut me, 25, 10, (north_kt.abs().round() as u64 + 1).min(1023));
        put(&mut me, 36, 1, (vertical_fpm < 0.0) as u64);
        put(&mut me, 37, 9, ((vertical_fpm.abs() / 64.0).round() as u64 + 1).min(511));
        frame(icao, me)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdsbConfig {
    /// Entries unseen for longer than this are dropped from the current queue.
    pub expiry_ms: Millis,
    /// History points kept per aircraft.
    pub history_cap: usize,
}

impl Default for AdsbConfig {
    fn default() -> Self {
        AdsbConfig {
            expiry_ms: 60_000,
            history_cap: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftTrackEntry {
    pub icao: Icao,
    pub callsign: Option<String>,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub altitude_ft: Option<f64>,
    /// Sloping distance in metres.
    pub distance: Option<f64>,
    pub horizontal_distance: Option<f64>,
    pub azimuth: Option<f64>,
    pub elevation: Option<f64>,
    pub ground_speed_kt: Option<f64>,
    pub track_deg: Option<f64>,
    pub last_seen: Millis,
    pub category: VehicleCategory,
    pub class: TargetClass,
    pub confidence: f64,
}

impl AircraftTrackEntry {
    fn new(icao: Icao, t: Millis) -> Self {
        let (class, confidence) = category_to_class(VehicleCategory::None);
        AircraftTrackEntry {
            icao,
            callsign: None,
            lat: None,
            lon: None,
            altitude_ft: None,
            distance: None,
            horizontal_distance: None,
            azimuth: None,
            elevation: None,
            ground_speed_kt: None,
            track_deg: None,
            last_seen: t,
            category: VehicleCategory::None,
            class,
            confidence,
        }
    }

    pub fn position(&self) -> Option<GeoPosition> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) => Some(GeoPosition {
                lat,
                lon,
                alt: self.altitude_ft.unwrap_or(0.0) * FEET_TO_METERS,
            }),
            _ => None,
        }
    }

    /// Whether the plan display shows geometry for this entry.
    pub fn is_displayable(&self, max_horizontal_m: f64) -> bool {
        self.horizontal_distance.is_some_and(|d| d <= max_horizontal_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub icao: Icao,
    pub t: Millis,
    pub lat: f64,
    pub lon: f64,
    pub altitude_ft: Option<f64>,
}

#[derive(Debug, Clone, Default)]
struct PairState {
    even: Option<TimedCpr>,
    odd: Option<TimedCpr>,
}

/// The worker's two output queues: current tracks and position history.
#[derive(Debug, Clone, Default)]
pub struct AdsbQueues {
    cfg: AdsbConfig,
    current: BTreeMap<Icao, AircraftTrackEntry>,
    history: BTreeMap<Icao, VecDeque<HistoryPoint>>,
    pairs: BTreeMap<Icao, PairState>,
    rejected_frames: u64,
    cpr_failures: u64,
}

impl AdsbQueues {
    pub fn new(cfg: AdsbConfig) -> Self {
        AdsbQueues {
            cfg,
            ..Default::default()
        }
    }

    pub fn current(&self) -> &BTreeMap<Icao, AircraftTrackEntry> {
        &self.current
    }

    pub fn history(&self, icao: Icao) -> impl Iterator<Item = &HistoryPoint> {
        self.history.get(&icao).into_iter().flatten()
    }

    pub fn history_len(&self) -> usize {
        self.history.values().map(VecDeque::len).sum()
    }

    pub fn rejected_frames(&self) -> u64 {
        self.rejected_frames
    }

    pub fn cpr_failures(&self) -> u64 {
        self.cpr_failures
    }

    /// Decodes and applies a raw frame; CRC and format failures are counted and dropped.
    pub fn ingest_frame(&mut self, frame: &RawFrame, sys: &SystemPose) -> Option<Icao> {
        match decode_frame(frame) {
            Ok(d) => {
                self.update(&d, sys, frame.t);
                Some(d.icao)
            }
            Err(_) => {
                self.rejected_frames += 1;
                None
            }
        }
    }

    /// Drops entries unseen for longer than the expiry.
    pub fn expire(&mut self, t: Millis) {
        let expiry = self.cfg.expiry_ms;
        let stale: Vec<Icao> = self
            .current
            .iter()
            .filter(|(_, e)| t.saturating_sub(e.last_seen) > expiry)
            .map(|(k, _)| *k)
            .collect();
        for icao in stale {
            self.current.remove(&icao);
            self.history.remove(&icao);
            self.pairs.remove(&icao);
        }
    }

    pub fn update(&mut self, msg: &DecodedFrame, sys: &SystemPose, t: Millis) {
        self.expire(t);
        let icao = msg.icao;
        let entry = self
            .current
            .entry(icao)
            .or_insert_with(|| AircraftTrackEntry::new(icao, t));
        entry.last_seen = t;
        match &msg.message {
            AdsbMessage::Identification(id) => {
                entry.callsign = Some(id.callsign.trim_end().to_string());
                if id.category != VehicleCategory::None {
                    entry.category = id.category;
                    let (class, conf) = category_to_class(id.category);
                    entry.class = class;
                    entry.confidence = conf;
                }
            }
            AdsbMessage::Velocity(Velocity::GroundSpeed {
                speed_kt, track_deg, ..
            }) => {
                entry.ground_speed_kt = Some(*speed_kt);
                entry.track_deg = Some(*track_deg);
            }
            AdsbMessage::AirbornePosition(pos) => {
                let pair = self.pairs.entry(icao).or_default();
                let timed = TimedCpr { frame: pos.cpr, t };
                if pos.cpr.odd {
                    pair.odd = Some(timed);
                } else {
                    pair.even = Some(timed);
                }
                if pos.altitude_ft.is_some() {
                    entry.altitude_ft = pos.altitude_ft;
                }
                let (Some(even), Some(odd)) = (pair.even, pair.odd) else {
                    return;
                };
                let (lat, lon) = match cpr_decode_airborne(&even, &odd) {
                    Ok(p) => p,
                    Err(_) => {
                        self.cpr_failures += 1;
                        return;
                    }
                };
                let hist = self.history.entry(icao).or_default();
                hist.push_back(HistoryPoint {
                    icao,
                    t,
                    lat,
                    lon,
                    altitude_ft: entry.altitude_ft,
                });
                while hist.len() > self.cfg.history_cap {
                    hist.pop_front();
                }
                entry.lat = Some(lat);
                entry.lon = Some(lon);
                let target = GeoPosition {
                    lat,
                    lon,
                    alt: entry.altitude_ft.unwrap_or(0.0) * FEET_TO_METERS,
                };
                if let Ok(g) = relative_geometry(sys, &target) {
                    entry.distance = Some(g.sloping_distance);
                    entry.horizontal_distance = Some(g.horizontal_distance);
                    entry.azimuth = Some(g.azimuth);
                    entry.elevation = Some(g.elevation);
                }
            }
            AdsbMessage::Velocity(Velocity::Airspeed { .. }) | AdsbMessage::Other { .. } => {}
        }
    }
}

/// Parses one line of a frame file: `hex` or `t_us,hex`.
pub fn parse_frame_line(line: &str, default_t: Millis) -> Result<RawFrame> {
    match line.split_once(',') {
        Some((t, hex)) => {
            let t_us: u64 = t
                .trim()
                .parse()
                .map_err(|_| Error::Malformed(format!("bad timestamp '{t}'")))?;
            RawFrame::from_hex(hex, t_us / 1000)
        }
        None => RawFrame::from_hex(line, default_t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(hex: &str, t: Millis) -> RawFrame {
        RawFrame::from_hex(hex, t).unwrap()
    }

    #[test]
    fn crc_examples() {
        let f = frame("8D4840D6202CC371C32CE0576098", 0);
        assert!(crc24_check(&f));
        assert_eq!(crc24(&f.bytes), 0);
        let mut flipped = f;
        flipped.bytes[6] ^= 0x08;
        assert!(!crc24_check(&flipped));
        let zero = RawFrame::new([0u8; 14], 0);
        assert!(!crc24_check(&zero));
    }

    #[test]
    fn identification_reference() {
        let d = decode_frame(&frame("8D4840D6202CC371C32CE0576098", 0)).unwrap();
        assert_eq!(d.icao, 0x4840D6);
        let AdsbMessage::Identification(id) = d.message else {
            panic!()
        };
        assert_eq!(id.callsign, "KLM1023 ");
        assert_eq!(id.category, VehicleCategory::None);
        assert!(!id.invalid_chars);
    }

    #[test]
    fn invalid_callsign_chars_flagged() {
        let mut me = 4u64 << 51;
        me |= 1u64 << 42; // first char code 1 = 'A', second code 0 = '#'
        let id = decode_identification(me).unwrap();
        assert!(id.callsign.starts_with("A#"));
        assert!(id.invalid_chars);
    }

    #[test]
    fn category_table() {
        assert_eq!(VehicleCategory::from_codes(4, 7), VehicleCategory::Rotorcraft);
        assert_eq!(VehicleCategory::from_codes(3, 6), VehicleCategory::UAV);
        assert_eq!(VehicleCategory::from_codes(4, 0), VehicleCategory::None);
        assert_eq!(category_to_class(VehicleCategory::Rotorcraft), (TargetClass::Helicopter, 1.0));
        assert_eq!(category_to_class(VehicleCategory::None), (TargetClass::Airplane, 0.75));
        assert_eq!(category_to_class(VehicleCategory::UAV), (TargetClass::Drone, 1.0));
        for tc in 1..=4u8 {
            for c in 0..8u8 {
                let cat = VehicleCategory::from_codes(tc, c);
                let (_, conf) = category_to_class(cat);
                assert!(conf == 1.0 || conf == 0.75);
                if cat != VehicleCategory::Reserved {
                    assert_eq!(VehicleCategory::from_codes(cat.codes().0, cat.codes().1), cat);
                }
            }
        }
    }

    #[test]
    fn reference_position_pair() {
        let even = frame("8D40621D58C382D690C8AC2863A7", 1_457_996_402_000);
        let odd = frame("8D40621D58C386435CC412692AD6", 1_457_996_400_000);
        let AdsbMessage::AirbornePosition(pe) = decode_frame(&even).unwrap().message else {
            panic!()
        };
        let AdsbMessage::AirbornePosition(po) = decode_frame(&odd).unwrap().message else {
            panic!()
        };
        assert_eq!(pe.altitude_ft, Some(38000.0));
        assert!(!pe.cpr.odd && po.cpr.odd);
        let e = TimedCpr { frame: pe.cpr, t: even.t };
        let o = TimedCpr { frame: po.cpr, t: odd.t };
        let (lat, lon) = cpr_decode_airborne(&e, &o).unwrap();
        assert!((lat - 52.25720).abs() < 1e-4, "{lat}");
        assert!((lon - 3.91937).abs() < 1e-4, "{lon}");
        // odd newer: the odd solution, within one zone width of the even one
        let o2 = TimedCpr { t: even.t + 1000, ..o };
        let (lat2, lon2) = cpr_decode_airborne(&e, &o2).unwrap();
        assert!((lat2 - lat).abs() < 360.0 / 59.0 && (lon2 - lon).abs() < 0.1);
        assert!((lat2 - lat).abs() > 0.0);
        let stale = TimedCpr { t: even.t + 20_000, ..o };
        assert!(matches!(cpr_decode_airborne(&e, &stale), Err(Error::Cpr(_))));
    }

    #[test]
    fn zone_mismatch_rejected() {
        // the pair straddles the NL 59/58 boundary near 10.47 N
        let e = TimedCpr { frame: cpr_encode(10.465, 20.0, false), t: 0 };
        let o = TimedCpr { frame: cpr_encode(10.475, 20.0, true), t: 1000 };
        assert_eq!(cpr_nl(10.465), 59);
        assert_eq!(cpr_nl(10.475), 58);
        assert!(matches!(cpr_decode_airborne(&e, &o), Err(Error::Cpr(_))));
    }

    #[test]
    fn nl_table_spot_checks() {
        assert_eq!(cpr_nl(0.0), 59);
        assert_eq!(cpr_nl(10.47), 59);
        assert_eq!(cpr_nl(10.48), 58);
        assert_eq!(cpr_nl(52.26), 36);
        assert_eq!(cpr_nl(86.9), 2);
        assert_eq!(cpr_nl(87.0), 2);
        assert_eq!(cpr_nl(88.0), 1);
        assert_eq!(cpr_nl(-52.26), 36);
    }

    #[test]
    fn reference_velocity() {
        let d = decode_frame(&frame("8D485020994409940838175B284F", 0)).unwrap();
        let AdsbMessage::Velocity(Velocity::GroundSpeed {
            speed_kt,
            track_deg,
            vertical_rate_fpm,
        }) = d.message
        else {
            panic!()
        };
        assert!((speed_kt - 159.20).abs() < 0.01);
        assert!((track_deg - 182.88).abs() < 0.01);
        assert_eq!(vertical_rate_fpm, Some(-832.0));
    }

    #[test]
    fn encoder_roundtrips() {
        let id = RawFrame::new(encode::identification(0xABCDEF, "SWE123", VehicleCategory::Rotorcraft), 0);
        assert!(crc24_check(&id));
        let AdsbMessage::Identification(d) = decode_frame(&id).unwrap().message else {
            panic!()
        };
        assert_eq!(d.callsign, "SWE123  ");
        assert_eq!(d.category, VehicleCategory::Rotorcraft);
        let v = RawFrame::new(encode::ground_velocity(1, -100.0, 50.0, 640.0), 0);
        let AdsbMessage::Velocity(Velocity::GroundSpeed { speed_kt, vertical_rate_fpm, .. }) =
            decode_frame(&v).unwrap().message
        else {
            panic!()
        };
        assert!((speed_kt - 100f64.hypot(50.0)).abs() < 1e-9);
        assert_eq!(vertical_rate_fpm, Some(640.0));
        let p = RawFrame::new(encode::airborne_position(1, 56.7, 12.8, 1525.0, true), 0);
        let AdsbMessage::AirbornePosition(pos) = decode_frame(&p).unwrap().message else {
            panic!()
        };
        assert_eq!(pos.altitude_ft, Some(1525.0));
    }

    fn pose() -> SystemPose {
        SystemPose::new(GeoPosition::new(56.67, 12.83, 10.0).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn queues_upsert_history_and_expiry() {
        let sys = pose();
        let mut q = AdsbQueues::new(AdsbConfig::default());
        let icao = 0x4A1234;
        let push = |q: &mut AdsbQueues, lat: f64, odd: bool, t: Millis| {
            let f = RawFrame::new(encode::airborne_position(icao, lat, 12.9, 3000.0, odd), t);
            q.ingest_frame(&f, &sys)
        };
        push(&mut q, 56.70, false, 0);
        push(&mut q, 56.70, true, 1000);
        assert_eq!(q.current().len(), 1);
        assert_eq!(q.history_len(), 1);
        let e = &q.current()[&icao];
        assert_eq!((e.class, e.confidence), (TargetClass::Airplane, 0.75));
        assert!(e.distance.is_some() && e.azimuth.is_some());
        push(&mut q, 56.71, false, 2000);
        assert_eq!(q.current().len(), 1);
        assert_eq!(q.history_len(), 2);
        let id = RawFrame::new(encode::identification(icao, "HELI1", VehicleCategory::Rotorcraft), 2500);
        q.ingest_frame(&id, &sys);
        let e = &q.current()[&icao];
        assert_eq!((e.class, e.confidence), (TargetClass::Helicopter, 1.0));
        assert_eq!(e.callsign.as_deref(), Some("HELI1"));
        // a second aircraft arriving after expiry evicts the first
        let other = RawFrame::new(encode::identification(7, "X", VehicleCategory::Light), 2500 + 60_001);
        q.ingest_frame(&other, &sys);
        assert_eq!(q.current().len(), 1);
        assert!(q.current().contains_key(&7));
        assert_eq!(q.history_len(), 0);
        let bad = RawFrame::new([0u8; 14], 0);
        assert!(q.ingest_frame(&bad, &sys).is_none());
        assert_eq!(q.rejected_frames(), 1);
    }

    #[test]
    fn history_capped() {
        let sys = pose();
        let mut q = AdsbQueues::new(AdsbConfig { history_cap: 3, ..Default::default() });
        for k in 0..20u64 {
            let f = RawFrame::new(
                encode::airborne_position(9, 56.7 + 0.001 * k as f64, 12.9, 2000.0, k % 2 == 1),
                k * 1000,
            );
            q.ingest_frame(&f, &sys);
        }
        assert_eq!(q.history(9).count(), 3);
    }

    proptest::proptest! {
        #[test]
        fn cpr_roundtrip(lat in -80.0f64..80.0, lon in -179.9f64..179.9, odd_newer: bool) {
            let e = TimedCpr { frame: cpr_encode(lat, lon, false), t: if odd_newer { 0 } else { 1000 } };
            let o = TimedCpr { frame: cpr_encode(lat, lon, true), t: if odd_newer { 1000 } else { 0 } };
            // pairs straddling a zone boundary are legitimately rejected
            if let Ok((dlat, dlon)) = cpr_decode_airborne(&e, &o) {
                proptest::prop_assert!((dlat - lat).abs() < 1e-4);
                let dl = (dlon - lon + 540.0).rem_euclid(360.0) - 180.0;
                proptest::prop_assert!(dl.abs() < 2e-3, "{} vs {}", dlon, lon);
            } else {
                proptest::prop_assert!(cpr_nl(lat - 0.01) != cpr_nl(lat + 0.01));
            }
        }

        #[test]
        fn crc_detects_single_bit_flips(bit in 0usize..112) {
            let mut f = RawFrame::new(encode::identification(0x123456, "ABC", VehicleCategory::Light), 0);
            proptest::prop_assert!(crc24_check(&f));
            f.bytes[bit / 8] ^= 0x80 >> (bit % 8);
            proptest::prop_assert!(!parity_matches(&f));
        }
    }

    #[test]
    fn frame_lines() {
        let f = parse_frame_line("1500000,8D4840D6202CC371C32CE0576098", 0).unwrap();
        assert_eq!(f.t, 1500);
        let f = parse_frame_line("*8D4840D6202CC371C32CE0576098;", 7).unwrap();
        assert_eq!(f.t, 7);
        assert!(parse_frame_line("zz", 0).is_err());
    }
}
