//! Scenario files: the world, the targets and the sensor models.

use serde::{Deserialize, Serialize};
use skywatch_core::adsb::{Icao, VehicleCategory};
use skywatch_core::geometry::{enu_offset, offset_position, CameraModel, Enu, GeoPosition, SystemPose};
use skywatch_core::{Millis, SensorId, TargetClass};

use crate::error::{schema, SimResult};

pub const SCHEMA_VERSION: u32 = 1;

/// The demo scenario shipped with the crate.
pub const DEMO_SCENARIO: &str = include_str!("../scenarios/demo.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub alt: f64,
    /// Compass bearing of the platform's zero pan, degrees.
    #[serde(default)]
    pub orientation: f64,
}

impl SystemSpec {
    pub fn origin(&self) -> GeoPosition {
        GeoPosition {
            lat: self.lat,
            lon: self.lon,
            alt: self.alt,
        }
    }

    pub fn pose(&self) -> SimResult<SystemPose> {
        Ok(SystemPose::new(GeoPosition::new(self.lat, self.lon, self.alt)?, self.orientation)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaypointPosition {
    /// East, north, up in metres from the system.
    Enu([f64; 3]),
    Geo { lat: f64, lon: f64, alt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds from scenario start.
    pub t: f64,
    #[serde(flatten)]
    pub position: WaypointPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transponder {
    /// 24-bit address as hex, e.g. "4A1234".
    pub icao: String,
    #[serde(default)]
    pub callsign: String,
    #[serde(default = "default_category")]
    pub category: VehicleCategory,
    /// Identification messages carry the category; when false they report none.
    #[serde(default = "yes")]
    pub send_category: bool,
    /// Offset of the 1 Hz transmit schedule, ms.
    #[serde(default = "default_phase")]
    pub phase_ms: Millis,
}

fn default_category() -> VehicleCategory {
    VehicleCategory::None
}

fn default_phase() -> Millis {
    500
}

fn yes() -> bool {
    true
}

impl Transponder {
    pub fn address(&self) -> SimResult<Icao> {
        match u32::from_str_radix(self.icao.trim(), 16) {
            Ok(a) if a <= 0xFF_FFFF => Ok(a),
            _ => schema(format!("bad ICAO address '{}'", self.icao)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub name: String,
    pub class: TargetClass,
    /// Characteristic width, metres.
    pub size_m: f64,
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub adsb: Option<Transponder>,
    /// What the acoustic sensor hears; `None` for silent targets.
    #[serde(default)]
    pub sound_class: Option<TargetClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub const fn new(mean: f64, std: f64) -> Self {
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BboxNoise {
    pub center_sigma: f64,
    pub size_sigma: f64,
}

/// Stand-in for a trained camera detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSensorModel {
    pub enabled: bool,
    pub rate_hz: f64,
    pub camera: CameraModel,
    /// Per distance bin: close, medium, distant.
    pub detect_prob: [f64; 3],
    /// Per bin, rows = true class, columns = reported class (airplane, bird, drone, helicopter).
    pub confusion: [[[f64; 4]; 4]; 3],
    /// Confidence by (true class, reported class).
    pub confidence: [[MeanStd; 4]; 4],
    pub bbox_noise: BboxNoise,
    pub max_range: f64,
}

fn default_confusion() -> [[[f64; 4]; 4]; 3] {
    let mut out = [[[0.0; 4]; 4]; 3];
    for (b, diag) in [0.95, 0.9, 0.8].into_iter().enumerate() {
        for (i, row) in out[b].iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { diag } else { (1.0 - diag) / 3.0 };
            }
        }
    }
    out
}

fn default_confidence() -> [[MeanStd; 4]; 4] {
    let mut out = [[MeanStd::new(0.55, 0.1); 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        row[i] = MeanStd::new(0.8, 0.1);
    }
    out
}

impl CameraSensorModel {
    pub fn infrared() -> Self {
        CameraSensorModel {
            enabled: true,
            rate_hz: 10.0,
            camera: CameraModel::infrared(),
            detect_prob: [0.95, 0.85, 0.6],
            confusion: default_confusion(),
            confidence: default_confidence(),
            bbox_noise: BboxNoise {
                center_sigma: 1.0,
                size_sigma: 0.5,
            },
            max_range: 5000.0,
        }
    }

    pub fn visible() -> Self {
        CameraSensorModel {
            camera: CameraModel::visible(),
            ..Self::infrared()
        }
    }

    /// Never misses and never confuses; confidence fixed at `conf`.
    pub fn perfect(camera: CameraModel, conf: f64) -> Self {
        let mut confusion = [[[0.0; 4]; 4]; 3];
        for bin in confusion.iter_mut() {
            for (i, row) in bin.iter_mut().enumerate() {
                row[i] = 1.0;
            }
        }
        CameraSensorModel {
            enabled: true,
            rate_hz: 10.0,
            camera,
            detect_prob: [1.0; 3],
            confusion,
            confidence: [[MeanStd::new(conf, 0.0); 4]; 4],
            bbox_noise: BboxNoise {
                center_sigma: 0.0,
                size_sigma: 0.0,
            },
            max_range: 1e9,
        }
    }
}

impl Default for CameraSensorModel {
    fn default() -> Self {
        Self::infrared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FisheyeModel {
    pub enabled: bool,
    pub rate_hz: f64,
    /// Sky band: azimuth across the width, elevation 0..vfov bottom to top.
    pub camera: CameraModel,
    pub max_range: f64,
    pub background_mean: f64,
    pub background_amplitude: f64,
    pub target_intensity: f64,
}

impl Default for FisheyeModel {
    fn default() -> Self {
        FisheyeModel {
            enabled: true,
            rate_hz: 30.0,
            camera: CameraModel::fisheye(),
            max_range: 50.0,
            background_mean: 0.45,
            background_amplitude: 0.15,
            target_intensity: 0.95,
        }
    }
}

/// Class-level acoustic sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioModel {
    pub enabled: bool,
    pub rate_hz: f64,
    pub range_m: f64,
    pub detect_prob: f64,
    pub confidence: MeanStd,
    pub background_confidence: MeanStd,
}

impl Default for AudioModel {
    fn default() -> Self {
        AudioModel {
            enabled: true,
            rate_hz: 20.0,
            range_m: 40.0,
            detect_prob: 0.9,
            confidence: MeanStd::new(0.85, 0.08),
            background_confidence: MeanStd::new(0.9, 0.05),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdsbModel {
    pub enabled: bool,
    /// How often the receiver worker reports, Hz.
    pub worker_rate_hz: f64,
    pub position_period_ms: Millis,
    /// Identification is sent with every n-th position message.
    pub ident_every: u64,
}

impl Default for AdsbModel {
    fn default() -> Self {
        AdsbModel {
            enabled: true,
            worker_rate_hz: 10.0,
            position_period_ms: 1000,
            ident_every: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModels {
    pub ircam: CameraSensorModel,
    #[serde(default = "CameraSensorModel::visible")]
    pub vcam: CameraSensorModel,
    pub fcam: FisheyeModel,
    pub audio: AudioModel,
    pub adsb: AdsbModel,
}

/// A scripted detection not caused by any target (insects, clouds, noise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalseEvent {
    pub t: f64,
    #[serde(default = "default_event_duration")]
    pub duration: f64,
    pub sensor: SensorId,
    pub class: TargetClass,
    pub confidence: f64,
    /// Image-centre offset (az, el) in degrees for camera events.
    #[serde(default)]
    pub offset: [f64; 2],
}

fn default_event_duration() -> f64 {
    0.1
}

/// A worker that stops emitting for a while.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stall {
    pub sensor: SensorId,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    /// Seconds.
    pub duration: f64,
    pub system: SystemSpec,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub sensors: SensorModels,
    #[serde(default)]
    pub false_events: Vec<FalseEvent>,
    #[serde(default)]
    pub stalls: Vec<Stall>,
}

fn check_prob(p: f64, what: &str) -> SimResult<()> {
    if !(0.0..=1.0).contains(&p) {
        return schema(format!("{what} = {p} is not a probability"));
    }
    Ok(())
}

fn check_rate(hz: f64, what: &str) -> SimResult<()> {
    if !(hz.is_finite() && hz > 0.0 && hz <= 1000.0) {
        return schema(format!("{what} rate {hz} Hz out of range"));
    }
    Ok(())
}

impl CameraSensorModel {
    fn validate(&self, name: &str) -> SimResult<()> {
        check_rate(self.rate_hz, name)?;
        for p in self.detect_prob {
            check_prob(p, &format!("{name} detect_prob"))?;
        }
        for bin in &self.confusion {
            for row in bin {
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return schema(format!("{name} confusion row {row:?} is not a distribution"));
                }
            }
        }
        for ms in self.confidence.iter().flatten() {
            if !(ms.mean.is_finite() && ms.std.is_finite() && ms.std >= 0.0) {
                return schema(format!("{name} confidence model {ms:?} invalid"));
            }
        }
        if !(self.bbox_noise.center_sigma >= 0.0 && self.bbox_noise.size_sigma >= 0.0) {
            return schema(format!("{name} bbox noise must be non-negative"));
        }
        if !(self.max_range > 0.0) {
            return schema(format!("{name} max_range must be positive"));
        }
        Ok(())
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> SimResult<Scenario> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| crate::SimError::Schema(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn demo() -> Scenario {
        Scenario::from_json(DEMO_SCENARIO).expect("bundled demo scenario is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn duration_ms(&self) -> Millis {
        (self.duration * 1000.0).round() as Millis
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return schema(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return schema("duration must be positive");
        }
        self.system.pose()?;
        for t in &self.targets {
            if t.waypoints.is_empty() {
                return schema(format!("target '{}' has no waypoints", t.name));
            }
            if !(t.size_m.is_finite() && t.size_m > 0.0) {
                return schema(format!("target '{}' size must be positive", t.name));
            }
            if !TargetClass::FUSED.contains(&t.class) {
                return schema(format!("target '{}' class {} is not a target class", t.name, t.class));
            }
            if let Some(s) = t.sound_class {
                if !SensorId::Audio.may_emit(s) {
                    return schema(format!("target '{}' sound class {s} is not audible", t.name));
                }
            }
            for w in t.waypoints.windows(2) {
                if !(w[1].t > w[0].t) {
                    return schema(format!("target '{}' waypoint times must increase", t.name));
                }
            }
            for w in &t.waypoints {
                let finite = match w.position {
                    WaypointPosition::Enu(p) => p.iter().all(|v| v.is_finite()),
                    WaypointPosition::Geo { lat, lon, alt } => {
                        lat.is_finite() && lon.is_finite() && alt.is_finite() && lat.abs() <= 90.0
                    }
                };
                if !finite || !w.t.is_finite() {
                    return schema(format!("target '{}' has a non-finite waypoint", t.name));
                }
            }
            if let Some(tx) = &t.adsb {
                tx.address()?;
            }
        }
        let s = &self.sensors;
        s.ircam.validate("ircam")?;
        s.vcam.validate("vcam")?;
        check_rate(s.fcam.rate_hz, "fcam")?;
        check_rate(s.audio.rate_hz, "audio")?;
        check_rate(s.adsb.worker_rate_hz, "adsb")?;
        if s.fcam.camera.height == 0 || s.fcam.camera.width == 0 || !(s.fcam.max_range > 0.0) {
            return schema("fcam camera and range must be positive");
        }
        check_prob(s.audio.detect_prob, "audio detect_prob")?;
        if s.adsb.position_period_ms == 0 || s.adsb.ident_every == 0 {
            return schema("adsb periods must be positive");
        }
        for e in &self.false_events {
            if !e.sensor.may_emit(e.class) {
                return schema(format!("false event: {} cannot report {}", e.sensor, e.class));
            }
            check_prob(e.confidence, "false event confidence")?;
            if !(e.duration > 0.0 && e.t.is_finite()) {
                return schema("false event duration must be positive");
            }
        }
        for st in &self.stalls {
            if !(st.to >= st.from) {
                return schema("stall interval reversed");
            }
        }
        Ok(())
    }
}

/// Kinematic state of a target at an instant, local ENU metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
}

/// A target with its waypoints resolved to ENU around the system.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTarget {
    pub spec: TargetSpec,
    /// (ms, ENU)
    pub track: Vec<(Millis, [f64; 3])>,
    pub icao: Option<Icao>,
}

impl ResolvedTarget {
    pub fn resolve(spec: &TargetSpec, origin: &GeoPosition) -> SimResult<Self> {
        let track = spec
            .waypoints
            .iter()
            .map(|w| {
                let p = match w.position {
                    WaypointPosition::Enu(p) => p,
                    WaypointPosition::Geo { lat, lon, alt } => {
                        let e = enu_offset(origin, &GeoPosition { lat, lon, alt });
                        [e.east, e.north, e.up]
                    }
                };
                ((w.t * 1000.0).round() as Millis, p)
            })
            .collect();
        let icao = spec.adsb.as_ref().map(Transponder::address).transpose()?;
        Ok(ResolvedTarget {
            spec: spec.clone(),
            track,
            icao,
        })
    }

    /// Piecewise-linear position; `None` outside the waypoint span. A single
    /// waypoint is a static target present for `[0, duration]`.
    pub fn state_at(&self, t: Millis, duration: Millis) -> Option<TargetState> {
        let (first, last) = (self.track[0], *self.track.last().expect("non-empty"));
        if self.track.len() == 1 {
            return (t <= duration).then_some(TargetState {
                position: first.1,
                velocity: [0.0; 3],
            });
        }
        if t < first.0 || t > last.0 {
            return None;
        }
        let i = self.track.partition_point(|(wt, _)| *wt <= t).clamp(1, self.track.len() - 1);
        let (t0, p0) = self.track[i - 1];
        let (t1, p1) = self.track[i];
        let span = (t1 - t0) as f64 / 1000.0;
        let f = (t - t0) as f64 / 1000.0 / span;
        let mut position = [0.0; 3];
        let mut velocity = [0.0; 3];
        for k in 0..3 {
            position[k] = p0[k] + f * (p1[k] - p0[k]);
            velocity[k] = (p1[k] - p0[k]) / span;
        }
        Some(TargetState { position, velocity })
    }
}

pub fn enu_to_geo(origin: &GeoPosition, p: [f64; 3]) -> GeoPosition {
    offset_position(
        origin,
        &Enu {
            east: p[0],
            north: p[1],
            up: p[2],
        },
    )
}
