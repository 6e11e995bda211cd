//! Pan/tilt pointing: source selection, search patterns and rate-limited servo commands.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::geometry::CameraModel;
use crate::scalar::Scalar;
use crate::types::{AngleOffset, Millis, Rect};

/// Angle offset of a box centre from the image centre, positive right and up.
pub fn bbox_to_offset<T: Scalar>(bbox: &Rect<T>, cam: &CameraModel<T>) -> Result<AngleOffset<T>> {
    let (cx, cy) = bbox.center();
    let w = T::from_usize_lossy(cam.width);
    let h = T::from_usize_lossy(cam.height);
    if !(cx >= T::zero() && cx <= w && cy >= T::zero() && cy <= h) {
        return param(format!("box centre ({cx}, {cy}) outside {w}x{h} image"));
    }
    let two = T::lit(2.0);
    Ok(AngleOffset::new(
        (cx - w / two) * cam.hfov / w,
        (h / two - cy) * cam.vfov / h,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ControlSource {
    IRandV,
    IRcam,
    Vcam,
    Fcam,
    Search,
    Idle,
}

impl ControlSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlSource::IRandV => "IRandV",
            ControlSource::IRcam => "IRcam",
            ControlSource::Vcam => "Vcam",
            ControlSource::Fcam => "Fcam",
            ControlSource::Search => "Search",
            ControlSource::Idle => "Idle",
        }
    }
}

impl std::fmt::Display for ControlSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which sources may steer the platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceEnables {
    pub ir_and_v: bool,
    pub ircam: bool,
    pub vcam: bool,
    pub fcam: bool,
    pub search: bool,
}

impl Default for SourceEnables {
    fn default() -> Self {
        SourceEnables {
            ir_and_v: false,
            ircam: true,
            vcam: true,
            fcam: true,
            search: true,
        }
    }
}

/// Live targets reported this tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SourceReports {
    pub ircam: Option<AngleOffset>,
    pub vcam: Option<AngleOffset>,
    /// Absolute (pan, tilt) of the fish-eye track in platform coordinates.
    pub fcam: Option<(f64, f64)>,
}

pub fn select_source(reports: &SourceReports, enables: &SourceEnables) -> ControlSource {
    let ir = reports.ircam.is_some();
    let v = reports.vcam.is_some();
    if enables.ir_and_v && ir && v {
        ControlSource::IRandV
    } else if enables.ircam && ir {
        ControlSource::IRcam
    } else if enables.vcam && v {
        ControlSource::Vcam
    } else if enables.fcam && reports.fcam.is_some() {
        ControlSource::Fcam
    } else if enables.search {
        ControlSource::Search
    } else {
        ControlSource::Idle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchVariant {
    /// One elevation, sweeping between the pan limits.
    A,
    /// Alternating elevations on successive sweeps.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub variant: SearchVariant,
    pub elevation_a: f64,
    pub elevations_b: [f64; 2],
    /// deg/s
    pub sweep_rate: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            variant: SearchVariant::A,
            elevation_a: 10.0,
            elevations_b: [5.0, 15.0],
            sweep_rate: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformConfig {
    pub pan_limits: [f64; 2],
    pub tilt_limits: [f64; 2],
    /// deg/s
    pub max_slew: f64,
    pub command_period_ms: Millis,
    pub search: SearchConfig,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            pan_limits: [-45.0, 45.0],
            tilt_limits: [0.0, 45.0],
            max_slew: 90.0,
            command_period_ms: 200,
            search: SearchConfig::default(),
        }
    }
}

impl PlatformConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |l: [f64; 2]| l[0].is_finite() && l[1].is_finite() && l[0] < l[1];
        if !ok(self.pan_limits) || !ok(self.tilt_limits) {
            return param("platform limits must be finite, increasing intervals");
        }
        if !(self.max_slew > 0.0) || !(self.search.sweep_rate > 0.0) {
            return param("slew and sweep rates must be positive");
        }
        if self.command_period_ms == 0 {
            return param("command period must be positive");
        }
        Ok(())
    }

    pub fn clamp(&self, pan: f64, tilt: f64) -> (f64, f64) {
        (
            pan.clamp(self.pan_limits[0], self.pan_limits[1]),
            tilt.clamp(self.tilt_limits[0], self.tilt_limits[1]),
        )
    }
}

/// What drives the platform on a tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlInput {
    Offset(AngleOffset),
    Point { pan: f64, tilt: f64 },
    Search,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoCommand {
    pub t: Millis,
    pub pan: f64,
    pub tilt: f64,
    pub source: ControlSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformState {
    pub pan: f64,
    pub tilt: f64,
    pub servo_power: bool,
}

impl Default for PlatformState {
    fn default() -> Self {
        PlatformState {
            pan: 0.0,
            tilt: 0.0,
            servo_power: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SearchPhase {
    pan: f64,
    direction: f64,
    leg: usize,
}

#[derive(Debug, Clone)]
pub struct PlatformController {
    cfg: PlatformConfig,
    state: PlatformState,
    last_command: Option<Millis>,
    search: Option<SearchPhase>,
}

impl PlatformController {
    pub fn new(cfg: PlatformConfig) -> Result<Self> {
        cfg.validate()?;
        let (pan, tilt) = cfg.clamp(0.0, 0.0);
        Ok(PlatformController {
            cfg,
            state: PlatformState {
                pan,
                tilt,
                servo_power: true,
            },
            last_command: None,
            search: None,
        })
    }

    pub fn state(&self) -> &PlatformState {
        &self.state
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.cfg
    }

    pub fn set_servo_power(&mut self, on: bool) {
        self.state.servo_power = on;
    }

    fn search_waypoint(&mut self, dt_s: f64) -> (f64, f64) {
        let [lo, hi] = self.cfg.pan_limits;
        let sc = self.cfg.search;
        let phase = self.search.get_or_insert(SearchPhase {
            pan: self.state.pan.clamp(lo, hi),
            direction: 1.0,
            leg: 0,
        });
        phase.pan += phase.direction * sc.sweep_rate * dt_s;
        if phase.pan >= hi {
            phase.pan = hi;
            phase.direction = -1.0;
            phase.leg += 1;
        } else if phase.pan <= lo {
            phase.pan = lo;
            phase.direction = 1.0;
            phase.leg += 1;
        }
        let tilt = match sc.variant {
            SearchVariant::A => sc.elevation_a,
            SearchVariant::B => sc.elevations_b[phase.leg % 2],
        };
        (phase.pan, tilt)
    }

    /// Advances the controller; emits a command when the command period has elapsed.
    pub fn tick(&mut self, t: Millis, source: ControlSource, input: ControlInput) -> Option<ServoCommand> {
        let period = self.cfg.command_period_ms;
        let dt_ms = match self.last_command {
            Some(last) if t < last + period => return None,
            Some(last) => t - last,
            None => period,
        };
        if !self.state.servo_power {
            return None;
        }
        let dt_s = dt_ms as f64 / 1000.0;
        if !matches!(input, ControlInput::Search) {
            self.search = None;
        }
        let (want_pan, want_tilt) = match input {
            ControlInput::Idle => return None,
            ControlInput::Offset(o) => (
                self.state.pan + o.azimuth_offset,
                self.state.tilt + o.elevation_offset,
            ),
            ControlInput::Point { pan, tilt } => (pan, tilt),
            ControlInput::Search => self.search_waypoint(dt_s),
        };
        let (want_pan, want_tilt) = self.cfg.clamp(want_pan, want_tilt);
        let step = self.cfg.max_slew * dt_s;
        let pan = self.state.pan + (want_pan - self.state.pan).clamp(-step, step);
        let tilt = self.state.tilt + (want_tilt - self.state.tilt).clamp(-step, step);
        let (pan, tilt) = self.cfg.clamp(pan, tilt);
        self.state.pan = pan;
        self.state.tilt = tilt;
        self.last_command = Some(t);
        Some(ServoCommand { t, pan, tilt, source })
    }
}

/// Pulse width for an angle: 1500 µs centre, 10 µs per degree.
pub fn servo_pulse_us(deg: f64) -> f64 {
    1500.0 + 10.0 * deg
}

/// Compact-protocol "set target" bytes; the target is in quarter microseconds.
pub fn encode_servo_target(channel: u8, deg: f64) -> [u8; 4] {
    let target = (4.0 * servo_pulse_us(deg)).round().clamp(0.0, 16383.0) as u16;
    [0x84, channel & 0x7F, (target & 0x7F) as u8, (target >> 7) as u8]
}
