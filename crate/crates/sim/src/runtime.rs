//! Run configuration and the main loop: poll worker queues, fuse, point the
//! platform, and log everything on the virtual clock.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use skywatch_core::adsb::{AdsbConfig, AircraftTrackEntry};
use skywatch_core::audio::MfccConfig;
use skywatch_core::control::{
    bbox_to_offset, select_source, ControlInput, ControlSource, PlatformConfig, PlatformController, SourceEnables,
    SourceReports,
};
use skywatch_core::evaluation::{count_events, opportunity_analysis, Opportunity, OpportunityLog, OpportunityStats, OpportunityTick};
use skywatch_core::fusion::{sensor_row, FusionConfig, FusionState, SensorSetting, FUSION_SENSORS};
use skywatch_core::geometry::fov_contains;
use skywatch_core::tracking::{KalmanConfig, TrackerConfig};
use skywatch_core::vision::ForegroundConfig;
use skywatch_core::{Detection, Millis, SensorId, TargetClass};

use crate::error::{schema, SimError, SimResult};
use crate::queue::{spsc, Consumer, Producer};
use crate::scenario::Scenario;
use crate::workers::{
    AdsbWorker, AudioWorker, FisheyeWorker, Payload, Scheduler, TruthBox, VisionWorker, WorkerCommand, WorkerReport,
};
use crate::world::World;

/// Worker emission order within a tick.
pub const WORKER_ORDER: [SensorId; 5] = [
    SensorId::IRcam,
    SensorId::Vcam,
    SensorId::Fcam,
    SensorId::Audio,
    SensorId::ADSB,
];

/// Gap, in poll ticks, below which two detections belong to one event.
pub const EVENT_MERGE_TICKS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateTable {
    pub queue_poll_hz: f64,
    pub servo_hz: f64,
    pub adsb_display_hz: f64,
}

impl Default for RateTable {
    fn default() -> Self {
        RateTable {
            queue_poll_hz: 10.0,
            servo_hz: 5.0,
            adsb_display_hz: 0.5,
        }
    }
}

fn period_ms(hz: f64) -> Millis {
    (1000.0 / hz).round().max(1.0) as Millis
}

impl RateTable {
    pub fn poll_period_ms(&self) -> Millis {
        period_ms(self.queue_poll_hz)
    }

    pub fn validate(&self) -> SimResult<()> {
        for (name, hz) in [
            ("queue_poll_hz", self.queue_poll_hz),
            ("servo_hz", self.servo_hz),
            ("adsb_display_hz", self.adsb_display_hz),
        ] {
            if !(hz.is_finite() && hz > 0.0 && hz <= 1000.0) {
                return schema(format!("{name} = {hz} must be a positive rate"));
            }
        }
        Ok(())
    }
}

/// Fusion settings in run-file form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSection {
    pub include: Vec<SensorId>,
    pub weights: BTreeMap<SensorId, f64>,
    pub min_sensors: usize,
    pub window_rows: usize,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            include: FUSION_SENSORS.to_vec(),
            weights: BTreeMap::new(),
            min_sensors: 1,
            window_rows: 10,
        }
    }
}

impl FusionSection {
    pub fn to_config(&self) -> SimResult<FusionConfig> {
        let mut sensors = [SensorSetting {
            include: false,
            weight: 1.0,
        }; 4];
        for s in &self.include {
            let Some(r) = sensor_row(*s) else {
                return schema(format!("{s} cannot be included in fusion"));
            };
            sensors[r].include = true;
        }
        for (s, w) in &self.weights {
            let Some(r) = sensor_row(*s) else {
                return schema(format!("{s} has no fusion weight"));
            };
            sensors[r].weight = *w;
        }
        let cfg = FusionConfig {
            sensors,
            min_sensors: self.min_sensors,
            window_rows: self.window_rows,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerEnables {
    pub ircam: bool,
    pub vcam: bool,
    pub fcam: bool,
    pub audio: bool,
    pub adsb: bool,
}

impl Default for WorkerEnables {
    fn default() -> Self {
        WorkerEnables {
            ircam: true,
            vcam: true,
            fcam: true,
            audio: true,
            adsb: true,
        }
    }
}

impl WorkerEnables {
    pub fn get(&self, s: SensorId) -> bool {
        match s {
            SensorId::IRcam => self.ircam,
            SensorId::Vcam => self.vcam,
            SensorId::Fcam => self.fcam,
            SensorId::Audio => self.audio,
            SensorId::ADSB => self.adsb,
        }
    }
}

/// A settings change applied at the first tick at or after `t` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reconfigure {
    pub t: f64,
    #[serde(default)]
    pub fusion: Option<FusionSection>,
    #[serde(default)]
    pub sources: Option<SourceEnables>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario file; the bundled demo when absent.
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Pace the virtual clock against the wall clock.
    pub realtime: bool,
    pub fusion: FusionSection,
    pub sources: SourceEnables,
    pub platform: PlatformConfig,
    pub workers: WorkerEnables,
    pub rates: RateTable,
    pub foreground: ForegroundConfig,
    pub tracker: TrackerConfig,
    pub kalman: KalmanConfig,
    pub adsb: AdsbConfig,
    pub mfcc: MfccConfig,
    pub reconfigure: Vec<Reconfigure>,
    pub queue_capacity: usize,
    /// Reports older than this (or two worker periods, if longer) are not reused.
    pub stale_ms: Millis,
    /// Horizontal range of the ADS-B plan display, metres.
    pub display_range_m: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: None,
            seed: None,
            out: None,
            realtime: false,
            fusion: FusionSection::default(),
            sources: SourceEnables::default(),
            platform: PlatformConfig::default(),
            workers: WorkerEnables::default(),
            rates: RateTable::default(),
            foreground: ForegroundConfig::default(),
            tracker: TrackerConfig::default(),
            kalman: KalmanConfig::default(),
            adsb: AdsbConfig::default(),
            mfcc: MfccConfig::default(),
            reconfigure: Vec::new(),
            queue_capacity: 64,
            stale_ms: 300,
            display_range_m: 30_000.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> SimResult<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| SimError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> SimResult<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(sc), Some(dir)) = (&cfg.scenario, path.parent()) {
            if sc.is_relative() {
                cfg.scenario = Some(dir.join(sc));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> SimResult<()> {
        self.rates.validate()?;
        self.fusion.to_config()?;
        self.platform.validate()?;
        for r in &self.reconfigure {
            if let Some(f) = &r.fusion {
                f.to_config()?;
            }
            if !(r.t.is_finite() && r.t >= 0.0) {
                return schema("reconfigure time must be non-negative");
            }
        }
        if self.queue_capacity == 0 {
            return schema("queue_capacity must be positive");
        }
        Ok(())
    }

    /// The scenario this run uses, with the seed override applied.
    pub fn load_scenario(&self) -> SimResult<Scenario> {
        let mut sc = match &self.scenario {
            Some(p) => Scenario::from_json(&std::fs::read_to_string(p)?)?,
            None => Scenario::demo(),
        };
        if let Some(s) = self.seed {
            sc.seed = s;
        }
        Ok(sc)
    }
}

/// Per-target truth for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTarget {
    pub name: String,
    pub class: TargetClass,
    pub distance: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub in_ircam: bool,
    pub in_vcam: bool,
    pub audible: bool,
    /// Transponder-equipped and inside the infrared camera's field of view.
    pub adsb_in_view: bool,
}

impl TruthTarget {
    pub fn observable(&self) -> bool {
        self.in_ircam || self.in_vcam || self.audible || self.adsb_in_view
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayEntry {
    #[serde(flatten)]
    pub entry: AircraftTrackEntry,
    pub displayable: bool,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Sensor {
        t: Millis,
        sensor: SensorId,
        detection: Option<Detection>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<Vec<TruthBox>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fcam_target: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        track_id: Option<u64>,
    },
    System {
        t: Millis,
        class: Option<TargetClass>,
        confidence: f64,
        sensors_detecting: usize,
        source: ControlSource,
        pan: f64,
        tilt: f64,
    },
    Servo {
        t: Millis,
        pan: f64,
        tilt: f64,
        source: ControlSource,
    },
    AdsbDisplay {
        t: Millis,
        aircraft: Vec<DisplayEntry>,
    },
    Truth {
        t: Millis,
        targets: Vec<TruthTarget>,
    },
    Config {
        t: Millis,
        fusion: FusionConfig,
        sources: SourceEnables,
    },
}

/// One row of metrics.csv, per poll tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: Millis,
    pub system_class: Option<TargetClass>,
    pub confidence: f64,
    pub sensors_detecting: usize,
    pub source: ControlSource,
    pub pan: f64,
    pub tilt: f64,
    pub ircam: Option<TargetClass>,
    pub vcam: Option<TargetClass>,
    pub audio: Option<TargetClass>,
    pub adsb: Option<TargetClass>,
    pub fcam_track: Option<u64>,
    pub truth_classes: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SensorStats {
    pub reports: u64,
    pub detections: u64,
    pub stale_reuses: u64,
    pub queue_drops: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    pub ticks: u64,
    pub servo_commands: u64,
    pub system_detection_ticks: BTreeMap<TargetClass, u64>,
    pub system_detection_events: usize,
    pub false_detection_ticks: u64,
    pub false_detection_events: usize,
    pub misclassified_ticks: u64,
    pub control_source_ticks: BTreeMap<ControlSource, u64>,
    pub sensors: BTreeMap<SensorId, SensorStats>,
    pub ignored_fusion_reports: u64,
    pub adsb_aircraft_seen: usize,
    pub fcam_ticks_with_track: u64,
    pub drone_opportunities: OpportunityStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub events: Vec<Event>,
    pub metrics: Vec<MetricsRow>,
    pub summary: Summary,
    pub opportunities: OpportunityLog,
}

impl RunOutput {
    pub fn events_jsonl(&self) -> String {
        events_to_jsonl(&self.events)
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(
            "t,system_class,confidence,sensors_detecting,source,pan,tilt,ircam,vcam,audio,adsb,fcam_track,truth\n",
        );
        let c = |x: Option<TargetClass>| x.map(|c| c.to_string()).unwrap_or_default();
        for r in &self.metrics {
            s.push_str(&format!(
                "{},{},{:.6},{},{},{:.4},{:.4},{},{},{},{},{},{}\n",
                r.t,
                c(r.system_class),
                r.confidence,
                r.sensors_detecting,
                r.source,
                r.pan,
                r.tilt,
                c(r.ircam),
                c(r.vcam),
                c(r.audio),
                c(r.adsb),
                r.fcam_track.map(|i| i.to_string()).unwrap_or_default(),
                r.truth_classes
            ));
        }
        s
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }

    /// Writes events.jsonl, metrics.csv and summary.json into `dir`.
    pub fn write_to(&self, dir: &Path) -> SimResult<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::File::create(dir.join("events.jsonl"))?.write_all(self.events_jsonl().as_bytes())?;
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        std::fs::write(dir.join("summary.json"), self.summary_json())?;
        Ok(())
    }
}

pub fn events_to_jsonl(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("event serializes"));
        s.push('\n');
    }
    s
}

/// Parses an event log; blank lines are skipped.
pub fn read_events(text: &str) -> SimResult<Vec<Event>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| SimError::Schema(format!("line {}: {e}", i + 1))))
        .collect()
}

struct Latest {
    report: WorkerReport,
    fresh: bool,
}

struct Channels {
    commands: BTreeMap<SensorId, Producer<WorkerCommand>>,
    reports: BTreeMap<SensorId, Consumer<WorkerReport>>,
}

fn build_workers(world: &Arc<World>, cfg: &RunConfig) -> SimResult<(Scheduler, Channels)> {
    let mut scheduler = Scheduler::new();
    let mut ch = Channels {
        commands: BTreeMap::new(),
        reports: BTreeMap::new(),
    };
    let sensors = &world.scenario.sensors;
    for s in WORKER_ORDER {
        let (cmd_tx, cmd_rx) = spsc(cfg.queue_capacity);
        let (rep_tx, rep_rx) = spsc(cfg.queue_capacity);
        let model_enabled = match s {
            SensorId::IRcam => sensors.ircam.enabled,
            SensorId::Vcam => sensors.vcam.enabled,
            SensorId::Fcam => sensors.fcam.enabled,
            SensorId::Audio => sensors.audio.enabled,
            SensorId::ADSB => sensors.adsb.enabled,
        };
        cmd_tx.push(WorkerCommand::Run(model_enabled && cfg.workers.get(s)));
        let w: Box<dyn crate::workers::Worker> = match s {
            SensorId::IRcam | SensorId::Vcam => Box::new(VisionWorker::new(s, world.clone(), cmd_rx, rep_tx)),
            SensorId::Fcam => Box::new(FisheyeWorker::new(
                world.clone(),
                cfg.foreground,
                cfg.tracker,
                cfg.kalman,
                cmd_rx,
                rep_tx,
            )?),
            SensorId::Audio => Box::new(AudioWorker::new(world.clone(), cmd_rx, rep_tx)),
            SensorId::ADSB => Box::new(AdsbWorker::new(world.clone(), cfg.adsb, cmd_rx, rep_tx)),
        };
        scheduler.add(w);
        ch.commands.insert(s, cmd_tx);
        ch.reports.insert(s, rep_rx);
    }
    Ok((scheduler, ch))
}

fn worker_rate(world: &World, s: SensorId) -> f64 {
    let m = &world.scenario.sensors;
    match s {
        SensorId::IRcam => m.ircam.rate_hz,
        SensorId::Vcam => m.vcam.rate_hz,
        SensorId::Fcam => m.fcam.rate_hz,
        SensorId::Audio => m.audio.rate_hz,
        SensorId::ADSB => m.adsb.worker_rate_hz,
    }
}

fn truth_at(world: &World, t: Millis, pan: f64, tilt: f64) -> Vec<TruthTarget> {
    let pose = world.pose.with_pan_tilt(pan, tilt);
    let s = &world.scenario.sensors;
    world
        .observe(t)
        .iter()
        .map(|o| {
            let g = o.geometry;
            let in_cam = |m: &crate::scenario::CameraSensorModel| {
                m.enabled
                    && g.sloping_distance <= m.max_range
                    && fov_contains(&pose, &m.camera, g.azimuth, g.elevation).inside
            };
            TruthTarget {
                name: o.target.spec.name.clone(),
                class: o.class(),
                distance: g.sloping_distance,
                azimuth: g.azimuth,
                elevation: g.elevation,
                in_ircam: in_cam(&s.ircam),
                in_vcam: in_cam(&s.vcam),
                audible: s.audio.enabled && o.target.spec.sound_class.is_some() && g.sloping_distance <= s.audio.range_m,
                adsb_in_view: s.adsb.enabled
                    && o.target.spec.adsb.is_some()
                    && fov_contains(&pose, &s.ircam.camera, g.azimuth, g.elevation).inside,
            }
        })
        .collect()
}

fn invariant<T>(msg: String) -> SimResult<T> {
    Err(SimError::Invariant(msg))
}

/// Runs the scenario to completion on the virtual clock.
pub fn run(scenario: &Scenario, cfg: &RunConfig) -> SimResult<RunOutput> {
    cfg.validate()?;
    let seed = cfg.seed.unwrap_or(scenario.seed);
    let world = Arc::new(World::new(scenario, seed)?);
    let (mut scheduler, ch) = build_workers(&world, cfg)?;

    let mut fusion_cfg = cfg.fusion.to_config()?;
    let mut sources = cfg.sources;
    let mut platform_cfg = cfg.platform;
    platform_cfg.command_period_ms = period_ms(cfg.rates.servo_hz);
    let mut platform = PlatformController::new(platform_cfg)?;
    let mut fusion = FusionState::new();
    let ir_cam = world.scenario.sensors.ircam.camera;
    let v_cam = world.scenario.sensors.vcam.camera;

    let poll = cfg.rates.poll_period_ms();
    let display_period = period_ms(cfg.rates.adsb_display_hz);
    let ticks = world.duration / poll;
    let stale: BTreeMap<SensorId, Millis> = WORKER_ORDER
        .iter()
        .map(|&s| (s, cfg.stale_ms.max(2 * period_ms(worker_rate(&world, s)))))
        .collect();

    let mut reconfig: Vec<&Reconfigure> = cfg.reconfigure.iter().collect();
    reconfig.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut reconfig = reconfig.into_iter().peekable();

    let mut events = Vec::new();
    let mut metrics = Vec::with_capacity(ticks as usize);
    let mut summary = Summary {
        scenario: world.scenario.name.clone(),
        seed,
        duration_s: world.scenario.duration,
        ..Default::default()
    };
    for s in WORKER_ORDER {
        summary.sensors.insert(s, SensorStats::default());
    }
    let mut latest: BTreeMap<SensorId, Latest> = BTreeMap::new();
    let mut last_steer: Option<(SensorId, Millis)> = None;
    let mut system_flags = Vec::with_capacity(ticks as usize);
    let mut false_flags = Vec::with_capacity(ticks as usize);
    let mut opp_log = OpportunityLog {
        sources: vec!["IRcam".into(), "Vcam".into(), "Audio".into(), "System".into()],
        intervals: Vec::new(),
    };
    let mut open_opp: Option<Opportunity> = None;
    let mut aircraft_seen = std::collections::BTreeSet::new();
    let wall_start = Instant::now();

    for k in 0..ticks {
        let t = k * poll;
        while let Some(r) = reconfig.next_if(|r| (r.t * 1000.0).round() as Millis <= t) {
            if let Some(f) = &r.fusion {
                fusion_cfg = f.to_config()?;
            }
            if let Some(s) = r.sources {
                sources = s;
            }
            events.push(Event::Config {
                t,
                fusion: fusion_cfg.clone(),
                sources,
            });
        }

        scheduler.run_until(t)?;

        for l in latest.values_mut() {
            l.fresh = false;
        }
        for s in WORKER_ORDER {
            let rx = &ch.reports[&s];
            for rep in rx.drain() {
                let st = summary.sensors.get_mut(&s).expect("sensor stats");
                st.reports += 1;
                let is_detection = rep
                    .detection
                    .as_ref()
                    .is_some_and(|d| !matches!(d.class, TargetClass::Background | TargetClass::NoData));
                if is_detection {
                    st.detections += 1;
                }
                let (truth, fcam_target, track_id) = match &rep.payload {
                    Payload::Vision { truth } => (Some(truth.clone()), None, None),
                    Payload::Fcam { target, track, .. } => (None, *target, track.as_ref().map(|tr| tr.id)),
                    Payload::Adsb { aircraft, .. } => {
                        aircraft_seen.extend(aircraft.iter().map(|a| a.icao));
                        (None, None, None)
                    }
                    Payload::None => (None, None, None),
                };
                events.push(Event::Sensor {
                    t: rep.t,
                    sensor: s,
                    detection: rep.detection.clone(),
                    truth,
                    fcam_target,
                    track_id,
                });
                latest.insert(s, Latest { report: rep, fresh: true });
            }
            summary.sensors.get_mut(&s).expect("sensor stats").queue_drops = rx.dropped();
        }
        let mut current: BTreeMap<SensorId, &WorkerReport> = BTreeMap::new();
        for (s, l) in &latest {
            if t.saturating_sub(l.report.t) <= stale[s] {
                if !l.fresh {
                    summary.sensors.get_mut(s).expect("sensor stats").stale_reuses += 1;
                }
                current.insert(*s, &l.report);
            }
        }
        let det = |s: SensorId| current.get(&s).and_then(|r| r.detection.as_ref());

        let fusion_inputs: Vec<Detection> = FUSION_SENSORS.iter().filter_map(|s| det(*s).cloned()).collect();
        let before = fusion.ignored_reports();
        let out = fusion.step(&fusion_inputs, &fusion_cfg);
        summary.ignored_fusion_reports += fusion.ignored_reports() - before;
        if !(0.0..=1.0).contains(&out.confidence) {
            return invariant(format!("fusion confidence {} outside [0, 1] at t={t}", out.confidence));
        }

        let offset_of = |s: SensorId| {
            let cam = if s == SensorId::IRcam { &ir_cam } else { &v_cam };
            det(s)
                .filter(|d| TargetClass::FUSED.contains(&d.class))
                .and_then(|d| d.bbox)
                .and_then(|b| bbox_to_offset(&b, cam).ok())
        };
        let fcam_target = current.get(&SensorId::Fcam).and_then(|r| match &r.payload {
            Payload::Fcam { target, .. } => *target,
            _ => None,
        });
        let reports = SourceReports {
            ircam: offset_of(SensorId::IRcam),
            vcam: offset_of(SensorId::Vcam),
            fcam: fcam_target.map(|[a, e]| (a, e)),
        };
        let source = select_source(&reports, &sources);
        let steering_sensor = match source {
            ControlSource::IRandV | ControlSource::IRcam => Some(SensorId::IRcam),
            ControlSource::Vcam => Some(SensorId::Vcam),
            _ => None,
        };
        let state = *platform.state();
        let input = match (source, steering_sensor) {
            (_, Some(s)) => {
                let report_t = current[&s].t;
                let offset = if s == SensorId::IRcam { reports.ircam } else { reports.vcam };
                // an offset is relative to the pose its frame was taken at, so use it once
                if last_steer == Some((s, report_t)) {
                    ControlInput::Point {
                        pan: state.pan,
                        tilt: state.tilt,
                    }
                } else {
                    ControlInput::Offset(offset.expect("selected source has an offset"))
                }
            }
            (ControlSource::Fcam, None) => {
                let (pan, tilt) = reports.fcam.expect("selected source has a target");
                ControlInput::Point { pan, tilt }
            }
            (ControlSource::Search, None) => ControlInput::Search,
            _ => ControlInput::Idle,
        };
        if let Some(cmd) = platform.tick(t, source, input) {
            let [plo, phi] = platform_cfg.pan_limits;
            let [tlo, thi] = platform_cfg.tilt_limits;
            if !(plo..=phi).contains(&cmd.pan) || !(tlo..=thi).contains(&cmd.tilt) {
                return invariant(format!("servo command ({}, {}) outside limits", cmd.pan, cmd.tilt));
            }
            if let Some(s) = steering_sensor {
                last_steer = Some((s, current[&s].t));
            }
            for s in [SensorId::IRcam, SensorId::Vcam, SensorId::ADSB] {
                ch.commands[&s].push(WorkerCommand::Pose {
                    pan: cmd.pan,
                    tilt: cmd.tilt,
                });
            }
            summary.servo_commands += 1;
            events.push(Event::Servo {
                t,
                pan: cmd.pan,
                tilt: cmd.tilt,
                source,
            });
        }
        *summary.control_source_ticks.entry(source).or_default() += 1;

        if t.is_multiple_of(display_period) {
            if let Some(Payload::Adsb { aircraft, .. }) = current.get(&SensorId::ADSB).map(|r| &r.payload) {
                events.push(Event::AdsbDisplay {
                    t,
                    aircraft: aircraft
                        .iter()
                        .map(|e| DisplayEntry {
                            displayable: e.is_displayable(cfg.display_range_m),
                            entry: e.clone(),
                        })
                        .collect(),
                });
            }
        }

        let pose = platform.state();
        let truth = truth_at(&world, t, pose.pan, pose.tilt);
        let observable: Vec<TargetClass> = truth.iter().filter(|tt| tt.observable()).map(|tt| tt.class).collect();
        system_flags.push(out.class.is_some());
        let is_false = out.class.is_some() && observable.is_empty();
        false_flags.push(is_false);
        if let Some(c) = out.class {
            *summary.system_detection_ticks.entry(c).or_default() += 1;
            if is_false {
                summary.false_detection_ticks += 1;
            } else if !observable.contains(&c) {
                summary.misclassified_ticks += 1;
            }
        }

        let class_of = |s: SensorId| {
            det(s)
                .map(|d| d.class)
                .filter(|c| !matches!(c, TargetClass::Background | TargetClass::NoData))
        };
        let fcam_track = current.get(&SensorId::Fcam).and_then(|r| match &r.payload {
            Payload::Fcam { track, .. } => track.as_ref().map(|tr| tr.id),
            _ => None,
        });
        if fcam_track.is_some() {
            summary.fcam_ticks_with_track += 1;
        }

        let drone_in_view = truth.iter().any(|tt| tt.class == TargetClass::Drone && (tt.in_ircam || tt.in_vcam));
        if drone_in_view {
            let opp = open_opp.get_or_insert_with(|| Opportunity {
                start: t,
                end: t,
                ticks: Vec::new(),
            });
            opp.end = t;
            let mut outputs = BTreeMap::new();
            for (name, c) in [
                ("IRcam", class_of(SensorId::IRcam)),
                ("Vcam", class_of(SensorId::Vcam)),
                ("Audio", class_of(SensorId::Audio)),
                ("System", out.class),
            ] {
                if let Some(c) = c {
                    outputs.insert(name.to_string(), c);
                }
            }
            opp.ticks.push(OpportunityTick { t, outputs });
        } else if let Some(o) = open_opp.take() {
            opp_log.intervals.push(o);
        }

        metrics.push(MetricsRow {
            t,
            system_class: out.class,
            confidence: out.confidence,
            sensors_detecting: out.sensors_detecting,
            source,
            pan: pose.pan,
            tilt: pose.tilt,
            ircam: class_of(SensorId::IRcam),
            vcam: class_of(SensorId::Vcam),
            audio: class_of(SensorId::Audio),
            adsb: class_of(SensorId::ADSB),
            fcam_track,
            truth_classes: truth.iter().map(|tt| tt.class.as_str()).collect::<Vec<_>>().join(";"),
        });
        events.push(Event::Truth { t, targets: truth });
        events.push(Event::System {
            t,
            class: out.class,
            confidence: out.confidence,
            sensors_detecting: out.sensors_detecting,
            source,
            pan: pose.pan,
            tilt: pose.tilt,
        });
        summary.ticks += 1;

        if cfg.realtime {
            let due = wall_start + Duration::from_millis(t + poll);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }
    if let Some(o) = open_opp.take() {
        opp_log.intervals.push(o);
    }
    if summary.ticks != ticks {
        return invariant(format!("ran {} ticks, expected {ticks}", summary.ticks));
    }
    summary.system_detection_events = count_events(&system_flags, EVENT_MERGE_TICKS);
    summary.false_detection_events = count_events(&false_flags, EVENT_MERGE_TICKS);
    summary.adsb_aircraft_seen = aircraft_seen.len();
    summary.drone_opportunities = opportunity_analysis(&opp_log, TargetClass::Drone)?;
    log::info!(
        "run finished: {} ticks, {} servo commands, {} system detection events",
        summary.ticks,
        summary.servo_commands,
        summary.system_detection_events
    );
    Ok(RunOutput {
        events,
        metrics,
        summary,
        opportunities: opp_log,
    })
}

/// Fusion inputs recorded in an event log, time-ordered.
pub fn fusion_inputs(events: &[Event]) -> Vec<Detection> {
    let mut dets: Vec<Detection> = events
        .iter()
        .filter_map(|e| match e {
            Event::Sensor {
                sensor,
                detection: Some(d),
                ..
            } if FUSION_SENSORS.contains(sensor) => Some(d.clone()),
            _ => None,
        })
        .collect();
    dets.sort_by_key(|d| d.t);
    dets
}
