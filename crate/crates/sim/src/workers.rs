//! Sensor workers. Each owns its sensor state, reads commands from one
//! queue and writes reports to another; nothing else is shared.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use skywatch_core::adsb::{AdsbConfig, AdsbQueues, AircraftTrackEntry, Icao, RawFrame};
use skywatch_core::geometry::{fov_contains, wrap_180, CameraModel, DriBin, GeoPosition};
use skywatch_core::tracking::{KalmanConfig, TrackSnapshot, TrackerConfig};
use skywatch_core::vision::{ForegroundConfig, ForegroundDetector};
use skywatch_core::{AngleOffset, Detection, Millis, Rect, SensorId, TargetClass, Tracker};

use crate::adsb_emit::emit_adsb;
use crate::error::{SimError, SimResult};
use crate::queue::{Consumer, Producer};
use crate::render::{FisheyeRenderer, FisheyeTarget};
use crate::scenario::CameraSensorModel;
use crate::sensors::{emit_detection, project_target, stream, stream_id, truncated_normal, Placement};
use crate::world::World;

/// Main loop to worker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkerCommand {
    /// Run the detector, or idle.
    Run(bool),
    /// Current platform angles, relative to the system orientation.
    Pose { pan: f64, tilt: f64 },
}

/// Ground truth for one target in a camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBox {
    pub target: String,
    pub class: TargetClass,
    pub bbox: Rect<f64>,
    pub bin: DriBin,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    None,
    Vision { truth: Vec<TruthBox> },
    Fcam { target: Option<[f64; 2]>, track: Option<TrackSnapshot>, blobs: usize },
    Adsb { aircraft: Vec<AircraftTrackEntry>, in_fov: Option<Icao> },
}

/// Worker to main loop. `detection: None` is an explicit "nothing seen".
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerReport {
    pub sensor: SensorId,
    pub t: Millis,
    pub detection: Option<Detection>,
    pub payload: Payload,
}

pub trait Worker: Send {
    fn sensor(&self) -> SensorId;
    fn rate_hz(&self) -> f64;
    fn step(&mut self, t: Millis) -> SimResult<()>;
}

/// Queue ends and run state common to all workers.
struct Link {
    commands: Consumer<WorkerCommand>,
    reports: Producer<WorkerReport>,
    running: bool,
    pan: f64,
    tilt: f64,
}

impl Link {
    fn new(commands: Consumer<WorkerCommand>, reports: Producer<WorkerReport>) -> Self {
        Link {
            commands,
            reports,
            running: true,
            pan: 0.0,
            tilt: 0.0,
        }
    }

    fn apply_commands(&mut self) {
        while let Some(c) = self.commands.poll() {
            match c {
                WorkerCommand::Run(r) => self.running = r,
                WorkerCommand::Pose { pan, tilt } => {
                    self.pan = pan;
                    self.tilt = tilt;
                }
            }
        }
    }
}

fn strongest(a: Option<Detection>, b: Option<Detection>) -> Option<Detection> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.confidence > x.confidence { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Infrared or visible camera on the pan/tilt platform.
pub struct VisionWorker {
    sensor: SensorId,
    world: Arc<World>,
    model: CameraSensorModel,
    rng: ChaCha8Rng,
    link: Link,
}

impl VisionWorker {
    pub fn new(
        sensor: SensorId,
        world: Arc<World>,
        commands: Consumer<WorkerCommand>,
        reports: Producer<WorkerReport>,
    ) -> Self {
        let model = match sensor {
            SensorId::Vcam => world.scenario.sensors.vcam.clone(),
            _ => world.scenario.sensors.ircam.clone(),
        };
        VisionWorker {
            sensor,
            rng: stream(world.seed, stream_id(sensor)),
            world,
            model,
            link: Link::new(commands, reports),
        }
    }
}

impl Worker for VisionWorker {
    fn sensor(&self) -> SensorId {
        self.sensor
    }

    fn rate_hz(&self) -> f64 {
        self.model.rate_hz
    }

    fn step(&mut self, t: Millis) -> SimResult<()> {
        self.link.apply_commands();
        if !self.link.running || self.world.stalled(self.sensor, t) {
            return Ok(());
        }
        let pose = self.world.pose.with_pan_tilt(self.link.pan, self.link.tilt);
        let cam = self.model.camera;
        let mut truth = Vec::new();
        let mut best = None;
        for obs in self.world.observe(t) {
            let g = obs.geometry;
            let fov = fov_contains(&pose, &cam, g.azimuth, g.elevation);
            if !fov.inside || g.sloping_distance > self.model.max_range {
                continue;
            }
            let Some(p) = project_target(&cam, fov.offset, g.sloping_distance, obs.target.spec.size_m) else {
                continue;
            };
            truth.push(TruthBox {
                target: obs.target.spec.name.clone(),
                class: obs.class(),
                bbox: p.bbox,
                bin: p.bin,
                distance: g.sloping_distance,
            });
            let d = emit_detection(&self.model, self.sensor, obs.class(), &p, t, &mut self.rng);
            best = strongest(best, d);
        }
        for e in self.world.false_events(self.sensor, t) {
            let offset = AngleOffset::new(e.offset[0], e.offset[1]);
            let d = project_target(&cam, offset, 10.0, 0.1).and_then(|p: Placement| {
                Detection::new(self.sensor, e.class, e.confidence, Some(p.bbox), t).ok()
            });
            best = strongest(best, d);
        }
        self.link.reports.push(WorkerReport {
            sensor: self.sensor,
            t,
            detection: best,
            payload: Payload::Vision { truth },
        });
        Ok(())
    }
}

/// Wide-angle camera feeding the real foreground extraction and tracker.
pub struct FisheyeWorker {
    world: Arc<World>,
    rate_hz: f64,
    max_range: f64,
    renderer: FisheyeRenderer,
    detector: ForegroundDetector,
    tracker: Tracker,
    link: Link,
}

impl FisheyeWorker {
    pub fn new(
        world: Arc<World>,
        foreground: ForegroundConfig,
        tracker: TrackerConfig,
        kalman: KalmanConfig,
        commands: Consumer<WorkerCommand>,
        reports: Producer<WorkerReport>,
    ) -> SimResult<Self> {
        let model = world.scenario.sensors.fcam;
        Ok(FisheyeWorker {
            rate_hz: model.rate_hz,
            max_range: model.max_range,
            renderer: FisheyeRenderer::new(&model, world.seed)?,
            detector: ForegroundDetector::new(foreground)?,
            tracker: Tracker::new(tracker, kalman)?,
            world,
            link: Link::new(commands, reports),
        })
    }

    pub fn camera(&self) -> &CameraModel {
        self.renderer.camera()
    }
}

impl Worker for FisheyeWorker {
    fn sensor(&self) -> SensorId {
        SensorId::Fcam
    }

    fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    fn step(&mut self, t: Millis) -> SimResult<()> {
        self.link.apply_commands();
        if !self.link.running || self.world.stalled(SensorId::Fcam, t) {
            return Ok(());
        }
        let orientation = self.world.pose.orientation;
        let targets: Vec<FisheyeTarget> = self
            .world
            .observe(t)
            .iter()
            .filter(|o| o.geometry.sloping_distance <= self.max_range)
            .map(|o| FisheyeTarget {
                azimuth: wrap_180(o.geometry.azimuth - orientation),
                elevation: o.geometry.elevation,
                distance: o.geometry.sloping_distance,
                size_m: o.target.spec.size_m,
            })
            .collect();
        let frame = self.renderer.render(&targets);
        let blobs = self.detector.process(&frame)?;
        let best = self.tracker.step_blobs(&blobs, t)?;
        let target = best.as_ref().map(|tr| {
            let (x, y) = tr.kf.position();
            let (az, el) = self.renderer.to_angles(x, y);
            [az, el]
        });
        self.link.reports.push(WorkerReport {
            sensor: SensorId::Fcam,
            t,
            detection: None,
            payload: Payload::Fcam {
                target,
                track: best.map(|tr| tr.snapshot()),
                blobs: blobs.len(),
            },
        });
        Ok(())
    }
}

/// Class-level acoustic sensor: hears the nearest sounding target in range.
pub struct AudioWorker {
    world: Arc<World>,
    rng: ChaCha8Rng,
    link: Link,
}

impl AudioWorker {
    pub fn new(world: Arc<World>, commands: Consumer<WorkerCommand>, reports: Producer<WorkerReport>) -> Self {
        AudioWorker {
            rng: stream(world.seed, stream_id(SensorId::Audio)),
            world,
            link: Link::new(commands, reports),
        }
    }
}

impl Worker for AudioWorker {
    fn sensor(&self) -> SensorId {
        SensorId::Audio
    }

    fn rate_hz(&self) -> f64 {
        self.world.scenario.sensors.audio.rate_hz
    }

    fn step(&mut self, t: Millis) -> SimResult<()> {
        use rand::Rng;
        self.link.apply_commands();
        if !self.link.running || self.world.stalled(SensorId::Audio, t) {
            return Ok(());
        }
        let model = self.world.scenario.sensors.audio;
        let heard = self
            .world
            .observe(t)
            .into_iter()
            .filter(|o| o.target.spec.sound_class.is_some() && o.geometry.sloping_distance <= model.range_m)
            .min_by(|a, b| a.geometry.sloping_distance.total_cmp(&b.geometry.sloping_distance));
        let gate: f64 = self.rng.random();
        let (class, conf) = match heard {
            Some(o) if gate < model.detect_prob => (
                o.target.spec.sound_class.expect("filtered"),
                truncated_normal(&mut self.rng, model.confidence),
            ),
            _ => (
                TargetClass::Background,
                truncated_normal(&mut self.rng, model.background_confidence),
            ),
        };
        let mut det = Detection::new(SensorId::Audio, class, conf, None, t)?;
        for e in self.world.false_events(SensorId::Audio, t) {
            det = Detection::new(SensorId::Audio, e.class, e.confidence, None, t)?;
        }
        self.link.reports.push(WorkerReport {
            sensor: SensorId::Audio,
            t,
            detection: Some(det),
            payload: Payload::None,
        });
        Ok(())
    }
}

/// Receiver and decoder; reports the nearest aircraft inside the infrared
/// camera's field of view, otherwise "no data".
pub struct AdsbWorker {
    world: Arc<World>,
    queues: AdsbQueues,
    ir_camera: CameraModel,
    last_t: Option<Millis>,
    link: Link,
}

impl AdsbWorker {
    pub fn new(
        world: Arc<World>,
        cfg: AdsbConfig,
        commands: Consumer<WorkerCommand>,
        reports: Producer<WorkerReport>,
    ) -> Self {
        AdsbWorker {
            ir_camera: world.scenario.sensors.ircam.camera,
            world,
            queues: AdsbQueues::new(cfg),
            last_t: None,
            link: Link::new(commands, reports),
        }
    }

    pub fn queues(&self) -> &AdsbQueues {
        &self.queues
    }

    fn receive(&self, until: Millis) -> Vec<RawFrame> {
        let w = &self.world;
        let model = &w.scenario.sensors.adsb;
        let origin: &GeoPosition = &w.origin;
        let mut frames: Vec<RawFrame> = w
            .targets
            .iter()
            .flat_map(|tg| emit_adsb(tg, origin, model, w.duration, self.last_t, until))
            .collect();
        frames.sort_by_key(|f| f.t);
        frames
    }
}

impl Worker for AdsbWorker {
    fn sensor(&self) -> SensorId {
        SensorId::ADSB
    }

    fn rate_hz(&self) -> f64 {
        self.world.scenario.sensors.adsb.worker_rate_hz
    }

    fn step(&mut self, t: Millis) -> SimResult<()> {
        self.link.apply_commands();
        let frames = self.receive(t);
        self.last_t = Some(t);
        if !self.link.running || self.world.stalled(SensorId::ADSB, t) {
            return Ok(());
        }
        let sys = self.world.pose;
        for f in &frames {
            self.queues.ingest_frame(f, &sys);
        }
        self.queues.expire(t);
        let pose = sys.with_pan_tilt(self.link.pan, self.link.tilt);
        let in_fov = self
            .queues
            .current()
            .values()
            .filter(|e| match (e.azimuth, e.elevation) {
                (Some(az), Some(el)) => fov_contains(&pose, &self.ir_camera, az, el).inside,
                _ => false,
            })
            .min_by(|a, b| a.distance.unwrap_or(f64::MAX).total_cmp(&b.distance.unwrap_or(f64::MAX)));
        let detection = match in_fov {
            Some(e) => Detection::new(SensorId::ADSB, e.class, e.confidence, None, t),
            None => Detection::new(SensorId::ADSB, TargetClass::NoData, 0.0, None, t),
        }
        .map_err(SimError::from)?;
        let in_fov = in_fov.map(|e| e.icao);
        self.link.reports.push(WorkerReport {
            sensor: SensorId::ADSB,
            t,
            detection: Some(detection),
            payload: Payload::Adsb {
                aircraft: self.queues.current().values().cloned().collect(),
                in_fov,
            },
        });
        Ok(())
    }
}

/// Runs workers in a fixed interleaving on the virtual clock: the earliest
/// due step first, ties in registration order.
pub struct Scheduler {
    slots: Vec<Slot>,
}

struct Slot {
    worker: Box<dyn Worker>,
    rate_hz: f64,
    k: u64,
}

impl Slot {
    fn due(&self) -> Millis {
        (self.k as f64 * 1000.0 / self.rate_hz).round() as Millis
    }
}

impl Scheduler {
    pub fn new() -> Self {
        Scheduler { slots: Vec::new() }
    }

    pub fn add(&mut self, worker: Box<dyn Worker>) {
        let rate_hz = worker.rate_hz();
        self.slots.push(Slot { worker, rate_hz, k: 0 });
    }

    /// Steps every worker whose next slot is at or before `t`.
    pub fn run_until(&mut self, t: Millis) -> SimResult<()> {
        loop {
            let next = self
                .slots
                .iter()
                .enumerate()
                .map(|(i, s)| (s.due(), i))
                .filter(|(due, _)| *due <= t)
                .min();
            let Some((due, i)) = next else { return Ok(()) };
            let slot = &mut self.slots[i];
            slot.worker.step(due)?;
            slot.k += 1;
        }
    }
}

impl Default for Scheduler {
    fn default() -> Self {
        Self::new()
    }
}
