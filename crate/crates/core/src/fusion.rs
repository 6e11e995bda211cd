//! Decision-level sensor fusion over a sensor × class result matrix.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::types::{Detection, Millis, SensorId, TargetClass};

/// Matrix rows, in order.
pub const FUSION_SENSORS: [SensorId; 4] = [
    SensorId::IRcam,
    SensorId::Vcam,
    SensorId::Audio,
    SensorId::ADSB,
];

/// Argmax tie-break: a missed drone costs more than a false alarm.
const TIE_PRIORITY: [TargetClass; 4] = [
    TargetClass::Drone,
    TargetClass::Helicopter,
    TargetClass::Airplane,
    TargetClass::Bird,
];

pub fn sensor_row(sensor: SensorId) -> Option<usize> {
    FUSION_SENSORS.iter().position(|s| *s == sensor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSetting {
    pub include: bool,
    pub weight: f64,
}

impl Default for SensorSetting {
    fn default() -> Self {
        SensorSetting {
            include: true,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Indexed like [`FUSION_SENSORS`].
    pub sensors: [SensorSetting; 4],
    pub min_sensors: usize,
    pub window_rows: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            sensors: [SensorSetting::default(); 4],
            min_sensors: 1,
            window_rows: 10,
        }
    }
}

impl FusionConfig {
    pub fn setting(&self, sensor: SensorId) -> Option<&SensorSetting> {
        sensor_row(sensor).map(|r| &self.sensors[r])
    }

    pub fn setting_mut(&mut self, sensor: SensorId) -> Option<&mut SensorSetting> {
        sensor_row(sensor).map(move |r| &mut self.sensors[r])
    }

    pub fn included_count(&self) -> usize {
        self.sensors.iter().filter(|s| s.include).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.included_count() == 0 {
            return param("at least one sensor must be included in fusion");
        }
        if let Some(s) = self
            .sensors
            .iter()
            .find(|s| !s.weight.is_finite() || !(0.0..=1.0).contains(&s.weight))
        {
            return param(format!("fusion weight {} outside [0, 1]", s.weight));
        }
        if self.min_sensors == 0 {
            return param("min_sensors must be at least 1");
        }
        if self.window_rows == 0 {
            return param("window_rows must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    pub rows: [[f64; 4]; 4],
}

impl ResultMatrix {
    pub fn column_sums(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for row in &self.rows {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    /// Rows with any nonzero entry.
    pub fn nonzero_rows(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.iter().any(|v| *v != 0.0))
            .count()
    }
}

/// Result of folding one poll cycle's reports into a matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Ingested {
    pub matrix: ResultMatrix,
    /// Included sensors whose report carries a fusable class.
    pub sensors_detecting: usize,
    /// Reports dropped because the sensor is excluded or has no row.
    pub ignored: usize,
}

/// Builds the poll-cycle matrix. With several reports from one sensor the last wins.
pub fn ingest(reports: &[Detection], cfg: &FusionConfig) -> Ingested {
    let mut latest: [Option<&Detection>; 4] = [None; 4];
    let mut ignored = 0;
    for d in reports {
        match sensor_row(d.sensor) {
            Some(r) if cfg.sensors[r].include => latest[r] = Some(d),
            _ => ignored += 1,
        }
    }
    let mut out = Ingested {
        ignored,
        ..Default::default()
    };
    for (r, d) in latest.iter().enumerate() {
        let Some(d) = d else { continue };
        if let Some(c) = d.class.column() {
            out.matrix.rows[r][c] = cfg.sensors[r].weight * d.confidence;
            out.sensors_detecting += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub class: Option<TargetClass>,
    /// Normalized strength of the leading class; still reported when the
    /// sensor-count gate suppresses the class.
    pub confidence: f64,
    pub sensors_detecting: usize,
}

impl SystemOutput {
    pub const NONE: SystemOutput = SystemOutput {
        class: None,
        confidence: 0.0,
        sensors_detecting: 0,
    };
}

/// Time-smoothing FIFO of column sums.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FusionState {
    window: VecDeque<[f64; 4]>,
    ignored_reports: u64,
}

impl FusionState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn window(&self) -> &VecDeque<[f64; 4]> {
        &self.window
    }

    pub fn ignored_reports(&self) -> u64 {
        self.ignored_reports
    }

    pub fn window_sums(&self) -> [f64; 4] {
        let mut out = [0.0; 4];
        for row in &self.window {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn fusion_step(
        &mut self,
        matrix: &ResultMatrix,
        sensors_detecting: usize,
        cfg: &FusionConfig,
    ) -> SystemOutput {
        self.window.push_back(matrix.column_sums());
        while self.window.len() > cfg.window_rows.max(1) {
            self.window.pop_front();
        }
        let sums = self.window_sums();
        let mut best = TIE_PRIORITY[0];
        let mut best_v = f64::NEG_INFINITY;
        for c in TIE_PRIORITY {
            let v = sums[c.column().expect("fused class")];
            if v > best_v {
                best = c;
                best_v = v;
            }
        }
        if best_v <= 0.0 {
            return SystemOutput {
                sensors_detecting,
                ..SystemOutput::NONE
            };
        }
        let denom = (cfg.window_rows.max(1) * cfg.included_count().max(1)) as f64;
        let confidence = (best_v / denom).clamp(0.0, 1.0);
        // a nonzero window with a vanishing ratio must not read as zero confidence
        let confidence = if confidence > 0.0 { confidence } else { f64::MIN_POSITIVE };
        SystemOutput {
            class: (sensors_detecting >= cfg.min_sensors).then_some(best),
            confidence,
            sensors_detecting,
        }
    }

    /// Ingests one poll cycle's reports and advances the window.
    pub fn step(&mut self, reports: &[Detection], cfg: &FusionConfig) -> SystemOutput {
        let ing = ingest(reports, cfg);
        self.ignored_reports += ing.ignored as u64;
        self.fusion_step(&ing.matrix, ing.sensors_detecting, cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub t: Millis,
    pub class: Option<TargetClass>,
    pub confidence: f64,
    pub sensors_detecting: usize,
}

/// Replays a time-sorted detection log on a fixed poll grid.
///
/// Tick `k` covers `[k·tick_ms, (k+1)·tick_ms)` and is stamped with its end.
/// The grid runs to `end` if given, otherwise to the last report.
pub fn fusion_replay(
    log: &[Detection],
    cfg: &FusionConfig,
    tick_ms: Millis,
    end: Option<Millis>,
) -> Result<Vec<TimelineEntry>> {
    cfg.validate()?;
    if tick_ms == 0 {
        return param("tick period must be positive");
    }
    if let Some(w) = log.windows(2).find(|w| w[1].t < w[0].t) {
        return Err(Error::Malformed(format!(
            "event log not sorted: {} after {}",
            w[1].t, w[0].t
        )));
    }
    let last = match (end, log.last()) {
        (Some(e), _) => e,
        (None, Some(d)) => d.t + 1,
        (None, None) => return Ok(Vec::new()),
    };
    let ticks = last.div_ceil(tick_ms);
    let mut state = FusionState::new();
    let mut out = Vec::with_capacity(ticks as usize);
    let mut i = 0;
    for k in 0..ticks {
        let tick_end = (k + 1) * tick_ms;
        let start = i;
        while i < log.len() && log[i].t < tick_end {
            i += 1;
        }
        let o = state.step(&log[start..i], cfg);
        out.push(TimelineEntry {
            t: tick_end,
            class: o.class,
            confidence: o.confidence,
            sensors_detecting: o.sensors_detecting,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(sensor: SensorId, class: TargetClass, conf: f64) -> Detection {
        let bbox = sensor
            .is_vision()
            .then(|| crate::types::Rect::new(10.0, 10.0, 5.0, 5.0).unwrap());
        Detection::new(sensor, class, conf, bbox, 0).unwrap()
    }

    fn only(sensors: &[SensorId]) -> FusionConfig {
        let mut cfg = FusionConfig::default();
        for (r, s) in FUSION_SENSORS.iter().enumerate() {
            cfg.sensors[r].include = sensors.contains(s);
        }
        cfg
    }

    #[test]
    fn ingest_examples() {
        let cfg = FusionConfig::default();
        let m = ingest(&[det(SensorId::IRcam, TargetClass::Drone, 0.9)], &cfg).matrix;
        assert_eq!(m.rows[0], [0.0, 0.0, 0.9, 0.0]);
        let ing = ingest(&[det(SensorId::Audio, TargetClass::Background, 0.99)], &cfg);
        assert_eq!(ing.matrix.rows[2], [0.0; 4]);
        assert_eq!(ing.sensors_detecting, 0);
        let mut cfg = FusionConfig::default();
        cfg.sensors[1].weight = 0.5;
        let m = ingest(&[det(SensorId::Vcam, TargetClass::Bird, 0.6)], &cfg).matrix;
        assert_eq!(m.rows[1], [0.0, 0.3, 0.0, 0.0]);
        let cfg = only(&[SensorId::IRcam]);
        let ing = ingest(&[det(SensorId::Vcam, TargetClass::Bird, 0.6)], &cfg);
        assert_eq!(ing.ignored, 1);
        assert_eq!(ing.matrix, ResultMatrix::default());
    }

    #[test]
    fn sustained_single_sensor() {
        let cfg = only(&[SensorId::IRcam]);
        let mut st = FusionState::new();
        let mut out = SystemOutput::NONE;
        for _ in 0..10 {
            out = st.step(&[det(SensorId::IRcam, TargetClass::Drone, 0.9)], &cfg);
        }
        assert_eq!(out.class, Some(TargetClass::Drone));
        assert!((out.confidence - 0.9).abs() < 1e-12);
    }

    #[test]
    fn min_sensor_gate() {
        let mut cfg = only(&[SensorId::IRcam, SensorId::Vcam]);
        cfg.min_sensors = 2;
        let mut st = FusionState::new();
        let out = st.step(&[det(SensorId::IRcam, TargetClass::Bird, 0.8)], &cfg);
        assert_eq!(out.class, None);
        assert!(out.confidence > 0.0);
        let out = st.step(
            &[
                det(SensorId::IRcam, TargetClass::Drone, 0.8),
                det(SensorId::Vcam, TargetClass::Drone, 0.8),
            ],
            &cfg,
        );
        assert_eq!(out.class, Some(TargetClass::Drone));
        assert_eq!(FusionState::new().step(&[], &cfg), SystemOutput::NONE);
    }

    #[test]
    fn ties_prefer_drone() {
        let cfg = FusionConfig::default();
        let mut st = FusionState::new();
        let out = st.step(
            &[
                det(SensorId::IRcam, TargetClass::Bird, 0.5),
                det(SensorId::Vcam, TargetClass::Airplane, 0.5),
                det(SensorId::Audio, TargetClass::Drone, 0.5),
                det(SensorId::ADSB, TargetClass::Helicopter, 0.5),
            ],
            &cfg,
        );
        assert_eq!(out.class, Some(TargetClass::Drone));
        let mut st = FusionState::new();
        let out = st.step(
            &[
                det(SensorId::IRcam, TargetClass::Bird, 0.5),
                det(SensorId::ADSB, TargetClass::Airplane, 0.5),
            ],
            &cfg,
        );
        assert_eq!(out.class, Some(TargetClass::Airplane));
    }

    #[test]
    fn single_misclassification_smoothed() {
        let cfg = only(&[SensorId::IRcam]);
        let mut log = Vec::new();
        for k in 0..30u64 {
            let class = if k == 15 { TargetClass::Bird } else { TargetClass::Drone };
            let mut d = det(SensorId::IRcam, class, 0.8);
            d.t = k * 100 + 50;
            log.push(d);
        }
        let tl = fusion_replay(&log, &cfg, 100, None).unwrap();
        assert_eq!(tl.len(), 30);
        assert!(tl.iter().all(|e| e.class == Some(TargetClass::Drone)));
    }

    #[test]
    fn replay_rejects_unsorted_and_empty_is_empty() {
        let cfg = FusionConfig::default();
        let mut a = det(SensorId::IRcam, TargetClass::Drone, 0.8);
        a.t = 500;
        let b = det(SensorId::IRcam, TargetClass::Drone, 0.8);
        assert!(fusion_replay(&[a, b], &cfg, 100, None).is_err());
        let tl = fusion_replay(&[], &cfg, 100, Some(1000)).unwrap();
        assert_eq!(tl.len(), 10);
        assert!(tl.iter().all(|e| e.class.is_none() && e.confidence == 0.0));
    }

    fn arb_report() -> impl Strategy<Value = Option<(usize, f64)>> {
        proptest::option::of((0usize..4, 0.01f64..1.0))
    }

    fn to_dets(rows: &[Option<(usize, f64)>; 4]) -> Vec<Detection> {
        rows.iter()
            .zip(FUSION_SENSORS)
            .filter_map(|(r, s)| {
                let (c, p) = (*r)?;
                let class = TargetClass::FUSED[c];
                s.may_emit(class).then(|| det(s, class, p))
            })
            .collect()
    }

    proptest! {
        #[test]
        fn confidence_bounded_and_zero_iff_window_empty(
            ticks in proptest::collection::vec(proptest::array::uniform4(arb_report()), 1..30),
            weights in proptest::array::uniform4(0.0f64..=1.0),
            min_sensors in 1usize..4,
        ) {
            let mut cfg = FusionConfig { min_sensors, ..Default::default() };
            for (s, w) in cfg.sensors.iter_mut().zip(weights) {
                s.weight = w;
            }
            let mut st = FusionState::new();
            for t in &ticks {
                let out = st.step(&to_dets(t), &cfg);
                prop_assert!((0.0..=1.0).contains(&out.confidence));
                let all_zero = st.window_sums().iter().all(|v| *v == 0.0);
                prop_assert_eq!(out.confidence == 0.0, all_zero);
                if out.class.is_some() {
                    prop_assert!(out.sensors_detecting >= min_sensors);
                }
            }
        }

        #[test]
        fn weight_increase_keeps_argmax(
            ticks in proptest::collection::vec(proptest::array::uniform4(arb_report()), 1..15),
            bump in 0.0f64..0.5,
        ) {
            let mut cfg = FusionConfig::default();
            for s in cfg.sensors.iter_mut() {
                s.weight = 0.5;
            }
            let mut st = FusionState::new();
            let mut out = SystemOutput::NONE;
            for t in &ticks {
                out = st.step(&to_dets(t), &cfg);
            }
            let Some(class) = out.class else { return Ok(()) };
            // bump every sensor whose reports vote only for the winning class
            let mut bumped = cfg.clone();
            for (r, s) in bumped.sensors.iter_mut().enumerate() {
                let votes: Vec<_> = ticks.iter().filter_map(|t| t[r]).collect();
                if !votes.is_empty() && votes.iter().all(|(c, _)| TargetClass::FUSED[*c] == class) {
                    s.weight += bump;
                }
            }
            let mut st2 = FusionState::new();
            let mut out2 = SystemOutput::NONE;
            for t in &ticks {
                out2 = st2.step(&to_dets(t), &bumped);
            }
            prop_assert_eq!(out2.class, Some(class));
        }

        #[test]
        fn only_last_window_matters(
            prefix_a in proptest::collection::vec(proptest::array::uniform4(arb_report()), 0..10),
            prefix_b in proptest::collection::vec(proptest::array::uniform4(arb_report()), 0..10),
            tail in proptest::collection::vec(proptest::array::uniform4(arb_report()), 10..12),
        ) {
            let cfg = FusionConfig::default();
            let run = |prefix: &[[Option<(usize, f64)>; 4]]| {
                let mut st = FusionState::new();
                let mut out = SystemOutput::NONE;
                for t in prefix.iter().chain(&tail) {
                    out = st.step(&to_dets(t), &cfg);
                }
                out
            };
            prop_assert_eq!(run(&prefix_a), run(&prefix_b));
        }

        #[test]
        fn any_sensor_alone_can_detect(row in 0usize..4, conf in 0.05f64..1.0) {
            let cfg = FusionConfig::default();
            let s = FUSION_SENSORS[row];
            let class = if s == SensorId::ADSB { TargetClass::Airplane } else { TargetClass::Drone };
            let mut st = FusionState::new();
            let out = st.step(&[det(s, class, conf)], &cfg);
            prop_assert_eq!(out.class, Some(class));
        }
    }

    #[test]
    fn row_permutation_keeps_class() {
        // column sums are symmetric in rows, so swapping which sensor carries
        // which vote (with its weight) gives the same result
        let mut a = ResultMatrix::default();
        a.rows[0][2] = 0.7;
        a.rows[1][1] = 0.4;
        a.rows[3][0] = 0.6;
        let mut b = a;
        b.rows.swap(0, 3);
        b.rows.swap(1, 2);
        let cfg = FusionConfig::default();
        let oa = FusionState::new().fusion_step(&a, 3, &cfg);
        let ob = FusionState::new().fusion_step(&b, 3, &cfg);
        assert_eq!(oa, ob);
    }
}
