//! Constant-velocity Kalman multi-object tracker for the fish-eye stream.
//!
//! State is `(x, vx, y, vy)` in pixels and pixels per frame. Only the
//! centroid is measured; box size is carried along for display only.

use serde::{Deserialize, Serialize};

use crate::assignment::assign;
use crate::error::{param, Error, Result};
use crate::scalar::Scalar;
use crate::types::{Millis, Rect};
use crate::vision::Blob;

pub type Mat4<T> = [[T; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    /// Initial (location, velocity) variance.
    pub initial_estimate_error: (f64, f64),
    /// Process (location, velocity) variance per frame.
    pub motion_noise: (f64, f64),
    pub measurement_noise: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            initial_estimate_error: (200.0, 200.0),
            motion_noise: (50.0, 50.0),
            measurement_noise: 100.0,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.initial_estimate_error.0,
            self.initial_estimate_error.1,
            self.motion_noise.0,
            self.motion_noise.1,
            self.measurement_noise,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return param("Kalman variances must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState<T = f64> {
    /// `(x, vx, y, vy)`
    pub state: [T; 4],
    pub covariance: Mat4<T>,
}

fn diag4<T: Scalar>(d: [T; 4]) -> Mat4<T> {
    let mut m = [[T::zero(); 4]; 4];
    for i in 0..4 {
        m[i][i] = d[i];
    }
    m
}

impl<T: Scalar> KalmanState<T> {
    /// Zero-velocity state at a detected centroid.
    pub fn at(x: T, y: T, cfg: &KalmanConfig) -> Self {
        let (l, v) = cfg.initial_estimate_error;
        KalmanState {
            state: [x, T::zero(), y, T::zero()],
            covariance: diag4([T::lit(l), T::lit(v), T::lit(l), T::lit(v)]),
        }
    }

    pub fn position(&self) -> (T, T) {
        (self.state[0], self.state[2])
    }

    pub fn velocity(&self) -> (T, T) {
        (self.state[1], self.state[3])
    }

    pub fn covariance_trace(&self) -> T {
        (0..4).map(|i| self.covariance[i][i]).sum()
    }

    /// Cholesky factorisation succeeds and the matrix is symmetric.
    pub fn covariance_is_pd(&self) -> bool {
        let p = &self.covariance;
        let tol = T::lit(1e-9);
        for i in 0..4 {
            for j in 0..4 {
                let scale = p[i][i].abs().max(p[j][j].abs()).max(T::one());
                if (p[i][j] - p[j][i]).abs() > tol * scale {
                    return false;
                }
            }
        }
        let mut l = [[T::zero(); 4]; 4];
        for i in 0..4 {
            for j in 0..=i {
                let s: T = (0..j).map(|k| l[i][k] * l[j][k]).sum();
                if i == j {
                    let d = p[i][i] - s;
                    if !(d > T::zero()) {
                        return false;
                    }
                    l[i][i] = d.sqrt();
                } else {
                    l[i][j] = (p[i][j] - s) / l[j][j];
                }
            }
        }
        true
    }
}

/// Advances the state one frame under constant velocity: `P = F P F' + Q`.
pub fn kf_predict<T: Scalar>(s: &KalmanState<T>, cfg: &KalmanConfig) -> KalmanState<T> {
    let [x, vx, y, vy] = s.state;
    let p = &s.covariance;
    // F = blockdiag([[1,1],[0,1]], [[1,1],[0,1]])
    let mut fp = [[T::zero(); 4]; 4];
    for c in 0..4 {
        fp[0][c] = p[0][c] + p[1][c];
        fp[1][c] = p[1][c];
        fp[2][c] = p[2][c] + p[3][c];
        fp[3][c] = p[3][c];
    }
    let mut out = [[T::zero(); 4]; 4];
    for r in 0..4 {
        out[r][0] = fp[r][0] + fp[r][1];
        out[r][1] = fp[r][1];
        out[r][2] = fp[r][2] + fp[r][3];
        out[r][3] = fp[r][3];
    }
    let (ql, qv) = (T::lit(cfg.motion_noise.0), T::lit(cfg.motion_noise.1));
    out[0][0] = out[0][0] + ql;
    out[1][1] = out[1][1] + qv;
    out[2][2] = out[2][2] + ql;
    out[3][3] = out[3][3] + qv;
    KalmanState {
        state: [x + vx, vx, y + vy, vy],
        covariance: out,
    }
}

/// Kalman correction with a position-only measurement and `R = r I`.
pub fn kf_update<T: Scalar>(s: &KalmanState<T>, z: (T, T), cfg: &KalmanConfig) -> Result<KalmanState<T>> {
    if !(z.0.is_finite() && z.1.is_finite()) {
        return Err(Error::Parameter("measurement must be finite".into()));
    }
    let p = &s.covariance;
    let r = T::lit(cfg.measurement_noise);
    // H selects rows 0 and 2.
    let s00 = p[0][0] + r;
    let s01 = p[0][2];
    let s10 = p[2][0];
    let s11 = p[2][2] + r;
    let det = s00 * s11 - s01 * s10;
    let (i00, i01, i10, i11) = (s11 / det, -s01 / det, -s10 / det, s00 / det);
    // K = P H' S^-1, 4x2
    let mut k = [[T::zero(); 2]; 4];
    for (row, kr) in k.iter_mut().enumerate() {
        let (a, b) = (p[row][0], p[row][2]);
        kr[0] = a * i00 + b * i10;
        kr[1] = a * i01 + b * i11;
    }
    let innov = (z.0 - s.state[0], z.1 - s.state[2]);
    let mut state = s.state;
    for (i, st) in state.iter_mut().enumerate() {
        *st = *st + k[i][0] * innov.0 + k[i][1] * innov.1;
    }
    // P' = (I - K H) P, then symmetrised
    let mut np = [[T::zero(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            np[i][j] = p[i][j] - (k[i][0] * p[0][j] + k[i][1] * p[2][j]);
        }
    }
    let half = T::lit(0.5);
    for i in 0..4 {
        for j in (i + 1)..4 {
            let m = (np[i][j] + np[j][i]) * half;
            np[i][j] = m;
            np[j][i] = m;
        }
    }
    Ok(KalmanState {
        state,
        covariance: np,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Cost of leaving a track or a detection unassigned, in pixels.
    pub non_assignment_cost: f64,
    pub delete_after_invisible: u32,
    pub confirm_after_visible: u32,
    /// Unconfirmed tracks seen in fewer than this fraction of their frames are dropped.
    pub min_visibility_ratio: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            non_assignment_cost: 30.0,
            delete_after_invisible: 5,
            confirm_after_visible: 3,
            min_visibility_ratio: 0.6,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.non_assignment_cost > 0.0)
            || self.delete_after_invisible == 0
            || self.confirm_after_visible == 0
            || !(self.min_visibility_ratio > 0.0 && self.min_visibility_ratio <= 1.0)
        {
            return param("tracker settings must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T = f64> {
    pub id: u64,
    pub kf: KalmanState<T>,
    pub age: u32,
    pub total_visible: u32,
    pub consecutive_invisible: u32,
    pub history: Vec<(Millis, (T, T))>,
    pub bbox: Option<Rect<f64>>,
}

impl<T: Scalar> Track<T> {
    pub fn is_confirmed(&self, cfg: &TrackerConfig) -> bool {
        self.total_visible >= cfg.confirm_after_visible
    }

    pub fn visibility(&self) -> f64 {
        if self.age == 0 {
            0.0
        } else {
            self.total_visible as f64 / self.age as f64
        }
    }

    pub fn snapshot(&self) -> TrackSnapshot {
        let (x, y) = self.kf.position();
        let (vx, vy) = self.kf.velocity();
        TrackSnapshot {
            id: self.id,
            x: x.as_f64(),
            y: y.as_f64(),
            vx: vx.as_f64(),
            vy: vy.as_f64(),
            age: self.age,
            visible: self.total_visible,
            history_len: self.history.len(),
        }
    }
}

/// Serialisable view of a track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSnapshot {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub age: u32,
    pub visible: u32,
    pub history_len: usize,
}

#[derive(Debug, Clone)]
pub struct Tracker<T = f64> {
    cfg: TrackerConfig,
    kalman: KalmanConfig,
    tracks: Vec<Track<T>>,
    next_id: u64,
    last_t: Option<Millis>,
}

impl<T: Scalar> Tracker<T> {
    pub fn new(cfg: TrackerConfig, kalman: KalmanConfig) -> Result<Self> {
        cfg.validate()?;
        kalman.validate()?;
        Ok(Tracker {
            cfg,
            kalman,
            tracks: Vec::new(),
            next_id: 1,
            last_t: None,
        })
    }

    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn step_blobs(&mut self, blobs: &[Blob], t: Millis) -> Result<Option<Track<T>>> {
        let dets: Vec<(T, T)> = blobs
            .iter()
            .map(|b| (T::lit(b.centroid.0), T::lit(b.centroid.1)))
            .collect();
        let boxes: Vec<Option<Rect<f64>>> = blobs.iter().map(|b| Some(b.bbox)).collect();
        self.step_inner(&dets, &boxes, t)
    }

    /// One frame: predict, assign, update, age, prune, spawn; returns the
    /// confirmed track with the longest history (older id on ties).
    pub fn step(&mut self, detections: &[(T, T)], t: Millis) -> Result<Option<Track<T>>> {
        self.step_inner(detections, &vec![None; detections.len()], t)
    }

    fn step_inner(&mut self, dets: &[(T, T)], boxes: &[Option<Rect<f64>>], t: Millis) -> Result<Option<Track<T>>> {
        if self.last_t.is_some_and(|last| t < last) {
            return param(format!("frame time {t} went backwards"));
        }
        self.last_t = Some(t);
        for tr in &mut self.tracks {
            tr.kf = kf_predict(&tr.kf, &self.kalman);
        }
        let predicted: Vec<(T, T)> = self.tracks.iter().map(|tr| tr.kf.position()).collect();
        let a = assign(&predicted, dets, T::lit(self.cfg.non_assignment_cost));
        for &(ti, di) in &a.matches {
            let tr = &mut self.tracks[ti];
            tr.kf = kf_update(&tr.kf, dets[di], &self.kalman)?;
            tr.age += 1;
            tr.total_visible += 1;
            tr.consecutive_invisible = 0;
            if boxes[di].is_some() {
                tr.bbox = boxes[di];
            }
        }
        for &ti in &a.unmatched_tracks {
            let tr = &mut self.tracks[ti];
            tr.age += 1;
            tr.consecutive_invisible += 1;
        }
        for tr in &mut self.tracks {
            tr.history.push((t, tr.kf.position()));
        }
        let cfg = self.cfg;
        self.tracks.retain(|tr| {
            if tr.consecutive_invisible >= cfg.delete_after_invisible {
                return false;
            }
            tr.is_confirmed(&cfg) || tr.visibility() >= cfg.min_visibility_ratio
        });
        for &di in &a.unmatched_detections {
            let (x, y) = dets[di];
            self.tracks.push(Track {
                id: self.next_id,
                kf: KalmanState::at(x, y, &self.kalman),
                age: 1,
                total_visible: 1,
                consecutive_invisible: 0,
                history: vec![(t, (x, y))],
                bbox: boxes[di],
            });
            self.next_id += 1;
        }
        Ok(self.best_track().cloned())
    }

    pub fn best_track(&self) -> Option<&Track<T>> {
        self.tracks
            .iter()
            .filter(|tr| tr.is_confirmed(&self.cfg))
            .min_by(|a, b| b.history.len().cmp(&a.history.len()).then(a.id.cmp(&b.id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> KalmanConfig {
        KalmanConfig::default()
    }

    #[test]
    fn predict_cases() {
        let mut s = KalmanState::<f64>::at(0.0, 0.0, &cfg());
        s.state[1] = 2.0;
        assert_eq!(kf_predict(&s, &cfg()).position(), (2.0, 0.0));
        let still = KalmanState::<f64>::at(3.0, 4.0, &cfg());
        let p = kf_predict(&still, &cfg());
        assert_eq!(p.position(), (3.0, 4.0));
        assert!(p.covariance_trace() > still.covariance_trace() + 200.0 - 1e-9);
        let mut s = KalmanState::<f64>::at(0.0, 0.0, &cfg());
        s.state = [0.0, 1.0, 0.0, 1.0];
        for _ in 0..7 {
            s = kf_predict(&s, &cfg());
        }
        assert_eq!(s.position(), (7.0, 7.0));
    }

    #[test]
    fn zero_innovation_update() {
        let s = kf_predict(&KalmanState::<f64>::at(5.0, 6.0, &cfg()), &cfg());
        let u = kf_update(&s, (5.0, 6.0), &cfg()).unwrap();
        assert_eq!(u.position(), (5.0, 6.0));
        assert!(u.covariance_trace() < s.covariance_trace());
        assert!(kf_update(&s, (f64::NAN, 0.0), &cfg()).is_err());
    }

    #[test]
    fn converges_to_constant_measurement() {
        let mut s = KalmanState::<f64>::at(-40.0, 90.0, &cfg());
        for _ in 0..50 {
            s = kf_update(&kf_predict(&s, &cfg()), (10.0, 10.0), &cfg()).unwrap();
            assert!(s.covariance_is_pd());
        }
        let (x, y) = s.position();
        assert!((x - 10.0).abs() < 0.1 && (y - 10.0).abs() < 0.1, "{x} {y}");
    }

    #[test]
    fn tracker_lifecycle() {
        let mut tr = Tracker::<f64>::new(TrackerConfig::default(), cfg()).unwrap();
        assert!(tr.step(&[(10.0, 10.0)], 0).unwrap().is_none());
        assert_eq!(tr.tracks().len(), 1);
        let mut tr = Tracker::<f64>::new(TrackerConfig::default(), cfg()).unwrap();
        let mut best = None;
        for k in 0..10 {
            best = tr.step(&[(k as f64, 0.0)], k * 33).unwrap();
        }
        let best = best.expect("confirmed");
        assert_eq!(tr.tracks().len(), 1);
        assert!((best.kf.velocity().0 - 1.0).abs() < 0.2, "{:?}", best.kf.velocity());
        let id = best.id;
        for k in 10..14 {
            tr.step(&[], k * 33).unwrap();
            assert_eq!(tr.tracks()[0].id, id);
        }
        tr.step(&[], 14 * 33).unwrap();
        assert!(tr.tracks().is_empty());
        assert!(tr.step(&[], 0).is_err());
    }

    #[test]
    fn spurious_detection_dropped_quickly() {
        let mut tr = Tracker::<f64>::new(TrackerConfig::default(), cfg()).unwrap();
        tr.step(&[(50.0, 50.0)], 0).unwrap();
        tr.step(&[], 1).unwrap();
        assert!(tr.tracks().is_empty());
    }

    #[test]
    fn ids_not_recycled_and_best_prefers_longest() {
        let mut tr = Tracker::<f64>::new(TrackerConfig::default(), cfg()).unwrap();
        for k in 0..5 {
            tr.step(&[(0.0, 0.0)], k).unwrap();
        }
        for k in 5..9 {
            tr.step(&[(0.0, 0.0), (200.0, 200.0)], k).unwrap();
        }
        let best = tr.best_track().unwrap();
        assert_eq!(best.id, 1);
        let ids: Vec<u64> = tr.tracks().iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![1, 2]);
    }

    #[test]
    fn f32_filter_runs() {
        let k = cfg();
        let mut s = KalmanState::<f32>::at(0.0, 0.0, &k);
        for i in 0..30 {
            s = kf_update(&kf_predict(&s, &k), (i as f32, 2.0 * i as f32), &k).unwrap();
        }
        assert!((s.velocity().0 - 1.0).abs() < 0.05);
        assert!(s.covariance_is_pd());
    }
}
