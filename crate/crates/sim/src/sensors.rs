//! Stochastic stand-ins for the trained detectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use skywatch_core::geometry::{dri_bin, pixel_width, CameraModel, DriBin, DriConfig};
use skywatch_core::{AngleOffset, Detection, Millis, Rect, SensorId, TargetClass};

use crate::scenario::{CameraSensorModel, MeanStd};

/// Independent generator for one consumer of randomness. Each stream id
/// gets its own sequence, so adding a consumer leaves the others untouched.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn stream_id(sensor: SensorId) -> u64 {
    match sensor {
        SensorId::IRcam => 1,
        SensorId::Vcam => 2,
        SensorId::Fcam => 3,
        SensorId::Audio => 4,
        SensorId::ADSB => 5,
    }
}

/// Normal draw restricted to [0, 1] by rejection, falling back to clamping.
pub fn truncated_normal(rng: &mut ChaCha8Rng, ms: MeanStd) -> f64 {
    if ms.std <= 0.0 {
        return ms.mean.clamp(0.0, 1.0);
    }
    let n = Normal::new(ms.mean, ms.std).expect("validated std");
    for _ in 0..64 {
        let v = n.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
    ms.mean.clamp(0.0, 1.0)
}

/// Index drawn from a discrete distribution.
pub fn categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Where a target lands in a camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub bbox: Rect<f64>,
    pub pixel_width: f64,
    pub bin: DriBin,
}

/// Projects a target at a boresight offset and distance into the image.
pub fn project_target(cam: &CameraModel, offset: AngleOffset, distance: f64, size_m: f64) -> Option<Placement> {
    let (w, h) = (cam.width as f64, cam.height as f64);
    let cx = w / 2.0 + offset.azimuth_offset * w / cam.hfov;
    let cy = h / 2.0 - offset.elevation_offset * h / cam.vfov;
    if !(0.0..=w).contains(&cx) || !(0.0..=h).contains(&cy) {
        return None;
    }
    let pw = pixel_width(size_m, distance, cam).ok()?;
    let side = pw.max(1.0);
    Some(Placement {
        bbox: Rect::from_center(cx, cy, side, side).ok()?,
        pixel_width: pw,
        bin: dri_bin(pw, &DriConfig::default()),
    })
}

/// One detector decision for one target in view.
pub fn emit_detection(
    model: &CameraSensorModel,
    sensor: SensorId,
    true_class: TargetClass,
    proj: &Placement,
    t: Millis,
    rng: &mut ChaCha8Rng,
) -> Option<Detection> {
    let b = proj.bin.index();
    let gate: f64 = rng.random();
    if gate >= model.detect_prob[b] {
        return None;
    }
    let row = true_class.column()?;
    let col = categorical(rng, &model.confusion[b][row]);
    let reported = TargetClass::from_column(col)?;
    let confidence = truncated_normal(rng, model.confidence[row][col]);
    let noise = model.bbox_noise;
    let (mut cx, mut cy) = proj.bbox.center();
    let mut side = proj.bbox.w;
    if noise.center_sigma > 0.0 {
        let n = Normal::new(0.0, noise.center_sigma).expect("sigma");
        cx += n.sample(rng);
        cy += n.sample(rng);
    }
    if noise.size_sigma > 0.0 {
        let n = Normal::new(0.0, noise.size_sigma).expect("sigma");
        side += n.sample(rng);
    }
    let cam = &model.camera;
    let cx = cx.clamp(0.0, cam.width as f64);
    let cy = cy.clamp(0.0, cam.height as f64);
    let bbox = Rect::from_center(cx, cy, side.max(1.0), side.max(1.0)).ok()?;
    Detection::new(sensor, reported, confidence, Some(bbox), t).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn proj() -> Placement {
        Placement {
            bbox: Rect::from_center(160.0, 128.0, 10.0, 10.0).unwrap(),
            pixel_width: 10.0,
            bin: DriBin::Medium,
        }
    }

    #[test]
    fn perfect_model_reports_truth() {
        let m = CameraSensorModel::perfect(CameraModel::infrared(), 0.9);
        let mut rng = stream(1, 1);
        for class in TargetClass::FUSED {
            let d = emit_detection(&m, SensorId::IRcam, class, &proj(), 5, &mut rng).unwrap();
            assert_eq!(d.class, class);
            assert_eq!(d.confidence, 0.9);
            assert_eq!(d.bbox, Some(proj().bbox));
        }
    }

    #[test]
    fn zero_detect_prob_never_fires() {
        let mut m = CameraSensorModel::infrared();
        m.detect_prob = [0.0; 3];
        let mut rng = stream(2, 1);
        assert!((0..1000).all(|_| emit_detection(&m, SensorId::IRcam, TargetClass::Drone, &proj(), 0, &mut rng).is_none()));
    }

    #[test]
    fn confusion_fraction() {
        let mut m = CameraSensorModel::perfect(CameraModel::infrared(), 0.8);
        m.confusion[DriBin::Medium.index()][2] = [0.0, 0.3, 0.7, 0.0];
        let mut rng = stream(3, 1);
        let n = 10_000;
        let birds = (0..n)
            .filter(|_| {
                emit_detection(&m, SensorId::IRcam, TargetClass::Drone, &proj(), 0, &mut rng).unwrap().class
                    == TargetClass::Bird
            })
            .count();
        let frac = birds as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.02, "{frac}");
    }

    #[test]
    fn truncated_normal_in_unit_interval() {
        let mut rng = stream(4, 1);
        for _ in 0..1000 {
            let v = truncated_normal(&mut rng, MeanStd::new(0.95, 0.3));
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn streams_are_independent() {
        let a: Vec<u32> = (0..4).map(|_| stream(9, 1).random()).collect();
        let mut s1 = stream(9, 1);
        let mut s2 = stream(9, 2);
        let x: u32 = s1.random();
        let y: u32 = s2.random();
        assert_eq!(a[0], x);
        assert_ne!(x, y);
    }

    #[test]
    fn projection_centre_and_bins() {
        let cam = CameraModel::infrared();
        let p = project_target(&cam, AngleOffset::new(0.0, 0.0), 20.0, 0.5).unwrap();
        assert_eq!(p.bbox.center(), (160.0, 128.0));
        assert_eq!(p.bin, DriBin::Close);
        let far = project_target(&cam, AngleOffset::new(0.0, 0.0), 100.0, 0.5).unwrap();
        assert_eq!(far.bin, DriBin::Distant);
        assert!(project_target(&cam, AngleOffset::new(13.0, 0.0), 20.0, 0.5).is_none());
    }
}
