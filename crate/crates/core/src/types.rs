//! Shared vocabulary: classes, sensors, boxes, detections and angles.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scalar::Scalar;

/// Milliseconds on the monotonic virtual clock.
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetClass {
    Airplane,
    Bird,
    Drone,
    Helicopter,
    Background,
    NoData,
}

impl TargetClass {
    /// The four classes that have a column in the fusion matrix, in column order.
    pub const FUSED: [TargetClass; 4] = [
        TargetClass::Airplane,
        TargetClass::Bird,
        TargetClass::Drone,
        TargetClass::Helicopter,
    ];

    /// Column index in the fusion matrix, `None` for Background and NoData.
    pub fn column(self) -> Option<usize> {
        match self {
            TargetClass::Airplane => Some(0),
            TargetClass::Bird => Some(1),
            TargetClass::Drone => Some(2),
            TargetClass::Helicopter => Some(3),
            TargetClass::Background | TargetClass::NoData => None,
        }
    }

    pub fn from_column(col: usize) -> Option<TargetClass> {
        Self::FUSED.get(col).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TargetClass::Airplane => "Airplane",
            TargetClass::Bird => "Bird",
            TargetClass::Drone => "Drone",
            TargetClass::Helicopter => "Helicopter",
            TargetClass::Background => "Background",
            TargetClass::NoData => "NoData",
        }
    }
}

impl fmt::Display for TargetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "airplane" => Ok(TargetClass::Airplane),
            "bird" => Ok(TargetClass::Bird),
            "drone" => Ok(TargetClass::Drone),
            "helicopter" => Ok(TargetClass::Helicopter),
            "background" => Ok(TargetClass::Background),
            "nodata" | "no_data" => Ok(TargetClass::NoData),
            other => Err(Error::Malformed(format!("unknown class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SensorId {
    IRcam,
    Vcam,
    Audio,
    ADSB,
    Fcam,
}

impl SensorId {
    pub fn is_vision(self) -> bool {
        matches!(self, SensorId::IRcam | SensorId::Vcam)
    }

    /// Classes this sensor is allowed to emit. Fcam emits pointing angles only.
    pub fn allowed_classes(self) -> &'static [TargetClass] {
        use TargetClass::*;
        match self {
            SensorId::IRcam | SensorId::Vcam => &[Airplane, Bird, Drone, Helicopter],
            SensorId::Audio => &[Drone, Helicopter, Background],
            SensorId::ADSB => &[Airplane, Drone, Helicopter, NoData],
            SensorId::Fcam => &[],
        }
    }

    pub fn may_emit(self, class: TargetClass) -> bool {
        self.allowed_classes().contains(&class)
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for SensorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ircam" | "ir" => Ok(SensorId::IRcam),
            "vcam" | "v" => Ok(SensorId::Vcam),
            "audio" => Ok(SensorId::Audio),
            "adsb" | "ads-b" => Ok(SensorId::ADSB),
            "fcam" => Ok(SensorId::Fcam),
            other => Err(Error::Malformed(format!("unknown sensor '{other}'"))),
        }
    }
}

/// Axis-aligned box in pixels, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
#[serde(try_from = "RectFields<T>")]
pub struct Rect<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

#[derive(Deserialize)]
struct RectFields<T> {
    x: T,
    y: T,
    w: T,
    h: T,
}

impl<T: Scalar> TryFrom<RectFields<T>> for Rect<T> {
    type Error = Error;

    fn try_from(r: RectFields<T>) -> Result<Self> {
        Rect::new(r.x, r.y, r.w, r.h)
    }
}

impl<T: Scalar> Rect<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return param("box coordinates must be finite");
        }
        if w <= T::zero() || h <= T::zero() {
            return param(format!("box size must be positive, got {w}x{h}"));
        }
        Ok(Rect { x, y, w, h })
    }

    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Result<Self> {
        let two = T::lit(2.0);
        Rect::new(cx - w / two, cy - h / two, w, h)
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        (self.x + self.w / two, self.y + self.h / two)
    }

    pub fn scaled(&self, k: T) -> Result<Self> {
        Rect::new(self.x * k, self.y * k, self.w * k, self.h * k)
    }

    pub fn intersection_area(&self, other: &Rect<T>) -> T {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= T::zero() || iy <= T::zero() {
            T::zero()
        } else {
            ix * iy
        }
    }
}

/// Intersection over union of two valid boxes.
pub fn iou<T: Scalar>(a: &Rect<T>, b: &Rect<T>) -> T {
    if a == b {
        return T::one();
    }
    let inter = a.intersection_area(b);
    if inter == T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one()).max(T::zero())
}

/// One sensor's classified observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionFields")]
pub struct Detection {
    pub sensor: SensorId,
    pub class: TargetClass,
    pub confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect<f64>>,
    pub t: Millis,
}

#[derive(Deserialize)]
struct DetectionFields {
    sensor: SensorId,
    class: TargetClass,
    confidence: f64,
    #[serde(default)]
    bbox: Option<Rect<f64>>,
    t: Millis,
}

impl TryFrom<DetectionFields> for Detection {
    type Error = Error;

    fn try_from(d: DetectionFields) -> Result<Self> {
        Detection::new(d.sensor, d.class, d.confidence, d.bbox, d.t)
    }
}

impl Detection {
    pub fn new(
        sensor: SensorId,
        class: TargetClass,
        confidence: f64,
        bbox: Option<Rect<f64>>,
        t: Millis,
    ) -> Result<Self> {
        if !sensor.may_emit(class) {
            return Err(Error::ClassNotAllowed { sensor, class });
        }
        if !(0.0..=1.0).contains(&confidence) {
            return param(format!("confidence {confidence} outside [0, 1]"));
        }
        if sensor.is_vision() != bbox.is_some() {
            return param(format!(
                "{sensor} detection must {}carry a bounding box",
                if sensor.is_vision() { "" } else { "not " }
            ));
        }
        Ok(Detection {
            sensor,
            class,
            confidence,
            bbox,
            t,
        })
    }
}

/// Horizontal and vertical offset of a target from an image or boresight centre.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AngleOffset<T = f64> {
    pub azimuth_offset: T,
    pub elevation_offset: T,
}

impl<T: Scalar> AngleOffset<T> {
    pub fn new(azimuth_offset: T, elevation_offset: T) -> Self {
        AngleOffset {
            azimuth_offset,
            elevation_offset,
        }
    }
}
