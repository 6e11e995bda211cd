//! Position and pointing math: NMEA fixes, local ENU geometry, field-of-view
//! tests, pixel subtense with DRI binning, and radar range scaling.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scalar::Scalar;
use crate::types::AngleOffset;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const FEET_TO_METERS: f64 = 0.3048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition<T = f64> {
    pub lat: T,
    pub lon: T,
    /// Metres above mean sea level.
    pub alt: T,
}

impl<T: Scalar> GeoPosition<T> {
    pub fn new(lat: T, lon: T, alt: T) -> Result<Self> {
        if !(lat.is_finite() && lon.is_finite() && alt.is_finite()) {
            return param("position must be finite");
        }
        if lat.abs() > T::lit(90.0) || lon.abs() > T::lit(180.0) {
            return param(format!("lat/lon out of range: {lat}, {lon}"));
        }
        Ok(GeoPosition { lat, lon, alt })
    }
}

/// Where the system stands and where its platform points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemPose<T = f64> {
    pub position: GeoPosition<T>,
    /// Degrees clockwise from true north of the platform's zero pan.
    pub orientation: T,
    pub pan: T,
    pub tilt: T,
}

impl<T: Scalar> SystemPose<T> {
    pub fn new(position: GeoPosition<T>, orientation: T) -> Result<Self> {
        if !(T::zero()..T::lit(360.0)).contains(&orientation) {
            return param(format!("orientation {orientation} outside [0, 360)"));
        }
        Ok(SystemPose {
            position,
            orientation,
            pan: T::zero(),
            tilt: T::zero(),
        })
    }

    pub fn with_pan_tilt(mut self, pan: T, tilt: T) -> Self {
        self.pan = pan;
        self.tilt = tilt;
        self
    }

    /// Absolute azimuth of the platform boresight, in `[0, 360)`.
    pub fn boresight_azimuth(&self) -> T {
        wrap_360(self.orientation + self.pan)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Projection {
    /// Pinhole lens: subtense follows `tan`.
    #[default]
    Rectilinear,
    /// Pixel position linear in angle (fish-eye).
    Equidistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel<T = f64> {
    pub hfov: T,
    pub vfov: T,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub projection: Projection,
}

impl<T: Scalar> CameraModel<T> {
    pub fn new(hfov: T, vfov: T, width: usize, height: usize) -> Result<Self> {
        if !(hfov > T::zero() && hfov <= T::lit(360.0)) || !(vfov > T::zero() && vfov <= T::lit(180.0))
        {
            return param(format!("field of view {hfov}x{vfov} out of range"));
        }
        if width == 0 || height == 0 {
            return param("camera resolution must be non-zero");
        }
        Ok(CameraModel {
            hfov,
            vfov,
            width,
            height,
            projection: Projection::Rectilinear,
        })
    }

    /// Thermal infrared camera, 320x256 pixels.
    pub fn infrared() -> Self {
        CameraModel {
            hfov: T::lit(24.0),
            vfov: T::lit(19.0),
            width: 320,
            height: 256,
            projection: Projection::Rectilinear,
        }
    }

    /// Visible camera, zoom matched to the infrared field of view, frames resized to 640x512.
    pub fn visible() -> Self {
        CameraModel {
            hfov: T::lit(24.0),
            vfov: T::lit(19.0),
            width: 640,
            height: 512,
            projection: Projection::Rectilinear,
        }
    }

    /// Upper (sky) half of the fish-eye camera after lens-margin trimming.
    pub fn fisheye() -> Self {
        CameraModel {
            hfov: T::lit(180.0),
            vfov: T::lit(90.0),
            width: 1024,
            height: 384,
            projection: Projection::Equidistant,
        }
    }

    pub fn with_projection(mut self, projection: Projection) -> Self {
        self.projection = projection;
        self
    }

    pub fn pixels_per_degree_h(&self) -> T {
        T::from_usize_lossy(self.width) / self.hfov
    }

    pub fn pixels_per_degree_v(&self) -> T {
        T::from_usize_lossy(self.height) / self.vfov
    }
}

/// Wraps an angle into `[0, 360)`.
pub fn wrap_360<T: Scalar>(deg: T) -> T {
    let full = T::lit(360.0);
    let r = deg % full;
    let r = if r < T::zero() { r + full } else { r };
    if r >= full {
        T::zero()
    } else {
        r
    }
}

/// Wraps an angle into `(-180, 180]`.
pub fn wrap_180<T: Scalar>(deg: T) -> T {
    let r = wrap_360(deg);
    if r > T::lit(180.0) {
        r - T::lit(360.0)
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NmeaFix {
    Fix(GeoPosition<f64>),
    NoFix,
}

fn nmea_checksum_ok(sentence: &str) -> Result<&str> {
    let body = sentence
        .strip_prefix('$')
        .ok_or_else(|| Error::Malformed("NMEA sentence must start with '$'".into()))?;
    let (payload, cs) = body
        .rsplit_once('*')
        .ok_or_else(|| Error::Malformed("NMEA sentence lacks checksum".into()))?;
    let expected = u8::from_str_radix(cs.trim(), 16)
        .map_err(|_| Error::Malformed(format!("bad checksum field '{cs}'")))?;
    let actual = payload.bytes().fold(0u8, |acc, b| acc ^ b);
    if actual != expected {
        return Err(Error::Checksum);
    }
    Ok(payload)
}

/// `ddmm.mmmm` plus hemisphere letter into signed decimal degrees.
fn nmea_angle(value: &str, hemi: &str, deg_digits: usize) -> Result<Option<f64>> {
    if value.is_empty() {
        return Ok(None);
    }
    if value.len() < deg_digits + 2 {
        return Err(Error::Malformed(format!("bad NMEA angle '{value}'")));
    }
    let bad = || Error::Malformed(format!("bad NMEA angle '{value}'"));
    let deg: f64 = value[..deg_digits].parse().map_err(|_| bad())?;
    let min: f64 = value[deg_digits..].parse().map_err(|_| bad())?;
    let v = deg + min / 60.0;
    match hemi {
        "N" | "E" => Ok(Some(v)),
        "S" | "W" => Ok(Some(-v)),
        _ => Err(Error::Malformed(format!("bad hemisphere '{hemi}'"))),
    }
}

/// Parses a GGA or RMC sentence. RMC carries no altitude and yields `alt = 0`.
pub fn parse_nmea(sentence: &str) -> Result<NmeaFix> {
    let payload = nmea_checksum_ok(sentence.trim())?;
    let fields: Vec<&str> = payload.split(',').collect();
    let kind = fields[0];
    if kind.len() < 5 {
        return Err(Error::Malformed(format!("bad sentence id '{kind}'")));
    }
    let field = |i: usize| fields.get(i).copied().unwrap_or("");
    let (lat, lon, alt) = match &kind[kind.len() - 3..] {
        "GGA" => {
            if field(6).is_empty() || field(6) == "0" {
                return Ok(NmeaFix::NoFix);
            }
            let alt = if field(9).is_empty() {
                0.0
            } else {
                field(9)
                    .parse()
                    .map_err(|_| Error::Malformed(format!("bad altitude '{}'", field(9))))?
            };
            (nmea_angle(field(2), field(3), 2)?, nmea_angle(field(4), field(5), 3)?, alt)
        }
        "RMC" => {
            if field(2) != "A" {
                return Ok(NmeaFix::NoFix);
            }
            (nmea_angle(field(3), field(4), 2)?, nmea_angle(field(5), field(6), 3)?, 0.0)
        }
        other => return Err(Error::Malformed(format!("unsupported sentence '{other}'"))),
    };
    match (lat, lon) {
        (Some(lat), Some(lon)) => Ok(NmeaFix::Fix(GeoPosition::new(lat, lon, alt)?)),
        _ => Ok(NmeaFix::NoFix),
    }
}

/// Local east/north/up offset of `target` from `origin` (equirectangular).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Enu<T = f64> {
    pub east: T,
    pub north: T,
    pub up: T,
}

pub fn enu_offset<T: Scalar>(origin: &GeoPosition<T>, target: &GeoPosition<T>) -> Enu<T> {
    let r = T::lit(EARTH_RADIUS_M);
    let dlat = (target.lat - origin.lat).to_radians();
    let dlon = wrap_180(target.lon - origin.lon).to_radians();
    Enu {
        east: dlon * r * origin.lat.to_radians().cos(),
        north: dlat * r,
        up: target.alt - origin.alt,
    }
}

/// Inverse of [`enu_offset`].
pub fn offset_position<T: Scalar>(origin: &GeoPosition<T>, enu: &Enu<T>) -> GeoPosition<T> {
    let r = T::lit(EARTH_RADIUS_M);
    let lat = origin.lat + (enu.north / r).to_degrees();
    let lon = origin.lon + (enu.east / (r * origin.lat.to_radians().cos())).to_degrees();
    GeoPosition {
        lat,
        lon: wrap_180(lon),
        alt: origin.alt + enu.up,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeGeometry<T = f64> {
    pub azimuth: T,
    pub elevation: T,
    pub sloping_distance: T,
    pub horizontal_distance: T,
}

/// Azimuth/elevation/distances from an ENU offset.
pub fn geometry_from_enu<T: Scalar>(enu: &Enu<T>) -> Result<RelativeGeometry<T>> {
    let horizontal = enu.east.hypot(enu.north);
    let sloping = horizontal.hypot(enu.up);
    if sloping == T::zero() {
        return param("target coincides with the system; azimuth undefined");
    }
    Ok(RelativeGeometry {
        azimuth: wrap_360(enu.east.atan2(enu.north).to_degrees()),
        elevation: enu.up.atan2(horizontal).to_degrees(),
        sloping_distance: sloping,
        horizontal_distance: horizontal,
    })
}

pub fn relative_geometry<T: Scalar>(
    sys: &SystemPose<T>,
    target: &GeoPosition<T>,
) -> Result<RelativeGeometry<T>> {
    geometry_from_enu(&enu_offset(&sys.position, target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovCheck<T = f64> {
    pub inside: bool,
    pub offset: AngleOffset<T>,
}

/// Whether an absolute `(az, el)` direction falls inside the camera frame.
pub fn fov_contains<T: Scalar>(sys: &SystemPose<T>, cam: &CameraModel<T>, az: T, el: T) -> FovCheck<T> {
    let two = T::lit(2.0);
    let d_az = wrap_180(az - (sys.orientation + sys.pan));
    let d_el = el - sys.tilt;
    FovCheck {
        inside: d_az.abs() <= cam.hfov / two && d_el.abs() <= cam.vfov / two,
        offset: AngleOffset::new(d_az, d_el),
    }
}

/// Absolute azimuths of the left and right field-of-view edges (the dashed
/// lines on the plan display).
pub fn fov_edges<T: Scalar>(sys: &SystemPose<T>, cam: &CameraModel<T>) -> (T, T) {
    let half = cam.hfov / T::lit(2.0);
    let b = sys.boresight_azimuth();
    (wrap_360(b - half), wrap_360(b + half))
}

/// Plan-position-indicator coordinates in the unit disc, north up, east right.
/// `None` when the target is beyond `max_range`.
pub fn ppi_point<T: Scalar>(azimuth: T, distance: T, max_range: T) -> Option<(T, T)> {
    if distance > max_range || max_range <= T::zero() {
        return None;
    }
    let r = distance / max_range;
    let a = azimuth.to_radians();
    Some((r * a.sin(), r * a.cos()))
}

/// Width in pixels of a target of `target_width` metres at `distance` metres.
pub fn pixel_width<T: Scalar>(target_width: T, distance: T, cam: &CameraModel<T>) -> Result<T> {
    if !(distance > T::zero()) {
        return param(format!("distance must be positive, got {distance}"));
    }
    let two = T::lit(2.0);
    let width = T::from_usize_lossy(cam.width);
    match cam.projection {
        Projection::Rectilinear => {
            if cam.hfov >= T::lit(180.0) {
                return param("rectilinear camera needs hfov < 180");
            }
            Ok(target_width * width / (two * distance * (cam.hfov / two).to_radians().tan()))
        }
        Projection::Equidistant => {
            let subtense = (two * (target_width / (two * distance)).atan()).to_degrees();
            Ok(subtense * width / cam.hfov)
        }
    }
}

/// Distance at which a rectilinear camera sees `target_width` as `pixels` wide.
pub fn distance_for_pixel_width<T: Scalar>(target_width: T, pixels: T, cam: &CameraModel<T>) -> Result<T> {
    if !(pixels > T::zero()) || cam.projection != Projection::Rectilinear {
        return param("inversion needs a positive pixel width and a rectilinear camera");
    }
    let two = T::lit(2.0);
    Ok(target_width * T::from_usize_lossy(cam.width) / (two * pixels * (cam.hfov / two).to_radians().tan()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DriBin {
    Close,
    Medium,
    Distant,
}

impl DriBin {
    pub const ALL: [DriBin; 3] = [DriBin::Close, DriBin::Medium, DriBin::Distant];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for DriBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "close" => Ok(DriBin::Close),
            "medium" => Ok(DriBin::Medium),
            "distant" => Ok(DriBin::Distant),
            other => Err(Error::Malformed(format!("unknown distance bin '{other}'"))),
        }
    }
}

impl std::fmt::Display for DriBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriConfig<T = f64> {
    pub identify_px: T,
    pub recognize_px: T,
}

impl<T: Scalar> Default for DriConfig<T> {
    fn default() -> Self {
        DriConfig {
            identify_px: T::lit(15.0),
            recognize_px: T::lit(5.0),
        }
    }
}

pub fn dri_bin<T: Scalar>(pixel_width: T, cfg: &DriConfig<T>) -> DriBin {
    if pixel_width >= cfg.identify_px {
        DriBin::Close
    } else if pixel_width >= cfg.recognize_px {
        DriBin::Medium
    } else {
        DriBin::Distant
    }
}

/// Detection range for a target whose radar cross section is `rcs_ratio`
/// times that of the reference target (fourth-root law).
pub fn radar_range<T: Scalar>(reference_range: T, rcs_ratio: T) -> Result<T> {
    if !(reference_range > T::zero()) || !(rcs_ratio > T::zero()) {
        return param("radar range inputs must be positive");
    }
    Ok(reference_range * rcs_ratio.powf(T::lit(0.25)))
}
