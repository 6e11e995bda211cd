//! Synthetic fish-eye frames for the foreground pipeline.

use rand::Rng;
use skywatch_core::geometry::{pixel_width, CameraModel};
use skywatch_core::vision::gaussian_blur;
use skywatch_core::GrayImage;

use crate::scenario::FisheyeModel;
use crate::sensors::stream;

const TEXTURE_STREAM: u64 = 100;
const GROUND_LEVEL: f64 = 0.2;

/// A target as seen from the fish-eye: azimuth relative to the system
/// orientation, elevation, distance and size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisheyeTarget {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub size_m: f64,
}

/// Renders full frames: the sky band on top, ground below, so the
/// foreground stage's upper-half crop returns exactly the sky band.
#[derive(Debug, Clone)]
pub struct FisheyeRenderer {
    cam: CameraModel,
    intensity: f64,
    background: GrayImage,
}

impl FisheyeRenderer {
    pub fn new(model: &FisheyeModel, seed: u64) -> skywatch_core::Result<Self> {
        let cam = model.camera;
        let (w, h) = (cam.width, cam.height);
        let mut rng = stream(seed, TEXTURE_STREAM);
        let noise = GrayImage::from_fn(w, h, |_, _| rng.random::<f64>());
        let smooth = gaussian_blur(&noise, 2.0)?;
        let (lo, hi) = smooth
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let span = (hi - lo).max(1e-12);
        let amp = model.background_amplitude;
        let mean = model.background_mean;
        let background = GrayImage::from_fn(w, 2 * h, |x, y| {
            if y < h {
                let v = (smooth[y * w + x] - lo) / span - 0.5;
                (mean + amp * v).clamp(0.0, 1.0)
            } else {
                GROUND_LEVEL
            }
        });
        Ok(FisheyeRenderer {
            cam,
            intensity: model.target_intensity,
            background,
        })
    }

    pub fn camera(&self) -> &CameraModel {
        &self.cam
    }

    pub fn background(&self) -> &GrayImage {
        &self.background
    }

    /// Pixel position in the sky band of a direction, or `None` outside it.
    pub fn to_pixel(&self, azimuth: f64, elevation: f64) -> Option<(f64, f64)> {
        let (w, h) = (self.cam.width as f64, self.cam.height as f64);
        let x = w / 2.0 + azimuth * w / self.cam.hfov;
        let y = h - elevation * h / self.cam.vfov;
        ((0.0..w).contains(&x) && (0.0..=h).contains(&y)).then_some((x, y))
    }

    /// Inverse of [`FisheyeRenderer::to_pixel`], returning (azimuth, elevation).
    pub fn to_angles(&self, x: f64, y: f64) -> (f64, f64) {
        let (w, h) = (self.cam.width as f64, self.cam.height as f64);
        ((x - w / 2.0) * self.cam.hfov / w, (h - y) * self.cam.vfov / h)
    }

    pub fn disc_radius(&self, t: &FisheyeTarget) -> f64 {
        let pw = pixel_width(t.size_m, t.distance, &self.cam).unwrap_or(0.0);
        (pw / 2.0).max(2.5)
    }

    pub fn render(&self, targets: &[FisheyeTarget]) -> GrayImage {
        let mut img = self.background.clone();
        for t in targets {
            let Some((cx, cy)) = self.to_pixel(t.azimuth, t.elevation) else {
                continue;
            };
            let r = self.disc_radius(t);
            let x0 = (cx - r).floor().max(0.0) as usize;
            let y0 = (cy - r).floor().max(0.0) as usize;
            let x1 = ((cx + r).ceil() as usize).min(img.width() - 1);
            let y1 = ((cy + r).ceil() as usize).min(self.cam.height - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let dx = x as f64 + 0.5 - cx;
                    let dy = y as f64 + 0.5 - cy;
                    if dx * dx + dy * dy <= r * r {
                        img.set(x, y, self.intensity);
                    }
                }
            }
        }
        img
    }
}
