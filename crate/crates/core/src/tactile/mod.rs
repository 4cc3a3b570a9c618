//! Marker-gel tactile sensor simulator, contact gating and clip extraction.

mod clip;
pub mod dataset;
mod ssim;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use clip::{
    capture_clip, detect_contact, frame_positions, relative_depths, select_frames, ContactCriteria, TactileClip,
    CLIP_LEN,
};
pub use ssim::ssim;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::seeding::{self, stream};

/// Commanded depth increment between captured frames, mm.
pub const STEP_MM: f64 = 0.25;
pub const MAX_OFFSET_MM: f64 = 5.0;
pub const MAX_YAW_DEG: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GelConfig {
    pub width: usize,
    pub height: usize,
    pub marker_rows: usize,
    pub marker_cols: usize,
    pub marker_spacing: f64,
    pub gel_stiffness: f64,
    /// Brightening per mm of gel indentation at the contact centre.
    pub intensity_gain: f64,
    pub sensor_noise_sigma: f64,
    pub px_per_mm: f64,
    /// Contact blob width for an infinitely stiff object, px.
    pub contact_sigma_px: f64,
    /// Relative widening of the contact blob for compliant objects.
    pub contact_spread: f64,
    /// Peak marker travel per mm of gel indentation, px.
    pub marker_gain: f64,
    pub marker_falloff_px: f64,
    pub marker_radius_px: f64,
    pub marker_contrast: f64,
    pub base_intensity: f64,
    pub vignette: f64,
    /// Marker positions are tracked on the full-resolution sensor image;
    /// this is its size relative to the stored frame.
    pub tracking_scale: f64,
}

impl Default for GelConfig {
    fn default() -> Self {
        GelConfig {
            width: 64,
            height: 64,
            marker_rows: 7,
            marker_cols: 7,
            marker_spacing: 8.0,
            gel_stiffness: 150.0,
            intensity_gain: 80.0,
            sensor_noise_sigma: 1.5,
            px_per_mm: 3.0,
            contact_sigma_px: 6.0,
            contact_spread: 4.0,
            marker_gain: 24.0,
            marker_falloff_px: 14.0,
            marker_radius_px: 1.3,
            marker_contrast: 60.0,
            base_intensity: 90.0,
            vignette: 12.0,
            tracking_scale: 5.0,
        }
    }
}

impl GelConfig {
    pub fn validate(&self) -> Result<()> {
        let gw = (self.marker_cols.saturating_sub(1)) as f64 * self.marker_spacing;
        let gh = (self.marker_rows.saturating_sub(1)) as f64 * self.marker_spacing;
        if self.width < 16 || self.height < 16 {
            return Err(Error::invalid("gel image must be at least 16x16"));
        }
        if gw >= self.width as f64 || gh >= self.height as f64 || self.marker_rows * self.marker_cols == 0 {
            return Err(Error::invalid("marker grid does not fit inside the gel image"));
        }
        if !(self.gel_stiffness > 0.0)
            || !(self.sensor_noise_sigma >= 0.0)
            || !(self.px_per_mm > 0.0)
            || !(self.tracking_scale > 0.0)
        {
            return Err(Error::invalid("gel stiffness, noise and scale must be positive"));
        }
        Ok(())
    }

    /// Rest positions of the markers, row-major.
    pub fn marker_grid(&self) -> Vec<[f64; 2]> {
        let x0 = (self.width as f64 - 1.0) / 2.0 - (self.marker_cols - 1) as f64 * self.marker_spacing / 2.0;
        let y0 = (self.height as f64 - 1.0) / 2.0 - (self.marker_rows - 1) as f64 * self.marker_spacing / 2.0;
        let mut out = Vec::with_capacity(self.marker_rows * self.marker_cols);
        for r in 0..self.marker_rows {
            for c in 0..self.marker_cols {
                out.push([x0 + c as f64 * self.marker_spacing, y0 + r as f64 * self.marker_spacing]);
            }
        }
        out
    }

    /// Gel indentation for a commanded depth: two springs in series, with
    /// object stiffness k(H) = H.
    pub fn gel_indentation(&self, hardness: f64, depth: f64) -> f64 {
        depth * hardness / (hardness + self.gel_stiffness)
    }
}

/// The pressed object as the sensor sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Indenter {
    /// HA.
    pub hardness: f64,
    /// Ratio of the long to the short axis of the contact patch.
    pub aspect: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PressPose {
    pub dx: f64,
    pub dy: f64,
    pub yaw_deg: f64,
}

impl PressPose {
    pub fn validate(&self) -> Result<()> {
        if self.dx.abs() > MAX_OFFSET_MM || self.dy.abs() > MAX_OFFSET_MM {
            return Err(Error::invalid(format!("press offset ({}, {}) exceeds ±5 mm", self.dx, self.dy)));
        }
        if !(0.0..=MAX_YAW_DEG).contains(&self.yaw_deg) {
            return Err(Error::invalid(format!("yaw {} outside [0, 45]°", self.yaw_deg)));
        }
        Ok(())
    }

    pub fn random(rng: &mut impl Rng) -> PressPose {
        PressPose {
            dx: rng.gen_range(-MAX_OFFSET_MM..=MAX_OFFSET_MM),
            dy: rng.gen_range(-MAX_OFFSET_MM..=MAX_OFFSET_MM),
            yaw_deg: rng.gen_range(0.0..=MAX_YAW_DEG),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    pub image: GrayImage,
    /// Tracked marker centres in full-resolution sensor pixels.
    pub markers: Vec<[f64; 2]>,
    /// Commanded press depth at capture, mm.
    pub depth: f64,
}

impl TactileFrame {
    /// Mean Euclidean marker travel relative to `reference`.
    pub fn mean_marker_displacement(&self, reference: &TactileFrame) -> f64 {
        if self.markers.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .markers
            .iter()
            .zip(&reference.markers)
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .sum();
        s / self.markers.len() as f64
    }
}

/// A full press: the no-contact reference and frames at depths 0, 0.25, …
#[derive(Debug, Clone, PartialEq)]
pub struct PressStream {
    pub reference: TactileFrame,
    pub frames: Vec<TactileFrame>,
}

/// Noise-free sensor state for a given gel indentation.
fn render_state(gel: &GelConfig, ind: &Indenter, pose: &PressPose, delta: f64) -> (GrayImage, Vec<[f64; 2]>) {
    let (w, h) = (gel.width, gel.height);
    let cx = (w as f64 - 1.0) / 2.0 + pose.dx * gel.px_per_mm;
    let cy = (h as f64 - 1.0) / 2.0 + pose.dy * gel.px_per_mm;
    let t = ind.hardness / (ind.hardness + gel.gel_stiffness);
    let sigma = gel.contact_sigma_px * (1.0 + gel.contact_spread * (1.0 - t));
    let a = ind.aspect.max(1.0).sqrt();
    let (sx, sy) = (sigma * a, sigma / a);
    let (sin, cos) = pose.yaw_deg.to_radians().sin_cos();
    let amp = gel.intensity_gain * delta;

    let markers: Vec<[f64; 2]> = gel
        .marker_grid()
        .into_iter()
        .map(|[mx, my]| {
            let (vx, vy) = (mx - cx, my - cy);
            let f = gel.marker_falloff_px;
            let s = gel.marker_gain * delta / f * (-(vx * vx + vy * vy) / (2.0 * f * f)).exp();
            [mx + s * vx, my + s * vy]
        })
        .collect();

    let half = (w.max(h) as f64) / 2.0;
    let mut img = GrayImage::from_fn(w, h, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let rx = (xf - (w as f64 - 1.0) / 2.0) / half;
        let ry = (yf - (h as f64 - 1.0) / 2.0) / half;
        let mut v = gel.base_intensity + gel.vignette * (1.0 - 0.5 * (rx * rx + ry * ry));
        if amp != 0.0 {
            let (ux, uy) = (xf - cx, yf - cy);
            let (pu, pv) = (cos * ux + sin * uy, -sin * ux + cos * uy);
            v += amp * (-0.5 * ((pu / sx).powi(2) + (pv / sy).powi(2))).exp();
        }
        v
    });
    let r = gel.marker_radius_px;
    let reach = (4.0 * r).ceil() as isize;
    for &[mx, my] in &markers {
        let (ix, iy) = (mx.round() as isize, my.round() as isize);
        for y in (iy - reach).max(0)..=(iy + reach).min(h as isize - 1) {
            for x in (ix - reach).max(0)..=(ix + reach).min(w as isize - 1) {
                let d2 = (x as f64 - mx).powi(2) + (y as f64 - my).powi(2);
                img.data[y as usize * w + x as usize] -= gel.marker_contrast * (-d2 / (2.0 * r * r)).exp();
            }
        }
    }
    (img, markers)
}

fn capture(
    gel: &GelConfig,
    ind: &Indenter,
    pose: &PressPose,
    depth: f64,
    rng: &mut impl Rng,
) -> TactileFrame {
    let delta = gel.gel_indentation(ind.hardness, depth);
    let (mut image, markers) = render_state(gel, ind, pose, delta);
    let markers = markers
        .into_iter()
        .map(|[x, y]| [x * gel.tracking_scale, y * gel.tracking_scale])
        .collect();
    for v in image.data.iter_mut() {
        if gel.sensor_noise_sigma > 0.0 {
            *v += gel.sensor_noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
        *v = v.clamp(0.0, 255.0);
    }
    TactileFrame { image, markers, depth }
}

/// Presses the gel top-down onto an object in 0.25 mm steps up to
/// `max_depth`, capturing one frame per step plus a no-contact reference.
pub fn press(
    indenter: &Indenter,
    pose: &PressPose,
    gel: &GelConfig,
    max_depth: f64,
    seed: u64,
) -> Result<PressStream> {
    gel.validate()?;
    pose.validate()?;
    if !(0.0..=100.0).contains(&indenter.hardness) || !(indenter.aspect >= 1.0) {
        return Err(Error::invalid("indenter hardness must be in [0, 100] HA and aspect ≥ 1"));
    }
    if !(max_depth >= 0.0) {
        return Err(Error::invalid("max depth must be non-negative"));
    }
    let steps = (max_depth / STEP_MM + 1e-9).floor() as usize;
    let mut rng = seeding::rng(seed, &[stream::PRESS, 0]);
    let reference = capture(gel, indenter, pose, 0.0, &mut rng);
    let frames = (0..=steps)
        .map(|j| {
            let mut rng = seeding::rng(seed, &[stream::PRESS, 1 + j as u64]);
            capture(gel, indenter, pose, j as f64 * STEP_MM, &mut rng)
        })
        .collect();
    Ok(PressStream { reference, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> GelConfig {
        GelConfig { sensor_noise_sigma: 0.0, ..GelConfig::default() }
    }

    #[test]
    fn equal_springs_split_depth() {
        let gel = GelConfig { gel_stiffness: 70.0, ..GelConfig::default() };
        assert!((gel.gel_indentation(70.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn indentation_increases_with_hardness() {
        let gel = GelConfig::default();
        let mut last = -1.0;
        for h in 0..=100 {
            let d = gel.gel_indentation(h as f64, 1.0);
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn zero_depth_matches_reference() {
        let ind = Indenter { hardness: 70.0, aspect: 1.2 };
        let s = press(&ind, &PressPose::default(), &quiet(), 1.0, 3).unwrap();
        assert_eq!(s.frames[0].image, s.reference.image);
        assert!(ssim(&s.frames[0].image, &s.reference.image).unwrap() > 0.99);
        assert_eq!(s.frames[0].mean_marker_displacement(&s.reference), 0.0);
        assert_eq!(s.frames.len(), 5);
    }

    #[test]
    fn marker_displacement_grows_with_depth() {
        let ind = Indenter { hardness: 75.0, aspect: 1.0 };
        let pose = PressPose { dx: 2.0, dy: -1.0, yaw_deg: 10.0 };
        let s = press(&ind, &pose, &quiet(), 3.0, 1).unwrap();
        let d: Vec<f64> = s.frames.iter().map(|f| f.mean_marker_displacement(&s.reference)).collect();
        assert!(d.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn signal_is_monotone_in_hardness() {
        let gel = quiet();
        let pose = PressPose { dx: 3.0, dy: 1.0, yaw_deg: 30.0 };
        let streams: Vec<PressStream> = [20.0, 40.0, 60.0, 62.0, 75.0, 90.0, 95.0]
            .iter()
            .map(|&h| press(&Indenter { hardness: h, aspect: 1.4 }, &pose, &gel, 4.0, 9).unwrap())
            .collect();
        for j in 1..streams[0].frames.len() {
            let m: Vec<f64> = streams
                .iter()
                .map(|s| s.frames[j].image.sub(&s.reference.image).unwrap().mean_abs())
                .collect();
            assert!(m.windows(2).all(|w| w[1] > w[0]), "depth step {j}: {m:?}");
        }
    }

    #[test]
    fn pose_limits() {
        let ind = Indenter { hardness: 70.0, aspect: 1.0 };
        let bad = PressPose { dx: 5.5, dy: 0.0, yaw_deg: 0.0 };
        assert!(press(&ind, &bad, &quiet(), 1.0, 0).is_err());
        let bad = PressPose { dx: 0.0, dy: 0.0, yaw_deg: 50.0 };
        assert!(press(&ind, &bad, &quiet(), 1.0, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let ind = Indenter { hardness: 66.0, aspect: 1.1 };
        let p = PressPose { dx: 1.0, dy: 1.0, yaw_deg: 5.0 };
        let g = GelConfig::default();
        assert_eq!(press(&ind, &p, &g, 2.0, 4).unwrap(), press(&ind, &p, &g, 2.0, 4).unwrap());
        assert_ne!(press(&ind, &p, &g, 2.0, 4).unwrap(), press(&ind, &p, &g, 2.0, 5).unwrap());
    }
}
