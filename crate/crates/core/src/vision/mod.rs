//! Simulated open/closed-vocabulary detectors and the localisation chain
//! that turns a detection into a 3D touch target.

mod canny;
mod depth;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use canny::{canny, refine_mask, RefinedMask, CANNY_HIGH, CANNY_LOW};
pub use depth::{centroid3d, iou, median_depth, DepthMap, MEDIAN_FRAMES};

use crate::error::{Error, Result};
use crate::imaging::Mask;
use crate::scene::{ground_truth_mask, label_map, CameraIntrinsics, FruitClass, RgbdFrame, Scene};
use crate::seeding::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    /// Closed-vocabulary detector: finds every known class, filtered by the
    /// query afterwards.
    YoloLike,
    /// Text-prompted detector: only looks for the prompted classes.
    GsamLike,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::YoloLike => "yolo-like",
            DetectorKind::GsamLike => "gsam-like",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub name: DetectorKind,
    pub confidence_threshold: f64,
    pub mean_confidence: f64,
    pub confidence_spread: f64,
    /// Amplitude of the smooth silhouette perturbation, px.
    pub boundary_noise: f64,
    pub miss_rate: f64,
}

impl DetectorProfile {
    pub fn yolo_like() -> Self {
        DetectorProfile {
            name: DetectorKind::YoloLike,
            confidence_threshold: 0.40,
            mean_confidence: 0.92,
            confidence_spread: 0.10,
            boundary_noise: 5.2,
            miss_rate: 0.0,
        }
    }

    pub fn gsam_like() -> Self {
        DetectorProfile {
            name: DetectorKind::GsamLike,
            confidence_threshold: 0.60,
            mean_confidence: 0.65,
            confidence_spread: 0.05,
            boundary_noise: 1.3,
            miss_rate: 0.0,
        }
    }

    /// Noise-free detector that never misses.
    pub fn perfect(name: DetectorKind) -> Self {
        DetectorProfile {
            name,
            confidence_threshold: 0.0,
            mean_confidence: 1.0,
            confidence_spread: 0.0,
            boundary_noise: 0.0,
            miss_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.confidence_threshold)
            || !unit(self.mean_confidence)
            || !unit(self.confidence_spread)
            || !unit(self.miss_rate)
            || !(self.boundary_noise >= 0.0)
        {
            return Err(Error::invalid(format!("invalid detector profile {}", self.name.name())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: FruitClass,
    pub confidence: f64,
    pub mask: Mask,
    /// Id of the simulated object that produced this detection. Only
    /// evaluation code looks at it.
    pub source_id: u32,
}

/// Number of harmonics in the silhouette perturbation.
const HARMONICS: usize = 4;

/// Per-object random draws, kept in a fixed order so that changing one
/// profile parameter (e.g. the miss rate) reuses the same numbers.
struct ObjectDraws {
    miss: f64,
    confidence_z: f64,
    harmonics: [[f64; 2]; HARMONICS],
}

fn object_draws(seed: u64, object_id: u32) -> ObjectDraws {
    let mut rng = seeding::rng(seed, &[stream::DETECT, object_id as u64]);
    let miss = rng.gen::<f64>();
    let confidence_z = rng.sample(StandardNormal);
    let mut harmonics = [[0.0; 2]; HARMONICS];
    for h in harmonics.iter_mut() {
        h[0] = rng.sample(StandardNormal);
        h[1] = rng.sample(StandardNormal);
    }
    ObjectDraws { miss, confidence_z, harmonics }
}

/// Runs the simulated detector on one frame. Only objects of the prompted
/// classes are returned; confidence below the profile threshold drops a
/// detection.
pub fn detect(
    frame: &RgbdFrame,
    scene: &Scene,
    intr: &CameraIntrinsics,
    prompt_labels: &[FruitClass],
    profile: &DetectorProfile,
    seed: u64,
) -> Result<Vec<Detection>> {
    profile.validate()?;
    if frame.width != intr.width || frame.height != intr.height {
        return Err(Error::ShapeMismatch("frame does not match intrinsics".into()));
    }
    let (labels, _) = label_map(scene, intr);
    let mut out = Vec::new();
    for (k, obj) in scene.objects.iter().enumerate() {
        // both detector kinds end up with the prompted classes: one by
        // prompting, the other by filtering its closed-vocabulary output
        if !prompt_labels.contains(&obj.class) {
            continue;
        }
        let draws = object_draws(seed, obj.id);
        if draws.miss < profile.miss_rate {
            continue;
        }
        let confidence =
            (profile.mean_confidence + profile.confidence_spread * draws.confidence_z).clamp(0.0, 1.0);
        if confidence < profile.confidence_threshold {
            continue;
        }
        let mask = if profile.boundary_noise == 0.0 {
            ground_truth_mask(scene, obj.id, intr)?
        } else {
            perturbed_mask(scene, k, intr, &labels, profile.boundary_noise, &draws.harmonics)
        };
        if mask.is_empty() {
            continue;
        }
        out.push(Detection { label: obj.class, confidence, mask, source_id: obj.id });
    }
    Ok(out)
}

/// Silhouette with its outline moved by a smooth random function of the
/// polar angle around the projected centre. Distances are measured as the
/// angle between a pixel ray and the sphere's tangent cone, in pixels.
fn perturbed_mask(
    scene: &Scene,
    k: usize,
    intr: &CameraIntrinsics,
    labels: &[Option<usize>],
    amplitude: f64,
    harmonics: &[[f64; 2]; HARMONICS],
) -> Mask {
    let obj = &scene.objects[k];
    let c = obj.camera_center(scene.camera_height);
    let norm_c = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let alpha = (obj.radius / norm_c).asin();
    let [uc, vc] = intr.project(c);
    let reach = amplitude * (HARMONICS as f64) + 2.0;
    let r_px = intr.fx.max(intr.fy) * (alpha + 0.05).tan() * 1.2 + reach;
    let x0 = (uc - r_px).floor().max(0.0) as usize;
    let y0 = (vc - r_px).floor().max(0.0) as usize;
    let x1 = ((uc + r_px).ceil().max(0.0) as usize).min(intr.width - 1);
    let y1 = ((vc + r_px).ceil().max(0.0) as usize).min(intr.height - 1);
    let mut mask = Mask::new(intr.width, intr.height);
    if x0 > x1 || y0 > y1 {
        return mask;
    }
    for y in y0..=y1 {
        for x in x0..=x1 {
            if let Some(other) = labels[y * intr.width + x] {
                if other != k {
                    continue;
                }
            }
            let d = intr.ray(x as f64, y as f64);
            let nd = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            let cos = ((d[0] * c[0] + d[1] * c[1] + d[2] * c[2]) / (nd * norm_c)).clamp(-1.0, 1.0);
            let signed = (cos.acos() - alpha) * intr.fx;
            let phi = (y as f64 - vc).atan2(x as f64 - uc);
            let offset: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(i, [a, b])| {
                    let f = (i + 1) as f64 * phi;
                    a * f.cos() + b * f.sin()
                })
                .sum::<f64>()
                * amplitude
                / 2.0;
            if signed <= offset {
                mask.set(x, y, true);
            }
        }
    }
    mask
}

/// Keeps, for each label, the detection with the highest confidence.
/// Ties keep the earlier detection.
pub fn best_per_label(detections: Vec<Detection>) -> Vec<Detection> {
    let mut out: Vec<Detection> = Vec::new();
    for d in detections {
        match out.iter_mut().find(|o| o.label == d.label) {
            Some(o) if d.confidence > o.confidence => *o = d,
            Some(_) => {}
            None => out.push(d),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizeOptions {
    pub refine: bool,
    pub temporal_median: bool,
}

impl Default for LocalizeOptions {
    fn default() -> Self {
        LocalizeOptions { refine: true, temporal_median: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedObject {
    pub label: FruitClass,
    /// Touch target in the workspace frame, mm.
    pub centroid: [f64; 3],
    pub inner_mask: Mask,
    pub confidence: f64,
    pub refinement_fallback: bool,
    pub source_id: u32,
}

/// Inner mask, depth filtering and median centroid for one detection.
/// `frames` must hold at least ten frames when the temporal median is on.
pub fn localize(
    detection: &Detection,
    frames: &[RgbdFrame],
    scene: &Scene,
    intr: &CameraIntrinsics,
    opts: LocalizeOptions,
) -> Result<GroundedObject> {
    if detection.mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (inner, fallback) = if opts.refine {
        let r = refine_mask(&detection.mask);
        (r.mask, r.fallback)
    } else {
        (detection.mask.clone(), false)
    };
    let depth = if opts.temporal_median {
        median_depth(frames, &inner)?
    } else {
        let first = frames.first().ok_or(Error::NotEnoughFrames { required: 1, got: 0 })?;
        DepthMap::from_frame(first, &inner)?
    };
    let c = centroid3d(&inner, &depth, intr)?;
    Ok(GroundedObject {
        label: detection.label,
        centroid: scene.to_workspace(c),
        inner_mask: inner,
        confidence: detection.confidence,
        refinement_fallback: fallback,
        source_id: detection.source_id,
    })
}

/// Horizontal distance between a localised point and the object's reference
/// point, mm.
pub fn centroid_error(grounded: &GroundedObject, reference: [f64; 3]) -> f64 {
    (grounded.centroid[0] - reference[0]).hypot(grounded.centroid[1] - reference[1])
}
