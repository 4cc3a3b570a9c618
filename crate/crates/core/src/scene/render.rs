use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CameraIntrinsics, Scene, SceneObject};
use crate::error::{Error, Result};
use crate::imaging::Mask;
use crate::seeding::{self, stream};
use crate::stats::median;

pub const TABLE_COLOR: [u8; 3] = [128, 128, 128];

/// Depth sensor error model.
///
/// Besides i.i.d. Gaussian noise the sensor produces sparse far-side depth
/// spikes, much more often within a few pixels of a depth discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthSensor {
    pub sigma: f64,
    /// Per-pixel, per-frame spike probability away from silhouettes.
    pub spike_rate: f64,
    /// Spike probability within `edge_band_px` of a silhouette.
    pub edge_spike_rate: f64,
    pub edge_band_px: usize,
    /// Spiked readings are the true depth times U(1, max_spike_factor).
    pub max_spike_factor: f64,
}

impl Default for DepthSensor {
    fn default() -> Self {
        DepthSensor {
            sigma: 2.0,
            spike_rate: 0.02,
            edge_spike_rate: 0.3,
            edge_band_px: 2,
            max_spike_factor: 1.5,
        }
    }
}

impl DepthSensor {
    pub fn gaussian(sigma: f64) -> Self {
        DepthSensor {
            sigma,
            spike_rate: 0.0,
            edge_spike_rate: 0.0,
            edge_band_px: 0,
            max_spike_factor: 1.0,
        }
    }

    pub fn noiseless() -> Self {
        DepthSensor::gaussian(0.0)
    }

    fn has_spikes(&self) -> bool {
        self.spike_rate > 0.0 || self.edge_spike_rate > 0.0
    }
}

/// One RGB-D observation. Depth is in mm along the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbdFrame {
    pub width: usize,
    pub height: usize,
    pub color: Vec<[u8; 3]>,
    pub depth: Vec<f64>,
    pub index: u64,
}

impl RgbdFrame {
    #[inline]
    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }
}

/// First intersection depth (z) of the ray through (u, v) with a sphere.
#[inline]
fn ray_sphere_depth(intr: &CameraIntrinsics, u: f64, v: f64, c: [f64; 3], r: f64) -> Option<f64> {
    let d = intr.ray(u, v);
    let a = d[0] * d[0] + d[1] * d[1] + 1.0;
    let b = -2.0 * (d[0] * c[0] + d[1] * c[1] + d[2] * c[2]);
    let cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2] - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    Some((-b - disc.sqrt()) / (2.0 * a))
}

/// Conservative pixel bounding box of a sphere, clamped to the image.
fn sphere_bbox(
    intr: &CameraIntrinsics,
    o: &SceneObject,
    camera_height: f64,
    pad: usize,
) -> Option<(usize, usize, usize, usize)> {
    let c = o.camera_center(camera_height);
    let r = o.radius;
    let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for dz in [-r, r] {
        for dx in [-r, r] {
            for dy in [-r, r] {
                let z = c[2] + dz;
                if z <= 0.0 {
                    return Some((0, intr.width - 1, 0, intr.height - 1));
                }
                let [u, v] = intr.project([c[0] + dx, c[1] + dy, z]);
                u0 = u0.min(u);
                u1 = u1.max(u);
                v0 = v0.min(v);
                v1 = v1.max(v);
            }
        }
    }
    let pad = pad as f64 + 1.0;
    let (w, h) = (intr.width as f64, intr.height as f64);
    if u1 + pad < 0.0 || v1 + pad < 0.0 || u0 - pad >= w || v0 - pad >= h {
        return None;
    }
    Some((
        (u0 - pad).floor().max(0.0) as usize,
        (u1 + pad).ceil().min(w - 1.0) as usize,
        (v0 - pad).floor().max(0.0) as usize,
        (v1 + pad).ceil().min(h - 1.0) as usize,
    ))
}

/// Per-pixel index into `scene.objects` of the visible object, with its
/// noiseless depth. Pixels showing the table hold `None` and the table depth.
pub fn label_map(scene: &Scene, intr: &CameraIntrinsics) -> (Vec<Option<usize>>, Vec<f64>) {
    let (w, h) = (intr.width, intr.height);
    let mut labels = vec![None; w * h];
    let mut depth = vec![scene.camera_height; w * h];
    for (k, o) in scene.objects.iter().enumerate() {
        let Some((x0, x1, y0, y1)) = sphere_bbox(intr, o, scene.camera_height, 0) else {
            continue;
        };
        let c = o.camera_center(scene.camera_height);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if let Some(z) = ray_sphere_depth(intr, x as f64, y as f64, c, o.radius) {
                    let i = y * w + x;
                    if z > 0.0 && z < depth[i] {
                        depth[i] = z;
                        labels[i] = Some(k);
                    }
                }
            }
        }
    }
    (labels, depth)
}

fn edge_band(labels: &[Option<usize>], w: usize, h: usize, band: usize) -> Vec<bool> {
    let mut out = vec![false; w * h];
    if band == 0 {
        return out;
    }
    // mark label changes, then dilate by `band`
    let mut boundary = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            let right = x + 1 < w && labels[y * w + x + 1] != l;
            let down = y + 1 < h && labels[(y + 1) * w + x] != l;
            if right || down {
                boundary[y * w + x] = true;
                if right {
                    boundary[y * w + x + 1] = true;
                }
                if down {
                    boundary[(y + 1) * w + x] = true;
                }
            }
        }
    }
    let b = band as isize - 1;
    for y in 0..h {
        for x in 0..w {
            if !boundary[y * w + x] {
                continue;
            }
            for dy in -b..=b {
                for dx in -b..=b {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        out[yy as usize * w + xx as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Renders the scene with Gaussian depth noise only.
pub fn render(scene: &Scene, intr: &CameraIntrinsics, sigma: f64, frame_index: u64) -> Result<RgbdFrame> {
    render_with_sensor(scene, intr, &DepthSensor::gaussian(sigma), frame_index)
}

/// Renders colour and depth through the given sensor model. Noise is drawn
/// from a stream keyed by the scene seed and `frame_index`.
pub fn render_with_sensor(
    scene: &Scene,
    intr: &CameraIntrinsics,
    sensor: &DepthSensor,
    frame_index: u64,
) -> Result<RgbdFrame> {
    intr.validate()?;
    if !(sensor.sigma >= 0.0) {
        return Err(Error::invalid("depth noise sigma must be non-negative"));
    }
    let (w, h) = (intr.width, intr.height);
    let (labels, mut depth) = label_map(scene, intr);
    let color = labels
        .iter()
        .map(|l| l.map_or(TABLE_COLOR, |k| scene.objects[k].color))
        .collect();

    if sensor.sigma > 0.0 || sensor.has_spikes() {
        let mut rng = seeding::rng(scene.seed, &[stream::RENDER, frame_index]);
        let band = if sensor.has_spikes() {
            edge_band(&labels, w, h, sensor.edge_band_px)
        } else {
            Vec::new()
        };
        let normal = Normal::new(0.0, sensor.sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
        for (i, d) in depth.iter_mut().enumerate() {
            let truth = *d;
            let mut value = truth;
            if sensor.sigma > 0.0 {
                value += normal.sample(&mut rng);
            }
            if sensor.has_spikes() {
                let rate = if band[i] {
                    sensor.edge_spike_rate
                } else {
                    sensor.spike_rate
                };
                let u: f64 = rng.gen();
                let factor: f64 = rng.gen_range(1.0..sensor.max_spike_factor.max(1.0 + 1e-12));
                if u < rate {
                    value = truth * factor;
                }
            }
            *d = value.max(0.0);
        }
    }

    Ok(RgbdFrame {
        width: w,
        height: h,
        color,
        depth,
        index: frame_index,
    })
}

/// Footprint of the object as rendered at sigma = 0.
pub fn ground_truth_mask(scene: &Scene, object_id: u32, intr: &CameraIntrinsics) -> Result<Mask> {
    let k = scene
        .objects
        .iter()
        .position(|o| o.id == object_id)
        .ok_or(Error::UnknownObject(object_id))?;
    let (labels, _) = label_map(scene, intr);
    Mask::from_bits(
        intr.width,
        intr.height,
        labels.iter().map(|l| *l == Some(k)).collect(),
    )
}

/// Noiseless camera-frame surface points of the object's visible footprint.
pub fn visible_surface(
    scene: &Scene,
    object_id: u32,
    intr: &CameraIntrinsics,
) -> Result<Vec<(usize, usize, [f64; 3])>> {
    let k = scene
        .objects
        .iter()
        .position(|o| o.id == object_id)
        .ok_or(Error::UnknownObject(object_id))?;
    let (labels, depth) = label_map(scene, intr);
    let w = intr.width;
    Ok(labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == Some(k))
        .map(|(i, _)| {
            let (x, y) = (i % w, i / w);
            let z = depth[i];
            let p = [
                z * (x as f64 - intr.cx) / intr.fx,
                z * (y as f64 - intr.cy) / intr.fy,
                z,
            ];
            (x, y, p)
        })
        .collect())
}

/// Radius of the silhouette band excluded from the reference region, px.
const CORE_MARGIN_PX: usize = 3;

/// Ground-truth localisation target of an object in the workspace frame: the
/// coordinate-wise median of its noiseless visible surface over the core of
/// its silhouette (pixels at least 3 px from the outline). Falls back to the
/// whole silhouette for objects too small to have a core.
pub fn reference_point(scene: &Scene, object_id: u32, intr: &CameraIntrinsics) -> Result<[f64; 3]> {
    let mask = ground_truth_mask(scene, object_id, intr)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let core = mask.erode_square(CORE_MARGIN_PX);
    let region = if core.is_empty() { &mask } else { &core };
    let surface = visible_surface(scene, object_id, intr)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    for (x, y, p) in surface {
        if region.get(x, y) {
            xs.push(p[0]);
            ys.push(p[1]);
            zs.push(p[2]);
        }
    }
    let p = [median(&mut xs), median(&mut ys), median(&mut zs)];
    Ok(scene.to_workspace(p))
}
