use crate::error::{Error, Result};
use crate::imaging::Mask;
use crate::scene::{project_pixel, CameraIntrinsics, RgbdFrame};
use crate::stats::median;

pub const MEDIAN_FRAMES: usize = 10;

/// Depth values over a mask; pixels outside the mask hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// The raw depth of one frame restricted to `mask`.
    pub fn from_frame(frame: &RgbdFrame, mask: &Mask) -> Result<DepthMap> {
        check_dims(frame, mask)?;
        let mut data = vec![f64::NAN; frame.width * frame.height];
        for (x, y) in mask.pixels() {
            data[y * frame.width + x] = frame.depth_at(x, y);
        }
        Ok(DepthMap { width: frame.width, height: frame.height, data })
    }
}

fn check_dims(frame: &RgbdFrame, mask: &Mask) -> Result<()> {
    if frame.width != mask.width() || frame.height != mask.height() {
        return Err(Error::ShapeMismatch(format!(
            "frame {}x{} vs mask {}x{}",
            frame.width,
            frame.height,
            mask.width(),
            mask.height()
        )));
    }
    Ok(())
}

/// Per-pixel median over the first ten frames at the masked pixels.
pub fn median_depth(frames: &[RgbdFrame], mask: &Mask) -> Result<DepthMap> {
    if frames.len() < MEDIAN_FRAMES {
        return Err(Error::NotEnoughFrames { required: MEDIAN_FRAMES, got: frames.len() });
    }
    let frames = &frames[..MEDIAN_FRAMES];
    for f in frames {
        check_dims(f, mask)?;
    }
    let (w, h) = (mask.width(), mask.height());
    let mut data = vec![f64::NAN; w * h];
    let mut buf = [0.0; MEDIAN_FRAMES];
    for (x, y) in mask.pixels() {
        for (b, f) in buf.iter_mut().zip(frames) {
            *b = f.depth_at(x, y);
        }
        data[y * w + x] = median(&mut buf);
    }
    Ok(DepthMap { width: w, height: h, data })
}

/// Coordinate-wise median of the back-projected masked pixels, in the camera
/// frame. Pixels without a positive finite depth are skipped.
pub fn centroid3d(mask: &Mask, depth: &DepthMap, intr: &CameraIntrinsics) -> Result<[f64; 3]> {
    if mask.width() != depth.width || mask.height() != depth.height {
        return Err(Error::ShapeMismatch("mask and depth map differ in size".into()));
    }
    let mut xs = Vec::with_capacity(mask.count());
    let mut ys = Vec::with_capacity(mask.count());
    let mut zs = Vec::with_capacity(mask.count());
    for (x, y) in mask.pixels() {
        let d = depth.get(x, y);
        if !(d > 0.0) || !d.is_finite() {
            continue;
        }
        let p = project_pixel(intr, x as f64, y as f64, d)?;
        xs.push(p[0]);
        ys.push(p[1]);
        zs.push(p[2]);
    }
    if xs.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok([median(&mut xs), median(&mut ys), median(&mut zs)])
}

pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    if union == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(inter as f64 / union as f64)
}
