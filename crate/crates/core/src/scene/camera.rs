use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    /// Depth camera used for the tabletop setup, 640×480.
    fn default() -> Self {
        CameraIntrinsics {
            fx: 608.5,
            fy: 606.9,
            cx: 309.4,
            cy: 213.83,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid intrinsics {self:?}")))
        }
    }

    /// Metric size of one pixel at the given depth, using the finer focal length.
    pub fn pixel_equivalent(&self, depth: f64) -> f64 {
        depth / self.fx.min(self.fy)
    }

    /// Projects a camera-frame point to (u, v).
    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        [
            self.cx + self.fx * p[0] / p[2],
            self.cy + self.fy * p[1] / p[2],
        ]
    }

    /// Ray direction through pixel (u, v), scaled so that its z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }
}

/// Back-projects pixel (u, v) at the given depth into the camera frame.
pub fn project_pixel(intr: &CameraIntrinsics, u: f64, v: f64, depth: f64) -> Result<[f64; 3]> {
    if !(depth > 0.0) {
        return Err(Error::NonPositiveDepth(depth));
    }
    Ok([
        depth * (u - intr.cx) / intr.fx,
        depth * (v - intr.cy) / intr.fy,
        depth,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn principal_point_ray() {
        let k = CameraIntrinsics::default();
        let p = project_pixel(&k, 309.4, 213.83, 500.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[2], 500.0, epsilon = 1e-12);
    }

    #[test]
    fn one_focal_length_offset() {
        let k = CameraIntrinsics::default();
        let p = project_pixel(&k, 309.4 + 608.5, 213.83, 500.0).unwrap();
        assert_abs_diff_eq!(p[0], 500.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn image_origin() {
        let k = CameraIntrinsics::default();
        let p = project_pixel(&k, 0.0, 0.0, 400.0).unwrap();
        // 400·(−309.4)/608.5 and 400·(−213.83)/606.9
        assert_abs_diff_eq!(p[0], -203.385_373_870_172_55, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], -140.932_608_337_452_6, epsilon = 1e-9);
        assert_abs_diff_eq!(p[2], 400.0);
    }

    #[test]
    fn rejects_non_positive_depth() {
        let k = CameraIntrinsics::default();
        assert!(matches!(
            project_pixel(&k, 1.0, 1.0, 0.0),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(project_pixel(&k, 1.0, 1.0, -3.0).is_err());
    }

    #[test]
    fn project_inverts_back_projection() {
        let k = CameraIntrinsics::default();
        let p = project_pixel(&k, 123.0, 77.5, 530.0).unwrap();
        let [u, v] = k.project(p);
        assert_abs_diff_eq!(u, 123.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 77.5, epsilon = 1e-9);
    }

    #[test]
    fn validation() {
        assert!(CameraIntrinsics::default().validate().is_ok());
        let bad = CameraIntrinsics {
            cx: 700.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
