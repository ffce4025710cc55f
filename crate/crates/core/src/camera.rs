//! Pinhole geometry: intrinsics, rectified stereo rigs, disparity/depth
//! conversion and point-cloud projection with a z-buffer.

use crate::error::{Error, Result};
use crate::raster::{DepthMap, MISSING_DEPTH};

/// Pinhole intrinsics in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
}

impl CameraIntrinsics {
    pub fn new(fx: f32, fy: f32, cx: f32, cy: f32) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::Config(format!("focal lengths must be positive, got fx={fx} fy={fy}")));
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

/// Rectified stereo pair: shared intrinsics plus a metric baseline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    /// Distance between the two camera centers in meters.
    pub baseline: f32,
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline: f32) -> Result<Self> {
        if baseline <= 0.0 {
            return Err(Error::Config(format!("baseline must be positive, got {baseline}")));
        }
        Ok(Self { intrinsics, baseline })
    }
}

/// Rigid sensor-to-camera transform (row-major rotation, then translation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: [[f32; 3]; 3],
    pub translation: [f32; 3],
}

impl RigidTransform {
    pub fn apply(&self, p: [f32; 3]) -> [f32; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }
}

/// 3-D points in the sensor frame with an optional transform into the camera
/// frame (z forward).
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub sensor_to_camera: Option<RigidTransform>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("point {i} has non-finite coordinates")));
            }
        }
        Ok(Self { points, sensor_to_camera: None })
    }

    pub fn with_transform(mut self, t: RigidTransform) -> Self {
        self.sensor_to_camera = Some(t);
        self
    }
}

/// Convert a rectified disparity (pixels) to metric depth. Zero disparity
/// maps to the missing sentinel; negative disparity is rejected.
pub fn disparity_to_depth(d: f32, rig: &StereoRig) -> Result<f32> {
    if d < 0.0 || !d.is_finite() {
        return Err(Error::InvalidInput(format!("disparity must be non-negative, got {d}")));
    }
    if d == 0.0 {
        return Ok(MISSING_DEPTH);
    }
    Ok(rig.intrinsics.fx * rig.baseline / d)
}

/// Convert metric depth to rectified disparity (pixels).
pub fn depth_to_disparity(z: f32, rig: &StereoRig) -> Result<f32> {
    if z <= 0.0 || !z.is_finite() {
        return Err(Error::InvalidInput(format!("depth must be positive, got {z}")));
    }
    Ok(rig.intrinsics.fx * rig.baseline / z)
}

/// Project a point cloud onto the image plane, keeping the nearest point per
/// pixel (z-buffer). Points behind the camera, outside the image, or beyond
/// `max_depth` are discarded.
pub fn project_pointcloud(
    cloud: &PointCloud,
    intr: &CameraIntrinsics,
    width: usize,
    height: usize,
    max_depth: f32,
) -> Result<DepthMap> {
    let mut values = vec![MISSING_DEPTH; width * height];
    for &p in &cloud.points {
        let [x, y, z] = match cloud.sensor_to_camera {
            Some(t) => t.apply(p),
            None => p,
        };
        if z <= 0.0 || z > max_depth {
            continue;
        }
        let u = (intr.fx * x / z + intr.cx).round();
        let v = (intr.fy * y / z + intr.cy).round();
        if u < 0.0 || v < 0.0 || u >= width as f32 || v >= height as f32 {
            continue;
        }
        let idx = v as usize * width + u as usize;
        if values[idx] == MISSING_DEPTH || z < values[idx] {
            values[idx] = z;
        }
    }
    DepthMap::new(width, height, values, max_depth)
}
