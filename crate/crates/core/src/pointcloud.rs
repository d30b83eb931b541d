//! LIDAR point clouds: KITTI Velodyne I/O and the rigid transforms used for
//! training-set augmentation.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

/// Bytes per Velodyne record: four little-endian `f32` (x, y, z, reflectivity).
pub const VELODYNE_RECORD_BYTES: usize = 16;

#[derive(Debug, Error)]
pub enum PointCloudError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed velodyne file: {len} bytes is not a multiple of 16")]
    Malformed { len: usize },
    #[error("corrupt velodyne record {index}: non-finite value")]
    Corrupt { index: usize },
    #[error("label count {labels} does not match point count {points}")]
    LabelMismatch { points: usize, labels: usize },
}

/// Per-point (or per-cell) road class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Road,
    NotRoad,
    Unknown,
}

/// One LIDAR return in the sensor frame: x forward, y left, z up (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    /// Normalized to `[0, 1]`.
    pub reflectivity: f32,
}

impl LidarPoint {
    pub fn new(x: f32, y: f32, z: f32, reflectivity: f32) -> Self {
        Self {
            x,
            y,
            z,
            reflectivity,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.reflectivity.is_finite()
    }

    /// Distance from the sensor in the x-y plane.
    pub fn planar_range(&self) -> f64 {
        (self.x as f64).hypot(self.y as f64)
    }
}

/// An ordered set of returns, optionally carrying one class tag per point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<LidarPoint>,
    labels: Option<Vec<Label>>,
    clamped_reflectivity: usize,
}

impl PointCloud {
    /// Builds a cloud, clamping reflectivity into `[0, 1]`.
    ///
    /// The number of clamped values is kept in [`PointCloud::clamped_reflectivity`].
    /// Non-finite coordinates are rejected with the offending index.
    pub fn new(mut points: Vec<LidarPoint>) -> Result<Self, PointCloudError> {
        let mut clamped = 0;
        for (index, p) in points.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(PointCloudError::Corrupt { index });
            }
            if p.reflectivity < 0.0 || p.reflectivity > 1.0 {
                p.reflectivity = p.reflectivity.clamp(0.0, 1.0);
                clamped += 1;
            }
        }
        Ok(Self {
            points,
            labels: None,
            clamped_reflectivity: clamped,
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Result<Self, PointCloudError> {
        if labels.len() != self.points.len() {
            return Err(PointCloudError::LabelMismatch {
                points: self.points.len(),
                labels: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn points(&self) -> &[LidarPoint] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// How many input reflectivities fell outside `[0, 1]` and were clamped.
    pub fn clamped_reflectivity(&self) -> usize {
        self.clamped_reflectivity
    }

    /// Same labels, new coordinates. `f` must preserve point order.
    fn map_points(&self, f: impl Fn(&LidarPoint) -> LidarPoint) -> Self {
        Self {
            points: self.points.iter().map(f).collect(),
            labels: self.labels.clone(),
            clamped_reflectivity: self.clamped_reflectivity,
        }
    }

    /// Rotates about the sensor z axis by `angle_deg` (counter-clockwise seen
    /// from above). Computed in `f64`, stored as `f32`.
    pub fn rotate_z(&self, angle_deg: f64) -> Self {
        assert!(angle_deg.is_finite(), "rotation angle must be finite");
        let (sin, cos) = angle_deg.to_radians().sin_cos();
        self.map_points(|p| {
            let (x, y) = (p.x as f64, p.y as f64);
            LidarPoint {
                x: (x * cos - y * sin) as f32,
                y: (x * sin + y * cos) as f32,
                ..*p
            }
        })
    }

    /// Mirrors about the x axis (y → −y).
    pub fn mirror_x(&self) -> Self {
        self.map_points(|p| LidarPoint { y: -p.y, ..*p })
    }

    pub fn augment(&self, aug: Augmentation) -> Self {
        let rotated = if aug.angle_deg == 0 {
            self.clone()
        } else {
            self.rotate_z(aug.angle_deg as f64)
        };
        if aug.mirrored {
            rotated.mirror_x()
        } else {
            rotated
        }
    }

    /// All 42 training variants, in [`Augmentation::all`] order.
    pub fn augmentation_set(&self) -> Vec<PointCloud> {
        Augmentation::all().into_iter().map(|a| self.augment(a)).collect()
    }
}

/// One member of the rotation × mirror augmentation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Augmentation {
    pub angle_deg: i32,
    pub mirrored: bool,
}

impl Augmentation {
    pub const MAX_ANGLE_DEG: i32 = 30;
    pub const ANGLE_STEP_DEG: i32 = 3;
    /// 21 angles × {plain, mirrored}.
    pub const COUNT: usize = 42;

    pub const IDENTITY: Augmentation = Augmentation {
        angle_deg: 0,
        mirrored: false,
    };

    /// Angles ascending from −30° to 30° in 3° steps, unmirrored before mirrored.
    pub fn all() -> Vec<Augmentation> {
        (-Self::MAX_ANGLE_DEG..=Self::MAX_ANGLE_DEG)
            .step_by(Self::ANGLE_STEP_DEG as usize)
            .flat_map(|angle_deg| {
                [false, true].map(|mirrored| Augmentation { angle_deg, mirrored })
            })
            .collect()
    }
}

/// Decodes a Velodyne byte buffer.
pub fn parse_velodyne(bytes: &[u8]) -> Result<PointCloud, PointCloudError> {
    if !bytes.len().is_multiple_of(VELODYNE_RECORD_BYTES) {
        return Err(PointCloudError::Malformed { len: bytes.len() });
    }
    let points = bytes
        .chunks_exact(VELODYNE_RECORD_BYTES)
        .enumerate()
        .map(|(index, rec)| {
            let f = |i: usize| f32::from_le_bytes([rec[i], rec[i + 1], rec[i + 2], rec[i + 3]]);
            let p = LidarPoint::new(f(0), f(4), f(8), f(12));
            if p.is_finite() {
                Ok(p)
            } else {
                Err(PointCloudError::Corrupt { index })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    PointCloud::new(points)
}

pub fn load_velodyne_bin(path: impl AsRef<Path>) -> Result<PointCloud, PointCloudError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PointCloudError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_velodyne(&bytes)
}

pub fn encode_velodyne(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * VELODYNE_RECORD_BYTES);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.reflectivity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_velodyne_bin(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<(), PointCloudError> {
    let path = path.as_ref();
    fs::write(path, encode_velodyne(cloud)).map_err(|source| PointCloudError::Io {
        path: path.display().to_string(),
        source,
    })
}
