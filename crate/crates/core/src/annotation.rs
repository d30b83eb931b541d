//! Top-view ground truth from camera-perspective annotations.
//!
//! Two mappings are provided. Point-cloud projection (PCP) labels each LIDAR
//! point by projecting it into the annotated camera image and then bins the
//! labeled points into the grid. Inverse perspective mapping (IPM) projects
//! every grid cell center, assumed to lie on a flat ground plane, into the
//! image and samples the annotation there.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector4};
use thiserror::Error;

use crate::pointcloud::{Augmentation, Label, LidarPoint, PointCloud};
use crate::raster::GridSpec;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("annotation: {0}")]
    Invalid(String),
}

/// Composite LIDAR-to-pixel projection plus the image size it refers to.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub proj: Matrix3x4<f64>,
    pub image_width: usize,
    pub image_height: usize,
}

/// Result of projecting one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Continuous pixel coordinates; pixel centers sit on integers.
    Pixel { u: f64, v: f64 },
    Behind,
    Degenerate,
}

impl CameraCalibration {
    pub fn new(proj: Matrix3x4<f64>, image_width: usize, image_height: usize) -> Result<Self, AnnotationError> {
        if proj.iter().any(|v| !v.is_finite()) {
            return Err(AnnotationError::Calibration("non-finite projection entry".into()));
        }
        if image_width == 0 || image_height == 0 {
            return Err(AnnotationError::Calibration("empty image".into()));
        }
        Ok(Self {
            proj,
            image_width,
            image_height,
        })
    }

    pub fn project(&self, x: f64, y: f64, z: f64) -> Projection {
        let h = self.proj * Vector4::new(x, y, z, 1.0);
        let w = h[2];
        if w == 0.0 || !w.is_finite() {
            Projection::Degenerate
        } else if w < 0.0 {
            Projection::Behind
        } else {
            Projection::Pixel {
                u: h[0] / w,
                v: h[1] / w,
            }
        }
    }

    /// Nearest pixel, if the projection lands inside the image.
    pub fn pixel_of(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize)> {
        match self.project(x, y, z) {
            Projection::Pixel { u, v } => {
                // halves round toward the top-left pixel
                let (col, row) = ((u - 0.5).ceil(), (v - 0.5).ceil());
                if col >= 0.0 && row >= 0.0 && (col as usize) < self.image_width && (row as usize) < self.image_height {
                    Some((row as usize, col as usize))
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Parses a KITTI calibration text file and assembles
    /// `P2 · R0_rect · Tr_velo_to_cam`. The files carry no image size.
    pub fn from_kitti_str(text: &str, image_width: usize, image_height: usize) -> Result<Self, AnnotationError> {
        let mut entries: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| AnnotationError::Calibration(format!("line {}: missing ':'", lineno + 1)))?;
            let vals = rest
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| AnnotationError::Calibration(format!("line {}: {e}", lineno + 1)))?;
            entries.insert(key.trim(), vals);
        }
        let get = |keys: &[&str], n: usize| -> Result<Vec<f64>, AnnotationError> {
            let vals = keys
                .iter()
                .find_map(|k| entries.get(k))
                .ok_or_else(|| AnnotationError::Calibration(format!("missing {}", keys[0])))?;
            if vals.len() != n {
                return Err(AnnotationError::Calibration(format!(
                    "{} has {} values, expected {n}",
                    keys[0],
                    vals.len()
                )));
            }
            Ok(vals.clone())
        };
        let p2 = Matrix3x4::from_row_slice(&get(&["P2"], 12)?);
        let r0 = Matrix3::from_row_slice(&get(&["R0_rect", "R_rect"], 9)?);
        let tr = Matrix3x4::from_row_slice(&get(&["Tr_velo_to_cam", "Tr_velo_cam"], 12)?);
        let mut r0_4 = Matrix4::identity();
        r0_4.fixed_view_mut::<3, 3>(0, 0).copy_from(&r0);
        let mut tr_4 = Matrix4::identity();
        tr_4.fixed_view_mut::<3, 4>(0, 0).copy_from(&tr);
        Self::new(p2 * r0_4 * tr_4, image_width, image_height)
    }

    pub fn load_kitti(path: impl AsRef<Path>, image_width: usize, image_height: usize) -> Result<Self, AnnotationError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_kitti_str(&text, image_width, image_height)
    }
}

/// Writes a KITTI-style calibration file from its three factors.
pub fn kitti_calib_text(p2: &Matrix3x4<f64>, r0: &Matrix3<f64>, tr: &Matrix3x4<f64>) -> String {
    let row = |vals: Vec<f64>| vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
    let rows34 = |m: &Matrix3x4<f64>| row((0..3).flat_map(|r| (0..4).map(move |c| m[(r, c)])).collect());
    let rows33 = |m: &Matrix3<f64>| row((0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect());
    format!(
        "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
        rows34(p2),
        rows33(r0),
        rows34(tr)
    )
}

/// Binary road / validity masks in the camera image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PerspectiveAnnotation {
    pub width: usize,
    pub height: usize,
    road: Vec<bool>,
    valid: Vec<bool>,
}

impl PerspectiveAnnotation {
    pub fn new(width: usize, height: usize, road: Vec<bool>, valid: Vec<bool>) -> Result<Self, AnnotationError> {
        if road.len() != width * height || valid.len() != width * height {
            return Err(AnnotationError::Invalid("mask size does not match image".into()));
        }
        if road.iter().zip(&valid).any(|(&r, &v)| r && !v) {
            return Err(AnnotationError::Invalid("road pixel outside valid mask".into()));
        }
        Ok(Self {
            width,
            height,
            road,
            valid,
        })
    }

    pub fn label_at(&self, row: usize, col: usize) -> Label {
        let i = row * self.width + col;
        match (self.valid[i], self.road[i]) {
            (false, _) => Label::Unknown,
            (true, true) => Label::Road,
            (true, false) => Label::NotRoad,
        }
    }

    /// KITTI ground-truth colors: red marks valid pixels, blue marks road.
    pub fn from_rgb(img: &image::RgbImage) -> Self {
        let (w, h) = img.dimensions();
        let mut road = Vec::with_capacity((w * h) as usize);
        let mut valid = Vec::with_capacity((w * h) as usize);
        for p in img.pixels() {
            let v = p[0] >= 128;
            valid.push(v);
            road.push(v && p[2] >= 128);
        }
        Self {
            width: w as usize,
            height: h as usize,
            road,
            valid,
        }
    }

    pub fn to_rgb(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |c, r| {
            match self.label_at(r as usize, c as usize) {
                Label::Road => image::Rgb([255, 0, 255]),
                Label::NotRoad => image::Rgb([255, 0, 0]),
                Label::Unknown => image::Rgb([0, 0, 0]),
            }
        })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| AnnotationError::Image {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_rgb(&img.to_rgb8()))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), AnnotationError> {
        let path = path.as_ref();
        self.to_rgb().save(path).map_err(|source| AnnotationError::Image {
            path: path.display().to_string(),
            source,
        })
    }
}

/// A grid of cell classes with the same layout as the rasterized tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TopViewLabel {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Label>,
}

impl TopViewLabel {
    pub fn filled(spec: &GridSpec, label: Label) -> Self {
        Self {
            width: spec.width_px(),
            height: spec.height_px(),
            cells: vec![label; spec.num_cells()],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Label {
        self.cells[row * self.width + col]
    }

    pub fn count(&self, label: Label) -> usize {
        self.cells.iter().filter(|&&l| l == label).count()
    }

    pub fn to_gray(&self) -> image::GrayImage {
        let px = self
            .cells
            .iter()
            .map(|l| match l {
                Label::NotRoad => 0u8,
                Label::Road => 255,
                Label::Unknown => 128,
            })
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, px).expect("sized from label grid")
    }

    /// Inverse of [`TopViewLabel::to_gray`]; other values are rejected.
    pub fn from_gray(img: &image::GrayImage) -> Result<Self, AnnotationError> {
        let cells = img
            .pixels()
            .map(|p| match p[0] {
                0 => Ok(Label::NotRoad),
                255 => Ok(Label::Road),
                128 => Ok(Label::Unknown),
                other => Err(AnnotationError::Invalid(format!("label value {other}"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            width: img.width() as usize,
            height: img.height() as usize,
            cells,
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), AnnotationError> {
        let path = path.as_ref();
        self.to_gray().save(path).map_err(|source| AnnotationError::Image {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| AnnotationError::Image {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_gray(&img.to_luma8())
    }

    /// The label grid seen by a cloud transformed with `aug`. Each target cell
    /// looks up the source cell under the inverse transform (nearest cell);
    /// cells that fall outside the source grid become Unknown.
    pub fn augment(&self, spec: &GridSpec, aug: Augmentation) -> TopViewLabel {
        if aug == Augmentation::IDENTITY {
            return self.clone();
        }
        let (sin, cos) = (aug.angle_deg as f64).to_radians().sin_cos();
        let mut out = self.clone();
        for row in 0..self.height {
            for col in 0..self.width {
                let (x, mut y) = spec.cell_center(row, col);
                if aug.mirrored {
                    y = -y;
                }
                // undo the rotation
                let (sx, sy) = (x * cos + y * sin, -x * sin + y * cos);
                out.cells[row * self.width + col] = match spec.cell_of(sx, sy) {
                    Some((r, c)) => self.get(r, c),
                    None => Label::Unknown,
                };
            }
        }
        out
    }
}

/// Counters from [`project_points`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProjectionStats {
    pub labeled: usize,
    pub behind: usize,
    pub outside: usize,
    pub invalid: usize,
    pub degenerate: usize,
}

/// Labels every point by the annotation pixel it projects onto. Coordinates
/// are untouched.
pub fn project_points(
    cloud: &PointCloud,
    calib: &CameraCalibration,
    ann: &PerspectiveAnnotation,
) -> (PointCloud, ProjectionStats) {
    let mut stats = ProjectionStats::default();
    let labels = cloud
        .points()
        .iter()
        .map(|p| {
            let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
            match calib.project(x, y, z) {
                Projection::Degenerate => {
                    stats.degenerate += 1;
                    Label::Unknown
                }
                Projection::Behind => {
                    stats.behind += 1;
                    Label::Unknown
                }
                Projection::Pixel { .. } => match calib.pixel_of(x, y, z) {
                    None => {
                        stats.outside += 1;
                        Label::Unknown
                    }
                    Some((r, c)) if r < ann.height && c < ann.width => {
                        let l = ann.label_at(r, c);
                        if l == Label::Unknown {
                            stats.invalid += 1;
                        } else {
                            stats.labeled += 1;
                        }
                        l
                    }
                    Some(_) => {
                        stats.outside += 1;
                        Label::Unknown
                    }
                },
            }
        })
        .collect();
    let out = cloud.clone().with_labels(labels).expect("one label per point");
    (out, stats)
}

/// Parameters of the circular-sector interpolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorParams {
    /// Azimuth width of one sector (degrees).
    pub sector_width_deg: f64,
    /// Consecutive points farther apart than this in range are not bridged.
    pub max_gap: f64,
    /// Spacing of inserted points along range (meters).
    pub step: f64,
}

impl Default for SectorParams {
    fn default() -> Self {
        Self {
            sector_width_deg: 0.2,
            max_gap: 2.0,
            step: 0.1,
        }
    }
}

/// Densifies a cloud by linear interpolation inside narrow azimuth sectors.
///
/// Within a sector, points are ordered by planar range; each consecutive pair
/// at most `max_gap` apart (and with equal labels, when labeled) gets extra
/// points every `step` meters of range. The output is the input followed by
/// the inserted points.
pub fn densify_sectors(cloud: &PointCloud, params: &SectorParams) -> PointCloud {
    assert!(params.sector_width_deg > 0.0 && params.step > 0.0);
    let pts = cloud.points();
    let labels = cloud.labels();
    let mut sectors: BTreeMap<i64, Vec<(f64, usize)>> = BTreeMap::new();
    for (i, p) in pts.iter().enumerate() {
        let az = (p.y as f64).atan2(p.x as f64).to_degrees();
        let key = (az / params.sector_width_deg).floor() as i64;
        sectors.entry(key).or_default().push((p.planar_range(), i));
    }
    let mut out_pts = pts.to_vec();
    let mut out_labels = labels.map(<[Label]>::to_vec);
    for members in sectors.values_mut() {
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for pair in members.windows(2) {
            let ((ra, ia), (rb, ib)) = (pair[0], pair[1]);
            let gap = rb - ra;
            if gap > params.max_gap || gap <= params.step {
                continue;
            }
            if let Some(l) = labels {
                if l[ia] != l[ib] {
                    continue;
                }
            }
            let (a, b) = (pts[ia], pts[ib]);
            let mut k = 1;
            while (k as f64) * params.step < gap - 1e-9 {
                let t = (k as f64) * params.step / gap;
                let lerp = |u: f32, v: f32| (u as f64 + t * (v as f64 - u as f64)) as f32;
                out_pts.push(LidarPoint::new(
                    lerp(a.x, b.x),
                    lerp(a.y, b.y),
                    lerp(a.z, b.z),
                    lerp(a.reflectivity, b.reflectivity),
                ));
                if let (Some(ol), Some(l)) = (out_labels.as_mut(), labels) {
                    ol.push(l[ia]);
                }
                k += 1;
            }
        }
    }
    let out = PointCloud::new(out_pts).expect("interpolated points stay finite");
    match out_labels {
        Some(l) => out.with_labels(l).expect("label per point"),
        None => out,
    }
}

/// Bins labeled points into cells: Unknown where no point carries a class,
/// otherwise Road when Road points are at least half of the classed points.
pub fn labels_to_topview(labeled: &PointCloud, spec: &GridSpec) -> TopViewLabel {
    let mut road = vec![0u32; spec.num_cells()];
    let mut total = vec![0u32; spec.num_cells()];
    if let Some(labels) = labeled.labels() {
        for (p, &l) in labeled.points().iter().zip(labels) {
            if l == Label::Unknown {
                continue;
            }
            if let Some(i) = spec.cell_index(p.x as f64, p.y as f64) {
                total[i] += 1;
                if l == Label::Road {
                    road[i] += 1;
                }
            }
        }
    }
    let cells = road
        .iter()
        .zip(&total)
        .map(|(&r, &t)| match t {
            0 => Label::Unknown,
            _ if 2 * r >= t => Label::Road,
            _ => Label::NotRoad,
        })
        .collect();
    TopViewLabel {
        width: spec.width_px(),
        height: spec.height_px(),
        cells,
    }
}

/// Full PCP mapping: densify, project, bin.
pub fn pcp_topview(
    cloud: &PointCloud,
    calib: &CameraCalibration,
    ann: &PerspectiveAnnotation,
    spec: &GridSpec,
    params: &SectorParams,
) -> TopViewLabel {
    let dense = densify_sectors(&cloud.clone().without_labels(), params);
    let (labeled, _) = project_points(&dense, calib, ann);
    labels_to_topview(&labeled, spec)
}

/// IPM by sampling: every cell center, placed at `ground_height`, is projected
/// into the image and takes the label of the nearest pixel.
pub fn ipm_topview(
    ann: &PerspectiveAnnotation,
    calib: &CameraCalibration,
    spec: &GridSpec,
    ground_height: f64,
) -> TopViewLabel {
    let mut out = TopViewLabel::filled(spec, Label::Unknown);
    for row in 0..out.height {
        for col in 0..out.width {
            let (x, y) = spec.cell_center(row, col);
            if let Some((r, c)) = calib.pixel_of(x, y, ground_height) {
                if r < ann.height && c < ann.width {
                    out.cells[row * out.width + col] = ann.label_at(r, c);
                }
            }
        }
    }
    out
}

/// Cells where both labels are known and differ.
pub fn disagreement(a: &TopViewLabel, b: &TopViewLabel) -> usize {
    a.cells
        .iter()
        .zip(&b.cells)
        .filter(|(&x, &y)| x != Label::Unknown && y != Label::Unknown && x != y)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Forward-looking pinhole at the origin: camera z = lidar x,
    /// camera x = −lidar y, camera y = −lidar z.
    fn pinhole(f: f64, cx: f64, cy: f64, w: usize, h: usize) -> CameraCalibration {
        let k = Matrix3x4::new(f, 0.0, cx, 0.0, 0.0, f, cy, 0.0, 0.0, 0.0, 1.0, 0.0);
        let axes = Matrix4::new(
            0.0, -1.0, 0.0, 0.0, //
            0.0, 0.0, -1.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        CameraCalibration::new(k * axes, w, h).unwrap()
    }

    fn cloud(pts: &[(f32, f32, f32)]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&(x, y, z)| LidarPoint::new(x, y, z, 0.5)).collect()).unwrap()
    }

    #[test]
    fn point_behind_camera_is_unknown() {
        let calib = pinhole(100.0, 50.0, 50.0, 100, 100);
        let ann = PerspectiveAnnotation::new(100, 100, vec![true; 10_000], vec![true; 10_000]).unwrap();
        let (out, stats) = project_points(&cloud(&[(-5.0, 0.0, 0.0)]), &calib, &ann);
        assert_eq!(out.labels().unwrap(), &[Label::Unknown]);
        assert_eq!(stats.behind, 1);
    }

    #[test]
    fn projection_hits_single_road_pixel() {
        let calib = pinhole(100.0, 50.0, 50.0, 100, 100);
        // hand multiply: (10, -1, -2) → camera (1, 2, 10) → pixel (60, 70)
        assert_eq!(calib.project(10.0, -1.0, -2.0), Projection::Pixel { u: 60.0, v: 70.0 });
        let mut road = vec![false; 10_000];
        road[70 * 100 + 60] = true;
        let ann = PerspectiveAnnotation::new(100, 100, road, vec![true; 10_000]).unwrap();
        let (out, stats) = project_points(&cloud(&[(10.0, -1.0, -2.0), (10.0, 1.0, -2.0)]), &calib, &ann);
        assert_eq!(out.labels().unwrap(), &[Label::Road, Label::NotRoad]);
        assert_eq!(stats.labeled, 2);
        assert_eq!(out.points(), cloud(&[(10.0, -1.0, -2.0), (10.0, 1.0, -2.0)]).points());
    }

    #[test]
    fn invalid_mask_gives_unknown() {
        let calib = pinhole(100.0, 50.0, 50.0, 100, 100);
        let ann = PerspectiveAnnotation::new(100, 100, vec![false; 10_000], vec![false; 10_000]).unwrap();
        let (out, _) = project_points(&cloud(&[(10.0, 0.0, -1.0), (5.0, 1.0, 0.0)]), &calib, &ann);
        assert!(out.labels().unwrap().iter().all(|&l| l == Label::Unknown));
    }

    #[test]
    fn degenerate_projection_counted() {
        let calib = pinhole(100.0, 50.0, 50.0, 100, 100);
        let ann = PerspectiveAnnotation::new(100, 100, vec![true; 10_000], vec![true; 10_000]).unwrap();
        let (out, stats) = project_points(&cloud(&[(0.0, 1.0, 1.0)]), &calib, &ann);
        assert_eq!(stats.degenerate, 1);
        assert_eq!(out.labels().unwrap(), &[Label::Unknown]);
    }

    #[test]
    fn road_outside_valid_rejected() {
        assert!(PerspectiveAnnotation::new(1, 1, vec![true], vec![false]).is_err());
    }

    #[test]
    fn kitti_calibration_composes() {
        let text = "P0: 1 0 0 0 0 1 0 0 0 0 1 0\n\
                    P2: 100 0 50 0 0 100 50 0 0 0 1 0\n\
                    R0_rect: 1 0 0 0 1 0 0 0 1\n\
                    Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0\n";
        let calib = CameraCalibration::from_kitti_str(text, 100, 100).unwrap();
        assert_eq!(calib, pinhole(100.0, 50.0, 50.0, 100, 100));
        assert!(CameraCalibration::from_kitti_str("P2: 1 2 3\n", 10, 10).is_err());
    }

    #[test]
    fn densify_single_point_unchanged() {
        let c = cloud(&[(10.0, 0.0, -1.0)]);
        assert_eq!(densify_sectors(&c, &SectorParams::default()), c);
    }

    #[test]
    fn densify_inserts_midpoint() {
        let c = cloud(&[(10.0, 0.0, -1.0), (11.0, 0.0, -2.0)]);
        let out = densify_sectors(&c, &SectorParams { step: 0.5, ..Default::default() });
        assert_eq!(out.len(), 3);
        assert_eq!(out.points()[2], LidarPoint::new(10.5, 0.0, -1.5, 0.5));
    }

    #[test]
    fn densify_respects_sectors_and_labels() {
        let c = cloud(&[(10.0, 0.0, -1.0), (11.0, 1.0, -1.0)]);
        assert_eq!(densify_sectors(&c, &SectorParams::default()).len(), 2);
        let labeled = cloud(&[(10.0, 0.0, -1.0), (11.0, 0.0, -1.0)])
            .with_labels(vec![Label::Road, Label::NotRoad])
            .unwrap();
        assert_eq!(densify_sectors(&labeled, &SectorParams::default()).len(), 2);
        let same = labeled.clone().with_labels(vec![Label::Road, Label::Road]).unwrap();
        let out = densify_sectors(&same, &SectorParams::default());
        assert_eq!(out.len(), 11);
        assert!(out.labels().unwrap().iter().all(|&l| l == Label::Road));
    }

    #[test]
    fn densify_skips_large_gaps() {
        let c = cloud(&[(10.0, 0.0, -1.0), (12.5, 0.0, -1.0)]);
        assert_eq!(densify_sectors(&c, &SectorParams::default()).len(), 2);
    }

    #[test]
    fn majority_and_tie_rules() {
        let spec = GridSpec::default();
        let pts = [(20.01, 0.01, 0.0); 8];
        let labels = vec![
            Label::Road,
            Label::Road,
            Label::Road,
            Label::NotRoad,
            Label::Unknown,
            Label::Unknown,
            Label::Unknown,
            Label::Unknown,
        ];
        let tv = labels_to_topview(&cloud(&pts).with_labels(labels).unwrap(), &spec);
        let (r, c) = spec.cell_of(20.01, 0.01).unwrap();
        assert_eq!(tv.get(r, c), Label::Road);
        assert_eq!(tv.count(Label::Unknown), spec.num_cells() - 1);

        let tie = cloud(&pts[..4])
            .with_labels(vec![Label::Road, Label::NotRoad, Label::NotRoad, Label::Road])
            .unwrap();
        assert_eq!(labels_to_topview(&tie, &spec).get(r, c), Label::Road);
        let minority = cloud(&pts[..3])
            .with_labels(vec![Label::Road, Label::NotRoad, Label::NotRoad])
            .unwrap();
        assert_eq!(labels_to_topview(&minority, &spec).get(r, c), Label::NotRoad);
    }

    #[test]
    fn ipm_outside_image_unknown_and_full_mask_road() {
        let spec = GridSpec::default();
        // narrow camera: most of the grid falls outside the image
        let calib = pinhole(1000.0, 50.0, 50.0, 100, 100);
        let n = 100 * 100;
        let ann = PerspectiveAnnotation::new(100, 100, vec![true; n], vec![true; n]).unwrap();
        let tv = ipm_topview(&ann, &calib, &spec, -1.73);
        assert!(tv.count(Label::Unknown) > 0);
        assert!(tv.count(Label::Road) > 0);
        assert_eq!(tv.count(Label::NotRoad), 0);
    }

    #[test]
    fn label_png_roundtrip_and_rejects_other_values() {
        let spec = GridSpec::new(0.0, 0.3, 0.0, 0.2, 0.1).unwrap();
        let tv = TopViewLabel {
            width: 2,
            height: 3,
            cells: vec![Label::Road, Label::NotRoad, Label::Unknown, Label::Road, Label::Road, Label::NotRoad],
        };
        assert_eq!((spec.width_px(), spec.height_px()), (2, 3));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.png");
        tv.save_png(&path).unwrap();
        assert_eq!(TopViewLabel::load_png(&path).unwrap(), tv);
        let img = image::GrayImage::from_raw(1, 1, vec![7]).unwrap();
        assert!(TopViewLabel::from_gray(&img).is_err());
    }

    #[test]
    fn label_mirror_matches_cloud_mirror() {
        let spec = GridSpec::default();
        let pts: Vec<_> = (0..50).map(|i| (10.05 + i as f32 * 0.6, -7.05 + i as f32 * 0.2, -1.0)).collect();
        let labels: Vec<_> = (0..50).map(|i| if i % 3 == 0 { Label::Road } else { Label::NotRoad }).collect();
        let c = cloud(&pts).with_labels(labels).unwrap();
        let aug = Augmentation { angle_deg: 0, mirrored: true };
        assert_eq!(
            labels_to_topview(&c, &spec).augment(&spec, aug),
            labels_to_topview(&c.augment(aug), &spec)
        );
    }
}
