//! Ray-cast synthetic scenes with exact ground truth.
//!
//! The world is a ground plane at `z = -ground_z` in which a road is cut;
//! everything outside the road is raised by `curb_height`, with vertical curb
//! faces along the road edge. Axis-aligned boxes stand in for vehicles and
//! buildings. The scanner sits at the origin; a pinhole camera sits at a
//! small offset and renders a per-pixel road annotation of the same world.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::annotation::{kitti_calib_text, AnnotationError, CameraCalibration, PerspectiveAnnotation, TopViewLabel};
use crate::pointcloud::{write_velodyne_bin, Label, LidarPoint, PointCloud, PointCloudError};
use crate::raster::GridSpec;

/// Truth supersampling factor per cell side.
pub const TRUTH_SUPERSAMPLE: usize = 10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    PointCloud(#[from] PointCloudError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Piecewise-linear centerline swept by a fixed width. Segment ends are flat;
/// interior vertices are rounded by discs so bends leave no gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSpec {
    pub centerline: Vec<(f64, f64)>,
    pub width: f64,
}

impl RoadSpec {
    pub fn straight(x_from: f64, x_to: f64, y: f64, width: f64) -> Self {
        Self {
            centerline: vec![(x_from, y), (x_to, y)],
            width,
        }
    }

    fn segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.centerline.windows(2).map(|w| (w[0], w[1]))
    }

    fn joints(&self) -> &[(f64, f64)] {
        let n = self.centerline.len();
        if n > 2 {
            &self.centerline[1..n - 1]
        } else {
            &[]
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let r = self.width / 2.0;
        let in_seg = self.segments().any(|(a, b)| {
            let (ux, uy, len) = unit(a, b);
            let (px, py) = (x - a.0, y - a.1);
            let along = px * ux + py * uy;
            let across = ux * py - uy * px;
            (0.0..=len).contains(&along) && across.abs() <= r
        });
        in_seg || self.joints().iter().any(|v| (x - v.0).powi(2) + (y - v.1).powi(2) <= r * r)
    }

    /// Parameter intervals `s ≥ 0` where `o + s·d` lies inside the road, for a
    /// unit planar direction `d`; sorted and merged.
    fn line_intervals(&self, o: (f64, f64), d: (f64, f64)) -> Vec<(f64, f64)> {
        let r = self.width / 2.0;
        let mut spans = Vec::new();
        for (a, b) in self.segments() {
            let (ux, uy, len) = unit(a, b);
            let (px, py) = (o.0 - a.0, o.1 - a.1);
            let along = (px * ux + py * uy, d.0 * ux + d.1 * uy);
            let across = (ux * py - uy * px, ux * d.1 - uy * d.0);
            let mut lo = 0.0f64;
            let mut hi = f64::INFINITY;
            for ((p0, dp), (min, max)) in [(along, (0.0, len)), (across, (-r, r))] {
                if dp.abs() < 1e-15 {
                    if p0 < min || p0 > max {
                        hi = -1.0;
                    }
                } else {
                    let (t1, t2) = ((min - p0) / dp, (max - p0) / dp);
                    lo = lo.max(t1.min(t2));
                    hi = hi.min(t1.max(t2));
                }
            }
            if lo < hi {
                spans.push((lo, hi));
            }
        }
        for v in self.joints() {
            let (px, py) = (o.0 - v.0, o.1 - v.1);
            let bq = px * d.0 + py * d.1;
            let c = px * px + py * py - r * r;
            let disc = bq * bq - c;
            if disc > 0.0 {
                let sq = disc.sqrt();
                let (t1, t2) = (-bq - sq, -bq + sq);
                if t2 > 0.0 {
                    spans.push((t1.max(0.0), t2));
                }
            }
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for s in spans {
            match merged.last_mut() {
                Some(last) if s.0 <= last.1 => last.1 = last.1.max(s.1),
                _ => merged.push(s),
            }
        }
        merged
    }
}

fn unit(a: (f64, f64), b: (f64, f64)) -> (f64, f64, f64) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    (dx / len, dy / len, len)
}

/// Axis-aligned box standing `clearance` above the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxObstacle {
    pub center: (f64, f64),
    /// Extent along x and y.
    pub size: (f64, f64),
    /// Vertical extent of the box body.
    pub height: f64,
    /// Gap between ground and the box bottom.
    pub clearance: f64,
}

impl BoxObstacle {
    fn footprint_contains(&self, x: f64, y: f64) -> bool {
        (x - self.center.0).abs() <= self.size.0 / 2.0 && (y - self.center.1).abs() <= self.size.1 / 2.0
    }

    /// Entry distance of a ray into the box, if any.
    fn intersect(&self, o: [f64; 3], d: [f64; 3], ground: f64) -> Option<f64> {
        let lo = [
            self.center.0 - self.size.0 / 2.0,
            self.center.1 - self.size.1 / 2.0,
            ground + self.clearance,
        ];
        let hi = [
            self.center.0 + self.size.0 / 2.0,
            self.center.1 + self.size.1 / 2.0,
            ground + self.clearance + self.height,
        ];
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if o[k] < lo[k] || o[k] > hi[k] {
                    return None;
                }
            } else {
                let (a, b) = ((lo[k] - o[k]) / d[k], (hi[k] - o[k]) / d[k]);
                t0 = t0.max(a.min(b));
                t1 = t1.min(a.max(b));
            }
        }
        (t0 <= t1).then_some(t0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScannerSpec {
    pub elevations_deg: Vec<f64>,
    pub azimuth_step_deg: f64,
    /// Standard deviation of range noise, meters.
    pub range_noise: f64,
    pub max_range: f64,
}

impl Default for ScannerSpec {
    fn default() -> Self {
        let (lo, hi, n) = (-24.8, 2.0, 64);
        Self {
            elevations_deg: (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
            azimuth_step_deg: 0.2,
            range_noise: 0.0,
            max_range: 80.0,
        }
    }
}

/// Zero-pitch pinhole camera looking along +x.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSpec {
    pub focal: f64,
    pub width: usize,
    pub height: usize,
    pub cx: f64,
    pub cy: f64,
    /// Camera center in scanner coordinates.
    pub offset: (f64, f64, f64),
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            focal: 720.0,
            width: 1242,
            height: 375,
            cx: 621.0,
            cy: 187.5,
            offset: (0.27, 0.0, -0.08),
        }
    }
}

/// Scanner axes (x forward, y left, z up) to camera axes (x right, y down,
/// z forward).
fn scanner_to_camera() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

impl CameraSpec {
    /// Calibration text with `P2 = K[I|0]`, `R0 = I` and the scanner-to-camera
    /// extrinsics.
    pub fn kitti_text(&self) -> String {
        let p2 = Matrix3x4::new(
            self.focal, 0.0, self.cx, 0.0, 0.0, self.focal, self.cy, 0.0, 0.0, 0.0, 1.0, 0.0,
        );
        let r = scanner_to_camera();
        let c = Vector3::new(self.offset.0, self.offset.1, self.offset.2);
        let t = -(r * c);
        let mut tr = Matrix3x4::zeros();
        tr.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        tr.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        kitti_calib_text(&p2, &Matrix3::identity(), &tr)
    }

    pub fn calibration(&self) -> Result<CameraCalibration, AnnotationError> {
        CameraCalibration::from_kitti_str(&self.kitti_text(), self.width, self.height)
    }

    /// Unit ray through the center of pixel `(row, col)`, in scanner axes.
    fn pixel_ray(&self, row: usize, col: usize) -> [f64; 3] {
        let cam = Vector3::new((col as f64 - self.cx) / self.focal, (row as f64 - self.cy) / self.focal, 1.0);
        let d = scanner_to_camera().transpose() * cam.normalize();
        [d.x, d.y, d.z]
    }
}

/// Reflectivity per surface class, before noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflectivity {
    pub road: f64,
    pub off_road: f64,
    pub curb: f64,
    pub obstacle: f64,
    pub noise: f64,
}

impl Default for Reflectivity {
    fn default() -> Self {
        Self {
            road: 0.15,
            off_road: 0.35,
            curb: 0.3,
            obstacle: 0.6,
            noise: 0.03,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub road: RoadSpec,
    pub curb_height: f64,
    pub boxes: Vec<BoxObstacle>,
    /// Ground depth below the scanner, meters (positive).
    pub ground_z: f64,
    pub scanner: ScannerSpec,
    pub camera: CameraSpec,
    pub reflectivity: Reflectivity,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            road: RoadSpec::straight(-20.0, 60.0, 0.0, 8.0),
            curb_height: 0.15,
            boxes: Vec::new(),
            ground_z: 1.73,
            scanner: ScannerSpec::default(),
            camera: CameraSpec::default(),
            reflectivity: Reflectivity::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Material {
    Road,
    OffRoad,
    Curb,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub point: [f64; 3],
    pub material: Material,
}

impl SceneSpec {
    /// A randomized urban-like scene: a winding road, parked and moving
    /// vehicles, and roadside buildings.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce4e);
        let width = rng.random_range(6.0..10.0);
        let mut heading: f64 = rng.random_range(-0.3..0.3);
        let mut p = (-12.0, rng.random_range(-3.0..3.0));
        let mut centerline = vec![p];
        for _ in 0..7 {
            let len = rng.random_range(9.0..14.0);
            p = (p.0 + len * heading.cos(), p.1 + len * heading.sin());
            centerline.push(p);
            heading = (heading + rng.random_range(-0.4..0.4)).clamp(-0.9, 0.9);
        }
        let road = RoadSpec { centerline, width };
        let mut boxes = Vec::new();
        for _ in 0..rng.random_range(1..4) {
            // vehicles on the road, away from the scanner
            let seg = rng.random_range(1..road.centerline.len() - 1);
            let (a, b) = (road.centerline[seg], road.centerline[seg + 1]);
            let t = rng.random_range(0.0..1.0);
            let lateral = rng.random_range(-0.25..0.25) * width;
            let cx = a.0 + t * (b.0 - a.0);
            let cy = a.1 + t * (b.1 - a.1) + lateral;
            if cx.hypot(cy) < 8.0 {
                continue;
            }
            boxes.push(BoxObstacle {
                center: (cx, cy),
                size: (rng.random_range(3.8..4.8), rng.random_range(1.6..2.0)),
                height: rng.random_range(1.0..1.4),
                clearance: 0.25,
            });
        }
        for _ in 0..rng.random_range(3..8) {
            let cx = rng.random_range(5.0..50.0);
            let cy = rng.random_range(-25.0..25.0);
            let size = (rng.random_range(2.0..8.0), rng.random_range(2.0..8.0));
            let lattice = (0..=4).flat_map(|i| (0..=4).map(move |j| (i as f64 / 4.0 - 0.5, j as f64 / 4.0 - 0.5)));
            let overlaps = lattice.into_iter().any(|(u, v)| road.contains(cx + u * size.0, cy + v * size.1));
            if overlaps {
                continue;
            }
            boxes.push(BoxObstacle {
                center: (cx, cy),
                size,
                height: rng.random_range(2.0..6.0),
                clearance: 0.0,
            });
        }
        Self {
            road,
            curb_height: rng.random_range(0.1..0.2),
            boxes,
            ground_z: 1.73,
            scanner: ScannerSpec {
                range_noise: 0.01,
                ..ScannerSpec::default()
            },
            camera: CameraSpec::default(),
            reflectivity: Reflectivity::default(),
            seed,
        }
    }

    /// Noise-free world without curbs: a 30 m wide road ending at `x_end`.
    /// The principal point is shifted vertically so that the road end maps
    /// exactly onto a boundary between two pixel rows.
    pub fn flat_world(x_end: f64) -> Self {
        let mut spec = Self {
            road: RoadSpec::straight(-40.0, x_end, 0.0, 30.0),
            curb_height: 0.0,
            ..Self::default()
        };
        let cam = &mut spec.camera;
        let drop = cam.focal * (spec.ground_z + cam.offset.2) / (x_end - cam.offset.0);
        let boundary = (cam.cy + drop + 0.5).round() - 0.5;
        cam.cy = boundary - drop;
        spec
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if !(self.road.width > 0.0) {
            return bad("road width must be positive");
        }
        if self.road.centerline.len() < 2 || self.road.segments().any(|(a, b)| a == b) {
            return bad("road centerline needs two or more distinct points");
        }
        if !(self.scanner.azimuth_step_deg > 0.0) {
            return bad("azimuth step must be positive");
        }
        if !(self.scanner.range_noise >= 0.0) || !(self.reflectivity.noise >= 0.0) {
            return bad("noise must be non-negative");
        }
        if !(self.curb_height >= 0.0) || !(self.ground_z > 0.0) {
            return bad("curb height must be non-negative and ground below the scanner");
        }
        if self.boxes.iter().any(|b| !(b.size.0 > 0.0 && b.size.1 > 0.0 && b.height > 0.0 && b.clearance >= 0.0)) {
            return bad("box dimensions must be positive");
        }
        Ok(())
    }

    fn ground(&self) -> f64 {
        -self.ground_z
    }

    /// Surface height at a planar location.
    pub fn terrain_height(&self, x: f64, y: f64) -> f64 {
        if self.road.contains(x, y) {
            self.ground()
        } else {
            self.ground() + self.curb_height
        }
    }

    /// Ground-truth class of a planar location: road surface not covered by
    /// an obstacle.
    pub fn is_road(&self, x: f64, y: f64) -> bool {
        self.road.contains(x, y) && !self.boxes.iter().any(|b| b.footprint_contains(x, y))
    }

    fn cast_terrain(&self, o: [f64; 3], d: [f64; 3], max_t: f64) -> Option<Hit> {
        let ground = self.ground();
        let hz = d[0].hypot(d[1]);
        let at = |t: f64| [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]];
        if hz < 1e-12 {
            if d[2] >= 0.0 {
                return None;
            }
            let road = self.road.contains(o[0], o[1]);
            let h = if road { ground } else { ground + self.curb_height };
            let t = (h - o[2]) / d[2];
            let material = if road { Material::Road } else { Material::OffRoad };
            return (t >= 0.0 && t <= max_t).then(|| Hit {
                distance: t,
                point: [o[0], o[1], h],
                material,
            });
        }
        let dir = (d[0] / hz, d[1] / hz);
        let mut cuts: Vec<f64> = Vec::new();
        for (a, b) in self.road.line_intervals((o[0], o[1]), dir) {
            if a > 0.0 {
                cuts.push(a / hz);
            }
            cuts.push(b / hz);
        }
        let mut inside = self.road.contains(o[0], o[1]);
        let mut start = 0.0f64;
        for end in cuts.into_iter().chain(std::iter::once(f64::INFINITY)) {
            if start > max_t {
                return None;
            }
            let h = if inside { ground } else { ground + self.curb_height };
            if start > 0.0 && o[2] + start * d[2] < h {
                let mut p = at(start);
                p[2] = p[2].max(ground);
                return Some(Hit {
                    distance: start,
                    point: p,
                    material: Material::Curb,
                });
            }
            if d[2] < 0.0 {
                let t = (h - o[2]) / d[2];
                if t >= start && t < end {
                    if t > max_t {
                        return None;
                    }
                    let mut p = at(t);
                    p[2] = h;
                    let material = if inside { Material::Road } else { Material::OffRoad };
                    return Some(Hit {
                        distance: t,
                        point: p,
                        material,
                    });
                }
            }
            start = end;
            inside = !inside;
        }
        None
    }

    /// First surface hit along a unit ray within `max_t`.
    pub fn cast(&self, o: [f64; 3], d: [f64; 3], max_t: f64) -> Option<Hit> {
        let terrain = self.cast_terrain(o, d, max_t);
        let ground = self.ground();
        let boxed = self
            .boxes
            .iter()
            .filter_map(|b| b.intersect(o, d, ground))
            .filter(|&t| t <= max_t)
            .min_by(f64::total_cmp);
        match (terrain, boxed) {
            (Some(h), Some(t)) if t >= h.distance => Some(h),
            (_, Some(t)) => Some(Hit {
                distance: t,
                point: [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]],
                material: Material::Obstacle,
            }),
            (h, None) => h,
        }
    }

    /// Labeled scan: Road for returns from the road surface, NotRoad for all
    /// other surfaces.
    pub fn scan(&self) -> Result<PointCloud, SynthError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let range_noise = Normal::new(0.0, self.scanner.range_noise).map_err(|e| SynthError::Invalid(e.to_string()))?;
        let refl_noise = Normal::new(0.0, self.reflectivity.noise).map_err(|e| SynthError::Invalid(e.to_string()))?;
        let n_az = (360.0 / self.scanner.azimuth_step_deg).round() as usize;
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for &el in &self.scanner.elevations_deg {
            let (se, ce) = el.to_radians().sin_cos();
            for k in 0..n_az {
                let az = (-180.0 + k as f64 * self.scanner.azimuth_step_deg).to_radians();
                let d = [ce * az.cos(), ce * az.sin(), se];
                let Some(hit) = self.cast([0.0; 3], d, self.scanner.max_range) else {
                    continue;
                };
                let p = if self.scanner.range_noise > 0.0 {
                    let r = hit.distance + range_noise.sample(&mut rng);
                    [d[0] * r, d[1] * r, d[2] * r]
                } else {
                    hit.point
                };
                let r = &self.reflectivity;
                let base = match hit.material {
                    Material::Road => r.road,
                    Material::OffRoad => r.off_road,
                    Material::Curb => r.curb,
                    Material::Obstacle => r.obstacle,
                };
                let refl = if r.noise > 0.0 { base + refl_noise.sample(&mut rng) } else { base };
                points.push(LidarPoint::new(p[0] as f32, p[1] as f32, p[2] as f32, refl.clamp(0.0, 1.0) as f32));
                labels.push(if hit.material == Material::Road { Label::Road } else { Label::NotRoad });
            }
        }
        Ok(PointCloud::new(points)?.with_labels(labels)?)
    }

    /// Top-view truth from the geometry: each cell is sampled on a
    /// `TRUTH_SUPERSAMPLE²` lattice and labeled Road when at least half of
    /// the samples are road surface.
    pub fn truth(&self, spec: &GridSpec) -> TopViewLabel {
        let mut out = TopViewLabel::filled(spec, Label::NotRoad);
        let n = TRUTH_SUPERSAMPLE;
        let sub = spec.cell_size / n as f64;
        for row in 0..out.height {
            for col in 0..out.width {
                let (cx, cy) = spec.cell_center(row, col);
                let (x0, y0) = (cx - spec.cell_size / 2.0, cy - spec.cell_size / 2.0);
                let mut road = 0;
                for i in 0..n {
                    for j in 0..n {
                        if self.is_road(x0 + (i as f64 + 0.5) * sub, y0 + (j as f64 + 0.5) * sub) {
                            road += 1;
                        }
                    }
                }
                if 2 * road >= n * n {
                    out.cells[row * out.width + col] = Label::Road;
                }
            }
        }
        out
    }

    /// Camera annotation: a pixel is Road when its center ray first meets
    /// the road surface, NotRoad for any other surface, invalid when the ray
    /// meets nothing.
    pub fn render_annotation(&self) -> Result<PerspectiveAnnotation, SynthError> {
        let cam = &self.camera;
        let o = [cam.offset.0, cam.offset.1, cam.offset.2];
        let mut road = Vec::with_capacity(cam.width * cam.height);
        let mut valid = Vec::with_capacity(cam.width * cam.height);
        for row in 0..cam.height {
            for col in 0..cam.width {
                match self.cast(o, cam.pixel_ray(row, col), 500.0) {
                    Some(h) => {
                        road.push(h.material == Material::Road);
                        valid.push(true);
                    }
                    None => {
                        road.push(false);
                        valid.push(false);
                    }
                }
            }
        }
        Ok(PerspectiveAnnotation::new(cam.width, cam.height, road, valid)?)
    }

    pub fn generate(&self, spec: &GridSpec) -> Result<SyntheticScene, SynthError> {
        self.validate()?;
        Ok(SyntheticScene {
            cloud: self.scan()?,
            truth: self.truth(spec),
            annotation: self.render_annotation()?,
            calibration: self.camera.calibration()?,
            calib_text: self.camera.kitti_text(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    /// Scan with exact per-point labels.
    pub cloud: PointCloud,
    pub truth: TopViewLabel,
    pub annotation: PerspectiveAnnotation,
    pub calibration: CameraCalibration,
    pub calib_text: String,
}

impl SyntheticScene {
    /// Writes `velodyne/<id>.bin`, `calib/<id>.txt`, `gt_image/<id>.png` and
    /// `gt_topview/<id>.png` under `root`.
    pub fn write(&self, root: &Path, id: &str) -> Result<(), SynthError> {
        for dir in ["velodyne", "calib", "gt_image", "gt_topview"] {
            let p = root.join(dir);
            fs::create_dir_all(&p).map_err(|source| SynthError::Io {
                path: p.display().to_string(),
                source,
            })?;
        }
        write_velodyne_bin(root.join("velodyne").join(format!("{id}.bin")), &self.cloud)?;
        let calib = root.join("calib").join(format!("{id}.txt"));
        fs::write(&calib, &self.calib_text).map_err(|source| SynthError::Io {
            path: calib.display().to_string(),
            source,
        })?;
        self.annotation.save_png(root.join("gt_image").join(format!("{id}.png")))?;
        self.truth.save_png(root.join("gt_topview").join(format!("{id}.png")))?;
        Ok(())
    }
}
