//! Top-view rasterization of point clouds.
//!
//! The x-y plane is cut into square cells. Six statistics are computed per
//! cell (point count, mean reflectivity, and mean / std / min / max
//! elevation) and each becomes one image channel. Row 0 is the far edge
//! (`x_max`), column 0 is the left edge (`y_max`), so the vehicle sits at the
//! bottom of the image looking up.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::pointcloud::PointCloud;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("channel {channel} out of range for a {channels}-channel tensor")]
    ChannelOutOfRange { channel: usize, channels: usize },
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
    #[error("malformed tensor file: {0}")]
    Malformed(String),
}

/// Channel names in storage order.
pub const STAT_CHANNELS: [&str; 6] = ["count", "mean_refl", "mean_z", "std_z", "min_z", "max_z"];
pub const OCCUPANCY_CHANNELS: [&str; 1] = ["occupancy"];

/// Maps raw cell statistics into `[0, 1]` image intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// Counts saturate at this many points.
    pub count_cap: f64,
    /// Elevation window in the sensor frame (meters).
    pub z_min: f64,
    pub z_max: f64,
    /// Standard deviation saturates here (meters).
    pub std_max: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            count_cap: 64.0,
            z_min: -2.5,
            z_max: 1.5,
            std_max: 1.0,
        }
    }
}

impl Normalization {
    fn elevation(&self, z: f64) -> f32 {
        ((z.clamp(self.z_min, self.z_max) - self.z_min) / (self.z_max - self.z_min)) as f32
    }
}

/// The top-view discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell_size: f64,
    pub norm: Normalization,
}

impl Default for GridSpec {
    /// 40 m ahead (x ∈ [6, 46]) by 20 m across (y ∈ [−10, 10]) at 0.10 m:
    /// 200 px wide × 400 px tall.
    fn default() -> Self {
        Self {
            x_min: 6.0,
            x_max: 46.0,
            y_min: -10.0,
            y_max: 10.0,
            cell_size: 0.10,
            norm: Normalization::default(),
        }
    }
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, cell_size: f64) -> Result<Self, RasterError> {
        let spec = Self {
            x_min,
            x_max,
            y_min,
            y_max,
            cell_size,
            norm: Normalization::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        let vals = [self.x_min, self.x_max, self.y_min, self.y_max, self.cell_size];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(RasterError::InvalidGrid("non-finite bound".into()));
        }
        if self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(RasterError::InvalidGrid("empty extent".into()));
        }
        if self.cell_size <= 0.0 {
            return Err(RasterError::InvalidGrid("cell_size must be positive".into()));
        }
        for (name, extent) in [("x", self.x_max - self.x_min), ("y", self.y_max - self.y_min)] {
            let cells = extent / self.cell_size;
            if (cells - cells.round()).abs() > 1e-6 {
                return Err(RasterError::InvalidGrid(format!(
                    "{name} extent {extent} is not a multiple of cell_size {}",
                    self.cell_size
                )));
            }
        }
        let n = &self.norm;
        if !(n.count_cap > 0.0 && n.z_max > n.z_min && n.std_max > 0.0) {
            return Err(RasterError::InvalidGrid("degenerate normalization".into()));
        }
        Ok(())
    }

    /// Image width: cells along y.
    pub fn width_px(&self) -> usize {
        ((self.y_max - self.y_min) / self.cell_size).round() as usize
    }

    /// Image height: cells along x.
    pub fn height_px(&self) -> usize {
        ((self.x_max - self.x_min) / self.cell_size).round() as usize
    }

    pub fn num_cells(&self) -> usize {
        self.width_px() * self.height_px()
    }

    /// `(row, col)` of the cell holding `(x, y)`, using half-open intervals.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max) {
            return None;
        }
        let ix = ((x - self.x_min) / self.cell_size).floor() as usize;
        let iy = ((y - self.y_min) / self.cell_size).floor() as usize;
        let (h, w) = (self.height_px(), self.width_px());
        // floor can land on the far edge when x is within rounding of x_max
        if ix >= h || iy >= w {
            return None;
        }
        Some((h - 1 - ix, w - 1 - iy))
    }

    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        self.cell_of(x, y).map(|(r, c)| r * self.width_px() + c)
    }

    /// Center of a cell in sensor coordinates.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let ix = self.height_px() - 1 - row;
        let iy = self.width_px() - 1 - col;
        (
            self.x_min + (ix as f64 + 0.5) * self.cell_size,
            self.y_min + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Lower x edge of a row.
    pub fn row_x_low(&self, row: usize) -> f64 {
        self.x_min + (self.height_px() - 1 - row) as f64 * self.cell_size
    }
}

/// Raw per-cell statistics, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellStats {
    pub count: u32,
    pub mean_refl: f64,
    pub mean_z: f64,
    pub std_z: f64,
    pub min_z: f64,
    pub max_z: f64,
}

#[derive(Debug, Clone, Copy)]
struct Accum {
    count: u32,
    sum_refl: f64,
    sum_z: f64,
    sum_z2: f64,
    min_z: f64,
    max_z: f64,
}

impl Default for Accum {
    fn default() -> Self {
        Self {
            count: 0,
            sum_refl: 0.0,
            sum_z: 0.0,
            sum_z2: 0.0,
            min_z: f64::INFINITY,
            max_z: f64::NEG_INFINITY,
        }
    }
}

impl Accum {
    fn push(&mut self, z: f64, refl: f64) {
        self.count += 1;
        self.sum_refl += refl;
        self.sum_z += z;
        self.sum_z2 += z * z;
        self.min_z = self.min_z.min(z);
        self.max_z = self.max_z.max(z);
    }

    fn finish(&self) -> CellStats {
        if self.count == 0 {
            return CellStats::default();
        }
        let n = self.count as f64;
        let mean_z = (self.sum_z / n).clamp(self.min_z, self.max_z);
        let var = (self.sum_z2 / n - mean_z * mean_z).max(0.0);
        CellStats {
            count: self.count,
            mean_refl: self.sum_refl / n,
            mean_z,
            std_z: var.sqrt(),
            min_z: self.min_z,
            max_z: self.max_z,
        }
    }
}

/// Per-cell statistics for a whole grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub spec: GridSpec,
    pub cells: Vec<CellStats>,
}

impl CellGrid {
    pub fn accumulate(cloud: &PointCloud, spec: &GridSpec) -> Self {
        let mut acc = vec![Accum::default(); spec.num_cells()];
        for p in cloud.points() {
            if let Some(i) = spec.cell_index(p.x as f64, p.y as f64) {
                acc[i].push(p.z as f64, p.reflectivity as f64);
            }
        }
        Self {
            spec: *spec,
            cells: acc.iter().map(Accum::finish).collect(),
        }
    }

    pub fn total_count(&self) -> u64 {
        self.cells.iter().map(|c| c.count as u64).sum()
    }

    pub fn to_tensor(&self) -> TopViewTensor {
        let n = &self.spec.norm;
        let plane = self.cells.len();
        let mut data = vec![0.0f32; 6 * plane];
        for (i, c) in self.cells.iter().enumerate() {
            if c.count == 0 {
                continue;
            }
            let vals = [
                (c.count as f64).min(n.count_cap) as f32 / n.count_cap as f32,
                c.mean_refl.clamp(0.0, 1.0) as f32,
                n.elevation(c.mean_z),
                (c.std_z.min(n.std_max) / n.std_max) as f32,
                n.elevation(c.min_z),
                n.elevation(c.max_z),
            ];
            for (ch, v) in vals.into_iter().enumerate() {
                data[ch * plane + i] = v;
            }
        }
        TopViewTensor {
            channels: 6,
            height: self.spec.height_px(),
            width: self.spec.width_px(),
            data,
            names: STAT_CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Channel-major stack of top-view images with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopViewTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
    pub names: Vec<String>,
}

impl TopViewTensor {
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.height + row) * self.width + col]
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select(&self, channels: &[usize]) -> TopViewTensor {
        let mut data = Vec::with_capacity(channels.len() * self.height * self.width);
        for &c in channels {
            data.extend_from_slice(self.channel(c));
        }
        TopViewTensor {
            channels: channels.len(),
            height: self.height,
            width: self.width,
            data,
            names: channels.iter().map(|&c| self.names[c].clone()).collect(),
        }
    }

    /// `TVT1` container: magic, `u32` channels/height/width, `f32` payload,
    /// newline-separated channel names. All little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(b"TVT1");
        for d in [self.channels, self.height, self.width] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(self.names.join("\n").as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, RasterError> {
        if bytes.len() < 16 || &bytes[..4] != b"TVT1" {
            return Err(RasterError::Malformed("missing TVT1 header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (channels, height, width) = (dim(0), dim(1), dim(2));
        let n = channels
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| RasterError::Malformed("dimension overflow".into()))?;
        let end = 16 + 4 * n;
        if bytes.len() < end {
            return Err(RasterError::Malformed(format!(
                "payload needs {} bytes, file has {}",
                end,
                bytes.len()
            )));
        }
        let data = bytes[16..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let footer = std::str::from_utf8(&bytes[end..])
            .map_err(|_| RasterError::Malformed("channel names are not utf-8".into()))?;
        let names: Vec<String> = if footer.is_empty() {
            Vec::new()
        } else {
            footer.split('\n').map(str::to_string).collect()
        };
        if names.len() != channels {
            return Err(RasterError::Malformed(format!(
                "{} channel names for {} channels",
                names.len(),
                channels
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
            names,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| RasterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    /// Writes one channel as an 8-bit grayscale PNG, `round(255 · v)`.
    pub fn export_channel_png(&self, channel: usize, path: impl AsRef<Path>) -> Result<(), RasterError> {
        if channel >= self.channels {
            return Err(RasterError::ChannelOutOfRange {
                channel,
                channels: self.channels,
            });
        }
        let pixels = self
            .channel(channel)
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, pixels)
            .expect("buffer sized from tensor dims");
        let path = path.as_ref();
        img.save(path).map_err(|source| RasterError::Image {
            path: path.display().to_string(),
            source,
        })
    }
}

/// The six-statistic top-view stack.
pub fn rasterize(cloud: &PointCloud, spec: &GridSpec) -> TopViewTensor {
    CellGrid::accumulate(cloud, spec).to_tensor()
}

/// One binary channel: 1 where a cell holds at least one return.
pub fn rasterize_occupancy(cloud: &PointCloud, spec: &GridSpec) -> TopViewTensor {
    let mut data = vec![0.0f32; spec.num_cells()];
    for p in cloud.points() {
        if let Some(i) = spec.cell_index(p.x as f64, p.y as f64) {
            data[i] = 1.0;
        }
    }
    TopViewTensor {
        channels: 1,
        height: spec.height_px(),
        width: spec.width_px(),
        data,
        names: OCCUPANCY_CHANNELS.iter().map(|s| s.to_string()).collect(),
    }
}

/// Which input images the network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputChannels {
    #[default]
    Statistics,
    Occupancy,
}

impl InputChannels {
    pub fn count(self) -> usize {
        match self {
            InputChannels::Statistics => 6,
            InputChannels::Occupancy => 1,
        }
    }

    pub fn rasterize(self, cloud: &PointCloud, spec: &GridSpec) -> TopViewTensor {
        match self {
            InputChannels::Statistics => rasterize(cloud, spec),
            InputChannels::Occupancy => rasterize_occupancy(cloud, spec),
        }
    }
}
