//! Pixel-level road metrics: confusion counts, threshold sweeps, MaxF and AP,
//! the ROI study and the comparison of two label sources.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::annotation::{disagreement, TopViewLabel};
use crate::pointcloud::Label;
use crate::raster::GridSpec;

/// Number of points kept in a reported precision–recall curve.
pub const CURVE_POINTS: usize = 1000;

/// The ROI bounds of the x-range study, in meters.
pub const ROI_BOUNDS: [f64; 6] = [46.0, 41.0, 36.0, 31.0, 26.0, 21.0];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: prediction {pred:?} vs truth {truth:?}")]
    Shape { pred: (usize, usize), truth: (usize, usize) },
    #[error("{0}")]
    Contract(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// Per-pixel road confidence in `[0, 1]`, row-major, same layout as the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, EvalError> {
        if data.len() != width * height {
            return Err(EvalError::Contract(format!("{} values for a {height}x{width} map", data.len())));
        }
        Ok(Self { width, height, data })
    }

    /// 1 on Road cells, 0 elsewhere.
    pub fn from_label(label: &TopViewLabel) -> Self {
        let data = label.cells.iter().map(|&c| if c == Label::Road { 1.0 } else { 0.0 }).collect();
        Self {
            width: label.width,
            height: label.height,
            data,
        }
    }

    /// The confidence map as a 16-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), EvalError> {
        let px: Vec<u16> = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width as u32, self.height as u32, px)
            .expect("buffer sized to map");
        img.save(path).map_err(|source| EvalError::Image {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load_png(path: &Path) -> Result<Self, EvalError> {
        let img = image::open(path)
            .map_err(|source| EvalError::Image {
                path: path.display().to_string(),
                source,
            })?
            .into_luma16();
        let (w, h) = img.dimensions();
        let data = img.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
        Self::new(w as usize, h as usize, data)
    }

    /// Road probability as blue intensity over an optional gray background
    /// with values in `[0, 1]`.
    pub fn save_overlay_png(&self, background: Option<&[f32]>, path: &Path) -> Result<(), EvalError> {
        if background.is_some_and(|b| b.len() != self.data.len()) {
            return Err(EvalError::Contract("overlay background size differs from map".into()));
        }
        let mut px = Vec::with_capacity(self.data.len() * 3);
        for (i, &p) in self.data.iter().enumerate() {
            let g = background.map_or(0.0, |b| b[i].clamp(0.0, 1.0) * 0.5);
            let blue = g.max(p.clamp(0.0, 1.0));
            px.extend([(g * 255.0) as u8, (g * 255.0) as u8, (blue * 255.0).round() as u8]);
        }
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, px).expect("buffer sized to map");
        img.save(path).map_err(|source| EvalError::Image {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// `2·pre·rec / (pre + rec)`, or 0 when both are 0.
pub fn f1_score(pre: f64, rec: f64) -> f64 {
    if pre + rec > 0.0 {
        2.0 * pre * rec / (pre + rec)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub pre: f64,
    pub rec: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub f1: f64,
    /// Some metric had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

impl MetricPoint {
    pub fn from_counts(threshold: f64, c: ConfusionCounts) -> Self {
        let (pre, d1) = ratio(c.tp, c.tp + c.fp);
        let (rec, d2) = ratio(c.tp, c.tp + c.fn_);
        let (fpr, d3) = ratio(c.fp, c.fp + c.tn);
        let (fnr, d4) = ratio(c.fn_, c.fn_ + c.tp);
        Self {
            threshold,
            counts: c,
            pre,
            rec,
            fpr,
            fnr,
            f1: f1_score(pre, rec),
            degenerate: d1 || d2 || d3 || d4,
        }
    }
}

/// Restricts evaluation to rows whose x-extent lies at or below `x_upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roi {
    pub first_row: usize,
}

impl Roi {
    pub fn all() -> Self {
        Self { first_row: 0 }
    }

    pub fn x_upper(spec: &GridSpec, x_upper: f64) -> Result<Self, EvalError> {
        if !(x_upper > spec.x_min && x_upper <= spec.x_max + 1e-9) {
            return Err(EvalError::Config(format!(
                "x upper bound {x_upper} outside ({}, {}]",
                spec.x_min, spec.x_max
            )));
        }
        let first_row = ((spec.x_max - x_upper) / spec.cell_size - 1e-9).ceil().max(0.0) as usize;
        Ok(Self { first_row })
    }
}

fn check_pair(pred: &ConfidenceMap, truth: &TopViewLabel) -> Result<(), EvalError> {
    if (pred.height, pred.width) != (truth.height, truth.width) {
        return Err(EvalError::Shape {
            pred: (pred.height, pred.width),
            truth: (truth.height, truth.width),
        });
    }
    Ok(())
}

/// Counts at one threshold; a pixel is predicted Road iff confidence ≥ τ.
/// Unknown truth pixels are skipped.
pub fn confusion(pred: &ConfidenceMap, truth: &TopViewLabel, tau: f64, roi: Roi) -> Result<ConfusionCounts, EvalError> {
    check_pair(pred, truth)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(EvalError::Contract(format!("threshold {tau} outside [0, 1]")));
    }
    let mut c = ConfusionCounts::default();
    let start = roi.first_row.min(truth.height) * truth.width;
    for (&p, &t) in pred.data[start..].iter().zip(&truth.cells[start..]) {
        let road = f64::from(p) >= tau;
        match (t, road) {
            (Label::Unknown, _) => {}
            (Label::Road, true) => c.tp += 1,
            (Label::Road, false) => c.fn_ += 1,
            (Label::NotRoad, true) => c.fp += 1,
            (Label::NotRoad, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSweep {
    /// Reported curve, by decreasing threshold; at most [`CURVE_POINTS`].
    pub points: Vec<MetricPoint>,
    /// Best F1 over every attainable threshold.
    pub max_f: f64,
    /// Operating point achieving `max_f` (highest such threshold).
    pub best: MetricPoint,
    pub ap: f64,
    pub evaluated: u64,
    pub unknown: u64,
}

/// Pooled sweep over an evaluation set.
///
/// Every distinct confidence value is an attainable threshold; the exact
/// curve is built from cumulative counts after sorting, so MaxF and AP are
/// exact and depend only on the ordering of the confidences.
pub fn sweep(pairs: &[(&ConfidenceMap, &TopViewLabel)], roi: Roi) -> Result<ThresholdSweep, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Contract("empty evaluation set".into()));
    }
    let mut samples: Vec<(f32, bool)> = Vec::new();
    let mut unknown = 0;
    for (pred, truth) in pairs {
        check_pair(pred, truth)?;
        let start = roi.first_row.min(truth.height) * truth.width;
        for (&p, &t) in pred.data[start..].iter().zip(&truth.cells[start..]) {
            match t {
                Label::Unknown => unknown += 1,
                Label::Road => samples.push((p, true)),
                Label::NotRoad => samples.push((p, false)),
            }
        }
    }
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = samples.iter().filter(|s| s.1).count() as u64;
    let negatives = samples.len() as u64 - positives;

    let mut exact = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < samples.len() {
        let v = samples[i].0;
        while i < samples.len() && samples[i].0 == v {
            if samples[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let c = ConfusionCounts {
            tp,
            fp,
            tn: negatives - fp,
            fn_: positives - tp,
        };
        exact.push(MetricPoint::from_counts(f64::from(v), c));
    }

    let empty = MetricPoint::from_counts(
        1.0,
        ConfusionCounts {
            tn: negatives,
            fn_: positives,
            ..Default::default()
        },
    );
    let best = exact
        .iter()
        .fold(None::<&MetricPoint>, |acc, p| match acc {
            Some(b) if b.f1 >= p.f1 => Some(b),
            _ => Some(p),
        })
        .copied()
        .unwrap_or(empty);

    let ap = match exact.first() {
        None => 0.0,
        Some(first) => {
            let mut area = 0.0;
            let (mut r0, mut p0) = (0.0, first.pre);
            for p in &exact {
                area += (p.rec - r0) * (p.pre + p0) / 2.0;
                r0 = p.rec;
                p0 = p.pre;
            }
            area
        }
    };

    let points = if exact.len() <= CURVE_POINTS {
        exact
    } else {
        let last = exact.len() - 1;
        (0..CURVE_POINTS)
            .map(|k| exact[(k * last + (CURVE_POINTS - 1) / 2) / (CURVE_POINTS - 1)])
            .collect()
    };
    Ok(ThresholdSweep {
        points,
        max_f: best.f1,
        best,
        ap,
        evaluated: samples.len() as u64,
        unknown,
    })
}

/// One sweep per x upper bound.
pub fn roi_study(
    pairs: &[(&ConfidenceMap, &TopViewLabel)],
    spec: &GridSpec,
    bounds: &[f64],
) -> Result<Vec<(f64, ThresholdSweep)>, EvalError> {
    bounds
        .iter()
        .map(|&b| Ok((b, sweep(pairs, Roi::x_upper(spec, b)?)?)))
        .collect()
}

pub const METRIC_HEADER: &str = "MaxF,AP,PRE,REC,FPR,FNR";

/// Metrics at the MaxF point, in percent.
pub fn metric_cells(s: &ThresholdSweep) -> String {
    let b = &s.best;
    format!(
        "{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}",
        100.0 * s.max_f,
        100.0 * s.ap,
        100.0 * b.pre,
        100.0 * b.rec,
        100.0 * b.fpr,
        100.0 * b.fnr
    )
}

pub fn roi_table_csv(rows: &[(f64, ThresholdSweep)]) -> String {
    let mut out = format!("x_upper_m,{METRIC_HEADER}\n");
    for (b, s) in rows {
        let _ = writeln!(out, "{b},{}", metric_cells(s));
    }
    out
}

/// Two-column `recall precision` text.
pub fn pr_curve_text(s: &ThresholdSweep) -> String {
    let mut out = String::from("# recall precision\n");
    for p in &s.points {
        let _ = writeln!(out, "{:.6} {:.6}", p.rec, p.pre);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingComparison {
    pub pcp: ThresholdSweep,
    pub ipm: ThresholdSweep,
    /// Cells labeled differently by the two sources, per example id.
    pub disagreement: Vec<(String, usize)>,
}

/// Scores one prediction set against two label sources with matching ids.
pub fn compare_mappings(
    preds: &[(String, ConfidenceMap)],
    pcp: &[(String, TopViewLabel)],
    ipm: &[(String, TopViewLabel)],
    roi: Roi,
) -> Result<MappingComparison, EvalError> {
    if preds.len() != pcp.len() || preds.len() != ipm.len() {
        return Err(EvalError::Config(format!(
            "{} predictions, {} PCP labels, {} IPM labels",
            preds.len(),
            pcp.len(),
            ipm.len()
        )));
    }
    let mut with_pcp = Vec::new();
    let mut with_ipm = Vec::new();
    let mut dis = Vec::new();
    for ((id, p), ((ida, a), (idb, b))) in preds.iter().zip(pcp.iter().zip(ipm)) {
        if id != ida || id != idb {
            return Err(EvalError::Config(format!("example ids differ: {id} / {ida} / {idb}")));
        }
        if (a.height, a.width) != (b.height, b.width) {
            return Err(EvalError::Contract(format!("label sources for {id} differ in size")));
        }
        let n = disagreement(a, b);
        dis.push((id.clone(), n));
        with_pcp.push((p, a));
        with_ipm.push((p, b));
    }
    Ok(MappingComparison {
        pcp: sweep(&with_pcp, roi)?,
        ipm: sweep(&with_ipm, roi)?,
        disagreement: dis,
    })
}

pub fn mapping_table_csv(split: &str, cmp: &MappingComparison) -> String {
    format!(
        "split,mapping,{METRIC_HEADER}\n{split},IPM,{}\n{split},PCP,{}\n",
        metric_cells(&cmp.ipm),
        metric_cells(&cmp.pcp)
    )
}
