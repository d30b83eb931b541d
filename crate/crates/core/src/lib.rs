//! LIDAR-only road detection.
//!
//! Point clouds are rasterized into top-view statistic images, a fully
//! convolutional network with a dilated context module predicts per-cell
//! road probability, and the result is scored with pixel-level precision,
//! recall and F-measure. Camera annotations are carried into the top view
//! either by projecting LIDAR points into the image or by inverse
//! perspective mapping. A ray-cast scene generator provides data with exact
//! ground truth.

pub mod annotation;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod nn;
pub mod pointcloud;
pub mod raster;
pub mod synth;
pub mod trainer;

pub use annotation::{CameraCalibration, PerspectiveAnnotation, TopViewLabel};
pub use config::RunConfig;
pub use eval::{ConfidenceMap, ConfusionCounts, MetricPoint, ThresholdSweep};
pub use model::{Lodnn, ModelConfig};
pub use pointcloud::{Augmentation, Label, LidarPoint, PointCloud};
pub use raster::{GridSpec, InputChannels, TopViewTensor};
pub use trainer::{SplitManifest, TrainConfig};

/// Any failure from the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    PointCloud(#[from] pointcloud::PointCloudError),
    #[error(transparent)]
    Raster(#[from] raster::RasterError),
    #[error(transparent)]
    Annotation(#[from] annotation::AnnotationError),
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Train(#[from] trainer::TrainError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
}
