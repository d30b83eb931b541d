//! On-disk dataset layout shared by the generator, the annotation tools and
//! the trainer.
//!
//! ```text
//! <root>/velodyne/<id>.bin     scans
//! <root>/calib/<id>.txt        camera calibration
//! <root>/gt_image/<id>.png     perspective road annotation
//! <root>/gt_topview/<id>.png   top-view labels from scene geometry
//! <root>/pcp_topview/<id>.png  labels transferred by point projection
//! <root>/ipm_topview/<id>.png  labels transferred by inverse perspective mapping
//! <root>/manifest.txt          train/val split
//! ```

use std::fs;
use std::path::Path;

use crate::annotation::{ipm_topview, pcp_topview, CameraCalibration, PerspectiveAnnotation, TopViewLabel};
use crate::config::RunConfig;
use crate::pointcloud::load_velodyne_bin;
use crate::synth::SceneSpec;
use crate::trainer::{Category, ExampleId, SplitManifest};
use crate::Error;

pub const MANIFEST: &str = "manifest.txt";

fn ensure_dir(p: &Path) -> Result<(), Error> {
    fs::create_dir_all(p).map_err(|source| {
        crate::trainer::TrainError::Io {
            path: p.display().to_string(),
            source,
        }
        .into()
    })
}

/// Both transferred label images of one example.
pub struct Transferred {
    pub pcp: TopViewLabel,
    pub ipm: TopViewLabel,
}

/// Transfers the perspective annotation of `id` into the top view with both
/// mappings and writes `pcp_topview/<id>.png` and `ipm_topview/<id>.png`.
pub fn annotate_example(root: &Path, id: &str, cfg: &RunConfig) -> Result<Transferred, Error> {
    let cloud = load_velodyne_bin(root.join("velodyne").join(format!("{id}.bin")))?;
    let ann = PerspectiveAnnotation::load_png(root.join("gt_image").join(format!("{id}.png")))?;
    let calib = CameraCalibration::load_kitti(root.join("calib").join(format!("{id}.txt")), ann.width, ann.height)?;
    let pcp = pcp_topview(&cloud, &calib, &ann, &cfg.grid, &cfg.annotation.sector);
    let ipm = ipm_topview(&ann, &calib, &cfg.grid, cfg.annotation.ground_height);
    for (dir, label) in [("pcp_topview", &pcp), ("ipm_topview", &ipm)] {
        ensure_dir(&root.join(dir))?;
        label.save_png(root.join(dir).join(format!("{id}.png")))?;
    }
    Ok(Transferred { pcp, ipm })
}

/// Scene seeds are derived from the run seed so that every example differs.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64)
}

/// Example id of the `index`-th synthetic scene; categories rotate.
pub fn synth_example(index: usize) -> ExampleId {
    let category = Category::ALL[index % 3];
    ExampleId {
        category,
        id: format!("{category}_{index:06}"),
    }
}

/// Generates `train + val` random scenes, their transferred labels and a
/// manifest putting the first `train` scenes in the training split.
pub fn synth_dataset(root: &Path, train: usize, val: usize, seed: u64, cfg: &RunConfig) -> Result<SplitManifest, Error> {
    ensure_dir(root)?;
    let mut manifest = SplitManifest::default();
    for i in 0..train + val {
        let ex = synth_example(i);
        let spec = SceneSpec::random(scene_seed(seed, i));
        let scene = spec.generate(&cfg.grid)?;
        scene.write(root, &ex.id)?;
        annotate_example(root, &ex.id, cfg)?;
        if i < train {
            manifest.train.push(ex);
        } else {
            manifest.val.push(ex);
        }
    }
    let path = root.join(MANIFEST);
    fs::write(&path, manifest.to_text()).map_err(|source| {
        Error::Train(crate::trainer::TrainError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    Ok(manifest)
}
