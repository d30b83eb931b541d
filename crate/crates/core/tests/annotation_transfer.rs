use std::collections::BTreeSet;

use lodnn::annotation::{densify_sectors, disagreement, ipm_topview, labels_to_topview, pcp_topview, project_points, SectorParams};
use lodnn::synth::{BoxObstacle, SceneSpec};
use lodnn::{GridSpec, Label, LidarPoint, PointCloud, TopViewLabel};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn both_known(a: &TopViewLabel, b: &TopViewLabel) -> usize {
    a.cells.iter().zip(&b.cells).filter(|(x, y)| **x != Label::Unknown && **y != Label::Unknown).count()
}

#[test]
fn flat_world_mappings_agree_everywhere_both_are_known() {
    let grid = GridSpec::default();
    let spec = SceneSpec::flat_world(26.0);
    let s = spec.generate(&grid).unwrap();
    let pcp = pcp_topview(&s.cloud, &s.calibration, &s.annotation, &grid, &SectorParams::default());
    let ipm = ipm_topview(&s.annotation, &s.calibration, &grid, -spec.ground_z);
    assert!(both_known(&pcp, &ipm) > 10_000);
    assert_eq!(disagreement(&pcp, &ipm), 0);
    assert!(pcp.count(Label::Road) > 0 && pcp.count(Label::NotRoad) > 0);
}

#[test]
fn raised_obstacle_splits_the_mappings() {
    let grid = GridSpec::default();
    let mut spec = SceneSpec::flat_world(26.0);
    spec.boxes.push(BoxObstacle {
        center: (17.02, 0.0),
        size: (4.0, 1.8),
        height: 2.0,
        clearance: 0.3,
    });
    let s = spec.generate(&grid).unwrap();
    let pcp = pcp_topview(&s.cloud, &s.calibration, &s.annotation, &grid, &SectorParams::default());
    let ipm = ipm_topview(&s.annotation, &s.calibration, &grid, -spec.ground_z);
    let ground = -spec.ground_z as f32;
    let footprint: BTreeSet<(usize, usize)> = s
        .cloud
        .points()
        .iter()
        .filter(|p| p.z > ground + 0.01)
        .filter_map(|p| grid.cell_of(p.x as f64, p.y as f64))
        .collect();
    assert!(!footprint.is_empty());
    assert!(footprint.iter().all(|&(r, c)| pcp.get(r, c) == Label::NotRoad));
    assert!(footprint.iter().any(|&(r, c)| ipm.get(r, c) == Label::Road));
}

#[test]
fn pcp_matches_exact_truth_on_flat_scene() {
    let grid = GridSpec::default();
    let s = SceneSpec::flat_world(26.0).generate(&grid).unwrap();
    let pcp = pcp_topview(&s.cloud, &s.calibration, &s.annotation, &grid, &SectorParams::default());
    let known = pcp.cells.iter().filter(|l| **l != Label::Unknown).count();
    let agree = pcp.cells.iter().zip(&s.truth.cells).filter(|(p, t)| **p != Label::Unknown && p == t).count();
    assert!(known > 0);
    assert!(agree as f64 >= 0.99 * known as f64, "{agree} of {known}");
}

#[test]
fn pcp_matches_exact_truth_on_curbed_scenes() {
    // curbs and buildings: the mapping still agrees with geometry on nearly
    // every cell it labels
    let grid = GridSpec::default();
    for seed in [1, 2] {
        let mut spec = SceneSpec::random(seed);
        spec.scanner.range_noise = 0.0;
        spec.boxes.clear();
        let s = spec.generate(&grid).unwrap();
        let pcp = pcp_topview(&s.cloud, &s.calibration, &s.annotation, &grid, &SectorParams::default());
        let known = pcp.cells.iter().filter(|l| **l != Label::Unknown).count();
        let agree = pcp.cells.iter().zip(&s.truth.cells).filter(|(p, t)| **p != Label::Unknown && p == t).count();
        assert!(agree as f64 >= 0.97 * known as f64, "seed {seed}: {agree} of {known}");
    }
}

fn scene_cloud() -> (lodnn::synth::SyntheticScene, GridSpec) {
    let grid = GridSpec::new(6.0, 46.0, -10.0, 10.0, 0.5).unwrap();
    (SceneSpec::random(5).generate(&grid).unwrap(), grid)
}

#[test]
fn projection_only_touches_labels() {
    let (s, _) = scene_cloud();
    let bare = s.cloud.clone().without_labels();
    let (labeled, stats) = project_points(&bare, &s.calibration, &s.annotation);
    assert_eq!(labeled.points(), bare.points());
    assert_eq!(labeled.labels().unwrap().len(), bare.len());
    assert!(stats.labeled > 0 && stats.behind > 0);
}

#[test]
fn densified_points_are_collinear_with_their_generators() {
    let (s, _) = scene_cloud();
    let bare = s.cloud.clone().without_labels();
    let params = SectorParams::default();
    let dense = densify_sectors(&bare, &params);
    assert_eq!(&dense.points()[..bare.len()], bare.points());
    assert!(dense.len() > bare.len());
    // each inserted point sits on a segment between two originals of its
    // sector; check by distance to the nearest such segment
    let sector = |p: &LidarPoint| ((p.y as f64).atan2(p.x as f64).to_degrees() / params.sector_width_deg).floor() as i64;
    let mut by_sector: std::collections::HashMap<i64, Vec<LidarPoint>> = std::collections::HashMap::new();
    for p in bare.points() {
        by_sector.entry(sector(p)).or_default().push(*p);
    }
    for q in dense.points()[bare.len()..].iter().step_by(97) {
        // rounding can move an inserted point across a sector edge
        let members: Vec<LidarPoint> = (sector(q) - 1..=sector(q) + 1)
            .filter_map(|k| by_sector.get(&k))
            .flatten()
            .copied()
            .collect();
        let best = members
            .iter()
            .flat_map(|a| members.iter().map(move |b| (a, b)))
            .filter(|(a, b)| a != b)
            .map(|(a, b)| segment_distance(q, a, b))
            .fold(f64::INFINITY, f64::min);
        // coordinates are single precision
        assert!(best < 1e-5, "residual {best}");
    }
}

fn segment_distance(q: &LidarPoint, a: &LidarPoint, b: &LidarPoint) -> f64 {
    let v = |p: &LidarPoint| [p.x as f64, p.y as f64, p.z as f64];
    let (q, a, b) = (v(q), v(a), v(b));
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let aq = [q[0] - a[0], q[1] - a[1], q[2] - a[2]];
    let len2: f64 = ab.iter().map(|x| x * x).sum();
    let t = (aq.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0);
    (0..3).map(|k| (aq[k] - t * ab[k]).powi(2)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn binning_ignores_point_order(
        pts in prop::collection::vec((6.0f32..46.0, -10.0f32..10.0, 0u8..3), 1..300),
        seed in 0u64..100,
    ) {
        let grid = GridSpec::new(6.0, 46.0, -10.0, 10.0, 1.0).unwrap();
        let mut items: Vec<(LidarPoint, Label)> = pts
            .iter()
            .map(|&(x, y, l)| (LidarPoint::new(x, y, -1.7, 0.2), [Label::Road, Label::NotRoad, Label::Unknown][l as usize]))
            .collect();
        let build = |items: &[(LidarPoint, Label)]| {
            let cloud = PointCloud::new(items.iter().map(|i| i.0).collect()).unwrap();
            labels_to_topview(&cloud.with_labels(items.iter().map(|i| i.1).collect()).unwrap(), &grid)
        };
        let a = build(&items);
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, build(&items));
    }
}
