use lodnn::eval::{confusion, f1_score, roi_study, roi_table_csv, sweep, Roi, METRIC_HEADER, ROI_BOUNDS};
use lodnn::{ConfidenceMap, ConfusionCounts, GridSpec, Label, TopViewLabel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(h: usize, w: usize, levels: u32, rng: &mut ChaCha8Rng) -> (ConfidenceMap, TopViewLabel) {
    let data = (0..h * w).map(|_| rng.random_range(0..=levels) as f32 / levels as f32).collect();
    let cells = (0..h * w).map(|_| [Label::Road, Label::NotRoad, Label::Unknown][rng.random_range(0..3)]).collect();
    (ConfidenceMap::new(w, h, data).unwrap(), TopViewLabel { width: w, height: h, cells })
}

fn count_loop(pred: &ConfidenceMap, truth: &TopViewLabel, tau: f64) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for i in 0..pred.data.len() {
        let road = pred.data[i] as f64 >= tau;
        match truth.cells[i] {
            Label::Road if road => c.tp += 1,
            Label::Road => c.fn_ += 1,
            Label::NotRoad if road => c.fp += 1,
            Label::NotRoad => c.tn += 1,
            Label::Unknown => {}
        }
    }
    c
}

/// Tries every distinct observed confidence as a threshold.
fn exhaustive_max_f(pairs: &[(&ConfidenceMap, &TopViewLabel)]) -> f64 {
    let mut taus: Vec<f32> = pairs.iter().flat_map(|(p, _)| p.data.iter().copied()).collect();
    taus.sort_by(f32::total_cmp);
    taus.dedup();
    taus.iter()
        .map(|&t| {
            let mut c = ConfusionCounts::default();
            for (p, l) in pairs {
                c.add(&count_loop(p, l, t as f64));
            }
            let pre = if c.tp + c.fp > 0 { c.tp as f64 / (c.tp + c.fp) as f64 } else { 0.0 };
            let rec = if c.tp + c.fn_ > 0 { c.tp as f64 / (c.tp + c.fn_) as f64 } else { 0.0 };
            f1_score(pre, rec)
        })
        .fold(0.0, f64::max)
}

#[test]
fn confusion_matches_counting_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (p, l) = random_pair(10, 10, 1000, &mut rng);
        let tau = rng.random_range(0.0..=1.0);
        assert_eq!(confusion(&p, &l, tau, Roi::all()).unwrap(), count_loop(&p, &l, tau));
    }
}

#[test]
fn sweep_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (p, l) = random_pair(32, 32, 1 << 20, &mut rng);
        let s = sweep(&[(&p, &l)], Roi::all()).unwrap();
        assert!((s.max_f - exhaustive_max_f(&[(&p, &l)])).abs() < 1e-9);
    }
}

#[test]
fn pooled_sweep_matches_exhaustive_oracle_and_summed_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<_> = (0..5).map(|_| random_pair(12, 9, 50, &mut rng)).collect();
    let refs: Vec<(&ConfidenceMap, &TopViewLabel)> = pairs.iter().map(|(p, l)| (p, l)).collect();
    let s = sweep(&refs, Roi::all()).unwrap();
    assert!((s.max_f - exhaustive_max_f(&refs)).abs() < 1e-9);
    assert!(s.points.len() <= 51);
    for pt in &s.points {
        let mut sum = ConfusionCounts::default();
        for (p, l) in &refs {
            sum.add(&confusion(p, l, pt.threshold, Roi::all()).unwrap());
        }
        assert_eq!(pt.counts, sum);
    }
}

#[test]
fn full_extent_roi_is_a_no_op() {
    let spec = GridSpec::new(6.0, 46.0, -10.0, 10.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (p, l) = random_pair(spec.height_px(), spec.width_px(), 100, &mut rng);
    let full = sweep(&[(&p, &l)], Roi::x_upper(&spec, spec.x_max).unwrap()).unwrap();
    assert_eq!(full, sweep(&[(&p, &l)], Roi::all()).unwrap());
}

#[test]
fn errors_beyond_thirty_meters_favor_short_bounds() {
    let spec = GridSpec::new(6.0, 46.0, -10.0, 10.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (h, w) = (spec.height_px(), spec.width_px());
    let mut truth = TopViewLabel::filled(&spec, Label::NotRoad);
    let mut conf = vec![0.0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            let road = (c as i64 - w as i64 / 2).abs() < 8;
            truth.cells[r * w + c] = if road { Label::Road } else { Label::NotRoad };
            let far = spec.row_x_low(r) >= 30.0;
            conf[r * w + c] = if far { rng.random() } else if road { 0.9 } else { 0.1 };
        }
    }
    let map = ConfidenceMap::new(w, h, conf).unwrap();
    let rows = roi_study(&[(&map, &truth)], &spec, &ROI_BOUNDS).unwrap();
    assert_eq!(rows.len(), 6);
    let at = |b: f64| rows.iter().find(|r| r.0 == b).unwrap().1.max_f;
    assert!(at(26.0) > at(46.0));
    assert_eq!(at(26.0), 1.0);
    let csv = roi_table_csv(&rows);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().ends_with(METRIC_HEADER));
    assert_eq!(lines.count(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn max_f_survives_monotone_relabeling(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, l) = random_pair(16, 16, 400, &mut rng);
        let squared = ConfidenceMap::new(16, 16, p.data.iter().map(|v| v * v).collect()).unwrap();
        let halved = ConfidenceMap::new(16, 16, p.data.iter().map(|v| v / 2.0 + 0.25).collect()).unwrap();
        let base = sweep(&[(&p, &l)], Roi::all()).unwrap();
        for q in [&squared, &halved] {
            let s = sweep(&[(q, &l)], Roi::all()).unwrap();
            prop_assert_eq!(s.max_f, base.max_f);
            prop_assert_eq!(s.ap, base.ap);
        }
    }

    #[test]
    fn sweep_points_are_consistent(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, l) = random_pair(20, 20, 1000, &mut rng);
        let s = sweep(&[(&p, &l)], Roi::all()).unwrap();
        let evaluated = l.cells.iter().filter(|c| **c != Label::Unknown).count() as u64;
        prop_assert_eq!(s.evaluated, evaluated);
        for pt in &s.points {
            prop_assert_eq!(pt.counts.total(), evaluated);
            prop_assert!(s.max_f >= pt.f1);
            if pt.counts.tp + pt.counts.fn_ > 0 {
                prop_assert!((pt.rec + pt.fnr - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(s.points.windows(2).all(|w| w[0].threshold > w[1].threshold));
    }
}
