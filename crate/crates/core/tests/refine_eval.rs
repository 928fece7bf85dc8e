mod support;

use std::fs;

use flowgebd_core::eval::{
    default_taus, evaluate, evaluate_dataset, match_boundaries, score_counts, AnnotationFile,
    AnnotatorMode, PredictionMap,
};
use flowgebd_core::refine::{indices_to_timestamps, refine_timestamps};
use proptest::prelude::*;

#[test]
fn refine_examples() {
    assert_eq!(refine_timestamps(&[1.0, 1.2, 3.0], 0.5), vec![1.0, 3.0]);
    assert_eq!(refine_timestamps(&[2.0], 0.5), vec![2.0]);
    assert_eq!(refine_timestamps(&[2.0], 10.0), vec![2.0]);
    assert_eq!(refine_timestamps(&[1.0, 1.2, 1.4, 1.6], 0.5), vec![1.2]);
    // union of two detectors, and a rare boundary far from the rest
    assert_eq!(refine_timestamps(&[5.0, 5.0, 5.25], 0.5), vec![5.0]);
    assert_eq!(
        refine_timestamps(&[2.5, 5.0, 5.0, 5.25], 0.5),
        vec![2.5, 5.0]
    );
    assert!(refine_timestamps(&[], 0.5).is_empty());
}

#[test]
fn index_conversion() {
    assert_eq!(indices_to_timestamps(&[20, 1], 4.0), vec![5.0, 0.25]);
    assert!(indices_to_timestamps(&[], 4.0).is_empty());
}

fn quarter_grid() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(1u32..200, 0..40)
        .prop_map(|v| v.into_iter().map(|k| k as f64 * 0.25).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn refine_properties(raw in quarter_grid(), theta3 in prop_oneof![Just(0.25), Just(0.5), Just(1.0), 0.1f64..3.0], seed in any::<u64>()) {
        let out = refine_timestamps(&raw, theta3);
        for w in out.windows(2) {
            prop_assert!(w[1] - w[0] >= theta3);
        }
        prop_assert_eq!(refine_timestamps(&out, theta3), out.clone());
        for t in &out {
            prop_assert!(raw.contains(t));
        }
        let mut shuffled = raw.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(refine_timestamps(&shuffled, theta3), out);
    }
}

#[test]
fn matching_example() {
    let m = match_boundaries(&[1.0, 3.0], &[1.1, 5.0], 10.0, 0.05);
    assert_eq!(m, vec![(0, 0)]);
    let c = score_counts(&[1.0, 3.0], &[1.1, 5.0], 10.0, 0.05);
    assert_eq!((c.precision(), c.recall(), c.f1()), (0.5, 0.5, 0.5));
    let c = score_counts(&[], &[2.0], 10.0, 0.05);
    assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
}

#[test]
fn golden_fixture_report() {
    let dir = support::fixture_dir().join("eval");
    let report = evaluate_dataset(
        &dir.join("preds"),
        &dir.join("annotations.json"),
        &default_taus(),
        AnnotatorMode::Max,
    )
    .unwrap();
    let expected = fs::read_to_string(dir.join("expected_report.csv")).unwrap();
    assert_eq!(report.to_csv(), expected);

    let counts: Vec<(f64, f64, f64)> = report
        .scores
        .iter()
        .map(|s| (s.counts.matched, s.counts.predicted, s.counts.ground_truth))
        .collect();
    let mut want = vec![(4.0, 6.0, 7.0); 2];
    want.push((5.0, 6.0, 7.0));
    want.extend([(5.0, 6.0, 6.0); 5]);
    want.extend([(6.0, 6.0, 6.0); 2]);
    assert_eq!(counts, want);
    let f1 = [
        8.0 / 13.0,
        8.0 / 13.0,
        10.0 / 13.0,
        5.0 / 6.0,
        5.0 / 6.0,
        5.0 / 6.0,
        5.0 / 6.0,
        5.0 / 6.0,
        1.0,
        1.0,
    ];
    for (s, want) in report.scores.iter().zip(f1) {
        assert!(
            (s.f1 - want).abs() < 1e-12,
            "tau {}: {} vs {want}",
            s.tau,
            s.f1
        );
    }
    assert!(report.warnings.is_empty());
}

#[test]
fn empty_prediction_dir_scores_zero() {
    let dir = support::fixture_dir().join("eval");
    let empty = tempfile::tempdir().unwrap();
    let report = evaluate_dataset(
        empty.path(),
        &dir.join("annotations.json"),
        &default_taus(),
        AnnotatorMode::Max,
    )
    .unwrap();
    assert!(report.scores.iter().all(|s| s.f1 == 0.0));
    assert_eq!(report.warnings.len(), 3);
}

#[test]
fn single_video_micro_equals_video_score() {
    let ann: AnnotationFile = serde_json::from_str(
        r#"{"videos": [{"video_id": "v", "duration_s": 10.0, "annotators": [[2.0, 6.0], [2.2]]}]}"#,
    )
    .unwrap();
    let mut preds = PredictionMap::new();
    preds.insert("v".into(), (vec![2.1, 7.0], Some(10.0)));
    for mode in [AnnotatorMode::Max, AnnotatorMode::Mean] {
        let r = evaluate(&preds, &ann, &default_taus(), mode).unwrap();
        for (d, v) in r.scores.iter().zip(&r.videos[0].scores) {
            assert!((d.f1 - v.f1).abs() < 1e-12 || mode == AnnotatorMode::Mean);
            assert_eq!(d.counts, v.counts);
        }
    }
}

fn boundary_list() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05f64..19.95, 0..12).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn monotone_in_tau_and_symmetric(preds in boundary_list(), gts in boundary_list()) {
        let taus = default_taus();
        let mut last = (0usize, 0.0f64);
        for &tau in &taus {
            let m = match_boundaries(&preds, &gts, 20.0, tau).len();
            let f1 = score_counts(&preds, &gts, 20.0, tau).f1();
            prop_assert!(m >= last.0);
            prop_assert!(f1 >= last.1);
            prop_assert!(m <= preds.len().min(gts.len()));
            last = (m, f1);
            prop_assert_eq!(m, match_boundaries(&gts, &preds, 20.0, tau).len());
        }
    }
}
