//! Small hand-checkable cases, each compared against a value computed
//! independently of the library.

use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use foresteyes_core::consensus::{
    aggregate, convergence, difficulty_tables, entropy_difficulty, time_stats, AnswerRecord,
    Difficulty, TaskResult, TaskTruth, TruthIndex, VolunteerKind, VoteConfig,
};
use foresteyes_core::groundtruth::{segment_accuracy, GtVariant, SegmentGT, SegmentGtEntry};
use foresteyes_core::raster::{compose, crop_resample, GeoRef, PixelRect, Stretch};
use foresteyes_core::segment::{
    ift_slic, refine_kmeans, slic, IftSlicParams, RefineParams, SegParams, SlicParams,
};
use foresteyes_core::{Answer, BandStack, Cover, SegmentLabel, Segmentation};

fn rec(task: &str, i: usize, answer: Answer, seconds: i64) -> AnswerRecord {
    let start =
        Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::minutes(i as i64);
    AnswerRecord {
        classification_id: format!("{task}-{i}"),
        volunteer_id: format!("v{i}"),
        volunteer_kind: VolunteerKind::Registered,
        workflow_id: "wf".into(),
        task_id: task.into(),
        answer,
        started_at: start,
        finished_at: start + chrono::Duration::seconds(seconds),
    }
}

#[test]
fn nearest_neighbor_halves_a_4x4_grid() {
    let plane: Vec<f32> = (0..16).map(|v| v as f32).collect();
    let geo = GeoRef {
        pixel_size: 30.0,
        ..GeoRef::default()
    };
    let stack = BandStack::new(4, 4, vec![plane.clone()], vec!["b".into()], geo, None).unwrap();
    let out = crop_resample(&stack, PixelRect::new(0, 0, 4, 4), 60.0).unwrap();
    assert_eq!(out.dims(), (2, 2));
    assert_eq!(out.pixel_size(), 60.0);
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(out.get(0, i, j), plane[(2 * i) * 4 + 2 * j]);
        }
    }
}

#[test]
fn percentile_stretch_of_eleven_values() {
    let plane: Vec<f32> = (0..=10).map(|v| (v * 10) as f32).collect();
    let stack = BandStack::from_bands(11, 1, vec![plane.clone(); 3]).unwrap();
    let rgb = compose(&stack, [0, 1, 2], Stretch::new(2.0, 98.0).unwrap()).unwrap();
    let ch = &rgb.channels[0];
    assert_eq!(*ch.iter().min().unwrap(), 0);
    assert_eq!(*ch.iter().max().unwrap(), 255);
    assert!(ch.windows(2).all(|w| w[0] <= w[1]));
    // Linear-interpolated 2nd and 98th percentiles of 0..100 step 10 are 2 and 98.
    let (lo, hi) = (2.0, 98.0);
    for (v, &c) in plane.iter().zip(ch) {
        let want = ((*v as f64 - lo) / (hi - lo) * 255.0)
            .round()
            .clamp(0.0, 255.0) as u8;
        assert_eq!(c, want, "value {v}");
    }
}

fn halves(w: usize, h: usize) -> BandStack {
    let plane: Vec<f32> = (0..w * h)
        .map(|p| if p % w < w / 2 { 0.0 } else { 255.0 })
        .collect();
    BandStack::from_bands(w, h, vec![plane; 3]).unwrap()
}

fn assert_no_straddle(seg: &Segmentation, img: &BandStack) {
    for (id, px) in seg.pixels_by_segment() {
        let first = img.band(0)[px[0]];
        assert!(
            px.iter().all(|&p| img.band(0)[p] == first),
            "segment {id} straddles the edge"
        );
    }
}

#[test]
fn slic_respects_a_hard_edge() {
    let img = halves(20, 20);
    let seg = slic(
        &img,
        SlicParams {
            n_segments: 4,
            compactness: 1.0,
            iterations: 10,
        },
    )
    .unwrap();
    assert_no_straddle(&seg, &img);
}

#[test]
fn ift_slic_respects_a_hard_edge() {
    let img = halves(20, 20);
    let seg = ift_slic(
        &img,
        IftSlicParams {
            n_segments: 4,
            alpha: 100.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_no_straddle(&seg, &img);
}

#[test]
fn separated_blobs_become_separate_children() {
    let (w, h) = (20, 12);
    let blob = |p: usize| {
        let (r, c) = (p / w, p % w);
        (2..6).contains(&r) && ((1..6).contains(&c) || (13..18).contains(&c))
    };
    let plane: Vec<f32> = (0..w * h)
        .map(|p| if blob(p) { 240.0 } else { 15.0 })
        .collect();
    let img = BandStack::from_bands(w, h, vec![plane; 3]).unwrap();
    let parent = Segmentation::from_labels(w, h, vec![0; w * h], SegParams::new("one")).unwrap();
    let (refined, report) = refine_kmeans(&img, &parent, &[0], RefineParams::default()).unwrap();
    // Oracle: the children covering blob pixels, each holding one whole blob.
    let mut blob_children: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for p in (0..w * h).filter(|&p| blob(p)) {
        blob_children
            .entry(refined.labels()[p])
            .or_default()
            .push(p);
    }
    assert_eq!(blob_children.len(), 2, "{blob_children:?}");
    assert!(blob_children.values().all(|px| px.len() == 20));
    assert!(report[0].children.len() > report[0].k);
}

#[test]
fn accuracy_on_three_segments() {
    let entry = |label: SegmentLabel, majority: Cover| SegmentGtEntry {
        hor: 1.0,
        majority,
        label,
    };
    let reference = SegmentGT {
        variant: GtVariant::WithUndefined,
        entries: BTreeMap::from([
            (0, entry(SegmentLabel::Forest, Cover::Forest)),
            (1, entry(SegmentLabel::NonForest, Cover::NonForest)),
            (2, entry(SegmentLabel::Undefined, Cover::Forest)),
        ]),
    };
    let consensus = BTreeMap::from([
        (0, Answer::Forest),
        (1, Answer::Forest),
        (2, Answer::Undefined),
    ]);
    let acc = segment_accuracy(&consensus, &reference).unwrap();
    assert_eq!(format!("{:.2}", acc.overall.percent.unwrap()), "66.67");
    assert_eq!(acc.per_class[&SegmentLabel::Forest].percent, Some(100.0));
    assert_eq!(acc.per_class[&SegmentLabel::NonForest].percent, Some(0.0));
    assert_eq!(acc.per_class[&SegmentLabel::Undefined].percent, Some(100.0));
}

#[test]
fn entropy_of_ten_five_zero() {
    let e = entropy_difficulty(&[10, 5, 0], 3).unwrap();
    // H = log2(3) − 2/3 for p = (2/3, 1/3).
    let raw = 3f64.log2() - 2.0 / 3.0;
    assert!((e.raw - raw).abs() < 1e-12);
    assert!((e.normalized - raw / 3f64.log2()).abs() < 1e-12);
    assert_eq!(format!("{:.4} {:.4}", e.raw, e.normalized), "0.9183 0.5794");
    assert_eq!(e.difficulty, Difficulty::Medium);
}

#[test]
fn early_majority_flips_later() {
    let seq = [Answer::Forest; 3]
        .into_iter()
        .chain([Answer::NonForest; 12]);
    let records: Vec<_> = seq.enumerate().map(|(i, a)| rec("t", i, a, 5)).collect();
    let cfg = VoteConfig::default();
    let rep = convergence(&records, &["t".into()], &[5, 15], &cfg).unwrap();
    assert_eq!(rep.percent, vec![0.0, 100.0]);
    let five = foresteyes_core::consensus::majority_vote(
        &records[..5],
        "t",
        &VoteConfig {
            redundancy: 5,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(five.consensus, Answer::Forest);
    let (results, _) = aggregate(&records, &cfg).unwrap();
    assert_eq!(results[0].consensus, Answer::NonForest);
}

#[test]
fn outlier_durations_are_filtered() {
    let records: Vec<_> = [2, 3, 4, 600]
        .iter()
        .enumerate()
        .map(|(i, &s)| rec("t", i, Answer::Forest, s))
        .collect();
    let stats = time_stats(&records, &[]);
    let overall = stats.overall.unwrap();
    assert_eq!(
        (overall.mean_seconds, overall.answers, stats.excluded),
        (3.0, 3, 1)
    );
}

#[test]
fn accuracy_by_difficulty() {
    let result = |id: &str, consensus: Answer, difficulty: Difficulty| TaskResult {
        task_id: id.into(),
        counts: vec![],
        consensus,
        tie: false,
        entropy_raw: 0.0,
        entropy_norm: 0.0,
        difficulty,
        mean_duration: None,
    };
    let results = vec![
        result("a", Answer::Forest, Difficulty::Easy),
        result("b", Answer::NonForest, Difficulty::Easy),
        result("c", Answer::Forest, Difficulty::Hard),
    ];
    let truth = |segment_id, label| TaskTruth {
        segment_id,
        hor: 1.0,
        gt_u: label,
        gt_m: label,
    };
    let index = TruthIndex {
        entries: BTreeMap::from([
            ("a".into(), truth(0, SegmentLabel::Forest)),
            ("b".into(), truth(1, SegmentLabel::NonForest)),
            ("c".into(), truth(2, SegmentLabel::NonForest)),
        ]),
    };
    let tables = difficulty_tables(&results, Some(&index));
    let by = tables.accuracy_by_difficulty.unwrap();
    assert_eq!(by[&Difficulty::Easy].gt_m.percent, Some(100.0));
    assert_eq!(by[&Difficulty::Hard].gt_m.percent, Some(0.0));
}
