//! Synthetic inputs shared by the benchmarks.

use foresteyes_core::consensus::AnswerRecord;
use foresteyes_core::groundtruth::{GtVariant, SegmentGT, SegmentGtEntry};
use foresteyes_core::raster::BandStack;
use foresteyes_core::simulate::{simulate_campaign, PoolSpec, SimParams};
use foresteyes_core::{Cover, SegmentId, SegmentLabel};

/// Deterministic `bands`-band scene with smooth gradients and a few blocks of
/// distinct cover, loosely resembling a cleared patch in forest.
pub fn synthetic_scene(width: usize, height: usize, bands: usize) -> BandStack {
    let planes = (0..bands)
        .map(|b| {
            (0..width * height)
                .map(|p| {
                    let (r, c) = ((p / width) as f32, (p % width) as f32);
                    let cleared = ((r as usize / 16) + (c as usize / 24)) % 3 == 0;
                    let base = if cleared { 180.0 } else { 60.0 };
                    base + (b as f32 * 7.0) + 0.1 * r + 0.05 * c + ((p * 31 + b * 17) % 13) as f32
                })
                .collect()
        })
        .collect();
    BandStack::from_bands(width, height, planes).expect("valid synthetic scene")
}

/// Campaign of `tasks` tasks answered by a 40-volunteer pool at 85% accuracy,
/// with a 1-in-5 share of Undefined references.
pub fn synthetic_answers(tasks: usize, redundancy: usize, seed: u64) -> Vec<AnswerRecord> {
    let entries = (0..tasks as SegmentId)
        .map(|id| {
            let (majority, label, hor) = match id % 5 {
                0 => (Cover::Forest, SegmentLabel::Undefined, 0.6),
                1 | 2 => (Cover::Forest, SegmentLabel::Forest, 1.0),
                _ => (Cover::NonForest, SegmentLabel::NonForest, 0.9),
            };
            (
                id,
                SegmentGtEntry {
                    hor,
                    majority,
                    label,
                },
            )
        })
        .collect();
    let gt = SegmentGT {
        variant: GtVariant::WithUndefined,
        entries,
    };
    let pool = PoolSpec::default().build().expect("default pool");
    let params = SimParams::new("bench", redundancy, seed);
    simulate_campaign(&gt, &pool, &params).expect("simulation")
}
