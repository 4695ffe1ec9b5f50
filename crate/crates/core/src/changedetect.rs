//! Two-epoch deforestation detection: reference change (Forest → NonForest)
//! against the later epoch's consensus.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consensus::TaskResult;
use crate::error::{Error, Result};
use crate::groundtruth::BinaryGT;
use crate::label::{Answer, Cover};
use crate::raster::render_labels_gray;
use crate::segment::{SegmentId, Segmentation};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangePlane {
    pub width: usize,
    pub height: usize,
    pub changed: Vec<bool>,
}

impl ChangePlane {
    pub fn count(&self) -> usize {
        self.changed.iter().filter(|&&c| c).count()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        render_labels_gray(self.width, self.height, &self.changed)?.save_png(path)
    }
}

/// Pixels that were Forest in epoch a and NonForest in epoch b.
/// Regeneration (NonForest → Forest) is not change.
pub fn gt_change(gt_a: &BinaryGT, gt_b: &BinaryGT) -> Result<ChangePlane> {
    if gt_a.dims() != gt_b.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt_a.dims(),
            actual: gt_b.dims(),
        });
    }
    let changed = gt_a
        .cells
        .iter()
        .zip(&gt_b.cells)
        .map(|(a, b)| *a == Cover::Forest && *b == Cover::NonForest)
        .collect();
    Ok(ChangePlane {
        width: gt_a.width,
        height: gt_a.height,
        changed,
    })
}

/// Where change pixels (or the tasks containing them) ended up in the later
/// epoch. Tied tasks are counted as ties whatever label the draw produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Breakdown {
    /// Consensus NonForest.
    pub detected: usize,
    /// Consensus Forest.
    pub missed: usize,
    pub undefined: usize,
    pub tie: usize,
    pub small: usize,
    /// Inside a segment that has no task result.
    pub no_consensus: usize,
    /// Outside every segment (e.g. discarded during refinement). Pixels only.
    pub unsegmented: usize,
}

impl Breakdown {
    pub fn total(&self) -> usize {
        self.detected
            + self.missed
            + self.undefined
            + self.tie
            + self.small
            + self.no_consensus
            + self.unsegmented
    }

    fn bump(&mut self, result: Option<&TaskResult>) {
        match result {
            None => self.no_consensus += 1,
            Some(r) if r.tie => self.tie += 1,
            Some(r) => match r.consensus {
                Answer::NonForest => self.detected += 1,
                Answer::Forest => self.missed += 1,
                Answer::Undefined => self.undefined += 1,
                Answer::Small => self.small += 1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub epoch_a: String,
    pub epoch_b: String,
    pub gt_change_pixels: usize,
    pub detected_pixels: usize,
    /// `100 × detected / change`; absent when there is no change.
    pub detection_rate: Option<f64>,
    pub pixel_breakdown: Breakdown,
    /// Later-epoch tasks containing at least one change pixel.
    pub task_breakdown: Breakdown,
}

impl ChangeReport {
    pub fn from_breakdown(
        epoch_a: &str,
        epoch_b: &str,
        pixels: Breakdown,
        tasks: Breakdown,
    ) -> ChangeReport {
        let total = pixels.total();
        ChangeReport {
            epoch_a: epoch_a.to_string(),
            epoch_b: epoch_b.to_string(),
            gt_change_pixels: total,
            detected_pixels: pixels.detected,
            detection_rate: (total > 0).then(|| 100.0 * pixels.detected as f64 / total as f64),
            pixel_breakdown: pixels,
            task_breakdown: tasks,
        }
    }
}

/// Broadcast each later-epoch task's consensus to its segment's pixels and
/// tally the change pixels.
pub fn detection_report(
    change: &ChangePlane,
    seg_b: &Segmentation,
    results_b: &[TaskResult],
    task_segments: &BTreeMap<String, SegmentId>,
    epochs: (&str, &str),
) -> Result<ChangeReport> {
    if (change.width, change.height) != seg_b.dims() {
        return Err(Error::DimensionMismatch {
            expected: seg_b.dims(),
            actual: (change.width, change.height),
        });
    }
    let mut by_segment: BTreeMap<SegmentId, &TaskResult> = BTreeMap::new();
    for r in results_b {
        let seg = *task_segments
            .get(&r.task_id)
            .ok_or_else(|| Error::UnknownTask(r.task_id.clone()))?;
        by_segment.insert(seg, r);
    }
    let mut pixels = Breakdown::default();
    let mut touched = BTreeSet::new();
    for (&label, _) in seg_b
        .labels()
        .iter()
        .zip(&change.changed)
        .filter(|(_, c)| **c)
    {
        if seg_b.segment(label).is_none() {
            pixels.unsegmented += 1;
            continue;
        }
        pixels.bump(by_segment.get(&label).copied());
        touched.insert(label);
    }
    let mut tasks = Breakdown::default();
    for id in touched {
        tasks.bump(by_segment.get(&id).copied());
    }
    Ok(ChangeReport::from_breakdown(
        epochs.0, epochs.1, pixels, tasks,
    ))
}
