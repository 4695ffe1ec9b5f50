//! Volunteer task bundles: cropped, outlined panels per segment plus a JSON
//! lines manifest, and the rules that choose which segments become tasks.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::TaskResult;
use crate::error::{Error, Result};
use crate::groundtruth::SegmentGT;
use crate::label::{Answer, Cover};
use crate::raster::{PixelRect, RgbComposite};
use crate::rng::rng_for;
use crate::segment::{SegmentId, Segmentation};

/// Default zoom margin around a segment's bounding box, pixels.
pub const DEFAULT_MARGIN: usize = 10;

/// Yellow contour.
pub const DEFAULT_CONTOUR: [u8; 3] = [255, 255, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelKind {
    Rgb,
    False753,
    Ndvi,
}

impl PanelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PanelKind::Rgb => "rgb",
            PanelKind::False753 => "false753",
            PanelKind::Ndvi => "ndvi",
        }
    }
}

impl std::str::FromStr for PanelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(PanelKind::Rgb),
            "false753" => Ok(PanelKind::False753),
            "ndvi" => Ok(PanelKind::Ndvi),
            other => Err(Error::InvalidParameter(format!(
                "unknown panel kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelRef {
    pub kind: PanelKind,
    /// Relative to the campaign output directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub workflow_id: String,
    pub segment_id: SegmentId,
    pub panels: Vec<PanelRef>,
    pub answer_options: Vec<Answer>,
    pub zoom_window: PixelRect,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panels.len() < 2 {
            return Err(Error::Schema(format!(
                "task {}: at least two panels required",
                self.task_id
            )));
        }
        check_options(&self.answer_options)
    }
}

fn check_options(options: &[Answer]) -> Result<()> {
    let distinct: BTreeSet<_> = options.iter().collect();
    if options.len() < 3 || distinct.len() != options.len() {
        return Err(Error::InvalidParameter(format!(
            "answer options must be at least three distinct labels, got {options:?}"
        )));
    }
    Ok(())
}

pub fn task_id_for(workflow_id: &str, segment_id: SegmentId) -> String {
    format!("{workflow_id}-{segment_id:06}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOptions {
    pub answer_options: Vec<Answer>,
    pub margin: usize,
    pub contour: [u8; 3],
}

impl Default for TaskOptions {
    fn default() -> Self {
        TaskOptions {
            answer_options: vec![Answer::Forest, Answer::NonForest, Answer::Undefined],
            margin: DEFAULT_MARGIN,
            contour: DEFAULT_CONTOUR,
        }
    }
}

/// Pixels of `id` with a 4-neighbor in another segment.
fn contour(seg: &Segmentation, id: SegmentId, window: PixelRect) -> Vec<(usize, usize)> {
    let (w, h) = seg.dims();
    let labels = seg.labels();
    let mut out = Vec::new();
    for r in window.row..window.row_end() {
        for c in window.col..window.col_end() {
            if labels[r * w + c] != id {
                continue;
            }
            let edge = (r > 0 && labels[(r - 1) * w + c] != id)
                || (r + 1 < h && labels[(r + 1) * w + c] != id)
                || (c > 0 && labels[r * w + c - 1] != id)
                || (c + 1 < w && labels[r * w + c + 1] != id);
            if edge {
                out.push((r, c));
            }
        }
    }
    out
}

/// One task per segment: every panel is cropped to the segment's zoom window
/// with the segment outlined, and written to
/// `<out_dir>/<workflow_id>/<task_id>_<kind>.png`.
pub fn generate_tasks(
    seg: &Segmentation,
    panels: &[(PanelKind, &RgbComposite)],
    options: &TaskOptions,
    workflow_id: &str,
    out_dir: &Path,
) -> Result<Vec<TaskSpec>> {
    let all: Vec<SegmentId> = seg.segments().iter().map(|s| s.id).collect();
    generate_tasks_for(seg, &all, panels, options, workflow_id, out_dir)
}

/// [`generate_tasks`] restricted to the listed segments.
pub fn generate_tasks_for(
    seg: &Segmentation,
    segment_ids: &[SegmentId],
    panels: &[(PanelKind, &RgbComposite)],
    options: &TaskOptions,
    workflow_id: &str,
    out_dir: &Path,
) -> Result<Vec<TaskSpec>> {
    if seg.is_empty() || segment_ids.is_empty() {
        return Err(Error::Empty("no segments to turn into tasks".into()));
    }
    let mut ids = segment_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let records = ids
        .iter()
        .map(|&id| seg.segment(id).ok_or(Error::UnknownSegment(id)))
        .collect::<Result<Vec<_>>>()?;
    if panels.len() < 2 {
        return Err(Error::InvalidParameter(
            "at least two panels are required".into(),
        ));
    }
    let kinds: BTreeSet<_> = panels.iter().map(|(k, _)| k).collect();
    if kinds.len() != panels.len() {
        return Err(Error::InvalidParameter(
            "panel kinds must be distinct".into(),
        ));
    }
    for (_, p) in panels {
        if p.dims() != seg.dims() {
            return Err(Error::DimensionMismatch {
                expected: seg.dims(),
                actual: p.dims(),
            });
        }
    }
    check_options(&options.answer_options)?;
    let (w, h) = seg.dims();
    records
        .par_iter()
        .map(|rec| {
            let task_id = task_id_for(workflow_id, rec.id);
            let window = rec.bounding_box.expand_clipped(options.margin, w, h);
            let outline = contour(seg, rec.id, window);
            let mut refs = Vec::with_capacity(panels.len());
            for (kind, composite) in panels {
                let mut crop = composite.crop(window)?;
                for &(r, c) in &outline {
                    crop.set_pixel(r - window.row, c - window.col, options.contour);
                }
                let rel = format!("{workflow_id}/{task_id}_{}.png", kind.as_str());
                crop.save_png(&out_dir.join(&rel))?;
                refs.push(PanelRef {
                    kind: *kind,
                    path: rel,
                });
            }
            Ok(TaskSpec {
                task_id,
                workflow_id: workflow_id.to_string(),
                segment_id: rec.id,
                panels: refs,
                answer_options: options.answer_options.clone(),
                zoom_window: window,
            })
        })
        .collect()
}

pub fn write_manifest<W: Write>(tasks: &[TaskSpec], mut out: W) -> Result<()> {
    for t in tasks {
        let line = serde_json::to_string(t).map_err(|e| Error::json("task manifest", e))?;
        writeln!(out, "{line}").map_err(|e| Error::io("task manifest", e))?;
    }
    Ok(())
}

pub fn read_manifest<R: BufRead>(input: R) -> Result<Vec<TaskSpec>> {
    let mut tasks = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("task manifest", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let spec: TaskSpec = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("task manifest line {}", n + 1), e))?;
        spec.validate()?;
        if !ids.insert(spec.task_id.clone()) {
            return Err(Error::Schema(format!(
                "task manifest line {}: duplicate task {}",
                n + 1,
                spec.task_id
            )));
        }
        tasks.push(spec);
    }
    Ok(tasks)
}

pub fn load_manifest(path: &Path) -> Result<Vec<TaskSpec>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(std::io::BufReader::new(file))
}

pub fn save_manifest(tasks: &[TaskSpec], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_manifest(tasks, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Task id → segment id.
pub fn task_segments(tasks: &[TaskSpec]) -> BTreeMap<String, SegmentId> {
    tasks
        .iter()
        .map(|t| (t.task_id.clone(), t.segment_id))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HorSelection {
    /// Pure Forest segments to add to the impure ones.
    pub n_pure: usize,
    pub seed: u64,
}

/// Every segment with HoR < 1.0, plus a seeded sample of `n_pure` pure
/// Forest segments. Returned in id order.
pub fn select_tasks_by_hor(seg_gt: &SegmentGT, rule: HorSelection) -> Result<Vec<SegmentId>> {
    let mut picked: BTreeSet<SegmentId> = seg_gt
        .entries
        .iter()
        .filter(|(_, e)| e.hor < 1.0)
        .map(|(&id, _)| id)
        .collect();
    let pure: Vec<SegmentId> = seg_gt
        .entries
        .iter()
        .filter(|(_, e)| e.hor >= 1.0 && e.majority == Cover::Forest)
        .map(|(&id, _)| id)
        .collect();
    if rule.n_pure > pure.len() {
        return Err(Error::InvalidParameter(format!(
            "n_pure = {} exceeds the {} pure Forest segments",
            rule.n_pure,
            pure.len()
        )));
    }
    let mut rng = rng_for(rule.seed, &[b"select-pure"]);
    picked.extend(
        sample(&mut rng, pure.len(), rule.n_pure)
            .into_iter()
            .map(|i| pure[i]),
    );
    Ok(picked.into_iter().collect())
}

/// Normalized entropy above which a task is hard.
pub const HARD_ENTROPY: f64 = 0.66;

/// Tasks whose consensus is Undefined, that tied, or that are hard.
pub fn refinement_candidates(results: &[TaskResult]) -> Vec<&str> {
    results
        .iter()
        .filter(|r| r.consensus == Answer::Undefined || r.tie || r.entropy_norm > HARD_ENTROPY)
        .map(|r| r.task_id.as_str())
        .collect()
}

/// Segments of [`refinement_candidates`], via the task manifest.
pub fn select_tasks_for_refinement(
    results: &[TaskResult],
    tasks: &[TaskSpec],
) -> Result<Vec<SegmentId>> {
    let map = task_segments(tasks);
    let mut ids = refinement_candidates(results)
        .into_iter()
        .map(|t| {
            map.get(t)
                .copied()
                .ok_or_else(|| Error::UnknownTask(t.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Difficulty;
    use crate::groundtruth::{segment_gt_from_homogeneity, GtVariant, Homogeneity};
    use crate::segment::SegParams;

    fn quad() -> (Segmentation, RgbComposite, RgbComposite) {
        let (w, h) = (40, 30);
        let labels = (0..w * h)
            .map(|p| ((p / w) / 15 * 2 + (p % w) / 20) as i32)
            .collect();
        let seg = Segmentation::from_labels(w, h, labels, SegParams::new("test")).unwrap();
        let gray =
            RgbComposite::from_gray(w, h, (0..w * h).map(|p| (p % 251) as u8).collect()).unwrap();
        (seg, gray.clone(), gray)
    }

    #[test]
    fn one_task_per_segment_with_clipped_windows() {
        let (seg, a, b) = quad();
        let dir = tempfile::tempdir().unwrap();
        let panels = [(PanelKind::Rgb, &a), (PanelKind::False753, &b)];
        let tasks =
            generate_tasks(&seg, &panels, &TaskOptions::default(), "wf1", dir.path()).unwrap();
        assert_eq!(tasks.len(), 4);
        for t in &tasks {
            let bbox = seg.segment(t.segment_id).unwrap().bounding_box;
            assert!(t.zoom_window.contains(&bbox));
            for p in &t.panels {
                assert!(dir.path().join(&p.path).exists());
            }
        }
        // Segment 0 touches the top-left corner: clipped there, 10 px margin elsewhere.
        assert_eq!(tasks[0].zoom_window, PixelRect::new(0, 0, 25, 30));
        assert_eq!(tasks[0].panels[1].path, "wf1/wf1-000000_false753.png");
        let files = std::fs::read_dir(dir.path().join("wf1")).unwrap().count();
        assert_eq!(files, 8);
    }

    #[test]
    fn contour_is_drawn_on_the_boundary() {
        let (seg, a, b) = quad();
        let dir = tempfile::tempdir().unwrap();
        let tasks = generate_tasks(
            &seg,
            &[(PanelKind::Rgb, &a), (PanelKind::Ndvi, &b)],
            &TaskOptions::default(),
            "w",
            dir.path(),
        )
        .unwrap();
        let img = RgbComposite::load_png(&dir.path().join(&tasks[0].panels[0].path)).unwrap();
        // Segment 0 covers rows 0..15, cols 0..20; its right edge is col 19.
        assert_eq!(img.pixel(5, 19), DEFAULT_CONTOUR);
        assert_eq!(img.pixel(14, 5), DEFAULT_CONTOUR);
        assert_ne!(img.pixel(5, 5), DEFAULT_CONTOUR);
    }

    #[test]
    fn generate_rejects_bad_inputs() {
        let (seg, a, _) = quad();
        let dir = tempfile::tempdir().unwrap();
        let small = RgbComposite::from_gray(4, 4, vec![0; 16]).unwrap();
        let opts = TaskOptions::default();
        assert!(generate_tasks(&seg, &[(PanelKind::Rgb, &a)], &opts, "w", dir.path()).is_err());
        assert!(matches!(
            generate_tasks(
                &seg,
                &[(PanelKind::Rgb, &a), (PanelKind::Ndvi, &small)],
                &opts,
                "w",
                dir.path()
            ),
            Err(Error::DimensionMismatch { .. })
        ));
        let two = TaskOptions {
            answer_options: vec![Answer::Forest, Answer::NonForest],
            ..opts
        };
        assert!(generate_tasks(
            &seg,
            &[(PanelKind::Rgb, &a), (PanelKind::Ndvi, &a)],
            &two,
            "w",
            dir.path()
        )
        .is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let (seg, a, b) = quad();
        let dir = tempfile::tempdir().unwrap();
        let opts = TaskOptions {
            answer_options: Answer::ALL.to_vec(),
            ..Default::default()
        };
        let tasks = generate_tasks(
            &seg,
            &[
                (PanelKind::Rgb, &a),
                (PanelKind::False753, &b),
                (PanelKind::Ndvi, &a),
            ],
            &opts,
            "mask",
            dir.path(),
        )
        .unwrap();
        let kinds: Vec<_> = tasks[2].panels.iter().map(|p| p.kind).collect();
        assert_eq!(
            kinds,
            [PanelKind::Rgb, PanelKind::False753, PanelKind::Ndvi]
        );
        let mut buf = Vec::new();
        write_manifest(&tasks, &mut buf).unwrap();
        let back = read_manifest(buf.as_slice()).unwrap();
        assert_eq!(back, tasks);
        let mut again = Vec::new();
        write_manifest(&back, &mut again).unwrap();
        assert_eq!(buf, again);
        assert!(read_manifest("{\"task_id\": 3}\n".as_bytes()).is_err());
    }

    fn gt_with(hors: &[(usize, usize)]) -> SegmentGT {
        let h = hors
            .iter()
            .enumerate()
            .map(|(i, &(f, n))| (i as SegmentId, Homogeneity::from_counts(f, n).unwrap()))
            .collect();
        segment_gt_from_homogeneity(&h, GtVariant::Majority)
    }

    #[test]
    fn hor_selection() {
        let mut counts = vec![(7, 3); 7];
        counts.extend([(10, 0), (10, 0), (10, 0)]);
        let gt = gt_with(&counts);
        assert_eq!(
            select_tasks_by_hor(&gt, HorSelection { n_pure: 2, seed: 1 })
                .unwrap()
                .len(),
            9
        );
        assert_eq!(
            select_tasks_by_hor(&gt, HorSelection { n_pure: 0, seed: 1 }).unwrap(),
            (0..7).collect::<Vec<_>>()
        );
        assert!(select_tasks_by_hor(&gt, HorSelection { n_pure: 4, seed: 1 }).is_err());

        let pure = gt_with(&[(5, 0); 10]);
        let rule = HorSelection { n_pure: 3, seed: 9 };
        let a = select_tasks_by_hor(&pure, rule).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, select_tasks_by_hor(&pure, rule).unwrap());
    }

    fn result(task: &str, consensus: Answer, tie: bool, h: f64) -> TaskResult {
        TaskResult {
            task_id: task.into(),
            counts: vec![],
            consensus,
            tie,
            entropy_raw: h,
            entropy_norm: h,
            difficulty: Difficulty::from_normalized_entropy(h),
            mean_duration: None,
        }
    }

    #[test]
    fn refinement_selection_is_a_union() {
        let rs = vec![
            result("a", Answer::Forest, false, 0.0),
            result("b", Answer::Forest, true, 1.0),
            result("c", Answer::Undefined, false, 0.1),
            result("d", Answer::NonForest, false, 0.7),
            result("e", Answer::NonForest, true, 0.5),
        ];
        assert_eq!(refinement_candidates(&rs), ["b", "c", "d", "e"]);
        let specs: Vec<TaskSpec> = ["a", "b", "c", "d", "e"]
            .iter()
            .enumerate()
            .map(|(i, t)| TaskSpec {
                task_id: t.to_string(),
                workflow_id: "w".into(),
                segment_id: 10 - i as i32,
                panels: vec![],
                answer_options: vec![],
                zoom_window: PixelRect::new(0, 0, 1, 1),
            })
            .collect();
        assert_eq!(
            select_tasks_for_refinement(&rs, &specs).unwrap(),
            [6, 7, 8, 9]
        );
    }
}
