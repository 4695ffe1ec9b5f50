//! Reference maps: class-map binarization, homogeneity ratio (HoR), the
//! segment-level GT-U / GT-M constructions, and accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Answer, Cover, SegmentLabel};
use crate::raster::container::{read_u8_plane, write_u8_plane};
use crate::raster::GeoRef;
use crate::segment::{SegmentId, Segmentation, UNLABELED};

/// Thematic map of class codes with its legend.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    pub width: usize,
    pub height: usize,
    pub codes: Vec<u8>,
    pub legend: BTreeMap<u8, String>,
}

impl ClassMap {
    pub fn new(
        width: usize,
        height: usize,
        codes: Vec<u8>,
        legend: BTreeMap<u8, String>,
    ) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} codes for {width}x{height}",
                codes.len()
            )));
        }
        if let Some((i, c)) = codes
            .iter()
            .enumerate()
            .find(|(_, c)| !legend.contains_key(c))
        {
            return Err(Error::Schema(format!(
                "class code {c} at pixel {i} is not in the legend"
            )));
        }
        Ok(ClassMap {
            width,
            height,
            codes,
            legend,
        })
    }

    /// Load a `u8` code plane plus a JSON legend (`{"1": "forest", ...}`).
    pub fn load(plane: &Path, legend: &Path) -> Result<(ClassMap, GeoRef)> {
        let (header, codes) = read_u8_plane(plane)?;
        let text = std::fs::read_to_string(legend).map_err(|e| Error::io(legend, e))?;
        let legend: BTreeMap<u8, String> = serde_json::from_str(&text)
            .map_err(|e| Error::json(legend.display().to_string(), e))?;
        Ok((
            ClassMap::new(header.width, header.height, codes, legend)?,
            header.geo(),
        ))
    }

    pub fn save(&self, plane: &Path, legend: &Path, geo: &GeoRef) -> Result<()> {
        write_u8_plane(plane, self.width, self.height, "class", geo, &self.codes)?;
        let text =
            serde_json::to_string_pretty(&self.legend).map_err(|e| Error::json("legend", e))?;
        std::fs::write(legend, text + "\n").map_err(|e| Error::io(legend, e))
    }

    /// Codes whose legend name is exactly `name` (case-insensitive).
    pub fn codes_named(&self, name: &str) -> BTreeSet<u8> {
        self.legend
            .iter()
            .filter(|(_, n)| n.eq_ignore_ascii_case(name))
            .map(|(c, _)| *c)
            .collect()
    }
}

/// Pixel-level Forest / Non-Forest reference.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryGT {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cover>,
}

impl BinaryGT {
    pub fn new(width: usize, height: usize, cells: Vec<Cover>) -> Result<Self> {
        if cells.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} cells for {width}x{height}",
                cells.len()
            )));
        }
        Ok(BinaryGT {
            width,
            height,
            cells,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Stored as a `u8` plane: 1 = Forest, 0 = Non-Forest.
    pub fn save(&self, path: &Path, geo: &GeoRef) -> Result<()> {
        let codes: Vec<u8> = self
            .cells
            .iter()
            .map(|c| u8::from(*c == Cover::Forest))
            .collect();
        write_u8_plane(path, self.width, self.height, "forest", geo, &codes)
    }

    pub fn load(path: &Path) -> Result<(BinaryGT, GeoRef)> {
        let (header, codes) = read_u8_plane(path)?;
        let cells = codes
            .iter()
            .map(|&c| match c {
                1 => Ok(Cover::Forest),
                0 => Ok(Cover::NonForest),
                other => Err(Error::Schema(format!("binary GT holds code {other}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            BinaryGT::new(header.width, header.height, cells)?,
            header.geo(),
        ))
    }
}

/// Forest iff the pixel's code is in `forest_codes`; every other class
/// (deforestation, residue, hydrography, cloud, non-forest) is Non-Forest.
pub fn binarize(classmap: &ClassMap, forest_codes: &BTreeSet<u8>) -> Result<BinaryGT> {
    if let Some(c) = forest_codes
        .iter()
        .find(|c| !classmap.legend.contains_key(c))
    {
        return Err(Error::Schema(format!(
            "forest code {c} is not in the legend"
        )));
    }
    let cells = classmap
        .codes
        .iter()
        .map(|c| {
            if !classmap.legend.contains_key(c) {
                return Err(Error::Schema(format!(
                    "class code {c} is not in the legend"
                )));
            }
            Ok(if forest_codes.contains(c) {
                Cover::Forest
            } else {
                Cover::NonForest
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BinaryGT::new(classmap.width, classmap.height, cells)
}

/// Forest / Non-Forest pixel tally of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Homogeneity {
    pub forest_pixels: usize,
    pub nonforest_pixels: usize,
}

impl Homogeneity {
    pub fn from_counts(forest_pixels: usize, nonforest_pixels: usize) -> Result<Self> {
        if forest_pixels + nonforest_pixels == 0 {
            return Err(Error::Empty("segment has no pixels".into()));
        }
        Ok(Homogeneity {
            forest_pixels,
            nonforest_pixels,
        })
    }

    pub fn total(&self) -> usize {
        self.forest_pixels + self.nonforest_pixels
    }

    pub fn majority_count(&self) -> usize {
        self.forest_pixels.max(self.nonforest_pixels)
    }

    /// HoR = max(NFP, NNP) / NP.
    pub fn hor(&self) -> f64 {
        self.majority_count() as f64 / self.total() as f64
    }

    /// Majority class; an exact tie goes to Non-Forest.
    pub fn majority(&self) -> Cover {
        if self.forest_pixels > self.nonforest_pixels {
            Cover::Forest
        } else {
            Cover::NonForest
        }
    }

    pub fn is_pure(&self) -> bool {
        self.forest_pixels == 0 || self.nonforest_pixels == 0
    }

    /// `HoR >= 0.7`, evaluated exactly on the counts.
    pub fn meets_undefined_threshold(&self) -> bool {
        self.majority_count() * 10 >= self.total() * 7
    }

    /// Index into [`HOR_BINS`], evaluated exactly on the counts.
    pub fn bin(&self) -> usize {
        if self.majority_count() == self.total() {
            HOR_BINS.len() - 1
        } else {
            (self.majority_count() * 10 / self.total()).clamp(5, 9) - 5
        }
    }
}

/// HoR ranges: five half-open deciles from 0.5 to 1.0 plus the pure segments.
pub const HOR_BINS: [&str; 6] = [
    "[0.5,0.6)",
    "[0.6,0.7)",
    "[0.7,0.8)",
    "[0.8,0.9)",
    "[0.9,1.0)",
    "1.0",
];

/// Bin of a HoR value given as a float (used when only the ratio is known).
pub fn hor_bin_of(hor: f64) -> usize {
    if hor >= 1.0 {
        return HOR_BINS.len() - 1;
    }
    // Nudge so decile boundaries like 0.7 land in the upper bin despite rounding.
    (((hor * 10.0) + 1e-9).floor() as usize).clamp(5, 9) - 5
}

pub fn hor(pixels: &[usize], gt: &BinaryGT) -> Result<Homogeneity> {
    if pixels.is_empty() {
        return Err(Error::Empty("segment has no pixels".into()));
    }
    let forest = pixels
        .iter()
        .filter(|&&p| gt.cells[p] == Cover::Forest)
        .count();
    Homogeneity::from_counts(forest, pixels.len() - forest)
}

fn check_dims(seg: &Segmentation, gt: &BinaryGT) -> Result<()> {
    if seg.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: seg.dims(),
            actual: gt.dims(),
        });
    }
    Ok(())
}

/// Forest / Non-Forest tallies for every segment.
pub fn segment_homogeneity(
    seg: &Segmentation,
    gt: &BinaryGT,
) -> Result<BTreeMap<SegmentId, Homogeneity>> {
    check_dims(seg, gt)?;
    let mut counts: BTreeMap<SegmentId, (usize, usize)> = BTreeMap::new();
    for (&l, c) in seg.labels().iter().zip(&gt.cells) {
        if l == UNLABELED {
            continue;
        }
        let e = counts.entry(l).or_default();
        match c {
            Cover::Forest => e.0 += 1,
            Cover::NonForest => e.1 += 1,
        }
    }
    counts
        .into_iter()
        .map(|(id, (f, n))| Ok((id, Homogeneity::from_counts(f, n)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GtVariant {
    /// Undefined when HoR < 0.7.
    #[serde(rename = "GT-U")]
    WithUndefined,
    /// Always the majority class.
    #[serde(rename = "GT-M")]
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentGtEntry {
    pub hor: f64,
    pub majority: Cover,
    pub label: SegmentLabel,
}

/// Segment-level reference of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGT {
    pub variant: GtVariant,
    pub entries: BTreeMap<SegmentId, SegmentGtEntry>,
}

impl SegmentGT {
    pub fn label(&self, id: SegmentId) -> Option<SegmentLabel> {
        self.entries.get(&id).map(|e| e.label)
    }
}

fn label_for(h: &Homogeneity, variant: GtVariant) -> SegmentLabel {
    match variant {
        GtVariant::Majority => h.majority().into(),
        GtVariant::WithUndefined if h.meets_undefined_threshold() => h.majority().into(),
        GtVariant::WithUndefined => SegmentLabel::Undefined,
    }
}

pub fn segment_gt_from_homogeneity(
    h: &BTreeMap<SegmentId, Homogeneity>,
    variant: GtVariant,
) -> SegmentGT {
    let entries = h
        .iter()
        .map(|(&id, h)| {
            (
                id,
                SegmentGtEntry {
                    hor: h.hor(),
                    majority: h.majority(),
                    label: label_for(h, variant),
                },
            )
        })
        .collect();
    SegmentGT { variant, entries }
}

pub fn build_segment_gt(
    seg: &Segmentation,
    gt: &BinaryGT,
    variant: GtVariant,
) -> Result<SegmentGT> {
    Ok(segment_gt_from_homogeneity(
        &segment_homogeneity(seg, gt)?,
        variant,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorHistogram {
    pub bins: Vec<String>,
    pub counts: Vec<usize>,
    pub percentages: Vec<f64>,
    pub total: usize,
}

pub fn hor_histogram_of(h: &BTreeMap<SegmentId, Homogeneity>) -> HorHistogram {
    let mut counts = vec![0usize; HOR_BINS.len()];
    for v in h.values() {
        counts[v.bin()] += 1;
    }
    let total = h.len();
    let percentages = counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                100.0 * c as f64 / total as f64
            }
        })
        .collect();
    HorHistogram {
        bins: HOR_BINS.iter().map(|s| s.to_string()).collect(),
        counts,
        percentages,
        total,
    }
}

pub fn hor_histogram(seg: &Segmentation, gt: &BinaryGT) -> Result<HorHistogram> {
    Ok(hor_histogram_of(&segment_homogeneity(seg, gt)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub correct: usize,
    pub total: usize,
    pub percent: Option<f64>,
}

impl ClassAccuracy {
    fn new(correct: usize, total: usize) -> Self {
        ClassAccuracy {
            correct,
            total,
            percent: (total > 0).then(|| 100.0 * correct as f64 / total as f64),
        }
    }
}

/// Overall and per-reference-class accuracy: `100 × correct / total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy<T: Ord> {
    pub overall: ClassAccuracy,
    pub per_class: BTreeMap<T, ClassAccuracy>,
}

/// Accuracy of paired `(predicted, reference)` labels; `same` decides agreement.
pub fn accuracy_by<P, T: Ord + Copy>(
    pairs: impl IntoIterator<Item = (P, T)>,
    same: impl Fn(&P, &T) -> bool,
) -> Accuracy<T> {
    let mut per: BTreeMap<T, (usize, usize)> = BTreeMap::new();
    let (mut correct, mut total) = (0, 0);
    for (p, r) in pairs {
        let hit = same(&p, &r);
        let e = per.entry(r).or_default();
        e.1 += 1;
        total += 1;
        if hit {
            e.0 += 1;
            correct += 1;
        }
    }
    Accuracy {
        overall: ClassAccuracy::new(correct, total),
        per_class: per
            .into_iter()
            .map(|(k, (c, t))| (k, ClassAccuracy::new(c, t)))
            .collect(),
    }
}

/// Accuracy of two equally long label sequences.
pub fn accuracy<T: Ord + Copy>(predicted: &[T], reference: &[T]) -> Result<Accuracy<T>> {
    if predicted.len() != reference.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions for {} reference samples",
            predicted.len(),
            reference.len()
        )));
    }
    Ok(accuracy_by(
        predicted.iter().copied().zip(reference.iter().copied()),
        |a, b| a == b,
    ))
}

/// Segment-level accuracy of consensus labels against a segment GT. Both
/// sides must cover exactly the same segments.
pub fn segment_accuracy(
    consensus: &BTreeMap<SegmentId, Answer>,
    reference: &SegmentGT,
) -> Result<Accuracy<SegmentLabel>> {
    if consensus.len() != reference.entries.len()
        || consensus.keys().any(|k| !reference.entries.contains_key(k))
    {
        return Err(Error::InvalidParameter(
            "consensus and reference cover different segments".into(),
        ));
    }
    Ok(accuracy_by(
        consensus
            .iter()
            .map(|(id, a)| (*a, reference.entries[id].label)),
        |a, r| a.matches(*r),
    ))
}

/// How pixel-level accuracy treats segments whose consensus is not a cover class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum UndefinedPolicy {
    #[default]
    CountAsWrong,
    Exclude,
}

/// Pixel-level accuracy against GT-PRODES: each segment's consensus is
/// broadcast to its pixels. Pixels of segments without consensus are skipped.
pub fn pixel_accuracy(
    seg: &Segmentation,
    consensus: &BTreeMap<SegmentId, Answer>,
    gt: &BinaryGT,
    policy: UndefinedPolicy,
) -> Result<Accuracy<Cover>> {
    check_dims(seg, gt)?;
    let pairs = seg.labels().iter().zip(&gt.cells).filter_map(|(l, c)| {
        let a = consensus.get(l)?;
        let is_cover = matches!(a, Answer::Forest | Answer::NonForest);
        if !is_cover && policy == UndefinedPolicy::Exclude {
            return None;
        }
        Some((*a, *c))
    });
    Ok(accuracy_by(pairs, |a, c| *a == Answer::from(*c)))
}

/// One row of the segment GT export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentGtRow {
    pub segment_id: SegmentId,
    pub hor: f64,
    pub majority: Cover,
    pub gt_u: SegmentLabel,
    pub gt_m: SegmentLabel,
}

pub fn segment_gt_rows(gt_u: &SegmentGT, gt_m: &SegmentGT) -> Result<Vec<SegmentGtRow>> {
    if gt_u.entries.len() != gt_m.entries.len() {
        return Err(Error::InvalidParameter(
            "GT-U and GT-M cover different segments".into(),
        ));
    }
    gt_u.entries
        .iter()
        .map(|(id, u)| {
            let m = gt_m.entries.get(id).ok_or(Error::UnknownSegment(*id))?;
            Ok(SegmentGtRow {
                segment_id: *id,
                hor: u.hor,
                majority: u.majority,
                gt_u: u.label,
                gt_m: m.label,
            })
        })
        .collect()
}

pub fn write_segment_gt_csv<W: Write>(rows: &[SegmentGtRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("segment gt csv", e))?;
    Ok(())
}

/// Parse the export back into `(GT-U, GT-M)`.
pub fn read_segment_gt_csv<R: Read>(input: R) -> Result<(SegmentGT, SegmentGT)> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    for col in ["segment_id", "hor", "majority", "gt_u", "gt_m"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Schema(format!(
                "segment GT csv is missing column {col:?}"
            )));
        }
    }
    let mut u = SegmentGT {
        variant: GtVariant::WithUndefined,
        entries: BTreeMap::new(),
    };
    let mut m = SegmentGT {
        variant: GtVariant::Majority,
        entries: BTreeMap::new(),
    };
    for row in r.deserialize() {
        let row: SegmentGtRow = row?;
        u.entries.insert(
            row.segment_id,
            SegmentGtEntry {
                hor: row.hor,
                majority: row.majority,
                label: row.gt_u,
            },
        );
        m.entries.insert(
            row.segment_id,
            SegmentGtEntry {
                hor: row.hor,
                majority: row.majority,
                label: row.gt_m,
            },
        );
    }
    Ok((u, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::SegParams;

    fn legend() -> BTreeMap<u8, String> {
        [(1, "forest"), (2, "hydrography"), (3, "deforestation-2016")]
            .into_iter()
            .map(|(c, n)| (c, n.to_string()))
            .collect()
    }

    #[test]
    fn binarize_examples() {
        let all_forest = ClassMap::new(2, 1, vec![1, 1], legend()).unwrap();
        let forest: BTreeSet<u8> = [1].into();
        assert!(binarize(&all_forest, &forest)
            .unwrap()
            .cells
            .iter()
            .all(|c| *c == Cover::Forest));

        let mixed = ClassMap::new(3, 1, vec![1, 2, 3], legend()).unwrap();
        let gt = binarize(&mixed, &forest).unwrap();
        assert_eq!(
            gt.cells,
            vec![Cover::Forest, Cover::NonForest, Cover::NonForest]
        );

        let none = binarize(&mixed, &BTreeSet::new()).unwrap();
        assert!(none.cells.iter().all(|c| *c == Cover::NonForest));

        assert!(binarize(&mixed, &[9].into()).is_err());
        assert!(ClassMap::new(1, 1, vec![9], legend()).is_err());
    }

    #[test]
    fn hor_examples() {
        let h = Homogeneity::from_counts(70, 30).unwrap();
        assert_eq!(h.hor(), 0.7);
        assert_eq!(h.majority(), Cover::Forest);
        let tie = Homogeneity::from_counts(50, 50).unwrap();
        assert_eq!(tie.hor(), 0.5);
        assert_eq!(tie.majority(), Cover::NonForest);
        let pure = Homogeneity::from_counts(0, 35).unwrap();
        assert_eq!(pure.hor(), 1.0);
        assert_eq!(pure.majority(), Cover::NonForest);
        assert!(Homogeneity::from_counts(0, 0).is_err());
        assert!(hor(&[], &BinaryGT::new(1, 1, vec![Cover::Forest]).unwrap()).is_err());
    }

    #[test]
    fn gt_u_threshold_is_inclusive() {
        let below = Homogeneity::from_counts(69, 31).unwrap();
        let at = Homogeneity::from_counts(70, 30).unwrap();
        let weak_nf = Homogeneity::from_counts(49, 51).unwrap();
        assert_eq!(
            label_for(&below, GtVariant::WithUndefined),
            SegmentLabel::Undefined
        );
        assert_eq!(
            label_for(&at, GtVariant::WithUndefined),
            SegmentLabel::Forest
        );
        assert_eq!(
            label_for(&weak_nf, GtVariant::Majority),
            SegmentLabel::NonForest
        );
    }

    #[test]
    fn histogram_examples() {
        let pure: BTreeMap<SegmentId, Homogeneity> = (0..4)
            .map(|i| (i, Homogeneity::from_counts(10, 0).unwrap()))
            .collect();
        assert_eq!(hor_histogram_of(&pure).percentages[5], 100.0);

        let two: BTreeMap<SegmentId, Homogeneity> = [
            (0, Homogeneity::from_counts(55, 45).unwrap()),
            (1, Homogeneity::from_counts(0, 9).unwrap()),
        ]
        .into();
        let h = hor_histogram_of(&two);
        assert_eq!(h.percentages, vec![50.0, 0.0, 0.0, 0.0, 0.0, 50.0]);

        // Checkerboard truth with 2x2 segments: every segment is half forest.
        let (w, hgt) = (4, 4);
        let cells = (0..16)
            .map(|p| {
                if (p / w + p % w) % 2 == 0 {
                    Cover::Forest
                } else {
                    Cover::NonForest
                }
            })
            .collect();
        let gt = BinaryGT::new(w, hgt, cells).unwrap();
        let labels = (0..16)
            .map(|p| ((p / w) / 2 * 2 + (p % w) / 2) as i32)
            .collect();
        let seg = Segmentation::from_labels(w, hgt, labels, SegParams::new("test")).unwrap();
        let hist = hor_histogram(&seg, &gt).unwrap();
        assert_eq!(hist.counts, vec![4, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn float_bins_agree_with_exact_bins() {
        for total in 1..60usize {
            for maj in total.div_ceil(2)..=total {
                let h = Homogeneity::from_counts(maj, total - maj).unwrap();
                assert_eq!(hor_bin_of(h.hor()), h.bin(), "{maj}/{total}");
            }
        }
    }

    #[test]
    fn accuracy_examples() {
        let a = accuracy(&[1; 100], &[[1; 88].as_slice(), &[0; 12]].concat()).unwrap();
        assert_eq!(a.overall.percent, Some(88.0));
        let same = accuracy(&[3, 1, 2], &[3, 1, 2]).unwrap();
        assert_eq!(same.overall.percent, Some(100.0));
        assert!(accuracy(&[1], &[1, 2]).is_err());

        // reference -> predicted: F->F, NF->F, U->U
        let reference = [
            SegmentLabel::Forest,
            SegmentLabel::NonForest,
            SegmentLabel::Undefined,
        ];
        let predicted = [
            SegmentLabel::Forest,
            SegmentLabel::Forest,
            SegmentLabel::Undefined,
        ];
        let acc = accuracy(&predicted, &reference).unwrap();
        assert!((acc.overall.percent.unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(acc.per_class[&SegmentLabel::Forest].percent, Some(100.0));
        assert_eq!(acc.per_class[&SegmentLabel::NonForest].percent, Some(0.0));
        assert_eq!(acc.per_class[&SegmentLabel::Undefined].percent, Some(100.0));
    }

    #[test]
    fn pixel_accuracy_policies() {
        let gt = BinaryGT::new(
            4,
            1,
            vec![
                Cover::Forest,
                Cover::Forest,
                Cover::NonForest,
                Cover::NonForest,
            ],
        )
        .unwrap();
        let seg = Segmentation::from_labels(4, 1, vec![0, 0, 1, 1], SegParams::new("t")).unwrap();
        let consensus: BTreeMap<SegmentId, Answer> =
            [(0, Answer::Forest), (1, Answer::Undefined)].into();
        let wrong = pixel_accuracy(&seg, &consensus, &gt, UndefinedPolicy::CountAsWrong).unwrap();
        assert_eq!((wrong.overall.correct, wrong.overall.total), (2, 4));
        let excl = pixel_accuracy(&seg, &consensus, &gt, UndefinedPolicy::Exclude).unwrap();
        assert_eq!((excl.overall.correct, excl.overall.total), (2, 2));
    }

    #[test]
    fn csv_round_trip() {
        let h: BTreeMap<SegmentId, Homogeneity> = [
            (0, Homogeneity::from_counts(69, 31).unwrap()),
            (3, Homogeneity::from_counts(2, 1).unwrap()),
        ]
        .into();
        let u = segment_gt_from_homogeneity(&h, GtVariant::WithUndefined);
        let m = segment_gt_from_homogeneity(&h, GtVariant::Majority);
        let rows = segment_gt_rows(&u, &m).unwrap();
        let mut buf = Vec::new();
        write_segment_gt_csv(&rows, &mut buf).unwrap();
        let (u2, m2) = read_segment_gt_csv(buf.as_slice()).unwrap();
        assert_eq!((u2, m2), (u, m));
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("segment_id,hor,majority,gt_u,gt_m\n"));
    }
}
