//! Superpixel segmentation: SLIC, IFT-SLIC, MaskSLIC and k-means refinement.
//!
//! Every algorithm produces a [`Segmentation`]: a label plane where each
//! non-masked pixel carries the id of exactly one 4-connected segment, and
//! masked or discarded pixels carry [`UNLABELED`].

mod connectivity;
mod ift;
mod kmeans;
mod masked;
mod refine;
mod slic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::raster::container::{read_i32_plane, write_i32_plane};
use crate::raster::{BandStack, GeoRef, PixelRect};

pub use connectivity::{connected_components, is_four_connected};
pub use ift::{ift_slic, IftSlicParams};
pub use kmeans::{elbow_k, kmeans, KMeansFit};
pub use masked::{distance_transform_sq, mask_slic, requested_segments, MaskSlicParams};
pub use refine::{refine_kmeans, ParentRefinement, RefineParams};
pub use slic::{slic, SlicParams};

/// Label value for masked-out or discarded pixels.
pub const UNLABELED: i32 = -1;

pub type SegmentId = i32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: SegmentId,
    pub pixel_count: usize,
    pub bounding_box: PixelRect,
    /// Mean (row, col) of the segment's pixels.
    pub centroid: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<SegmentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegParams {
    pub algorithm: String,
    #[serde(default)]
    pub values: Map<String, Value>,
}

impl SegParams {
    pub fn new(algorithm: &str) -> Self {
        SegParams {
            algorithm: algorithm.to_string(),
            values: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.values.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    width: usize,
    height: usize,
    labels: Vec<i32>,
    segments: Vec<SegmentRecord>,
    params: SegParams,
}

impl Segmentation {
    /// Build a segmentation from a label plane, deriving the segment table.
    /// Labels must be `UNLABELED` or non-negative.
    pub fn from_labels(
        width: usize,
        height: usize,
        labels: Vec<i32>,
        params: SegParams,
    ) -> Result<Self> {
        Self::with_parents(width, height, labels, params, &BTreeMap::new())
    }

    pub fn with_parents(
        width: usize,
        height: usize,
        labels: Vec<i32>,
        params: SegParams,
        parents: &BTreeMap<SegmentId, SegmentId>,
    ) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} labels for a {width}x{height} plane",
                labels.len()
            )));
        }
        struct Acc {
            count: usize,
            r0: usize,
            c0: usize,
            r1: usize,
            c1: usize,
            sr: f64,
            sc: f64,
        }
        let mut acc: BTreeMap<i32, Acc> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            if l == UNLABELED {
                continue;
            }
            if l < 0 {
                return Err(Error::Invariant(format!(
                    "negative segment id {l} at pixel {i}"
                )));
            }
            let (r, c) = (i / width, i % width);
            let a = acc.entry(l).or_insert(Acc {
                count: 0,
                r0: r,
                c0: c,
                r1: r,
                c1: c,
                sr: 0.0,
                sc: 0.0,
            });
            a.count += 1;
            a.r0 = a.r0.min(r);
            a.c0 = a.c0.min(c);
            a.r1 = a.r1.max(r);
            a.c1 = a.c1.max(c);
            a.sr += r as f64;
            a.sc += c as f64;
        }
        let segments = acc
            .into_iter()
            .map(|(id, a)| SegmentRecord {
                id,
                pixel_count: a.count,
                bounding_box: PixelRect::new(a.r0, a.c0, a.r1 - a.r0 + 1, a.c1 - a.c0 + 1),
                centroid: (a.sr / a.count as f64, a.sc / a.count as f64),
                parent: parents.get(&id).copied(),
            })
            .collect();
        Ok(Segmentation {
            width,
            height,
            labels,
            segments,
            params,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn label_at(&self, row: usize, col: usize) -> i32 {
        self.labels[row * self.width + col]
    }

    /// Segment records sorted by id.
    pub fn segments(&self) -> &[SegmentRecord] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> Option<&SegmentRecord> {
        self.segments
            .binary_search_by_key(&id, |s| s.id)
            .ok()
            .map(|i| &self.segments[i])
    }

    pub fn params(&self) -> &SegParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn labeled_pixel_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }

    /// Pixel indices of every segment, keyed by id, in raster order.
    pub fn pixels_by_segment(&self) -> BTreeMap<SegmentId, Vec<usize>> {
        let mut out: BTreeMap<SegmentId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            if l != UNLABELED {
                out.entry(l).or_default().push(i);
            }
        }
        out
    }

    pub fn pixels_of(&self, id: SegmentId) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == id)
            .map(|(i, _)| i)
            .collect()
    }

    /// Check the partition invariants: every labeled pixel belongs to a listed
    /// segment, the table counts match the plane, and each segment is 4-connected.
    pub fn validate(&self) -> Result<()> {
        let fresh = Segmentation::from_labels(
            self.width,
            self.height,
            self.labels.clone(),
            self.params.clone(),
        )?;
        if fresh.segments.len() != self.segments.len() {
            return Err(Error::Invariant(format!(
                "segment table lists {} segments, plane has {}",
                self.segments.len(),
                fresh.segments.len()
            )));
        }
        for (a, b) in fresh.segments.iter().zip(&self.segments) {
            if a.id != b.id || a.pixel_count != b.pixel_count || a.bounding_box != b.bounding_box {
                return Err(Error::Invariant(format!(
                    "segment {} record disagrees with label plane",
                    b.id
                )));
            }
        }
        let total: usize = self.segments.iter().map(|s| s.pixel_count).sum();
        if total != self.labeled_pixel_count() {
            return Err(Error::Invariant(
                "pixel counts do not sum to labeled pixels".into(),
            ));
        }
        for (id, pixels) in self.pixels_by_segment() {
            if !is_four_connected(self.width, &pixels) {
                return Err(Error::Invariant(format!("segment {id} is not 4-connected")));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> SegmentationStats {
        segmentation_stats(self)
    }

    fn table_path(path: &Path) -> PathBuf {
        let (h, _) = crate::raster::container::container_paths(path);
        h.with_extension("segments.json")
    }

    /// Write the label plane (`.bsj`/`.bsd`) plus a `<name>.segments.json` table.
    pub fn save(&self, path: &Path, geo: &GeoRef) -> Result<()> {
        write_i32_plane(
            path,
            self.width,
            self.height,
            "segment_id",
            geo,
            &self.labels,
        )?;
        let table = SegmentTable {
            width: self.width,
            height: self.height,
            params: self.params.clone(),
            segments: self.segments.clone(),
        };
        let tpath = Self::table_path(path);
        let text =
            serde_json::to_string_pretty(&table).map_err(|e| Error::json("segment table", e))?;
        std::fs::write(&tpath, text + "\n").map_err(|e| Error::io(&tpath, e))
    }

    pub fn load(path: &Path) -> Result<(Segmentation, GeoRef)> {
        let (header, labels) = read_i32_plane(path)?;
        let tpath = Self::table_path(path);
        let text = std::fs::read_to_string(&tpath).map_err(|e| Error::io(&tpath, e))?;
        let table: SegmentTable =
            serde_json::from_str(&text).map_err(|e| Error::json(tpath.display().to_string(), e))?;
        if (table.width, table.height) != (header.width, header.height) {
            return Err(Error::DimensionMismatch {
                expected: (header.width, header.height),
                actual: (table.width, table.height),
            });
        }
        let seg = Segmentation {
            width: header.width,
            height: header.height,
            labels,
            segments: table.segments,
            params: table.params,
        };
        seg.validate()?;
        Ok((seg, header.geo()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentTable {
    width: usize,
    height: usize,
    params: SegParams,
    segments: Vec<SegmentRecord>,
}

/// Boolean exclusion plane: `true` pixels are left out of segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub excluded: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, excluded: Vec<bool>) -> Result<Self> {
        if excluded.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "mask has {} cells for {width}x{height}",
                excluded.len()
            )));
        }
        Ok(Mask {
            width,
            height,
            excluded,
        })
    }

    pub fn outside_count(&self) -> usize {
        self.excluded.iter().filter(|&&m| !m).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationStats {
    pub count: usize,
    pub mean_pixel_count: Option<f64>,
    pub min_pixel_count: Option<usize>,
    pub max_pixel_count: Option<usize>,
}

pub fn segmentation_stats(seg: &Segmentation) -> SegmentationStats {
    let sizes: Vec<usize> = seg.segments.iter().map(|s| s.pixel_count).collect();
    SegmentationStats {
        count: sizes.len(),
        mean_pixel_count: (!sizes.is_empty())
            .then(|| sizes.iter().sum::<usize>() as f64 / sizes.len() as f64),
        min_pixel_count: sizes.iter().copied().min(),
        max_pixel_count: sizes.iter().copied().max(),
    }
}

/// Per-pixel feature vectors of a composite, stored contiguously.
pub(crate) struct Features {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Features {
    pub fn from_stack(stack: &BandStack) -> Self {
        let dim = stack.band_count();
        let n = stack.pixel_count();
        let mut data = Vec::with_capacity(n * dim);
        for p in 0..n {
            for b in stack.bands() {
                data.push(b[p] as f64);
            }
        }
        Features { dim, data }
    }

    #[inline]
    pub fn get(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    #[inline]
    pub fn dist_sq(&self, p: usize, center: &[f64]) -> f64 {
        self.get(p)
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Regular seed grid with about `n_segments` cells. Returns pixel positions
/// `(row, col)` in row-major order and the nominal grid step.
pub(crate) fn grid_seeds(
    width: usize,
    height: usize,
    n_segments: usize,
) -> Result<(Vec<(usize, usize)>, f64)> {
    let n = width * height;
    if n_segments == 0 || n_segments > n {
        return Err(Error::InvalidParameter(format!(
            "n_segments must be in 1..={n} for a {width}x{height} image, got {n_segments}"
        )));
    }
    let step = (n as f64 / n_segments as f64).sqrt();
    let nx = ((width as f64 / step).round() as usize).clamp(1, width);
    let ny = ((height as f64 / step).round() as usize).clamp(1, height);
    let mut seeds = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let r = (((j as f64 + 0.5) * height as f64 / ny as f64) as usize).min(height - 1);
        for i in 0..nx {
            let c = (((i as f64 + 0.5) * width as f64 / nx as f64) as usize).min(width - 1);
            seeds.push((r, c));
        }
    }
    Ok((seeds, step))
}

/// Move each seed to the lowest-gradient position of its 3×3 neighborhood,
/// keeping the original position on ties. Duplicates are dropped.
pub(crate) fn perturb_seeds(
    features: &Features,
    width: usize,
    height: usize,
    seeds: &[(usize, usize)],
    eligible: Option<&[bool]>,
) -> Vec<(usize, usize)> {
    let ok = |r: usize, c: usize| eligible.is_none_or(|e| e[r * width + c]);
    let grad = |r: usize, c: usize| -> f64 {
        let up = r.saturating_sub(1);
        let down = (r + 1).min(height - 1);
        let left = c.saturating_sub(1);
        let right = (c + 1).min(width - 1);
        let g = |a: usize, b: usize| {
            features
                .get(a)
                .iter()
                .zip(features.get(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        };
        g(r * width + right, r * width + left) + g(down * width + c, up * width + c)
    };
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(seeds.len());
    for &(r, c) in seeds {
        let mut best = (r, c);
        let mut best_g = grad(r, c);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= height as i64 || nc >= width as i64 {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if !ok(nr, nc) {
                    continue;
                }
                let g = grad(nr, nc);
                if g < best_g {
                    best_g = g;
                    best = (nr, nc);
                }
            }
        }
        if seen.insert(best) {
            out.push(best);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_for_twenty_square() {
        let (seeds, step) = grid_seeds(20, 20, 4).unwrap();
        assert_eq!(step, 10.0);
        assert_eq!(seeds, vec![(5, 5), (5, 15), (15, 5), (15, 15)]);
        let (one, _) = grid_seeds(20, 20, 1).unwrap();
        assert_eq!(one, vec![(10, 10)]);
        assert!(grid_seeds(4, 4, 17).is_err());
        assert!(grid_seeds(4, 4, 0).is_err());
    }

    #[test]
    fn stats_examples() {
        let labels: Vec<i32> = (0..400)
            .map(|i| ((i / 20) / 10 * 2 + (i % 20) / 10) as i32)
            .collect();
        let seg = Segmentation::from_labels(20, 20, labels, SegParams::new("test")).unwrap();
        assert_eq!(seg.stats().mean_pixel_count, Some(100.0));

        let mut labels = vec![0; 9];
        labels.extend(vec![1; 35]);
        labels.extend(vec![2; 61]);
        let seg = Segmentation::from_labels(105, 1, labels, SegParams::new("test")).unwrap();
        let st = seg.stats();
        assert_eq!(st.mean_pixel_count, Some(35.0));
        assert_eq!(
            (st.min_pixel_count, st.max_pixel_count),
            (Some(9), Some(61))
        );

        let empty =
            Segmentation::from_labels(2, 1, vec![UNLABELED; 2], SegParams::new("test")).unwrap();
        let st = empty.stats();
        assert_eq!(st.count, 0);
        assert_eq!(st.mean_pixel_count, None);
        assert_eq!(st.min_pixel_count, None);
    }

    #[test]
    fn validate_detects_split_segment() {
        let seg = Segmentation::from_labels(3, 1, vec![0, 1, 0], SegParams::new("test")).unwrap();
        assert!(matches!(seg.validate(), Err(Error::Invariant(_))));
        let ok = Segmentation::from_labels(3, 1, vec![0, 0, 1], SegParams::new("test")).unwrap();
        ok.validate().unwrap();
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seg = Segmentation::from_labels(
            3,
            2,
            vec![0, 0, 1, -1, 2, 1],
            SegParams::new("test").with("n", 3),
        )
        .unwrap();
        let p = dir.path().join("seg");
        seg.save(&p, &GeoRef::default()).unwrap();
        let (back, _) = Segmentation::load(&p).unwrap();
        assert_eq!(back, seg);
    }
}
