//! Re-segmentation of hard segments by k-means on composite colors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::connectivity::connected_components;
use super::kmeans::{elbow_k, kmeans};
use super::{SegParams, SegmentId, Segmentation, UNLABELED};
use crate::error::{Error, Result};
use crate::raster::BandStack;
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Children smaller than this are discarded.
    pub min_size: usize,
    /// Largest k tried by the elbow rule.
    pub max_k: usize,
    pub seed: u64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            min_size: 9,
            max_k: 6,
            seed: 0,
        }
    }
}

/// What happened to one parent segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentRefinement {
    pub parent: SegmentId,
    pub pixel_count: usize,
    /// Chosen number of clusters; 0 when the parent was too small to refine.
    pub k: usize,
    pub wcss: Vec<f64>,
    pub children: Vec<SegmentId>,
    pub discarded_pixels: usize,
}

/// Split each listed parent into color clusters (k by the elbow rule over
/// k = 1..=max_k), then split clusters into 4-connected components. Each
/// component of at least `min_size` pixels becomes a child segment; smaller
/// ones are left unlabeled. Pixels outside the listed parents are unlabeled.
pub fn refine_kmeans(
    composite: &BandStack,
    parent: &Segmentation,
    segment_ids: &[SegmentId],
    params: RefineParams,
) -> Result<(Segmentation, Vec<ParentRefinement>)> {
    let (width, height) = parent.dims();
    if composite.dims() != (width, height) {
        return Err(Error::DimensionMismatch {
            expected: (width, height),
            actual: composite.dims(),
        });
    }
    if params.max_k == 0 {
        return Err(Error::InvalidParameter("max_k must be at least 1".into()));
    }
    let mut ids: Vec<SegmentId> = segment_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    for &id in &ids {
        if parent.segment(id).is_none() {
            return Err(Error::UnknownSegment(id));
        }
    }
    let by_segment = parent.pixels_by_segment();
    let mut labels = vec![UNLABELED; width * height];
    let mut parents_of: BTreeMap<SegmentId, SegmentId> = BTreeMap::new();
    let mut report = Vec::with_capacity(ids.len());
    let mut next_id: SegmentId = 0;
    for id in ids {
        let pixels = &by_segment[&id];
        let mut outcome = ParentRefinement {
            parent: id,
            pixel_count: pixels.len(),
            k: 0,
            wcss: Vec::new(),
            children: Vec::new(),
            discarded_pixels: 0,
        };
        if pixels.len() < params.min_size {
            outcome.discarded_pixels = pixels.len();
            report.push(outcome);
            continue;
        }
        let points: Vec<Vec<f64>> = pixels.iter().map(|&p| composite.pixel(p)).collect();
        let k_max = params.max_k.min(points.len());
        let id_bytes = id.to_le_bytes();
        let fits: Vec<_> = (1..=k_max)
            .map(|k| {
                let mut rng = rng_for(
                    params.seed,
                    &[b"refine", &id_bytes, &(k as u64).to_le_bytes()],
                );
                kmeans(&points, k, &mut rng)
            })
            .collect();
        outcome.wcss = fits.iter().map(|f| f.wcss).collect();
        let k = elbow_k(&outcome.wcss);
        outcome.k = k;
        let fit = &fits[k - 1];

        // Cluster map over the parent's bounding box; everything else is skipped.
        let bbox = parent.segment(id).expect("checked above").bounding_box;
        let (bw, bh) = (bbox.width, bbox.height);
        let mut local = vec![-1i32; bw * bh];
        let mut back: HashMap<usize, usize> = HashMap::with_capacity(pixels.len());
        for (i, &p) in pixels.iter().enumerate() {
            let (r, c) = (p / width - bbox.row, p % width - bbox.col);
            local[r * bw + c] = fit.assignments[i] as i32;
            back.insert(r * bw + c, p);
        }
        let (comp, sizes) = connected_components(bw, bh, &local, |v| v < 0);
        let mut comp_to_child: HashMap<u32, SegmentId> = HashMap::new();
        for (lp, c) in comp.iter().enumerate() {
            let Some(c) = *c else { continue };
            let global = back[&lp];
            if sizes[c as usize] < params.min_size {
                outcome.discarded_pixels += 1;
                continue;
            }
            let child = *comp_to_child.entry(c).or_insert_with(|| {
                let child = next_id;
                next_id += 1;
                outcome.children.push(child);
                parents_of.insert(child, id);
                child
            });
            labels[global] = child;
        }
        report.push(outcome);
    }
    let seg = Segmentation::with_parents(
        width,
        height,
        labels,
        SegParams::new("refine-kmeans")
            .with("min_size", params.min_size)
            .with("max_k", params.max_k)
            .with("seed", params.seed)
            .with("parent_algorithm", parent.params().algorithm.clone()),
        &parents_of,
    )?;
    Ok((seg, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_parent() -> (BandStack, Segmentation) {
        let (w, h) = (10, 10);
        let img = BandStack::from_bands(w, h, vec![vec![42.0; w * h]; 3]).unwrap();
        let labels = (0..w * h).map(|p| if p % w < 5 { 0 } else { 1 }).collect();
        (
            img,
            Segmentation::from_labels(w, h, labels, SegParams::new("test")).unwrap(),
        )
    }

    #[test]
    fn uniform_parent_is_kept_whole() {
        let (img, seg) = uniform_parent();
        let (out, report) = refine_kmeans(&img, &seg, &[0], RefineParams::default()).unwrap();
        assert_eq!(report[0].k, 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out.segments()[0].pixel_count, 50);
        assert_eq!(out.segments()[0].parent, Some(0));
        assert_eq!(out.pixels_of(0), seg.pixels_of(0));
    }

    #[test]
    fn unknown_parent_is_an_error() {
        let (img, seg) = uniform_parent();
        assert!(matches!(
            refine_kmeans(&img, &seg, &[7], RefineParams::default()),
            Err(Error::UnknownSegment(7))
        ));
    }

    #[test]
    fn tiny_parent_yields_no_children() {
        let w = 10;
        let img = BandStack::from_bands(w, 1, vec![(0..w).map(|i| i as f32).collect(); 3]).unwrap();
        let labels = (0..w).map(|p| if p < 8 { 0 } else { 1 }).collect();
        let seg = Segmentation::from_labels(w, 1, labels, SegParams::new("test")).unwrap();
        let (out, report) = refine_kmeans(&img, &seg, &[0], RefineParams::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(report[0].children.len(), 0);
        assert_eq!(report[0].discarded_pixels, 8);
    }
}
