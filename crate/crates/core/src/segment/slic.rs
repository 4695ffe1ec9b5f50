//! Simple Linear Iterative Clustering.

use serde::{Deserialize, Serialize};

use super::connectivity::{enforce_connectivity, EXCLUDED};
use super::{grid_seeds, perturb_seeds, Features, SegParams, Segmentation, UNLABELED};
use crate::error::{Error, Result};
use crate::raster::BandStack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    pub n_segments: usize,
    /// Weight `m` of the spatial term relative to color distance.
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            n_segments: 100,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Clone)]
pub(crate) struct Center {
    pub color: Vec<f64>,
    pub row: f64,
    pub col: f64,
}

/// Localized k-means in (color, position) space.
///
/// `eligible` restricts both assignment and center updates; ineligible pixels
/// come back as `EXCLUDED`, eligible pixels no window reached as `UNLABELED`.
/// The distance is `sqrt(dc² + (ds/step)²·m²)`, searched in a 2·step window.
pub(crate) fn cluster(
    features: &Features,
    width: usize,
    height: usize,
    eligible: Option<&[bool]>,
    seeds: &[(usize, usize)],
    step: f64,
    compactness: f64,
    iterations: usize,
) -> Vec<i32> {
    let n = width * height;
    let ok = |p: usize| eligible.is_none_or(|e| e[p]);
    let mut centers: Vec<Center> = seeds
        .iter()
        .map(|&(r, c)| Center {
            color: features.get(r * width + c).to_vec(),
            row: r as f64,
            col: c as f64,
        })
        .collect();
    let spatial = (compactness / step).powi(2);
    let mut labels = vec![UNLABELED; n];
    let mut dist = vec![f64::INFINITY; n];
    let rounds = iterations.max(1);
    for round in 0..rounds {
        labels.iter_mut().for_each(|l| *l = UNLABELED);
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, center) in centers.iter().enumerate() {
            let r0 = (center.row - step).ceil().max(0.0) as usize;
            let r1 = ((center.row + step).floor() as usize).min(height - 1);
            let c0 = (center.col - step).ceil().max(0.0) as usize;
            let c1 = ((center.col + step).floor() as usize).min(width - 1);
            for r in r0..=r1 {
                let dr = r as f64 - center.row;
                for c in c0..=c1 {
                    let p = r * width + c;
                    if !ok(p) {
                        continue;
                    }
                    let dc = c as f64 - center.col;
                    let d = features.dist_sq(p, &center.color) + (dr * dr + dc * dc) * spatial;
                    // Strict comparison: equal distances keep the lower center index.
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as i32;
                    }
                }
            }
        }
        // The update after the last assignment cannot change the labels.
        if round + 1 == rounds {
            break;
        }
        let mut sums = vec![(vec![0.0; features.dim], 0.0, 0.0, 0usize); centers.len()];
        for p in 0..n {
            let l = labels[p];
            if l < 0 {
                continue;
            }
            let s = &mut sums[l as usize];
            for (acc, v) in s.0.iter_mut().zip(features.get(p)) {
                *acc += v;
            }
            s.1 += (p / width) as f64;
            s.2 += (p % width) as f64;
            s.3 += 1;
        }
        for (center, (color, rs, cs, count)) in centers.iter_mut().zip(sums) {
            if count == 0 {
                continue;
            }
            let inv = 1.0 / count as f64;
            center.color = color.into_iter().map(|v| v * inv).collect();
            center.row = rs * inv;
            center.col = cs * inv;
        }
    }
    for p in 0..n {
        if !ok(p) {
            labels[p] = EXCLUDED;
        }
    }
    labels
}

pub(crate) fn validate_common(composite: &BandStack, compactness: f64) -> Result<()> {
    if !(compactness > 0.0) || !compactness.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "compactness must be positive, got {compactness}"
        )));
    }
    if composite.band_count() == 0 {
        return Err(Error::InvalidParameter("composite has no bands".into()));
    }
    Ok(())
}

/// SLIC superpixels on a (typically 3-band, 0..=255) composite.
pub fn slic(composite: &BandStack, params: SlicParams) -> Result<Segmentation> {
    validate_common(composite, params.compactness)?;
    let (width, height) = composite.dims();
    let (grid, step) = grid_seeds(width, height, params.n_segments)?;
    let features = Features::from_stack(composite);
    let seeds = perturb_seeds(&features, width, height, &grid, None);
    let raw = cluster(
        &features,
        width,
        height,
        None,
        &seeds,
        step,
        params.compactness,
        params.iterations,
    );
    let min_size = (step * step / 4.0).floor() as usize;
    let labels = enforce_connectivity(width, height, &raw, min_size);
    Segmentation::from_labels(
        width,
        height,
        labels,
        SegParams::new("slic")
            .with("n_segments", params.n_segments)
            .with("compactness", params.compactness)
            .with("iterations", params.iterations)
            .with("step", step),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(width: usize, height: usize, v: f32) -> BandStack {
        BandStack::from_bands(width, height, vec![vec![v; width * height]; 3]).unwrap()
    }

    #[test]
    fn constant_image_gives_grid_blocks() {
        let seg = slic(
            &constant(20, 20, 50.0),
            SlicParams {
                n_segments: 4,
                compactness: 10.0,
                iterations: 10,
            },
        )
        .unwrap();
        seg.validate().unwrap();
        assert_eq!(seg.len(), 4);
        assert!(seg.segments().iter().all(|s| s.pixel_count == 100));
        for s in seg.segments() {
            assert_eq!((s.bounding_box.height, s.bounding_box.width), (10, 10));
        }
    }

    #[test]
    fn single_segment() {
        let seg = slic(
            &constant(20, 20, 1.0),
            SlicParams {
                n_segments: 1,
                compactness: 10.0,
                iterations: 5,
            },
        )
        .unwrap();
        assert_eq!(seg.len(), 1);
        assert_eq!(seg.segments()[0].pixel_count, 400);
    }

    #[test]
    fn halves_do_not_mix() {
        let plane: Vec<f32> = (0..400)
            .map(|i| if i % 20 < 10 { 0.0 } else { 255.0 })
            .collect();
        let img = BandStack::from_bands(20, 20, vec![plane.clone(), plane.clone(), plane.clone()])
            .unwrap();
        let seg = slic(
            &img,
            SlicParams {
                n_segments: 4,
                compactness: 1.0,
                iterations: 10,
            },
        )
        .unwrap();
        seg.validate().unwrap();
        for pixels in seg.pixels_by_segment().values() {
            let first = plane[pixels[0]];
            assert!(pixels.iter().all(|&p| plane[p] == first));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let img = constant(4, 4, 0.0);
        assert!(slic(
            &img,
            SlicParams {
                n_segments: 17,
                ..Default::default()
            }
        )
        .is_err());
        assert!(slic(
            &img,
            SlicParams {
                n_segments: 2,
                compactness: 0.0,
                iterations: 1
            }
        )
        .is_err());
    }
}
