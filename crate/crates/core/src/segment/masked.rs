//! MaskSLIC: SLIC restricted to the pixels outside an exclusion mask, seeded
//! from the distance transform of the mask.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::connectivity::enforce_connectivity;
use super::slic::{cluster, validate_common};
use super::{Features, Mask, SegParams, Segmentation};
use crate::error::{Error, Result};
use crate::raster::BandStack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSlicParams {
    /// Desired pixels per segment; the segment count is `outside / target`.
    pub target_region_px: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for MaskSlicParams {
    fn default() -> Self {
        MaskSlicParams {
            target_region_px: 70,
            compactness: 10.0,
            iterations: 10,
        }
    }
}

/// Number of segments requested for `outside_pixels` unmasked pixels.
pub fn requested_segments(outside_pixels: usize, target_region_px: usize) -> usize {
    if outside_pixels == 0 || target_region_px == 0 {
        return 0;
    }
    ((outside_pixels as f64 / target_region_px as f64).round() as usize).max(1)
}

const FAR: f64 = 1e20;

/// 1-D squared distance transform by lower envelope of parabolas.
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let meet = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
    };
    for q in 1..n {
        let mut s = meet(q, v[k]);
        // z[0] is -inf, so k never underflows.
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest `true`
/// pixel of `targets`. With no targets every value is `FAR` (1e20).
pub fn distance_transform_sq(width: usize, height: usize, targets: &[bool]) -> Vec<f64> {
    let mut grid: Vec<f64> = targets.iter().map(|&t| if t { 0.0 } else { FAR }).collect();
    let mut col = vec![0.0; height];
    let mut out_col = vec![0.0; height];
    for c in 0..width {
        for r in 0..height {
            col[r] = grid[r * width + c];
        }
        edt_1d(&col, &mut out_col);
        for r in 0..height {
            grid[r * width + c] = out_col[r].min(FAR);
        }
    }
    let mut row_out = vec![0.0; width];
    for r in 0..height {
        edt_1d(&grid[r * width..(r + 1) * width], &mut row_out);
        for c in 0..width {
            grid[r * width + c] = row_out[c].min(FAR);
        }
    }
    grid
}

/// Farthest-point seeding: repeatedly take the outside pixel farthest from
/// the mask, the image border and every seed placed so far (ties: lowest
/// raster index).
fn place_seeds(mask: &Mask, count: usize) -> Vec<usize> {
    let (w, h) = (mask.width, mask.height);
    // Pad by one masked ring so the image border repels seeds as well.
    let (pw, ph) = (w + 2, h + 2);
    let mut padded = vec![true; pw * ph];
    for r in 0..h {
        for c in 0..w {
            padded[(r + 1) * pw + c + 1] = mask.excluded[r * w + c];
        }
    }
    let dt_padded = distance_transform_sq(pw, ph, &padded);
    let mut dt = vec![0u64; w * h];
    let mut heap = BinaryHeap::new();
    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            if !mask.excluded[p] {
                dt[p] = dt_padded[(r + 1) * pw + c + 1].round() as u64;
                heap.push((dt[p], Reverse(p)));
            }
        }
    }
    let mut seeds = Vec::with_capacity(count);
    while seeds.len() < count {
        let Some((d, Reverse(p))) = heap.pop() else {
            break;
        };
        if d != dt[p] {
            continue;
        }
        if d == 0 {
            break;
        }
        seeds.push(p);
        dt[p] = 0;
        let radius = (d as f64).sqrt().ceil() as i64;
        let (pr, pc) = ((p / w) as i64, (p % w) as i64);
        for r in (pr - radius).max(0)..=(pr + radius).min(h as i64 - 1) {
            for c in (pc - radius).max(0)..=(pc + radius).min(w as i64 - 1) {
                let q = r as usize * w + c as usize;
                if mask.excluded[q] {
                    continue;
                }
                let d2 = ((r - pr) * (r - pr) + (c - pc) * (c - pc)) as u64;
                if d2 < dt[q] {
                    dt[q] = d2;
                    if d2 > 0 {
                        heap.push((d2, Reverse(q)));
                    }
                }
            }
        }
    }
    seeds
}

/// Superpixels covering only the pixels outside `mask`; masked pixels are
/// labeled `UNLABELED`.
pub fn mask_slic(
    composite: &BandStack,
    mask: &Mask,
    params: MaskSlicParams,
) -> Result<Segmentation> {
    validate_common(composite, params.compactness)?;
    let (width, height) = composite.dims();
    if (mask.width, mask.height) != (width, height) {
        return Err(Error::DimensionMismatch {
            expected: (width, height),
            actual: (mask.width, mask.height),
        });
    }
    if params.target_region_px == 0 {
        return Err(Error::InvalidParameter(
            "target_region_px must be positive".into(),
        ));
    }
    let outside = mask.outside_count();
    if outside == 0 {
        return Err(Error::Empty("no pixels outside the mask".into()));
    }
    let requested = requested_segments(outside, params.target_region_px);
    let seed_pixels = place_seeds(mask, requested);
    let seeds: Vec<(usize, usize)> = seed_pixels
        .iter()
        .map(|&p| (p / width, p % width))
        .collect();
    let step = (outside as f64 / requested as f64).sqrt();
    let eligible: Vec<bool> = mask.excluded.iter().map(|&m| !m).collect();
    let features = Features::from_stack(composite);
    let raw = cluster(
        &features,
        width,
        height,
        Some(&eligible),
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
        SegParams::new("mask-slic")
            .with("target_region_px", params.target_region_px)
            .with("requested_segments", requested)
            .with("seeds_placed", seeds.len())
            .with("compactness", params.compactness)
            .with("iterations", params.iterations)
            .with("step", step),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::UNLABELED;

    fn brute_force_sq(width: usize, height: usize, targets: &[bool]) -> Vec<f64> {
        (0..width * height)
            .map(|p| {
                let (r, c) = ((p / width) as f64, (p % width) as f64);
                targets
                    .iter()
                    .enumerate()
                    .filter(|(_, &t)| t)
                    .map(|(q, _)| {
                        let (qr, qc) = ((q / width) as f64, (q % width) as f64);
                        (r - qr).powi(2) + (c - qc).powi(2)
                    })
                    .fold(FAR, f64::min)
            })
            .collect()
    }

    #[test]
    fn edt_matches_brute_force() {
        let (w, h) = (13, 9);
        let targets: Vec<bool> = (0..w * h).map(|i| (i * 7919) % 17 == 3).collect();
        assert_eq!(
            distance_transform_sq(w, h, &targets),
            brute_force_sq(w, h, &targets)
        );
    }

    #[test]
    fn requested_count_rule() {
        assert_eq!(requested_segments(700, 70), 10);
        assert_eq!(requested_segments(312_620, 70), 4466);
        assert_eq!(requested_segments(20, 70), 1);
        assert_eq!(requested_segments(0, 70), 0);
    }

    #[test]
    fn single_blob_becomes_one_segment() {
        let (w, h) = (30, 30);
        let mut excluded = vec![true; w * h];
        // 7 x 10 blob = 70 px
        for r in 10..17 {
            for c in 8..18 {
                excluded[r * w + c] = false;
            }
        }
        let mask = Mask::new(w, h, excluded.clone()).unwrap();
        let img = BandStack::from_bands(w, h, vec![vec![100.0; w * h]; 3]).unwrap();
        let seg = mask_slic(&img, &mask, MaskSlicParams::default()).unwrap();
        seg.validate().unwrap();
        assert_eq!(seg.len(), 1);
        assert_eq!(seg.segments()[0].pixel_count, 70);
        for p in 0..w * h {
            assert_eq!(seg.labels()[p] == UNLABELED, excluded[p]);
        }
    }

    #[test]
    fn empty_outside_is_an_error() {
        let mask = Mask::new(2, 2, vec![true; 4]).unwrap();
        let img = BandStack::from_bands(2, 2, vec![vec![0.0; 4]; 3]).unwrap();
        assert!(matches!(
            mask_slic(&img, &mask, MaskSlicParams::default()),
            Err(Error::Empty(_))
        ));
    }
}
