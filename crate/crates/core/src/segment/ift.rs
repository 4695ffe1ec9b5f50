//! IFT-SLIC: superpixels as optimum-path forests rooted at SLIC seeds.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::connectivity::neighbors4;
use super::slic::validate_common;
use super::{grid_seeds, perturb_seeds, Features, SegParams, Segmentation, UNLABELED};
use crate::error::{Error, Result};
use crate::raster::BandStack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IftSlicParams {
    pub n_segments: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
}

impl Default for IftSlicParams {
    fn default() -> Self {
        IftSlicParams {
            n_segments: 100,
            alpha: 0.5,
            beta: 12.0,
            iterations: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    cost: f64,
    root: i32,
    pixel: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed so BinaryHeap pops the lowest (cost, root, pixel).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.root.cmp(&self.root))
            .then(other.pixel.cmp(&self.pixel))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Optimum-path forest over the 4-adjacency graph with additive cost
/// `f(π·⟨s,t⟩) = f(π) + (α·‖I(t) − μ_root‖)^β + 1`. Equal costs go to the
/// lower root index.
pub(crate) fn optimum_path_forest(
    features: &Features,
    width: usize,
    height: usize,
    roots: &[usize],
    root_colors: &[Vec<f64>],
    alpha: f64,
    beta: f64,
) -> Vec<i32> {
    let n = width * height;
    let mut cost = vec![f64::INFINITY; n];
    let mut label = vec![UNLABELED; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(n);
    for (k, &s) in roots.iter().enumerate() {
        let k = k as i32;
        if cost[s] == 0.0 && label[s] <= k {
            continue;
        }
        cost[s] = 0.0;
        label[s] = k;
        heap.push(Entry {
            cost: 0.0,
            root: k,
            pixel: s,
        });
    }
    while let Some(Entry {
        cost: c,
        root,
        pixel: p,
    }) = heap.pop()
    {
        if done[p] || c != cost[p] || root != label[p] {
            continue;
        }
        done[p] = true;
        let mu = &root_colors[root as usize];
        for q in neighbors4(p, width, height) {
            if done[q] {
                continue;
            }
            let w = (alpha * features.dist_sq(q, mu).sqrt()).powf(beta) + 1.0;
            let tmp = c + w;
            if tmp < cost[q] || (tmp == cost[q] && root < label[q]) {
                cost[q] = tmp;
                label[q] = root;
                heap.push(Entry {
                    cost: tmp,
                    root,
                    pixel: q,
                });
            }
        }
    }
    label
}

/// Per tree: the member pixel nearest its centroid, and its mean color.
fn recenter(
    features: &Features,
    width: usize,
    labels: &[i32],
    k: usize,
) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut sums = vec![(0.0f64, 0.0f64, 0usize, vec![0.0; features.dim]); k];
    for (p, &l) in labels.iter().enumerate() {
        if l < 0 {
            continue;
        }
        let s = &mut sums[l as usize];
        s.0 += (p / width) as f64;
        s.1 += (p % width) as f64;
        s.2 += 1;
        for (a, v) in s.3.iter_mut().zip(features.get(p)) {
            *a += v;
        }
    }
    let centroids: Vec<(f64, f64)> = sums
        .iter()
        .map(|s| (s.0 / s.2.max(1) as f64, s.1 / s.2.max(1) as f64))
        .collect();
    let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); k];
    for (p, &l) in labels.iter().enumerate() {
        if l < 0 {
            continue;
        }
        let (cr, cc) = centroids[l as usize];
        let d = ((p / width) as f64 - cr).powi(2) + ((p % width) as f64 - cc).powi(2);
        let b = &mut best[l as usize];
        if d < b.0 {
            *b = (d, p);
        }
    }
    let roots = best.iter().map(|b| b.1).collect();
    let colors = sums
        .into_iter()
        .map(|(_, _, count, color)| color.into_iter().map(|v| v / count.max(1) as f64).collect())
        .collect();
    (roots, colors)
}

pub fn ift_slic(composite: &BandStack, params: IftSlicParams) -> Result<Segmentation> {
    validate_common(composite, 1.0)?;
    if !(params.alpha > 0.0) || !(params.beta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha and beta must be positive, got {} and {}",
            params.alpha, params.beta
        )));
    }
    let (width, height) = composite.dims();
    let (grid, step) = grid_seeds(width, height, params.n_segments)?;
    let features = Features::from_stack(composite);
    let seeds = perturb_seeds(&features, width, height, &grid, None);
    let mut roots: Vec<usize> = seeds.iter().map(|&(r, c)| r * width + c).collect();
    let mut colors: Vec<Vec<f64>> = roots.iter().map(|&p| features.get(p).to_vec()).collect();
    let mut labels = optimum_path_forest(
        &features,
        width,
        height,
        &roots,
        &colors,
        params.alpha,
        params.beta,
    );
    for _ in 0..params.iterations {
        let (next_roots, next_colors) = recenter(&features, width, &labels, roots.len());
        if next_roots == roots && next_colors == colors {
            break;
        }
        roots = next_roots;
        colors = next_colors;
        labels = optimum_path_forest(
            &features,
            width,
            height,
            &roots,
            &colors,
            params.alpha,
            params.beta,
        );
    }
    Segmentation::from_labels(
        width,
        height,
        labels,
        SegParams::new("ift-slic")
            .with("n_segments", params.n_segments)
            .with("alpha", params.alpha)
            .with("beta", params.beta)
            .with("iterations", params.iterations)
            .with("step", step),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_manhattan_voronoi() {
        let (w, h) = (24, 18);
        let img = BandStack::from_bands(w, h, vec![vec![9.0; w * h]; 3]).unwrap();
        let params = IftSlicParams {
            n_segments: 12,
            iterations: 0,
            ..Default::default()
        };
        let seg = ift_slic(&img, params).unwrap();
        seg.validate().unwrap();
        let (seeds, _) = grid_seeds(w, h, 12).unwrap();
        for p in 0..w * h {
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            let mut best = (i64::MAX, 0usize);
            for (k, &(sr, sc)) in seeds.iter().enumerate() {
                let d = (r - sr as i64).abs() + (c - sc as i64).abs();
                if d < best.0 {
                    best = (d, k);
                }
            }
            assert_eq!(seg.labels()[p], best.1 as i32, "pixel {p}");
        }
    }

    #[test]
    fn deterministic() {
        let plane: Vec<f32> = (0..900).map(|i| ((i * 37) % 101) as f32).collect();
        let img = BandStack::from_bands(30, 30, vec![plane.clone(), plane.clone(), plane]).unwrap();
        let a = ift_slic(
            &img,
            IftSlicParams {
                n_segments: 9,
                ..Default::default()
            },
        )
        .unwrap();
        let b = ift_slic(
            &img,
            IftSlicParams {
                n_segments: 9,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.labels(), b.labels());
        a.validate().unwrap();
    }
}
