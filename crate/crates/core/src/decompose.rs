//! Principal component analysis of a band stack into a pseudo-RGB composite.
//!
//! The band dimension of optical scenes is small (seven Landsat bands), so the
//! decomposition is done on the band×band covariance matrix with a cyclic
//! Jacobi eigen-solver rather than an SVD of the pixel matrix.

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BandStack, GeoRef};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// Per-band mean of the fitted pixels.
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, one per retained component, each `bands` long.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each axis, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Sum of per-band sample variances of the fitted data.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn band_count(&self) -> usize {
        self.mean.len()
    }

    /// Scores of one pixel on every retained component.
    pub fn project(&self, pixel: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(pixel)
                    .zip(&self.mean)
                    .map(|((a, x), m)| a * (x - m))
                    .sum()
            })
            .collect()
    }

    /// Reconstruction of a pixel from its first `k` scores.
    pub fn reconstruct(&self, scores: &[f64], k: usize) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter().zip(scores).take(k) {
            for (o, a) in out.iter_mut().zip(c) {
                *o += a * s;
            }
        }
        out
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("pca model", e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<PcaModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors as rows, sorted by
/// descending eigenvalue.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    // v holds eigenvectors as columns while iterating.
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off.sqrt() <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// Flip `axis` so its largest-magnitude coefficient is positive.
fn fix_sign(axis: &mut [f64]) {
    let mut best = 0;
    for (i, x) in axis.iter().enumerate() {
        if x.abs() > axis[best].abs() + 1e-12 {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Mean-centered (not standardized) PCA over every pixel of the stack.
pub fn fit_pca(stack: &BandStack, n_components: usize) -> Result<PcaModel> {
    let bands = stack.band_count();
    if n_components == 0 || n_components > bands {
        return Err(Error::InvalidParameter(format!(
            "n_components must be in 1..={bands}, got {n_components}"
        )));
    }
    let n = stack.pixel_count();
    let mut distinct: HashSet<Vec<u32>> = HashSet::new();
    for i in 0..n {
        distinct.insert(stack.bands().iter().map(|b| b[i].to_bits()).collect());
        if distinct.len() > n_components {
            break;
        }
    }
    // Centering removes one degree of freedom.
    if distinct.len() < n_components.max(2) {
        return Err(Error::InvalidParameter(format!(
            "{} distinct pixel vectors cannot support {n_components} components",
            distinct.len()
        )));
    }
    let mean: Vec<f64> = stack
        .bands()
        .iter()
        .map(|b| b.iter().map(|&v| v as f64).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; bands]; bands];
    for i in 0..bands {
        for j in i..bands {
            let (bi, bj) = (stack.band(i), stack.band(j));
            let s: f64 = (0..n)
                .map(|p| (bi[p] as f64 - mean[i]) * (bj[p] as f64 - mean[j]))
                .sum();
            cov[i][j] = s / (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let total_variance = (0..bands).map(|i| cov[i][i]).sum();
    let (values, mut vectors) = symmetric_eigen(&cov);
    vectors.iter_mut().for_each(|v| fix_sign(v));
    Ok(PcaModel {
        mean,
        components: vectors.into_iter().take(n_components).collect(),
        explained_variance: values
            .into_iter()
            .take(n_components)
            .map(|v| v.max(0.0))
            .collect(),
        total_variance,
    })
}

/// Project every pixel onto the model's components and min-max scale each
/// component plane to 0..=255. Constant planes map to 0.
pub fn pca_composite(stack: &BandStack, model: &PcaModel) -> Result<BandStack> {
    if stack.band_count() != model.band_count() {
        return Err(Error::InvalidParameter(format!(
            "model fitted on {} bands, stack has {}",
            model.band_count(),
            stack.band_count()
        )));
    }
    let n = stack.pixel_count();
    let planes: Vec<Vec<f32>> = model
        .components
        .par_iter()
        .map(|axis| {
            let scores: Vec<f64> = (0..n)
                .map(|p| {
                    stack
                        .bands()
                        .iter()
                        .zip(axis)
                        .zip(&model.mean)
                        .map(|((b, a), m)| a * (b[p] as f64 - m))
                        .sum()
                })
                .collect();
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            // Scores are rounding noise when the spread is tiny relative to the data.
            let scale = model.mean.iter().map(|m| m.abs()).fold(1.0, f64::max);
            if span <= 1e-9 * scale {
                vec![0.0; n]
            } else {
                scores
                    .iter()
                    .map(|s| ((s - lo) / span * 255.0) as f32)
                    .collect()
            }
        })
        .collect();
    let names = (1..=planes.len()).map(|i| format!("PC{i}")).collect();
    let geo: GeoRef = stack.geo().clone();
    BandStack::new(stack.width(), stack.height(), planes, names, geo, None)
}
