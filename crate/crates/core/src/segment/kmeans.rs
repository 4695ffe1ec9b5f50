//! Lloyd's k-means with k-means++ seeding, and the elbow rule.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub wcss: f64,
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Cluster `points` into at most `k` groups. Fewer centroids are produced when
/// the data has fewer than `k` distinct points.
pub fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeansFit {
    assert!(!points.is_empty() && k >= 1);
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if *d > 0.0 && target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        if d2[pick] == 0.0 {
            // Rounding fell off the end; take the last point still uncovered.
            pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
        }
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq(p, centroids.last().unwrap()));
        }
    }
    let dim = points[0].len();
    let mut assignments = vec![0usize; points.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let (best, _) = nearest(p, &centroids);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&a, p) in assignments.iter().zip(points) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((c, s), n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if *n > 0 {
                *c = s.into_iter().map(|v| v / *n as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = assignments
        .iter()
        .zip(points)
        .map(|(&a, p)| sq(p, &centroids[a]))
        .sum();
    KMeansFit {
        assignments,
        centroids,
        wcss,
    }
}

/// Elbow rule: the `k` maximizing the discrete second difference
/// `W(k−1) − 2W(k) + W(k+1)`, where `wcss[i]` is `W(i + 1)`. Homogeneous data
/// (`W(1) ≈ 0`) gives 1; ties go to the smaller `k`.
pub fn elbow_k(wcss: &[f64]) -> usize {
    let Some(&first) = wcss.first() else { return 1 };
    if first <= 1e-9 * wcss.len() as f64 || wcss.len() < 2 {
        return 1;
    }
    if wcss.len() == 2 {
        return 2;
    }
    let mut best = (2, f64::NEG_INFINITY);
    for k in 2..wcss.len() {
        let second = wcss[k - 2] - 2.0 * wcss[k - 1] + wcss[k];
        if second > best.1 {
            best = (k, second);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn separates_two_clusters() {
        let mut pts = vec![vec![0.0, 0.0]; 10];
        pts.extend(vec![vec![10.0, 10.0]; 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fit = kmeans(&pts, 2, &mut rng);
        assert_eq!(fit.wcss, 0.0);
        assert_ne!(fit.assignments[0], fit.assignments[14]);
    }

    #[test]
    fn elbow_examples() {
        assert_eq!(elbow_k(&[0.0, 0.0, 0.0]), 1);
        assert_eq!(elbow_k(&[100.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 2);
        assert_eq!(elbow_k(&[100.0, 60.0, 5.0, 4.0, 3.0, 2.0]), 3);
    }
}
