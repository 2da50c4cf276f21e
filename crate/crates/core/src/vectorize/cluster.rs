use std::collections::VecDeque;

use crate::geometry::Point3;
use crate::spatial::{GridIndex, Metric};

/// Statistical outlier removal.
///
/// Each point's mean distance to its `k` nearest neighbours is compared with
/// the population of those means; points above `mean + n_sigma * std` are
/// dropped. Sets of `k` points or fewer are returned unchanged.
pub fn sor_denoise(points: &[Point3], k: usize, n_sigma: f64) -> Vec<Point3> {
    let k = k.max(1);
    if points.len() <= k {
        return points.to_vec();
    }
    let cell = GridIndex::cell_for_knn(points, k);
    let index = GridIndex::new(points, cell, Metric::Space);
    let means: Vec<f64> = (0..points.len())
        .map(|i| {
            let d = index.knn_dist2(&points[i], k, Some(i));
            d.iter().map(|x| x.sqrt()).sum::<f64>() / d.len() as f64
        })
        .collect();
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    let limit = mean + n_sigma * var.sqrt();
    points
        .iter()
        .zip(&means)
        .filter(|(_, &m)| m <= limit)
        .map(|(p, _)| *p)
        .collect()
}

/// Connected components of the graph joining points closer than `radius`.
///
/// Components are ordered by their smallest member index; members ascend.
pub fn connected_components(points: &[Point3], radius: f64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let index = GridIndex::new(points, radius, Metric::Space);
    let mut component = vec![usize::MAX; points.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    let mut near = Vec::new();
    for seed in 0..points.len() {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = out.len();
        component[seed] = id;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            index.within(&points[i], radius, &mut near);
            for &j in &near {
                if component[j] == usize::MAX {
                    component[j] = id;
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Nearest-neighbour clustering: components with at least `min_size` points.
pub fn cluster_nn(points: &[Point3], radius: f64, min_size: usize) -> Vec<Vec<Point3>> {
    connected_components(points, radius)
        .into_iter()
        .filter(|c| c.len() >= min_size)
        .map(|c| c.into_iter().map(|i| points[i]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut ChaCha8Rng, cx: f64, cy: f64, n: usize, r: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| Point3::xyz(cx + rng.random_range(-r..r), cy + rng.random_range(-r..r), 0.0))
            .collect()
    }

    #[test]
    fn sor_drops_far_outlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, 0.0, 0.0, 100, 0.5);
        pts.push(Point3::xyz(10.0, 0.0, 0.0));
        // Brute-force mean kNN distance of the outlier vs the rest.
        let mean_knn = |i: usize| {
            let mut d: Vec<f64> = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| pts[i].dist2(&pts[j]).sqrt())
                .collect();
            d.sort_by(f64::total_cmp);
            d[..8].iter().sum::<f64>() / 8.0
        };
        assert!(mean_knn(100) > 9.0);
        let kept = sor_denoise(&pts, 8, 2.0);
        assert_eq!(kept.len(), 100);
        assert!(kept.iter().all(|p| p.x < 1.0));
    }

    #[test]
    fn sor_keeps_identical_points_and_tiny_sets() {
        let same = vec![Point3::xyz(1.0, 2.0, 3.0); 30];
        assert_eq!(sor_denoise(&same, 8, 2.0).len(), 30);
        let one = vec![Point3::xyz(1.0, 2.0, 3.0)];
        assert_eq!(sor_denoise(&one, 8, 2.0), one);
    }

    #[test]
    fn blobs_and_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = blob(&mut rng, 0.0, 0.0, 50, 0.3);
        pts.extend(blob(&mut rng, 5.0, 0.0, 50, 0.3));
        assert_eq!(cluster_nn(&pts, 0.5, 10).len(), 2);
        let chain: Vec<_> = (0..30).map(|i| Point3::xyz(i as f64 * 0.4, 0.0, 0.0)).collect();
        assert_eq!(cluster_nn(&chain, 0.5, 10).len(), 1);
        let small: Vec<_> = (0..5).map(|i| Point3::xyz(i as f64 * 0.1, 0.0, 0.0)).collect();
        assert!(cluster_nn(&small, 0.5, 10).is_empty());
    }
}
