//! Small dense k-means (Lloyd iterations, k-means++ seeding, restarts).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    centers
        .iter()
        .enumerate()
        .map(|(c, ctr)| (c, sq_dist(point, ctr)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> KMeansFit {
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (l, p) in labels.iter_mut().zip(points) {
            let (c, _) = nearest(p, &centers);
            changed |= *l != c;
            *l = c;
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (l, p) in labels.iter().zip(points) {
            counts[*l] += 1;
            for (s, v) in sums[*l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for ((ctr, s), cnt) in centers.iter_mut().zip(sums).zip(counts) {
            // empty clusters keep their previous center
            if cnt > 0 {
                *ctr = s.into_iter().map(|v| v / cnt as f64).collect();
            }
        }
    }
    let inertia = labels
        .iter()
        .zip(points)
        .map(|(l, p)| sq_dist(p, &centers[*l]))
        .sum();
    KMeansFit {
        centers,
        labels,
        inertia,
    }
}

/// Best of `restarts` k-means++ initialisations, deterministic in `seed`.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> KMeansFit {
    assert!(!points.is_empty() && k >= 1 && k <= points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..restarts.max(1))
        .map(|_| {
            let init = plus_plus(points, k, &mut rng);
            lloyd(points, init, 300)
        })
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia))
        .unwrap()
}
