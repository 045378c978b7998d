//! Vertex hunting and barycentric membership recovery.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::score::SpectralEmbedding;
use crate::error::{Error, Result};
use crate::model::MembershipMatrix;

/// Minimum smallest singular value of `[1 | vertices]`.
pub const AFFINE_TOL: f64 = 1e-8;
/// Refinement balls have this fraction of the minimum vertex separation as radius.
pub const REFINE_RADIUS_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Serialize)]
pub struct SimplexVertices {
    /// `K` points of dimension `K - 1`, sorted lexicographically.
    pub points: Vec<Vec<f64>>,
    /// Most negative barycentric coordinate over retained rows (0 when all are inside).
    pub max_negative_weight: f64,
}

impl SimplexVertices {
    pub fn new(mut points: Vec<Vec<f64>>) -> Result<Self> {
        let k = points.len();
        if k < 2 || points.iter().any(|p| p.len() + 1 != k) {
            return Err(Error::DimensionMismatch(format!(
                "need K points of dimension K-1, got {k} points"
            )));
        }
        points.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let m = augmented(&points);
        let sv = m.clone().svd(false, false).singular_values;
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin.is_nan() || smin <= AFFINE_TOL {
            return Err(Error::Estimation(format!(
                "vertices are affinely dependent (smallest singular value {smin:.3e})"
            )));
        }
        Ok(Self {
            points,
            max_negative_weight: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    /// Barycentric weights of each row; `w` solves `[1; r] = M w` with `M` the augmented vertex matrix.
    pub fn barycentric(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let k = self.k();
        let inv = augmented(&self.points)
            .try_inverse()
            .ok_or_else(|| Error::Estimation("singular barycentric system".into()))?;
        rows.iter()
            .map(|r| {
                if r.len() + 1 != k {
                    return Err(Error::DimensionMismatch(format!(
                        "row of length {} for K = {k}",
                        r.len()
                    )));
                }
                let mut y = DVector::from_element(k, 1.0);
                y.rows_mut(1, k - 1).copy_from_slice(r);
                Ok((&inv * y).iter().copied().collect())
            })
            .collect()
    }
}

// Column k is (1, v_k).
fn augmented(points: &[Vec<f64>]) -> DMatrix<f64> {
    let k = points.len();
    DMatrix::from_fn(k, k, |r, c| if r == 0 { 1.0 } else { points[c][r - 1] })
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Successive projection on the rows `(1, r_i)`. Returns row indices; ties go to the lowest index.
pub fn successive_projection(rows: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    if rows.len() < k {
        return Err(Error::InvalidParameter(format!(
            "need at least {k} rows for vertex hunting, got {}",
            rows.len()
        )));
    }
    let mut y: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
        .collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = 0;
        let mut best_norm = -1.0;
        for (i, row) in y.iter().enumerate() {
            let s: f64 = row.iter().map(|v| v * v).sum();
            if s > best_norm {
                best_norm = s;
                best = i;
            }
        }
        if best_norm <= 0.0 {
            return Err(Error::Estimation("successive projection ran out of directions".into()));
        }
        picked.push(best);
        let u: Vec<f64> = y[best].iter().map(|v| v / best_norm.sqrt()).collect();
        for row in y.iter_mut() {
            let d: f64 = row.iter().zip(&u).map(|(a, b)| a * b).sum();
            row.iter_mut().zip(&u).for_each(|(a, b)| *a -= d * b);
        }
    }
    Ok(picked)
}

/// Move each vertex to the mean of the rows that are nearest to it and lie
/// within a quarter of the minimum vertex separation. Stops early once stable.
pub fn refine_vertices(rows: &[Vec<f64>], mut vertices: Vec<Vec<f64>>, steps: usize) -> Vec<Vec<f64>> {
    let k = vertices.len();
    for _ in 0..steps {
        let mut sep = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                sep = sep.min(dist_sq(&vertices[a], &vertices[b]).sqrt());
            }
        }
        let radius_sq = (REFINE_RADIUS_FRACTION * sep).powi(2);
        let dim = vertices[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for r in rows {
            let (best, d) = vertices
                .iter()
                .enumerate()
                .map(|(c, v)| (c, dist_sq(r, v)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            if d <= radius_sq {
                counts[best] += 1;
                sums[best].iter_mut().zip(r).for_each(|(s, x)| *s += x);
            }
        }
        let mut moved = 0.0f64;
        for c in 0..k {
            if counts[c] > 0 {
                let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
                moved = moved.max(dist_sq(&mean, &vertices[c]));
                vertices[c] = mean;
            }
        }
        if moved == 0.0 {
            break;
        }
    }
    vertices
}

/// Successive projection followed by `refine_steps` ball-restricted mean updates.
pub fn hunt_vertices(embedding: &SpectralEmbedding, k: usize, refine_steps: usize) -> Result<SimplexVertices> {
    if embedding.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} eigenpairs, K = {k}",
            embedding.k()
        )));
    }
    let rows = &embedding.ratios;
    let idx = successive_projection(rows, k)?;
    let start: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
    let mut v = SimplexVertices::new(refine_vertices(rows, start, refine_steps))?;
    let w = v.barycentric(rows)?;
    v.max_negative_weight = w.iter().flatten().fold(0.0f64, |m, &x| m.min(x));
    Ok(v)
}

/// Per-vertex first-eigenvector scale `b_1(k) = (lambda_1 + sum_m lambda_{m+1} v_k(m)^2)^{-1/2}`.
pub fn denormalization_scales(vertices: &SimplexVertices, eigenvalues: &[f64]) -> Result<Vec<f64>> {
    if eigenvalues.len() != vertices.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenvalues for K = {}",
            eigenvalues.len(),
            vertices.k()
        )));
    }
    vertices
        .points
        .iter()
        .map(|v| {
            let bracket = eigenvalues[0]
                + v.iter().zip(&eigenvalues[1..]).map(|(x, l)| l * x * x).sum::<f64>();
            if bracket > 0.0 {
                Ok(bracket.powf(-0.5))
            } else {
                Err(Error::Estimation(format!(
                    "non-positive de-normalization bracket {bracket:.3e} at vertex {v:?}"
                )))
            }
        })
        .collect()
}

/// Convert barycentric weights into memberships: divide by the vertex scale,
/// clip negatives, renormalize. Rows that clip to zero mass become uniform.
pub fn weights_to_pmf(w: &[f64], scales: &[f64]) -> Vec<f64> {
    let k = w.len();
    let mut p: Vec<f64> = w.iter().zip(scales).map(|(x, b)| (x / b).max(0.0)).collect();
    let s: f64 = p.iter().sum();
    if s > 0.0 && s.is_finite() {
        p.iter_mut().for_each(|x| *x /= s);
    } else {
        p = vec![1.0 / k as f64; k];
    }
    p
}

/// Memberships for all `n` nodes. Dropped nodes receive the uniform row.
pub fn estimate_memberships(
    embedding: &SpectralEmbedding,
    vertices: &SimplexVertices,
    eigenvalues: &[f64],
) -> Result<MembershipMatrix> {
    let k = vertices.k();
    let scales = denormalization_scales(vertices, eigenvalues)?;
    let weights = vertices.barycentric(&embedding.ratios)?;
    let mut data = vec![1.0 / k as f64; embedding.n() * k];
    for (&i, w) in embedding.retained.iter().zip(&weights) {
        data[i * k..(i + 1) * k].copy_from_slice(&weights_to_pmf(w, &scales));
    }
    MembershipMatrix::from_flat(embedding.n(), k, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embedding(rows: Vec<Vec<f64>>, eigenvalues: Vec<f64>) -> SpectralEmbedding {
        let n = rows.len();
        SpectralEmbedding {
            xi_1: vec![1.0; n],
            retained: (0..n).collect(),
            dropped: vec![],
            ratios: rows,
            eigenvalues,
        }
    }

    fn triangle() -> Vec<Vec<f64>> {
        vec![vec![-1.0, -0.5], vec![0.0, 1.0], vec![1.2, -0.4]]
    }

    #[test]
    fn pure_corners_are_returned() {
        let corners = triangle();
        let rows: Vec<Vec<f64>> = (0..30).map(|i| corners[i % 3].clone()).collect();
        let v = hunt_vertices(&embedding(rows, vec![3.0, 1.0, 0.5]), 3, 5).unwrap();
        let mut expected = corners.clone();
        expected.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (got, want) in v.points.iter().zip(&expected) {
            assert!(dist_sq(got, want).sqrt() < 1e-8);
        }
        assert!(v.max_negative_weight.abs() < 1e-12);
    }

    #[test]
    fn corners_with_interior_points() {
        let corners = triangle();
        let mut rows = corners.clone();
        let mut state = 17u64;
        for _ in 0..200 {
            let mut w = [0.0; 3];
            for x in w.iter_mut() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *x = ((state >> 11) as f64 / (1u64 << 53) as f64) + 1e-3;
            }
            let s: f64 = w.iter().sum();
            rows.push(
                (0..2)
                    .map(|d| (0..3).map(|c| w[c] / s * corners[c][d]).sum())
                    .collect(),
            );
        }
        // no refinement: interior points would pull the corners inward
        let v = hunt_vertices(&embedding(rows, vec![3.0, 1.0, 0.5]), 3, 0).unwrap();
        for c in &corners {
            assert!(v.points.iter().any(|p| dist_sq(p, c).sqrt() < 1e-12));
        }
        assert!(v.max_negative_weight > -1e-12);
    }

    #[test]
    fn refinement_recovers_cluster_centres() {
        let centres = [vec![-1.0], vec![1.0]];
        let mut rows = Vec::new();
        for c in &centres {
            for j in 0..50 {
                rows.push(vec![c[0] + 0.02 * ((j % 7) as f64 - 3.0)]);
            }
        }
        for _ in 0..40 {
            rows.push(vec![0.0]);
        }
        let v = hunt_vertices(&embedding(rows, vec![2.0, 1.0]), 2, 10).unwrap();
        assert!((v.points[0][0] + 1.0).abs() < 0.01);
        assert!((v.points[1][0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn degenerate_vertices_error() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(hunt_vertices(&embedding(rows, vec![3.0, 1.0, 0.5]), 3, 0).is_err());
        assert!(SimplexVertices::new(vec![vec![0.5], vec![0.5]]).is_err());
    }

    #[test]
    fn too_few_rows_error() {
        assert!(successive_projection(&[vec![1.0]], 2).is_err());
    }

    #[test]
    fn node_at_vertex_is_pure() {
        let corners = triangle();
        let v = SimplexVertices::new(corners.clone()).unwrap();
        let emb = embedding(corners, vec![3.0, 1.0, 0.5]);
        let pi = estimate_memberships(&emb, &v, &emb.eigenvalues).unwrap();
        for i in 0..3 {
            let label = pi.pure_label(i).expect("pure row");
            // vertex order is lexicographic, so map back by position
            let row = &emb.ratios[i];
            assert!(dist_sq(&v.points[label], row) < 1e-20);
            assert!((pi.row(i)[label] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn barycenter_with_equal_scales_is_uniform() {
        // points on a circle give equal brackets when lambda_2 = lambda_3
        let k = 3;
        let corners: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                let t = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let v = SimplexVertices::new(corners).unwrap();
        let scales = denormalization_scales(&v, &[3.0, 1.0, 1.0]).unwrap();
        assert!(scales.iter().all(|s| (s - scales[0]).abs() < 1e-14));
        let emb = embedding(vec![vec![0.0, 0.0]], vec![3.0, 1.0, 1.0]);
        let pi = estimate_memberships(&emb, &v, &emb.eigenvalues).unwrap();
        for x in pi.row(0) {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dropped_nodes_get_uniform_rows() {
        let v = SimplexVertices::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        let emb = SpectralEmbedding {
            xi_1: vec![1.0, 0.0, 1.0],
            ratios: vec![vec![-1.0], vec![1.0]],
            retained: vec![0, 2],
            dropped: vec![1],
            eigenvalues: vec![2.0, 1.0],
        };
        let pi = estimate_memberships(&emb, &v, &emb.eigenvalues).unwrap();
        assert_eq!(pi.row(1), &[0.5, 0.5]);
        assert_eq!(pi.row(0), &[1.0, 0.0]);
        assert_eq!(pi.row(2), &[0.0, 1.0]);
    }

    #[test]
    fn outside_points_are_clipped() {
        let v = SimplexVertices::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        let emb = embedding(vec![vec![1.5], vec![-3.0]], vec![2.0, 1.0]);
        let pi = estimate_memberships(&emb, &v, &emb.eigenvalues).unwrap();
        assert_eq!(pi.row(0), &[0.0, 1.0]);
        assert_eq!(pi.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn non_positive_bracket_errors() {
        let v = SimplexVertices::new(vec![vec![-2.0], vec![1.0]]).unwrap();
        assert!(denormalization_scales(&v, &[1.0, -1.0]).is_err());
    }
}
