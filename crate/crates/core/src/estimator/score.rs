//! Entrywise eigenvector ratios, which cancel the degree parameters.

use serde::Serialize;

use super::eigen::Eigenpairs;
use crate::error::{Error, Result};

/// Multiplier applied to the `drop_quantile` quantile of `|xi_1|`.
pub const DROP_SAFETY_FACTOR: f64 = 0.1;
pub const DROP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralEmbedding {
    /// Leading eigenvector, sign fixed so its entries sum to a positive number.
    pub xi_1: Vec<f64>,
    /// Row `r` holds `(xi_2(i)/xi_1(i), ..., xi_K(i)/xi_1(i))` for `i = retained[r]`.
    pub ratios: Vec<Vec<f64>>,
    pub retained: Vec<usize>,
    pub dropped: Vec<usize>,
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn n(&self) -> usize {
        self.xi_1.len()
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }
}

fn quantile_abs(v: &[f64], q: f64) -> f64 {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(f64::total_cmp);
    let idx = ((q.clamp(0.0, 1.0) * (a.len() - 1) as f64).floor()) as usize;
    a[idx]
}

/// Build the ratio embedding. Node `i` is dropped when
/// `|xi_1(i)| < max(1e-12, 0.1 * quantile_{drop_quantile}(|xi_1|))`.
pub fn score_embedding(pairs: &Eigenpairs, drop_quantile: f64) -> Result<SpectralEmbedding> {
    let k = pairs.k();
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 eigenpairs, got {k}")));
    }
    let mut xi_1 = pairs.vectors[0].clone();
    if xi_1.iter().sum::<f64>() < 0.0 {
        xi_1.iter_mut().for_each(|x| *x = -*x);
    }
    let threshold = (DROP_SAFETY_FACTOR * quantile_abs(&xi_1, drop_quantile)).max(DROP_FLOOR);
    let mut ratios = Vec::with_capacity(xi_1.len());
    let mut retained = Vec::with_capacity(xi_1.len());
    let mut dropped = Vec::new();
    for (i, &lead) in xi_1.iter().enumerate() {
        let row: Vec<f64> = pairs.vectors[1..].iter().map(|v| v[i] / lead).collect();
        if lead.abs() < threshold || row.iter().any(|r| !r.is_finite()) {
            dropped.push(i);
        } else {
            ratios.push(row);
            retained.push(i);
        }
    }
    if retained.is_empty() {
        return Err(Error::Estimation("every node was dropped from the embedding".into()));
    }
    Ok(SpectralEmbedding {
        xi_1,
        ratios,
        retained,
        dropped,
        eigenvalues: pairs.values.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::eigen::EigenMethod;

    fn pairs(vectors: Vec<Vec<f64>>) -> Eigenpairs {
        let k = vectors.len();
        Eigenpairs {
            values: (0..k).map(|c| 10.0 - c as f64).collect(),
            vectors,
            residuals: vec![0.0; k],
            norm_estimate: 10.0,
            method: EigenMethod::Dense,
        }
    }

    #[test]
    fn constant_leading_vector() {
        let n = 16usize;
        let s = 1.0 / (n as f64).sqrt();
        let xi2: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { s } else { -s } * 0.5).collect();
        let emb = score_embedding(&pairs(vec![vec![s; n], xi2.clone()]), 0.01).unwrap();
        assert!(emb.dropped.is_empty());
        for (row, x) in emb.ratios.iter().zip(&xi2) {
            assert!((row[0] - (n as f64).sqrt() * x).abs() < 1e-12);
        }
    }

    #[test]
    fn flipping_xi2_negates_ratios() {
        let xi1 = vec![0.5, 0.4, 0.6, 0.3, 0.37];
        let xi2 = vec![0.1, -0.2, 0.3, 0.05, -0.4];
        let neg: Vec<f64> = xi2.iter().map(|v| -v).collect();
        let a = score_embedding(&pairs(vec![xi1.clone(), xi2]), 0.01).unwrap();
        let b = score_embedding(&pairs(vec![xi1.iter().map(|v| -v).collect(), neg]), 0.01).unwrap();
        // flipping xi_1 is undone by the sign rule; flipping xi_2 negates
        for (ra, rb) in a.ratios.iter().zip(&b.ratios) {
            assert_eq!(ra[0], -rb[0]);
        }
        assert!(b.xi_1.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn tiny_leading_entries_are_dropped() {
        let mut xi1 = vec![0.3; 200];
        xi1[7] = 1e-14;
        xi1[9] = 0.0;
        let xi2 = vec![0.1; 200];
        let emb = score_embedding(&pairs(vec![xi1, xi2]), 0.01).unwrap();
        assert_eq!(emb.dropped, vec![7, 9]);
        assert_eq!(emb.retained.len() + emb.dropped.len(), 200);
        assert!(emb.ratios.iter().flatten().all(|r| r.is_finite()));
    }

    #[test]
    fn all_dropped_is_an_error() {
        let emb = score_embedding(&pairs(vec![vec![0.0; 4], vec![1.0; 4]]), 0.01);
        assert!(emb.is_err());
    }
}
