//! Average l1 membership errors, unweighted (`H`) and degree-weighted (`L`),
//! with optional alignment over column permutations.
//!
//! A permutation `perm` aligns an estimate to the truth by pairing truth
//! column `c` with estimate column `perm[c]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DegreeVector, MembershipMatrix};

/// Up to this `K` alignment enumerates all `K!` permutations; above it the
/// assignment problem is solved with the Hungarian method.
pub const ENUMERATION_MAX_K: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct LossReport {
    /// `H`, evaluated under `permutation`.
    pub unweighted: f64,
    /// `L`, minimised over permutations.
    pub weighted: f64,
    pub permutation: Vec<usize>,
    /// Set when a different permutation would give a smaller `H`.
    pub unweighted_prefers_other_permutation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_node: Option<Vec<f64>>,
}

fn check_shapes(pi_hat: &MembershipMatrix, pi: &MembershipMatrix) -> Result<()> {
    if pi_hat.n() != pi.n() || pi_hat.k() != pi.k() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {} x {}, truth is {} x {}",
            pi_hat.n(),
            pi_hat.k(),
            pi.n(),
            pi.k()
        )));
    }
    Ok(())
}

/// `(theta_i / theta_bar)^{1/2}` for every node.
pub fn degree_weights(theta: &DegreeVector) -> Vec<f64> {
    let mean = theta.mean();
    theta.as_slice().iter().map(|t| (t / mean).sqrt()).collect()
}

#[inline]
fn row_error(hat: &[f64], truth: &[f64], perm: &[usize]) -> f64 {
    perm.iter()
        .zip(truth)
        .map(|(&p, t)| (hat[p] - t).abs())
        .sum()
}

/// `n^{-1} sum_i w_i ||pi_hat_i(perm) - pi_i||_1`; unit weights when `weights` is `None`.
pub fn loss_under(
    pi_hat: &MembershipMatrix,
    pi: &MembershipMatrix,
    weights: Option<&[f64]>,
    perm: &[usize],
) -> f64 {
    let total: f64 = (0..pi.n())
        .map(|i| {
            let e = row_error(pi_hat.row(i), pi.row(i), perm);
            weights.map_or(e, |w| w[i] * e)
        })
        .sum();
    total / pi.n() as f64
}

/// Permutation minimising the (weighted) l1 loss.
pub fn best_permutation(
    pi_hat: &MembershipMatrix,
    pi: &MembershipMatrix,
    weights: Option<&[f64]>,
) -> Vec<usize> {
    let k = pi.k();
    // cost[c][d]: truth column c matched with estimate column d
    let mut cost = vec![vec![0.0; k]; k];
    for i in 0..pi.n() {
        let w = weights.map_or(1.0, |w| w[i]);
        let (h, t) = (pi_hat.row(i), pi.row(i));
        for c in 0..k {
            for d in 0..k {
                cost[c][d] += w * (h[d] - t[c]).abs();
            }
        }
    }
    if k <= ENUMERATION_MAX_K {
        best_by_enumeration(&cost)
    } else {
        hungarian(&cost)
    }
}

fn best_by_enumeration(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    // Heap's algorithm
    let mut counters = vec![0usize; k];
    let eval = |p: &[usize]| p.iter().enumerate().map(|(c, &d)| cost[c][d]).sum::<f64>();
    let first = eval(&perm);
    if first < best_cost {
        best_cost = first;
        best.clone_from(&perm);
    }
    let mut i = 0;
    while i < k {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            let c = eval(&perm);
            if c < best_cost {
                best_cost = c;
                best.clone_from(&perm);
            }
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

/// Minimum-cost perfect matching on a square cost matrix (row -> column).
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based potentials formulation
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = matched_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for col in 1..=n {
        assignment[matched_row[col] - 1] = col - 1;
    }
    assignment
}

fn identity(k: usize) -> Vec<usize> {
    (0..k).collect()
}

/// `H(pi_hat, pi)`, minimised over column permutations when `align`.
pub fn loss_unweighted(pi_hat: &MembershipMatrix, pi: &MembershipMatrix, align: bool) -> Result<f64> {
    check_shapes(pi_hat, pi)?;
    let perm = if align {
        best_permutation(pi_hat, pi, None)
    } else {
        identity(pi.k())
    };
    Ok(loss_under(pi_hat, pi, None, &perm))
}

/// `L(pi_hat, pi)` with weights `(theta_i / theta_bar)^{1/2}`.
pub fn loss_weighted(
    pi_hat: &MembershipMatrix,
    pi: &MembershipMatrix,
    theta: &DegreeVector,
    align: bool,
) -> Result<f64> {
    check_shapes(pi_hat, pi)?;
    if theta.len() != pi.n() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, memberships have {} rows",
            theta.len(),
            pi.n()
        )));
    }
    let w = degree_weights(theta);
    let perm = if align {
        best_permutation(pi_hat, pi, Some(&w))
    } else {
        identity(pi.k())
    };
    Ok(loss_under(pi_hat, pi, Some(&w), &perm))
}

/// Both losses under the permutation that minimises `L`.
pub fn loss_report(
    pi_hat: &MembershipMatrix,
    pi: &MembershipMatrix,
    theta: &DegreeVector,
    per_node: bool,
) -> Result<LossReport> {
    check_shapes(pi_hat, pi)?;
    if theta.len() != pi.n() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, memberships have {} rows",
            theta.len(),
            pi.n()
        )));
    }
    let w = degree_weights(theta);
    let perm = best_permutation(pi_hat, pi, Some(&w));
    let weighted = loss_under(pi_hat, pi, Some(&w), &perm);
    let unweighted = loss_under(pi_hat, pi, None, &perm);
    let alt = best_permutation(pi_hat, pi, None);
    let unweighted_prefers_other_permutation =
        alt != perm && loss_under(pi_hat, pi, None, &alt) < unweighted;
    let per_node = per_node.then(|| {
        (0..pi.n())
            .map(|i| row_error(pi_hat.row(i), pi.row(i), &perm))
            .collect()
    });
    Ok(LossReport {
        unweighted,
        weighted,
        permutation: perm,
        unweighted_prefers_other_permutation,
        per_node,
    })
}

/// `(min_i, max_i) (theta_i / theta_bar)^{1/2}`: under a shared permutation
/// `lower * H <= L <= upper * H`.
pub fn loss_equivalence_bounds(theta: &DegreeVector) -> (f64, f64) {
    let mean = theta.mean();
    ((theta.min() / mean).sqrt(), (theta.max() / mean).sqrt())
}
