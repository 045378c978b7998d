//! Membership tests for the degree class `Q*_n(K, c)` and the membership
//! classes `G~_n(K, c, L0; theta)` and `G*_n(K, c; theta)`.
//!
//! All membership-vector distances are Euclidean.

use serde::Serialize;

use super::{pure_label, DegreeVector, MembershipMatrix};
use crate::cluster::kmeans;
use crate::error::{Error, Result};

const COUNT_TOL: f64 = 1e-9;
const MASS_RTOL: f64 = 1e-12;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_SEED: u64 = 0x5eed_c1a5;

#[derive(Debug, Clone, Serialize)]
pub struct ThetaClassReport {
    pub member: bool,
    /// `n^{-1/2} log n`.
    pub threshold: f64,
    /// `theta_bar - threshold`.
    pub mean_margin: f64,
    /// 1-based rank `ceil(cKn)` of the order statistic that is checked.
    pub order_index: usize,
    /// `theta_(ceil(cKn)) - threshold`.
    pub order_stat_margin: f64,
}

/// `theta_bar >= n^{-1/2} log n` and `theta_(cKn) >= n^{-1/2} log n`.
pub fn check_theta_class(theta: &DegreeVector, k: usize, c: f64) -> Result<ThetaClassReport> {
    if !(c > 0.0 && c < 1.0 / k as f64) {
        return Err(Error::InvalidParameter(format!("c = {c} outside (0, 1/{k})")));
    }
    let n = theta.len() as f64;
    let threshold = n.ln() / n.sqrt();
    let order_index = ((c * k as f64 * n - COUNT_TOL).ceil() as usize).max(1);
    let mean_margin = theta.mean() - threshold;
    let order_stat_margin = theta.order_statistic(order_index) - threshold;
    Ok(ThetaClassReport {
        member: mean_margin >= 0.0 && order_stat_margin >= 0.0,
        threshold,
        mean_margin,
        order_index,
        order_stat_margin,
    })
}

/// First clause of a membership class that fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PiClassClause {
    PureCount { community: usize, count: usize, required: f64 },
    PureMass { community: usize, mass: f64, required: f64 },
    /// `G*` only: a mixed row lies outside the `1/log n` ball around the barycenter.
    BarycenterRadius { node: usize, distance: f64, radius: f64 },
    /// `G~` only: no partition of the mixed nodes with `L <= L0` clusters works.
    MixedPartition { reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct PiClassReport {
    pub member: bool,
    pub failing: Option<PiClassClause>,
    pub pure_counts: Vec<usize>,
    pub n_mixed: usize,
    /// Number of mixed-node clusters accepted (0 when there are no mixed nodes).
    pub clusters: Option<usize>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_dims(pi: &MembershipMatrix, theta: &DegreeVector, k: usize) -> Result<()> {
    if pi.n() != theta.len() || pi.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "Pi is {} x {}, theta has {} entries, K = {k}",
            pi.n(),
            pi.k(),
            theta.len()
        )));
    }
    Ok(())
}

struct PureSummary {
    counts: Vec<usize>,
    mixed: Vec<usize>,
    failing: Option<PiClassClause>,
}

/// Pure-node count and mass clauses shared by both classes.
fn pure_clauses(pi: &MembershipMatrix, theta: &DegreeVector, k: usize, c: f64) -> PureSummary {
    let n = pi.n();
    let mut counts = vec![0usize; k];
    let mut mass = vec![0.0; k];
    let mut mixed = Vec::new();
    for i in 0..n {
        match pure_label(pi.row(i)) {
            Some(l) => {
                counts[l] += 1;
                mass[l] += theta.get(i) * theta.get(i);
            }
            None => mixed.push(i),
        }
    }
    let need_count = c * n as f64;
    let need_mass = c * theta.norm_sq();
    let mut failing = None;
    for l in 0..k {
        if (counts[l] as f64) < need_count - COUNT_TOL {
            failing = Some(PiClassClause::PureCount {
                community: l,
                count: counts[l],
                required: need_count,
            });
            break;
        }
        if mass[l] < need_mass * (1.0 - MASS_RTOL) {
            failing = Some(PiClassClause::PureMass {
                community: l,
                mass: mass[l],
                required: need_mass,
            });
            break;
        }
    }
    PureSummary {
        counts,
        mixed,
        failing,
    }
}

/// `G*_n(K, c; theta)`: pure-node clauses plus every mixed row within
/// `1/log n` of `(1/K) 1_K`.
pub fn check_pi_star_class(
    pi: &MembershipMatrix,
    theta: &DegreeVector,
    k: usize,
    c: f64,
) -> Result<PiClassReport> {
    check_dims(pi, theta, k)?;
    let summary = pure_clauses(pi, theta, k, c);
    let mut failing = summary.failing;
    if failing.is_none() {
        let radius = 1.0 / (pi.n() as f64).ln();
        let center = vec![1.0 / k as f64; k];
        for &i in &summary.mixed {
            let distance = euclid(pi.row(i), &center);
            if distance > radius {
                failing = Some(PiClassClause::BarycenterRadius {
                    node: i,
                    distance,
                    radius,
                });
                break;
            }
        }
    }
    Ok(PiClassReport {
        member: failing.is_none(),
        failing,
        pure_counts: summary.counts,
        n_mixed: summary.mixed.len(),
        clusters: Some(usize::from(!summary.mixed.is_empty())),
    })
}

/// `G~_n(K, c, L0; theta)`. The partition of the mixed nodes is searched
/// with k-means for `L = 1..=L0`; the first `L` meeting every clause wins.
pub fn check_pi_class(
    pi: &MembershipMatrix,
    theta: &DegreeVector,
    k: usize,
    c: f64,
    l0: usize,
) -> Result<PiClassReport> {
    check_dims(pi, theta, k)?;
    let summary = pure_clauses(pi, theta, k, c);
    let mut report = PiClassReport {
        member: false,
        failing: summary.failing.clone(),
        pure_counts: summary.counts.clone(),
        n_mixed: summary.mixed.len(),
        clusters: None,
    };
    if report.failing.is_some() {
        return Ok(report);
    }
    if summary.mixed.is_empty() {
        report.member = true;
        report.clusters = Some(0);
        return Ok(report);
    }

    let n = pi.n() as f64;
    let m = summary.mixed.len();
    let size_floor = c * m as f64;
    let log_n = n.ln();
    let sparsity_floor = log_n.powi(3) / (theta.mean() * theta.mean());
    if size_floor < sparsity_floor {
        report.failing = Some(PiClassClause::MixedPartition {
            reason: format!(
                "c|M| = {size_floor:.4} < log^3(n)/theta_bar^2 = {sparsity_floor:.4}"
            ),
        });
        return Ok(report);
    }
    let radius = 1.0 / log_n;
    let points: Vec<Vec<f64>> = summary.mixed.iter().map(|&i| pi.row(i).to_vec()).collect();
    let mut last_reason = String::new();
    for l in 1..=l0.min(m) {
        let fit = kmeans(&points, l, KMEANS_RESTARTS, KMEANS_SEED);
        match partition_violation(&points, &fit.labels, &fit.centers, k, c, size_floor, radius) {
            None => {
                report.member = true;
                report.clusters = Some(l);
                return Ok(report);
            }
            Some(reason) => last_reason = format!("L = {l}: {reason}"),
        }
    }
    report.failing = Some(PiClassClause::MixedPartition {
        reason: last_reason,
    });
    Ok(report)
}

fn partition_violation(
    points: &[Vec<f64>],
    labels: &[usize],
    centers: &[Vec<f64>],
    k: usize,
    c: f64,
    size_floor: f64,
    radius: f64,
) -> Option<String> {
    for (a, ga) in centers.iter().enumerate() {
        let size = labels.iter().filter(|&&l| l == a).count();
        if (size as f64) < size_floor - COUNT_TOL {
            return Some(format!("cluster {a} has {size} < c|M| = {size_floor:.4} nodes"));
        }
        for (b, gb) in centers.iter().enumerate().skip(a + 1) {
            let d = euclid(ga, gb);
            if d < c {
                return Some(format!("centers {a} and {b} are {d:.4} apart (< c)"));
            }
        }
        for e in 0..k {
            let mut basis = vec![0.0; k];
            basis[e] = 1.0;
            let d = euclid(ga, &basis);
            if d < c {
                return Some(format!("center {a} is {d:.4} from e_{e} (< c)"));
            }
        }
    }
    for (p, &l) in points.iter().zip(labels) {
        let d = euclid(p, &centers[l]);
        if d > radius {
            return Some(format!("a node sits {d:.4} from its center (> 1/log n = {radius:.4})"));
        }
    }
    None
}
