//! Numerical check of the separation and divergence conditions of the
//! Fano-type lemma for a hypothesis family.

use rayon::prelude::*;
use serde::Serialize;

use super::family::HypothesisFamily;
use super::kl::kl_both;
use crate::error::{Error, Result};
use crate::loss::{loss_unweighted, loss_weighted};

/// Default upper limit on `beta`.
pub const BETA_MAX: f64 = 0.125;
/// Relative slack in the separation comparison, for ties at the packing distance.
const SEPARATION_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub n0: usize,
    pub c0: f64,
    pub delta_n: f64,
    /// `(n theta_bar^2)^{-1/2}`.
    pub s_n: f64,
    /// Smallest aligned weighted loss over distinct pairs.
    pub min_pairwise_loss: f64,
    pub separation_constant: f64,
    /// Same with the unweighted loss.
    pub min_pairwise_loss_unweighted: f64,
    pub separation_constant_unweighted: f64,
    /// Separation constant `C0` tested in condition (i).
    #[serde(rename = "C0")]
    pub separation_target: f64,
    pub avg_kl_exact: f64,
    pub avg_kl_paper: f64,
    pub log_j: f64,
    pub beta_effective: f64,
    pub beta_max: f64,
    pub condition_i: bool,
    pub condition_ii: bool,
    pub lemma_bound: f64,
}

/// `C0 = c0 n0 ||eta||_1 / (16 n)`: half the guaranteed separation divided by `s_n`.
pub fn theoretical_c0(family: &HypothesisFamily) -> f64 {
    let eta_l1: f64 = family.eta.iter().map(|x| x.abs()).sum();
    family.c0 * family.n0 as f64 * eta_l1 / (16.0 * family.n() as f64)
}

/// `sqrt(J)/(1 + sqrt(J)) (1 - 2 beta - sqrt(2 beta / log J))`.
pub fn lemma_bound(j: usize, beta: f64) -> f64 {
    let sj = (j as f64).sqrt();
    sj / (1.0 + sj) * (1.0 - 2.0 * beta - (2.0 * beta / (j as f64).ln()).sqrt())
}

/// Condition (i): every pair of hypotheses is at aligned weighted loss at least
/// `2 C0 s_n`. Condition (ii): the mean exact divergence to hypothesis 0 over
/// `l = 0..J` is below `beta_max log J`.
pub fn certify(family: &HypothesisFamily, c0_sep: f64, beta_max: f64) -> Result<CertificationReport> {
    let j = family.j();
    if j < 2 {
        return Err(Error::InvalidParameter(format!("need J >= 2, got {j}")));
    }
    let n = family.n();
    let theta_bar = family.theta.mean();
    let s_n = 1.0 / (n as f64 * theta_bar * theta_bar).sqrt();

    let pairs: Vec<(usize, usize)> = (0..=j).flat_map(|a| (a + 1..=j).map(move |b| (a, b))).collect();
    let losses = pairs
        .par_iter()
        .map(|&(a, b)| {
            Ok((
                loss_weighted(&family.pis[a], &family.pis[b], &family.theta, true)?,
                loss_unweighted(&family.pis[a], &family.pis[b], true)?,
            ))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let min_w = losses.iter().map(|l| l.0).fold(f64::INFINITY, f64::min);
    let min_u = losses.iter().map(|l| l.1).fold(f64::INFINITY, f64::min);

    let null = family.params(0)?;
    let kls = (0..=j)
        .into_par_iter()
        .map(|ell| kl_both(&family.params(ell)?, &null))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let avg_kl_exact = kls.iter().map(|k| k.0).sum::<f64>() / (j + 1) as f64;
    let avg_kl_paper = kls.iter().map(|k| k.1).sum::<f64>() / (j + 1) as f64;
    let log_j = (j as f64).ln();
    let beta_effective = avg_kl_exact / log_j;

    Ok(CertificationReport {
        n,
        k: family.k(),
        j,
        n0: family.n0,
        c0: family.c0,
        delta_n: family.delta_n,
        s_n,
        min_pairwise_loss: min_w,
        separation_constant: min_w / s_n,
        min_pairwise_loss_unweighted: min_u,
        separation_constant_unweighted: min_u / s_n,
        separation_target: c0_sep,
        avg_kl_exact,
        avg_kl_paper,
        log_j,
        beta_effective,
        beta_max,
        condition_i: min_w > 0.0 && min_w >= 2.0 * c0_sep * s_n * (1.0 - SEPARATION_RTOL),
        condition_ii: beta_effective < beta_max,
        lemma_bound: lemma_bound(j, beta_effective),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowerbound::family::build_hypotheses;
    use crate::model::{DegreeVector, MixingMatrix};

    fn family(theta: f64, j_cap: usize) -> HypothesisFamily {
        build_hypotheses(
            &DegreeVector::constant(400, theta).unwrap(),
            &MixingMatrix::two_block(0.5).unwrap(),
            0.2,
            0.1,
            j_cap,
            11,
        )
        .unwrap()
    }

    #[test]
    fn identical_members_fail_separation() {
        let mut f = family(0.5, 8);
        let base = f.pis[0].clone();
        f.pis.iter_mut().for_each(|p| *p = base.clone());
        let r = certify(&f, 0.01, BETA_MAX).unwrap();
        assert_eq!(r.min_pairwise_loss, 0.0);
        assert!(!r.condition_i);
        assert_eq!(r.avg_kl_exact, 0.0);
    }

    #[test]
    fn pairwise_loss_closed_form() {
        let f = family(0.5, 16);
        let theta_bar: f64 = 0.5;
        for (a, b) in [(0, 1), (1, 2), (3, 9)] {
            let dist: f64 = f.code.omegas[a]
                .iter()
                .zip(&f.code.omegas[b])
                .map(|(x, y)| (x - y).abs() as f64)
                .sum();
            let closed = f.delta_n / (400.0 * theta_bar.sqrt()) * dist;
            let direct = loss_weighted(&f.pis[a], &f.pis[b], &f.theta, true).unwrap();
            assert!((closed - direct).abs() < 1e-14, "{closed} vs {direct}");
        }
    }

    #[test]
    fn theoretical_c0_is_certified() {
        let f = family(0.5, 16);
        let r = certify(&f, theoretical_c0(&f), BETA_MAX).unwrap();
        assert!(r.condition_i && r.condition_ii);
        assert!(r.separation_constant >= 2.0 * theoretical_c0(&f) * (1.0 - 1e-12));
        assert!(r.lemma_bound > 0.0 && r.lemma_bound < 1.0);
        assert!(r.avg_kl_paper <= 0.5 * f.c0 * f.n0 as f64 * 1.1);
        assert_eq!(r.min_pairwise_loss, r.min_pairwise_loss_unweighted);
    }

    #[test]
    fn separation_constant_is_scale_free() {
        let a = certify(&family(0.5, 8), 0.0, BETA_MAX).unwrap();
        let b = certify(&family(0.8, 8), 0.0, BETA_MAX).unwrap();
        assert!((a.separation_constant - b.separation_constant).abs() < 1e-8);
    }

    #[test]
    fn lemma_bound_values() {
        assert!((lemma_bound(4, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!(lemma_bound(64, 0.125) < lemma_bound(64, 0.01));
    }
}
