//! Kullback-Leibler divergences between edge distributions, and the block
//! decomposition used to bound them.

use serde::{Deserialize, Serialize};

use super::family::{quad_check, HypothesisFamily};
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlMode {
    /// Full Bernoulli divergence.
    Exact,
    /// Only the `p log(p/q)` part.
    PaperTerm,
}

#[inline]
fn xlogy_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

fn pair_terms(p: f64, q: f64, i: usize, j: usize) -> Result<(f64, f64)> {
    if p == q {
        return Ok((0.0, 0.0));
    }
    if q <= 0.0 || q >= 1.0 {
        return Err(Error::InfiniteKl { i, j, p, q });
    }
    let first = xlogy_ratio(p, q);
    Ok((first + xlogy_ratio(1.0 - p, 1.0 - q), first))
}

fn check_same_n(a: &ModelParams, b: &ModelParams) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch(format!("n = {} versus n = {}", a.n(), b.n())));
    }
    Ok(())
}

/// `(exact, paper_term)` divergence of the edge law of `a` from that of `b`,
/// summed over `i < j`.
pub fn kl_both(a: &ModelParams, b: &ModelParams) -> Result<(f64, f64)> {
    check_same_n(a, b)?;
    let n = a.n();
    let ua: Vec<Vec<f64>> = (0..n).map(|i| a.p().apply(a.pi().row(i))).collect();
    let ub: Vec<Vec<f64>> = (0..n).map(|i| b.p().apply(b.pi().row(i))).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    let (mut exact, mut paper) = (0.0, 0.0);
    for i in 0..n {
        let (tai, tbi) = (a.theta().get(i), b.theta().get(i));
        for j in i + 1..n {
            let p = tai * a.theta().get(j) * dot(&ua[i], a.pi().row(j));
            let q = tbi * b.theta().get(j) * dot(&ub[i], b.pi().row(j));
            let (e, f) = pair_terms(p, q, i, j)?;
            exact += e;
            paper += f;
        }
    }
    Ok((exact, paper))
}

/// Divergence of the edge law of `a` from that of `b`.
pub fn kl_between(a: &ModelParams, b: &ModelParams, mode: KlMode) -> Result<f64> {
    let (exact, paper) = kl_both(a, b)?;
    Ok(match mode {
        KlMode::Exact => exact,
        KlMode::PaperTerm => paper,
    })
}

/// `p log(p/q)` divergence of hypothesis `ell` from hypothesis 0, split into the
/// perturbed-perturbed block (`i_term`) and the perturbed-pure block (`ii_term`).
/// `ii1_term` and `ii2_term` are the first- and second-order pieces of the
/// second block, `sum Omega0 * D` and `sum Omega0 * D^2` with `D = Omega_l/Omega_0 - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlDecomposition {
    pub i_term: f64,
    pub ii_term: f64,
    pub ii1_term: f64,
    pub ii2_term: f64,
}

pub fn kl_decomposition(family: &HypothesisFamily, ell: usize) -> Result<KlDecomposition> {
    if ell > family.j() {
        return Err(Error::IndexOutOfRange { index: ell, n: family.j() + 1 });
    }
    let a = family.params(ell)?;
    let b = family.params(0)?;
    let n = family.n();
    let mut out = KlDecomposition {
        i_term: 0.0,
        ii_term: 0.0,
        ii1_term: 0.0,
        ii2_term: 0.0,
    };
    let perturbed: Vec<usize> = family.order[..family.n0].to_vec();
    for (x, &i) in perturbed.iter().enumerate() {
        for &j in &perturbed[x + 1..] {
            let (p, q) = (a.edge_probability(i, j)?, b.edge_probability(i, j)?);
            out.i_term += pair_terms(p, q, i, j)?.1;
        }
        for &j in &family.order[family.n0..n] {
            let (p, q) = (a.edge_probability(i, j)?, b.edge_probability(i, j)?);
            out.ii_term += pair_terms(p, q, i, j)?.1;
            let d = p / q - 1.0;
            out.ii1_term += q * d;
            out.ii2_term += q * d * d;
        }
    }
    Ok(out)
}

/// `(J+1)^{-1} sum_l II1(l)`, which vanishes because the code columns sum to zero.
pub fn averaged_ii1(family: &HypothesisFamily) -> Result<f64> {
    let mut total = 0.0;
    for ell in 0..=family.j() {
        total += kl_decomposition(family, ell)?.ii1_term;
    }
    Ok(total / (family.j() + 1) as f64)
}

/// Closed-form bound on `i_term`: `C delta_n^2 (sum_{perturbed} sqrt(theta_i))^2`
/// with `C = 2|eta' Pcheck eta|`, which is `a` when `K = 2`.
pub fn i_term_bound(family: &HypothesisFamily) -> f64 {
    let s: f64 = family.order[..family.n0]
        .iter()
        .map(|&i| family.theta.get(i).sqrt())
        .sum();
    family.i_bound_constant() * family.delta_n.powi(2) * s * s
}

/// Relative change `Omega_l(i,j)/Omega_0(i,j) - 1` for two perturbed nodes.
/// For `K = 2`: `a/(2-a) delta_n^2 / sqrt(theta_i theta_j) w_i w_j`; in general
/// `-(eta' Pcheck eta)/(1 - a_check) delta_n^2 / sqrt(theta_i theta_j) w_i w_j`
/// with `a_check = 1' Pcheck 1 / K^2`.
pub fn delta_closed_form(family: &HypothesisFamily, ell: usize, i: usize, j: usize) -> Result<f64> {
    if !family.is_perturbed(i) || !family.is_perturbed(j) || i == j {
        return Err(Error::InvalidParameter(format!("({i}, {j}) is not a pair of distinct perturbed nodes")));
    }
    let k = family.k();
    let scale = family.delta_n.powi(2) / (family.theta.get(i) * family.theta.get(j)).sqrt()
        * family.omega(ell, i) as f64
        * family.omega(ell, j) as f64;
    if k == 2 {
        let a = 1.0 - family.p.get(0, 1);
        return Ok(a / (2.0 - a) * scale);
    }
    let ones = vec![1.0; k];
    let a_check = quad_check(&family.p, &ones, &ones) / (k * k) as f64;
    Ok(-quad_check(&family.p, &family.eta, &family.eta) / (1.0 - a_check) * scale)
}

/// Relative change for a perturbed node `i` and a pure node `j` of community `k`.
/// For `K = 2`: `g_j a/(2-a) delta_n / sqrt(theta_i) w_i` with `g_j = +1` for the
/// first community and `-1` for the second; in general
/// `-(eta' Pcheck e_k)/(1 - b_k) delta_n / sqrt(theta_i) w_i`, `b_k = e_k' Pcheck 1 / K`.
pub fn delta_tilde_closed_form(family: &HypothesisFamily, ell: usize, i: usize, j: usize) -> Result<f64> {
    let community = match (family.is_perturbed(i), family.pure_community(j)) {
        (true, Some(c)) => c,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "({i}, {j}) is not a perturbed-pure pair"
            )))
        }
    };
    let k = family.k();
    let scale = family.delta_n / family.theta.get(i).sqrt() * family.omega(ell, i) as f64;
    if k == 2 {
        let a = 1.0 - family.p.get(0, 1);
        let gamma = if community == 0 { 1.0 } else { -1.0 };
        return Ok(gamma * a / (2.0 - a) * scale);
    }
    let mut e = vec![0.0; k];
    e[community] = 1.0;
    let b = quad_check(&family.p, &e, &vec![1.0; k]) / k as f64;
    Ok(-quad_check(&family.p, &family.eta, &e) / (1.0 - b) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lowerbound::family::build_hypotheses;
    use crate::model::{DegreeVector, MembershipMatrix, MixingMatrix};

    fn toy(theta: Vec<f64>, rows: Vec<Vec<f64>>, b: f64) -> ModelParams {
        ModelParams::new(
            DegreeVector::new(theta).unwrap(),
            MembershipMatrix::new(rows).unwrap(),
            MixingMatrix::two_block(1.0 - b).unwrap(),
        )
        .unwrap()
    }

    fn naive(a: &ModelParams, b: &ModelParams) -> (f64, f64) {
        let (mut e, mut f) = (0.0, 0.0);
        for i in 0..a.n() {
            for j in 0..a.n() {
                if i < j {
                    let p = a.edge_probability(i, j).unwrap();
                    let q = b.edge_probability(i, j).unwrap();
                    e += p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
                    f += p * (p / q).ln();
                }
            }
        }
        (e, f)
    }

    fn family() -> HypothesisFamily {
        build_hypotheses(
            &DegreeVector::constant(400, 0.5).unwrap(),
            &MixingMatrix::two_block(0.5).unwrap(),
            0.2,
            0.1,
            16,
            5,
        )
        .unwrap()
    }

    #[test]
    fn identical_params_give_zero() {
        let a = toy(vec![0.5; 4], vec![vec![0.5, 0.5]; 4], 0.3);
        assert_eq!(kl_both(&a, &a).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn matches_double_loop_on_toys() {
        let a = toy(
            vec![0.9, 0.4, 0.7, 0.5, 0.6, 0.8],
            vec![vec![1.0, 0.0], vec![0.3, 0.7], vec![0.5, 0.5], vec![0.0, 1.0], vec![0.8, 0.2], vec![0.45, 0.55]],
            0.4,
        );
        let b = toy(
            vec![0.9, 0.4, 0.7, 0.5, 0.6, 0.8],
            vec![vec![1.0, 0.0], vec![0.35, 0.65], vec![0.5, 0.5], vec![0.0, 1.0], vec![0.7, 0.3], vec![0.5, 0.5]],
            0.4,
        );
        let (e, f) = kl_both(&a, &b).unwrap();
        let (ne, nf) = naive(&a, &b);
        assert!((e - ne).abs() < 1e-12);
        assert!((f - nf).abs() < 1e-12);
        assert!(e > 0.0);
        assert_eq!(kl_between(&a, &b, KlMode::Exact).unwrap(), e);
        assert_eq!(kl_between(&a, &b, KlMode::PaperTerm).unwrap(), f);
    }

    #[test]
    fn paper_term_can_be_negative() {
        let a = toy(vec![0.5; 2], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.2);
        let b = toy(vec![0.5; 2], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.3);
        let (e, f) = kl_both(&a, &b).unwrap();
        assert!(e > 0.0 && f < 0.0);
    }

    #[test]
    fn zero_reference_probability_is_infinite() {
        let a = toy(vec![0.5; 2], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.2);
        let b = toy(vec![0.5; 2], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.0);
        assert!(matches!(kl_both(&a, &b), Err(Error::InfiniteKl { .. })));
        // the reverse direction is finite: p = 0 contributes nothing
        assert!(kl_both(&b, &a).unwrap().0.is_finite());
    }

    #[test]
    fn pure_pairs_contribute_nothing() {
        let f = family();
        let a = f.params(3).unwrap();
        let b = f.params(0).unwrap();
        for i in 240..400 {
            for j in i + 1..400 {
                assert_eq!(a.edge_probability(i, j).unwrap(), b.edge_probability(i, j).unwrap());
            }
        }
        let d = kl_decomposition(&f, 3).unwrap();
        let (_, paper) = kl_both(&a, &b).unwrap();
        assert!((d.i_term + d.ii_term - paper).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_match_ratios() {
        let f = family();
        let (a, b) = (f.params(1).unwrap(), f.params(0).unwrap());
        for (i, j) in [(0, 1), (5, 200), (17, 239)] {
            let direct = a.edge_probability(i, j).unwrap() / b.edge_probability(i, j).unwrap() - 1.0;
            assert!((delta_closed_form(&f, 1, i, j).unwrap() - direct).abs() < 1e-12);
        }
        for (i, j) in [(0, 240), (3, 399), (100, 320)] {
            let direct = a.edge_probability(i, j).unwrap() / b.edge_probability(i, j).unwrap() - 1.0;
            assert!((delta_tilde_closed_form(&f, 1, i, j).unwrap() - direct).abs() < 1e-12);
        }
        assert!(delta_closed_form(&f, 1, 0, 300).is_err());
        assert!(delta_tilde_closed_form(&f, 1, 300, 0).is_err());
    }

    #[test]
    fn averaged_linear_piece_vanishes() {
        let f = family();
        assert!(averaged_ii1(&f).unwrap().abs() < 1e-10);
        let d = kl_decomposition(&f, 2).unwrap();
        assert!(d.i_term <= 1.1 * i_term_bound(&f));
        assert!(kl_decomposition(&f, f.j() + 1).is_err());
    }
}
