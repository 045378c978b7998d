//! Sign-symmetric binary packings with pairwise l1 distance at least `n0/8`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling attempts allowed per unit of `J_cap`.
pub const ATTEMPTS_PER_WORD: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeFamily {
    pub n0: usize,
    /// Number of nonzero words; `omegas` holds `J + 1` vectors.
    pub j: usize,
    /// `omegas[0] = 0`, then `omegas[2l-1] = +w_l`, `omegas[2l] = -w_l`.
    pub omegas: Vec<Vec<i8>>,
}

fn l1(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x - y).unsigned_abs() as usize).sum()
}

impl CodeFamily {
    /// The packing distance `n0 / 8`.
    pub fn min_distance(&self) -> f64 {
        self.n0 as f64 / 8.0
    }

    /// Smallest pairwise l1 distance, by exhaustive comparison.
    pub fn min_pairwise_distance(&self) -> usize {
        let mut best = usize::MAX;
        for a in 0..self.omegas.len() {
            for b in a + 1..self.omegas.len() {
                best = best.min(l1(&self.omegas[a], &self.omegas[b]));
            }
        }
        best
    }

    pub fn column_sums(&self) -> Vec<i64> {
        (0..self.n0)
            .map(|i| self.omegas.iter().map(|w| w[i] as i64).sum())
            .collect()
    }

    /// Exhaustive check of the distance and zero-sum properties.
    pub fn verify(&self) -> Result<()> {
        if self.omegas.len() != self.j + 1 || self.omegas.iter().any(|w| w.len() != self.n0) {
            return Err(Error::Packing("inconsistent code family shape".into()));
        }
        if self.omegas[0].iter().any(|&x| x != 0) {
            return Err(Error::Packing("first word must be zero".into()));
        }
        let d = self.min_pairwise_distance();
        if (d as f64) < self.min_distance() {
            return Err(Error::Packing(format!(
                "pairwise distance {d} below n0/8 = {}",
                self.min_distance()
            )));
        }
        if self.column_sums().iter().any(|&s| s != 0) {
            return Err(Error::Packing("column sums are not all zero".into()));
        }
        Ok(())
    }
}

/// Greedy randomized packing: draw uniform words in `{0,1}^n0`, keep those at
/// distance at least `n0/8` from zero and from every kept word, until
/// `floor(j_cap/2)` words are kept or `200 * j_cap` draws are spent. The kept
/// words are then symmetrized with both signs behind the zero word.
pub fn build_code_family(n0: usize, j_cap: usize, seed: u64) -> Result<CodeFamily> {
    if n0 < 16 {
        return Err(Error::InvalidParameter(format!("n0 must be at least 16, got {n0}")));
    }
    if j_cap < 2 {
        return Err(Error::InvalidParameter(format!("J_cap must be at least 2, got {j_cap}")));
    }
    let need = n0.div_ceil(8);
    let target = j_cap / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: Vec<Vec<i8>> = Vec::with_capacity(target);
    let zero = vec![0i8; n0];
    for _ in 0..ATTEMPTS_PER_WORD * j_cap {
        if words.len() == target {
            break;
        }
        let w: Vec<i8> = (0..n0).map(|_| rng.random_range(0..2) as i8).collect();
        if l1(&w, &zero) >= need && words.iter().all(|u| l1(u, &w) >= need) {
            words.push(w);
        }
    }
    if words.is_empty() {
        return Err(Error::Packing(format!(
            "no nonzero word found for n0 = {n0} within {} draws",
            ATTEMPTS_PER_WORD * j_cap
        )));
    }
    let mut omegas = Vec::with_capacity(2 * words.len() + 1);
    omegas.push(zero);
    for w in &words {
        omegas.push(w.clone());
        omegas.push(w.iter().map(|x| -x).collect());
    }
    let family = CodeFamily {
        n0,
        j: omegas.len() - 1,
        omegas,
    };
    family.verify()?;
    Ok(family)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smallest_case() {
        let f = build_code_family(16, 2, 1).unwrap();
        assert_eq!(f.j, 2);
        assert_eq!(f.omegas.len(), 3);
        assert!(f.omegas[0].iter().all(|&x| x == 0));
        let weight: usize = f.omegas[1].iter().map(|x| x.unsigned_abs() as usize).sum();
        assert!(weight >= 2);
        assert_eq!(f.omegas[2], f.omegas[1].iter().map(|x| -x).collect::<Vec<_>>());
        assert!(f.min_pairwise_distance() >= 2);
    }

    #[test]
    fn brute_force_distances() {
        let f = build_code_family(64, 32, 7).unwrap();
        assert_eq!(f.j, 32);
        for a in 0..f.omegas.len() {
            for b in 0..f.omegas.len() {
                if a != b {
                    let d: i32 = f.omegas[a]
                        .iter()
                        .zip(&f.omegas[b])
                        .map(|(x, y)| (*x as i32 - *y as i32).abs())
                        .sum();
                    assert!(d >= 8);
                }
            }
        }
    }

    #[test]
    fn odd_cap_rounds_down() {
        assert_eq!(build_code_family(32, 9, 0).unwrap().j, 8);
    }

    #[test]
    fn bad_inputs() {
        assert!(build_code_family(15, 4, 0).is_err());
        assert!(build_code_family(16, 1, 0).is_err());
    }

    #[test]
    fn verify_rejects_broken_family() {
        let mut f = build_code_family(16, 4, 3).unwrap();
        f.omegas[2][0] = 1 - f.omegas[2][0].abs();
        assert!(f.verify().is_err());
    }

    #[test]
    fn deterministic() {
        assert_eq!(build_code_family(40, 10, 9).unwrap(), build_code_family(40, 10, 9).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn columns_sum_to_zero(n0 in 16usize..80, j_cap in 2usize..20, seed in any::<u64>()) {
            let f = build_code_family(n0, j_cap, seed).unwrap();
            prop_assert!(f.column_sums().iter().all(|&s| s == 0));
            prop_assert!(f.min_pairwise_distance() as f64 >= n0 as f64 / 8.0);
        }
    }
}
