//! Mixed-SCORE: spectral estimation of mixed memberships.

pub mod eigen;
pub mod score;
pub mod vertex;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use eigen::{dense_eigenpairs, lanczos_eigenpairs, leading_eigenpairs, EigenMethod, EigenOptions, Eigenpairs};
pub use score::{score_embedding, SpectralEmbedding};
pub use vertex::{estimate_memberships, hunt_vertices, SimplexVertices};

use crate::error::{Error, Result};
use crate::model::{MembershipMatrix, ModelParams};
use crate::sampler::SparseGraph;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MixedScore {
    pub eigen: EigenOptions,
    pub drop_quantile: f64,
    pub refine_steps: usize,
}

impl Default for MixedScore {
    fn default() -> Self {
        Self {
            eigen: EigenOptions::default(),
            drop_quantile: 0.01,
            refine_steps: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixedScoreFit {
    pub pi_hat: MembershipMatrix,
    pub dropped: Vec<usize>,
    pub vertices: SimplexVertices,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub method: EigenMethod,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub dropped_count: usize,
    pub dropped: Vec<usize>,
    pub max_negative_barycentric: f64,
    pub eigenvalues: Vec<f64>,
    pub eigen_residuals: Vec<f64>,
    pub eigen_method: EigenMethod,
    pub vertices: Vec<Vec<f64>>,
}

impl MixedScoreFit {
    pub fn diagnostics(&self) -> FitDiagnostics {
        FitDiagnostics {
            n: self.pi_hat.n(),
            k: self.pi_hat.k(),
            dropped_count: self.dropped.len(),
            dropped: self.dropped.clone(),
            max_negative_barycentric: self.vertices.max_negative_weight,
            eigenvalues: self.eigenvalues.clone(),
            eigen_residuals: self.residuals.clone(),
            eigen_method: self.method,
            vertices: self.vertices.points.clone(),
        }
    }
}

/// Flip each non-leading eigenvector so its largest-magnitude entry is positive
/// (lowest index on ties). The leading vector is handled by the embedding.
pub fn canonicalize_signs(pairs: &mut Eigenpairs) {
    for v in pairs.vectors.iter_mut().skip(1) {
        let mut best = 0;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() {
                best = i;
            }
        }
        if v[best] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

impl MixedScore {
    pub fn estimate(&self, graph: &SparseGraph, k: usize, seed: u64) -> Result<MixedScoreFit> {
        let opts = EigenOptions { seed, ..self.eigen.clone() };
        let pairs = leading_eigenpairs(graph, k, &opts)?;
        self.estimate_from_eigenpairs(pairs)
    }

    pub fn estimate_from_eigenpairs(&self, mut pairs: Eigenpairs) -> Result<MixedScoreFit> {
        let k = pairs.k();
        if k < 2 {
            return Err(Error::InvalidParameter(format!("Mixed-SCORE needs K >= 2, got {k}")));
        }
        canonicalize_signs(&mut pairs);
        let embedding = score_embedding(&pairs, self.drop_quantile)?;
        let vertices = hunt_vertices(&embedding, k, self.refine_steps)?;
        let pi_hat = estimate_memberships(&embedding, &vertices, &pairs.values)?;
        Ok(MixedScoreFit {
            pi_hat,
            dropped: embedding.dropped,
            vertices,
            eigenvalues: pairs.values,
            residuals: pairs.residuals,
            method: pairs.method,
        })
    }
}

/// Exact eigenpairs of the rank-`K` matrix `Omega = X P X'` with `X = Theta Pi`,
/// via the `K x K` problem `G^{1/2} P G^{1/2}` where `G = X'X`. The diagonal of
/// `Omega` is kept, so this is the population oracle for the spectral steps.
pub fn population_eigenpairs(params: &ModelParams) -> Result<Eigenpairs> {
    let (n, k) = (params.n(), params.k());
    let x = DMatrix::from_fn(n, k, |i, c| params.theta().get(i) * params.pi().row(i)[c]);
    let g = x.transpose() * &x;
    let ge = SymmetricEigen::new(g);
    if ge.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::InvalidMembership("Theta Pi does not have full column rank".into()));
    }
    let half = &ge.eigenvectors
        * DMatrix::from_diagonal(&ge.eigenvalues.map(f64::sqrt))
        * ge.eigenvectors.transpose();
    let inv_half = &ge.eigenvectors
        * DMatrix::from_diagonal(&ge.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * ge.eigenvectors.transpose();
    let core = &half * params.p().to_dmatrix() * &half;
    let ce = SymmetricEigen::new((&core + core.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (ce.eigenvalues[a], ce.eigenvalues[b]);
        lb.abs().total_cmp(&la.abs()).then(lb.total_cmp(&la))
    });
    let basis = &x * inv_half;
    let vectors = order
        .iter()
        .map(|&c| (&basis * ce.eigenvectors.column(c)).iter().copied().collect())
        .collect();
    Ok(Eigenpairs {
        values: order.iter().map(|&c| ce.eigenvalues[c]).collect(),
        vectors,
        residuals: vec![0.0; k],
        norm_estimate: ce.eigenvalues.amax(),
        method: EigenMethod::Dense,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{loss_unweighted, loss_weighted};
    use crate::model::{DegreeVector, MixingMatrix};
    use crate::sampler::{generate_theta, sample_graph, SampleSeed, ThetaProfile};

    fn params(n: usize, theta: f64, mixed_frac: f64, a: f64) -> ModelParams {
        let n_mixed = (n as f64 * mixed_frac).round() as usize;
        let pi = MembershipMatrix::pure_then_mixed(n - n_mixed, 2, &[vec![0.5, 0.5]], n_mixed).unwrap();
        ModelParams::new(
            DegreeVector::constant(n, theta).unwrap(),
            pi,
            MixingMatrix::two_block(a).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn population_oracle_matches_dense_omega() {
        let p = params(60, 0.7, 0.3, 0.6);
        let pop = population_eigenpairs(&p).unwrap();
        let omega = p.assemble_omega().unwrap();
        for (l, v) in pop.values.iter().zip(&pop.vectors) {
            let nv = nalgebra::DVector::from_column_slice(v);
            let r = &omega * &nv - &nv * *l;
            assert!(r.norm() < 1e-10, "residual {}", r.norm());
            assert!((nv.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn population_input_recovers_truth() {
        let p = params(300, 0.5, 0.4, 0.5);
        let fit = MixedScore::default()
            .estimate_from_eigenpairs(population_eigenpairs(&p).unwrap())
            .unwrap();
        assert!(loss_unweighted(&fit.pi_hat, p.pi(), true).unwrap() < 1e-9);
    }

    #[test]
    fn sign_flips_leave_estimate_unchanged() {
        let p = params(400, 0.5, 0.3, 0.5);
        let g = sample_graph(&p, SampleSeed::new(5, 0)).unwrap();
        let ms = MixedScore::default();
        let pairs = leading_eigenpairs(&g, 2, &ms.eigen).unwrap();
        let base = ms.estimate_from_eigenpairs(pairs.clone()).unwrap();
        for mask in 1..4u32 {
            let mut flipped = pairs.clone();
            for (c, v) in flipped.vectors.iter_mut().enumerate() {
                if mask >> c & 1 == 1 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            let fit = ms.estimate_from_eigenpairs(flipped).unwrap();
            assert_eq!(fit.pi_hat, base.pi_hat, "mask {mask}");
        }
    }

    #[test]
    fn label_permutation_equivariance() {
        let n = 300;
        let pi = MembershipMatrix::pure_then_mixed(180, 3, &[vec![0.5, 0.3, 0.2]], 120).unwrap();
        let p = MixingMatrix::new(vec![
            vec![1.0, 0.3, 0.2],
            vec![0.3, 1.0, 0.25],
            vec![0.2, 0.25, 1.0],
        ])
        .unwrap();
        let theta = DegreeVector::constant(n, 0.6).unwrap();
        let base = ModelParams::new(theta.clone(), pi.clone(), p.clone()).unwrap();
        let perm = [2usize, 0, 1];
        let p_perm = MixingMatrix::new(
            (0..3).map(|r| (0..3).map(|c| p.get(perm[r], perm[c])).collect()).collect(),
        )
        .unwrap();
        let permuted = ModelParams::new(theta, pi.permute_columns(&perm), p_perm).unwrap();
        let ga = sample_graph(&base, SampleSeed::new(11, 0)).unwrap();
        let gb = sample_graph(&permuted, SampleSeed::new(11, 0)).unwrap();
        assert_eq!(ga, gb);
        let fit = MixedScore::default().estimate(&gb, 3, 1).unwrap();
        let aligned = loss_unweighted(&fit.pi_hat, permuted.pi(), true).unwrap();
        let aligned_base = loss_unweighted(&fit.pi_hat, base.pi(), true).unwrap();
        assert!((aligned - aligned_base).abs() < 1e-12);
        let report = crate::loss::loss_report(&fit.pi_hat, base.pi(), base.theta(), false).unwrap();
        let back = fit.pi_hat.permute_columns(&report.permutation);
        let unaligned = loss_unweighted(&back, base.pi(), false).unwrap();
        assert!((unaligned - aligned_base).abs() < 1e-12);
    }

    #[test]
    fn output_rows_are_pmfs() {
        let p = params(500, 0.3, 0.5, 0.7);
        let g = sample_graph(&p, SampleSeed::new(9, 0)).unwrap();
        let fit = MixedScore::default().estimate(&g, 2, 0).unwrap();
        for row in fit.pi_hat.rows() {
            assert!(row.iter().all(|&x| x >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_pareto_rows_concentrate() {
        let n = 2000;
        let theta = generate_theta(n, &ThetaProfile::Pareto { alpha: 5.0, floor: 1.0 }, Some(0.2), SampleSeed::new(3, 0))
            .unwrap();
        let pi = MembershipMatrix::pure_then_mixed(n, 2, &[], 0).unwrap();
        let p = ModelParams::new(theta, pi, MixingMatrix::two_block(0.6).unwrap()).unwrap();
        let pop = MixedScore::default();
        let mut pairs = population_eigenpairs(&p).unwrap();
        canonicalize_signs(&mut pairs);
        let pop_emb = score_embedding(&pairs, pop.drop_quantile).unwrap();
        let g = sample_graph(&p, SampleSeed::new(4, 0)).unwrap();
        let mut sample_pairs = leading_eigenpairs(&g, 2, &pop.eigen).unwrap();
        canonicalize_signs(&mut sample_pairs);
        let emb = score_embedding(&sample_pairs, pop.drop_quantile).unwrap();
        let centre = |k: usize| pop_emb.ratios[pop_emb.retained.iter().position(|&i| p.pi().row(i)[k] == 1.0).unwrap()][0];
        let (c0, c1) = (centre(0), centre(1));
        // the sample embedding is only defined up to the sign of xi_2
        let s = if (emb.ratios[0][0] - c0).abs() < (emb.ratios[0][0] + c0).abs() { 1.0 } else { -1.0 };
        let sep = (c0 - c1).abs();
        for k in 0..2 {
            let c = if k == 0 { c0 } else { c1 };
            let d: Vec<f64> = emb
                .retained
                .iter()
                .zip(&emb.ratios)
                .filter(|(&i, _)| p.pi().row(i)[k] == 1.0)
                .map(|(_, r)| (s * r[0] - c).powi(2))
                .collect();
            let radius = (d.iter().sum::<f64>() / d.len() as f64).sqrt();
            assert!(radius < sep / 4.0, "community {k}: radius {radius}, separation {sep}");
        }
    }

    #[test]
    fn recovered_vertices_near_population() {
        let p = params(2000, 0.5, 0.2, 0.9);
        let ms = MixedScore::default();
        let pop = ms.estimate_from_eigenpairs(population_eigenpairs(&p).unwrap()).unwrap();
        let g = sample_graph(&p, SampleSeed::new(21, 0)).unwrap();
        let fit = ms.estimate(&g, 2, 0).unwrap();
        let spread = (pop.vertices.points[1][0] - pop.vertices.points[0][0]).abs();
        for (a, b) in fit.vertices.points.iter().zip(&pop.vertices.points) {
            assert!((a[0] - b[0]).abs() < 0.1 * spread, "{a:?} vs {b:?}");
        }
        let h = loss_unweighted(&fit.pi_hat, p.pi(), true).unwrap();
        let l = loss_weighted(&fit.pi_hat, p.pi(), p.theta(), true).unwrap();
        assert!(h < 0.05, "H = {h}");
        assert_eq!(h, l);
    }

    #[test]
    fn k1_is_rejected() {
        let pairs = Eigenpairs {
            values: vec![1.0],
            vectors: vec![vec![1.0]],
            residuals: vec![0.0],
            norm_estimate: 1.0,
            method: EigenMethod::Dense,
        };
        assert!(MixedScore::default().estimate_from_eigenpairs(pairs).is_err());
    }
}
