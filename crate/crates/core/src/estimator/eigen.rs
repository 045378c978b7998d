//! Leading eigenpairs (largest `|lambda|`) of a graph's adjacency operator.
//!
//! Large graphs use a Lanczos-type Krylov iteration with full
//! reorthogonalization and Rayleigh-Ritz extraction; small graphs are
//! decomposed densely.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SparseGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    /// Dense up to `dense_max_n`, Krylov above.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Residual target `||Av - lambda v|| <= tol * ||A||`.
    pub tol: f64,
    /// Largest Krylov basis before giving up.
    pub max_basis: usize,
    pub dense_max_n: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            method: EigenMethod::Auto,
            tol: 1e-10,
            max_basis: 600,
            dense_max_n: 300,
            seed: 0,
        }
    }
}

/// `K` eigenpairs ordered by decreasing `|lambda|`.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    /// Unit-norm eigenvectors, one `Vec` of length `n` per eigenvalue.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Estimate of `||A||_2` (largest `|Ritz value|` seen).
    pub norm_estimate: f64,
    pub method: EigenMethod,
}

impl Eigenpairs {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn n(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub fn leading_eigenpairs(graph: &SparseGraph, k: usize, opts: &EigenOptions) -> Result<Eigenpairs> {
    let n = graph.n();
    if n == 0 || graph.n_edges() == 0 {
        return Err(Error::Estimation("graph has no edges".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("need 0 < K < n, got K = {k}, n = {n}")));
    }
    let dense = match opts.method {
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
        EigenMethod::Auto => n <= opts.dense_max_n,
    };
    if dense {
        dense_eigenpairs(graph, k)
    } else {
        lanczos_eigenpairs(graph, k, opts)
    }
}

fn order_by_magnitude(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .abs()
            .total_cmp(&values[a].abs())
            .then(values[b].total_cmp(&values[a]))
    });
    idx
}

fn residual(graph: &SparseGraph, lambda: f64, v: &[f64]) -> f64 {
    let mut av = vec![0.0; v.len()];
    graph.matvec(v, &mut av);
    axpy(-lambda, v, &mut av);
    norm(&av)
}

/// Full dense symmetric decomposition; also serves as the reference solver.
pub fn dense_eigenpairs(graph: &SparseGraph, k: usize) -> Result<Eigenpairs> {
    let n = graph.n();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, j) in graph.edges() {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
    }
    let eig = SymmetricEigen::new(a);
    let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = order_by_magnitude(&values);
    let norm_estimate = values[order[0]].abs();
    let picked = &order[..k];
    let vectors: Vec<Vec<f64>> = picked
        .iter()
        .map(|&c| eig.eigenvectors.column(c).iter().copied().collect())
        .collect();
    let values: Vec<f64> = picked.iter().map(|&c| values[c]).collect();
    let residuals = values
        .iter()
        .zip(&vectors)
        .map(|(l, v)| residual(graph, *l, v))
        .collect();
    Ok(Eigenpairs {
        values,
        vectors,
        residuals,
        norm_estimate,
        method: EigenMethod::Dense,
    })
}

/// Orthogonalize `w` against `basis` twice and return the remaining norm.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, w);
            axpy(-c, b, w);
        }
    }
    norm(w)
}

fn random_unit_orthogonal(basis: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let before = norm(&v);
        let after = reorthogonalize(basis, &mut v);
        if after > 1e-8 * before {
            v.iter_mut().for_each(|x| *x /= after);
            return Some(v);
        }
    }
    None
}

/// Krylov iteration with full reorthogonalization. The basis `V` and `AV`
/// are kept so Rayleigh-Ritz uses `V'AV` directly; on breakdown (an
/// invariant subspace was found) the basis is extended with a fresh random
/// direction, which recovers repeated eigenvalues.
pub fn lanczos_eigenpairs(graph: &SparseGraph, k: usize, opts: &EigenOptions) -> Result<Eigenpairs> {
    let n = graph.n();
    let max_basis = opts.max_basis.min(n).max(k);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let first = random_unit_orthogonal(&basis, n, &mut rng)
        .ok_or_else(|| Error::Estimation("could not draw a start vector".into()))?;
    basis.push(first);

    let check_every = 5;
    let mut projected = ProjectedMatrix::default();
    let mut last_residuals = vec![f64::INFINITY; k];
    let mut norm_estimate = 0.0f64;
    loop {
        let j = basis.len() - 1;
        let mut w = vec![0.0; n];
        graph.matvec(&basis[j], &mut w);
        images.push(w.clone());

        let m = basis.len();
        let exhausted = m >= max_basis;
        if m >= k && (m.is_multiple_of(check_every) || exhausted || m == n) {
            let ritz = rayleigh_ritz(&basis, &images, &mut projected, k);
            norm_estimate = norm_estimate.max(ritz.max_abs);
            let tol = opts.tol * norm_estimate.max(f64::MIN_POSITIVE);
            last_residuals.clone_from(&ritz.pairs.residuals);
            if ritz.pairs.residuals.iter().all(|r| *r <= tol) {
                let mut pairs = ritz.pairs;
                pairs.norm_estimate = norm_estimate;
                return Ok(pairs);
            }
            if exhausted || m == n {
                return Err(Error::NoConvergence {
                    iterations: m,
                    residuals: last_residuals,
                });
            }
        }

        let beta = reorthogonalize(&basis, &mut w);
        let next = if beta > 1e-10 * norm(&images[j]) {
            w.iter_mut().for_each(|x| *x /= beta);
            Some(w)
        } else {
            random_unit_orthogonal(&basis, n, &mut rng)
        };
        match next {
            Some(v) => basis.push(v),
            None => {
                return Err(Error::NoConvergence {
                    iterations: basis.len(),
                    residuals: last_residuals,
                })
            }
        }
    }
}

struct Ritz {
    pairs: Eigenpairs,
    max_abs: f64,
}

/// Symmetrized `V'AV`, extended as the basis grows.
#[derive(Default)]
struct ProjectedMatrix {
    rows: Vec<Vec<f64>>,
}

impl ProjectedMatrix {
    fn update(&mut self, basis: &[Vec<f64>], images: &[Vec<f64>]) -> DMatrix<f64> {
        for r in self.rows.len()..basis.len() {
            let row = (0..=r)
                .map(|c| 0.5 * (dot(&basis[r], &images[c]) + dot(&basis[c], &images[r])))
                .collect();
            self.rows.push(row);
        }
        let m = basis.len();
        DMatrix::from_fn(m, m, |r, c| if c <= r { self.rows[r][c] } else { self.rows[c][r] })
    }
}

fn rayleigh_ritz(
    basis: &[Vec<f64>],
    images: &[Vec<f64>],
    projected: &mut ProjectedMatrix,
    k: usize,
) -> Ritz {
    let n = basis[0].len();
    let eig = SymmetricEigen::new(projected.update(basis, images));
    let theta: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = order_by_magnitude(&theta);
    let max_abs = theta[order[0]].abs();
    let mut values = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for &c in &order[..k] {
        let y = eig.eigenvectors.column(c);
        let mut v = vec![0.0; n];
        let mut av = vec![0.0; n];
        for (r, yr) in y.iter().enumerate() {
            axpy(*yr, &basis[r], &mut v);
            axpy(*yr, &images[r], &mut av);
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        av.iter_mut().for_each(|x| *x /= nv);
        axpy(-theta[c], &v, &mut av);
        residuals.push(norm(&av));
        values.push(theta[c]);
        vectors.push(v);
    }
    Ritz {
        pairs: Eigenpairs {
            values,
            vectors,
            residuals,
            norm_estimate: max_abs,
            method: EigenMethod::Lanczos,
        },
        max_abs,
    }
}
